//! Exact nearest-neighbor ranking with distance threshold and optional
//! fine-label re-ranking.

use rayon::prelude::*;

use super::index::DescriptorIndex;
use super::metrics::{aggregate, evaluate_query, MetricsReport, QueryMetrics};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    /// Position of the item in the index.
    pub index: usize,
    pub id: String,
    pub distance: f64,
    /// Shares the query's coarse label.
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: usize,
    pub query_id: String,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn flags(&self) -> Vec<bool> {
        self.items.iter().map(|i| i.relevant).collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::Config(format!("distance threshold must be > 0, got {threshold}")));
    }
    Ok(())
}

/// Ranks every other index entry by L2 distance to entry `query` (ties keep
/// index order), drops entries farther than `threshold`, then, when fine
/// labels are given (one per index entry), moves entries whose fine label
/// matches the query's ahead of the rest without reordering either group.
pub fn retrieve(
    index: &DescriptorIndex,
    query: usize,
    threshold: f64,
    fine_labels: Option<&[usize]>,
) -> Result<RankedList> {
    if index.is_empty() {
        return Err(Error::EmptyInput("retrieval index"));
    }
    check_threshold(threshold)?;
    if query >= index.len() {
        return Err(Error::Config(format!("query {query} outside index of {}", index.len())));
    }
    if let Some(f) = fine_labels {
        if f.len() != index.len() {
            return Err(Error::shape("fine labels", index.len(), f.len()));
        }
    }
    let entries = index.entries();
    let q = &entries[query];
    let mut items: Vec<RankedItem> = entries
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .map(|(i, e)| RankedItem {
            index: i,
            id: e.id.clone(),
            distance: euclidean(&q.descriptor, &e.descriptor),
            relevant: e.coarse_label == q.coarse_label,
        })
        .filter(|item| item.distance <= threshold)
        .collect();
    items.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    if let Some(fine) = fine_labels {
        let target = fine[query];
        let (mut same, other): (Vec<_>, Vec<_>) = items.into_iter().partition(|it| fine[it.index] == target);
        same.extend(other);
        items = same;
    }
    Ok(RankedList {
        query,
        query_id: q.id.clone(),
        items,
    })
}

#[derive(Debug, Clone)]
pub struct RetrievalRun {
    pub lists: Vec<RankedList>,
    /// Metrics of evaluated queries, in query order.
    pub queries: Vec<QueryMetrics>,
    pub report: MetricsReport,
}

/// Uses every index entry as a query against the rest.
pub fn evaluate_retrieval(
    index: &DescriptorIndex,
    threshold: f64,
    fine_labels: Option<&[usize]>,
) -> Result<RetrievalRun> {
    let lists = (0..index.len())
        .into_par_iter()
        .map(|q| retrieve(index, q, threshold, fine_labels))
        .collect::<Result<Vec<_>>>()?;
    let mut queries = Vec::with_capacity(lists.len());
    let mut skipped = 0;
    for list in &lists {
        let label = index.entries()[list.query].coarse_label;
        match evaluate_query(label, &list.flags(), index.relevant_count(list.query)) {
            Some(m) => queries.push(m),
            None => skipped += 1,
        }
    }
    let report = aggregate(&queries, skipped)?;
    Ok(RetrievalRun { lists, queries, report })
}

/// The default search grid: 0.05 to 2.0 in steps of 0.05, then infinity.
/// Unit descriptors are never farther apart than 2.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=40).map(|k| k as f64 / 20.0).chain([f64::INFINITY]).collect()
}

/// Returns the grid value with the best micro F1@N (first one on ties).
pub fn sweep_threshold(
    index: &DescriptorIndex,
    fine_labels: Option<&[usize]>,
    grid: &[f64],
) -> Result<(f64, MetricsReport)> {
    let mut best: Option<(f64, MetricsReport)> = None;
    for &t in grid {
        let run = evaluate_retrieval(index, t, fine_labels)?;
        if best.as_ref().is_none_or(|(_, b)| run.report.micro.f1 > b.micro.f1) {
            best = Some((t, run.report));
        }
    }
    best.ok_or(Error::EmptyInput("threshold grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::IndexEntry;

    fn at(id: &str, label: usize, angle: f64) -> IndexEntry {
        IndexEntry {
            id: id.into(),
            coarse_label: label,
            fine_label: None,
            descriptor: vec![angle.cos(), angle.sin()],
        }
    }

    fn toy() -> DescriptorIndex {
        // Chord distance from q: 2 sin(angle / 2).
        let entries = vec![
            at("q", 0, 0.0),
            at("a", 0, 0.4),
            at("b", 1, 0.1),
            at("c", 0, 1.0),
            at("d", 1, 0.7),
            at("e", 0, 2.0),
        ];
        DescriptorIndex::new(entries, 2, 2, None).unwrap()
    }

    fn ids(list: &RankedList) -> Vec<&str> {
        list.items.iter().map(|i| i.id.as_str()).collect()
    }

    #[test]
    fn pure_distance_order() {
        let list = retrieve(&toy(), 0, f64::INFINITY, None).unwrap();
        assert_eq!(ids(&list), ["b", "a", "d", "c", "e"]);
        assert!(list.items.windows(2).all(|w| w[0].distance <= w[1].distance));
        assert_eq!(list.flags(), [false, true, false, true, true]);
    }

    #[test]
    fn threshold_and_rerank() {
        let idx = toy();
        let cut = 2.0 * (0.5f64).sin() + 1e-12;
        assert_eq!(ids(&retrieve(&idx, 0, cut, None).unwrap()), ["b", "a", "d", "c"]);

        // Query and c, e share fine label 7.
        let fine = [7, 1, 2, 7, 1, 7];
        let list = retrieve(&idx, 0, f64::INFINITY, Some(&fine)).unwrap();
        assert_eq!(ids(&list), ["c", "e", "b", "a", "d"]);

        let same = [3; 6];
        assert_eq!(
            retrieve(&idx, 0, f64::INFINITY, Some(&same)).unwrap(),
            retrieve(&idx, 0, f64::INFINITY, None).unwrap()
        );
    }

    #[test]
    fn equal_distances_keep_index_order() {
        let entries = (0..5).map(|i| at(&format!("x{i}"), i % 2, 0.3)).collect();
        let idx = DescriptorIndex::new(entries, 2, 2, None).unwrap();
        let list = retrieve(&idx, 0, f64::INFINITY, Some(&[0, 1, 0, 1, 0])).unwrap();
        assert_eq!(ids(&list), ["x2", "x4", "x1", "x3"]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let idx = toy();
        assert!(retrieve(&idx, 0, 0.0, None).is_err());
        assert!(retrieve(&idx, 0, -1.0, None).is_err());
        assert!(retrieve(&idx, 0, f64::NAN, None).is_err());
        assert!(retrieve(&idx, 9, 1.0, None).is_err());
        assert!(retrieve(&idx, 0, 1.0, Some(&[0, 1])).is_err());
        let empty = DescriptorIndex::new(vec![], 2, 1, None).unwrap();
        assert!(matches!(retrieve(&empty, 0, 1.0, None), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn singleton_classes_are_skipped() {
        let idx = DescriptorIndex::new(vec![at("a", 0, 0.0), at("b", 0, 0.5), at("c", 1, 1.2)], 2, 2, None).unwrap();
        let run = evaluate_retrieval(&idx, f64::INFINITY, None).unwrap();
        assert_eq!((run.report.evaluated, run.report.skipped), (2, 1));
        assert_eq!(run.report.micro.map, 1.0);
    }

    #[test]
    fn sweep_prefers_informative_threshold() {
        let grid = default_threshold_grid();
        assert_eq!(grid.len(), 41);
        assert!((grid[0] - 0.05).abs() < 1e-15 && (grid[39] - 2.0).abs() < 1e-12);
        let (t, report) = sweep_threshold(&toy(), None, &grid).unwrap();
        let inf = evaluate_retrieval(&toy(), f64::INFINITY, None).unwrap().report;
        assert!(t > 0.0);
        assert!(report.micro.f1 >= inf.micro.f1);
    }
}
