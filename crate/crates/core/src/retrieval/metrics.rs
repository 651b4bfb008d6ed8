//! Per-query retrieval metrics over binary relevance flags and their
//! micro/macro aggregation.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Mean of precision@k over the ranks k holding relevant items, divided by
/// the total relevant count so that unretrieved items count as misses.
/// `None` when the corpus holds no relevant item.
pub fn average_precision(flags: &[bool], total_relevant: usize) -> Option<f64> {
    if total_relevant == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in flags.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / total_relevant as f64)
}

/// Precision, recall and F1 at cutoff `n`. Precision divides by the number
/// of items actually returned within the cutoff (a thresholded list may be
/// shorter than `n`); an empty list scores zero.
pub fn precision_recall_f1_at_n(flags: &[bool], n: usize, total_relevant: usize) -> (f64, f64, f64) {
    let cut = n.min(flags.len());
    if cut == 0 {
        return (0.0, 0.0, 0.0);
    }
    let hits = flags[..cut].iter().filter(|&&f| f).count() as f64;
    let p = hits / cut as f64;
    let r = if total_relevant == 0 { 0.0 } else { hits / total_relevant as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Binary-gain NDCG with a `1 / log2(1 + rank)` discount, normalized by the
/// ideal DCG of `total_relevant` items. `None` when nothing is relevant.
pub fn ndcg(flags: &[bool], total_relevant: usize) -> Option<f64> {
    if total_relevant == 0 {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = flags
        .iter()
        .enumerate()
        .filter(|(_, &rel)| rel)
        .map(|(k, _)| discount(k + 1))
        .sum();
    let ideal: f64 = (1..=total_relevant).map(discount).sum();
    Some(dcg / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub average_precision: f64,
    pub ndcg: f64,
}

/// All metrics for one query; the cutoff is the relevant count. `None` when
/// the query has no relevant item in the corpus.
pub fn evaluate_query(label: usize, flags: &[bool], total_relevant: usize) -> Option<QueryMetrics> {
    let ap = average_precision(flags, total_relevant)?;
    let ndcg = ndcg(flags, total_relevant)?;
    let (precision, recall, f1) = precision_recall_f1_at_n(flags, total_relevant, total_relevant);
    Some(QueryMetrics {
        label,
        precision,
        recall,
        f1,
        average_precision: ap,
        ndcg,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricBlock {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
    pub ndcg: f64,
}

impl MetricBlock {
    fn mean<'a>(queries: impl IntoIterator<Item = &'a QueryMetrics>) -> Self {
        let mut b = MetricBlock::default();
        let mut n = 0usize;
        for q in queries {
            b.precision += q.precision;
            b.recall += q.recall;
            b.f1 += q.f1;
            b.map += q.average_precision;
            b.ndcg += q.ndcg;
            n += 1;
        }
        b.scale(1.0 / n as f64)
    }

    fn add(self, o: Self) -> Self {
        MetricBlock {
            precision: self.precision + o.precision,
            recall: self.recall + o.recall,
            f1: self.f1 + o.f1,
            map: self.map + o.map,
            ndcg: self.ndcg + o.ndcg,
        }
    }

    fn scale(self, k: f64) -> Self {
        MetricBlock {
            precision: self.precision * k,
            recall: self.recall * k,
            f1: self.f1 * k,
            map: self.map * k,
            ndcg: self.ndcg * k,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.precision, self.recall, self.f1, self.map, self.ndcg]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub micro: MetricBlock,
    pub macro_: MetricBlock,
    /// Queries that contributed.
    pub evaluated: usize,
    /// Queries dropped because their class has no other member.
    pub skipped: usize,
}

/// Micro: mean over queries. Macro: mean over classes of per-class query
/// means. Every field of the macro block, F1 included, is averaged this way.
pub fn aggregate(queries: &[QueryMetrics], skipped: usize) -> Result<MetricsReport> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("no evaluable retrieval queries"));
    }
    let mut by_class: BTreeMap<usize, Vec<&QueryMetrics>> = BTreeMap::new();
    for q in queries {
        by_class.entry(q.label).or_default().push(q);
    }
    let macro_ = by_class
        .values()
        .map(|qs| MetricBlock::mean(qs.iter().copied()))
        .fold(MetricBlock::default(), MetricBlock::add)
        .scale(1.0 / by_class.len() as f64);
    Ok(MetricsReport {
        micro: MetricBlock::mean(queries),
        macro_,
        evaluated: queries.len(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(label: usize, ap: f64) -> QueryMetrics {
        QueryMetrics {
            label,
            precision: ap,
            recall: ap,
            f1: ap,
            average_precision: ap,
            ndcg: ap,
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(average_precision(&[true, true], 2), Some(1.0));
        assert!((average_precision(&[true, false, true], 2).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[false, false], 1), Some(0.0));
        assert_eq!(average_precision(&[false], 0), None);

        assert_eq!(precision_recall_f1_at_n(&[true, true, false], 2, 2), (1.0, 1.0, 1.0));
        assert_eq!(precision_recall_f1_at_n(&[true, false], 2, 2), (0.5, 0.5, 0.5));
        assert_eq!(precision_recall_f1_at_n(&[false, false], 2, 2), (0.0, 0.0, 0.0));

        assert_eq!(ndcg(&[true, true, false], 2), Some(1.0));
        assert!((ndcg(&[false, true], 1).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(ndcg(&[], 0), None);
    }

    #[test]
    fn micro_and_macro() {
        let r = aggregate(&[q(0, 1.0), q(0, 1.0), q(0, 1.0), q(1, 0.0)], 0).unwrap();
        assert!((r.micro.map - 0.75).abs() < 1e-15);
        assert!((r.macro_.map - 0.5).abs() < 1e-15);

        let single = aggregate(&[q(2, 0.3), q(2, 0.9)], 1).unwrap();
        assert_eq!(single.micro, single.macro_);
        assert_eq!((single.evaluated, single.skipped), (2, 1));
        assert!(aggregate(&[], 3).is_err());
    }

    fn relevance() -> impl Strategy<Value = (Vec<bool>, usize)> {
        prop::collection::vec(any::<bool>(), 1..20).prop_flat_map(|flags| {
            let hits = flags.iter().filter(|&&f| f).count();
            (Just(flags), hits.max(1)..hits + 4)
        })
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval((flags, rel) in relevance()) {
            let m = evaluate_query(0, &flags, rel).unwrap();
            for v in [m.precision, m.recall, m.f1, m.average_precision, m.ndcg] {
                prop_assert!((0.0..=1.0).contains(&v), "{v}");
            }
        }

        #[test]
        fn demoting_a_relevant_item_never_helps((flags, rel) in relevance(), pick in any::<prop::sample::Index>()) {
            let swaps: Vec<usize> = (0..flags.len().saturating_sub(1))
                .filter(|&k| flags[k] && !flags[k + 1])
                .collect();
            prop_assume!(!swaps.is_empty());
            let at = swaps[pick.index(swaps.len())];
            let mut swapped = flags.clone();
            swapped.swap(at, at + 1);
            prop_assert!(average_precision(&swapped, rel) <= average_precision(&flags, rel));
            prop_assert!(ndcg(&swapped, rel) <= ndcg(&flags, rel));
        }

        #[test]
        fn ideal_ranking_is_perfect(rel in 1usize..10, tail in 0usize..10) {
            let mut flags = vec![true; rel];
            flags.extend(std::iter::repeat_n(false, tail));
            prop_assert_eq!(average_precision(&flags, rel), Some(1.0));
            prop_assert_eq!(ndcg(&flags, rel), Some(1.0));
        }
    }
}
