//! Text renderings of retrieval results.

use std::fmt::Write;

use super::metrics::{MetricBlock, MetricsReport};
use super::rank::RankedList;
use crate::{Error, Result};

const COLUMNS: [&str; 5] = ["P@N", "R@N", "F1@N", "mAP", "NDCG"];

/// Fixed-width table in percent.
pub fn render_metrics_table(report: &MetricsReport) -> String {
    let mut s = format!("{:<8}", "");
    for c in COLUMNS {
        let _ = write!(s, "{c:>8}");
    }
    s.push('\n');
    for (name, block) in [("micro", &report.micro), ("macro", &report.macro_)] {
        let _ = write!(s, "{name:<8}");
        for v in block.values() {
            let _ = write!(s, "{:>8.2}", v * 100.0);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "queries evaluated: {}, skipped: {}", report.evaluated, report.skipped);
    s
}

/// Tab-separated, full precision; [`parse_metrics_tsv`] reads it back.
pub fn render_metrics_tsv(report: &MetricsReport) -> String {
    let mut s = String::from("scope");
    for c in COLUMNS {
        s.push('\t');
        s.push_str(c);
    }
    s.push('\n');
    for (name, block) in [("micro", &report.micro), ("macro", &report.macro_)] {
        s.push_str(name);
        for v in block.values() {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "evaluated\t{}", report.evaluated);
    let _ = writeln!(s, "skipped\t{}", report.skipped);
    s
}

pub fn parse_metrics_tsv(text: &str) -> Result<MetricsReport> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: String| Error::Syntax { line: line + 1, message };

    let (n, header) = lines.next().ok_or_else(|| err(0, "empty metrics report".into()))?;
    let expected: Vec<&str> = std::iter::once("scope").chain(COLUMNS).collect();
    if header.split('\t').collect::<Vec<_>>() != expected {
        return Err(err(n, format!("unexpected header {header:?}")));
    }

    let mut blocks = [None, None];
    let mut counts = [None, None];
    for (n, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        let slot = match fields[0] {
            "micro" => Some(0),
            "macro" => Some(1),
            _ => None,
        };
        if let Some(slot) = slot {
            if fields.len() != 6 {
                return Err(err(n, format!("expected 6 fields, found {}", fields.len())));
            }
            let mut v = [0.0; 5];
            for (dst, raw) in v.iter_mut().zip(&fields[1..]) {
                *dst = raw
                    .parse::<f64>()
                    .ok()
                    .filter(|x| (0.0..=1.0).contains(x))
                    .ok_or_else(|| err(n, format!("bad metric value {raw:?}")))?;
            }
            if blocks[slot].is_some() {
                return Err(err(n, format!("duplicate {} row", fields[0])));
            }
            blocks[slot] = Some(MetricBlock {
                precision: v[0],
                recall: v[1],
                f1: v[2],
                map: v[3],
                ndcg: v[4],
            });
            continue;
        }
        let slot = match fields[0] {
            "evaluated" => 0,
            "skipped" => 1,
            other => return Err(err(n, format!("unknown row {other:?}"))),
        };
        if fields.len() != 2 || counts[slot].is_some() {
            return Err(err(n, format!("malformed {} row", fields[0])));
        }
        counts[slot] = Some(
            fields[1]
                .parse::<usize>()
                .map_err(|_| err(n, format!("bad count {:?}", fields[1])))?,
        );
    }
    let last = text.lines().count();
    match (blocks, counts) {
        ([Some(micro), Some(macro_)], [Some(evaluated), Some(skipped)]) => Ok(MetricsReport {
            micro,
            macro_,
            evaluated,
            skipped,
        }),
        _ => Err(Error::Syntax {
            line: last,
            message: "report is missing a micro, macro, evaluated or skipped row".into(),
        }),
    }
}

/// One row per retrieved item: query id, rank (1-based), id, distance,
/// relevance flag.
pub fn render_ranked_tsv(lists: &[RankedList]) -> String {
    let mut s = String::from("query\trank\tid\tdistance\trelevant\n");
    for list in lists {
        for (k, item) in list.items.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                list.query_id,
                k + 1,
                item.id,
                item.distance,
                u8::from(item.relevant)
            );
        }
    }
    s
}
