//! Detection-count arithmetic: impact of the static component, tool overlap
//! partitions and combined detector counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Percentage of WS detections lost without static analysis:
/// `(ws - wos) * 100 / ws`. Undefined (`None`) when `ws == 0`; negative when
/// the WOS configuration detects more.
pub fn impact(ws_count: usize, wos_count: usize) -> Option<f64> {
    if ws_count == 0 {
        return None;
    }
    Some((ws_count as f64 - wos_count as f64) * 100.0 / ws_count as f64)
}

/// Two-decimal rendering used in reports, `n/a` when undefined.
pub fn format_impact(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OverlapError {
    #[error("no tools given")]
    NoTools,
    #[error("tool `{tool}` was evaluated on a different pair set than `{reference}`")]
    MismatchedPairs { tool: String, reference: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRegion {
    /// Tools that detected exactly these pairs, in tool order.
    pub tools: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub tools: Vec<String>,
    /// One entry per non-empty subset of `tools`, zero counts included.
    pub regions: Vec<OverlapRegion>,
    pub at_least_one: usize,
    pub none: usize,
    pub total: usize,
}

impl OverlapReport {
    pub fn region(&self, tools: &[&str]) -> Option<usize> {
        let mut want: Vec<&str> = tools.to_vec();
        want.sort_unstable();
        self.regions
            .iter()
            .find(|r| {
                let mut have: Vec<&str> = r.tools.iter().map(String::as_str).collect();
                have.sort_unstable();
                have == want
            })
            .map(|r| r.count)
    }

    /// Pairs detected by `tool` and no other tool.
    pub fn unique_to(&self, tool: &str) -> Option<usize> {
        self.region(&[tool])
    }
}

/// Partition pairs by the exact set of tools that detected them.
///
/// `detections` maps tool name to per-pair verdicts; every tool must cover the
/// same pairs.
pub fn overlap_report(detections: &BTreeMap<String, BTreeMap<String, bool>>) -> Result<OverlapReport, OverlapError> {
    let mut iter = detections.iter();
    let (ref_tool, ref_verdicts) = iter.next().ok_or(OverlapError::NoTools)?;
    let pairs: BTreeSet<&String> = ref_verdicts.keys().collect();
    for (tool, verdicts) in iter {
        if verdicts.keys().collect::<BTreeSet<_>>() != pairs {
            return Err(OverlapError::MismatchedPairs { tool: tool.clone(), reference: ref_tool.clone() });
        }
    }
    let tools: Vec<String> = detections.keys().cloned().collect();
    assert!(tools.len() < usize::BITS as usize, "too many tools for an overlap partition");
    let mut by_mask: BTreeMap<usize, usize> = BTreeMap::new();
    for pair in &pairs {
        let mask = tools
            .iter()
            .enumerate()
            .filter(|(_, t)| detections[*t][*pair])
            .fold(0usize, |m, (i, _)| m | (1 << i));
        *by_mask.entry(mask).or_default() += 1;
    }
    let regions = (1usize..(1 << tools.len()))
        .map(|mask| OverlapRegion {
            tools: tools.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, t)| t.clone()).collect(),
            count: by_mask.get(&mask).copied().unwrap_or(0),
        })
        .collect();
    let none = by_mask.get(&0).copied().unwrap_or(0);
    Ok(OverlapReport { tools, regions, at_least_one: pairs.len() - none, none, total: pairs.len() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedCount {
    pub tool: String,
    pub tool_count: usize,
    pub taint_count: usize,
    pub combined: usize,
    /// Detections the taint detector adds on top of the tool alone.
    pub increase: usize,
}

/// Per tool, the size of the union of its detections with the taint detector's.
pub fn combine_detectors(
    tool_detected: &BTreeMap<String, BTreeSet<String>>,
    taint_detected: &BTreeSet<String>,
) -> Vec<CombinedCount> {
    tool_detected
        .iter()
        .map(|(tool, pairs)| {
            let combined = pairs.union(taint_detected).count();
            CombinedCount {
                tool: tool.clone(),
                tool_count: pairs.len(),
                taint_count: taint_detected.len(),
                combined,
                increase: combined - pairs.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn impact_table_rows() {
        let rows = [(73, 61, "16.44"), (71, 56, "21.13"), (68, 52, "23.53"), (56, 27, "51.79"), (42, 0, "100.00")];
        for (ws, wos, want) in rows {
            assert_eq!(format_impact(impact(ws, wos)), want, "({ws}, {wos})");
        }
    }

    #[test]
    fn impact_edge_cases() {
        assert_eq!(format_impact(impact(17, 17)), "0.00");
        assert_eq!(impact(0, 0), None);
        assert_eq!(format_impact(impact(0, 3)), "n/a");
        assert_eq!(format_impact(impact(10, 15)), "-50.00");
    }

    fn verdicts(items: &[(&str, bool)]) -> BTreeMap<String, bool> {
        items.iter().map(|(p, d)| (p.to_string(), *d)).collect()
    }

    #[test]
    fn disjoint_singletons() {
        let d = BTreeMap::from([
            ("t1".to_owned(), verdicts(&[("a", true), ("b", false), ("c", false)])),
            ("t2".to_owned(), verdicts(&[("a", false), ("b", true), ("c", false)])),
        ]);
        let r = overlap_report(&d).unwrap();
        assert_eq!(r.unique_to("t1"), Some(1));
        assert_eq!(r.unique_to("t2"), Some(1));
        assert_eq!(r.region(&["t1", "t2"]), Some(0));
        assert_eq!((r.at_least_one, r.none, r.total), (2, 1, 3));
    }

    #[test]
    fn identical_detections_fill_only_the_full_region() {
        let v = verdicts(&[("a", true), ("b", true), ("c", false)]);
        let d: BTreeMap<_, _> = ["x", "y", "z"].iter().map(|t| (t.to_string(), v.clone())).collect();
        let r = overlap_report(&d).unwrap();
        assert_eq!(r.regions.len(), 7);
        for region in &r.regions {
            let expected = if region.tools.len() == 3 { 2 } else { 0 };
            assert_eq!(region.count, expected);
        }
    }

    #[test]
    fn mismatched_pair_sets_are_rejected() {
        let d = BTreeMap::from([
            ("t1".to_owned(), verdicts(&[("a", true)])),
            ("t2".to_owned(), verdicts(&[("b", true)])),
        ]);
        assert!(matches!(overlap_report(&d), Err(OverlapError::MismatchedPairs { .. })));
        assert_eq!(overlap_report(&BTreeMap::new()), Err(OverlapError::NoTools));
    }

    fn ids(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn combined_examples() {
        let tools = BTreeMap::from([("t".to_owned(), ids(&["p1", "p2"]))]);
        let c = combine_detectors(&tools, &ids(&["p2", "p3"]));
        assert_eq!((c[0].combined, c[0].increase), (3, 1));
        let c = combine_detectors(&tools, &ids(&[]));
        assert_eq!((c[0].combined, c[0].increase), (2, 0));
    }

    proptest! {
        #[test]
        fn impact_algebra(ws in 1usize..10_000, a in 0usize..10_000, b in 0usize..10_000) {
            prop_assert_eq!(impact(ws, 0), Some(100.0));
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(impact(ws, lo).unwrap() >= impact(ws, hi).unwrap());
        }

        #[test]
        fn overlap_partition_sums(
            table in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 0..40)
        ) {
            let tools = ["a", "b", "c", "d"];
            let d: BTreeMap<String, BTreeMap<String, bool>> = tools
                .iter()
                .enumerate()
                .map(|(ti, t)| (t.to_string(), table.iter().enumerate().map(|(pi, row)| (format!("p{pi}"), row[ti])).collect()))
                .collect();
            let r = overlap_report(&d).unwrap();
            prop_assert_eq!(r.regions.iter().map(|x| x.count).sum::<usize>(), r.at_least_one);
            prop_assert_eq!(r.at_least_one + r.none, table.len());
        }

        #[test]
        fn combined_counts_are_bounded(
            tool in proptest::collection::btree_set(0u8..30, 0..30),
            taint in proptest::collection::btree_set(0u8..30, 0..30),
        ) {
            let to_ids = |s: &BTreeSet<u8>| s.iter().map(|x| format!("p{x}")).collect::<BTreeSet<_>>();
            let tools = BTreeMap::from([("t".to_owned(), to_ids(&tool))]);
            let c = &combine_detectors(&tools, &to_ids(&taint))[0];
            prop_assert!(c.combined >= tool.len().max(taint.len()));
            prop_assert!(c.combined <= tool.len() + taint.len());
        }
    }
}
