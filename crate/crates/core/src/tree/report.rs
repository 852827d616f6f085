use serde::Serialize;

use crate::dataset::{ColumnSchema, ContrastSample};
use crate::error::Result;

use super::split::{Side, SplitRule, SplitSpec};
use super::{ContrastTree, NodeId};

/// One terminal region evaluated on a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub id: NodeId,
    pub rule: String,
    /// Discrepancy on the sample's rows in the region; `None` when undefined
    /// (for instance an empty region on held-out data).
    pub d: Option<f64>,
    pub n: usize,
    pub n_y: usize,
    pub n_z: usize,
    /// Measure-specific summary of the `y` side (mean, target quantile or median).
    pub summary_y: f64,
    pub summary_z: f64,
}

pub(crate) fn condition_text(split: &SplitSpec, side: Side, column: &ColumnSchema) -> String {
    let name = &column.name;
    let mut text = match (&split.rule, side) {
        (SplitRule::Numeric { threshold }, Side::Left) => format!("{name} <= {threshold}"),
        (SplitRule::Numeric { threshold }, Side::Right) => format!("{name} > {threshold}"),
        (SplitRule::Categorical { left_levels }, side) => {
            let labels: Vec<&str> = left_levels
                .iter()
                .map(|&l| column.levels.get(l as usize).map_or("?", String::as_str))
                .collect();
            let op = if side == Side::Left { "in" } else { "not in" };
            format!("{name} {op} {{{}}}", labels.join(", "))
        }
    };
    if split.had_missing && split.missing_goes == side {
        text.push_str(" (or missing)");
    }
    text
}

/// Terminal regions of `tree` evaluated on `sample`, by descending
/// discrepancy (undefined last, ties by id).
pub fn region_report(tree: &ContrastTree, sample: &ContrastSample) -> Result<Vec<RegionSummary>> {
    let parts = tree.partition(sample.x())?;
    let measure = tree.measure();
    let mut out: Vec<RegionSummary> = parts
        .into_iter()
        .map(|(id, rows)| {
            let (ys, zs) = sample.sides(&rows);
            let d = measure.eval(&ys, &zs).ok().map(|v| v.d);
            let (summary_y, summary_z) = measure.side_summary(&ys, &zs);
            RegionSummary {
                id,
                rule: tree.rule_text(id),
                d,
                n: rows.len(),
                n_y: ys.len(),
                n_z: zs.len(),
                summary_y,
                summary_z,
            }
        })
        .collect();
    out.sort_by(|a, b| match (a.d, b.d) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.id.cmp(&b.id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.id.cmp(&b.id),
    });
    Ok(out)
}

/// Tab-separated `id, d, n, rule` lines, one per region.
pub fn regions_tsv(report: &[RegionSummary]) -> String {
    let mut s = String::new();
    for r in report {
        let d = r.d.map_or_else(|| "NA".to_string(), |d| format!("{d:.6}"));
        s.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, d, r.n, r.rule));
    }
    s
}
