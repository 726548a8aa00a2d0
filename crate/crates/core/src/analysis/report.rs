use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{geomean_difference, mean, pair_difference, summarize, DifferenceConvention};
use crate::model::{DataDirection, Side};
use crate::protocols::{HcOutcome, RowResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableKind {
    /// Mean HC_First per direction.
    HcFirst,
    /// Mean bitflips at the sweep maximum per direction.
    MaxFlips,
    /// Mean 0→1 HC_First against mean HC_1→0Exceeds0→1.
    HcExceeds,
}

impl TableKind {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            2 => Some(TableKind::HcFirst),
            3 => Some(TableKind::MaxFlips),
            4 => Some(TableKind::HcExceeds),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            TableKind::HcFirst => 2,
            TableKind::MaxFlips => 3,
            TableKind::HcExceeds => 4,
        }
    }

    pub fn convention(self) -> DifferenceConvention {
        match self {
            TableKind::HcFirst => DifferenceConvention::RelativeToSecond,
            _ => DifferenceConvention::RelativeToFirst,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TableKind::HcFirst => "Average HC_First",
            TableKind::MaxFlips => "Average bitflip count (across all rows)",
            TableKind::HcExceeds => "Aggressor row activation count",
        }
    }

    pub fn columns(self) -> (&'static str, &'static str) {
        match self {
            TableKind::HcFirst | TableKind::MaxFlips => ("0 to 1", "1 to 0"),
            TableKind::HcExceeds => ("HC_First_0to1", "HC_1to0Exceeds0to1"),
        }
    }

    /// Found values of both columns and the number of NotFound entries.
    fn values(self, rows: &[RowResult]) -> ChipSummary {
        let mut s = ChipSummary::default();
        let push_hc = |v: Option<HcOutcome>, vals: &mut Vec<f64>, nf: &mut usize| match v {
            Some(HcOutcome::Found(n)) => vals.push(n as f64),
            Some(HcOutcome::NotFound) => *nf += 1,
            None => {}
        };
        for r in rows.iter().filter(|r| r.skipped.is_none()) {
            match self {
                TableKind::HcFirst => {
                    push_hc(r.hc_first(DataDirection::ZeroToOne), &mut s.values_a, &mut s.not_found_a);
                    push_hc(r.hc_first(DataDirection::OneToZero), &mut s.values_b, &mut s.not_found_b);
                }
                TableKind::MaxFlips => {
                    if let Some(n) = r.maxflips(DataDirection::ZeroToOne) {
                        s.values_a.push(n as f64);
                    }
                    if let Some(n) = r.maxflips(DataDirection::OneToZero) {
                        s.values_b.push(n as f64);
                    }
                }
                TableKind::HcExceeds => {
                    push_hc(r.hc_first(DataDirection::ZeroToOne), &mut s.values_a, &mut s.not_found_a);
                    push_hc(r.hc_exceeds, &mut s.values_b, &mut s.not_found_b);
                }
            }
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChipSummary {
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    pub not_found_a: usize,
    pub not_found_b: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipRow {
    pub chip: String,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub found_a: usize,
    pub found_b: usize,
    pub not_found_a: usize,
    pub not_found_b: usize,
    pub difference_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: u8,
    pub title: String,
    pub column_a: String,
    pub column_b: String,
    pub convention: DifferenceConvention,
    pub chips: Vec<ChipRow>,
    /// `None` unless every chip has both means.
    pub geomean_pct: Option<f64>,
}

/// Per-chip means (NotFound excluded, counted separately), per-chip
/// relative differences and their geometric mean.
pub fn table_report(kind: TableKind, chips: &[(String, Vec<RowResult>)]) -> TableReport {
    let convention = kind.convention();
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for (chip, results) in chips {
        let s = kind.values(results);
        let (mean_a, mean_b) = (mean(&s.values_a), mean(&s.values_b));
        let difference_pct = match (mean_a, mean_b) {
            (Some(a), Some(b)) => pair_difference(a, b, convention).ok().map(|d| 100.0 * d),
            _ => None,
        };
        if let (Some(a), Some(b)) = (mean_a, mean_b) {
            pairs.push((a, b));
        }
        rows.push(ChipRow {
            chip: chip.clone(),
            mean_a,
            mean_b,
            found_a: s.values_a.len(),
            found_b: s.values_b.len(),
            not_found_a: s.not_found_a,
            not_found_b: s.not_found_b,
            difference_pct,
        });
    }
    let geomean_pct = if !pairs.is_empty() && pairs.len() == chips.len() { geomean_difference(&pairs, convention).ok() } else { None };
    let (a, b) = kind.columns();
    TableReport {
        table: kind.number(),
        title: kind.title().into(),
        column_a: a.into(),
        column_b: b.into(),
        convention,
        chips: rows,
        geomean_pct,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.0}")).unwrap_or_else(|| "-".into())
}

impl TableReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Table {}: {}", self.table, self.title);
        let _ = writeln!(out, "{:<12} {:>20} {:>20} {:>11} {:>8}", "Chip", self.column_a, self.column_b, "Difference", "NF a/b");
        for c in &self.chips {
            let diff = c.difference_pct.map(|d| format!("{d:.1}%")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<12} {:>20} {:>20} {:>11} {:>8}",
                c.chip,
                cell(c.mean_a),
                cell(c.mean_b),
                diff,
                format!("{}/{}", c.not_found_a, c.not_found_b)
            );
        }
        let g = self.geomean_pct.map(|g| format!("{g:.1}%")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "Avg. difference (geo. mean): {g}");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Distribution summaries per chip, metric and direction as CSV, for
/// external plotting.
pub fn plot_csv(chips: &[(String, Vec<RowResult>)]) -> String {
    let mut out = String::from("chip,metric,direction,count,min,q1,median,q3,max,iqr,whisker_low,whisker_high,fliers\n");
    for (chip, results) in chips {
        let live: Vec<&RowResult> = results.iter().filter(|r| r.skipped.is_none()).collect();
        let mut series: Vec<(&str, String, Vec<f64>)> = Vec::new();
        for d in DataDirection::BOTH {
            series.push(("hc_first", d.label().into(), live.iter().filter_map(|r| r.hc_first(d).and_then(HcOutcome::found)).map(|n| n as f64).collect()));
            series.push(("maxflips", d.label().into(), live.iter().filter_map(|r| r.maxflips(d)).map(f64::from).collect()));
            for side in Side::BOTH {
                series.push((
                    "rowpress",
                    format!("{}_{}", side.label(), d.label()),
                    live.iter().filter_map(|r| r.rowpress(side, d)).map(f64::from).collect(),
                ));
            }
        }
        series.push(("hc_exceeds", "-".into(), live.iter().filter_map(|r| r.hc_exceeds.and_then(HcOutcome::found)).map(|n| n as f64).collect()));
        for (metric, dir, values) in series {
            let Ok(s) = summarize(&values) else { continue };
            let _ = writeln!(
                out,
                "{chip},{metric},{dir},{},{},{},{},{},{},{},{},{},{}",
                s.count, s.min, s.q1, s.median, s.q3, s.max, s.iqr, s.whisker_low, s.whisker_high, s.fliers.len()
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LogicalRow;
    use crate::protocols::SkipReason;

    fn r(row: u32, a: Option<u64>, b: Option<u64>) -> RowResult {
        let mut x = RowResult::new(LogicalRow(row));
        let o = |v: Option<u64>| Some(v.map(HcOutcome::Found).unwrap_or(HcOutcome::NotFound));
        x.hc_first = [o(a), o(b)];
        x
    }

    #[test]
    fn not_found_excluded_from_means() {
        let rows = vec![r(1, Some(1000), Some(3000)), r(2, Some(3000), None), RowResult::skipped(LogicalRow(0), SkipReason::SubarrayBoundary)];
        let t = table_report(TableKind::HcFirst, &[("X".into(), rows)]);
        let c = &t.chips[0];
        assert_eq!((c.mean_a, c.mean_b), (Some(2000.0), Some(3000.0)));
        assert_eq!((c.not_found_a, c.not_found_b), (0, 1));
        assert!((c.difference_pct.unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert!((t.geomean_pct.unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert!(t.render_text().contains("33.3%"));
        let back: TableReport = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn plot_rows() {
        let rows = vec![r(1, Some(1000), Some(3000)), r(2, Some(3000), Some(5000))];
        let csv = plot_csv(&[("X".into(), rows)]);
        assert!(csv.contains("X,hc_first,0to1,2,1000,1000,2000,3000,3000,2000,1000,3000,0"));
    }
}
