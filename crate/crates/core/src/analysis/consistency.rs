use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::disturb::Mode;
use crate::model::{CellEncoding, ChipProfile, DataDirection, PhysicalDirection, Side};
use crate::protocols::{resolve_victim, RowResult};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    InsufficientData,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InconsistencyCode {
    #[serde(rename = "INC1")]
    Inc1,
    #[serde(rename = "INC2")]
    Inc2,
    #[serde(rename = "INC3")]
    Inc3,
}

impl fmt::Display for InconsistencyCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InconsistencyCode::Inc1 => "INC1",
            InconsistencyCode::Inc2 => "INC2",
            InconsistencyCode::Inc3 => "INC3",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub characteristic: String,
    pub predicted: String,
    pub observed: String,
    pub verdict: Verdict,
    /// Set exactly when the verdict is `Inconsistent`.
    pub code: Option<InconsistencyCode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub predictions: Mode,
    pub findings: Vec<Finding>,
}

impl ConsistencyReport {
    pub fn codes(&self) -> BTreeSet<InconsistencyCode> {
        self.findings.iter().filter_map(|f| f.code).collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("predictions: {:?}\n", self.predictions);
        for f in &self.findings {
            let code = f.code.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{code:<5} {:<17} {}\n      predicted: {}\n      observed:  {}\n",
                format!("{:?}", f.verdict),
                f.characteristic,
                f.predicted,
                f.observed
            ));
        }
        out
    }
}

/// Data direction on a row whose physical direction is discharged to
/// charged, i.e. the one the device model rules out under double-sided
/// hammering.
fn charging_direction(encoding: CellEncoding) -> DataDirection {
    DataDirection::from_physical(PhysicalDirection::DischargedToCharged, encoding)
}

fn finding(characteristic: &str, predicted: String, observed: String, verdict: Verdict, code: InconsistencyCode) -> Finding {
    Finding {
        characteristic: characteristic.into(),
        predicted,
        observed,
        verdict,
        code: (verdict == Verdict::Inconsistent).then_some(code),
    }
}

#[derive(Default)]
struct Tally {
    /// Double-sided flips at maximum count, by data direction.
    hammer_flips: [u64; 2],
    hammer_rows: u64,
    /// Same, split by whether the flip charges the cell.
    charging_flips: u64,
    /// HC_First sums and counts, by data direction and by charging.
    hc_data: [(f64, u64); 2],
    hc_phys: [(f64, u64); 2],
    hc_rows: u64,
    rowpress: [u64; 2],
    rowpress_rows: u64,
}

fn tally<S: Scalar>(profile: &ChipProfile<S>, results: &[RowResult]) -> Tally {
    let mut t = Tally::default();
    for r in results.iter().filter(|r| r.skipped.is_none()) {
        let Ok(victim) = resolve_victim(profile, r.row) else { continue };
        let encoding = profile.encoding_unchecked(victim.physical);
        let charging = charging_direction(encoding);
        if r.maxflips.iter().any(Option::is_some) {
            t.hammer_rows += 1;
        }
        for d in DataDirection::BOTH {
            if let Some(n) = r.maxflips(d) {
                t.hammer_flips[d.index()] += n as u64;
                if d == charging {
                    t.charging_flips += n as u64;
                }
            }
            if let Some(hc) = r.hc_first(d) {
                t.hc_rows += 1;
                if let Some(n) = hc.found() {
                    let slot = &mut t.hc_data[d.index()];
                    slot.0 += n as f64;
                    slot.1 += 1;
                    let slot = &mut t.hc_phys[(d == charging) as usize];
                    slot.0 += n as f64;
                    slot.1 += 1;
                }
            }
            for side in Side::BOTH {
                if let Some(n) = r.rowpress(side, d) {
                    t.rowpress[d.index()] += n as u64;
                    t.rowpress_rows += 1;
                }
            }
        }
    }
    t
}

fn mean_of((sum, n): (f64, u64)) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

fn fmt_mean(m: Option<f64>) -> String {
    m.map(|m| format!("{m:.0}")).unwrap_or_else(|| "never observed".into())
}

/// Compares measured results against a prediction set.
///
/// Device predictions: double-sided hammering only discharges cells;
/// the discharging mechanism is the stronger one; single-sided RowPress
/// induces both directions. Empirical predictions are the measured
/// behavior: both directions under double-sided hammering, 0→1 onsets
/// below 1→0 onsets, RowPress overwhelmingly 1→0. Each violated
/// prediction is reported under the code of the corresponding slot.
pub fn check_consistency<S: Scalar>(profile: &ChipProfile<S>, results: &[RowResult], predictions: Mode) -> ConsistencyReport {
    let t = tally(profile, results);
    let mut findings = Vec::new();

    let [h01, h10] = t.hammer_flips;
    let hammer_obs = format!("{h01} 0→1 and {h10} 1→0 flips ({} charging) over {} rows", t.charging_flips, t.hammer_rows);
    findings.push(match predictions {
        Mode::Device => {
            let verdict = match (t.hammer_rows, t.charging_flips) {
                (0, _) => Verdict::InsufficientData,
                (_, 0) => Verdict::Consistent,
                _ => Verdict::Inconsistent,
            };
            finding("double-sided direction", "only charged→discharged flips".into(), hammer_obs, verdict, InconsistencyCode::Inc1)
        }
        Mode::Empirical => {
            let verdict = match t.hammer_rows {
                0 => Verdict::InsufficientData,
                _ if h01 > 0 && h10 > 0 => Verdict::Consistent,
                _ => Verdict::Inconsistent,
            };
            finding("double-sided direction", "both 0→1 and 1→0 flips".into(), hammer_obs, verdict, InconsistencyCode::Inc1)
        }
    });

    findings.push(match predictions {
        Mode::Device => {
            let (dis, chg) = (mean_of(t.hc_phys[0]), mean_of(t.hc_phys[1]));
            let observed = format!("mean HC_First discharging {}, charging {}", fmt_mean(dis), fmt_mean(chg));
            let verdict = match (t.hc_rows, dis, chg) {
                (0, _, _) | (_, None, None) => Verdict::InsufficientData,
                (_, None, Some(_)) => Verdict::Inconsistent,
                (_, Some(d), Some(c)) if c < d => Verdict::Inconsistent,
                _ => Verdict::Consistent,
            };
            finding("dominant mechanism", "charged→discharged flips appear first".into(), observed, verdict, InconsistencyCode::Inc2)
        }
        Mode::Empirical => {
            let (m01, m10) = (mean_of(t.hc_data[0]), mean_of(t.hc_data[1]));
            let observed = format!("mean HC_First 0→1 {}, 1→0 {}", fmt_mean(m01), fmt_mean(m10));
            let verdict = match (t.hc_rows, m01, m10) {
                (0, _, _) | (_, None, None) => Verdict::InsufficientData,
                (_, None, Some(_)) => Verdict::Inconsistent,
                (_, Some(a), Some(b)) if a >= b => Verdict::Inconsistent,
                _ => Verdict::Consistent,
            };
            finding("dominant mechanism", "0→1 flips appear first".into(), observed, verdict, InconsistencyCode::Inc2)
        }
    });

    let [r01, r10] = t.rowpress;
    let total = r01 + r10;
    let share10 = if total > 0 { r10 as f64 / total as f64 } else { 0.0 };
    let rp_obs = format!("{r01} 0→1 and {r10} 1→0 flips ({:.2}% 1→0)", 100.0 * share10);
    let rp_verdict = |ok: bool| {
        if t.rowpress_rows == 0 || total == 0 {
            Verdict::InsufficientData
        } else if ok {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        }
    };
    let skewed = share10 > 0.99 || share10 < 0.01;
    findings.push(match predictions {
        Mode::Device => finding("RowPress direction", "both 0→1 and 1→0 flips".into(), rp_obs, rp_verdict(!skewed), InconsistencyCode::Inc3),
        Mode::Empirical => {
            finding("RowPress direction", "overwhelmingly 1→0 flips".into(), rp_obs, rp_verdict(share10 > 0.99), InconsistencyCode::Inc3)
        }
    });

    ConsistencyReport { predictions, findings }
}
