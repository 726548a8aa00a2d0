use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use super::{HcOutcome, RowResult, SkipReason};
use crate::model::LogicalRow;

pub const RESULT_HEADER: [&str; 12] = [
    "row",
    "skipped",
    "reason",
    "hc_first_0to1",
    "hc_first_1to0",
    "maxflips_0to1",
    "maxflips_1to0",
    "hc_exceeds",
    "rp_upper_0to1",
    "rp_upper_1to0",
    "rp_lower_0to1",
    "rp_lower_1to0",
];

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `# comment` followed by the header and one line per row.
pub fn write_results<W: Write>(mut out: W, comment: &str, rows: &[RowResult]) -> Result<(), ResultsError> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.row.0.to_string(),
            (r.skipped.is_some() as u8).to_string(),
            r.skipped.map(|s| s.label().to_string()).unwrap_or_default(),
            opt(r.hc_first[0]),
            opt(r.hc_first[1]),
            opt(r.maxflips[0]),
            opt(r.maxflips[1]),
            opt(r.hc_exceeds),
            opt(r.rowpress[0][0]),
            opt(r.rowpress[0][1]),
            opt(r.rowpress[1][0]),
            opt(r.rowpress[1][1]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<RowResult>, ResultsError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RESULT_HEADER) {
        return Err(ResultsError::Parse { line: 1, message: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| ResultsError::Parse { line, message };
        let num = |i: usize| -> Result<Option<u32>, ResultsError> {
            let f = &record[i];
            if f.is_empty() {
                Ok(None)
            } else {
                f.parse().map(Some).map_err(|_| err(format!("bad count {f:?} in {}", RESULT_HEADER[i])))
            }
        };
        let hc = |i: usize| -> Result<Option<HcOutcome>, ResultsError> {
            match &record[i] {
                "" => Ok(None),
                "NF" => Ok(Some(HcOutcome::NotFound)),
                f => f.parse().map(|n| Some(HcOutcome::Found(n))).map_err(|_| err(format!("bad count {f:?} in {}", RESULT_HEADER[i]))),
            }
        };
        let row = record[0].parse().map_err(|_| err(format!("bad row {:?}", &record[0])))?;
        let skipped = match (&record[1], &record[2]) {
            ("0", "") => None,
            ("1", reason) => Some(SkipReason::from_label(reason).ok_or_else(|| err(format!("unknown skip reason {reason:?}")))?),
            (flag, _) => return Err(err(format!("bad skipped flag {flag:?}"))),
        };
        out.push(RowResult {
            row: LogicalRow(row),
            skipped,
            hc_first: [hc(3)?, hc(4)?],
            maxflips: [num(5)?, num(6)?],
            hc_exceeds: hc(7)?,
            rowpress: [[num(8)?, num(9)?], [num(10)?, num(11)?]],
        });
    }
    Ok(out)
}

/// Merges result sets row by row, in row order.
pub fn merge_results(sets: impl IntoIterator<Item = Vec<RowResult>>) -> Vec<RowResult> {
    let mut by_row: BTreeMap<LogicalRow, RowResult> = BTreeMap::new();
    for set in sets {
        for r in set {
            by_row.entry(r.row).and_modify(|m| m.merge(&r)).or_insert(r);
        }
    }
    by_row.into_values().collect()
}
