//! Per-iteration CSV.
//!
//! Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `iter` | outer iteration, from 1 |
//! | `cost` | squared feature residual at the iteration's pose, px² |
//! | `step_norm` | `‖δp‖` of the last step computed |
//! | `lambda` | damping after adaptation |
//! | `cond_B` | condition number of the perturbation matrix |
//! | `k_features` | features tracked in common |
//! | `rot_err_deg` | rotation error against ground truth, degrees (blank if unknown) |
//! | `trans_err` | translation error against ground truth (blank if unknown) |
//! | `q1..q3` | Gibbs vector of the pose |
//! | `t1..t3` | translation of the pose |
//!
//! Reals are written in scientific notation with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::io::{Read, Write};

use nalgebra::Vector3;

use crate::geometry::{GibbsVector, Pose};
use crate::solver::IterationRecord;

pub const COLUMNS: [&str; 14] = [
    "iter",
    "cost",
    "step_norm",
    "lambda",
    "cond_B",
    "k_features",
    "rot_err_deg",
    "trans_err",
    "q1",
    "q2",
    "q3",
    "t1",
    "t2",
    "t3",
];

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

pub fn write_iterations<W: Write>(out: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        let q = &r.pose.orientation.0;
        let t = &r.pose.translation;
        w.write_record([
            r.iteration.to_string(),
            format_real(r.cost),
            format_real(r.step_norm),
            format_real(r.lambda),
            format_real(r.cond_b),
            r.k_features.to_string(),
            format_opt(r.rotation_error_deg),
            format_opt(r.translation_error),
            format_real(q.x),
            format_real(q.y),
            format_real(q.z),
            format_real(t.x),
            format_real(t.y),
            format_real(t.z),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum CsvReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: bad value {value:?} in column {column}")]
    Value {
        row: usize,
        column: &'static str,
        value: String,
    },
}

pub fn read_iterations<R: Read>(input: R) -> Result<Vec<IterationRecord>, CsvReadError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(CsvReadError::Header(header));
    }
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| CsvReadError::Value {
            row: row + 1,
            column: COLUMNS[i],
            value: field(i).to_string(),
        };
        let real = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        let opt = |i: usize| match field(i) {
            "" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(i)),
        };
        records.push(IterationRecord {
            iteration: field(0).parse().map_err(|_| bad(0))?,
            cost: real(1)?,
            step_norm: real(2)?,
            lambda: real(3)?,
            cond_b: real(4)?,
            k_features: field(5).parse().map_err(|_| bad(5))?,
            rotation_error_deg: opt(6)?,
            translation_error: opt(7)?,
            pose: Pose::new(
                GibbsVector::new(real(8)?, real(9)?, real(10)?),
                Vector3::new(real(11)?, real(12)?, real(13)?),
            ),
        });
    }
    Ok(records)
}
