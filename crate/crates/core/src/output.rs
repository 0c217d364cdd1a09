//! CSV tables written and read by the command-line tool.

use std::io::{Read, Write};

use thiserror::Error;

use crate::ext_real::ExtReal;
use crate::operator::Strategy;
use crate::problem::{GridFn, StateLabel};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
}

/// Fixed 17-significant-digit form; `inf` and `-inf` for the marks.
pub fn format_value(v: ExtReal) -> String {
    match v.finite_value() {
        Some(x) => format_real(x),
        None if v.is_neg_inf() => "-inf".into(),
        None => "inf".into(),
    }
}

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_value(s: &str) -> Option<ExtReal> {
    match s.trim() {
        "-inf" => Some(ExtReal::NEG_INF),
        "inf" | "+inf" => Some(ExtReal::POS_INF),
        t => t.parse::<f64>().ok().and_then(ExtReal::new),
    }
}

/// `state_index,label,value`.
pub fn write_values_csv<W: Write>(out: W, labels: &[StateLabel], values: &GridFn) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state_index", "label", "value"])?;
    for (z, v) in values.iter().enumerate() {
        let label = labels.get(z).map(|l| l.to_string()).unwrap_or_default();
        w.write_record([z.to_string(), label, format_value(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table in the format of [`write_values_csv`]. Rows may come in
/// any order but must cover `0..n` exactly once.
pub fn read_values_csv<R: Read>(input: R) -> Result<GridFn, OutputError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| OutputError::BadRow {
            row: 0,
            message: format!("missing column '{name}'"),
        })
    };
    let (ci, cv) = (col("state_index")?, col("value")?);
    let mut rows: Vec<(usize, ExtReal)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| OutputError::BadRow { row: i + 1, message };
        let z: usize = rec
            .get(ci)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad state_index".into()))?;
        let v = rec
            .get(cv)
            .and_then(parse_value)
            .ok_or_else(|| bad("bad value".into()))?;
        rows.push((z, v));
    }
    let n = rows.len();
    let mut values = vec![None; n];
    for (i, (z, v)) in rows.into_iter().enumerate() {
        let bad = |message: String| OutputError::BadRow { row: i + 1, message };
        let slot = values.get_mut(z).ok_or_else(|| bad(format!("state_index {z} out of range")))?;
        if slot.replace(v).is_some() {
            return Err(bad(format!("state_index {z} repeated")));
        }
    }
    Ok(GridFn::new(values.into_iter().map(|v| v.expect("all slots filled")).collect()))
}

/// `time,state_index,xi`; undefined ratios are left empty.
pub fn write_strategy_csv<W: Write>(out: W, strategy: &Strategy) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "state_index", "xi"])?;
    for (t, row) in strategy.table().iter().enumerate() {
        for (z, xi) in row.iter().enumerate() {
            let v = xi.map(format_real).unwrap_or_default();
            w.write_record([(t + 1).to_string(), z.to_string(), v])?;
        }
    }
    w.flush()?;
    Ok(())
}
