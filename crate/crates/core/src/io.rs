//! File formats: field-data CSV, posterior-sample CSV and band CSV.
//!
//! All numeric output goes through [`fmt_sig`] (nine significant digits,
//! trailing zeros trimmed) with LF line endings, so repeated runs produce
//! byte-identical files. Readers validate headers exactly and report the
//! 1-based line of the first offending row.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::calibration::{Draw, PredictionBand};
use crate::error::{Error, Result};
use crate::synthetic::{detect_cycles, FieldData, Observation, Provenance};

pub const FIELD_HEADER: &str = "time_s,flow_ml_s,pressure_mmhg,cycle_id";
pub const SAMPLES_HEADER: &str = "R,C,lambda_b,lambda_f,chain,iter";
pub const BAND_HEADER: &str = "time_s,mean,lo90,hi90";

/// Format with nine significant digits, `%g`-style: plain decimal notation in
/// a moderate exponent range, scientific outside it, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        let s = format!("{:.8e}", x);
        // trim zeros inside the mantissa of "d.ddddddddei"
        match s.split_once('e') {
            Some((mant, e)) => format!("{}e{}", trim_zeros(mant), e),
            None => s,
        }
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}

// ---------------------------------------------------------------------------
// Field data CSV
// ---------------------------------------------------------------------------

/// One parsed row of a field CSV; pressure and cycle id are optional in the
/// file format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawFieldRow {
    pub time: f64,
    pub flow: f64,
    pub pressure: Option<f64>,
    pub cycle: Option<u32>,
}

/// Parse a field CSV from any reader. Returns the raw rows; use
/// [`raw_rows_into_field_data`] to validate them into a [`FieldData`].
pub fn parse_field_csv<R: BufRead>(reader: R) -> Result<Vec<RawFieldRow>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
    if header.trim_end() != FIELD_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{FIELD_HEADER}`, got `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let time = parse_f64(fields[0], line_no, "time_s")?;
        let flow = parse_f64(fields[1], line_no, "flow_ml_s")?;
        let pressure = if fields[2].trim().is_empty() {
            None
        } else {
            Some(parse_f64(fields[2], line_no, "pressure_mmhg")?)
        };
        let cycle = if fields[3].trim().is_empty() {
            None
        } else {
            Some(fields[3].trim().parse::<u32>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad cycle_id `{}`: {e}", fields[3]),
            })?)
        };
        rows.push(RawFieldRow {
            time,
            flow,
            pressure,
            cycle,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

fn parse_f64(s: &str, line: usize, field: &str) -> Result<f64> {
    let v = s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("bad {field} `{s}`: {e}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{field} must be finite, got `{s}`"),
        });
    }
    Ok(v)
}

/// Validate raw rows into field data. Rows must all carry pressures. Missing
/// cycle ids are detected from flow upcrossings; detected leading/trailing
/// partial cycles with fewer than 5 samples are dropped.
pub fn raw_rows_into_field_data(rows: &[RawFieldRow], origin: &str) -> Result<FieldData> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows".into()));
    }
    let explicit = rows.iter().all(|r| r.cycle.is_some());
    let any_explicit = rows.iter().any(|r| r.cycle.is_some());
    if any_explicit && !explicit {
        return Err(Error::InvalidInput(
            "cycle_id must be given on every row or on none".into(),
        ));
    }
    let mut observations = Vec::with_capacity(rows.len());
    let cycles: Vec<u32> = if explicit {
        rows.iter().map(|r| r.cycle.unwrap()).collect()
    } else {
        let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
        let flows: Vec<f64> = rows.iter().map(|r| r.flow).collect();
        detect_cycles(&times, &flows)?
    };
    for (row, &cycle) in rows.iter().zip(&cycles) {
        let Some(pressure) = row.pressure else {
            return Err(Error::InvalidInput(
                "pressure column is empty; not a field-data file".into(),
            ));
        };
        observations.push(Observation {
            time: row.time,
            flow: row.flow,
            pressure,
            cycle,
        });
    }
    if !explicit {
        // recordings may start or end mid-cycle; drop undersized partials
        let mut counts = std::collections::BTreeMap::<u32, usize>::new();
        for o in &observations {
            *counts.entry(o.cycle).or_insert(0) += 1;
        }
        let keep: Vec<u32> = counts
            .iter()
            .filter(|(_, &n)| n >= 5)
            .map(|(&c, _)| c)
            .collect();
        observations.retain(|o| keep.contains(&o.cycle));
        if observations.is_empty() {
            return Err(Error::InvalidInput(
                "no cycle has at least 5 samples".into(),
            ));
        }
    }
    FieldData::new(
        observations,
        Provenance::Recorded {
            path: origin.to_string(),
        },
    )
}

/// Read and validate a field CSV file.
pub fn read_field_csv(path: &Path) -> Result<FieldData> {
    let file = std::fs::File::open(path)?;
    let rows = parse_field_csv(std::io::BufReader::new(file))?;
    raw_rows_into_field_data(&rows, &path.display().to_string())
}

/// Write field data (or a pressure-free inflow recording) as CSV.
pub fn write_field_csv<W: Write>(mut w: W, data: &FieldData) -> Result<()> {
    writeln!(w, "{FIELD_HEADER}")?;
    for o in data.observations() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(o.time),
            fmt_sig(o.flow),
            fmt_sig(o.pressure),
            o.cycle
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Posterior samples CSV
// ---------------------------------------------------------------------------

pub fn write_samples_csv<W: Write>(mut w: W, draws: &[Draw]) -> Result<()> {
    writeln!(w, "{SAMPLES_HEADER}")?;
    for d in draws {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_sig(d.r),
            fmt_sig(d.c),
            fmt_sig(d.lambda_b),
            fmt_sig(d.lambda_f),
            d.chain,
            d.iter
        )?;
    }
    Ok(())
}

pub fn parse_samples_csv<R: BufRead>(reader: R) -> Result<Vec<Draw>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    if header.trim_end() != SAMPLES_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{SAMPLES_HEADER}`, got `{header}`"),
        });
    }
    let mut draws = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 fields, got {}", f.len()),
            });
        }
        draws.push(Draw {
            r: parse_f64(f[0], line_no, "R")?,
            c: parse_f64(f[1], line_no, "C")?,
            lambda_b: parse_f64(f[2], line_no, "lambda_b")?,
            lambda_f: parse_f64(f[3], line_no, "lambda_f")?,
            chain: f[4].trim().parse().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad chain `{}`: {e}", f[4]),
            })?,
            iter: f[5].trim().parse().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad iter `{}`: {e}", f[5]),
            })?,
        });
    }
    Ok(draws)
}

// ---------------------------------------------------------------------------
// Band CSV
// ---------------------------------------------------------------------------

pub fn write_band_csv<W: Write>(mut w: W, band: &PredictionBand) -> Result<()> {
    writeln!(w, "{BAND_HEADER}")?;
    for i in 0..band.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(band.times[i]),
            fmt_sig(band.mean[i]),
            fmt_sig(band.lower[i]),
            fmt_sig(band.upper[i])
        )?;
    }
    Ok(())
}

/// Parsed band row set: `(times, mean, lo90, hi90)`.
pub fn parse_band_csv<R: BufRead>(reader: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    if header.trim_end() != BAND_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{BAND_HEADER}`, got `{header}`"),
        });
    }
    let (mut ts, mut means, mut los, mut his) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", f.len()),
            });
        }
        ts.push(parse_f64(f[0], line_no, "time_s")?);
        means.push(parse_f64(f[1], line_no, "mean")?);
        los.push(parse_f64(f[2], line_no, "lo90")?);
        his.push(parse_f64(f[3], line_no, "hi90")?);
    }
    Ok((ts, means, los, his))
}
