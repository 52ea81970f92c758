//! CSV readers and writers for measurements, particle clouds and results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! table re-parses to the exact values that were written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::diagnostics::{ConvergenceTable, KdeEstimate};
use crate::error::{Error, Result};
use crate::filters::{FilterTrace, StepRecord};
use crate::models::PendulumObservation;
use crate::particle::ParticleApproximation;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(field: &str, what: &str, line: u64, path: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        message: format!("{what}: '{field}' is not a number"),
    })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Creates `path` (and its parent directory) and hands a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// One timed observation of the pendulum.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub t: usize,
    pub tau: f64,
    pub angle: f64,
    pub batch: Option<String>,
}

/// Ordered measurements, optionally grouped into batches.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    pub rows: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau).collect()
    }

    pub fn observations(&self) -> Vec<PendulumObservation> {
        self.rows
            .iter()
            .map(|r| PendulumObservation {
                tau: r.tau,
                angle: r.angle,
            })
            .collect()
    }

    /// Rows sharing a batch label form one batch, in order of first
    /// appearance; unlabelled rows are batches of one.
    pub fn batches(&self) -> Vec<Vec<PendulumObservation>> {
        let mut labels: Vec<Option<&str>> = Vec::new();
        let mut out: Vec<Vec<PendulumObservation>> = Vec::new();
        for r in &self.rows {
            let obs = PendulumObservation {
                tau: r.tau,
                angle: r.angle,
            };
            match r.batch.as_deref() {
                Some(label) => match labels.iter().position(|l| *l == Some(label)) {
                    Some(i) => out[i].push(obs),
                    None => {
                        labels.push(Some(label));
                        out.push(vec![obs]);
                    }
                },
                None => {
                    labels.push(None);
                    out.push(vec![obs]);
                }
            }
        }
        out
    }

    pub fn extend(&mut self, other: MeasurementSet) {
        self.rows.extend(other.rows);
    }
}

/// Reads a measurement CSV with header `t,tau_seconds[,angle_radians][,batch]`.
/// A missing angle column means every angle is zero.
pub fn read_measurements<R: Read>(reader: R, name: &str) -> Result<MeasurementSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let err = |line: u64, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let (Some(t_col), Some(tau_col)) = (col("t"), col("tau_seconds")) else {
        return Err(err(1, "header must contain 't' and 'tau_seconds'".into()));
    };
    if let Some(h) = headers
        .iter()
        .find(|h| !["t", "tau_seconds", "angle_radians", "batch"].contains(h))
    {
        return Err(err(1, format!("unknown column '{h}'")));
    }
    let angle_col = col("angle_radians");
    let batch_col = col("batch");

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = line_of(&record);
        if record.len() != headers.len() {
            return Err(err(line, format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        let t = record[t_col]
            .parse::<usize>()
            .map_err(|_| err(line, format!("t: '{}' is not a step index", &record[t_col])))?;
        let tau = parse_f64(&record[tau_col], "tau_seconds", line, name)?;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(err(line, format!("measurement time must be positive, got {tau}")));
        }
        let angle = match angle_col {
            Some(c) => parse_f64(&record[c], "angle_radians", line, name)?,
            None => 0.0,
        };
        if !angle.is_finite() {
            return Err(err(line, "angle must be finite".into()));
        }
        let batch = batch_col
            .map(|c| record[c].to_string())
            .filter(|b| !b.is_empty());
        rows.push(Measurement { t, tau, angle, batch });
    }
    if rows.is_empty() {
        return Err(err(1, "no measurements".into()));
    }
    Ok(MeasurementSet { rows })
}

pub fn parse_measurements(path: &Path) -> Result<MeasurementSet> {
    read_measurements(open(path)?, &path.display().to_string())
}

/// `position_0,...,position_{N-1},weight`, linear weights.
pub fn write_particles<W: Write>(w: W, approx: &ParticleApproximation) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..approx.dim()).map(|k| format!("position_{k}")).collect();
    header.push("weight".into());
    wtr.write_record(&header)?;
    for (x, w) in approx.positions().zip(approx.weights()) {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push(num(w));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<particles>", e))
}

pub fn read_particles<R: Read>(r: R) -> Result<ParticleApproximation> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let dim = headers.len().saturating_sub(1);
    if dim == 0 || headers.get(dim) != Some("weight") {
        return Err(Error::Parse {
            path: "<particles>".into(),
            line: 1,
            message: "header must be position_0,...,weight".into(),
        });
    }
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        for k in 0..dim {
            positions.push(parse_f64(&record[k], "position", line, "<particles>")?);
        }
        weights.push(parse_f64(&record[dim], "weight", line, "<particles>")?);
    }
    ParticleApproximation::from_weights(dim, positions, &weights)
}

fn summary_columns(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (0..dim).map(|k| format!("{prefix}_{k}")).collect()
    }
}

/// `t,ess,resampled,log_evidence_increment,post_mean,post_var`, one row per step.
pub fn write_trace<W: Write>(w: W, trace: &FilterTrace) -> Result<()> {
    let dim = trace.initial.dim();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "ess".into(), "resampled".into(), "log_evidence_increment".into()];
    header.extend(summary_columns("post_mean", dim));
    header.extend(summary_columns("post_var", dim));
    wtr.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.t.to_string(), num(r.ess), r.resampled.to_string(), num(r.log_evidence_increment)];
        row.extend(r.posterior_mean.iter().map(|v| num(*v)));
        row.extend(r.posterior_variance.iter().map(|v| num(*v)));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<trace>", e))
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 6 || headers.len() % 2 != 0 {
        return Err(Error::Parse {
            path: "<trace>".into(),
            line: 1,
            message: "unexpected trace header".into(),
        });
    }
    let dim = (headers.len() - 4) / 2;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let f = |i: usize, what: &str| parse_f64(&record[i], what, line, "<trace>");
        let resampled = match &record[2] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    path: "<trace>".into(),
                    line,
                    message: format!("resampled: '{other}'"),
                })
            }
        };
        out.push(StepRecord {
            t: record[0].parse().map_err(|_| Error::Parse {
                path: "<trace>".into(),
                line,
                message: "t".into(),
            })?,
            ess: f(1, "ess")?,
            resampled,
            log_evidence_increment: f(3, "log_evidence_increment")?,
            posterior_mean: (0..dim).map(|k| f(4 + k, "post_mean")).collect::<Result<_>>()?,
            posterior_variance: (0..dim).map(|k| f(4 + dim + k, "post_var")).collect::<Result<_>>()?,
            acceptance_rate: None,
        });
    }
    Ok(out)
}

fn write_pairs<W: Write>(w: W, header: [&str; 2], xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for (x, y) in xs.iter().zip(ys) {
        wtr.write_record([num(*x), num(*y)])?;
    }
    wtr.flush().map_err(|e| Error::io("<table>", e))
}

fn read_pairs<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        if row.len() != 2 {
            return Err(Error::Parse {
                path: "<table>".into(),
                line,
                message: format!("expected 2 fields, found {}", row.len()),
            });
        }
        xs.push(parse_f64(&row[0], "first column", line, "<table>")?);
        ys.push(parse_f64(&row[1], "second column", line, "<table>")?);
    }
    Ok((xs, ys))
}

/// `x,density`.
pub fn write_kde<W: Write>(w: W, est: &KdeEstimate) -> Result<()> {
    write_pairs(w, ["x", "density"], &est.grid, &est.density)
}

pub fn read_kde<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    read_pairs(r)
}

/// `epsilon,probability`.
pub fn write_deviation<W: Write>(w: W, epsilons: &[f64], probabilities: &[f64]) -> Result<()> {
    write_pairs(w, ["epsilon", "probability"], epsilons, probabilities)
}

pub fn read_deviation<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    read_pairs(r)
}

/// `algorithm,particles,mean,variance`, one row per particle count.
pub fn write_convergence<W: Write>(w: W, tables: &[ConvergenceTable]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["algorithm", "particles", "mean", "variance"])?;
    for table in tables {
        for row in &table.rows {
            wtr.write_record([
                table.algorithm.to_string(),
                row.particles.to_string(),
                num(row.mean),
                num(row.variance),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<convergence>", e))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ConvergenceCsvRow {
    pub algorithm: String,
    pub particles: usize,
    pub mean: f64,
    pub variance: f64,
}

pub fn read_convergence<R: Read>(r: R) -> Result<Vec<ConvergenceCsvRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}
