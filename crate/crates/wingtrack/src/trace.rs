//! Time-indexed episode logs and their CSV persistence.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One simulation step worth of logged signals and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub c: f64,
    pub u_total: DVector<f64>,
    pub reference: f64,
    pub error: f64,
    pub gamma_hat: f64,
    pub xi_hat: f64,
    /// Tracker gain row, newest-error coefficient first.
    pub tracker_gain: Vec<f64>,
    /// Optimizer gain, row-major.
    pub optimizer_gain: Vec<f64>,
    /// Upper triangle of the tracker kernel, row-major.
    pub tracker_kernel_ut: Vec<f64>,
    /// Upper triangle of the optimizer kernel, row-major.
    pub optimizer_kernel_ut: Vec<f64>,
}

/// Episode metadata carried alongside the records (persisted in the JSON
/// report, not in the CSV).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub mode: String,
    pub seed: u64,
    pub config_digest: String,
    pub ts: f64,
    /// First step at which the kernel-change test stayed below epsilon for
    /// the full confirmation window, if it ever did.
    pub epsilon_fired_step: Option<usize>,
}

/// Full per-episode log: one record per simulation step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningTrace {
    pub meta: TraceMeta,
    pub records: Vec<StepRecord>,
}

impl Default for StepRecord {
    fn default() -> Self {
        Self {
            t: 0.0,
            x: DVector::zeros(0),
            u: DVector::zeros(0),
            c: 0.0,
            u_total: DVector::zeros(0),
            reference: 0.0,
            error: 0.0,
            gamma_hat: 0.0,
            xi_hat: 0.0,
            tracker_gain: Vec::new(),
            optimizer_gain: Vec::new(),
            tracker_kernel_ut: Vec::new(),
            optimizer_kernel_ut: Vec::new(),
        }
    }
}

impl LearningTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }

    fn dims(&self) -> TraceDims {
        match self.records.first() {
            Some(r) => TraceDims {
                n: r.x.len(),
                m: r.u.len(),
                tracker_gain: r.tracker_gain.len(),
                optimizer_gain: r.optimizer_gain.len(),
                tracker_kernel: r.tracker_kernel_ut.len(),
                optimizer_kernel: r.optimizer_kernel_ut.len(),
            },
            // Header layout for the flexible-wing problem when there is
            // nothing to infer from.
            None => TraceDims {
                n: 5,
                m: 1,
                tracker_gain: 3,
                optimizer_gain: 5,
                tracker_kernel: 10,
                optimizer_kernel: 21,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TraceDims {
    n: usize,
    m: usize,
    tracker_gain: usize,
    optimizer_gain: usize,
    tracker_kernel: usize,
    optimizer_kernel: usize,
}

impl TraceDims {
    fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.n).map(|i| format!("x{i}")));
        if self.m == 1 {
            cols.push("u".into());
        } else {
            cols.extend((1..=self.m).map(|i| format!("u{i}")));
        }
        cols.push("c".into());
        if self.m == 1 {
            cols.push("u_total".into());
        } else {
            cols.extend((1..=self.m).map(|i| format!("u_total{i}")));
        }
        cols.extend(["reference", "error", "gamma_hat", "xi_hat"].map(String::from));
        cols.extend((1..=self.tracker_gain).map(|i| format!("tracker_gain{i}")));
        cols.extend((1..=self.optimizer_gain).map(|i| format!("optimizer_gain{i}")));
        cols.extend((1..=self.tracker_kernel).map(|i| format!("tracker_kernel{i}")));
        cols.extend((1..=self.optimizer_kernel).map(|i| format!("optimizer_kernel{i}")));
        cols.join(",")
    }

    fn columns(&self) -> usize {
        1 + self.n
            + self.m
            + 1
            + self.m
            + 4
            + self.tracker_gain
            + self.optimizer_gain
            + self.tracker_kernel
            + self.optimizer_kernel
    }
}

/// 17 significant digits: exact round trip through decimal text.
fn fmt(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Writes the trace as CSV with a fixed column order and round-trip-exact
/// float rendering.
pub fn write_trace(trace: &LearningTrace, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dims = trace.dims();
    writeln!(file, "{}", dims.header())?;
    let mut row: Vec<String> = Vec::with_capacity(dims.columns());
    for r in &trace.records {
        row.clear();
        row.push(fmt(r.t));
        row.extend(r.x.iter().map(|&v| fmt(v)));
        row.extend(r.u.iter().map(|&v| fmt(v)));
        row.push(fmt(r.c));
        row.extend(r.u_total.iter().map(|&v| fmt(v)));
        row.push(fmt(r.reference));
        row.push(fmt(r.error));
        row.push(fmt(r.gamma_hat));
        row.push(fmt(r.xi_hat));
        row.extend(r.tracker_gain.iter().map(|&v| fmt(v)));
        row.extend(r.optimizer_gain.iter().map(|&v| fmt(v)));
        row.extend(r.tracker_kernel_ut.iter().map(|&v| fmt(v)));
        row.extend(r.optimizer_kernel_ut.iter().map(|&v| fmt(v)));
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::TraceParse {
        line,
        what: format!("bad float {s:?}: {e}"),
    })
}

/// Reads a CSV trace written by [`write_trace`]. Metadata is not stored in
/// the CSV and comes back defaulted.
pub fn read_trace(path: &Path) -> Result<LearningTrace> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or(Error::TraceParse {
            line: 1,
            what: "missing header".into(),
        })??;
    let names: Vec<&str> = header.split(',').collect();
    let count = |prefix: &str| names.iter().filter(|n| n.starts_with(prefix) && n[prefix.len()..].chars().all(|c| c.is_ascii_digit()) && n.len() > prefix.len()).count();
    let n = count("x");
    let m = if names.contains(&"u") { 1 } else { count("u") };
    let dims = TraceDims {
        n,
        m,
        tracker_gain: count("tracker_gain"),
        optimizer_gain: count("optimizer_gain"),
        tracker_kernel: count("tracker_kernel"),
        optimizer_kernel: count("optimizer_kernel"),
    };
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dims.columns() {
            return Err(Error::TraceParse {
                line: line_no,
                what: format!("expected {} columns, got {}", dims.columns(), fields.len()),
            });
        }
        let mut it = fields.iter();
        let mut take = |k: usize| -> Result<Vec<f64>> {
            (0..k)
                .map(|_| parse_field(it.next().unwrap(), line_no))
                .collect()
        };
        let t = take(1)?[0];
        let x = DVector::from_vec(take(dims.n)?);
        let u = DVector::from_vec(take(dims.m)?);
        let c = take(1)?[0];
        let u_total = DVector::from_vec(take(dims.m)?);
        let rest = take(4)?;
        let (reference, error, gamma_hat, xi_hat) = (rest[0], rest[1], rest[2], rest[3]);
        records.push(StepRecord {
            t,
            x,
            u,
            c,
            u_total,
            reference,
            error,
            gamma_hat,
            xi_hat,
            tracker_gain: take(dims.tracker_gain)?,
            optimizer_gain: take(dims.optimizer_gain)?,
            tracker_kernel_ut: take(dims.tracker_kernel)?,
            optimizer_kernel_ut: take(dims.optimizer_kernel)?,
        });
    }
    Ok(LearningTrace {
        meta: TraceMeta::default(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_record(rng: &mut StdRng, t: f64) -> StepRecord {
        StepRecord {
            t,
            x: DVector::from_fn(5, |_, _| rng.gen_range(-50.0..50.0)),
            u: DVector::from_fn(1, |_, _| rng.gen_range(-5.0..5.0)),
            c: rng.gen_range(-5.0..5.0),
            u_total: DVector::from_fn(1, |_, _| rng.gen_range(-5.0..5.0)),
            reference: rng.gen_range(-25.0..25.0),
            error: rng.gen_range(-25.0..25.0),
            gamma_hat: rng.gen_range(0.0..1e6),
            xi_hat: rng.gen_range(0.0..1e3),
            tracker_gain: (0..3).map(|_| rng.gen_range(-100.0..100.0)).collect(),
            optimizer_gain: (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            tracker_kernel_ut: (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            optimizer_kernel_ut: (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn empty_trace_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_trace(&LearningTrace::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("t,x1,"));
    }

    #[test]
    fn one_step_trace_is_two_lines() {
        let mut rng = StdRng::seed_from_u64(1);
        let trace = LearningTrace {
            meta: TraceMeta::default(),
            records: vec![random_record(&mut rng, 0.0)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        write_trace(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = StdRng::seed_from_u64(99);
        let trace = LearningTrace {
            meta: TraceMeta::default(),
            records: (0..50).map(|k| random_record(&mut rng, k as f64 * 0.001)).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_trace(&trace, &path).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back.records, trace.records);
    }
}
