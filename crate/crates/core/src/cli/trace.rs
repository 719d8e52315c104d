//! CSV convergence traces.
//!
//! Row 0 holds the initial controls; each later row is one accepted iteration.
//! A trailing `# status=... seed=... reference_cost=...` comment records how the
//! run ended and the cost used for `rel_subopt`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linesearch::{SolveTrace, Status};

pub const HEADER: [&str; 7] = [
    "iter",
    "cost",
    "rel_subopt",
    "stepsize",
    "regularization",
    "residual",
    "time_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub rel_subopt: f64,
    pub stepsize: f64,
    pub regularization: f64,
    pub residual: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub rows: Vec<TraceRow>,
    pub status: Status,
    pub seed: Option<u64>,
    /// Cost `J*` that `rel_subopt` is measured against.
    pub reference_cost: f64,
}

/// `(J - J*) / (J_0 - J*)`, or 0 when the initial cost is already at the reference.
pub fn rel_subopt(cost: f64, initial: f64, reference: f64) -> f64 {
    let gap = initial - reference;
    if gap > 0.0 {
        (cost - reference) / gap
    } else {
        0.0
    }
}

/// Shortest round-trip text for `x`, in exponent form for very small or large magnitudes.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

impl TraceFile {
    /// Builds the file from a solver trace. Without a finite initial cost there are no rows.
    pub fn from_trace(trace: &SolveTrace, reference_cost: f64, seed: Option<u64>) -> Self {
        let j0 = trace.initial_cost;
        let mut rows = Vec::with_capacity(trace.iterations.len() + 1);
        if j0.is_finite() {
            rows.push(TraceRow {
                iter: 0,
                cost: j0,
                rel_subopt: rel_subopt(j0, j0, reference_cost),
                stepsize: 0.0,
                regularization: 0.0,
                residual: trace.initial_residual,
                time_ms: 0.0,
            });
            rows.extend(trace.iterations.iter().map(|r| TraceRow {
                iter: r.iter,
                cost: r.cost,
                rel_subopt: rel_subopt(r.cost, j0, reference_cost),
                stepsize: r.stepsize,
                regularization: r.regularization,
                residual: r.residual,
                time_ms: r.time_ms,
            }));
        }
        Self {
            rows,
            status: trace.status,
            seed,
            reference_cost,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(HEADER).map_err(io_err)?;
            for r in &self.rows {
                w.write_record([
                    r.iter.to_string(),
                    format_f64(r.cost),
                    format_f64(r.rel_subopt),
                    format_f64(r.stepsize),
                    format_f64(r.regularization),
                    format_f64(r.residual),
                    format_f64(r.time_ms),
                ])
                .map_err(io_err)?;
            }
            w.flush()?;
        }
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        writeln!(
            out,
            "# status={} seed={} reference_cost={}",
            self.status,
            seed,
            format_f64(self.reference_cost)
        )?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Writes to `path` through a temporary file in the same directory, so
    /// readers never see a partial trace.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        self.write(tmp.as_file_mut())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parameter(format!("trace: {msg}"));
        let footer = text
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("# "))
            .ok_or_else(|| bad("missing status footer".into()))?;
        let (mut status, mut seed, mut reference) = (None, None, None);
        for item in footer.split_whitespace() {
            match item.split_once('=') {
                Some(("status", v)) => status = Some(v.parse::<Status>()?),
                Some(("seed", "none")) => seed = Some(None),
                Some(("seed", v)) => {
                    seed = Some(Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed `{v}`")))?))
                }
                Some(("reference_cost", v)) => {
                    reference = Some(v.parse::<f64>().map_err(|_| bad(format!("bad reference `{v}`")))?)
                }
                _ => return Err(bad(format!("unexpected footer item `{item}`"))),
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(io_err)?;
        if headers.iter().ne(HEADER) {
            return Err(bad(format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(io_err)?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("column {} is not numeric: `{}`", HEADER[i], &rec[i])))
            };
            rows.push(TraceRow {
                iter: rec[0].parse().map_err(|_| bad(format!("bad iteration `{}`", &rec[0])))?,
                cost: num(1)?,
                rel_subopt: num(2)?,
                stepsize: num(3)?,
                regularization: num(4)?,
                residual: num(5)?,
                time_ms: num(6)?,
            });
        }
        Ok(Self {
            rows,
            status: status.ok_or_else(|| bad("footer without status".into()))?,
            seed: seed.ok_or_else(|| bad("footer without seed".into()))?,
            reference_cost: reference.ok_or_else(|| bad("footer without reference_cost".into()))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linesearch::IterationRecord;

    fn record(iter: usize, cost: f64) -> IterationRecord {
        IterationRecord {
            iter,
            cost,
            stepsize: 0.5,
            regularization: 0.0,
            model_decrease: -1.0,
            bound: -0.5,
            decrease: -1.0,
            directional_derivative: -2.0,
            residual: 1e-3 / iter as f64,
            time_ms: iter as f64,
            accepted: true,
        }
    }

    #[test]
    fn round_trip() {
        let trace = SolveTrace {
            initial_cost: 4.0,
            initial_residual: 1.0,
            iterations: vec![record(1, 2.5), record(2, 0.1 + 0.2)],
            status: Status::Converged,
        };
        let mut trace = trace;
        trace.iterations[0].residual = 1.234e-300;
        let file = TraceFile::from_trace(&trace, 0.1 + 0.2, Some(9));
        assert_eq!(file.rows.len(), 3);
        assert_eq!(file.rows[2].rel_subopt, 0.0);
        let text = file.to_csv();
        assert!(text.starts_with("iter,cost,rel_subopt,stepsize,regularization,residual,time_ms\n"));
        assert_eq!(TraceFile::parse(&text).unwrap(), file);
    }

    #[test]
    fn rejects_missing_footer() {
        assert!(TraceFile::parse("iter,cost,rel_subopt,stepsize,regularization,residual,time_ms\n").is_err());
    }
}
