//! Cross-check of published reference measurements against [`mflops`] and
//! [`speedup`].
//!
//! Runtimes and derived values in the reference are printed with two
//! decimals. Each cell is therefore checked twice: against the fixed
//! relative tolerance, and for whether any runtime and reference value
//! inside their rounding intervals agree at all. A cell outside tolerance
//! that no rounding can explain is [`Verdict::Flagged`] as inconsistent.

use std::fmt;

use super::{mflops, speedup, BenchError, BenchRecord, Model};

/// Reference dimensions.
pub const DIMS: [usize; 4] = [100, 500, 1000, 2000];

/// Wall time in seconds per dimension, in seq, threads, msg order.
pub const RUNTIME: [[f64; 3]; 4] = [
    [0.03, 0.02, 0.33],
    [2.09, 1.11, 1.52],
    [22.52, 14.36, 8.19],
    [240.97, 163.6, 60.19],
];

/// MFLOPS per dimension, in seq, threads, msg order.
pub const THROUGHPUT: [[f64; 3]; 4] = [
    [59.08, 86.82, 6.07],
    [119.54, 224.35, 164.85],
    [88.77, 139.17, 244.17],
    [8.91, 13.17, 265.77],
];

/// Speedup per dimension, threads then msg.
pub const SPEEDUP: [[f64; 2]; 4] = [[1.47, 0.1], [1.88, 1.38], [1.57, 2.75], [1.47, 4.0]];

pub const THROUGHPUT_TOLERANCE: f64 = 0.01;
pub const SPEEDUP_TOLERANCE: f64 = 0.02;

/// Half a unit in the last printed decimal.
const HALF_ULP: f64 = 0.005;

/// Worker counts of the reference setup.
const WORKERS: [usize; 3] = [1, 2, 2];

/// The reference runtimes as paired records.
pub fn reference_records() -> Vec<BenchRecord> {
    let mut out = Vec::new();
    for (i, &n) in DIMS.iter().enumerate() {
        let t_seq = RUNTIME[i][0];
        for (j, model) in Model::ALL.into_iter().enumerate() {
            out.push(
                BenchRecord::new(model, n, WORKERS[j], RUNTIME[i][j])
                    .and_then(|r| r.paired(t_seq))
                    .expect("reference runtimes are positive"),
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Throughput,
    Speedup,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Metric::Throughput => "mflops",
            Metric::Speedup => "speedup",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Within tolerance.
    Pass,
    /// Outside tolerance, and no rounding of the inputs reproduces it.
    Flagged,
    /// Outside tolerance although some rounding of the inputs reproduces it.
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCell {
    pub metric: Metric,
    pub model: Model,
    pub n: usize,
    pub reference: f64,
    pub recomputed: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    /// Whether the recomputed interval (runtimes +/- half a printed unit)
    /// overlaps the reference interval.
    pub rounding_consistent: bool,
    pub verdict: Verdict,
}

impl GoldenCell {
    fn new(
        metric: Metric,
        model: Model,
        n: usize,
        reference: f64,
        recomputed: f64,
        tolerance: f64,
        (lo, hi): (f64, f64),
    ) -> Self {
        let rel_err = ((recomputed - reference) / reference).abs();
        let rounding_consistent = lo <= reference + HALF_ULP && hi >= reference - HALF_ULP;
        let verdict = if rel_err <= tolerance {
            Verdict::Pass
        } else if rounding_consistent {
            Verdict::Fail
        } else {
            Verdict::Flagged
        };
        Self {
            metric,
            model,
            n,
            reference,
            recomputed,
            rel_err,
            tolerance,
            rounding_consistent,
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenReport {
    pub cells: Vec<GoldenCell>,
}

impl GoldenReport {
    pub fn flagged(&self) -> impl Iterator<Item = &GoldenCell> {
        self.cells.iter().filter(|c| c.verdict == Verdict::Flagged)
    }

    pub fn failed(&self) -> impl Iterator<Item = &GoldenCell> {
        self.cells.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    /// No cell failed outright.
    pub fn is_ok(&self) -> bool {
        self.failed().next().is_none()
    }
}

impl fmt::Display for GoldenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:<8} {:>5} {:>10} {:>11} {:>8} {:>6} {:>9}  verdict",
            "metric", "model", "n", "reference", "recomputed", "rel_err", "tol", "rounding"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<8} {:<8} {:>5} {:>10.2} {:>11.4} {:>7.2}% {:>5.0}% {:>9}  {:?}",
                c.metric,
                c.model,
                c.n,
                c.reference,
                c.recomputed,
                c.rel_err * 100.0,
                c.tolerance * 100.0,
                if c.rounding_consistent { "ok" } else { "no" },
                c.verdict
            )?;
        }
        let flagged = self.flagged().count();
        let failed = self.failed().count();
        write!(
            f,
            "{} cells: {} pass, {} flagged inconsistent, {} fail",
            self.cells.len(),
            self.cells.len() - flagged - failed,
            flagged,
            failed
        )
    }
}

fn mflops_range(n: usize, t: f64) -> Result<(f64, f64), BenchError> {
    Ok((mflops(n as u64, t + HALF_ULP)?, mflops(n as u64, t - HALF_ULP)?))
}

fn speedup_range(t_seq: f64, t_par: f64) -> Result<(f64, f64), BenchError> {
    Ok((
        speedup(t_seq - HALF_ULP, t_par + HALF_ULP)?,
        speedup(t_seq + HALF_ULP, t_par - HALF_ULP)?,
    ))
}

/// Recomputes every throughput cell from the runtimes and every speedup
/// cell from the runtime pairs.
pub fn golden_check() -> Result<GoldenReport, BenchError> {
    let mut cells = Vec::new();
    for (i, &n) in DIMS.iter().enumerate() {
        for (j, model) in Model::ALL.into_iter().enumerate() {
            let t = RUNTIME[i][j];
            cells.push(GoldenCell::new(
                Metric::Throughput,
                model,
                n,
                THROUGHPUT[i][j],
                mflops(n as u64, t)?,
                THROUGHPUT_TOLERANCE,
                mflops_range(n, t)?,
            ));
        }
    }
    for (i, &n) in DIMS.iter().enumerate() {
        let t_seq = RUNTIME[i][0];
        for (j, model) in [Model::Threads, Model::Msg].into_iter().enumerate() {
            let t_par = RUNTIME[i][j + 1];
            cells.push(GoldenCell::new(
                Metric::Speedup,
                model,
                n,
                SPEEDUP[i][j],
                speedup(t_seq, t_par)?,
                SPEEDUP_TOLERANCE,
                speedup_range(t_seq, t_par)?,
            ));
        }
    }
    Ok(GoldenReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(report: &GoldenReport, metric: Metric, model: Model, n: usize) -> GoldenCell {
        report
            .cells
            .iter()
            .find(|c| c.metric == metric && c.model == model && c.n == n)
            .cloned()
            .unwrap()
    }

    #[test]
    fn twenty_cells() {
        let r = golden_check().unwrap();
        assert_eq!(r.cells.len(), 20);
    }

    #[test]
    fn large_n_seq_and_threads_are_flagged() {
        let r = golden_check().unwrap();
        let flagged: Vec<_> = r.flagged().map(|c| (c.metric, c.model, c.n)).collect();
        assert_eq!(
            flagged,
            [
                (Metric::Throughput, Model::Seq, 2000),
                (Metric::Throughput, Model::Threads, 2000)
            ]
        );
        let seq = cell(&r, Metric::Throughput, Model::Seq, 2000);
        assert!((seq.recomputed - 66.38).abs() < 0.01, "{}", seq.recomputed);
        let thr = cell(&r, Metric::Throughput, Model::Threads, 2000);
        assert!((thr.recomputed - 97.78).abs() < 0.01, "{}", thr.recomputed);
    }

    #[test]
    fn mid_range_cells_pass() {
        let r = golden_check().unwrap();
        for c in &r.cells {
            if c.n == 500 || c.n == 1000 {
                assert_eq!(c.verdict, Verdict::Pass, "{c:?}");
            }
        }
        let msg = cell(&r, Metric::Throughput, Model::Msg, 2000);
        assert_eq!(msg.verdict, Verdict::Pass);
        let s = cell(&r, Metric::Speedup, Model::Msg, 2000);
        assert!((s.recomputed - 4.0035).abs() < 1e-3);
    }

    #[test]
    fn every_cell_but_two_is_rounding_consistent() {
        let r = golden_check().unwrap();
        let inconsistent = r.cells.iter().filter(|c| !c.rounding_consistent).count();
        assert_eq!(inconsistent, 2);
    }

    #[test]
    fn reference_records_pair_speedups() {
        let recs = reference_records();
        assert_eq!(recs.len(), 12);
        let msg = recs.iter().find(|r| r.model == Model::Msg && r.n == 2000).unwrap();
        assert!((msg.speedup.unwrap() - 240.97 / 60.19).abs() < 1e-12);
    }

    #[test]
    fn report_renders_summary() {
        let text = golden_check().unwrap().to_string();
        assert!(text.contains("2 flagged inconsistent"));
        assert!(text.lines().count() >= 22);
    }
}
