//! Parallel sweep of the top Lyapunov exponent over a `(b, α)` grid and
//! extraction of its zero contour.
//!
//! Each cell derives its seeds from `(seed0, i, j, r)` by SplitMix64, so the result
//! does not depend on how cells are scheduled across workers.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::lyapunov::{top_lyapunov, EstimateKind, LyapunovEstimate};
use crate::model::Params;
use crate::numerics::Numerics;
use crate::stats::{batch_means_ci, derive_seed, pairwise_sum};

/// An inclusive, evenly spaced axis `min:max:steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if steps < 2 && min != max {
            return Err(Error::InvalidArgument(format!("axis needs >= 2 steps, got {steps}")));
        }
        if steps == 0 || !(min.is_finite() && max.is_finite()) || max < min {
            return Err(Error::InvalidArgument(format!("bad axis {min}:{max}:{steps}")));
        }
        Ok(Self { min, max, steps })
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.steps == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("axis {s:?} is not min:max:steps")));
        }
        let min = crate::io::parse_f64(parts[0])?;
        let max = crate::io::parse_f64(parts[1])?;
        let steps = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("steps {:?}: {e}", parts[2])))?;
        Self::new(min, max, steps)
    }
}

/// Parse `b_min:b_max:steps,alpha_min:alpha_max:steps`.
pub fn parse_grid(s: &str) -> Result<(Axis, Axis)> {
    let (b, alpha) = s
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("grid {s:?} needs two comma-separated axes")))?;
    Ok((b.parse()?, alpha.parse()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub b: Axis,
    pub alpha: Axis,
    /// Supplies `a`, `β`, `σ`; its `α` and `b` are overwritten per cell.
    pub base: Params<f64>,
    pub horizon: f64,
    pub seeds: usize,
    pub seed0: u64,
    /// Horizon for cells re-run next to a sign change; `None` disables refinement.
    pub refine_horizon: Option<f64>,
    pub numerics: Numerics<f64>,
}

impl GridSpec {
    pub fn new(b: Axis, alpha: Axis, base: Params<f64>) -> Self {
        Self {
            b,
            alpha,
            base,
            horizon: 2e3,
            seeds: 4,
            seed0: 0,
            refine_horizon: Some(1e4),
            numerics: Numerics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.numerics.validate()?;
        if !(self.horizon > self.numerics.burn_in) {
            return Err(Error::InvalidArgument(format!(
                "cell horizon {} must exceed the burn-in {}",
                self.horizon, self.numerics.burn_in
            )));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("need at least one seed per cell".into()));
        }
        if let Some(t) = self.refine_horizon {
            if !(t > self.numerics.burn_in) {
                return Err(Error::InvalidArgument(format!("refine horizon {t} too short")));
            }
        }
        Ok(())
    }

    pub fn cell_params(&self, i: usize, j: usize) -> Params<f64> {
        self.base.with_alpha(self.alpha.value(i)).with_b(self.b.value(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub alpha: f64,
    pub b: f64,
    /// `None` when an integration blew up.
    pub estimate: Option<LyapunovEstimate>,
    pub refined: bool,
}

impl Cell {
    pub fn certified_sign(&self) -> Option<i8> {
        self.estimate.as_ref().and_then(LyapunovEstimate::certified_sign)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: GridSpec,
    /// Row-major: row `i` is `alpha.value(i)`, column `j` is `b.value(j)`.
    pub cells: Vec<Cell>,
    pub cpu_seconds: f64,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.spec.b.steps + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Cell]> {
        self.cells.chunks(self.spec.b.steps)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "alpha,b,lambda_top,ci,certified")?;
        for c in &self.cells {
            let (v, ci) = match &c.estimate {
                Some(e) => (e.value, e.ci_halfwidth),
                None => (f64::NAN, f64::NAN),
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(c.alpha),
                fmt_f64(c.b),
                fmt_f64(v),
                fmt_f64(ci),
                c.certified_sign().map_or(0, i32::from)
            )?;
        }
        Ok(())
    }

    /// Cells with `|b| ≤ κ` whose estimate is not negative.
    pub fn kappa_mismatches(&self) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| {
                let p = self.spec.base.with_alpha(c.alpha).with_b(c.b);
                match (p.kappa(), &c.estimate) {
                    (Ok(k), Some(e)) => c.b.abs() <= k && e.value >= 0.0,
                    _ => false,
                }
            })
            .map(|c| (c.alpha, c.b))
            .collect()
    }

    /// Cells whose `estimate − CI` exceeds the analytic upper bound.
    pub fn bound_violations(&self) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| {
                let p = self.spec.base.with_alpha(c.alpha).with_b(c.b);
                match (p.lyapunov_upper_bound(), &c.estimate) {
                    (Ok(u), Some(e)) => e.value - e.ci_halfwidth > u,
                    _ => false,
                }
            })
            .map(|c| (c.alpha, c.b))
            .collect()
    }
}

/// Pool the batch means of several runs into one estimate.
pub fn pool(estimates: &[LyapunovEstimate]) -> LyapunovEstimate {
    let means: Vec<f64> = estimates.iter().flat_map(|e| e.batch_means.iter().copied()).collect();
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let (_, ci) = batch_means_ci(&means);
    LyapunovEstimate {
        value: pairwise_sum(&values) / values.len() as f64,
        horizon: estimates.first().map_or(0.0, |e| e.horizon),
        sample_count: estimates.iter().map(|e| e.sample_count).sum(),
        ci_halfwidth: ci,
        kind: EstimateKind::Top,
        batch_means: means,
    }
}

fn run_cell(spec: &GridSpec, i: usize, j: usize, horizon: f64, pass: u64) -> Cell {
    let p = spec.cell_params(i, j);
    let runs: Result<Vec<LyapunovEstimate>> = (0..spec.seeds as u64)
        .map(|r| {
            let seed = derive_seed(spec.seed0, &[i as u64, j as u64, r, pass]);
            top_lyapunov(&p, seed, horizon, &spec.numerics)
        })
        .collect();
    Cell {
        alpha: p.alpha,
        b: p.b,
        estimate: runs.ok().map(|r| pool(&r)),
        refined: pass > 0,
    }
}

fn pool_for(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Cells adjacent (in `b`) to a sign change of the estimate, per row.
fn refinement_targets(cells: &[Cell], b_steps: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, row) in cells.chunks(b_steps).enumerate() {
        for j in 1..row.len() {
            if let (Some(x), Some(y)) = (&row[j - 1].estimate, &row[j].estimate) {
                if (x.value < 0.0) != (y.value < 0.0) {
                    out.push(i * b_steps + j - 1);
                    out.push(i * b_steps + j);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Estimate `λ_top` on every cell with `threads` workers (0 = all cores), then
/// re-run the cells bracketing sign changes at the refine horizon.
pub fn sweep_top_lyapunov(spec: &GridSpec, threads: usize) -> Result<SweepResult> {
    spec.validate()?;
    let started = Instant::now();
    let pool = pool_for(threads)?;
    let nb = spec.b.steps;
    let n = nb * spec.alpha.steps;
    let mut cells: Vec<Cell> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|c| run_cell(spec, c / nb, c % nb, spec.horizon, 0))
            .collect()
    });
    if let Some(t) = spec.refine_horizon {
        let targets = refinement_targets(&cells, nb);
        let redone: Vec<Cell> = pool.install(|| {
            targets
                .par_iter()
                .map(|&c| run_cell(spec, c / nb, c % nb, t, 1))
                .collect()
        });
        for (c, cell) in targets.into_iter().zip(redone) {
            cells[c] = cell;
        }
    }
    Ok(SweepResult {
        spec: spec.clone(),
        cells,
        cpu_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub b_star: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    /// True for a − → + change in `b`.
    pub rising: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourRow {
    pub alpha: f64,
    /// Empty means undetermined.
    pub crossings: Vec<Crossing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveEstimate {
    pub rows: Vec<ContourRow>,
}

impl CurveEstimate {
    pub fn row(&self, alpha: f64) -> Option<&ContourRow> {
        self.rows.iter().find(|r| (r.alpha - alpha).abs() < 1e-9)
    }

    pub fn undetermined(&self) -> usize {
        self.rows.iter().filter(|r| r.crossings.is_empty()).count()
    }

    /// `alpha,b_star,b_lo,b_hi`; undetermined rows carry `NaN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "alpha,b_star,b_lo,b_hi")?;
        for r in &self.rows {
            if r.crossings.is_empty() {
                writeln!(w, "{},NaN,NaN,NaN", fmt_f64(r.alpha))?;
            }
            for c in &r.crossings {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f64(r.alpha),
                    fmt_f64(c.b_star),
                    fmt_f64(c.b_lo),
                    fmt_f64(c.b_hi)
                )?;
            }
        }
        Ok(())
    }
}

/// Per row, interpolate linearly in `b` between consecutive certified cells of
/// opposite sign. Uncertified cells are skipped; every crossing is reported.
pub fn zero_contour(r: &SweepResult) -> CurveEstimate {
    let rows = r
        .rows()
        .map(|row| {
            let certified: Vec<(f64, f64)> = row
                .iter()
                .filter(|c| c.certified_sign().is_some())
                .map(|c| (c.b, c.estimate.as_ref().expect("certified").value))
                .collect();
            let crossings = certified
                .windows(2)
                .filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
                .map(|w| {
                    let ((b0, v0), (b1, v1)) = (w[0], w[1]);
                    Crossing {
                        b_star: b0 + (0.0 - v0) * (b1 - b0) / (v1 - v0),
                        b_lo: b0,
                        b_hi: b1,
                        rising: v0 < 0.0,
                    }
                })
                .collect();
            ContourRow { alpha: row[0].alpha, crossings }
        })
        .collect();
    CurveEstimate { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(values: &[(f64, f64)], alpha: f64) -> SweepResult {
        let spec = GridSpec::new(
            Axis::new(values[0].0, values[values.len() - 1].0, values.len()).unwrap(),
            Axis::new(alpha, alpha, 1).unwrap(),
            Params::unit(alpha, 0.0),
        );
        let cells = values
            .iter()
            .map(|&(b, v)| Cell {
                alpha,
                b,
                estimate: Some(LyapunovEstimate {
                    value: v,
                    horizon: 1.0,
                    sample_count: 1,
                    ci_halfwidth: 0.01,
                    kind: EstimateKind::Top,
                    batch_means: vec![],
                }),
                refined: false,
            })
            .collect();
        SweepResult { spec, cells, cpu_seconds: 0.0 }
    }

    #[test]
    fn linear_contour_is_exact() {
        let vals: Vec<(f64, f64)> = (0..11).map(|j| (j as f64, j as f64 - 5.5)).collect();
        let c = zero_contour(&synthetic(&vals, 1.0));
        let x = c.rows[0].crossings[0];
        assert!((x.b_star - 5.5).abs() < 1e-12);
        assert_eq!((x.b_lo, x.b_hi), (5.0, 6.0));
    }

    #[test]
    fn non_monotone_rows_report_all_crossings() {
        let vals = [(0.0, -1.0), (1.0, 1.0), (2.0, -1.0), (3.0, 1.0)];
        let c = zero_contour(&synthetic(&vals, 0.0));
        assert_eq!(c.rows[0].crossings.len(), 3);
        assert!(c.rows[0].crossings[0].rising && !c.rows[0].crossings[1].rising);
    }

    #[test]
    fn uncertified_cells_are_skipped() {
        let vals = [(0.0, -1.0), (1.0, 0.001), (2.0, 1.0)];
        let c = zero_contour(&synthetic(&vals, 0.0));
        let x = c.rows[0].crossings[0];
        assert_eq!((x.b_lo, x.b_hi), (0.0, 2.0));
        assert!((x.b_star - 1.0).abs() < 1e-12);
        let none = zero_contour(&synthetic(&[(0.0, -1.0), (1.0, -2.0)], 0.0));
        assert_eq!(none.undetermined(), 1);
    }

    #[test]
    fn grid_parsing() {
        let (b, a) = parse_grid("0:10:17,-2:2:17").unwrap();
        assert_eq!(b.steps, 17);
        assert_eq!(b.value(16), 10.0);
        assert_eq!(a.value(8), 0.0);
        assert!(parse_grid("0:10:17").is_err());
        assert!(parse_grid("0:10:1,0:1:2").is_err());
        assert!(parse_grid("a:1:2,0:1:2").is_err());
    }

    #[test]
    fn single_cell_is_one_pooled_call() {
        let mut spec = GridSpec::new(Axis::new(1.0, 1.0, 1).unwrap(), Axis::new(1.0, 1.0, 1).unwrap(), Params::unit(1.0, 1.0));
        spec.horizon = 20.0;
        spec.seeds = 1;
        spec.refine_horizon = None;
        spec.numerics = spec.numerics.with_burn_in(5.0);
        let r = sweep_top_lyapunov(&spec, 1).unwrap();
        let seed = derive_seed(0, &[0, 0, 0, 0]);
        let direct = top_lyapunov(&Params::unit(1.0, 1.0), seed, 20.0, &spec.numerics).unwrap();
        assert_eq!(r.cells[0].estimate.as_ref().unwrap().value, direct.value);
    }
}
