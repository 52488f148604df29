//! Lyapunov exponent estimators: asymptotic top exponent and sum, finite-time
//! exponents and their ensembles, and the pullback proxy for the dichotomy
//! spectrum supremum.
//!
//! Asymptotic estimators start from a draw of the stationary law (by ergodicity any
//! such point is typical) and discard a burn-in before averaging. Confidence
//! intervals are 95% batch-means intervals over consecutive time batches.

use std::io::Write;

use rayon::prelude::*;

use crate::attractor::{sample_from_law, sample_stationary, RadialLaw};
use crate::error::{Error, Result};
use crate::flow::{guard, joint_walk, sde_step, sde_walk, TangentStepper};
use crate::io::fmt_f64;
use crate::linalg::Mat2;
use crate::model::{Params, State};
use crate::noise::{Increments, NoiseStream};
use crate::numerics::Numerics;
use crate::scalar::Scalar;
use crate::stats::{batch_means_ci, mean, pairwise_sum};

/// Pullback transient before the FTLE clock starts in the dichotomy proxy.
pub const PULLBACK_BURN_IN: f64 = 50.0;
/// Horizon cap for [`top_lyapunov_certified`].
pub const MAX_HORIZON: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Top,
    FtleSup,
    FtleInf,
    Sum,
    DichotomySup,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub horizon: f64,
    pub sample_count: usize,
    /// Half-width of the 95% interval (zero for extremal statistics).
    pub ci_halfwidth: f64,
    pub kind: EstimateKind,
    pub batch_means: Vec<f64>,
}

impl LyapunovEstimate {
    /// Sign of the value when the interval excludes zero.
    pub fn certified_sign(&self) -> Option<i8> {
        if self.value - self.ci_halfwidth > 0.0 {
            Some(1)
        } else if self.value + self.ci_halfwidth < 0.0 {
            Some(-1)
        } else {
            None
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.value - x).abs() <= self.ci_halfwidth
    }

    /// Single-line summary `value,ci,T,n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value,ci,T,n")?;
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(self.value),
            fmt_f64(self.ci_halfwidth),
            fmt_f64(self.horizon),
            self.sample_count
        )?;
        Ok(())
    }
}

/// Top exponent and exponent sum from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticRun {
    pub top: LyapunovEstimate,
    pub sum: LyapunovEstimate,
}

fn steps<S: Scalar>(t: S, dt: S) -> usize {
    (t / dt).round().to_usize().unwrap_or(0)
}

/// Run the fused integrator from `z0` on `[0, T]` with the noise of `seed` and
/// average the QR logs after the burn-in.
pub fn asymptotic_from<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    z0: State<S>,
    horizon: S,
    num: &Numerics<S>,
) -> Result<AsymptoticRun> {
    num.validate()?;
    let dt = num.dt;
    let total = steps(horizon, dt);
    let burn = steps(num.burn_in, dt);
    if total <= burn {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must exceed the burn-in {}",
            num.burn_in
        )));
    }
    let measured = total - burn;
    let batches = num.batches.min(measured);
    let t_end = S::lit(total as f64) * dt;
    let t_burn = S::lit(burn as f64) * dt;
    let stream = NoiseStream::new(seed, 0, S::zero(), t_end, dt)?;
    let z_burn = sde_walk(p, &stream, z0, (S::zero(), t_burn), |_, _| {})?;

    let mut top = vec![0.0; batches];
    let mut det = vec![0.0; batches];
    let mut duration = vec![0usize; batches];
    let mut prev_end = 0usize;
    joint_walk(p, &stream, z_burn, (t_burn, t_end), num.renorm_every, |_, _, block| {
        if let Some(b) = block {
            let i = ((b.end - 1) * batches / measured).min(batches - 1);
            let l11 = b.ln_r11();
            top[i] += l11;
            det[i] += l11 + b.ln_r22();
            duration[i] += b.end - prev_end;
            prev_end = b.end;
        }
    })?;
    let dt64 = dt.as_f64();
    let span = measured as f64 * dt64;
    let rate = |sums: &[f64]| -> Vec<f64> {
        sums.iter()
            .zip(&duration)
            .map(|(s, &d)| s / (d as f64 * dt64))
            .collect()
    };
    let estimate = |sums: &[f64], kind| {
        let means = rate(sums);
        let (_, ci) = batch_means_ci(&means);
        LyapunovEstimate {
            value: pairwise_sum(sums) / span,
            horizon: span,
            sample_count: measured,
            ci_halfwidth: ci,
            kind,
            batch_means: means,
        }
    };
    Ok(AsymptoticRun {
        top: estimate(&top, EstimateKind::Top),
        sum: estimate(&det, EstimateKind::Sum),
    })
}

fn stationary_start<S: Scalar>(p: &Params<S>, seed: u64) -> Result<State<S>> {
    Ok(sample_stationary(p, 1, seed)?.states[0])
}

fn start_from<S: Scalar>(law: &RadialLaw, seed: u64) -> State<S> {
    sample_from_law(law, 1, seed).states[0]
}

/// Top Lyapunov exponent from a stationary initial condition.
pub fn top_lyapunov<S: Scalar>(p: &Params<S>, seed: u64, horizon: S, num: &Numerics<S>) -> Result<LyapunovEstimate> {
    let z0 = stationary_start(p, seed)?;
    Ok(asymptotic_from(p, seed, z0, horizon, num)?.top)
}

pub fn top_lyapunov_from<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    z0: State<S>,
    horizon: S,
    num: &Numerics<S>,
) -> Result<LyapunovEstimate> {
    Ok(asymptotic_from(p, seed, z0, horizon, num)?.top)
}

/// Double the horizon from `horizon` until the interval excludes zero or the
/// horizon would pass [`MAX_HORIZON`]; the last estimate is returned either way.
pub fn top_lyapunov_certified<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    horizon: S,
    num: &Numerics<S>,
) -> Result<LyapunovEstimate> {
    let mut t = horizon;
    loop {
        let est = top_lyapunov(p, seed, t, num)?;
        let next = t * S::lit(2.0);
        if est.certified_sign().is_some() || next.as_f64() > MAX_HORIZON {
            return Ok(est);
        }
        t = next;
    }
}

/// `λ_Σ` from both QR diagonals.
pub fn lambda_sum_estimate<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    horizon: S,
    num: &Numerics<S>,
) -> Result<LyapunovEstimate> {
    let z0 = stationary_start(p, seed)?;
    Ok(asymptotic_from(p, seed, z0, horizon, num)?.sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtleSample<S> {
    pub seed: u64,
    pub initial: State<S>,
    pub horizon: f64,
    /// `(1/T) ln σ_max(Φ(T))`.
    pub sup_value: f64,
    /// `(1/T) ln σ_min(Φ(T))`.
    pub inf_value: f64,
    /// `ln det Φ(T)`.
    pub ln_det: f64,
}

/// Running product of the QR `R` factors, kept as
/// `e^{l11} · [[1, β], [0, e^{l22 − l11}]]` so that nothing overflows.
#[derive(Debug, Clone, Copy, Default)]
struct TriangularLog {
    l11: f64,
    l22: f64,
    beta: f64,
}

impl TriangularLog {
    fn push(&mut self, r11: f64, r12: f64, r22: f64) {
        // R_new = R_block · R_total; the ratio C/A of the old product is e^{l22 − l11}
        let rho = (self.l22 - self.l11).exp();
        self.beta += r12 / r11 * rho;
        self.l11 += r11.ln();
        self.l22 += r22.ln();
    }

    /// `(ln σ_max, ln σ_min)` of the product.
    fn ln_singular_values(&self) -> (f64, f64) {
        let rho = (self.l22 - self.l11).exp();
        let m = Mat2::new(1.0, self.beta, 0.0, rho);
        let hi = m.singular_values().0.ln();
        (self.l11 + hi, self.l22 - hi)
    }
}

/// Integrate state and tangent from `z0` over `[t0, t0 + T_max]` and report
/// `(ln σ_max, ln σ_min, ln det)` of `Φ` at each checkpoint step.
fn ftle_walk<S: Scalar, P: Increments<S>>(
    p: &Params<S>,
    path: &P,
    start: usize,
    z0: State<S>,
    checkpoints: &[usize],
    renorm_every: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    let grid = *path.grid();
    let dt = grid.dt;
    let last = *checkpoints.last().expect("at least one checkpoint");
    let mut tangent = TangentStepper::new(p, z0, dt, renorm_every)?;
    let mut acc = TriangularLog::default();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    let mut z = z0;
    for (k, dw) in path.increments_from(start).take(last).enumerate() {
        z = sde_step(p, z, dt, dw);
        guard(z, grid.time(start + k + 1))?;
        let mut block = tangent.advance(z)?;
        if k + 1 == checkpoints[next] && block.is_none() {
            block = tangent.finish()?;
        }
        if let Some(b) = block {
            acc.push(b.r11.as_f64(), b.r12.as_f64(), b.r22.as_f64());
        }
        while next < checkpoints.len() && k + 1 == checkpoints[next] {
            let (hi, lo) = acc.ln_singular_values();
            out.push((hi, lo, acc.l11 + acc.l22));
            next += 1;
        }
    }
    Ok(out)
}

fn check_horizons<S: Scalar>(list: &[S], num: &Numerics<S>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(list.len());
    for &t in list {
        let k = steps(t, num.dt);
        if !(t > S::zero()) || k == 0 {
            return Err(Error::InvalidArgument(format!("FTLE horizon must be > 0, got {t}")));
        }
        out.push(k);
    }
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("FTLE horizons must be increasing".into()));
    }
    Ok(out)
}

/// Finite-time exponent of `Φ(T)` along the path of `seed` started at `z0`.
pub fn ftle<S: Scalar>(p: &Params<S>, seed: u64, z0: State<S>, horizon: S, num: &Numerics<S>) -> Result<FtleSample<S>> {
    num.validate()?;
    let k = check_horizons(&[horizon], num)?[0];
    let t = k as f64 * num.dt.as_f64();
    let stream = NoiseStream::new(seed, 0, S::zero(), S::lit(k as f64) * num.dt, num.dt)?;
    let (hi, lo, ln_det) = ftle_walk(p, &stream, 0, z0, &[k], num.renorm_every)?[0];
    Ok(FtleSample { seed, initial: z0, horizon: t, sup_value: hi / t, inf_value: lo / t, ln_det })
}

/// `(1/T) ln σ` of a given matrix, for checking the SVD route.
pub fn ftle_of_matrix<S: Scalar>(phi: &Mat2<S>, horizon: f64) -> (f64, f64) {
    let (hi, lo) = phi.singular_values();
    (hi.as_f64().ln() / horizon, lo.as_f64().ln() / horizon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtleDistribution<S> {
    pub horizon: f64,
    pub samples: Vec<FtleSample<S>>,
    /// Seeds whose integration blew up.
    pub failures: Vec<u64>,
}

impl<S: Scalar> FtleDistribution<S> {
    pub fn sups(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.sup_value).collect()
    }

    pub fn mean_sup(&self) -> f64 {
        mean(&self.sups())
    }

    pub fn max_sup(&self) -> f64 {
        self.samples.iter().map(|s| s.sup_value).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn fraction_positive(&self) -> f64 {
        let n = self.samples.iter().filter(|s| s.sup_value > 0.0).count();
        n as f64 / self.samples.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed,T,ftle_sup,ftle_inf")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                s.seed,
                fmt_f64(s.horizon),
                fmt_f64(s.sup_value),
                fmt_f64(s.inf_value)
            )?;
        }
        Ok(())
    }
}

/// `n` FTLE samples with seeds `seed0..seed0+n` from stationary initial states.
pub fn ftle_distribution<S: Scalar>(
    p: &Params<S>,
    n: usize,
    horizon: S,
    seed0: u64,
    num: &Numerics<S>,
) -> Result<FtleDistribution<S>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1 samples".into()));
    }
    num.validate()?;
    let k = check_horizons(&[horizon], num)?[0];
    let law = RadialLaw::new(p)?;
    let results: Vec<(u64, Result<FtleSample<S>>)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed0.wrapping_add(i);
            let r = ftle(p, seed, start_from(&law, seed), horizon, num);
            (seed, r)
        })
        .collect();
    let mut samples = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(s) => samples.push(s),
            Err(e) if e.is_numeric() => failures.push(seed),
            Err(e) => return Err(e),
        }
    }
    Ok(FtleDistribution { horizon: k as f64 * num.dt.as_f64(), samples, failures })
}

/// For each horizon, the maximum FTLE over `n` samples whose clock starts after a
/// pullback transient of [`PULLBACK_BURN_IN`] time units.
pub fn dichotomy_sup_estimate<S: Scalar>(
    p: &Params<S>,
    n: usize,
    horizons: &[S],
    seed0: u64,
    num: &Numerics<S>,
) -> Result<Vec<LyapunovEstimate>> {
    if n == 0 || horizons.is_empty() {
        return Err(Error::InvalidArgument("need n >= 1 and at least one horizon".into()));
    }
    num.validate()?;
    let ks = check_horizons(horizons, num)?;
    let last = *ks.last().expect("non-empty");
    let burn = steps(S::lit(PULLBACK_BURN_IN), num.dt);
    let dt = num.dt;
    let t_burn = S::lit(burn as f64) * dt;
    let law = RadialLaw::new(p)?;
    let per_sample: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed0.wrapping_add(i);
            let z0 = start_from(&law, seed);
            let stream = NoiseStream::new(seed, 0, -t_burn, S::lit(last as f64) * dt, dt)?;
            let z = sde_walk(p, &stream, z0, (-t_burn, S::zero()), |_, _| {})?;
            let vals = ftle_walk(p, &stream, burn, z, &ks, num.renorm_every)?;
            Ok(vals
                .iter()
                .zip(&ks)
                .map(|((hi, _, _), &k)| hi / (k as f64 * dt.as_f64()))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| LyapunovEstimate {
            value: per_sample.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max),
            horizon: k as f64 * dt.as_f64(),
            sample_count: n,
            ci_halfwidth: 0.0,
            kind: EstimateKind::DichotomySup,
            batch_means: vec![],
        })
        .collect())
}

/// `T,max_ftle` rows for the dichotomy proxy.
pub fn write_dichotomy_csv<W: Write>(rows: &[LyapunovEstimate], mut w: W) -> Result<()> {
    writeln!(w, "T,max_ftle")?;
    for r in rows {
        writeln!(w, "{},{}", fmt_f64(r.horizon), fmt_f64(r.value))?;
    }
    Ok(())
}

/// `⟨Df(z) v, v⟩` for a unit vector `v`.
pub fn directional_growth<S: Scalar>(p: &Params<S>, z: State<S>, v: State<S>) -> Result<S> {
    if (v.norm().as_f64() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |v| = {}", v.norm())));
    }
    Ok(p.jacobian(z).quadratic_form(v))
}
