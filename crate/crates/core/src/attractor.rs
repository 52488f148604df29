//! Pullback clouds, synchronisation diagnostics, random-equilibrium estimates and
//! sampling from the stationary law.
//!
//! Under the stationary law `s = x² + y²` is a normal variable with mean `α/a` and
//! standard deviation `σ/√a` conditioned on `s ≥ 0`; the angle is uniform.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{flow_points, sde_walk, two_point_distance};
use crate::io::fmt_f64;
use crate::model::{Params, State};
use crate::noise::NoiseStream;
use crate::numerics::Numerics;
use crate::scalar::Scalar;
use crate::special::ln_gaussian_tail;
use crate::stats::derive_seed;

/// ChaCha stream used for initial conditions, kept apart from the noise (stream 0).
const SAMPLER_STREAM: u64 = 1;
/// ChaCha stream for random point pairs.
const PAIR_STREAM: u64 = 2;
const TABLE_NODES: usize = 10_000;
const TAIL_MASS: f64 = 1e-12;
/// Clouds up to this size get the plain pairwise diameter.
const PAIRWISE_LIMIT: usize = 2048;
/// Default cloud size for equilibrium estimates.
pub const EQUILIBRIUM_POINTS: usize = 32;
/// Distances below this are treated as numerically merged.
pub const MERGED_DISTANCE: f64 = 1e-12;

/// Stationary law of `s = |z|²` with a tabulated inverse CDF.
#[derive(Debug, Clone)]
pub struct RadialLaw {
    mean: f64,
    scale: f64,
    ln_tail0: f64,
    s_max: f64,
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl RadialLaw {
    pub fn new<S: Scalar>(p: &Params<S>) -> Result<Self> {
        p.validate()?;
        if !(p.sigma > S::zero()) {
            return Err(Error::ZeroNoise);
        }
        let (alpha, a, sigma) = (p.alpha.as_f64(), p.a.as_f64(), p.sigma.as_f64());
        let mean = alpha / a;
        let scale = sigma / a.sqrt();
        let ln_tail0 = ln_gaussian_tail(-mean / scale);
        let mut law = Self { mean, scale, ln_tail0, s_max: 0.0, nodes: vec![], cdf: vec![] };
        let mut hi = mean.max(0.0) + 10.0 * scale;
        while law.survival(hi) >= TAIL_MASS {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if law.survival(mid) >= TAIL_MASS {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        law.s_max = hi;
        law.nodes = (0..TABLE_NODES)
            .map(|i| hi * i as f64 / (TABLE_NODES - 1) as f64)
            .collect();
        law.cdf = law.nodes.iter().map(|&s| law.cdf(s)).collect();
        Ok(law)
    }

    /// `P(S > s)`.
    pub fn survival(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        (ln_gaussian_tail((s - self.mean) / self.scale) - self.ln_tail0).exp()
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        -(ln_gaussian_tail((s - self.mean) / self.scale) - self.ln_tail0).exp_m1()
    }

    /// Upper end of the table; the mass beyond it is below 1e-12.
    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// Inverse CDF by linear interpolation in the table.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u);
        if i == 0 {
            return 0.0;
        }
        if i >= self.cdf.len() {
            return self.s_max;
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.nodes[i - 1] + w * (self.nodes[i] - self.nodes[i - 1])
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let s = self.quantile(rng.random::<f64>());
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let r = s.sqrt();
        (r * theta.cos(), r * theta.sin())
    }
}

/// A finite set of states observed at one time under one noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud<S> {
    pub states: Vec<State<S>>,
    pub time: S,
    pub seed: Option<u64>,
}

impl<S: Scalar> Cloud<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest pairwise distance (exact).
    pub fn diameter(&self) -> S {
        diameter(&self.states)
    }

    pub fn centroid(&self) -> State<S> {
        let n = S::lit(self.states.len() as f64);
        let sx: S = self.states.iter().map(|z| z.x).sum();
        let sy: S = self.states.iter().map(|z| z.y).sum();
        State::new(sx / n, sy / n)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y")?;
        for z in &self.states {
            writeln!(w, "{},{}", fmt_f64(z.x.as_f64()), fmt_f64(z.y.as_f64()))?;
        }
        Ok(())
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull vertices (Andrew's monotone chain), in counter-clockwise order.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

fn max_pairwise(points: &[(f64, f64)]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    best
}

/// Largest pairwise distance. Large sets are reduced to their convex hull first,
/// which contains both ends of every diameter.
pub fn diameter<S: Scalar>(states: &[State<S>]) -> S {
    let pts: Vec<(f64, f64)> = states.iter().map(|z| (z.x.as_f64(), z.y.as_f64())).collect();
    let d = if pts.len() <= PAIRWISE_LIMIT {
        max_pairwise(&pts)
    } else {
        max_pairwise(&convex_hull(&pts))
    };
    S::lit(d)
}

/// `n` independent draws from the stationary law, reproducible from `seed`.
pub fn sample_stationary<S: Scalar>(p: &Params<S>, n: usize, seed: u64) -> Result<Cloud<S>> {
    let law = RadialLaw::new(p)?;
    Ok(sample_from_law(&law, n, seed))
}

/// [`sample_stationary`] with a prebuilt law, for ensembles that draw many clouds.
pub fn sample_from_law<S: Scalar>(law: &RadialLaw, n: usize, seed: u64) -> Cloud<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLER_STREAM);
    let states = (0..n)
        .map(|_| {
            let (x, y) = law.sample(&mut rng);
            State::new(S::lit(x), S::lit(y))
        })
        .collect();
    Cloud { states, time: S::zero(), seed: Some(seed) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    /// Pullback time: the cloud was started at `−horizon` and flowed to 0.
    pub horizon: S,
    pub diameter: S,
    pub cloud: Cloud<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackResult<S> {
    pub initial: Cloud<S>,
    /// In increasing order of horizon; the last one is the full horizon.
    pub checkpoints: Vec<Checkpoint<S>>,
    pub synchronised: bool,
    pub sync_epsilon: S,
}

impl<S: Scalar> PullbackResult<S> {
    pub fn final_cloud(&self) -> &Cloud<S> {
        &self.checkpoints.last().expect("at least one checkpoint").cloud
    }

    pub fn final_diameter(&self) -> S {
        self.checkpoints.last().expect("at least one checkpoint").diameter
    }

    pub fn write_checkpoints_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "checkpoint_T,diameter")?;
        for c in &self.checkpoints {
            writeln!(w, "{},{}", fmt_f64(c.horizon.as_f64()), fmt_f64(c.diameter.as_f64()))?;
        }
        Ok(())
    }
}

/// Flow the same stationary-sampled cloud from `−T_c` to 0 for every checkpoint
/// `T_c ≤ T` (and for `T` itself) under one path.
pub fn pullback_cloud<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    horizon: S,
    n: usize,
    checkpoints: &[S],
    num: &Numerics<S>,
) -> Result<PullbackResult<S>> {
    let initial = sample_stationary(p, n, seed)?;
    pullback_from(p, seed, &initial, S::zero(), horizon, checkpoints, num)
}

/// Like [`pullback_cloud`] with an explicit initial cloud and end time `t_end`.
pub fn pullback_from<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    initial: &Cloud<S>,
    t_end: S,
    horizon: S,
    checkpoints: &[S],
    num: &Numerics<S>,
) -> Result<PullbackResult<S>> {
    num.validate()?;
    if initial.is_empty() {
        return Err(Error::InvalidArgument("cloud needs at least one point".into()));
    }
    let horizon = num.snap(horizon);
    if !(horizon > S::zero()) {
        return Err(Error::InvalidArgument(format!("pullback time must be > 0, got {horizon}")));
    }
    let mut times: Vec<S> = checkpoints
        .iter()
        .map(|&c| num.snap(c))
        .filter(|&c| c > S::zero() && c < horizon)
        .collect();
    times.push(horizon);
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite checkpoints"));
    times.dedup();
    let stream = NoiseStream::new(seed, 0, t_end - horizon, t_end, num.dt)?;
    let mut out = Vec::with_capacity(times.len());
    for &c in &times {
        let mut states = initial.states.clone();
        flow_points(p, &stream, &mut states, (t_end - c, t_end))?;
        let cloud = Cloud { states, time: t_end, seed: Some(seed) };
        out.push(Checkpoint { horizon: c, diameter: cloud.diameter(), cloud });
    }
    let synchronised = out.last().map(|c| c.diameter < num.sync_epsilon).unwrap_or(false);
    Ok(PullbackResult {
        initial: initial.clone(),
        checkpoints: out,
        synchronised,
        sync_epsilon: num.sync_epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium<S> {
    pub point: State<S>,
    pub diameter: S,
    pub horizon: S,
    pub time: S,
}

/// Centroid of a collapsed 32-point pullback cloud ending at 0.
pub fn random_equilibrium_point<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    horizon: S,
    num: &Numerics<S>,
) -> Result<Equilibrium<S>> {
    random_equilibrium_at(p, seed, seed, S::zero(), horizon, num)
}

/// Estimate `A(θ_t ω)` for the path keyed by `seed`, from a cloud drawn with
/// `cloud_seed`, pulled back over `[t_end − T, t_end]`.
pub fn random_equilibrium_at<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    cloud_seed: u64,
    t_end: S,
    horizon: S,
    num: &Numerics<S>,
) -> Result<Equilibrium<S>> {
    let initial = sample_stationary(p, EQUILIBRIUM_POINTS, cloud_seed)?;
    let res = pullback_from(p, seed, &initial, t_end, horizon, &[], num)?;
    let cloud = res.final_cloud();
    let diameter = res.final_diameter();
    if !(diameter < num.sync_epsilon) {
        return Err(Error::NotCollapsed {
            diameter: diameter.as_f64(),
            epsilon: num.sync_epsilon.as_f64(),
        });
    }
    Ok(Equilibrium { point: cloud.centroid(), diameter, horizon: num.snap(horizon), time: t_end })
}

/// Least-squares slope of `ln d(t)` for two points under one path, fitted while
/// `1e-12 ≤ d(t) ≤ d(0)` (up to the first merge).
pub fn synchronisation_rate<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    u: State<S>,
    v: State<S>,
    horizon: S,
    num: &Numerics<S>,
) -> Result<S> {
    if u == v {
        return Err(Error::InvalidArgument("synchronisation rate needs U != V".into()));
    }
    let horizon = num.snap(horizon);
    let stream = NoiseStream::new(seed, 0, S::zero(), horizon, num.dt)?;
    let d = two_point_distance(p, &stream, u, v, (S::zero(), horizon))?;
    let d0 = d[0].as_f64();
    let min = d.iter().fold(f64::INFINITY, |m, x| m.min(x.as_f64()));
    if !(min < 0.5 * d0) {
        return Err(Error::NoDecay);
    }
    let dt = num.dt.as_f64();
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, dk) in d.iter().enumerate() {
        let dk = dk.as_f64();
        if dk < MERGED_DISTANCE {
            break;
        }
        if dk > d0 {
            continue;
        }
        let t = k as f64 * dt;
        let y = dk.ln();
        n += 1.0;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    if n < 2.0 || denom <= 0.0 {
        return Err(Error::NoDecay);
    }
    Ok(S::lit((n * sty - st * sy) / denom))
}

/// Worst ratio `d(t) / (e^{αt} d(0))` over the grid for one pair, minus one.
pub fn contraction_margin<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    u: State<S>,
    v: State<S>,
    horizon: S,
    num: &Numerics<S>,
) -> Result<f64> {
    let horizon = num.snap(horizon);
    let stream = NoiseStream::new(seed, 0, S::zero(), horizon, num.dt)?;
    let d = two_point_distance(p, &stream, u, v, (S::zero(), horizon))?;
    let d0 = d[0].as_f64();
    if d0 == 0.0 {
        return Ok(if d.iter().all(|x| *x == S::zero()) { -1.0 } else { f64::INFINITY });
    }
    let alpha = p.alpha.as_f64();
    let dt = num.dt.as_f64();
    Ok(d.iter()
        .enumerate()
        .map(|(k, dk)| dk.as_f64() / (d0 * (alpha * k as f64 * dt).exp()) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `d(t)/(e^{αt}d(0)) − 1` over all trials and grid times.
    pub worst_margin: f64,
    /// Relative slack allowed before a trial counts as a violation.
    pub tolerance: f64,
    /// Seeds of the violating trials.
    pub violating_seeds: Vec<u64>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Random pair for trial `seed`: both points uniform on `[−2, 2]²`.
pub fn random_pair<S: Scalar>(seed: u64) -> (State<S>, State<S>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PAIR_STREAM);
    let mut draw = || S::lit(4.0 * rng.random::<f64>() - 2.0);
    let u = State::new(draw(), draw());
    let v = State::new(draw(), draw());
    (u, v)
}

/// Check `d(t) ≤ e^{αt} d(0) (1 + 1e-6)` on `trials` random (seed, U, V).
pub fn uniform_contraction_check<S: Scalar>(
    p: &Params<S>,
    trials: usize,
    horizon: S,
    seed0: u64,
    num: &Numerics<S>,
) -> Result<ContractionReport> {
    const TOL: f64 = 1e-6;
    let margins = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(seed0, &[i]);
            let (u, v) = random_pair::<S>(seed);
            contraction_margin(p, seed, u, v, horizon, num).map(|m| (seed, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let violating_seeds: Vec<u64> = margins.iter().filter(|(_, m)| *m > TOL).map(|(s, _)| *s).collect();
    Ok(ContractionReport {
        trials,
        violations: violating_seeds.len(),
        worst_margin: margins.iter().map(|(_, m)| *m).fold(f64::NEG_INFINITY, f64::max),
        tolerance: TOL,
        violating_seeds,
    })
}

/// Histogram of `s = |z|²` along one trajectory against the stationary law.
/// Bins span `[0, s_hi]` with `s_hi` the 1 − 1e-4 quantile; mass beyond `s_hi` is
/// tracked separately and enters the L1 distance.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialHistogram {
    pub edges: Vec<f64>,
    /// Fraction of samples per bin.
    pub empirical: Vec<f64>,
    /// Stationary probability per bin.
    pub analytic: Vec<f64>,
    pub empirical_outside: f64,
    pub analytic_outside: f64,
    pub samples: usize,
}

impl RadialHistogram {
    /// `Σ |p̂_i − p_i|` including the overflow cell.
    pub fn l1(&self) -> f64 {
        let inside: f64 = self.empirical.iter().zip(&self.analytic).map(|(e, a)| (e - a).abs()).sum();
        inside + (self.empirical_outside - self.analytic_outside).abs()
    }

    /// L1 distance between the empirical parts of two histograms on the same bins.
    pub fn l1_to(&self, other: &Self) -> Result<f64> {
        if self.edges != other.edges {
            return Err(Error::InvalidArgument("histograms have different bins".into()));
        }
        let inside: f64 = self.empirical.iter().zip(&other.empirical).map(|(a, b)| (a - b).abs()).sum();
        Ok(inside + (self.empirical_outside - other.empirical_outside).abs())
    }

    /// Densities (mass / width) per bin.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s_lo,s_hi,empirical,analytic")?;
        for i in 0..self.empirical.len() {
            let (lo, hi) = (self.edges[i], self.edges[i + 1]);
            let width = hi - lo;
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(lo),
                fmt_f64(hi),
                fmt_f64(self.empirical[i] / width),
                fmt_f64(self.analytic[i] / width)
            )?;
        }
        Ok(())
    }
}

pub fn empirical_radial_density<S: Scalar>(
    p: &Params<S>,
    seed: u64,
    horizon: S,
    bins: usize,
    num: &Numerics<S>,
) -> Result<RadialHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    num.validate()?;
    let horizon = num.snap(horizon);
    if !(horizon > num.burn_in) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must exceed the burn-in {}",
            num.burn_in
        )));
    }
    let law = RadialLaw::new(p)?;
    let mut s_hi = law.s_max();
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + s_hi);
        if law.survival(mid) > 1e-4 {
            lo = mid;
        } else {
            s_hi = mid;
        }
    }
    let width = s_hi / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    let analytic: Vec<f64> = edges.windows(2).map(|e| law.cdf(e[1]) - law.cdf(e[0])).collect();
    let mut counts = vec![0u64; bins];
    let mut outside = 0u64;
    let mut samples = 0usize;
    let z0 = sample_stationary(p, 1, seed)?.states[0];
    let start = (num.burn_in / num.dt).round().to_usize().unwrap_or(0);
    let stream = NoiseStream::new(seed, 0, S::zero(), horizon, num.dt)?;
    sde_walk(p, &stream, z0, (S::zero(), horizon), |k, z| {
        if k < start {
            return;
        }
        samples += 1;
        let s = z.norm_sq().as_f64();
        let i = (s / width) as usize;
        if i < bins {
            counts[i] += 1;
        } else {
            outside += 1;
        }
    })?;
    let total = samples as f64;
    Ok(RadialHistogram {
        analytic_outside: law.survival(s_hi),
        edges,
        empirical: counts.iter().map(|&c| c as f64 / total).collect(),
        analytic,
        empirical_outside: outside as f64 / total,
        samples,
    })
}
