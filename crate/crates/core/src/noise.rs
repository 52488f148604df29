//! Brownian paths, the shift on path space, the Ornstein–Uhlenbeck auxiliary
//! process and deterministic steering paths.
//!
//! Gaussian increments come from a counter-based stream: ChaCha8 keyed by
//! `(seed, stream)` and positioned by the *global* grid index `round(t/dt)`, so a
//! path on `[-50, 5]` and a path on `[-5, 0]` drawn from the same key agree on
//! their overlap, and ensemble member `k` simply uses stream `k`.

use std::io::{BufRead, Write};
use std::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::model::{Params, State};
use crate::scalar::Scalar;

/// Relative tolerance for "lies on the grid" checks, in units of steps.
const GRID_TOL: f64 = 1e-9;
/// Offset applied to (possibly negative) global step indices before seeking.
const INDEX_OFFSET: i128 = 1 << 60;
/// ChaCha words consumed per step: two `u64` draws.
const WORDS_PER_STEP: i128 = 4;

fn near_integer(v: f64) -> Option<i64> {
    let r = v.round();
    if (v - r).abs() <= GRID_TOL * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

/// Uniform time grid `t_k = t0 + k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<S> {
    pub t0: S,
    pub dt: S,
    pub steps: usize,
    /// Global index `round(t0/dt)` of the first grid point.
    pub origin: i64,
}

impl<S: Scalar> Grid<S> {
    pub fn new(t0: S, t1: S, dt: S) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && dt.is_finite()) {
            return Err(Error::Grid("non-finite grid bounds".into()));
        }
        if dt <= S::zero() {
            return Err(Error::Grid(format!("dt must be > 0, got {dt}")));
        }
        if t1 <= t0 {
            return Err(Error::Grid(format!("need t1 > t0, got [{t0}, {t1}]")));
        }
        let n = ((t1 - t0) / dt).as_f64();
        let steps = near_integer(n)
            .ok_or_else(|| Error::Grid(format!("(t1 - t0)/dt = {n} is not an integer")))?;
        let origin = (t0 / dt).as_f64().round() as i64;
        Ok(Self { t0, dt, steps: steps as usize, origin })
    }

    pub fn from_steps(t0: S, dt: S, steps: usize) -> Self {
        let origin = (t0 / dt).as_f64().round() as i64;
        Self { t0, dt, steps, origin }
    }

    #[inline]
    pub fn time(&self, k: usize) -> S {
        self.t0 + S::lit(k as f64) * self.dt
    }

    pub fn t1(&self) -> S {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<S> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Grid index of time `t`; rejects off-grid or out-of-window times.
    pub fn index_of(&self, t: S) -> Result<usize> {
        let v = ((t - self.t0) / self.dt).as_f64();
        let k = near_integer(v).ok_or_else(|| Error::Grid(format!("t = {t} is not on the grid")))?;
        if k < 0 || k as usize > self.steps {
            return Err(Error::Grid(format!(
                "t = {t} outside [{}, {}]",
                self.t0,
                self.t1()
            )));
        }
        Ok(k as usize)
    }

    /// Step range covering `[t_start, t_end]`.
    pub fn span(&self, t_start: S, t_end: S) -> Result<Range<usize>> {
        let a = self.index_of(t_start)?;
        let b = self.index_of(t_end)?;
        if b < a {
            return Err(Error::Grid(format!("empty span [{t_start}, {t_end}]")));
        }
        Ok(a..b)
    }

    /// Sub-grid starting at step `start` with `steps` steps.
    pub fn sub(&self, start: usize, steps: usize) -> Self {
        Self {
            t0: self.time(start),
            dt: self.dt,
            steps,
            origin: self.origin + start as i64,
        }
    }
}

/// Sequential standard-normal pairs from the keyed counter-based stream.
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64, global_index: i64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let pos = WORDS_PER_STEP * (global_index as i128 + INDEX_OFFSET);
        rng.set_word_pos(pos as u128);
        Self { rng }
    }

    /// Box–Muller on two 53-bit uniforms; exactly two `u64` draws per call.
    #[inline]
    pub fn next_pair(&mut self) -> [f64; 2] {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) as f64 + 1.0) * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        [r * c, r * s]
    }
}

/// Source of two-component Brownian increments on a grid.
pub trait Increments<S: Scalar>: Sync {
    type Iter<'a>: Iterator<Item = [S; 2]>
    where
        Self: 'a;

    fn grid(&self) -> &Grid<S>;

    /// Increments `ΔW_k` for `k = start..grid.steps`.
    fn increments_from(&self, start: usize) -> Self::Iter<'_>;

    fn seed(&self) -> Option<u64> {
        None
    }
}

/// Increments generated on the fly; nothing is stored, so arbitrarily long horizons
/// cost O(1) memory. Bit-identical to the [`WienerPath`] with the same key and grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStream<S> {
    pub grid: Grid<S>,
    pub seed: u64,
    pub stream: u64,
}

impl<S: Scalar> NoiseStream<S> {
    pub fn new(seed: u64, stream: u64, t0: S, t1: S, dt: S) -> Result<Self> {
        Ok(Self { grid: Grid::new(t0, t1, dt)?, seed, stream })
    }

    pub fn materialize(&self) -> WienerPath<S> {
        WienerPath {
            grid: self.grid,
            seed: Some(self.seed),
            increments: self.increments_from(0).collect(),
        }
    }
}

pub struct StreamIter<S> {
    gen: GaussianStream,
    scale: f64,
    remaining: usize,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> Iterator for StreamIter<S> {
    type Item = [S; 2];

    #[inline]
    fn next(&mut self) -> Option<[S; 2]> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let [g1, g2] = self.gen.next_pair();
        Some([S::lit(g1 * self.scale), S::lit(g2 * self.scale)])
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl<S: Scalar> Increments<S> for NoiseStream<S> {
    type Iter<'a> = StreamIter<S>;

    fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    fn increments_from(&self, start: usize) -> StreamIter<S> {
        let start = start.min(self.grid.steps);
        StreamIter {
            gen: GaussianStream::new(self.seed, self.stream, self.grid.origin + start as i64),
            scale: self.grid.dt.as_f64().sqrt(),
            remaining: self.grid.steps - start,
            _marker: std::marker::PhantomData,
        }
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// A stored two-component Brownian path, kept as increments so that shifting is
/// exact. The path value at `t0` is the zero anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath<S> {
    pub grid: Grid<S>,
    pub seed: Option<u64>,
    pub increments: Vec<[S; 2]>,
}

/// Sample a path on `[t0, t1]` from stream 0 of `seed`.
pub fn sample_path<S: Scalar>(seed: u64, t0: S, t1: S, dt: S) -> Result<WienerPath<S>> {
    Ok(NoiseStream::new(seed, 0, t0, t1, dt)?.materialize())
}

impl<S: Scalar> WienerPath<S> {
    pub fn from_increments(grid: Grid<S>, increments: Vec<[S; 2]>) -> Result<Self> {
        if increments.len() != grid.steps {
            return Err(Error::Grid(format!(
                "{} increments for {} steps",
                increments.len(),
                grid.steps
            )));
        }
        Ok(Self { grid, seed: None, increments })
    }

    /// A path whose increments all vanish.
    pub fn zero(t0: S, t1: S, dt: S) -> Result<Self> {
        let grid = Grid::new(t0, t1, dt)?;
        Ok(Self { grid, seed: None, increments: vec![[S::zero(); 2]; grid.steps] })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Cumulative values `ω(t_k) − ω(t0)`, `k = 0..=steps`.
    pub fn values(&self) -> Vec<[S; 2]> {
        let mut acc = [S::zero(); 2];
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(acc);
        for d in &self.increments {
            acc = [acc[0] + d[0], acc[1] + d[1]];
            out.push(acc);
        }
        out
    }

    /// The path `θ_s ω : u ↦ ω(u + s) − ω(s)` on the part of `[t0, t1]` where it is
    /// defined, re-anchored to zero at its new start.
    pub fn shift(&self, s: S) -> Result<Self> {
        let k = near_integer((s / self.grid.dt).as_f64())
            .ok_or_else(|| Error::Grid(format!("shift {s} is not a multiple of dt")))?;
        let n = self.grid.steps as i64;
        if k.abs() >= n {
            return Err(Error::Grid(format!(
                "shift {s} leaves no overlap with [{}, {}]",
                self.grid.t0,
                self.grid.t1()
            )));
        }
        let kept = (n - k.abs()) as usize;
        let (start_time, slice) = if k >= 0 {
            (self.grid.t0, &self.increments[k as usize..])
        } else {
            (self.grid.t0 - s, &self.increments[..kept])
        };
        Ok(Self {
            grid: Grid::from_steps(start_time, self.grid.dt, kept),
            seed: self.seed,
            increments: slice.to_vec(),
        })
    }

    /// The same path restricted to `[t_start, t_end]` (times unchanged).
    pub fn restrict(&self, t_start: S, t_end: S) -> Result<Self> {
        let r = self.grid.span(t_start, t_end)?;
        if r.is_empty() {
            return Err(Error::Grid("empty restriction".into()));
        }
        Ok(Self {
            grid: self.grid.sub(r.start, r.len()),
            seed: self.seed,
            increments: self.increments[r].to_vec(),
        })
    }

    /// The same Brownian path seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.len() % factor != 0 {
            return Err(Error::Grid(format!(
                "cannot coarsen {} steps by {factor}",
                self.len()
            )));
        }
        let increments = self
            .increments
            .chunks_exact(factor)
            .map(|c| {
                c.iter()
                    .fold([S::zero(); 2], |acc, d| [acc[0] + d[0], acc[1] + d[1]])
            })
            .collect();
        Ok(Self {
            grid: Grid::from_steps(self.grid.t0, self.grid.dt * S::lit(factor as f64), self.len() / factor),
            seed: self.seed,
            increments,
        })
    }

    /// CSV dump: header `t,dW1,dW2`, one row per step (time at the step start).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# dt={}", fmt_f64(self.grid.dt.as_f64()))?;
        writeln!(w, "t,dW1,dW2")?;
        for (k, d) in self.increments.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.grid.time(k).as_f64()),
                fmt_f64(d[0].as_f64()),
                fmt_f64(d[1].as_f64())
            )?;
        }
        Ok(())
    }

    /// Inverse of [`Self::write_csv`]. `dt` is taken from a `# dt=` comment when
    /// present, otherwise from the spacing of the first two rows.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut dt: Option<f64> = None;
        let mut times = Vec::new();
        let mut increments = Vec::new();
        let mut header_seen = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for part in rest.split_whitespace() {
                    if let Some(v) = part.strip_prefix("dt=") {
                        dt = Some(parse_f64(v)?);
                    }
                }
                continue;
            }
            if !header_seen {
                if line != "t,dW1,dW2" {
                    return Err(Error::Parse(format!("unexpected header {line:?}")));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns in {line:?}")));
            }
            times.push(parse_f64(cols[0])?);
            increments.push([S::lit(parse_f64(cols[1])?), S::lit(parse_f64(cols[2])?)]);
        }
        if times.is_empty() {
            return Err(Error::Parse("path file has no rows".into()));
        }
        let dt = match dt {
            Some(dt) => dt,
            None if times.len() >= 2 => times[1] - times[0],
            None => return Err(Error::Parse("cannot infer dt from a single row".into())),
        };
        let grid = Grid::from_steps(S::lit(times[0]), S::lit(dt), times.len());
        Self::from_increments(grid, increments)
    }
}

pub struct SliceIter<'a, S>(std::slice::Iter<'a, [S; 2]>);

impl<S: Copy> Iterator for SliceIter<'_, S> {
    type Item = [S; 2];

    #[inline]
    fn next(&mut self) -> Option<[S; 2]> {
        self.0.next().copied()
    }
}

impl<S: Scalar> Increments<S> for WienerPath<S> {
    type Iter<'a> = SliceIter<'a, S>;

    fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    fn increments_from(&self, start: usize) -> SliceIter<'_, S> {
        SliceIter(self.increments[start.min(self.len())..].iter())
    }

    fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Exact-update discretisation of `dZ = −cZ dt + dW` driven by `path`:
/// `Z_{k+1} = e^{−c dt} Z_k + √((1 − e^{−2c dt})/(2c dt)) ΔW_k`.
pub fn ou_process<S: Scalar, P: Increments<S>>(path: &P, c: S, z_init: State<S>) -> Result<Vec<State<S>>> {
    if !(c > S::zero()) {
        return Err(Error::InvalidArgument(format!("OU rate c must be > 0, got {c}")));
    }
    let dt = path.grid().dt;
    let decay = (-c * dt).exp();
    let two_c_dt = S::lit(2.0) * c * dt;
    let innovation = ((S::one() - (-two_c_dt).exp()) / two_c_dt).sqrt();
    let mut z = z_init;
    let mut out = Vec::with_capacity(path.grid().steps + 1);
    out.push(z);
    for d in path.increments_from(0) {
        z = State::new(decay * z.x + innovation * d[0], decay * z.y + innovation * d[1]);
        out.push(z);
    }
    Ok(out)
}

/// Deterministic control path in `C_0`, sampled on a grid and linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath<S> {
    pub grid: Grid<S>,
    pub samples: Vec<State<S>>,
}

impl<S: Scalar> ControlPath<S> {
    pub fn new(grid: Grid<S>, samples: Vec<State<S>>) -> Result<Self> {
        if samples.len() != grid.steps + 1 {
            return Err(Error::Grid(format!(
                "{} samples for {} steps",
                samples.len(),
                grid.steps
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zero(grid: Grid<S>) -> Self {
        Self { grid, samples: vec![State::zero(); grid.steps + 1] }
    }

    pub fn value(&self, t: S) -> State<S> {
        let u = ((t - self.grid.t0) / self.grid.dt).max(S::zero());
        let k = u.floor().to_usize().unwrap_or(0).min(self.grid.steps);
        if k == self.grid.steps {
            return self.samples[k];
        }
        let w = u - S::lit(k as f64);
        self.samples[k] + (self.samples[k + 1] - self.samples[k]).scale(w)
    }

    /// Forward-difference rate `(g_{k+1} − g_k)/dt` on step `k`.
    #[inline]
    pub fn rate(&self, k: usize) -> State<S> {
        (self.samples[k + 1] - self.samples[k]).scale(self.grid.dt.recip())
    }
}

fn control_grid<S: Scalar>(horizon: S, dt: S) -> Result<Grid<S>> {
    if !(horizon > S::zero()) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {horizon}")));
    }
    Grid::new(S::zero(), horizon, dt)
}

/// `h(t) = −t f(z)/σ` on `[0, T]`: the control that freezes the state at `z`.
pub fn steering_path_hold<S: Scalar>(p: &Params<S>, z: State<S>, horizon: S, dt: S) -> Result<ControlPath<S>> {
    if !(p.sigma > S::zero()) {
        return Err(Error::ZeroNoise);
    }
    let grid = control_grid(horizon, dt)?;
    let slope = p.drift(z).scale(-p.sigma.recip());
    let samples = (0..=grid.steps)
        .map(|k| slope.scale(S::lit(k as f64) * dt))
        .collect();
    ControlPath::new(grid, samples)
}

/// `h(t) = (ψ(t) − x − ∫_0^t f(ψ)) / σ` with `ψ` the straight line from `x` to `y`
/// over `[0, t0]`; the integral uses the trapezoid rule on the grid.
pub fn steering_path_line<S: Scalar>(
    p: &Params<S>,
    x: State<S>,
    y: State<S>,
    t0: S,
    dt: S,
) -> Result<ControlPath<S>> {
    if !(p.sigma > S::zero()) {
        return Err(Error::ZeroNoise);
    }
    let grid = control_grid(t0, dt)?;
    let n = grid.steps;
    let psi = |k: usize| x + (y - x).scale(S::lit(k as f64) / S::lit(n as f64));
    let half_dt = S::lit(0.5) * dt;
    let inv_sigma = p.sigma.recip();
    let mut integral = State::zero();
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(State::zero());
    let mut f_prev = p.drift(psi(0));
    for k in 1..=n {
        let f_next = p.drift(psi(k));
        integral += (f_prev + f_next).scale(half_dt);
        samples.push((psi(k) - x - integral).scale(inv_sigma));
        f_prev = f_next;
    }
    ControlPath::new(grid, samples)
}
