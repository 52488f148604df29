//! Time stepping: Euler–Maruyama for the SDE, Heun for the tangent flow, the
//! OU-conjugated random ODE and deterministic controlled systems.
//!
//! Every integrator takes a `t_span` that must lie on the noise grid; the
//! increments used are those of the global grid, so integrating `[s, t]` directly
//! or as `[s, u]` followed by `[u, t]` gives bit-identical states.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{Mat2, Qr};
use crate::model::{Params, State};
use crate::noise::{ou_process, ControlPath, Grid, Increments, WienerPath};
use crate::scalar::Scalar;

/// States with a larger norm are reported as a blow-up.
pub const BLOW_UP_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    OuConjugate,
    Controlled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub grid: Grid<S>,
    pub states: Vec<State<S>>,
    pub params: Params<S>,
    pub seed: Option<u64>,
    pub scheme: Scheme,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<S> {
        self.grid.times()
    }

    pub fn last(&self) -> State<S> {
        *self.states.last().expect("trajectory has at least one state")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,y")?;
        for (k, z) in self.states.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_f64(self.grid.time(k).as_f64()),
                fmt_f64(z.x.as_f64()),
                fmt_f64(z.y.as_f64())
            )?;
        }
        Ok(())
    }
}

/// `Φ(t)` on the trajectory grid, `Φ(t0) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFlow<S> {
    pub grid: Grid<S>,
    pub matrices: Vec<Mat2<S>>,
}

impl<S: Scalar> TangentFlow<S> {
    pub fn last(&self) -> Mat2<S> {
        *self.matrices.last().expect("tangent flow has at least one matrix")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,phi11,phi12,phi21,phi22")?;
        for (k, m) in self.matrices.iter().enumerate() {
            let [a, b, c, d] = m.m.map(|v| fmt_f64(v.as_f64()));
            writeln!(w, "{},{a},{b},{c},{d}", fmt_f64(self.grid.time(k).as_f64()))?;
        }
        Ok(())
    }
}

/// One Euler–Maruyama step `z + f(z) dt + σ ΔW`.
#[inline]
pub fn em_step<S: Scalar>(p: &Params<S>, z: State<S>, dt: S, dw: [S; 2]) -> State<S> {
    let f = p.drift(z);
    State::new(z.x + f.x * dt + p.sigma * dw[0], z.y + f.y * dt + p.sigma * dw[1])
}

/// Tolerance on the Euler–Maruyama energy error relative to the intrinsic rate
/// of the radial dynamics; see [`sde_step`].
pub const ENERGY_TOLERANCE: f64 = 5e-3;

const MAX_SUBSTEPS: usize = 1 << 10;

/// Euler–Maruyama over one grid step.
///
/// An explicit step of length `h` inflates `|z|²` by `h² ω² |z|²`, with
/// `ω = |f(z)|/|z|`. Under strong shear this spurious gain competes with the
/// cubic damping and at `dt = 1e-3`, `b = 20` it wins outright. The step is
/// therefore split into `m` equal sub-steps, the increment spread evenly over
/// them, with `m` the smallest count for which `h ω² ≤ 2 tol (|α| + a s + σ²/s)`.
/// For moderate parameters `m = 1` and this is exactly [`em_step`].
#[inline]
pub fn sde_step<S: Scalar>(p: &Params<S>, z: State<S>, dt: S, dw: [S; 2]) -> State<S> {
    let m = substeps(p, z, dt);
    if m == 1 {
        return em_step(p, z, dt, dw);
    }
    let k = S::lit(m as f64).recip();
    let (h, dw) = (dt * k, [dw[0] * k, dw[1] * k]);
    let mut z = z;
    for _ in 0..m {
        z = em_step(p, z, h, dw);
        if !z.norm_sq().is_finite() {
            break;
        }
    }
    z
}

/// Sub-step count used by [`sde_step`] at `z`.
pub fn substeps<S: Scalar>(p: &Params<S>, z: State<S>, dt: S) -> usize {
    let s = z.norm_sq().as_f64();
    if s == 0.0 {
        return 1;
    }
    let (alpha, a, sigma) = (p.alpha.as_f64(), p.a.as_f64(), p.sigma.as_f64());
    let w2 = (alpha - a * s).powi(2) + (p.beta.as_f64() + p.b.as_f64() * s).powi(2);
    let scale = alpha.abs() + a * s + sigma * sigma / s;
    let r = dt.as_f64() * w2 / (2.0 * ENERGY_TOLERANCE * scale);
    if !(r > 1.0) {
        1
    } else if r < MAX_SUBSTEPS as f64 {
        r.ceil() as usize
    } else {
        MAX_SUBSTEPS
    }
}

/// One Heun step of `Φ' = J(t) Φ` with `J` frozen at the two step endpoints.
#[inline]
pub fn heun_tangent<S: Scalar>(phi: Mat2<S>, j0: Mat2<S>, j1: Mat2<S>, dt: S) -> Mat2<S> {
    let k1 = j0 * phi;
    let k2 = j1 * (phi + k1.scale(dt));
    phi + (k1 + k2).scale(dt * S::lit(0.5))
}

#[inline]
pub(crate) fn guard<S: Scalar>(z: State<S>, t: S) -> Result<()> {
    let n = z.norm().as_f64();
    if n.is_finite() && n <= BLOW_UP_NORM {
        Ok(())
    } else {
        Err(Error::BlowUp { t: t.as_f64(), norm: n })
    }
}

/// Sub-grid and step range of `path` covering `t_span`.
pub fn window<S: Scalar, P: Increments<S>>(path: &P, t_span: (S, S)) -> Result<(Grid<S>, Range<usize>)> {
    let grid = *path.grid();
    let range = grid.span(t_span.0, t_span.1)?;
    Ok((grid.sub(range.start, range.len()), range))
}

/// Euler–Maruyama from `z0` over `t_span`, calling `visit(k, z_k)` for every grid
/// point of the window (`k = 0` is the initial state). Returns the final state.
pub fn sde_walk<S, P, F>(p: &Params<S>, path: &P, z0: State<S>, t_span: (S, S), mut visit: F) -> Result<State<S>>
where
    S: Scalar,
    P: Increments<S>,
    F: FnMut(usize, State<S>),
{
    let (grid, range) = window(path, t_span)?;
    let dt = grid.dt;
    let mut z = z0;
    guard(z, grid.t0)?;
    visit(0, z);
    for (k, dw) in path.increments_from(range.start).take(range.len()).enumerate() {
        z = sde_step(p, z, dt, dw);
        guard(z, grid.time(k + 1))?;
        visit(k + 1, z);
    }
    Ok(z)
}

pub fn integrate_sde<S: Scalar, P: Increments<S>>(
    p: &Params<S>,
    path: &P,
    z0: State<S>,
    t_span: (S, S),
) -> Result<Trajectory<S>> {
    let (grid, _) = window(path, t_span)?;
    let mut states = Vec::with_capacity(grid.steps + 1);
    sde_walk(p, path, z0, t_span, |_, z| states.push(z))?;
    Ok(Trajectory {
        grid,
        states,
        params: *p,
        seed: path.seed(),
        scheme: Scheme::EulerMaruyama,
    })
}

/// Heun integration of the variational equation along stored states.
pub fn integrate_variational<S: Scalar>(p: &Params<S>, traj: &Trajectory<S>) -> Result<TangentFlow<S>> {
    let dt = traj.grid.dt;
    let mut phi = Mat2::identity();
    let mut matrices = Vec::with_capacity(traj.len());
    matrices.push(phi);
    let mut j0 = p.jacobian(traj.states[0]);
    for k in 1..traj.len() {
        let j1 = p.jacobian(traj.states[k]);
        phi = heun_tangent(phi, j0, j1, dt);
        if !phi.is_finite() {
            return Err(Error::TangentBlowUp { t: traj.grid.time(k).as_f64() });
        }
        matrices.push(phi);
        j0 = j1;
    }
    Ok(TangentFlow { grid: traj.grid, matrices })
}

/// A renormalisation event: `R` factor of the block ending at step `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block<S> {
    /// Step index (relative to the window start) at which the block ends.
    pub end: usize,
    pub r11: S,
    pub r12: S,
    pub r22: S,
}

impl<S: Scalar> Block<S> {
    pub fn ln_r11(&self) -> f64 {
        self.r11.as_f64().ln()
    }

    pub fn ln_r22(&self) -> f64 {
        self.r22.as_f64().ln()
    }
}

/// Tangent propagation with QR renormalisation every `renorm_every` steps.
/// Feed it consecutive trajectory states through [`TangentStepper::advance`].
#[derive(Debug, Clone)]
pub struct TangentStepper<S> {
    params: Params<S>,
    dt: S,
    renorm_every: usize,
    phi: Mat2<S>,
    j: Mat2<S>,
    step: usize,
    since: usize,
}

impl<S: Scalar> TangentStepper<S> {
    pub fn new(p: &Params<S>, z0: State<S>, dt: S, renorm_every: usize) -> Result<Self> {
        if renorm_every == 0 {
            return Err(Error::InvalidArgument("renorm_every must be >= 1".into()));
        }
        Ok(Self {
            params: *p,
            dt,
            renorm_every,
            phi: Mat2::identity(),
            j: p.jacobian(z0),
            step: 0,
            since: 0,
        })
    }

    /// Orthonormal frame (or unnormalised product since the last renormalisation).
    pub fn phi(&self) -> Mat2<S> {
        self.phi
    }

    /// Propagate across one step ending at `z_next`; returns a block when the
    /// renormalisation period completes.
    #[inline]
    pub fn advance(&mut self, z_next: State<S>) -> Result<Option<Block<S>>> {
        let j1 = self.params.jacobian(z_next);
        self.phi = heun_tangent(self.phi, self.j, j1, self.dt);
        self.j = j1;
        self.step += 1;
        self.since += 1;
        if self.since == self.renorm_every {
            self.renormalize().map(Some)
        } else {
            Ok(None)
        }
    }

    /// Close a partial block, if any.
    pub fn finish(&mut self) -> Result<Option<Block<S>>> {
        if self.since == 0 {
            Ok(None)
        } else {
            self.renormalize().map(Some)
        }
    }

    fn renormalize(&mut self) -> Result<Block<S>> {
        let Qr { q, r11, r12, r22 } = self.phi.qr();
        self.since = 0;
        if !(r11 > S::zero() && r22 > S::zero() && r11.is_finite() && r22.is_finite() && r12.is_finite()) {
            return Err(Error::TangentBlowUp { t: self.step as f64 * self.dt.as_f64() });
        }
        self.phi = q;
        Ok(Block { end: self.step, r11, r12, r22 })
    }
}

/// Fused state + tangent integration over `t_span`. `visit(k, z_k, block)` is called
/// at every grid point, with `block` set when a renormalisation happened at `k`;
/// the last step always closes a block.
pub fn joint_walk<S, P, F>(
    p: &Params<S>,
    path: &P,
    z0: State<S>,
    t_span: (S, S),
    renorm_every: usize,
    mut visit: F,
) -> Result<State<S>>
where
    S: Scalar,
    P: Increments<S>,
    F: FnMut(usize, State<S>, Option<&Block<S>>),
{
    let (grid, range) = window(path, t_span)?;
    let dt = grid.dt;
    let last = range.len();
    let mut tangent = TangentStepper::new(p, z0, dt, renorm_every)?;
    let mut z = z0;
    guard(z, grid.t0)?;
    visit(0, z, None);
    for (k, dw) in path.increments_from(range.start).take(last).enumerate() {
        z = sde_step(p, z, dt, dw);
        guard(z, grid.time(k + 1))?;
        let mut block = tangent.advance(z)?;
        if block.is_none() && k + 1 == last {
            block = tangent.finish()?;
        }
        visit(k + 1, z, block.as_ref());
    }
    Ok(z)
}

/// Output of [`integrate_joint`].
#[derive(Debug, Clone, PartialEq)]
pub struct JointRun<S> {
    pub trajectory: Trajectory<S>,
    pub blocks: Vec<Block<S>>,
    /// `Σ ln r11`: growth of the first column of `Φ`.
    pub sum_ln_r11: f64,
    /// `Σ (ln r11 + ln r22) = ln det Φ`.
    pub sum_ln_det: f64,
}

pub fn integrate_joint<S: Scalar, P: Increments<S>>(
    p: &Params<S>,
    path: &P,
    z0: State<S>,
    t_span: (S, S),
    renorm_every: usize,
) -> Result<JointRun<S>> {
    let (grid, _) = window(path, t_span)?;
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut blocks = Vec::new();
    joint_walk(p, path, z0, t_span, renorm_every, |_, z, b| {
        states.push(z);
        if let Some(b) = b {
            blocks.push(*b);
        }
    })?;
    let r11: Vec<f64> = blocks.iter().map(Block::ln_r11).collect();
    let det: Vec<f64> = blocks.iter().map(|b| b.ln_r11() + b.ln_r22()).collect();
    Ok(JointRun {
        trajectory: Trajectory {
            grid,
            states,
            params: *p,
            seed: path.seed(),
            scheme: Scheme::EulerMaruyama,
        },
        blocks,
        sum_ln_r11: crate::stats::pairwise_sum(&r11),
        sum_ln_det: crate::stats::pairwise_sum(&det),
    })
}

/// Solve the conjugated random ODE `Ψ' = f(Ψ + σZ*) + cσZ*` by Heun (the first
/// stage sees `Z*_k`, the second `Z*_{k+1}`) and return `φ = Ψ + σZ*`.
/// `Z*` starts at zero at the window start, so `Ψ(t0) = z0`.
pub fn integrate_rde_ou<S: Scalar, P: Increments<S>>(
    p: &Params<S>,
    path: &P,
    c: S,
    z0: State<S>,
    t_span: (S, S),
) -> Result<Trajectory<S>> {
    let (grid, range) = window(path, t_span)?;
    let local = WienerPath::from_increments(grid, path.increments_from(range.start).take(range.len()).collect())?;
    let zstar = ou_process(&local, c, State::zero())?;
    let dt = grid.dt;
    let half = S::lit(0.5) * dt;
    let sigma = p.sigma;
    let g = |zs: State<S>, psi: State<S>| p.drift(psi + zs.scale(sigma)) + zs.scale(c * sigma);
    let mut psi = z0 - zstar[0].scale(sigma);
    let mut states = Vec::with_capacity(grid.steps + 1);
    states.push(psi + zstar[0].scale(sigma));
    for k in 0..grid.steps {
        let k1 = g(zstar[k], psi);
        let k2 = g(zstar[k + 1], psi + k1.scale(dt));
        psi += (k1 + k2).scale(half);
        let z = psi + zstar[k + 1].scale(sigma);
        guard(z, grid.time(k + 1))?;
        states.push(z);
    }
    Ok(Trajectory {
        grid,
        states,
        params: *p,
        seed: path.seed(),
        scheme: Scheme::OuConjugate,
    })
}

/// Heun for `z' = f(z) + σ ġ(t)` with `ġ` the forward difference of the control on
/// each step, followed by the tangent flow along the result.
pub fn integrate_controlled<S: Scalar>(
    p: &Params<S>,
    g: &ControlPath<S>,
    z0: State<S>,
    t_span: (S, S),
) -> Result<(Trajectory<S>, TangentFlow<S>)> {
    let range = g.grid.span(t_span.0, t_span.1)?;
    let grid = g.grid.sub(range.start, range.len());
    let dt = grid.dt;
    let half = S::lit(0.5) * dt;
    let mut z = z0;
    let mut states = Vec::with_capacity(grid.steps + 1);
    states.push(z);
    for (i, k) in range.enumerate() {
        let push = g.rate(k).scale(p.sigma);
        let k1 = p.drift(z) + push;
        let k2 = p.drift(z + k1.scale(dt)) + push;
        z += (k1 + k2).scale(half);
        guard(z, grid.time(i + 1))?;
        states.push(z);
    }
    let traj = Trajectory {
        grid,
        states,
        params: *p,
        seed: None,
        scheme: Scheme::Controlled,
    };
    let tangent = integrate_variational(p, &traj)?;
    Ok((traj, tangent))
}

/// `‖φ(t, ω, U) − φ(t, ω, V)‖` on the grid of `t_span`, both driven by `path`.
pub fn two_point_distance<S: Scalar, P: Increments<S>>(
    p: &Params<S>,
    path: &P,
    u: State<S>,
    v: State<S>,
    t_span: (S, S),
) -> Result<Vec<S>> {
    let (grid, range) = window(path, t_span)?;
    let dt = grid.dt;
    let (mut zu, mut zv) = (u, v);
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(zu.distance(zv));
    for (k, dw) in path.increments_from(range.start).take(range.len()).enumerate() {
        zu = sde_step(p, zu, dt, dw);
        zv = sde_step(p, zv, dt, dw);
        let t = grid.time(k + 1);
        guard(zu, t)?;
        guard(zv, t)?;
        out.push(zu.distance(zv));
    }
    Ok(out)
}

/// Advance every point of `states` across `t_span` under the common `path`.
pub fn flow_points<S: Scalar, P: Increments<S>>(
    p: &Params<S>,
    path: &P,
    states: &mut [State<S>],
    t_span: (S, S),
) -> Result<()> {
    const CHUNK: usize = 64;
    let (grid, range) = window(path, t_span)?;
    let dt = grid.dt;
    states.par_chunks_mut(CHUNK).try_for_each(|chunk| {
        for (k, dw) in path.increments_from(range.start).take(range.len()).enumerate() {
            for z in chunk.iter_mut() {
                *z = sde_step(p, *z, dt, dw);
            }
            if k % 256 == 255 || k + 1 == range.len() {
                let t = grid.time(k + 1);
                chunk.iter().try_for_each(|z| guard(*z, t))?;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, NoiseStream};

    fn unit(alpha: f64, b: f64) -> Params<f64> {
        Params::unit(alpha, b)
    }

    #[test]
    fn origin_is_fixed_without_noise() {
        let p = unit(1.0, 1.0).with_sigma(0.0);
        let path = sample_path(1, 0.0, 2.0, 1e-3).unwrap();
        let tr = integrate_sde(&p, &path, State::zero(), (0.0, 2.0)).unwrap();
        assert!(tr.states.iter().all(|z| *z == State::zero()));
        assert_eq!(tr.len(), 2001);
    }

    #[test]
    fn single_step_is_scheme_definition() {
        let p = unit(0.3, 2.0);
        let path = sample_path(3, 0.0, 1e-3, 1e-3).unwrap();
        let z0 = State::new(0.4, -0.7);
        let tr = integrate_sde(&p, &path, z0, (0.0, 1e-3)).unwrap();
        let dw = path.increments[0];
        let want = z0 + p.drift(z0).scale(1e-3) + State::from_array(dw).scale(p.sigma);
        assert_eq!(tr.states[1], want);
    }

    #[test]
    fn stable_origin_attracts() {
        let p = unit(-1.0, 2.0).with_sigma(0.0);
        let path = sample_path(1, 0.0, 20.0, 1e-3).unwrap();
        let tr = integrate_sde(&p, &path, State::new(1.5, -0.5), (0.0, 20.0)).unwrap();
        let norms: Vec<f64> = tr.states.iter().map(|z| z.norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        assert!(*norms.last().unwrap() < 1e-8);
    }

    #[test]
    fn subspan_uses_global_increments() {
        let p = unit(1.0, 3.0);
        let stream = NoiseStream::new(11, 0, -2.0, 3.0, 1e-3).unwrap();
        let whole = integrate_sde(&p, &stream, State::new(0.1, 0.2), (-2.0, 3.0)).unwrap();
        let first = integrate_sde(&p, &stream, State::new(0.1, 0.2), (-2.0, 0.5)).unwrap();
        let second = integrate_sde(&p, &stream, first.last(), (0.5, 3.0)).unwrap();
        assert_eq!(whole.last(), second.last());
        let path = stream.materialize();
        assert_eq!(integrate_sde(&p, &path, State::new(0.1, 0.2), (-2.0, 3.0)).unwrap().states, whole.states);
    }

    #[test]
    fn blow_up_is_reported() {
        let p = unit(1.0, 0.0).with_sigma(0.0);
        let path = sample_path(1, 0.0, 1.0, 0.5).unwrap();
        let err = integrate_sde(&p, &path, State::new(100.0, 0.0), (0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn frozen_linear_tangent() {
        let p = Params::new(-0.5, 2.0, 1.0, 1.0, 0.0).unwrap();
        let path = sample_path(1, 0.0, 3.0, 1e-3).unwrap();
        let tr = integrate_sde(&p, &path, State::zero(), (0.0, 3.0)).unwrap();
        let tf = integrate_variational(&p, &tr).unwrap();
        for (k, m) in tf.matrices.iter().enumerate().step_by(500) {
            let t: f64 = tf.grid.time(k);
            let exact = Mat2::rotation(2.0 * t).scale((-0.5 * t).exp());
            assert!((*m - exact).max_abs() < 2e-5, "t={t}");
            assert!((m.norm() - (-0.5 * t).exp()).abs() < 2e-5);
        }
    }

    #[test]
    fn joint_matches_variational_and_is_renorm_independent() {
        let p = unit(1.0, 4.0);
        let path = sample_path(5, 0.0, 5.0, 1e-3).unwrap();
        let z0 = State::new(0.8, 0.3);
        let tr = integrate_sde(&p, &path, z0, (0.0, 5.0)).unwrap();
        let phi = integrate_variational(&p, &tr).unwrap().last();
        let single = integrate_joint(&p, &path, z0, (0.0, 5.0), 5000).unwrap();
        assert_eq!(single.trajectory.states, tr.states);
        assert!((single.sum_ln_r11 - phi.column(0).norm().ln()).abs() < 1e-8);
        assert!((single.sum_ln_det - phi.det().ln()).abs() < 1e-8);
        for every in [1, 10, 100] {
            let run = integrate_joint(&p, &path, z0, (0.0, 5.0), every).unwrap();
            assert!((run.sum_ln_r11 - single.sum_ln_r11).abs() < 1e-6, "{every}");
            assert!((run.sum_ln_det - single.sum_ln_det).abs() < 1e-6, "{every}");
        }
    }

    #[test]
    fn joint_closes_partial_block() {
        let p = unit(0.5, 1.0);
        let path = sample_path(2, 0.0, 0.025, 1e-3).unwrap();
        let run = integrate_joint(&p, &path, State::new(0.1, 0.0), (0.0, 0.025), 10).unwrap();
        let ends: Vec<usize> = run.blocks.iter().map(|b| b.end).collect();
        assert_eq!(ends, vec![10, 20, 25]);
    }

    #[test]
    fn rde_without_noise_is_heun_ode() {
        let p = unit(1.0, 2.0).with_sigma(0.0);
        let path = sample_path(4, 0.0, 5.0, 1e-3).unwrap();
        let z0 = State::new(0.2, 0.1);
        let rde = integrate_rde_ou(&p, &path, 1.0, z0, (0.0, 5.0)).unwrap();
        let g = ControlPath::zero(Grid::new(0.0, 5.0, 1e-3).unwrap());
        let (ode, _) = integrate_controlled(&p, &g, z0, (0.0, 5.0)).unwrap();
        let gap = ode.states.iter().zip(&rde.states).map(|(a, b)| a.distance(*b)).fold(0.0, f64::max);
        assert!(gap < 1e-13, "{gap}");
        assert_eq!(rde.states[0], z0);
    }

    #[test]
    fn euler_gap_to_heun_is_first_order() {
        let p = unit(1.0, 2.0).with_sigma(0.0);
        let z0 = State::new(0.2, 0.1);
        let gap = |dt: f64| {
            let path = sample_path(4, 0.0, 5.0, dt).unwrap();
            let em = integrate_sde(&p, &path, z0, (0.0, 5.0)).unwrap();
            let rde = integrate_rde_ou(&p, &path, 1.0, z0, (0.0, 5.0)).unwrap();
            em.last().distance(rde.last())
        };
        let ratio = gap(2e-3) / gap(1e-3);
        assert!(ratio > 1.7 && ratio < 2.3, "{ratio}");
    }

    #[test]
    fn controlled_zero_is_deterministic_flow() {
        let p = unit(1.0, 1.0);
        let g = ControlPath::zero(Grid::new(0.0, 1.0, 1e-3).unwrap());
        let (tr, tf) = integrate_controlled(&p, &g, State::new(0.3, 0.0), (0.0, 1.0)).unwrap();
        let mut z = State::new(0.3, 0.0);
        for _ in 0..1000 {
            let k1 = p.drift(z);
            let k2 = p.drift(z + k1.scale(1e-3));
            z += (k1 + k2).scale(5e-4);
        }
        assert_eq!(tr.last(), z);
        assert!(tf.last().det() > 0.0);
    }

    #[test]
    fn equal_points_stay_together() {
        let p = unit(1.0, 8.0);
        let path = sample_path(9, 0.0, 2.0, 1e-3).unwrap();
        let d = two_point_distance(&p, &path, State::new(0.3, 0.3), State::new(0.3, 0.3), (0.0, 2.0)).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cloud_flow_matches_single_trajectories() {
        let p = unit(1.0, 3.0);
        let path = sample_path(6, -1.0, 0.0, 1e-3).unwrap();
        let mut pts: Vec<State<f64>> = (0..100).map(|i| State::new(i as f64 * 0.01, 0.5)).collect();
        let start = pts.clone();
        flow_points(&p, &path, &mut pts, (-1.0, 0.0)).unwrap();
        for (z0, z1) in start.iter().zip(&pts) {
            assert_eq!(integrate_sde(&p, &path, *z0, (-1.0, 0.0)).unwrap().last(), *z1);
        }
    }

    #[test]
    fn moderate_parameters_take_single_steps() {
        let p = unit(1.0, 1.0);
        for r in [0.1, 0.5, 1.0, 1.5, 2.0] {
            assert_eq!(substeps(&p, State::new(r, 0.0), 1e-3), 1, "r = {r}");
        }
        let z = State::new(0.7, -0.4);
        assert_eq!(sde_step(&p, z, 1e-3, [0.01, 0.02]), em_step(&p, z, 1e-3, [0.01, 0.02]));
    }

    #[test]
    fn strong_shear_is_substepped_and_stays_bounded() {
        let p = unit(-1.0, 20.0);
        assert!(substeps(&p, State::new(2.0, 0.0), 1e-3) > 10);
        // plain Euler–Maruyama spirals outward from here
        let mut plain = State::new(2.5, 0.0);
        let mut split = plain;
        for _ in 0..2000 {
            plain = em_step(&p, plain, 1e-3, [0.0, 0.0]);
            split = sde_step(&p, split, 1e-3, [0.0, 0.0]);
        }
        assert!(!(plain.norm() < 2.5));
        assert!(split.norm() < 1.0);
        let path = NoiseStream::new(1, 0, 0.0, 200.0, 1e-3).unwrap();
        let tr = integrate_sde(&p, &path, State::zero(), (0.0, 200.0)).unwrap();
        assert!(tr.states.iter().all(|z| z.norm() < 4.0));
    }
}
