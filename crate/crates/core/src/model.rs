//! The Hopf normal form with additive noise: vector field, Jacobian and the
//! closed-form stationary quantities.
//!
//! The drift is `f(Z) = A Z − |Z|² B Z` with
//! `A = [[α, −β], [β, α]]` and `B = [[a, b], [−b, a]]`; this is the shear sign
//! convention under which [`Params::jacobian`] is the exact derivative of the drift.
//! Every statistic of the stochastic system is invariant under `b → −b`.
//!
//! The stationary density is `p(x, y) = K exp((2α s − a s²) / (2σ²))` with
//! `s = x² + y²`, and `K` is the constant that makes it integrate to one.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{ln_erfc, ln_gaussian_tail};

pub use crate::linalg::{Mat2, State};

/// The five model constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params<S> {
    /// Linear stability at the origin.
    pub alpha: S,
    /// Rotation rate.
    pub beta: S,
    /// Radial nonlinearity, `a > 0`.
    pub a: S,
    /// Shear strength.
    pub b: S,
    /// Noise amplitude, `σ ≥ 0`.
    pub sigma: S,
}

impl<S: Scalar> Params<S> {
    pub fn new(alpha: S, beta: S, a: S, b: S, sigma: S) -> Result<Self> {
        let p = Self { alpha, beta, a, b, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.alpha, self.beta, self.a, self.b, self.sigma];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.a <= S::zero() {
            return Err(Error::InvalidParams(format!("a must be > 0, got {}", self.a)));
        }
        if self.sigma < S::zero() {
            return Err(Error::InvalidParams(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn with_alpha(mut self, alpha: S) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_b(mut self, b: S) -> Self {
        self.b = b;
        self
    }

    pub fn with_sigma(mut self, sigma: S) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn cast<T: Scalar>(&self) -> Params<T> {
        Params {
            alpha: T::lit(self.alpha.as_f64()),
            beta: T::lit(self.beta.as_f64()),
            a: T::lit(self.a.as_f64()),
            b: T::lit(self.b.as_f64()),
            sigma: T::lit(self.sigma.as_f64()),
        }
    }

    fn require_noise(&self) -> Result<()> {
        if self.sigma > S::zero() {
            Ok(())
        } else {
            Err(Error::ZeroNoise)
        }
    }

    #[inline]
    pub fn drift(&self, z: State<S>) -> State<S> {
        let s = z.norm_sq();
        let (x, y) = (z.x, z.y);
        State::new(
            self.alpha * x - self.beta * y - s * (self.a * x + self.b * y),
            self.beta * x + self.alpha * y - s * (self.a * y - self.b * x),
        )
    }

    #[inline]
    pub fn jacobian(&self, z: State<S>) -> Mat2<S> {
        let (x, y) = (z.x, z.y);
        let (a, b) = (self.a, self.b);
        let two = S::lit(2.0);
        let three = S::lit(3.0);
        let xx = x * x;
        let yy = y * y;
        let xy = x * y;
        Mat2::new(
            self.alpha - a * yy - three * a * xx - two * b * xy,
            -self.beta - two * a * xy - b * xx - three * b * yy,
            self.beta - two * a * xy + b * yy + three * b * xx,
            self.alpha - a * xx - three * a * yy + two * b * xy,
        )
    }

    /// Largest eigenvalue of the symmetric part of `Df(z)`, i.e. `max_{|r|=1} ⟨Df(z) r, r⟩`.
    pub fn lambda_plus(&self, z: State<S>) -> S {
        self.jacobian(z).symmetric_eigenvalues().1
    }

    /// Smallest eigenvalue of the symmetric part of `Df(z)`.
    pub fn lambda_minus(&self, z: State<S>) -> S {
        self.jacobian(z).symmetric_eigenvalues().0
    }

    /// Upper bound `α + (√(a²+b²) − 2a)|z|²` on [`Self::lambda_plus`], tight when `xy = 0`.
    pub fn lambda_plus_bound(&self, z: State<S>) -> S {
        self.alpha + (self.a.hypot(self.b) - S::lit(2.0) * self.a) * z.norm_sq()
    }

    /// Lower bound `α − 4a|z|²` on [`Self::lambda_minus`].
    pub fn lambda_minus_bound(&self, z: State<S>) -> S {
        self.alpha - S::lit(4.0) * self.a * z.norm_sq()
    }

    fn f64s(&self) -> (f64, f64, f64) {
        (self.alpha.as_f64(), self.a.as_f64(), self.sigma.as_f64())
    }

    /// `ln K` for the normalised stationary density.
    pub fn ln_normalization_constant(&self) -> Result<f64> {
        self.require_noise()?;
        let (alpha, a, sigma) = self.f64s();
        Ok(0.5 * (2.0 * a).ln() - alpha * alpha / (2.0 * a * sigma * sigma)
            - 1.5 * PI.ln()
            - sigma.ln()
            - ln_erfc(-alpha / (sigma * (2.0 * a).sqrt())))
    }

    /// `K = √(2a) exp(−α²/(2aσ²)) / (π^{3/2} σ erfc(−α/(σ√(2a))))`.
    pub fn normalization_constant(&self) -> Result<S> {
        Ok(S::lit(self.ln_normalization_constant()?.exp()))
    }

    /// The constant `2√(2a) / (√π σ erfc(−α/√(2aσ²)))` as printed in the literature.
    /// It normalises the density to `2π exp(α²/(2aσ²))` instead of one and is kept
    /// only so that `verify` can report the discrepancy.
    pub fn literature_normalization_constant(&self) -> Result<f64> {
        self.require_noise()?;
        let (alpha, a, sigma) = self.f64s();
        let ln = (2.0 * (2.0 * a).sqrt()).ln()
            - 0.5 * PI.ln()
            - sigma.ln()
            - ln_erfc(-alpha / (2.0 * a * sigma * sigma).sqrt());
        Ok(ln.exp())
    }

    /// Exponent `(2α s − a s²)/(2σ²)` of the density as a function of `s = |z|²`.
    pub fn density_exponent(&self, s: f64) -> f64 {
        let (alpha, a, sigma) = self.f64s();
        (2.0 * alpha * s - a * s * s) / (2.0 * sigma * sigma)
    }

    pub fn stationary_density(&self, z: State<S>) -> Result<S> {
        let ln_k = self.ln_normalization_constant()?;
        Ok(S::lit((ln_k + self.density_exponent(z.norm_sq().as_f64())).exp()))
    }

    /// Density of `s = x² + y²` under the stationary law: `π p(√s, 0)`.
    pub fn radial_density(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Ok(0.0);
        }
        let ln_k = self.ln_normalization_constant()?;
        Ok((PI.ln() + ln_k + self.density_exponent(s)).exp())
    }

    /// `π K σ²`, the quantity that appears in every moment identity.
    pub fn noise_mass(&self) -> Result<f64> {
        let (_, _, sigma) = self.f64s();
        Ok(PI * (self.ln_normalization_constant()?).exp() * sigma * sigma)
    }

    /// `E[x² + y²] = (α + π σ² K) / a`.
    pub fn expected_squared_radius(&self) -> Result<S> {
        let (alpha, a, _) = self.f64s();
        Ok(S::lit((alpha + self.noise_mass()?) / a))
    }

    /// Sum of both Lyapunov exponents,
    /// `−2α − 4√a σ exp(−α²/(2aσ²)) / ∫_{−α/(σ√a)}^∞ exp(−r²/2) dr`.
    pub fn lambda_sum_closed_form(&self) -> Result<S> {
        self.require_noise()?;
        let (alpha, a, sigma) = self.f64s();
        let ln_ratio = (4.0 * a.sqrt() * sigma).ln() - alpha * alpha / (2.0 * a * sigma * sigma)
            - ln_gaussian_tail(-alpha / (sigma * a.sqrt()));
        Ok(S::lit(-2.0 * alpha - ln_ratio.exp()))
    }

    /// Shear threshold `κ = a √(q(q+2))`, `q = πKσ²/(α + πKσ²)`, below which the top
    /// Lyapunov exponent is negative.
    pub fn kappa(&self) -> Result<S> {
        let (alpha, a, _) = self.f64s();
        let m = self.noise_mass()?;
        let denominator = alpha + m;
        if denominator <= 0.0 {
            return Err(Error::BoundUndefined { denominator });
        }
        let q = m / denominator;
        Ok(S::lit(a * (q * (q + 2.0)).sqrt()))
    }

    /// Strict upper bound `−πKσ² + (√(1 + b²/a²) − 1)(α + πKσ²)` on the top Lyapunov exponent.
    pub fn lyapunov_upper_bound(&self) -> Result<S> {
        let (alpha, a, _) = self.f64s();
        let b = self.b.as_f64();
        let m = self.noise_mass()?;
        let shear = (b / a).hypot(1.0) - 1.0;
        Ok(S::lit(-m + shear * (alpha + m)))
    }
}

impl Params<f64> {
    /// `a = β = σ = 1` with the given `α` and `b`.
    pub fn unit(alpha: f64, b: f64) -> Self {
        Self { alpha, beta: 1.0, a: 1.0, b, sigma: 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::half_line_integral;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(alpha: f64, beta: f64, a: f64, b: f64, sigma: f64) -> Params<f64> {
        Params::new(alpha, beta, a, b, sigma).unwrap()
    }

    /// ∫∫ exp(exponent) dx dy by radial quadrature, independent of the erfc route.
    fn unnormalised_mass(pr: &Params<f64>, moment: i32) -> f64 {
        let scale = (pr.sigma / pr.a.sqrt()).max(pr.alpha.abs() / pr.a).max(1e-3);
        PI * half_line_integral(|s| s.powi(moment), |s| pr.density_exponent(s), scale, 1e-14)
    }

    fn parameter_grid() -> Vec<Params<f64>> {
        let mut out = Vec::new();
        for &alpha in &[-2.0, 0.0, 2.0] {
            for &a in &[0.5, 1.0, 2.0] {
                for &sigma in &[0.5, 1.0, 2.0] {
                    out.push(p(alpha, 1.0, a, 1.0, sigma));
                }
            }
        }
        out
    }

    #[test]
    fn construction_rejects_bad_params() {
        assert!(Params::new(0.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.0, 1.0, 1.0, 1.0, -0.1).is_err());
        assert!(Params::new(f64::NAN, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(Params::new(0.0, 1.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn drift_examples() {
        let pr = p(1.0, 2.0, 1.0, 3.0, 1.0);
        assert_eq!(pr.drift(State::zero()), State::zero());
        // f1 = α − a = 0, f2 = β + b = 5 in this shear convention
        let f = pr.drift(State::new(1.0, 0.0));
        assert_relative_eq!(f.x, 0.0);
        assert_relative_eq!(f.y, 5.0);
        // mirrored shear reproduces the other convention's value
        let f = pr.with_b(-3.0).drift(State::new(1.0, 0.0));
        assert_relative_eq!(f.y, -1.0);
    }

    #[test]
    fn limit_cycle_has_no_radial_drift() {
        let pr = p(1.0, 1.0, 1.0, 1.0, 0.0);
        let r = (pr.alpha / pr.a).sqrt();
        for k in 0..16 {
            let t = k as f64 * 0.4;
            let z = State::new(r * t.cos(), r * t.sin());
            assert!(pr.drift(z).dot(z).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_examples() {
        let pr = p(0.3, 1.7, 1.2, 2.5, 1.0);
        assert_eq!(pr.jacobian(State::zero()), Mat2::new(0.3, -1.7, 1.7, 0.3));
        let w = 0.8;
        let j = pr.jacobian(State::new(w, w));
        assert_relative_eq!(j.get(1, 1), 0.3 + 2.0 * (2.5 - 2.0 * 1.2) * w * w, epsilon = 1e-14);
        let z = State::new(0.4, -1.1);
        assert_relative_eq!(j.trace(), 0.6 - 4.0 * 1.2 * 2.0 * w * w, epsilon = 1e-13);
        assert_relative_eq!(
            pr.jacobian(z).trace(),
            2.0 * 0.3 - 4.0 * 1.2 * z.norm_sq(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn lambda_plus_examples() {
        assert_eq!(p(0.7, 1.0, 1.0, 2.0, 1.0).lambda_plus(State::zero()), 0.7);
        let pr = p(0.0, 1.0, 1.0, 0.0, 1.0);
        let z = State::new(1.0, 0.0);
        assert_relative_eq!(pr.lambda_plus(z), -1.0, epsilon = 1e-14);
        assert_relative_eq!(pr.lambda_plus_bound(z), -1.0, epsilon = 1e-14);
        assert_eq!(p(-0.4, 1.0, 1.0, 2.0, 1.0).lambda_minus(State::zero()), -0.4);
    }

    #[test]
    fn normalization_matches_quadrature_on_grid() {
        for pr in parameter_grid() {
            let k = pr.normalization_constant().unwrap();
            let mass = k * unnormalised_mass(&pr, 0);
            assert!((mass - 1.0).abs() < 1e-8, "{pr:?}: mass {mass}");
            // the literature constant is off by 2π exp(α²/(2aσ²))
            let lit = pr.literature_normalization_constant().unwrap();
            let factor = 2.0 * PI * (pr.alpha.powi(2) / (2.0 * pr.a * pr.sigma.powi(2))).exp();
            assert_relative_eq!(lit * unnormalised_mass(&pr, 0), factor, max_relative = 1e-8);
        }
    }

    #[test]
    fn frozen_values_at_alpha_zero() {
        let pr = p(0.0, 1.0, 1.0, 1.0, 1.0);
        // mpmath quadrature: 0.253974543736963879
        assert_relative_eq!(pr.normalization_constant().unwrap(), 0.253974543736963879, max_relative = 1e-13);
        assert_relative_eq!(
            PI * pr.normalization_constant().unwrap(),
            (2.0 / PI).sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(pr.expected_squared_radius().unwrap(), 0.797884560802865356, max_relative = 1e-13);
        assert_relative_eq!(pr.lambda_sum_closed_form().unwrap(), -3.19153824321146142, max_relative = 1e-13);
        assert_relative_eq!(pr.kappa().unwrap(), 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(pr.with_b(0.0).kappa().unwrap(), 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn frozen_values_at_alpha_one() {
        let pr = p(1.0, 1.0, 1.0, 0.5, 1.0);
        assert_relative_eq!(pr.normalization_constant().unwrap(), 0.0915459140161113689, max_relative = 1e-12);
        assert_relative_eq!(pr.kappa().unwrap(), 0.704707605093080877, max_relative = 1e-12);
        assert_relative_eq!(pr.lambda_sum_closed_form().unwrap(), -3.15039988375671344, max_relative = 1e-12);
        let ub = pr.lyapunov_upper_bound().unwrap();
        assert_relative_eq!(ub, -0.135619410454978449, max_relative = 1e-12);
        assert!(ub < 0.0);
    }

    #[test]
    fn kappa_scales_with_a_at_alpha_zero() {
        for &a in &[0.25, 1.0, 3.0] {
            let pr = p(0.0, 1.0, a, 0.0, 0.7);
            assert_relative_eq!(pr.kappa().unwrap(), 3f64.sqrt() * a, max_relative = 1e-12);
        }
    }

    #[test]
    fn upper_bound_vanishes_at_kappa() {
        for pr in parameter_grid() {
            let kappa = pr.kappa().unwrap();
            let at = pr.with_b(kappa).lyapunov_upper_bound().unwrap();
            assert!(at.abs() < 1e-10, "{pr:?}: {at}");
            let m = pr.noise_mass().unwrap();
            assert_relative_eq!(pr.with_b(0.0).lyapunov_upper_bound().unwrap(), -m);
        }
    }

    #[test]
    fn density_properties() {
        let pr = p(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(
            pr.stationary_density(State::zero()).unwrap(),
            pr.normalization_constant().unwrap()
        );
        let on_cycle = State::new(1.0, 0.0);
        assert!(pr.stationary_density(on_cycle).unwrap() > pr.stationary_density(State::zero()).unwrap());
        let z = State::new(0.3, -0.9);
        assert_eq!(
            pr.with_b(1.0).stationary_density(z).unwrap(),
            pr.with_b(8.0).stationary_density(z).unwrap()
        );
        assert_eq!(pr.with_sigma(0.0).stationary_density(z), Err(Error::ZeroNoise));
        assert_eq!(pr.with_sigma(0.0).lambda_sum_closed_form(), Err(Error::ZeroNoise));
    }

    #[test]
    fn moment_identities_on_grid() {
        for pr in parameter_grid() {
            let k = pr.normalization_constant().unwrap();
            let es = pr.expected_squared_radius().unwrap();
            let quad = k * unnormalised_mass(&pr, 1);
            assert!((es - quad).abs() < 1e-8 * (1.0 + es), "{pr:?}: {es} vs {quad}");
            let lhs = 2.0 * pr.alpha - 4.0 * pr.a * es;
            let rhs = pr.lambda_sum_closed_form().unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "{pr:?}: {lhs} vs {rhs}");
            assert!(rhs < 0.0);
        }
    }

    #[test]
    fn lambda_sum_negative_and_shear_free() {
        for i in 0..=24 {
            let alpha = -3.0 + 0.25 * i as f64;
            for &a in &[0.5, 1.0, 2.0] {
                for &sigma in &[0.5, 1.0, 2.0] {
                    let pr = p(alpha, 1.0, a, 1.0, sigma);
                    let v = pr.lambda_sum_closed_form().unwrap();
                    assert!(v < 0.0, "{pr:?}: {v}");
                    let w = Params { b: 7.0, beta: -3.0, ..pr }.lambda_sum_closed_form().unwrap();
                    assert_eq!(v, w);
                }
            }
        }
    }

    #[test]
    fn finite_differences_reproduce_jacobian() {
        let pr = p(0.7, 1.3, 1.1, 4.0, 1.0);
        let h = 1e-5;
        for &(x, y) in &[(0.3, -0.2), (1.2, 0.8), (-0.5, 1.5), (0.0, 0.0)] {
            let z = State::new(x, y);
            let j = pr.jacobian(z);
            let dx = (pr.drift(State::new(x + h, y)) - pr.drift(State::new(x - h, y))).scale(0.5 / h);
            let dy = (pr.drift(State::new(x, y + h)) - pr.drift(State::new(x, y - h))).scale(0.5 / h);
            let fd = Mat2::from_columns(dx, dy);
            for i in 0..4 {
                assert!((fd.m[i] - j.m[i]).abs() < 1e-6, "entry {i}: {} vs {}", fd.m[i], j.m[i]);
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let pr: Params<f32> = Params::new(1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        let k: f32 = pr.kappa().unwrap();
        assert!((k - 0.704_707_6).abs() < 1e-5);
        let j = pr.jacobian(State::new(0.5f32, 0.5));
        assert!(j.is_finite());
    }

    /// Extrema of `⟨J r, r⟩` over 720 equally spaced unit vectors, each refined by a
    /// golden-section search inside its grid cell.
    fn direction_extrema(j: &Mat2<f64>) -> (f64, f64) {
        let q = |t: f64| j.quadratic_form(State::new(t.cos(), t.sin()));
        let h = 2.0 * PI / 720.0;
        let refine = |k: usize, sign: f64| {
            let (mut lo, mut hi) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if sign * q(m1) > sign * q(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            q(0.5 * (lo + hi))
        };
        let vals: Vec<f64> = (0..720).map(|k| q(k as f64 * h)).collect();
        let argmax = (0..720).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let argmin = (0..720).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        (refine(argmax, 1.0).max(vals[argmax]), refine(argmin, -1.0).min(vals[argmin]))
    }

    #[test]
    fn lambda_minus_bound_needs_moderate_shear() {
        let pr = p(0.0, 0.0, 0.1, -9.9, 0.1);
        let z = State::new(0.0, 0.66);
        assert!(pr.lambda_minus(z) < pr.lambda_minus_bound(z));
    }

    fn params_strategy() -> impl Strategy<Value = Params<f64>> {
        (-3.0..3.0f64, -3.0..3.0f64, 0.1..3.0f64, -10.0..10.0f64, 0.1..3.0f64)
            .prop_map(|(alpha, beta, a, b, sigma)| Params { alpha, beta, a, b, sigma })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn lambda_plus_is_quadratic_form_maximum(pr in params_strategy(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let z = State::new(x, y);
            let j = pr.jacobian(z);
            let (hi, lo) = direction_extrema(&j);
            let scale = 1.0 + j.max_abs();
            prop_assert!((pr.lambda_plus(z) - hi).abs() < 1e-6 * scale);
            prop_assert!((pr.lambda_minus(z) - lo).abs() < 1e-6 * scale);
        }

        #[test]
        fn lambda_bounds_hold(pr in params_strategy(), x in -3.0..3.0f64, y in -3.0..3.0f64, axis in proptest::bool::ANY) {
            let z = State::new(x, y);
            let bound = pr.lambda_plus_bound(z);
            let lp = pr.lambda_plus(z);
            let scale = 1.0 + pr.jacobian(z).max_abs();
            prop_assert!(bound - lp >= -1e-12 * scale);
            // the lower bound needs √(a² + b²) ≤ 2a
            if pr.b.abs() <= 3f64.sqrt() * pr.a {
                prop_assert!(pr.lambda_minus(z) >= pr.lambda_minus_bound(z) - 1e-12 * scale);
            }
            prop_assert!(pr.lambda_minus(z) <= lp);
            // equality on the axes
            let za = if axis { State::new(x, 0.0) } else { State::new(0.0, y) };
            prop_assert!((pr.lambda_plus_bound(za) - pr.lambda_plus(za)).abs() < 1e-9 * scale);
        }
    }
}
