//! Adaptive Simpson quadrature, used to cross-check the closed forms.

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `∫_0^∞ g(s) exp(log_weight(s)) ds` for a log-concave weight, truncated where the
/// integrand has fallen below 1e-300 relative to its peak.
///
/// The range is split into panels so that the adaptive rule cannot step over the mass.
pub fn half_line_integral<G, W>(g: G, log_weight: W, scale: f64, tol: f64) -> f64
where
    G: Fn(f64) -> f64,
    W: Fn(f64) -> f64,
{
    // locate the peak of the weight on a coarse grid, then walk right until negligible
    let step = scale / 64.0;
    let mut peak = f64::NEG_INFINITY;
    let mut s = 0.0;
    let end;
    let cutoff = 1e-300f64.ln();
    loop {
        let lw = log_weight(s);
        peak = peak.max(lw);
        if lw - peak < cutoff && s > 0.0 {
            end = s;
            break;
        }
        s += step;
        if s > 1e6 * scale {
            end = s;
            break;
        }
    }
    let panels = 256;
    let width = end / panels as f64;
    let integrand = |x: f64| g(x) * (log_weight(x) - peak).exp();
    let total: f64 = (0..panels)
        .map(|i| {
            let lo = i as f64 * width;
            adaptive_simpson(&integrand, lo, lo + width, tol / panels as f64, 40)
        })
        .sum();
    total * peak.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-14, 30);
        assert!((v - 4.0).abs() < 1e-13);
    }

    #[test]
    fn half_gaussian() {
        let v = half_line_integral(|_| 1.0, |s| -0.5 * s * s, 1.0, 1e-13);
        assert!((v - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-11);
    }
}
