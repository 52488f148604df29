use hopflab::flow::{integrate_sde, integrate_variational};
use hopflab::lyapunov::{ftle, ftle_of_matrix, lambda_sum_estimate};
use hopflab::sweep::{sweep_top_lyapunov, Axis, GridSpec};
use hopflab::{NoiseStream, Numerics, Params, State};

#[test]
fn ftle_equals_log_singular_value_of_the_tangent_flow() {
    let p = Params::unit(1.0, 4.0);
    let num = Numerics::default();
    let z0 = State::new(0.9, -0.4);
    let horizon = 5.0;
    let sample = ftle(&p, 21, z0, horizon, &num).unwrap();
    let stream = NoiseStream::new(21, 0, 0.0, horizon, num.dt).unwrap();
    let tr = integrate_sde(&p, &stream, z0, (0.0, horizon)).unwrap();
    let phi = integrate_variational(&p, &tr).unwrap().last();
    let (hi, lo) = ftle_of_matrix(&phi, horizon);
    assert!((sample.sup_value - hi).abs() < 1e-9);
    assert!((sample.inf_value - lo).abs() < 1e-9);
    assert!((sample.ln_det - phi.det().ln()).abs() < 1e-9);

    let directions = 720;
    let best = (0..directions)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / directions as f64;
            phi.mul_vec(State::new(theta.cos(), theta.sin())).norm().ln() / horizon
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best <= sample.sup_value + 1e-12);
    let grid_gap = -(std::f64::consts::PI / (2.0 * directions as f64)).cos().ln() / horizon;
    assert!(best >= sample.sup_value - grid_gap - 1e-12);
}

#[test]
fn lambda_sum_estimate_brackets_the_closed_form() {
    let p = Params::unit(0.0, 1.0);
    let want = p.lambda_sum_closed_form().unwrap();
    let est = lambda_sum_estimate(&p, 3, 2000.0, &Numerics::default()).unwrap();
    assert!(est.contains(want) || (est.value - want).abs() < 3.0 * est.ci_halfwidth, "{est:?} vs {want}");
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let mut spec = GridSpec::new(Axis::new(1.0, 4.0, 2).unwrap(), Axis::new(-1.0, 1.0, 3).unwrap(), Params::unit(0.0, 1.0));
    spec.horizon = 150.0;
    spec.seeds = 2;
    spec.refine_horizon = None;
    spec.numerics = Numerics::default().with_burn_in(50.0);
    let one = sweep_top_lyapunov(&spec, 1).unwrap();
    let three = sweep_top_lyapunov(&spec, 3).unwrap();
    assert_eq!(one.cells, three.cells);
    assert_eq!(one.cells.len(), 6);
    assert!(one.cells.iter().all(|c| c.estimate.is_some()));
}
