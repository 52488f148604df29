use hopflab::flow::{integrate_joint, integrate_rde_ou, integrate_sde, integrate_variational};
use hopflab::noise::sample_path;
use hopflab::{NoiseStream, Params, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 1e-3;

fn on_grid(k: i64) -> f64 {
    k as f64 * DT
}

#[test]
fn cocycle_holds_bitwise_on_random_triples() {
    let p = Params::unit(1.0, 3.0);
    let stream = NoiseStream::new(42, 0, -5.0, 5.0, DT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let mut ks = [rng.random_range(-5000i64..5000), rng.random_range(-5000i64..5000), 0];
        ks[2] = rng.random_range(-5000i64..=5000);
        ks.sort();
        if ks[0] == ks[1] || ks[1] == ks[2] {
            continue;
        }
        let (r, s, t) = (on_grid(ks[0]), on_grid(ks[1]), on_grid(ks[2]));
        let z0 = State::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let direct = integrate_sde(&p, &stream, z0, (r, t)).unwrap().last();
        let mid = integrate_sde(&p, &stream, z0, (r, s)).unwrap().last();
        let split = integrate_sde(&p, &stream, mid, (s, t)).unwrap().last();
        assert_eq!(direct, split, "r={r} s={s} t={t}");
    }
}

#[test]
fn tangent_cocycle_is_a_matrix_product() {
    let p = Params::unit(0.5, 2.0);
    let path = sample_path(3, 0.0, 6.0, DT).unwrap();
    let tr = integrate_sde(&p, &path, State::new(0.6, -0.2), (0.0, 6.0)).unwrap();
    let whole = integrate_variational(&p, &tr).unwrap().last();
    let first = integrate_sde(&p, &path, tr.states[0], (0.0, 2.5)).unwrap();
    let second = integrate_sde(&p, &path, first.last(), (2.5, 6.0)).unwrap();
    let prod = integrate_variational(&p, &second).unwrap().last() * integrate_variational(&p, &first).unwrap().last();
    assert!((whole - prod).max_abs() <= 1e-12 * whole.max_abs().max(1.0));
}

fn liouville_gap(p: &Params, dt: f64, horizon: f64) -> f64 {
    let path = sample_path(5, 0.0, horizon, dt).unwrap();
    let tr = integrate_sde(p, &path, State::new(1.2, 0.4), (0.0, horizon)).unwrap();
    let det = integrate_variational(p, &tr).unwrap().last().det();
    let traces: Vec<f64> = tr.states.iter().map(|z| p.jacobian(*z).trace()).collect();
    let integral: f64 = traces.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
    (det.ln() - integral).abs()
}

#[test]
fn liouville_error_is_second_order_without_noise() {
    let p = Params::unit(1.0, 2.0).with_sigma(0.0);
    let coarse = liouville_gap(&p, 2e-3, 5.0);
    let fine = liouville_gap(&p, 1e-3, 5.0);
    assert!(fine < 25.0 * 1e-6 * 5.0, "gap {fine}");
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn liouville_holds_along_noisy_paths() {
    let p = Params::unit(1.0, 1.0);
    assert!(liouville_gap(&p, DT, 10.0) < 1e-3);
}

#[test]
fn determinant_stays_positive() {
    let p = Params::unit(1.0, 8.0);
    let path = sample_path(8, 0.0, 20.0, DT).unwrap();
    let run = integrate_joint(&p, &path, State::new(0.0, 1.0), (0.0, 20.0), 10).unwrap();
    assert!(run.blocks.iter().all(|b| b.r11 > 0.0 && b.r22 > 0.0));
    let traces: Vec<f64> = run.trajectory.states.iter().map(|z| p.jacobian(*z).trace()).collect();
    let integral: f64 = traces.windows(2).map(|w| 0.5 * (w[0] + w[1]) * DT).sum();
    assert!((run.sum_ln_det - integral).abs() < 1e-2 * integral.abs());
}

#[test]
fn euler_maruyama_converges_at_first_order() {
    let p = Params::unit(1.0, 1.0);
    let horizon = 1.0;
    let z0 = State::new(0.7, 0.1);
    let (mut err_coarse, mut err_fine) = (0.0, 0.0);
    for seed in 0..20 {
        let reference_path = sample_path(seed, 0.0, horizon, 1e-4).unwrap();
        let reference = integrate_sde(&p, &reference_path, z0, (0.0, horizon)).unwrap().last();
        for (factor, err) in [(20, &mut err_coarse), (10, &mut err_fine)] {
            let path = reference_path.coarsen(factor).unwrap();
            *err += integrate_sde(&p, &path, z0, (0.0, horizon)).unwrap().last().distance(reference);
        }
    }
    let ratio = err_coarse / err_fine;
    assert!((1.4..2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn ou_conjugate_scheme_tracks_euler_maruyama() {
    let p = Params::unit(1.0, 1.0);
    let path = sample_path(2, 0.0, 10.0, DT).unwrap();
    let z0 = State::new(0.5, 0.5);
    let em = integrate_sde(&p, &path, z0, (0.0, 10.0)).unwrap();
    for c in [0.5, 1.0, 2.0] {
        let rde = integrate_rde_ou(&p, &path, c, z0, (0.0, 10.0)).unwrap();
        let gap = em.states.iter().zip(&rde.states).map(|(x, y)| x.distance(*y)).fold(0.0, f64::max);
        assert!(gap < 5e-2, "c={c} gap {gap}");
    }
}

#[test]
fn renormalisation_does_not_change_the_tangent_flow() {
    let p = Params::unit(1.0, 4.0);
    let path = sample_path(6, 0.0, 4.0, DT).unwrap();
    let z0 = State::new(0.3, 0.9);
    let tr = integrate_sde(&p, &path, z0, (0.0, 4.0)).unwrap();
    let ln_det = integrate_variational(&p, &tr).unwrap().last().det().ln();
    for every in [1, 10, 100] {
        let joint = integrate_joint(&p, &path, z0, (0.0, 4.0), every).unwrap();
        assert_eq!(joint.trajectory.states, tr.states);
        assert!((joint.sum_ln_det - ln_det).abs() < 1e-9, "every={every}");
    }
}
