// Statistical oracles for the simulators: closed-form Gaussian/OU moments,
// sphere eigenfunction decay, Itô isometry, increment covariance, weak-error
// order under common random numbers. Gates are 4–5 standard errors with
// fixed seeds.

use heatgrad::expr::Expr;
use heatgrad::geom::{EuclideanModel, ExtrinsicSystem, ManifoldModel, SphereModel};
use heatgrad::geom::intrinsic::{weitzenbock_endomorphism, WeitzenbockVariant};
use heatgrad::pathsim::{
    integrate_damped_transport, ito_integral, simulate_extrinsic, simulate_intrinsic, Orientation,
    PathSeed,
};
use heatgrad::stats::mean_se;
use nalgebra::{DMatrix, DVector};

fn seed(master: u64, stream: u64) -> PathSeed {
    PathSeed { master, stream }
}

#[test]
fn flat_brownian_moments() {
    // Speed-2 Brownian motion: E[X_T] = 0, E[X_T²] = 2T.
    let model = EuclideanModel::flat(1);
    let t_max = 1.0;
    let n_paths = 20_000;
    let mut xs = Vec::with_capacity(n_paths);
    let mut x2s = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p = simulate_intrinsic(&model, &[0.0], t_max, 64, seed(101, i as u64)).unwrap();
        xs.push(p.x_last()[0]);
        x2s.push(p.x_last()[0] * p.x_last()[0]);
    }
    let (m, se) = mean_se(&xs);
    assert!(m.abs() <= 4.0 * se, "mean {m} +- {se}");
    let (m2, se2) = mean_se(&x2s);
    assert!((m2 - 2.0 * t_max).abs() <= 4.0 * se2, "second moment {m2} +- {se2}");
}

#[test]
fn ou_mean_decay() {
    let model = EuclideanModel::ou(1, 1.0);
    let n_paths = 20_000;
    let mut xs = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p = simulate_intrinsic(&model, &[1.0], 1.0, 128, seed(202, i as u64)).unwrap();
        xs.push(p.x_last()[0]);
    }
    let (m, se) = mean_se(&xs);
    let target = (-1.0f64).exp();
    assert!((m - target).abs() <= 4.0 * se, "{m} vs {target} (se {se})");
}

#[test]
fn sphere_eigenfunction_decay() {
    // z is a Δ-eigenfunction on S² with Δz = -2z, so E[z(X_T)] = e^{-2T}.
    let model = SphereModel::new(2);
    let t_max = 0.5;
    let n_paths = 20_000;
    let mut zs = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p =
            simulate_intrinsic(&model, &[0.0, 0.0, 1.0], t_max, 128, seed(303, i as u64)).unwrap();
        zs.push(p.x_last()[2]);
    }
    let (m, se) = mean_se(&zs);
    let target = (-2.0 * t_max).exp();
    assert!((m - target).abs() <= 4.0 * se, "{m} vs {target} (se {se})");
}

#[test]
fn increment_covariance_is_2dt_identity() {
    // Sample covariance of ΔB/sqrt(2dt) over many paths ≈ I (5σ gate).
    let model = EuclideanModel::flat(2);
    let n_paths = 8_000usize;
    let dt: f64 = 1.0 / 16.0;
    let mut sum = DMatrix::<f64>::zeros(2, 2);
    for i in 0..n_paths {
        let p = simulate_intrinsic(&model, &[0.0, 0.0], 1.0, 16, seed(404, i as u64)).unwrap();
        // Use the first increment of each path (independent across paths).
        let b = p.increment_vec(0) / (2.0 * dt).sqrt();
        sum += &b * b.transpose();
    }
    let cov = sum / n_paths as f64;
    // Var of a diagonal entry of the normalized outer product is 2/n,
    // off-diagonal 1/n.
    let diag_tol = 5.0 * (2.0 / n_paths as f64).sqrt();
    let off_tol = 5.0 * (1.0 / n_paths as f64).sqrt();
    assert!((cov[(0, 0)] - 1.0).abs() < diag_tol);
    assert!((cov[(1, 1)] - 1.0).abs() < diag_tol);
    assert!(cov[(0, 1)].abs() < off_tol);
}

#[test]
fn ito_isometry_with_damped_inverse() {
    // ∫ e^{t} dB has variance 2∫e^{2t}dt = e^{2T} - 1; realize e^{t} as
    // Θ⁻¹ for the OU model with (n-1)λ = 1.
    let model = EuclideanModel::ou(2, 1.0);
    let endo = weitzenbock_endomorphism(&model, WeitzenbockVariant::ThetaGen).unwrap();
    let t_max = 1.0;
    let n_paths = 12_000;
    let mut vals = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p = simulate_intrinsic(&model, &[0.0, 0.0], t_max, 128, seed(505, i as u64)).unwrap();
        let (_, theta_inv) = integrate_damped_transport(&p, &endo, Orientation::Right).unwrap();
        let total = ito_integral(&p, |k| theta_inv.mat(k));
        vals.push(total[0]);
    }
    let (m, se) = mean_se(&vals);
    assert!(m.abs() < 4.0 * se);
    let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
    let (m2, se2) = mean_se(&sq);
    let target = (2.0f64 * t_max).exp() - 1.0;
    assert!((m2 - target).abs() <= 4.0 * se2, "{m2} vs {target} (se {se2})");
}

#[test]
fn ito_integral_replay_is_deterministic() {
    let model = EuclideanModel::flat(2);
    let run = || {
        let p = simulate_intrinsic(&model, &[0.0, 0.0], 1.0, 64, seed(606, 3)).unwrap();
        ito_integral(&p, |_| DMatrix::identity(2, 2))
    };
    assert_eq!(run(), run());
}

#[test]
fn sphere_constraint_drift_at_4096_steps() {
    let model = SphereModel::new(2);
    for i in 0..4u64 {
        let p = simulate_intrinsic(&model, &[1.0, 0.0, 0.0], 1.0, 4096, seed(707, i)).unwrap();
        let mut worst = 0.0f64;
        for k in 0..=p.steps {
            let n: f64 = p.x(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max((n - 1.0).abs());
        }
        assert!(worst <= 1e-6, "constraint drift {worst}");
    }

    // Extrinsic gradient system with the same budget.
    let sys = ExtrinsicSystem::sphere_projection();
    for i in 0..4u64 {
        let p = simulate_extrinsic(&sys, &[0.0, 0.0, 1.0], 1.0, 4096, seed(708, i), false).unwrap();
        let mut worst = 0.0f64;
        for k in 0..=p.steps {
            let n: f64 = p.x(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max((n - 1.0).abs());
        }
        assert!(worst <= 1e-6, "extrinsic constraint drift {worst}");
    }
}

#[test]
fn martingale_constancy_on_sphere() {
    // E[dz(//_t Θ_t v)] = e^{-2t}·dz(v): equivalently e^{2(t-T)}-corrected
    // values are constant in t (the local martingale α_{T-t}(//_tΘ_t v)).
    let model = SphereModel::new(2);
    let t_max = 0.6;
    let x0 = [1.0, 0.0, 0.0];
    let v_frame_target = DVector::from_column_slice(&[0.0, 0.0, 1.0]); // dz-direction
    let endo = weitzenbock_endomorphism(&model, WeitzenbockVariant::ThetaGen).unwrap();
    let steps = 192usize;
    let checkpoints = [0usize, steps / 4, steps / 2, steps];
    let n_paths = 16_000;
    let mut vals: Vec<Vec<f64>> = vec![Vec::with_capacity(n_paths); checkpoints.len()];
    for i in 0..n_paths {
        let p = simulate_intrinsic(&model, &x0, t_max, steps, seed(808, i as u64)).unwrap();
        let (theta, _) = integrate_damped_transport(&p, &endo, Orientation::Right).unwrap();
        let f0 = p.frame(0).unwrap();
        let v_frame = f0.transpose() * &v_frame_target;
        for (ci, &k) in checkpoints.iter().enumerate() {
            let moved = p.frame(k).unwrap() * (theta.mat(k) * &v_frame);
            vals[ci].push(moved[2]); // dz(·) picks the z-component
        }
    }
    let dz_v = v_frame_target[2]; // = 1 at the equator start
    for (ci, &k) in checkpoints.iter().enumerate() {
        let t = t_max * k as f64 / steps as f64;
        let (m, se) = mean_se(&vals[ci]);
        let expect = (-2.0 * t).exp() * dz_v;
        assert!(
            (m - expect).abs() <= 3.0 * se + 2e-3,
            "t={t}: {m} vs {expect} (se {se})"
        );
    }
}

#[test]
fn extrinsic_tx_reproduces_eigenform_decay() {
    // For the sphere gradient system, E[dz(TX_t v)] = e^{-2t}·dz(v); with
    // A₀ = 0, Ξ = TX, so this pins the derivative-flow propagation.
    let sys = ExtrinsicSystem::sphere_projection();
    let t_max = 0.4;
    let x0 = [1.0, 0.0, 0.0];
    let v = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
    let n_paths = 16_000;
    let mut vals = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p = simulate_extrinsic(&sys, &x0, t_max, 128, seed(909, i as u64), true).unwrap();
        let moved = p.jacobian(p.steps).unwrap() * &v;
        vals.push(moved[2]);
    }
    let (m, se) = mean_se(&vals);
    let expect = (-2.0 * t_max).exp();
    assert!((m - expect).abs() <= 4.0 * se, "{m} vs {expect} (se {se})");
}

#[test]
fn weak_error_halves_under_common_random_numbers() {
    // OU mean at coarse grids: the Heun error on E[X_T] is O(dt²), so
    // successive coupled differences shrink by at least a factor of two.
    let lambda = 1.0f64;
    let t_max = 1.0;
    let x0 = 1.0;
    let n_paths = 200_000usize;
    // Simulate at the finest grid and coarsen the same increments.
    let fine_steps = 16usize;
    let mut means = [0.0f64; 3]; // steps = 4, 8, 16
    let model = EuclideanModel::ou(1, lambda);
    let mut acc = [vec![], vec![], vec![]];
    for i in 0..n_paths {
        let p = simulate_intrinsic(&model, &[x0], t_max, fine_steps, seed(1010, i as u64))
            .unwrap();
        // Coarse runs re-driven by summed increments.
        for (level, steps) in [(0usize, 4usize), (1, 8), (2, 16)] {
            let group = fine_steps / steps;
            let dt = t_max / steps as f64;
            let mut x = x0;
            for k in 0..steps {
                let mut b = 0.0;
                for j in 0..group {
                    b += p.increment(k * group + j)[0];
                }
                // One Heun step of dX = -λX dt + dB.
                let xp = x - lambda * x * dt + b;
                x = x - 0.5 * lambda * (x + xp) * dt + b;
            }
            acc[level].push(x);
        }
    }
    for level in 0..3 {
        let (m, _) = mean_se(&acc[level]);
        means[level] = m;
    }
    // The shared Brownian noise cancels in pathwise differences, leaving
    // the deterministic error gaps err(dt) - err(dt/2) = 3/4·err(dt):
    // "error halves at least" is the ratio of successive gaps being >= 2.
    let d01: Vec<f64> = acc[0].iter().zip(&acc[1]).map(|(a, b)| a - b).collect();
    let d12: Vec<f64> = acc[1].iter().zip(&acc[2]).map(|(a, b)| a - b).collect();
    let (gap_coarse, se01) = mean_se(&d01);
    let (gap_fine, se12) = mean_se(&d12);
    assert!(
        gap_coarse.abs() > 4.0 * se01 && gap_fine.abs() > 4.0 * se12,
        "gaps not resolved: {gap_coarse}±{se01}, {gap_fine}±{se12}"
    );
    assert!(
        gap_coarse.abs() >= 2.0 * 0.8 * gap_fine.abs(),
        "halving failed: gap {gap_coarse} -> {gap_fine}"
    );
    // Coarse-level absolute error sanity: the measured mean error at
    // steps=4 is the analytic O(dt²) constant up to MC noise.
    let exact = x0 * (-lambda * t_max).exp();
    let (_, se_level) = mean_se(&acc[0]);
    let expected_err = exact * t_max * lambda.powi(3) * (t_max / 4.0).powi(2) / 6.0;
    assert!(
        (means[0] - exact).abs() <= expected_err + 5.0 * se_level,
        "coarse error {} vs predicted {expected_err}",
        (means[0] - exact).abs()
    );
}

#[test]
fn extrinsic_sphere_diffusion_matches_intrinsic_law() {
    // Same eigenfunction decay through the extrinsic simulator.
    let sys = ExtrinsicSystem::sphere_projection();
    let t_max = 0.5;
    let n_paths = 20_000;
    let mut zs = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p =
            simulate_extrinsic(&sys, &[0.0, 0.0, 1.0], t_max, 128, seed(1111, i as u64), false)
                .unwrap();
        zs.push(p.x_last()[2]);
    }
    let (m, se) = mean_se(&zs);
    let target = (-2.0 * t_max).exp();
    assert!((m - target).abs() <= 4.0 * se, "{m} vs {target} (se {se})");
}

#[test]
fn frame_isometry_along_paths() {
    let model = SphereModel::new(2);
    let p = simulate_intrinsic(&model, &[0.0, 1.0, 0.0], 1.0, 512, seed(1212, 0)).unwrap();
    for k in 0..=p.steps {
        let f = p.frame(k).unwrap();
        let g = model.metric(p.x(k));
        let gram = f.transpose() * g * &f;
        assert!((gram - DMatrix::<f64>::identity(2, 2)).amax() <= 1e-6);
    }
}

#[test]
fn custom_drift_expression_model_simulates() {
    // Exercise the expression-driven drift path end to end.
    let model = EuclideanModel::with_custom_drift(
        2,
        vec![
            Expr::parse("-x1 + 0.1 * sin(x2)").unwrap(),
            Expr::parse("-x2").unwrap(),
        ],
    )
    .unwrap();
    let p = simulate_intrinsic(&model, &[0.5, -0.5], 1.0, 64, seed(1313, 5)).unwrap();
    assert!(p.exploded.is_none());
    assert_eq!(p.x(0), &[0.5, -0.5]);
}
