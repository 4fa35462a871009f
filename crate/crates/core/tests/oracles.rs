//! Checks against independent oracles: numerical quadrature, nested
//! finite differences and multi-seed training curves.

use stein_ebm::data_io::make_rbm_ground_truth;
use stein_ebm::energy::rbm_gibbs_sample;
use stein_ebm::evaluation::test_log_likelihood;
use stein_ebm::learners::{mle_gradient, steincd_negatives, stein_score_matching_direction};
use stein_ebm::numerics::logsumexp;
use stein_ebm::steingan::{theta_init_stream, train, EvalSpec};
use stein_ebm::*;

/// Trapezoid grid over `[-half, half]^d` for d ≤ 2, returning points and
/// the cell volume.
fn grid(d: usize, half: f64, step: f64) -> (Vec<Vec<f64>>, f64) {
    let n = (2.0 * half / step).round() as usize + 1;
    let axis: Vec<f64> = (0..n).map(|k| -half + k as f64 * step).collect();
    let points = match d {
        1 => axis.iter().map(|&x| vec![x]).collect(),
        2 => axis.iter().flat_map(|&x| axis.iter().map(move |&y| vec![x, y])).collect(),
        _ => unreachable!("quadrature only for d <= 2"),
    };
    (points, step.powi(d as i32))
}

fn quadrature_log_z(params: &GbRbmParams, half: f64, step: f64) -> f64 {
    let model = GbRbm::new(params.visible, params.hidden).unwrap();
    let theta = params.to_param_vector();
    let (points, vol) = grid(params.visible, half, step);
    let logs: Vec<f64> = points.iter().map(|x| model.f(&theta, x)).collect();
    logsumexp(&logs).unwrap() + vol.ln()
}

#[test]
fn single_unit_partition_matches_quadrature() {
    let params = GbRbmParams { visible: 1, hidden: 1, weights: vec![1.0], visible_bias: vec![0.0], hidden_bias: vec![0.0] };
    let exact = GbRbm::new(1, 1).unwrap().log_partition(&params.to_param_vector()).unwrap();
    assert!((exact - 2.112086).abs() < 1e-6, "{exact}");
    let quad = quadrature_log_z(&params, 12.0, 1e-3);
    assert!((exact - quad).abs() < 1e-6, "{exact} vs {quad}");
}

#[test]
fn density_integrates_to_one() {
    let mut rng = RngStream::new(21);
    for (d, l) in [(1, 1), (1, 4), (2, 2), (2, 3)] {
        let params = GbRbmParams::random(d, l, 0.6, &mut rng);
        let model = GbRbm::new(d, l).unwrap();
        let theta = params.to_param_vector();
        let log_z = model.log_partition(&theta).unwrap();
        let (points, vol) = grid(d, 14.0, 0.05);
        let mass: f64 = points.iter().map(|x| (model.f(&theta, x) - log_z).exp()).sum::<f64>() * vol;
        assert!((mass - 1.0).abs() < 1e-4, "d={d} l={l}: mass {mass}");
    }
}

#[test]
fn gibbs_moments_match_quadrature() {
    let mut rng = RngStream::new(33);
    let params = GbRbmParams::random(2, 2, 0.8, &mut rng);
    let model = GbRbm::new(2, 2).unwrap();
    let theta = params.to_param_vector();
    let log_z = model.log_partition(&theta).unwrap();
    let (points, vol) = grid(2, 14.0, 0.05);
    // quadrature moments E[x_i], E[x_i²]
    let mut moments = [0.0; 4];
    for x in &points {
        let w = (model.f(&theta, x) - log_z).exp() * vol;
        moments[0] += w * x[0];
        moments[1] += w * x[1];
        moments[2] += w * x[0] * x[0];
        moments[3] += w * x[1] * x[1];
    }
    let n = 4000;
    let samples = rbm_gibbs_sample(&params, n, 1000, 10, &mut rng).unwrap();
    for (k, &target) in moments.iter().enumerate() {
        let stat: Vec<f64> = samples.rows().map(|x| if k < 2 { x[k] } else { x[k - 2] * x[k - 2] }).collect();
        let mean = stat.iter().sum::<f64>() / n as f64;
        let var = stat.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "moment {k}: sample {mean} quadrature {target} se {se}");
    }
}

/// `mean_x ∂²f/∂θ_k ∂(x·φ)` by a four-point mixed central difference on `f`.
fn nested_fd_cross(model: &GbRbm, theta: &ParamVector, batch: &ParticleBatch, phi: &ParticleBatch, h: f64) -> Vec<f64> {
    let f_at = |t: &[f64], x: &[f64], v: &[f64], s: f64| {
        let theta = ParamVector::new(t.to_vec(), theta.layout().clone()).unwrap();
        let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + s * b).collect();
        model.f(&theta, &y)
    };
    (0..theta.len())
        .map(|k| {
            let mut up = theta.as_slice().to_vec();
            let mut down = up.clone();
            up[k] += h;
            down[k] -= h;
            let total: f64 = batch
                .rows()
                .zip(phi.rows())
                .map(|(x, v)| {
                    (f_at(&up, x, v, h) - f_at(&up, x, v, -h) - f_at(&down, x, v, h) + f_at(&down, x, v, -h)) / (4.0 * h * h)
                })
                .sum();
            total / batch.len() as f64
        })
        .collect()
}

#[test]
fn steincd_is_first_order_score_matching() {
    let mut rng = RngStream::new(44);
    let params = GbRbmParams::random(3, 2, 0.6, &mut rng);
    let model = GbRbm::new(3, 2).unwrap();
    let theta = params.to_param_vector();
    let batch = rbm_gibbs_sample(&params, 30, 100, 2, &mut rng).unwrap();
    let kernel = KernelSpec::rbf_median();
    let phi = stein_ebm::svgd::phi_star(&model, &theta, &batch, &kernel);
    // limit direction −mean[∇_θ∇_x f · φ*]
    let exact: Vec<f64> = nested_fd_cross(&model, &theta, &batch, &phi, 1e-4).iter().map(|v| -v).collect();
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut errors = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3] {
        let config = TrainConfig { svgd_step: eps, ..TrainConfig::default() };
        let neg = steincd_negatives(&model, &theta, &batch, &kernel, &config);
        let steincd = mle_gradient(&model, &theta, &batch, &neg).unwrap();
        let err = steincd.as_slice().iter().zip(&exact).map(|(a, b)| (a / eps - b).powi(2)).sum::<f64>().sqrt() / norm;
        errors.push(err);
        // the one-sided score matching direction is the same quotient
        let (ssm, _) =
            stein_score_matching_direction(&model, &theta, &batch, &kernel, eps, FiniteDifference::OneSided).unwrap();
        for (a, b) in ssm.as_slice().iter().zip(steincd.as_slice()) {
            assert!((a - b / eps).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {}", b / eps);
        }
    }
    for pair in errors.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((7.0..14.0).contains(&ratio), "errors {errors:?} not linear in eps");
    }
}

#[test]
fn cd1_raises_test_likelihood_early() {
    let mut gain = 0.0;
    for seed in 0..10u64 {
        let (data, _) = make_rbm_ground_truth(4, 3, 0.5, 2500, &mut RngStream::new(1000 + seed)).unwrap();
        let (train_set, test_set) = data.split_at(2000);
        let model = GbRbm::new(4, 3).unwrap();
        let theta = GbRbmParams::random(4, 3, 0.1, &mut theta_init_stream(seed)).to_param_vector();
        let before = test_log_likelihood(&model, &theta, &test_set.points).unwrap();
        let config = TrainConfig { iterations: 200, seed, ..TrainConfig::default() };
        let state = TrainState::new(&model, theta, None, config, KernelSpec::rbf_median()).unwrap();
        let eval = EvalSpec { cadence: 200, test: Some(test_set.points), ..EvalSpec::default() };
        let out = train(&model, &train_set.points, state, Method::Cd, &eval, None).unwrap();
        gain += (out.metrics[0].test_log_likelihood - before) / 10.0;
    }
    assert!(gain > 0.0, "mean change {gain}");
}
