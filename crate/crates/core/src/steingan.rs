//! Training loops: SteinGAN (alternating generator and energy-model updates),
//! SteinCD-GAN(α) mixing, and a driver shared by every learner.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::evaluation::{avg_pairwise_distance, mode_coverage, moment_gap, test_log_likelihood, MetricsRecord};
use crate::generator::{amortized_update_chain, sample_noise, MlpGenerator};
use crate::kernels::KernelSpec;
use crate::learners::{
    cd_k_update, optimizer_step, stein_score_matching_update, steincd_update, OptimizerState, TrainConfig,
    UpdateOutcome,
};
use crate::numerics::{ParamVector, ParticleBatch, RngStream};
use crate::svgd::stein_discrepancy_diag;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// CD-k with Langevin negatives.
    Cd,
    SteinCd,
    /// Stein score matching; variant from [`TrainConfig::ssm_variant`].
    Ssm,
    SteinGan,
    /// SteinCD-GAN(α) with α from [`TrainConfig::mix_alpha`].
    Mix,
}

impl Method {
    pub fn needs_generator(self) -> bool {
        matches!(self, Method::SteinGan | Method::Mix)
    }
}

/// Independent random streams derived from the run seed.
#[derive(Clone, Debug)]
pub struct Streams {
    pub shuffle: RngStream,
    pub noise: RngStream,
    pub mix: RngStream,
    pub langevin: RngStream,
    pub metrics: RngStream,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let root = RngStream::new(seed);
        Self {
            shuffle: root.split(0),
            noise: root.split(1),
            mix: root.split(2),
            langevin: root.split(4),
            metrics: root.split(6),
        }
    }
}

/// Stream for initializing the energy-model parameters of a run.
pub fn theta_init_stream(seed: u64) -> RngStream {
    RngStream::new(seed).split(3)
}

/// Stream for initializing the generator of a run.
pub fn generator_init_stream(seed: u64) -> RngStream {
    RngStream::new(seed).split(5)
}

#[derive(Clone, Debug)]
pub struct GeneratorState {
    pub generator: MlpGenerator,
    pub optimizer: OptimizerState,
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub theta: ParamVector,
    pub theta_optimizer: OptimizerState,
    pub generator: Option<GeneratorState>,
    pub iteration: usize,
    pub streams: Streams,
    pub config: TrainConfig,
    pub kernel: KernelSpec,
}

impl TrainState {
    pub fn new<M: EnergyModel + ?Sized>(
        model: &M,
        theta: ParamVector,
        generator: Option<MlpGenerator>,
        config: TrainConfig,
        kernel: KernelSpec,
    ) -> Result<Self> {
        check_dim(model.num_params(), theta.len())?;
        let generator = match generator {
            Some(g) => {
                check_dim(model.dim(), g.output_dim())?;
                let optimizer = OptimizerState::new(config.optimizer, g.params().layout());
                Some(GeneratorState { generator: g, optimizer })
            }
            None => None,
        };
        Ok(Self {
            theta_optimizer: OptimizerState::new(config.optimizer, theta.layout()),
            theta,
            generator,
            iteration: 0,
            streams: Streams::new(config.seed),
            config,
            kernel,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterationKind {
    Cd,
    SteinCd,
    Ssm,
    SteinGan,
}

/// What one iteration did.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub kind: IterationKind,
    pub negatives: ParticleBatch,
    pub mean_f_real: f64,
    pub mean_f_fake: f64,
    /// Whether the faster discount was used (SteinGAN iterations only).
    pub speedup: bool,
}

impl IterationReport {
    fn from_update(kind: IterationKind, out: UpdateOutcome) -> Self {
        Self {
            kind,
            mean_f_real: out.mean_f_positive,
            mean_f_fake: out.mean_f_negative,
            negatives: out.negatives,
            speedup: false,
        }
    }
}

/// `mean ∇_θ f(x⁺) − (1 − γ) mean ∇_θ f(x⁻)`.
pub fn discounted_direction<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    positives: &ParticleBatch,
    negatives: &ParticleBatch,
    gamma: f64,
) -> Result<ParamVector> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), positives.dim())?;
    check_dim(model.dim(), negatives.dim())?;
    let pos = model.mean_grad_theta(theta, positives);
    let neg = model.mean_grad_theta(theta, negatives);
    pos.add_scaled(-(1.0 - gamma), &neg)
}

/// Ascent step along [`discounted_direction`]; returns the new θ and the direction.
pub fn theta_update_discounted<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    positives: &ParticleBatch,
    negatives: &ParticleBatch,
    gamma: f64,
    lr: f64,
    optimizer: &mut OptimizerState,
) -> Result<(ParamVector, ParamVector)> {
    let direction = discounted_direction(model, theta, positives, negatives, gamma)?;
    let theta = optimizer_step(optimizer, theta, &direction, lr)?;
    Ok((theta, direction))
}

/// One SteinGAN iteration: draw noise, move the generator along the SVGD
/// velocity of its outputs, then update θ with those outputs as negatives.
///
/// The discount switches to `speedup_discount` when the real minibatch has
/// lower mean `f` (higher energy) than the generated one.
pub fn steingan_iteration<M: EnergyModel + ?Sized>(
    state: &mut TrainState,
    model: &M,
    positives: &ParticleBatch,
) -> Result<IterationReport> {
    let gen_state = state
        .generator
        .as_mut()
        .ok_or_else(|| Error::InvalidArgument("SteinGAN iteration needs a generator".into()))?;
    if positives.is_empty() {
        return Err(Error::EmptyInput);
    }
    let noise = sample_noise(positives.len(), gen_state.generator.noise_dim(), &mut state.streams.noise);
    let step = amortized_update_chain(
        &gen_state.generator,
        model,
        &state.theta,
        &noise,
        &state.kernel,
        state.config.generator_lr,
        &mut gen_state.optimizer,
    )?;
    gen_state.generator = step.generator;
    let negatives = step.samples;

    let mean_f_real = model.mean_f(&state.theta, positives);
    let mean_f_fake = model.mean_f(&state.theta, &negatives);
    let speedup = mean_f_real < mean_f_fake;
    let gamma = if speedup { state.config.speedup_discount } else { state.config.discount };
    let (theta, _) = theta_update_discounted(
        model,
        &state.theta,
        positives,
        &negatives,
        gamma,
        state.config.theta_lr,
        &mut state.theta_optimizer,
    )?;
    state.theta = theta;
    state.iteration += 1;
    Ok(IterationReport { kind: IterationKind::SteinGan, negatives, mean_f_real, mean_f_fake, speedup })
}

/// One SteinCD iteration on the state's θ.
pub fn steincd_iteration<M: EnergyModel + ?Sized>(
    state: &mut TrainState,
    model: &M,
    positives: &ParticleBatch,
) -> Result<IterationReport> {
    let out = steincd_update(model, &state.theta, &mut state.theta_optimizer, positives, &state.kernel, &state.config)?;
    state.theta = out.theta.clone();
    state.iteration += 1;
    Ok(IterationReport::from_update(IterationKind::SteinCd, out))
}

/// SteinCD-GAN(α): one uniform draw per iteration (always consumed); below
/// `alpha` the iteration is SteinCD and the generator is left alone,
/// otherwise it is a full SteinGAN iteration.
pub fn steincd_gan_mix_iteration<M: EnergyModel + ?Sized>(
    state: &mut TrainState,
    model: &M,
    positives: &ParticleBatch,
    alpha: f64,
) -> Result<IterationReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("mixing probability must lie in [0, 1], got {alpha}")));
    }
    let u = state.streams.mix.uniform();
    if u < alpha {
        steincd_iteration(state, model, positives)
    } else {
        steingan_iteration(state, model, positives)
    }
}

/// Dispatches one iteration of `method`.
pub fn run_iteration<M: EnergyModel + ?Sized>(
    state: &mut TrainState,
    model: &M,
    method: Method,
    positives: &ParticleBatch,
) -> Result<IterationReport> {
    match method {
        Method::Cd => {
            let out = cd_k_update(
                model,
                &state.theta,
                &mut state.theta_optimizer,
                positives,
                &state.config,
                &mut state.streams.langevin,
            )?;
            state.theta = out.theta.clone();
            state.iteration += 1;
            Ok(IterationReport::from_update(IterationKind::Cd, out))
        }
        Method::SteinCd => steincd_iteration(state, model, positives),
        Method::Ssm => {
            let out = stein_score_matching_update(
                model,
                &state.theta,
                &mut state.theta_optimizer,
                positives,
                &state.kernel,
                &state.config,
                state.config.ssm_variant,
            )?;
            state.theta = out.theta.clone();
            state.iteration += 1;
            Ok(IterationReport::from_update(IterationKind::Ssm, out))
        }
        Method::SteinGan => steingan_iteration(state, model, positives),
        Method::Mix => {
            let alpha = state.config.mix_alpha;
            steincd_gan_mix_iteration(state, model, positives, alpha)
        }
    }
}

/// Epoch-wise shuffled minibatch indices.
#[derive(Clone, Debug)]
pub struct Minibatcher {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
}

impl Minibatcher {
    /// Batches of `min(size, n)` indices into a dataset of `n` points.
    pub fn new(n: usize, size: usize) -> Result<Self> {
        if n == 0 || size == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self { order: (0..n).collect(), cursor: n, size: size.min(n) })
    }

    /// Next batch; reshuffles with `rng` whenever fewer than a full batch remains.
    pub fn next_batch(&mut self, rng: &mut RngStream) -> &[usize] {
        if self.cursor + self.size > self.order.len() {
            self.order.sort_unstable();
            rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.size;
        &self.order[start..self.cursor]
    }
}

/// What to measure at each metrics checkpoint.
#[derive(Clone, Debug)]
pub struct EvalSpec {
    /// Record every `cadence` iterations (and after the last one).
    pub cadence: usize,
    pub test: Option<ParticleBatch>,
    /// Mode centers and radius for the coverage metric.
    pub modes: Option<(Vec<Vec<f64>>, f64)>,
    /// Generator samples drawn per metrics record.
    pub samples: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { cadence: 100, test: None, modes: None, samples: 500 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricsRecord>,
}

fn nan_on_err(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn record_metrics<M: EnergyModel + ?Sized>(
    state: &mut TrainState,
    model: &M,
    positives: &ParticleBatch,
    report: &IterationReport,
    eval: &EvalSpec,
    started: &Instant,
) -> Result<MetricsRecord> {
    let samples = match &state.generator {
        Some(g) if eval.samples > 0 => {
            let noise = sample_noise(eval.samples, g.generator.noise_dim(), &mut state.streams.metrics);
            g.generator.forward_batch(&noise)?
        }
        _ => report.negatives.clone(),
    };
    let reference = eval.test.as_ref().unwrap_or(positives);
    let test_ll = match &eval.test {
        Some(test) => nan_on_err(test_log_likelihood(model, &state.theta, test)),
        None => f64::NAN,
    };
    let coverage = match &eval.modes {
        Some((centers, radius)) => nan_on_err(mode_coverage(&samples, centers, *radius)),
        None => f64::NAN,
    };
    Ok(MetricsRecord {
        iteration: state.iteration,
        test_log_likelihood: test_ll,
        stein_discrepancy: nan_on_err(stein_discrepancy_diag(model, &state.theta, reference, &state.kernel)),
        moment_gap: nan_on_err(moment_gap(model, &state.theta, positives, &samples)),
        mode_coverage: coverage,
        avg_pairwise_dist: nan_on_err(avg_pairwise_distance(&samples)),
        mean_f_real: report.mean_f_real,
        mean_f_fake: report.mean_f_fake,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Runs `state.config.iterations` iterations of `method` over `dataset`.
///
/// `observer` sees the state after every iteration. Fails with
/// [`Error::Diverged`] as soon as θ or the generator stops being finite.
pub fn train<M: EnergyModel + ?Sized>(
    model: &M,
    dataset: &ParticleBatch,
    mut state: TrainState,
    method: Method,
    eval: &EvalSpec,
    mut observer: Option<&mut dyn FnMut(&TrainState)>,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), dataset.dim())?;
    if method.needs_generator() && state.generator.is_none() {
        return Err(Error::InvalidArgument(format!("{method:?} training needs a generator")));
    }
    let cadence = eval.cadence.max(1);
    let total = state.config.iterations;
    let mut batches = Minibatcher::new(dataset.len(), state.config.minibatch)?;
    let mut metrics = Vec::with_capacity(total.div_ceil(cadence));
    let started = Instant::now();
    for t in 1..=total {
        let positives = dataset.select(batches.next_batch(&mut state.streams.shuffle));
        let report = run_iteration(&mut state, model, method, &positives)?;
        let gen_finite = state.generator.as_ref().is_none_or(|g| g.generator.params().all_finite());
        if !state.theta.all_finite() || !gen_finite {
            return Err(Error::Diverged { iteration: state.iteration });
        }
        if let Some(obs) = observer.as_mut() {
            obs(&state);
        }
        if t % cadence == 0 || t == total {
            metrics.push(record_metrics(&mut state, model, &positives, &report, eval, &started)?);
        }
    }
    Ok(TrainOutcome { state, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{DiagGaussian, DiagGaussianParams, GbRbm, GbRbmParams};
    use crate::learners::OptimizerKind;

    fn rbm_problem(seed: u64) -> (GbRbm, ParamVector, ParticleBatch) {
        let mut rng = RngStream::new(seed);
        let truth = GbRbmParams::random(2, 2, 0.8, &mut rng);
        let data = crate::energy::rbm_gibbs_sample(&truth, 300, 50, 2, &mut rng).unwrap();
        let init = GbRbmParams::random(2, 2, 0.1, &mut theta_init_stream(seed));
        (GbRbm::new(2, 2).unwrap(), init.to_param_vector(), data)
    }

    fn gan_state(model: &GbRbm, theta: &ParamVector, config: TrainConfig) -> TrainState {
        let gen = MlpGenerator::new(3, &[8, 2], &mut generator_init_stream(config.seed)).unwrap();
        TrainState::new(model, theta.clone(), Some(gen), config, KernelSpec::rbf_median()).unwrap()
    }

    #[test]
    fn discount_endpoints_and_linearity() {
        let (model, theta, data) = rbm_problem(1);
        let pos = data.select(&(0..50).collect::<Vec<_>>());
        let neg = data.select(&(50..120).collect::<Vec<_>>());
        let d0 = discounted_direction(&model, &theta, &pos, &neg, 0.0).unwrap();
        let mle = crate::learners::mle_gradient(&model, &theta, &pos, &neg).unwrap();
        assert_eq!(d0, mle);
        let d1 = discounted_direction(&model, &theta, &pos, &neg, 1.0).unwrap();
        assert_eq!(d1, model.mean_grad_theta(&theta, &pos));
        let neg_mean = model.mean_grad_theta(&theta, &neg);
        for gamma in [0.3, 0.7] {
            let dg = discounted_direction(&model, &theta, &pos, &neg, gamma).unwrap();
            let lin = d0.add_scaled(gamma, &neg_mean).unwrap();
            for (a, b) in dg.as_slice().iter().zip(lin.as_slice()) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn discounted_direction_is_regularized_likelihood_gradient() {
        let model = DiagGaussian::new(2);
        let params = DiagGaussianParams { mean: vec![0.3, -0.2], log_var: vec![0.1, -0.4] };
        let theta = params.to_param_vector();
        let pos = DiagGaussianParams { mean: vec![1.0, 0.0], log_var: vec![0.0, 0.0] }.sample(200, &mut RngStream::new(2));
        let n = 10_000;
        let neg = params.sample(n, &mut RngStream::new(3));
        for gamma in [0.0, 0.5, 0.7, 1.0] {
            let dir = discounted_direction(&model, &theta, &pos, &neg, gamma).unwrap();
            // ∇ log Z: zero for the mean block, 1/2 per log-variance
            let exact = model.mean_grad_theta(&theta, &pos);
            let mut analytic = exact.as_slice().to_vec();
            for v in &mut analytic[2..] {
                *v -= (1.0 - gamma) * 0.5;
            }
            for (k, (a, b)) in dir.as_slice().iter().zip(&analytic).enumerate() {
                // sd of ∇θ f under the model: 1/σ for means, 1/√2 for log-variances
                let sd = if k < 2 { (-0.5 * params.log_var[k]).exp() } else { 0.5f64.sqrt() };
                let se = (1.0 - gamma) * sd / (n as f64).sqrt();
                assert!((a - b).abs() <= 5.0 * se + 1e-12, "γ={gamma} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_rates_leave_state_unchanged() {
        let (model, theta, data) = rbm_problem(4);
        let config = TrainConfig { theta_lr: 0.0, generator_lr: 0.0, minibatch: 20, ..TrainConfig::default() };
        let mut state = gan_state(&model, &theta, config);
        let gen_before = state.generator.as_ref().unwrap().generator.clone();
        let pos = data.select(&(0..20).collect::<Vec<_>>());
        steingan_iteration(&mut state, &model, &pos).unwrap();
        assert_eq!(state.theta, theta);
        assert_eq!(state.generator.as_ref().unwrap().generator, gen_before);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn steingan_iteration_is_reproducible() {
        let (model, theta, data) = rbm_problem(5);
        let config = TrainConfig { minibatch: 20, ..TrainConfig::default() };
        let pos = data.select(&(0..20).collect::<Vec<_>>());
        let run = || {
            let mut s = gan_state(&model, &theta, config.clone());
            steingan_iteration(&mut s, &model, &pos).unwrap();
            (s.theta, s.generator.unwrap().generator)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn speedup_triggers_iff_real_f_is_lower() {
        let (model, theta, data) = rbm_problem(6);
        let config = TrainConfig { minibatch: 30, ..TrainConfig::default() };
        let mut state = gan_state(&model, &theta, config);
        let mut batches = Minibatcher::new(data.len(), 30).unwrap();
        let mut shuffle = RngStream::new(1);
        for _ in 0..30 {
            let pos = data.select(batches.next_batch(&mut shuffle));
            let report = steingan_iteration(&mut state, &model, &pos).unwrap();
            assert_eq!(report.speedup, report.mean_f_real < report.mean_f_fake);
        }
    }

    #[test]
    fn speedup_uses_faster_discount() {
        // Recompute the θ step for both discounts and check which one was taken.
        let (model, theta, data) = rbm_problem(7);
        let config = TrainConfig { minibatch: 25, optimizer: OptimizerKind::Sgd, theta_lr: 0.1, ..TrainConfig::default() };
        let pos = data.select(&(0..25).collect::<Vec<_>>());
        let mut state = gan_state(&model, &theta, config.clone());
        let report = steingan_iteration(&mut state, &model, &pos).unwrap();
        let gamma = if report.speedup { config.speedup_discount } else { config.discount };
        let dir = discounted_direction(&model, &theta, &pos, &report.negatives, gamma).unwrap();
        assert_eq!(state.theta, theta.add_scaled(0.1, &dir).unwrap());
    }

    #[test]
    fn mix_fraction_concentrates() {
        let (model, theta, data) = rbm_problem(8);
        let config = TrainConfig { minibatch: 10, theta_lr: 1e-3, seed: 3, ..TrainConfig::default() };
        let mut state = gan_state(&model, &theta, config);
        let pos = data.select(&(0..10).collect::<Vec<_>>());
        let mut cd = 0;
        for _ in 0..1000 {
            if steincd_gan_mix_iteration(&mut state, &model, &pos, 0.25).unwrap().kind == IterationKind::SteinCd {
                cd += 1;
            }
        }
        let frac = cd as f64 / 1000.0;
        assert!((0.20..=0.30).contains(&frac), "{frac}");
    }

    #[test]
    fn mix_endpoints_match_pure_methods() {
        let (model, theta, data) = rbm_problem(9);
        let config = TrainConfig { minibatch: 20, iterations: 30, seed: 11, ..TrainConfig::default() };
        let trajectory = |method: Method, alpha: f64| {
            let cfg = TrainConfig { mix_alpha: alpha, ..config.clone() };
            let state = gan_state(&model, &theta, cfg);
            let mut thetas = Vec::new();
            let mut obs = |s: &TrainState| thetas.push(s.theta.clone());
            train(&model, &data, state, method, &EvalSpec::default(), Some(&mut obs)).unwrap();
            thetas
        };
        assert_eq!(trajectory(Method::Mix, 1.0), trajectory(Method::SteinCd, 1.0));
        assert_eq!(trajectory(Method::Mix, 0.0), trajectory(Method::SteinGan, 0.0));
        assert_ne!(trajectory(Method::Mix, 0.5), trajectory(Method::SteinCd, 0.5));
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let (model, theta, data) = rbm_problem(10);
        let config = TrainConfig { iterations: 0, ..TrainConfig::default() };
        let state = TrainState::new(&model, theta.clone(), None, config, KernelSpec::rbf_median()).unwrap();
        let out = train(&model, &data, state, Method::SteinCd, &EvalSpec::default(), None).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.state.theta, theta);
    }

    #[test]
    fn metrics_row_count_is_ceiling() {
        let (model, theta, data) = rbm_problem(11);
        for (iters, cadence) in [(10usize, 3usize), (9, 3), (1, 5), (7, 1)] {
            let config = TrainConfig { iterations: iters, minibatch: 20, ..TrainConfig::default() };
            let state = TrainState::new(&model, theta.clone(), None, config, KernelSpec::rbf_median()).unwrap();
            let eval = EvalSpec { cadence, ..EvalSpec::default() };
            let out = train(&model, &data, state, Method::Cd, &eval, None).unwrap();
            assert_eq!(out.metrics.len(), iters.div_ceil(cadence));
            assert_eq!(out.metrics.last().unwrap().iteration, iters);
        }
    }

    #[test]
    fn train_rejects_dimension_mismatch_and_missing_generator() {
        let (model, theta, _) = rbm_problem(12);
        let state = TrainState::new(&model, theta.clone(), None, TrainConfig::default(), KernelSpec::rbf_median()).unwrap();
        let wrong = ParticleBatch::zeros(10, 3).unwrap();
        assert!(train(&model, &wrong, state.clone(), Method::SteinCd, &EvalSpec::default(), None).is_err());
        let data = ParticleBatch::zeros(10, 2).unwrap();
        assert!(train(&model, &data, state, Method::SteinGan, &EvalSpec::default(), None).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (model, theta, data) = rbm_problem(13);
        let config = TrainConfig {
            iterations: 50,
            minibatch: 20,
            optimizer: OptimizerKind::Sgd,
            theta_lr: 1e300,
            ..TrainConfig::default()
        };
        let state = TrainState::new(&model, theta, None, config, KernelSpec::rbf_median()).unwrap();
        let err = train(&model, &data, state, Method::Cd, &EvalSpec::default(), None).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn minibatcher_covers_each_epoch() {
        let mut mb = Minibatcher::new(10, 5).unwrap();
        let mut rng = RngStream::new(1);
        let mut seen: Vec<usize> = mb.next_batch(&mut rng).to_vec();
        seen.extend_from_slice(mb.next_batch(&mut rng));
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(Minibatcher::new(3, 100).unwrap().next_batch(&mut rng).len(), 3);
    }
}
