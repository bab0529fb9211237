//! Stage 2: the discriminator-derived barrier, generator retraining against
//! objective + barrier with a geometric lambda schedule, and the
//! epsilon-optimality certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{coverage_of_points, GanModel, Scaler};
use crate::matrix::Matrix2;
use crate::nn::{Activation, AdamHyper, AdamState, Mlp, SIGMOID_CLAMP};
use crate::objectives::Objective;
use crate::regions::Region;
use crate::rng::RandomStream;
use crate::scalar::Real;

/// Frozen-discriminator barrier B(x) = -log D(x). Clamping of the sigmoid
/// output keeps B finite everywhere.
#[derive(Debug, Clone)]
pub struct Barrier<F> {
    discriminator: Mlp<F>,
    scaler: Scaler<F>,
    clamp_floor: F,
}

impl<F: Real> Barrier<F> {
    /// Snapshot of the model's discriminator.
    pub fn from_model(model: &GanModel<F>) -> Self {
        Self {
            discriminator: model.discriminator.clone(),
            scaler: model.scaler.clone(),
            clamp_floor: F::from_f64_c(SIGMOID_CLAMP),
        }
    }

    fn clamped_score(&self, x: &[F]) -> Result<F> {
        let u = self.scaler.to_normalized(x);
        let m = Matrix2::from_vec(1, u.len(), u)?;
        let s = self.discriminator.eval(&m)?.get(0, 0);
        Ok(num_traits::clamp(s, self.clamp_floor, F::one() - self.clamp_floor))
    }

    /// B(x) = -log of the clamped discriminator score.
    pub fn value(&self, x: &[F]) -> Result<F> {
        Ok(-self.clamped_score(x)?.ln())
    }

    /// log D(x) with clamping (always finite).
    pub fn log_score(&self, x: &[F]) -> Result<F> {
        Ok(self.clamped_score(x)?.ln())
    }
}

/// The modified objective f(x) + lambda (delta + B(x)). During training
/// delta = 0; the delta shift only moves the value by the constant
/// lambda*delta and never the argmin.
pub fn modified_objective<F: Real>(
    f: &Objective<F>,
    barrier: &Barrier<F>,
    lambda: F,
    delta: F,
    x: &[F],
) -> Result<F> {
    if lambda < F::zero() {
        return Err(Error::Config("lambda must be nonnegative".into()));
    }
    Ok(f.eval(x) + lambda * (delta + barrier.value(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorOptimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    /// Initial dual parameter, > 0.
    pub lambda0: f64,
    /// Geometric growth rate, > 1 (exactly 1 freezes the schedule).
    pub mu: f64,
    pub outer_iterations: usize,
    pub inner_steps: usize,
    pub batch_size: usize,
    pub gen_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Convergence window (outer iterations) and relative tolerance on the
    /// windowed mean objective. Tolerance 0 disables early stopping.
    pub convergence_window: usize,
    pub convergence_tolerance: f64,
    /// Samples per outer iteration used for the logged diagnostics.
    pub eval_samples: usize,
    /// Optimizer for the stage-2 generator updates. Adam converges fastest
    /// but its per-parameter normalization keeps amplifying vanishing
    /// gradients, which lets a converged majority mode slowly drag minority
    /// modes along shared parameters; plain SGD becomes quiescent at
    /// equilibrium and preserves disconnected optima.
    #[serde(default)]
    pub generator_optimizer: GeneratorOptimizer,
    /// Per-sample clip on the L2 norm of the objective gradient; 0 disables.
    /// Objectives with very different gradient scales (linear ~1, bilinear
    /// ~10, rosenbrock ~1e3) otherwise overwhelm the learned barrier during
    /// the low-lambda warm-up, dragging the whole distribution outside the
    /// region before the schedule can push back.
    #[serde(default)]
    pub objective_grad_clip: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.05,
            mu: 1.01,
            outer_iterations: 300,
            inner_steps: 200,
            batch_size: 256,
            gen_learning_rate: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            convergence_window: 5,
            convergence_tolerance: 1e-3,
            eval_samples: 512,
            generator_optimizer: GeneratorOptimizer::Adam,
            objective_grad_clip: 0.0,
        }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda0 <= 0.0 {
            return Err(Error::Config("lambda0 must be > 0".into()));
        }
        if self.mu < 1.0 {
            return Err(Error::Config("mu must be >= 1".into()));
        }
        if self.convergence_window == 0 {
            return Err(Error::Config("convergence_window must be >= 1".into()));
        }
        if self.objective_grad_clip < 0.0 {
            return Err(Error::Config("objective_grad_clip must be >= 0".into()));
        }
        Ok(())
    }

    /// Strict validation for full runs: the schedule must actually grow.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        if self.mu <= 1.0 {
            return Err(Error::Config("mu must be > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage2LogRow {
    pub outer_iter: usize,
    pub lambda: f64,
    pub mean_f: f64,
    pub mean_barrier: f64,
    pub coverage: f64,
    /// Set when generator coverage dropped below 10%.
    pub collapse_warning: bool,
}

/// Retrains the generator over minibatch estimates of
/// `E[f(G(z)) + lambda B(G(z))]` with the discriminator frozen; lambda grows
/// by `mu` after every outer iteration. Latent batches are resampled each
/// inner step.
pub fn train_stage2<F: Real>(
    model: &mut GanModel<F>,
    f: &Objective<F>,
    region: &Region<F>,
    cfg: &BarrierConfig,
    rng: &mut RandomStream,
) -> Result<Vec<Stage2LogRow>> {
    cfg.validate()?;
    if f.dimension != model.point_dim() {
        return Err(Error::shape("train_stage2", model.point_dim(), f.dimension));
    }
    let disc_before = model.discriminator.flat_params();
    let mut gen_adam = AdamState::new(
        model.generator.param_count(),
        AdamHyper::new(cfg.gen_learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8),
    );
    let one = F::one();
    let b = cfg.batch_size;
    let n = F::from_usize(b.max(1)).unwrap();
    let mut log: Vec<Stage2LogRow> = Vec::new();
    let mut mean_f_history: Vec<f64> = Vec::new();

    // The barrier gradient is taken through the logit head: with
    // B = -log sigmoid(z) = softplus(-z), dB/dz = -sigmoid(-z), which stays
    // O(1) outside the feasible set where the clamped score saturates and
    // d(-log s)/ds * s' would underflow to zero. The sigmoid head is
    // restored after training.
    let head_idx = model.discriminator.layers().len() - 1;
    let head = model.discriminator.layers()[head_idx].activation;
    model.discriminator.layers_mut()[head_idx].activation = Activation::Identity;

    for outer in 0..cfg.outer_iterations {
        let lambda = F::from_f64_c(cfg.lambda0 * cfg.mu.powi(outer as i32));
        for _ in 0..cfg.inner_steps {
            let z = Matrix2::from_fn(b, model.latent_dim, |_, _| rng.standard_normal());
            let u = model.generator.forward(&z)?;
            let logits = model.discriminator.forward(&u)?;
            // d(mean lambda*softplus(-z))/dz_i = -lambda*sigmoid(-z_i)/n
            let mut dp = Matrix2::zeros(b, 1);
            for i in 0..b {
                let zi = logits.get(i, 0);
                dp.set(i, 0, -lambda / (n * (one + zi.exp())));
            }
            let mut du = model.discriminator.backward(&dp)?;
            // objective gradient (optionally norm-clipped per sample),
            // chained through x = center + half ⊙ u
            let clip = F::from_f64_c(cfg.objective_grad_clip);
            for i in 0..b {
                let x = model.scaler.to_data(u.row(i));
                let mut g = f.grad(&x);
                if clip > F::zero() {
                    let norm = g.iter().map(|&v| v * v).sum::<F>().sqrt();
                    if norm > clip {
                        let scale = clip / norm;
                        for v in &mut g {
                            *v *= scale;
                        }
                    }
                }
                for (j, gj) in g.iter().enumerate() {
                    let v = du.get(i, j) + *gj * model.scaler.half[j] / n;
                    du.set(i, j, v);
                }
            }
            if !du.is_finite() {
                return Err(Error::Training {
                    stage: "stage2",
                    iteration: outer,
                    message: "non-finite generator gradient".into(),
                });
            }
            model.generator.backward(&du)?;
            match cfg.generator_optimizer {
                GeneratorOptimizer::Adam => model.generator.apply_adam(&mut gen_adam)?,
                GeneratorOptimizer::Sgd => model
                    .generator
                    .apply_sgd(F::from_f64_c(cfg.gen_learning_rate))?,
            }
        }

        // frozen-parameter diagnostics on a fresh sample; the head is still
        // Identity here, so B is the numerically stable softplus(-z)
        let pts = model.generate(cfg.eval_samples.max(1), rng)?;
        let logits = model
            .discriminator
            .eval(&model.scaler.matrix_to_normalized(&pts))?;
        let mut mean_f = F::zero();
        let mut mean_b = F::zero();
        for (i, row) in pts.iter_rows().enumerate() {
            mean_f += f.eval(row);
            mean_b += softplus(-logits.get(i, 0));
        }
        let m = F::from_usize(pts.rows()).unwrap();
        mean_f /= m;
        mean_b /= m;
        if !mean_f.is_finite() || !mean_b.is_finite() {
            return Err(Error::Training {
                stage: "stage2",
                iteration: outer,
                message: "non-finite loss diagnostics".into(),
            });
        }
        let coverage = coverage_of_points(&pts, region)?.fraction_feasible;
        log.push(Stage2LogRow {
            outer_iter: outer,
            lambda: lambda.to_f64_c(),
            mean_f: mean_f.to_f64_c(),
            mean_barrier: mean_b.to_f64_c(),
            coverage,
            collapse_warning: coverage < 0.1,
        });
        mean_f_history.push(mean_f.to_f64_c());

        // windowed relative-improvement stop on the mean objective; a
        // generator that is mostly infeasible has not converged no matter
        // how flat its objective trace is (lambda still needs to grow)
        let w = cfg.convergence_window;
        if cfg.convergence_tolerance > 0.0
            && coverage >= STAGE2_EARLY_STOP_MIN_COVERAGE
            && mean_f_history.len() >= 2 * w
        {
            let len = mean_f_history.len();
            let prev: f64 = mean_f_history[len - 2 * w..len - w].iter().sum::<f64>() / w as f64;
            let cur: f64 = mean_f_history[len - w..].iter().sum::<f64>() / w as f64;
            let improvement = (prev - cur) / prev.abs().max(1e-12);
            if improvement < cfg.convergence_tolerance {
                break;
            }
        }
    }
    model.discriminator.layers_mut()[head_idx].activation = head;
    debug_assert_eq!(disc_before, model.discriminator.flat_params());
    Ok(log)
}

/// ln(1 + e^x) without overflow for large |x|.
fn softplus<F: Real>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Certificate of epsilon-optimality: constants realizing
/// `f(x̃) - epsilon <= f(x*) <= f(x̃)` for the best feasible generated
/// sample x̃.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub x_tilde: Vec<f64>,
    pub lambda_tilde: f64,
    pub delta_tilde: f64,
    pub epsilon: f64,
    pub feasible_flag: bool,
    pub f_at_x_tilde: f64,
    pub log_d_at_x_tilde: f64,
}

/// Early stopping is only considered once at least this fraction of
/// generated samples is feasible.
pub const STAGE2_EARLY_STOP_MIN_COVERAGE: f64 = 0.5;

/// delta_tilde is placed below min(log D(x̃), M) by this margin.
pub const DELTA_MARGIN_M: f64 = -20.0;
const DELTA_SAFETY: f64 = 1.0;

/// Dual weight realizing a target epsilon:
/// `lambda_tilde = -epsilon / (delta_tilde - log D(x̃))`.
pub fn lambda_for_epsilon(epsilon: f64, log_d: f64, delta_tilde: f64) -> f64 {
    -epsilon / (delta_tilde - log_d)
}

/// Selects x̃ = feasible generated sample with minimal f and builds the
/// certificate for the requested epsilon. Fails (reported, not silent) when
/// no feasible sample is found.
pub fn compute_certificate<F: Real>(
    model: &GanModel<F>,
    f: &Objective<F>,
    region: &Region<F>,
    n_samples: usize,
    epsilon_target: f64,
    rng: &mut RandomStream,
) -> Result<Certificate> {
    if epsilon_target <= 0.0 {
        return Err(Error::Config("epsilon_target must be > 0".into()));
    }
    let pts = model.generate(n_samples.max(1), rng)?;
    let mut best: Option<(Vec<F>, F)> = None;
    for row in pts.iter_rows() {
        if region.contains(row)? {
            let v = f.eval(row);
            if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
                best = Some((row.to_vec(), v));
            }
        }
    }
    let (x_tilde, f_val) = best.ok_or_else(|| {
        Error::Certificate(format!(
            "no feasible sample among {n_samples} generator draws; certificate refused"
        ))
    })?;
    let barrier = Barrier::from_model(model);
    let log_d = barrier.log_score(&x_tilde)?.to_f64_c();
    let delta_tilde = log_d.min(DELTA_MARGIN_M) - DELTA_SAFETY;
    let lambda_tilde = lambda_for_epsilon(epsilon_target, log_d, delta_tilde);
    debug_assert!(lambda_tilde > 0.0);
    Ok(Certificate {
        x_tilde: x_tilde.iter().map(|v| v.to_f64_c()).collect(),
        lambda_tilde,
        delta_tilde,
        epsilon: lambda_tilde * (log_d - delta_tilde),
        feasible_flag: true,
        f_at_x_tilde: f_val.to_f64_c(),
        log_d_at_x_tilde: log_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::GanConfig;
    use crate::objectives::{make_quadratic, make_zero};
    use crate::regions::AxisBox;
    use approx::assert_relative_eq;

    fn toy_model(seed: u64) -> GanModel<f64> {
        let cfg = GanConfig {
            latent_dim: 4,
            hidden_width: 16,
            ..GanConfig::default()
        };
        let b = AxisBox::new(vec![-3.0, -3.0], vec![19.0, 19.0]).unwrap();
        GanModel::new(&cfg, &b, &mut RandomStream::new(seed))
    }

    #[test]
    fn barrier_value_examples() {
        // direct arithmetic on the clamped score
        let b = toy_model(1);
        let barrier = Barrier::from_model(&b);
        let x = [5.0, 11.0];
        let s = barrier.clamped_score(&x).unwrap();
        assert_relative_eq!(barrier.value(&x).unwrap(), -s.ln(), max_relative = 1e-15);
        // reference values of -ln at the clamp limits
        assert_relative_eq!(-(0.5f64).ln(), std::f64::consts::LN_2, max_relative = 1e-12);
        assert_relative_eq!(-(1.0 - 1e-7f64).ln(), 1e-7, max_relative = 1e-3);
        assert_relative_eq!(-(1e-7f64).ln(), 16.118, max_relative = 1e-3);
    }

    #[test]
    fn modified_objective_identities() {
        let model = toy_model(2);
        let barrier = Barrier::from_model(&model);
        let f = make_quadratic::<f64>();
        let x = [6.0, 10.0];
        // lambda = 0 → exactly f
        assert_eq!(
            modified_objective(&f, &barrier, 0.0, 0.3, &x).unwrap(),
            f.eval(&x)
        );
        // lambda = 1, delta = 0 → f + B
        assert_relative_eq!(
            modified_objective(&f, &barrier, 1.0, 0.0, &x).unwrap(),
            f.eval(&x) + barrier.value(&x).unwrap(),
            max_relative = 1e-15
        );
        // a delta shift moves the value by exactly lambda*delta
        let lambda = 0.7;
        let delta = -3.25;
        let base = modified_objective(&f, &barrier, lambda, 0.0, &x).unwrap();
        let shifted = modified_objective(&f, &barrier, lambda, delta, &x).unwrap();
        assert_relative_eq!(shifted - base, lambda * delta, max_relative = 1e-12);
    }

    #[test]
    fn delta_shift_preserves_argmin_over_candidates() {
        let model = toy_model(3);
        let barrier = Barrier::from_model(&model);
        let f = make_quadratic::<f64>();
        let candidates = [[5.0, 11.0], [1.0, 10.0], [16.0, 16.0], [9.0, 2.0]];
        let argmin = |delta: f64| {
            candidates
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let va = modified_objective(&f, &barrier, 0.4, delta, *a).unwrap();
                    let vb = modified_objective(&f, &barrier, 0.4, delta, *b).unwrap();
                    va.partial_cmp(&vb).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap()
        };
        assert_eq!(argmin(0.0), argmin(-5.0));
        assert_eq!(argmin(0.0), argmin(12.0));
    }

    #[test]
    fn identity_schedule_leaves_generator_unchanged() {
        let mut model = toy_model(4);
        let before = model.generator.flat_params();
        let cfg = BarrierConfig {
            mu: 1.0,
            inner_steps: 0,
            outer_iterations: 3,
            convergence_tolerance: 0.0,
            ..BarrierConfig::default()
        };
        let region = Region::l_shape();
        let f = make_quadratic::<f64>();
        let mut rng = RandomStream::new(0);
        train_stage2(&mut model, &f, &region, &cfg, &mut rng).unwrap();
        assert_eq!(model.generator.flat_params(), before);
    }

    #[test]
    fn lambda_trajectory_matches_closed_form_and_disc_is_frozen() {
        let mut model = toy_model(5);
        let disc_before = model.discriminator.flat_params();
        let cfg = BarrierConfig {
            lambda0: 0.05,
            mu: 1.07,
            outer_iterations: 12,
            inner_steps: 5,
            batch_size: 16,
            eval_samples: 32,
            convergence_tolerance: 0.0,
            ..BarrierConfig::default()
        };
        let region = Region::l_shape();
        let f = make_quadratic::<f64>();
        let mut rng = RandomStream::new(1);
        let log = train_stage2(&mut model, &f, &region, &cfg, &mut rng).unwrap();
        assert_eq!(log.len(), 12);
        for row in &log {
            let expected = 0.05 * 1.07f64.powi(row.outer_iter as i32);
            assert_relative_eq!(row.lambda, expected, max_relative = 1e-12);
        }
        assert_eq!(model.discriminator.flat_params(), disc_before);
    }

    #[test]
    fn zero_objective_drives_barrier_down() {
        // untrained discriminator still defines a landscape; with f = 0 the
        // generator should drift toward higher D, i.e. mean B trends down
        let mut model = toy_model(6);
        let cfg = BarrierConfig {
            lambda0: 1.0,
            mu: 1.0,
            outer_iterations: 30,
            inner_steps: 40,
            batch_size: 64,
            eval_samples: 256,
            gen_learning_rate: 1e-3,
            convergence_tolerance: 0.0,
            ..BarrierConfig::default()
        };
        let region = Region::l_shape();
        let f = make_zero::<f64>(2);
        let mut rng = RandomStream::new(2);
        let log = train_stage2(&mut model, &f, &region, &cfg, &mut rng).unwrap();
        let head: f64 = log[..5].iter().map(|r| r.mean_barrier).sum::<f64>() / 5.0;
        let tail: f64 = log[log.len() - 5..]
            .iter()
            .map(|r| r.mean_barrier)
            .sum::<f64>()
            / 5.0;
        assert!(tail <= head + 1e-9, "barrier did not trend down: {head} -> {tail}");
    }

    #[test]
    fn certificate_arithmetic() {
        // epsilon 0.1, log D = -0.5, delta = -2 → lambda = 0.0667
        let lambda = lambda_for_epsilon(0.1, -0.5, -2.0);
        assert_relative_eq!(lambda, 0.1 / 1.5, max_relative = 1e-12);
        assert!(lambda > 0.0);
    }

    #[test]
    fn certificate_refused_without_feasible_samples() {
        // untrained generator aimed at a region it cannot hit
        let model = toy_model(7);
        let far = AxisBox::new(vec![1000.0, 1000.0], vec![1001.0, 1001.0]).unwrap();
        let region = Region::union_of_boxes(vec![far]).unwrap();
        let f = make_quadratic::<f64>();
        let mut rng = RandomStream::new(3);
        let res = compute_certificate(&model, &f, &region, 50, 0.5, &mut rng);
        assert!(matches!(res, Err(Error::Certificate(_))));
    }

    #[test]
    fn certificate_invariants_hold_when_feasible() {
        let model = toy_model(8);
        // generous region: the untrained generator output near the scaler
        // center will be feasible
        let region = Region::union_of_boxes(vec![AxisBox::new(
            vec![-100.0, -100.0],
            vec![100.0, 100.0],
        )
        .unwrap()])
        .unwrap();
        let f = make_quadratic::<f64>();
        let mut rng = RandomStream::new(4);
        let cert = compute_certificate(&model, &f, &region, 200, 0.25, &mut rng).unwrap();
        assert!(cert.feasible_flag);
        assert!(cert.lambda_tilde > 0.0);
        assert!(cert.delta_tilde < cert.log_d_at_x_tilde);
        assert_relative_eq!(cert.epsilon, 0.25, max_relative = 1e-12);
        assert!(cert.epsilon > 0.0);
    }
}
