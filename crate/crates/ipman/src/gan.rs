//! Stage 1: train a GAN on feasible samples so the discriminator separates
//! the feasible set from its complement and the generator covers it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::nn::{bce_loss, AdamHyper, AdamState, Activation, Mlp};
use crate::regions::{AxisBox, Region};
use crate::rng::RandomStream;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub batch_size: usize,
    pub total_iterations: usize,
    /// Discriminator steps per generator step.
    pub disc_updates_per_gen_update: usize,
    /// Fraction of training after which infeasible injection begins.
    pub injection_start_fraction: f64,
    /// Fraction of the fake minibatch replaced by infeasible samples.
    pub injection_replace_fraction: f64,
    pub disc_learning_rate: f64,
    pub gen_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub leaky_slope: f64,
    /// Iterations between logged AUC snapshots.
    pub log_every: usize,
    /// Supervised feasible-vs-infeasible fine-tune steps for the
    /// discriminator after the adversarial loop. At GAN equilibrium D tends
    /// to 1/2 with weak logits; the barrier needs the converged classifier,
    /// so this sharpens the boundary without touching the generator.
    #[serde(default = "default_finetune_iterations")]
    pub disc_finetune_iterations: usize,
    #[serde(default = "default_finetune_learning_rate")]
    pub disc_finetune_learning_rate: f64,
}

fn default_finetune_iterations() -> usize {
    2000
}

fn default_finetune_learning_rate() -> f64 {
    1e-3
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden_width: 64,
            batch_size: 64,
            total_iterations: 4000,
            disc_updates_per_gen_update: 10,
            injection_start_fraction: 0.5,
            injection_replace_fraction: 0.5,
            disc_learning_rate: 1e-4,
            gen_learning_rate: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            leaky_slope: 0.2,
            log_every: 100,
            disc_finetune_iterations: default_finetune_iterations(),
            disc_finetune_learning_rate: default_finetune_learning_rate(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disc_updates_per_gen_update < 1 {
            return Err(Error::Config("disc_updates_per_gen_update must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.injection_replace_fraction) {
            return Err(Error::Config("injection_replace_fraction must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.injection_start_fraction) {
            return Err(Error::Config("injection_start_fraction must be in [0,1]".into()));
        }
        if self.batch_size == 0 || self.latent_dim == 0 || self.hidden_width == 0 {
            return Err(Error::Config("gan sizes must be positive".into()));
        }
        if self.disc_finetune_iterations > 0 && self.disc_finetune_learning_rate <= 0.0 {
            return Err(Error::Config(
                "disc_finetune_learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-dimension affine map between data space and the network's normalized
/// coordinates: `x = center + half ⊙ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler<F> {
    pub center: Vec<F>,
    pub half: Vec<F>,
}

impl<F: Real> Scaler<F> {
    pub fn from_box(b: &AxisBox<F>) -> Self {
        let two = F::from_f64_c(2.0);
        let center = b
            .lower
            .iter()
            .zip(&b.upper)
            .map(|(&l, &u)| (l + u) / two)
            .collect();
        let half = b
            .lower
            .iter()
            .zip(&b.upper)
            .map(|(&l, &u)| ((u - l) / two).max(F::from_f64_c(1e-9)))
            .collect();
        Self { center, half }
    }

    pub fn to_normalized(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(&v, (&c, &h))| (v - c) / h)
            .collect()
    }

    pub fn to_data(&self, u: &[F]) -> Vec<F> {
        u.iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(&v, (&c, &h))| c + h * v)
            .collect()
    }

    pub fn matrix_to_normalized(&self, x: &Matrix2<F>) -> Matrix2<F> {
        Matrix2::from_fn(x.rows(), x.cols(), |i, j| {
            (x.get(i, j) - self.center[j]) / self.half[j]
        })
    }

    pub fn matrix_to_data(&self, u: &Matrix2<F>) -> Matrix2<F> {
        Matrix2::from_fn(u.rows(), u.cols(), |i, j| {
            self.center[j] + self.half[j] * u.get(i, j)
        })
    }
}

/// Bound on generator outputs in normalized coordinates. Outputs are
/// confined to the joint data hull: beyond it the discriminator was never
/// trained, its logit flattens, and the barrier loses its restoring
/// gradient. The feasible set sits strictly inside the hull (the hull also
/// spans the inflated infeasible proposals), so everything that matters
/// stays reachable and runaway generators are impossible by construction.
pub const GEN_OUTPUT_SCALE: f64 = 1.0;

/// Generator (latent → point, bounded tanh output in normalized
/// coordinates) and discriminator (point → probability, Sigmoid output).
#[derive(Debug, Clone)]
pub struct GanModel<F> {
    pub generator: Mlp<F>,
    pub discriminator: Mlp<F>,
    pub scaler: Scaler<F>,
    pub latent_dim: usize,
}

impl<F: Real> GanModel<F> {
    pub fn new(cfg: &GanConfig, data_box: &AxisBox<F>, rng: &mut RandomStream) -> Self {
        let dim = data_box.dim();
        let generator = Mlp::one_hidden(
            cfg.latent_dim,
            cfg.hidden_width,
            dim,
            cfg.leaky_slope,
            Activation::ScaledTanh {
                scale: GEN_OUTPUT_SCALE,
            },
            rng,
        );
        let discriminator = Mlp::one_hidden(
            dim,
            cfg.hidden_width,
            1,
            cfg.leaky_slope,
            Activation::Sigmoid,
            rng,
        );
        Self {
            generator,
            discriminator,
            scaler: Scaler::from_box(data_box),
            latent_dim: cfg.latent_dim,
        }
    }

    pub fn point_dim(&self) -> usize {
        self.discriminator.in_dim()
    }

    fn latent_batch(&self, n: usize, rng: &mut RandomStream) -> Matrix2<F> {
        Matrix2::from_fn(n, self.latent_dim, |_, _| rng.standard_normal())
    }

    /// Discriminator scores for data-space points (frozen parameters).
    pub fn disc_scores(&self, x: &Matrix2<F>) -> Result<Matrix2<F>> {
        self.discriminator.eval(&self.scaler.matrix_to_normalized(x))
    }

    pub fn disc_score(&self, x: &[F]) -> Result<F> {
        let m = Matrix2::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.disc_scores(&m)?.get(0, 0))
    }

    /// Draws `n` generator outputs in data space (frozen parameters).
    pub fn generate(&self, n: usize, rng: &mut RandomStream) -> Result<Matrix2<F>> {
        let z = self.latent_batch(n, rng);
        let u = self.generator.eval(&z)?;
        Ok(self.scaler.matrix_to_data(&u))
    }
}

const GAN_MAGIC: &[u8; 8] = b"IPMANGAN";
const GAN_VERSION: u32 = 1;

/// Writes a versioned binary checkpoint of the full model (scaler plus both
/// networks); round-trips bit-exactly.
pub fn save_gan_model<F: Real>(model: &GanModel<F>, w: &mut impl std::io::Write) -> Result<()> {
    use crate::nn::save_mlp;
    w.write_all(GAN_MAGIC)?;
    w.write_all(&GAN_VERSION.to_le_bytes())?;
    w.write_all(&(model.latent_dim as u32).to_le_bytes())?;
    w.write_all(&(model.point_dim() as u32).to_le_bytes())?;
    for v in model.scaler.center.iter().chain(&model.scaler.half) {
        w.write_all(&v.to_f64_c().to_le_bytes())?;
    }
    save_mlp(&model.generator, w)?;
    save_mlp(&model.discriminator, w)?;
    Ok(())
}

pub fn load_gan_model<F: Real>(r: &mut impl std::io::Read) -> Result<GanModel<F>> {
    use crate::nn::load_mlp;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != GAN_MAGIC {
        return Err(Error::Checkpoint("bad magic; not a gan checkpoint".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != GAN_VERSION {
        return Err(Error::Checkpoint(format!("unsupported gan version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let latent_dim = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    let mut read_f64s = |n: usize| -> Result<Vec<F>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            out.push(F::from_f64_c(f64::from_le_bytes(b)));
        }
        Ok(out)
    };
    let center = read_f64s(dim)?;
    let half = read_f64s(dim)?;
    let generator = load_mlp(r)?;
    let discriminator = load_mlp(r)?;
    Ok(GanModel {
        generator,
        discriminator,
        scaler: Scaler { center, half },
        latent_dim,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage1LogRow {
    pub iteration: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
    /// Logged every `log_every` iterations; blank otherwise.
    pub auc_snapshot: Option<f64>,
    pub injection_active: bool,
}

/// Alternates `disc_updates_per_gen_update` discriminator steps with one
/// generator step (non-saturating loss). After `injection_start_fraction` of
/// the iterations, part of each fake minibatch is replaced by rows of the
/// infeasible dataset.
pub fn train_stage1<F: Real>(
    feasible: &Matrix2<F>,
    infeasible: &Matrix2<F>,
    cfg: &GanConfig,
    rng: &mut RandomStream,
) -> Result<(GanModel<F>, Vec<Stage1LogRow>)> {
    cfg.validate()?;
    if feasible.rows() == 0 {
        return Err(Error::Config("feasible dataset is empty".into()));
    }
    if cfg.injection_replace_fraction > 0.0 && infeasible.rows() == 0 {
        return Err(Error::Config(
            "injection requested but infeasible dataset is empty".into(),
        ));
    }
    let dim = feasible.cols();
    // the scaler must cover both datasets; take their joint hull
    let mut lower = feasible.row(0).to_vec();
    let mut upper = feasible.row(0).to_vec();
    for set in [feasible, infeasible] {
        for row in set.iter_rows() {
            for j in 0..dim {
                lower[j] = lower[j].min(row[j]);
                upper[j] = upper[j].max(row[j]);
            }
        }
    }
    let data_box = AxisBox::new(lower, upper)?;
    let mut model = GanModel::new(cfg, &data_box, rng);
    let mut disc_adam = AdamState::new(
        model.discriminator.param_count(),
        AdamHyper::new(cfg.disc_learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8),
    );
    let mut gen_adam = AdamState::new(
        model.generator.param_count(),
        AdamHyper::new(cfg.gen_learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8),
    );

    let feas_norm = model.scaler.matrix_to_normalized(feasible);
    let infeas_norm = if infeasible.rows() > 0 {
        model.scaler.matrix_to_normalized(infeasible)
    } else {
        Matrix2::zeros(0, dim)
    };

    let b = cfg.batch_size;
    let injection_start =
        (cfg.injection_start_fraction * cfg.total_iterations as f64).floor() as usize;
    let n_inject = (cfg.injection_replace_fraction * b as f64).round() as usize;
    let mut labels = vec![F::one(); 2 * b];
    labels[b..].fill(F::zero());

    let mut log = Vec::with_capacity(cfg.total_iterations);
    for iter in 0..cfg.total_iterations {
        let injection_active =
            cfg.injection_replace_fraction > 0.0 && iter >= injection_start;
        let mut disc_loss = F::zero();
        for _ in 0..cfg.disc_updates_per_gen_update {
            let mut batch = Matrix2::zeros(2 * b, dim);
            for i in 0..b {
                let r = rng.index(feas_norm.rows());
                batch.row_mut(i).copy_from_slice(feas_norm.row(r));
            }
            let z = model.latent_batch(b, rng);
            let fake = model.generator.eval(&z)?;
            for i in 0..b {
                batch.row_mut(b + i).copy_from_slice(fake.row(i));
            }
            if injection_active {
                for i in 0..n_inject {
                    let r = rng.index(infeas_norm.rows());
                    batch.row_mut(b + i).copy_from_slice(infeas_norm.row(r));
                }
            }
            let preds = model.discriminator.forward(&batch)?;
            let (loss, grad) = bce_loss(&preds, &labels)?;
            model.discriminator.backward(&grad)?;
            model.discriminator.apply_adam(&mut disc_adam)?;
            disc_loss = loss;
        }

        // generator step: non-saturating loss -mean(log D(G(z)))
        let z = model.latent_batch(b, rng);
        let u = model.generator.forward(&z)?;
        let preds = model.discriminator.forward(&u)?;
        let n = F::from_usize(b).unwrap();
        let mut gen_loss = F::zero();
        let mut dp = Matrix2::zeros(b, 1);
        for i in 0..b {
            let p = preds.get(i, 0);
            gen_loss += -p.ln() / n;
            dp.set(i, 0, -F::one() / (p * n));
        }
        let du = model.discriminator.backward(&dp)?;
        model.generator.backward(&du)?;
        model.generator.apply_adam(&mut gen_adam)?;

        if !disc_loss.is_finite() || !gen_loss.is_finite() {
            return Err(Error::Training {
                stage: "stage1",
                iteration: iter,
                message: format!("non-finite loss (disc {disc_loss}, gen {gen_loss})"),
            });
        }

        let auc_snapshot = if iter % cfg.log_every == 0 || iter + 1 == cfg.total_iterations {
            if infeasible.rows() > 0 {
                Some(discriminator_auc(&model, feasible, infeasible)?)
            } else {
                None
            }
        } else {
            None
        };
        log.push(Stage1LogRow {
            iteration: iter,
            disc_loss: disc_loss.to_f64_c(),
            gen_loss: gen_loss.to_f64_c(),
            auc_snapshot,
            injection_active,
        });
    }

    // Adversarial equilibrium pushes D toward 1/2 everywhere, leaving logits
    // too flat to act as a barrier. Fine-tune D alone on the labeled sets so
    // it converges to the sharp feasibility classifier the barrier needs.
    if cfg.disc_finetune_iterations > 0
        && cfg.injection_replace_fraction > 0.0
        && infeas_norm.rows() > 0
    {
        let mut ft_adam = AdamState::new(
            model.discriminator.param_count(),
            AdamHyper::new(
                cfg.disc_finetune_learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                1e-8,
            ),
        );
        for iter in 0..cfg.disc_finetune_iterations {
            let mut batch = Matrix2::zeros(2 * b, dim);
            for i in 0..b {
                let r = rng.index(feas_norm.rows());
                batch.row_mut(i).copy_from_slice(feas_norm.row(r));
                let r = rng.index(infeas_norm.rows());
                batch.row_mut(b + i).copy_from_slice(infeas_norm.row(r));
            }
            let preds = model.discriminator.forward(&batch)?;
            let (loss, grad) = bce_loss(&preds, &labels)?;
            model.discriminator.backward(&grad)?;
            model.discriminator.apply_adam(&mut ft_adam)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    stage: "stage1",
                    iteration: cfg.total_iterations + iter,
                    message: format!("non-finite fine-tune loss {loss}"),
                });
            }
        }
    }
    Ok((model, log))
}

/// Area under the ROC curve of discriminator scores, feasible labeled 1.
/// Rank-based (Mann-Whitney), ties counted half.
pub fn discriminator_auc<F: Real>(
    model: &GanModel<F>,
    feasible: &Matrix2<F>,
    infeasible: &Matrix2<F>,
) -> Result<f64> {
    if feasible.rows() == 0 || infeasible.rows() == 0 {
        return Err(Error::Config("AUC needs nonempty sets".into()));
    }
    let pos = model.disc_scores(feasible)?;
    let neg = model.disc_scores(infeasible)?;
    auc_from_scores(pos.data(), neg.data())
}

pub fn auc_from_scores<F: Real>(positive: &[F], negative: &[F]) -> Result<f64> {
    let mut wins = 0.0f64;
    for &p in positive {
        for &q in negative {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (positive.len() as f64 * negative.len() as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub fraction_feasible: f64,
    /// For multi-box regions: fraction of samples landing in each box.
    pub box_hit_fractions: Vec<f64>,
    pub n_samples: usize,
}

impl CoverageReport {
    pub fn all_components_hit(&self) -> bool {
        self.box_hit_fractions.is_empty() || self.box_hit_fractions.iter().all(|&f| f > 0.0)
    }
}

/// Draws `n_samples` generator outputs and reports the feasible fraction and
/// per-box hit fractions.
pub fn coverage_report<F: Real>(
    model: &GanModel<F>,
    region: &Region<F>,
    n_samples: usize,
    rng: &mut RandomStream,
) -> Result<CoverageReport> {
    let pts = model.generate(n_samples.max(1), rng)?;
    coverage_of_points(&pts, region)
}

pub fn coverage_of_points<F: Real>(pts: &Matrix2<F>, region: &Region<F>) -> Result<CoverageReport> {
    let n = pts.rows();
    let mut feasible = 0usize;
    let boxes = region.boxes().unwrap_or(&[]);
    let mut hits = vec![0usize; boxes.len()];
    for row in pts.iter_rows() {
        if region.contains(row)? {
            feasible += 1;
        }
        for (k, b) in boxes.iter().enumerate() {
            if b.contains(row) {
                hits[k] += 1;
            }
        }
    }
    Ok(CoverageReport {
        fraction_feasible: feasible as f64 / n as f64,
        box_hit_fractions: hits.iter().map(|&h| h as f64 / n as f64).collect(),
        n_samples: n,
    })
}
