//! Alternating WGAN-GP training: `n_d` critic updates per generator update,
//! both driven by Adam.

mod adam;

pub use adam::{AdamHyper, AdamState, ADAM_EPS};

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TfIdfMatrix;
use crate::error::{AtmError, Result};
use crate::network::{
    init_params, DiscriminatorParams, GeneratorParams, NetworkDims, ParamTensors, DEFAULT_LEAK,
};
use crate::sampling::{interpolate_batch, sample_dirichlet_batch, DirichletPrior};

/// Window for the optional early-stopping moving average of |L_d|.
pub const EARLY_STOP_WINDOW: usize = 100;
pub const EARLY_STOP_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum Concentration {
    Symmetric(f64),
    PerTopic(Vec<f64>),
}

impl Concentration {
    pub fn prior(&self, k: usize) -> Result<DirichletPrior> {
        match self {
            Concentration::Symmetric(a) => DirichletPrior::symmetric(k, *a),
            Concentration::PerTopic(v) if v.len() == k => DirichletPrior::new(v.clone()),
            Concentration::PerTopic(v) => Err(AtmError::Value(format!(
                "{} Dirichlet concentrations for K={k} topics",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub topics: usize,
    pub embed: usize,
    pub hidden: usize,
    pub lambda: f64,
    pub critic_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub dirichlet_alpha: Concentration,
    pub leak: f64,
    pub max_generator_iters: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            topics: 20,
            embed: 100,
            hidden: 100,
            lambda: 10.0,
            critic_iters: 5,
            batch_size: 512,
            learning_rate: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            dirichlet_alpha: Concentration::Symmetric(1.0),
            leak: DEFAULT_LEAK,
            max_generator_iters: 15_000,
            seed: 1,
            eval_every: 1_000,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(AtmError::Value(m));
        if self.topics < 2 {
            return fail(format!("topics must be >= 2, got {}", self.topics));
        }
        if self.embed == 0 || self.hidden == 0 {
            return fail("embed and hidden sizes must be positive".into());
        }
        if self.critic_iters < 1 {
            return fail("critic_iters must be >= 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return fail(format!("leak must lie in (0, 1), got {}", self.leak));
        }
        if self.eval_every == 0 {
            return fail("eval_every must be >= 1".into());
        }
        self.dirichlet_alpha.prior(self.topics)?;
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    pub fn dims(&self, vocab: usize) -> NetworkDims {
        NetworkDims {
            topics: self.topics,
            embed: self.embed,
            vocab,
            hidden: self.hidden,
        }
    }
}

/// Losses of one critic update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticRecord {
    /// mean D(d_f) - mean D(d_r)
    pub l_d: f64,
    /// unscaled penalty mean (|∇D| - 1)^2
    pub l_gp: f64,
    /// l_d + lambda * l_gp
    pub l: f64,
    pub grad_norm_mean: f64,
}

/// One row of the training log, written once per generator iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub l_d: f64,
    pub l_gp: f64,
    pub l: f64,
    pub grad_norm_mean: f64,
    pub gen_objective: f64,
    pub seconds: f64,
    pub diverged: bool,
}

impl TrainRecord {
    fn is_finite(&self) -> bool {
        [
            self.l_d,
            self.l_gp,
            self.l,
            self.grad_norm_mean,
            self.gen_objective,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "step,l_d,l_gp,l,grad_norm_mean,gen_objective";

    /// Loss columns only; wall time goes to [`TrainReport::timing_csv`] so
    /// the report is reproducible byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.l_d, r.l_gp, r.l, r.grad_norm_mean, r.gen_objective
            )
            .expect("write to String");
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("step,seconds\n");
        for r in &self.records {
            writeln!(out, "{},{}", r.step, r.seconds).expect("write to String");
        }
        out
    }

    /// Mean of `grad_norm_mean` over the last `n` records.
    pub fn tail_grad_norm(&self, n: usize) -> Option<f64> {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().map(|r| r.grad_norm_mean).sum::<f64>() / tail.len() as f64)
    }
}

fn diverged(step: usize, record: TrainRecord) -> AtmError {
    AtmError::Diverged {
        step,
        report: TrainReport {
            records: vec![TrainRecord {
                diverged: true,
                ..record
            }],
        },
    }
}

/// One critic update on `m` real rows, `m` generated rows and `m`
/// interpolates. Only the critic's weights move; the generator's BatchNorm
/// running statistics are updated by its train-mode forward pass.
pub fn discriminator_step<R: Rng + ?Sized>(
    gen: &mut GeneratorParams,
    disc: &mut DiscriminatorParams,
    adam: &mut AdamState,
    real_docs: &TfIdfMatrix,
    cfg: &TrainConfig,
    prior: &DirichletPrior,
    rng: &mut R,
) -> Result<CriticRecord> {
    let m = cfg.batch_size;
    let real = real_docs.sample_real_batch(m, rng)?;
    let theta = sample_dirichlet_batch(prior, m, rng)?;
    let eps: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();

    let (fake, _) = gen.forward_train(theta.view())?;
    let d_hat = interpolate_batch(real.view(), fake.view(), &eps)?;

    let (fake_scores, fake_trace) = disc.forward(fake.view())?;
    let (real_scores, real_trace) = disc.forward(real.view())?;
    let l_d = fake_scores.mean().expect("m >= 2") - real_scores.mean().expect("m >= 2");
    let penalty = disc.gradient_penalty(d_hat.view(), cfg.lambda)?;
    let record = CriticRecord {
        l_d,
        l_gp: penalty.raw,
        l: l_d + cfg.lambda * penalty.raw,
        grad_norm_mean: penalty.grad_norms.mean().expect("m >= 2"),
    };
    if !(record.l.is_finite() && record.grad_norm_mean.is_finite()) {
        return Err(diverged(
            0,
            TrainRecord {
                step: 0,
                l_d: record.l_d,
                l_gp: record.l_gp,
                l: record.l,
                grad_norm_mean: record.grad_norm_mean,
                gen_objective: f64::NAN,
                seconds: 0.0,
                diverged: true,
            },
        ));
    }

    let inv_m = 1.0 / m as f64;
    let (mut grads, _) = disc.backward(fake_trace, Array1::from_elem(m, inv_m).view())?;
    let (real_grads, _) = disc.backward(real_trace, Array1::from_elem(m, -inv_m).view())?;
    grads.add_assign(&real_grads);
    grads.add_assign(&penalty.grads);
    if !grads.is_finite() {
        return Err(AtmError::Numeric("critic gradient is not finite".into()));
    }
    adam.step(disc, &grads, cfg.adam())?;
    Ok(record)
}

/// One generator update minimizing `-mean D(G(theta))`. Returns the
/// objective before the update.
pub fn generator_step<R: Rng + ?Sized>(
    gen: &mut GeneratorParams,
    disc: &DiscriminatorParams,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    prior: &DirichletPrior,
    rng: &mut R,
) -> Result<f64> {
    let m = cfg.batch_size;
    let theta = sample_dirichlet_batch(prior, m, rng)?;
    let (fake, gen_trace) = gen.forward_train(theta.view())?;
    let (scores, disc_trace) = disc.forward(fake.view())?;
    let objective = -scores.mean().expect("m >= 2");
    if !objective.is_finite() {
        return Err(AtmError::Numeric(
            "generator objective is not finite".into(),
        ));
    }
    let (_, d_fake) = disc.backward(disc_trace, Array1::from_elem(m, -1.0 / m as f64).view())?;
    let (grads, _) = gen.backward(gen_trace, d_fake.view())?;
    if !grads.is_finite() {
        return Err(AtmError::Numeric("generator gradient is not finite".into()));
    }
    adam.step(gen, &grads, cfg.adam())?;
    Ok(objective)
}

/// Callbacks fired by [`train`].
pub trait TrainObserver {
    fn on_record(&mut self, _record: &TrainRecord) {}

    /// Called every `eval_every` generator iterations.
    fn on_checkpoint(
        &mut self,
        _iteration: usize,
        _gen: &GeneratorParams,
        _disc: &DiscriminatorParams,
    ) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub report: TrainReport,
    pub iterations: usize,
}

/// Initializes both networks from `cfg.seed` and runs the alternating loop
/// for `cfg.max_generator_iters` generator iterations (or until early stop).
pub fn train(
    real_docs: &TfIdfMatrix,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if real_docs.n_rows() < cfg.batch_size {
        log::warn!(
            "corpus has {} documents, fewer than the batch size {}",
            real_docs.n_rows(),
            cfg.batch_size
        );
    }
    let prior = cfg.dirichlet_alpha.prior(cfg.topics)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut gen, mut disc) = init_params(cfg.dims(real_docs.vocab_size()), cfg.leak, &mut rng)?;
    let mut adam_g = AdamState::new(&gen);
    let mut adam_d = AdamState::new(&disc);
    let mut report = TrainReport::default();
    let start = Instant::now();
    log::info!("BatchNorm running statistics update on every generator forward pass");

    let mut iterations = 0;
    for step in 1..=cfg.max_generator_iters {
        let mut acc = [0.0f64; 3];
        for _ in 0..cfg.critic_iters {
            let rec = discriminator_step(
                &mut gen,
                &mut disc,
                &mut adam_d,
                real_docs,
                cfg,
                &prior,
                &mut rng,
            )
            .map_err(|e| with_history(e, step, &report))?;
            acc[0] += rec.l_d;
            acc[1] += rec.l_gp;
            acc[2] += rec.grad_norm_mean;
        }
        let n = cfg.critic_iters as f64;
        let (l_d, l_gp, grad_norm_mean) = (acc[0] / n, acc[1] / n, acc[2] / n);

        let gen_objective =
            match generator_step(&mut gen, &disc, &mut adam_g, cfg, &prior, &mut rng) {
                Ok(o) => o,
                Err(AtmError::Numeric(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
        let mut record = TrainRecord {
            step,
            l_d,
            l_gp,
            l: l_d + cfg.lambda * l_gp,
            grad_norm_mean,
            gen_objective,
            seconds: start.elapsed().as_secs_f64(),
            diverged: false,
        };
        if !record.is_finite() {
            record.diverged = true;
            report.records.push(record);
            observer.on_record(&record);
            return Err(AtmError::Diverged { step, report });
        }
        report.records.push(record);
        observer.on_record(&record);
        iterations = step;

        if step % cfg.eval_every == 0 {
            observer.on_checkpoint(step, &gen, &disc)?;
        }
        if cfg.early_stop && converged(&report) {
            log::info!("early stop at generator iteration {step}");
            break;
        }
    }
    Ok(TrainOutcome {
        generator: gen,
        discriminator: disc,
        report,
        iterations,
    })
}

fn with_history(err: AtmError, step: usize, history: &TrainReport) -> AtmError {
    match err {
        AtmError::Diverged { report, .. } => {
            let mut full = history.clone();
            full.records.extend(
                report
                    .records
                    .into_iter()
                    .map(|r| TrainRecord { step, ..r }),
            );
            AtmError::Diverged { step, report: full }
        }
        AtmError::Numeric(msg) => {
            log::error!("{msg}");
            AtmError::Diverged {
                step,
                report: history.clone(),
            }
        }
        other => other,
    }
}

/// Moving average of |L_d| over the last window moved by less than the
/// tolerance relative to the window before it.
fn converged(report: &TrainReport) -> bool {
    let n = report.records.len();
    let w = EARLY_STOP_WINDOW;
    if n < 2 * w {
        return false;
    }
    let avg = |rs: &[TrainRecord]| rs.iter().map(|r| r.l_d.abs()).sum::<f64>() / w as f64;
    let recent = avg(&report.records[n - w..]);
    let before = avg(&report.records[n - 2 * w..n - w]);
    (recent - before).abs() < EARLY_STOP_TOLERANCE
}
