//! Full-batch training loops, with and without injected gradient noise.
//!
//! Two engines share one metric schedule:
//!
//! * direct mode carries the d-dimensional weights and supports test
//!   evaluation, checkpoints, and noise logging;
//! * kernel mode carries only the inner products `<w_{j,r}, mu>` and
//!   `<w_{j,r}, xi_i>` and advances them by the exact closed-form
//!   recurrences through the precomputed Gram matrix. The training loss is a
//!   function of these inner products alone, so kernel mode is exact, not an
//!   approximation — but it never materializes weights, so test-side metrics
//!   are unavailable there.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Sign};
use crate::decomp::{DecompOutput, DecompTraceRow, Decomposition, LambdaTraceRow};
use crate::error::{Error, Result};
use crate::linalg::{axpy, cholesky, dot, lower_matvec};
use crate::model::{full_batch_gradient, Activation, PerExampleState, Weights};
use crate::rng::{stream, Purpose};

/// Which update rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Gd,
    Dpgd,
}

/// Direct weights or inner-product recurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Direct,
    Kernel,
}

/// Training-run configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Filter count per bank.
    pub m: usize,
    pub eta: f64,
    pub steps: u64,
    /// Initialization scale; 0 gives exactly zero weights.
    pub sigma0: f64,
    /// Injected-noise scale; 0 disables (and is required 0 < sigma_b for dpgd).
    pub sigma_b: f64,
    pub algo: Algo,
    pub mode: Mode,
    pub seed: u64,
    pub eval_every: u64,
    /// Checkpoint period; `None` = never.
    pub checkpoint_every: Option<u64>,
    /// Track decomposition coefficients (and the injected-noise sum for dpgd).
    pub track_decomposition: bool,
    /// Log per-step noise projections `<b, mu>`, `<b, xi_i>` (direct dpgd
    /// only; memory is steps x 2m x (n+1), so meant for small runs and
    /// cross-checks).
    pub log_noise_projections: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma0 must be >= 0, got {}",
                self.sigma0
            )));
        }
        if !(self.sigma_b >= 0.0) || !self.sigma_b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_b must be >= 0, got {}",
                self.sigma_b
            )));
        }
        if self.algo == Algo::Dpgd && self.sigma_b == 0.0 {
            return Err(Error::InvalidParameter("algo = dpgd requires sigma_b > 0".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParameter("eval_every must be >= 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidParameter("checkpoint_every must be >= 1 or never".into()));
        }
        Ok(())
    }
}

/// Test-set metrics attached to an eval row by a hook.
#[derive(Debug, Clone, Copy)]
pub struct TestMetrics {
    pub test_loss: f64,
    pub test_error: f64,
    pub test_acc: f64,
    pub std_err_loss: f64,
    pub std_err_error: f64,
}

/// One metrics row; optional fields stay empty in the CSV when not computed.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub step: u64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub test_error: Option<f64>,
    pub test_acc: Option<f64>,
    pub gamma_mean: Option<f64>,
    pub rho_pos_mean: Option<f64>,
    pub rho_neg_mean: Option<f64>,
}

/// Per-step injected-noise projections for one run.
#[derive(Debug, Clone, Default)]
pub struct NoiseProjectionLog {
    /// Per step: `mu[fi]` and `xi[fi * n + i]` in flat filter layout.
    pub steps: Vec<StepProjections>,
}

#[derive(Debug, Clone)]
pub struct StepProjections {
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Everything a run leaves behind.
#[derive(Debug)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub metrics: Vec<MetricsRow>,
    pub initial_weights: Weights,
    /// Final weights (direct mode only).
    pub final_weights: Option<Weights>,
    /// Final kernel state (kernel mode only).
    pub final_kernel: Option<KernelState>,
    pub checkpoints: Vec<(u64, Weights)>,
    pub decomposition: Option<DecompOutput>,
    pub noise_projections: Option<NoiseProjectionLog>,
}

impl RunRecord {
    /// Metrics CSV with the fixed header
    /// `step,train_loss,test_loss,test_error,test_acc,gamma_mean,rho_pos_mean,rho_neg_mean`.
    pub fn write_metrics_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,train_loss,test_loss,test_error,test_acc,gamma_mean,rho_pos_mean,rho_neg_mean")?;
        for row in &self.metrics {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.step,
                row.train_loss,
                opt(row.test_loss),
                opt(row.test_error),
                opt(row.test_acc),
                opt(row.gamma_mean),
                opt(row.rho_pos_mean),
                opt(row.rho_neg_mean)
            )?;
        }
        Ok(())
    }
}

/// Optional run attachments: a test evaluator called at eval steps (direct
/// mode), and replayed noise projections for kernel dpgd.
#[derive(Default)]
pub struct RunHooks<'a> {
    pub eval: Option<&'a mut dyn FnMut(u64, &Weights) -> TestMetrics>,
    pub injected_projections: Option<&'a NoiseProjectionLog>,
}

/// Gaussian initialization, every entry iid `N(0, sigma0^2)`; deterministic
/// in `seed`.
pub fn init_weights(m: usize, d: usize, sigma0: f64, seed: u64) -> Weights {
    assert!(m >= 1 && d >= 1, "init_weights needs m, d >= 1");
    assert!(sigma0 >= 0.0 && sigma0.is_finite(), "init_weights needs sigma0 >= 0");
    let mut rng = stream(seed, Purpose::WeightsInit, 0);
    let mut w = Weights::zeros(m, d);
    for v in w.as_mut_slice() {
        *v = sigma0 * rng.sample::<f64, _>(StandardNormal);
    }
    w
}

/// One plain gradient step `w' = w - eta * grad`.
pub fn gd_step(w: &Weights, data: &Dataset, a: &Activation, eta: f64) -> Result<Weights> {
    let batch = full_batch_gradient(w, data, a)?;
    let mut next = w.clone();
    next.add_scaled(-eta, &batch.grad)?;
    Ok(next)
}

/// Fresh iid per-filter noise, entries `sigma_b * N(0,1)` in flat filter order.
pub fn sample_noise_block<R: Rng>(m: usize, d: usize, sigma_b: f64, rng: &mut R) -> Weights {
    let mut b = Weights::zeros(m, d);
    for v in b.as_mut_slice() {
        *v = sigma_b * rng.sample::<f64, _>(StandardNormal);
    }
    b
}

/// One noisy gradient step `w' = w - eta * (grad + b)` with `b` drawn from
/// `noise_source`. Returns the updated weights and the injected block.
pub fn dpgd_step<R: Rng>(
    w: &Weights,
    data: &Dataset,
    a: &Activation,
    eta: f64,
    sigma_b: f64,
    noise_source: &mut R,
) -> Result<(Weights, Weights)> {
    let batch = full_batch_gradient(w, data, a)?;
    let b = sample_noise_block(w.m(), w.d(), sigma_b, noise_source);
    let mut next = w.clone();
    next.add_scaled(-eta, &batch.grad)?;
    next.add_scaled(-eta, &b)?;
    Ok((next, b))
}

/// Run a full training loop per the config.
pub fn run_training(data: &Dataset, a: &Activation, cfg: &TrainConfig) -> Result<RunRecord> {
    run_training_with(data, a, cfg, RunHooks::default())
}

pub fn run_training_with(
    data: &Dataset,
    a: &Activation,
    cfg: &TrainConfig,
    hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Direct => run_direct(data, a, cfg, hooks),
        Mode::Kernel => run_kernel(data, a, cfg, hooks),
    }
}

fn check_divergence(train_loss: f64, step: u64) -> Result<()> {
    if !train_loss.is_finite() || train_loss > 1e6 {
        return Err(Error::Divergence { step, detail: format!("train loss {train_loss}") });
    }
    Ok(())
}

fn eval_due(t: u64, cfg: &TrainConfig) -> bool {
    t % cfg.eval_every == 0 || t == cfg.steps
}

fn metrics_row(
    t: u64,
    train_loss: f64,
    test: Option<TestMetrics>,
    dec: Option<&Decomposition>,
) -> MetricsRow {
    MetricsRow {
        step: t,
        train_loss,
        test_loss: test.map(|m| m.test_loss),
        test_error: test.map(|m| m.test_error),
        test_acc: test.map(|m| m.test_acc),
        gamma_mean: dec.map(|d| d.gamma_mean()),
        rho_pos_mean: dec.map(|d| d.rho_pos_mean()),
        rho_neg_mean: dec.map(|d| d.rho_neg_mean()),
    }
}

fn push_decomp_trace(out: &mut DecompOutput, dec: &Decomposition, t: u64, m: usize, n: usize) {
    for j in Sign::BOTH {
        for r in 0..m {
            let (rho_pos_sum, rho_neg_sum) = dec.rho_sums(j, r);
            out.trace.push(DecompTraceRow { step: t, j, r, gamma: dec.gamma(j, r), rho_pos_sum, rho_neg_sum });
        }
    }
    for i in 0..n {
        out.lambda_trace.push(LambdaTraceRow { step: t, i, lambda: dec.lambda(i) });
    }
}

fn run_direct(
    data: &Dataset,
    a: &Activation,
    cfg: &TrainConfig,
    mut hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    let m = cfg.m;
    let n = data.n();
    let mu_norm_sq = data.signal().norm_sq();
    let xi_norm_sq: Vec<f64> = (0..n).map(|i| data.xi_norm_sq(i)).collect();

    let w0 = init_weights(m, data.d(), cfg.sigma0, cfg.seed);
    let mut w = w0.clone();
    let track_noise = cfg.algo == Algo::Dpgd && cfg.track_decomposition;
    let mut dec = cfg
        .track_decomposition
        .then(|| Decomposition::new(m, data.d(), data.labels(), cfg.eta, track_noise));
    let mut dec_out = dec.as_ref().map(|_| DecompOutput {
        final_state: Decomposition::new(m, data.d(), data.labels(), cfg.eta, track_noise),
        trace: Vec::new(),
        lambda_trace: Vec::new(),
    });
    let mut noise_log = (cfg.algo == Algo::Dpgd && cfg.log_noise_projections)
        .then(NoiseProjectionLog::default);
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();

    for t in 0..=cfg.steps {
        let batch = full_batch_gradient(&w, data, a).map_err(|e| match e {
            Error::NonFiniteInput(detail) => Error::Divergence { step: t, detail },
            other => other,
        })?;
        check_divergence(batch.train_loss, t)?;

        if eval_due(t, cfg) {
            let test = hooks.eval.as_mut().map(|f| f(t, &w));
            metrics.push(metrics_row(t, batch.train_loss, test, dec.as_ref()));
            if let (Some(out), Some(d)) = (dec_out.as_mut(), dec.as_ref()) {
                push_decomp_trace(out, d, t, m, n);
            }
        }
        if let Some(k) = cfg.checkpoint_every {
            if t > 0 && t % k == 0 {
                checkpoints.push((t, w.clone()));
            }
        }
        if t == cfg.steps {
            break;
        }

        if let Some(d) = dec.as_mut() {
            d.advance(&batch.per_example, mu_norm_sq, &xi_norm_sq, t)?;
        }
        w.add_scaled(-cfg.eta, &batch.grad)?;
        if cfg.algo == Algo::Dpgd {
            let mut rng = stream(cfg.seed, Purpose::StepNoise, t);
            let b = sample_noise_block(m, data.d(), cfg.sigma_b, &mut rng);
            if let Some(log) = noise_log.as_mut() {
                log.steps.push(project_block(&b, data));
            }
            if let Some(d) = dec.as_mut() {
                d.accumulate_noise(&b)?;
            }
            w.add_scaled(-cfg.eta, &b)?;
        }
    }

    let decomposition = match (dec, dec_out) {
        (Some(d), Some(mut out)) => {
            out.final_state = d;
            Some(out)
        }
        _ => None,
    };
    Ok(RunRecord {
        config: cfg.clone(),
        metrics,
        initial_weights: w0,
        final_weights: Some(w),
        final_kernel: None,
        checkpoints,
        decomposition,
        noise_projections: noise_log,
    })
}

fn project_block(b: &Weights, data: &Dataset) -> StepProjections {
    let m = b.m();
    let n = data.n();
    let mut mu = vec![0.0; 2 * m];
    let mut xi = vec![0.0; 2 * m * n];
    for j in Sign::BOTH {
        for r in 0..m {
            let fi = j.index() * m + r;
            let row = b.filter(j, r);
            mu[fi] = dot(row, data.signal().mu());
            for i in 0..n {
                xi[fi * n + i] = dot(row, data.example(i).xi());
            }
        }
    }
    StepProjections { mu, xi }
}

// ---------------------------------------------------------------------------
// Kernel engine
// ---------------------------------------------------------------------------

/// Tracked inner products: `sig[fi] = <w_{j,r}, mu>` and
/// `noi[fi * n + i] = <w_{j,r}, xi_i>` in flat filter layout.
#[derive(Debug, Clone)]
pub struct KernelState {
    m: usize,
    n: usize,
    sig: Vec<f64>,
    noi: Vec<f64>,
    mu_norm_sq: f64,
}

impl KernelState {
    /// Exact inner products of concrete weights against the dataset.
    pub fn from_weights(w: &Weights, data: &Dataset) -> Result<KernelState> {
        if w.d() != data.d() {
            return Err(Error::ShapeMismatch("kernel state dimensions disagree".into()));
        }
        let m = w.m();
        let n = data.n();
        let mut sig = vec![0.0; 2 * m];
        let mut noi = vec![0.0; 2 * m * n];
        for j in Sign::BOTH {
            for r in 0..m {
                let fi = j.index() * m + r;
                let row = w.filter(j, r);
                sig[fi] = dot(row, data.signal().mu());
                for i in 0..n {
                    noi[fi * n + i] = dot(row, data.example(i).xi());
                }
            }
        }
        Ok(KernelState { m, n, sig, noi, mu_norm_sq: data.signal().norm_sq() })
    }

    pub fn sig(&self, j: Sign, r: usize) -> f64 {
        self.sig[j.index() * self.m + r]
    }

    pub fn noi(&self, j: Sign, r: usize, i: usize) -> f64 {
        self.noi[(j.index() * self.m + r) * self.n + i]
    }

    /// Margins, loss, and per-example derivative tables from the tracked
    /// inner products alone.
    pub fn batch_states(&self, labels: &[Sign], a: &Activation) -> (Vec<PerExampleState>, f64) {
        let m = self.m;
        let n = self.n;
        let mut out = Vec::with_capacity(n);
        let mut train_loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let ys = y.signum();
            let mut f_bank = [0.0f64; 2];
            let mut act_deriv_signal = vec![0.0; 2 * m];
            let mut act_deriv_noise = vec![0.0; 2 * m];
            for j in Sign::BOTH {
                let mut acc = 0.0;
                for r in 0..m {
                    let fi = j.index() * m + r;
                    let (vs, ds) = a.act_raw(ys * self.sig[fi]);
                    let (vn, dn) = a.act_raw(self.noi[fi * n + i]);
                    acc += vs + vn;
                    act_deriv_signal[fi] = ds;
                    act_deriv_noise[fi] = dn;
                }
                f_bank[j.index()] = acc / m as f64;
            }
            let margin = ys * (f_bank[0] - f_bank[1]);
            let (loss, loss_deriv) = crate::model::logistic_loss_raw(margin);
            train_loss += loss;
            out.push(PerExampleState { margin, loss_deriv, act_deriv_signal, act_deriv_noise });
        }
        (out, train_loss / n as f64)
    }

    /// One update step through the exact recurrences:
    /// `sig' = sig - (eta j / nm) (sum_i l'_i sigma'(y_i sig)) |mu|^2 - eta <b, mu>`
    /// `noi'_i = noi_i - (eta j / nm) sum_{i'} l'_{i'} sigma'(noi_{i'}) y_{i'} G[i', i] - eta <b, xi_i>`
    ///
    /// `per_example` must come from [`KernelState::batch_states`] on the
    /// current state; `noise`, when present, holds the projections of this
    /// step's injected noise.
    pub fn step(
        &mut self,
        gram: &[f64],
        labels: &[Sign],
        per_example: &[PerExampleState],
        eta: f64,
        noise: Option<&StepProjections>,
    ) {
        let m = self.m;
        let n = self.n;
        let scale = 1.0 / (n as f64 * m as f64);
        let mut coef = vec![0.0; n];
        let mut upd = vec![0.0; n];
        for j in Sign::BOTH {
            let js = j.signum();
            for r in 0..m {
                let fi = j.index() * m + r;
                let mut mu_coef = 0.0;
                for (i, pe) in per_example.iter().enumerate() {
                    mu_coef += pe.loss_deriv * pe.act_deriv_signal[fi];
                    coef[i] = pe.loss_deriv * pe.act_deriv_noise[fi] * labels[i].signum();
                }
                upd.iter_mut().for_each(|v| *v = 0.0);
                for (i_prime, &c) in coef.iter().enumerate() {
                    if c != 0.0 {
                        axpy(c, &gram[i_prime * n..(i_prime + 1) * n], &mut upd);
                    }
                }
                self.sig[fi] -= eta * js * scale * mu_coef * self.mu_norm_sq;
                for i in 0..n {
                    self.noi[fi * n + i] -= eta * js * scale * upd[i];
                }
                if let Some(b) = noise {
                    self.sig[fi] -= eta * b.mu[fi];
                    for i in 0..n {
                        self.noi[fi * n + i] -= eta * b.xi[fi * n + i];
                    }
                }
            }
        }
    }
}

/// Noise projections for kernel dpgd: either sampled from the exact joint
/// Gaussian (`<b,mu> ~ N(0, sigma_b^2 |mu|^2)` independent of
/// `<b,xi> ~ N(0, sigma_b^2 Gram)`, since xi is orthogonal to mu), or
/// replayed from a direct run's log.
enum KernelNoise<'a> {
    None,
    Sampled { chol: Vec<f64>, mu_norm: f64 },
    Injected(&'a NoiseProjectionLog),
}

fn run_kernel(
    data: &Dataset,
    a: &Activation,
    cfg: &TrainConfig,
    hooks: RunHooks<'_>,
) -> Result<RunRecord> {
    let gram = data.gram().ok_or(Error::MissingGram)?;
    let m = cfg.m;
    let n = data.n();
    let labels = data.labels();
    let mu_norm_sq = data.signal().norm_sq();
    let xi_norm_sq: Vec<f64> = (0..n).map(|i| data.xi_norm_sq(i)).collect();

    let w0 = init_weights(m, data.d(), cfg.sigma0, cfg.seed);
    let mut ks = KernelState::from_weights(&w0, data)?;

    let noise = match (cfg.algo, hooks.injected_projections) {
        (Algo::Gd, _) => KernelNoise::None,
        (Algo::Dpgd, Some(log)) => KernelNoise::Injected(log),
        (Algo::Dpgd, None) => {
            let mut chol = gram.to_vec();
            if cholesky(&mut chol, n).is_err() {
                chol.copy_from_slice(gram);
                let mean_diag: f64 = xi_norm_sq.iter().sum::<f64>() / n as f64;
                for k in 0..n {
                    chol[k * n + k] += 1e-10 * mean_diag;
                }
                if cholesky(&mut chol, n).is_err() {
                    return Err(Error::IllConditionedBasis { cond: f64::INFINITY });
                }
            }
            KernelNoise::Sampled { chol, mu_norm: data.signal().norm() }
        }
    };

    let mut dec = cfg
        .track_decomposition
        .then(|| Decomposition::new(m, data.d(), labels.clone(), cfg.eta, false));
    let mut dec_out = dec.as_ref().map(|_| DecompOutput {
        final_state: Decomposition::new(m, data.d(), labels.clone(), cfg.eta, false),
        trace: Vec::new(),
        lambda_trace: Vec::new(),
    });
    let mut metrics = Vec::new();

    let mut z = vec![0.0; n];
    let mut proj = StepProjections { mu: vec![0.0; 2 * m], xi: vec![0.0; 2 * m * n] };
    for t in 0..=cfg.steps {
        let (per_example, train_loss) = ks.batch_states(&labels, a);
        check_divergence(train_loss, t)?;
        if eval_due(t, cfg) {
            // Test metrics need materialized weights; kernel mode reports none.
            metrics.push(metrics_row(t, train_loss, None, dec.as_ref()));
            if let (Some(out), Some(d)) = (dec_out.as_mut(), dec.as_ref()) {
                push_decomp_trace(out, d, t, m, n);
            }
        }
        if t == cfg.steps {
            break;
        }
        if let Some(d) = dec.as_mut() {
            d.advance(&per_example, mu_norm_sq, &xi_norm_sq, t)?;
        }
        let step_noise = match &noise {
            KernelNoise::None => None,
            KernelNoise::Sampled { chol, mu_norm } => {
                let mut rng = stream(cfg.seed, Purpose::KernelStepNoise, t);
                for fi in 0..2 * m {
                    proj.mu[fi] =
                        cfg.sigma_b * mu_norm * rng.sample::<f64, _>(StandardNormal);
                    for zi in z.iter_mut() {
                        *zi = rng.sample::<f64, _>(StandardNormal);
                    }
                    lower_matvec(chol, n, &z, &mut proj.xi[fi * n..(fi + 1) * n]);
                    for v in &mut proj.xi[fi * n..(fi + 1) * n] {
                        *v *= cfg.sigma_b;
                    }
                }
                Some(&proj)
            }
            KernelNoise::Injected(log) => Some(log.steps.get(t as usize).ok_or_else(|| {
                Error::IncompleteTrace(format!("injected noise log ends before step {t}"))
            })?),
        };
        ks.step(gram, &labels, &per_example, cfg.eta, step_noise);
    }

    let decomposition = match (dec, dec_out) {
        (Some(d), Some(mut out)) => {
            out.final_state = d;
            Some(out)
        }
        _ => None,
    };
    Ok(RunRecord {
        config: cfg.clone(),
        metrics,
        initial_weights: w0,
        final_weights: None,
        final_kernel: Some(ks),
        checkpoints: Vec::new(),
        decomposition,
        noise_projections: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NoiseSpec, SignalSpec};

    fn cfg(algo: Algo, mode: Mode, steps: u64) -> TrainConfig {
        TrainConfig {
            m: 4,
            eta: 0.05,
            steps,
            sigma0: 0.05,
            sigma_b: if algo == Algo::Dpgd { 0.01 } else { 0.0 },
            algo,
            mode,
            seed: 12,
            eval_every: 10,
            checkpoint_every: None,
            track_decomposition: false,
            log_noise_projections: false,
        }
    }

    fn small_data() -> (Dataset, Activation) {
        let signal = SignalSpec::uniform_direction(24, 1.0).unwrap();
        let noise = NoiseSpec::new(0.3).unwrap();
        let ds = Dataset::sample(10, &signal, &noise, 6).unwrap();
        (ds, Activation::new(0.5, 3).unwrap())
    }

    #[test]
    fn init_weights_determinism_and_scale() {
        let a = init_weights(5, 7, 0.3, 9);
        let b = init_weights(5, 7, 0.3, 9);
        assert_eq!(a, b);
        let zero = init_weights(5, 7, 0.0, 9);
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_weights_sample_variance() {
        // m = 100, d = 2000, sigma0 = 0.01: variance of 4e5 entries within
        // 3% of 1e-4.
        let w = init_weights(100, 2000, 0.01, 123);
        let k = w.as_slice().len() as f64;
        let mean: f64 = w.as_slice().iter().sum::<f64>() / k;
        let var: f64 = w.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
        assert!((var - 1e-4).abs() / 1e-4 < 0.03, "sample variance {var}");
    }

    #[test]
    fn zero_weights_are_stationary() {
        let (ds, act) = small_data();
        let w = Weights::zeros(4, 24);
        let next = gd_step(&w, &ds, &act, 0.1).unwrap();
        assert_eq!(next, w);
    }

    #[test]
    fn eta_zero_is_identity() {
        let (ds, act) = small_data();
        let w = init_weights(4, 24, 0.05, 3);
        let next = gd_step(&w, &ds, &act, 0.0).unwrap();
        assert_eq!(next, w);
    }

    #[test]
    fn gd_step_matches_hand_update() {
        // The d = 2, m = 1, n = 1 hand instance.
        let signal = SignalSpec::new(vec![1.0, 0.0]).unwrap();
        let noise = NoiseSpec::new(1.0).unwrap();
        let ex = crate::data::Example::compose(
            Sign::Plus,
            crate::data::Slot::First,
            vec![0.0, 0.25],
            &signal,
        )
        .unwrap();
        let ds = Dataset::from_parts(vec![ex], signal, noise, 1).unwrap();
        let act = Activation::new(0.5, 3).unwrap();
        let mut w = Weights::zeros(1, 2);
        w.filter_mut(Sign::Plus, 0).copy_from_slice(&[0.25, 0.0]);
        let eta = 0.1;
        let next = gd_step(&w, &ds, &act, eta).unwrap();
        // margin = sigma(0.25) = 1/48, l' = -1/(1+e^{1/48}), sigma'(0.25) = 0.25,
        // grad_plus = l' * 0.25 * mu, grad_minus = 0 (sigma'(0) = 0).
        let lp = -1.0 / (1.0 + (1.0f64 / 48.0).exp());
        let expect0 = 0.25 - eta * lp * 0.25;
        assert!((next.filter(Sign::Plus, 0)[0] - expect0).abs() < 1e-15);
        assert_eq!(next.filter(Sign::Plus, 0)[1], 0.0);
        assert!(next.filter(Sign::Minus, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dpgd_with_zero_sigma_matches_gd_bitwise() {
        let (ds, act) = small_data();
        let w = init_weights(4, 24, 0.05, 3);
        let mut rng = stream(99, Purpose::StepNoise, 0);
        let (noisy, _) = dpgd_step(&w, &ds, &act, 0.05, 0.0, &mut rng).unwrap();
        let plain = gd_step(&w, &ds, &act, 0.05).unwrap();
        assert_eq!(noisy, plain);
    }

    #[test]
    fn dpgd_replayed_noise_source_repeats() {
        let (ds, act) = small_data();
        let w = init_weights(4, 24, 0.05, 3);
        let mut rng_a = stream(7, Purpose::StepNoise, 5);
        let mut rng_b = stream(7, Purpose::StepNoise, 5);
        let (wa, ba) = dpgd_step(&w, &ds, &act, 0.05, 0.02, &mut rng_a).unwrap();
        let (wb, bb) = dpgd_step(&w, &ds, &act, 0.05, 0.02, &mut rng_b).unwrap();
        assert_eq!(wa, wb);
        assert_eq!(ba, bb);
    }

    #[test]
    fn accumulated_noise_has_random_walk_variance() {
        // Accumulate -eta * b over 1e4 steps; per-coordinate variance must be
        // within 3% of eta^2 sigma_b^2 1e4.
        let eta = 0.1;
        let sigma_b = 0.5;
        let steps = 10_000u64;
        let m = 1;
        let d = 8;
        let mut acc = vec![0.0f64; 2 * m * d];
        for t in 0..steps {
            let mut rng = stream(1234, Purpose::StepNoise, t);
            let b = sample_noise_block(m, d, sigma_b, &mut rng);
            axpy(-eta, b.as_slice(), &mut acc);
        }
        // Pool variance across coordinates over many repetitions of the walk:
        // instead use the per-step increments directly for a tight estimate.
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for t in 0..steps {
            let mut rng = stream(1234, Purpose::StepNoise, t);
            let b = sample_noise_block(m, d, sigma_b, &mut rng);
            for v in b.as_slice() {
                sum_sq += (eta * v) * (eta * v);
                count += 1;
            }
        }
        let per_step_var = sum_sq / count as f64;
        let walk_var = per_step_var * steps as f64;
        let expect = eta * eta * sigma_b * sigma_b * steps as f64;
        assert!(
            (walk_var - expect).abs() / expect < 0.03,
            "walk variance {walk_var} vs {expect}"
        );
        // And the actual accumulated endpoint is plausible under that variance.
        for v in &acc {
            assert!(v.abs() < 6.0 * expect.sqrt());
        }
    }

    #[test]
    fn t0_run_has_single_row_and_init_weights() {
        let (ds, act) = small_data();
        let c = cfg(Algo::Gd, Mode::Direct, 0);
        let rec = run_training(&ds, &act, &c).unwrap();
        assert_eq!(rec.metrics.len(), 1);
        assert_eq!(rec.metrics[0].step, 0);
        assert_eq!(rec.final_weights.as_ref().unwrap(), &rec.initial_weights);
    }

    #[test]
    fn identical_configs_identical_metrics() {
        let (ds, act) = small_data();
        let c = cfg(Algo::Dpgd, Mode::Direct, 25);
        let a = run_training(&ds, &act, &c).unwrap();
        let b = run_training(&ds, &act, &c).unwrap();
        assert_eq!(a.metrics.len(), b.metrics.len());
        for (ra, rb) in a.metrics.iter().zip(&b.metrics) {
            assert_eq!(ra.step, rb.step);
            assert_eq!(ra.train_loss, rb.train_loss);
        }
        assert_eq!(a.final_weights, b.final_weights);
    }

    #[test]
    fn dpgd_sigma_b_zero_rejected_but_gd_ok() {
        let (ds, act) = small_data();
        let mut c = cfg(Algo::Dpgd, Mode::Direct, 5);
        c.sigma_b = 0.0;
        assert!(run_training(&ds, &act, &c).is_err());
    }

    #[test]
    fn kernel_mode_requires_gram() {
        let (ds, act) = small_data();
        let mut stripped = ds.clone();
        // No public way to drop the Gram; simulate by constructing a config
        // that runs kernel mode against data whose gram is present (positive
        // path) and assert the error type via a doctored dataset below.
        let c = cfg(Algo::Gd, Mode::Kernel, 5);
        assert!(run_training(&stripped, &act, &c).is_ok());
        stripped.strip_gram_for_tests();
        assert!(matches!(run_training(&stripped, &act, &c), Err(Error::MissingGram)));
    }

    #[test]
    fn metrics_schedule_counts_rows() {
        let (ds, act) = small_data();
        let mut c = cfg(Algo::Gd, Mode::Direct, 100);
        c.eval_every = 10;
        let rec = run_training(&ds, &act, &c).unwrap();
        assert_eq!(rec.metrics.len(), 11);
        assert_eq!(rec.metrics.last().unwrap().step, 100);
        // Strictly increasing steps.
        for pair in rec.metrics.windows(2) {
            assert!(pair[0].step < pair[1].step);
        }
    }

    #[test]
    fn checkpoints_follow_schedule() {
        let (ds, act) = small_data();
        let mut c = cfg(Algo::Gd, Mode::Direct, 30);
        c.checkpoint_every = Some(10);
        let rec = run_training(&ds, &act, &c).unwrap();
        let steps: Vec<u64> = rec.checkpoints.iter().map(|(t, _)| *t).collect();
        assert_eq!(steps, vec![10, 20, 30]);
    }
}
