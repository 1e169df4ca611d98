//! Test-set evaluation, condition reports, timescale calculators, and
//! empirical checks of the concentration events the analysis relies on.
//!
//! The condition and timescale reports evaluate the published inequalities
//! literally: every hidden constant is a user-supplied `C` (default 1) and
//! the tilde factors are the explicit logarithms printed in the condition,
//! so regime membership is auditable from the raw lhs/rhs columns rather
//! than asserted.

use rand::Rng;
use rayon::prelude::*;

use crate::data::{sample_noise, Dataset, NoiseSpec, Sign, SignalSpec};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{logistic_loss_raw, Activation, Weights};
use crate::rng::{stream, Purpose};
use crate::train::TestMetrics;

// ---------------------------------------------------------------------------
// Test-set evaluation
// ---------------------------------------------------------------------------

/// How a zero margin counts toward the test error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiePolicy {
    /// Ties are misclassifications (the conservative reading of `y f < 0`).
    Error,
    /// Ties count half.
    Half,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub n_test: usize,
    pub seed: u64,
    pub tie_policy: TiePolicy,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_test == 0 {
            return Err(Error::EmptyEval);
        }
        Ok(())
    }
}

/// Monte Carlo estimate of test loss and test error over `n_test` fresh
/// samples. Per-sample streams make the estimate reproducible and
/// independent of evaluation order; the reduction is sequential.
pub fn evaluate_test_metrics(
    w: &Weights,
    signal: &SignalSpec,
    noise: &NoiseSpec,
    a: &Activation,
    cfg: &EvalConfig,
) -> Result<TestMetrics> {
    cfg.validate()?;
    if w.d() != signal.d() {
        return Err(Error::ShapeMismatch(format!(
            "weights dimension {} vs signal dimension {}",
            w.d(),
            signal.d()
        )));
    }
    let m = w.m();
    let s_mu: Vec<f64> = (0..2 * m)
        .map(|fi| {
            let (j, r) = if fi < m { (Sign::Plus, fi) } else { (Sign::Minus, fi - m) };
            dot(w.filter(j, r), signal.mu())
        })
        .collect();

    let samples: Vec<(f64, f64)> = (0..cfg.n_test)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream(cfg.seed, Purpose::TestSample, idx as u64);
            let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let _slot: bool = rng.random(); // structural draw; f is slot-invariant
            let xi = sample_noise(signal, noise, &mut rng);
            let mut bank = [0.0f64; 2];
            for j in Sign::BOTH {
                let mut acc = 0.0;
                for r in 0..m {
                    let fi = j.index() * m + r;
                    acc += a.act_raw(y * s_mu[fi]).0;
                    acc += a.act_raw(dot(w.filter(j, r), &xi)).0;
                }
                bank[j.index()] = acc / m as f64;
            }
            let margin = y * (bank[0] - bank[1]);
            let loss = logistic_loss_raw(margin).0;
            let err = if margin < 0.0 {
                1.0
            } else if margin == 0.0 {
                match cfg.tie_policy {
                    TiePolicy::Error => 1.0,
                    TiePolicy::Half => 0.5,
                }
            } else {
                0.0
            };
            (loss, err)
        })
        .collect();

    let nf = cfg.n_test as f64;
    let mut loss_sum = 0.0;
    let mut err_sum = 0.0;
    for &(l, e) in &samples {
        loss_sum += l;
        err_sum += e;
    }
    let test_loss = loss_sum / nf;
    let test_error = err_sum / nf;
    let mut loss_var = 0.0;
    let mut err_var = 0.0;
    for &(l, e) in &samples {
        loss_var += (l - test_loss) * (l - test_loss);
        err_var += (e - test_error) * (e - test_error);
    }
    let denom = if cfg.n_test > 1 { nf - 1.0 } else { 1.0 };
    Ok(TestMetrics {
        test_loss,
        test_error,
        test_acc: 1.0 - test_error,
        std_err_loss: (loss_var / denom).sqrt() / nf.sqrt(),
        std_err_error: (err_var / denom).sqrt() / nf.sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Scales shared by the condition and timescale calculators
// ---------------------------------------------------------------------------

/// All problem scales. `sigma_b = 0` means no injected noise (the
/// noisy-run-only outputs become undefined markers).
#[derive(Debug, Clone, Copy)]
pub struct ScaleParams {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub mu_norm: f64,
    pub sigma_p: f64,
    pub kappa: f64,
    pub q: u32,
    pub sigma0: f64,
    pub eta: f64,
    pub sigma_b: f64,
    pub delta: f64,
    /// Target training-loss accuracy in the horizon formulas.
    pub target_loss: f64,
}

impl ScaleParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("n, m, d must be positive".into()));
        }
        if self.q < 3 {
            return Err(Error::InvalidParameter("q must be >= 3".into()));
        }
        for (name, v) in [
            ("mu_norm", self.mu_norm),
            ("sigma_p", self.sigma_p),
            ("kappa", self.kappa),
            ("eta", self.eta),
            ("target_loss", self.target_loss),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma0 >= 0.0) || !(self.sigma_b >= 0.0) {
            return Err(Error::InvalidParameter("sigma0 and sigma_b must be >= 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter("delta must lie in (0,1)".into()));
        }
        Ok(())
    }

    pub fn mu_norm_sq(&self) -> f64 {
        self.mu_norm * self.mu_norm
    }

    pub fn noise_energy(&self) -> f64 {
        self.sigma_p * self.sigma_p * self.d as f64
    }

    /// `SNR^{-1} = sigma_p sqrt(d) / |mu|`.
    pub fn inverse_snr(&self) -> f64 {
        self.sigma_p * (self.d as f64).sqrt() / self.mu_norm
    }
}

// ---------------------------------------------------------------------------
// Timescales
// ---------------------------------------------------------------------------

/// Hidden-order constants, all default 1.
#[derive(Debug, Clone, Copy)]
pub struct TimescaleConstants {
    pub c_t1: f64,
    pub c_t1_tilde: f64,
    pub c_t2_tilde: f64,
    pub c_t_star: f64,
    pub c_t_star_tilde: f64,
}

impl Default for TimescaleConstants {
    fn default() -> Self {
        TimescaleConstants {
            c_t1: 1.0,
            c_t1_tilde: 1.0,
            c_t2_tilde: 1.0,
            c_t_star: 1.0,
            c_t_star_tilde: 1.0,
        }
    }
}

/// Order-of-magnitude step counts. `None` marks an undefined timescale
/// (zero denominator: `sigma0 = 0` for the plain-run stages, `sigma_b = 0`
/// for the noisy-run stages).
#[derive(Debug, Clone)]
pub struct TimescaleReport {
    /// First noise coordinate reaches the activation threshold (plain run).
    pub t1: Option<f64>,
    /// Noise memorization saturates: `t1 + 36 n m^2 / (eta sigma_p^2 d)`.
    pub t2: Option<f64>,
    /// The exact-constant gap `36 n m^2 / (eta sigma_p^2 d)`.
    pub t2_minus_t1: f64,
    /// Injected noise pushes some coordinate past the threshold (noisy run).
    pub t1_tilde: Option<f64>,
    /// Signal escape: `t1_tilde + c e^{c1} (t1_tilde + 1/c1)`.
    pub t2_tilde: Option<f64>,
    /// The early-stopping form `n m / (eta max{n |mu|^2, sigma_p^2 d})`,
    /// the simplified order of t2_tilde when t1_tilde = O(1).
    pub t2_tilde_early_stop: f64,
    /// Training-loss horizon of the plain run at the target accuracy.
    pub t_star: Option<f64>,
    /// Training-loss horizon of the noisy run at the target accuracy.
    pub t_star_tilde: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub constants: TimescaleConstants,
}

pub fn compute_timescales(p: &ScaleParams, constants: &TimescaleConstants) -> Result<TimescaleReport> {
    p.validate()?;
    let n = p.n as f64;
    let m = p.m as f64;
    let d = p.d as f64;
    let mu2 = p.mu_norm_sq();
    let noise_energy = p.noise_energy();
    let scale_max = mu2.max(noise_energy);
    let scale_min = mu2.min(noise_energy);

    let t1 = (p.sigma0 > 0.0).then(|| {
        let sigma0_pow = powi_f(p.sigma0, p.q - 2);
        let noise_pow = powi_f(p.sigma_p * d.sqrt(), p.q);
        constants.c_t1 * powi_f(p.kappa, p.q - 1) * m * n / (p.eta * sigma0_pow * noise_pow)
    });
    let t2_minus_t1 = 36.0 * n * m * m / (p.eta * p.sigma_p * p.sigma_p * d);
    let t2 = t1.map(|t| t + t2_minus_t1);

    let t1_tilde = (p.sigma_b > 0.0).then(|| {
        constants.c_t1_tilde * p.kappa * p.kappa
            / (p.eta * p.eta * p.sigma_b * p.sigma_b * scale_min)
    });
    let c1 = 3.0 * p.eta * (n * mu2).max(noise_energy) / (n * m);
    let c2 = p.eta * scale_max / (12.0 * n * m * m);
    let t2_tilde = t1_tilde.map(|t| t + constants.c_t2_tilde * c1.exp() * (t + 1.0 / c1));
    let t2_tilde_early_stop = n * m / (p.eta * (n * mu2).max(noise_energy));

    let t_star = t1.map(|t| t + constants.c_t_star * m * m * m * n / (p.eta * p.target_loss * mu2));
    let t_star_tilde = t1_tilde
        .map(|t| t + constants.c_t_star_tilde * n * m * m / (p.eta * p.target_loss * scale_max));

    Ok(TimescaleReport {
        t1,
        t2,
        t2_minus_t1,
        t1_tilde,
        t2_tilde,
        t2_tilde_early_stop,
        t_star,
        t_star_tilde,
        c1,
        c2,
        constants: *constants,
    })
}

fn powi_f(z: f64, p: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..p {
        acc *= z;
    }
    acc
}

// ---------------------------------------------------------------------------
// Condition reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    /// The small-SNR regime where the plain run memorizes noise.
    Condition1,
    /// The moderate-SNR regime where the noisy run learns the signal.
    Condition2,
}

/// How the constant C enters an item's inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Holds iff `lhs >= C * rhs`.
    GeqCTimes,
    /// Holds iff `lhs <= rhs / C`.
    LeqOverC,
    /// Holds iff `lhs <= C * rhs`.
    LeqCTimes,
}

#[derive(Debug, Clone)]
pub struct ConditionItem {
    pub name: &'static str,
    pub lhs: f64,
    /// Right-hand side evaluated at C = 1.
    pub rhs: f64,
    pub relation: Relation,
    /// Parallel to the supplied C values.
    pub holds_at_c: Vec<(f64, bool)>,
}

impl ConditionItem {
    fn evaluate(name: &'static str, lhs: f64, rhs: f64, relation: Relation, cs: &[f64]) -> Self {
        let holds_at_c = cs
            .iter()
            .map(|&c| {
                let ok = match relation {
                    Relation::GeqCTimes => lhs >= c * rhs,
                    Relation::LeqOverC => lhs <= rhs / c,
                    Relation::LeqCTimes => lhs <= c * rhs,
                };
                (c, ok)
            })
            .collect();
        ConditionItem { name, lhs, rhs, relation, holds_at_c }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub which: ConditionKind,
    pub items: Vec<ConditionItem>,
}

impl ConditionReport {
    pub fn all_hold_at(&self, c: f64) -> Option<bool> {
        let mut all = true;
        for item in &self.items {
            let (_, ok) = item.holds_at_c.iter().find(|(cv, _)| *cv == c)?;
            all &= ok;
        }
        Some(all)
    }
}

/// Evaluate every itemized inequality of the chosen condition at each
/// supplied constant, with the printed logarithmic factors evaluated
/// literally at the respective run's loss horizon.
pub fn check_conditions(
    p: &ScaleParams,
    which: ConditionKind,
    c_values: &[f64],
) -> Result<ConditionReport> {
    p.validate()?;
    if c_values.is_empty() || c_values.iter().any(|c| !(c > &0.0)) {
        return Err(Error::InvalidParameter("C values must be positive and non-empty".into()));
    }
    let n = p.n as f64;
    let m = p.m as f64;
    let d = p.d as f64;
    let qf = p.q as f64;
    let mu2 = p.mu_norm_sq();
    let noise_energy = p.noise_energy();
    let inv_snr = p.inverse_snr();
    let ts = compute_timescales(p, &TimescaleConstants::default())?;

    let mut items = Vec::new();
    match which {
        ConditionKind::Condition1 => {
            let horizon = ts.t_star.ok_or_else(|| {
                Error::InvalidParameter("condition 1 needs sigma0 > 0 to evaluate its horizon".into())
            })?;
            let log_t = horizon.ln();
            items.push(ConditionItem::evaluate("kappa = O(1)", p.kappa, 1.0, Relation::LeqCTimes, c_values));
            items.push(ConditionItem::evaluate(
                "SNR^-1 >= C n^{1/q}",
                inv_snr,
                n.powf(1.0 / qf),
                Relation::GeqCTimes,
                c_values,
            ));
            let e = (2.0 * qf - 2.0) / (qf - 2.0);
            let rhs_d = m.powf(2.0 * qf / (qf - 2.0))
                * n.powf(e)
                * p.kappa.powf(-e)
                * sq((m * n * n / p.delta).ln())
                * sq(log_t);
            items.push(ConditionItem::evaluate("d >= C poly(m,n,kappa) log^2", d, rhs_d, Relation::GeqCTimes, c_values));
            items.push(ConditionItem::evaluate(
                "n >= C log(m/delta)",
                n,
                (m / p.delta).ln(),
                Relation::GeqCTimes,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "m >= C log(n T*/delta)",
                m,
                (n * horizon / p.delta).ln(),
                Relation::GeqCTimes,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "sigma0 >= C (n/(sigma_p d)) sqrt(log(n^2/delta)) log(T*)",
                p.sigma0,
                n / (p.sigma_p * d) * (n * n / p.delta).ln().sqrt() * log_t,
                Relation::GeqCTimes,
                c_values,
            ));
            let rhs_s0 = p.kappa.powf((qf - 1.0) / (qf - 2.0))
                / (p.mu_norm
                    * m.powf(2.0 / (qf - 2.0))
                    * n.powf(1.0 / (qf - 2.0))
                    * (m * n / p.delta).ln().sqrt())
                .max(p.sigma_p * d.sqrt());
            items.push(ConditionItem::evaluate(
                "sigma0 <= kappa^{(q-1)/(q-2)} / (C max{...})",
                p.sigma0,
                rhs_s0,
                Relation::LeqOverC,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "eta <= 1/(C max{|mu|^2, sigma_p^2 d})",
                p.eta,
                1.0 / mu2.max(noise_energy),
                Relation::LeqOverC,
                c_values,
            ));
        }
        ConditionKind::Condition2 => {
            let horizon = ts.t_star_tilde.ok_or_else(|| {
                Error::InvalidParameter("condition 2 needs sigma_b > 0 to evaluate its horizon".into())
            })?;
            let log_t = horizon.ln();
            items.push(ConditionItem::evaluate(
                "kappa^2 <= min/(C m^2 max)",
                p.kappa * p.kappa,
                mu2.min(noise_energy) / (m * m * mu2.max(noise_energy)),
                Relation::LeqOverC,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "SNR^-1 <= sqrt(d)/(C m^2)",
                inv_snr,
                d.sqrt() / (m * m),
                Relation::LeqOverC,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "SNR^-1 <= sqrt(n)/C",
                inv_snr,
                n.sqrt(),
                Relation::LeqOverC,
                c_values,
            ));
            let rhs_d = (m.powi(4) * n * n)
                .max(m * m * n * n / (p.kappa * p.kappa) * (n * n / p.delta).ln() * sq(log_t));
            items.push(ConditionItem::evaluate("d >= C max{m^4 n^2, ...}", d, rhs_d, Relation::GeqCTimes, c_values));
            items.push(ConditionItem::evaluate(
                "n >= C log(m/delta)",
                n,
                (m / p.delta).ln(),
                Relation::GeqCTimes,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "m >= C log(n Ttilde*/delta)",
                m,
                (n * horizon / p.delta).ln(),
                Relation::GeqCTimes,
                c_values,
            ));
            let rhs_s0 = (1.0 / (m * p.sigma_p * d.sqrt())).min(
                p.kappa / (p.mu_norm.max(p.sigma_p * d.sqrt()) * (m * n / p.delta).ln().sqrt()),
            );
            items.push(ConditionItem::evaluate(
                "sigma0 <= min{1/(C m sigma_p sqrt(d)), kappa/(C max sqrt(log))}",
                p.sigma0,
                rhs_s0,
                Relation::LeqOverC,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "eta >= C m^3 kappa^2 max/(|mu|^2 min)",
                p.eta,
                m * m * m * p.kappa * p.kappa * mu2.max(noise_energy)
                    / (mu2 * mu2.min(noise_energy)),
                Relation::GeqCTimes,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "eta <= m/(C |mu|^2)",
                p.eta,
                m / mu2,
                Relation::LeqOverC,
                c_values,
            ));
            items.push(ConditionItem::evaluate(
                "sigma_b <= 1/(C eta max{|mu|, sigma_p sqrt(d)} sqrt(Ttilde*) log^2)",
                p.sigma_b,
                1.0 / (p.eta
                    * p.mu_norm.max(p.sigma_p * d.sqrt())
                    * horizon.sqrt()
                    * sq((m * n * horizon / p.delta).ln())),
                Relation::LeqOverC,
                c_values,
            ));
        }
    }
    for item in &items {
        if !item.lhs.is_finite() || !item.rhs.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "condition item '{}' evaluated to non-finite lhs/rhs",
                item.name
            )));
        }
    }
    Ok(ConditionReport { which, items })
}

fn sq(v: f64) -> f64 {
    v * v
}

// ---------------------------------------------------------------------------
// Concentration diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PrelimItem {
    pub name: &'static str,
    pub applicable: bool,
    pub pass: bool,
    pub observed_min: f64,
    pub observed_max: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PrelimReport {
    pub items: Vec<PrelimItem>,
}

impl PrelimReport {
    /// True when every applicable item passes.
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|it| !it.applicable || it.pass)
    }
}

/// Check, on one sampled realization, the events the high-probability
/// analysis conditions on: noise-norm range, pairwise noise inner products,
/// exact noise/signal orthogonality (the projected sampler replaces the
/// Gaussian cross-term bound), initialization norms, the maximal initial
/// signal alignment, and class balance.
pub fn verify_preliminaries(
    data: &Dataset,
    w0: &Weights,
    sigma0: f64,
    delta: f64,
) -> Result<PrelimReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    if w0.d() != data.d() {
        return Err(Error::ShapeMismatch("w0 dimension differs from data".into()));
    }
    let n = data.n();
    let d = data.d() as f64;
    let sigma_p = data.noise().sigma_p();
    let mut items = Vec::new();

    // Noise-norm range.
    {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let v = data.xi_norm_sq(i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let lb = sigma_p * sigma_p * d / 2.0;
        let ub = 1.5 * sigma_p * sigma_p * d;
        items.push(PrelimItem {
            name: "xi_norm_sq_range",
            applicable: true,
            pass: lo >= lb && hi <= ub,
            observed_min: lo,
            observed_max: hi,
            lower_bound: Some(lb),
            upper_bound: Some(ub),
            note: None,
        });
    }

    // Pairwise inner products.
    {
        let applicable = n >= 2;
        let mut worst: f64 = 0.0;
        if applicable {
            let gram = data.gram().ok_or(Error::MissingGram)?;
            for i in 0..n {
                for k in 0..i {
                    worst = worst.max(gram[i * n + k].abs());
                }
            }
        }
        let bound = 2.0 * sigma_p * sigma_p * (d * (6.0 * (n * n) as f64 / delta).ln()).sqrt();
        items.push(PrelimItem {
            name: "xi_pairwise_inner",
            applicable,
            pass: !applicable || worst <= bound,
            observed_min: 0.0,
            observed_max: worst,
            lower_bound: None,
            upper_bound: Some(bound),
            note: (!applicable).then(|| "needs n >= 2".to_string()),
        });
    }

    // Noise/signal orthogonality (projected sampler: exact up to rounding).
    {
        let mu = data.signal().mu();
        let mu_norm = data.signal().norm();
        let mut worst_ratio: f64 = 0.0;
        for i in 0..n {
            let xi = data.example(i).xi();
            let denom = mu_norm * data.xi_norm_sq(i).sqrt();
            if denom > 0.0 {
                worst_ratio = worst_ratio.max(dot(xi, mu).abs() / denom);
            }
        }
        items.push(PrelimItem {
            name: "xi_mu_orthogonal",
            applicable: true,
            pass: worst_ratio <= 1e-10,
            observed_min: 0.0,
            observed_max: worst_ratio,
            lower_bound: None,
            upper_bound: Some(1e-10),
            note: None,
        });
    }

    // Initialization norm range.
    {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in Sign::BOTH {
            for r in 0..w0.m() {
                let v = crate::linalg::norm_sq(w0.filter(j, r));
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let lb = sigma0 * sigma0 * d / 2.0;
        let ub = 1.5 * sigma0 * sigma0 * d;
        let degenerate = sigma0 <= 0.0;
        items.push(PrelimItem {
            name: "w0_norm_sq_range",
            applicable: true,
            pass: !degenerate && lo >= lb && hi <= ub,
            observed_min: lo,
            observed_max: hi,
            lower_bound: Some(lb),
            upper_bound: Some(ub),
            note: degenerate.then(|| "degenerate init scale sigma0 = 0".to_string()),
        });
    }

    // Maximal initial signal alignment per bank.
    {
        let mu = data.signal().mu();
        let mut worst = f64::INFINITY;
        for j in Sign::BOTH {
            let mut best = f64::NEG_INFINITY;
            for r in 0..w0.m() {
                best = best.max(j.signum() * dot(w0.filter(j, r), mu));
            }
            worst = worst.min(best);
        }
        let bound = sigma0 * data.signal().norm() / 2.0;
        items.push(PrelimItem {
            name: "w0_signal_alignment_max",
            applicable: true,
            pass: worst >= bound,
            observed_min: worst,
            observed_max: worst,
            lower_bound: Some(bound),
            upper_bound: None,
            note: None,
        });
    }

    // Class balance.
    {
        let needed = 8.0 * (4.0 / delta).ln();
        let applicable = (n as f64) >= needed;
        let plus = data.examples().iter().filter(|e| e.label() == Sign::Plus).count() as f64;
        let minus = n as f64 - plus;
        let lb = n as f64 / 4.0;
        let ub = 3.0 * n as f64 / 4.0;
        items.push(PrelimItem {
            name: "class_balance",
            applicable,
            pass: !applicable || (plus >= lb && plus <= ub && minus >= lb && minus <= ub),
            observed_min: plus.min(minus),
            observed_max: plus.max(minus),
            lower_bound: Some(lb),
            upper_bound: Some(ub),
            note: (!applicable).then(|| format!("needs n >= 8 log(4/delta) = {needed:.1}")),
        });
    }

    Ok(PrelimReport { items })
}
