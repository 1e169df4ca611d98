//! Two-layer CNN with Huberized ReLU filters, logistic loss, and the
//! analytic full-batch gradient.
//!
//! The network is `f(W, x) = F_{+1} - F_{-1}` with
//! `F_j = (1/m) sum_r [ sigma(<w_{j,r}, x^(1)>) + sigma(<w_{j,r}, x^(2)>) ]`.
//! The activation is zero on negatives, a degree-q polynomial on `[0, kappa]`,
//! and linear with slope 1 beyond, continuously differentiable at both joins.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::data::{Dataset, Example, Sign};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

/// Huberized ReLU parameters with precomputed branch coefficients.
#[derive(Debug, Clone, Copy)]
pub struct Activation {
    kappa: f64,
    q: u32,
    /// kappa^{1-q}
    deriv_coef: f64,
    /// kappa^{1-q} / q
    value_coef: f64,
}

/// z^p by repeated multiplication (deterministic, no pow intrinsic).
#[inline]
fn powi(z: f64, p: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..p {
        acc *= z;
    }
    acc
}

impl Activation {
    pub fn new(kappa: f64, q: u32) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive and finite, got {kappa}"
            )));
        }
        if q < 3 {
            return Err(Error::InvalidParameter(format!("q must be >= 3, got {q}")));
        }
        let deriv_coef = 1.0 / powi(kappa, q - 1);
        Ok(Activation { kappa, q, deriv_coef, value_coef: deriv_coef / q as f64 })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Value and derivative at `z`; no finiteness check, for inner loops
    /// whose inputs are already validated.
    #[inline]
    pub fn act_raw(&self, z: f64) -> (f64, f64) {
        if z < 0.0 {
            (0.0, 0.0)
        } else if z <= self.kappa {
            let zq1 = powi(z, self.q - 1);
            (self.value_coef * zq1 * z, self.deriv_coef * zq1)
        } else {
            (z - self.kappa + self.kappa / self.q as f64, 1.0)
        }
    }

    /// Value and derivative at `z`.
    pub fn act(&self, z: f64) -> Result<(f64, f64)> {
        if !z.is_finite() {
            return Err(Error::NonFiniteInput(format!("activation input {z}")));
        }
        Ok(self.act_raw(z))
    }
}

/// Logistic loss `log(1 + e^{-t})` and its derivative `-1/(1 + e^t)`,
/// computed in the branch that avoids overflow on either tail.
pub fn logistic_loss(margin: f64) -> Result<(f64, f64)> {
    if !margin.is_finite() {
        return Err(Error::NonFiniteInput(format!("loss margin {margin}")));
    }
    Ok(logistic_loss_raw(margin))
}

#[inline]
pub(crate) fn logistic_loss_raw(margin: f64) -> (f64, f64) {
    if margin >= 0.0 {
        let e = (-margin).exp();
        (e.ln_1p(), -e / (1.0 + e))
    } else {
        let e = margin.exp();
        (-margin + e.ln_1p(), -1.0 / (1.0 + e))
    }
}

/// Filter weights: two banks (`j = +1`, `j = -1`) of `m` filters in R^d,
/// stored contiguously, plus bank first, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    m: usize,
    d: usize,
    w: Vec<f64>,
}

impl Weights {
    pub fn zeros(m: usize, d: usize) -> Self {
        Weights { m, d, w: vec![0.0; 2 * m * d] }
    }

    pub fn from_raw(m: usize, d: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != 2 * m * d {
            return Err(Error::ShapeMismatch(format!(
                "weight buffer has {} entries, expected 2*{m}*{d}",
                w.len()
            )));
        }
        Ok(Weights { m, d, w })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn offset(&self, j: Sign, r: usize) -> usize {
        (j.index() * self.m + r) * self.d
    }

    #[inline]
    pub fn filter(&self, j: Sign, r: usize) -> &[f64] {
        let o = self.offset(j, r);
        &self.w[o..o + self.d]
    }

    #[inline]
    pub fn filter_mut(&mut self, j: Sign, r: usize) -> &mut [f64] {
        let o = self.offset(j, r);
        &mut self.w[o..o + self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.w
    }

    /// Flat filter index `j.index() * m + r`, the layout shared by
    /// per-example derivative tables.
    #[inline]
    pub fn flat_index(&self, j: Sign, r: usize) -> usize {
        j.index() * self.m + r
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::linalg::norm_sq(&self.w).sqrt()
    }

    /// `self += alpha * other`, entrywise.
    pub fn add_scaled(&mut self, alpha: f64, other: &Weights) -> Result<()> {
        if self.m != other.m || self.d != other.d {
            return Err(Error::ShapeMismatch("weight shapes differ".into()));
        }
        axpy(alpha, &other.w, &mut self.w);
        Ok(())
    }
}

/// Per-example quantities from one gradient evaluation: the margin
/// `y_i f(W, x_i)`, the loss derivative, and the activation derivatives on
/// the signal and noise patches for every filter (flat `j * m + r` layout).
#[derive(Debug, Clone)]
pub struct PerExampleState {
    pub margin: f64,
    pub loss_deriv: f64,
    pub act_deriv_signal: Vec<f64>,
    pub act_deriv_noise: Vec<f64>,
}

/// Output of [`full_batch_gradient`].
#[derive(Debug)]
pub struct BatchGradient {
    /// Gradient of the empirical loss, same shape as the weights.
    pub grad: Weights,
    pub per_example: Vec<PerExampleState>,
    pub train_loss: f64,
}

/// Forward value `f` with both bank contributions.
#[derive(Debug, Clone, Copy)]
pub struct ForwardValue {
    pub f: f64,
    pub f_plus: f64,
    pub f_minus: f64,
}

/// Evaluate the CNN on one example via its raw patches.
pub fn forward(w: &Weights, x: &Example, a: &Activation) -> Result<ForwardValue> {
    if x.d() != w.d() {
        return Err(Error::ShapeMismatch(format!(
            "example dimension {} vs weight dimension {}",
            x.d(),
            w.d()
        )));
    }
    let mut bank = [0.0f64; 2];
    for j in Sign::BOTH {
        let mut acc = 0.0;
        for r in 0..w.m() {
            let filter = w.filter(j, r);
            acc += a.act_raw(dot(filter, x.patch_a())).0;
            acc += a.act_raw(dot(filter, x.patch_b())).0;
        }
        bank[j.index()] = acc / w.m() as f64;
    }
    Ok(ForwardValue { f: bank[0] - bank[1], f_plus: bank[0], f_minus: bank[1] })
}

/// Margin contribution table for one example against every filter, exploiting
/// the dataset structure (signal patch is `y mu`, noise patch is `xi`).
struct ExampleScores {
    /// sigma and sigma' at `<w_{j,r}, y_i mu>`, flat filter layout.
    sig: Vec<(f64, f64)>,
    /// sigma and sigma' at `<w_{j,r}, xi_i>`.
    noi: Vec<(f64, f64)>,
}

fn margin_of(scores: &ExampleScores, label: Sign, m: usize) -> f64 {
    let mut f_plus = 0.0;
    let mut f_minus = 0.0;
    for r in 0..m {
        f_plus += scores.sig[r].0 + scores.noi[r].0;
        f_minus += scores.sig[m + r].0 + scores.noi[m + r].0;
    }
    label.signum() * (f_plus - f_minus) / m as f64
}

/// Analytic gradient of the empirical logistic loss over the whole dataset,
/// plus per-example states and the training loss.
///
/// Accumulation order is fixed: each filter's contribution is summed over
/// examples in dataset order, filters are independent, so the result is
/// bit-identical no matter how many threads run.
pub fn full_batch_gradient(w: &Weights, data: &Dataset, a: &Activation) -> Result<BatchGradient> {
    if data.d() != w.d() {
        return Err(Error::ShapeMismatch(format!(
            "data dimension {} vs weight dimension {}",
            data.d(),
            w.d()
        )));
    }
    let m = w.m();
    let n = data.n();
    let mu = data.signal().mu();

    // <w_{j,r}, mu> once per filter.
    let s_mu: Vec<f64> = (0..2 * m)
        .map(|fi| {
            let (j, r) = if fi < m { (Sign::Plus, fi) } else { (Sign::Minus, fi - m) };
            dot(w.filter(j, r), mu)
        })
        .collect();

    // Per-example activation scores (parallel over examples).
    let scores: Vec<ExampleScores> = data
        .examples()
        .par_iter()
        .map(|ex| {
            let y = ex.label().signum();
            let sig: Vec<(f64, f64)> = s_mu.iter().map(|&s| a.act_raw(y * s)).collect();
            let noi: Vec<(f64, f64)> = (0..2 * m)
                .map(|fi| {
                    let (j, r) = if fi < m { (Sign::Plus, fi) } else { (Sign::Minus, fi - m) };
                    a.act_raw(dot(w.filter(j, r), ex.xi()))
                })
                .collect();
            ExampleScores { sig, noi }
        })
        .collect();

    let mut per_example = Vec::with_capacity(n);
    let mut train_loss = 0.0;
    for (ex, sc) in data.examples().iter().zip(&scores) {
        let margin = margin_of(sc, ex.label(), m);
        if !margin.is_finite() {
            return Err(Error::NonFiniteInput(format!("margin {margin} during gradient")));
        }
        let (loss, loss_deriv) = logistic_loss_raw(margin);
        train_loss += loss;
        per_example.push(PerExampleState {
            margin,
            loss_deriv,
            act_deriv_signal: sc.sig.iter().map(|s| s.1).collect(),
            act_deriv_noise: sc.noi.iter().map(|s| s.1).collect(),
        });
    }
    train_loss /= n as f64;

    // grad_{j,r} = (1/nm) sum_i l'_i j [ sigma'(<w,y_i mu>) mu + sigma'(<w,xi_i>) y_i xi_i ]
    let scale = 1.0 / (n as f64 * m as f64);
    let mut grad = Weights::zeros(m, w.d());
    let grad_rows: Vec<(usize, Vec<f64>)> = (0..2 * m)
        .into_par_iter()
        .map(|fi| {
            let j = if fi < m { Sign::Plus } else { Sign::Minus };
            let mut row = vec![0.0; w.d()];
            let mut mu_coef = 0.0;
            for (i, ex) in data.examples().iter().enumerate() {
                let pe = &per_example[i];
                mu_coef += pe.loss_deriv * pe.act_deriv_signal[fi];
                let xi_coef = pe.loss_deriv * pe.act_deriv_noise[fi] * ex.label().signum();
                if xi_coef != 0.0 {
                    axpy(scale * j.signum() * xi_coef, ex.xi(), &mut row);
                }
            }
            axpy(scale * j.signum() * mu_coef, mu, &mut row);
            (fi, row)
        })
        .collect();
    for (fi, row) in grad_rows {
        let (j, r) = if fi < m { (Sign::Plus, fi) } else { (Sign::Minus, fi - m) };
        grad.filter_mut(j, r).copy_from_slice(&row);
    }

    Ok(BatchGradient { grad, per_example, train_loss })
}

/// Training loss alone (no gradient), same margin computation.
pub fn train_loss(w: &Weights, data: &Dataset, a: &Activation) -> Result<f64> {
    let mut total = 0.0;
    for ex in data.examples() {
        let fv = forward(w, ex, a)?;
        let margin = ex.label().signum() * fv.f;
        if !margin.is_finite() {
            return Err(Error::NonFiniteInput(format!("margin {margin}")));
        }
        total += logistic_loss_raw(margin).0;
    }
    Ok(total / data.n() as f64)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

const WEIGHTS_MAGIC: &[u8; 8] = b"DPGDW001";

impl Weights {
    /// Little-endian checkpoint: magic, u32 m, u32 d, then the plus bank and
    /// the minus bank, row-major.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&(self.m as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        for v in &self.w {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Weights> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format("bad weights magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let m = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        let mut w = vec![0.0; 2 * m * d];
        let mut b8 = [0u8; 8];
        for v in &mut w {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Weights::from_raw(m, d, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NoiseSpec, SignalSpec, Slot};

    #[test]
    fn activation_branches() {
        let a = Activation::new(0.5, 3).unwrap();
        // Threshold: sigma(kappa) = kappa/q, sigma'(kappa) = 1.
        let (v, dv) = a.act(0.5).unwrap();
        assert!((v - 0.1666667).abs() < 1e-6);
        assert!((dv - 1.0).abs() < 1e-12);
        // Polynomial branch.
        let (v, dv) = a.act(0.25).unwrap();
        assert!((v - 0.0208333).abs() < 1e-6);
        assert!((dv - 0.25).abs() < 1e-12);
        // Negative branch.
        assert_eq!(a.act(-0.3).unwrap(), (0.0, 0.0));
        // Non-finite input.
        assert!(a.act(f64::NAN).is_err());
    }

    #[test]
    fn activation_rejects_bad_params() {
        assert!(Activation::new(0.0, 3).is_err());
        assert!(Activation::new(0.5, 2).is_err());
        assert!(Activation::new(f64::NAN, 3).is_err());
    }

    #[test]
    fn activation_is_c1_at_joins() {
        let a = Activation::new(0.5, 3).unwrap();
        let h = 1e-8;
        for z0 in [0.0, 0.5] {
            let (v_lo, d_lo) = a.act_raw(z0 - h);
            let (v_hi, d_hi) = a.act_raw(z0 + h);
            assert!((v_hi - v_lo).abs() < 1e-6, "value jump at {z0}");
            assert!((d_hi - d_lo).abs() < 1e-6, "derivative jump at {z0}");
        }
    }

    #[test]
    fn activation_q_homogeneity_identity() {
        // On [0, kappa]: sigma'(z) z = q sigma(z); beyond kappa: sigma'(z) z <= q sigma(z).
        // The two sides take different rounding paths, so allow a few ulps.
        let a = Activation::new(0.5, 3).unwrap();
        for k in 0..=100 {
            let z = 0.5 * k as f64 / 100.0;
            let (v, dv) = a.act_raw(z);
            let lhs = dv * z;
            let rhs = 3.0 * v;
            assert!((lhs - rhs).abs() <= 1e-15 * rhs.abs().max(1e-300), "z = {z}");
        }
        for k in 1..=100 {
            let z = 0.5 + k as f64 / 10.0;
            let (v, dv) = a.act_raw(z);
            assert!(dv * z <= 3.0 * v * (1.0 + 1e-15), "z = {z}");
        }
    }

    #[test]
    fn logistic_loss_values() {
        let (v, dv) = logistic_loss(0.0).unwrap();
        assert!((v - 0.6931472).abs() < 1e-6);
        assert!((dv + 0.5).abs() < 1e-12);

        let (v, dv) = logistic_loss(50.0).unwrap();
        assert!(v > 0.0 && v < 1e-20 && v.is_finite(), "loss at +50 is {v}");
        assert!((v - 1.9288e-22).abs() < 1e-25);
        assert!(dv < 0.0);

        let (v, dv) = logistic_loss(-50.0).unwrap();
        assert!((v - 50.0).abs() < 1e-9);
        assert!((dv + 1.0).abs() < 1e-9);

        assert!(logistic_loss(f64::INFINITY).is_err());
    }

    #[test]
    fn loss_derivative_bounded_by_loss() {
        for k in -700..=700 {
            let t = k as f64;
            let (v, dv) = logistic_loss_raw(t);
            assert!(dv.abs() <= v * (1.0 + 1e-12), "|l'({t})| = {} > l = {v}", dv.abs());
        }
    }

    fn tiny_instance() -> (Weights, Example, Activation, SignalSpec) {
        let signal = SignalSpec::new(vec![1.0, 0.0]).unwrap();
        let mut w = Weights::zeros(1, 2);
        w.filter_mut(Sign::Plus, 0).copy_from_slice(&[0.25, 0.0]);
        let ex = Example::compose(Sign::Plus, Slot::First, vec![0.0, 0.25], &signal).unwrap();
        let a = Activation::new(0.5, 3).unwrap();
        (w, ex, a, signal)
    }

    #[test]
    fn forward_hand_instance() {
        let (w, ex, a, _) = tiny_instance();
        let fv = forward(&w, &ex, &a).unwrap();
        // sigma(0.25) + sigma(0) on the plus bank, zero minus bank.
        assert!((fv.f - 0.0208333).abs() < 1e-6);
        assert!(fv.f_plus >= 0.0 && fv.f_minus >= 0.0);
    }

    #[test]
    fn forward_zero_weights() {
        let (_, ex, a, _) = tiny_instance();
        let w = Weights::zeros(3, 2);
        let fv = forward(&w, &ex, &a).unwrap();
        assert_eq!(fv.f, 0.0);
        assert_eq!(fv.f_plus, 0.0);
        assert_eq!(fv.f_minus, 0.0);
    }

    #[test]
    fn swapping_banks_negates_f() {
        let signal = SignalSpec::uniform_direction(8, 1.0).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let ds = Dataset::sample(6, &signal, &noise, 9).unwrap();
        let a = Activation::new(0.5, 3).unwrap();
        let w = crate::train::init_weights(4, 8, 0.1, 17);
        let mut swapped = Weights::zeros(4, 8);
        for r in 0..4 {
            swapped.filter_mut(Sign::Plus, r).copy_from_slice(w.filter(Sign::Minus, r));
            swapped.filter_mut(Sign::Minus, r).copy_from_slice(w.filter(Sign::Plus, r));
        }
        for ex in ds.examples() {
            let f0 = forward(&w, ex, &a).unwrap().f;
            let f1 = forward(&swapped, ex, &a).unwrap().f;
            assert_eq!(f0, -f1);
        }
    }

    #[test]
    fn forward_shape_mismatch() {
        let (_, ex, a, _) = tiny_instance();
        let w = Weights::zeros(1, 3);
        assert!(matches!(forward(&w, &ex, &a), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn gradient_zero_at_zero_weights() {
        let signal = SignalSpec::uniform_direction(8, 1.0).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let ds = Dataset::sample(5, &signal, &noise, 4).unwrap();
        let a = Activation::new(0.5, 3).unwrap();
        let w = Weights::zeros(3, 8);
        let batch = full_batch_gradient(&w, &ds, &a).unwrap();
        assert!(batch.grad.as_slice().iter().all(|&g| g == 0.0));
        assert!((batch.train_loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_deriv_is_in_open_unit_interval() {
        let signal = SignalSpec::uniform_direction(8, 1.0).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let ds = Dataset::sample(5, &signal, &noise, 4).unwrap();
        let a = Activation::new(0.5, 3).unwrap();
        let w = crate::train::init_weights(3, 8, 0.05, 2);
        let batch = full_batch_gradient(&w, &ds, &a).unwrap();
        for pe in &batch.per_example {
            assert!(pe.loss_deriv > -1.0 && pe.loss_deriv < 0.0);
            for &s in pe.act_deriv_signal.iter().chain(&pe.act_deriv_noise) {
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }

    #[test]
    fn weights_checkpoint_round_trip() {
        let w = crate::train::init_weights(3, 5, 0.2, 8);
        let mut buf = Vec::new();
        w.save(&mut buf).unwrap();
        let back = Weights::load(&mut buf.as_slice()).unwrap();
        assert_eq!(w, back);
    }
}
