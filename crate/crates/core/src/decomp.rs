//! Exact signal-noise decomposition of the filters.
//!
//! Every filter is `w_{j,r}^(t) = w_{j,r}^(0) + j gamma_{j,r} mu / |mu|^2
//! + sum_i rho_{j,r,i} xi_i / |xi_i|^2 (- eta sum_k b_{j,r,k})`, and the
//! coefficients obey closed-form recurrences driven by the same per-example
//! loss and activation derivatives the gradient uses. Tracking them during
//! training is exact by construction; the least-squares recovery here is the
//! independent cross-check.

use crate::data::{Dataset, Sign};
use crate::error::{Error, Result};
use crate::linalg::{axpy, cholesky, chol_solve, dot};
use crate::model::{PerExampleState, Weights};

/// Tracked coefficients. `gamma` is signal learning per filter, `rho_pos`
/// noise memorization of own-class examples, `rho_neg` the (non-positive)
/// cross-class coefficients; `lambda_i = (1/m) sum_r (gamma_{y_i,r} +
/// rho_pos_{y_i,r,i})` is the combined growth the loss upper bound follows.
#[derive(Debug, Clone)]
pub struct Decomposition {
    m: usize,
    n: usize,
    d: usize,
    eta: f64,
    labels: Vec<Sign>,
    step: u64,
    /// Flat `j * m + r`.
    gamma: Vec<f64>,
    /// Flat `(j * m + r) * n + i`.
    rho_pos: Vec<f64>,
    rho_neg: Vec<f64>,
    lambda: Vec<f64>,
    /// Accumulated injected noise per filter, `sum_k b_{j,r,k}`, flat like
    /// the weight buffer. Present only when the run injects noise and
    /// tracking is on.
    noise_sum: Option<Vec<f64>>,
    expects_noise: bool,
}

impl Decomposition {
    /// Fresh all-zero coefficients at step 0.
    pub fn new(m: usize, d: usize, labels: Vec<Sign>, eta: f64, expects_noise: bool) -> Self {
        let n = labels.len();
        Decomposition {
            m,
            n,
            d,
            eta,
            labels,
            step: 0,
            gamma: vec![0.0; 2 * m],
            rho_pos: vec![0.0; 2 * m * n],
            rho_neg: vec![0.0; 2 * m * n],
            lambda: vec![0.0; n],
            noise_sum: expects_noise.then(|| vec![0.0; 2 * m * d]),
            expects_noise,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self, j: Sign, r: usize) -> f64 {
        self.gamma[j.index() * self.m + r]
    }

    pub fn rho_pos(&self, j: Sign, r: usize, i: usize) -> f64 {
        self.rho_pos[(j.index() * self.m + r) * self.n + i]
    }

    pub fn rho_neg(&self, j: Sign, r: usize, i: usize) -> f64 {
        self.rho_neg[(j.index() * self.m + r) * self.n + i]
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambda[i]
    }

    pub fn noise_sum(&self) -> Option<&[f64]> {
        self.noise_sum.as_deref()
    }

    pub fn gamma_mean(&self) -> f64 {
        self.gamma.iter().sum::<f64>() / self.gamma.len() as f64
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean of rho_pos over the structurally nonzero slots (y_i = j).
    pub fn rho_pos_mean(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for j in Sign::BOTH {
            for r in 0..self.m {
                for (i, &y) in self.labels.iter().enumerate() {
                    if y == j {
                        total += self.rho_pos[(j.index() * self.m + r) * self.n + i];
                        count += 1;
                    }
                }
            }
        }
        if count == 0 { 0.0 } else { total / count as f64 }
    }

    /// Mean of rho_neg over the structurally nonzero slots (y_i != j).
    pub fn rho_neg_mean(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for j in Sign::BOTH {
            for r in 0..self.m {
                for (i, &y) in self.labels.iter().enumerate() {
                    if y != j {
                        total += self.rho_neg[(j.index() * self.m + r) * self.n + i];
                        count += 1;
                    }
                }
            }
        }
        if count == 0 { 0.0 } else { total / count as f64 }
    }

    pub fn rho_pos_max(&self) -> f64 {
        self.rho_pos.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum over i of rho_pos / rho_neg for one filter (trace CSV columns).
    pub fn rho_sums(&self, j: Sign, r: usize) -> (f64, f64) {
        let base = (j.index() * self.m + r) * self.n;
        let pos: f64 = self.rho_pos[base..base + self.n].iter().sum();
        let neg: f64 = self.rho_neg[base..base + self.n].iter().sum();
        (pos, neg)
    }

    /// Advance the coefficients by one step using the per-example states of
    /// the gradient evaluation at `step`:
    ///
    /// `gamma' = gamma - (eta/nm) sum_i l'_i sigma'(<w, y_i mu>) |mu|^2`
    /// `rho_pos' = rho_pos - (eta/nm) l'_i sigma'(<w, xi_i>) |xi_i|^2` (y_i = j)
    /// `rho_neg' = rho_neg + (eta/nm) l'_i sigma'(<w, xi_i>) |xi_i|^2` (y_i != j)
    pub fn advance(
        &mut self,
        per_example: &[PerExampleState],
        mu_norm_sq: f64,
        xi_norm_sq: &[f64],
        step: u64,
    ) -> Result<()> {
        if step != self.step {
            return Err(Error::StaleState { have: self.step, got: step });
        }
        if per_example.len() != self.n || xi_norm_sq.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "decomposition over n = {}, batch has {}",
                self.n,
                per_example.len()
            )));
        }
        let scale = self.eta / (self.n as f64 * self.m as f64);
        for j in Sign::BOTH {
            for r in 0..self.m {
                let fi = j.index() * self.m + r;
                let mut gamma_inc = 0.0;
                for pe in per_example {
                    gamma_inc -= pe.loss_deriv * pe.act_deriv_signal[fi];
                }
                self.gamma[fi] += scale * gamma_inc * mu_norm_sq;
                for (i, pe) in per_example.iter().enumerate() {
                    let inc = scale * pe.loss_deriv * pe.act_deriv_noise[fi] * xi_norm_sq[i];
                    if self.labels[i] == j {
                        self.rho_pos[fi * self.n + i] -= inc;
                    } else {
                        self.rho_neg[fi * self.n + i] += inc;
                    }
                }
            }
        }
        self.step += 1;
        self.recompute_lambda();
        Ok(())
    }

    /// Accumulate one step of injected noise into the running sum.
    pub fn accumulate_noise(&mut self, block: &Weights) -> Result<()> {
        let sum = self
            .noise_sum
            .as_mut()
            .ok_or_else(|| Error::IncompleteTrace("decomposition was not set up for injected noise".into()))?;
        if block.as_slice().len() != sum.len() {
            return Err(Error::ShapeMismatch("noise block shape differs from weights".into()));
        }
        axpy(1.0, block.as_slice(), sum);
        Ok(())
    }

    fn recompute_lambda(&mut self) {
        for i in 0..self.n {
            let j = self.labels[i];
            let mut acc = 0.0;
            for r in 0..self.m {
                let fi = j.index() * self.m + r;
                acc += self.gamma[fi] + self.rho_pos[fi * self.n + i];
            }
            self.lambda[i] = acc / self.m as f64;
        }
    }
}

/// Rebuild the weights a decomposition describes. Returns the reconstruction
/// and, when the actual weights are supplied, the relative Frobenius residual
/// `|W_actual - W_hat|_F / |W_actual|_F`.
pub fn reconstruct_weights(
    w0: &Weights,
    dec: &Decomposition,
    data: &Dataset,
    w_actual: Option<&Weights>,
) -> Result<(Weights, Option<f64>)> {
    if w0.m() != dec.m || w0.d() != dec.d || w0.d() != data.d() || data.n() != dec.n {
        return Err(Error::ShapeMismatch("reconstruction shapes disagree".into()));
    }
    if dec.expects_noise && dec.noise_sum.is_none() {
        return Err(Error::IncompleteTrace(
            "run injected noise but no noise sum was logged".into(),
        ));
    }
    let mu = data.signal().mu();
    let mu_norm_sq = data.signal().norm_sq();
    let mut hat = w0.clone();
    for j in Sign::BOTH {
        for r in 0..dec.m {
            let fi = j.index() * dec.m + r;
            let row = hat.filter_mut(j, r);
            axpy(j.signum() * dec.gamma[fi] / mu_norm_sq, mu, row);
            for i in 0..dec.n {
                let rho = dec.rho_pos[fi * dec.n + i] + dec.rho_neg[fi * dec.n + i];
                if rho != 0.0 {
                    axpy(rho / data.xi_norm_sq(i), data.example(i).xi(), row);
                }
            }
        }
    }
    if let Some(sum) = &dec.noise_sum {
        let buf = hat.as_mut_slice();
        axpy(-dec.eta, sum, buf);
    }
    let residual = w_actual.map(|actual| {
        let mut diff_sq = 0.0;
        for (a, b) in actual.as_slice().iter().zip(hat.as_slice()) {
            diff_sq += (a - b) * (a - b);
        }
        diff_sq.sqrt() / actual.frobenius_norm()
    });
    Ok((hat, residual))
}

/// Recover coefficients by least-squares projection of
/// `w_t - w_0 + eta * noise_sum` onto `span{mu, xi_1..xi_n}` per filter,
/// splitting each xi coefficient into positive and negative parts by sign.
///
/// Solved through the normal equations on the (n+1)-dimensional basis Gram
/// system; n+1 <= d is required for the basis to be independent.
pub fn recover_coefficients_lstsq(
    w_t: &Weights,
    w0: &Weights,
    data: &Dataset,
    noise: Option<(&[f64], f64)>,
) -> Result<Decomposition> {
    let n = data.n();
    let d = data.d();
    let m = w_t.m();
    if w0.m() != m || w0.d() != d || w_t.d() != d {
        return Err(Error::ShapeMismatch("recovery shapes disagree".into()));
    }
    if n + 1 > d {
        return Err(Error::InvalidParameter(format!(
            "least-squares basis needs n + 1 <= d, got n = {n}, d = {d}"
        )));
    }
    let gram = data.gram().ok_or(Error::MissingGram)?;
    let mu = data.signal().mu();
    let mu_norm_sq = data.signal().norm_sq();

    // Basis vectors b_0 = mu/|mu|^2, b_i = xi_i/|xi_i|^2; Gram of the basis.
    let nn = n + 1;
    let mut basis_gram = vec![0.0; nn * nn];
    basis_gram[0] = 1.0 / mu_norm_sq;
    for i in 0..n {
        let gi = dot(mu, data.example(i).xi()) / (mu_norm_sq * data.xi_norm_sq(i));
        basis_gram[i + 1] = gi;
        basis_gram[(i + 1) * nn] = gi;
        for k in 0..n {
            basis_gram[(i + 1) * nn + k + 1] =
                gram[i * n + k] / (data.xi_norm_sq(i) * data.xi_norm_sq(k));
        }
    }
    let mut factor = basis_gram.clone();
    if cholesky(&mut factor, nn).is_err() {
        // One retry with diagonal jitter before reporting conditioning.
        factor.copy_from_slice(&basis_gram);
        for k in 0..nn {
            factor[k * nn + k] += 1e-12;
        }
        if cholesky(&mut factor, nn).is_err() {
            let mut max_diag = f64::MIN;
            let mut min_diag = f64::MAX;
            for k in 0..nn {
                max_diag = max_diag.max(basis_gram[k * nn + k]);
                min_diag = min_diag.min(basis_gram[k * nn + k].abs().max(f64::MIN_POSITIVE));
            }
            return Err(Error::IllConditionedBasis { cond: max_diag / min_diag });
        }
    }

    let eta = noise.map(|(_, e)| e).unwrap_or(0.0);
    let mut dec = Decomposition::new(m, d, data.labels(), eta, false);
    let mut rhs = vec![0.0; nn];
    let mut disp = vec![0.0; d];
    for j in Sign::BOTH {
        for r in 0..m {
            let fi = j.index() * m + r;
            for (k, (wt, w0v)) in w_t.filter(j, r).iter().zip(w0.filter(j, r)).enumerate() {
                disp[k] = wt - w0v;
            }
            if let Some((sum, eta)) = noise {
                axpy(eta, &sum[fi * d..(fi + 1) * d], &mut disp);
            }
            rhs[0] = dot(&disp, mu) / mu_norm_sq;
            for i in 0..n {
                rhs[i + 1] = dot(&disp, data.example(i).xi()) / data.xi_norm_sq(i);
            }
            chol_solve(&factor, nn, &mut rhs);
            dec.gamma[fi] = j.signum() * rhs[0];
            for i in 0..n {
                let rho = rhs[i + 1];
                dec.rho_pos[fi * n + i] = rho.max(0.0);
                dec.rho_neg[fi * n + i] = rho.min(0.0);
            }
        }
    }
    dec.recompute_lambda();
    Ok(dec)
}

/// One row of the decomposition trace CSV (`step,j,r,gamma,rho_pos_sum,rho_neg_sum`).
#[derive(Debug, Clone)]
pub struct DecompTraceRow {
    pub step: u64,
    pub j: Sign,
    pub r: usize,
    pub gamma: f64,
    pub rho_pos_sum: f64,
    pub rho_neg_sum: f64,
}

/// One row of the per-example lambda CSV (`step,i,lambda`).
#[derive(Debug, Clone)]
pub struct LambdaTraceRow {
    pub step: u64,
    pub i: usize,
    pub lambda: f64,
}

/// Decomposition output bundled into a run record: final coefficients plus
/// the rows sampled at eval steps.
#[derive(Debug, Clone)]
pub struct DecompOutput {
    pub final_state: Decomposition,
    pub trace: Vec<DecompTraceRow>,
    pub lambda_trace: Vec<LambdaTraceRow>,
}

impl DecompOutput {
    pub fn write_trace_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,j,r,gamma,rho_pos_sum,rho_neg_sum")?;
        for row in &self.trace {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.step,
                row.j.signum() as i64,
                row.r,
                row.gamma,
                row.rho_pos_sum,
                row.rho_neg_sum
            )?;
        }
        Ok(())
    }

    pub fn write_lambda_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,i,lambda")?;
        for row in &self.lambda_trace {
            writeln!(w, "{},{},{}", row.step, row.i, row.lambda)?;
        }
        Ok(())
    }
}
