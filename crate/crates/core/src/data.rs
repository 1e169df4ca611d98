//! Synthetic two-patch signal-plus-noise data.
//!
//! Each example is a pair of d-dimensional patches: one patch carries the
//! label times a fixed signal vector, the other carries a Gaussian noise
//! vector drawn orthogonal to the signal. The noise is sampled by projecting
//! an isotropic Gaussian, which realizes the covariance
//! `sigma_p^2 (I - mu mu^T / |mu|^2)` exactly in O(d).

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::rng::{stream, Purpose};

/// Class label / filter-bank index, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    #[inline]
    pub fn signum(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Bank index: Plus = 0, Minus = 1.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn opposite(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Which patch holds the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

/// The fixed signal vector.
#[derive(Debug, Clone)]
pub struct SignalSpec {
    mu: Vec<f64>,
    norm_sq: f64,
}

impl SignalSpec {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidSignal("mu must have positive dimension".into()));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("mu has non-finite entries".into()));
        }
        let norm_sq = norm_sq(&mu);
        if norm_sq <= 0.0 {
            return Err(Error::InvalidSignal("mu must have positive norm".into()));
        }
        Ok(SignalSpec { mu, norm_sq })
    }

    /// Signal of norm `mu_norm` along the normalized all-ones direction.
    pub fn uniform_direction(d: usize, mu_norm: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSignal("dimension must be >= 1".into()));
        }
        if !(mu_norm > 0.0) || !mu_norm.is_finite() {
            return Err(Error::InvalidSignal(format!("mu_norm must be positive, got {mu_norm}")));
        }
        let entry = mu_norm / (d as f64).sqrt();
        SignalSpec::new(vec![entry; d])
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }
}

/// Noise patch scale.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    sigma_p: f64,
}

impl NoiseSpec {
    pub fn new(sigma_p: f64) -> Result<Self> {
        if !(sigma_p > 0.0) || !sigma_p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_p must be positive and finite, got {sigma_p}"
            )));
        }
        Ok(NoiseSpec { sigma_p })
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }
}

/// One two-patch example. The patch named by `signal_slot` equals
/// `label * mu` bit-for-bit; the other equals `xi`.
#[derive(Debug, Clone)]
pub struct Example {
    label: Sign,
    signal_slot: Slot,
    xi: Vec<f64>,
    patch_a: Vec<f64>,
    patch_b: Vec<f64>,
}

impl Example {
    pub fn compose(label: Sign, signal_slot: Slot, xi: Vec<f64>, signal: &SignalSpec) -> Result<Self> {
        if xi.len() != signal.d() {
            return Err(Error::ShapeMismatch(format!(
                "xi has length {}, signal dimension is {}",
                xi.len(),
                signal.d()
            )));
        }
        let signal_patch: Vec<f64> = signal.mu().iter().map(|v| label.signum() * v).collect();
        let (patch_a, patch_b) = match signal_slot {
            Slot::First => (signal_patch, xi.clone()),
            Slot::Second => (xi.clone(), signal_patch),
        };
        Ok(Example { label, signal_slot, xi, patch_a, patch_b })
    }

    pub fn label(&self) -> Sign {
        self.label
    }

    pub fn signal_slot(&self) -> Slot {
        self.signal_slot
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn patch_a(&self) -> &[f64] {
        &self.patch_a
    }

    pub fn patch_b(&self) -> &[f64] {
        &self.patch_b
    }

    pub fn d(&self) -> usize {
        self.xi.len()
    }
}

/// A sampled training set plus the specs and seed that produced it.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    signal: SignalSpec,
    noise: NoiseSpec,
    seed: u64,
    /// n x n matrix of `<xi_i, xi_j>`, row-major.
    gram: Option<Vec<f64>>,
}

/// Draw one noise vector `xi = g - (<g,mu>/|mu|^2) mu` with `g ~ N(0, sigma_p^2 I)`.
pub fn sample_noise<R: Rng>(signal: &SignalSpec, noise: &NoiseSpec, rng: &mut R) -> Vec<f64> {
    let sigma_p = noise.sigma_p();
    let mut g: Vec<f64> = (0..signal.d())
        .map(|_| sigma_p * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let coef = dot(&g, signal.mu()) / signal.norm_sq();
    for (gi, mi) in g.iter_mut().zip(signal.mu()) {
        *gi -= coef * mi;
    }
    g
}

fn sample_example(signal: &SignalSpec, noise: &NoiseSpec, seed: u64, index: u64) -> Example {
    let mut rng = stream(seed, Purpose::DatasetExample, index);
    let label = if rng.random::<bool>() { Sign::Plus } else { Sign::Minus };
    let slot = if rng.random::<bool>() { Slot::First } else { Slot::Second };
    let xi = sample_noise(signal, noise, &mut rng);
    Example::compose(label, slot, xi, signal).expect("xi sampled at signal dimension")
}

impl Dataset {
    /// Assemble a dataset from explicit examples (tests and import path).
    pub fn from_parts(
        examples: Vec<Example>,
        signal: SignalSpec,
        noise: NoiseSpec,
        seed: u64,
    ) -> Result<Dataset> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if examples.iter().any(|e| e.d() != signal.d()) {
            return Err(Error::ShapeMismatch("examples disagree with signal dimension".into()));
        }
        let mut ds = Dataset { examples, signal, noise, seed, gram: None };
        ds.compute_gram();
        Ok(ds)
    }

    /// Sample `n` independent examples. Deterministic in `seed`; examples are
    /// generated from per-example streams so the result does not depend on
    /// how the generation is scheduled.
    pub fn sample(n: usize, signal: &SignalSpec, noise: &NoiseSpec, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let examples: Vec<Example> = (0..n)
            .into_par_iter()
            .map(|i| sample_example(signal, noise, seed, i as u64))
            .collect();
        let mut ds = Dataset {
            examples,
            signal: signal.clone(),
            noise: *noise,
            seed,
            gram: None,
        };
        ds.compute_gram();
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn d(&self) -> usize {
        self.signal.d()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn signal(&self) -> &SignalSpec {
        &self.signal
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn gram(&self) -> Option<&[f64]> {
        self.gram.as_deref()
    }

    #[cfg(test)]
    pub(crate) fn strip_gram_for_tests(&mut self) {
        self.gram = None;
    }

    /// `|xi_i|^2` from the Gram diagonal.
    pub fn xi_norm_sq(&self, i: usize) -> f64 {
        match &self.gram {
            Some(g) => g[i * self.n() + i],
            None => norm_sq(self.examples[i].xi()),
        }
    }

    pub fn labels(&self) -> Vec<Sign> {
        self.examples.iter().map(|e| e.label()).collect()
    }

    /// Populate the pairwise noise Gram matrix (row-parallel, each row is an
    /// independent sequential reduction).
    pub fn compute_gram(&mut self) {
        let n = self.n();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = self.examples[i].xi();
                (0..n).map(|j| dot(xi, self.examples[j].xi())).collect()
            })
            .collect();
        let mut gram = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            gram[i * n..(i + 1) * n].copy_from_slice(&row);
        }
        // Symmetrize: dot(a,b) and dot(b,a) are identical term sequences, but
        // make the invariant structural anyway.
        for i in 0..n {
            for j in 0..i {
                let v = gram[j * n + i];
                gram[i * n + j] = v;
            }
        }
        self.gram = Some(gram);
    }
}

/// Signal-to-noise ratio `|mu| / (sigma_p sqrt(d))`.
pub fn snr(signal: &SignalSpec, noise: &NoiseSpec) -> f64 {
    signal.norm() / (noise.sigma_p() * (signal.d() as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Binary export/import
// ---------------------------------------------------------------------------

const DATASET_MAGIC: &[u8; 8] = b"DPGDDS01";

impl Dataset {
    /// Write the dataset in the fixed little-endian binary layout:
    /// magic, u32 n, u32 d, f64 sigma_p, u64 seed, f64*d mu, then per example
    /// u8 label-sign (1 = +1, 0 = -1), u8 slot (0 = first, 1 = second), f64*d xi.
    pub fn export<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        w.write_all(&(self.d() as u32).to_le_bytes())?;
        w.write_all(&self.noise.sigma_p().to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in self.signal.mu() {
            w.write_all(&v.to_le_bytes())?;
        }
        for ex in &self.examples {
            w.write_all(&[match ex.label() {
                Sign::Plus => 1u8,
                Sign::Minus => 0u8,
            }])?;
            w.write_all(&[match ex.signal_slot() {
                Slot::First => 0u8,
                Slot::Second => 1u8,
            }])?;
            for v in ex.xi() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a dataset written by [`Dataset::export`]. Patches are rebuilt
    /// from (label, slot, xi, mu); the Gram matrix is recomputed.
    pub fn import<R: Read>(r: &mut R) -> Result<Dataset> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let n = read_u32(r)? as usize;
        let d = read_u32(r)? as usize;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let sigma_p = read_f64(r)?;
        let seed = read_u64(r)?;
        let mu = read_f64_vec(r, d)?;
        let signal = SignalSpec::new(mu)?;
        let noise = NoiseSpec::new(sigma_p)?;
        let mut examples = Vec::with_capacity(n);
        for _ in 0..n {
            let mut tag = [0u8; 2];
            r.read_exact(&mut tag)?;
            let label = match tag[0] {
                1 => Sign::Plus,
                0 => Sign::Minus,
                v => return Err(Error::Format(format!("bad label byte {v}"))),
            };
            let slot = match tag[1] {
                0 => Slot::First,
                1 => Slot::Second,
                v => return Err(Error::Format(format!("bad slot byte {v}"))),
            };
            let xi = read_f64_vec(r, d)?;
            examples.push(Example::compose(label, slot, xi, &signal)?);
        }
        Dataset::from_parts(examples, signal, noise, seed)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    let mut b = [0u8; 8];
    for v in &mut out {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig2() -> SignalSpec {
        SignalSpec::new(vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_zero_signal_and_bad_sigma() {
        assert!(matches!(SignalSpec::new(vec![0.0, 0.0]), Err(Error::InvalidSignal(_))));
        assert!(matches!(SignalSpec::new(vec![f64::NAN, 1.0]), Err(Error::InvalidSignal(_))));
        assert!(matches!(NoiseSpec::new(0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(NoiseSpec::new(f64::INFINITY), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn projection_removes_mu_component_exactly() {
        // mu = (1,0), g = (3,4) -> xi = (0,4).
        let signal = sig2();
        let g = vec![3.0, 4.0];
        let coef = dot(&g, signal.mu()) / signal.norm_sq();
        let xi: Vec<f64> = g.iter().zip(signal.mu()).map(|(gi, mi)| gi - coef * mi).collect();
        assert_eq!(xi, vec![0.0, 4.0]);
    }

    #[test]
    fn sampled_noise_is_orthogonal_to_mu() {
        let signal = SignalSpec::new(vec![0.3, -1.2, 0.7, 2.0, -0.5]).unwrap();
        let noise = NoiseSpec::new(0.7).unwrap();
        for idx in 0..50 {
            let mut rng = stream(11, Purpose::DatasetExample, idx);
            let xi = sample_noise(&signal, &noise, &mut rng);
            let tol = 1e-10 * signal.norm() * norm_sq(&xi).sqrt();
            assert!(dot(&xi, signal.mu()).abs() <= tol.max(1e-300));
        }
    }

    #[test]
    fn noise_norm_mean_matches_chi_square() {
        // d = 2000, sigma_p = 0.5, 1e4 draws: mean |xi|^2 within 1% of
        // sigma_p^2 (d-1) = 499.75 (chi-square with d-1 degrees of freedom).
        let d = 2000;
        let signal = SignalSpec::uniform_direction(d, 1.0).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let draws = 10_000;
        let total: f64 = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(99, Purpose::DatasetExample, i as u64);
                norm_sq(&sample_noise(&signal, &noise, &mut rng))
            })
            .sum();
        let mean = total / draws as f64;
        let expect = 0.25 * (d as f64 - 1.0);
        assert!(
            (mean - expect).abs() / expect < 0.01,
            "mean {mean} vs expected {expect}"
        );
    }

    #[test]
    fn empirical_covariance_matches_projected_gaussian() {
        // 1e5 draws at d = 8: entrywise within 5 standard errors of
        // sigma_p^2 (I - mu mu^T / |mu|^2).
        let d = 8;
        let signal = SignalSpec::new(vec![1.0, -0.5, 0.25, 2.0, 0.0, 1.5, -1.0, 0.75]).unwrap();
        let sigma_p = 0.9;
        let noise = NoiseSpec::new(sigma_p).unwrap();
        let draws = 100_000usize;
        let mut cov = vec![0.0; d * d];
        for idx in 0..draws {
            let mut rng = stream(5, Purpose::DatasetExample, idx as u64);
            let xi = sample_noise(&signal, &noise, &mut rng);
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += xi[a] * xi[b];
                }
            }
        }
        for v in &mut cov {
            *v /= draws as f64;
        }
        let s2 = sigma_p * sigma_p;
        for a in 0..d {
            for b in 0..d {
                let theory = s2
                    * (if a == b { 1.0 } else { 0.0 }
                        - signal.mu()[a] * signal.mu()[b] / signal.norm_sq());
                let var_aa = s2 * (1.0 - signal.mu()[a] * signal.mu()[a] / signal.norm_sq());
                let var_bb = s2 * (1.0 - signal.mu()[b] * signal.mu()[b] / signal.norm_sq());
                // Var(xi_a xi_b) = S_aa S_bb + S_ab^2 for a Gaussian.
                let se = ((var_aa * var_bb + theory * theory) / draws as f64).sqrt();
                assert!(
                    (cov[a * d + b] - theory).abs() <= 5.0 * se,
                    "cov[{a}][{b}] = {} vs {theory} (se {se})",
                    cov[a * d + b]
                );
            }
        }
    }

    #[test]
    fn dataset_is_deterministic_in_seed() {
        let signal = SignalSpec::uniform_direction(16, 1.0).unwrap();
        let noise = NoiseSpec::new(0.3).unwrap();
        let a = Dataset::sample(20, &signal, &noise, 77).unwrap();
        let b = Dataset::sample(20, &signal, &noise, 77).unwrap();
        for (ea, eb) in a.examples().iter().zip(b.examples()) {
            assert_eq!(ea.label(), eb.label());
            assert_eq!(ea.signal_slot(), eb.signal_slot());
            assert_eq!(ea.xi(), eb.xi());
            assert_eq!(ea.patch_a(), eb.patch_a());
            assert_eq!(ea.patch_b(), eb.patch_b());
        }
    }

    #[test]
    fn every_example_has_exact_signal_patch() {
        let signal = SignalSpec::new(vec![0.5, -0.25]).unwrap();
        let noise = NoiseSpec::new(1.0).unwrap();
        let ds = Dataset::sample(4, &signal, &noise, 7).unwrap();
        for ex in ds.examples() {
            let expect: Vec<f64> = signal.mu().iter().map(|v| ex.label().signum() * v).collect();
            let (sig_patch, noise_patch) = match ex.signal_slot() {
                Slot::First => (ex.patch_a(), ex.patch_b()),
                Slot::Second => (ex.patch_b(), ex.patch_a()),
            };
            assert_eq!(sig_patch, expect.as_slice());
            assert_eq!(noise_patch, ex.xi());
        }
    }

    #[test]
    fn class_counts_are_balanced_at_n_1000() {
        let signal = SignalSpec::uniform_direction(8, 1.0).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let ds = Dataset::sample(1000, &signal, &noise, 3).unwrap();
        let plus = ds.examples().iter().filter(|e| e.label() == Sign::Plus).count();
        let minus = ds.n() - plus;
        for count in [plus, minus] {
            assert!(count >= 250 && count <= 750, "class count {count} outside [n/4, 3n/4]");
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let signal = sig2();
        let noise = NoiseSpec::new(1.0).unwrap();
        assert!(matches!(Dataset::sample(0, &signal, &noise, 1), Err(Error::EmptyDataset)));
    }

    #[test]
    fn gram_is_symmetric_with_norm_diagonal() {
        let signal = SignalSpec::uniform_direction(32, 2.0).unwrap();
        let noise = NoiseSpec::new(0.4).unwrap();
        let ds = Dataset::sample(10, &signal, &noise, 13).unwrap();
        let g = ds.gram().unwrap();
        let n = ds.n();
        for i in 0..n {
            assert_eq!(g[i * n + i], norm_sq(ds.example(i).xi()));
            for j in 0..n {
                assert_eq!(g[i * n + j], g[j * n + i]);
            }
        }
    }

    #[test]
    fn snr_formula() {
        let noise_half = NoiseSpec::new(0.5).unwrap();
        let noise_tenth = NoiseSpec::new(0.1).unwrap();
        let signal = SignalSpec::uniform_direction(2000, 1.0).unwrap();
        assert!((snr(&signal, &noise_half) - 0.0447214).abs() < 1e-6);
        assert!((snr(&signal, &noise_tenth) - 0.2236068).abs() < 1e-6);
        // |mu| = sigma_p sqrt(d) -> SNR = 1.
        let signal_eq = SignalSpec::uniform_direction(64, 0.5 * 8.0).unwrap();
        let noise_eq = NoiseSpec::new(0.5).unwrap();
        assert!((snr(&signal_eq, &noise_eq) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn export_import_round_trip() {
        let signal = SignalSpec::uniform_direction(6, 1.5).unwrap();
        let noise = NoiseSpec::new(0.8).unwrap();
        let ds = Dataset::sample(5, &signal, &noise, 21).unwrap();
        let mut buf = Vec::new();
        ds.export(&mut buf).unwrap();
        let back = Dataset::import(&mut buf.as_slice()).unwrap();
        assert_eq!(back.n(), ds.n());
        assert_eq!(back.d(), ds.d());
        assert_eq!(back.seed(), ds.seed());
        assert_eq!(back.signal().mu(), ds.signal().mu());
        for (a, b) in ds.examples().iter().zip(back.examples()) {
            assert_eq!(a.label(), b.label());
            assert_eq!(a.signal_slot(), b.signal_slot());
            assert_eq!(a.xi(), b.xi());
            assert_eq!(a.patch_a(), b.patch_a());
        }
        assert_eq!(back.gram().unwrap(), ds.gram().unwrap());
    }

    #[test]
    fn import_rejects_bad_magic() {
        let buf = b"NOTMAGIC".to_vec();
        assert!(matches!(Dataset::import(&mut buf.as_slice()), Err(Error::Format(_))));
    }
}
