//! Model types and probability primitives of the hierarchical Dirichlet
//! process hidden language model: weak-limit HDP transition matrices for
//! words and letters, a letter-string word inventory, Gaussian emissions
//! under a normal-inverse-Wishart prior and shifted-Poisson letter durations
//! under a Gamma prior.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::dsae::MatrixDoc;
use crate::error::{Error, Result};
use crate::math::{is_spd, sample_dirichlet, symmetrize};

/// Gamma prior (shape/rate) over a letter's Poisson duration rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        GammaPrior {
            shape: 200.0,
            rate: 10.0,
        }
    }
}

impl GammaPrior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Normal-inverse-Wishart prior with isotropic scale matrix `sigma0sq * I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwPrior {
    pub mu0: Vec<f64>,
    pub sigma0sq: f64,
    pub kappa0: f64,
    pub nu0: f64,
}

impl NiwPrior {
    /// `mu0 = 0, sigma0sq = 1, kappa0 = 0.01, nu0 = dim + 5`.
    pub fn for_dim(dim: usize) -> Self {
        NiwPrior {
            mu0: vec![0.0; dim],
            sigma0sq: 1.0,
            kappa0: 0.01,
            nu0: dim as f64 + 5.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn params(&self) -> NiwParams {
        let d = self.dim();
        NiwParams {
            mu: DVector::from_column_slice(&self.mu0),
            kappa: self.kappa0,
            nu: self.nu0,
            psi: DMatrix::identity(d, d) * self.sigma0sq,
        }
    }

    pub fn posterior(&self, stats: &NiwStats) -> NiwParams {
        let prior = self.params();
        if stats.n == 0 {
            return prior;
        }
        let n = stats.n as f64;
        let mean = &stats.sum / n;
        let scatter = &stats.sum_sq - &mean * mean.transpose() * n;
        let kappa = prior.kappa + n;
        let nu = prior.nu + n;
        let mu = (&prior.mu * prior.kappa + &mean * n) / kappa;
        let diff = &mean - &prior.mu;
        let mut psi = prior.psi + scatter + &diff * diff.transpose() * (prior.kappa * n / kappa);
        symmetrize(&mut psi);
        NiwParams { mu, kappa, nu, psi }
    }
}

/// Sufficient statistics of a set of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwStats {
    pub n: usize,
    pub sum: DVector<f64>,
    pub sum_sq: DMatrix<f64>,
}

impl NiwStats {
    pub fn new(dim: usize) -> Self {
        NiwStats {
            n: 0,
            sum: DVector::zeros(dim),
            sum_sq: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_rows(frames: &DMatrix<f64>) -> Self {
        let mut s = Self::new(frames.ncols());
        for r in 0..frames.nrows() {
            s.push(&frames.row(r).transpose());
        }
        s
    }

    pub fn push(&mut self, y: &DVector<f64>) {
        self.n += 1;
        self.sum += y;
        self.sum_sq.ger(1.0, y, y, 1.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiwParams {
    pub mu: DVector<f64>,
    pub kappa: f64,
    pub nu: f64,
    pub psi: DMatrix<f64>,
}

impl NiwParams {
    /// `Sigma ~ IW(psi, nu)` via the Bartlett decomposition of its inverse,
    /// then `mu ~ N(mu, Sigma / kappa)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Gaussian> {
        let d = self.mu.len();
        let psi_inv = self
            .psi
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular NIW scale matrix".into()))?;
        let l = Cholesky::new(sym(psi_inv))
            .ok_or_else(|| Error::Numerical("NIW scale matrix not SPD".into()))?
            .l();
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(self.nu - i as f64)
                .map_err(|e| Error::Numerical(format!("chi-squared: {e}")))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let la = &l * a;
        let precision = &la * la.transpose();
        let cov = sym(precision
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Wishart draw".into()))?);
        let scaled = Cholesky::new(&cov / self.kappa)
            .ok_or_else(|| Error::Numerical("sampled covariance not SPD".into()))?
            .l();
        let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = &self.mu + scaled * eps;
        Gaussian::new(mean, cov)
    }
}

fn sym(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::Dimension {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        if !is_spd(&cov) {
            return Err(Error::Numerical("covariance is not symmetric positive-definite".into()));
        }
        let chol_l = Cholesky::new(cov.clone()).expect("checked SPD").l();
        let log_det: f64 = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (mean.len() as f64 * (2.0 * PI).ln() + log_det);
        Ok(Gaussian {
            mean,
            cov,
            chol_l,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density at `y`.
    pub fn log_pdf(&self, y: &[f64]) -> f64 {
        let diff = DVector::from_fn(self.dim(), |i, _| y[i] - self.mean[i]);
        let mut solved = diff;
        self.chol_l.solve_lower_triangular_mut(&mut solved);
        self.log_norm - 0.5 * solved.norm_squared()
    }
}

/// Gaussian emission log density; errors when the covariance is not SPD.
pub fn gaussian_loglik(mean: &DVector<f64>, cov: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    if y.len() != mean.len() {
        return Err(Error::Dimension {
            expected: mean.len(),
            got: y.len(),
        });
    }
    Ok(Gaussian::new(mean.clone(), cov.clone())?.log_pdf(y))
}

/// Log pmf of a duration `d >= 1` where `d - 1 ~ Poisson(omega)`.
pub fn poisson_logpmf(omega: f64, d: usize) -> Result<f64> {
    if d < 1 {
        return Err(Error::invalid("duration must be at least 1"));
    }
    let k = (d - 1) as f64;
    Ok(k * omega.ln() - omega - ln_gamma(k + 1.0))
}

/// Log pmf over `1..=max_dur` with the tail mass beyond `max_dur` folded
/// into the last bucket. Index 0 holds `-inf`.
pub fn truncated_duration_table(omega: f64, max_dur: usize) -> Vec<f64> {
    let mut table = vec![f64::NEG_INFINITY; max_dur + 1];
    for (d, slot) in table.iter_mut().enumerate().take(max_dur).skip(1) {
        *slot = poisson_logpmf(omega, d).expect("d >= 1");
    }
    if max_dur >= 1 {
        // P(d >= max_dur) = P(X >= max_dur - 1) = regularized lower gamma
        let tail = if max_dur == 1 {
            1.0
        } else {
            gamma_lr((max_dur - 1) as f64, omega)
        };
        table[max_dur] = tail.ln();
    }
    table
}

/// Poisson rate of a word's total duration beyond its letter count.
pub fn word_duration_rate(word: &[usize], omega: &[f64]) -> f64 {
    word.iter().map(|&l| omega[l]).sum()
}

/// Log pmf of a word's total duration under the untruncated shifted model:
/// `d - L ~ Poisson(sum of letter rates)`.
pub fn word_duration_logpmf(word: &[usize], omega: &[f64], d: usize) -> f64 {
    if d < word.len() || word.is_empty() {
        return f64::NEG_INFINITY;
    }
    let rate = word_duration_rate(word, omega);
    let k = (d - word.len()) as f64;
    k * rate.ln() - rate - ln_gamma(k + 1.0)
}

/// Draws `(mean, covariance)` from the NIW posterior given `N x D` frames.
pub fn sample_niw_posterior<R: Rng + ?Sized>(
    prior: &NiwPrior,
    frames: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Gaussian> {
    if frames.nrows() > 0 && frames.ncols() != prior.dim() {
        return Err(Error::Dimension {
            expected: prior.dim(),
            got: frames.ncols(),
        });
    }
    let stats = if frames.nrows() == 0 {
        NiwStats::new(prior.dim())
    } else {
        NiwStats::from_rows(frames)
    };
    prior.posterior(&stats).sample(rng)
}

/// Shape and rate of the Gamma posterior given letter durations `>= 1`.
pub fn gamma_posterior(prior: &GammaPrior, durations: &[usize]) -> GammaPrior {
    let excess: usize = durations.iter().map(|d| d.saturating_sub(1)).sum();
    GammaPrior {
        shape: prior.shape + excess as f64,
        rate: prior.rate + durations.len() as f64,
    }
}

pub fn sample_gamma_posterior<R: Rng + ?Sized>(
    prior: &GammaPrior,
    durations: &[usize],
    rng: &mut R,
) -> f64 {
    let post = gamma_posterior(prior, durations);
    Gamma::new(post.shape, 1.0 / post.rate)
        .expect("positive gamma parameters")
        .sample(rng)
        .max(f64::MIN_POSITIVE)
}

/// Rows drawn as `Dirichlet(alpha * beta + counts[i])`.
pub fn sample_hdp_rows<R: Rng + ?Sized>(
    beta: &[f64],
    alpha: f64,
    counts: &[Vec<usize>],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let params: Vec<f64> = beta
                .iter()
                .zip(row)
                .map(|(&b, &c)| alpha * b + c as f64)
                .collect();
            sample_dirichlet(&params, rng)
        })
        .collect()
}

/// Weak-limit global weights: table counts are drawn from the Chinese
/// restaurant process given the transition counts and the current `beta`,
/// then `beta ~ Dirichlet(gamma / N + column table counts)`.
pub fn sample_global_weights<R: Rng + ?Sized>(
    gamma: f64,
    alpha: f64,
    beta: &[f64],
    counts: &[Vec<usize>],
    rng: &mut R,
) -> Vec<f64> {
    let n = beta.len();
    let mut tables = vec![0usize; n];
    for row in counts {
        for (k, &c) in row.iter().enumerate() {
            let weight = alpha * beta[k];
            for i in 0..c {
                if rng.random::<f64>() < weight / (weight + i as f64) {
                    tables[k] += 1;
                }
            }
        }
    }
    let params: Vec<f64> = tables.iter().map(|&m| gamma / n as f64 + m as f64).collect();
    sample_dirichlet(&params, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdpHlmHyper {
    pub gamma_lm: f64,
    pub alpha_lm: f64,
    pub gamma_wm: f64,
    pub alpha_wm: f64,
    /// Weak-limit number of words.
    pub n_words: usize,
    /// Weak-limit number of letters.
    pub n_letters: usize,
    /// Longest word string considered by the inventory sampler.
    pub max_word_len: usize,
    /// Longest letter duration represented in message passing.
    pub max_dur: usize,
    pub dur_prior: GammaPrior,
    /// `None` means the default prior for the data dimension.
    pub emis_prior: Option<NiwPrior>,
}

impl Default for HdpHlmHyper {
    fn default() -> Self {
        let dur_prior = GammaPrior::default();
        HdpHlmHyper {
            gamma_lm: 10.0,
            alpha_lm: 10.0,
            gamma_wm: 10.0,
            alpha_wm: 10.0,
            n_words: 7,
            n_letters: 10,
            max_word_len: 8,
            max_dur: (4.0 * dur_prior.mean()).round() as usize,
            dur_prior,
            emis_prior: None,
        }
    }
}

impl HdpHlmHyper {
    pub fn emission_prior(&self, dim: usize) -> Result<NiwPrior> {
        let prior = self.emis_prior.clone().unwrap_or_else(|| NiwPrior::for_dim(dim));
        if prior.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: prior.dim(),
            });
        }
        Ok(prior)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let positive = [
            self.gamma_lm,
            self.alpha_lm,
            self.gamma_wm,
            self.alpha_wm,
            self.dur_prior.shape,
            self.dur_prior.rate,
        ];
        if positive.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("HDP-HLM concentrations and duration prior must be positive".into()));
        }
        if self.n_words == 0 || self.n_letters == 0 || self.max_word_len == 0 || self.max_dur == 0 {
            return Err(Error::Config("truncation levels must be positive".into()));
        }
        let p = self.emission_prior(dim)?;
        if !(p.kappa0 > 0.0 && p.sigma0sq > 0.0 && p.nu0 > dim as f64 - 1.0) {
            return Err(Error::Config("NIW prior needs kappa0 > 0, sigma0sq > 0, nu0 > dim - 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdpHlmModel {
    pub beta_lm: Vec<f64>,
    pub pi_lm: Vec<Vec<f64>>,
    /// Word inventory; each word is a non-empty string of letter ids.
    pub words: Vec<Vec<usize>>,
    pub beta_wm: Vec<f64>,
    pub pi_wm: Vec<Vec<f64>>,
    pub emissions: Vec<Gaussian>,
    /// Poisson rate of each letter's duration excess.
    pub omega: Vec<f64>,
}

impl HdpHlmModel {
    /// Everything drawn from the prior.
    pub fn from_prior<R: Rng + ?Sized>(hyper: &HdpHlmHyper, dim: usize, rng: &mut R) -> Result<Self> {
        hyper.validate(dim)?;
        let nw = hyper.n_words;
        let nl = hyper.n_letters;
        let beta_lm = sample_dirichlet(&vec![hyper.gamma_lm / nw as f64; nw], rng);
        let pi_lm = sample_hdp_rows(&beta_lm, hyper.alpha_lm, &vec![vec![0; nw]; nw], rng);
        let beta_wm = sample_dirichlet(&vec![hyper.gamma_wm / nl as f64; nl], rng);
        let pi_wm = sample_hdp_rows(&beta_wm, hyper.alpha_wm, &vec![vec![0; nl]; nl], rng);
        let prior = hyper.emission_prior(dim)?.params();
        let emissions = (0..nl).map(|_| prior.sample(rng)).collect::<Result<Vec<_>>>()?;
        let omega = (0..nl)
            .map(|_| sample_gamma_posterior(&hyper.dur_prior, &[], rng))
            .collect();
        let mut model = HdpHlmModel {
            beta_lm,
            pi_lm,
            words: Vec::new(),
            beta_wm,
            pi_wm,
            emissions,
            omega,
        };
        model.words = (0..nw)
            .map(|_| model.sample_word_from_prior(hyper.max_word_len, rng))
            .collect();
        Ok(model)
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_letters(&self) -> usize {
        self.emissions.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions.first().map_or(0, Gaussian::dim)
    }

    /// Letter-chain log probability of a string under the word model.
    pub fn word_log_prior(&self, word: &[usize]) -> f64 {
        let Some((&first, rest)) = word.split_first() else {
            return f64::NEG_INFINITY;
        };
        let mut lp = self.beta_wm[first].ln();
        let mut prev = first;
        for &l in rest {
            lp += self.pi_wm[prev][l].ln();
            prev = l;
        }
        lp
    }

    /// Length uniform on `1..=max_len`, letters from the word-model chain.
    pub fn sample_word_from_prior<R: Rng + ?Sized>(&self, max_len: usize, rng: &mut R) -> Vec<usize> {
        let len = rng.random_range(1..=max_len.max(1));
        let mut word = Vec::with_capacity(len);
        let mut probs = &self.beta_wm;
        for _ in 0..len {
            let l = sample_categorical(probs, rng);
            word.push(l);
            probs = &self.pi_wm[l];
        }
        word
    }

    pub fn duration_tables(&self, max_dur: usize) -> Vec<Vec<f64>> {
        self.omega
            .iter()
            .map(|&w| truncated_duration_table(w, max_dur))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let rows_ok = |rows: &[Vec<f64>], n: usize| {
            rows.len() == n
                && rows
                    .iter()
                    .all(|r| r.len() == n && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9)
        };
        let simplex_ok = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !simplex_ok(&self.beta_lm) || !rows_ok(&self.pi_lm, self.n_words()) {
            return Err(Error::Numerical("language model rows are not stochastic".into()));
        }
        if !simplex_ok(&self.beta_wm) || !rows_ok(&self.pi_wm, self.n_letters()) {
            return Err(Error::Numerical("word model rows are not stochastic".into()));
        }
        if self.omega.iter().any(|&w| !(w > 0.0)) || self.omega.len() != self.n_letters() {
            return Err(Error::Numerical("duration rates must be positive".into()));
        }
        for w in &self.words {
            if w.is_empty() || w.iter().any(|&l| l >= self.n_letters()) {
                return Err(Error::Numerical(format!("invalid word string {w:?}")));
            }
        }
        Ok(())
    }

    pub(crate) fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            format: HLM_FORMAT.into(),
            version: HLM_VERSION,
            beta_lm: self.beta_lm.clone(),
            pi_lm: self.pi_lm.clone(),
            words: self.words.clone(),
            beta_wm: self.beta_wm.clone(),
            pi_wm: self.pi_wm.clone(),
            means: self.emissions.iter().map(|g| g.mean.as_slice().to_vec()).collect(),
            covariances: self
                .emissions
                .iter()
                .map(|g| MatrixDoc::from_matrix(&g.cov))
                .collect(),
            omega: self.omega.clone(),
        }
    }

    pub(crate) fn from_doc(doc: &ModelDoc) -> Result<Self> {
        if doc.format != HLM_FORMAT || doc.version != HLM_VERSION {
            return Err(Error::Format(format!(
                "unsupported language-model document {} v{}",
                doc.format, doc.version
            )));
        }
        let emissions = doc
            .means
            .iter()
            .zip(&doc.covariances)
            .map(|(m, c)| Gaussian::new(DVector::from_column_slice(m), c.to_matrix()?))
            .collect::<Result<Vec<_>>>()?;
        let model = HdpHlmModel {
            beta_lm: doc.beta_lm.clone(),
            pi_lm: doc.pi_lm.clone(),
            words: doc.words.clone(),
            beta_wm: doc.beta_wm.clone(),
            pi_wm: doc.pi_wm.clone(),
            emissions,
            omega: doc.omega.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model: {e}")))?;
        Self::from_doc(&doc)
    }
}

pub const HLM_FORMAT: &str = "npbdaa-hdphlm";
pub const HLM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ModelDoc {
    format: String,
    version: u32,
    beta_lm: Vec<f64>,
    pi_lm: Vec<Vec<f64>>,
    words: Vec<Vec<usize>>,
    beta_wm: Vec<f64>,
    pi_wm: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    covariances: Vec<MatrixDoc>,
    omega: Vec<f64>,
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// One letter occupying `duration` consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterSpan {
    pub letter: usize,
    pub duration: usize,
}

/// One word (superstate) occurrence within an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSegment {
    pub word: usize,
    /// First frame (0-based).
    pub start: usize,
    pub duration: usize,
    /// Alignment of the word's own letter string.
    pub letters: Vec<LetterSpan>,
    /// Free letter sequence sampled for this segment under the word model.
    pub tentative: Vec<LetterSpan>,
}

impl WordSegment {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceState {
    pub len: usize,
    pub segments: Vec<WordSegment>,
}

impl UtteranceState {
    /// Checks that segments tile `0..len` and letters tile each segment.
    pub fn check(&self) -> Result<()> {
        let mut t = 0;
        for seg in &self.segments {
            let tiles = |spans: &[LetterSpan]| {
                spans.iter().all(|s| s.duration >= 1)
                    && spans.iter().map(|s| s.duration).sum::<usize>() == seg.duration
            };
            if seg.start != t || seg.duration == 0 || !tiles(&seg.letters) {
                return Err(Error::Numerical(format!("segment bookkeeping broken at frame {t}")));
            }
            if !seg.tentative.is_empty() && !tiles(&seg.tentative) {
                return Err(Error::Numerical(format!("tentative letters do not tile segment at {t}")));
            }
            t = seg.end();
        }
        if t != self.len {
            return Err(Error::Numerical(format!("segments cover {t} of {} frames", self.len)));
        }
        Ok(())
    }

    /// Frame-level word (superstate) ids.
    pub fn frame_words(&self) -> Vec<usize> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.word, s.duration))
            .collect()
    }

    /// Frame-level letter ids of the word alignments.
    pub fn frame_letters(&self) -> Vec<usize> {
        self.segments
            .iter()
            .flat_map(|s| s.letters.iter())
            .flat_map(|l| std::iter::repeat_n(l.letter, l.duration))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsState {
    pub utterances: Vec<UtteranceState>,
}

impl GibbsState {
    pub fn check(&self) -> Result<()> {
        self.utterances.iter().try_for_each(UtteranceState::check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_at_zero() {
        let ll = gaussian_loglik(&DVector::zeros(1), &DMatrix::identity(1, 1), &[0.0]).unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_sum_of_univariates() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 3.0]));
        let y = [0.2, 1.0];
        let uni = |m: f64, v: f64, x: f64| -0.5 * (2.0 * PI * v).ln() - (x - m).powi(2) / (2.0 * v);
        let expected = uni(1.0, 0.5, 0.2) + uni(-2.0, 3.0, 1.0);
        assert!((gaussian_loglik(&mean, &cov, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn non_spd_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(gaussian_loglik(&DVector::zeros(2), &cov, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn poisson_direct() {
        assert!((poisson_logpmf(1.0, 1).unwrap() - (-1.0)).abs() < 1e-15);
        // d = 4 -> k = 3: 2^3 e^-2 / 6
        let direct = (8.0 * (-2.0f64).exp() / 6.0).ln();
        assert!((poisson_logpmf(2.0, 4).unwrap() - direct).abs() < 1e-13);
        assert!(poisson_logpmf(1.0, 0).is_err());
    }

    #[test]
    fn truncated_table_normalizes() {
        for &(omega, dmax) in &[(0.5, 1usize), (3.0, 4), (20.0, 80), (20.0, 10)] {
            let t = truncated_duration_table(omega, dmax);
            let total: f64 = t[1..].iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-10, "omega {omega} dmax {dmax}: {total}");
        }
    }

    #[test]
    fn word_rates() {
        let omega = [3.0, 4.0, 5.0];
        assert_eq!(word_duration_rate(&[0, 1, 2], &omega), 12.0);
        assert_eq!(word_duration_rate(&[1], &omega), 4.0);
    }

    #[test]
    fn niw_posterior_mean_parameter() {
        let prior = NiwPrior {
            mu0: vec![1.0, 0.0],
            sigma0sq: 1.0,
            kappa0: 2.0,
            nu0: 5.0,
        };
        let frames = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 3.0, 2.0, 3.0, 0.0]);
        let post = prior.posterior(&NiwStats::from_rows(&frames));
        // (2 * [1, 0] + 3 * [2, 1]) / 5 = [1.6, 0.6]
        assert!((post.mu[0] - 1.6).abs() < 1e-14);
        assert!((post.mu[1] - 0.6).abs() < 1e-14);
        assert_eq!(post.kappa, 5.0);
        assert_eq!(post.nu, 8.0);
        // psi = I + scatter + (2*3/5) (ybar - mu0)(ybar - mu0)^T
        // scatter around [2, 1]: [[6, 0], [0, 2]]; diff = [1, 1]
        let expected = DMatrix::from_row_slice(2, 2, &[8.2, 1.2, 1.2, 4.2]);
        assert!((post.psi - expected).amax() < 1e-12);
    }

    #[test]
    fn gamma_posterior_closed_form() {
        let p = gamma_posterior(&GammaPrior::default(), &[1, 5, 10]);
        assert_eq!(p.shape, 200.0 + 0.0 + 4.0 + 9.0);
        assert_eq!(p.rate, 13.0);
        assert_eq!(GammaPrior::default().mean(), 20.0);
    }

    #[test]
    fn hdp_rows_sum_to_one_and_reproduce() {
        let beta = vec![0.25; 4];
        let counts = vec![vec![0; 4]; 4];
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let ra = sample_hdp_rows(&beta, 1.0, &counts, &mut a);
        let rb = sample_hdp_rows(&beta, 1.0, &counts, &mut b);
        assert_eq!(ra, rb);
        for r in ra {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_count_dominates_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = sample_hdp_rows(&[0.5, 0.5], 10.0, &[vec![100_000, 0]], &mut rng);
        assert!(rows[0][0] > 0.99);
    }

    #[test]
    fn prior_model_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hyper = HdpHlmHyper::default();
        let m = HdpHlmModel::from_prior(&hyper, 3, &mut rng).unwrap();
        m.validate().unwrap();
        assert_eq!(m.n_words(), 7);
        assert_eq!(m.n_letters(), 10);
        assert!(m.words.iter().all(|w| (1..=8).contains(&w.len())));
        assert!(m.emissions.iter().all(|g| is_spd(&g.cov)));
        let back = HdpHlmModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.to_json(), m.to_json());
    }

    #[test]
    fn state_bookkeeping() {
        let seg = |word, start, letters: &[(usize, usize)]| WordSegment {
            word,
            start,
            duration: letters.iter().map(|l| l.1).sum(),
            letters: letters
                .iter()
                .map(|&(letter, duration)| LetterSpan { letter, duration })
                .collect(),
            tentative: Vec::new(),
        };
        let st = UtteranceState {
            len: 5,
            segments: vec![seg(2, 0, &[(1, 2), (0, 1)]), seg(0, 3, &[(4, 2)])],
        };
        st.check().unwrap();
        assert_eq!(st.frame_words(), vec![2, 2, 2, 0, 0]);
        assert_eq!(st.frame_letters(), vec![1, 1, 0, 4, 4]);
        let broken = UtteranceState { len: 6, ..st };
        assert!(broken.check().is_err());
    }
}
