//! Blocked Gibbs sampler for the hierarchical Dirichlet process hidden
//! language model: nested word/letter backward messages, forward sampling of
//! word segmentations, tentative letter strings, and parameter updates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureSequence;
use crate::error::{Error, Result};
use crate::hdphlm::{
    sample_gamma_posterior, sample_global_weights, sample_hdp_rows, GibbsState, HdpHlmHyper,
    HdpHlmModel, LetterSpan, NiwStats, UtteranceState, WordSegment,
};
use crate::math::{log_sum_exp, sample_log_categorical};

/// Per-frame emission log densities of every letter, `T x N_letters`.
#[derive(Debug, Clone)]
pub struct LetterLogliks {
    len: usize,
    n_letters: usize,
    values: Vec<f64>,
}

impl LetterLogliks {
    /// `frames` is `T x D`.
    pub fn new(frames: &DMatrix<f64>, model: &HdpHlmModel) -> Result<Self> {
        if frames.ncols() != model.dim() {
            return Err(Error::Dimension {
                expected: model.dim(),
                got: frames.ncols(),
            });
        }
        let nl = model.n_letters();
        let mut values = Vec::with_capacity(frames.nrows() * nl);
        let mut row = vec![0.0; frames.ncols()];
        for t in 0..frames.nrows() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = frames[(t, j)];
            }
            for g in &model.emissions {
                values.push(g.log_pdf(&row));
            }
        }
        Ok(LetterLogliks {
            len: frames.nrows(),
            n_letters: nl,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, t: usize, letter: usize) -> f64 {
        self.values[t * self.n_letters + letter]
    }
}

/// Log-likelihood of frames `a..b` under a word whose letters are traversed
/// in order, summing over every letter-duration composition.
fn segment_dp(word: &[usize], ll: &LetterLogliks, a: usize, b: usize, dur: &[Vec<f64>]) -> f64 {
    let s = b - a;
    if word.is_empty() || s < word.len() {
        return f64::NEG_INFINITY;
    }
    let max_dur = dur[0].len() - 1;
    let mut f = vec![f64::NEG_INFINITY; s + 1];
    f[0] = 0.0;
    let mut g = vec![f64::NEG_INFINITY; s + 1];
    for (k, &l) in word.iter().enumerate() {
        g.fill(f64::NEG_INFINITY);
        // letters still to come need at least one frame each
        let reserve = word.len() - k - 1;
        for v in 0..s {
            if f[v] == f64::NEG_INFINITY {
                continue;
            }
            let mut e = 0.0;
            for d in 1..=max_dur {
                if v + d > s - reserve {
                    break;
                }
                e += ll.get(a + v + d - 1, l);
                g[v + d] = crate::math::log_add(g[v + d], f[v] + dur[l][d] + e);
            }
        }
        std::mem::swap(&mut f, &mut g);
    }
    f[s]
}

/// Log-likelihood of a `T x D` segment under a word string, with letter
/// durations drawn from the model's truncated duration tables.
pub fn word_segment_loglik(
    word: &[usize],
    frames: &DMatrix<f64>,
    model: &HdpHlmModel,
    max_dur: usize,
) -> Result<f64> {
    if word.iter().any(|&l| l >= model.n_letters()) {
        return Err(Error::invalid("letter id out of range"));
    }
    let ll = LetterLogliks::new(frames, model)?;
    let dur = model.duration_tables(max_dur);
    Ok(segment_dp(word, &ll, 0, ll.len(), &dur))
}

/// Backward messages of one utterance.
///
/// Time indices count consumed frames: `b(t, i)` is the log-likelihood of
/// frames `t..T` given that word `i` ended at `t`, and `bstar(t, i)` the same
/// given that word `i` starts at `t`. `letter(i, k, t)` is the message for
/// letter `k` of word `i` starting at `t`.
#[derive(Debug, Clone)]
pub struct MessageTable {
    len: usize,
    n_words: usize,
    b: Vec<f64>,
    bstar: Vec<f64>,
    letter: Vec<Vec<f64>>,
    word_lens: Vec<usize>,
}

impl MessageTable {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn b(&self, t: usize, i: usize) -> f64 {
        self.b[t * self.n_words + i]
    }

    pub fn bstar(&self, t: usize, i: usize) -> f64 {
        self.bstar[t * self.n_words + i]
    }

    fn letter(&self, i: usize, k: usize, t: usize) -> f64 {
        self.letter[i][t * self.word_lens[i] + k]
    }

    /// Continuation after letter `k` of word `i` ends at `t`.
    fn next(&self, i: usize, k: usize, t: usize) -> f64 {
        if k + 1 < self.word_lens[i] {
            self.letter(i, k + 1, t)
        } else {
            self.b(t, i)
        }
    }

    /// Total log-likelihood of the utterance, with `beta_lm` as the initial
    /// word distribution.
    pub fn total_loglik(&self, model: &HdpHlmModel) -> f64 {
        let terms: Vec<f64> = (0..self.n_words)
            .map(|i| model.beta_lm[i].ln() + self.bstar(0, i))
            .collect();
        log_sum_exp(&terms)
    }
}

pub fn backward_messages(ll: &LetterLogliks, model: &HdpHlmModel, max_dur: usize) -> MessageTable {
    let dur = model.duration_tables(max_dur);
    backward_with(ll, model, &dur)
}

fn backward_with(ll: &LetterLogliks, model: &HdpHlmModel, dur: &[Vec<f64>]) -> MessageTable {
    let t_len = ll.len();
    let nw = model.n_words();
    let max_dur = dur[0].len() - 1;
    let word_lens: Vec<usize> = model.words.iter().map(Vec::len).collect();
    let mut table = MessageTable {
        len: t_len,
        n_words: nw,
        b: vec![f64::NEG_INFINITY; (t_len + 1) * nw],
        bstar: vec![f64::NEG_INFINITY; (t_len + 1) * nw],
        letter: word_lens
            .iter()
            .map(|&l| vec![f64::NEG_INFINITY; (t_len + 1) * l])
            .collect(),
        word_lens,
    };
    for i in 0..nw {
        table.b[t_len * nw + i] = 0.0;
    }
    let log_pi: Vec<Vec<f64>> = model
        .pi_lm
        .iter()
        .map(|row| row.iter().map(|p| p.ln()).collect())
        .collect();
    let mut terms = Vec::with_capacity(max_dur.max(nw));
    for t in (0..t_len).rev() {
        for i in 0..nw {
            let word = &model.words[i];
            for k in (0..word.len()).rev() {
                let l = word[k];
                terms.clear();
                let mut e = 0.0;
                for d in 1..=max_dur.min(t_len - t) {
                    e += ll.get(t + d - 1, l);
                    let next = table.next(i, k, t + d);
                    if next > f64::NEG_INFINITY {
                        terms.push(dur[l][d] + e + next);
                    }
                }
                let wl = table.word_lens[i];
                table.letter[i][t * wl + k] = log_sum_exp(&terms);
            }
            table.bstar[t * nw + i] = table.letter(i, 0, t);
        }
        if t == 0 {
            continue;
        }
        for i in 0..nw {
            terms.clear();
            terms.extend((0..nw).map(|j| log_pi[i][j] + table.bstar[t * nw + j]));
            table.b[t * nw + i] = log_sum_exp(&terms);
        }
    }
    table
}

fn draw<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R, what: &str) -> Result<usize> {
    sample_log_categorical(log_weights, rng)
        .ok_or_else(|| Error::Numerical(format!("no feasible {what}")))
}

/// Samples a word segmentation with letter alignments from the messages.
/// Durations partition `0..T`. Tentative strings are left empty.
pub fn forward_sample<R: Rng + ?Sized>(
    ll: &LetterLogliks,
    table: &MessageTable,
    model: &HdpHlmModel,
    max_dur: usize,
    rng: &mut R,
) -> Result<Vec<WordSegment>> {
    let dur = model.duration_tables(max_dur);
    forward_with(ll, table, model, &dur, rng)
}

fn forward_with<R: Rng + ?Sized>(
    ll: &LetterLogliks,
    table: &MessageTable,
    model: &HdpHlmModel,
    dur: &[Vec<f64>],
    mut rng: &mut R,
) -> Result<Vec<WordSegment>> {
    let t_len = table.len();
    let nw = model.n_words();
    let max_dur = dur[0].len() - 1;
    let init: Vec<f64> = (0..nw)
        .map(|i| model.beta_lm[i].ln() + table.bstar(0, i))
        .collect();
    let mut word = draw(&init, &mut rng, "first word")?;
    let mut t = 0;
    let mut segments = Vec::new();
    let mut weights = Vec::with_capacity(max_dur.max(nw));
    loop {
        let start = t;
        let mut letters = Vec::with_capacity(model.words[word].len());
        for (k, &l) in model.words[word].iter().enumerate() {
            weights.clear();
            let mut e = 0.0;
            for d in 1..=max_dur.min(t_len - t) {
                e += ll.get(t + d - 1, l);
                weights.push(dur[l][d] + e + table.next(word, k, t + d));
            }
            let d = 1 + draw(&weights, &mut rng, "letter duration")?;
            letters.push(LetterSpan { letter: l, duration: d });
            t += d;
        }
        segments.push(WordSegment {
            word,
            start,
            duration: t - start,
            letters,
            tentative: Vec::new(),
        });
        if t == t_len {
            break;
        }
        weights.clear();
        weights.extend((0..nw).map(|j| model.pi_lm[word][j].ln() + table.bstar(t, j)));
        word = draw(&weights, &mut rng, "next word")?;
    }
    Ok(segments)
}

/// Samples a free letter string with durations for frames `a..b` from the
/// letter-level semi-Markov model (`beta_wm` initial, `pi_wm` transitions).
fn tentative_letters<R: Rng + ?Sized>(
    ll: &LetterLogliks,
    a: usize,
    b: usize,
    model: &HdpHlmModel,
    dur: &[Vec<f64>],
    mut rng: &mut R,
) -> Result<Vec<LetterSpan>> {
    let s = b - a;
    let nl = model.n_letters();
    let max_dur = dur[0].len() - 1;
    // lambda[u][l]: letter l starts at a+u; nu[u][l]: letter l ended at a+u
    let mut lambda = vec![f64::NEG_INFINITY; (s + 1) * nl];
    let mut nu = vec![f64::NEG_INFINITY; (s + 1) * nl];
    nu[s * nl..].fill(0.0);
    let log_pi: Vec<Vec<f64>> = model
        .pi_wm
        .iter()
        .map(|row| row.iter().map(|p| p.ln()).collect())
        .collect();
    let mut terms = Vec::with_capacity(max_dur.max(nl));
    for u in (0..s).rev() {
        for l in 0..nl {
            terms.clear();
            let mut e = 0.0;
            for d in 1..=max_dur.min(s - u) {
                e += ll.get(a + u + d - 1, l);
                terms.push(dur[l][d] + e + nu[(u + d) * nl + l]);
            }
            lambda[u * nl + l] = log_sum_exp(&terms);
        }
        if u > 0 {
            for l in 0..nl {
                terms.clear();
                terms.extend((0..nl).map(|m| log_pi[l][m] + lambda[u * nl + m]));
                nu[u * nl + l] = log_sum_exp(&terms);
            }
        }
    }
    let init: Vec<f64> = (0..nl).map(|l| model.beta_wm[l].ln() + lambda[l]).collect();
    let mut letter = draw(&init, &mut rng, "first letter")?;
    let mut u = 0;
    let mut spans = Vec::new();
    loop {
        terms.clear();
        let mut e = 0.0;
        for d in 1..=max_dur.min(s - u) {
            e += ll.get(a + u + d - 1, letter);
            terms.push(dur[letter][d] + e + nu[(u + d) * nl + letter]);
        }
        let d = 1 + draw(&terms, &mut rng, "letter duration")?;
        spans.push(LetterSpan { letter, duration: d });
        u += d;
        if u == s {
            break;
        }
        terms.clear();
        terms.extend((0..nl).map(|m| log_pi[letter][m] + lambda[u * nl + m]));
        letter = draw(&terms, &mut rng, "next letter")?;
    }
    Ok(spans)
}

/// Draws a letter string with durations for a `T x D` segment under the
/// word model. Durations sum to the segment length.
pub fn sample_segment_letters<R: Rng + ?Sized>(
    frames: &DMatrix<f64>,
    model: &HdpHlmModel,
    max_dur: usize,
    rng: &mut R,
) -> Result<Vec<LetterSpan>> {
    if frames.nrows() == 0 {
        return Err(Error::invalid("empty segment"));
    }
    let ll = LetterLogliks::new(frames, model)?;
    let dur = model.duration_tables(max_dur);
    tentative_letters(&ll, 0, ll.len(), model, &dur, rng)
}

/// Log p(frames, segmentation) of one utterance state under `model`.
fn state_loglik(ll: &LetterLogliks, state: &UtteranceState, model: &HdpHlmModel, dur: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<usize> = None;
    for seg in &state.segments {
        total += match prev {
            None => model.beta_lm[seg.word].ln(),
            Some(p) => model.pi_lm[p][seg.word].ln(),
        };
        prev = Some(seg.word);
        let mut t = seg.start;
        for span in &seg.letters {
            total += dur[span.letter][span.duration];
            for u in t..t + span.duration {
                total += ll.get(u, span.letter);
            }
            t += span.duration;
        }
    }
    total
}

/// One SIR candidate for a word string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirCandidate {
    /// Summed segment log-likelihood plus word-model log prior.
    pub score: f64,
    /// Log proposal probability of the string.
    pub proposal: f64,
    /// Number of tentative draws that produced the string.
    pub count: usize,
}

impl SirCandidate {
    pub fn log_weight(&self) -> f64 {
        if self.count == 0 {
            return f64::NEG_INFINITY;
        }
        (self.count as f64).ln() + self.score - self.proposal
    }
}

/// Resamples one candidate proportionally to its importance weight.
pub fn sir_select<R: Rng + ?Sized>(candidates: &[SirCandidate], rng: &mut R) -> Option<usize> {
    let w: Vec<f64> = candidates.iter().map(SirCandidate::log_weight).collect();
    sample_log_categorical(&w, rng)
}

/// A segment of one utterance, as `(utterance, start, end)` frame indices.
type SegmentRef = (usize, usize, usize);

/// Resamples the word inventory. Segments are grouped by superstate, and
/// each group offers the tentative strings sampled from its segments.
fn sir_word_inventory<R: Rng + ?Sized>(
    lls: &[LetterLogliks],
    state: &GibbsState,
    model: &HdpHlmModel,
    hyper: &HdpHlmHyper,
    dur: &[Vec<f64>],
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let nw = model.n_words();
    let mut groups: Vec<Vec<SegmentRef>> = vec![Vec::new(); nw];
    let mut drawn: Vec<BTreeMap<Vec<usize>, usize>> = vec![BTreeMap::new(); nw];
    for (u, utt) in state.utterances.iter().enumerate() {
        for seg in &utt.segments {
            groups[seg.word].push((u, seg.start, seg.end()));
            let s: Vec<usize> = seg.tentative.iter().map(|l| l.letter).collect();
            if !s.is_empty() && s.len() <= hyper.max_word_len {
                *drawn[seg.word].entry(s).or_insert(0) += 1;
            }
        }
    }
    let mut words = Vec::with_capacity(nw);
    for i in 0..nw {
        if groups[i].is_empty() {
            words.push(model.sample_word_from_prior(hyper.max_word_len, rng));
            continue;
        }
        if drawn[i].is_empty() {
            words.push(model.words[i].clone());
            continue;
        }
        let strings: Vec<&Vec<usize>> = drawn[i].keys().collect();
        let priors: Vec<f64> = strings.iter().map(|w| model.word_log_prior(w)).collect();
        // seg_ll[c][s]
        let seg_ll: Vec<Vec<f64>> = strings
            .par_iter()
            .map(|w| {
                groups[i]
                    .iter()
                    .map(|&(u, a, b)| segment_dp(w, &lls[u], a, b, dur))
                    .collect()
            })
            .collect();
        let n_seg = groups[i].len();
        let log_z: Vec<f64> = (0..n_seg)
            .map(|s| {
                let col: Vec<f64> = (0..strings.len()).map(|c| seg_ll[c][s] + priors[c]).collect();
                log_sum_exp(&col)
            })
            .collect();
        let candidates: Vec<SirCandidate> = strings
            .iter()
            .enumerate()
            .map(|(c, w)| {
                let score = seg_ll[c].iter().sum::<f64>() + priors[c];
                let per_seg: Vec<f64> = (0..n_seg)
                    .filter(|&s| log_z[s] > f64::NEG_INFINITY)
                    .map(|s| seg_ll[c][s] + priors[c] - log_z[s])
                    .collect();
                let proposal = log_sum_exp(&per_seg) - (n_seg as f64).ln();
                SirCandidate {
                    score,
                    proposal,
                    count: drawn[i][*w],
                }
            })
            .collect();
        match sir_select(&candidates, rng) {
            Some(c) => words.push(strings[c].clone()),
            None => words.push(model.words[i].clone()),
        }
    }
    words
}

/// Conjugate updates of every parameter given a complete state: emissions
/// and duration rates from the tentative letter alignments, language model
/// from word bigrams, the inventory by SIR, and the word model from letter
/// bigrams of the new inventory.
pub fn resample_parameters<R: Rng + ?Sized>(
    data: &[&DMatrix<f64>],
    state: &GibbsState,
    model: &HdpHlmModel,
    hyper: &HdpHlmHyper,
    rng: &mut R,
) -> Result<HdpHlmModel> {
    if data.len() != state.utterances.len() {
        return Err(Error::invalid("state and data disagree on utterance count"));
    }
    let dim = model.dim();
    let nl = model.n_letters();
    let nw = model.n_words();
    let mut stats: Vec<NiwStats> = (0..nl).map(|_| NiwStats::new(dim)).collect();
    let mut durations: Vec<Vec<usize>> = vec![Vec::new(); nl];
    let mut lm_counts = vec![vec![0usize; nw]; nw];
    for (frames, utt) in data.iter().zip(&state.utterances) {
        let mut prev: Option<usize> = None;
        for seg in &utt.segments {
            if let Some(p) = prev {
                lm_counts[p][seg.word] += 1;
            }
            prev = Some(seg.word);
            let spans = if seg.tentative.is_empty() { &seg.letters } else { &seg.tentative };
            let mut t = seg.start;
            for span in spans {
                durations[span.letter].push(span.duration);
                for u in t..t + span.duration {
                    let y: DVector<f64> = frames.row(u).transpose();
                    stats[span.letter].push(&y);
                }
                t += span.duration;
            }
        }
    }
    let prior = hyper.emission_prior(dim)?;
    let emissions = stats
        .iter()
        .map(|s| prior.posterior(s).sample(rng))
        .collect::<Result<Vec<_>>>()?;
    let omega: Vec<f64> = durations
        .iter()
        .map(|d| sample_gamma_posterior(&hyper.dur_prior, d, rng))
        .collect();

    let beta_lm = sample_global_weights(hyper.gamma_lm, hyper.alpha_lm, &model.beta_lm, &lm_counts, rng);
    let pi_lm = sample_hdp_rows(&beta_lm, hyper.alpha_lm, &lm_counts, rng);

    let mut updated = HdpHlmModel {
        beta_lm,
        pi_lm,
        words: model.words.clone(),
        beta_wm: model.beta_wm.clone(),
        pi_wm: model.pi_wm.clone(),
        emissions,
        omega,
    };
    let lls = data
        .iter()
        .map(|f| LetterLogliks::new(f, &updated))
        .collect::<Result<Vec<_>>>()?;
    let dur = updated.duration_tables(hyper.max_dur);
    updated.words = sir_word_inventory(&lls, state, &updated, hyper, &dur, rng);

    let mut wm_counts = vec![vec![0usize; nl]; nl];
    for w in &updated.words {
        for pair in w.windows(2) {
            wm_counts[pair[0]][pair[1]] += 1;
        }
    }
    updated.beta_wm = sample_global_weights(hyper.gamma_wm, hyper.alpha_wm, &model.beta_wm, &wm_counts, rng);
    updated.pi_wm = sample_hdp_rows(&updated.beta_wm, hyper.alpha_wm, &wm_counts, rng);
    Ok(updated)
}

/// Result of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub model: HdpHlmModel,
    pub state: GibbsState,
    /// Joint log p(data, state) under the model the state was drawn from.
    pub log_likelihood: f64,
}

fn sample_utterance(
    frames: &DMatrix<f64>,
    model: &HdpHlmModel,
    dur: &[Vec<f64>],
    seed: u64,
) -> Result<(UtteranceState, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ll = LetterLogliks::new(frames, model)?;
    let table = backward_with(&ll, model, dur);
    let mut segments = forward_with(&ll, &table, model, dur, &mut rng)?;
    for seg in &mut segments {
        seg.tentative = tentative_letters(&ll, seg.start, seg.end(), model, dur, &mut rng)?;
    }
    let state = UtteranceState {
        len: ll.len(),
        segments,
    };
    let joint = state_loglik(&ll, &state, model, dur);
    Ok((state, joint))
}

/// Backward messages, forward sampling and tentative letters for every
/// utterance, then a parameter update. Utterances are processed in parallel
/// with per-utterance seeds drawn in order from `rng`, so the result does not
/// depend on the thread count.
pub fn gibbs_iteration<R: Rng + ?Sized>(
    data: &[&DMatrix<f64>],
    model: &HdpHlmModel,
    hyper: &HdpHlmHyper,
    rng: &mut R,
) -> Result<Sweep> {
    let dur = model.duration_tables(hyper.max_dur);
    let seeds: Vec<u64> = data.iter().map(|_| rng.random()).collect();
    let results = data
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(frames, &seed)| sample_utterance(frames, model, &dur, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut utterances = Vec::with_capacity(results.len());
    let mut log_likelihood = 0.0;
    for (s, ll) in results {
        utterances.push(s);
        log_likelihood += ll;
    }
    let state = GibbsState { utterances };
    state.check()?;
    if !log_likelihood.is_finite() {
        return Err(Error::Numerical(format!("joint log-likelihood {log_likelihood}")));
    }
    let model = resample_parameters(data, &state, model, hyper, rng)?;
    Ok(Sweep {
        model,
        state,
        log_likelihood,
    })
}

/// Generative draw of word and letter segmentations from the language model
/// and duration distributions, ignoring the frames; the last letter of each
/// utterance is cut at the utterance end.
pub fn initial_state<R: Rng + ?Sized>(
    lengths: &[usize],
    model: &HdpHlmModel,
    hyper: &HdpHlmHyper,
    rng: &mut R,
) -> Result<GibbsState> {
    let dur = model.duration_tables(hyper.max_dur);
    let mut utterances = Vec::with_capacity(lengths.len());
    for &len in lengths {
        if len == 0 {
            return Err(Error::invalid("empty utterance"));
        }
        let mut segments = Vec::new();
        let mut t = 0;
        let mut probs = &model.beta_lm;
        while t < len {
            let word = crate::hdphlm::sample_categorical(probs, rng);
            probs = &model.pi_lm[word];
            let start = t;
            let mut letters = Vec::new();
            for &l in &model.words[word] {
                if t == len {
                    break;
                }
                let d = (1 + draw(&dur[l][1..], rng, "duration")?).min(len - t);
                letters.push(LetterSpan { letter: l, duration: d });
                t += d;
            }
            segments.push(WordSegment {
                word,
                start,
                duration: t - start,
                tentative: letters.clone(),
                letters,
            });
        }
        utterances.push(UtteranceState { len, segments });
    }
    let state = GibbsState { utterances };
    state.check()?;
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_trials: usize,
    pub n_iters: usize,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_trials: 20,
            n_iters: 100,
            seed: 1,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub model: HdpHlmModel,
    pub state: GibbsState,
    /// Joint log-likelihood of every sweep.
    pub trace: Vec<f64>,
}

impl TrialOutcome {
    pub fn final_log_likelihood(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub outcome: std::result::Result<TrialOutcome, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub trials: Vec<TrialReport>,
    /// Successful trial with the highest final joint log-likelihood.
    pub map_trial: usize,
}

impl FitReport {
    pub fn map_outcome(&self) -> &TrialOutcome {
        self.trials[self.map_trial]
            .outcome
            .as_ref()
            .expect("map trial succeeded")
    }
}

/// Runs one chain: prior model, generative initial state, parameter update,
/// then `n_iters` sweeps.
pub fn run_trial(
    data: &[&DMatrix<f64>],
    hyper: &HdpHlmHyper,
    n_iters: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let dim = data.first().map(|f| f.ncols()).ok_or_else(|| Error::invalid("no utterances"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior_model = HdpHlmModel::from_prior(hyper, dim, &mut rng)?;
    let lengths: Vec<usize> = data.iter().map(|f| f.nrows()).collect();
    let init = initial_state(&lengths, &prior_model, hyper, &mut rng)?;
    let mut model = resample_parameters(data, &init, &prior_model, hyper, &mut rng)?;
    let mut state = init;
    let mut trace = Vec::with_capacity(n_iters);
    for it in 0..n_iters {
        let sweep = gibbs_iteration(data, &model, hyper, &mut rng)?;
        debug!("seed {seed} sweep {it}: joint log-likelihood {:.3}", sweep.log_likelihood);
        trace.push(sweep.log_likelihood);
        model = sweep.model;
        state = sweep.state;
    }
    Ok(TrialOutcome { model, state, trace })
}

/// Independent chains with seeds `seed + trial`. Failed trials are recorded;
/// the fit fails only if every trial does.
pub fn fit(features: &[FeatureSequence], hyper: &HdpHlmHyper, config: &FitConfig) -> Result<FitReport> {
    if config.n_trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let dim = features.first().map(FeatureSequence::dim).ok_or_else(|| Error::invalid("no utterances"))?;
    if let Some(f) = features.iter().find(|f| f.dim() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: f.dim(),
        });
    }
    hyper.validate(dim)?;
    let data: Vec<&DMatrix<f64>> = features.iter().map(|f| &f.frames).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let trials: Vec<TrialReport> = pool.install(|| {
        (0..config.n_trials)
            .into_par_iter()
            .map(|trial| {
                let seed = config.seed.wrapping_add(trial as u64);
                let outcome = run_trial(&data, hyper, config.n_iters, seed).map_err(|e| e.to_string());
                match &outcome {
                    Ok(o) => info!("trial {trial}: final joint log-likelihood {:.3}", o.final_log_likelihood()),
                    Err(e) => warn!("trial {trial} failed: {e}"),
                }
                TrialReport { trial, seed, outcome }
            })
            .collect()
    });
    let mut map_trial = None;
    let mut best = f64::NEG_INFINITY;
    for t in &trials {
        if let Ok(o) = &t.outcome {
            let ll = o.final_log_likelihood();
            if map_trial.is_none() || ll > best {
                best = ll;
                map_trial = Some(t.trial);
            }
        }
    }
    let map_trial = map_trial.ok_or_else(|| {
        let first = trials.iter().find_map(|t| t.outcome.as_ref().err()).cloned().unwrap_or_default();
        Error::Numerical(format!("every trial failed; first error: {first}"))
    })?;
    Ok(FitReport { trials, map_trial })
}

pub const FIT_FORMAT: &str = "npbdaa-fit";
pub const FIT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub final_log_likelihood: Option<f64>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub format: String,
    pub version: u32,
    pub map_trial: usize,
    pub trials: Vec<TrialSummary>,
}

impl FitSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: FitSummary = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if doc.format != FIT_FORMAT || doc.version != FIT_VERSION {
            return Err(Error::Format(format!("{}: not a fit summary", path.display())));
        }
        Ok(doc)
    }
}

pub fn trial_dir_name(trial: usize) -> String {
    format!("trial_{trial:02}")
}

impl FitReport {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            format: FIT_FORMAT.to_string(),
            version: FIT_VERSION,
            map_trial: self.map_trial,
            trials: self
                .trials
                .iter()
                .map(|t| match &t.outcome {
                    Ok(o) => TrialSummary {
                        trial: t.trial,
                        seed: t.seed,
                        error: None,
                        final_log_likelihood: Some(o.final_log_likelihood()),
                        trace: o.trace.clone(),
                    },
                    Err(e) => TrialSummary {
                        trial: t.trial,
                        seed: t.seed,
                        error: Some(e.clone()),
                        final_log_likelihood: None,
                        trace: Vec::new(),
                    },
                })
                .collect(),
        }
    }

    /// Writes `fit.json` plus, per successful trial, `trial_NN/model.json`
    /// and `trial_NN/labels/<id>.csv` with `frame,letter,word` rows.
    pub fn write_to_dir(&self, dir: &Path, ids: &[String]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::Format(e.to_string()))?;
        let path = dir.join("fit.json");
        fs::write(&path, summary + "\n").map_err(|e| Error::io(&path, e))?;
        for t in &self.trials {
            let Ok(o) = &t.outcome else { continue };
            if o.state.utterances.len() != ids.len() {
                return Err(Error::invalid("one id per utterance required"));
            }
            let tdir = dir.join(trial_dir_name(t.trial));
            let ldir = tdir.join("labels");
            fs::create_dir_all(&ldir).map_err(|e| Error::io(&ldir, e))?;
            let path = tdir.join("model.json");
            fs::write(&path, o.model.to_json()).map_err(|e| Error::io(&path, e))?;
            for (id, utt) in ids.iter().zip(&o.state.utterances) {
                let path = ldir.join(format!("{id}.csv"));
                write_frame_labels(&path, &utt.frame_letters(), &utt.frame_words())?;
            }
        }
        Ok(())
    }
}

pub fn write_frame_labels(path: &Path, letters: &[usize], words: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["frame", "letter", "word"]).map_err(io)?;
    for (t, (l, wd)) in letters.iter().zip(words).enumerate() {
        w.write_record([t.to_string(), l.to_string(), wd.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `frame,letter,word` file back into letter and word sequences.
pub fn read_frame_labels(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut letters = Vec::new();
    let mut words = Vec::new();
    for (i, rec) in r.deserialize::<(usize, usize, usize)>().enumerate() {
        let (frame, l, w) = rec.map_err(|e| Error::CsvRow {
            row: i + 1,
            msg: e.to_string(),
        })?;
        if frame != i {
            return Err(Error::CsvRow {
                row: i + 1,
                msg: format!("expected frame {i}, found {frame}"),
            });
        }
        letters.push(l);
        words.push(w);
    }
    Ok((letters, words))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdphlm::Gaussian;

    fn tiny_model(words: Vec<Vec<usize>>, means: &[f64], omega: &[f64]) -> HdpHlmModel {
        let nw = words.len();
        let nl = means.len();
        HdpHlmModel {
            beta_lm: vec![1.0 / nw as f64; nw],
            pi_lm: vec![vec![1.0 / nw as f64; nw]; nw],
            words,
            beta_wm: vec![1.0 / nl as f64; nl],
            pi_wm: vec![vec![1.0 / nl as f64; nl]; nl],
            emissions: means
                .iter()
                .map(|&m| Gaussian::new(DVector::from_element(1, m), DMatrix::identity(1, 1)).unwrap())
                .collect(),
            omega: omega.to_vec(),
        }
    }

    #[test]
    fn boundary_messages_are_zero() {
        let m = tiny_model(vec![vec![0], vec![1, 0]], &[0.0, 1.0], &[1.0, 2.0]);
        let frames = DMatrix::from_column_slice(5, 1, &[0.1, 0.9, 1.2, -0.3, 0.0]);
        let ll = LetterLogliks::new(&frames, &m).unwrap();
        let t = backward_messages(&ll, &m, 3);
        assert_eq!(t.b(5, 0), 0.0);
        assert_eq!(t.b(5, 1), 0.0);
        assert!(t.total_loglik(&m).is_finite());
    }

    #[test]
    fn too_short_segment_is_infeasible() {
        let m = tiny_model(vec![vec![0]], &[0.0], &[1.0]);
        let frames = DMatrix::from_column_slice(2, 1, &[0.0, 0.0]);
        assert_eq!(word_segment_loglik(&[0, 0, 0], &frames, &m, 4).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn frame_label_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_frame_labels(&p, &[0, 0, 3], &[1, 1, 2]).unwrap();
        assert_eq!(read_frame_labels(&p).unwrap(), (vec![0, 0, 3], vec![1, 1, 2]));
    }
}
