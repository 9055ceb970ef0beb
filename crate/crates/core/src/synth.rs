//! Ground-truth double-articulation corpora: fixed sentence templates over a
//! five-word, five-vowel inventory, rendered as Gaussian frames with
//! shifted-Poisson letter durations and an affine per-speaker distortion.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{CodingScheme, Corpus, FeatureSequence, Utterance, DEFAULT_FRAME_SHIFT};
use crate::error::{Error, Result};

pub const LETTER_NAMES: [&str; 5] = ["a", "i", "u", "e", "o"];
pub const WORD_NAMES: [&str; 5] = ["aioi", "aue", "ao", "ie", "uo"];

/// Affine distortion `y = scale * x + offset` (elementwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerDistortion {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub letter_means: Vec<Vec<f64>>,
    /// Isotropic standard deviation of every letter.
    pub letter_std: f64,
    /// Poisson rate of each letter's duration beyond one frame.
    pub letter_omega: Vec<f64>,
    /// Word inventory as letter strings.
    pub words: Vec<Vec<usize>>,
    /// Sentence templates as word-id sequences.
    pub templates: Vec<Vec<usize>>,
    pub speakers: Vec<SpeakerDistortion>,
    /// Sentences per speaker; template `k mod n_templates` is used for sentence `k`.
    pub n_sentences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let three_word = vec![
            vec![4, 1, 3], // uo aue ie
            vec![3, 3, 4], // ie ie uo
            vec![1, 2, 3], // aue ao ie
            vec![2, 3, 2], // ao ie ao
            vec![0, 4, 3], // aioi uo ie
        ];
        let mut templates: Vec<Vec<usize>> = (0..5)
            .flat_map(|a| (0..5).map(move |b| vec![a, b]))
            .collect();
        templates.extend(three_word);
        SynthConfig {
            // regular pentagon of radius 0.6 in the first two axes
            letter_means: vec![
                vec![0.6, 0.0, 0.0],
                vec![0.185, 0.571, 0.0],
                vec![-0.485, 0.353, 0.0],
                vec![-0.485, -0.353, 0.0],
                vec![0.185, -0.571, 0.0],
            ],
            letter_std: 0.08,
            letter_omega: vec![19.0, 16.0, 15.0, 18.0, 20.0],
            words: vec![vec![0, 1, 4, 1], vec![0, 2, 3], vec![0, 4], vec![1, 3], vec![2, 4]],
            templates,
            speakers: vec![
                SpeakerDistortion {
                    offset: vec![0.0, 0.0, 0.4],
                    scale: vec![1.0; 3],
                },
                SpeakerDistortion {
                    offset: vec![0.0, 0.0, -0.4],
                    scale: vec![1.0; 3],
                },
            ],
            n_sentences: 30,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn dim(&self) -> usize {
        self.letter_means.first().map_or(0, Vec::len)
    }

    pub fn n_letters(&self) -> usize {
        self.letter_means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let nl = self.n_letters();
        if dim == 0 || nl == 0 || self.letter_means.iter().any(|m| m.len() != dim) {
            return Err(Error::Config("letter means must share a positive dimension".into()));
        }
        if self.letter_omega.len() != nl || self.letter_omega.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("one non-negative duration rate per letter".into()));
        }
        if !(self.letter_std > 0.0) {
            return Err(Error::Config("letter_std must be positive".into()));
        }
        if self.words.iter().any(|w| w.is_empty() || w.iter().any(|&l| l >= nl)) {
            return Err(Error::Config("word strings must be non-empty valid letter ids".into()));
        }
        if self.templates.is_empty()
            || self
                .templates
                .iter()
                .any(|t| t.is_empty() || t.iter().any(|&w| w >= self.words.len()))
        {
            return Err(Error::Config("templates must be non-empty valid word ids".into()));
        }
        if self.speakers.is_empty() {
            return Err(Error::Config("need at least one speaker".into()));
        }
        for s in &self.speakers {
            if s.offset.len() != dim || s.scale.len() != dim || s.scale.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("speaker distortions need dim entries and positive scales".into()));
            }
        }
        Ok(())
    }

    pub fn speaker_names(&self) -> Vec<String> {
        (0..self.speakers.len()).map(|i| format!("S{i}")).collect()
    }
}

/// The default configuration.
pub fn default_config() -> SynthConfig {
    SynthConfig::default()
}

/// Renders every speaker's sentences. Deterministic given the config seed.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim();
    let means: Vec<DVector<f64>> = config
        .letter_means
        .iter()
        .map(|m| DVector::from_column_slice(m))
        .collect();
    let mut utterances = Vec::new();
    for (spk, distortion) in config.speakers.iter().enumerate() {
        for k in 0..config.n_sentences {
            let template = &config.templates[k % config.templates.len()];
            let mut rows: Vec<f64> = Vec::new();
            let mut letters = Vec::new();
            let mut words = Vec::new();
            for &w in template {
                for &l in &config.words[w] {
                    let d = 1 + sample_poisson(config.letter_omega[l], &mut rng);
                    for _ in 0..d {
                        for j in 0..dim {
                            let noise: f64 = rng.sample(StandardNormal);
                            let x = means[l][j] + config.letter_std * noise;
                            rows.push(distortion.scale[j] * x + distortion.offset[j]);
                        }
                        letters.push(l);
                        words.push(w);
                    }
                }
            }
            let t = letters.len();
            utterances.push(Utterance {
                id: format!("s{spk}_{k:03}"),
                speaker: spk,
                features: FeatureSequence::new(
                    DMatrix::from_row_slice(t, dim, &rows),
                    DEFAULT_FRAME_SHIFT,
                )?,
                letter_truth: Some(letters),
                word_truth: Some(words),
            });
        }
    }
    Corpus::new(utterances, config.speaker_names(), CodingScheme::Sparse)
}

fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as usize
}

/// Collapses frame-level word labels into the run sequence of word ids.
///
/// Adjacent repeats of the same word cannot be told apart from frame labels
/// alone, so callers pair this with letter labels when that matters.
pub fn decode_word_runs(word_labels: &[usize], letter_labels: &[usize], words: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < word_labels.len() {
        let w = word_labels[t];
        // consume one occurrence of word w: its letters in order
        for &l in &words[w] {
            while t < word_labels.len() && word_labels[t] == w && letter_labels[t] == l {
                t += 1;
            }
        }
        out.push(w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory_and_templates() {
        let c = default_config();
        assert_eq!(c.templates.len(), 30);
        assert_eq!(c.templates.iter().filter(|t| t.len() == 2).count(), 25);
        let lens: Vec<usize> = c.words.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![4, 3, 2, 2, 2]);
        let spelled: Vec<String> = c
            .words
            .iter()
            .map(|w| w.iter().map(|&l| LETTER_NAMES[l]).collect())
            .collect();
        assert_eq!(spelled, WORD_NAMES);
        c.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic_and_labelled() {
        let c = default_config();
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.utterances.len(), 60);
        for u in &a.utterances {
            let letters = u.letter_truth.as_ref().unwrap();
            let words = u.word_truth.as_ref().unwrap();
            let runs = decode_word_runs(words, letters, &c.words);
            let k: usize = u.id[3..].parse().unwrap();
            assert_eq!(runs, c.templates[k % 30]);
        }
    }

    #[test]
    fn zero_offset_speakers_agree() {
        let mut c = default_config();
        for s in c.speakers.iter_mut() {
            s.offset = vec![0.0; 3];
        }
        let corpus = generate(&c).unwrap();
        for letter in 0..5 {
            let mut sums = [[0.0; 3]; 2];
            let mut counts = [0usize; 2];
            for u in &corpus.utterances {
                for (t, &l) in u.letter_truth.as_ref().unwrap().iter().enumerate() {
                    if l == letter {
                        counts[u.speaker] += 1;
                        for j in 0..3 {
                            sums[u.speaker][j] += u.features.frames[(t, j)];
                        }
                    }
                }
            }
            for j in 0..3 {
                let m0 = sums[0][j] / counts[0] as f64;
                let m1 = sums[1][j] / counts[1] as f64;
                let se = c.letter_std * (1.0 / counts[0] as f64 + 1.0 / counts[1] as f64).sqrt();
                assert!((m0 - m1).abs() < 3.0 * se, "letter {letter} dim {j}");
            }
        }
    }
}
