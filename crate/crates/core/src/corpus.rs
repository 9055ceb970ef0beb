//! Signals, feature sequences, speaker-tagged utterances and the corpus
//! manifest that ties them together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_mfcc, MfccConfig};

/// Default frame shift of a feature sequence, in seconds (100 Hz frames).
pub const DEFAULT_FRAME_SHIFT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("signal contains non-finite samples"));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// A `T x D` matrix of frames, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: DMatrix<f64>,
    pub frame_shift: f64,
}

impl FeatureSequence {
    pub fn new(frames: DMatrix<f64>, frame_shift: f64) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::invalid("no frames"));
        }
        if frames.ncols() == 0 {
            return Err(Error::invalid("frames have zero dimensions"));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite entries"));
        }
        Ok(FeatureSequence {
            frames,
            frame_shift,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: usize,
    pub features: FeatureSequence,
    pub letter_truth: Option<Vec<usize>>,
    pub word_truth: Option<Vec<usize>>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn validate(&self, n_speakers: usize) -> Result<()> {
        if self.speaker >= n_speakers {
            return Err(Error::invalid(format!(
                "utterance {}: speaker {} out of range ({} speakers)",
                self.id, self.speaker, n_speakers
            )));
        }
        for (name, labels) in [("letter", &self.letter_truth), ("word", &self.word_truth)] {
            if let Some(l) = labels {
                if l.len() != self.len() {
                    return Err(Error::invalid(format!(
                        "utterance {}: {} labels have length {}, expected {}",
                        self.id,
                        name,
                        l.len(),
                        self.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parametric-bias coding of speaker identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodingScheme {
    /// One-hot codes; speaker `i` of `n` sets bit `n - 1 - i`.
    Sparse,
    /// Four-speaker code table `0001, 0010, 0011, 0100`.
    Coding1,
    /// Four-speaker code table `0011, 0110, 1100, 1001`.
    Coding2,
}

impl CodingScheme {
    pub fn codes(self, n_speakers: usize) -> Result<Vec<Vec<u8>>> {
        if n_speakers == 0 {
            return Err(Error::invalid("need at least one speaker"));
        }
        let table: &[[u8; 4]; 4] = match self {
            CodingScheme::Sparse => {
                return Ok((0..n_speakers)
                    .map(|i| {
                        let mut row = vec![0u8; n_speakers];
                        row[n_speakers - 1 - i] = 1;
                        row
                    })
                    .collect())
            }
            CodingScheme::Coding1 => &[[0, 0, 0, 1], [0, 0, 1, 0], [0, 0, 1, 1], [0, 1, 0, 0]],
            CodingScheme::Coding2 => &[[0, 0, 1, 1], [0, 1, 1, 0], [1, 1, 0, 0], [1, 0, 0, 1]],
        };
        if n_speakers != 4 {
            return Err(Error::invalid(format!(
                "coding scheme {self} is defined for exactly 4 speakers, got {n_speakers}"
            )));
        }
        Ok(table.iter().map(|r| r.to_vec()).collect())
    }
}

impl fmt::Display for CodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodingScheme::Sparse => "sparse",
            CodingScheme::Coding1 => "coding1",
            CodingScheme::Coding2 => "coding2",
        })
    }
}

impl FromStr for CodingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(CodingScheme::Sparse),
            "coding1" => Ok(CodingScheme::Coding1),
            "coding2" => Ok(CodingScheme::Coding2),
            other => Err(Error::invalid(format!("unknown coding scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub n_speakers: usize,
    pub speaker_names: Vec<String>,
    pub coding: CodingScheme,
    pub pb_codes: Vec<Vec<u8>>,
}

impl Corpus {
    pub fn new(
        utterances: Vec<Utterance>,
        speaker_names: Vec<String>,
        coding: CodingScheme,
    ) -> Result<Self> {
        let n_speakers = speaker_names.len();
        let pb_codes = coding.codes(n_speakers)?;
        let distinct: BTreeSet<&Vec<u8>> = pb_codes.iter().collect();
        if distinct.len() != pb_codes.len() {
            return Err(Error::invalid("parametric-bias codes are not distinct"));
        }
        for u in &utterances {
            u.validate(n_speakers)?;
        }
        Ok(Corpus {
            utterances,
            n_speakers,
            speaker_names,
            coding,
            pb_codes,
        })
    }

    pub fn dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.features.dim())
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::len).sum()
    }

    pub fn pb_code(&self, speaker: usize) -> Vec<f64> {
        self.pb_codes[speaker].iter().map(|&b| b as f64).collect()
    }

    pub fn pb_width(&self) -> usize {
        self.pb_codes.first().map_or(0, Vec::len)
    }

    /// All frames stacked row-wise in utterance order.
    pub fn stacked_frames(&self) -> DMatrix<f64> {
        stack_rows(self.utterances.iter().map(|u| &u.features.frames))
    }

    /// Concatenated frame-level letter truth, if every utterance carries it.
    pub fn letter_truth(&self) -> Option<Vec<usize>> {
        self.utterances
            .iter()
            .map(|u| u.letter_truth.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat())
    }

    pub fn word_truth(&self) -> Option<Vec<usize>> {
        self.utterances
            .iter()
            .map(|u| u.word_truth.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat())
    }

    /// Per-frame speaker indices in utterance order.
    pub fn frame_speakers(&self) -> Vec<usize> {
        self.utterances
            .iter()
            .flat_map(|u| std::iter::repeat_n(u.speaker, u.len()))
            .collect()
    }

    /// Sub-corpus containing only one speaker's utterances, re-indexed as a
    /// single-speaker corpus.
    pub fn speaker_subset(&self, speaker: usize) -> Result<Corpus> {
        let utterances = self
            .utterances
            .iter()
            .filter(|u| u.speaker == speaker)
            .cloned()
            .map(|mut u| {
                u.speaker = 0;
                u
            })
            .collect();
        Corpus::new(
            utterances,
            vec![self.speaker_names[speaker].clone()],
            CodingScheme::Sparse,
        )
    }

    /// Replaces every utterance's features, keeping ids, speakers and labels.
    pub fn with_features(&self, features: Vec<FeatureSequence>) -> Result<Corpus> {
        if features.len() != self.utterances.len() {
            return Err(Error::Dimension {
                expected: self.utterances.len(),
                got: features.len(),
            });
        }
        let utterances = self
            .utterances
            .iter()
            .zip(features)
            .map(|(u, f)| Utterance {
                features: f,
                ..u.clone()
            })
            .collect();
        Corpus::new(utterances, self.speaker_names.clone(), self.coding)
    }

    /// Writes feature and label CSVs plus a manifest into `dir`.
    ///
    /// All paths in the manifest are relative to `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        let feat_dir = dir.join("features");
        let label_dir = dir.join("labels");
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        let mut entries = Vec::with_capacity(self.utterances.len());
        for u in &self.utterances {
            let feat_rel = format!("features/{}.csv", u.id);
            write_features_csv(&u.features, &dir.join(&feat_rel))?;
            let mut entry = ManifestEntry {
                id: Some(u.id.clone()),
                path: feat_rel,
                speaker: self.speaker_names[u.speaker].clone(),
                letter_labels: None,
                word_labels: None,
            };
            if u.letter_truth.is_some() || u.word_truth.is_some() {
                fs::create_dir_all(&label_dir).map_err(|e| Error::io(&label_dir, e))?;
            }
            if let Some(l) = &u.letter_truth {
                let rel = format!("labels/{}.letters.csv", u.id);
                write_labels_csv(l, &dir.join(&rel))?;
                entry.letter_labels = Some(rel);
            }
            if let Some(l) = &u.word_truth {
                let rel = format!("labels/{}.words.csv", u.id);
                write_labels_csv(l, &dir.join(&rel))?;
                entry.word_labels = Some(rel);
            }
            entries.push(entry);
        }
        let manifest = Manifest {
            coding: self.coding.to_string(),
            utterances: entries,
        };
        let path = dir.join("manifest.toml");
        manifest.save(&path)?;
        Ok(path)
    }
}

pub(crate) fn stack_rows<'a>(mats: impl Iterator<Item = &'a DMatrix<f64>> + Clone) -> DMatrix<f64> {
    let rows: usize = mats.clone().map(|m| m.nrows()).sum();
    let cols = mats.clone().next().map_or(0, |m| m.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for m in mats {
        out.rows_mut(r, m.nrows()).copy_from(m);
        r += m.nrows();
    }
    out
}

/// Reads a mono 16-bit PCM WAV file, scaling samples by `1/32768`.
pub fn load_wav(path: &Path) -> Result<Signal> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "{}: unsupported channel count {}",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "{}: unsupported encoding ({:?}, {} bits)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Wav(format!("{}: truncated or corrupt data: {e}", path.display())))?;
    Signal::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV file. Samples are clipped to `[-1, 1)`.
pub fn write_wav(signal: &Signal, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| Error::Wav(format!("{e}")))?;
    for &s in &signal.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| Error::Wav(format!("{e}")))?;
    }
    writer.finalize().map_err(|e| Error::Wav(format!("{e}")))
}

pub fn write_features_csv(seq: &FeatureSequence, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::new();
    let header: Vec<String> = (0..seq.dim()).map(|d| format!("dim_{d}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in seq.frames.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<FeatureSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features_csv(&text)
}

/// Parses feature CSV text. Data rows are numbered from 1.
pub fn parse_features_csv(text: &str) -> Result<FeatureSequence> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("bad csv header: {e}")))?
        .clone();
    let dim = header.len();
    for (d, name) in header.iter().enumerate() {
        if name.trim() != format!("dim_{d}") {
            return Err(Error::Format(format!(
                "header column {d} is '{name}', expected 'dim_{d}'"
            )));
        }
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::CsvRow {
            row,
            msg: e.to_string(),
        })?;
        if record.len() != dim {
            return Err(Error::CsvRow {
                row,
                msg: format!("expected {dim} columns, found {}", record.len()),
            });
        }
        for cell in record.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::CsvRow {
                row,
                msg: format!("non-numeric cell '{cell}'"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("no frames".into()));
    }
    FeatureSequence::new(
        DMatrix::from_row_slice(rows, dim, &values),
        DEFAULT_FRAME_SHIFT,
    )
}

pub fn write_labels_csv(labels: &[usize], path: &Path) -> Result<()> {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "label" => {}
        _ => return Err(Error::Format(format!("{}: missing 'label' header", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::CsvRow {
                row: i + 1,
                msg: format!("{}: bad label '{l}'", path.display()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub path: String,
    pub speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub letter_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_labels: Option<String>,
}

/// Corpus manifest: a TOML document with a top-level `coding` and one
/// `[[utterance]]` table per file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub coding: String,
    #[serde(rename = "utterance", default)]
    pub utterances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Speaker names in lexicographic order; position is the speaker index.
    pub fn speaker_names(&self) -> Vec<String> {
        let names: BTreeSet<&str> = self.utterances.iter().map(|u| u.speaker.as_str()).collect();
        names.into_iter().map(str::to_owned).collect()
    }
}

/// Loads every utterance listed in a manifest. `.wav` entries are converted
/// with `mfcc`; anything else is read as a feature CSV.
pub fn build_corpus(manifest_path: &Path, mfcc: &MfccConfig) -> Result<Corpus> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    build_corpus_from(&manifest, base, mfcc)
}

pub fn build_corpus_from(manifest: &Manifest, base: &Path, mfcc: &MfccConfig) -> Result<Corpus> {
    let coding: CodingScheme = manifest.coding.parse()?;
    let names = manifest.speaker_names();
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut utterances = Vec::with_capacity(manifest.utterances.len());
    for entry in &manifest.utterances {
        let path = base.join(&entry.path);
        if !path.exists() {
            return Err(Error::invalid(format!("missing file {}", path.display())));
        }
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        let features = if is_wav {
            extract_mfcc(&load_wav(&path)?, mfcc)?
        } else {
            read_features_csv(&path)?
        };
        let speaker = *index
            .get(entry.speaker.as_str())
            .ok_or_else(|| Error::invalid(format!("unknown speaker '{}'", entry.speaker)))?;
        let id = entry.id.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let load = |p: &Option<String>| p.as_ref().map(|p| read_labels_csv(&base.join(p))).transpose();
        utterances.push(Utterance {
            id,
            speaker,
            features,
            letter_truth: load(&entry.letter_labels)?,
            word_truth: load(&entry.word_labels)?,
        });
    }
    Corpus::new(utterances, names, coding)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_codes_for_four_speakers() {
        let codes = CodingScheme::Sparse.codes(4).unwrap();
        assert_eq!(
            codes,
            vec![vec![0, 0, 0, 1], vec![0, 0, 1, 0], vec![0, 1, 0, 0], vec![1, 0, 0, 0]]
        );
        assert_eq!(CodingScheme::Sparse.codes(1).unwrap(), vec![vec![1]]);
    }

    #[test]
    fn coding_tables() {
        assert_eq!(
            CodingScheme::Coding2.codes(4).unwrap(),
            vec![vec![0, 0, 1, 1], vec![0, 1, 1, 0], vec![1, 1, 0, 0], vec![1, 0, 0, 1]]
        );
        assert_eq!(
            CodingScheme::Coding1.codes(4).unwrap(),
            vec![vec![0, 0, 0, 1], vec![0, 0, 1, 0], vec![0, 0, 1, 1], vec![0, 1, 0, 0]]
        );
        assert!(CodingScheme::Coding1.codes(3).is_err());
        assert!("hamming".parse::<CodingScheme>().is_err());
    }

    #[test]
    fn csv_errors() {
        let err = parse_features_csv("dim_0,dim_1,dim_2\n").unwrap_err();
        assert!(err.to_string().contains("no frames"));
        let err = parse_features_csv("dim_0,dim_1,dim_2\n1,2\n").unwrap_err();
        assert!(matches!(err, Error::CsvRow { row: 1, .. }), "{err}");
        let err = parse_features_csv("dim_0,dim_1\n1,2\n3,x\n").unwrap_err();
        assert!(matches!(err, Error::CsvRow { row: 2, .. }), "{err}");
    }

    #[test]
    fn csv_round_trip_small() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-17, 0.1 + 0.2, 3.0, -0.0]);
        let seq = FeatureSequence::new(m.clone(), DEFAULT_FRAME_SHIFT).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_features_csv(&seq, &p).unwrap();
        let back = read_features_csv(&p).unwrap();
        assert_eq!(back.frames, m);
    }

    #[test]
    fn wav_silence_and_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_wav(&Signal::new(vec![0.0; 16000], 16000).unwrap(), &p).unwrap();
        let s = load_wav(&p).unwrap();
        assert_eq!(s.samples.len(), 16000);
        assert_eq!(s.sample_rate, 16000);
        assert!(s.samples.iter().all(|&x| x == 0.0));

        let stereo = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let err = load_wav(&stereo).unwrap_err();
        assert!(err.to_string().contains("unsupported channel count"));
    }

    #[test]
    fn wav_square_wave_extremes() {
        // i16 extremes scale by 1/32768: 32767 -> 32767/32768, -32768 -> -1
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sq.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for i in 0..80 {
            w.write_sample(if (i / 10) % 2 == 0 { 32767i16 } else { -32768 }).unwrap();
        }
        w.finalize().unwrap();
        let s = load_wav(&p).unwrap();
        assert_eq!(s.samples[0], 32767.0 / 32768.0);
        assert_eq!(s.samples[10], -1.0);
    }

    #[test]
    fn truncated_wav_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_wav(&Signal::new(vec![0.5; 1000], 8000).unwrap(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 501]).unwrap();
        assert!(load_wav(&p).is_err());
    }
}
