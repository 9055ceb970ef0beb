//! MFCC extraction (HTK-style mel filterbank) and dataset-level min-max
//! normalization into the tanh range.

use std::f64::consts::PI;

use nalgebra::{DMatrix, RowDVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSequence, Signal};
use crate::error::{Error, Result};

const PRE_EMPHASIS: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;
const DELTA_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    /// Analysis window length in seconds.
    pub frame_len: f64,
    /// Hop between frames in seconds.
    pub frame_shift: f64,
    pub n_mel_filters: usize,
    /// Number of static cepstra per frame.
    pub n_cepstra: usize,
    /// When set the static block starts at `c0`; otherwise `c0` is dropped
    /// and the block is `c1..=c_n`.
    pub include_power: bool,
    /// Number of regression orders appended (0, 1 or 2).
    pub deltas: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_len: 0.025,
            frame_shift: 0.010,
            n_mel_filters: 26,
            n_cepstra: 13,
            include_power: true,
            deltas: 2,
        }
    }
}

impl MfccConfig {
    /// Twelve static cepstra without the power coefficient and no deltas.
    pub fn twelve_dim() -> Self {
        MfccConfig {
            n_cepstra: 12,
            include_power: false,
            deltas: 0,
            ..Self::default()
        }
    }

    /// Config producing `dims`-dimensional frames (39 or 12).
    pub fn for_dims(dims: usize) -> Result<Self> {
        match dims {
            39 => Ok(Self::default()),
            12 => Ok(Self::twelve_dim()),
            other => Err(Error::Config(format!("unsupported MFCC dimensionality {other}"))),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.n_cepstra * (self.deltas + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_shift > 0.0 && self.frame_shift <= self.frame_len) {
            return Err(Error::Config("need 0 < frame_shift <= frame_len".into()));
        }
        let highest = self.n_cepstra + usize::from(!self.include_power);
        if self.n_cepstra == 0 || highest > self.n_mel_filters {
            return Err(Error::Config("cepstra must not exceed mel filters".into()));
        }
        if self.deltas > 2 {
            return Err(Error::Config("deltas must be 0, 1 or 2".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// Triangular filters equally spaced on the HTK mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_filters x n_bins` weights over FFT bins `0..=fft_len/2`.
    pub weights: DMatrix<f64>,
    pub center_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, fft_len: usize, sample_rate: u32) -> Self {
        let n_bins = fft_len / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let mel_hi = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_hi * i as f64 / (n_filters + 1) as f64)
            .collect();
        let mut weights = DMatrix::zeros(n_filters, n_bins);
        for bin in 0..n_bins {
            let mel = hz_to_mel(bin as f64 * sample_rate as f64 / fft_len as f64);
            for f in 0..n_filters {
                let (lo, c, hi) = (edges[f], edges[f + 1], edges[f + 2]);
                let w = if mel > lo && mel <= c {
                    (mel - lo) / (c - lo)
                } else if mel > c && mel < hi {
                    (hi - mel) / (hi - c)
                } else {
                    0.0
                };
                weights[(f, bin)] = w;
            }
        }
        let center_hz = edges[1..=n_filters].iter().map(|&m| mel_to_hz(m)).collect();
        MelFilterbank { weights, center_hz }
    }
}

struct Framing {
    frame_len: usize,
    shift: usize,
    fft_len: usize,
}

impl Framing {
    fn new(signal: &Signal, config: &MfccConfig) -> Result<Self> {
        config.validate()?;
        let sr = signal.sample_rate as f64;
        let frame_len = (config.frame_len * sr).round() as usize;
        let shift = (config.frame_shift * sr).round() as usize;
        if frame_len == 0 || shift == 0 {
            return Err(Error::Config("frame shorter than one sample".into()));
        }
        if signal.samples.len() < frame_len {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one frame ({frame_len})",
                signal.samples.len()
            )));
        }
        Ok(Framing {
            frame_len,
            shift,
            fft_len: frame_len.next_power_of_two(),
        })
    }

    fn n_frames(&self, n_samples: usize) -> usize {
        (n_samples - self.frame_len) / self.shift + 1
    }
}

/// Log mel filterbank energies, one row per frame.
pub fn log_mel_energies(signal: &Signal, config: &MfccConfig) -> Result<DMatrix<f64>> {
    let framing = Framing::new(signal, config)?;
    let n_frames = framing.n_frames(signal.samples.len());
    let bank = MelFilterbank::new(config.n_mel_filters, framing.fft_len, signal.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(framing.fft_len);
    let n = framing.frame_len;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos())
        .collect();
    let n_bins = framing.fft_len / 2 + 1;
    let mut out = DMatrix::zeros(n_frames, config.n_mel_filters);
    let mut buf = vec![Complex::new(0.0, 0.0); framing.fft_len];
    let mut mag = nalgebra::DVector::zeros(n_bins);
    for t in 0..n_frames {
        let frame = &signal.samples[t * framing.shift..t * framing.shift + n];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        // per-frame pre-emphasis, first sample scaled by (1 - k)
        for i in 0..n {
            let prev = if i == 0 { frame[0] } else { frame[i - 1] };
            buf[i].re = (frame[i] - PRE_EMPHASIS * prev) * window[i];
        }
        fft.process(&mut buf);
        for b in 0..n_bins {
            mag[b] = buf[b].norm();
        }
        let energies = &bank.weights * &mag;
        for f in 0..config.n_mel_filters {
            out[(t, f)] = energies[f].max(LOG_FLOOR).ln();
        }
    }
    Ok(out)
}

/// MFCC frames: log mel energies, DCT-II, then optional regression deltas.
pub fn extract_mfcc(signal: &Signal, config: &MfccConfig) -> Result<FeatureSequence> {
    let logmel = log_mel_energies(signal, config)?;
    let n_filters = config.n_mel_filters;
    let first = usize::from(!config.include_power);
    let norm = (2.0 / n_filters as f64).sqrt();
    let dct = DMatrix::from_fn(config.n_cepstra, n_filters, |i, j| {
        let k = (i + first) as f64;
        norm * (PI * k / n_filters as f64 * (j as f64 + 0.5)).cos()
    });
    let statics = &logmel * dct.transpose();
    let mut blocks = vec![statics];
    for _ in 0..config.deltas {
        let last = blocks.last().expect("non-empty");
        blocks.push(regression_deltas(last));
    }
    let t = blocks[0].nrows();
    let mut frames = DMatrix::zeros(t, config.output_dim());
    for (b, block) in blocks.iter().enumerate() {
        frames
            .columns_mut(b * config.n_cepstra, config.n_cepstra)
            .copy_from(block);
    }
    FeatureSequence::new(frames, config.frame_shift)
}

/// `d_t = sum_k k (c_{t+k} - c_{t-k}) / (2 sum_k k^2)` over `k = 1..=2`,
/// replicating edge frames.
pub fn regression_deltas(c: &DMatrix<f64>) -> DMatrix<f64> {
    let t = c.nrows() as isize;
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|k| (k * k) as f64).sum::<f64>();
    let clamp = |i: isize| i.clamp(0, t - 1) as usize;
    let mut out = DMatrix::zeros(c.nrows(), c.ncols());
    for row in 0..t {
        let mut acc = RowDVector::zeros(c.ncols());
        for k in 1..=DELTA_WINDOW as isize {
            acc += (c.row(clamp(row + k)) - c.row(clamp(row - k))) * k as f64;
        }
        out.set_row(row as usize, &(acc / denom));
    }
    out
}

/// Per-dimension extremes over a pooled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// Fits extremes over all rows of all matrices.
pub fn fit_normalizer<'a>(seqs: impl IntoIterator<Item = &'a DMatrix<f64>>) -> Result<NormStats> {
    let mut stats: Option<NormStats> = None;
    for m in seqs {
        let s = stats.get_or_insert_with(|| NormStats {
            min: vec![f64::INFINITY; m.ncols()],
            max: vec![f64::NEG_INFINITY; m.ncols()],
        });
        if m.ncols() != s.dim() {
            return Err(Error::Dimension {
                expected: s.dim(),
                got: m.ncols(),
            });
        }
        for row in m.row_iter() {
            for (d, &v) in row.iter().enumerate() {
                s.min[d] = s.min[d].min(v);
                s.max[d] = s.max[d].max(v);
            }
        }
    }
    match stats {
        Some(s) if s.min.iter().all(|v| v.is_finite()) => Ok(s),
        _ => Err(Error::invalid("cannot fit normalizer on empty data")),
    }
}

/// Maps each dimension affinely so that `min -> -1` and `max -> +1`.
/// Constant dimensions map to 0.
pub fn normalize(seq: &FeatureSequence, stats: &NormStats) -> Result<FeatureSequence> {
    if seq.dim() != stats.dim() {
        return Err(Error::Dimension {
            expected: stats.dim(),
            got: seq.dim(),
        });
    }
    let mut frames = seq.frames.clone();
    for d in 0..stats.dim() {
        let (lo, hi) = (stats.min[d], stats.max[d]);
        let range = hi - lo;
        for v in frames.column_mut(d).iter_mut() {
            *v = if range > 0.0 {
                2.0 * ((*v - lo) / range) - 1.0
            } else {
                0.0
            };
        }
    }
    FeatureSequence::new(frames, seq.frame_shift)
}
