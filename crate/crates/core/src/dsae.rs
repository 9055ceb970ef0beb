//! Sparse autoencoder layers, greedy stack training and the parametric-bias
//! hidden layer that moves speaker identity out of the bottleneck.
//!
//! Batches are `D x N` matrices with one sample per column. Both encoder and
//! decoder use `tanh`; the sparsity statistic maps the mean activation from
//! `(-1, 1)` to `(0, 1)` before the Bernoulli KL penalty.

use std::fs;
use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureSequence};
use crate::error::{Error, Result};

/// Bounds applied to the mean activation before the KL term.
pub const HBAR_CLAMP: f64 = 1e-6;

pub const MODEL_FORMAT: &str = "npbdaa-dsae";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaeHyper {
    /// Weight-decay coefficient.
    pub alpha: f64,
    /// Sparsity weight.
    pub beta: f64,
    /// Sparsity target in `(0, 1)`.
    pub eta: f64,
}

impl Default for SaeHyper {
    fn default() -> Self {
        SaeHyper {
            alpha: 0.003,
            beta: 0.7,
            eta: 0.5,
        }
    }
}

impl SaeHyper {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::invalid(format!("bad autoencoder hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Full-batch gradient descent schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            learning_rate: 0.01,
            epochs: 2000,
            seed: 1,
        }
    }
}

/// Bernoulli KL divergence `KL(eta || h)`.
pub fn bernoulli_kl(eta: f64, h: f64) -> f64 {
    eta * (eta / h).ln() + (1.0 - eta) * ((1.0 - eta) / (1.0 - h)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeLayer {
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
    pub hyper: SaeHyper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
}

/// Loss decomposed into its three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub decay: f64,
    pub sparsity: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.decay + self.sparsity
    }
}

/// Multiplicative masks over the weight matrices; zero entries are fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask {
    pub enc: DMatrix<f64>,
    pub dec: DMatrix<f64>,
}

impl SaeLayer {
    /// Uniform init in `±sqrt(6 / (D_V + D_H))`, zero biases.
    pub fn random<R: Rng + ?Sized>(d_v: usize, d_h: usize, hyper: SaeHyper, rng: &mut R) -> Self {
        let bound = (6.0 / (d_v + d_h) as f64).sqrt();
        let w_enc = DMatrix::from_fn(d_h, d_v, |_, _| rng.random_range(-bound..bound));
        let w_dec = DMatrix::from_fn(d_v, d_h, |_, _| rng.random_range(-bound..bound));
        SaeLayer {
            w_enc,
            b_enc: DVector::zeros(d_h),
            w_dec,
            b_dec: DVector::zeros(d_v),
            hyper,
        }
    }

    pub fn zeros(d_v: usize, d_h: usize, hyper: SaeHyper) -> Self {
        SaeLayer {
            w_enc: DMatrix::zeros(d_h, d_v),
            b_enc: DVector::zeros(d_h),
            w_dec: DMatrix::zeros(d_v, d_h),
            b_dec: DVector::zeros(d_v),
            hyper,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: rows,
            });
        }
        Ok(())
    }

    /// Hidden code and reconstruction of a single vector.
    pub fn forward(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_input(v.len())?;
        let h = (&self.w_enc * v + &self.b_enc).map(f64::tanh);
        let r = (&self.w_dec * &h + &self.b_dec).map(f64::tanh);
        Ok((h, r))
    }

    /// Hidden codes for a `D_V x N` batch.
    pub fn encode(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(batch.nrows())?;
        let mut a = &self.w_enc * batch;
        for mut col in a.column_iter_mut() {
            col += &self.b_enc;
        }
        Ok(a.map(f64::tanh))
    }

    fn decode(&self, hidden: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = &self.w_dec * hidden;
        for mut col in a.column_iter_mut() {
            col += &self.b_dec;
        }
        a.map(f64::tanh)
    }

    fn mean_activation(hidden: &DMatrix<f64>) -> DVector<f64> {
        let n = hidden.ncols() as f64;
        hidden.column_sum().map(|s| 0.5 * (1.0 + s / n))
    }

    pub fn loss_terms(&self, batch: &DMatrix<f64>) -> Result<LossTerms> {
        if batch.ncols() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let h = self.encode(batch)?;
        let r = self.decode(&h);
        let n = batch.ncols() as f64;
        let reconstruction = (&r - batch).norm_squared() / (2.0 * n);
        let decay = 0.5 * self.hyper.alpha * (self.w_enc.norm_squared() + self.w_dec.norm_squared());
        let eta = self.hyper.eta;
        let sparsity = if self.hyper.beta == 0.0 {
            0.0
        } else {
            self.hyper.beta
                * Self::mean_activation(&h)
                    .iter()
                    .map(|&hb| bernoulli_kl(eta, hb.clamp(HBAR_CLAMP, 1.0 - HBAR_CLAMP)))
                    .sum::<f64>()
        };
        Ok(LossTerms {
            reconstruction,
            decay,
            sparsity,
        })
    }

    pub fn loss(&self, batch: &DMatrix<f64>) -> Result<f64> {
        Ok(self.loss_terms(batch)?.total())
    }

    /// Analytic gradients of [`SaeLayer::loss`] by back-propagation.
    pub fn gradients(&self, batch: &DMatrix<f64>) -> Result<LayerGradients> {
        if batch.ncols() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let h = self.encode(batch)?;
        let r = self.decode(&h);
        let n = batch.ncols() as f64;
        let alpha = self.hyper.alpha;

        let mut delta_out = (&r - batch) / n;
        delta_out.zip_apply(&r, |d, r| *d *= 1.0 - r * r);
        let w_dec = &delta_out * h.transpose() + &self.w_dec * alpha;
        let b_dec = delta_out.column_sum();

        let mut delta_hidden = self.w_dec.transpose() * &delta_out;
        if self.hyper.beta != 0.0 {
            let eta = self.hyper.eta;
            let hbar = Self::mean_activation(&h);
            for (i, &hb) in hbar.iter().enumerate() {
                if hb <= HBAR_CLAMP || hb >= 1.0 - HBAR_CLAMP {
                    continue;
                }
                // dKL/dhbar * dhbar/dh_ti, the latter being 1/(2N)
                let g = self.hyper.beta * (-eta / hb + (1.0 - eta) / (1.0 - hb)) / (2.0 * n);
                delta_hidden.row_mut(i).add_scalar_mut(g);
            }
        }
        delta_hidden.zip_apply(&h, |d, h| *d *= 1.0 - h * h);
        let w_enc = &delta_hidden * batch.transpose() + &self.w_enc * alpha;
        let b_enc = delta_hidden.column_sum();
        Ok(LayerGradients {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        })
    }

    fn apply_mask(&mut self, mask: &LayerMask) {
        self.w_enc.component_mul_assign(&mask.enc);
        self.w_dec.component_mul_assign(&mask.dec);
    }

    fn is_finite(&self) -> bool {
        self.w_enc.iter().chain(self.w_dec.iter()).all(|v| v.is_finite())
            && self.b_enc.iter().chain(self.b_dec.iter()).all(|v| v.is_finite())
    }
}

impl LayerGradients {
    pub fn masked(mut self, mask: &LayerMask) -> Self {
        self.w_enc.component_mul_assign(&mask.enc);
        self.w_dec.component_mul_assign(&mask.dec);
        self
    }
}

/// Trains one layer by full-batch gradient descent.
///
/// The returned trace holds the loss before every epoch followed by the loss
/// after the final update, so it has `epochs + 1` entries.
pub fn train_layer(
    layer: &SaeLayer,
    batch: &DMatrix<f64>,
    schedule: &Schedule,
    mask: Option<&LayerMask>,
) -> Result<(SaeLayer, Vec<f64>)> {
    layer.hyper.validate()?;
    let mut current = layer.clone();
    if let Some(m) = mask {
        current.apply_mask(m);
    }
    let mut trace = Vec::with_capacity(schedule.epochs + 1);
    let lr = schedule.learning_rate;
    for epoch in 0..schedule.epochs {
        let loss = current.loss(batch)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {loss} at epoch {epoch}")));
        }
        trace.push(loss);
        let mut g = current.gradients(batch)?;
        if let Some(m) = mask {
            g = g.masked(m);
        }
        current.w_enc -= g.w_enc * lr;
        current.b_enc -= g.b_enc * lr;
        current.w_dec -= g.w_dec * lr;
        current.b_dec -= g.b_dec * lr;
        if let Some(m) = mask {
            current.apply_mask(m);
        }
        if !current.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
    }
    let last = current.loss(batch)?;
    if !last.is_finite() {
        return Err(Error::Numerical(format!("non-finite final loss {last}")));
    }
    trace.push(last);
    Ok((current, trace))
}

/// Plain stack of sparse autoencoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dsae {
    pub layers: Vec<SaeLayer>,
}

impl Dsae {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.iter().map(SaeLayer::input_dim).collect();
        if let Some(last) = self.layers.last() {
            dims.push(last.hidden_dim());
        }
        dims
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, SaeLayer::hidden_dim)
    }

    /// Runs a `D x N` batch through every layer.
    pub fn encode_batch(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = batch.clone();
        for layer in &self.layers {
            x = layer.encode(&x)?;
        }
        Ok(x)
    }

    /// Encodes a `T x D` frame matrix into `T x D_out`.
    pub fn encode_frames(&self, frames: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.encode_batch(&frames.transpose())?.transpose())
    }
}

/// Greedy layer-wise training; `frames` is `N x D` with one frame per row.
pub fn train_stack(
    frames: &DMatrix<f64>,
    layer_dims: &[usize],
    hyper: SaeHyper,
    schedule: &Schedule,
) -> Result<Dsae> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid("need at least two dims"));
    }
    if frames.ncols() != layer_dims[0] {
        return Err(Error::Dimension {
            expected: layer_dims[0],
            got: frames.ncols(),
        });
    }
    let mut input = frames.transpose();
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for (l, pair) in layer_dims.windows(2).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed.wrapping_add(l as u64));
        let init = SaeLayer::random(pair[0], pair[1], hyper, &mut rng);
        let (layer, trace) = train_layer(&init, &input, schedule, None)?;
        debug!(
            "layer {l} ({}->{}): loss {:.6} -> {:.6}",
            pair[0],
            pair[1],
            trace[0],
            trace[trace.len() - 1]
        );
        input = layer.encode(&input)?;
        layers.push(layer);
    }
    Ok(Dsae { layers })
}

/// Partition of the parametric-bias layer: input `(x, p)`, hidden `(z, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbhlDims {
    pub x: usize,
    pub p: usize,
    pub z: usize,
    pub s: usize,
}

impl PbhlDims {
    pub fn input(&self) -> usize {
        self.x + self.p
    }

    pub fn hidden(&self) -> usize {
        self.z + self.s
    }

    /// Encoder block `p -> z` and decoder block `z -> p` fixed at zero.
    pub fn mask(&self) -> LayerMask {
        let mut enc = DMatrix::from_element(self.hidden(), self.input(), 1.0);
        enc.view_mut((0, self.x), (self.z, self.p)).fill(0.0);
        let mut dec = DMatrix::from_element(self.input(), self.hidden(), 1.0);
        dec.view_mut((self.x, 0), (self.p, self.z)).fill(0.0);
        LayerMask { enc, dec }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbhlLayer {
    pub layer: SaeLayer,
    pub dims: PbhlDims,
}

impl PbhlLayer {
    pub fn random<R: Rng + ?Sized>(dims: PbhlDims, hyper: SaeHyper, rng: &mut R) -> Self {
        let mut layer = SaeLayer::random(dims.input(), dims.hidden(), hyper, rng);
        layer.apply_mask(&dims.mask());
        PbhlLayer { layer, dims }
    }

    /// Gradients with the structurally absent blocks zeroed.
    pub fn gradients(&self, batch: &DMatrix<f64>) -> Result<LayerGradients> {
        Ok(self.layer.gradients(batch)?.masked(&self.dims.mask()))
    }

    /// Largest magnitude found in the masked blocks.
    pub fn masked_block_max(&self) -> f64 {
        let d = self.dims;
        let enc = self.layer.w_enc.view((0, d.x), (d.z, d.p)).amax();
        let dec = self.layer.w_dec.view((d.x, 0), (d.p, d.z)).amax();
        enc.max(dec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsaePbhl {
    pub stack: Dsae,
    pub pbhl: PbhlLayer,
}

impl DsaePbhl {
    pub fn z_dim(&self) -> usize {
        self.pbhl.dims.z
    }

    /// Full final-layer hidden codes `(z, s)` for `T x D` frames of one
    /// speaker, returned as `T x (D_Z + D_S)`.
    pub fn encode_hidden(&self, frames: &DMatrix<f64>, code: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.pbhl.dims;
        if code.len() != d.p {
            return Err(Error::Dimension {
                expected: d.p,
                got: code.len(),
            });
        }
        let x = self.stack.encode_batch(&frames.transpose())?;
        let mut v = DMatrix::zeros(d.input(), x.ncols());
        v.rows_mut(0, d.x).copy_from(&x);
        for mut col in v.column_iter_mut() {
            for (i, &c) in code.iter().enumerate() {
                col[d.x + i] = c;
            }
        }
        Ok(self.pbhl.layer.encode(&v)?.transpose())
    }

    /// Speaker-independent part `z` of the final hidden layer.
    pub fn encode_z(&self, features: &FeatureSequence, code: &[f64]) -> Result<FeatureSequence> {
        let h = self.encode_hidden(&features.frames, code)?;
        FeatureSequence::new(h.columns(0, self.z_dim()).into_owned(), features.frame_shift)
    }

    /// Encodes every utterance of a corpus with its speaker's code.
    pub fn encode_corpus(&self, corpus: &Corpus) -> Result<Vec<FeatureSequence>> {
        corpus
            .utterances
            .iter()
            .map(|u| self.encode_z(&u.features, &corpus.pb_code(u.speaker)))
            .collect()
    }
}

/// Trains the parametric-bias layer on top of a trained stack.
///
/// `frames` is `N x D` and `codes` is `N x D_P` (the speaker code of each frame).
pub fn train_pbhl(
    stack: &Dsae,
    frames: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    z_dim: usize,
    s_dim: usize,
    hyper: SaeHyper,
    schedule: &Schedule,
) -> Result<DsaePbhl> {
    if frames.nrows() != codes.nrows() {
        return Err(Error::Dimension {
            expected: frames.nrows(),
            got: codes.nrows(),
        });
    }
    let dims = PbhlDims {
        x: stack.output_dim(),
        p: codes.ncols(),
        z: z_dim,
        s: s_dim,
    };
    let x = stack.encode_batch(&frames.transpose())?;
    let mut v = DMatrix::zeros(dims.input(), x.ncols());
    v.rows_mut(0, dims.x).copy_from(&x);
    v.rows_mut(dims.x, dims.p).copy_from(&codes.transpose());

    let seed = schedule.seed.wrapping_add(stack.layers.len() as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = PbhlLayer::random(dims, hyper, &mut rng);
    let (layer, trace) = train_layer(&init.layer, &v, schedule, Some(&dims.mask()))?;
    debug!(
        "pbhl layer: loss {:.6} -> {:.6}",
        trace[0],
        trace[trace.len() - 1]
    );
    Ok(DsaePbhl {
        stack: stack.clone(),
        pbhl: PbhlLayer { layer, dims },
    })
}

/// Stacks corpus frames (`N x D`) with the matching per-frame speaker codes.
pub fn corpus_training_data(corpus: &Corpus) -> (DMatrix<f64>, DMatrix<f64>) {
    let frames = corpus.stacked_frames();
    let width = corpus.pb_width();
    let mut codes = DMatrix::zeros(frames.nrows(), width);
    for (row, spk) in corpus.frame_speakers().into_iter().enumerate() {
        for (c, &b) in corpus.pb_codes[spk].iter().enumerate() {
            codes[(row, c)] = b as f64;
        }
    }
    (frames, codes)
}

// ---- serialization ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatrixDoc {
    pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub(crate) fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix {}x{} has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    w_enc: MatrixDoc,
    b_enc: Vec<f64>,
    w_dec: MatrixDoc,
    b_dec: Vec<f64>,
    hyper: SaeHyper,
}

impl LayerDoc {
    fn from_layer(l: &SaeLayer) -> Self {
        LayerDoc {
            w_enc: MatrixDoc::from_matrix(&l.w_enc),
            b_enc: l.b_enc.as_slice().to_vec(),
            w_dec: MatrixDoc::from_matrix(&l.w_dec),
            b_dec: l.b_dec.as_slice().to_vec(),
            hyper: l.hyper,
        }
    }

    fn to_layer(&self) -> Result<SaeLayer> {
        let layer = SaeLayer {
            w_enc: self.w_enc.to_matrix()?,
            b_enc: DVector::from_vec(self.b_enc.clone()),
            w_dec: self.w_dec.to_matrix()?,
            b_dec: DVector::from_vec(self.b_dec.clone()),
            hyper: self.hyper,
        };
        let (h, v) = (layer.hidden_dim(), layer.input_dim());
        if layer.b_enc.len() != h || layer.w_dec.shape() != (v, h) || layer.b_dec.len() != v {
            return Err(Error::Format("inconsistent layer shapes".into()));
        }
        Ok(layer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pbhl_dims: Option<PbhlDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pbhl: Option<LayerDoc>,
}

/// Either kind of trained encoder, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderModel {
    Dsae(Dsae),
    DsaePbhl(DsaePbhl),
}

impl EncoderModel {
    fn to_doc(&self) -> ModelDoc {
        let (stack, pbhl) = match self {
            EncoderModel::Dsae(d) => (d, None),
            EncoderModel::DsaePbhl(m) => (&m.stack, Some(&m.pbhl)),
        };
        ModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layer_dims: stack.layer_dims(),
            layers: stack.layers.iter().map(LayerDoc::from_layer).collect(),
            pbhl_dims: pbhl.map(|p| p.dims),
            pbhl: pbhl.map(|p| LayerDoc::from_layer(&p.layer)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file (format '{}')", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model version {} unsupported (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        let stack = Dsae {
            layers: doc.layers.iter().map(LayerDoc::to_layer).collect::<Result<_>>()?,
        };
        if stack.layer_dims() != doc.layer_dims {
            return Err(Error::Format("layer_dims disagree with layer shapes".into()));
        }
        match (doc.pbhl_dims, doc.pbhl) {
            (None, None) => Ok(EncoderModel::Dsae(stack)),
            (Some(dims), Some(layer)) => {
                let layer = layer.to_layer()?;
                if layer.input_dim() != dims.input() || layer.hidden_dim() != dims.hidden() {
                    return Err(Error::Format("pbhl dims disagree with layer shape".into()));
                }
                Ok(EncoderModel::DsaePbhl(DsaePbhl {
                    stack,
                    pbhl: PbhlLayer { layer, dims },
                }))
            }
            _ => Err(Error::Format("incomplete pbhl section".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
