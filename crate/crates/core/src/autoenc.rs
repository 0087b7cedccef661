//! Feed-forward autoencoder with an `n`-bit quantized latent.
//!
//! The encoder maps pixels to pre-activations `ζ`; the quantizer emits spins
//! `s = sign(tanh ζ)` and the backward pass treats the corrective noise
//! `sign(tanh ζ) - tanh ζ` as a constant, so `∂s/∂ζ = sech² ζ`. Training
//! pushes each latent through a channel, keeps the flip pattern
//! `ε = z' ⊕ z` fixed, and decodes `s' ⊙ (1 - 2ε)`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::designspace::{Design, Objective};
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::lattice::InteractionGraph;
use crate::mcmc::Channel;
use crate::metrics::default_distance_scale;

/// Tag stored with persisted models.
pub const QUANTIZER_TAG: &str = "tanh-sign-st";
/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 64;
/// Probability clamp for the reconstruction loss.
pub const BCE_CLAMP: f64 = 1e-7;

/// Affine map `y = W x + b`, `W` row-major with one row per output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Layer { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn zeros_like(&self) -> Self {
        Layer { inputs: self.inputs, outputs: self.outputs, weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.outputs] }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// Encoder and decoder stacks. Hidden layers use `tanh`; the encoder ends
/// in linear `ζ` and the decoder in per-pixel logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    height: usize,
    width: usize,
    latent_n: usize,
    hidden: Vec<usize>,
    encoder: Vec<Layer>,
    decoder: Vec<Layer>,
}

/// Glorot-uniform weights and zero biases for `pixels → hidden… → latent_n`
/// and the mirrored decoder.
pub fn init_model(height: usize, width: usize, hidden: &[usize], latent_n: usize, seed: u64) -> Result<AutoencoderModel> {
    if height == 0 || width == 0 || latent_n == 0 || hidden.contains(&0) {
        return Err(Error::arg("layer widths must be positive"));
    }
    if latent_n > crate::bits::MAX_BITS {
        return Err(Error::Capacity { what: "latent size", size: latent_n, cap: crate::bits::MAX_BITS });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![height * width];
    dims.extend_from_slice(hidden);
    dims.push(latent_n);
    let encoder = dims.windows(2).map(|w| Layer::glorot(w[0], w[1], &mut rng)).collect();
    dims.reverse();
    let decoder = dims.windows(2).map(|w| Layer::glorot(w[0], w[1], &mut rng)).collect();
    Ok(AutoencoderModel { height, width, latent_n, hidden: hidden.to_vec(), encoder, decoder })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    quantizer: String,
    #[serde(flatten)]
    model: AutoencoderModel,
}

impl AutoencoderModel {
    pub fn latent_n(&self) -> usize {
        self.latent_n
    }

    /// `(height, width)` of the designs.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn encoder(&self) -> &[Layer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[Layer] {
        &self.decoder
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder.iter_mut().chain(&mut self.decoder)
    }

    fn zeros_like(&self) -> Self {
        AutoencoderModel {
            encoder: self.encoder.iter().map(Layer::zeros_like).collect(),
            decoder: self.decoder.iter().map(Layer::zeros_like).collect(),
            hidden: self.hidden.clone(),
            ..*self
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameters: per layer, encoder first, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::arg(format!("{} parameters for a model with {}", values.len(), self.param_count())));
        }
        let mut rest = values;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::arg(format!("model shape: {m}")));
        if self.height == 0 || self.width == 0 || self.latent_n == 0 {
            return bad("zero dimension".into());
        }
        let mut dims = vec![self.pixels()];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.latent_n);
        for (name, stack, dims) in [
            ("encoder", &self.encoder, dims.clone()),
            ("decoder", &self.decoder, dims.iter().rev().copied().collect()),
        ] {
            if stack.len() + 1 != dims.len() {
                return bad(format!("{name} has {} layers, expected {}", stack.len(), dims.len() - 1));
            }
            for (k, (l, w)) in stack.iter().zip(dims.windows(2)).enumerate() {
                if l.inputs != w[0] || l.outputs != w[1] {
                    return bad(format!("{name} layer {k} is {}x{}, expected {}x{}", l.outputs, l.inputs, w[1], w[0]));
                }
                if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                    return bad(format!("{name} layer {k} array lengths disagree with its shape"));
                }
                if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                    return bad(format!("{name} layer {k} has non-finite weights"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile { quantizer: QUANTIZER_TAG.into(), model: self.clone() };
        serde_json::to_string_pretty(&file).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::arg(format!("model file: {e}")))?;
        if file.quantizer != QUANTIZER_TAG {
            return Err(Error::arg(format!("unsupported quantizer {:?}", file.quantizer)));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data { path: path.display().to_string(), message: e.to_string() })?;
        AutoencoderModel::from_json(&text)
            .map_err(|e| Error::Data { path: path.display().to_string(), message: e.to_string() })
    }
}

/// Activations of every layer boundary; `acts[0]` is the input, hidden
/// entries are post-`tanh`, the last is the linear output.
fn mlp_forward(layers: &[Layer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for (k, l) in layers.iter().enumerate() {
        let mut y = l.forward(&acts[k]);
        if k + 1 < layers.len() {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(y);
    }
    acts
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the network input.
fn mlp_backward(layers: &[Layer], acts: &[Vec<f64>], grad_out: Vec<f64>, grads: &mut [Layer]) -> Vec<f64> {
    let mut delta = grad_out;
    for k in (0..layers.len()).rev() {
        let (l, g, input) = (&layers[k], &mut grads[k], &acts[k]);
        let mut gin = vec![0.0; l.inputs];
        for (o, &d) in delta.iter().enumerate() {
            g.bias[o] += d;
            let row = o * l.inputs;
            for i in 0..l.inputs {
                g.weights[row + i] += d * input[i];
                gin[i] += d * l.weights[row + i];
            }
        }
        if k > 0 {
            for (gi, a) in gin.iter_mut().zip(input) {
                *gi *= 1.0 - a * a;
            }
        }
        delta = gin;
    }
    delta
}

fn check_pixels(model: &AutoencoderModel, n: usize) -> Result<()> {
    if n != model.pixels() {
        return Err(Error::arg(format!("design has {n} pixels, model expects {}", model.pixels())));
    }
    Ok(())
}

/// Latent pre-activations `ζ`.
pub fn encode(model: &AutoencoderModel, design: &Design) -> Result<Vec<f64>> {
    check_pixels(model, design.len())?;
    Ok(mlp_forward(&model.encoder, &design.to_f64()).pop().expect("non-empty stack"))
}

/// Quantizer output; `spin == relaxed + noise` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizerOutput {
    pub spin: Vec<f64>,
    pub relaxed: Vec<f64>,
    pub noise: Vec<f64>,
}

/// `s = sign(tanh ζ)` with `sign(0) = +1`.
pub fn quantize(zeta: &[f64]) -> QuantizerOutput {
    let relaxed: Vec<f64> = zeta.iter().map(|z| z.tanh()).collect();
    let noise: Vec<f64> = relaxed.iter().map(|&r| if r >= 0.0 { 1.0 - r } else { -1.0 - r }).collect();
    let spin = relaxed.iter().zip(&noise).map(|(r, e)| r + e).collect();
    QuantizerOutput { spin, relaxed, noise }
}

/// Straight-through derivative `∂s/∂ζ = sech² ζ`.
pub fn quantizer_gradient(zeta: &[f64]) -> Vec<f64> {
    zeta.iter().map(|z| 1.0 - z.tanh().powi(2)).collect()
}

/// `z = (s + 1) / 2`; positive spins map to 1.
pub fn spin_to_binary(spins: &[f64]) -> Result<BitString> {
    BitString::from_bools(&spins.iter().map(|&s| s > 0.0).collect::<Vec<_>>())
}

pub fn binary_to_spin(z: &BitString) -> Vec<f64> {
    z.to_spins()
}

/// Quantized latent of a design.
pub fn encode_latent(model: &AutoencoderModel, design: &Design) -> Result<BitString> {
    spin_to_binary(&quantize(&encode(model, design)?).spin)
}

fn sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^l)` without overflow.
fn softplus(l: f64) -> f64 {
    l.max(0.0) + (-l.abs()).exp().ln_1p()
}

fn decode_logits(model: &AutoencoderModel, spins: &[f64]) -> Vec<f64> {
    mlp_forward(&model.decoder, spins).pop().expect("non-empty stack")
}

/// Pixel probabilities, kept strictly inside `(0, 1)`.
pub fn decode(model: &AutoencoderModel, z: &BitString) -> Result<Vec<f64>> {
    if z.len() != model.latent_n {
        return Err(Error::arg(format!("latent has {} bits, model expects {}", z.len(), model.latent_n)));
    }
    Ok(decode_logits(model, &z.to_spins())
        .into_iter()
        .map(|l| sigmoid(l).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
        .collect())
}

/// Decoded design thresholded at 0.5.
pub fn decode_design(model: &AutoencoderModel, z: &BitString) -> Result<Design> {
    Design::from_probabilities(model.height, model.width, &decode(model, z)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reconstruction {
    /// Mean binary cross-entropy per pixel, nats.
    pub nats: f64,
    /// Some probability lay outside `[1e-7, 1 - 1e-7]` and was clamped.
    pub clamped: bool,
}

pub fn reconstruction_loss(design: &Design, x_hat: &[f64]) -> Result<Reconstruction> {
    if x_hat.len() != design.len() {
        return Err(Error::arg("reconstruction shapes differ"));
    }
    let mut clamped = false;
    let mut total = 0.0;
    for (&c, &x) in design.pixels().iter().zip(x_hat) {
        let xc = x.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        clamped |= xc != x;
        total -= if c == 1 { xc.ln() } else { (1.0 - xc).ln() };
    }
    Ok(Reconstruction { nats: total / design.len() as f64, clamped })
}

/// Mean over decoded samples of `|C_z - λ C_χ|²`.
pub fn energy_match_loss(c_z: f64, c_chi: &[f64], lambda: f64) -> Result<f64> {
    if c_chi.is_empty() {
        return Err(Error::arg("energy matching needs at least one decoded sample"));
    }
    Ok(c_chi.iter().map(|c| (c_z - lambda * c).powi(2)).sum::<f64>() / c_chi.len() as f64)
}

/// Number of blockade violations in `z`.
pub fn is_penalty_loss(graph: &InteractionGraph, z: &BitString) -> Result<f64> {
    Ok(graph.violation_count(z)? as f64)
}

/// Design-space distance `d_X` on relaxed pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelDistance {
    #[default]
    MeanAbsolute,
    MeanSquared,
}

impl PixelDistance {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let p = a.len() as f64;
        match self {
            PixelDistance::MeanAbsolute => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / p,
            PixelDistance::MeanSquared => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / p,
        }
    }

    /// `∂d/∂a`; the derivative with respect to `b` is its negation.
    fn gradient(self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let p = a.len() as f64;
        a.iter()
            .zip(b)
            .map(|(x, y)| match self {
                PixelDistance::MeanAbsolute => sgn(x - y) / p,
                PixelDistance::MeanSquared => 2.0 * (x - y) / p,
            })
            .collect()
    }
}

/// Sign with `sgn(0) = 0`.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatch {
    pub loss: f64,
    /// Subgradient with respect to each decoded pixel vector.
    pub grad: Vec<Vec<f64>>,
}

/// Mean over all unordered pairs of `|d_Z(z_i, z_j) - λ_d d_X(x_i, x_j)|`.
pub fn distance_match_loss(
    latents: &[BitString],
    decoded: &[Vec<f64>],
    d_z: impl Fn(&BitString, &BitString) -> f64,
    d_x: PixelDistance,
    lambda_d: f64,
) -> Result<DistanceMatch> {
    let m = latents.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    distance_match_loss_pairs(&pairs, latents, decoded, d_z, d_x, lambda_d)
}

/// [`distance_match_loss`] over an explicit pair list.
pub fn distance_match_loss_pairs(
    pairs: &[(usize, usize)],
    latents: &[BitString],
    decoded: &[Vec<f64>],
    d_z: impl Fn(&BitString, &BitString) -> f64,
    d_x: PixelDistance,
    lambda_d: f64,
) -> Result<DistanceMatch> {
    if latents.len() < 2 || pairs.is_empty() {
        return Err(Error::arg("distance matching needs at least two items"));
    }
    if latents.len() != decoded.len() {
        return Err(Error::arg("latent and decoded counts differ"));
    }
    let p = decoded[0].len();
    if decoded.iter().any(|x| x.len() != p) {
        return Err(Error::arg("decoded designs differ in size"));
    }
    let mut grad = vec![vec![0.0; p]; decoded.len()];
    let mut loss = 0.0;
    let scale = 1.0 / pairs.len() as f64;
    for &(i, j) in pairs {
        if i >= latents.len() || j >= latents.len() || i == j {
            return Err(Error::arg(format!("invalid pair ({i}, {j})")));
        }
        let r = d_z(&latents[i], &latents[j]) - lambda_d * d_x.distance(&decoded[i], &decoded[j]);
        loss += r.abs() * scale;
        let s = sgn(r);
        if s != 0.0 {
            let g = d_x.gradient(&decoded[i], &decoded[j]);
            for (k, gk) in g.iter().enumerate() {
                grad[i][k] -= s * lambda_d * gk * scale;
                grad[j][k] += s * lambda_d * gk * scale;
            }
        }
    }
    Ok(DistanceMatch { loss, grad })
}

/// Training hyperparameters. `depth` and `tau` describe the channel the
/// caller builds; `train_epoch` takes the channel as given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Zero means full batch.
    pub batch_size: usize,
    /// Energy-match normaliser; `None` estimates it on the first batch.
    pub lambda: Option<f64>,
    /// Distance scale; `None` uses the per-batch mean-distance ratio.
    pub lambda_d: Option<f64>,
    pub w_rec: f64,
    pub w_energy: f64,
    pub w_is: f64,
    pub w_dist: f64,
    pub depth: usize,
    pub tau: f64,
    pub seed: u64,
    pub noise_draws: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 100,
            batch_size: 0,
            lambda: None,
            lambda_d: None,
            w_rec: 1.0,
            w_energy: 1.0,
            w_is: 0.0,
            w_dist: 0.0,
            depth: 3,
            tau: 1.0,
            seed: 0,
            noise_draws: 1,
            hidden: vec![DEFAULT_HIDDEN],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_rec, self.w_energy, self.w_is, self.w_dist];
        if w.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::arg("loss weights must be finite and non-negative"));
        }
        // a zero rate is allowed so an epoch can be run as a pure evaluation
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::arg(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.noise_draws == 0 {
            return Err(Error::arg("noise_draws must be at least 1"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::arg(format!("temperature must be positive, got {}", self.tau)));
        }
        if matches!(self.lambda, Some(l) if !l.is_finite()) || matches!(self.lambda_d, Some(l) if !(l > 0.0)) {
            return Err(Error::arg("lambda must be finite and lambda_d positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::arg("hidden widths must be positive"));
        }
        Ok(())
    }

    fn weights(&self) -> [f64; 4] {
        [self.w_rec, self.w_energy, self.w_is, self.w_dist]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub energy_match: f64,
    pub is_penalty: f64,
    pub distance_match: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn scaled_add(&mut self, other: &LossBreakdown, s: f64) {
        self.reconstruction += s * other.reconstruction;
        self.energy_match += s * other.energy_match;
        self.is_penalty += s * other.is_penalty;
        self.distance_match += s * other.distance_match;
        self.total += s * other.total;
    }
}

/// Per-sample noise. `None` entries are filled from the current forward
/// pass, after which the sample is fully frozen.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleNoise {
    /// Corrective quantizer noise `ε_q`.
    pub quant: Option<Vec<f64>>,
    /// Channel flip patterns `ε`, one per noise draw.
    pub flips: Vec<BitString>,
    /// Straight-through offsets `bin(x̂) - x̂`, one per draw.
    pub binarize: Option<Vec<Vec<f64>>>,
}

/// Everything a batch loss needs besides the model and the data.
#[derive(Clone, Copy)]
pub struct LossTerms<'a> {
    pub energy: &'a dyn Energy,
    pub objective: &'a Objective,
    pub graph: Option<&'a InteractionGraph>,
    /// `[w_rec, w_energy, w_is, w_dist]`.
    pub weights: [f64; 4],
    pub lambda: Option<f64>,
    pub lambda_d: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub loss: LossBreakdown,
    /// Flat gradient in [`AutoencoderModel::params`] order.
    pub grad: Vec<f64>,
    /// `λ` used for energy matching (1 when that term is off).
    pub lambda: f64,
    /// `λ_d` used for distance matching (1 when that term is off).
    pub lambda_d: f64,
}

struct SampleForward {
    enc: Vec<Vec<f64>>,
    relaxed: Vec<f64>,
    spin: Vec<f64>,
    latent: BitString,
}

struct ViewForward {
    sample: usize,
    mask: Vec<f64>,
    dec: Vec<Vec<f64>>,
    x_hat: Vec<f64>,
    z: BitString,
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, U>(items: &[T], f: impl Fn(usize, &T) -> U) -> Vec<U> {
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Loss and straight-through gradient of one batch under fixed noise.
///
/// Each design contributes one view per flip pattern; reconstruction and
/// energy matching average over views, the IS penalty over designs and
/// distance matching over unordered view pairs. Terms with zero weight are
/// skipped and reported as 0.
pub fn batch_loss(
    model: &AutoencoderModel,
    batch: &[&Design],
    noise: &mut [SampleNoise],
    terms: &LossTerms<'_>,
) -> Result<BatchOutput> {
    if batch.is_empty() || batch.len() != noise.len() {
        return Err(Error::arg("batch and noise must be non-empty and equally long"));
    }
    let [w_rec, w_energy, w_is, w_dist] = terms.weights;
    let n = model.latent_n;
    for (d, nz) in batch.iter().zip(noise.iter()) {
        check_pixels(model, d.len())?;
        if nz.flips.is_empty() || nz.flips.iter().any(|f| f.len() != n) {
            return Err(Error::arg("each sample needs at least one flip pattern of latent length"));
        }
        if nz.quant.as_ref().is_some_and(|q| q.len() != n)
            || nz.binarize.as_ref().is_some_and(|b| b.len() != nz.flips.len())
        {
            return Err(Error::arg("frozen noise does not match the batch"));
        }
    }
    if w_is > 0.0 && terms.graph.is_none_or(|g| g.n() != n) {
        return Err(Error::arg("IS penalty needs an interaction graph on the latent sites"));
    }
    if w_energy > 0.0 && terms.energy.n() != n {
        return Err(Error::arg("native energy size differs from the latent size"));
    }

    // forward: encoder and quantizer per design
    let samples = par_map(batch, |_, d| {
        let enc = mlp_forward(&model.encoder, &d.to_f64());
        let relaxed: Vec<f64> = enc.last().expect("non-empty stack").iter().map(|z| z.tanh()).collect();
        (enc, relaxed)
    });
    let samples: Vec<SampleForward> = samples
        .into_iter()
        .zip(noise.iter_mut())
        .map(|((enc, relaxed), nz)| {
            let q = nz.quant.get_or_insert_with(|| quantize(enc.last().expect("non-empty stack")).noise);
            let spin: Vec<f64> = relaxed.iter().zip(q.iter()).map(|(r, e)| r + e).collect();
            let latent = spin_to_binary(&spin)?;
            Ok(SampleForward { enc, relaxed, spin, latent })
        })
        .collect::<Result<_>>()?;

    // forward: decoder per (design, flip pattern)
    let mut view_index = Vec::new();
    for (k, nz) in noise.iter().enumerate() {
        for d in 0..nz.flips.len() {
            view_index.push((k, d));
        }
    }
    let views: Vec<ViewForward> = par_map(&view_index, |_, &(k, d)| {
        let s = &samples[k];
        let flip = noise[k].flips[d];
        let mask: Vec<f64> = (0..n).map(|i| if flip.get(i) { -1.0 } else { 1.0 }).collect();
        let input: Vec<f64> = s.spin.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let dec = mlp_forward(&model.decoder, &input);
        let x_hat = dec.last().expect("non-empty stack").iter().map(|&l| sigmoid(l)).collect();
        let z = s.latent.xor(&flip).expect("lengths checked");
        ViewForward { sample: k, mask, dec, x_hat, z }
    });
    let nv = views.len() as f64;
    let nb = batch.len() as f64;
    let pixels = model.pixels() as f64;

    let mut loss = LossBreakdown::default();
    // pixel-space gradients per view, before the sigmoid
    let mut g_pixel: Vec<Vec<f64>> = vec![vec![0.0; model.pixels()]; views.len()];
    // gradients with respect to the relaxed z = (s + 1) / 2, per view
    let mut g_z: Vec<Vec<f64>> = vec![vec![0.0; n]; views.len()];
    let mut g_zprime: Vec<Vec<f64>> = vec![vec![0.0; n]; batch.len()];
    let mut g_logit: Vec<Vec<f64>> = vec![vec![0.0; model.pixels()]; views.len()];

    if w_rec > 0.0 {
        for (v, view) in views.iter().enumerate() {
            let chi = batch[view.sample].pixels();
            let logits = view.dec.last().expect("non-empty stack");
            let mut bce = 0.0;
            for (p, (&l, &c)) in logits.iter().zip(chi).enumerate() {
                let c = c as f64;
                bce += softplus(l) - c * l;
                g_logit[v][p] += w_rec * (sigmoid(l) - c) / (pixels * nv);
            }
            loss.reconstruction += bce / pixels / nv;
        }
    }

    let mut lambda = 1.0;
    if w_energy > 0.0 {
        let mut offsets = Vec::with_capacity(views.len());
        let mut c_z = Vec::with_capacity(views.len());
        let mut c_chi = Vec::with_capacity(views.len());
        let mut draw = vec![0usize; batch.len()];
        for view in &views {
            let k = view.sample;
            let frozen = noise[k].binarize.get_or_insert_with(Vec::new);
            if frozen.len() <= draw[k] {
                frozen.push(view.x_hat.iter().map(|&x| if x >= 0.5 { 1.0 - x } else { -x }).collect());
            }
            let off = frozen[draw[k]].clone();
            draw[k] += 1;
            let relaxed_z: Vec<f64> =
                samples[k].spin.iter().zip(&view.mask).map(|(s, m)| (s * m + 1.0) / 2.0).collect();
            c_z.push(terms.energy.relaxed(&relaxed_z).unwrap_or_else(|| (terms.energy.energy(&view.z), vec![0.0; n])));
            let x_st: Vec<f64> = view.x_hat.iter().zip(&off).map(|(x, o)| x + o).collect();
            let chi = match terms.objective.evaluate_relaxed(&x_st)? {
                Some(v) => v,
                None => {
                    let (h, w) = model.shape();
                    let d = Design::from_probabilities(h, w, &x_st)?;
                    (terms.objective.evaluate(&d)?, vec![0.0; x_st.len()])
                }
            };
            c_chi.push(chi);
            offsets.push(off);
        }
        lambda = match terms.lambda {
            Some(l) => l,
            None => {
                let mz = c_z.iter().map(|c| c.0.abs()).sum::<f64>();
                let mx = c_chi.iter().map(|c| c.0.abs()).sum::<f64>();
                if mx > 0.0 && mz > 0.0 {
                    mz / mx
                } else {
                    1.0
                }
            }
        };
        for (v, ((cz, gz), (cx, gx))) in c_z.iter().zip(&c_chi).enumerate() {
            let r = cz - lambda * cx;
            loss.energy_match += r * r / nv;
            let s = 2.0 * r * w_energy / nv;
            for (g, d) in g_z[v].iter_mut().zip(gz) {
                *g += s * d;
            }
            for (g, d) in g_pixel[v].iter_mut().zip(gx) {
                *g -= s * lambda * d;
            }
        }
    }

    if w_is > 0.0 {
        let graph = terms.graph.expect("checked above");
        for (k, s) in samples.iter().enumerate() {
            let zp: Vec<f64> = s.spin.iter().map(|s| (s + 1.0) / 2.0).collect();
            let (val, grad) = graph.relaxed_violation(&zp)?;
            loss.is_penalty += val / nb;
            for (g, d) in g_zprime[k].iter_mut().zip(&grad) {
                *g += w_is * d / nb;
            }
        }
    }

    let mut lambda_d = 1.0;
    if w_dist > 0.0 && views.len() >= 2 {
        let latents: Vec<BitString> = views.iter().map(|v| v.z).collect();
        let decoded: Vec<Vec<f64>> = views.iter().map(|v| v.x_hat.clone()).collect();
        let d_x = PixelDistance::MeanAbsolute;
        lambda_d = match terms.lambda_d {
            Some(l) => l,
            None => {
                let mut dz = Vec::new();
                let mut dx = Vec::new();
                for i in 0..views.len() {
                    for j in i + 1..views.len() {
                        dz.push(latents[i].hamming(&latents[j])? as f64);
                        dx.push(d_x.distance(&decoded[i], &decoded[j]));
                    }
                }
                default_distance_scale(&dz, &dx).unwrap_or(1.0)
            }
        };
        let dm = distance_match_loss(&latents, &decoded, hamming_f64, d_x, lambda_d)?;
        loss.distance_match = dm.loss;
        for (g, d) in g_pixel.iter_mut().zip(&dm.grad) {
            for (a, b) in g.iter_mut().zip(d) {
                *a += w_dist * b;
            }
        }
    }

    loss.total = w_rec * loss.reconstruction
        + w_energy * loss.energy_match
        + w_is * loss.is_penalty
        + w_dist * loss.distance_match;

    // backward: decoder per view, then encoder per design
    let view_grads = par_map(&views, |v, view| {
        let mut grads = model.zeros_like();
        let mut gl = g_logit[v].clone();
        for ((g, &gp), &x) in gl.iter_mut().zip(&g_pixel[v]).zip(&view.x_hat) {
            *g += gp * x * (1.0 - x);
        }
        let mut gs = mlp_backward(&model.decoder, &view.dec, gl, &mut grads.decoder);
        for (g, d) in gs.iter_mut().zip(&g_z[v]) {
            *g += 0.5 * d;
        }
        for (g, m) in gs.iter_mut().zip(&view.mask) {
            *g *= m;
        }
        (grads, gs)
    });
    let mut g_spin = g_zprime.iter().map(|g| g.iter().map(|d| 0.5 * d).collect::<Vec<f64>>()).collect::<Vec<_>>();
    let mut total = model.zeros_like();
    for (view, (grads, gs)) in views.iter().zip(&view_grads) {
        add_into(&mut total, grads);
        for (a, b) in g_spin[view.sample].iter_mut().zip(gs) {
            *a += b;
        }
    }
    let sample_grads = par_map(&samples, |k, s| {
        let mut grads = model.zeros_like();
        let g_zeta: Vec<f64> = g_spin[k].iter().zip(&s.relaxed).map(|(g, r)| g * (1.0 - r * r)).collect();
        mlp_backward(&model.encoder, &s.enc, g_zeta, &mut grads.encoder);
        grads
    });
    for g in &sample_grads {
        add_into(&mut total, g);
    }
    g_spin.clear();
    Ok(BatchOutput { loss, grad: total.params(), lambda, lambda_d })
}

fn hamming_f64(a: &BitString, b: &BitString) -> f64 {
    (a.raw() ^ b.raw()).count_ones() as f64
}

fn add_into(acc: &mut AutoencoderModel, g: &AutoencoderModel) {
    for (a, b) in acc.layers_mut().zip(g.layers()) {
        a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
        a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
    }
}

/// Model plus optimizer state across epochs.
#[derive(Clone, Debug)]
pub struct Trainer {
    model: AutoencoderModel,
    velocity: Vec<f64>,
    cfg: TrainConfig,
    lambda: Option<f64>,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: AutoencoderModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let velocity = vec![0.0; model.param_count()];
        Ok(Trainer { lambda: cfg.lambda, model, velocity, cfg, epoch: 0 })
    }

    pub fn model(&self) -> &AutoencoderModel {
        &self.model
    }

    pub fn into_model(self) -> AutoencoderModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// The energy-match normaliser, once fixed.
    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over `dataset` in shuffled batches with a momentum step
    /// per batch. Returns sample-weighted mean losses.
    pub fn train_epoch<R: RngCore>(
        &mut self,
        dataset: &[Design],
        channel: &Channel,
        objective: &Objective,
        graph: Option<&InteractionGraph>,
        rng: &mut R,
    ) -> Result<LossBreakdown> {
        if dataset.is_empty() {
            return Err(Error::arg("training needs a non-empty dataset"));
        }
        if channel.n() != self.model.latent_n {
            return Err(Error::arg(format!("channel has {} bits, model latent {}", channel.n(), self.model.latent_n)));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(rng);
        let size = if self.cfg.batch_size == 0 { dataset.len() } else { self.cfg.batch_size };
        let mut epoch_loss = LossBreakdown::default();
        for (b, idx) in order.chunks(size).enumerate() {
            let batch: Vec<&Design> = idx.iter().map(|&i| &dataset[i]).collect();
            let mut noise = Vec::with_capacity(batch.len());
            for d in &batch {
                let z_prime = encode_latent(&self.model, d)?;
                let mut flips = Vec::with_capacity(self.cfg.noise_draws);
                for _ in 0..self.cfg.noise_draws {
                    let z = channel.apply(&z_prime, rng)?;
                    flips.push(z_prime.xor(&z)?);
                }
                noise.push(SampleNoise { quant: None, flips, binarize: None });
            }
            let terms = LossTerms {
                energy: channel.energy().as_ref(),
                objective,
                graph,
                weights: self.cfg.weights(),
                lambda: self.lambda,
                lambda_d: self.cfg.lambda_d,
            };
            let out = batch_loss(&self.model, &batch, &mut noise, &terms)?;
            if self.cfg.w_energy > 0.0 && self.lambda.is_none() {
                self.lambda = Some(out.lambda);
            }
            if !out.loss.total.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { batch: b, message: format!("non-finite loss {}", out.loss.total) });
            }
            self.step(&out.grad)?;
            epoch_loss.scaled_add(&out.loss, batch.len() as f64 / dataset.len() as f64);
        }
        self.epoch += 1;
        Ok(epoch_loss)
    }

    /// `v ← μ v + g`, `w ← w - η v`.
    fn step(&mut self, grad: &[f64]) -> Result<()> {
        let mut params = self.model.params();
        for ((w, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.cfg.momentum * *v + g;
            *w -= self.cfg.learning_rate * *v;
        }
        self.model.set_params(&params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::QuadraticEnergy;
    use crate::lattice::{build_king_subgraph, unit_disk_graph, Defects};
    use crate::mcmc::Sampler;
    use std::sync::Arc;

    fn random_designs(count: usize, h: usize, w: usize, seed: u64) -> Vec<Design> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| Design::new(h, w, (0..h * w).map(|_| rng.random_range(0..2)).collect()).unwrap()).collect()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_model(4, 4, &[8], 3, 5).unwrap();
        assert_eq!(a, init_model(4, 4, &[8], 3, 5).unwrap());
        assert_ne!(a, init_model(4, 4, &[8], 3, 6).unwrap());
        assert_eq!(a.param_count(), 16 * 8 + 8 + 8 * 3 + 3 + 3 * 8 + 8 + 8 * 16 + 16);
        assert!(init_model(4, 4, &[0], 3, 5).is_err());
        assert!(init_model(4, 4, &[8], 0, 5).is_err());
        let zero = Design::new(4, 4, vec![0; 16]).unwrap();
        let zeta = encode(&a, &zero).unwrap();
        assert_eq!(zeta.len(), 3);
        let x = decode(&a, &encode_latent(&a, &zero).unwrap()).unwrap();
        assert!(x.iter().all(|&p| p > 0.0 && p < 1.0));
        let twelve = init_model(8, 8, &[DEFAULT_HIDDEN], 12, 0).unwrap();
        assert_eq!(twelve.latent_n(), 12);
    }

    #[test]
    fn quantizer_values() {
        let q = quantize(&[0.3, -2.0, 0.0]);
        assert_eq!(q.spin, vec![1.0, -1.0, 1.0]);
        assert!((q.relaxed[0] - 0.29131).abs() < 5e-6);
        assert!((q.noise[0] - 0.70869).abs() < 5e-6);
        for i in 0..3 {
            assert_eq!(q.spin[i], q.relaxed[i] + q.noise[i]);
        }
        let g = quantizer_gradient(&[0.3])[0];
        assert!((g - 0.91513).abs() < 1e-5);
        let h = 1e-6;
        let fd = ((0.3f64 + h).tanh() - (0.3f64 - h).tanh()) / (2.0 * h);
        assert!((fd - g).abs() < 1e-6);
    }

    #[test]
    fn spin_binary_round_trip() {
        assert_eq!(spin_to_binary(&[-1.0, 1.0]).unwrap().to_vec(), vec![0, 1]);
        assert_eq!(spin_to_binary(&[-1.0; 4]).unwrap(), BitString::zeros(4));
        for z in BitString::all(5) {
            assert_eq!(spin_to_binary(&binary_to_spin(&z)).unwrap(), z);
        }
    }

    #[test]
    fn reconstruction_examples() {
        let d = Design::new(1, 4, vec![1, 0, 1, 0]).unwrap();
        let r = reconstruction_loss(&d, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(r.clamped && r.nats < 2e-7);
        let r = reconstruction_loss(&d, &[0.5; 4]).unwrap();
        assert!(!r.clamped && (r.nats - 2f64.ln()).abs() < 1e-15);
        let far = reconstruction_loss(&d, &[0.4, 0.5, 0.5, 0.5]).unwrap().nats;
        let near = reconstruction_loss(&d, &[0.6, 0.5, 0.5, 0.5]).unwrap().nats;
        assert!(near < r.nats && r.nats < far);
    }

    #[test]
    fn energy_match_examples() {
        assert_eq!(energy_match_loss(2.0, &[1.0, 1.0], 2.0).unwrap(), 0.0);
        assert_eq!(energy_match_loss(1.0, &[0.0, 2.0], 1.0).unwrap(), 1.0);
        let a = energy_match_loss(0.3, &[0.1, 0.7], 1.5).unwrap();
        let b = energy_match_loss(0.9, &[0.3, 2.1], 1.5).unwrap();
        assert!((b - 9.0 * a).abs() < 1e-14);
        assert!(energy_match_loss(1.0, &[], 1.0).is_err());
    }

    #[test]
    fn distance_match_examples() {
        let z = [BitString::zeros(3); 3];
        let x = vec![vec![0.2, 0.4]; 3];
        let dm = distance_match_loss(&z, &x, hamming_f64, PixelDistance::MeanAbsolute, 1.0).unwrap();
        assert_eq!(dm.loss, 0.0);
        let z = [BitString::zeros(2), BitString::from_index(2, 1), BitString::from_index(2, 0)];
        let x = vec![vec![0.0], vec![0.8], vec![0.4]];
        // residuals: (0,1) 1 - 0.8 = +0.2, (0,2) 0 - 0.4 = -0.4
        let dm = distance_match_loss_pairs(&[(0, 1), (0, 2)], &z, &x, hamming_f64, PixelDistance::MeanAbsolute, 1.0)
            .unwrap();
        assert!((dm.loss - 0.3).abs() < 1e-12);
        assert!(distance_match_loss(&z[..1], &x[..1], hamming_f64, PixelDistance::MeanAbsolute, 1.0).is_err());
    }

    #[test]
    fn distance_subgradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<BitString> = (0..4).map(|_| BitString::new(6, rng.random_range(0..64)).unwrap()).collect();
        let x: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        for d_x in [PixelDistance::MeanAbsolute, PixelDistance::MeanSquared] {
            let dm = distance_match_loss(&z, &x, hamming_f64, d_x, 7.0).unwrap();
            for i in 0..4 {
                for p in 0..5 {
                    let h = 1e-7;
                    let mut xp = x.clone();
                    xp[i][p] += h;
                    let mut xm = x.clone();
                    xm[i][p] -= h;
                    let fp = distance_match_loss(&z, &xp, hamming_f64, d_x, 7.0).unwrap().loss;
                    let fm = distance_match_loss(&z, &xm, hamming_f64, d_x, 7.0).unwrap().loss;
                    let fd = (fp - fm) / (2.0 * h);
                    let g = dm.grad[i][p];
                    assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "{d_x:?} {i} {p}: {fd} vs {g}");
                }
            }
        }
    }

    struct Fixture {
        model: AutoencoderModel,
        data: Vec<Design>,
        energy: QuadraticEnergy,
        objective: Objective,
        graph: InteractionGraph,
    }

    fn fixture() -> Fixture {
        let atoms = build_king_subgraph(1, 3, 1.0, Defects::None).unwrap();
        let graph = unit_disk_graph(&atoms, 1.0).unwrap();
        let energy = QuadraticEnergy::new(vec![-1.0, -0.5, -1.2], vec![(0, 1, 2.0), (1, 2, 1.5), (0, 2, 0.1)]).unwrap();
        Fixture {
            model: init_model(2, 4, &[5], 3, 11).unwrap(),
            data: random_designs(4, 2, 4, 12),
            energy,
            objective: Objective::synthetic(2, 4, 13).unwrap(),
            graph,
        }
    }

    #[test]
    fn straight_through_gradient_matches_frozen_surrogate() {
        let f = fixture();
        let batch: Vec<&Design> = f.data.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut noise: Vec<SampleNoise> = (0..batch.len())
            .map(|_| SampleNoise {
                flips: (0..2).map(|_| BitString::new(3, rng.random_range(0..8)).unwrap()).collect(),
                ..Default::default()
            })
            .collect();
        let terms = LossTerms {
            energy: &f.energy,
            objective: &f.objective,
            graph: Some(&f.graph),
            weights: [1.0, 0.7, 0.3, 0.5],
            lambda: Some(0.8),
            lambda_d: Some(2.5),
        };
        let base = batch_loss(&f.model, &batch, &mut noise, &terms).unwrap();
        let l = base.loss;
        let sum = l.reconstruction + 0.7 * l.energy_match + 0.3 * l.is_penalty + 0.5 * l.distance_match;
        assert!((l.total - sum).abs() < 1e-10);
        let params = f.model.params();
        for probe in 0..40 {
            let i = rng.random_range(0..params.len());
            let h = 1e-6;
            let eval = |delta: f64| {
                let mut m = f.model.clone();
                let mut p = params.clone();
                p[i] += delta;
                m.set_params(&p).unwrap();
                batch_loss(&m, &batch, &mut noise.clone(), &terms).unwrap().loss.total
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let g = base.grad[i];
            assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-4), "probe {probe} param {i}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn zero_weights_and_zero_rate_leave_model_unchanged() {
        let f = fixture();
        let ch = Channel::new(Sampler::BitFlip, 1.0, Arc::new(f.energy.clone()), 3).unwrap();
        let cfg = TrainConfig { w_rec: 0.0, w_energy: 0.0, w_is: 0.0, w_dist: 0.0, ..Default::default() };
        let mut t = Trainer::new(f.model.clone(), cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = t.train_epoch(&f.data, &ch, &f.objective, None, &mut rng).unwrap();
        assert_eq!(l, LossBreakdown::default());
        assert_eq!(t.model(), &f.model);

        let cfg = TrainConfig { learning_rate: 0.0, w_is: 1.0, w_dist: 1.0, ..Default::default() };
        let mut t = Trainer::new(f.model.clone(), cfg).unwrap();
        let l = t.train_epoch(&f.data, &ch, &f.objective, Some(&f.graph), &mut rng).unwrap();
        assert!(l.total > 0.0);
        let same = t.model().params().iter().zip(f.model.params()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
    }

    #[test]
    fn zero_time_quantum_channel_never_flips() {
        use crate::lattice::AtomArray;
        use crate::quench::{Quench, QuenchSpec};
        use crate::rydberg::RydbergParams;
        let atoms = AtomArray::from_positions(vec![[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]]).unwrap();
        let params = RydbergParams::new(atoms, 1.0, 0.5, 100.0).unwrap();
        let energy = Arc::new(params.quadratic_energy());
        let quench = Quench::new(QuenchSpec::new(params, 0.0).unwrap()).unwrap();
        let ch = Channel::new(Sampler::quantum(quench).unwrap(), 1.0, energy, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for z in BitString::all(3) {
            assert_eq!(ch.apply(&z, &mut rng).unwrap().xor(&z).unwrap(), BitString::zeros(3));
        }
    }

    #[test]
    fn is_penalty_descends() {
        let f = fixture();
        let flat = Arc::new(crate::energy::EnergyTable::flat(3, 0.0));
        let ch = Channel::new(Sampler::BitFlip, 1.0, flat, 1).unwrap();
        let cfg = TrainConfig { w_rec: 0.0, w_energy: 0.0, w_is: 1.0, learning_rate: 0.05, ..Default::default() };
        let model = init_model(2, 4, &[5], 3, 3).unwrap();
        let mut t = Trainer::new(model, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let penalty = |m: &AutoencoderModel| -> f64 {
            f.data.iter().map(|d| is_penalty_loss(&f.graph, &encode_latent(m, d).unwrap()).unwrap()).sum::<f64>()
        };
        let mut last = penalty(t.model());
        for _ in 0..50 {
            t.train_epoch(&f.data, &ch, &f.objective, Some(&f.graph), &mut rng).unwrap();
            let p = penalty(t.model());
            assert!(p <= last, "{p} > {last}");
            last = p;
        }
    }

    #[test]
    fn persistence_round_trip_and_rejection() {
        let m = init_model(3, 3, &[4, 5], 2, 9).unwrap();
        let json = m.to_json();
        assert!(json.contains(QUANTIZER_TAG));
        assert_eq!(AutoencoderModel::from_json(&json).unwrap(), m);
        let mut broken = m.clone();
        broken.decoder[0].weights.pop();
        assert!(AutoencoderModel::from_json(&broken.to_json()).is_err());
        let mut wrong = m.clone();
        wrong.latent_n = 3;
        assert!(AutoencoderModel::from_json(&wrong.to_json()).is_err());
        assert!(AutoencoderModel::from_json(&json.replace(QUANTIZER_TAG, "gumbel")).is_err());
    }
}
