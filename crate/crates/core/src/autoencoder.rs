//! Stacked LSTM encoder-decoder.
//!
//! The encoder runs a stack of LSTM layers over the window; the last hidden
//! state of the top layer is the latent vector `h^E_L` and the top layer's
//! full hidden sequence is `y^E`. The decoder starts its first layer from
//! `h^E_L`, feeds back its own previous output (zero at the first step) and
//! maps the top decoder layer through a dense layer to the reconstruction.
//!
//! Training minimises the mean absolute reconstruction error with Adam and
//! full backpropagation through time, including through the output feedback.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{self, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scaling::MinMaxScaler;
use crate::window::Window;

const MAGIC: &[u8; 8] = b"RWPNNAEC";
const VERSION: u32 = 1;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate blocks are stacked in the order forget, input, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

/// Weights of one LSTM layer. `weights` is `[4·hidden × (hidden + input)]`
/// row-major, acting on the concatenation `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    input: usize,
    hidden: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    z: Vec<f64>,
    /// activated gates, `[f | i | g | o]`
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerGrad {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayerParams {
            input,
            hidden,
            weights: vec![0.0; 4 * hidden * (hidden + input)],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform initialisation in `±1/√hidden`.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input, hidden);
        p.weights
            .iter_mut()
            .chain(p.bias.iter_mut())
            .for_each(|w| *w = rng.random_range(-bound..bound));
        p
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn cols(&self) -> usize {
        self.hidden + self.input
    }

    /// Rows of the weight matrix belonging to `gate`.
    pub fn gate_weights(&self, gate: Gate) -> &[f64] {
        let block = self.hidden * self.cols();
        &self.weights[gate as usize * block..(gate as usize + 1) * block]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        &self.bias[gate as usize * self.hidden..(gate as usize + 1) * self.hidden]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// One LSTM step: returns `(h_t, C_t)`.
    pub fn forward_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.input || h_prev.len() != self.hidden || c_prev.len() != self.hidden {
            return Err(Error::Shape(format!(
                "lstm step expects x[{}], h[{}], c[{}]; got x[{}], h[{}], c[{}]",
                self.input,
                self.hidden,
                self.hidden,
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let cache = self.step(x, h_prev, c_prev);
        Ok((cache.h, cache.c))
    }

    fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let h = self.hidden;
        let cols = self.cols();
        let mut z = Vec::with_capacity(cols);
        z.extend_from_slice(h_prev);
        z.extend_from_slice(x);

        let mut gates = self.bias.clone();
        for (r, a) in gates.iter_mut().enumerate() {
            let row = &self.weights[r * cols..(r + 1) * cols];
            *a += row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>();
        }
        for (r, a) in gates.iter_mut().enumerate() {
            *a = if r / h == Gate::Candidate as usize {
                a.tanh()
            } else {
                sigmoid(*a)
            };
        }

        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut h_out = vec![0.0; h];
        for j in 0..h {
            let (f, i, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h_out[j] = o * tanh_c[j];
        }
        StepCache {
            z,
            gates,
            c_prev: c_prev.to_vec(),
            tanh_c,
            h: h_out,
            c,
        }
    }

    /// Backpropagates one step. Returns `(dh_prev, dc_prev, dx)`.
    fn backward_step(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut LayerGrad,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let cols = self.cols();
        let g = &cache.gates;
        let mut da = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let (f, i, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = cache.tanh_c[j];
            let d_o = dh[j] * tc;
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            da[j] = dct * cache.c_prev[j] * f * (1.0 - f);
            da[h + j] = dct * cand * i * (1.0 - i);
            da[2 * h + j] = dct * i * (1.0 - cand * cand);
            da[3 * h + j] = d_o * o * (1.0 - o);
            dc_prev[j] = dct * f;
        }

        let mut dz = vec![0.0; cols];
        for (r, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &self.weights[r * cols..(r + 1) * cols];
            let grow = &mut grad.weights[r * cols..(r + 1) * cols];
            for c in 0..cols {
                grow[c] += d * cache.z[c];
                dz[c] += row[c] * d;
            }
            grad.bias[r] += d;
        }
        let dx = dz.split_off(h);
        (dz, dc_prev, dx)
    }

    fn zero_grad(&self) -> LayerGrad {
        LayerGrad {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Convenience wrapper for a single cell step.
pub fn lstm_cell_forward(
    params: &LstmLayerParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.forward_step(x, h_prev, c_prev)
}

/// Layer sizes of the encoder-decoder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Width `n_o` of each observation.
    pub input_dim: usize,
    /// Encoder hidden sizes, typically descending; the last one is the latent size.
    pub encoder: Vec<usize>,
    /// Decoder hidden sizes, typically ascending; the first must equal the latent size.
    pub decoder: Vec<usize>,
}

impl Architecture {
    /// Two-layer encoder `[32, 4]` and decoder `[4, 32]`.
    pub fn desk(input_dim: usize) -> Self {
        Architecture {
            input_dim,
            encoder: vec![32, 4],
            decoder: vec![4, 32],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input dimension must be positive".into()));
        }
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::InvalidConfig("encoder and decoder need at least one layer".into()));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden sizes must be positive".into()));
        }
        if self.decoder[0] != self.latent_dim() {
            return Err(Error::InvalidConfig(format!(
                "first decoder layer ({}) must match the latent size ({})",
                self.decoder[0],
                self.latent_dim()
            )));
        }
        Ok(())
    }
}

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 200,
            batch_size: 8,
            early_stop_patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 || self.early_stop_patience == 0 {
            return bad("max_epochs and early_stop_patience must be positive");
        }
        if !self.batch_size.is_power_of_two() {
            return bad("batch_size must be a positive power of two");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        Ok(())
    }
}

/// Loss of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    /// One JSON record per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(&serde_json::to_string(rec).expect("plain record"));
            out.push('\n');
        }
        out
    }
}

/// Patience-based stopping on a monitored loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records a loss; returns `true` when training should stop.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best >= self.patience
        }
    }

    pub fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == epoch && self.since_best == 0
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Output of [`RecurrentAutoencoder::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    /// Last hidden state of the top encoder layer.
    pub latent: Vec<f64>,
    /// Hidden state of the top encoder layer at every timestep.
    pub sequence: Vec<Vec<f64>>,
}

struct ForwardCache {
    enc: Vec<Vec<StepCache>>,
    dec: Vec<Vec<StepCache>>,
    outputs: Vec<f64>,
}

/// Gradient buffers laid out like [`RecurrentAutoencoder::tensors`].
#[derive(Debug, Clone)]
pub struct Gradients {
    enc: Vec<LayerGrad>,
    dec: Vec<LayerGrad>,
    dense_w: Vec<f64>,
    dense_b: Vec<f64>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in self.enc.iter().chain(&self.dec) {
            out.push(&g.weights);
            out.push(&g.bias);
        }
        out.push(&self.dense_w);
        out.push(&self.dense_b);
        out
    }

    fn reset(&mut self) {
        for g in self.enc.iter_mut().chain(self.dec.iter_mut()) {
            g.weights.fill(0.0);
            g.bias.fill(0.0);
        }
        self.dense_w.fill(0.0);
        self.dense_b.fill(0.0);
    }
}

#[derive(Debug, Clone)]
pub struct RecurrentAutoencoder {
    arch: Architecture,
    encoder: Vec<LstmLayerParams>,
    decoder: Vec<LstmLayerParams>,
    /// `[n_o × top decoder hidden]`
    dense_w: Vec<f64>,
    dense_b: Vec<f64>,
    latent_norm: Option<MinMaxScaler>,
}

impl RecurrentAutoencoder {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input = arch.input_dim;
        let mut encoder = Vec::with_capacity(arch.encoder.len());
        for &h in &arch.encoder {
            encoder.push(LstmLayerParams::random(input, h, &mut rng));
            input = h;
        }
        let mut decoder = Vec::with_capacity(arch.decoder.len());
        let mut input = arch.input_dim;
        for &h in &arch.decoder {
            decoder.push(LstmLayerParams::random(input, h, &mut rng));
            input = h;
        }
        let top = *arch.decoder.last().unwrap();
        let bound = 1.0 / (top as f64).sqrt();
        let dense_w = (0..arch.input_dim * top)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let dense_b = (0..arch.input_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Ok(RecurrentAutoencoder {
            arch,
            encoder,
            decoder,
            dense_w,
            dense_b,
            latent_norm: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn encoder_layers(&self) -> &[LstmLayerParams] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[LstmLayerParams] {
        &self.decoder
    }

    pub fn latent_norm(&self) -> Option<&MinMaxScaler> {
        self.latent_norm.as_ref()
    }

    pub fn set_latent_norm(&mut self, scaler: MinMaxScaler) -> Result<()> {
        if scaler.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: scaler.dim(),
            });
        }
        self.latent_norm = Some(scaler);
        Ok(())
    }

    /// Parameter tensors in a fixed order: per encoder layer (weights, bias),
    /// per decoder layer (weights, bias), dense weights, dense bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder) {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out.push(&self.dense_w);
        out.push(&self.dense_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out.push(&mut self.dense_w);
        out.push(&mut self.dense_b);
        out
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            enc: self.encoder.iter().map(LstmLayerParams::zero_grad).collect(),
            dec: self.decoder.iter().map(LstmLayerParams::zero_grad).collect(),
            dense_w: vec![0.0; self.dense_w.len()],
            dense_b: vec![0.0; self.dense_b.len()],
        }
    }

    fn check_window(&self, window: &Window) -> Result<()> {
        if window.dim() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: window.dim(),
            });
        }
        if window.is_empty() {
            return Err(Error::Shape("empty window".into()));
        }
        Ok(())
    }

    fn run_encoder(&self, window: &Window) -> Vec<Vec<StepCache>> {
        let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(self.encoder.len());
        for (k, layer) in self.encoder.iter().enumerate() {
            let mut h = vec![0.0; layer.hidden];
            let mut c = vec![0.0; layer.hidden];
            let mut steps = Vec::with_capacity(window.len());
            for t in 0..window.len() {
                let x: &[f64] = if k == 0 {
                    window.row(t)
                } else {
                    &caches[k - 1][t].h
                };
                let cache = layer.step(x, &h, &c);
                h.clone_from(&cache.h);
                c.clone_from(&cache.c);
                steps.push(cache);
            }
            caches.push(steps);
        }
        caches
    }

    fn run_decoder(&self, latent: &[f64], len: usize) -> (Vec<Vec<StepCache>>, Vec<f64>) {
        let n_o = self.arch.input_dim;
        let top = self.decoder.last().unwrap().hidden;
        let mut hs: Vec<Vec<f64>> = self.decoder.iter().map(|l| vec![0.0; l.hidden]).collect();
        let mut cs = hs.clone();
        hs[0].copy_from_slice(latent);

        let mut caches: Vec<Vec<StepCache>> = self.decoder.iter().map(|_| Vec::with_capacity(len)).collect();
        let mut outputs = Vec::with_capacity(len * n_o);
        let mut feedback = vec![0.0; n_o];
        for _ in 0..len {
            let mut input = feedback.clone();
            for (k, layer) in self.decoder.iter().enumerate() {
                let cache = layer.step(&input, &hs[k], &cs[k]);
                hs[k].clone_from(&cache.h);
                cs[k].clone_from(&cache.c);
                input = cache.h.clone();
                caches[k].push(cache);
            }
            for o in 0..n_o {
                let row = &self.dense_w[o * top..(o + 1) * top];
                feedback[o] = self.dense_b[o] + row.iter().zip(&input).map(|(w, v)| w * v).sum::<f64>();
            }
            outputs.extend_from_slice(&feedback);
        }
        (caches, outputs)
    }

    fn forward(&self, window: &Window) -> ForwardCache {
        let enc = self.run_encoder(window);
        let latent = enc.last().unwrap().last().unwrap().h.clone();
        let (dec, outputs) = self.run_decoder(&latent, window.len());
        ForwardCache { enc, dec, outputs }
    }

    /// Latent vector `h^E_L` and per-timestep sequence `y^E` of the top encoder layer.
    pub fn encode(&self, window: &Window) -> Result<Encoding> {
        self.check_window(window)?;
        let enc = self.run_encoder(window);
        let top = enc.last().unwrap();
        Ok(Encoding {
            latent: top.last().unwrap().h.clone(),
            sequence: top.iter().map(|s| s.h.clone()).collect(),
        })
    }

    /// Unrolls the decoder for `len` steps from a latent vector.
    pub fn decode(&self, latent: &[f64], len: usize) -> Result<Window> {
        if latent.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: latent.len(),
            });
        }
        if len == 0 {
            return Err(Error::Shape("decode length must be positive".into()));
        }
        let (_, outputs) = self.run_decoder(latent, len);
        Window::new(len, self.arch.input_dim, outputs)
    }

    pub fn reconstruct(&self, window: &Window) -> Result<Window> {
        self.check_window(window)?;
        let cache = self.forward(window);
        Window::new(window.len(), window.dim(), cache.outputs)
    }

    /// Mean absolute reconstruction error of one window.
    pub fn reconstruction_mae(&self, window: &Window) -> Result<f64> {
        let rec = self.reconstruct(window)?;
        Ok(mae(window.values(), rec.values()))
    }

    /// Adds `weight · ∂MAE/∂θ` for `window` into `grads` and returns the MAE.
    pub fn accumulate_gradient(&self, window: &Window, grads: &mut Gradients, weight: f64) -> Result<f64> {
        self.check_window(window)?;
        let cache = self.forward(window);
        let len = window.len();
        let n_o = self.arch.input_dim;
        let count = (len * n_o) as f64;
        let loss = mae(window.values(), &cache.outputs);

        // decoder, walking backwards in time
        let top = self.decoder.last().unwrap().hidden;
        let mut dh_next: Vec<Vec<f64>> = self.decoder.iter().map(|l| vec![0.0; l.hidden]).collect();
        let mut dc_next = dh_next.clone();
        let mut d_feedback = vec![0.0; n_o];
        for t in (0..len).rev() {
            let mut dy = d_feedback;
            for o in 0..n_o {
                let diff = cache.outputs[t * n_o + o] - window.values()[t * n_o + o];
                dy[o] += weight * sign(diff) / count;
            }
            let h_top = &cache.dec[self.decoder.len() - 1][t].h;
            let mut dh_in = vec![0.0; top];
            for o in 0..n_o {
                grads.dense_b[o] += dy[o];
                let row = &self.dense_w[o * top..(o + 1) * top];
                let grow = &mut grads.dense_w[o * top..(o + 1) * top];
                for j in 0..top {
                    grow[j] += dy[o] * h_top[j];
                    dh_in[j] += row[j] * dy[o];
                }
            }
            for k in (0..self.decoder.len()).rev() {
                let dh: Vec<f64> = dh_in.iter().zip(&dh_next[k]).map(|(a, b)| a + b).collect();
                let (dh_prev, dc_prev, dx) =
                    self.decoder[k].backward_step(&cache.dec[k][t], &dh, &dc_next[k], &mut grads.dec[k]);
                dh_next[k] = dh_prev;
                dc_next[k] = dc_prev;
                dh_in = dx;
            }
            d_feedback = dh_in;
        }
        let d_latent = std::mem::take(&mut dh_next[0]);

        // encoder, top layer first
        let mut dh_seq: Vec<Vec<f64>> = vec![vec![0.0; self.latent_dim()]; len];
        dh_seq[len - 1] = d_latent;
        for k in (0..self.encoder.len()).rev() {
            let layer = &self.encoder[k];
            let mut dh_next = vec![0.0; layer.hidden];
            let mut dc_next = vec![0.0; layer.hidden];
            let mut dx_seq = vec![Vec::new(); len];
            for t in (0..len).rev() {
                let dh: Vec<f64> = dh_seq[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (dh_prev, dc_prev, dx) = layer.backward_step(&cache.enc[k][t], &dh, &dc_next, &mut grads.enc[k]);
                dh_next = dh_prev;
                dc_next = dc_prev;
                dx_seq[t] = dx;
            }
            if k == 0 {
                break;
            }
            dh_seq = dx_seq;
        }
        Ok(loss)
    }

    /// Trains by Adam on mini-batches, stopping early on the validation MAE
    /// (or the training MAE when `val` is empty). The weights of the best
    /// monitored epoch are kept, and latent normalisation statistics are then
    /// fitted on the training latents.
    pub fn train(&mut self, train: &[Window], val: &[Window], cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        for w in train.iter().chain(val) {
            self.check_window(w)?;
        }
        let len = train[0].len();
        if self.latent_dim() >= self.arch.input_dim * len {
            return Err(Error::InvalidConfig(format!(
                "latent size {} does not compress windows of {} values",
                self.latent_dim(),
                self.arch.input_dim * len
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut adam = Adam::new(self, cfg);
        let mut grads = self.zero_gradients();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
        let mut best = self.tensors().iter().map(|t| t.to_vec()).collect::<Vec<_>>();
        let mut epochs = Vec::new();
        let mut stopped_early = false;

        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                grads.reset();
                let weight = 1.0 / batch.len() as f64;
                for &i in batch {
                    total += self.accumulate_gradient(&train[i], &mut grads, weight)?;
                }
                adam.step(self, &grads);
            }
            let train_mae = total / train.len() as f64;
            let val_mae = if val.is_empty() {
                None
            } else {
                let mut sum = 0.0;
                for w in val {
                    sum += self.reconstruction_mae(w)?;
                }
                Some(sum / val.len() as f64)
            };
            if !train_mae.is_finite() || val_mae.is_some_and(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            epochs.push(EpochRecord {
                epoch,
                train_mae,
                val_mae,
            });
            let stop = stopper.observe(epoch, val_mae.unwrap_or(train_mae));
            if stopper.improved_at(epoch) {
                for (dst, src) in best.iter_mut().zip(self.tensors()) {
                    dst.copy_from_slice(src);
                }
            }
            if stop {
                stopped_early = true;
                break;
            }
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(&best) {
            dst.copy_from_slice(src);
        }
        self.fit_latent_norm(train)?;
        Ok(TrainReport {
            epochs,
            best_epoch: stopper.best_epoch(),
            stopped_early,
        })
    }

    /// Fits latent min-max statistics on the latents of `windows`.
    pub fn fit_latent_norm(&mut self, windows: &[Window]) -> Result<()> {
        let latents = windows
            .iter()
            .map(|w| self.encode(w).map(|e| e.latent))
            .collect::<Result<Vec<_>>>()?;
        let scaler = MinMaxScaler::fit(self.latent_dim(), latents.iter().map(Vec::as_slice))?;
        self.latent_norm = Some(scaler);
        Ok(())
    }

    /// Maps a latent vector into `[0, 1]^n_t` with the fitted training range.
    pub fn latent_normalize(&self, latent: &[f64]) -> Result<Vec<f64>> {
        self.latent_norm
            .as_ref()
            .ok_or(Error::NotFitted("latent normalisation statistics"))?
            .transform(latent)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(MAGIC, VERSION);
        enc.u32(self.arch.input_dim as u32);
        enc.u32(self.arch.encoder.len() as u32);
        for &h in &self.arch.encoder {
            enc.u32(h as u32);
        }
        enc.u32(self.arch.decoder.len() as u32);
        for &h in &self.arch.decoder {
            enc.u32(h as u32);
        }
        for t in self.tensors() {
            enc.f64s(t);
        }
        match &self.latent_norm {
            Some(s) => {
                enc.u32(1);
                enc.f64s(s.min());
                enc.f64s(s.max());
            }
            None => enc.u32(0),
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, MAGIC, VERSION, "autoencoder checkpoint")?;
        let input_dim = dec.u32()? as usize;
        let sizes = |dec: &mut Decoder| -> Result<Vec<usize>> {
            let n = dec.u32()? as usize;
            dec.require(n.saturating_mul(4))?;
            (0..n).map(|_| dec.u32().map(|v| v as usize)).collect()
        };
        let encoder = sizes(&mut dec)?;
        let decoder = sizes(&mut dec)?;
        let arch = Architecture {
            input_dim,
            encoder,
            decoder,
        };
        let mut model = RecurrentAutoencoder::new(arch, 0)?;
        for t in model.tensors_mut() {
            let values = dec.f64s(t.len())?;
            t.copy_from_slice(&values);
        }
        if dec.u32()? == 1 {
            let n = model.latent_dim();
            let min = dec.f64s(n)?;
            let max = dec.f64s(n)?;
            model.latent_norm = Some(MinMaxScaler::new(min, max)?);
        }
        dec.finish()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        codec::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path.as_ref())?)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(model: &RecurrentAutoencoder, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn step(&mut self, model: &mut RecurrentAutoencoder, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((param, grad), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_window(len: usize, dim: usize, seed: u64) -> Window {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Window::new(len, dim, (0..len * dim).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_cell_propagates_zero() {
        let p = LstmLayerParams::zeros(2, 3);
        let (h, c) = lstm_cell_forward(&p, &[0.0, 0.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn cell_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmLayerParams::random(4, 5, &mut rng);
        let x = [50.0, -20.0, 3.0, 1e6];
        let (h, c) = lstm_cell_forward(&p, &[0.7, -0.3, 2.0, 0.1], &[0.9; 5], &[3.0; 5]).unwrap();
        assert!(h.iter().all(|v| *v > -1.0 && *v < 1.0));
        assert!(c.iter().all(|v| v.is_finite()));
        // saturated inputs can only reach the closed interval in floating point
        let (h, c) = lstm_cell_forward(&p, &x, &[0.9; 5], &[100.0; 5]).unwrap();
        assert!(h.iter().all(|v| v.abs() <= 1.0));
        assert!(c.iter().all(|v| v.is_finite()));
        let cache = p.step(&x, &[0.1; 5], &[0.0; 5]);
        for (r, g) in cache.gates.iter().enumerate() {
            if r / 5 == Gate::Candidate as usize {
                assert!(*g >= -1.0 && *g <= 1.0);
            } else {
                assert!(*g >= 0.0 && *g <= 1.0);
            }
        }
    }

    #[test]
    fn cell_shape_errors() {
        let p = LstmLayerParams::zeros(2, 3);
        assert!(matches!(lstm_cell_forward(&p, &[0.0], &[0.0; 3], &[0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(lstm_cell_forward(&p, &[0.0; 2], &[0.0; 2], &[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn gate_blocks_partition_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmLayerParams::random(2, 3, &mut rng);
        let all: Vec<f64> = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output]
            .iter()
            .flat_map(|&g| p.gate_weights(g).to_vec())
            .collect();
        assert_eq!(all, p.weights());
        assert_eq!(p.gate_bias(Gate::Output), &p.bias()[9..12]);
    }

    /// Single-layer BPTT against central differences for `L = Σ_t r_t · h_t`.
    #[test]
    fn cell_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = LstmLayerParams::random(3, 4, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let rs: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

        let loss = |layer: &LstmLayerParams| {
            let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
            let mut total = 0.0;
            for (x, r) in xs.iter().zip(&rs) {
                let s = layer.step(x, &h, &c);
                total += s.h.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
                h = s.h;
                c = s.c;
            }
            total
        };

        let mut caches = Vec::new();
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for x in &xs {
            let s = layer.step(x, &h, &c);
            h = s.h.clone();
            c = s.c.clone();
            caches.push(s);
        }
        let mut grad = layer.zero_grad();
        let (mut dh_next, mut dc_next) = (vec![0.0; 4], vec![0.0; 4]);
        for t in (0..3).rev() {
            let dh: Vec<f64> = rs[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (a, b, _) = layer.backward_step(&caches[t], &dh, &dc_next, &mut grad);
            dh_next = a;
            dc_next = b;
        }

        let step = 1e-5;
        for which in 0..2 {
            let n = if which == 0 { layer.weights.len() } else { layer.bias.len() };
            for i in 0..n {
                let set = |l: &mut LstmLayerParams, v: f64| {
                    if which == 0 { l.weights[i] = v } else { l.bias[i] = v }
                };
                let orig = if which == 0 { layer.weights[i] } else { layer.bias[i] };
                set(&mut layer, orig + step);
                let up = loss(&layer);
                set(&mut layer, orig - step);
                let down = loss(&layer);
                set(&mut layer, orig);
                let numeric = (up - down) / (2.0 * step);
                let analytic = if which == 0 { grad.weights[i] } else { grad.bias[i] };
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(rel < 1e-4 || (numeric - analytic).abs() < 1e-9, "param {which}/{i}: {numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn encode_single_step_window() {
        let m = RecurrentAutoencoder::new(Architecture { input_dim: 1, encoder: vec![6, 2], decoder: vec![2, 6] }, 5).unwrap();
        let e = m.encode(&random_window(1, 1, 2)).unwrap();
        assert_eq!(e.sequence.len(), 1);
        assert_eq!(e.sequence[0], e.latent);
    }

    #[test]
    fn encode_is_order_sensitive_and_deterministic() {
        let arch = Architecture { input_dim: 2, encoder: vec![8, 3], decoder: vec![3, 8] };
        let a = RecurrentAutoencoder::new(arch.clone(), 9).unwrap();
        let b = RecurrentAutoencoder::new(arch, 9).unwrap();
        let w = random_window(10, 2, 4);
        let ea = a.encode(&w).unwrap();
        assert_eq!(ea, b.encode(&w).unwrap());
        assert_ne!(ea.latent, a.encode(&w.reversed()).unwrap().latent);
    }

    #[test]
    fn decode_shapes_and_finiteness() {
        let m = RecurrentAutoencoder::new(Architecture::desk(3), 1).unwrap();
        let w = Window::zeros(12, 3);
        let rec = m.reconstruct(&w).unwrap();
        assert_eq!((rec.len(), rec.dim()), (12, 3));
        assert!(rec.values().iter().all(|v| v.is_finite()));
        assert!(m.decode(&[0.0; 3], 4).is_err());
        assert_eq!(m.decode(&[0.1; 4], 7).unwrap().len(), 7);
    }

    #[test]
    fn architecture_guards() {
        let bad = Architecture { input_dim: 1, encoder: vec![8, 4], decoder: vec![3, 8] };
        assert!(RecurrentAutoencoder::new(bad, 0).is_err());
        let arch = Architecture { input_dim: 1, encoder: vec![8, 4], decoder: vec![4, 8] };
        let mut m = RecurrentAutoencoder::new(arch, 0).unwrap();
        let w = vec![random_window(4, 1, 1)];
        let err = m.train(&w, &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn latent_normalize_contract() {
        let mut m = RecurrentAutoencoder::new(Architecture { input_dim: 1, encoder: vec![4, 2], decoder: vec![2, 4] }, 0).unwrap();
        assert!(matches!(m.latent_normalize(&[0.0, 0.0]), Err(Error::NotFitted(_))));
        let windows: Vec<Window> = (0..6).map(|s| random_window(8, 1, s)).collect();
        m.fit_latent_norm(&windows).unwrap();
        let s = m.latent_norm().unwrap().clone();
        assert_eq!(m.latent_normalize(s.min()).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.latent_normalize(s.max()).unwrap(), vec![1.0, 1.0]);
        let below: Vec<f64> = s.min().iter().map(|v| v - 1.0).collect();
        let above: Vec<f64> = s.max().iter().map(|v| v + 1.0).collect();
        assert_eq!(m.latent_normalize(&below).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.latent_normalize(&above).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn early_stopping_on_frozen_loss() {
        let mut s = EarlyStopping::new(3);
        assert!(!s.observe(1, 0.5));
        assert!(!s.observe(2, 0.5));
        assert!(!s.observe(3, 0.5));
        assert!(s.observe(4, 0.5));
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 6, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { max_epochs: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = RecurrentAutoencoder::new(Architecture { input_dim: 2, encoder: vec![5, 2], decoder: vec![2, 5] }, 3).unwrap();
        let windows: Vec<Window> = (0..4).map(|s| random_window(6, 2, s)).collect();
        m.fit_latent_norm(&windows).unwrap();
        let back = RecurrentAutoencoder::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.tensors(), m.tensors());
        assert_eq!(back.latent_norm(), m.latent_norm());
        assert_eq!(back.architecture(), m.architecture());

        let bytes = m.to_bytes();
        assert!(matches!(RecurrentAutoencoder::from_bytes(&bytes[..bytes.len() - 9]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(matches!(RecurrentAutoencoder::from_bytes(&bad), Err(Error::Checksum { .. })));
    }
}
