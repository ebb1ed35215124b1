//! Permutation-invariant sphere-set classifier.
//!
//! A shared per-sphere MLP lifts every `(x, y, z, r)` row to a feature vector,
//! a channel-wise max over the sphere axis produces the global feature, and a
//! fully connected head maps it to class logits. Every hidden layer is
//! `affine → batch norm → ReLU`; the last hidden FC layer is followed by
//! dropout during training.

mod checkpoint;
mod grad;
pub mod matrix;
mod stats;
mod train;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SphereSample;
use crate::error::{Error, Result};
use crate::scalar::Real;
use matrix::{affine, affine_input_grad, affine_param_grads, Matrix};

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use grad::{gradient_check, GradientCheck};
pub use stats::{model_stats, ModelStats};
pub use train::{
    evaluate, train, Adam, EpochLog, Evaluation, TrainConfig, TrainingLog,
};

pub const INPUT_DIM: usize = 4;
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistics in each batch-norm update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Layer widths and regularization of a [`SphereNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub input_dim: usize,
    /// Widths of the shared per-sphere layers; the last one is the global feature size.
    pub mlp_dims: Vec<usize>,
    /// Hidden widths of the head; empty means a single linear layer to the logits.
    pub fc_dims: Vec<usize>,
    pub k: usize,
    pub batch_norm: bool,
    /// Keep probability of the dropout after the last hidden FC layer.
    pub dropout_keep: f64,
}

impl NetConfig {
    pub fn new(mlp_dims: Vec<usize>, fc_dims: Vec<usize>, k: usize) -> Result<Self> {
        let cfg = Self {
            input_dim: INPUT_DIM,
            mlp_dims,
            fc_dims,
            k,
            batch_norm: true,
            dropout_keep: 0.7,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.k)));
        }
        if self.mlp_dims.is_empty() || self.mlp_dims.iter().chain(&self.fc_dims).any(|&d| d == 0) {
            return Err(Error::Config("layer widths must be positive and the MLP non-empty".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Config("dropout keep probability must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn global_dim(&self) -> usize {
        *self.mlp_dims.last().unwrap()
    }

    /// `mlp(4,64,128,256), fc(256,k)` style description.
    pub fn describe(&self) -> String {
        let mlp: Vec<String> = std::iter::once(self.input_dim)
            .chain(self.mlp_dims.iter().copied())
            .map(|d| d.to_string())
            .collect();
        let fc: Vec<String> = std::iter::once(self.global_dim())
            .chain(self.fc_dims.iter().copied())
            .map(|d| d.to_string())
            .chain(std::iter::once(self.k.to_string()))
            .collect();
        format!("mlp({}), fc({})", mlp.join(","), fc.join(","))
    }

    fn to_line(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "input={};mlp={};fc={};k={};bn={};keep={}",
            self.input_dim,
            join(&self.mlp_dims),
            join(&self.fc_dims),
            self.k,
            self.batch_norm as u8,
            self.dropout_keep
        )
    }

    fn from_line(line: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed network description {line:?}"));
        let mut cfg = Self {
            input_dim: 0,
            mlp_dims: vec![],
            fc_dims: vec![],
            k: 0,
            batch_norm: true,
            dropout_keep: 1.0,
        };
        let dims = |v: &str| -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(vec![]);
            }
            v.split(',').map(|d| d.parse().map_err(|_| bad())).collect()
        };
        for part in line.split(';') {
            let (key, val) = part.split_once('=').ok_or_else(bad)?;
            match key {
                "input" => cfg.input_dim = val.parse().map_err(|_| bad())?,
                "mlp" => cfg.mlp_dims = dims(val)?,
                "fc" => cfg.fc_dims = dims(val)?,
                "k" => cfg.k = val.parse().map_err(|_| bad())?,
                "bn" => cfg.batch_norm = val == "1",
                "keep" => cfg.dropout_keep = val.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The three lightweight layouts: global feature 1024, 512 or 256.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetPreset {
    #[serde(rename = "t2-1024")]
    T2_1024,
    #[serde(rename = "t2-512")]
    T2_512,
    #[serde(rename = "t2-256")]
    T2_256,
}

impl NetPreset {
    pub const ALL: [NetPreset; 3] = [NetPreset::T2_1024, NetPreset::T2_512, NetPreset::T2_256];

    pub fn config(self, k: usize) -> Result<NetConfig> {
        match self {
            NetPreset::T2_1024 => NetConfig::new(vec![64, 128, 1024], vec![512, 256], k),
            NetPreset::T2_512 => NetConfig::new(vec![64, 128, 512], vec![256], k),
            NetPreset::T2_256 => NetConfig::new(vec![64, 128, 256], vec![], k),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NetPreset::T2_1024 => "t2-1024",
            NetPreset::T2_512 => "t2-512",
            NetPreset::T2_256 => "t2-256",
        }
    }
}

impl fmt::Display for NetPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NetPreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown network preset {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Mlp,
    Fc,
    Head,
}

/// Offsets of one layer's parameters in the flat parameter vector.
#[derive(Clone, Debug)]
struct Layer {
    stage: Stage,
    inp: usize,
    out: usize,
    weight: Range<usize>,
    bias: Range<usize>,
    /// `(gamma, beta, index into running statistics)`.
    norm: Option<(Range<usize>, Range<usize>, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// How batch norm and dropout behave in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat updates, dropout active.
    Train,
    /// Running statistics, no dropout. Also used for gradient checks.
    Inference,
}

#[derive(Clone, Debug)]
pub struct SphereNet<T: Real> {
    config: NetConfig,
    layers: Vec<Layer>,
    params: Vec<T>,
    running: Vec<RunningStats<T>>,
}

struct LayerCache<T> {
    input: Matrix<T>,
    xhat: Option<Matrix<T>>,
    inv_std: Vec<T>,
    batch_stats: bool,
    /// Output after ReLU (pre-dropout); `None` for the head.
    activated: Option<Matrix<T>>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct ForwardPass<T: Real> {
    pub logits: Matrix<T>,
    /// Global feature per sample (`batch × global_dim`).
    pub global: Matrix<T>,
    /// Row (within its sample) that won the max for each `(sample, channel)`.
    pub argmax: Vec<usize>,
    caches: Vec<LayerCache<T>>,
    dropout_mask: Option<Vec<T>>,
    /// `(norm layer, mean, biased variance, rows)` for each batch-normalized layer.
    moments: Vec<(usize, Vec<T>, Vec<T>, usize)>,
    batch: usize,
    n: usize,
}

/// Flat gradient with the same layout as the parameters.
pub type Gradient<T> = Vec<T>;

impl<T: Real> SphereNet<T> {
    /// Glorot-uniform weights, zero biases, unit batch-norm scale.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut norms = 0;
        let mut take = |len: usize| {
            let r = offset..offset + len;
            offset += len;
            r
        };
        let mut dims = vec![(Stage::Mlp, config.input_dim, config.mlp_dims[0])];
        for w in config.mlp_dims.windows(2) {
            dims.push((Stage::Mlp, w[0], w[1]));
        }
        let mut prev = config.global_dim();
        for &d in &config.fc_dims {
            dims.push((Stage::Fc, prev, d));
            prev = d;
        }
        dims.push((Stage::Head, prev, config.k));
        for (stage, inp, out) in dims {
            let weight = take(inp * out);
            let bias = take(out);
            let norm = (config.batch_norm && stage != Stage::Head).then(|| {
                norms += 1;
                (take(out), take(out), norms - 1)
            });
            layers.push(Layer {
                stage,
                inp,
                out,
                weight,
                bias,
                norm,
            });
        }
        let mut params = vec![T::zero(); offset];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut running = Vec::new();
        for l in &layers {
            let limit = (6.0 / (l.inp + l.out) as f64).sqrt();
            for p in &mut params[l.weight.clone()] {
                *p = T::of(rng.random_range(-limit..limit));
            }
            if let Some((gamma, _, _)) = &l.norm {
                params[gamma.clone()].fill(T::one());
                running.push(RunningStats {
                    mean: vec![T::zero(); l.out],
                    var: vec![T::one(); l.out],
                });
            }
        }
        Ok(Self {
            config,
            layers,
            params,
            running,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.running
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter ranges of the output layer `(weight, bias)`.
    pub fn head_ranges(&self) -> (Range<usize>, Range<usize>) {
        let l = self.layers.last().unwrap();
        (l.weight.clone(), l.bias.clone())
    }

    /// Parameter ranges of every layer before the output layer.
    pub fn hidden_range(&self) -> Range<usize> {
        0..self.layers.last().unwrap().weight.start
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
            && self
                .running
                .iter()
                .all(|r| r.mean.iter().chain(&r.var).all(|v| v.is_finite()))
    }

    fn pack(samples: &[&SphereSample<T>]) -> Result<(Matrix<T>, usize)> {
        let n = samples.first().map(|s| s.n()).unwrap_or(0);
        if n == 0 {
            return Err(Error::ShapeMismatch("batch needs at least one sphere per sample".into()));
        }
        if samples.iter().any(|s| s.n() != n) {
            return Err(Error::ShapeMismatch("samples in a batch must have equal sphere counts".into()));
        }
        let mut data = Vec::with_capacity(samples.len() * n * INPUT_DIM);
        for s in samples {
            for row in &s.features {
                data.extend_from_slice(row);
            }
        }
        Ok((Matrix::from_vec(samples.len() * n, INPUT_DIM, data), n))
    }

    /// Logits for a batch in inference mode.
    pub fn forward(&self, samples: &[&SphereSample<T>]) -> Result<Matrix<T>> {
        Ok(self.forward_pass(samples, Mode::Inference, None)?.logits)
    }

    /// Inference-mode forward for a single sample.
    pub fn logits(&self, sample: &SphereSample<T>) -> Result<Vec<T>> {
        Ok(self.forward(&[sample])?.data)
    }

    pub fn predict(&self, sample: &SphereSample<T>) -> Result<usize> {
        Ok(argmax(&self.logits(sample)?))
    }

    /// Full forward pass. In [`Mode::Train`] batch statistics are used (and
    /// recorded for [`Self::update_running_stats`]) and `rng` drives dropout.
    pub fn forward_pass(
        &self,
        samples: &[&SphereSample<T>],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardPass<T>> {
        let (mut x, n) = Self::pack(samples)?;
        let batch = samples.len();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut moments = Vec::new();
        let mut global = None;
        let mut argmax_rows = Vec::new();
        let mut dropout_mask = None;
        let last_fc = self.layers.iter().rposition(|l| l.stage == Stage::Fc);
        let mut rng = rng;

        for li in 0..self.layers.len() {
            let layer = self.layers[li].clone();
            if layer.stage != Stage::Mlp && global.is_none() {
                let (g, arg) = max_pool(&x, batch, n);
                argmax_rows = arg;
                x = g.clone();
                global = Some(g);
            }
            let z = affine(&x, &self.params[layer.weight.clone()], &self.params[layer.bias.clone()], layer.out);
            if layer.stage == Stage::Head {
                caches.push(LayerCache {
                    input: x,
                    xhat: None,
                    inv_std: vec![],
                    batch_stats: false,
                    activated: None,
                });
                x = z;
                break;
            }
            let (y, xhat, inv_std, batch_stats) = match &layer.norm {
                Some((gamma, beta, ri)) => {
                    let use_batch = mode == Mode::Train;
                    let (xhat, inv_std, m) = self.normalize(&z, *ri, use_batch);
                    moments.extend(m);
                    let (g, b) = (&self.params[gamma.clone()], &self.params[beta.clone()]);
                    let mut y = xhat.clone();
                    for r in 0..y.rows {
                        for ((v, &gv), &bv) in y.row_mut(r).iter_mut().zip(g).zip(b) {
                            *v = *v * gv + bv;
                        }
                    }
                    (y, Some(xhat), inv_std, use_batch)
                }
                None => (z, None, vec![], false),
            };
            let mut a = y;
            for v in &mut a.data {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
            let mut next = a.clone();
            if mode == Mode::Train && Some(li) == last_fc && self.config.dropout_keep < 1.0 {
                let keep = self.config.dropout_keep;
                let scale = T::of(1.0 / keep);
                let rng = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::InvalidArgument("training forward needs an RNG".into()))?;
                let mask: Vec<T> = (0..next.data.len())
                    .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                    .collect();
                for (v, m) in next.data.iter_mut().zip(&mask) {
                    *v *= *m;
                }
                dropout_mask = Some(mask);
            }
            caches.push(LayerCache {
                input: x,
                xhat,
                inv_std,
                batch_stats,
                activated: Some(a),
            });
            x = next;
        }
        Ok(ForwardPass {
            logits: x,
            global: global.expect("network has a head"),
            argmax: argmax_rows,
            caches,
            dropout_mask,
            moments,
            batch,
            n,
        })
    }

    /// Folds the batch statistics of a training pass into the running statistics.
    pub fn update_running_stats(&mut self, pass: &ForwardPass<T>) {
        let momentum = T::of(BN_MOMENTUM);
        let one = T::one();
        for (ri, mean, var, rows) in &pass.moments {
            let unbias = if *rows > 1 {
                T::of(*rows as f64 / (*rows - 1) as f64)
            } else {
                one
            };
            let rs = &mut self.running[*ri];
            for c in 0..mean.len() {
                rs.mean[c] = momentum * rs.mean[c] + (one - momentum) * mean[c];
                rs.var[c] = momentum * rs.var[c] + (one - momentum) * var[c] * unbias;
            }
        }
    }

    /// Normalizes `z` per column, returning the batch moments when they were used.
    #[allow(clippy::type_complexity)]
    fn normalize(
        &self,
        z: &Matrix<T>,
        ri: usize,
        batch_stats: bool,
    ) -> (Matrix<T>, Vec<T>, Option<(usize, Vec<T>, Vec<T>, usize)>) {
        let cols = z.cols;
        let eps = T::of(BN_EPSILON);
        let (mean, var) = if batch_stats {
            let rows = T::of_usize(z.rows);
            let mut mean = vec![T::zero(); cols];
            for r in 0..z.rows {
                for (m, &v) in mean.iter_mut().zip(z.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows);
            let mut var = vec![T::zero(); cols];
            for r in 0..z.rows {
                for ((s, &v), &m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows);
            (mean, var)
        } else {
            let rs = &self.running[ri];
            (rs.mean.clone(), rs.var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = z.clone();
        for r in 0..xhat.rows {
            for ((v, &m), &s) in xhat.row_mut(r).iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * s;
            }
        }
        let moments = batch_stats.then_some((ri, mean, var, z.rows));
        (xhat, inv_std, moments)
    }

    /// Mean softmax cross-entropy of a forward pass and its logit gradient.
    pub fn loss_and_dlogits(&self, pass: &ForwardPass<T>, labels: &[usize]) -> (T, Matrix<T>) {
        let b = pass.batch;
        let mut d = Matrix::zeros(b, self.config.k);
        let mut loss = T::zero();
        let inv_b = T::one() / T::of_usize(b);
        for (r, &label) in labels.iter().enumerate() {
            let z = pass.logits.row(r);
            let m = z.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = z.iter().map(|&v| (v - m).exp()).sum();
            let log_sum = sum.ln() + m;
            loss += log_sum - z[label];
            for (c, g) in d.row_mut(r).iter_mut().enumerate() {
                let p = (z[c] - log_sum).exp();
                *g = (p - if c == label { T::one() } else { T::zero() }) * inv_b;
            }
        }
        (loss * inv_b, d)
    }

    /// Backpropagates `dlogits` through a forward pass.
    pub fn backward(&self, pass: &ForwardPass<T>, dlogits: &Matrix<T>) -> Gradient<T> {
        let mut grad = vec![T::zero(); self.params.len()];
        let mut dy = dlogits.clone();
        let first_fc_or_head = self.layers.iter().position(|l| l.stage != Stage::Mlp).unwrap();
        let last_fc = self.layers.iter().rposition(|l| l.stage == Stage::Fc);
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let cache = &pass.caches[li];
            if li + 1 == first_fc_or_head {
                // Route the global-feature gradient to the winning rows.
                let c = dy.cols;
                let mut dpool = Matrix::zeros(pass.batch * pass.n, c);
                for b in 0..pass.batch {
                    for ch in 0..c {
                        let row = b * pass.n + pass.argmax[b * c + ch];
                        dpool.data[row * c + ch] += dy.data[b * c + ch];
                    }
                }
                dy = dpool;
            }
            if layer.stage != Stage::Head {
                if Some(li) == last_fc {
                    if let Some(mask) = &pass.dropout_mask {
                        for (g, m) in dy.data.iter_mut().zip(mask) {
                            *g *= *m;
                        }
                    }
                }
                let act = cache.activated.as_ref().unwrap();
                for (g, &a) in dy.data.iter_mut().zip(&act.data) {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                }
                if let (Some((gamma, beta, _)), Some(xhat)) = (&layer.norm, &cache.xhat) {
                    let cols = dy.cols;
                    let mut dgamma = vec![T::zero(); cols];
                    let mut dbeta = vec![T::zero(); cols];
                    for r in 0..dy.rows {
                        for c in 0..cols {
                            let g = dy.data[r * cols + c];
                            dgamma[c] += g * xhat.data[r * cols + c];
                            dbeta[c] += g;
                        }
                    }
                    let gv = &self.params[gamma.clone()];
                    if cache.batch_stats {
                        let rows = T::of_usize(dy.rows);
                        for r in 0..dy.rows {
                            for c in 0..cols {
                                let i = r * cols + c;
                                dy.data[i] = gv[c] * cache.inv_std[c] / rows
                                    * (rows * dy.data[i] - dbeta[c] - xhat.data[i] * dgamma[c]);
                            }
                        }
                    } else {
                        for r in 0..dy.rows {
                            for c in 0..cols {
                                dy.data[r * cols + c] *= gv[c] * cache.inv_std[c];
                            }
                        }
                    }
                    for (g, v) in grad[gamma.clone()].iter_mut().zip(dgamma) {
                        *g += v;
                    }
                    for (g, v) in grad[beta.clone()].iter_mut().zip(dbeta) {
                        *g += v;
                    }
                }
            }
            {
                let (wr, br) = (layer.weight.clone(), layer.bias.clone());
                let (head, tail) = grad.split_at_mut(br.start);
                affine_param_grads(&cache.input, &dy, &mut head[wr], &mut tail[..br.len()]);
            }
            if li > 0 {
                dy = affine_input_grad(&dy, &self.params[layer.weight.clone()], layer.inp);
            }
        }
        grad
    }

    /// Indices of the spheres that win the max for at least one global channel,
    /// ascending.
    pub fn critical_spheres(&self, sample: &SphereSample<T>) -> Result<Vec<usize>> {
        let pass = self.forward_pass(&[sample], Mode::Inference, None)?;
        let mut idx = pass.argmax.clone();
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }
}

/// Channel-wise maximum over each sample's rows; ties go to the lowest row.
fn max_pool<T: Real>(x: &Matrix<T>, batch: usize, n: usize) -> (Matrix<T>, Vec<usize>) {
    let c = x.cols;
    let mut g = Matrix::zeros(batch, c);
    let mut arg = vec![0usize; batch * c];
    for b in 0..batch {
        g.row_mut(b).copy_from_slice(x.row(b * n));
        for r in 1..n {
            let row = x.row(b * n + r);
            for ch in 0..c {
                if row[ch] > g.data[b * c + ch] {
                    g.data[b * c + ch] = row[ch];
                    arg[b * c + ch] = r;
                }
            }
        }
    }
    (g, arg)
}

pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn config_to_line(cfg: &NetConfig) -> String {
    cfg.to_line()
}

pub(crate) fn config_from_line(line: &str) -> Result<NetConfig> {
    NetConfig::from_line(line)
}
