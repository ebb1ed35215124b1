use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, Mode, SphereNet};
use crate::dataset::SphereSample;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// The learning rate is multiplied by `decay_rate` every `decay_every` epochs.
    pub decay_every: usize,
    pub decay_rate: f64,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            decay_every: 20,
            decay_rate: 0.7,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = epoch.checked_div(self.decay_every).unwrap_or(0);
        self.learning_rate * self.decay_rate.powi(steps as i32)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let step = T::of(lr * (1.0 - self.beta2.powi(self.t)).sqrt() / (1.0 - self.beta1.powi(self.t)));
        let eps = T::of(self.epsilon);
        let one = T::one();
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    /// `epoch,train_loss,train_acc,test_acc` with an optional `# key=value` comment first.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = comment {
            writeln!(s, "# {c}").unwrap();
        }
        s.push_str("epoch,train_loss,train_acc,test_acc\n");
        for e in &self.epochs {
            writeln!(
                s,
                "{},{:.6},{:.6},{:.6}",
                e.epoch, e.train_loss, e.train_acc, e.test_acc
            )
            .unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// `(correct, total)` per class label.
    pub per_class: Vec<(usize, usize)>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn class_accuracy(&self, label: usize) -> Option<f64> {
        self.per_class
            .get(label)
            .filter(|(_, t)| *t > 0)
            .map(|&(c, t)| c as f64 / t as f64)
    }

    /// Mean of the per-class accuracies over classes present in the split.
    pub fn mean_class_accuracy(&self) -> f64 {
        let accs: Vec<f64> = (0..self.per_class.len()).filter_map(|c| self.class_accuracy(c)).collect();
        if accs.is_empty() {
            0.0
        } else {
            accs.iter().sum::<f64>() / accs.len() as f64
        }
    }
}

const EVAL_CHUNK: usize = 32;

/// Inference-mode accuracy over `samples`; samples are processed in chunks
/// of equal sphere count, which yields the same logits as one at a time.
pub fn evaluate<T: Real>(net: &SphereNet<T>, samples: &[SphereSample<T>]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("evaluation split is empty".into()));
    }
    let k = net.config().k;
    let mut per_class = vec![(0, 0); k];
    let mut predictions = Vec::with_capacity(samples.len());
    let mut start = 0;
    while start < samples.len() {
        let n = samples[start].n();
        let mut end = start + 1;
        while end < samples.len() && end - start < EVAL_CHUNK && samples[end].n() == n {
            end += 1;
        }
        let refs: Vec<&SphereSample<T>> = samples[start..end].iter().collect();
        let logits = net.forward(&refs)?;
        for r in 0..refs.len() {
            predictions.push(argmax(logits.row(r)));
        }
        start = end;
    }
    let mut correct = 0;
    for (s, &p) in samples.iter().zip(&predictions) {
        if s.label >= k {
            return Err(Error::InvalidArgument(format!("label {} ≥ class count {k}", s.label)));
        }
        per_class[s.label].1 += 1;
        if p == s.label {
            per_class[s.label].0 += 1;
            correct += 1;
        }
    }
    Ok(Evaluation {
        correct,
        total: samples.len(),
        per_class,
        predictions,
    })
}

/// Trains `net` in place with mini-batch Adam and logs every epoch.
///
/// Shuffling, augmentation and dropout draw from one RNG seeded by
/// `config.seed`, so reruns are bit-identical. Trailing batches with a single
/// sample are skipped because batch statistics are undefined for them. On a
/// non-finite loss the parameters from the start of the epoch are restored and
/// [`Error::DivergedTraining`] is returned.
pub fn train<T: Real>(
    net: &mut SphereNet<T>,
    train: &[SphereSample<T>],
    test: &[SphereSample<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainingLog> {
    if train.len() < 2 {
        return Err(Error::EmptyDataset("training needs at least two samples".into()));
    }
    if config.batch_size < 2 {
        return Err(Error::InvalidArgument("batch size must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(net.num_params());
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let snapshot = net.clone();
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        let mut hits = 0;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<SphereSample<T>> = chunk
                .iter()
                .map(|&i| {
                    if config.augment {
                        train[i].augmented(&mut rng)
                    } else {
                        train[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&SphereSample<T>> = batch.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            let pass = net.forward_pass(&refs, Mode::Train, Some(&mut rng))?;
            let (loss, dlogits) = net.loss_and_dlogits(&pass, &labels);
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                *net = snapshot;
                return Err(Error::DivergedTraining { epoch, loss });
            }
            for (r, &l) in labels.iter().enumerate() {
                hits += (argmax(pass.logits.row(r)) == l) as usize;
            }
            net.update_running_stats(&pass);
            let grad = net.backward(&pass, &dlogits);
            adam.step(&mut net.params, &grad, lr);
            if !net.is_finite() {
                *net = snapshot;
                return Err(Error::DivergedTraining { epoch, loss: f64::NAN });
            }
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let test_acc = if test.is_empty() {
            0.0
        } else {
            evaluate(net, test)?.accuracy()
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: hits as f64 / seen.max(1) as f64,
            test_acc,
        };
        log::debug!(
            "epoch {} loss {:.4} train {:.3} test {:.3}",
            entry.epoch,
            entry.train_loss,
            entry.train_acc,
            entry.test_acc
        );
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    /// Two classes separable by mean radius.
    fn toy(n_per_class: usize, seed: u64) -> Vec<SphereSample<f64>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..2 * n_per_class {
            let label = i % 2;
            let base = if label == 0 { 0.1 } else { 0.4 };
            let features = (0..16)
                .map(|_| {
                    [
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.8..0.8),
                        base + rng.random_range(-0.05..0.05),
                    ]
                })
                .collect();
            out.push(SphereSample { features, label, padded: 0 });
        }
        out
    }

    #[test]
    fn learning_rate_decays_stepwise() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(19), 1e-3);
        assert!((c.learning_rate_at(20) - 7e-4).abs() < 1e-15);
        assert!((c.learning_rate_at(45) - 4.9e-4).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_scores_class_frequency() {
        let mut net = SphereNet::<f64>::new(NetConfig::new(vec![8], vec![], 4).unwrap(), 0).unwrap();
        let (w, b) = net.head_ranges();
        net.params_mut()[w].fill(0.0);
        net.params_mut()[b.start + 2] = 1.0;
        let samples: Vec<_> = (0..8)
            .map(|i| SphereSample { features: vec![[0.0, 0.0, 0.0, 0.1]; 3], label: i % 4, padded: 0 })
            .collect();
        let e = evaluate(&net, &samples).unwrap();
        assert_eq!(e.accuracy(), 0.25);
        assert_eq!(e.per_class[2], (2, 2));
        assert_eq!(e.class_accuracy(0), Some(0.0));
    }

    #[test]
    fn separable_toy_is_learned_and_reproducible() {
        let data = toy(20, 1);
        let cfg = TrainConfig { epochs: 30, batch_size: 8, seed: 4, ..Default::default() };
        let run = || {
            let mut net = SphereNet::new(NetConfig::new(vec![16, 32], vec![16], 2).unwrap(), 2).unwrap();
            let log = train(&mut net, &data, &data[..10], &cfg, |_| {}).unwrap();
            (log, net)
        };
        let (a, net) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(evaluate(&net, &data).unwrap().accuracy() >= 0.95);
        let first = a.epochs[0].train_loss;
        assert!(a.last().unwrap().train_loss < first);
        let csv = a.to_csv(Some("config_hash=abc"));
        assert!(csv.starts_with("# config_hash=abc\nepoch,train_loss,train_acc,test_acc\n1,"));
    }

    #[test]
    fn divergence_restores_parameters() {
        let data = toy(4, 2);
        let mut net = SphereNet::new(NetConfig::new(vec![8], vec![], 2).unwrap(), 2).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, learning_rate: f64::NAN, ..Default::default() };
        let before = net.params().to_vec();
        let err = train(&mut net, &data, &[], &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::DivergedTraining { epoch: 0, .. }));
        assert_eq!(net.params(), &before[..]);
    }
}
