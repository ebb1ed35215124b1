use std::fmt;

use super::NetConfig;

/// Closed-form size and cost of a [`NetConfig`].
///
/// FLOPs count one forward pass of one sample with `n` spheres: an affine
/// layer costs `2·in·out + out`, batch norm 2 per feature, the max pool one
/// comparison per sphere and channel. ReLU and dropout are free.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelStats {
    /// Weights, biases and batch-norm scale/shift.
    pub trainable_params: usize,
    /// Batch-norm running means and variances.
    pub running_stats: usize,
    pub mlp_flops: u64,
    pub pool_flops: u64,
    pub head_flops: u64,
    pub n: usize,
}

impl ModelStats {
    pub fn flops(&self) -> u64 {
        self.mlp_flops + self.pool_flops + self.head_flops
    }

    pub fn total_stored(&self) -> usize {
        self.trainable_params + self.running_stats
    }
}

impl fmt::Display for ModelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "params={} running_stats={} flops={} (mlp={} pool={} head={}, n={})",
            self.trainable_params,
            self.running_stats,
            self.flops(),
            self.mlp_flops,
            self.pool_flops,
            self.head_flops,
            self.n
        )
    }
}

pub fn model_stats(config: &NetConfig, n: usize) -> ModelStats {
    let bn = config.batch_norm;
    let mut s = ModelStats {
        trainable_params: 0,
        running_stats: 0,
        mlp_flops: 0,
        pool_flops: 0,
        head_flops: 0,
        n,
    };
    let mut layer = |inp: usize, out: usize, norm: bool| -> u64 {
        s.trainable_params += inp * out + out;
        let mut flops = (2 * inp * out + out) as u64;
        if norm {
            s.trainable_params += 2 * out;
            s.running_stats += 2 * out;
            flops += 2 * out as u64;
        }
        flops
    };
    let mut prev = config.input_dim;
    let mut mlp = 0;
    for &d in &config.mlp_dims {
        mlp += layer(prev, d, bn);
        prev = d;
    }
    let mut head = 0;
    for &d in &config.fc_dims {
        head += layer(prev, d, bn);
        prev = d;
    }
    head += layer(prev, config.k, false);
    s.mlp_flops = mlp * n as u64;
    s.pool_flops = (n * config.global_dim()) as u64;
    s.head_flops = head;
    s
}
