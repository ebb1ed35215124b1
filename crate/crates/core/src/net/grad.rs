use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, SphereNet};
use crate::dataset::SphereSample;
use crate::error::Result;

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter index with the largest error.
    pub worst: usize,
}

/// Relative error floor so that vanishing gradients do not divide by zero.
const REL_FLOOR: f64 = 1e-6;

fn loss(net: &SphereNet<f64>, samples: &[&SphereSample<f64>], labels: &[usize]) -> Result<f64> {
    let pass = net.forward_pass(samples, Mode::Inference, None)?;
    Ok(net.loss_and_dlogits(&pass, labels).0)
}

/// Checks a random `fraction` of the parameters (at least `min_count`) with
/// batch norm frozen at its running statistics.
pub fn gradient_check(
    net: &SphereNet<f64>,
    samples: &[&SphereSample<f64>],
    epsilon: f64,
    fraction: f64,
    min_count: usize,
    seed: u64,
) -> Result<GradientCheck> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let pass = net.forward_pass(samples, Mode::Inference, None)?;
    let (_, d) = net.loss_and_dlogits(&pass, &labels);
    let analytic = net.backward(&pass, &d);

    let total = net.num_params();
    let count = ((total as f64 * fraction).ceil() as usize).max(min_count).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, total, count).into_vec();
    idx.sort_unstable();

    let mut out = GradientCheck {
        checked: count,
        max_rel_error: 0.0,
        worst: idx.first().copied().unwrap_or(0),
    };
    let mut probe = net.clone();
    for i in idx {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let plus = loss(&probe, samples, &labels)?;
        probe.params[i] = orig - epsilon;
        let minus = loss(&probe, samples, &labels)?;
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if err > out.max_rel_error {
            out.max_rel_error = err;
            out.worst = i;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::tests::random_sample;
    use crate::net::NetConfig;

    #[test]
    fn small_network_passes() {
        let net = SphereNet::new(NetConfig::new(vec![16, 32], vec![16], 3).unwrap(), 11).unwrap();
        let s: Vec<_> = (0..3).map(|i| random_sample(12, i % 3, 100 + i as u64)).collect();
        let refs: Vec<_> = s.iter().collect();
        let r = gradient_check(&net, &refs, 1e-4, 0.01, 40, 5).unwrap();
        assert_eq!(r.checked, 40);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
