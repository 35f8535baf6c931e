#![allow(dead_code)]

use flarecheck::network::random::{Architecture, ConvBlock};
use flarecheck::network::Network;
use flarecheck::planting::{generate_background, generate_signal, EpsRange, Scene, SignalParams};
use flarecheck::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// A scene for `net`: half generated blobs on smooth backgrounds, half
/// unstructured noise (which often makes the network inconsistent).
pub fn scene(rng: &mut impl Rng, net: &Network) -> Scene {
    let shape = net.input_shape();
    let (signal, background) = if rng.gen_bool(0.5) {
        let params = SignalParams {
            radius: rng.gen_range(0.5..1.5),
            ..Default::default()
        };
        (
            generate_signal(rng.gen(), shape, params).unwrap(),
            generate_background(rng.gen(), shape, Default::default()).unwrap(),
        )
    } else {
        (uniform(rng, shape, -1.0, 1.0), uniform(rng, shape, -1.0, 1.0))
    };
    let hi = rng.gen_range(0.5..3.0);
    Scene::new(signal, background, EpsRange::new(0.0, hi).unwrap()).unwrap()
}

/// `count` random networks (at most 5 affine layers, 64 hidden neurons).
pub fn networks(rng: &mut impl Rng, count: usize) -> Vec<Network> {
    (0..count)
        .map(|i| Architecture::sample(rng, 5, 64).build(rng, &format!("random-{i}")))
        .collect()
}

/// A nonnegative network over at most 16 inputs.
pub fn monotone_network(rng: &mut impl Rng, index: usize) -> Network {
    let mut arch = if index % 2 == 0 {
        Architecture {
            input_shape: vec![1, 4, 4],
            conv: vec![ConvBlock {
                channels: 2,
                kernel: (2, 2),
                pool: Some(((2, 2), (1, 1))),
            }],
            hidden: vec![rng.gen_range(3..=8)],
            nonnegative: true,
            sigmoid_head: rng.gen_bool(0.5),
        }
    } else {
        let hidden = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(3..=16)).collect();
        Architecture::dense(vec![2, 2, 3], hidden)
    };
    arch.nonnegative = true;
    arch.build(rng, &format!("monotone-{index}"))
}

/// Exact logit along the scene's ray at `eps`.
pub fn logit_at(net: &Network, scene: &Scene, eps: f64) -> f64 {
    net.logit_of(&scene.at(eps))
}

/// Grid search for a drop: `Some((eps1, eps2))` when some later grid point
/// is lower than an earlier one by more than rounding noise.
pub fn grid_violation(net: &Network, scene: &Scene, points: usize) -> Option<(f64, f64)> {
    let r = scene.eps_range();
    let mut best = (f64::NEG_INFINITY, r.lo());
    for k in 0..points {
        let t = if points == 1 {
            r.lo()
        } else {
            r.lo() + r.width() * k as f64 / (points - 1) as f64
        };
        let g = logit_at(net, scene, t);
        if g < best.0 - 1e-9 * (1.0 + g.abs()) {
            return Some((t, best.1));
        }
        if g > best.0 {
            best = (g, t);
        }
    }
    None
}
