//! Deterministic seeding and small sampling helpers.
//!
//! Every stochastic component derives its own stream from one root seed,
//! a text label, and an index path, so results are reproducible and
//! independent of call order. No OS entropy is ever consulted, which also
//! keeps the crate usable on `wasm32-unknown-unknown`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a root seed, a label, and an index path.
pub fn child_seed(root: u64, label: &str, path: &[u64]) -> u64 {
    // FNV-1a over the label, then splitmix over root and path indices.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut s = splitmix64(root ^ h);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

/// Seeded stream for the component identified by `label` and `path`.
pub fn stream(root: u64, label: &str, path: &[u64]) -> Rng {
    Rng::seed_from_u64(child_seed(root, label, path))
}

/// Uniform in [0, 1), 53-bit resolution.
pub fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in [lo, hi).
pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal via Box–Muller.
pub fn gaussian(rng: &mut Rng) -> f64 {
    let u1 = loop {
        let u = uniform(rng);
        if u > 0.0 {
            break u;
        }
    };
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform integer in [0, n) via rejection sampling (unbiased).
pub fn index(rng: &mut Rng, n: usize) -> usize {
    assert!(n > 0, "index from empty range");
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seeds_differ_by_label_and_path() {
        let a = child_seed(7, "gate", &[]);
        let b = child_seed(7, "expert", &[]);
        let c = child_seed(7, "expert", &[1]);
        let d = child_seed(8, "expert", &[1]);
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_ne!(c, d);
        assert_eq!(child_seed(7, "expert", &[1]), c);
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = stream(42, "t", &[]);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn gaussian_moments_are_plausible() {
        let mut rng = stream(1, "g", &[]);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = stream(3, "s", &[]);
        let mut v: Vec<u32> = (0..100).collect();
        shuffle(&mut rng, &mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<u32>>());
    }
}
