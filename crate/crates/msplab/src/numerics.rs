//! Quadrature, hypercube expectations and seeded random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{check_size, invalid, Result};
use crate::fourier::MAX_TABULATED_P;

/// Exact average of `f` over all `2^P` points, indexed as in [`crate::fourier`].
pub fn expect_hypercube(p: usize, mut f: impl FnMut(usize) -> f64) -> Result<f64> {
    check_size("P", p, MAX_TABULATED_P)?;
    let n = 1usize << p;
    let vals: Vec<f64> = (0..n).map(&mut f).collect();
    Ok(pairwise_sum(&vals) / n as f64)
}

/// Sign vector of the hypercube point `idx`.
pub fn point(p: usize, idx: usize) -> Vec<f64> {
    (0..p).map(|b| if idx >> b & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Pairwise (tree) summation in a fixed order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Gauss–Hermite rule for the standard normal, weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    pub const DEFAULT_NODES: usize = 21;

    /// `n`-node rule, exact for polynomials of degree up to `2n-1`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid("Hermite rule needs at least 2 nodes");
        }
        check_size("Hermite nodes", n, 200)?;
        // Newton iteration on the orthonormal physicists' Hermite recurrence for
        // weight exp(-x^2); nodes are mapped to the standard normal afterwards.
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0f64;
        let nf = n as f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let sqrt2 = std::f64::consts::SQRT_2;
        // Store in ascending order.
        let mut nodes: Vec<f64> = x.iter().map(|v| v * sqrt2).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        nodes.reverse();
        weights.reverse();
        Ok(HermiteRule { nodes, weights })
    }

    /// A single node at zero; used when the smoothing width vanishes.
    pub fn degenerate() -> Self {
        HermiteRule { nodes: vec![0.0], weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `E[f(G)]` for `G ~ N(0,1)` under the rule.
pub fn expect_gaussian(rule: &HermiteRule, mut f: impl FnMut(f64) -> f64) -> f64 {
    rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * f(x)).sum()
}

/// Gauss–Legendre rule for `Unif[-1,1]`, weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LegendreRule {
    pub const DEFAULT_NODES: usize = 64;

    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("Legendre rule needs at least 1 node");
        }
        check_size("Legendre nodes", n, 4096)?;
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            // Weight for the interval [-1,1] is 2/((1-z^2)p'^2); halve for the uniform law.
            let w = 1.0 / ((1.0 - z * z) * pp * pp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(LegendreRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(a)]` for `a ~ Unif[-1,1]`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Seed plus stream id. Identical specs give identical sequences everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

/// Named streams split from one root seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const TEST_SET: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const AUX: u64 = 5;
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    /// ChaCha20 keyed by the seed, with the stream id as the ChaCha stream.
    pub fn rng(self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}

/// `count` rows of `d` independent uniform signs, row-major.
pub fn sample_rademacher<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(d * count);
    let mut bits = 0u64;
    let mut left = 0;
    for _ in 0..d * count {
        if left == 0 {
            bits = rng.next_u64();
            left = 64;
        }
        out.push(if bits & 1 == 1 { 1.0 } else { -1.0 });
        bits >>= 1;
        left -= 1;
    }
    out
}
