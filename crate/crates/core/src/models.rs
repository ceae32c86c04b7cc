//! Seeded generators for the random models and their recovery thresholds.
//!
//! Randomness is counter-based: an instance seed keys a ChaCha8 generator,
//! stream 0 draws the planted labeling and stream `b + 1` draws the `b`-th
//! block of noise entries. Any instance is therefore a pure function of its
//! parameters and seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::{eq_tensor, rank1_tensor, DenseTensor, SpikeVector};

/// Noise entries drawn per RNG stream.
pub const NOISE_BLOCK: usize = 4096;

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from an ordered list of integers.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform balanced labeling of `n` nodes drawn from stream 0 of `seed`.
pub fn sample_balanced(n: usize, seed: u64) -> Result<SpikeVector> {
    if n < 2 || n % 2 == 1 {
        return invalid(format!("balanced labelings need an even n >= 2, got {n}"));
    }
    let mut entries: Vec<i8> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
    entries.shuffle(&mut stream_rng(seed, 0));
    SpikeVector::new(entries)
}

/// I.i.d. standard normal tensor drawn blockwise from streams `1, 2, ...`.
pub fn gaussian_tensor(order: usize, dim: usize, seed: u64) -> Result<DenseTensor> {
    let mut t = DenseTensor::zeros(order, dim)?;
    for (b, chunk) in t.data_mut().chunks_mut(NOISE_BLOCK).enumerate() {
        let mut rng = stream_rng(seed, b as u64 + 1);
        for v in chunk {
            *v = rng.sample(StandardNormal);
        }
    }
    Ok(t)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return invalid(format!("sigma must be finite and non-negative, got {sigma}"));
    }
    Ok(())
}

/// `T = y⊛k + σW` with a planted balanced `y`.
#[derive(Debug, Clone)]
pub struct BisectionInstance {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub seed: u64,
    pub truth: SpikeVector,
    pub observation: DenseTensor,
}

impl BisectionInstance {
    /// Regenerates the noise tensor `W`.
    pub fn noise(&self) -> Result<DenseTensor> {
        gaussian_tensor(self.k, self.n, self.seed)
    }

    pub fn header(&self) -> InstanceHeader {
        InstanceHeader::Bisection { n: self.n, k: self.k, sigma: self.sigma, seed: self.seed }
    }
}

pub fn gen_bisection(n: usize, k: usize, sigma: f64, seed: u64) -> Result<BisectionInstance> {
    check_sigma(sigma)?;
    let truth = sample_balanced(n, seed)?;
    let mut observation = eq_tensor(&truth, k)?;
    if sigma > 0.0 {
        observation.add_scaled(&gaussian_tensor(k, n, seed)?, sigma)?;
    }
    Ok(BisectionInstance { n, k, sigma, seed, truth, observation })
}

/// `T = y⊗4 + σW` with a planted balanced `y`.
#[derive(Debug, Clone)]
pub struct SpikedInstance {
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub truth: SpikeVector,
    pub observation: DenseTensor,
}

impl SpikedInstance {
    pub fn noise(&self) -> Result<DenseTensor> {
        gaussian_tensor(4, self.n, self.seed)
    }

    pub fn header(&self) -> InstanceHeader {
        InstanceHeader::Spiked { n: self.n, sigma: self.sigma, seed: self.seed }
    }
}

pub fn gen_spiked(n: usize, sigma: f64, seed: u64) -> Result<SpikedInstance> {
    check_sigma(sigma)?;
    let truth = sample_balanced(n, seed)?;
    let mut observation = rank1_tensor(&truth, 4)?;
    if sigma > 0.0 {
        observation.add_scaled(&gaussian_tensor(4, n, seed)?, sigma)?;
    }
    Ok(SpikedInstance { n, sigma, seed, truth, observation })
}

/// 4-uniform hypergraph with a planted bisection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypergraph {
    pub n: usize,
    /// Sorted vertex quadruples, in lexicographic order.
    pub edges: Vec<[usize; 4]>,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub truth: SpikeVector,
}

impl Hypergraph {
    /// Builds a hypergraph from explicit edges; each edge must have 4 distinct vertices.
    pub fn from_edges(n: usize, edges: Vec<[usize; 4]>, truth: SpikeVector) -> Result<Self> {
        if truth.len() != n {
            return invalid(format!("truth has length {}, expected {n}", truth.len()));
        }
        let mut sorted = Vec::with_capacity(edges.len());
        for mut e in edges {
            e.sort_unstable();
            if e[3] >= n || e.windows(2).any(|w| w[0] == w[1]) {
                return invalid(format!("edge {e:?} is not 4 distinct vertices of [{n}]"));
            }
            sorted.push(e);
        }
        sorted.sort_unstable();
        sorted.dedup();
        Ok(Self { n, edges: sorted, p: f64::NAN, q: f64::NAN, seed: 0, truth })
    }

    /// Symmetric order-4 indicator tensor of the edge set (all 24 orderings of
    /// each edge are set to 1).
    pub fn adjacency_tensor(&self) -> Result<DenseTensor> {
        let mut t = DenseTensor::zeros(4, self.n)?;
        for e in &self.edges {
            for perm in PERMUTATIONS_4 {
                t.set(&[e[perm[0]], e[perm[1]], e[perm[2]], e[perm[3]]], 1.0);
            }
        }
        Ok(t)
    }

    pub fn header(&self) -> InstanceHeader {
        InstanceHeader::Hsbm { n: self.n, p: self.p, q: self.q, seed: self.seed }
    }
}

#[rustfmt::skip]
const PERMUTATIONS_4: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Hypergraph block model with `p = a ln n / C(n-1,3)` and `q = b ln n / C(n-1,3)`.
pub fn gen_hsbm(n: usize, a: f64, b: f64, seed: u64) -> Result<Hypergraph> {
    if n < 4 {
        return invalid(format!("hypergraph model needs n >= 4, got {n}"));
    }
    let denom = binomial(n - 1, 3) as f64;
    let ln = (n as f64).ln();
    gen_hsbm_probabilities(n, a * ln / denom, b * ln / denom, seed)
}

/// Hypergraph block model with explicit edge probabilities.
pub fn gen_hsbm_probabilities(n: usize, p: f64, q: f64, seed: u64) -> Result<Hypergraph> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return invalid(format!("edge probabilities must lie in [0, 1], got p = {p}, q = {q}"));
    }
    if n < 4 {
        return invalid(format!("hypergraph model needs n >= 4, got {n}"));
    }
    let truth = sample_balanced(n, seed)?;
    let y = truth.entries();
    let mut rng = stream_rng(seed, 1);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let mono = y[i] == y[j] && y[j] == y[k] && y[k] == y[l];
                    let prob = if mono { p } else { q };
                    // One draw per quadruple keeps the stream aligned across (p, q).
                    let u: f64 = rng.random();
                    if u < prob {
                        edges.push([i, j, k, l]);
                    }
                }
            }
        }
    }
    Ok(Hypergraph { n, edges, p, q, seed, truth })
}

/// Serializable instance descriptor; tensors are regenerated, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum InstanceHeader {
    Bisection { n: usize, k: usize, sigma: f64, seed: u64 },
    Spiked { n: usize, sigma: f64, seed: u64 },
    Hsbm { n: usize, p: f64, q: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub enum Instance {
    Bisection(BisectionInstance),
    Spiked(SpikedInstance),
    Hsbm(Hypergraph),
}

impl InstanceHeader {
    pub fn regenerate(&self) -> Result<Instance> {
        Ok(match *self {
            InstanceHeader::Bisection { n, k, sigma, seed } => Instance::Bisection(gen_bisection(n, k, sigma, seed)?),
            InstanceHeader::Spiked { n, sigma, seed } => Instance::Spiked(gen_spiked(n, sigma, seed)?),
            InstanceHeader::Hsbm { n, p, q, seed } => Instance::Hsbm(gen_hsbm_probabilities(n, p, q, seed)?),
        })
    }
}

/// Closed-form recovery thresholds (natural logarithm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Information-theoretic noise level for the bisection model.
    pub sigma_star: f64,
    /// Noise level below which the degree-2 truncation SDP recovers exactly.
    pub sigma_star_trunc: f64,
    /// Information-theoretic noise level for the order-4 spiked model.
    pub lambda_star: f64,
}

pub fn thresholds(n: usize, k: usize) -> Thresholds {
    debug_assert!(n >= 3 && k >= 2);
    let nf = n as f64;
    let ln = nf.ln();
    let kf = k as f64;
    let growth = nf.powf((kf - 1.0) / 2.0);
    Thresholds {
        sigma_star: (kf / 2f64.powi(k as i32)).sqrt() * growth / (2.0 * ln).sqrt(),
        sigma_star_trunc: (kf * (kf - 1.0) / 2f64.powi(2 * k as i32 - 1)).sqrt() * growth / ln.sqrt(),
        lambda_star: 2f64.sqrt() * nf.powf(1.5) / ln.sqrt(),
    }
}

pub fn binomial(n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u64 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_values_at_100() {
        let t = thresholds(100, 4);
        assert!((t.sigma_star - 164.75).abs() < 0.01, "{}", t.sigma_star);
        assert!((t.sigma_star_trunc - 142.68).abs() < 0.01, "{}", t.sigma_star_trunc);
        assert!((t.lambda_star - 659.01).abs() < 0.01, "{}", t.lambda_star);
    }

    #[test]
    fn sigma_star_matches_k4_form() {
        for n in [10usize, 33, 100, 1000] {
            let t = thresholds(n, 4);
            let nf = n as f64;
            let k4 = (1.0f64 / 8.0).sqrt() * nf.powf(1.5) / nf.ln().sqrt();
            assert!((t.sigma_star - k4).abs() < 1e-12 * k4);
            assert!((t.sigma_star_trunc / t.sigma_star - 0.75f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(27, 4), 17550);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn sampling_is_balanced_and_seeded() {
        let a = sample_balanced(20, 9).unwrap();
        assert!(a.is_balanced());
        assert_eq!(a, sample_balanced(20, 9).unwrap());
        assert_ne!(a, sample_balanced(20, 10).unwrap());
        assert!(sample_balanced(7, 1).is_err());
    }

    #[test]
    fn seeds_differ_per_part() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_ne!(derive_seed(&[1]), derive_seed(&[1, 0]));
    }

    #[test]
    fn hsbm_rejects_bad_probabilities() {
        let err = gen_hsbm(8, 1000.0, 0.0, 1).unwrap_err().to_string();
        assert!(err.contains("p ="), "{err}");
        assert!(gen_hsbm_probabilities(8, 0.5, -0.1, 1).is_err());
    }
}
