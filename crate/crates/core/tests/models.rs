use spiked_bisect::estimators::multigraph_adjacency;
use spiked_bisect::linalg::rank;
use spiked_bisect::models::*;
use spiked_bisect::tensor::*;

#[test]
fn noiseless_bisection_is_the_signal() {
    let inst = gen_bisection(10, 4, 0.0, 3).unwrap();
    assert_eq!(inst.observation, eq_tensor(&inst.truth, 4).unwrap());
    assert!(inst.truth.is_balanced());
    assert!(gen_bisection(9, 4, 1.0, 3).is_err());
    assert!(gen_bisection(10, 4, -1.0, 3).is_err());
}

#[test]
fn generation_is_deterministic() {
    let a = gen_bisection(12, 4, 2.5, 99).unwrap();
    let b = gen_bisection(12, 4, 2.5, 99).unwrap();
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.observation.data(), b.observation.data());
    let c = gen_bisection(12, 4, 2.5, 100).unwrap();
    assert_ne!(a.observation.data(), c.observation.data());
}

#[test]
fn observation_decomposes_into_signal_and_noise() {
    let inst = gen_bisection(8, 3, 1.7, 5).unwrap();
    let mut expect = eq_tensor(&inst.truth, 3).unwrap();
    expect.add_scaled(&inst.noise().unwrap(), 1.7).unwrap();
    assert_eq!(inst.observation, expect);
}

#[test]
fn noise_moments() {
    let n = 16;
    let mut samples = Vec::new();
    for seed in 17.. {
        let inst = gen_bisection(n, 4, 1.0, seed).unwrap();
        let signal = eq_tensor(&inst.truth, 4).unwrap();
        samples.extend(inst.observation.data().iter().zip(signal.data()).filter(|(_, s)| **s == 0.0).map(|(v, _)| *v));
        if samples.len() >= 100_000 {
            break;
        }
    }
    samples.truncate(100_000);
    assert_eq!(samples.len(), 100_000);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
    assert!(mean.abs() <= 4.0 / (samples.len() as f64).sqrt(), "{mean}");
    assert!((var - 1.0).abs() <= 0.1, "{var}");
}

#[test]
fn spiked_noiseless() {
    let inst = gen_spiked(6, 0.0, 8).unwrap();
    assert!(inst.observation.data().iter().all(|&v| v == 1.0 || v == -1.0));
    let r1 = rank1_tensor(&inst.truth, 4).unwrap();
    assert_eq!(tensor_inner(&inst.observation, &r1).unwrap(), 6f64.powi(4));
    assert_eq!(rank(&flatten4(&inst.observation).unwrap(), 1e-10), 1);
}

#[test]
fn headers_regenerate() {
    let inst = gen_spiked(8, 3.0, 4).unwrap();
    let json = serde_json::to_string(&inst.header()).unwrap();
    assert!(json.contains("\"model\":\"spiked\""));
    let back: InstanceHeader = serde_json::from_str(&json).unwrap();
    match back.regenerate().unwrap() {
        Instance::Spiked(s) => assert_eq!(s.observation, inst.observation),
        other => panic!("wrong model {other:?}"),
    }
    let b = gen_bisection(8, 3, 1.0, 4).unwrap();
    match b.header().regenerate().unwrap() {
        Instance::Bisection(x) => assert_eq!(x.observation, b.observation),
        other => panic!("wrong model {other:?}"),
    }
}

#[test]
fn hsbm_density_when_a_equals_b() {
    let n = 20;
    let h = gen_hsbm(n, 50.0, 50.0, 12).unwrap();
    let total = binomial(n, 4) as f64;
    let p = h.p;
    let se = (p * (1.0 - p) / total).sqrt();
    let density = h.edges.len() as f64 / total;
    assert!((density - p).abs() <= 3.0 * se, "{density} vs {p}");
}

#[test]
fn hsbm_edges_respect_communities() {
    let h = gen_hsbm(16, 100.0, 0.0, 3).unwrap();
    assert!(!h.edges.is_empty());
    for e in &h.edges {
        let s = h.truth.get(e[0]);
        assert!(e.iter().all(|&v| h.truth.get(v) == s));
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn full_monochromatic_hypergraph() {
    let n = 12;
    let h = gen_hsbm_probabilities(n, 1.0, 0.0, 6).unwrap();
    assert_eq!(h.edges.len() as u64, 2 * binomial(n / 2, 4));
    let a = multigraph_adjacency(&h);
    for i in 0..n {
        assert_eq!(a[(i, i)], 0);
        for j in 0..n {
            assert_eq!(a[(i, j)], a[(j, i)]);
            if i != j && h.truth.get(i) == h.truth.get(j) {
                assert_eq!(a[(i, j)] as u64, binomial(n / 2 - 2, 2));
            }
        }
    }
}

#[test]
fn multigraph_small_cases() {
    let y = SpikeVector::halves(6).unwrap();
    let h = Hypergraph::from_edges(6, vec![[3, 1, 0, 2]], y.clone()).unwrap();
    let a = multigraph_adjacency(&h);
    for i in 0..6 {
        for j in 0..6 {
            let want = (i != j && i < 4 && j < 4) as u32;
            assert_eq!(a[(i, j)], want);
        }
    }
    let empty = Hypergraph::from_edges(6, vec![], y.clone()).unwrap();
    assert_eq!(multigraph_adjacency(&empty).sum(), 0);
    assert!(Hypergraph::from_edges(6, vec![[0, 0, 1, 2]], y).is_err());
}

#[test]
fn flip_pair_statistic_variance() {
    let (n, k) = (8usize, 4usize);
    let y = sample_balanced(n, 0).unwrap();
    let a = (0..n).find(|&i| y.get(i) == 1).unwrap();
    let b = (0..n).find(|&i| y.get(i) == -1).unwrap();
    let mut diff = eq_tensor(&flip_pair(&y, a, b).unwrap(), k).unwrap();
    diff.add_scaled(&eq_tensor(&y, k).unwrap(), -1.0).unwrap();
    let stats: Vec<f64> =
        (0..2000).map(|s| tensor_inner(&gaussian_tensor(k, n, 10_000 + s).unwrap(), &diff).unwrap()).collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    let want = 2.0 * (n as f64).powi(k as i32) * (phi(1.0, k) - phi(1.0 - 4.0 / n as f64, k));
    assert!((var / want - 1.0).abs() <= 0.1, "{var} vs {want}");
}

#[test]
fn trial_seeds_are_order_free() {
    let a: Vec<u64> = (0..5).map(|t| derive_seed(&[7, 16, 4, 0, t])).collect();
    let b: Vec<u64> = (0..5).rev().map(|t| derive_seed(&[7, 16, 4, 0, t])).collect();
    assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
}
