use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reta::dpp::{diversity_score, sample_kdpp, DppError, DppModel, DppSampleConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn normalized(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let dim = rows[0].len();
    let mut m = DMatrix::zeros(rows.len(), dim);
    for (i, row) in rows.iter().enumerate() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (c, x) in row.iter().enumerate() {
            m[(i, c)] = x / norm;
        }
    }
    m
}

/// Three tight clusters of `per_cluster` unit vectors each in 8 dimensions.
fn clustered(per_cluster: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..8).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut rows = Vec::new();
    for c in &centers {
        for _ in 0..per_cluster {
            rows.push(
                c.iter()
                    .map(|x| {
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        x + 0.1 * noise
                    })
                    .collect(),
            );
        }
    }
    normalized(rows)
}

#[test]
fn orthogonal_embeddings_sample_uniformly() {
    let model = DppModel::from_matrix(DMatrix::identity(6, 6)).unwrap();
    let samples = 2000;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for seed in 0..samples {
        let s = sample_kdpp(&model, &DppSampleConfig::new(3, seed)).unwrap();
        *counts.entry(s.indices).or_default() += 1;
    }
    let subsets = 20.0;
    assert_eq!(counts.len(), 20);
    let p = 1.0 / subsets;
    let expected = samples as f64 * p;
    let sd = (samples as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in counts.values() {
        assert!((c as f64 - expected).abs() <= 4.0 * sd, "count {c} vs {expected}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    let critical = ChiSquared::new(subsets - 1.0).unwrap().inverse_cdf(0.9999);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn duplicate_pair_is_never_returned() {
    let e = normalized(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.6, 0.8]]);
    let model = DppModel::from_matrix(e).unwrap();
    for seed in 0..1000 {
        let s = sample_kdpp(&model, &DppSampleConfig::new(2, seed)).unwrap();
        assert_ne!(s.indices, vec![0, 1]);
    }
}

#[test]
fn linearly_dependent_subsets_are_never_returned() {
    // rows 0, 1, 2 span only a plane
    let e = normalized(vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![1.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 0.0, 1.0],
    ]);
    let model = DppModel::from_matrix(e).unwrap();
    for seed in 0..300 {
        let s = sample_kdpp(&model, &DppSampleConfig::new(3, seed)).unwrap();
        assert!(model.subset_determinant(&s.indices) > 1e-12, "{:?}", s.indices);
    }
}

#[test]
fn dpp_beats_uniform_on_clusters() {
    let model = DppModel::from_matrix(clustered(10, 5)).unwrap();
    let trials = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut dpp, mut uniform) = (0.0, 0.0);
    for seed in 0..trials {
        let s = sample_kdpp(&model, &DppSampleConfig::new(3, seed)).unwrap();
        dpp += diversity_score(&model, &s.indices);
        let u = index::sample(&mut rng, model.candidates(), 3).into_vec();
        uniform += diversity_score(&model, &u);
    }
    assert!(dpp / trials as f64 <= uniform / trials as f64, "dpp {dpp} uniform {uniform}");
}

#[test]
fn rank_below_k_is_degenerate() {
    let e = normalized((0..10).map(|i| vec![1.0 + i as f64, 2.0, 0.5 * i as f64, 1.0]).collect());
    let model = DppModel::from_matrix(e).unwrap();
    // rows are a + i b, so they span a plane
    assert_eq!(model.rank, 2);
    assert!(matches!(
        sample_kdpp(&model, &DppSampleConfig::new(3, 1)),
        Err(DppError::DegenerateInit { .. })
    ));
}

#[test]
fn long_chain_is_stable_and_deterministic() {
    let model = DppModel::from_matrix(clustered(20, 8)).unwrap();
    let config = DppSampleConfig {
        max_steps: Some(5000),
        ..DppSampleConfig::new(6, 3)
    };
    let a = sample_kdpp(&model, &config).unwrap();
    let b = sample_kdpp(&model, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.indices.len(), 6);
    assert!(model.subset_determinant(&a.indices) > 0.0);
}
