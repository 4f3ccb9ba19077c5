use proptest::prelude::*;
use reta::data::{BenchmarkDataset, LoadOptions, PromptRecord, ResponseRecord, RmScoreTable};
use reta::reta::{
    exhaustive_reta, point_estimates, reta_curve, reta_estimate, reta_point_estimate, Resampling, RetaConfig,
};
use reta::RankedResponses;

/// Independent reference: enumerate every n-subset by bitmask, re-sort it by
/// (RM score desc, id asc) and apply the smoothed body with `eta = num / den`
/// in exact integer arithmetic.
fn brute_force(rm: &[f64], oracle: &[f64], num: usize, den: usize, n: usize) -> f64 {
    let total = rm.len();
    let m = num * n / den;
    let d = (num * n % den) as f64 / den as f64;
    let mut acc = 0.0;
    let mut count = 0usize;
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let mut idx: Vec<usize> = (0..total).filter(|&i| mask & (1 << i) != 0).collect();
        idx.sort_by(|&a, &b| rm[b].partial_cmp(&rm[a]).unwrap().then(a.cmp(&b)));
        let j: Vec<f64> = idx.iter().map(|&i| oracle[i]).collect();
        let mut body: f64 = j[..m].iter().sum();
        if d > 0.0 {
            let last = if m > 0 { j[m - 1] } else { 0.0 };
            body += d * (d * j[m] + (1.0 - d) * last);
        }
        acc += body;
        count += 1;
    }
    let size = (num * n) as f64 / den as f64;
    let sum_j: f64 = oracle.iter().sum();
    total as f64 / size * (acc / count as f64) / sum_j
}

fn ids(total: usize) -> Vec<String> {
    (0..total).map(|i| format!("r{i:03}")).collect()
}

fn ranked(rm: &[f64], oracle: &[f64]) -> RankedResponses {
    let ids = ids(rm.len());
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    RankedResponses::new("q", &refs, rm, oracle)
}

fn enumerate() -> RetaConfig {
    RetaConfig {
        resampling: Resampling::Enumerate,
        ..RetaConfig::default()
    }
}

const RATIONAL_ETAS: [(usize, usize); 6] = [(1, 5), (1, 4), (1, 3), (1, 2), (7, 10), (1, 1)];

/// Builds a dataset and table from per-prompt (rm, oracle) rows.
fn dataset(rows: &[(Vec<f64>, Vec<f64>)]) -> (BenchmarkDataset, RmScoreTable) {
    let mut prompts = Vec::new();
    let mut responses = Vec::new();
    let mut table = RmScoreTable {
        rm_name: "rm".into(),
        scores: Default::default(),
    };
    for (q, (rm, oracle)) in rows.iter().enumerate() {
        let pid = format!("p{q:03}");
        prompts.push(PromptRecord {
            prompt_id: pid.clone(),
            text: String::new(),
            embedding: None,
            perplexity: None,
        });
        let entry = table.scores.entry(pid.clone()).or_default();
        for (r, (&y, &j)) in rm.iter().zip(oracle).enumerate() {
            let rid = format!("r{r:03}");
            entry.insert(rid.clone(), y);
            responses.push(ResponseRecord {
                prompt_id: pid.clone(),
                response_id: rid,
                text: None,
                oracle_score: j,
                oracle_samples: None,
            });
        }
    }
    let opts = LoadOptions {
        oracle_upper_bound: f64::INFINITY,
    };
    (BenchmarkDataset::new("t", prompts, responses, &opts).unwrap(), table)
}

fn rows_strategy(prompts: usize, total: usize) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    prop::collection::vec(
        (
            prop::collection::vec(-5.0f64..5.0, total),
            prop::collection::vec(0.1f64..10.0, total),
        ),
        prompts,
    )
}

fn small_config(seed: u64) -> RetaConfig {
    RetaConfig {
        resamples: 20,
        n_range_low_coeff: 1.0,
        n_range_high_coeff: 2.0,
        seed,
        ..RetaConfig::default()
    }
}

#[test]
fn four_response_example_is_four_thirds() {
    let r = ranked(&[4.0, 3.0, 2.0, 1.0], &[4.0, 3.0, 2.0, 1.0]);
    let v = reta_point_estimate(&r, 0.5, 2, &enumerate()).unwrap();
    assert!((v - 4.0 / 3.0).abs() < 1e-15);
    assert!((exhaustive_reta(&r, 0.5, 2).unwrap() - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn full_subset_reduces_to_top_selection() {
    let oracle = [2.0, 7.0, 1.0, 4.0, 3.0];
    let rm = [0.3, 0.9, 0.1, 0.5, 0.2];
    let r = ranked(&rm, &oracle);
    // n = N, eta = 2/5: the two best by RM are oracle 7 and 4
    let expected = 5.0 / 2.0 * (7.0 + 4.0) / 17.0;
    assert!((exhaustive_reta(&r, 0.4, 5).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn eta_one_is_exactly_one() {
    let rows: Vec<_> = (0..5)
        .map(|q| {
            let rm: Vec<f64> = (0..40).map(|i| ((i * 7 + q * 3) % 11) as f64).collect();
            let oracle: Vec<f64> = (0..40).map(|i| 1.0 + ((i * 13 + q) % 17) as f64 / 3.0).collect();
            (rm, oracle)
        })
        .collect();
    let (ds, table) = dataset(&rows);
    let est = reta_estimate(&ds, &table, 1.0, &RetaConfig::default()).unwrap();
    assert_eq!(est.value, 1.0);
    assert_eq!(est.std_error, 0.0);
    assert!(est.per_prompt.values().all(|&v| v == 1.0));
}

#[test]
fn too_many_subsets_is_refused() {
    let v: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
    let r = ranked(&v, &v);
    assert!(exhaustive_reta(&r, 0.5, 20).is_err());
    assert!(reta_point_estimate(&r, 0.5, 20, &enumerate()).is_err());
}

#[test]
fn continuity_across_integer_boundary() {
    let oracle = [9.0, 1.0, 6.0, 3.0, 8.0, 2.0, 5.0];
    let rm = [1.0, 7.0, 3.0, 4.0, 2.0, 6.0, 5.0];
    let r = ranked(&rm, &oracle);
    let n = 5;
    let sum_j: f64 = oracle.iter().sum();
    let max_j = oracle.iter().cloned().fold(0.0, f64::max);
    // eta n sweeps across 2 in steps of 0.001
    let step = 0.001 / n as f64;
    let mut prev = exhaustive_reta(&r, 1.9 / n as f64, n).unwrap();
    let mut eta = 1.9 / n as f64;
    while eta < 2.1 / n as f64 {
        eta += step;
        let cur = exhaustive_reta(&r, eta, n).unwrap();
        let bound = max_j * rm.len() as f64 / (eta * n as f64 * sum_j) * (step * n as f64);
        assert!((cur - prev).abs() <= 4.0 * bound, "jump {} at eta {eta}", (cur - prev).abs());
        prev = cur;
    }
}

#[test]
fn empty_n_grid_is_an_error() {
    let rows = vec![(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0])];
    let (ds, table) = dataset(&rows);
    assert!(reta_estimate(&ds, &table, 0.5, &RetaConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_independent_brute_force(
        total in 1usize..=8,
        raw_rm in prop::collection::vec(-3i32..3, 8),
        oracle in prop::collection::vec(0.1f64..10.0, 8),
    ) {
        // integer RM scores provoke ties
        let rm: Vec<f64> = raw_rm[..total].iter().map(|&x| x as f64).collect();
        let oracle = &oracle[..total];
        let r = ranked(&rm, oracle);
        for n in 1..=total {
            for &(num, den) in &RATIONAL_ETAS {
                let eta = num as f64 / den as f64;
                let reference = brute_force(&rm, oracle, num, den, n);
                let mc = reta_point_estimate(&r, eta, n, &enumerate()).unwrap();
                let ex = exhaustive_reta(&r, eta, n).unwrap();
                prop_assert!((mc - reference).abs() <= 1e-12, "mc {mc} ref {reference} n={n} eta={eta}");
                prop_assert!((ex - reference).abs() <= 1e-12, "ex {ex} ref {reference} n={n} eta={eta}");
            }
        }
    }

    #[test]
    fn multi_eta_matches_single_eta(
        rm in prop::collection::vec(-5.0f64..5.0, 30),
        oracle in prop::collection::vec(0.1f64..10.0, 30),
        n in 1usize..=30,
        seed in any::<u64>(),
    ) {
        let r = ranked(&rm, &oracle);
        let config = RetaConfig { resamples: 15, seed, ..RetaConfig::default() };
        let etas = [1.0, 0.7, 0.5, 0.3, 0.1, 0.01];
        let many = point_estimates(&r, &etas, n, &config).unwrap();
        for (eta, v) in etas.iter().zip(many) {
            prop_assert_eq!(v.to_bits(), reta_point_estimate(&r, *eta, n, &config).unwrap().to_bits());
        }
    }

    #[test]
    fn smoothing_vanishes_at_integer_selection(
        rm in prop::collection::vec(-5.0f64..5.0, 8),
        oracle in prop::collection::vec(0.1f64..10.0, 8),
        n in 1usize..=8,
        pick in 1usize..=8,
    ) {
        let m = pick.min(n);
        let eta = m as f64 / n as f64;
        let r = ranked(&rm, &oracle);
        // unsmoothed expectation: mean over subsets of the top-m sum
        let mut acc = 0.0;
        let mut count = 0.0;
        for mask in 0u32..256 {
            if mask.count_ones() as usize != n { continue; }
            let mut idx: Vec<usize> = (0..8).filter(|&i| mask & (1 << i) != 0).collect();
            idx.sort_by(|&a, &b| rm[b].partial_cmp(&rm[a]).unwrap().then(a.cmp(&b)));
            acc += idx[..m].iter().map(|&i| oracle[i]).sum::<f64>();
            count += 1.0;
        }
        let plain = 8.0 / m as f64 * (acc / count) / oracle.iter().sum::<f64>();
        let smoothed = reta_point_estimate(&r, eta, n, &enumerate()).unwrap();
        prop_assert!((plain - smoothed).abs() <= 1e-12);
    }

    #[test]
    fn monotone_transforms_are_bit_identical(rows in rows_strategy(3, 30), seed in any::<u64>()) {
        let (ds, table) = dataset(&rows);
        let config = small_config(seed);
        let grid = [1.0, 0.5, 0.25, 0.1];
        let base = reta_curve(&ds, &table, &grid, &config).unwrap();
        for f in [|y: f64| 2.0 * y + 7.0, f64::exp, f64::atan] {
            let moved = reta_curve(&ds, &table.map_scores(f), &grid, &config).unwrap();
            prop_assert_eq!(&base.points, &moved.points);
        }
    }

    #[test]
    fn oracle_scaling_leaves_prompt_value_unchanged(
        rows in rows_strategy(2, 30),
        c in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let (ds, table) = dataset(&rows);
        let mut scaled_rows = rows.clone();
        scaled_rows[0].1.iter_mut().for_each(|j| *j *= c);
        let (scaled, _) = dataset(&scaled_rows);
        let config = small_config(seed);
        for eta in [0.5, 0.3, 0.05] {
            let a = reta_estimate(&ds, &table, eta, &config).unwrap();
            let b = reta_estimate(&scaled, &table, eta, &config).unwrap();
            for (pid, v) in &a.per_prompt {
                prop_assert!((v - b.per_prompt[pid]).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn oracle_ranking_dominates_under_enumeration(
        rm in prop::collection::vec(-5.0f64..5.0, 7),
        oracle in prop::collection::vec(0.1f64..10.0, 7),
        n in 1usize..=7,
    ) {
        let r = ranked(&rm, &oracle);
        let best = ranked(&oracle, &oracle);
        // only selections of a whole number of responses; see the fractional counterexample below
        for m in 1..=n {
            let eta = m as f64 / n as f64;
            let a = reta_point_estimate(&best, eta, n, &enumerate()).unwrap();
            let b = reta_point_estimate(&r, eta, n, &enumerate()).unwrap();
            prop_assert!(a >= b - 1e-12, "oracle {a} < rm {b} at eta {eta}, n {n}");
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let rows: Vec<_> = (0..12)
        .map(|q| {
            let rm: Vec<f64> = (0..64).map(|i| (((i * 31 + q * 17) % 64) as f64).sin()).collect();
            let oracle: Vec<f64> = (0..64).map(|i| 1.0 + ((i * 7 + q * 5) % 23) as f64 / 4.0).collect();
            (rm, oracle)
        })
        .collect();
    let (ds, table) = dataset(&rows);
    let config = RetaConfig {
        resamples: 30,
        seed: 11,
        ..RetaConfig::default()
    };
    let grid = reta::reta::default_eta_grid();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| reta_curve(&ds, &table, &grid, &config).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(7));
}

/// A fractional selection weights the m-th pick by 1 + d - d^2 > 1, so ranking
/// the runner-up first can beat the oracle order.
#[test]
fn fractional_selection_can_favour_a_swapped_top() {
    let oracle = [10.0, 9.0, 1.0, 1.0, 1.0];
    let best = ranked(&oracle, &oracle);
    let swapped = ranked(&[4.0, 5.0, 3.0, 2.0, 1.0], &oracle);
    let a = reta_point_estimate(&best, 0.5, 5, &enumerate()).unwrap();
    let b = reta_point_estimate(&swapped, 0.5, 5, &enumerate()).unwrap();
    let scale = 5.0 / (0.5 * 5.0 * 22.0);
    assert!((a - 21.5 * scale).abs() < 1e-12, "{a}");
    assert!((b - 21.75 * scale).abs() < 1e-12, "{b}");
}
