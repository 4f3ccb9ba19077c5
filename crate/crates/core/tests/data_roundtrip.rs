use proptest::prelude::*;
use reta::data::{
    ingest_rm_scores, load_benchmark, validate_dataset, write_benchmark, write_rm_scores, BenchmarkDataset,
    LoadOptions, PromptRecord, ResponseRecord, RmScoreTable,
};

fn build(rows: &[Vec<(f64, f64)>], with_extras: bool) -> (BenchmarkDataset, RmScoreTable) {
    let mut prompts = Vec::new();
    let mut responses = Vec::new();
    let mut table = RmScoreTable {
        rm_name: "rm-a".into(),
        scores: Default::default(),
    };
    for (q, row) in rows.iter().enumerate() {
        let pid = format!("prompt \"{q}\"");
        prompts.push(PromptRecord {
            prompt_id: pid.clone(),
            text: format!("line one\nline {q} ✓"),
            embedding: with_extras.then(|| vec![0.6, 0.8]),
            perplexity: with_extras.then_some(1.5 + q as f64),
        });
        for (r, &(y, j)) in row.iter().enumerate() {
            let rid = format!("resp-{r}");
            table.scores.entry(pid.clone()).or_default().insert(rid.clone(), y);
            responses.push(ResponseRecord {
                prompt_id: pid.clone(),
                response_id: rid,
                text: with_extras.then(|| "ok".to_string()),
                oracle_score: j,
                oracle_samples: with_extras.then(|| vec![j, j]),
            });
        }
    }
    let ds = BenchmarkDataset::new("roundtrip", prompts, responses, &LoadOptions::default()).unwrap();
    (ds, table)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn write_then_load_is_identity(
        total in 2usize..6,
        prompts in 1usize..5,
        cells in prop::collection::vec((-1e6f64..1e6, 0.001f64..10.0), 30),
        with_extras in any::<bool>(),
    ) {
        let rows: Vec<Vec<(f64, f64)>> = (0..prompts)
            .map(|q| (0..total).map(|r| cells[(q * total + r) % cells.len()]).collect())
            .collect();
        let (ds, table) = build(&rows, with_extras);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip");
        write_benchmark(&ds, &path).unwrap();
        let loaded = load_benchmark(&path).unwrap();
        prop_assert_eq!(&loaded, &ds);
        prop_assert_eq!(load_benchmark(&path).unwrap(), loaded.clone());

        let scores = dir.path().join("scores.jsonl");
        write_rm_scores(&table, &scores).unwrap();
        let back = ingest_rm_scores(&loaded, &scores).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(back.len(), total * prompts);
        prop_assert!(validate_dataset(&loaded, &[back]).ok);
    }
}
