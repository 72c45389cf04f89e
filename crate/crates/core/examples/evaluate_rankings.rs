//! Score rankings against ground truth with Recall@K, mAP@K and subset
//! Recall@K.
//!
//! Run: `cargo run --example evaluate_rankings`

use std::collections::BTreeMap;

use gmixer::metrics::{evaluate, MetricSpec};
use gmixer::GroundTruth;

fn main() -> gmixer::Result<()> {
    let ground_truth = vec![
        GroundTruth::new("q1", ["t1"])?.with_subset(["t1", "b", "c"]),
        GroundTruth::new("q2", ["t2", "t3"])?,
        GroundTruth::new("q3", ["t4"])?,
        GroundTruth::new("q4", ["t5"])?,
    ];
    let rankings: BTreeMap<String, Vec<&str>> = BTreeMap::from([
        ("q1".into(), vec!["a", "t1", "b", "c"]),
        ("q2".into(), vec!["t2", "x", "t3", "y"]),
        ("q3".into(), vec!["p", "q", "r", "s", "u", "v", "t4"]),
    ]);
    let spec = MetricSpec {
        recall_ks: vec![1, 2, 5, 10],
        map_ks: vec![3, 10],
        subset_recall_ks: vec![1],
    };
    let report = evaluate(&rankings, &ground_truth, &spec, serde_json::Value::Null)?;
    for (metric, by_k) in &report.per_k {
        for (k, value) in by_k {
            println!("{metric}@{k} = {value:.4}");
        }
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
