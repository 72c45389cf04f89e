//! Fixed mix ratios vs. a ratio range on a planted-target corpus.
//!
//! Targets sit at hidden ratios drawn from [0.65, 0.95]. Any single ratio
//! only suits part of the queries; the union over a range catches at least
//! everything each of its ratios catches.
//!
//! Run: `cargo run --release --example synthetic_benchmark`

use gmixer::manifest::Dataset;
use gmixer::synth::{generate, LambdaDist, SynthSpec};
use gmixer::{
    expand_for_reference, recall_at_k, run_query, DeltaVariant, LambdaGrid, PipelineConfig,
    RetrievalConfig,
};

// K=10 per ratio; at the default K=100 every ratio finds every target.
fn hit_rate(data: &Dataset, corpus: &gmixer::synth::SynthCorpus, grid: LambdaGrid) -> f64 {
    let config = RetrievalConfig {
        grid,
        k_per_lambda: 10,
        exclude_reference: true,
    };
    let hits = data
        .queries
        .iter()
        .zip(&corpus.ground_truth)
        .filter(|(record, gt)| {
            let q = data.instance(record).unwrap();
            let set = expand_for_reference(
                &q.target_desc_embedding,
                &q.ref_embedding,
                &data.images,
                &config,
                q.reference_id.as_deref(),
            )
            .unwrap();
            gt.targets.iter().any(|t| set.contains(t))
        })
        .count();
    hits as f64 / data.queries.len() as f64
}

fn recall_at_10(
    data: &Dataset,
    corpus: &gmixer::synth::SynthCorpus,
    config: &PipelineConfig,
) -> f64 {
    let total: f64 = data
        .queries
        .iter()
        .zip(&corpus.ground_truth)
        .map(|(record, gt)| {
            let q = data.instance(record).unwrap();
            let ranking = run_query(&q, &data.images, config).unwrap().ranked_ids();
            recall_at_k(&ranking, gt, 10).unwrap()
        })
        .sum();
    total / data.queries.len() as f64
}

fn main() {
    let range = LambdaGrid::default();
    let full = PipelineConfig::default();
    let mut baseline = PipelineConfig::default();
    baseline.retrieval.grid = LambdaGrid::fixed(1.0).unwrap();
    baseline.rerank.variant = DeltaVariant::Off;

    println!("seed | hit@range | hit@0.7 hit@0.8 hit@0.9 hit@1.0 | R@10 full | R@10 baseline");
    let (mut sum_full, mut sum_base) = (0.0, 0.0);
    for seed in 0..5u64 {
        let planted = LambdaDist::Uniform {
            low: 0.65,
            high: 0.95,
        };
        let spec = SynthSpec::new(64, 500, 200, 0.05, planted, seed);
        let corpus = generate(&spec).unwrap();
        let data = corpus.dataset().unwrap();
        let fixed: Vec<f64> = [0.7, 0.8, 0.9, 1.0]
            .iter()
            .map(|&l| hit_rate(&data, &corpus, LambdaGrid::fixed(l).unwrap()))
            .collect();
        let r_full = recall_at_10(&data, &corpus, &full);
        let r_base = recall_at_10(&data, &corpus, &baseline);
        sum_full += r_full;
        sum_base += r_base;
        println!(
            "{seed:>4} | {:>9.3} | {:.3}   {:.3}   {:.3}   {:.3}   | {r_full:>9.3} | {r_base:.3}",
            hit_rate(&data, &corpus, range),
            fixed[0],
            fixed[1],
            fixed[2],
            fixed[3],
        );
    }
    println!(
        "mean R@10: full {:.3}, baseline {:.3}",
        sum_full / 5.0,
        sum_base / 5.0
    );
}
