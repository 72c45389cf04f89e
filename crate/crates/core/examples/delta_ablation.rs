//! Sweep the include/exclude term and the score toggles on a synthetic
//! corpus, printing Recall@K for each configuration.
//!
//! Run: `cargo run --release --example delta_ablation`

use gmixer::synth::{generate, LambdaDist, SynthSpec};
use gmixer::{recall_at_k, run_query, DeltaVariant, LambdaGrid, PipelineConfig};

fn main() -> gmixer::Result<()> {
    let spec = SynthSpec::new(
        64,
        500,
        200,
        0.05,
        LambdaDist::Uniform {
            low: 0.65,
            high: 0.95,
        },
        1,
    );
    let corpus = generate(&spec)?;
    let data = corpus.dataset()?;

    let eval = |config: &PipelineConfig| -> gmixer::Result<[f64; 3]> {
        let mut sums = [0.0; 3];
        for (record, gt) in data.queries.iter().zip(&corpus.ground_truth) {
            let ranking = run_query(&data.instance(record)?, &data.images, config)?.ranked_ids();
            for (s, k) in sums.iter_mut().zip([1, 5, 10]) {
                *s += recall_at_k(&ranking, gt, k)?;
            }
        }
        Ok(sums.map(|s| s / data.queries.len() as f64))
    };

    let mut rows: Vec<(String, PipelineConfig)> = DeltaVariant::ALL
        .iter()
        .map(|&variant| {
            let mut c = PipelineConfig::default();
            c.rerank.variant = variant;
            (format!("delta={variant}"), c)
        })
        .collect();
    let mut no_sm = PipelineConfig::default();
    no_sm.rerank.use_s_m = false;
    rows.push(("no s_m".into(), no_sm));
    let mut no_sl = PipelineConfig::default();
    no_sl.rerank.use_s_lambda = false;
    rows.push(("no s_lambda".into(), no_sl));
    let stage_one = PipelineConfig {
        rerank_enabled: false,
        ..PipelineConfig::default()
    };
    rows.push(("stage 1 only".into(), stage_one));
    let mut text_only = PipelineConfig::default();
    text_only.retrieval.grid = LambdaGrid::fixed(1.0)?;
    text_only.rerank.variant = DeltaVariant::Off;
    rows.push(("lambda=1, delta=off".into(), text_only));

    println!("{:<22} {:>6} {:>6} {:>6}", "config", "R@1", "R@5", "R@10");
    for (name, config) in &rows {
        let [r1, r5, r10] = eval(config)?;
        println!("{name:<22} {r1:>6.3} {r5:>6.3} {r10:>6.3}");
    }
    Ok(())
}
