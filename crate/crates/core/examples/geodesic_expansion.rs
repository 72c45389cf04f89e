//! First-stage candidate expansion over a ratio grid.
//!
//! Each ratio retrieves its own top-K. Scores are min-max normalized per
//! ratio, the lists are unioned and each candidate keeps its best score.
//!
//! Run: `cargo run --example geodesic_expansion`

use gmixer::gmix::retrieve_per_lambda;
use gmixer::{expand, EmbeddingStore, LambdaGrid, RetrievalConfig, UnitVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> gmixer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 48;
    let mut random =
        || UnitVector::normalize((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect());
    let store = EmbeddingStore::from_entries(
        dim,
        (0..2000)
            .map(|i| random().map(|v| (format!("img_{i:04}"), v)))
            .collect::<gmixer::Result<Vec<_>>>()?,
    )?;
    let text = random()?;
    let image = random()?;

    let config = RetrievalConfig {
        grid: "0.7:1.0:0.1".parse()?,
        k_per_lambda: 10,
        exclude_reference: false,
    };
    for r in retrieve_per_lambda(&text, &image, &store, &config, None)? {
        let ids: Vec<&str> = r.hits.iter().take(4).map(|h| h.id.as_str()).collect();
        println!("lambda {:.2}: top {:?} ...", r.lambda.value(), ids);
    }

    let set = expand(&text, &image, &store, &config)?;
    println!(
        "\n{} candidates from {} ratios x K={}",
        set.len(),
        config.grid.ratios()?.len(),
        config.k_per_lambda
    );
    for hit in set.hits.iter().take(8) {
        println!(
            "{}  s_lambda {:.3}  best at {:.2}  seen at {} ratios",
            hit.id,
            hit.s_lambda,
            hit.best_lambda.value(),
            hit.raw_by_lambda.len()
        );
    }

    let fixed = expand(
        &text,
        &image,
        &store,
        &RetrievalConfig {
            grid: LambdaGrid::fixed(1.0)?,
            ..config
        },
    )?;
    println!("\ntext-only grid gives {} candidates", fixed.len());
    Ok(())
}
