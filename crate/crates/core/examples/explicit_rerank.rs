//! Second-stage re-ranking with include/exclude captions.
//!
//! Three candidates, hand-placed in 3-d so the score terms are easy to read.
//!
//! Run: `cargo run --example explicit_rerank`

use gmixer::{
    rerank, CandidateHit, CandidateSet, EmbeddingStore, MixRatio, QueryInstance, RerankOptions,
    RetrievalConfig, UnitVector,
};

fn v(x: &[f64]) -> UnitVector {
    UnitVector::normalize(x.to_vec()).unwrap()
}

fn main() -> gmixer::Result<()> {
    let store = EmbeddingStore::from_entries(
        3,
        [
            ("red_dress", v(&[1.0, 0.8, 0.0])),
            ("blue_dress", v(&[1.0, 0.0, 0.8])),
            ("red_shirt", v(&[0.2, 1.0, 0.0])),
        ],
    )?;
    let query = QueryInstance {
        query_id: "make-it-red".into(),
        reference_id: None,
        ref_embedding: v(&[1.0, 0.0, 1.0]),
        mod_text_embedding: v(&[1.0, 0.5, 0.0]),
        target_desc_embedding: v(&[1.0, 0.6, 0.0]),
        include_embedding: v(&[0.3, 1.0, 0.0]),
        exclude_embedding: v(&[0.3, 0.0, 1.0]),
    };
    // Stage-1 output for this example: pretend the blue dress scored highest.
    let hit = |id: &str, position, s_lambda| CandidateHit {
        id: id.into(),
        position,
        s_lambda,
        raw_by_lambda: vec![(MixRatio::TEXT, s_lambda)],
        best_lambda: MixRatio::TEXT,
    };
    let candidates = CandidateSet {
        hits: vec![
            hit("blue_dress", 1, 1.0),
            hit("red_dress", 0, 0.8),
            hit("red_shirt", 2, 0.0),
        ],
        config: RetrievalConfig::default(),
    };

    println!(
        "{:<11} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "id", "final", "s_m", "s_lam", "s_in", "s_ex", "delta"
    );
    for r in rerank(&candidates, &query, &store, &RerankOptions::default())? {
        println!(
            "{:<11} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            r.id, r.final_score, r.s_m, r.s_lambda, r.s_in, r.s_ex, r.delta
        );
    }
    Ok(())
}
