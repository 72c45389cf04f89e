//! Second-stage scoring and evaluation metrics.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2 as H;

use approx::assert_abs_diff_eq;
use common::*;
use gmixer::metrics::{evaluate, MetricSpec};
use gmixer::rerank::combine;
use gmixer::{
    delta, expand, map_at_k, recall_at_k, rerank, CandidateHit, CandidateSet, DeltaVariant,
    EmbeddingStore, GroundTruth, LambdaGrid, MixRatio, QueryInstance, RerankOptions,
    RetrievalConfig, UnitVector,
};
use proptest::prelude::*;

fn u(v: &[f64]) -> UnitVector {
    UnitVector::normalize(v.to_vec()).unwrap()
}

fn hit(id: &str, position: usize, s_lambda: f64) -> CandidateHit {
    CandidateHit {
        id: id.into(),
        position,
        s_lambda,
        raw_by_lambda: vec![(MixRatio::TEXT, s_lambda)],
        best_lambda: MixRatio::TEXT,
    }
}

fn query(modification: &[f64], include: &[f64], exclude: &[f64]) -> QueryInstance {
    QueryInstance {
        query_id: "q".into(),
        reference_id: None,
        ref_embedding: u(modification),
        mod_text_embedding: u(modification),
        target_desc_embedding: u(modification),
        include_embedding: u(include),
        exclude_embedding: u(exclude),
    }
}

#[test]
fn three_candidate_fixture_matches_hand_scores() {
    // Candidates A = e1, B = e2, C = (e1 + e3)/sqrt2; modification e1,
    // include e2, exclude e3.
    //   A: s_m 1, s_in 0, s_ex 0,  s_lambda 1    -> delta 1 - 1 = 0          final 2
    //   B: s_m 0, s_in 1, s_ex 0,  s_lambda 0    -> delta 0 - 0 = 0          final 0
    //   C: s_m h, s_in 0, s_ex h,  s_lambda 0.25 -> delta 0 - 0.25 = -0.25   final h
    let store = EmbeddingStore::from_entries(
        3,
        [
            ("A", u(&[1.0, 0.0, 0.0])),
            ("B", u(&[0.0, 1.0, 0.0])),
            ("C", u(&[1.0, 0.0, 1.0])),
        ],
    )
    .unwrap();
    let candidates = CandidateSet {
        hits: vec![hit("A", 0, 1.0), hit("C", 2, 0.25), hit("B", 1, 0.0)],
        config: RetrievalConfig::default(),
    };
    let q = query(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
    let rows = rerank(&candidates, &q, &store, &RerankOptions::default()).unwrap();

    let order: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(order, ["A", "C", "B"]);
    let want = [(2.0, 0.0), (H, -0.25), (0.0, 0.0)];
    for (row, (final_score, d)) in rows.iter().zip(want) {
        assert_abs_diff_eq!(row.final_score, final_score, epsilon = 1e-12);
        assert_abs_diff_eq!(row.delta, d, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(rows[1].s_ex, H, epsilon = 1e-12);
}

#[test]
fn include_aligned_candidate_beats_exclude_aligned_twin() {
    // Include and exclude are orthogonal; the modification text sits halfway,
    // so only the sign of delta separates the two.
    let inc = [1.0, 0.0, 0.0];
    let exc = [0.0, 1.0, 0.0];
    let store = EmbeddingStore::from_entries(
        3,
        [("looks_excluded", u(&exc)), ("looks_included", u(&inc))],
    )
    .unwrap();
    let candidates = CandidateSet {
        hits: vec![hit("looks_excluded", 0, 0.5), hit("looks_included", 1, 0.5)],
        config: RetrievalConfig::default(),
    };
    let q = query(&[1.0, 1.0, 0.0], &inc, &exc);
    let rows = rerank(&candidates, &q, &store, &RerankOptions::default()).unwrap();
    assert_eq!(rows[0].id, "looks_included");
    assert_abs_diff_eq!(rows[0].s_m, rows[1].s_m, epsilon = 1e-15);
    assert_abs_diff_eq!(rows[0].delta, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(rows[1].delta, -0.5, epsilon = 1e-15);
}

#[test]
fn off_without_s_m_keeps_first_stage_order() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(21);
    let corpus: Vec<UnitVector> = (0..60).map(|_| random_unit(&mut rng, 8)).collect();
    let store = EmbeddingStore::from_entries(8, ids(60).into_iter().zip(corpus)).unwrap();
    let q = QueryInstance {
        query_id: "q".into(),
        reference_id: None,
        ref_embedding: random_unit(&mut rng, 8),
        mod_text_embedding: random_unit(&mut rng, 8),
        target_desc_embedding: random_unit(&mut rng, 8),
        include_embedding: random_unit(&mut rng, 8),
        exclude_embedding: random_unit(&mut rng, 8),
    };
    let config = RetrievalConfig {
        grid: LambdaGrid::default(),
        k_per_lambda: 10,
        exclude_reference: false,
    };
    let set = expand(&q.target_desc_embedding, &q.ref_embedding, &store, &config).unwrap();
    let options = RerankOptions {
        variant: DeltaVariant::Off,
        use_s_m: false,
        ..RerankOptions::default()
    };
    let rows = rerank(&set, &q, &store, &options).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
        set.ids().collect::<Vec<_>>()
    );
}

#[test]
fn unknown_candidate_is_an_error() {
    let store = EmbeddingStore::from_entries(2, [("a", u(&[1.0, 0.0]))]).unwrap();
    let candidates = CandidateSet {
        hits: vec![hit("missing", 0, 1.0)],
        config: RetrievalConfig::default(),
    };
    let q = query(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]);
    assert!(matches!(
        rerank(&candidates, &q, &store, &RerankOptions::default()),
        Err(gmixer::Error::UnknownId(id)) if id == "missing"
    ));
}

fn unit_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| norm(v) > 1e-3)
}

prop_compose! {
    fn scenario()(dim in 2usize..8)(
        corpus in prop::collection::vec(unit_vec(dim), 1..30),
        vs in prop::collection::vec(unit_vec(dim), 5),
        k in 1usize..8,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, usize) {
        (corpus, vs, k)
    }
}

fn build(
    corpus: &[Vec<f64>],
    vs: &[Vec<f64>],
    k: usize,
    swap: bool,
) -> (EmbeddingStore, QueryInstance, CandidateSet) {
    let dim = corpus[0].len();
    let store = EmbeddingStore::from_entries(
        dim,
        ids(corpus.len())
            .into_iter()
            .zip(corpus.iter().map(|v| u(v))),
    )
    .unwrap();
    let (inc, exc) = if swap {
        (&vs[4], &vs[3])
    } else {
        (&vs[3], &vs[4])
    };
    let q = QueryInstance {
        query_id: "q".into(),
        reference_id: None,
        ref_embedding: u(&vs[0]),
        mod_text_embedding: u(&vs[1]),
        target_desc_embedding: u(&vs[2]),
        include_embedding: u(inc),
        exclude_embedding: u(exc),
    };
    let config = RetrievalConfig {
        grid: LambdaGrid::new(0.7, 1.0, 0.1).unwrap(),
        k_per_lambda: k,
        exclude_reference: false,
    };
    let set = expand(&q.target_desc_embedding, &q.ref_embedding, &store, &config).unwrap();
    (store, q, set)
}

proptest! {
    #[test]
    fn rerank_permutes_and_decomposes((corpus, vs, k) in scenario()) {
        prop_assume!(oracle_angle(&u(&vs[2]).into_inner(), &u(&vs[0]).into_inner()) < 3.1);
        let (store, q, set) = build(&corpus, &vs, k, false);
        for variant in DeltaVariant::ALL {
            for (use_s_m, use_s_lambda) in [(true, true), (false, true), (true, false)] {
                let options = RerankOptions { variant, use_s_m, use_s_lambda, normalize_s_m: false };
                let rows = rerank(&set, &q, &store, &options).unwrap();
                let mut got: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
                let mut want: Vec<&str> = set.ids().collect();
                got.sort_unstable();
                want.sort_unstable();
                prop_assert_eq!(got, want);
                for r in &rows {
                    prop_assert_eq!(r.final_score, combine(r.s_m, r.s_lambda, r.delta, &options));
                    let s_m = if use_s_m { r.s_m } else { 0.0 };
                    let s_l = if use_s_lambda { r.s_lambda } else { 0.0 };
                    prop_assert!((s_m + s_l + r.delta - r.final_score).abs() <= 1e-12);
                    prop_assert!((-2.0..=2.0).contains(&r.delta));
                }
                prop_assert!(rows.windows(2).all(|w| w[0].final_score >= w[1].final_score));
            }
        }
    }

    #[test]
    fn swapping_include_and_exclude_negates_delta((corpus, vs, k) in scenario()) {
        prop_assume!(oracle_angle(&u(&vs[2]).into_inner(), &u(&vs[0]).into_inner()) < 3.1);
        let (store, q, set) = build(&corpus, &vs, k, false);
        let (_, swapped, _) = build(&corpus, &vs, k, true);
        let a = rerank(&set, &q, &store, &RerankOptions::default()).unwrap();
        let b = rerank(&set, &swapped, &store, &RerankOptions::default()).unwrap();
        let by_id: BTreeMap<&str, f64> = b.iter().map(|r| (r.id.as_str(), r.delta)).collect();
        for r in &a {
            prop_assert_eq!(r.delta, -by_id[r.id.as_str()]);
        }
    }

    #[test]
    fn default_delta_is_monotone(
        s in 0.0f64..=1.0, i in -1.0f64..=1.0, e in -1.0f64..=1.0, bump in 0.0f64..=1.0,
    ) {
        let base = delta(s, i, e, DeltaVariant::Default).unwrap();
        prop_assert!(delta(s, i + bump, e, DeltaVariant::Default).unwrap() >= base);
        prop_assert!(delta(s, i, e + bump, DeltaVariant::Default).unwrap() <= base);
    }

    #[test]
    fn recall_is_monotone_and_ap_tracks_recall(
        n in 1usize..40, target in 0usize..45, seed in any::<u64>(),
    ) {
        let mut ranking: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let mut state = seed;
        for j in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ranking.swap(j, (state >> 33) as usize % (j + 1));
        }
        let gt = GroundTruth::new("q", [format!("i{target}")]).unwrap();
        let mut prev = (0.0, 0.0);
        for k in 1..=n + 3 {
            let r = recall_at_k(&ranking, &gt, k).unwrap();
            let ap = map_at_k(&ranking, &gt, k).unwrap();
            prop_assert!(r >= prev.0 && ap >= prev.1);
            prop_assert_eq!(ap > 0.0, r == 1.0);
            prev = (r, ap);
        }
    }
}

#[test]
fn query_order_does_not_change_the_report() {
    let gts: Vec<GroundTruth> = (0..6)
        .map(|q| GroundTruth::new(format!("q{q}"), [format!("t{q}")]).unwrap())
        .collect();
    let mut rankings: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for q in 0..6 {
        let mut r: Vec<String> = (0..8).map(|i| format!("x{i}")).collect();
        r.insert(q, format!("t{q}"));
        rankings.insert(format!("q{q}"), r);
    }
    let spec = MetricSpec::default();
    let forward = evaluate(&rankings, &gts, &spec, serde_json::Value::Null).unwrap();
    let mut reversed = gts.clone();
    reversed.reverse();
    let backward = evaluate(&rankings, &reversed, &spec, serde_json::Value::Null).unwrap();
    assert_eq!(forward.per_k, backward.per_k);
    assert_eq!(forward.get("recall", 1), Some(1.0 / 6.0));
    assert_eq!(forward.get("recall", 5), Some(5.0 / 6.0));
}

#[test]
fn missing_rankings_count_as_zero_with_a_warning() {
    let gts = vec![
        GroundTruth::new("a", ["t"]).unwrap(),
        GroundTruth::new("b", ["t"]).unwrap(),
    ];
    let rankings = BTreeMap::from([("a".to_string(), vec!["t".to_string()])]);
    let report = evaluate(
        &rankings,
        &gts,
        &MetricSpec::default(),
        serde_json::Value::Null,
    )
    .unwrap();
    assert_eq!(report.get("recall", 1), Some(0.5));
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("\"b\""));
}
