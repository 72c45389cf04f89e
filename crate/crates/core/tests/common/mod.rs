//! Shared helpers for the integration and acceptance tests.
//!
//! The `oracle_*` functions are a second, deliberately naive implementation
//! of the retrieval pipeline. They use plain `Vec<f64>` math and none of the
//! library's scoring code, so agreement between the two is evidence that
//! both are right.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::f64::consts::PI;

use gmixer::UnitVector;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_raw(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> UnitVector {
    UnitVector::new(random_raw(rng, dim)).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// Angle between two unit vectors, computed as `atan2(|a_perp|, a.b)` so it
/// stays accurate near 0 and near pi.
pub fn oracle_angle(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b);
    let perp: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - c * y).collect();
    norm(&perp).atan2(c)
}

/// Great-circle point at ratio `lambda` from `image` (0) to `text` (1).
pub fn oracle_slerp(text: &[f64], image: &[f64], lambda: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return image.to_vec();
    }
    if lambda == 1.0 {
        return text.to_vec();
    }
    let theta = oracle_cos(text, image).acos();
    assert!(theta <= PI - 1e-4, "oracle given a near-antipodal pair");
    let (wt, wi) = if theta < 1e-4 {
        (lambda, 1.0 - lambda)
    } else {
        (
            (lambda * theta).sin() / theta.sin(),
            ((1.0 - lambda) * theta).sin() / theta.sin(),
        )
    };
    let m: Vec<f64> = text
        .iter()
        .zip(image)
        .map(|(t, i)| wt * t + wi * i)
        .collect();
    let n = norm(&m);
    m.iter().map(|x| x / n).collect()
}

/// Indices of the `k` highest scores; equal scores keep index order.
pub fn oracle_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// A composed query over a plain-vector corpus.
pub struct OracleQuery<'a> {
    pub text: &'a [f64],
    pub image: &'a [f64],
    pub modification: &'a [f64],
    pub include: &'a [f64],
    pub exclude: &'a [f64],
}

/// Per-candidate `s_lambda` after per-ratio min-max and max-aggregation,
/// keyed by corpus index.
pub fn oracle_stage_one(
    q: &OracleQuery<'_>,
    corpus: &[Vec<f64>],
    lambdas: &[f64],
    k: usize,
) -> Vec<(usize, f64)> {
    let mut best: Vec<Option<f64>> = vec![None; corpus.len()];
    for &lambda in lambdas {
        let m = oracle_slerp(q.text, q.image, lambda);
        let scores: Vec<f64> = corpus.iter().map(|v| oracle_cos(&m, v)).collect();
        let top = oracle_top_k(&scores, k);
        let hi = top.iter().map(|&i| scores[i]).fold(f64::MIN, f64::max);
        let lo = top.iter().map(|&i| scores[i]).fold(f64::MAX, f64::min);
        for &i in &top {
            let s = if hi == lo {
                1.0
            } else {
                (scores[i] - lo) / (hi - lo)
            };
            best[i] = Some(best[i].map_or(s, |b: f64| b.max(s)));
        }
    }
    best.into_iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .collect()
}

/// Final `(index, score)` ranking with the default include/exclude term.
pub fn oracle_pipeline(
    q: &OracleQuery<'_>,
    corpus: &[Vec<f64>],
    lambdas: &[f64],
    k: usize,
) -> Vec<(usize, f64)> {
    oracle_pipeline_variant(q, corpus, lambdas, k, "default")
}

/// [`oracle_pipeline`] with the include/exclude term named by `variant`
/// (`default`, `in`, `ex` or `off`).
pub fn oracle_pipeline_variant(
    q: &OracleQuery<'_>,
    corpus: &[Vec<f64>],
    lambdas: &[f64],
    k: usize,
    variant: &str,
) -> Vec<(usize, f64)> {
    let relu = |x: f64| if x > 0.0 { x } else { 0.0 };
    let mut out: Vec<(usize, f64)> = oracle_stage_one(q, corpus, lambdas, k)
        .into_iter()
        .map(|(i, s_lambda)| {
            let v = &corpus[i];
            let s_m = oracle_cos(q.modification, v);
            let s_in = oracle_cos(q.include, v);
            let s_ex = oracle_cos(q.exclude, v);
            let d = match variant {
                "default" => relu(s_lambda - s_ex) - relu(s_lambda - s_in),
                "in" => relu(s_lambda - s_ex) + relu(s_in - s_lambda),
                "ex" => -relu(s_ex - s_lambda) - relu(s_lambda - s_in),
                "off" => 0.0,
                other => panic!("unknown variant {other}"),
            };
            (i, s_m + s_lambda + d)
        })
        .collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    out
}

/// Component of `v` outside span{a, b}, via Gram-Schmidt.
pub fn plane_residual(v: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let e1: Vec<f64> = {
        let n = norm(a);
        a.iter().map(|x| x / n).collect()
    };
    let c = dot(b, &e1);
    let w: Vec<f64> = b.iter().zip(&e1).map(|(x, e)| x - c * e).collect();
    let wn = norm(&w);
    let p1 = dot(v, &e1);
    let mut r: Vec<f64> = v.iter().zip(&e1).map(|(x, e)| x - p1 * e).collect();
    if wn > 1e-12 {
        let e2: Vec<f64> = w.iter().map(|x| x / wn).collect();
        let p2 = dot(&r, &e2);
        r.iter_mut().zip(&e2).for_each(|(x, e)| *x -= p2 * e);
    }
    norm(&r)
}

/// `count` grid values `start, start + step, ...`, rounded like the library
/// rounds its grids.
pub fn grid_values(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| ((start + step * i as f64) * 1e6).round() / 1e6)
        .collect()
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i:03}")).collect()
}
