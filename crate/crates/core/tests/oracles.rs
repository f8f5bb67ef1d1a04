//! Library results against independent implementations: nalgebra's
//! symmetric eigensolver for PCA, definition-level scans for coherence.

mod common;

use std::collections::BTreeSet;

use atm::coherence::{self, CountMode};
use atm::topics::{pca_project, symmetric_eigen, WordEmbeddings};
use common::oracle;
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn jacobi_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [1usize, 2, 5, 12, 30] {
        let b = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>() - 0.5);
        let a = &b + &b.t();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        let na = DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
        let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in vals.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
        }
        // A v = lambda v, V orthonormal
        let av = a.dot(&vecs);
        for k in 0..n {
            for i in 0..n {
                assert!((av[[i, k]] - vals[k] * vecs[[i, k]]).abs() < 1e-10);
            }
        }
        let gram = vecs.t().dot(&vecs);
        assert!(gram
            .indexed_iter()
            .all(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12));
    }
}

#[test]
fn pca_matches_nalgebra_up_to_component_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vectors = Array2::from_shape_simple_fn((40, 6), || rng.random::<f64>());
    let emb = WordEmbeddings {
        words: (0..40).map(|i| i.to_string()).collect(),
        vectors,
    };
    let ids: Vec<usize> = (0..40).step_by(2).collect();
    let ours = pca_project(&emb, &ids, 3).unwrap();

    let x = DMatrix::from_fn(ids.len(), 6, |i, j| emb.vectors[[ids[i], j]]);
    let mean = x.row_mean();
    let c = DMatrix::from_fn(ids.len(), 6, |i, j| x[(i, j)] - mean[j]);
    let cov = c.transpose() * &c / (ids.len() as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    for (k, &col) in order.iter().take(3).enumerate() {
        let proj = &c * eig.eigenvectors.column(col);
        let sign = if (0..ids.len()).map(|i| proj[i] * ours[[i, k]]).sum::<f64>() < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..ids.len() {
            assert!((sign * proj[i] - ours[[i, k]]).abs() < 1e-9);
        }
    }
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..9, 0..15), 3..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coherence_matches_definitions(docs in corpus_strategy(), window in 2usize..6, topic in prop::sample::subsequence((0usize..9).collect::<Vec<_>>(), 2..6)) {
        let targets: BTreeSet<usize> = topic.iter().copied().collect();
        let doc_t = coherence::count_cooccurrences(&docs, &targets, CountMode::Document).unwrap();
        let u = coherence::umass(&topic, &doc_t).unwrap().score;
        prop_assert!((u - oracle::umass(&docs, &topic)).abs() <= 1e-12);

        if let Ok(win_t) = coherence::count_cooccurrences(&docs, &targets, CountMode::Window(window)) {
            if let Ok(ours) = coherence::uci(&topic, &win_t) {
                prop_assert!((ours.score - oracle::uci(&docs, &topic, window)).abs() <= 1e-12);
                let n = coherence::npmi(&topic, &win_t).unwrap().score;
                prop_assert!((n - oracle::npmi(&docs, &topic, window)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn topq_matches_definition(scores in prop::collection::vec(-10.0f64..10.0, 1..30), q in 1u32..=100) {
        let q = q as f64;
        let ours = coherence::aggregate_topq(&scores, q).unwrap();
        prop_assert!((ours - oracle::topq(&scores, q)).abs() <= 1e-12);
    }
}
