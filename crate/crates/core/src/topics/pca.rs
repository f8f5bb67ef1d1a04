use ndarray::{Array1, Array2, Axis};

use super::WordEmbeddings;
use crate::error::{AtmError, Result};

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns. Sweeps stop once the off-diagonal Frobenius norm
/// drops below `1e-10 * |A|_F`, followed by one polishing sweep.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(AtmError::Shape(format!(
            "matrix is {:?}, not square",
            a.dim()
        )));
    }
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &Array2<f64>| {
        let mut s = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                s += 2.0 * a[[p, q]] * a[[p, q]];
            }
        }
        s.sqrt()
    };

    let mut polish = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= JACOBI_TOL * scale {
            if polish {
                break;
            }
            polish = true;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if off(&a) > JACOBI_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(AtmError::Numeric(
            "Jacobi iteration did not converge".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok((values, vectors))
}

/// Projects the selected embedding rows onto their top `out_dim` principal
/// axes. Each axis is signed so its largest-magnitude component is positive.
///
/// Rank-deficient selections are allowed as long as some variance exists;
/// the surplus coordinates then come out as zero.
pub fn pca_project(
    emb: &WordEmbeddings,
    word_ids: &[usize],
    out_dim: usize,
) -> Result<Array2<f64>> {
    if out_dim == 0 {
        return Err(AtmError::Value("out_dim must be positive".into()));
    }
    if word_ids.len() < out_dim + 1 {
        return Err(AtmError::Value(format!(
            "PCA to {out_dim} dimensions needs at least {} words, got {}",
            out_dim + 1,
            word_ids.len()
        )));
    }
    if out_dim > emb.dim() {
        return Err(AtmError::Rank {
            rank: emb.dim(),
            needed: out_dim,
        });
    }
    if let Some(&bad) = word_ids.iter().find(|&&i| i >= emb.vectors.nrows()) {
        return Err(AtmError::Index {
            index: bad,
            len: emb.vectors.nrows(),
        });
    }
    let x = emb.vectors.select(Axis(0), word_ids);
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (word_ids.len() as f64 - 1.0);
    let (values, vectors) = symmetric_eigen(&cov)?;

    let top = values[0];
    let rank = values.iter().filter(|&&l| l > 1e-12 * top.max(0.0)).count();
    if top <= 0.0 || rank == 0 {
        return Err(AtmError::Rank {
            rank: 0,
            needed: out_dim,
        });
    }

    let mut axes = vectors.slice(ndarray::s![.., ..out_dim]).to_owned();
    for mut col in axes.columns_mut() {
        let lead = col.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if lead < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(centered.dot(&axes))
}
