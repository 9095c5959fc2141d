//! Truncated SVD projection for embedding sets.
//!
//! The matrix is not centered before decomposition. Rather than a full dense
//! SVD, the projection `A·V_t = U_t·Σ_t` is recovered from the symmetric
//! eigendecomposition of whichever Gram matrix is smaller (`A·Aᵀ` when
//! `n ≤ d`, else `Aᵀ·A`), which keeps bag-of-words inputs with very large `d`
//! tractable and never materializes the `d`-dimensional basis unless needed.

use nalgebra::{DMatrix, DVector};

use super::{EmbedError, EmbeddingSet};

/// Project rows onto the top `target_dim` right singular directions.
pub fn reduce_svd(set: &EmbeddingSet, target_dim: usize) -> Result<EmbeddingSet, EmbedError> {
    let n = set.len();
    let d = set.dim();
    if target_dim < 1 {
        return Err(EmbedError::Config("target_dim must be >= 1".into()));
    }
    if target_dim > n.min(d) {
        return Err(EmbedError::Config(format!(
            "target_dim {target_dim} exceeds min(n, d) = {}",
            n.min(d)
        )));
    }

    let projected = if n <= d {
        // G = A Aᵀ = U Σ² Uᵀ; the projection is U_t Σ_t.
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = set.dot(i, j);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let (values, vectors) = sorted_eigen(gram);
        let mut out = vec![0.0; n * target_dim];
        for c in 0..target_dim {
            let sigma = values[c].max(0.0).sqrt();
            let col = vectors.column(c);
            for r in 0..n {
                out[r * target_dim + c] = col[r] * sigma;
            }
        }
        out
    } else {
        // C = Aᵀ A = V Σ² Vᵀ; the projection is A V_t.
        let dense = set.to_dense();
        let a = DMatrix::from_row_slice(n, d, &dense);
        let cov = a.transpose() * &a;
        let (_, vectors) = sorted_eigen(cov);
        let basis = vectors.columns(0, target_dim);
        let proj = &a * basis;
        let mut out = vec![0.0; n * target_dim];
        for r in 0..n {
            for c in 0..target_dim {
                out[r * target_dim + c] = proj[(r, c)];
            }
        }
        out
    };

    EmbeddingSet::from_dense(
        format!("{}-svd{target_dim}", set.embedder_id()),
        set.ids().to_vec(),
        target_dim,
        projected,
    )
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, each eigenvector
/// signed so its largest-magnitude component is positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(k, k);
    for (out_c, &src_c) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src_c]);
        let mut col: DVector<f64> = eig.eigenvectors.column(src_c).into();
        let mut pivot = 0usize;
        for r in 1..k {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(out_c, &col);
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::dot;
    use rand::{Rng, SeedableRng};

    fn random_set(seed: u64, n: usize, d: usize) -> EmbeddingSet {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        EmbeddingSet::from_rows("r", ids, rows).unwrap()
    }

    fn frob_sq(set: &EmbeddingSet) -> f64 {
        (0..set.len()).map(|i| set.dot(i, i)).sum()
    }

    #[test]
    fn exact_rank_projection_loses_nothing() {
        // Rows are combinations of two fixed directions: rank 2.
        let u = [1.0, 0.0, 2.0, -1.0, 0.5];
        let v = [0.0, 3.0, -1.0, 1.0, 1.0];
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                (0..5).map(|k| a * u[k] + b * v[k]).collect()
            })
            .collect();
        let ids: Vec<String> = (0..12).map(|i| format!("p{i}")).collect();
        let set = EmbeddingSet::from_rows("r", ids, rows).unwrap();
        let reduced = reduce_svd(&set, 2).unwrap();
        // Reconstruction error² = ‖A‖² − ‖A·V_t‖² for an orthonormal basis.
        let err_sq = frob_sq(&set) - frob_sq(&reduced);
        assert!(err_sq.abs() < 1e-8, "err_sq = {err_sq}");
    }

    #[test]
    fn full_dim_projection_preserves_inner_products() {
        let set = random_set(4, 9, 6);
        let reduced = reduce_svd(&set, 6).unwrap();
        for i in 0..set.len() {
            for j in 0..set.len() {
                assert!(
                    (set.dot(i, j) - reduced.dot(i, j)).abs() < 1e-8,
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn captured_variance_matches_dense_svd_oracle() {
        let set = random_set(7, 100, 50);
        let reduced = reduce_svd(&set, 10).unwrap();
        let captured = frob_sq(&reduced);
        // Oracle: full dense SVD of the same matrix.
        let a = nalgebra::DMatrix::from_row_slice(100, 50, &set.to_dense());
        let svd = a.svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        let expected: f64 = sv.iter().take(10).map(|s| s * s).sum();
        assert!(
            (captured - expected).abs() < 1e-6 * expected.max(1.0),
            "captured {captured} vs oracle {expected}"
        );
    }

    #[test]
    fn bad_target_dims_are_config_errors() {
        let set = random_set(1, 5, 4);
        assert!(matches!(reduce_svd(&set, 0), Err(EmbedError::Config(_))));
        assert!(matches!(reduce_svd(&set, 5), Err(EmbedError::Config(_))));
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // n < d uses the Gram route, n > d the covariance route; compare on a
        // square-ish matrix by checking pairwise inner products of both
        // projections against each other.
        let set = random_set(12, 20, 20);
        let via_gram = reduce_svd(&set, 5).unwrap();
        // Force the covariance route by widening with a zero column block.
        let mut rows: Vec<Vec<f64>> = (0..set.len()).map(|i| set.row(i).into_owned()).collect();
        for r in &mut rows {
            r.push(0.0);
        }
        let wide = EmbeddingSet::from_rows("r", set.ids().to_vec(), rows).unwrap();
        let via_cov = reduce_svd(&wide, 5).unwrap();
        for i in 0..set.len() {
            for j in 0..set.len() {
                assert!(
                    (via_gram.dot(i, j) - via_cov.dot(i, j)).abs() < 1e-7,
                    "({i},{j}): {} vs {}",
                    via_gram.dot(i, j),
                    via_cov.dot(i, j)
                );
            }
        }
        let per_dim = dot(&via_gram.row(0), &via_gram.row(0));
        assert!(per_dim.is_finite());
    }
}
