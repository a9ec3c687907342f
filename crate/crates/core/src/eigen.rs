//! Symmetric eigensolvers: a dense path backed by nalgebra and a restarted
//! block Krylov (block Lanczos with full reorthogonalization) path for large
//! sparse operators.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `n x count`, column `c` belongs to `values[c]`.
    pub vectors: DMatrix<f64>,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::EigenFailure("matrix has non-finite entries".into()))
    }
}

/// Full decomposition of a dense symmetric matrix, eigenvalues ascending.
pub fn dense_ascending(m: DMatrix<f64>) -> Result<EigenPairs> {
    check_finite(&m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("dense QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenPairs { values, vectors })
}

/// Eigenvalues of a dense symmetric matrix in ascending order.
pub fn dense_eigenvalues_ascending(m: DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(&m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// A symmetric linear operator known only through products.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `out = A * v`.
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Residual tolerance `||A y - theta y||` for every wanted Ritz pair.
    pub tol: f64,
    /// Basis size at which the iteration restarts.
    pub max_basis: usize,
    pub max_restarts: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            tol: 1e-9,
            max_basis: 400,
            max_restarts: 60,
        }
    }
}

/// The `count` largest eigenpairs of `op`, eigenvalues in descending order.
///
/// The starting block is the all-ones vector plus small index-dependent
/// perturbations drawn from a fixed ChaCha8 stream, so results are
/// reproducible. A block of `count` vectors lets repeated eigenvalues (one
/// per connected component of a graph) be resolved.
pub fn largest_eigenpairs<Op: SymmetricOperator>(
    op: &Op,
    count: usize,
    opts: KrylovOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    if count == 0 || n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
        });
    }
    let count = count.min(n);
    let block = (count + 2).min(n);
    let max_basis = opts.max_basis.max(3 * block).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(0x6b72_796c_6f76);
    let mut start: Vec<Vec<f64>> = (0..block)
        .map(|c| {
            (0..n)
                .map(|_| {
                    let jitter: f64 = rng.random_range(-0.5..0.5);
                    if c == 0 {
                        1.0 + 1e-3 * jitter
                    } else {
                        jitter
                    }
                })
                .collect()
        })
        .collect();

    let mut last_residual = f64::INFINITY;
    for _ in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut images: Vec<Vec<f64>> = Vec::new();
        let mut pending = std::mem::take(&mut start);

        loop {
            let mut added = Vec::new();
            for mut v in pending.drain(..) {
                if orthonormalize_against(&mut v, &basis) {
                    basis.push(v);
                    added.push(basis.len() - 1);
                    if basis.len() == max_basis {
                        break;
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            for &c in &added {
                let mut av = vec![0.0; n];
                op.apply(&basis[c], &mut av);
                images.push(av);
            }
            if basis.len() >= max_basis {
                break;
            }
            pending = added.iter().map(|&c| images[c].clone()).collect();
        }

        let m = basis.len();
        let projected = DMatrix::from_fn(m, m, |r, c| {
            let a = dot(&basis[r], &images[c]);
            let b = dot(&basis[c], &images[r]);
            0.5 * (a + b)
        });
        let ritz = dense_ascending(projected)?;
        let take = count.min(m);
        let mut values = Vec::with_capacity(take);
        let mut vectors = DMatrix::zeros(n, take);
        let mut worst = 0.0f64;
        let mut ritz_vectors = Vec::with_capacity(block.min(m));
        for c in 0..block.min(m) {
            let col = m - 1 - c;
            let theta = ritz.values[col];
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for r in 0..m {
                let s = ritz.vectors[(r, col)];
                axpy(s, &basis[r], &mut y);
                axpy(s, &images[r], &mut ay);
            }
            if c < take {
                let res: f64 = ay
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - theta * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(res);
                values.push(theta);
                for (r, v) in y.iter().enumerate() {
                    vectors[(r, c)] = *v;
                }
            }
            ritz_vectors.push(y);
        }
        // An invariant subspace (m == n or the Krylov space closed) is exact.
        if worst <= opts.tol || m == n || m < max_basis {
            return Ok(EigenPairs { values, vectors });
        }
        last_residual = worst;
        start = ritz_vectors;
    }
    Err(Error::EigenFailure(format!(
        "block Krylov iteration stalled with residual {last_residual:.3e}"
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two rounds of Gram-Schmidt against `basis`, then normalize. Returns false
/// when `v` is numerically inside the span already.
fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let before = dot(v, v).sqrt();
    if before == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
    let after = dot(v, v).sqrt();
    if after <= 1e-10 * before {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= after);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense(DMatrix<f64>);

    impl SymmetricOperator for Dense {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, v: &[f64], out: &mut [f64]) {
            for (r, o) in out.iter_mut().enumerate() {
                *o = (0..v.len()).map(|c| self.0[(r, c)] * v[c]).sum();
            }
        }
    }

    #[test]
    fn dense_sorted_ascending() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = dense_ascending(m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn krylov_matches_dense_with_multiplicity() {
        // block diagonal: three copies of a path Laplacian-like block plus noise
        let n = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = DMatrix::zeros(n, n);
        for b in 0..3 {
            for i in 0..40 {
                let r = b * 40 + i;
                m[(r, r)] = 2.0;
                if i + 1 < 40 {
                    let w: f64 = rng.random_range(0.5..1.0);
                    m[(r, r + 1)] = w;
                    m[(r + 1, r)] = w;
                }
            }
        }
        let dense = dense_ascending(m.clone()).unwrap();
        let opts = KrylovOptions {
            max_basis: 40,
            ..Default::default()
        };
        let top = largest_eigenpairs(&Dense(m.clone()), 5, opts).unwrap();
        for c in 0..5 {
            let expect = dense.values[n - 1 - c];
            assert!((top.values[c] - expect).abs() < 1e-8, "{c}: {} vs {expect}", top.values[c]);
            let v = top.vectors.column(c);
            let res = (&m * v - v * top.values[c]).norm();
            assert!(res < 1e-7);
        }
    }
}
