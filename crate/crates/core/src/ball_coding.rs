//! Granular-ball statistics and description lengths (in nats).
//!
//! A ball is coded either by an isotropic Gaussian around its center or by a
//! subspace-adaptive Gaussian with separate variances inside and orthogonal
//! to its leading `q` principal directions. The leaf code is the shorter of
//! the two plus `log 2` nats to say which one was used (for `d > 1`).

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::DataMatrix;
use crate::eigen::dense_ascending;
use crate::{Error, Result, EPSILON};

/// `log(2 pi) + 1`, the per-coordinate Gaussian code at the ML variance.
const GAUSS_CONST: f64 = 2.837_877_066_409_345_6;

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `max{ median_i[(d_i^(1))^2] / d, eps }` with the mean-of-middle-two median
/// for even lengths.
pub fn variance_floor(nn1: &[f64], d: usize, eps: f64) -> f64 {
    if nn1.is_empty() || d == 0 {
        return eps;
    }
    let mut sq: Vec<f64> = nn1.iter().map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    let m = sq.len();
    let median = if m % 2 == 1 {
        sq[m / 2]
    } else {
        0.5 * (sq[m / 2 - 1] + sq[m / 2])
    };
    (median / d as f64).max(eps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallStats {
    pub indices: Vec<usize>,
    pub center: Vec<f64>,
    pub sse: f64,
    pub radius: f64,
    pub eff_var: f64,
}

impl BallStats {
    pub fn n_b(&self) -> usize {
        self.indices.len()
    }
}

/// Center, SSE, radius and floored effective variance of a ball.
pub fn ball_statistics(indices: &[usize], x: &DataMatrix, sigma2_min: f64) -> Result<BallStats> {
    if indices.is_empty() {
        return Err(Error::EmptyBall);
    }
    let d = x.d();
    let n_b = indices.len();
    let mut sums = vec![CompensatedSum::default(); d];
    for &i in indices {
        for (s, v) in sums.iter_mut().zip(x.row(i)) {
            s.add(*v);
        }
    }
    let center: Vec<f64> = sums.iter().map(|s| s.value() / n_b as f64).collect();
    let mut sse = CompensatedSum::default();
    let mut radius_sq = 0.0f64;
    for &i in indices {
        let r2: f64 = x
            .row(i)
            .iter()
            .zip(&center)
            .map(|(v, c)| (v - c) * (v - c))
            .sum();
        sse.add(r2);
        radius_sq = radius_sq.max(r2);
    }
    let sse = sse.value().max(0.0);
    let eff_var = if d == 0 {
        sigma2_min
    } else {
        (sse / (n_b * d) as f64).max(sigma2_min)
    };
    Ok(BallStats {
        indices: indices.to_vec(),
        center,
        sse,
        radius: radius_sq.sqrt(),
        eff_var,
    })
}

/// `(n_B d / 2)[log 2pi + 1 + log var] + ((d + 1)/2) log max{n_B, 2}`.
pub fn iso_code(stats: &BallStats, d: usize) -> f64 {
    let n_b = stats.n_b() as f64;
    let dd = d as f64;
    0.5 * n_b * dd * (GAUSS_CONST + stats.eff_var.ln()) + 0.5 * (dd + 1.0) * n_b.max(2.0).ln()
}

/// Eigen-decomposition of the unnormalized scatter matrix of a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSpectrum {
    /// Descending, clamped to be non-negative; always `d` entries.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvector of the largest eigenvalue, sign fixed so the entry of
    /// largest magnitude (lowest index on ties) is positive.
    pub principal: Vec<f64>,
}

/// Spectrum of `M_B = sum (x_i - c)(x_i - c)^T`. Uses the `d x d` scatter
/// when `d <= n_B` and the `n_B x n_B` Gram matrix otherwise.
pub fn scatter_spectrum(
    indices: &[usize],
    x: &DataMatrix,
    center: &[f64],
) -> Result<ScatterSpectrum> {
    if indices.is_empty() {
        return Err(Error::EmptyBall);
    }
    let d = x.d();
    let n_b = indices.len();
    let centered = DMatrix::from_fn(n_b, d, |r, c| x.row(indices[r])[c] - center[c]);

    let (mut eigenvalues, mut principal) = if d <= n_b {
        let scatter = centered.tr_mul(&centered);
        let eig = dense_ascending(symmetrize(scatter))?;
        let values: Vec<f64> = eig.values.iter().rev().copied().collect();
        let top = eig.vectors.column(d - 1).iter().copied().collect();
        (values, top)
    } else {
        let gram = &centered * centered.transpose();
        let eig = dense_ascending(symmetrize(gram))?;
        let mut values: Vec<f64> = eig.values.iter().rev().copied().collect();
        values.resize(d, 0.0);
        let u = eig.vectors.column(n_b - 1);
        let v = centered.tr_mul(&u);
        let norm = v.norm();
        let top: Vec<f64> = if norm > 0.0 {
            v.iter().map(|t| t / norm).collect()
        } else {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            e
        };
        (values, top)
    };
    for v in &mut eigenvalues {
        *v = v.max(0.0);
    }
    fix_sign(&mut principal);
    Ok(ScatterSpectrum {
        eigenvalues,
        principal,
    })
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for r in 0..n {
        for c in r + 1..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
    m
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Number of free parameters of the `q`-dimensional subspace model.
pub fn subspace_param_count(d: usize, q: usize) -> usize {
    d + usize::from(q > 0) + usize::from(d > q) + q * (d - q)
}

/// Subspace-adaptive code for a single intrinsic dimension `q`.
pub fn subspace_code_at(
    stats: &BallStats,
    spectrum: &ScatterSpectrum,
    sigma2_min: f64,
    q: usize,
) -> f64 {
    let d = spectrum.eigenvalues.len();
    let n_b = stats.n_b() as f64;
    let head: f64 = spectrum.eigenvalues[..q].iter().sum();
    let tail: f64 = spectrum.eigenvalues[q..].iter().sum();
    let parallel = if q > 0 {
        let var = (head / (n_b * q as f64)).max(sigma2_min);
        0.5 * n_b * q as f64 * (GAUSS_CONST + var.ln())
    } else {
        0.0
    };
    let orthogonal = if q < d {
        let var = (tail / (n_b * (d - q) as f64)).max(sigma2_min);
        0.5 * n_b * (d - q) as f64 * (GAUSS_CONST + var.ln())
    } else {
        0.0
    };
    parallel
        + orthogonal
        + 0.5 * subspace_param_count(d, q) as f64 * n_b.max(2.0).ln()
        + ((d + 1) as f64).ln()
}

/// Minimum of [`subspace_code_at`] over `q = 0..=d`, with the smallest
/// minimizing `q`.
pub fn subspace_code(stats: &BallStats, spectrum: &ScatterSpectrum, sigma2_min: f64) -> (f64, usize) {
    let d = spectrum.eigenvalues.len();
    let mut best = (f64::INFINITY, 0);
    for q in 0..=d {
        let code = subspace_code_at(stats, spectrum, sigma2_min, q);
        if code < best.0 {
            best = (code, q);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeModel {
    Isotropic,
    Subspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafCode {
    pub total: f64,
    pub model: CodeModel,
    /// Chosen intrinsic dimension when the subspace code wins.
    pub best_q: Option<usize>,
    pub iso: f64,
    /// `None` for one-dimensional data.
    pub sub: Option<f64>,
}

/// Leaf code of a ball. For `d > 1` this is `min{L_iso, L_sub} + log 2`
/// (isotropic on ties); for `d = 1` it is `L_iso` alone.
pub fn leaf_code(stats: &BallStats, spectrum: Option<&ScatterSpectrum>, sigma2_min: f64, d: usize) -> LeafCode {
    let iso = iso_code(stats, d);
    match spectrum {
        Some(spec) if d > 1 => {
            let (sub, q) = subspace_code(stats, spec, sigma2_min);
            if sub < iso {
                LeafCode {
                    total: sub + LN_2,
                    model: CodeModel::Subspace,
                    best_q: Some(q),
                    iso,
                    sub: Some(sub),
                }
            } else {
                LeafCode {
                    total: iso + LN_2,
                    model: CodeModel::Isotropic,
                    best_q: None,
                    iso,
                    sub: Some(sub),
                }
            }
        }
        _ => LeafCode {
            total: iso,
            model: CodeModel::Isotropic,
            best_q: None,
            iso,
            sub: None,
        },
    }
}

/// Everything the tree needs to know about one ball.
#[derive(Debug, Clone)]
pub struct CodedBall {
    pub stats: BallStats,
    pub spectrum: ScatterSpectrum,
    pub code: LeafCode,
}

/// Binds a normalized dataset to its variance floor.
#[derive(Debug, Clone, Copy)]
pub struct BallCoder<'a> {
    pub data: &'a DataMatrix,
    pub sigma2_min: f64,
}

impl<'a> BallCoder<'a> {
    pub fn new(data: &'a DataMatrix, nn1: &[f64]) -> Self {
        Self::with_epsilon(data, nn1, EPSILON)
    }

    pub fn with_epsilon(data: &'a DataMatrix, nn1: &[f64], eps: f64) -> Self {
        BallCoder {
            data,
            sigma2_min: variance_floor(nn1, data.d(), eps),
        }
    }

    pub fn code(&self, indices: &[usize]) -> Result<CodedBall> {
        let stats = ball_statistics(indices, self.data, self.sigma2_min)?;
        let spectrum = scatter_spectrum(indices, self.data, &stats.center)?;
        let code = leaf_code(&stats, Some(&spectrum), self.sigma2_min, self.data.d());
        Ok(CodedBall {
            stats,
            spectrum,
            code,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn matrix(rows: &[&[f64]]) -> DataMatrix {
        DataMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gauss_const() {
        assert_relative_eq!(GAUSS_CONST, (2.0 * std::f64::consts::PI).ln() + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn floor_examples() {
        assert_eq!(variance_floor(&[1.0; 4], 4, EPSILON), 0.25);
        assert_eq!(variance_floor(&[0.0; 5], 3, EPSILON), EPSILON);
        assert_relative_eq!(variance_floor(&[0.1, 0.3], 1, EPSILON), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn stats_of_pair() {
        let x = matrix(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let s = ball_statistics(&[0, 1], &x, 1e-3).unwrap();
        assert_eq!(s.center, vec![0.0, 0.0]);
        assert_eq!(s.sse, 2.0);
        assert_eq!(s.radius, 1.0);
        assert_eq!(s.eff_var, 0.5);
    }

    #[test]
    fn degenerate_balls() {
        let x = matrix(&[&[0.3, 0.3], &[0.3, 0.3], &[0.3, 0.3]]);
        let single = ball_statistics(&[1], &x, 0.01).unwrap();
        assert_eq!((single.sse, single.radius, single.eff_var), (0.0, 0.0, 0.01));
        let all = ball_statistics(&[0, 1, 2], &x, 0.01).unwrap();
        assert_eq!((all.sse, all.radius), (0.0, 0.0));
        assert!(matches!(ball_statistics(&[], &x, 0.01), Err(Error::EmptyBall)));
    }

    fn stats_with(n_b: usize, var: f64) -> BallStats {
        BallStats {
            indices: (0..n_b).collect(),
            center: vec![],
            sse: 0.0,
            radius: 0.0,
            eff_var: var,
        }
    }

    #[test]
    fn iso_examples() {
        assert_relative_eq!(iso_code(&stats_with(1, 1.0), 2), 3.877_597_837, epsilon = 1e-6);
        assert_relative_eq!(iso_code(&stats_with(2, 1.0), 1), 3.531_024_2, epsilon = 1e-6);
        let a = iso_code(&stats_with(7, 0.3), 3);
        let b = iso_code(&stats_with(7, 0.6), 3);
        assert_relative_eq!(b - a, 7.0 * 3.0 / 2.0 * LN_2, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_of_pair_and_single() {
        let x = matrix(&[&[-1.0, 0.0], &[1.0, 0.0]]);
        let s = scatter_spectrum(&[0, 1], &x, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.principal[0], 1.0, epsilon = 1e-12);
        let one = scatter_spectrum(&[1], &x, x.row(1)).unwrap();
        assert!(one.eigenvalues.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_path_matches_scatter_path() {
        // 3 points in 5 dimensions take the Gram route
        let x = matrix(&[
            &[0.1, 0.5, 0.2, 0.9, 0.3],
            &[0.4, 0.1, 0.8, 0.2, 0.7],
            &[0.6, 0.3, 0.1, 0.5, 0.2],
        ]);
        let idx = [0, 1, 2];
        let st = ball_statistics(&idx, &x, 1e-6).unwrap();
        let gram = scatter_spectrum(&idx, &x, &st.center).unwrap();
        let mut m = DMatrix::<f64>::zeros(5, 5);
        for &i in &idx {
            let y: Vec<f64> = x.row(i).iter().zip(&st.center).map(|(a, b)| a - b).collect();
            for r in 0..5 {
                for c in 0..5 {
                    m[(r, c)] += y[r] * y[c];
                }
            }
        }
        let direct = dense_ascending(m).unwrap();
        for k in 0..5 {
            assert_relative_eq!(gram.eigenvalues[k], direct.values[4 - k].max(0.0), epsilon = 1e-12);
        }
        let trace: f64 = gram.eigenvalues.iter().sum();
        assert_relative_eq!(trace, st.sse, max_relative = 1e-9);
        let top = direct.vectors.column(4);
        let align: f64 = gram.principal.iter().zip(top.iter()).map(|(a, b)| a * b).sum();
        assert_relative_eq!(align.abs(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn param_count_example() {
        assert_eq!(subspace_param_count(2, 1), 5);
        assert_eq!(subspace_param_count(3, 0), 4);
        assert_eq!(subspace_param_count(3, 3), 4);
    }

    #[test]
    fn subspace_boundary_terms() {
        let x = matrix(&[&[0.0, 0.0], &[1.0, 0.1], &[2.0, -0.1], &[3.0, 0.0]]);
        let idx = [0, 1, 2, 3];
        let st = ball_statistics(&idx, &x, 1e-4).unwrap();
        let sp = scatter_spectrum(&idx, &x, &st.center).unwrap();
        let n_b = 4.0;
        // q = 0: only the orthogonal part over all d directions
        let total: f64 = sp.eigenvalues.iter().sum();
        let var = (total / (n_b * 2.0)).max(1e-4);
        let expect0 = 0.5 * n_b * 2.0 * (GAUSS_CONST + var.ln()) + 1.5 * 4f64.ln() + 3f64.ln();
        assert_relative_eq!(subspace_code_at(&st, &sp, 1e-4, 0), expect0, epsilon = 1e-10);
        // q = d: only the parallel part
        let expect2 = 0.5 * n_b * 2.0 * (GAUSS_CONST + var.ln()) + 1.5 * 4f64.ln() + 3f64.ln();
        assert_relative_eq!(subspace_code_at(&st, &sp, 1e-4, 2), expect2, epsilon = 1e-10);
    }

    #[test]
    fn one_dimensional_leaf_is_plain_iso() {
        let x = matrix(&[&[0.0], &[0.5], &[1.0]]);
        let coder = BallCoder {
            data: &x,
            sigma2_min: 1e-3,
        };
        let b = coder.code(&[0, 1, 2]).unwrap();
        assert_eq!(b.code.total, iso_code(&b.stats, 1));
        assert_eq!(b.code.model, CodeModel::Isotropic);
    }

    #[test]
    fn collinear_segment_prefers_subspace() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 / 19.0;
                vec![t, 0.5 * t]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let coder = BallCoder {
            data: &x,
            sigma2_min: 1e-6,
        };
        let idx: Vec<usize> = (0..20).collect();
        let b = coder.code(&idx).unwrap();
        let sub = b.code.sub.unwrap();
        assert!(sub < b.code.iso, "sub {sub} iso {}", b.code.iso);
        assert_eq!(b.code.model, CodeModel::Subspace);
        assert_eq!(b.code.best_q, Some(1));
        assert_relative_eq!(b.code.total, sub + LN_2, epsilon = 1e-12);
    }
}
