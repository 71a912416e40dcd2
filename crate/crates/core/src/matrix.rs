//! Dense feature matrices, cosine similarities and squared-Euclidean
//! distances on the unit sphere.

use crate::error::{Result, SotError};
use crate::par;

/// Tolerance on row norms accepted as "unit normalized" by [`cosine_similarity`].
pub const UNIT_NORM_TOL: f64 = 1e-6;
/// Rows with norm at or below this are rejected by [`FeatureMatrix::normalize_rows`].
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Row-major dense `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SotError::InvalidShape {
                rows,
                cols,
                reason: "data length does not match rows * cols",
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(SotError::InvalidShape {
                    rows: rows.len(),
                    cols,
                    reason: "ragged rows",
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Largest absolute entrywise difference; `INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|m_ij - m_ji|`; `INFINITY` if not square.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.iter_rows().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums
    }

    /// Selects the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// `out[i][j] = self[perm[i]][perm[j]]`, i.e. `P M Pᵀ` for the row
    /// permutation `P` used by [`permute_rows`].
    pub fn permute_square(&self, perm: &[usize]) -> Result<Mat> {
        if self.rows != self.cols {
            return Err(SotError::InvalidShape {
                rows: self.rows,
                cols: self.cols,
                reason: "matrix is not square",
            });
        }
        validate_permutation(perm, self.rows)?;
        let n = self.rows;
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, self.get(perm[i], perm[j]));
            }
        }
        Ok(out)
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(SotError::NonFinite {
                row: p / self.cols.max(1),
                col: p % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// n×d matrix of item features, one item per row. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Mat);

impl FeatureMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(SotError::InvalidShape {
                rows: m.rows(),
                cols: m.cols(),
                reason: "feature matrix needs at least one row and one column",
            });
        }
        m.check_finite()?;
        Ok(FeatureMatrix(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        FeatureMatrix::new(Mat::from_rows(rows)?)
    }

    /// Item count.
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    /// Feature dimension.
    pub fn d(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    /// Divides each row by its L2 norm.
    pub fn normalize_rows(&self) -> Result<FeatureMatrix> {
        let mut out = self.0.clone();
        let cols = out.cols();
        for i in 0..out.rows() {
            let norm = l2_norm(out.row(i));
            if norm <= ZERO_NORM_EPS {
                return Err(SotError::ZeroNormRow(i));
            }
            out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
        debug_assert_eq!(cols, self.d());
        Ok(FeatureMatrix(out))
    }

    /// Whether every row has unit norm within `tol`.
    pub fn check_unit_rows(&self, tol: f64) -> Result<()> {
        for i in 0..self.n() {
            let norm = l2_norm(self.row(i));
            if (norm - 1.0).abs() > tol {
                return Err(SotError::NotNormalized { row: i, norm });
            }
        }
        Ok(())
    }
}

/// Cosine similarities of a unit-normalized feature set.
///
/// Each unordered pair is computed once and mirrored, so the matrix is
/// bitwise symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(Mat);

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }
}

/// Squared Euclidean distances. When `masked`, the diagonal is treated as
/// infinitely expensive by the solver; the stored diagonal stays finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    dmat: Mat,
    masked: bool,
}

/// Largest asymmetry accepted by [`DistanceMatrix::from_mat`].
pub const SYMMETRY_TOL: f64 = 1e-9;

impl DistanceMatrix {
    /// Wraps an externally computed distance matrix (unmasked).
    pub fn from_mat(dmat: Mat) -> Result<Self> {
        if dmat.rows() != dmat.cols() {
            return Err(SotError::InvalidShape {
                rows: dmat.rows(),
                cols: dmat.cols(),
                reason: "distance matrix must be square",
            });
        }
        if dmat.rows() < 2 {
            return Err(SotError::InvalidShape {
                rows: dmat.rows(),
                cols: dmat.cols(),
                reason: "need at least two items",
            });
        }
        dmat.check_finite()?;
        if dmat.as_slice().iter().any(|&v| v < 0.0) {
            return Err(SotError::InvalidCost("negative distance"));
        }
        let asym = dmat.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(SotError::Asymmetric(asym));
        }
        Ok(DistanceMatrix {
            dmat,
            masked: false,
        })
    }

    pub fn n(&self) -> usize {
        self.dmat.rows()
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }

    pub fn mat(&self) -> &Mat {
        &self.dmat
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dmat.get(i, j)
    }

    /// Cost as seen by the solver: `+∞` on a masked diagonal.
    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        if self.masked && i == j {
            f64::INFINITY
        } else {
            self.dmat.get(i, j)
        }
    }

    /// Flags the diagonal as infinite cost. Entries are left untouched.
    pub fn mask_diagonal(self) -> Result<DistanceMatrix> {
        if self.masked {
            return Err(SotError::AlreadyMasked);
        }
        Ok(DistanceMatrix {
            masked: true,
            ..self
        })
    }

    /// Frobenius product `⟨cost, w⟩` skipping the masked diagonal.
    pub fn frobenius(&self, w: &Mat) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if self.masked && i == j {
                    continue;
                }
                total += self.dmat.get(i, j) * w.get(i, j);
            }
        }
        total
    }

    /// Applies `P D Pᵀ`, keeping the mask flag.
    pub fn permute(&self, perm: &[usize]) -> Result<DistanceMatrix> {
        Ok(DistanceMatrix {
            dmat: self.dmat.permute_square(perm)?,
            masked: self.masked,
        })
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> DistanceMatrix {
        let data = self.dmat.as_slice().iter().map(|v| v * c).collect();
        DistanceMatrix {
            dmat: Mat::new(self.n(), self.n(), data).expect("same shape"),
            masked: self.masked,
        }
    }
}

/// `s_ij = ⟨v_i, v_j⟩` for unit-normalized rows.
pub fn cosine_similarity(m: &FeatureMatrix) -> Result<SimilarityMatrix> {
    m.check_unit_rows(UNIT_NORM_TOL)?;
    let n = m.n();
    let upper: Vec<Vec<f64>> = par::map_range(n, |i| {
        let vi = m.row(i);
        (i..n).map(|j| dot(vi, m.row(j))).collect()
    });
    let mut s = Mat::zeros(n, n);
    for (i, tail) in upper.into_iter().enumerate() {
        for (off, v) in tail.into_iter().enumerate() {
            let j = i + off;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(SimilarityMatrix(s))
}

/// `d_ij = 2 (1 − s_ij)`, clamped below at zero, with an exact zero diagonal.
pub fn pairwise_sq_distances(s: &SimilarityMatrix) -> DistanceMatrix {
    let n = s.n();
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d.set(i, j, (2.0 * (1.0 - s.0.get(i, j))).max(0.0));
            }
        }
    }
    DistanceMatrix {
        dmat: d,
        masked: false,
    }
}

pub fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(SotError::InvalidPermutation(format!(
            "length {} for n = {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(SotError::InvalidPermutation(format!(
                "entry {p} out of range or repeated"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Output row `i` is input row `perm[i]`.
pub fn permute_rows(m: &FeatureMatrix, perm: &[usize]) -> Result<FeatureMatrix> {
    validate_permutation(perm, m.n())?;
    Ok(FeatureMatrix(m.0.select_rows(perm)))
}
