use ndarray::Array2;

use crate::error::{Error, Result};
use crate::C64;

/// Square compressed-sparse-row matrix.
///
/// Values are complex; `real` records whether every stored entry has zero
/// imaginary part so the matvec can skip half the multiplications.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    real: bool,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, indptr: vec![0; n + 1], indices: Vec::new(), values: Vec::new(), real: true }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, C64::new(1.0, 0.0))))
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed, exact zeros dropped.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of bounds for dimension {n}");
            if let (Some(&lr), Some(&lc)) = (rows.last(), indices.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            indices.push(c);
            values.push(v);
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_idx = Vec::with_capacity(rows.len());
        let mut keep_val = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != C64::new(0.0, 0.0) {
                keep_rows.push(r);
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for &r in &keep_rows {
            indptr[r + 1] += 1;
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let real = keep_val.iter().all(|v| v.im == 0.0);
        Self { n, indptr, indices: keep_idx, values: keep_val, real }
    }

    pub fn from_dense(a: &Array2<C64>, drop_tol: f64) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let trip = a
            .indexed_iter()
            .filter(|(_, v)| v.norm() > drop_tol)
            .map(|((i, j), v)| (i, j, *v));
        Self::from_triplets(n, trip)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Iterates `(row, col, value)` over stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        if self.real {
            for r in 0..self.n {
                let (mut re, mut im) = (0.0, 0.0);
                for k in self.indptr[r]..self.indptr[r + 1] {
                    let a = self.values[k].re;
                    let xv = x[self.indices[k]];
                    re += a * xv.re;
                    im += a * xv.im;
                }
                y[r] = C64::new(re, im);
            }
        } else {
            for r in 0..self.n {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.indptr[r]..self.indptr[r + 1] {
                    acc += self.values[k] * x[self.indices[k]];
                }
                y[r] = acc;
            }
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (r, c, v) in self.triplets() {
            a[[r, c]] = v;
        }
        a
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (r, c, v * s)))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v)))
    }

    /// `sum_k c_k A_k` for matrices of equal dimension.
    pub fn linear_combination(terms: &[(C64, &CsrMatrix)]) -> Result<Self> {
        let n = terms.first().map(|(_, m)| m.n).unwrap_or(0);
        for (_, m) in terms {
            if m.n != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.n });
            }
        }
        Ok(Self::from_triplets(
            n,
            terms
                .iter()
                .flat_map(|(c, m)| m.triplets().map(move |(r, col, v)| (r, col, v * c))),
        ))
    }

    pub fn matmul(&self, other: &CsrMatrix) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        let mut trip = Vec::new();
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let mid = self.indices[k];
                let a = self.values[k];
                for l in other.indptr[mid]..other.indptr[mid + 1] {
                    trip.push((r, other.indices[l], a * other.values[l]));
                }
            }
        }
        Ok(Self::from_triplets(self.n, trip))
    }

    /// Kronecker product `a (x) b` (first factor is the slow index).
    pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> Self {
        let nb = b.n;
        let trip: Vec<_> = a
            .triplets()
            .flat_map(|(ra, ca, va)| b.triplets().map(move |(rb, cb, vb)| (ra * nb + rb, ca * nb + cb, va * vb)))
            .collect();
        Self::from_triplets(a.n * nb, trip)
    }

    /// Principal submatrix on the (sorted, unique) index set `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in idx.iter().enumerate() {
            map[old] = new;
        }
        let trip: Vec<_> = idx
            .iter()
            .enumerate()
            .flat_map(|(new_r, &old_r)| {
                let map = &map;
                (self.indptr[old_r]..self.indptr[old_r + 1]).filter_map(move |k| {
                    let c = map[self.indices[k]];
                    (c != usize::MAX).then(|| (new_r, c, self.values[k]))
                })
            })
            .collect();
        Self::from_triplets(idx.len(), trip)
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Max absolute row sum, an upper bound on the spectral norm of a Hermitian matrix.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|k| self.values[k].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}
