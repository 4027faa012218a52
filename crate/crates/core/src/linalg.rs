//! Symmetric envelope (skyline) storage with an in-place Cholesky factorization.
//!
//! Every normal-equation system in the crate is banded once the unknowns are
//! ordered along the trajectory (pose chains, rig bundle adjustment after the
//! point Schur complement, row-major elevation grids), so the factor stays
//! inside the envelope of the lower triangle.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct ProfileMatrix {
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ProfileMatrix {
    /// `first[i]` is the leftmost stored column of row `i` (`first[i] <= i`).
    pub fn new(first: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope start must not exceed the diagonal");
            offsets.push(total);
            total += i - f + 1;
        }
        offsets.push(total);
        Self { first, offsets, values: vec![0.0; total] }
    }

    /// Envelope for a block structure: `block_first[b]` is the first block
    /// coupled to block `b`, every block having `block_size` rows.
    pub fn with_block_envelope(block_first: &[usize], block_size: usize) -> Self {
        let mut first = Vec::with_capacity(block_first.len() * block_size);
        for (b, &fb) in block_first.iter().enumerate() {
            first.extend(std::iter::repeat_n(fb.min(b) * block_size, block_size));
        }
        Self::new(first)
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        debug_assert!(j >= self.first[i], "entry ({i},{j}) outside the envelope");
        self.offsets[i] + j - self.first[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if j < self.first[i] {
            0.0
        } else {
            self.values[self.index(i, j)]
        }
    }

    /// Adds `v` to the symmetric entry `(i, j)`; call once per unordered pair.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.values[k] += v;
    }

    /// Adds a dense block at `(row0, col0)` with `row0 >= col0`; for diagonal
    /// blocks only the lower triangle is read.
    pub fn add_block(&mut self, row0: usize, col0: usize, block: &DMatrix<f64>) {
        for r in 0..block.nrows() {
            for c in 0..block.ncols() {
                let (i, j) = (row0 + r, col0 + c);
                if row0 == col0 && j > i {
                    continue;
                }
                self.add(i, j, block[(r, c)]);
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.values[self.offsets[i + 1] - 1]).collect()
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, v) in d.iter().enumerate() {
            let k = self.offsets[i + 1] - 1;
            self.values[k] += v;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `L Lᵀ` factorization; `None` if the matrix is not positive definite.
    pub fn cholesky(mut self) -> Option<ProfileCholesky> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            for j in fi..=i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let k0 = fi.max(fj);
                let mut s = self.values[oi + j - fi];
                let row_i = &self.values[oi + k0 - fi..oi + j - fi];
                let row_j = &self.values[oj + k0 - fj..oj + j - fj];
                s -= row_i.iter().zip(row_j).map(|(a, b)| a * b).sum::<f64>();
                if j < i {
                    let djj = self.values[oj + j - fj];
                    self.values[oi + j - fi] = s / djj;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    self.values[oi + i - fi] = s.sqrt();
                }
            }
        }
        Some(ProfileCholesky { factor: self })
    }
}

#[derive(Clone, Debug)]
pub struct ProfileCholesky {
    factor: ProfileMatrix,
}

impl ProfileCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = &self.factor;
        let n = m.dim();
        let mut y = b.clone();
        for i in 0..n {
            let fi = m.first[i];
            let oi = m.offsets[i];
            let row = &m.values[oi..oi + i - fi];
            let s: f64 = row.iter().zip(y.as_slice()[fi..i].iter()).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / m.values[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = m.first[i];
            let oi = m.offsets[i];
            let xi = y[i] / m.values[oi + i - fi];
            y[i] = xi;
            for k in fi..i {
                y[k] -= m.values[oi + k - fi] * xi;
            }
        }
        y
    }
}
