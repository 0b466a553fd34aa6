//! Minimal dense row-major `f64` matrix.
//!
//! The model is small enough that a flat `Vec<f64>` with explicit indexing
//! beats pulling in a tensor library; every hot loop in this crate works on
//! rows as plain slices.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Plain dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[c] = sum_r x[r] * m[r][c]` — row vector times matrix.
pub fn vec_mat_into(x: &[f64], m: &Mat, out: &mut [f64]) {
    debug_assert_eq!(x.len(), m.rows());
    debug_assert_eq!(out.len(), m.cols());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (r, &xr) in x.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(m.row(r)) {
            *o += xr * w;
        }
    }
}

/// `out[r] = sum_c m[r][c] * x[c]` — matrix times column vector.
pub fn mat_vec_into(m: &Mat, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), m.cols());
    debug_assert_eq!(out.len(), m.rows());
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(m.row(r), x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let m = Mat::from_fn(2, 3, |r, c| (r * 10 + c) as f64);
        assert_eq!(m.at(0, 2), 2.0);
        assert_eq!(m.at(1, 0), 10.0);
        assert_eq!(m.row(1), &[10.0, 11.0, 12.0]);
    }

    #[test]
    fn vec_mat_matches_manual_sum() {
        let m = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let mut out = [0.0; 2];
        vec_mat_into(&[5.0, 7.0], &m, &mut out);
        assert_eq!(out, [5.0 + 21.0, 10.0 + 28.0]);
    }
}
