//! Dense row-major `f64` matrix used for activations, logits and
//! representations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `selfᵀ · other`, shape (self.cols × other.cols).
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, &bj) in dst.iter_mut().zip(b) {
                    *d += ai * bj;
                }
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Reorder columns: output column `j` is input column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Matrix {
        assert_eq!(perm.len(), self.cols);
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, &p) in perm.iter().enumerate() {
                out.set(i, j, self.get(i, p));
            }
        }
        out
    }
}

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out[n×m] (+)= x[n×k] · w[k×m] (+ b)` with `f32` weights.
pub(crate) fn affine(x: &[f64], k: usize, w: &[f32], b: Option<&[f32]>, m: usize, out: &mut [f64]) {
    let n = x.len() / k;
    debug_assert_eq!(out.len(), n * m);
    debug_assert_eq!(w.len(), k * m);
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        match b {
            Some(b) => dst.iter_mut().zip(b).for_each(|(d, &bv)| *d = f64::from(bv)),
            None => dst.iter_mut().for_each(|d| *d = 0.0),
        }
        for (kk, &xv) in x[i * k..(i + 1) * k].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[kk * m..(kk + 1) * m];
            for (d, &wv) in dst.iter_mut().zip(wrow) {
                *d += xv * f64::from(wv);
            }
        }
    }
}

/// Backward of [`affine`]: accumulates `dw += xᵀ dy`, `db += Σ dy` and
/// returns `dx = dy · wᵀ`.
pub(crate) fn affine_backward(
    x: &[f64],
    k: usize,
    w: &[f32],
    m: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let n = x.len() / k;
    let mut dx = vec![0.0; n * k];
    for i in 0..n {
        let dyr = &dy[i * m..(i + 1) * m];
        let xr = &x[i * k..(i + 1) * k];
        let dxr = &mut dx[i * k..(i + 1) * k];
        for kk in 0..k {
            let wrow = &w[kk * m..(kk + 1) * m];
            let dwrow = &mut dw[kk * m..(kk + 1) * m];
            let xv = xr[kk];
            let mut acc = 0.0;
            for j in 0..m {
                acc += dyr[j] * f64::from(wrow[j]);
                dwrow[j] += xv * dyr[j];
            }
            dxr[kk] = acc;
        }
    }
    if let Some(db) = db {
        for i in 0..n {
            for (d, &g) in db.iter_mut().zip(&dy[i * m..(i + 1) * m]) {
                *d += g;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        assert_eq!(a.matmul(&b).data(), &[19.0, 22.0, 43.0, 50.0]);
        assert_eq!(a.t_matmul(&b).data(), &[26.0, 30.0, 38.0, 44.0]);
        assert_eq!(a.column(1), vec![2.0, 4.0]);
        assert_eq!(a.permute_columns(&[1, 0]).data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn affine_matches_matmul() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = [0.5f32, -1.0, 2.0, 0.25, 1.0, 0.0];
        let b = [1.0f32, -1.0];
        let mut out = vec![0.0; 4];
        affine(&x, 3, &w, Some(&b), 2, &mut out);
        assert_eq!(
            out,
            vec![
                1.0 + 0.5 + 4.0 + 3.0,
                -1.0 - 1.0 + 0.5,
                1.0 + 2.0 + 10.0 + 6.0,
                -1.0 - 4.0 + 1.25
            ]
        );
    }
}
