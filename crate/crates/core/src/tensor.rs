//! Dense row-major 64-bit matrices.
//!
//! A relation set of `n` relations with `d` features each lives in a
//! [`Tensor2`] of shape `n × d`. Matrix products go through
//! `matrixmultiply`; everything else is plain loops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Checked constructor: length must equal `rows * cols` and every entry
    /// must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("Tensor2::from_vec", &[rows, cols], &[data.len()]));
        }
        let t = Tensor2 { rows, cols, data };
        t.ensure_finite("Tensor2::from_vec")?;
        Ok(t)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims("Tensor2::from_rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Tensor2::from_vec(rows.len(), cols, data)
    }

    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Tensor2::from_vec(1, values.len(), values.to_vec())
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Tensor2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(context.to_string()))
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::dims("matmul", &self.shape(), &other.shape()));
        }
        Ok(gemm(self, false, other, false))
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(Error::dims("t_matmul", &self.shape(), &other.shape()));
        }
        Ok(gemm(self, true, other, false))
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.cols {
            return Err(Error::dims("matmul_t", &self.shape(), &other.shape()));
        }
        Ok(gemm(self, false, other, true))
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims("add", &self.shape(), &other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Tensor2 {
        Tensor2::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * k).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums as a `1 × cols` row.
    pub fn sum_rows(&self) -> Tensor2 {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        Tensor2::from_raw(1, self.cols, out)
    }

    /// Repeat a single row `n` times.
    pub fn broadcast_rows(&self, n: usize) -> Result<Tensor2> {
        if self.rows != 1 {
            return Err(Error::dims("broadcast_rows", &self.shape(), &[1, self.cols]));
        }
        let mut data = Vec::with_capacity(n * self.cols);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Ok(Tensor2::from_raw(n, self.cols, data))
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn hcat(parts: &[&Tensor2]) -> Result<Tensor2> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::dims("hcat", &[rows], &bad.shape()));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Tensor2::from_raw(rows, cols, data))
    }

    /// Inverse of [`Tensor2::hcat`]: split columns into blocks of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Tensor2>> {
        if widths.iter().sum::<usize>() != self.cols {
            return Err(Error::dims("split_cols", &self.shape(), widths));
        }
        let mut out: Vec<Tensor2> = widths
            .iter()
            .map(|&w| Tensor2 {
                rows: self.rows,
                cols: w,
                data: Vec::with_capacity(self.rows * w),
            })
            .collect();
        for r in 0..self.rows {
            let row = self.row(r);
            let mut start = 0;
            for (o, &w) in out.iter_mut().zip(widths) {
                o.data.extend_from_slice(&row[start..start + w]);
                start += w;
            }
        }
        Ok(out)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Tensor2 {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor2::from_raw(idx.len(), self.cols, data)
    }

    pub fn max_abs_diff(&self, other: &Tensor2) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

const SMALL_GEMM: usize = 4096;

fn gemm(a: &Tensor2, ta: bool, b: &Tensor2, tb: bool) -> Tensor2 {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    let mut out = Tensor2::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // Packing overhead dominates for tiny products; loop directly instead.
    // Accumulation runs over `p` in order, as a dot product would.
    if m * n * k <= SMALL_GEMM {
        let at;
        let a = if ta {
            at = a.transpose();
            &at
        } else {
            a
        };
        let bt;
        let b = if tb {
            bt = b.transpose();
            &bt
        } else {
            b
        };
        for (a_row, out_row) in a.data.chunks_exact(k).zip(out.data.chunks_exact_mut(n)) {
            for (&aip, b_row) in a_row.iter().zip(b.data.chunks_exact(n)) {
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aip * bv;
                }
            }
        }
        return out;
    }
    // SAFETY: strides and extents describe exactly the buffers owned by `a`,
    // `b` and `out`, whose lengths were checked on construction.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_transposes() {
        let a = Tensor2::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Tensor2::from_rows(&[[1.0, 0.5], [0.0, -1.0], [2.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[7.0, 1.5, 16.0, 3.0]);
        let at = a.transpose();
        assert_eq!(at.t_matmul(&b).unwrap(), ab);
        assert_eq!(a.matmul_t(&b.transpose()).unwrap(), ab);
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(matches!(
            Tensor2::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            Tensor2::from_vec(2, 2, vec![1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn hcat_split_inverse() {
        let a = Tensor2::from_rows(&[[1.0], [2.0]]).unwrap();
        let b = Tensor2::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let c = Tensor2::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.row(1), &[2.0, 5.0, 6.0]);
        let parts = c.split_cols(&[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
