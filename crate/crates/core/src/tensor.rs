//! Dense n-dimensional `f64` arrays and the small linear-algebra kernels the
//! rest of the crate builds on: matrix product, Gaussian-elimination solve,
//! and the `MVT1` binary tensor format.
//!
//! Layout is row-major with the last dimension fastest; every accessor is
//! bounds-checked and an out-of-range index panics.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Pivot magnitudes below this are treated as singular.
pub const SINGULARITY_LIMIT: f64 = 1e-12;

/// Dense n-dimensional array of 64-bit floats, row-major, last dimension
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dimension in {dims:?}")));
        }
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} imply {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Flat offset of a multi-index. Panics when any coordinate is out of
    /// range.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(
            index.len(),
            self.dims.len(),
            "index rank {} vs tensor rank {}",
            index.len(),
            self.dims.len()
        );
        let mut off = 0;
        for (axis, (&i, &d)) in index.iter().zip(&self.dims).enumerate() {
            assert!(i < d, "index {i} out of range {d} on axis {axis}");
            off = off * d + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Reinterpret the same data under new dims; element count must match.
    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} elements to {dims:?}",
                self.data.len()
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// True when dims and every data bit match (NaN payloads compare equal).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Rank-2 view over tensor data: `rows x cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty matrix {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows".to_string()));
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "matrix index out of range");
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.rows && c < self.cols, "matrix index out of range");
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows, "row index out of range");
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(format!(
                "matrix has {} cols, vector has {}",
                self.cols,
                v.len()
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor {
            dims: vec![self.rows, self.cols],
            data: self.data,
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::shape(format!(
                "expected rank-2 tensor, got rank {}",
                t.rank()
            )));
        }
        Matrix::new(t.dims()[0], t.dims()[1], t.data().to_vec())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "max_abs_diff shape mismatch"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard matrix product, exact up to f64 rounding.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Solve `a * X = b` by Gaussian elimination with partial pivoting (row swap
/// on the largest absolute pivot). `a` must be square; a pivot below
/// [`SINGULARITY_LIMIT`] reports the failing column.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != a.cols {
        return Err(Error::shape(format!(
            "solve needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if b.rows != a.rows {
        return Err(Error::shape(format!(
            "rhs has {} rows, matrix has {}",
            b.rows, a.rows
        )));
    }
    let n = a.rows;
    let m = b.cols;
    let mut lhs = a.data.clone();
    let mut rhs = b.data.clone();

    for col in 0..n {
        // Partial pivot: pick the row with the largest |entry| in this column.
        let mut pivot_row = col;
        let mut pivot_mag = lhs[col * n + col].abs();
        for r in col + 1..n {
            let mag = lhs[r * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag < SINGULARITY_LIMIT {
            return Err(Error::Singular {
                column: col,
                limit: SINGULARITY_LIMIT,
            });
        }
        if pivot_row != col {
            for c in 0..n {
                lhs.swap(col * n + c, pivot_row * n + c);
            }
            for c in 0..m {
                rhs.swap(col * m + c, pivot_row * m + c);
            }
        }
        let pivot = lhs[col * n + col];
        for r in col + 1..n {
            let factor = lhs[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            lhs[r * n + col] = 0.0;
            for c in col + 1..n {
                lhs[r * n + c] -= factor * lhs[col * n + c];
            }
            for c in 0..m {
                rhs[r * m + c] -= factor * rhs[col * m + c];
            }
        }
    }

    // Back substitution.
    let mut x = vec![0.0; n * m];
    for r in (0..n).rev() {
        for c in 0..m {
            let mut acc = rhs[r * m + c];
            for k in r + 1..n {
                acc -= lhs[r * n + k] * x[k * m + c];
            }
            x[r * m + c] = acc / lhs[r * n + r];
        }
    }
    Matrix::new(n, m, x)
}

const MVT_MAGIC: &[u8; 4] = b"MVT1";

/// Serialize in the `MVT1` format: 4-byte magic, u32 LE rank, rank u32 LE
/// dims, then the f64 LE payload. No padding, no checksum.
pub fn write_tensor_to(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w.write_all(MVT_MAGIC)?;
    let rank = u32::try_from(t.rank())
        .map_err(|_| Error::format(format!("rank {} exceeds u32", t.rank())))?;
    w.write_all(&rank.to_le_bytes())?;
    for &d in t.dims() {
        let d32 =
            u32::try_from(d).map_err(|_| Error::format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d32.to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_from(r: &mut impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MVT_MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MVT_MAGIC
        )));
    }
    let mut buf4 = [0u8; 4];
    read_exact(r, &mut buf4, "rank")?;
    let rank = u32::from_le_bytes(buf4) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for axis in 0..rank {
        read_exact(r, &mut buf4, "dims")?;
        let d = u32::from_le_bytes(buf4) as usize;
        if d == 0 {
            return Err(Error::format(format!("zero dimension on axis {axis}")));
        }
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::format("dimension product overflows usize".to_string()))?;
        dims.push(d);
    }
    let mut data = Vec::with_capacity(count);
    let mut buf8 = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut buf8, "payload")?;
        data.push(f64::from_le_bytes(buf8));
    }
    Tensor::new(dims, data)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format(format!("truncated {what}: {e}")))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor_to(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensor_from(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    /// Independent triple-loop product used as the matmul oracle.
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_fixes_operand() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 3, 3);
        let out = matmul(&Matrix::identity(3), &m).unwrap();
        assert_eq!(out.data(), m.data());
    }

    #[test]
    fn matmul_hand_checked_2x2() {
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 7, 5);
        let b = random_matrix(&mut rng, 5, 3);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn matmul_dimension_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_associative_within_tolerance() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 4, 6);
            let b = random_matrix(&mut rng, 6, 5);
            let c = random_matrix(&mut rng, 5, 3);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.data().iter().map(|v| v.abs()).fold(1.0, f64::max);
            assert!(left.max_abs_diff(&right) / scale < 1e-9);
        }
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let b = random_matrix(&mut rng, 4, 2);
        let x = solve_linear(&Matrix::identity(4), &b).unwrap();
        assert!(x.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn solve_diagonal_system() {
        let a = Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let b = Matrix::new(2, 1, vec![2.0, 4.0]).unwrap();
        let x = solve_linear(&a, &b).unwrap();
        assert_eq!(x.data(), &[1.0, 1.0]);
    }

    #[test]
    fn solve_random_system_residual_small() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        // Diagonally dominant 12x12, so the system is well conditioned.
        let n = 12;
        let mut a = random_matrix(&mut rng, n, n);
        for i in 0..n {
            a.set(i, i, a.get(i, i) + n as f64);
        }
        let b = random_matrix(&mut rng, n, 3);
        let x = solve_linear(&a, &b).unwrap();
        let residual = matmul(&a, &x).unwrap().max_abs_diff(&b);
        assert!(residual < 1e-9, "residual {residual}");
    }

    #[test]
    fn solve_then_matmul_reconstructs_rhs() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for trial in 0..10 {
            let n = 3 + trial % 6;
            let mut a = random_matrix(&mut rng, n, n);
            for i in 0..n {
                a.set(i, i, a.get(i, i) + n as f64);
            }
            let b = random_matrix(&mut rng, n, 2);
            let x = solve_linear(&a, &b).unwrap();
            assert!(matmul(&a, &x).unwrap().max_abs_diff(&b) < 1e-9);
        }
    }

    #[test]
    fn solve_singular_names_column() {
        // Second column is all zero after elimination.
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let b = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        match solve_linear(&a, &b) {
            Err(Error::Singular { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn tensor_roundtrip_zero() {
        let t = Tensor::zeros(&[2, 3]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        let back = read_tensor_from(&mut buf.as_slice()).unwrap();
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn tensor_roundtrip_nonfinite_bit_exact() {
        let t = Tensor::new(
            vec![5],
            vec![f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -0.0, 1.5e-310],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        let back = read_tensor_from(&mut buf.as_slice()).unwrap();
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn tensor_double_write_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let data = (0..9 * 33 * 33).map(|_| rng.gen::<f64>()).collect();
        let t = Tensor::new(vec![9, 33, 33], data).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_tensor_to(&mut a, &t).unwrap();
        write_tensor_to(&mut b, &t).unwrap();
        assert_eq!(a, b);
        let back = read_tensor_from(&mut a.as_slice()).unwrap();
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn tensor_read_rejects_bad_magic() {
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &Tensor::zeros(&[2])).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_tensor_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn tensor_read_rejects_truncation() {
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &Tensor::zeros(&[4, 4])).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_tensor_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn tensor_index_out_of_range_panics() {
        let t = Tensor::zeros(&[2, 2]);
        t.get(&[0, 2]);
    }
}
