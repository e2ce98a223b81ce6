//! Dense M-way tensors and the multilinear operators on them.
//!
//! Storage is generalized column-major: the first index varies fastest, so
//! element `(i_1, …, i_M)` (zero-based) lives at
//! `Σ_m i_m · ∏_{k<m} p_k`. A stack of `n` tensors of shape `p_1×…×p_M` is a
//! single `(M+1)`-way tensor whose data is exactly a `p×n` column-major matrix.
//!
//! Mode indices in this API are zero-based.

mod kron;

pub use kron::{ar_matrix, kron_materialize, kron_materialize_capped, mahalanobis_sq, KroneckerScale, ScaleFactor, DEFAULT_KRON_CAP};

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "{} values for dims {:?} (expected {})",
                data.len(),
                dims,
                len
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        })
    }

    /// Builds a tensor by evaluating `f` at every zero-based multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0usize; dims.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            advance(&mut idx, dims);
        }
        Ok(t)
    }

    /// Views a column-major matrix as a 2-way tensor.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
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

    pub fn offset(&self, idx: &[usize]) -> usize {
        linear_offset(&self.dims, idx)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn devectorize(values: &[f64], dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), values.to_vec())
    }

    /// Reinterprets the data under new dimensions with the same total size.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    /// Column-major matrix `rows × (len/rows)` over the same data.
    pub fn as_matrix(&self, rows: usize) -> Result<DMatrixView<'_, f64>> {
        if rows == 0 || self.data.len() % rows != 0 {
            return Err(Error::Shape(format!("cannot view {} values with {} rows", self.data.len(), rows)));
        }
        Ok(DMatrixView::from_slice(&self.data, rows, self.data.len() / rows))
    }

    pub fn to_matrix(&self, rows: usize) -> Result<DMatrix<f64>> {
        Ok(self.as_matrix(rows)?.into_owned())
    }

    /// Mode-`n` unfolding `p_n × p_{-n}`; columns are the mode-`n` fibers in
    /// column-major order of the remaining indices.
    pub fn matricize(&self, n: usize) -> Result<DMatrix<f64>> {
        self.check_mode(n)?;
        let (left, pn, right) = self.split(n);
        let mut out = DMatrix::zeros(pn, left * right);
        for r in 0..right {
            for k in 0..pn {
                let base = left * (k + pn * r);
                for l in 0..left {
                    out[(k, l + left * r)] = self.data[base + l];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`matricize`](Self::matricize).
    pub fn fold(m: &DMatrix<f64>, n: usize, dims: &[usize]) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.check_mode(n)?;
        let (left, pn, right) = t.split(n);
        if m.nrows() != pn || m.ncols() != left * right {
            return Err(Error::Shape(format!(
                "{}x{} matrix cannot fold into mode {} of {:?}",
                m.nrows(),
                m.ncols(),
                n,
                dims
            )));
        }
        for r in 0..right {
            for k in 0..pn {
                let base = left * (k + pn * r);
                for l in 0..left {
                    t.data[base + l] = m[(k, l + left * r)];
                }
            }
        }
        Ok(t)
    }

    /// `A ×_n G`: multiplies every mode-`n` fiber by `G` (`s × p_n`).
    pub fn mode_product(&self, g: &DMatrix<f64>, n: usize) -> Result<Self> {
        self.check_mode(n)?;
        let (left, pn, right) = self.split(n);
        if g.ncols() != pn {
            return Err(Error::Shape(format!(
                "mode-{} product needs {} columns, got {}",
                n,
                pn,
                g.ncols()
            )));
        }
        let s = g.nrows();
        let mut dims = self.dims.clone();
        dims[n] = s;
        let mut out = vec![0.0; left * s * right];
        if left == 1 {
            let a = DMatrixView::from_slice(&self.data, pn, right);
            let mut o = DMatrixViewMut::from_slice(&mut out, s, right);
            o.gemm(1.0, g, &a, 0.0);
        } else {
            let gt = g.transpose();
            for r in 0..right {
                let a = DMatrixView::from_slice(&self.data[r * left * pn..(r + 1) * left * pn], left, pn);
                let mut o = DMatrixViewMut::from_slice(&mut out[r * left * s..(r + 1) * left * s], left, s);
                o.gemm(1.0, &a, &gt, 0.0);
            }
        }
        Self::new(dims, out)
    }

    /// `⟦A; G_1, …, G_K⟧` applied to the leading `K` modes; `None` skips a mode.
    pub fn tucker(&self, gs: &[Option<&DMatrix<f64>>]) -> Result<Self> {
        if gs.len() > self.order() {
            return Err(Error::Shape(format!(
                "{} factors for an order-{} tensor",
                gs.len(),
                self.order()
            )));
        }
        let mut out = self.clone();
        for (n, g) in gs.iter().enumerate() {
            if let Some(g) = g {
                out = out.mode_product(g, n)?;
            }
        }
        Ok(out)
    }

    /// `A ×̄_n c`: contracts mode `n` against `c`, dropping that mode. An
    /// order-1 input yields a tensor of dims `[1]`.
    pub fn mode_vec_product(&self, c: &DVector<f64>, n: usize) -> Result<Self> {
        let g = DMatrix::from_row_slice(1, c.len(), c.as_slice());
        let t = self.mode_product(&g, n)?;
        let mut dims = self.dims.clone();
        dims.remove(n);
        if dims.is_empty() {
            dims.push(1);
        }
        t.reshape(dims)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * a).collect(),
        }
    }

    /// The `i`-th slice along the last mode (e.g. one sample of a stack).
    pub fn last_slice(&self, i: usize) -> Result<Self> {
        let m = self.order();
        if m < 2 {
            return Err(Error::Shape("last_slice needs order >= 2".into()));
        }
        let n = self.dims[m - 1];
        if i >= n {
            return Err(Error::Shape(format!("slice {} of {}", i, n)));
        }
        let p = self.len() / n;
        Self::new(self.dims[..m - 1].to_vec(), self.data[i * p..(i + 1) * p].to_vec())
    }

    /// Stacks equally shaped tensors along a new trailing mode.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.check_same(t)?;
            data.extend_from_slice(&t.data);
        }
        let mut dims = first.dims.clone();
        dims.push(items.len());
        Self::new(dims, data)
    }

    fn split(&self, n: usize) -> (usize, usize, usize) {
        let left = self.dims[..n].iter().product();
        let right = self.dims[n + 1..].iter().product();
        (left, self.dims[n], right)
    }

    fn check_mode(&self, n: usize) -> Result<()> {
        if n >= self.order() {
            return Err(Error::Shape(format!(
                "mode {} out of range for order {}",
                n,
                self.order()
            )));
        }
        Ok(())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Shape(format!("dims must be non-empty and positive, got {:?}", dims)));
    }
    Ok(())
}

pub fn linear_offset(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    let mut off = 0;
    let mut stride = 1;
    for (d, i) in dims.iter().zip(idx) {
        debug_assert!(i < d);
        off += i * stride;
        stride *= d;
    }
    off
}

/// Inverse of [`linear_offset`].
pub fn multi_index(dims: &[usize], mut offset: usize) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let i = offset % d;
            offset /= d;
            i
        })
        .collect()
}

/// Advances a column-major multi-index in place.
fn advance(idx: &mut [usize], dims: &[usize]) {
    for (i, d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < *d {
            return;
        }
        *i = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_vectorizes_column_major() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(&[0, 1]), 3.0);
        assert_eq!(t.vectorize(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn offsets_round_trip() {
        let dims = [2, 3, 4];
        for o in 0..24 {
            assert_eq!(linear_offset(&dims, &multi_index(&dims, o)), o);
        }
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(DenseTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::zeros(&[2, 0]).is_err());
        let t = DenseTensor::zeros(&[2, 2]).unwrap();
        assert!(t.matricize(2).is_err());
        assert!(t.mode_product(&DMatrix::identity(3, 3), 0).is_err());
    }
}
