use crate::error::{Error, Result};

/// Compressed sparse row matrix that also keeps its transpose, so both
/// `A x` and `Aᵀ y` are row-parallel gathers.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    t_row_ptr: Vec<usize>,
    t_col_idx: Vec<usize>,
    t_values: Vec<f64>,
}

fn compress(rows: usize, mut trips: Vec<(usize, usize, f64)>) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    trips.sort_by_key(|a| (a.0, a.1));
    let mut row_ptr = vec![0usize; rows + 1];
    let mut col_idx = Vec::with_capacity(trips.len());
    let mut values: Vec<f64> = Vec::with_capacity(trips.len());
    let mut last: Option<(usize, usize)> = None;
    let mut row_of = Vec::with_capacity(trips.len());
    for (r, c, v) in trips {
        if last == Some((r, c)) {
            *values.last_mut().expect("entry exists") += v;
        } else {
            col_idx.push(c);
            values.push(v);
            row_of.push(r);
            last = Some((r, c));
        }
    }
    // drop entries that cancelled to zero
    let mut keep_c = Vec::with_capacity(col_idx.len());
    let mut keep_v = Vec::with_capacity(values.len());
    for ((c, v), r) in col_idx.into_iter().zip(values).zip(row_of) {
        if v != 0.0 {
            keep_c.push(c);
            keep_v.push(v);
            row_ptr[r + 1] += 1;
        }
    }
    for r in 0..rows {
        row_ptr[r + 1] += row_ptr[r];
    }
    (row_ptr, keep_c, keep_v)
}

impl SparseMatrix {
    /// Duplicate `(row, col)` pairs are summed; zero values are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("sparse matrix dimensions must be positive"));
        }
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::invalid(format!("triplet ({r}, {c}) outside {rows}x{cols}")));
            }
            if !v.is_finite() {
                return Err(Error::non_finite("sparse triplet value"));
            }
        }
        let transposed: Vec<_> = triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        let (row_ptr, col_idx, values) = compress(rows, triplets);
        let (t_row_ptr, t_col_idx, t_values) = compress(cols, transposed);
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            t_row_ptr,
            t_col_idx,
            t_values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr: self.t_row_ptr.clone(),
            col_idx: self.t_col_idx.clone(),
            values: self.t_values.clone(),
            t_row_ptr: self.row_ptr.clone(),
            t_col_idx: self.col_idx.clone(),
            t_values: self.values.clone(),
        }
    }

    fn gather(ptr: &[usize], idx: &[usize], vals: &[f64], x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in ptr[r]..ptr[r + 1] {
                acc += vals[k] * x[idx[k]];
            }
            *o = acc;
        }
    }

    /// `out = A x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        Self::gather(&self.row_ptr, &self.col_idx, &self.values, x, out);
    }

    /// `out = Aᵀ y`
    pub fn matvec_t(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        Self::gather(&self.t_row_ptr, &self.t_col_idx, &self.t_values, y, out);
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for (r, c, v) in self.triplets() {
            d[r * self.cols + c] = v;
        }
        d
    }
}
