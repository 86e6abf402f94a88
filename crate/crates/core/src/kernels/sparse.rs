use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    /// Every stored value is exactly 1.
    Binary,
    /// Every nonzero row sums to 1; zero rows stay empty.
    RowNormalized,
    /// Arbitrary weights, e.g. the transpose of a row-normalized matrix.
    Weighted,
}

/// Sparse matrix in compressed-row layout. Column indices are strictly
/// increasing within each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    kind: MatrixKind,
}

impl InteractionMatrix {
    /// Binary matrix with a 1 at every `(row, col)` pair; duplicates collapse.
    pub fn from_edges(
        rows: usize,
        cols: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<usize>> = vec![Vec::new(); rows];
        for (r, c) in edges {
            if r >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: r,
                    len: rows,
                });
            }
            if c >= cols {
                return Err(Error::IndexOutOfRange {
                    what: "column",
                    index: c,
                    len: cols,
                });
            }
            per_row[r].push(c);
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in per_row {
            row.sort_unstable();
            row.dedup();
            indices.extend(row);
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Ok(InteractionMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
            kind: MatrixKind::Binary,
        })
    }

    /// Converts a dense matrix, keeping nonzero entries. Kind is `Binary` when
    /// every nonzero equals 1, `Weighted` otherwise.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        let kind = if values.iter().all(|&v| v == 1.0) {
            MatrixKind::Binary
        } else {
            MatrixKind::Weighted
        };
        InteractionMatrix {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
            kind,
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

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `D⁻¹R`: each nonzero row divided by its sum. Rows without entries stay empty.
    pub fn normalize_rows(&self) -> InteractionMatrix {
        let mut values = self.values.clone();
        for r in 0..self.rows {
            let span = self.indptr[r]..self.indptr[r + 1];
            let sum: f64 = self.values[span.clone()].iter().sum();
            if sum != 0.0 {
                for v in &mut values[span] {
                    *v /= sum;
                }
            }
        }
        InteractionMatrix {
            values,
            kind: MatrixKind::RowNormalized,
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> InteractionMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        let kind = match self.kind {
            MatrixKind::Binary => MatrixKind::Binary,
            _ => MatrixKind::Weighted,
        };
        InteractionMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
            kind,
        }
    }

    /// Sparse-dense product `self · d`. Each output row accumulates its
    /// nonzeros left to right, so the result is bit-reproducible.
    pub fn spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != d.rows() {
            return Err(Error::Dimension {
                op: "spmm",
                left: self.shape(),
                right: d.shape(),
            });
        }
        let width = d.cols();
        let mut out = DenseMatrix::zeros(self.rows, width);
        if width == 0 {
            return Ok(out);
        }
        let kernel = |(r, out_row): (usize, &mut [f64])| {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out_row.iter_mut().zip(d.row(c)) {
                    *o += v * x;
                }
            }
        };
        if self.nnz() * width >= 1 << 16 {
            out.as_mut_slice()
                .par_chunks_mut(width)
                .enumerate()
                .for_each(kernel);
        } else {
            out.as_mut_slice()
                .chunks_mut(width)
                .enumerate()
                .for_each(kernel);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngStream;
    use rand::Rng;

    fn random_binary(rows: usize, cols: usize, p: f64, seed: u64) -> InteractionMatrix {
        let mut rng = RngStream::new(seed);
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(p) {
                    edges.push((r, c));
                }
            }
        }
        InteractionMatrix::from_edges(rows, cols, edges).unwrap()
    }

    fn dense_oracle(s: &DenseMatrix, d: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(s.rows(), d.cols(), |r, c| {
            let mut acc = 0.0;
            for k in 0..s.cols() {
                acc += s.get(r, k) * d.get(k, c);
            }
            acc
        })
    }

    #[test]
    fn identity_spmm() {
        let eye = InteractionMatrix::from_edges(4, 4, (0..4).map(|i| (i, i))).unwrap();
        let d = DenseMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 - 2.5);
        assert_eq!(eye.spmm(&d).unwrap(), d);
    }

    #[test]
    fn two_term_dot() {
        let s = InteractionMatrix::from_dense(&DenseMatrix::from_rows(&[[0.5, 0.5]]));
        let d = DenseMatrix::from_rows(&[[2.0], [4.0]]);
        assert_eq!(s.spmm(&d).unwrap(), DenseMatrix::from_rows(&[[3.0]]));
    }

    #[test]
    fn random_spmm_matches_dense_oracle() {
        let s = random_binary(20, 15, 0.3, 3).normalize_rows();
        let mut rng = RngStream::new(4);
        let d = DenseMatrix::from_fn(15, 8, |_, _| rng.gen_range(-1.0..1.0));
        let got = s.spmm(&d).unwrap();
        assert!(got.max_abs_diff(&dense_oracle(&s.to_dense(), &d)) <= 1e-12);
    }

    #[test]
    fn spmm_shape_error_names_both_shapes() {
        let s = random_binary(3, 4, 0.5, 1);
        let err = s.spmm(&DenseMatrix::zeros(3, 2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(3, 4)") && msg.contains("(3, 2)"), "{msg}");
    }

    #[test]
    fn zero_rows_give_zero_output() {
        let s = InteractionMatrix::from_edges(3, 2, [(0, 1), (2, 0)]).unwrap();
        let out = s.spmm(&DenseMatrix::filled(2, 3, 1.5)).unwrap();
        assert!(out.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_examples() {
        let m = InteractionMatrix::from_dense(&DenseMatrix::from_rows(&[
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]));
        assert_eq!(m.kind(), MatrixKind::Binary);
        let n = m.normalize_rows();
        assert_eq!(n.kind(), MatrixKind::RowNormalized);
        assert_eq!(
            n.to_dense(),
            DenseMatrix::from_rows(&[[0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
        );
        let z = InteractionMatrix::from_dense(&DenseMatrix::zeros(1, 3)).normalize_rows();
        assert_eq!(z.to_dense(), DenseMatrix::zeros(1, 3));
    }

    #[test]
    fn normalized_rows_sum_to_one() {
        let n = random_binary(50, 30, 0.2, 17).normalize_rows();
        for (r, s) in n.row_sums().into_iter().enumerate() {
            if n.row(r).0.is_empty() {
                assert_eq!(s, 0.0);
            } else {
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn row_stochastic_times_ones_is_indicator() {
        let n = random_binary(25, 10, 0.15, 5).normalize_rows();
        let out = n.spmm(&DenseMatrix::filled(10, 1, 1.0)).unwrap();
        for r in 0..25 {
            let expect = if n.row(r).0.is_empty() { 0.0 } else { 1.0 };
            assert!((out.get(r, 0) - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn transpose_matches_dense() {
        let m = random_binary(7, 9, 0.3, 8).normalize_rows();
        assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
        assert_eq!(m.transpose().transpose().to_dense(), m.to_dense());
    }

    #[test]
    fn duplicate_edges_collapse() {
        let m = InteractionMatrix::from_edges(2, 2, [(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(m.nnz(), 2);
    }
}
