//! Coordinate-list complex operators.
//!
//! Entries are kept sorted by `(row, col)` with duplicates summed, so two
//! operators built from the same triplets in any order compare equal and
//! serialize identically.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds an operator from `(row, col, value)` triplets. Duplicate
    /// positions are coalesced by summation; entries that sum to exactly zero
    /// are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.max(c) + 1,
                });
            }
            *acc.entry((r, c)).or_insert(C64::new(0.0, 0.0)) += v;
        }
        let mut out = Self::zeros(dim);
        for ((r, c), v) in acc {
            if v.re != 0.0 || v.im != 0.0 {
                out.rows.push(r);
                out.cols.push(c);
                out.vals.push(v);
            }
        }
        Ok(out)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            rows: (0..dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![C64::new(1.0, 0.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let key = (row, col);
        let (mut lo, mut hi) = (0, self.nnz());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if (self.rows[mid], self.cols[mid]) < key {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        if k < self.nnz() && self.rows[k] == row && self.cols[k] == col {
            self.vals[k]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.entries().map(|(r, c, v)| (c, r, v.conj())))
            .expect("adjoint preserves bounds")
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self::from_triplets(self.dim, self.entries().map(|(r, c, v)| (r, c, v * s)))
            .expect("scaling preserves bounds")
    }

    /// `self + other`.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        Self::from_triplets(self.dim, self.entries().chain(other.entries()))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut by_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); other.dim];
        for (r, c, v) in other.entries() {
            by_row[r].push((c, v));
        }
        let mut trip = Vec::new();
        for (r, k, a) in self.entries() {
            for &(c, b) in &by_row[k] {
                trip.push((r, c, a * b));
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    /// `y += scale * A x`.
    #[inline]
    pub fn apply_add(&self, x: &[C64], scale: C64, y: &mut [C64]) {
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[r] += scale * v * x[c];
        }
    }

    /// `y += scale * x A` where `x` and `y` are row vectors.
    #[inline]
    pub fn apply_right_add(&self, x: &[C64], scale: C64, y: &mut [C64]) {
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[c] += scale * x[r] * v;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_add(x, C64::new(1.0, 0.0), &mut y);
        y
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        let mut worst = 0.0f64;
        for (r, c, v) in self.entries() {
            worst = worst.max((v - adj.get(r, c)).norm());
        }
        for (r, c, v) in adj.entries() {
            worst = worst.max((v - self.get(r, c)).norm());
        }
        worst
    }

    /// Keeps the rows and columns listed in `keep` (in that order).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let trip = self.entries().filter_map(|(r, c, v)| {
            let (nr, nc) = (pos[r], pos[c]);
            (nr != usize::MAX && nc != usize::MAX).then_some((nr, nc, v))
        });
        Self::from_triplets(keep.len(), trip).expect("restriction stays in bounds")
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Writes `row,col,re,im` lines with a `# dim=<n>` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# dim={}", self.dim)?;
        writeln!(w, "row,col,re,im")?;
        for (r, c, v) in self.entries() {
            writeln!(w, "{},{},{:e},{:e}", r, c, v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut dim = None;
        let mut trip = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let bad = |detail: &str| Error::Csv {
                line: n + 1,
                detail: detail.to_string(),
            };
            if let Some(rest) = line.strip_prefix("# dim=") {
                dim = Some(rest.parse::<usize>().map_err(|_| bad("bad dim header"))?);
                continue;
            }
            if line.is_empty() || line.starts_with("row") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let r = f[0].parse().map_err(|_| bad("row"))?;
            let c = f[1].parse().map_err(|_| bad("col"))?;
            let re = f[2].parse().map_err(|_| bad("re"))?;
            let im = f[3].parse().map_err(|_| bad("im"))?;
            trip.push((r, c, C64::new(re, im)));
        }
        let dim = dim.ok_or(Error::Csv {
            line: 1,
            detail: "missing `# dim=` header".into(),
        })?;
        Self::from_triplets(dim, trip)
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if other != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other,
            });
        }
        Ok(())
    }
}

/// Indices reachable from `seeds` by repeatedly following nonzero entries
/// (column -> row) of any operator in `ops`. Returned sorted.
pub fn reachable(seeds: &[usize], ops: &[&SparseOperator]) -> Vec<usize> {
    let dim = ops.first().map(|o| o.dim()).unwrap_or(0);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for op in ops {
        for (r, c, _) in op.entries() {
            adj[c].push(r);
        }
    }
    let mut seen = vec![false; dim];
    let mut stack: Vec<usize> = seeds.to_vec();
    for &s in seeds {
        seen[s] = true;
    }
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    (0..dim).filter(|&i| seen[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn duplicates_are_summed() {
        let op = SparseOperator::from_triplets(3, [(0, 1, c(1.0, 0.0)), (0, 1, c(0.5, 2.0))]).unwrap();
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.get(0, 1), c(1.5, 2.0));
        assert_eq!(op.get(1, 0), c(0.0, 0.0));
    }

    #[test]
    fn cancelled_entries_are_dropped() {
        let op = SparseOperator::from_triplets(2, [(1, 1, c(1.0, 0.0)), (1, 1, c(-1.0, 0.0))]).unwrap();
        assert_eq!(op.nnz(), 0);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = SparseOperator::from_triplets(2, [(2, 0, c(1.0, 0.0))]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, got: 3 }));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseOperator::from_triplets(3, [(0, 1, c(1.0, 1.0)), (2, 0, c(2.0, 0.0)), (1, 1, c(0.0, -1.0))]).unwrap();
        let b = SparseOperator::from_triplets(3, [(1, 2, c(3.0, 0.0)), (0, 0, c(1.0, 0.5))]).unwrap();
        let sparse = a.matmul(&b).unwrap().to_dense();
        let dense = a.to_dense() * b.to_dense();
        assert!((sparse - dense).norm() < 1e-15);
    }

    #[test]
    fn right_application_is_row_vector_product() {
        let a = SparseOperator::from_triplets(2, [(0, 1, c(2.0, 0.0)), (1, 0, c(0.0, 1.0))]).unwrap();
        let x = [c(1.0, 0.0), c(0.0, 3.0)];
        let mut y = [c(0.0, 0.0); 2];
        a.apply_right_add(&x, c(1.0, 0.0), &mut y);
        // [1, 3i] * [[0, 2], [i, 0]] = [-3, 2]
        assert_eq!(y, [c(-3.0, 0.0), c(2.0, 0.0)]);
    }

    #[test]
    fn restriction_keeps_listed_order() {
        let a = SparseOperator::from_triplets(4, [(3, 1, c(1.0, 0.0)), (0, 2, c(5.0, 0.0))]).unwrap();
        let r = a.restrict(&[3, 1]);
        assert_eq!(r.dim(), 2);
        assert_eq!(r.get(0, 1), c(1.0, 0.0));
        assert_eq!(r.nnz(), 1);
    }

    #[test]
    fn reachability_follows_columns_to_rows() {
        let a = SparseOperator::from_triplets(4, [(1, 0, c(1.0, 0.0)), (2, 1, c(1.0, 0.0))]).unwrap();
        assert_eq!(reachable(&[0], &[&a]), vec![0, 1, 2]);
        assert_eq!(reachable(&[3], &[&a]), vec![3]);
    }

    #[test]
    fn csv_rejects_missing_header() {
        let err = SparseOperator::read_csv("row,col,re,im\n0,0,1,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { .. }));
    }
}
