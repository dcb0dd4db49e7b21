//! Exact sparse linear algebra over the rationals.
//!
//! Rows are kept as sorted (column, coefficient) pairs and normalized to
//! primitive integer vectors after every elimination step, so intermediate
//! entries stay small and every result is exact.  No pivoting heuristic
//! affects results, only speed.

use crate::grassmann::Q;
use num::{BigInt, Integer, One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Sparse row: strictly ascending column indices, nonzero coefficients.
pub type SparseRow = Vec<(usize, Q)>;

/// Normalize to a primitive integer row with positive leading coefficient.
pub fn normalize_row(row: &mut SparseRow) {
    if row.is_empty() {
        return;
    }
    let mut den_lcm = BigInt::one();
    for (_, c) in row.iter() {
        den_lcm = den_lcm.lcm(c.denom());
    }
    let mut num_gcd = BigInt::zero();
    for (_, c) in row.iter() {
        num_gcd = num_gcd.gcd(&(c.numer() * (&den_lcm / c.denom())));
    }
    if num_gcd.is_zero() {
        return;
    }
    let mut scale = Q::new(den_lcm, num_gcd);
    if row[0].1.is_negative() {
        scale = -scale;
    }
    if scale.abs().is_one() && !scale.is_negative() {
        return;
    }
    for (_, c) in row.iter_mut() {
        *c *= scale.clone();
    }
}

/// r1 - factor * r2, merged sparsely.
pub fn row_axpy(r1: &SparseRow, factor: &Q, r2: &SparseRow) -> SparseRow {
    let mut out = Vec::with_capacity(r1.len() + r2.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < r1.len() || j < r2.len() {
        match (r1.get(i), r2.get(j)) {
            (Some((c1, v1)), Some((c2, v2))) => {
                if c1 < c2 {
                    out.push((*c1, v1.clone()));
                    i += 1;
                } else if c2 < c1 {
                    let v = -(factor.clone() * v2.clone());
                    if !v.is_zero() {
                        out.push((*c2, v));
                    }
                    j += 1;
                } else {
                    let v = v1.clone() - factor.clone() * v2.clone();
                    if !v.is_zero() {
                        out.push((*c1, v));
                    }
                    i += 1;
                    j += 1;
                }
            }
            (Some((c1, v1)), None) => {
                out.push((*c1, v1.clone()));
                i += 1;
            }
            (None, Some((c2, v2))) => {
                let v = -(factor.clone() * v2.clone());
                if !v.is_zero() {
                    out.push((*c2, v));
                }
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

pub fn dense_to_sparse(v: &[Q]) -> SparseRow {
    v.iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| (i, c.clone()))
        .collect()
}

pub fn sparse_to_dense(r: &SparseRow, ncols: usize) -> Vec<Q> {
    let mut v = vec![Q::zero(); ncols];
    for (c, x) in r {
        v[*c] = x.clone();
    }
    v
}

/// Incrementally built row space with fully reduced (Jordan) pivot rows.
/// Supports exact membership tests and residual computation.
#[derive(Clone, Debug, Default)]
pub struct SpanBasis {
    /// pivot column -> row whose leading entry is that column.
    rows: BTreeMap<usize, SparseRow>,
}

impl SpanBasis {
    pub fn new() -> SpanBasis {
        SpanBasis::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Fully reduce a row against the basis.
    pub fn residual(&self, row: &SparseRow) -> SparseRow {
        let mut r = row.clone();
        let mut i = 0;
        while i < r.len() {
            let col = r[i].0;
            if let Some(p) = self.rows.get(&col) {
                let factor = r[i].1.clone() / p[0].1.clone();
                r = row_axpy(&r, &factor, p);
                // entries at columns < col are untouched; continue from i
            } else {
                i += 1;
            }
        }
        r
    }

    pub fn contains(&self, row: &SparseRow) -> bool {
        self.residual(row).is_empty()
    }

    /// Insert a row; returns true if the rank grew.
    pub fn insert(&mut self, row: &SparseRow) -> bool {
        let mut r = self.residual(row);
        if r.is_empty() {
            return false;
        }
        normalize_row(&mut r);
        let pivot = r[0].0;
        // Keep the Jordan invariant: eliminate the new pivot column from
        // every existing row.
        let cols: Vec<usize> = self.rows.keys().cloned().collect();
        for c in cols {
            let row_c = self.rows.get(&c).unwrap();
            if let Some(pos) = row_c.iter().position(|(cc, _)| *cc == pivot) {
                let factor = row_c[pos].1.clone() / r[0].1.clone();
                let mut updated = row_axpy(row_c, &factor, &r);
                normalize_row(&mut updated);
                self.rows.insert(c, updated);
            }
        }
        self.rows.insert(pivot, r);
        true
    }

    pub fn pivot_cols(&self) -> Vec<usize> {
        self.rows.keys().cloned().collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &SparseRow> {
        self.rows.values()
    }
}

/// Do two row collections span the same subspace?
pub fn same_span(a: &[SparseRow], b: &[SparseRow]) -> bool {
    let mut sa = SpanBasis::new();
    for r in a {
        sa.insert(r);
    }
    let mut sb = SpanBasis::new();
    for r in b {
        sb.insert(r);
    }
    if sa.rank() != sb.rank() {
        return false;
    }
    a.iter().all(|r| sb.contains(r)) && b.iter().all(|r| sa.contains(r))
}

pub fn rank_of(rows: &[SparseRow]) -> usize {
    let mut s = SpanBasis::new();
    for r in rows {
        s.insert(r);
    }
    s.rank()
}

/// Exact nullspace basis of the homogeneous system  rows * x = 0  in
/// `ncols` unknowns.  Forward elimination picks sparse pivots; solutions are
/// recovered by back substitution and scaled to primitive integer vectors.
pub fn nullspace(ncols: usize, rows: Vec<SparseRow>) -> Vec<Vec<Q>> {
    // col -> indices of active rows containing it
    let mut rows: Vec<Option<SparseRow>> = rows
        .into_iter()
        .filter(|r| !r.is_empty())
        .map(Some)
        .collect();
    let mut col_index: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ncols];
    for (ri, r) in rows.iter().enumerate() {
        for (c, _) in r.as_ref().unwrap() {
            col_index[*c].insert(ri);
        }
    }
    let mut active: BTreeSet<usize> = (0..rows.len()).collect();
    // (pivot col, pivot row) in elimination order
    let mut pivots: Vec<(usize, SparseRow)> = Vec::new();
    let mut pivot_cols: BTreeSet<usize> = BTreeSet::new();

    while !active.is_empty() {
        // choose the shortest active row, with its rarest column as pivot
        let &ri = active
            .iter()
            .min_by_key(|&&ri| rows[ri].as_ref().map_or(usize::MAX, |r| r.len()))
            .unwrap();
        let row = rows[ri].take().unwrap();
        active.remove(&ri);
        for (c, _) in &row {
            col_index[*c].remove(&ri);
        }
        if row.is_empty() {
            continue;
        }
        let (pcol, _) = row
            .iter()
            .min_by_key(|(c, _)| col_index[*c].len())
            .unwrap()
            .clone();
        let pval = row.iter().find(|(c, _)| *c == pcol).unwrap().1.clone();
        // eliminate pcol from all other active rows containing it
        let holders: Vec<usize> = col_index[pcol].iter().cloned().collect();
        for rj in holders {
            let other = rows[rj].take().unwrap();
            for (c, _) in &other {
                col_index[*c].remove(&rj);
            }
            let oval = other.iter().find(|(c, _)| *c == pcol).unwrap().1.clone();
            let factor = oval / pval.clone();
            let mut updated = row_axpy(&other, &factor, &row);
            normalize_row(&mut updated);
            if updated.is_empty() {
                active.remove(&rj);
            } else {
                for (c, _) in &updated {
                    col_index[*c].insert(rj);
                }
                rows[rj] = Some(updated);
            }
        }
        pivot_cols.insert(pcol);
        pivots.push((pcol, row));
    }

    let free_cols: Vec<usize> = (0..ncols).filter(|c| !pivot_cols.contains(c)).collect();
    let mut basis = Vec::with_capacity(free_cols.len());
    for &f in &free_cols {
        let mut x = vec![Q::zero(); ncols];
        x[f] = Q::one();
        for (pcol, prow) in pivots.iter().rev() {
            let mut acc = Q::zero();
            let mut pval = Q::one();
            for (c, v) in prow {
                if c == pcol {
                    pval = v.clone();
                } else {
                    let xc = &x[*c];
                    if !xc.is_zero() {
                        acc += v.clone() * xc.clone();
                    }
                }
            }
            x[*pcol] = -acc / pval;
        }
        // scale to primitive integers for stable, readable bases
        let mut sp = dense_to_sparse(&x);
        normalize_row(&mut sp);
        basis.push(sparse_to_dense(&sp, ncols));
    }
    basis
}
