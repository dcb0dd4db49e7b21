//! Cartan prolongation of the realized negative parts.
//!
//! Grade k >= 0 layers are computed as the kernel of the linear condition
//! [X, g_{-1}] subset g_{k-1}.  This is the layer engine behind the
//! membership route in `algebras`; the Pfaff-system kernel and the
//! closed-form realizations provide independent cross-checks.

use crate::algebras::{realized_negative_basis, Algebra};
use crate::grassmann::Monomial;
use crate::linalg::{nullspace, same_span, SpanBasis, SparseRow};
use crate::supervector::{odd_generators, AmbientBasis, Field};
use std::collections::BTreeMap;

/// Graded layers of a prolongation, keyed by grade.
pub struct ProlongTower {
    pub alg: Algebra,
    pub layers: BTreeMap<i64, Vec<Field>>,
}

impl ProlongTower {
    pub fn dims(&self) -> Vec<(i64, usize)> {
        self.layers.iter().map(|(k, v)| (*k, v.len())).collect()
    }
}

/// One prolongation step: all grade-k fields whose brackets with the odd
/// generators stay inside the span of the previous layer.
pub(crate) fn step(alg: Algebra, k: i64, prev: &[Field]) -> Vec<Field> {
    let sys = alg.sys();
    let ab_k = AmbientBasis::new(sys, k);
    let ab_prev = AmbientBasis::new(sys, k - 1);
    let mut span = SpanBasis::new();
    for f in prev {
        span.insert(&ab_prev.row(f).expect("previous layer grade"));
    }
    let gens = odd_generators(sys);
    let mut rows: BTreeMap<(usize, usize), SparseRow> = BTreeMap::new();
    for n in 0..ab_k.dim() {
        let e = ab_k.field(n);
        for (s, d) in gens.iter().enumerate() {
            let b = e.bracket(d).expect("homogeneous basis field");
            let row = ab_prev.row(&b).expect("bracket grade");
            for (col, q) in span.residual(&row) {
                rows.entry((s, col)).or_default().push((n, q));
            }
        }
    }
    nullspace(ab_k.dim(), rows.into_values().collect())
        .into_iter()
        .map(|v| ab_k.from_dense(&v))
        .collect()
}

/// Restrict a layer to its divergence-free part.
pub(crate) fn divergence_free(basis: Vec<Field>) -> Vec<Field> {
    if basis.is_empty() {
        return basis;
    }
    let mut rows: BTreeMap<Monomial, SparseRow> = BTreeMap::new();
    let divs: Vec<_> = basis
        .iter()
        .map(|f| f.divergence().expect("homogeneous parity"))
        .collect();
    for (n, d) in divs.iter().enumerate() {
        for (m, q) in &d.terms {
            rows.entry(*m).or_default().push((n, q.clone()));
        }
    }
    let combos = nullspace(basis.len(), rows.into_values().collect());
    combos
        .into_iter()
        .map(|v| {
            let mut out = Field::zero(basis[0].sys);
            for (n, c) in v.iter().enumerate() {
                out = out.add(&basis[n].scale(c));
            }
            out
        })
        .collect()
}

/// Compute the tower from -depth up to `kmax`.  The strict ksle510 tower
/// restricts every nonnegative layer to its divergence-free part before
/// prolonging further; the extended tower keeps the full maximal step.
pub fn prolong_tower(alg: Algebra, kmax: i64) -> ProlongTower {
    let mut layers: BTreeMap<i64, Vec<Field>> = BTreeMap::new();
    for k in -alg.depth()..0 {
        layers.insert(k, realized_negative_basis(alg, k));
    }
    for k in 0..=kmax {
        let prev = layers.get(&(k - 1)).expect("previous layer");
        let mut layer = step(alg, k, prev);
        if alg == Algebra::Ksle510 {
            layer = divergence_free(layer);
        }
        layers.insert(k, layer);
    }
    ProlongTower { alg, layers }
}

/// Compare two sets of same-grade fields as subspaces.
pub fn spans_agree(sys: crate::grassmann::System, k: i64, a: &[Field], b: &[Field]) -> bool {
    let ab = AmbientBasis::new(sys, k);
    let rows_a: Vec<SparseRow> = a.iter().map(|f| ab.row(f).expect("grade")).collect();
    let rows_b: Vec<SparseRow> = b.iter().map(|f| ab.row(f).expect("grade")).collect();
    same_span(&rows_a, &rows_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebras::admissible_space;

    #[test]
    fn nonpositive_dims_match_tables() {
        let expect: Vec<(Algebra, Vec<(i64, usize)>)> = vec![
            (Algebra::Vle36, vec![(-2, 3), (-1, 6), (0, 12)]),
            (Algebra::Mb38, vec![(-3, 2), (-2, 3), (-1, 6), (0, 12)]),
            (Algebra::Ksle510, vec![(-2, 5), (-1, 10), (0, 24)]),
            (Algebra::Ksle510Bar, vec![(-2, 5), (-1, 10), (0, 25)]),
            (Algebra::VectN(3), vec![(-1, 3), (0, 9)]),
        ];
        for (alg, dims) in expect {
            let tower = prolong_tower(alg, 0);
            for (k, d) in dims {
                assert_eq!(
                    tower.layers[&k].len(),
                    d,
                    "{} grade {k} dimension",
                    alg.name()
                );
            }
        }
    }

    #[test]
    fn prolong_matches_admissible_at_low_grades() {
        for alg in [Algebra::Vle36, Algebra::Mb38] {
            let tower = prolong_tower(alg, 1);
            for k in [-1, 0, 1] {
                let adm = admissible_space(alg, k);
                assert!(
                    spans_agree(alg.sys(), k, &tower.layers[&k], &adm),
                    "{} grade {k}",
                    alg.name()
                );
            }
        }
        let tower = prolong_tower(Algebra::Ksle510Bar, 0);
        let adm = admissible_space(Algebra::Ksle510Bar, 0);
        assert!(spans_agree(System::Ksle510, 0, &tower.layers[&0], &adm));
    }

    use crate::grassmann::System;

    #[test]
    fn dims_probe() {
        for alg in [
            Algebra::Vle36,
            Algebra::Mb38,
            Algebra::Ksle510,
            Algebra::Ksle510Bar,
            Algebra::VectN(3),
        ] {
            let tower = prolong_tower(alg, 2);
            println!("{} dims {:?}", alg.name(), tower.dims());
        }
    }
}
