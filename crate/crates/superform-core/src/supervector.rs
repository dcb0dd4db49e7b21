//! Polynomial vector fields on the supported coordinate systems.
//!
//! A field is stored by its components on the coordinate derivatives
//! (del/del u^i, left derivatives on odd coordinates).  Brackets, the graded
//! divergence, and the change to the constraint-adapted generator basis
//! (E_i, D-generators, and the extra odd slot for mb38) live here.

use crate::grassmann::{
    eps2_up, eps3, eps5, qi, qr, theta_up, CoordId, CoordKind, Monomial, Parity, Poly, Q, System,
};
use crate::linalg::SparseRow;
use num::Zero;
use std::collections::BTreeMap;

/// Errors reported by field-level operations.
#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("field is not parity homogeneous")]
    MixedParity,
    #[error("field is not degree homogeneous")]
    MixedDegree,
    #[error("operation needs matching coordinate systems ({0:?} vs {1:?})")]
    SystemMismatch(System, System),
    #[error("parameter constraint violated: {0}")]
    Constraint(String),
}

/// A polynomial vector field: component polynomial per coordinate derivative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub sys: System,
    pub comps: Vec<Poly>,
}

impl Field {
    pub fn zero(sys: System) -> Field {
        Field {
            sys,
            comps: vec![Poly::zero(); sys.n_coords()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|p| p.is_zero())
    }

    /// Basis derivative for coordinate `c`.
    pub fn basis(sys: System, c: CoordId) -> Field {
        let mut f = Field::zero(sys);
        f.comps[c] = Poly::one();
        f
    }

    pub fn add(&self, other: &Field) -> Field {
        debug_assert_eq!(self.sys, other.sys);
        Field {
            sys: self.sys,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Field {
        Field {
            sys: self.sys,
            comps: self.comps.iter().map(|p| p.neg()).collect(),
        }
    }

    pub fn scale(&self, c: &Q) -> Field {
        Field {
            sys: self.sys,
            comps: self.comps.iter().map(|p| p.scale(c)).collect(),
        }
    }

    pub fn scale_i(&self, c: i64) -> Field {
        self.scale(&qi(c))
    }

    /// Left multiplication by a polynomial coefficient.
    pub fn scale_poly(&self, p: &Poly) -> Field {
        Field {
            sys: self.sys,
            comps: self.comps.iter().map(|c| p.mul(c)).collect(),
        }
    }

    /// Parity of the field as an operator; None when mixed.
    pub fn parity(&self) -> Option<Parity> {
        let mut par = None;
        for (c, comp) in self.comps.iter().enumerate() {
            if comp.is_zero() {
                continue;
            }
            let cp = comp.parity()?;
            let p = if self.sys.coord_parity(c) == Parity::Odd {
                cp.flip()
            } else {
                cp
            };
            match par {
                None => par = Some(p),
                Some(q) if q != p => return None,
                _ => {}
            }
        }
        Some(par.unwrap_or(Parity::Even))
    }

    /// Scaling degree of the field as an operator; None when mixed or zero.
    pub fn degree(&self) -> Option<i64> {
        let mut deg = None;
        for (c, comp) in self.comps.iter().enumerate() {
            if comp.is_zero() {
                continue;
            }
            let d = comp.degree(self.sys)? - self.sys.coord_degree(c);
            match deg {
                None => deg = Some(d),
                Some(x) if x != d => return None,
                _ => {}
            }
        }
        deg
    }

    /// Apply the field to a polynomial as a derivation.
    pub fn apply(&self, f: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (c, comp) in self.comps.iter().enumerate() {
            if comp.is_zero() {
                continue;
            }
            out = out.add(&comp.mul(&f.derive(self.sys, c)));
        }
        out
    }

    /// Graded bracket [X, Y] = X Y - (-1)^{|X||Y|} Y X.
    pub fn bracket(&self, other: &Field) -> Result<Field, FieldError> {
        if self.sys != other.sys {
            return Err(FieldError::SystemMismatch(self.sys, other.sys));
        }
        let px = self.parity().ok_or(FieldError::MixedParity)?;
        let py = other.parity().ok_or(FieldError::MixedParity)?;
        let sign = px.pair_sign(py) as i64;
        let mut comps = Vec::with_capacity(self.comps.len());
        for c in 0..self.comps.len() {
            let a = self.apply(&other.comps[c]);
            let b = other.apply(&self.comps[c]);
            comps.push(a.sub(&b.scale_i(sign)));
        }
        Ok(Field {
            sys: self.sys,
            comps,
        })
    }

    /// Graded divergence: sum of even derivatives of even components plus
    /// (-1)^{|X|} times odd derivatives of odd components.  It vanishes on
    /// coordinate-preserving flows that conserve the formal volume and picks
    /// out the grading operator of ksle510bar.
    pub fn divergence(&self) -> Result<Poly, FieldError> {
        let par = self.parity().ok_or(FieldError::MixedParity)?;
        let mut out = Poly::zero();
        for (c, comp) in self.comps.iter().enumerate() {
            if comp.is_zero() {
                continue;
            }
            let d = comp.derive(self.sys, c);
            if self.sys.coord_parity(c) == Parity::Even {
                out = out.add(&d);
            } else {
                out = out.add(&d.scale_i(par.sign() as i64));
            }
        }
        Ok(out)
    }

    pub fn render(&self) -> String {
        let sys = self.sys;
        let mut parts = Vec::new();
        for (c, comp) in self.comps.iter().enumerate() {
            if comp.is_zero() {
                continue;
            }
            let dname = match sys.coords()[c] {
                CoordKind::Even(i) => {
                    if matches!(sys, System::VectN(_)) {
                        format!("del{{x{i}}}")
                    } else {
                        format!("del{{u{i}}}")
                    }
                }
                CoordKind::Theta(i, a) => format!("d{{{i},{a}}}"),
                CoordKind::ThetaPair(i, j) => format!("d{{{i},{j}}}"),
                CoordKind::Vartheta(a) => format!("del{{vth{a}}}"),
            };
            parts.push(format!("({})*{}", comp.render(sys), dname));
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }
}

// ---------------------------------------------------------------------------
// Generator families
// ---------------------------------------------------------------------------

/// E_i: plain del_i for vle/ksle/vect; del_i - theta^a_i eth_a for mb38.
pub fn gen_e(sys: System, i: u8) -> Field {
    let mut f = Field::basis(sys, sys.even_id(i));
    if sys == System::Mb38 {
        for a in 1..=2u8 {
            let coeff = theta_up(sys, i, a).neg();
            let mut g = Field::zero(sys);
            g.comps[sys.vartheta_id(a)] = coeff;
            f = f.add(&g);
        }
    }
    f
}

/// vle36 odd generator D^{ia} = d^{ia} + eps^{ijk} theta^a_j del_k.
pub fn gen_d_vle(i: u8, a: u8) -> Field {
    let sys = System::Vle36;
    let mut f = Field::basis(sys, sys.theta_id(i, a));
    for j in 1..=3u8 {
        for k in 1..=3u8 {
            let e = eps3(i, j, k);
            if e != 0 {
                let mut g = Field::zero(sys);
                g.comps[sys.even_id(k)] = theta_up(sys, j, a).scale_i(e);
                f = f.add(&g);
            }
        }
    }
    f
}

/// mb38 odd generator
/// D^{ia} = d^{ia} - 3 eps^{ijk} theta^a_j del_k
///          + eps^{ijk} theta^a_j theta^b_k eth_b - u^i eth^a,
/// with eth^a = eps^{ab} eth_b.
pub fn gen_d_mb(i: u8, a: u8) -> Field {
    let sys = System::Mb38;
    let mut f = Field::basis(sys, sys.theta_id(i, a));
    for j in 1..=3u8 {
        for k in 1..=3u8 {
            let e = eps3(i, j, k);
            if e == 0 {
                continue;
            }
            let mut g = Field::zero(sys);
            g.comps[sys.even_id(k)] = theta_up(sys, j, a).scale_i(-3 * e);
            f = f.add(&g);
            for b in 1..=2u8 {
                let mut h = Field::zero(sys);
                h.comps[sys.vartheta_id(b)] =
                    theta_up(sys, j, a).mul(&theta_up(sys, k, b)).scale_i(e);
                f = f.add(&h);
            }
        }
    }
    for b in 1..=2u8 {
        let e = eps2_up(a, b);
        if e != 0 {
            let mut h = Field::zero(sys);
            h.comps[sys.vartheta_id(b)] = Poly::coord(sys, sys.even_id(i)).scale_i(-e);
            f = f.add(&h);
        }
    }
    f
}

/// mb38 odd generator F^a = eth^a = eps^{ab} eth_b.
pub fn gen_f_mb(a: u8) -> Field {
    let sys = System::Mb38;
    let mut f = Field::zero(sys);
    for b in 1..=2u8 {
        let e = eps2_up(a, b);
        if e != 0 {
            f.comps[sys.vartheta_id(b)] = Poly::constant(qi(e));
        }
    }
    f
}

/// ksle510 odd generator
/// D^{ij} = d^{ij} + 1/2 eps^{ijklm} theta_{kl} del_m,  any i != j.
pub fn gen_d_ksle(i: u8, j: u8) -> Field {
    let sys = System::Ksle510;
    let (sign, id) = sys.theta_pair_id(i, j);
    let mut f = Field::basis(sys, id).scale_i(sign as i64);
    for k in 1..=5u8 {
        for l in 1..=5u8 {
            for m in 1..=5u8 {
                let e = eps5([i, j, k, l, m]);
                if e == 0 || k >= l {
                    // sum over unordered {k,l} once; the two orders double
                    // the ordered sum, cancelling the 1/2
                    continue;
                }
                let mut g = Field::zero(sys);
                g.comps[sys.even_id(m)] =
                    Poly::coord(sys, sys.theta_pair_id(k, l).1).scale_i(e);
                f = f.add(&g);
            }
        }
    }
    f
}

// ---------------------------------------------------------------------------
// Parity-adapted frames
// ---------------------------------------------------------------------------
//
// The constraint frame that is compatible with bracket closure depends on the
// parity of the field being decomposed: on odd-parity fields every correction
// term beyond the bare derivative changes sign.  `frame_*` return the standard
// generators at even parity and their mirrors at odd parity.

fn mirrored(full: Field, bare: Field, par: Parity) -> Field {
    match par {
        Parity::Even => full,
        Parity::Odd => bare.scale_i(2).sub(&full),
    }
}

pub fn frame_e(sys: System, i: u8, par: Parity) -> Field {
    mirrored(gen_e(sys, i), Field::basis(sys, sys.even_id(i)), par)
}

pub fn frame_d_vle(i: u8, a: u8, par: Parity) -> Field {
    let sys = System::Vle36;
    mirrored(gen_d_vle(i, a), Field::basis(sys, sys.theta_id(i, a)), par)
}

pub fn frame_d_mb(i: u8, a: u8, par: Parity) -> Field {
    let sys = System::Mb38;
    mirrored(gen_d_mb(i, a), Field::basis(sys, sys.theta_id(i, a)), par)
}

pub fn frame_d_ksle(i: u8, j: u8, par: Parity) -> Field {
    let sys = System::Ksle510;
    let (sign, id) = sys.theta_pair_id(i, j);
    mirrored(
        gen_d_ksle(i, j),
        Field::basis(sys, id).scale_i(sign as i64),
        par,
    )
}

/// Parity-adapted variant of [`slot_generator`].
pub fn frame_slot_generator(sys: System, s: usize, par: Parity) -> Field {
    mirrored(
        slot_generator(sys, s),
        Field::basis(sys, sys.n_even() + s),
        par,
    )
}

/// The grading operator of the system: coordinates weighted by their degree.
pub fn grading_field(sys: System) -> Field {
    let mut f = Field::zero(sys);
    for c in 0..sys.n_coords() {
        f.comps[c] = Poly::coord(sys, c).scale_i(sys.coord_degree(c));
    }
    f
}

/// Odd generators of the system in canonical order, i.e. the realized
/// grade -1 subspace.
pub fn odd_generators(sys: System) -> Vec<Field> {
    match sys {
        System::Vle36 => (1..=3)
            .flat_map(|i| (1..=2).map(move |a| gen_d_vle(i, a)))
            .collect(),
        System::Mb38 => (1..=3)
            .flat_map(|i| (1..=2).map(move |a| gen_d_mb(i, a)))
            .collect(),
        System::Ksle510 => {
            let mut v = Vec::new();
            for i in 1..=5u8 {
                for j in (i + 1)..=5 {
                    v.push(gen_d_ksle(i, j));
                }
            }
            v
        }
        System::VectN(n) => (1..=n).map(|i| gen_e(sys, i)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Constraint basis
// ---------------------------------------------------------------------------

/// Components of a field on the constraint-adapted generators:
/// X = sum q_tilde[i] E_i + sum p[s] D^{(s)} (+ sum r_tilde[a] eth_a on mb38),
/// where s runs over the theta slots in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintBasis {
    pub sys: System,
    pub q_tilde: Vec<Poly>,
    pub p: Vec<Poly>,
    pub r_tilde: Vec<Poly>,
}

/// The D-generator attached to theta slot `s` (canonical odd order).
pub fn slot_generator(sys: System, s: usize) -> Field {
    match sys.coords()[sys.n_even() + s] {
        CoordKind::Theta(i, a) => match sys {
            System::Vle36 => gen_d_vle(i, a),
            System::Mb38 => gen_d_mb(i, a),
            _ => unreachable!(),
        },
        CoordKind::ThetaPair(i, j) => gen_d_ksle(i, j),
        CoordKind::Vartheta(_) | CoordKind::Even(_) => unreachable!(),
    }
}

/// Number of theta slots carrying D-generators (excludes mb vartheta slots).
pub fn n_d_slots(sys: System) -> usize {
    match sys {
        System::Vle36 => 6,
        System::Mb38 => 6,
        System::Ksle510 => 10,
        System::VectN(_) => 0,
    }
}

impl Field {
    /// Change to the constraint basis by exact elimination: strip the
    /// D-generator components, then the E components; for mb38 the
    /// remainder sits on the vartheta derivatives.
    pub fn to_constraint_basis(&self) -> ConstraintBasis {
        self.to_constraint_basis_in(Parity::Even)
    }

    /// Constraint-basis decomposition on the parity-adapted frame: the same
    /// elimination with every generator replaced by its `frame_*` variant.
    pub fn to_constraint_basis_in(&self, par: Parity) -> ConstraintBasis {
        let sys = self.sys;
        let n_even = sys.n_even();
        let mut rest = self.clone();
        let mut p = Vec::with_capacity(n_d_slots(sys));
        for s in 0..n_d_slots(sys) {
            let coeff = rest.comps[n_even + s].clone();
            if !coeff.is_zero() {
                rest = rest.sub(&frame_slot_generator(sys, s, par).scale_poly(&coeff));
            }
            p.push(coeff);
        }
        let mut q_tilde = Vec::with_capacity(n_even);
        for i in 1..=n_even as u8 {
            let coeff = rest.comps[sys.even_id(i)].clone();
            if !coeff.is_zero() {
                rest = rest.sub(&frame_e(sys, i, par).scale_poly(&coeff));
            }
            q_tilde.push(coeff);
        }
        let mut r_tilde = Vec::new();
        if sys == System::Mb38 {
            for a in 1..=2u8 {
                let coeff = rest.comps[sys.vartheta_id(a)].clone();
                if !coeff.is_zero() {
                    rest.comps[sys.vartheta_id(a)] = Poly::zero();
                }
                r_tilde.push(coeff);
            }
        }
        debug_assert!(rest.is_zero(), "constraint basis change left a remainder");
        ConstraintBasis {
            sys,
            q_tilde,
            p,
            r_tilde,
        }
    }
}

impl ConstraintBasis {
    pub fn reassemble(&self) -> Field {
        let sys = self.sys;
        let mut out = Field::zero(sys);
        for a in 1..=self.r_tilde.len() as u8 {
            let mut g = Field::zero(sys);
            g.comps[sys.vartheta_id(a)] = self.r_tilde[(a - 1) as usize].clone();
            out = out.add(&g);
        }
        for i in 1..=self.q_tilde.len() as u8 {
            out = out.add(&gen_e(sys, i).scale_poly(&self.q_tilde[(i - 1) as usize]));
        }
        for (s, coeff) in self.p.iter().enumerate() {
            if !coeff.is_zero() {
                out = out.add(&slot_generator(sys, s).scale_poly(coeff));
            }
        }
        out
    }

    /// P component for theta_{ia} (vle/mb).
    pub fn p_theta(&self, i: u8, a: u8) -> &Poly {
        &self.p[((i - 1) * 2 + (a - 1)) as usize]
    }

    /// Signed P component for theta_{ij}, any i != j (ksle).
    pub fn p_pair(&self, i: u8, j: u8) -> Poly {
        let sys = self.sys;
        let (sign, id) = sys.theta_pair_id(i, j);
        self.p[id - sys.n_even()].scale_i(sign as i64)
    }
}

/// Closed-form tilde components; used to cross-check the elimination.
///
/// For vle36:  qt^i = Q^i - (-1)^X eps^{ijk} theta^a_j P_{ka}.
pub fn q_tilde_formula_vle(x: &Field) -> Vec<Poly> {
    let sys = System::Vle36;
    let sign = x.parity().expect("homogeneous").sign() as i64;
    let mut out = Vec::new();
    for i in 1..=3u8 {
        let mut q = x.comps[sys.even_id(i)].clone();
        for j in 1..=3u8 {
            for k in 1..=3u8 {
                let e = eps3(i, j, k);
                if e == 0 {
                    continue;
                }
                for a in 1..=2u8 {
                    let term = theta_up(sys, j, a).mul(&x.comps[sys.theta_id(k, a)]);
                    q = q.sub(&term.scale_i(sign * e));
                }
            }
        }
        out.push(q);
    }
    out
}

/// For mb38:  qt^i = Q^i + 3 (-1)^X eps^{ijk} theta^a_j P_{ka}.
pub fn q_tilde_formula_mb(x: &Field) -> Vec<Poly> {
    let sys = System::Mb38;
    let sign = x.parity().expect("homogeneous").sign() as i64;
    let mut out = Vec::new();
    for i in 1..=3u8 {
        let mut q = x.comps[sys.even_id(i)].clone();
        for j in 1..=3u8 {
            for k in 1..=3u8 {
                let e = eps3(i, j, k);
                if e == 0 {
                    continue;
                }
                for a in 1..=2u8 {
                    let term = theta_up(sys, j, a).mul(&x.comps[sys.theta_id(k, a)]);
                    q = q.add(&term.scale_i(3 * sign * e));
                }
            }
        }
        out.push(q);
    }
    out
}

/// For mb38:
/// rt^a = R^a + (-1)^X theta^a_i Q^i
///        + 2 eps^{ijk} theta^a_i theta^b_j P_{kb} - u^i P^a_i.
pub fn r_tilde_formula_mb(x: &Field) -> Vec<Poly> {
    let sys = System::Mb38;
    let sign = x.parity().expect("homogeneous").sign() as i64;
    let mut out = Vec::new();
    for a in 1..=2u8 {
        let mut r = x.comps[sys.vartheta_id(a)].clone();
        for i in 1..=3u8 {
            r = r.add(
                &theta_up(sys, i, a)
                    .mul(&x.comps[sys.even_id(i)])
                    .scale_i(sign),
            );
            for b in 1..=2u8 {
                let e = eps2_up(a, b);
                if e != 0 {
                    let term = Poly::coord(sys, sys.even_id(i))
                        .mul(&x.comps[sys.theta_id(i, b)]);
                    r = r.sub(&term.scale_i(e));
                }
                for j in 1..=3u8 {
                    for k in 1..=3u8 {
                        let e3 = eps3(i, j, k);
                        if e3 == 0 {
                            continue;
                        }
                        let term = theta_up(sys, i, a)
                            .mul(&theta_up(sys, j, b))
                            .mul(&x.comps[sys.theta_id(k, b)]);
                        r = r.add(&term.scale_i(2 * e3));
                    }
                }
            }
        }
        out.push(r);
    }
    out
}

/// For ksle510:  qt^i = Q^i + 1/4 (-1)^X eps^{ijklm} theta_{jk} P_{lm}.
pub fn q_tilde_formula_ksle(x: &Field) -> Vec<Poly> {
    let sys = System::Ksle510;
    let sign = x.parity().expect("homogeneous").sign() as i64;
    let cb_p = |i: u8, j: u8| -> Poly {
        let (s, id) = sys.theta_pair_id(i, j);
        x.comps[id].scale_i(s as i64)
    };
    let mut out = Vec::new();
    for i in 1..=5u8 {
        let mut q = x.comps[sys.even_id(i)].clone();
        for j in 1..=5u8 {
            for k in 1..=5u8 {
                for l in 1..=5u8 {
                    for m in 1..=5u8 {
                        let e = eps5([i, j, k, l, m]);
                        if e == 0 {
                            continue;
                        }
                        let term = Poly::coord(sys, sys.theta_pair_id(j, k).1)
                            .scale_i(sys.theta_pair_id(j, k).0 as i64)
                            .mul(&cb_p(l, m));
                        q = q.add(&term.scale(&qr(sign * e, 4)));
                    }
                }
            }
        }
        out.push(q);
    }
    out
}

// ---------------------------------------------------------------------------
// Vectorization
// ---------------------------------------------------------------------------

/// Ordered basis of the ambient space of fields of a fixed grade:
/// all (derivative slot, coefficient monomial) pairs.
#[derive(Clone, Debug)]
pub struct AmbientBasis {
    pub sys: System,
    pub grade: i64,
    pub entries: Vec<(CoordId, Monomial)>,
    index: BTreeMap<(CoordId, Monomial), usize>,
}

impl AmbientBasis {
    pub fn new(sys: System, grade: i64) -> AmbientBasis {
        let mut entries = Vec::new();
        for c in 0..sys.n_coords() {
            let deg = grade + sys.coord_degree(c);
            for m in crate::grassmann::monomials_of_degree(sys, deg) {
                entries.push((c, m));
            }
        }
        let index = entries
            .iter()
            .enumerate()
            .map(|(n, e)| (*e, n))
            .collect();
        AmbientBasis {
            sys,
            grade,
            entries,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn field(&self, n: usize) -> Field {
        let (c, m) = self.entries[n];
        let mut f = Field::zero(self.sys);
        f.comps[c] = Poly::monomial(m, Q::from(num::BigInt::from(1)));
        f
    }

    /// Sparse coordinates of a field in this basis; None if any term falls
    /// outside (wrong grade).
    pub fn row(&self, f: &Field) -> Option<SparseRow> {
        let mut row = Vec::new();
        for (c, comp) in f.comps.iter().enumerate() {
            for (m, coeff) in &comp.terms {
                let n = self.index.get(&(c, *m))?;
                row.push((*n, coeff.clone()));
            }
        }
        row.sort_by_key(|(n, _)| *n);
        Some(row)
    }

    pub fn from_row(&self, row: &SparseRow) -> Field {
        let mut f = Field::zero(self.sys);
        for (n, coeff) in row {
            let (c, m) = self.entries[*n];
            f.comps[c] = {
                let mut p = f.comps[c].clone();
                p.add_term(m, coeff.clone());
                p
            };
        }
        f
    }

    pub fn from_dense(&self, v: &[Q]) -> Field {
        let mut f = Field::zero(self.sys);
        for (n, coeff) in v.iter().enumerate() {
            if coeff.is_zero() {
                continue;
            }
            let (c, m) = self.entries[n];
            let mut p = f.comps[c].clone();
            p.add_term(m, coeff.clone());
            f.comps[c] = p;
        }
        f
    }
}
