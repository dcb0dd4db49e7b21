use num::Zero;
use superform_core::algebras::{admissible_space, Algebra};
use superform_core::grassmann::{
    eps2_dn, eps3, monomials_of_degree, qr, theta_up, Parity, Poly, Q, System,
};
use superform_core::linalg::{nullspace, SparseRow};
use superform_core::supervector::Field;

/// The four structural pieces of the mb D-operator, unsigned:
/// d^{ia}, eps^{ijk} theta^a_j del_k, eps^{ijk} theta^a_j theta^b_k eth_b,
/// u^i eth^a.
fn d_piece(i: u8, a: u8, t: usize) -> Field {
    let sys = System::Mb38;
    match t {
        0 => Field::basis(sys, sys.theta_id(i, a)),
        1 => {
            let mut f = Field::zero(sys);
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
        2 => {
            let mut f = Field::zero(sys);
            for j in 1..=3u8 {
                for k in 1..=3u8 {
                    let e = eps3(i, j, k);
                    if e == 0 {
                        continue;
                    }
                    for b in 1..=2u8 {
                        let mut h = Field::zero(sys);
                        h.comps[sys.vartheta_id(b)] =
                            theta_up(sys, j, a).mul(&theta_up(sys, k, b)).scale_i(e);
                        f = f.add(&h);
                    }
                }
            }
            f
        }
        3 => {
            let mut f = Field::zero(sys);
            for b in 1..=2u8 {
                let e = superform_core::grassmann::eps2_up(a, b);
                if e != 0 {
                    let mut h = Field::zero(sys);
                    h.comps[sys.vartheta_id(b)] =
                        Poly::coord(sys, sys.even_id(i)).scale_i(e as i64);
                    f = f.add(&h);
                }
            }
            f
        }
        _ => unreachable!(),
    }
}

fn mon_index(sys: System, w: i64) -> std::collections::BTreeMap<superform_core::grassmann::Monomial, usize> {
    monomials_of_degree(sys, w)
        .into_iter()
        .enumerate()
        .map(|(n, m)| (m, n))
        .collect()
}

/// Fit q^i = sum_t a_t * eps_{bc} piece_t^{ib}(src^c) over all layer members.
/// Returns the nullspace of the augmented system (a_0..a_3 per source, s) with
/// sum = s * q; a law exists iff some vector has s != 0.
fn fit_q(k: i64, par: Parity) -> Vec<Vec<Q>> {
    let sys = System::Mb38;
    let layer = admissible_space(Algebra::Mb38, k);
    let midx = mon_index(sys, k + 2);
    let nm = midx.len();
    // unknowns: 4 (pieces on mirror-frame r) + 4 (pieces on raw vartheta comps) + s
    let mut rows: std::collections::BTreeMap<(usize, usize, usize), SparseRow> =
        std::collections::BTreeMap::new();
    for (xi, x) in layer.iter().enumerate() {
        let cb = x.to_constraint_basis_in(par);
        let raw: Vec<Poly> = (1..=2u8)
            .map(|a| x.comps[sys.vartheta_id(a)].clone())
            .collect();
        for (src_id, src) in [(0usize, &cb.r_tilde), (1usize, &raw)] {
            for t in 0..4usize {
                for i in 1..=3u8 {
                    let mut ti = Poly::zero();
                    for b in 1..=2u8 {
                        for c in 1..=2u8 {
                            let dn = eps2_dn(b, c);
                            if dn != 0 {
                                ti = ti.add(
                                    &d_piece(i, b, t)
                                        .apply(&src[(c - 1) as usize])
                                        .scale_i(dn as i64),
                                );
                            }
                        }
                    }
                    for (m, cq) in &ti.terms {
                        rows.entry((xi, (i - 1) as usize, midx[m]))
                            .or_default()
                            .push((src_id * 4 + t, cq.clone()));
                    }
                }
            }
        }
        for i in 1..=3u8 {
            for (m, cq) in &cb.q_tilde[(i - 1) as usize].terms {
                rows.entry((xi, (i - 1) as usize, midx[m]))
                    .or_default()
                    .push((8, -cq.clone()));
            }
        }
    }
    let _ = nm;
    let mut rr: Vec<SparseRow> = Vec::new();
    for (_, mut row) in rows {
        row.sort_by_key(|(n, _)| *n);
        // merge duplicate columns
        let mut merged: SparseRow = Vec::new();
        for (n, c) in row {
            if let Some(last) = merged.last_mut() {
                if last.0 == n {
                    last.1 = last.1.clone() + c;
                    continue;
                }
            }
            merged.push((n, c));
        }
        merged.retain(|(_, c)| !c.is_zero());
        if !merged.is_empty() {
            rr.push(merged);
        }
    }
    nullspace(9, rr)
}

/// Fit p_{ka} = sum_t b_t * eps_{ijk} eps_{ab} piece_t^{ib}(src^j) similarly.
fn fit_p(k: i64, par: Parity) -> Vec<Vec<Q>> {
    let sys = System::Mb38;
    let layer = admissible_space(Algebra::Mb38, k);
    let midx = mon_index(sys, k + 1);
    let mut rows: std::collections::BTreeMap<(usize, usize, usize), SparseRow> =
        std::collections::BTreeMap::new();
    for (xi, x) in layer.iter().enumerate() {
        let cb = x.to_constraint_basis_in(par);
        let raw: Vec<Poly> = (1..=3u8)
            .map(|i| x.comps[sys.even_id(i)].clone())
            .collect();
        for (src_id, src) in [(0usize, &cb.q_tilde), (1usize, &raw)] {
            for t in 0..4usize {
                for kk in 1..=3u8 {
                    for a in 1..=2u8 {
                        let mut ti = Poly::zero();
                        for i in 1..=3u8 {
                            for j in 1..=3u8 {
                                let e = eps3(i, j, kk);
                                if e == 0 {
                                    continue;
                                }
                                for b in 1..=2u8 {
                                    let dn = eps2_dn(a, b);
                                    if dn == 0 {
                                        continue;
                                    }
                                    ti = ti.add(
                                        &d_piece(i, b, t)
                                            .apply(&src[(j - 1) as usize])
                                            .scale_i(e * dn as i64),
                                    );
                                }
                            }
                        }
                        let slot = ((kk - 1) * 2 + (a - 1)) as usize;
                        for (m, cq) in &ti.terms {
                            rows.entry((xi, slot, midx[m]))
                                .or_default()
                                .push((src_id * 4 + t, cq.clone()));
                        }
                    }
                }
            }
        }
        for kk in 1..=3u8 {
            for a in 1..=2u8 {
                let slot = ((kk - 1) * 2 + (a - 1)) as usize;
                let p = &cb.p[((kk - 1) * 2 + (a - 1)) as usize];
                for (m, cq) in &p.terms {
                    rows.entry((xi, slot, midx[m]))
                        .or_default()
                        .push((8, -cq.clone()));
                }
            }
        }
    }
    let mut rr: Vec<SparseRow> = Vec::new();
    for (_, mut row) in rows {
        row.sort_by_key(|(n, _)| *n);
        let mut merged: SparseRow = Vec::new();
        for (n, c) in row {
            if let Some(last) = merged.last_mut() {
                if last.0 == n {
                    last.1 = last.1.clone() + c;
                    continue;
                }
            }
            merged.push((n, c));
        }
        merged.retain(|(_, c)| !c.is_zero());
        if !merged.is_empty() {
            rr.push(merged);
        }
    }
    nullspace(9, rr)
}

#[test]
fn probe_mb_piece_fit() {
    for k in [-2i64, -1, 0, 1] {
        for par in [Parity::Even, Parity::Odd] {
            let nq = fit_q(k, par);
            let np = fit_p(k, par);
            println!("k={k} par={par:?} qfit: {}", fmt(&nq));
            println!("k={k} par={par:?} pfit: {}", fmt(&np));
        }
    }
    let _ = qr(0, 1);
}

fn fmt(sols: &Vec<Vec<Q>>) -> String {
    sols.iter()
        .map(|v| {
            format!(
                "[{}]",
                v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Cross-grade fit: stack the per-grade linear systems, with the target
/// column optionally sign-flipped per grade (0: none, 1: field parity,
/// 2: parameter-poly parity).
fn fit_multi(
    grades: &[i64],
    par: Parity,
    sign_rule: u8,
    which: u8, // 0 = q from r, 1 = p from q
) -> Vec<Vec<Q>> {
    let mut rows: Vec<SparseRow> = Vec::new();
    for &k in grades {
        let sgn: i64 = match sign_rule {
            0 => 1,
            1 => {
                if k.rem_euclid(2) == 0 {
                    1
                } else {
                    -1
                }
            }
            2 => {
                if (k + 3).rem_euclid(2) == 0 {
                    1
                } else {
                    -1
                }
            }
            _ => unreachable!(),
        };
        let base = if which == 0 {
            fit_rows_q(k, par, sgn)
        } else {
            fit_rows_p(k, par, sgn)
        };
        rows.extend(base);
    }
    nullspace(9, rows)
}

fn merge_rows(
    rows: std::collections::BTreeMap<(usize, usize, usize), SparseRow>,
) -> Vec<SparseRow> {
    let mut rr: Vec<SparseRow> = Vec::new();
    for (_, mut row) in rows {
        row.sort_by_key(|(n, _)| *n);
        let mut merged: SparseRow = Vec::new();
        for (n, c) in row {
            if let Some(last) = merged.last_mut() {
                if last.0 == n {
                    last.1 = last.1.clone() + c;
                    continue;
                }
            }
            merged.push((n, c));
        }
        merged.retain(|(_, c)| !c.is_zero());
        if !merged.is_empty() {
            rr.push(merged);
        }
    }
    rr
}

fn fit_rows_q(k: i64, par: Parity, sgn: i64) -> Vec<SparseRow> {
    let sys = System::Mb38;
    let layer = admissible_space(Algebra::Mb38, k);
    let midx = mon_index(sys, k + 2);
    let mut rows: std::collections::BTreeMap<(usize, usize, usize), SparseRow> =
        std::collections::BTreeMap::new();
    for (xi, x) in layer.iter().enumerate() {
        let cb = x.to_constraint_basis_in(par);
        let raw: Vec<Poly> = (1..=2u8)
            .map(|a| x.comps[sys.vartheta_id(a)].clone())
            .collect();
        for (src_id, src) in [(0usize, &cb.r_tilde), (1usize, &raw)] {
            for t in 0..4usize {
                for i in 1..=3u8 {
                    let mut ti = Poly::zero();
                    for b in 1..=2u8 {
                        for c in 1..=2u8 {
                            let dn = eps2_dn(b, c);
                            if dn != 0 {
                                ti = ti.add(
                                    &d_piece(i, b, t)
                                        .apply(&src[(c - 1) as usize])
                                        .scale_i(dn as i64),
                                );
                            }
                        }
                    }
                    for (m, cq) in &ti.terms {
                        rows.entry((xi, (i - 1) as usize, midx[m]))
                            .or_default()
                            .push((src_id * 4 + t, cq.clone()));
                    }
                }
            }
        }
        for i in 1..=3u8 {
            for (m, cq) in &cb.q_tilde[(i - 1) as usize].terms {
                rows.entry((xi, (i - 1) as usize, midx[m]))
                    .or_default()
                    .push((8, cq.clone() * qr(-sgn, 1)));
            }
        }
    }
    merge_rows(rows)
}

fn fit_rows_p(k: i64, par: Parity, sgn: i64) -> Vec<SparseRow> {
    let sys = System::Mb38;
    let layer = admissible_space(Algebra::Mb38, k);
    let midx = mon_index(sys, k + 1);
    let mut rows: std::collections::BTreeMap<(usize, usize, usize), SparseRow> =
        std::collections::BTreeMap::new();
    for (xi, x) in layer.iter().enumerate() {
        let cb = x.to_constraint_basis_in(par);
        let raw: Vec<Poly> = (1..=3u8)
            .map(|i| x.comps[sys.even_id(i)].clone())
            .collect();
        for (src_id, src) in [(0usize, &cb.q_tilde), (1usize, &raw)] {
            for t in 0..4usize {
                for kk in 1..=3u8 {
                    for a in 1..=2u8 {
                        let mut ti = Poly::zero();
                        for i in 1..=3u8 {
                            for j in 1..=3u8 {
                                let e = eps3(i, j, kk);
                                if e == 0 {
                                    continue;
                                }
                                for b in 1..=2u8 {
                                    let dn = eps2_dn(a, b);
                                    if dn == 0 {
                                        continue;
                                    }
                                    ti = ti.add(
                                        &d_piece(i, b, t)
                                            .apply(&src[(j - 1) as usize])
                                            .scale_i(e * dn as i64),
                                    );
                                }
                            }
                        }
                        let slot = ((kk - 1) * 2 + (a - 1)) as usize;
                        for (m, cq) in &ti.terms {
                            rows.entry((xi, slot, midx[m]))
                                .or_default()
                                .push((src_id * 4 + t, cq.clone()));
                        }
                    }
                }
            }
        }
        for kk in 1..=3u8 {
            for a in 1..=2u8 {
                let slot = ((kk - 1) * 2 + (a - 1)) as usize;
                let p = &cb.p[slot];
                for (m, cq) in &p.terms {
                    rows.entry((xi, slot, midx[m]))
                        .or_default()
                        .push((8, cq.clone() * qr(-sgn, 1)));
                }
            }
        }
    }
    merge_rows(rows)
}

#[test]
fn probe_mb_cross_grade_fit() {
    let grades = [-2i64, -1, 0, 1];
    for par in [Parity::Even, Parity::Odd] {
        for rule in [0u8, 1, 2] {
            let nq = fit_multi(&grades, par, rule, 0);
            let np = fit_multi(&grades, par, rule, 1);
            println!("par={par:?} rule={rule} qfit: {}", fmt(&nq));
            println!("par={par:?} rule={rule} pfit: {}", fmt(&np));
        }
    }
}
