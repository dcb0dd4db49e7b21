use num::Zero;
use std::collections::BTreeMap;
use superform_core::algebras::{admissible_space, Algebra};
use superform_core::grassmann::{eps5, monomials_of_degree, qi, qr, Monomial, Parity, Poly, Q, System};
use superform_core::linalg::{nullspace, SpanBasis, SparseRow};
use superform_core::supervector::{frame_d_ksle, AmbientBasis, Field};

fn ksle_solve(w: i64, par: Parity) -> Vec<[Poly; 5]> {
    let sys = System::Ksle510;
    let mons = monomials_of_degree(sys, w);
    let nm = mons.len();
    if nm == 0 {
        return Vec::new();
    }
    let d = |i: u8, j: u8| frame_d_ksle(i, j, par);
    let mut rows_map: BTreeMap<(usize, Monomial), BTreeMap<usize, Q>> = BTreeMap::new();
    let mut ci = 0usize;
    let mut add = |ci: usize,
                   comp: u8,
                   sign: i64,
                   op: &Field,
                   mi: usize,
                   m: Monomial,
                   rows_map: &mut BTreeMap<(usize, Monomial), BTreeMap<usize, Q>>| {
        let p = op.apply(&Poly::monomial(m, qi(sign)));
        for (m2, c) in p.terms {
            let cell = rows_map
                .entry((ci, m2))
                .or_default()
                .entry((comp as usize - 1) * nm + mi)
                .or_insert_with(|| qi(0));
            *cell = cell.clone() + c;
        }
    };
    for i in 1..=5u8 {
        for j in (i + 1)..=5 {
            for k in 1..=5u8 {
                if k == i || k == j {
                    for (mi, m) in mons.iter().enumerate() {
                        add(ci, k, 1, &d(i, j), mi, *m, &mut rows_map);
                    }
                    ci += 1;
                } else {
                    for (mi, m) in mons.iter().enumerate() {
                        add(ci, k, 1, &d(i, j), mi, *m, &mut rows_map);
                        add(ci, i, -1, &d(j, k), mi, *m, &mut rows_map);
                    }
                    ci += 1;
                    for (mi, m) in mons.iter().enumerate() {
                        add(ci, k, 1, &d(i, j), mi, *m, &mut rows_map);
                        add(ci, j, 1, &d(i, k), mi, *m, &mut rows_map);
                    }
                    ci += 1;
                }
            }
        }
    }
    // divergence, constant part dropped (bar reading)
    for (mi, m) in mons.iter().enumerate() {
        for i in 1..=5u8 {
            let p = Poly::monomial(*m, qi(1)).derive(sys, sys.even_id(i));
            for (m2, c) in p.terms {
                if m2 == Monomial::one() {
                    continue;
                }
                let cell = rows_map
                    .entry((ci, m2))
                    .or_default()
                    .entry((i as usize - 1) * nm + mi)
                    .or_insert_with(|| qi(0));
                *cell = cell.clone() + c;
            }
        }
    }
    let rows: Vec<SparseRow> = rows_map
        .into_values()
        .map(|m| m.into_iter().filter(|(_, c)| !c.is_zero()).collect())
        .collect();
    nullspace(5 * nm, rows)
        .into_iter()
        .map(|v| {
            std::array::from_fn(|l| {
                let mut p = Poly::zero();
                for (mi, m) in mons.iter().enumerate() {
                    if !v[l * nm + mi].is_zero() {
                        p.add_term(*m, v[l * nm + mi].clone());
                    }
                }
                p
            })
        })
        .collect()
}

fn ksle_assemble(fs: &[Poly; 5], par: Parity, num: i64, den: i64) -> Field {
    let sys = System::Ksle510;
    let d = |i: u8, j: u8| frame_d_ksle(i, j, par);
    let mut x = Field::zero(sys);
    for i in 1..=5u8 {
        x = x.add(&Field::basis(sys, sys.even_id(i)).scale_poly(&fs[(i - 1) as usize]));
    }
    for i in 1..=5u8 {
        for j in 1..=5u8 {
            for k in 1..=5u8 {
                for l in 1..=5u8 {
                    for m in 1..=5u8 {
                        let e = eps5([i, j, k, l, m]);
                        if e == 0 {
                            continue;
                        }
                        let coeff = d(i, j)
                            .apply(&fs[(k - 1) as usize])
                            .scale(&qr(num * e, den));
                        x = x.add(&d(l, m).scale_poly(&coeff));
                    }
                }
            }
        }
    }
    x
}

#[test]
fn probe_ksle_grid() {
    let expect = [(0i64, 5usize), (1, 10), (2, 25), (3, 40), (4, 70)];
    for (w, dim) in expect {
        let k = w - 2;
        let layer = admissible_space(Algebra::Ksle510Bar, k);
        assert_eq!(layer.len(), dim, "layer dim at k={k}");
        let ab = AmbientBasis::new(System::Ksle510, k);
        let mut lspan = SpanBasis::new();
        for x in &layer {
            lspan.insert(&ab.row(x).unwrap());
        }
        for par_c in [Parity::Even, Parity::Odd] {
            let sols = ksle_solve(w, par_c);
            for par_a in [Parity::Even, Parity::Odd] {
                for (num, den) in [(1i64, 24i64), (-1, 24), (1, 12), (-1, 12)] {
                    let mut inspan = 0;
                    let mut span = SpanBasis::new();
                    for f in &sols {
                        let x = ksle_assemble(f, par_a, num, den);
                        if let Some(r) = ab.row(&x) {
                            if lspan.residual(&r).is_empty() {
                                inspan += 1;
                                span.insert(&r);
                            }
                        }
                    }
                    if inspan == sols.len() && span.rank() == dim && sols.len() == dim {
                        println!("w={w} k={k}: WIN  c={par_c:?} a={par_a:?} {num}/{den} (sols {})", sols.len());
                    } else if inspan > 0 {
                        println!(
                            "w={w} k={k}: part c={par_c:?} a={par_a:?} {num}/{den}: {inspan}/{} rank {}",
                            sols.len(),
                            span.rank()
                        );
                    }
                }
            }
        }
    }
}
