//! Exact supercommutative polynomial algebra over a handful of fixed
//! coordinate systems.
//!
//! A monomial is an even exponent vector together with a subset of the odd
//! coordinates; odd generators anticommute and square to zero, coefficients
//! are arbitrary-precision rationals.  Everything downstream (vector fields,
//! prolongation, form modules, morphisms) is built on this type.

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::Serialize;
use std::collections::BTreeMap;


/// Exact rational scalar used throughout the crate.
pub type Q = BigRational;

/// Rational from an integer.
pub fn qi(n: i64) -> Q {
    Q::from(BigInt::from(n))
}

/// Rational from a numerator/denominator pair.
pub fn qr(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

/// Parity of a homogeneous object: 0 = even (bosonic), 1 = odd (fermionic).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
    pub fn of(n: usize) -> Parity {
        if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
    /// Sign factor (-1)^{p·q}.
    pub fn pair_sign(self, other: Parity) -> i8 {
        if self == Parity::Odd && other == Parity::Odd {
            -1
        } else {
            1
        }
    }
    /// +1 for even, -1 for odd.
    pub fn sign(self) -> i8 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }
}

/// The coordinate systems the engine knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum System {
    /// u^i (i = 1..3) even of degree 2, theta_{ia} (a = 1,2) odd of degree 1.
    Vle36,
    /// Vle36 plus two extra odd coordinates vartheta^a of degree 3.
    Mb38,
    /// u^i (i = 1..5) even of degree 2, theta_{ij} = -theta_{ji} odd of
    /// degree 1, stored for i < j.
    Ksle510,
    /// x^i (i = 1..n) even of degree 1, no odd coordinates.  n <= 4.
    VectN(u8),
}

/// What kind of coordinate a slot holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CoordKind {
    /// Even coordinate u^i or x^i; payload is i (1-based).
    Even(u8),
    /// Odd coordinate theta_{ia}; payload (i, a).
    Theta(u8, u8),
    /// Odd pair coordinate theta_{ij}, i < j.
    ThetaPair(u8, u8),
    /// Odd coordinate vartheta^a; payload a.
    Vartheta(u8),
}

/// Index of a coordinate in a system's canonical list (evens first).
pub type CoordId = usize;

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Vle36 => "vle36",
            System::Mb38 => "mb38",
            System::Ksle510 => "ksle510",
            System::VectN(_) => "vectn",
        }
    }

    /// Parse a system name as used by the CLI.
    pub fn from_name(s: &str) -> Option<System> {
        match s {
            "vle36" => Some(System::Vle36),
            "mb38" => Some(System::Mb38),
            "ksle510" | "ksle510bar" => Some(System::Ksle510),
            "vect1" => Some(System::VectN(1)),
            "vect2" => Some(System::VectN(2)),
            "vect3" => Some(System::VectN(3)),
            "vect4" => Some(System::VectN(4)),
            _ => None,
        }
    }

    /// Number of even coordinates.
    pub fn n_even(self) -> usize {
        match self {
            System::Vle36 | System::Mb38 => 3,
            System::Ksle510 => 5,
            System::VectN(n) => n as usize,
        }
    }

    /// Number of odd coordinates.
    pub fn n_odd(self) -> usize {
        match self {
            System::Vle36 => 6,
            System::Mb38 => 8,
            System::Ksle510 => 10,
            System::VectN(_) => 0,
        }
    }

    pub fn n_coords(self) -> usize {
        self.n_even() + self.n_odd()
    }

    /// Range of the vector index i (3 for vle/mb, 5 for ksle, n for vect).
    pub fn i_range(self) -> usize {
        match self {
            System::Vle36 | System::Mb38 => 3,
            System::Ksle510 => 5,
            System::VectN(n) => n as usize,
        }
    }

    /// Canonical coordinate list: evens first, then odds in fixed order.
    pub fn coords(self) -> Vec<CoordKind> {
        let mut v = Vec::new();
        match self {
            System::Vle36 | System::Mb38 => {
                for i in 1..=3 {
                    v.push(CoordKind::Even(i));
                }
                for i in 1..=3 {
                    for a in 1..=2 {
                        v.push(CoordKind::Theta(i, a));
                    }
                }
                if self == System::Mb38 {
                    for a in 1..=2 {
                        v.push(CoordKind::Vartheta(a));
                    }
                }
            }
            System::Ksle510 => {
                for i in 1..=5 {
                    v.push(CoordKind::Even(i));
                }
                for i in 1..=5u8 {
                    for j in (i + 1)..=5 {
                        v.push(CoordKind::ThetaPair(i, j));
                    }
                }
            }
            System::VectN(n) => {
                for i in 1..=n {
                    v.push(CoordKind::Even(i));
                }
            }
        }
        v
    }

    /// Scaling degree of a coordinate.
    pub fn coord_degree(self, c: CoordId) -> i64 {
        match self.coords()[c] {
            CoordKind::Even(_) => {
                if matches!(self, System::VectN(_)) {
                    1
                } else {
                    2
                }
            }
            CoordKind::Theta(..) | CoordKind::ThetaPair(..) => 1,
            CoordKind::Vartheta(_) => 3,
        }
    }

    pub fn coord_parity(self, c: CoordId) -> Parity {
        if c < self.n_even() {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// CoordId of u^i / x^i (1-based i).
    pub fn even_id(self, i: u8) -> CoordId {
        debug_assert!(1 <= i && i as usize <= self.n_even());
        (i - 1) as usize
    }

    /// CoordId of theta_{ia} (vle/mb).
    pub fn theta_id(self, i: u8, a: u8) -> CoordId {
        debug_assert!(matches!(self, System::Vle36 | System::Mb38));
        debug_assert!((1..=3).contains(&i) && (1..=2).contains(&a));
        self.n_even() + ((i - 1) * 2 + (a - 1)) as usize
    }

    /// CoordId of vartheta^a (mb only).
    pub fn vartheta_id(self, a: u8) -> CoordId {
        debug_assert!(self == System::Mb38);
        self.n_even() + 6 + (a - 1) as usize
    }

    /// CoordId and sign of theta_{ij} for arbitrary i != j (ksle).
    pub fn theta_pair_id(self, i: u8, j: u8) -> (i8, CoordId) {
        debug_assert!(self == System::Ksle510);
        debug_assert!(i != j && (1..=5).contains(&i) && (1..=5).contains(&j));
        let (s, a, b) = if i < j { (1, i, j) } else { (-1, j, i) };
        // Pairs (1,2)..(1,5),(2,3)..(2,5),(3,4),(3,5),(4,5) in lex order.
        let offset: usize = (1..a).map(|r| (5 - r) as usize).sum();
        (s, self.n_even() + offset + (b - a - 1) as usize)
    }

    /// Display name of a coordinate in the text grammar.
    pub fn coord_name(self, c: CoordId) -> String {
        match self.coords()[c] {
            CoordKind::Even(i) => {
                if matches!(self, System::VectN(_)) {
                    format!("x{i}")
                } else {
                    format!("u{i}")
                }
            }
            CoordKind::Theta(i, a) => format!("th{{{i},{a}}}"),
            CoordKind::ThetaPair(i, j) => format!("th{{{i},{j}}}"),
            CoordKind::Vartheta(a) => format!("vth{{{a}}}"),
        }
    }

    /// Bitmask of all odd coordinates (the Berezin top monomial).
    pub fn odd_top_mask(self) -> u16 {
        ((1u32 << self.n_odd()) - 1) as u16
    }
}

/// Sign of a permutation given as a slice of distinct values; None if any
/// value repeats.
pub fn perm_sign(idx: &[u8]) -> Option<i8> {
    let n = idx.len();
    for p in 0..n {
        for q in (p + 1)..n {
            if idx[p] == idx[q] {
                return None;
            }
        }
    }
    let mut sign = 1i8;
    for p in 0..n {
        for q in (p + 1)..n {
            if idx[p] > idx[q] {
                sign = -sign;
            }
        }
    }
    Some(sign)
}

/// Two-index epsilon with upper indices: eps(1,2) = +1, eps(2,1) = -1.
pub fn eps2_up(a: u8, b: u8) -> i64 {
    match (a, b) {
        (1, 2) => 1,
        (2, 1) => -1,
        _ => 0,
    }
}

/// Two-index epsilon with lower indices: eps(2,1) = +1, eps(1,2) = -1.
pub fn eps2_dn(a: u8, b: u8) -> i64 {
    -eps2_up(a, b)
}

/// Three-index epsilon, eps(1,2,3) = +1; same values for upper and lower.
pub fn eps3(i: u8, j: u8, k: u8) -> i64 {
    perm_sign(&[i, j, k]).map_or(0, |s| s as i64)
}

/// Five-index epsilon, eps(1,2,3,4,5) = +1; same values for upper and lower.
pub fn eps5(idx: [u8; 5]) -> i64 {
    perm_sign(&idx).map_or(0, |s| s as i64)
}

const MAX_EVEN: usize = 5;

/// A monomial: exponents of the even coordinates plus a subset of the odd
/// ones (bitmask over the system's canonical odd order).  The odd factors
/// are implicitly multiplied in ascending bit order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub even: [u16; MAX_EVEN],
    pub odd: u16,
}

impl Monomial {
    pub fn one() -> Monomial {
        Monomial {
            even: [0; MAX_EVEN],
            odd: 0,
        }
    }

    pub fn parity(&self) -> Parity {
        Parity::of(self.odd.count_ones() as usize)
    }

    pub fn degree(&self, sys: System) -> i64 {
        let mut d = 0i64;
        for (e, &exp) in self.even.iter().enumerate() {
            if exp > 0 {
                d += exp as i64 * sys.coord_degree(e);
            }
        }
        let n_even = sys.n_even();
        for b in 0..sys.n_odd() {
            if self.odd & (1 << b) != 0 {
                d += sys.coord_degree(n_even + b);
            }
        }
        d
    }

    /// Sign for merging two odd masks (self.odd * other.odd as ordered
    /// ascending products); None when they collide.
    fn merge_sign(a: u16, b: u16) -> Option<i8> {
        if a & b != 0 {
            return None;
        }
        let mut sign = 1i8;
        let mut bb = b;
        while bb != 0 {
            let j = bb.trailing_zeros();
            // factors of `a` that the new factor must pass (those above j).
            if (a >> (j + 1)).count_ones() % 2 == 1 {
                sign = -sign;
            }
            bb &= bb - 1;
        }
        Some(sign)
    }

    pub fn mul(&self, other: &Monomial) -> Option<(i8, Monomial)> {
        let sign = Monomial::merge_sign(self.odd, other.odd)?;
        let mut even = self.even;
        for (e, x) in even.iter_mut().enumerate() {
            *x += other.even[e];
        }
        Some((
            sign,
            Monomial {
                even,
                odd: self.odd | other.odd,
            },
        ))
    }
}

/// Sparse supercommutative polynomial with exact rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    pub terms: BTreeMap<Monomial, Q>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly {
            terms: BTreeMap::new(),
        }
    }

    pub fn one() -> Poly {
        Poly::constant(Q::one())
    }

    pub fn constant(c: Q) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        Poly { terms }
    }

    pub fn monomial(m: Monomial, c: Q) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Poly { terms }
    }

    /// The coordinate `c` of `sys` as a polynomial.
    pub fn coord(sys: System, c: CoordId) -> Poly {
        let mut m = Monomial::one();
        if c < sys.n_even() {
            m.even[c] = 1;
        } else {
            m.odd = 1 << (c - sys.n_even());
        }
        Poly::monomial(m, Q::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let s = e.get().clone() + c;
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (*m, -c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, c: &Q) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, x)| (*m, x.clone() * c.clone()))
                .collect(),
        }
    }

    pub fn scale_i(&self, c: i64) -> Poly {
        self.scale(&qi(c))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some((sign, m)) = ma.mul(mb) {
                    let mut c = ca.clone() * cb.clone();
                    if sign < 0 {
                        c = -c;
                    }
                    out.add_term(m, c);
                }
            }
        }
        out
    }

    /// Parity if homogeneous, None for mixed or zero-with-convention-even.
    pub fn parity(&self) -> Option<Parity> {
        let mut p = None;
        for m in self.terms.keys() {
            let mp = m.parity();
            match p {
                None => p = Some(mp),
                Some(q) if q != mp => return None,
                _ => {}
            }
        }
        Some(p.unwrap_or(Parity::Even))
    }

    /// Scaling degree if homogeneous (zero polynomial reports Some(d) for
    /// any requested check, represented here as None-degree).
    pub fn degree(&self, sys: System) -> Option<i64> {
        let mut d = None;
        for m in self.terms.keys() {
            let md = m.degree(sys);
            match d {
                None => d = Some(md),
                Some(x) if x != md => return None,
                _ => {}
            }
        }
        d
    }

    /// Left derivative with respect to coordinate `c`.
    ///
    /// For odd coordinates this is the left Grassmann derivative: the factor
    /// is anticommuted to the front and removed.
    pub fn derive(&self, sys: System, c: CoordId) -> Poly {
        let mut out = Poly::zero();
        if c < sys.n_even() {
            for (m, coeff) in &self.terms {
                let exp = m.even[c];
                if exp > 0 {
                    let mut m2 = *m;
                    m2.even[c] = exp - 1;
                    out.add_term(m2, coeff.clone() * qi(exp as i64));
                }
            }
        } else {
            let bit = 1u16 << (c - sys.n_even());
            for (m, coeff) in &self.terms {
                if m.odd & bit != 0 {
                    let below = (m.odd & (bit - 1)).count_ones();
                    let mut c2 = coeff.clone();
                    if below % 2 == 1 {
                        c2 = -c2;
                    }
                    let mut m2 = *m;
                    m2.odd &= !bit;
                    out.add_term(m2, c2);
                }
            }
        }
        out
    }

    /// Coefficient of a monomial.
    pub fn coeff(&self, m: &Monomial) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    /// The Berezin functional: coefficient of (top odd monomial) x u^0.
    pub fn berezin_top_constant(&self, sys: System) -> Q {
        let mut m = Monomial::one();
        m.odd = sys.odd_top_mask();
        self.coeff(&m)
    }
}

/// theta^a_i = eps^{ab} theta_{ib} as a polynomial (vle/mb).
pub fn theta_up(sys: System, i: u8, a: u8) -> Poly {
    let mut out = Poly::zero();
    for b in 1..=2u8 {
        let e = eps2_up(a, b);
        if e != 0 {
            out = out.add(&Poly::coord(sys, sys.theta_id(i, b)).scale_i(e));
        }
    }
    out
}

/// theta_{ij} for arbitrary i != j as a signed polynomial (ksle).
pub fn theta_pair(sys: System, i: u8, j: u8) -> Poly {
    let (s, id) = sys.theta_pair_id(i, j);
    Poly::coord(sys, id).scale_i(s as i64)
}

/// All monomials of the system with exact degree `d`, in deterministic order.
pub fn monomials_of_degree(sys: System, d: i64) -> Vec<Monomial> {
    let mut out = Vec::new();
    if d < 0 {
        return out;
    }
    let n_even = sys.n_even();
    let n_odd = sys.n_odd();
    let even_deg = if matches!(sys, System::VectN(_)) { 1 } else { 2 };
    for mask in 0u32..(1u32 << n_odd) {
        let mask = mask as u16;
        let mut od = 0i64;
        for b in 0..n_odd {
            if mask & (1 << b) != 0 {
                od += sys.coord_degree(n_even + b);
            }
        }
        let rem = d - od;
        if rem < 0 || rem % even_deg != 0 {
            continue;
        }
        let units = (rem / even_deg) as u16;
        // distribute `units` among n_even slots
        let mut exps = vec![0u16; n_even];
        distribute(&mut exps, 0, units, &mut |e| {
            let mut m = Monomial::one();
            m.even[..n_even].copy_from_slice(e);
            m.odd = mask;
            out.push(m);
        });
    }
    out.sort();
    out
}

fn distribute<F: FnMut(&[u16])>(exps: &mut [u16], pos: usize, left: u16, f: &mut F) {
    if pos == exps.len() {
        if left == 0 {
            f(exps);
        }
        return;
    }
    if pos + 1 == exps.len() {
        exps[pos] = left;
        f(exps);
        exps[pos] = 0;
        return;
    }
    for x in 0..=left {
        exps[pos] = x;
        distribute(exps, pos + 1, left - x, f);
        exps[pos] = 0;
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Render a rational without superfluous "/1".
pub fn fmt_q(c: &Q) -> String {
    if c.denom().is_one() {
        format!("{}", c.numer())
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl Poly {
    pub fn render(&self, sys: System) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (n, (m, c)) in self.terms.iter().enumerate() {
            let mut factors: Vec<String> = Vec::new();
            for e in 0..sys.n_even() {
                match m.even[e] {
                    0 => {}
                    1 => factors.push(sys.coord_name(e)),
                    k => factors.push(format!("{}^{}", sys.coord_name(e), k)),
                }
            }
            for b in 0..sys.n_odd() {
                if m.odd & (1 << b) != 0 {
                    factors.push(sys.coord_name(sys.n_even() + b));
                }
            }
            let abs = c.abs();
            let coeff_str = fmt_q(&abs);
            let body = if factors.is_empty() {
                coeff_str
            } else if abs.is_one() {
                factors.join("*")
            } else {
                format!("{}*{}", coeff_str, factors.join("*"))
            };
            if n == 0 {
                if c.is_negative() {
                    s.push('-');
                }
            } else if c.is_negative() {
                s.push_str(" - ");
            } else {
                s.push_str(" + ");
            }
            s.push_str(&body);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Errors from the text-grammar parser.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected character {0:?} at byte {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown atom {0:?}")]
    UnknownAtom(String),
    #[error("repeated odd factor {0} in one term")]
    RepeatedOdd(String),
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("trailing input at byte {0}")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Num(BigInt),
    Ident(String),
    /// `{a,b}` or `{a}` index payload attached to the previous ident.
    Braces(Vec<u8>),
    Plus,
    Minus,
    Star,
    Caret,
    Slash,
    LParen,
    RParen,
}

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut p = 0usize;
    while p < bytes.len() {
        let c = bytes[p] as char;
        match c {
            ' ' | '\t' | '\n' => p += 1,
            '+' => {
                out.push(Token::Plus);
                p += 1;
            }
            '-' => {
                out.push(Token::Minus);
                p += 1;
            }
            '*' => {
                out.push(Token::Star);
                p += 1;
            }
            '^' => {
                out.push(Token::Caret);
                p += 1;
            }
            '/' => {
                out.push(Token::Slash);
                p += 1;
            }
            '(' => {
                out.push(Token::LParen);
                p += 1;
            }
            ')' => {
                out.push(Token::RParen);
                p += 1;
            }
            '{' => {
                let mut q = p + 1;
                let mut idx = Vec::new();
                let mut cur = String::new();
                loop {
                    if q >= bytes.len() {
                        return Err(ParseError::UnexpectedEnd);
                    }
                    let d = bytes[q] as char;
                    if d.is_ascii_digit() {
                        cur.push(d);
                        q += 1;
                    } else if d == ',' {
                        if cur.is_empty() {
                            return Err(ParseError::UnexpectedChar(d, q));
                        }
                        idx.push(cur.parse::<u8>().unwrap());
                        cur.clear();
                        q += 1;
                    } else if d == '}' {
                        if cur.is_empty() {
                            return Err(ParseError::UnexpectedChar(d, q));
                        }
                        idx.push(cur.parse::<u8>().unwrap());
                        q += 1;
                        break;
                    } else {
                        return Err(ParseError::UnexpectedChar(d, q));
                    }
                }
                out.push(Token::Braces(idx));
                p = q;
            }
            _ if c.is_ascii_digit() => {
                let mut q = p;
                while q < bytes.len() && (bytes[q] as char).is_ascii_digit() {
                    q += 1;
                }
                out.push(Token::Num(src[p..q].parse::<BigInt>().unwrap()));
                p = q;
            }
            _ if c.is_ascii_alphabetic() => {
                let mut q = p;
                while q < bytes.len()
                    && ((bytes[q] as char).is_ascii_alphanumeric() || bytes[q] == b'_')
                {
                    q += 1;
                }
                out.push(Token::Ident(src[p..q].to_string()));
                p = q;
            }
            _ => return Err(ParseError::UnexpectedChar(c, p)),
        }
    }
    Ok(out)
}

/// Token-stream cursor shared by the polynomial and field parsers.
pub struct Cursor<'a> {
    pub toks: &'a [Token],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [Token]) -> Cursor<'a> {
        Cursor { toks, pos: 0 }
    }
    pub fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }
    pub fn next(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }
    pub fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

/// Resolve an atom name plus optional brace indices to a coordinate.
fn resolve_atom(sys: System, name: &str, braces: Option<&[u8]>) -> Result<CoordId, ParseError> {
    let full = || match braces {
        Some(ix) => format!(
            "{}{{{}}}",
            name,
            ix.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ),
        None => name.to_string(),
    };
    match (name.as_bytes().first(), braces) {
        (Some(b'u' | b'x'), None) if name.len() >= 2 => {
            let i: u8 = name[1..]
                .parse()
                .map_err(|_| ParseError::UnknownAtom(full()))?;
            let prefix_even = if matches!(sys, System::VectN(_)) { "x" } else { "u" };
            if !name.starts_with(prefix_even) || i == 0 || i as usize > sys.n_even() {
                return Err(ParseError::UnknownAtom(full()));
            }
            Ok(sys.even_id(i))
        }
        (_, Some(ix)) if name == "th" => match sys {
            System::Vle36 | System::Mb38 => {
                if ix.len() == 2 && (1..=3).contains(&ix[0]) && (1..=2).contains(&ix[1]) {
                    Ok(sys.theta_id(ix[0], ix[1]))
                } else {
                    Err(ParseError::UnknownAtom(full()))
                }
            }
            System::Ksle510 => {
                if ix.len() == 2
                    && ix[0] < ix[1]
                    && (1..=5).contains(&ix[0])
                    && (1..=5).contains(&ix[1])
                {
                    Ok(sys.theta_pair_id(ix[0], ix[1]).1)
                } else {
                    Err(ParseError::UnknownAtom(full()))
                }
            }
            System::VectN(_) => Err(ParseError::UnknownAtom(full())),
        },
        (_, Some(ix)) if name == "vth" && sys == System::Mb38 => {
            if ix.len() == 1 && (1..=2).contains(&ix[0]) {
                Ok(sys.vartheta_id(ix[0]))
            } else {
                Err(ParseError::UnknownAtom(full()))
            }
        }
        _ => Err(ParseError::UnknownAtom(full())),
    }
}

/// Parse a polynomial expression: sum of terms; term = factor ('*' factor)*;
/// factor = rational | atom ['^' exp] | '(' expr ')'.
pub fn parse_poly_expr(cur: &mut Cursor, sys: System) -> Result<Poly, ParseError> {
    let mut acc = Poly::zero();
    let mut sign = 1i64;
    // leading sign
    loop {
        match cur.peek() {
            Some(Token::Plus) => {
                cur.next();
            }
            Some(Token::Minus) => {
                sign = -sign;
                cur.next();
            }
            _ => break,
        }
    }
    loop {
        let term = parse_term(cur, sys)?;
        acc = acc.add(&term.scale_i(sign));
        sign = 1;
        match cur.peek() {
            Some(Token::Plus) => {
                cur.next();
            }
            Some(Token::Minus) => {
                sign = -1;
                cur.next();
            }
            _ => break,
        }
        // allow stacked signs after operator
        loop {
            match cur.peek() {
                Some(Token::Minus) => {
                    sign = -sign;
                    cur.next();
                }
                Some(Token::Plus) => {
                    cur.next();
                }
                _ => break,
            }
        }
    }
    Ok(acc)
}

fn parse_term(cur: &mut Cursor, sys: System) -> Result<Poly, ParseError> {
    let mut acc = parse_factor(cur, sys)?;
    while matches!(cur.peek(), Some(Token::Star)) {
        cur.next();
        let f = parse_factor(cur, sys)?;
        let before_odd: Vec<u16> = acc.terms.keys().map(|m| m.odd).collect();
        let prod = acc.mul(&f);
        // Detect a repeated odd atom for the common case of monomial factors.
        if prod.is_zero() && !acc.is_zero() && !f.is_zero() {
            if let Some(fm) = f.terms.keys().next() {
                if before_odd.iter().all(|o| o & fm.odd != 0) {
                    let b = fm.odd.trailing_zeros() as usize;
                    return Err(ParseError::RepeatedOdd(
                        sys.coord_name(sys.n_even() + b),
                    ));
                }
            }
        }
        acc = prod;
    }
    Ok(acc)
}

fn parse_factor(cur: &mut Cursor, sys: System) -> Result<Poly, ParseError> {
    match cur.next().cloned() {
        Some(Token::Num(n)) => {
            // optional /d
            if matches!(cur.peek(), Some(Token::Slash)) {
                cur.next();
                match cur.next().cloned() {
                    Some(Token::Num(d)) => Ok(Poly::constant(Q::new(n, d))),
                    _ => Err(ParseError::Expected("denominator")),
                }
            } else {
                Ok(Poly::constant(Q::from(n)))
            }
        }
        Some(Token::LParen) => {
            let inner = parse_poly_expr(cur, sys)?;
            match cur.next() {
                Some(Token::RParen) => Ok(inner),
                _ => Err(ParseError::Expected("closing parenthesis")),
            }
        }
        Some(Token::Ident(name)) => {
            let braces = if let Some(Token::Braces(ix)) = cur.peek() {
                let ix = ix.clone();
                cur.next();
                Some(ix)
            } else {
                None
            };
            let id = resolve_atom(sys, &name, braces.as_deref())?;
            let base = Poly::coord(sys, id);
            if matches!(cur.peek(), Some(Token::Caret)) {
                cur.next();
                match cur.next().cloned() {
                    Some(Token::Num(e)) => {
                        let e: u32 = e.to_string().parse().map_err(|_| {
                            ParseError::Expected("small nonnegative exponent")
                        })?;
                        let mut acc = Poly::one();
                        for _ in 0..e {
                            acc = acc.mul(&base);
                        }
                        if acc.is_zero() && e > 0 {
                            return Err(ParseError::RepeatedOdd(sys.coord_name(id)));
                        }
                        Ok(acc)
                    }
                    _ => Err(ParseError::Expected("exponent")),
                }
            } else {
                Ok(base)
            }
        }
        Some(t) => {
            let _ = t;
            Err(ParseError::Expected("factor"))
        }
        None => Err(ParseError::UnexpectedEnd),
    }
}

/// Parse a full polynomial string (must consume all input).
pub fn parse_poly(src: &str, sys: System) -> Result<Poly, ParseError> {
    let toks = lex(src)?;
    let mut cur = Cursor::new(&toks);
    let p = parse_poly_expr(&mut cur, sys)?;
    if !cur.done() {
        return Err(ParseError::Trailing(cur.pos));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_lists() {
        assert_eq!(System::Vle36.n_coords(), 9);
        assert_eq!(System::Mb38.n_coords(), 11);
        assert_eq!(System::Ksle510.n_coords(), 15);
        assert_eq!(System::VectN(3).n_coords(), 3);
        assert_eq!(System::Ksle510.theta_pair_id(1, 2).1, 5);
        assert_eq!(System::Ksle510.theta_pair_id(4, 5).1, 14);
        let (s, id) = System::Ksle510.theta_pair_id(5, 4);
        assert_eq!((s, id), (-1, 14));
        assert_eq!(System::Mb38.vartheta_id(2), 10);
    }

    #[test]
    fn odd_anticommute_and_square_zero() {
        let sys = System::Vle36;
        let t11 = Poly::coord(sys, sys.theta_id(1, 1));
        let t12 = Poly::coord(sys, sys.theta_id(1, 2));
        let ab = t11.mul(&t12);
        let ba = t12.mul(&t11);
        assert_eq!(ab, ba.neg());
        assert!(t11.mul(&t11).is_zero());
    }

    #[test]
    fn left_derivative_signs() {
        let sys = System::Vle36;
        let t11 = Poly::coord(sys, sys.theta_id(1, 1));
        let t12 = Poly::coord(sys, sys.theta_id(1, 2));
        let prod = t11.mul(&t12);
        // d/d theta_{11} (theta_11 theta_12) = theta_12
        assert_eq!(prod.derive(sys, sys.theta_id(1, 1)), t12);
        // d/d theta_{12} (theta_11 theta_12) = -theta_11
        assert_eq!(prod.derive(sys, sys.theta_id(1, 2)), t11.neg());
    }

    #[test]
    fn ksle_pair_derivative_normalization() {
        let sys = System::Ksle510;
        let t12 = theta_pair(sys, 1, 2);
        let d = t12.derive(sys, sys.theta_pair_id(1, 2).1);
        assert_eq!(d, Poly::one());
    }

    #[test]
    fn even_derivative() {
        let sys = System::Vle36;
        let u1 = Poly::coord(sys, sys.even_id(1));
        let sq = u1.mul(&u1);
        assert_eq!(sq.derive(sys, sys.even_id(1)), u1.scale_i(2));
    }

    #[test]
    fn graded_leibniz_spot() {
        // d(fg) = (df) g + (-1)^{|f|} f (dg) for the odd derivative.
        let sys = System::Mb38;
        let f = Poly::coord(sys, sys.theta_id(2, 1)).mul(&Poly::coord(sys, sys.vartheta_id(1)));
        let g = Poly::coord(sys, sys.theta_id(2, 2));
        let c = sys.theta_id(2, 2);
        let lhs = f.mul(&g).derive(sys, c);
        let sign = f.parity().unwrap().sign() as i64;
        let rhs = f.derive(sys, c).mul(&g).add(&f.mul(&g.derive(sys, c)).scale_i(sign));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn epsilon_tables() {
        assert_eq!(eps2_up(1, 2), 1);
        assert_eq!(eps2_up(2, 1), -1);
        assert_eq!(eps2_dn(2, 1), 1);
        assert_eq!(eps2_dn(1, 2), -1);
        assert_eq!(eps3(1, 2, 3), 1);
        assert_eq!(eps3(2, 1, 3), -1);
        assert_eq!(eps3(1, 1, 3), 0);
        assert_eq!(eps5([1, 2, 3, 4, 5]), 1);
        assert_eq!(eps5([2, 1, 3, 4, 5]), -1);
        // eps^{ab} eps_{bc} = delta^a_c
        for a in 1..=2u8 {
            for c in 1..=2u8 {
                let mut s = 0;
                for b in 1..=2u8 {
                    s += eps2_up(a, b) * eps2_dn(b, c);
                }
                assert_eq!(s, if a == c { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn monomial_enumeration_counts() {
        // degree 2 in vle36: u_i (3) or theta*theta (C(6,2) = 15)
        assert_eq!(monomials_of_degree(System::Vle36, 2).len(), 18);
        // degree 1: the six thetas
        assert_eq!(monomials_of_degree(System::Vle36, 1).len(), 6);
        // degree 3 in mb38: th^3 (20) + u*th (18) + vth (2)
        assert_eq!(monomials_of_degree(System::Mb38, 3).len(), 40);
        // vect3 degree 2: multisets of size 2 from 3 = 6
        assert_eq!(monomials_of_degree(System::VectN(3), 2).len(), 6);
    }

    #[test]
    fn berezin_top() {
        let sys = System::Vle36;
        let mut top = Poly::one();
        for i in 1..=3 {
            for a in 1..=2 {
                top = top.mul(&Poly::coord(sys, sys.theta_id(i, a)));
            }
        }
        assert_eq!(top.berezin_top_constant(sys), qi(1));
        let with_u = top.mul(&Poly::coord(sys, sys.even_id(1)));
        assert_eq!(with_u.berezin_top_constant(sys), qi(0));
    }

    #[test]
    fn parse_print_roundtrip() {
        let sys = System::Mb38;
        let src = "3/4*u1^2*th{1,1} - vth{2} + 2";
        let p = parse_poly(src, sys).unwrap();
        let printed = p.render(sys);
        let p2 = parse_poly(&printed, sys).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn parse_rejects_repeated_odd() {
        let sys = System::Vle36;
        let err = parse_poly("th{1,1}*th{1,1}", sys).unwrap_err();
        assert!(matches!(err, ParseError::RepeatedOdd(_)));
    }

    #[test]
    fn theta_raising() {
        let sys = System::Vle36;
        // theta^1_j = theta_{j2}, theta^2_j = -theta_{j1}
        assert_eq!(theta_up(sys, 2, 1), Poly::coord(sys, sys.theta_id(2, 2)));
        assert_eq!(
            theta_up(sys, 2, 2),
            Poly::coord(sys, sys.theta_id(2, 1)).neg()
        );
    }
}
