//! Transfer-matrix evaluation and randomized polynomial identity tests.
//!
//! The transfer functions `m_ij(ξ)` are never expanded. Every test works on
//! evaluations at random points: a nonzero polynomial of total degree `d`
//! vanishes at a uniform point of F_p^s with probability at most `d/p`, so
//! `k` independent zero evaluations leave a false-verdict probability of at
//! most `(d/p)^k`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{Elem, FieldMatrix, PrimeField};
use crate::netmodel::{mincuts, Network, NodeRule, SESSIONS};
use crate::rng::SplitMix64;

/// `values[i][j]` is the coefficient of `x_j` in `y_i` (0-based sessions).
pub type TransferMatrix = [[Elem; SESSIONS]; SESSIONS];

pub const DEFAULT_SAMPLES: usize = 32;
pub const DEFAULT_RANK_PROBES: usize = 8;
pub const DEFAULT_COLLISION_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransferError {
    #[error("assignment has {got} values, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("session {session} has an identically zero direct transfer function (min-cut 0)")]
    MincutViolation { session: usize },
    #[error("invalid virtual pair: {0}")]
    InvalidPair(String),
}

/// Anything that maps a coefficient assignment to a 3x3 transfer matrix.
///
/// Implementations must be multilinear in the assignment (degree at most one
/// in each variable), which holds for transfer functions of a DAG.
pub trait TransferModel: Sync {
    fn field(&self) -> PrimeField;
    fn num_vars(&self) -> usize;
    fn evaluate(&self, assignment: &[Elem]) -> TransferMatrix;
    /// Upper bound on the total degree of `m_ij`.
    fn degree_bound(&self, i: usize, j: usize) -> usize;
}

/// Transfer functions of a concrete network, evaluated by propagating global
/// coding vectors edge by edge in topological order.
#[derive(Debug, Clone)]
pub struct NetworkModel<'a> {
    net: &'a Network,
    field: PrimeField,
}

impl<'a> NetworkModel<'a> {
    pub fn new(net: &'a Network) -> Self {
        NetworkModel {
            net,
            field: net.field(),
        }
    }

    pub fn over(net: &'a Network, field: PrimeField) -> Self {
        NetworkModel { net, field }
    }

    pub fn network(&self) -> &Network {
        self.net
    }
}

impl TransferModel for NetworkModel<'_> {
    fn field(&self) -> PrimeField {
        self.field
    }

    fn num_vars(&self) -> usize {
        self.net.num_coefficients()
    }

    fn evaluate(&self, xi: &[Elem]) -> TransferMatrix {
        assert_eq!(xi.len(), self.num_vars(), "assignment length");
        let f = self.field;
        let mut coding = vec![[0 as Elem; SESSIONS]; self.net.edges().len()];
        let mut out = [[0; SESSIONS]; SESSIONS];
        for (_, rule) in self.net.rules() {
            match rule {
                NodeRule::Source { session, outputs } => {
                    for &(e, c) in outputs {
                        coding[e][*session] = f.reduce(xi[c]);
                    }
                }
                NodeRule::Relay { outputs } => {
                    for (o, terms) in outputs {
                        let mut acc = [0; SESSIONS];
                        for &(i, c) in terms {
                            for j in 0..SESSIONS {
                                acc[j] = f.add(acc[j], f.mul(xi[c], coding[i][j]));
                            }
                        }
                        coding[*o] = acc;
                    }
                }
                NodeRule::Destination { session, inputs } => {
                    for &(e, c) in inputs {
                        for j in 0..SESSIONS {
                            out[*session][j] = f.add(out[*session][j], f.mul(xi[c], coding[e][j]));
                        }
                    }
                }
            }
        }
        out
    }

    fn degree_bound(&self, i: usize, j: usize) -> usize {
        // a path of L edges passes through L + 1 coefficients
        let l = self
            .net
            .longest_path(self.net.source(j), self.net.destination(i))
            .unwrap_or_else(|| self.net.longest_path_overall());
        l + 1
    }
}

/// A model in which the listed off-diagonal entries are replaced by fresh
/// variables `η_ij`, appended after the base model's variables in list order.
#[derive(Debug, Clone)]
pub struct Virtualized<'m, M: ?Sized> {
    base: &'m M,
    pairs: Vec<(usize, usize)>,
}

impl<'m, M: TransferModel + ?Sized> Virtualized<'m, M> {
    pub fn new(base: &'m M, pairs: &[(usize, usize)]) -> Result<Self, TransferError> {
        if pairs.is_empty() {
            return Err(TransferError::InvalidPair(
                "empty pair set; use the unmodified model".into(),
            ));
        }
        let mut sorted = pairs.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != pairs.len() {
            return Err(TransferError::InvalidPair("duplicate pair".into()));
        }
        for &(i, j) in pairs {
            if i >= SESSIONS || j >= SESSIONS {
                return Err(TransferError::InvalidPair(format!(
                    "({}, {}) out of range",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(TransferError::InvalidPair(format!(
                    "diagonal pair ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(Virtualized {
            base,
            pairs: sorted,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn base_vars(&self) -> usize {
        self.base.num_vars()
    }
}

impl<M: TransferModel + ?Sized> TransferModel for Virtualized<'_, M> {
    fn field(&self) -> PrimeField {
        self.base.field()
    }

    fn num_vars(&self) -> usize {
        self.base.num_vars() + self.pairs.len()
    }

    fn evaluate(&self, assignment: &[Elem]) -> TransferMatrix {
        let s = self.base.num_vars();
        let mut m = self.base.evaluate(&assignment[..s]);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            m[i][j] = assignment[s + k];
        }
        m
    }

    fn degree_bound(&self, i: usize, j: usize) -> usize {
        if self.pairs.contains(&(i, j)) {
            1
        } else {
            self.base.degree_bound(i, j)
        }
    }
}

/// The transfer matrix at one concrete assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferEvaluation {
    pub values: TransferMatrix,
    pub assignment: Vec<Elem>,
}

impl TransferEvaluation {
    pub fn get(&self, i: usize, j: usize) -> Elem {
        self.values[i][j]
    }

    pub fn to_matrix(&self, field: PrimeField) -> FieldMatrix {
        transfer_to_matrix(field, &self.values)
    }
}

pub fn transfer_to_matrix(field: PrimeField, m: &TransferMatrix) -> FieldMatrix {
    FieldMatrix::from_rows(field, &m.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("reduced entries")
}

pub fn evaluate_transfer(net: &Network, xi: &[Elem]) -> Result<TransferEvaluation, TransferError> {
    let model = NetworkModel::new(net);
    if xi.len() != model.num_vars() {
        return Err(TransferError::AssignmentLength {
            expected: model.num_vars(),
            got: xi.len(),
        });
    }
    let f = net.field();
    let assignment: Vec<Elem> = xi.iter().map(|&v| f.reduce(v)).collect();
    Ok(TransferEvaluation {
        values: model.evaluate(&assignment),
        assignment,
    })
}

/// `(a, b)` with `a = m12 m23 m31` and `b = m21 m13 m32`.
pub fn cycle_products(field: PrimeField, m: &TransferMatrix) -> (Elem, Elem) {
    let a = field.mul(field.mul(m[0][1], m[1][2]), m[2][0]);
    let b = field.mul(field.mul(m[1][0], m[0][2]), m[2][1]);
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    CertifiedNonzero,
    LikelyZero,
    CertifiedDistinct,
    LikelyProportional,
    LikelyConstant,
    CertifiedNonconstant,
    CertifiedAsymmetric,
    Unverified,
}

impl VerdictKind {
    pub fn is_certified(self) -> bool {
        matches!(
            self,
            VerdictKind::CertifiedNonzero
                | VerdictKind::CertifiedDistinct
                | VerdictKind::CertifiedNonconstant
                | VerdictKind::CertifiedAsymmetric
        )
    }
}

/// Outcome of one identity test. Certified kinds carry the assignments that
/// prove them; likely kinds carry an upper bound on the error probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityVerdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<Vec<Elem>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<f64>,
    /// Common value of `a/b` for [`VerdictKind::LikelyConstant`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<Elem>,
    /// Level-set probes spent by an asymmetry search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
}

impl IdentityVerdict {
    fn certified(kind: VerdictKind, witness: Vec<Vec<Elem>>) -> Self {
        IdentityVerdict {
            kind,
            witness,
            error_bound: None,
            ratio: None,
            probes: None,
        }
    }

    fn likely(kind: VerdictKind, error_bound: f64) -> Self {
        IdentityVerdict {
            kind,
            witness: Vec::new(),
            error_bound: Some(error_bound),
            ratio: None,
            probes: None,
        }
    }
}

/// `(degree / p)^samples`, clamped into `(0, 1]`.
pub fn schwartz_zippel_bound(degree: usize, p: u64, samples: usize) -> f64 {
    let ratio = degree.max(1) as f64 / p as f64;
    if ratio >= 1.0 {
        return 1.0;
    }
    (samples as f64 * ratio.ln())
        .exp()
        .clamp(f64::MIN_POSITIVE, 1.0)
}

fn stream(seed: u64, label: &str) -> SplitMix64 {
    SplitMix64::derive(seed, label, 0)
}

fn pair_label(prefix: &str, i: usize, j: usize) -> String {
    format!("{prefix}/{}{}", i + 1, j + 1)
}

/// Decides whether `m_ij` is the zero polynomial.
pub fn triviality_test<M: TransferModel + ?Sized>(
    model: &M,
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> IdentityVerdict {
    let f = model.field();
    let mut rng = stream(seed, &pair_label("triviality", i, j));
    for _ in 0..samples.max(1) {
        let xi = rng.elems(&f, model.num_vars());
        if model.evaluate(&xi)[i][j] != 0 {
            return IdentityVerdict::certified(VerdictKind::CertifiedNonzero, vec![xi]);
        }
    }
    IdentityVerdict::likely(
        VerdictKind::LikelyZero,
        schwartz_zippel_bound(model.degree_bound(i, j), f.modulus(), samples.max(1)),
    )
}

fn require_nonzero<M: TransferModel + ?Sized>(
    model: &M,
    entries: &[(usize, usize)],
    samples: usize,
    seed: u64,
) -> Result<(), TransferError> {
    for &(i, j) in entries {
        if triviality_test(model, i, j, samples, seed).kind != VerdictKind::CertifiedNonzero {
            return Err(TransferError::PreconditionViolated(format!(
                "m_{}{} is not certified nonzero",
                i + 1,
                j + 1
            )));
        }
    }
    Ok(())
}

/// Tests assumption (A1) for one pair: is `m_ii / m_ij` constant?
pub fn proportionality_test<M: TransferModel + ?Sized>(
    model: &M,
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> Result<IdentityVerdict, TransferError> {
    if i == j {
        return Err(TransferError::PreconditionViolated(
            "proportionality needs i != j".into(),
        ));
    }
    require_nonzero(model, &[(i, i), (i, j)], samples, seed)?;
    let f = model.field();
    let mut rng = stream(seed, &pair_label("proportionality", i, j));
    for _ in 0..samples.max(1) {
        let xa = rng.elems(&f, model.num_vars());
        let xb = rng.elems(&f, model.num_vars());
        let ma = model.evaluate(&xa);
        let mb = model.evaluate(&xb);
        if f.mul(ma[i][i], mb[i][j]) != f.mul(mb[i][i], ma[i][j]) {
            return Ok(IdentityVerdict::certified(
                VerdictKind::CertifiedDistinct,
                vec![xa, xb],
            ));
        }
    }
    let degree = model.degree_bound(i, i) + model.degree_bound(i, j);
    Ok(IdentityVerdict::likely(
        VerdictKind::LikelyProportional,
        schwartz_zippel_bound(degree, f.modulus(), samples.max(1)),
    ))
}

const OFF_DIAGONAL: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

fn cycle_degree<M: TransferModel + ?Sized>(model: &M) -> usize {
    OFF_DIAGONAL
        .iter()
        .map(|&(i, j)| model.degree_bound(i, j))
        .sum()
}

/// Decides whether `a(ξ)/b(ξ)` is a constant `c̃`.
pub fn ratio_constancy_test<M: TransferModel + ?Sized>(
    model: &M,
    samples: usize,
    seed: u64,
) -> Result<IdentityVerdict, TransferError> {
    require_nonzero(model, &OFF_DIAGONAL, samples, seed)?;
    let f = model.field();
    let mut rng = stream(seed, "ratio");
    let mut ratio = None;
    for _ in 0..samples.max(1) {
        let xa = rng.elems(&f, model.num_vars());
        let xb = rng.elems(&f, model.num_vars());
        let (aa, ba) = cycle_products(f, &model.evaluate(&xa));
        let (ab, bb) = cycle_products(f, &model.evaluate(&xb));
        if f.mul(aa, bb) != f.mul(ab, ba) {
            return Ok(IdentityVerdict::certified(
                VerdictKind::CertifiedNonconstant,
                vec![xa, xb],
            ));
        }
        if ratio.is_none() {
            ratio = [(aa, ba), (ab, bb)]
                .iter()
                .find(|(_, b)| *b != 0)
                .map(|&(a, b)| f.div(a, b).expect("nonzero"));
        }
    }
    let Some(ratio) = ratio else {
        // every sampled b vanished; nothing to report as the constant
        return Ok(IdentityVerdict {
            kind: VerdictKind::Unverified,
            witness: Vec::new(),
            error_bound: None,
            ratio: None,
            probes: Some(samples),
        });
    };
    let mut v = IdentityVerdict::likely(
        VerdictKind::LikelyConstant,
        schwartz_zippel_bound(cycle_degree(model), f.modulus(), samples.max(1)),
    );
    v.ratio = Some(ratio);
    Ok(v)
}

/// The asymmetry assumptions on the three destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Assumption {
    A2,
    A3,
    A4,
}

impl Assumption {
    pub const ALL: [Assumption; 3] = [Assumption::A2, Assumption::A3, Assumption::A4];

    /// `(numerator entries, denominator entries)` of the assumption's rational function.
    pub fn terms(self) -> ([(usize, usize); 2], [(usize, usize); 2]) {
        match self {
            // m11 m32 / (m12 m31)
            Assumption::A2 => ([(0, 0), (2, 1)], [(0, 1), (2, 0)]),
            // m22 m31 / (m21 m32)
            Assumption::A3 => ([(1, 1), (2, 0)], [(1, 0), (2, 1)]),
            // m33 m21 / (m23 m31)
            Assumption::A4 => ([(2, 2), (1, 0)], [(1, 2), (2, 0)]),
        }
    }

    fn split(self, f: PrimeField, m: &TransferMatrix) -> (Elem, Elem) {
        let (num, den) = self.terms();
        let prod = |t: [(usize, usize); 2]| f.mul(m[t[0].0][t[0].1], m[t[1].0][t[1].1]);
        (prod(num), prod(den))
    }

    /// Re-checks a level-set collision from scratch: `h` agrees, `g` differs,
    /// and no denominator vanishes.
    pub fn certifies<M: TransferModel + ?Sized>(self, model: &M, xa: &[Elem], xb: &[Elem]) -> bool {
        let f = model.field();
        let ma = model.evaluate(xa);
        let mb = model.evaluate(xb);
        let (aa, ba) = cycle_products(f, &ma);
        let (ab, bb) = cycle_products(f, &mb);
        let (ga, da) = self.split(f, &ma);
        let (gb, db) = self.split(f, &mb);
        if ba == 0 || bb == 0 || da == 0 || db == 0 {
            return false;
        }
        f.mul(aa, bb) == f.mul(ab, ba) && f.mul(ga, db) != f.mul(gb, da)
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Dense univariate polynomial, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<Elem>);

impl Poly {
    fn affine(c0: Elem, c1: Elem) -> Self {
        Poly(vec![c0, c1])
    }

    fn mul(&self, rhs: &Poly, f: PrimeField) -> Poly {
        let mut out = vec![0; self.0.len() + rhs.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in rhs.0.iter().enumerate() {
                out[i + j] = f.add(out[i + j], f.mul(a, b));
            }
        }
        Poly(out)
    }

    fn eval(&self, x: Elem, f: PrimeField) -> Elem {
        self.0
            .iter()
            .rev()
            .fold(0, |acc, &c| f.add(f.mul(acc, x), c))
    }

    fn trimmed(mut self) -> Poly {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
        self
    }

    /// Quotient by `(y - root)`; `root` must be a root.
    fn deflate(&self, root: Elem, f: PrimeField) -> Poly {
        let n = self.0.len();
        if n <= 1 {
            return Poly(Vec::new());
        }
        let mut q = vec![0; n - 1];
        let mut carry = 0;
        for k in (1..n).rev() {
            carry = f.add(self.0[k], f.mul(carry, root));
            q[k - 1] = carry;
        }
        Poly(q).trimmed()
    }

    /// Roots of a polynomial of degree at most two.
    fn small_roots(&self, f: PrimeField) -> Vec<Elem> {
        match self.0.len() {
            0 | 1 => Vec::new(),
            2 => vec![f
                .div(f.neg(self.0[0]), self.0[1])
                .expect("leading coefficient")],
            3 => {
                let (c, b, a) = (self.0[0], self.0[1], self.0[2]);
                let disc = f.sub(f.mul(b, b), f.mul(4 % f.modulus(), f.mul(a, c)));
                let Some(r) = f.sqrt(disc) else {
                    return Vec::new();
                };
                let two_a = f.add(a, a);
                let mut roots = vec![
                    f.div(f.sub(r, b), two_a).expect("odd p"),
                    f.div(f.sub(f.neg(r), b), two_a).expect("odd p"),
                ];
                roots.dedup();
                roots
            }
            _ => unreachable!("degree above two"),
        }
    }
}

const SWEEP_PER_COORDINATE: usize = 32;

/// Searches for a certificate that the assumption's rational function `g`
/// is not a function of `h = a/b`.
///
/// One coordinate of a random base point is freed at a time (round-robin).
/// Along that line every `m_ij` is affine, so `a`, `b` and the parts of `g`
/// are low-degree polynomials. Sampled points are bucketed by `h`, and each
/// sample's other preimages of `h` are found as roots of
/// `a(y) b(x) - a(x) b(y)`. A collision with different `g` values is
/// re-verified by full evaluation before it is returned. The budget caps
/// the number of probed points; running out yields `Unverified`.
pub fn asymmetry_certificate<M: TransferModel + ?Sized>(
    model: &M,
    which: Assumption,
    budget: usize,
    seed: u64,
) -> Result<IdentityVerdict, TransferError> {
    require_nonzero(model, &OFF_DIAGONAL, DEFAULT_SAMPLES, seed)?;
    let f = model.field();
    let nv = model.num_vars();
    let mut rng = stream(seed, &format!("asymmetry/{which}"));
    let (num_t, den_t) = which.terms();
    let mut probes = 0usize;
    let mut coord = 0usize;

    while probes < budget {
        let base = rng.elems(&f, nv);
        let k = coord % nv;
        coord += 1;
        let mut point = base.clone();
        point[k] = 0;
        let e0 = model.evaluate(&point);
        point[k] = 1;
        let e1 = model.evaluate(&point);
        let line = |i: usize, j: usize| Poly::affine(e0[i][j], f.sub(e1[i][j], e0[i][j]));
        let product = |t: &[(usize, usize)]| {
            t.iter()
                .skip(1)
                .fold(line(t[0].0, t[0].1), |acc, &(i, j)| acc.mul(&line(i, j), f))
        };
        let a = product(&[(0, 1), (1, 2), (2, 0)]);
        let b = product(&[(1, 0), (0, 2), (2, 1)]);
        let g_num = product(&num_t);
        let g_den = product(&den_t);

        // value of g at x, if h and g are defined there
        let probe = |x: Elem| -> Option<(Elem, Elem)> {
            let bx = b.eval(x, f);
            let dx = g_den.eval(x, f);
            if bx == 0 || dx == 0 {
                return None;
            }
            let h = f.div(a.eval(x, f), bx).ok()?;
            let g = f.div(g_num.eval(x, f), dx).ok()?;
            Some((h, g))
        };
        let at = |x: Elem| {
            let mut v = base.clone();
            v[k] = x;
            v
        };
        let mut found: Option<(Elem, Elem)> = None;
        let mut buckets: HashMap<Elem, (Elem, Elem)> = HashMap::new();

        'sweep: for _ in 0..SWEEP_PER_COORDINATE {
            if probes >= budget {
                break;
            }
            let x = rng.next_elem(&f);
            probes += 1;
            let Some((hx, gx)) = probe(x) else { continue };
            match buckets.get(&hx) {
                Some(&(x2, g2)) if x2 != x && g2 != gx => {
                    found = Some((x2, x));
                    break 'sweep;
                }
                Some(_) => {}
                None => {
                    buckets.insert(hx, (x, gx));
                }
            }
            // other points on this line where h takes the value hx
            let ax = a.eval(x, f);
            let bx = b.eval(x, f);
            let level = Poly(
                (0..4)
                    .map(|d| {
                        let ad = a.0.get(d).copied().unwrap_or(0);
                        let bd = b.0.get(d).copied().unwrap_or(0);
                        f.sub(f.mul(ad, bx), f.mul(ax, bd))
                    })
                    .collect(),
            )
            .trimmed();
            let partners = if level.0.is_empty() {
                // h is constant along this line
                vec![rng.next_elem(&f)]
            } else {
                level.deflate(x, f).small_roots(f)
            };
            for y in partners {
                if y == x || probes >= budget {
                    continue;
                }
                probes += 1;
                if let Some((hy, gy)) = probe(y) {
                    if hy == hx && gy != gx {
                        found = Some((x, y));
                        break 'sweep;
                    }
                }
            }
        }

        if let Some((x, y)) = found {
            let (xa, xb) = (at(x), at(y));
            if which.certifies(model, &xa, &xb) {
                let mut v =
                    IdentityVerdict::certified(VerdictKind::CertifiedAsymmetric, vec![xa, xb]);
                v.probes = Some(probes);
                return Ok(v);
            }
        }
    }
    Ok(IdentityVerdict {
        kind: VerdictKind::Unverified,
        witness: Vec::new(),
        error_bound: None,
        ratio: None,
        probes: Some(probes),
    })
}

/// Maximum rank of the transfer matrix over `probes` random assignments.
pub fn rank_probe<M: TransferModel + ?Sized>(model: &M, probes: usize, seed: u64) -> usize {
    let f = model.field();
    let mut rng = stream(seed, "rank");
    (0..probes.max(1))
        .map(|_| {
            let xi = rng.elems(&f, model.num_vars());
            transfer_to_matrix(f, &model.evaluate(&xi)).rank()
        })
        .max()
        .unwrap_or(0)
}

/// Structural class of a network's transfer matrix. Pairs are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CaseTagRepr", try_from = "CaseTagRepr")]
pub enum CaseTag {
    CaseIGenericRatio,
    CaseIConstantRatio { ratio: Elem },
    CaseII { trivial_pairs: Vec<(usize, usize)> },
    DegenerateRank1,
    BrokenA1 { pair: (usize, usize) },
}

impl CaseTag {
    pub fn name(&self) -> &'static str {
        match self {
            CaseTag::CaseIGenericRatio => "CaseI_GenericRatio",
            CaseTag::CaseIConstantRatio { .. } => "CaseI_ConstantRatio",
            CaseTag::CaseII { .. } => "CaseII",
            CaseTag::DegenerateRank1 => "Degenerate_Rank1",
            CaseTag::BrokenA1 { .. } => "BrokenA1",
        }
    }

    pub fn is_designable(&self) -> bool {
        !matches!(self, CaseTag::DegenerateRank1 | CaseTag::BrokenA1 { .. })
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseTag::CaseIConstantRatio { ratio } => write!(f, "CaseI_ConstantRatio({ratio})"),
            CaseTag::CaseII { trivial_pairs } => {
                let pairs: Vec<String> = trivial_pairs
                    .iter()
                    .map(|(i, j)| format!("({},{})", i + 1, j + 1))
                    .collect();
                write!(f, "CaseII({{{}}})", pairs.join(","))
            }
            CaseTag::BrokenA1 { pair: (i, j) } => write!(f, "BrokenA1({},{})", i + 1, j + 1),
            other => f.write_str(other.name()),
        }
    }
}

/// JSON form of [`CaseTag`], with 1-based session pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseTagRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<Elem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trivial_pairs: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<[usize; 2]>,
}

impl From<CaseTag> for CaseTagRepr {
    fn from(c: CaseTag) -> Self {
        let mut r = CaseTagRepr {
            kind: c.name().to_string(),
            ratio: None,
            trivial_pairs: None,
            pair: None,
        };
        match c {
            CaseTag::CaseIConstantRatio { ratio } => r.ratio = Some(ratio),
            CaseTag::CaseII { trivial_pairs } => {
                r.trivial_pairs = Some(trivial_pairs.iter().map(|&(i, j)| [i + 1, j + 1]).collect())
            }
            CaseTag::BrokenA1 { pair: (i, j) } => r.pair = Some([i + 1, j + 1]),
            _ => {}
        }
        r
    }
}

impl TryFrom<CaseTagRepr> for CaseTag {
    type Error = String;

    fn try_from(r: CaseTagRepr) -> Result<Self, Self::Error> {
        let pair = |p: [usize; 2]| -> Result<(usize, usize), String> {
            if p.iter().any(|&v| v == 0 || v > SESSIONS) {
                return Err(format!("session pair {p:?} out of range"));
            }
            Ok((p[0] - 1, p[1] - 1))
        };
        Ok(match r.kind.as_str() {
            "CaseI_GenericRatio" => CaseTag::CaseIGenericRatio,
            "CaseI_ConstantRatio" => CaseTag::CaseIConstantRatio {
                ratio: r.ratio.ok_or("missing ratio")?,
            },
            "CaseII" => CaseTag::CaseII {
                trivial_pairs: r
                    .trivial_pairs
                    .ok_or("missing trivial_pairs")?
                    .into_iter()
                    .map(pair)
                    .collect::<Result<_, _>>()?,
            },
            "Degenerate_Rank1" => CaseTag::DegenerateRank1,
            "BrokenA1" => CaseTag::BrokenA1 {
                pair: pair(r.pair.ok_or("missing pair")?)?,
            },
            other => return Err(format!("unknown case `{other}`")),
        })
    }
}

/// Sample counts for the identity tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestConfig {
    pub samples: usize,
    pub rank_probes: usize,
    pub collision_budget: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            samples: DEFAULT_SAMPLES,
            rank_probes: DEFAULT_RANK_PROBES,
            collision_budget: DEFAULT_COLLISION_BUDGET,
        }
    }
}

/// Every intermediate verdict behind a classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub case: CaseTag,
    pub triviality: [[IdentityVerdict; SESSIONS]; SESSIONS],
    /// `a1[i][j]` for `i != j` when both entries are nonzero.
    pub a1: [[Option<IdentityVerdict>; SESSIONS]; SESSIONS],
    pub max_rank: usize,
    /// Ratio test, run on the virtualized model in Case II.
    pub ratio: Option<IdentityVerdict>,
}

impl Classification {
    pub fn trivial_pairs(&self) -> Vec<(usize, usize)> {
        OFF_DIAGONAL
            .iter()
            .copied()
            .filter(|&(i, j)| self.triviality[i][j].kind == VerdictKind::LikelyZero)
            .collect()
    }
}

/// Runs the triviality, (A1), rank and ratio tests and names the case.
pub fn classify_detailed<M: TransferModel + ?Sized>(
    model: &M,
    seed: u64,
    cfg: &TestConfig,
) -> Result<Classification, TransferError> {
    let triviality: [[IdentityVerdict; SESSIONS]; SESSIONS] = std::array::from_fn(|i| {
        std::array::from_fn(|j| triviality_test(model, i, j, cfg.samples, seed))
    });
    for (k, row) in triviality.iter().enumerate() {
        if row[k].kind == VerdictKind::LikelyZero {
            return Err(TransferError::MincutViolation { session: k + 1 });
        }
    }
    let mut a1: [[Option<IdentityVerdict>; SESSIONS]; SESSIONS] = Default::default();
    let mut broken = None;
    for &(i, j) in &OFF_DIAGONAL {
        if triviality[i][j].kind != VerdictKind::CertifiedNonzero {
            continue;
        }
        let v = proportionality_test(model, i, j, cfg.samples, seed)?;
        if v.kind == VerdictKind::LikelyProportional && broken.is_none() {
            broken = Some((i, j));
        }
        a1[i][j] = Some(v);
    }
    let max_rank = rank_probe(model, cfg.rank_probes, seed);
    let mut out = Classification {
        case: CaseTag::DegenerateRank1,
        triviality,
        a1,
        max_rank,
        ratio: None,
    };
    let trivial = out.trivial_pairs();

    let ratio = if trivial.is_empty() {
        Some(ratio_constancy_test(model, cfg.samples, seed)?)
    } else {
        let virt = Virtualized::new(model, &trivial)?;
        Some(ratio_constancy_test(&virt, cfg.samples, seed)?)
    };
    out.ratio = ratio.clone();

    out.case = if let Some(pair) = broken {
        CaseTag::BrokenA1 { pair }
    } else if max_rank <= 1 {
        CaseTag::DegenerateRank1
    } else if !trivial.is_empty() {
        CaseTag::CaseII {
            trivial_pairs: trivial,
        }
    } else {
        let r = ratio.expect("ratio test ran");
        match (r.kind, r.ratio) {
            (VerdictKind::LikelyConstant, Some(c)) => CaseTag::CaseIConstantRatio { ratio: c },
            _ => CaseTag::CaseIGenericRatio,
        }
    };
    Ok(out)
}

pub fn classify<M: TransferModel + ?Sized>(model: &M, seed: u64) -> Result<CaseTag, TransferError> {
    Ok(classify_detailed(model, seed, &TestConfig::default())?.case)
}

/// Full analysis written by the `analyze` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub seed: u64,
    pub field_prime: u64,
    pub samples: usize,
    pub case: CaseTag,
    pub mincuts: [usize; SESSIONS],
    pub max_rank: usize,
    pub triviality: Vec<Vec<IdentityVerdict>>,
    /// (A1) verdicts; `null` on the diagonal and for trivial entries.
    pub a1: Vec<Vec<Option<IdentityVerdict>>>,
    pub ratio: Option<IdentityVerdict>,
    pub asymmetry: AsymmetryReport,
    pub error_bounds: ErrorBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct AsymmetryReport {
    pub A2: IdentityVerdict,
    pub A3: IdentityVerdict,
    pub A4: IdentityVerdict,
}

impl AsymmetryReport {
    pub fn get(&self, which: Assumption) -> &IdentityVerdict {
        match which {
            Assumption::A2 => &self.A2,
            Assumption::A3 => &self.A3,
            Assumption::A4 => &self.A4,
        }
    }
}

/// Largest error bound among the "likely" verdicts of each test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub triviality: Option<f64>,
    pub a1: Option<f64>,
    pub ratio: Option<f64>,
}

fn max_bound<'a>(it: impl Iterator<Item = &'a IdentityVerdict>) -> Option<f64> {
    it.filter_map(|v| v.error_bound)
        .fold(None, |acc, b| Some(acc.map_or(b, |a: f64| a.max(b))))
}

/// Classification plus the asymmetry searches. Case II networks are searched
/// on the virtualized model.
pub fn analyze(
    net: &Network,
    seed: u64,
    cfg: &TestConfig,
) -> Result<AnalysisReport, TransferError> {
    let model = NetworkModel::new(net);
    let cls = classify_detailed(&model, seed, cfg)?;
    let trivial = cls.trivial_pairs();
    let search = |which| -> Result<IdentityVerdict, TransferError> {
        if trivial.is_empty() {
            asymmetry_certificate(&model, which, cfg.collision_budget, seed)
        } else {
            asymmetry_certificate(
                &Virtualized::new(&model, &trivial)?,
                which,
                cfg.collision_budget,
                seed,
            )
        }
    };
    let asymmetry = AsymmetryReport {
        A2: search(Assumption::A2)?,
        A3: search(Assumption::A3)?,
        A4: search(Assumption::A4)?,
    };
    let error_bounds = ErrorBounds {
        triviality: max_bound(cls.triviality.iter().flatten()),
        a1: max_bound(cls.a1.iter().flatten().flatten()),
        ratio: max_bound(cls.ratio.iter()),
    };
    Ok(AnalysisReport {
        seed,
        field_prime: net.field().modulus(),
        samples: cfg.samples,
        case: cls.case,
        mincuts: mincuts(net),
        max_rank: cls.max_rank,
        triviality: cls.triviality.iter().map(|r| r.to_vec()).collect(),
        a1: cls.a1.iter().map(|r| r.to_vec()).collect(),
        ratio: cls.ratio,
        asymmetry,
        error_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_deflate_and_roots() {
        let f = PrimeField::new(101).unwrap();
        // (y - 3)(y - 5)(y - 7)
        let p = Poly(vec![f.from_i64(-105), 71, f.from_i64(-15), 1]);
        for r in [3, 5, 7] {
            assert_eq!(p.eval(r, f), 0);
        }
        let mut roots = p.deflate(3, f).small_roots(f);
        roots.sort_unstable();
        assert_eq!(roots, vec![5, 7]);
        assert!(Poly(vec![1, 0, 1])
            .small_roots(PrimeField::new(7).unwrap())
            .is_empty());
    }

    #[test]
    fn bound_is_geometric() {
        let b1 = schwartz_zippel_bound(4, 65537, 1);
        let b2 = schwartz_zippel_bound(4, 65537, 2);
        assert!((b1 - 4.0 / 65537.0).abs() < 1e-15);
        assert!((b2 - b1 * b1).abs() < 1e-15);
        assert_eq!(schwartz_zippel_bound(10, 7, 3), 1.0);
        assert!(schwartz_zippel_bound(5, 2147483647, 1000) > 0.0);
    }

    #[test]
    fn case_tag_json() {
        let tag = CaseTag::CaseII {
            trivial_pairs: vec![(0, 1)],
        };
        let s = serde_json::to_string(&tag).unwrap();
        assert_eq!(s, r#"{"kind":"CaseII","trivial_pairs":[[1,2]]}"#);
        assert_eq!(serde_json::from_str::<CaseTag>(&s).unwrap(), tag);
        assert_eq!(tag.to_string(), "CaseII({(1,2)})");
        assert!(serde_json::from_str::<CaseTag>(r#"{"kind":"Nope"}"#).is_err());
    }
}
