//! Symbol-extension precoding for three unicast sessions.
//!
//! Over `2n+1` channel uses, each transfer function becomes a diagonal block
//! `M_ij`. Source 1 sends `n+1` symbols through `V1`, sources 2 and 3 send
//! `n` symbols through `V2`, `V3`. The precoders are chosen so that at every
//! destination the interference collapses into a subspace complementary to
//! the desired signal:
//!
//! ```text
//! D1: span(M12 V2) = span(M13 V3)      rank[M11 V1 | M12 V2] = 2n+1
//! D2: span(M23 V3) ⊆ span(M21 V1)      rank[M22 V2 | M21 V1] = 2n+1
//! D3: span(M32 V2) ⊆ span(M31 V1)      rank[M33 V3 | M31 V1] = 2n+1
//! ```
//!
//! Designs are found by sampling coefficient assignments and checking these
//! conditions directly; a design is only returned once all six hold.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{next_prime, Elem, FieldMatrix, GfError, PrimeField, DEFAULT_PRIME};
use crate::netmodel::{mincuts, Network, SESSIONS};
use crate::rng::{derive_seed, SplitMix64};
use crate::transfer::{
    classify_detailed, CaseTag, NetworkModel, TestConfig, TransferError, TransferModel,
    VerdictKind, Virtualized,
};

pub const DESIGN_FORMAT: &str = "netalign-design/1";
pub const DEFAULT_MAX_ATTEMPTS: usize = 64;
const ATTEMPT_BATCH: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("extension parameter n must be at least 1")]
    InvalidExtension,
    #[error("diagonal block M{}{} vanishes at channel use {k}", .i + 1, .j + 1)]
    SingularBlock { i: usize, j: usize, k: usize },
    #[error("precoder rank failure: {0}")]
    RankFailure(String),
    #[error("no valid design after {attempts} attempts; last failure: {last}")]
    Exhausted {
        attempts: usize,
        last: AttemptFailure,
    },
    #[error("network rejected: {0} admits no aligned design")]
    CaseRejected(CaseTag),
    #[error("session {session} has min-cut 0")]
    MincutViolation { session: usize },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Field(#[from] GfError),
}

/// Why a single search attempt was discarded.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptFailure {
    SingularBlock { i: usize, j: usize, k: usize },
    RankFailure(String),
    Conditions(ConditionReport),
    NotAttempted,
}

impl fmt::Display for AttemptFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttemptFailure::SingularBlock { i, j, k } => {
                write!(f, "block M{}{} singular at channel use {k}", i + 1, j + 1)
            }
            AttemptFailure::RankFailure(m) => write!(f, "rank failure ({m})"),
            AttemptFailure::Conditions(r) => write!(f, "conditions failed: {r}"),
            AttemptFailure::NotAttempted => f.write_str("no attempts made"),
        }
    }
}

/// `2n+1` complete coefficient assignments, one per channel use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolExtension {
    n: usize,
    field: PrimeField,
    rows: Vec<Vec<Elem>>,
}

impl SymbolExtension {
    pub fn new(n: usize, field: PrimeField, rows: Vec<Vec<Elem>>) -> Result<Self, AlignError> {
        if n == 0 {
            return Err(AlignError::InvalidExtension);
        }
        if rows.len() != 2 * n + 1 {
            return Err(AlignError::InvalidDesign(format!(
                "{} assignments for n = {n}",
                rows.len()
            )));
        }
        let width = rows[0].len();
        for row in &rows {
            if row.len() != width {
                return Err(AlignError::InvalidDesign(
                    "assignments differ in length".into(),
                ));
            }
            for &v in row {
                field.check(v)?;
            }
        }
        Ok(SymbolExtension { n, field, rows })
    }

    pub fn random(
        n: usize,
        field: PrimeField,
        vars: usize,
        rng: &mut SplitMix64,
    ) -> Result<Self, AlignError> {
        let rows = (0..2 * n + 1).map(|_| rng.elems(&field, vars)).collect();
        Self::new(n, field, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn rows(&self) -> &[Vec<Elem>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[Elem] {
        &self.rows[k]
    }

    /// Appends per-channel-use values of extra variables to every row.
    fn extended(&self, extra: &[VirtualBlock]) -> SymbolExtension {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let mut r = r.clone();
                r.extend(extra.iter().map(|v| v.values[k]));
                r
            })
            .collect();
        SymbolExtension {
            n: self.n,
            field: self.field,
            rows,
        }
    }
}

/// Values of one virtual interference variable `η_ij`, per channel use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualBlock {
    pub pair: (usize, usize),
    pub values: Vec<Elem>,
}

/// The nine diagonal `(2n+1)x(2n+1)` blocks, stored as their diagonals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalBlocks {
    field: PrimeField,
    diag: [[Vec<Elem>; SESSIONS]; SESSIONS],
}

impl DiagonalBlocks {
    pub fn from_diagonals(
        field: PrimeField,
        diag: [[Vec<Elem>; SESSIONS]; SESSIONS],
    ) -> Result<Self, AlignError> {
        let len = diag[0][0].len();
        if len == 0 || len.is_multiple_of(2) || diag.iter().flatten().any(|d| d.len() != len) {
            return Err(AlignError::InvalidDesign(
                "diagonals must share one odd length".into(),
            ));
        }
        for &v in diag.iter().flatten().flatten() {
            field.check(v)?;
        }
        Ok(DiagonalBlocks { field, diag })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    /// Channel uses, `2n+1`.
    pub fn len(&self) -> usize {
        self.diag[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.len() / 2
    }

    pub fn diagonal(&self, i: usize, j: usize) -> &[Elem] {
        &self.diag[i][j]
    }

    pub fn entry(&self, i: usize, j: usize, k: usize) -> Elem {
        self.diag[i][j][k]
    }

    pub fn block(&self, i: usize, j: usize) -> FieldMatrix {
        FieldMatrix::diagonal(self.field, &self.diag[i][j])
    }

    /// `M_ij * v`.
    pub fn apply(&self, i: usize, j: usize, v: &FieldMatrix) -> FieldMatrix {
        v.scale_rows(&self.diag[i][j])
            .expect("block and precoder heights agree")
    }

    /// Blocks with each virtual pair's diagonal replaced by its `η` values.
    pub fn with_virtual(&self, virtual_blocks: &[VirtualBlock]) -> DiagonalBlocks {
        let mut out = self.clone();
        for v in virtual_blocks {
            out.diag[v.pair.0][v.pair.1] = v.values.clone();
        }
        out
    }

    fn first_zero(&self) -> Option<(usize, usize, usize)> {
        for i in 0..SESSIONS {
            for j in 0..SESSIONS {
                if let Some(k) = self.diag[i][j].iter().position(|&v| v == 0) {
                    return Some((i, j, k));
                }
            }
        }
        None
    }
}

pub fn build_blocks<M: TransferModel + ?Sized>(model: &M, ext: &SymbolExtension) -> DiagonalBlocks {
    let evals: Vec<_> = ext.rows().iter().map(|row| model.evaluate(row)).collect();
    let diag =
        std::array::from_fn(|i| std::array::from_fn(|j| evals.iter().map(|m| m[i][j]).collect()));
    DiagonalBlocks {
        field: model.field(),
        diag,
    }
}

/// Which precoder construction was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Construction {
    /// `V1 = [w, Tw, ..., T^n w]` with `T = M12 M23 M31 (M13 M32 M21)^-1`.
    GenericRatio,
    /// Random `V1`, `V2 = R V1 A`, `V3 = c S V1 A`.
    ConstantRatio { ratio: Elem },
}

/// Precoders `V1` (`(2n+1)x(n+1)`), `V2`, `V3` (`(2n+1)xn`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecodingSet {
    pub n: usize,
    pub v1: FieldMatrix,
    pub v2: FieldMatrix,
    pub v3: FieldMatrix,
    pub construction: Construction,
    /// Virtual interference values used in place of identically-zero blocks.
    pub virtual_values: Vec<VirtualBlock>,
    /// Stream seed that produced `V1` for the constant-ratio construction.
    pub theta_seed: Option<u64>,
}

fn require_invertible(blocks: &DiagonalBlocks) -> Result<(), AlignError> {
    match blocks.first_zero() {
        Some((i, j, k)) => Err(AlignError::SingularBlock { i, j, k }),
        None => Ok(()),
    }
}

fn check_n(blocks: &DiagonalBlocks, n: usize) -> Result<(), AlignError> {
    if n == 0 {
        return Err(AlignError::InvalidExtension);
    }
    if blocks.len() != 2 * n + 1 {
        return Err(AlignError::InvalidDesign(format!(
            "blocks of size {} for n = {n}",
            blocks.len()
        )));
    }
    Ok(())
}

/// Per-channel-use diagonal of `num1 num2 num3 / (den1 den2 den3)`.
fn diagonal_ratio(
    blocks: &DiagonalBlocks,
    num: &[(usize, usize)],
    den: &[(usize, usize)],
) -> Vec<Elem> {
    let f = blocks.field;
    (0..blocks.len())
        .map(|k| {
            let prod = |t: &[(usize, usize)]| {
                t.iter()
                    .fold(1, |acc, &(i, j)| f.mul(acc, blocks.entry(i, j, k)))
            };
            f.div(prod(num), prod(den))
                .expect("blocks checked invertible")
        })
        .collect()
}

/// `T`, `R = M31 M32^-1` and `S = M21 M23^-1` as diagonals.
fn trs(blocks: &DiagonalBlocks) -> (Vec<Elem>, Vec<Elem>, Vec<Elem>) {
    let t = diagonal_ratio(blocks, &[(0, 1), (1, 2), (2, 0)], &[(0, 2), (2, 1), (1, 0)]);
    let r = diagonal_ratio(blocks, &[(2, 0)], &[(2, 1)]);
    let s = diagonal_ratio(blocks, &[(1, 0)], &[(1, 2)]);
    (t, r, s)
}

/// Construction for a non-constant `a/b`.
///
/// Fails with `RankFailure` whenever two diagonal entries of `T` coincide:
/// distinct entries make every `n+1` rows of `V1` an invertible Vandermonde
/// matrix.
pub fn build_precoding_case1(
    blocks: &DiagonalBlocks,
    n: usize,
) -> Result<PrecodingSet, AlignError> {
    check_n(blocks, n)?;
    require_invertible(blocks)?;
    let f = blocks.field;
    let (t, r, s) = trs(blocks);
    let mut sorted = t.clone();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(AlignError::RankFailure(format!(
            "repeated T value {}",
            w[0]
        )));
    }
    let d = blocks.len();
    // powers[c][k] = t_k^c
    let powers: Vec<Vec<Elem>> = (0..=n)
        .map(|c| t.iter().map(|&tk| f.pow(tk, c as u64)).collect())
        .collect();
    let mut v1 = FieldMatrix::zeros(f, d, n + 1);
    let mut v2 = FieldMatrix::zeros(f, d, n);
    let mut v3 = FieldMatrix::zeros(f, d, n);
    for k in 0..d {
        for c in 0..=n {
            v1.set(k, c, powers[c][k]);
        }
        for c in 0..n {
            v2.set(k, c, f.mul(r[k], powers[c][k]));
            v3.set(k, c, f.mul(s[k], powers[c + 1][k]));
        }
    }
    if !v1.has_full_column_rank() {
        return Err(AlignError::RankFailure("V1 is rank deficient".into()));
    }
    Ok(PrecodingSet {
        n,
        v1,
        v2,
        v3,
        construction: Construction::GenericRatio,
        virtual_values: Vec::new(),
        theta_seed: None,
    })
}

/// Construction for a constant `a/b = ratio`, with `V1` drawn from the stream `theta_seed`.
pub fn build_precoding_case2(
    blocks: &DiagonalBlocks,
    n: usize,
    ratio: Elem,
    theta_seed: u64,
) -> Result<PrecodingSet, AlignError> {
    check_n(blocks, n)?;
    let f = blocks.field;
    let mut rng = SplitMix64::new(theta_seed);
    let data = rng.elems(&f, blocks.len() * (n + 1));
    let v1 = FieldMatrix::from_vec(f, blocks.len(), n + 1, data)?;
    let mut pre = build_precoding_case2_with(blocks, n, ratio, v1)?;
    pre.theta_seed = Some(theta_seed);
    Ok(pre)
}

/// Constant-ratio construction around a caller-supplied `V1`.
pub fn build_precoding_case2_with(
    blocks: &DiagonalBlocks,
    n: usize,
    ratio: Elem,
    v1: FieldMatrix,
) -> Result<PrecodingSet, AlignError> {
    check_n(blocks, n)?;
    require_invertible(blocks)?;
    if v1.rows() != blocks.len() || v1.cols() != n + 1 {
        return Err(AlignError::InvalidDesign("V1 must be (2n+1)x(n+1)".into()));
    }
    if !v1.has_full_column_rank() {
        return Err(AlignError::RankFailure(
            "sampled V1 is rank deficient".into(),
        ));
    }
    let (_, r, s) = trs(blocks);
    let head = v1.columns(0..n);
    let v2 = head.scale_rows(&r)?;
    let v3 = head.scale_rows(&s)?.scale(ratio);
    Ok(PrecodingSet {
        n,
        v1,
        v2,
        v3,
        construction: Construction::ConstantRatio { ratio },
        virtual_values: Vec::new(),
        theta_seed: None,
    })
}

/// Replaces identically-zero interference entries by fresh variables.
pub fn virtualize<'m, M: TransferModel>(
    model: &'m M,
    trivial_pairs: &[(usize, usize)],
) -> Result<Virtualized<'m, M>, TransferError> {
    Virtualized::new(model, trivial_pairs)
}

/// Outcome of the six alignment and decodability conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `span(M12 V2) = span(M13 V3)`, both of rank `n`.
    pub d1_aligned: bool,
    /// `rank[M11 V1 | M12 V2] = 2n+1`.
    pub d1_decodable: bool,
    /// `span(M23 V3) ⊆ span(M21 V1)`, the latter of rank `n+1`.
    pub d2_aligned: bool,
    /// `rank[M22 V2 | M21 V1] = 2n+1`.
    pub d2_decodable: bool,
    /// `span(M32 V2) ⊆ span(M31 V1)`, the latter of rank `n+1`.
    pub d3_aligned: bool,
    /// `rank[M33 V3 | M31 V1] = 2n+1`.
    pub d3_decodable: bool,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.as_array().iter().all(|&b| b)
    }

    pub fn as_array(&self) -> [bool; 6] {
        [
            self.d1_aligned,
            self.d1_decodable,
            self.d2_aligned,
            self.d2_decodable,
            self.d3_aligned,
            self.d3_decodable,
        ]
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            "D1 align", "D1 rank", "D2 align", "D2 rank", "D3 align", "D3 rank",
        ];
        let parts: Vec<String> = names
            .iter()
            .zip(self.as_array())
            .map(|(n, ok)| format!("{n} {}", if ok { "ok" } else { "FAIL" }))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// Interference basis and desired-signal matrices at each destination, from
/// effective blocks (virtual values substituted).
struct Stacks {
    desired: [FieldMatrix; SESSIONS],
    basis: [FieldMatrix; SESSIONS],
    aligned: [FieldMatrix; SESSIONS],
}

fn stacks(blocks: &DiagonalBlocks, pre: &PrecodingSet) -> Stacks {
    let v = [&pre.v1, &pre.v2, &pre.v3];
    Stacks {
        desired: [
            blocks.apply(0, 0, v[0]),
            blocks.apply(1, 1, v[1]),
            blocks.apply(2, 2, v[2]),
        ],
        basis: [
            blocks.apply(0, 1, v[1]),
            blocks.apply(1, 0, v[0]),
            blocks.apply(2, 0, v[0]),
        ],
        aligned: [
            blocks.apply(0, 2, v[2]),
            blocks.apply(1, 2, v[2]),
            blocks.apply(2, 1, v[1]),
        ],
    }
}

/// Checks the six conditions for `pre` against the real `blocks`.
///
/// Blocks listed in `pre.virtual_values` are replaced by their virtual
/// values when forming each destination's interference basis; the real
/// interference (zero for those blocks) must then lie in that basis.
/// Without virtual values this is exactly the plain rank test.
pub fn verify_conditions(blocks: &DiagonalBlocks, pre: &PrecodingSet) -> ConditionReport {
    let n = pre.n;
    let d = 2 * n + 1;
    if blocks.len() != d || pre.v1.rows() != d || pre.v2.rows() != d || pre.v3.rows() != d {
        return ConditionReport {
            d1_aligned: false,
            d1_decodable: false,
            d2_aligned: false,
            d2_decodable: false,
            d3_aligned: false,
            d3_decodable: false,
        };
    }
    let eff = blocks.with_virtual(&pre.virtual_values);
    let e = stacks(&eff, pre);
    let real = stacks(blocks, pre);
    let rank2 = |a: &FieldMatrix, b: &FieldMatrix| a.hstack(b).expect("same height").rank();
    let rank3 = |a: &FieldMatrix, b: &FieldMatrix, c: &FieldMatrix| {
        a.hstack(b)
            .and_then(|m| m.hstack(c))
            .expect("same height")
            .rank()
    };
    let basis_dims = [n, n + 1, n + 1];
    let aligned: [bool; SESSIONS] = std::array::from_fn(|i| {
        let dim = basis_dims[i];
        let basis_ok = e.basis[i].rank() == dim;
        // D1 needs both interferers to span the whole n-dimensional subspace
        let other_ok = i != 0 || e.aligned[i].rank() == n;
        basis_ok
            && other_ok
            && rank2(&e.basis[i], &e.aligned[i]) == dim
            && rank3(&e.basis[i], &real.basis[i], &real.aligned[i]) == dim
    });
    let decodable: [bool; SESSIONS] =
        std::array::from_fn(|i| rank2(&e.desired[i], &e.basis[i]) == d);
    ConditionReport {
        d1_aligned: aligned[0],
        d1_decodable: decodable[0],
        d2_aligned: aligned[1],
        d2_decodable: decodable[1],
        d3_aligned: aligned[2],
        d3_decodable: decodable[2],
    }
}

/// Zero-forcing matrices `W_i = [desired_i | basis_i]^-1`.
pub fn decode_matrices(
    blocks: &DiagonalBlocks,
    pre: &PrecodingSet,
) -> Result<[FieldMatrix; SESSIONS], AlignError> {
    let eff = blocks.with_virtual(&pre.virtual_values);
    let e = stacks(&eff, pre);
    let w = |i: usize| e.desired[i].hstack(&e.basis[i])?.inverse();
    Ok([w(0)?, w(1)?, w(2)?])
}

/// Conservative field size for a `(2n+1)`-symbol extension: the smallest
/// prime at least `64 * (9 + 12n + 12(2n+1))`, capped below 2^31.
pub fn recommended_prime(n: usize) -> Result<u64, AlignError> {
    if n == 0 {
        return Err(AlignError::InvalidExtension);
    }
    let bound = 9u64
        .saturating_add(12u64.saturating_mul(n as u64))
        .saturating_add(12u64.saturating_mul(2 * n as u64 + 1));
    let target = bound.saturating_mul(64);
    if target >= DEFAULT_PRIME {
        return Ok(DEFAULT_PRIME);
    }
    Ok(next_prime(target).min(DEFAULT_PRIME))
}

/// A validated code: precoders, decoders and the assignments they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeDesign {
    pub network_digest: String,
    pub n: usize,
    pub field: PrimeField,
    pub seed: u64,
    pub attempt: u64,
    pub case: CaseTag,
    pub extension: SymbolExtension,
    pub precoding: PrecodingSet,
    pub decoders: [FieldMatrix; SESSIONS],
}

impl CodeDesign {
    /// Symbols per block for each session: `n+1`, `n`, `n`.
    pub fn message_lengths(&self) -> [usize; SESSIONS] {
        [self.n + 1, self.n, self.n]
    }

    pub fn block_length(&self) -> usize {
        2 * self.n + 1
    }

    pub fn rates(&self) -> [Ratio<u64>; SESSIONS] {
        let d = self.block_length() as u64;
        self.message_lengths().map(|l| Ratio::new(l as u64, d))
    }

    pub fn precoder(&self, session: usize) -> &FieldMatrix {
        match session {
            0 => &self.precoding.v1,
            1 => &self.precoding.v2,
            _ => &self.precoding.v3,
        }
    }

    pub fn to_file(&self) -> DesignFile {
        let rates = self
            .message_lengths()
            .map(|l| [l as u64, self.block_length() as u64]);
        DesignFile {
            format: DESIGN_FORMAT.to_string(),
            network_digest: self.network_digest.clone(),
            n: self.n,
            p: self.field.modulus(),
            seed: self.seed,
            attempt: self.attempt,
            case: self.case.clone(),
            construction: self.precoding.construction,
            z: self.extension.rows().to_vec(),
            eta: self
                .precoding
                .virtual_values
                .iter()
                .map(|v| {
                    (
                        format!("{}{}", v.pair.0 + 1, v.pair.1 + 1),
                        v.values.clone(),
                    )
                })
                .collect(),
            theta_seed: self.precoding.theta_seed,
            v1: self.precoding.v1.to_rows(),
            v2: self.precoding.v2.to_rows(),
            v3: self.precoding.v3.to_rows(),
            w1: self.decoders[0].to_rows(),
            w2: self.decoders[1].to_rows(),
            w3: self.decoders[2].to_rows(),
            rates,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("design serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AlignError> {
        let file: DesignFile = serde_json::from_str(text)
            .map_err(|e| AlignError::InvalidDesign(format!("malformed design file: {e}")))?;
        Self::from_file(file)
    }

    pub fn from_file(file: DesignFile) -> Result<Self, AlignError> {
        let bad = |m: &str| AlignError::InvalidDesign(m.to_string());
        if file.format != DESIGN_FORMAT {
            return Err(bad("unsupported design format"));
        }
        let field = PrimeField::new(file.p)?;
        let n = file.n;
        let extension = SymbolExtension::new(n, field, file.z)?;
        let d = 2 * n + 1;
        let shaped =
            |rows: Vec<Vec<Elem>>, cols: usize, name: &str| -> Result<FieldMatrix, AlignError> {
                let m = FieldMatrix::from_rows(field, &rows)?;
                if m.rows() != d || m.cols() != cols {
                    return Err(AlignError::InvalidDesign(format!(
                        "{name} must be {d}x{cols}"
                    )));
                }
                Ok(m)
            };
        let mut virtual_values = Vec::new();
        for (key, values) in file.eta {
            let digits: Vec<usize> = key
                .chars()
                .filter_map(|c| c.to_digit(10))
                .map(|v| v as usize)
                .collect();
            if key.len() != 2 || digits.len() != 2 || digits.iter().any(|&v| v == 0 || v > SESSIONS)
            {
                return Err(bad("eta keys must be session pairs like \"12\""));
            }
            if values.len() != d {
                return Err(bad("eta values must have one entry per channel use"));
            }
            for &v in &values {
                field.check(v)?;
            }
            virtual_values.push(VirtualBlock {
                pair: (digits[0] - 1, digits[1] - 1),
                values,
            });
        }
        let precoding = PrecodingSet {
            n,
            v1: shaped(file.v1, n + 1, "V1")?,
            v2: shaped(file.v2, n, "V2")?,
            v3: shaped(file.v3, n, "V3")?,
            construction: file.construction,
            virtual_values,
            theta_seed: file.theta_seed,
        };
        let decoders = [
            shaped(file.w1, d, "W1")?,
            shaped(file.w2, d, "W2")?,
            shaped(file.w3, d, "W3")?,
        ];
        Ok(CodeDesign {
            network_digest: file.network_digest,
            n,
            field,
            seed: file.seed,
            attempt: file.attempt,
            case: file.case,
            extension,
            precoding,
            decoders,
        })
    }
}

/// On-disk form of a [`CodeDesign`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub format: String,
    pub network_digest: String,
    pub n: usize,
    pub p: u64,
    pub seed: u64,
    pub attempt: u64,
    pub case: CaseTag,
    pub construction: Construction,
    pub z: Vec<Vec<Elem>>,
    pub eta: BTreeMap<String, Vec<Elem>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_seed: Option<u64>,
    #[serde(rename = "V1")]
    pub v1: Vec<Vec<Elem>>,
    #[serde(rename = "V2")]
    pub v2: Vec<Vec<Elem>>,
    #[serde(rename = "V3")]
    pub v3: Vec<Vec<Elem>>,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<Elem>>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<Elem>>,
    #[serde(rename = "W3")]
    pub w3: Vec<Vec<Elem>>,
    /// `[numerator, denominator]` per session.
    pub rates: [[u64; 2]; SESSIONS],
}

/// Parameters of a design search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub n: usize,
    pub prime: u64,
    pub seed: u64,
    pub max_attempts: usize,
    pub tests: TestConfig,
}

impl SearchParams {
    pub fn new(n: usize, prime: u64, seed: u64, max_attempts: usize) -> Self {
        SearchParams {
            n,
            prime,
            seed,
            max_attempts,
            tests: TestConfig::default(),
        }
    }
}

/// Randomized search for a valid design. Attempt `t` draws from the stream
/// `(seed, "attempt", t)` and the lowest successful attempt wins, so the
/// result does not depend on how many threads run the batches.
pub fn search_design(
    net: &Network,
    n: usize,
    p: u64,
    seed: u64,
    max_attempts: usize,
) -> Result<CodeDesign, AlignError> {
    search_design_with(net, &SearchParams::new(n, p, seed, max_attempts))
}

pub fn search_design_with(net: &Network, params: &SearchParams) -> Result<CodeDesign, AlignError> {
    let n = params.n;
    if n == 0 {
        return Err(AlignError::InvalidExtension);
    }
    let field = PrimeField::new(params.prime)?;
    let net_p = net.with_field(field);
    if let Some(k) = mincuts(&net_p).iter().position(|&c| c == 0) {
        return Err(AlignError::MincutViolation { session: k + 1 });
    }
    let model = NetworkModel::new(&net_p);
    let cls = classify_detailed(&model, params.seed, &params.tests).map_err(|e| match e {
        TransferError::MincutViolation { session } => AlignError::MincutViolation { session },
        other => AlignError::Transfer(other),
    })?;
    if !cls.case.is_designable() {
        return Err(AlignError::CaseRejected(cls.case));
    }
    let trivial = cls.trivial_pairs();
    let construction = match (&cls.case, &cls.ratio) {
        (CaseTag::CaseIConstantRatio { ratio }, _) => Construction::ConstantRatio { ratio: *ratio },
        (CaseTag::CaseII { .. }, Some(r))
            if r.kind == VerdictKind::LikelyConstant && r.ratio.is_some() =>
        {
            Construction::ConstantRatio {
                ratio: r.ratio.unwrap_or_default(),
            }
        }
        _ => Construction::GenericRatio,
    };
    let ctx = AttemptContext {
        model: &model,
        virt: if trivial.is_empty() {
            None
        } else {
            Some(Virtualized::new(&model, &trivial)?)
        },
        trivial: &trivial,
        construction,
        n,
        field,
        seed: params.seed,
        case: &cls.case,
        digest: net.digest(),
    };

    let mut last = AttemptFailure::NotAttempted;
    let mut start = 0;
    while start < params.max_attempts {
        let end = (start + ATTEMPT_BATCH).min(params.max_attempts);
        let results: Vec<Result<CodeDesign, AttemptFailure>> = (start..end)
            .into_par_iter()
            .map(|t| ctx.attempt(t as u64))
            .collect();
        for r in results {
            match r {
                Ok(design) => return Ok(design),
                Err(fail) => last = fail,
            }
        }
        start = end;
    }
    Err(AlignError::Exhausted {
        attempts: params.max_attempts,
        last,
    })
}

struct AttemptContext<'a, 'n> {
    model: &'a NetworkModel<'n>,
    virt: Option<Virtualized<'a, NetworkModel<'n>>>,
    trivial: &'a [(usize, usize)],
    construction: Construction,
    n: usize,
    field: PrimeField,
    seed: u64,
    case: &'a CaseTag,
    digest: String,
}

impl AttemptContext<'_, '_> {
    fn attempt(&self, t: u64) -> Result<CodeDesign, AttemptFailure> {
        let f = self.field;
        let d = 2 * self.n + 1;
        let mut rng = SplitMix64::derive(self.seed, "attempt", t);
        let ext = SymbolExtension::random(self.n, f, self.model.num_vars(), &mut rng)
            .map_err(|e| AttemptFailure::RankFailure(e.to_string()))?;
        let virtual_values: Vec<VirtualBlock> = self
            .trivial
            .iter()
            .map(|&pair| VirtualBlock {
                pair,
                values: rng.elems(&f, d),
            })
            .collect();
        let real = build_blocks(self.model, &ext);
        let effective = match &self.virt {
            Some(v) => build_blocks(v, &ext.extended(&virtual_values)),
            None => real.clone(),
        };
        let built = match self.construction {
            Construction::GenericRatio => build_precoding_case1(&effective, self.n),
            Construction::ConstantRatio { ratio } => build_precoding_case2(
                &effective,
                self.n,
                ratio,
                derive_seed(self.seed, "theta", t),
            ),
        };
        let mut pre = built.map_err(|e| match e {
            AlignError::SingularBlock { i, j, k } => AttemptFailure::SingularBlock { i, j, k },
            other => AttemptFailure::RankFailure(other.to_string()),
        })?;
        pre.virtual_values = virtual_values;
        let report = verify_conditions(&real, &pre);
        if !report.all_hold() {
            return Err(AttemptFailure::Conditions(report));
        }
        let decoders =
            decode_matrices(&real, &pre).map_err(|e| AttemptFailure::RankFailure(e.to_string()))?;
        Ok(CodeDesign {
            network_digest: self.digest.clone(),
            n: self.n,
            field: f,
            seed: self.seed,
            attempt: t,
            case: self.case.clone(),
            extension: ext,
            precoding: pre,
            decoders,
        })
    }
}
