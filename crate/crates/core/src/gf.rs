//! Prime-field arithmetic and dense linear algebra over F_p.
//!
//! Elements are plain `u64` values in `[0, p)`. Products go through `u128`,
//! so any prime below 2^63 is supported. Matrices carry their field so that
//! rank, solve and inversion need no extra context.

use std::fmt;

use thiserror::Error;

/// A field element, always reduced into `[0, p)`.
pub type Elem = u64;

/// The default modulus, the Mersenne prime 2^31 - 1.
pub const DEFAULT_PRIME: u64 = 2_147_483_647;

const MAX_MODULUS: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("modulus {0} is not a prime in (2, 2^63)")]
    NotPrime(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value {value} is out of range for modulus {p}")]
    OutOfRange { value: u64, p: u64 },
}

/// Arithmetic context for F_p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    /// Validates `p` with a deterministic primality test.
    pub fn new(p: u64) -> Result<Self, GfError> {
        if p <= 2 || p >= MAX_MODULUS || !is_prime(p) {
            return Err(GfError::NotPrime(p));
        }
        Ok(PrimeField { p })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn reduce(&self, v: u64) -> Elem {
        v % self.p
    }

    /// Maps a signed integer to its residue.
    pub fn from_i64(&self, v: i64) -> Elem {
        (v as i128).rem_euclid(self.p as i128) as u64
    }

    pub fn check(&self, v: u64) -> Result<Elem, GfError> {
        if v < self.p {
            Ok(v)
        } else {
            Err(GfError::OutOfRange {
                value: v,
                p: self.p,
            })
        }
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(&self, a: Elem) -> Elem {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    pub fn pow(&self, base: Elem, mut exp: u64) -> Elem {
        let mut result = 1 % self.p;
        let mut b = base % self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                result = self.mul(result, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        result
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(&self, a: Elem) -> Result<Elem, GfError> {
        let a = a % self.p;
        if a == 0 {
            return Err(GfError::ZeroInverse);
        }
        let (mut r0, mut r1) = (self.p as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(t0.rem_euclid(self.p as i128) as u64)
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Square root by Tonelli-Shanks, if `a` is a quadratic residue.
    pub fn sqrt(&self, a: Elem) -> Option<Elem> {
        let p = self.p;
        let a = a % p;
        if a == 0 {
            return Some(0);
        }
        if self.pow(a, (p - 1) / 2) != 1 {
            return None;
        }
        if p % 4 == 3 {
            return Some(self.pow(a, (p + 1) / 4));
        }
        let mut q = p - 1;
        let mut s = 0u32;
        while q.is_multiple_of(2) {
            q /= 2;
            s += 1;
        }
        let mut z = 2;
        while self.pow(z, (p - 1) / 2) != p - 1 {
            z += 1;
        }
        let mut m = s;
        let mut c = self.pow(z, q);
        let mut t = self.pow(a, q);
        let mut r = self.pow(a, q.div_ceil(2));
        while t != 1 {
            let mut i = 0;
            let mut t2 = t;
            while t2 != 1 {
                t2 = self.mul(t2, t2);
                i += 1;
            }
            let b = self.pow(c, 1 << (m - i - 1));
            m = i;
            c = self.mul(b, b);
            t = self.mul(t, c);
            r = self.mul(r, b);
        }
        Some(r)
    }
}

impl Default for PrimeField {
    fn default() -> Self {
        PrimeField { p: DEFAULT_PRIME }
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.p)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Dense row-major matrix over a prime field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl FieldMatrix {
    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        FieldMatrix {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: PrimeField, dim: usize) -> Self {
        let mut m = Self::zeros(field, dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1;
        }
        m
    }

    pub fn diagonal(field: PrimeField, diag: &[Elem]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(field, dim, dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = d;
        }
        m
    }

    /// Builds a matrix from row-major data; every entry must already lie in `[0, p)`.
    pub fn from_vec(
        field: PrimeField,
        rows: usize,
        cols: usize,
        data: Vec<Elem>,
    ) -> Result<Self, GfError> {
        if data.len() != rows * cols {
            return Err(GfError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        for &v in &data {
            field.check(v)?;
        }
        Ok(FieldMatrix {
            field,
            rows,
            cols,
            data,
        })
    }

    pub fn from_rows(field: PrimeField, rows: &[Vec<Elem>]) -> Result<Self, GfError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(GfError::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(field, r, c, rows.concat())
    }

    pub fn from_columns(field: PrimeField, cols: &[Vec<Elem>]) -> Result<Self, GfError> {
        Ok(Self::from_rows(field, cols)?.transpose())
    }

    pub fn column_vector(field: PrimeField, v: &[Elem]) -> Result<Self, GfError> {
        Self::from_vec(field, v.len(), 1, v.to_vec())
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    /// Sets one entry, reducing it modulo p.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = self.field.reduce(v);
    }

    pub fn row(&self, r: usize) -> &[Elem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Elem> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<Elem>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[Elem] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn mul(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if self.cols != rhs.rows {
            return Err(GfError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let f = self.field;
        let p = f.modulus() as u128;
        let mut out = Self::zeros(f, self.rows, rhs.cols);
        for r in 0..self.rows {
            for c in 0..rhs.cols {
                let mut acc: u128 = 0;
                for k in 0..self.cols {
                    acc += self.get(r, k) as u128 * rhs.get(k, c) as u128;
                    // keep headroom for the next product
                    if acc >= 1 << 126 {
                        acc %= p;
                    }
                }
                out.data[r * rhs.cols + c] = (acc % p) as u64;
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Elem]) -> Result<Vec<Elem>, GfError> {
        let col = Self::from_vec(
            self.field,
            v.len(),
            1,
            v.iter().map(|&x| self.field.reduce(x)).collect(),
        )?;
        Ok(self.mul(&col)?.data)
    }

    pub fn add(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(GfError::DimensionMismatch("add".into()));
        }
        let f = self.field;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f.add(a, b))
            .collect();
        Ok(FieldMatrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, k: Elem) -> FieldMatrix {
        let f = self.field;
        let data = self.data.iter().map(|&a| f.mul(a, k)).collect();
        FieldMatrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Multiplies row `r` by `diag[r]`, i.e. computes `diag(d) * self`.
    pub fn scale_rows(&self, diag: &[Elem]) -> Result<FieldMatrix, GfError> {
        if diag.len() != self.rows {
            return Err(GfError::DimensionMismatch("row scaling".into()));
        }
        let f = self.field;
        let mut out = self.clone();
        for (r, &d) in diag.iter().enumerate() {
            for v in &mut out.data[r * self.cols..(r + 1) * self.cols] {
                *v = f.mul(*v, d);
            }
        }
        Ok(out)
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if self.rows != rhs.rows {
            return Err(GfError::DimensionMismatch(
                "hstack row counts differ".into(),
            ));
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(rhs.row(r));
        }
        Ok(FieldMatrix {
            field: self.field,
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Keeps columns `range`.
    pub fn columns(&self, range: std::ops::Range<usize>) -> FieldMatrix {
        let cols = range.len();
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[range.clone()]);
        }
        FieldMatrix {
            field: self.field,
            rows: self.rows,
            cols,
            data,
        }
    }

    /// In-place reduction to row echelon form. Pivots are the first nonzero
    /// entry at or below the current row. Returns the pivot columns.
    fn echelonize(&mut self) -> Vec<usize> {
        let f = self.field;
        let cols = self.cols;
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..cols {
            if row == self.rows {
                break;
            }
            let Some(piv) = (row..self.rows).find(|&r| self.data[r * cols + col] != 0) else {
                continue;
            };
            if piv != row {
                for c in 0..cols {
                    self.data.swap(piv * cols + c, row * cols + c);
                }
            }
            let inv = f
                .inv(self.data[row * cols + col])
                .expect("pivot is nonzero");
            for c in col..cols {
                self.data[row * cols + c] = f.mul(self.data[row * cols + c], inv);
            }
            for r in row + 1..self.rows {
                let factor = self.data[r * cols + col];
                if factor == 0 {
                    continue;
                }
                for c in col..cols {
                    let sub = f.mul(factor, self.data[row * cols + c]);
                    self.data[r * cols + c] = f.sub(self.data[r * cols + c], sub);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().echelonize().len()
    }

    pub fn has_full_column_rank(&self) -> bool {
        self.rank() == self.cols
    }

    /// Solves `self * x = y` for square nonsingular `self`; `y` may have several columns.
    pub fn solve(&self, y: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if !self.is_square() {
            return Err(GfError::DimensionMismatch(
                "solve needs a square matrix".into(),
            ));
        }
        if y.rows != self.rows {
            return Err(GfError::DimensionMismatch("right-hand side rows".into()));
        }
        let n = self.rows;
        let mut aug = self.hstack(y)?;
        let pivots = aug.echelonize();
        if pivots.len() < n || pivots.iter().enumerate().any(|(i, &c)| i != c) {
            return Err(GfError::Singular);
        }
        // back substitution on the unit upper-triangular left block
        let f = self.field;
        let cols = aug.cols;
        for col in (0..n).rev() {
            for r in 0..col {
                let factor = aug.data[r * cols + col];
                if factor == 0 {
                    continue;
                }
                for c in col..cols {
                    let sub = f.mul(factor, aug.data[col * cols + c]);
                    aug.data[r * cols + c] = f.sub(aug.data[r * cols + c], sub);
                }
            }
        }
        Ok(aug.columns(n..cols))
    }

    pub fn inverse(&self) -> Result<FieldMatrix, GfError> {
        self.solve(&FieldMatrix::identity(self.field, self.rows))
    }

    /// Determinant by elimination.
    pub fn determinant(&self) -> Result<Elem, GfError> {
        if !self.is_square() {
            return Err(GfError::DimensionMismatch(
                "determinant needs a square matrix".into(),
            ));
        }
        let f = self.field;
        let n = self.rows;
        let mut m = self.data.clone();
        let mut det = 1;
        for col in 0..n {
            let Some(piv) = (col..n).find(|&r| m[r * n + col] != 0) else {
                return Ok(0);
            };
            if piv != col {
                for c in 0..n {
                    m.swap(piv * n + c, col * n + c);
                }
                det = f.neg(det);
            }
            let pv = m[col * n + col];
            det = f.mul(det, pv);
            let inv = f.inv(pv)?;
            for r in col + 1..n {
                let factor = f.mul(m[r * n + col], inv);
                if factor == 0 {
                    continue;
                }
                for c in col..n {
                    m[r * n + c] = f.sub(m[r * n + c], f.mul(factor, m[col * n + c]));
                }
            }
        }
        Ok(det)
    }
}

/// Inverse of a single element; see [`PrimeField::inv`].
pub fn fp_inv(a: Elem, ctx: &PrimeField) -> Result<Elem, GfError> {
    ctx.inv(a)
}

/// Rank over F_p; see [`FieldMatrix::rank`].
pub fn mat_rank(m: &FieldMatrix) -> usize {
    m.rank()
}

/// Solves `a * x = y`; see [`FieldMatrix::solve`].
pub fn mat_solve(a: &FieldMatrix, y: &FieldMatrix) -> Result<FieldMatrix, GfError> {
    a.solve(y)
}
