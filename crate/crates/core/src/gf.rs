//! Exact arithmetic in small finite fields.
//!
//! Two families are supported: the binary extension field GF(16), reduced by
//! the fixed polynomial x^4 + x + 1, and prime fields GF(p) for any prime
//! p < 256. Elements are stored as plain `u8` values in `[0, q)`; matrices and
//! vectors carry their [`FieldSpec`] so that mixing fields is caught at the
//! API boundary instead of silently producing garbage.
//!
//! The image pipeline only ever binds to GF(16). GF(17) and other prime
//! fields exist so that the cipher algebra can be exercised in odd
//! characteristic, where addition and subtraction differ.

use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

/// Reduction polynomial x^4 + x + 1 as a bit mask.
pub const GF16_POLY: u8 = 0b1_0011;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("operands belong to different fields ({0} vs {1})")]
    FieldMismatch(FieldSpec, FieldSpec),
    #[error("{value} is not an element of {field}")]
    OutOfRange { value: u8, field: FieldSpec },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },
    #[error("matrix is singular")]
    Singular,
    #[error("{0} is not a prime modulus")]
    NotPrime(u8),
}

/// Which finite field an element, vector or matrix lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldSpec {
    /// GF(2^4) reduced by [`GF16_POLY`].
    Gf16,
    /// GF(p) for the contained prime.
    Prime(u8),
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.order())
    }
}

impl FieldSpec {
    pub fn gf16() -> Self {
        FieldSpec::Gf16
    }

    /// Prime field GF(p). Fails unless `p` is prime.
    pub fn prime(p: u8) -> Result<Self, GfError> {
        if is_prime(p) {
            Ok(FieldSpec::Prime(p))
        } else {
            Err(GfError::NotPrime(p))
        }
    }

    /// Number of elements q.
    pub const fn order(self) -> usize {
        match self {
            FieldSpec::Gf16 => 16,
            FieldSpec::Prime(p) => p as usize,
        }
    }

    pub fn reduction_poly(self) -> Option<u8> {
        match self {
            FieldSpec::Gf16 => Some(GF16_POLY),
            FieldSpec::Prime(_) => None,
        }
    }

    pub fn modulus(self) -> Option<u8> {
        match self {
            FieldSpec::Gf16 => None,
            FieldSpec::Prime(p) => Some(p),
        }
    }

    #[inline]
    pub fn contains(self, v: u8) -> bool {
        (v as usize) < self.order()
    }

    pub fn element(self, value: u8) -> Result<FieldElement, GfError> {
        self.check(value)?;
        Ok(FieldElement { field: self, value })
    }

    fn check(self, value: u8) -> Result<(), GfError> {
        if self.contains(value) {
            Ok(())
        } else {
            Err(GfError::OutOfRange { value, field: self })
        }
    }

    #[inline]
    pub fn add(self, a: u8, b: u8) -> u8 {
        match self {
            FieldSpec::Gf16 => a ^ b,
            FieldSpec::Prime(p) => ((a as u16 + b as u16) % p as u16) as u8,
        }
    }

    #[inline]
    pub fn neg(self, a: u8) -> u8 {
        match self {
            FieldSpec::Gf16 => a,
            FieldSpec::Prime(p) => {
                if a == 0 {
                    0
                } else {
                    p - a
                }
            }
        }
    }

    #[inline]
    pub fn sub(self, a: u8, b: u8) -> u8 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(self, a: u8, b: u8) -> u8 {
        match self {
            FieldSpec::Gf16 => gf16_tables().mul[a as usize & 0xf][b as usize & 0xf],
            FieldSpec::Prime(p) => ((a as u16 * b as u16) % p as u16) as u8,
        }
    }

    pub fn inv(self, a: u8) -> Result<u8, GfError> {
        self.check(a)?;
        if a == 0 {
            return Err(GfError::ZeroInverse);
        }
        Ok(match self {
            FieldSpec::Gf16 => gf16_tables().inv[a as usize],
            FieldSpec::Prime(p) => prime_inverse(a, p),
        })
    }
}

/// A single field element bound to its field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    field: FieldSpec,
    value: u8,
}

impl FieldElement {
    pub fn value(self) -> u8 {
        self.value
    }

    pub fn field(self) -> FieldSpec {
        self.field
    }

    fn same_field(self, other: FieldElement) -> Result<FieldSpec, GfError> {
        if self.field == other.field {
            Ok(self.field)
        } else {
            Err(GfError::FieldMismatch(self.field, other.field))
        }
    }

    pub fn try_add(self, rhs: FieldElement) -> Result<FieldElement, GfError> {
        let f = self.same_field(rhs)?;
        Ok(FieldElement { field: f, value: f.add(self.value, rhs.value) })
    }

    pub fn try_sub(self, rhs: FieldElement) -> Result<FieldElement, GfError> {
        let f = self.same_field(rhs)?;
        Ok(FieldElement { field: f, value: f.sub(self.value, rhs.value) })
    }

    pub fn try_mul(self, rhs: FieldElement) -> Result<FieldElement, GfError> {
        let f = self.same_field(rhs)?;
        Ok(FieldElement { field: f, value: f.mul(self.value, rhs.value) })
    }

    pub fn inverse(self) -> Result<FieldElement, GfError> {
        Ok(FieldElement { field: self.field, value: self.field.inv(self.value)? })
    }
}

struct Gf16Tables {
    mul: [[u8; 16]; 16],
    inv: [u8; 16],
}

fn gf16_tables() -> &'static Gf16Tables {
    static TABLES: OnceLock<Gf16Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        assert!(is_irreducible_quartic(GF16_POLY), "GF(16) reduction polynomial must be irreducible");
        let mut mul = [[0u8; 16]; 16];
        let mut inv = [0u8; 16];
        for a in 0..16u8 {
            for b in 0..16u8 {
                let p = clmul_reduce(a, b, GF16_POLY);
                mul[a as usize][b as usize] = p;
                if p == 1 {
                    inv[a as usize] = b;
                }
            }
        }
        Gf16Tables { mul, inv }
    })
}

/// Carry-less multiply of two 4-bit polynomials, reduced by `poly` (degree 4).
fn clmul_reduce(a: u8, b: u8, poly: u8) -> u8 {
    let mut acc: u8 = 0;
    let mut a = a & 0xf;
    let mut b = b & 0xf;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & 0x10 != 0 {
            a ^= poly;
        }
    }
    acc
}

fn gf2_degree(p: u16) -> i32 {
    15 - p.leading_zeros() as i32
}

fn gf2_rem(mut a: u16, b: u16) -> u16 {
    let db = gf2_degree(b);
    while a != 0 && gf2_degree(a) >= db {
        a ^= b << (gf2_degree(a) - db);
    }
    a
}

/// True when `poly` has degree exactly 4 and no factor of degree 1 or 2 over GF(2).
pub fn is_irreducible_quartic(poly: u8) -> bool {
    let poly = poly as u16;
    if gf2_degree(poly) != 4 {
        return false;
    }
    // every polynomial of degree 1 or 2: 0b10..=0b111
    (0b10u16..=0b111).all(|d| gf2_rem(poly, d) != 0)
}

fn is_prime(p: u8) -> bool {
    p >= 2 && (2..p).take_while(|&d| (d as u16) * (d as u16) <= p as u16).all(|d| !p.is_multiple_of(d))
}

fn prime_inverse(a: u8, p: u8) -> u8 {
    // extended Euclid on small integers
    let (mut r0, mut r1) = (p as i16, a as i16);
    let (mut t0, mut t1) = (0i16, 1i16);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    t0.rem_euclid(p as i16) as u8
}

/// Thread-local field operation counter used by the throughput benchmark.
///
/// Counting happens at the granularity of vector/matrix kernels; scalar
/// helpers on [`FieldSpec`] are not counted.
pub mod opcount {
    use std::cell::Cell;

    thread_local! {
        static ENABLED: Cell<bool> = const { Cell::new(false) };
        static COUNT: Cell<u64> = const { Cell::new(0) };
    }

    #[inline]
    pub(crate) fn record(n: u64) {
        ENABLED.with(|e| {
            if e.get() {
                COUNT.with(|c| c.set(c.get() + n));
            }
        });
    }

    /// Runs `f` with counting enabled and returns its result together with
    /// the number of field additions and multiplications it performed.
    pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
        let was_enabled = ENABLED.with(|e| e.replace(true));
        let before = COUNT.with(|c| c.replace(0));
        let out = f();
        let ops = COUNT.with(|c| c.replace(before));
        ENABLED.with(|e| e.set(was_enabled));
        if was_enabled {
            COUNT.with(|c| c.set(c.get() + ops));
        }
        (out, ops)
    }
}

/// `dst[i] += src[i]`.
#[inline]
pub(crate) fn add_assign(field: FieldSpec, dst: &mut [u8], src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    match field {
        FieldSpec::Gf16 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => dst.iter_mut().zip(src).for_each(|(d, s)| *d = field.add(*d, *s)),
    }
    opcount::record(dst.len() as u64);
}

/// `dst[i] -= src[i]`.
#[inline]
pub(crate) fn sub_assign(field: FieldSpec, dst: &mut [u8], src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    match field {
        FieldSpec::Gf16 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => dst.iter_mut().zip(src).for_each(|(d, s)| *d = field.sub(*d, *s)),
    }
    opcount::record(dst.len() as u64);
}

/// `dst[i] += k * src[i]`.
#[inline]
pub(crate) fn scale_add_assign(field: FieldSpec, dst: &mut [u8], k: u8, src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    dst.iter_mut().zip(src).for_each(|(d, s)| *d = field.add(*d, field.mul(k, *s)));
    opcount::record(2 * dst.len() as u64);
}

/// A column vector over a finite field.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldVector {
    field: FieldSpec,
    data: Vec<u8>,
}

impl FieldVector {
    pub fn zeros(field: FieldSpec, len: usize) -> Self {
        FieldVector { field, data: vec![0; len] }
    }

    pub fn from_vec(field: FieldSpec, data: Vec<u8>) -> Result<Self, GfError> {
        data.iter().try_for_each(|&v| field.check(v))?;
        Ok(FieldVector { field, data })
    }

    pub(crate) fn from_vec_unchecked(field: FieldSpec, data: Vec<u8>) -> Self {
        debug_assert!(data.iter().all(|&v| field.contains(v)));
        FieldVector { field, data }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.data.get(i).copied()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    fn compatible(&self, other: &FieldVector) -> Result<(), GfError> {
        if self.field != other.field {
            return Err(GfError::FieldMismatch(self.field, other.field));
        }
        if self.len() != other.len() {
            return Err(GfError::Dimension {
                expected: format!("length {}", self.len()),
                found: format!("length {}", other.len()),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &FieldVector) -> Result<FieldVector, GfError> {
        self.compatible(other)?;
        let mut out = self.clone();
        add_assign(self.field, &mut out.data, &other.data);
        Ok(out)
    }

    pub fn try_sub(&self, other: &FieldVector) -> Result<FieldVector, GfError> {
        self.compatible(other)?;
        let mut out = self.clone();
        sub_assign(self.field, &mut out.data, &other.data);
        Ok(out)
    }
}

/// A dense row-major matrix over a finite field.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldMatrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl FieldMatrix {
    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        FieldMatrix { field, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Square matrix with ones on the superdiagonal. Nilpotent with index `n`.
    pub fn shift(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n.saturating_sub(1) {
            m.data[i * n + i + 1] = 1;
        }
        m
    }

    pub fn from_vec(field: FieldSpec, rows: usize, cols: usize, data: Vec<u8>) -> Result<Self, GfError> {
        if data.len() != rows * cols {
            return Err(GfError::Dimension {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        data.iter().try_for_each(|&v| field.check(v))?;
        Ok(FieldMatrix { field, rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[u8]>>(field: FieldSpec, rows: &[R]) -> Result<Self, GfError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(GfError::Dimension {
                    expected: format!("{cols} columns"),
                    found: format!("{} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(field, rows.len(), cols, data)
    }

    pub fn field(&self) -> FieldSpec {
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

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: u8) -> Result<(), GfError> {
        self.field.check(value)?;
        self.data[r * self.cols + c] = value;
        Ok(())
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> FieldVector {
        FieldVector {
            field: self.field,
            data: (0..self.rows).map(|r| self.get(r, c)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn mul_vec(&self, v: &FieldVector) -> Result<FieldVector, GfError> {
        if self.field != v.field {
            return Err(GfError::FieldMismatch(self.field, v.field));
        }
        if self.cols != v.len() {
            return Err(GfError::Dimension {
                expected: format!("vector of length {}", self.cols),
                found: format!("length {}", v.len()),
            });
        }
        let mut out = vec![0u8; self.rows];
        self.mul_vec_into(&v.data, &mut out);
        Ok(FieldVector { field: self.field, data: out })
    }

    /// `out = self * v` without dimension checks. Hot path of the cipher.
    #[inline]
    pub(crate) fn mul_vec_into(&self, v: &[u8], out: &mut [u8]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        match self.field {
            FieldSpec::Gf16 => {
                let t = &gf16_tables().mul;
                for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
                    let mut acc = 0u8;
                    for (&a, &x) in row.iter().zip(v) {
                        acc ^= t[a as usize][x as usize];
                    }
                    *o = acc;
                }
            }
            FieldSpec::Prime(p) => {
                for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
                    let acc: u32 = row.iter().zip(v).map(|(&a, &x)| a as u32 * x as u32).sum();
                    *o = (acc % p as u32) as u8;
                }
            }
        }
        if self.cols == 0 {
            out.fill(0);
        }
        let (r, c) = (self.rows as u64, self.cols as u64);
        opcount::record(r * c + r * c.saturating_sub(1));
    }

    fn same_shape(&self, other: &FieldMatrix) -> Result<(), GfError> {
        if self.field != other.field {
            return Err(GfError::FieldMismatch(self.field, other.field));
        }
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(GfError::Dimension {
                expected: format!("{}x{}", self.rows, self.cols),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        add_assign(self.field, &mut out.data, &other.data);
        Ok(out)
    }

    pub fn try_sub(&self, other: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        sub_assign(self.field, &mut out.data, &other.data);
        Ok(out)
    }

    pub fn try_mul(&self, other: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if self.field != other.field {
            return Err(GfError::FieldMismatch(self.field, other.field));
        }
        if self.cols != other.rows {
            return Err(GfError::Dimension {
                expected: format!("{} rows", self.cols),
                found: format!("{} rows", other.rows),
            });
        }
        let f = self.field;
        let mut out = Self::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0u8;
                for k in 0..self.cols {
                    acc = f.add(acc, f.mul(self.get(i, k), other.get(k, j)));
                }
                out.data[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }

    /// Integer power of a square matrix; `pow(0)` is the identity.
    pub fn pow(&self, exp: u32) -> Result<FieldMatrix, GfError> {
        self.require_square()?;
        let mut acc = Self::identity(self.field, self.rows);
        for _ in 0..exp {
            acc = acc.try_mul(self)?;
        }
        Ok(acc)
    }

    /// Smallest `n >= 1` with `self^n = 0`, or `None` if the matrix is not nilpotent.
    pub fn nilpotency_index(&self) -> Option<usize> {
        if !self.is_square() {
            return None;
        }
        let mut p = self.clone();
        for n in 1..=self.rows.max(1) {
            if p.is_zero() {
                return Some(n);
            }
            p = p.try_mul(self).ok()?;
        }
        // a nilpotent n x n matrix always has index <= n
        None
    }

    fn require_square(&self) -> Result<(), GfError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(GfError::Dimension {
                expected: "square matrix".into(),
                found: format!("{}x{}", self.rows, self.cols),
            })
        }
    }

    /// Inverse by Gauss-Jordan elimination.
    pub fn inverse(&self) -> Result<FieldMatrix, GfError> {
        self.require_square()?;
        let n = self.rows;
        let f = self.field;
        let mut a = self.clone();
        let mut inv = Self::identity(f, n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| a.get(r, col) != 0).ok_or(GfError::Singular)?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let k = f.inv(a.get(col, col))?;
            a.scale_row(col, k);
            inv.scale_row(col, k);
            for r in 0..n {
                let factor = a.get(r, col);
                if r != col && factor != 0 {
                    a.eliminate(r, col, factor);
                    inv.eliminate(r, col, factor);
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    fn scale_row(&mut self, r: usize, k: u8) {
        let f = self.field;
        for v in &mut self.data[r * self.cols..(r + 1) * self.cols] {
            *v = f.mul(*v, k);
        }
    }

    /// row[target] -= factor * row[source]
    fn eliminate(&mut self, target: usize, source: usize, factor: u8) {
        let f = self.field;
        for c in 0..self.cols {
            let s = self.data[source * self.cols + c];
            let t = &mut self.data[target * self.cols + c];
            *t = f.sub(*t, f.mul(factor, s));
        }
    }
}
