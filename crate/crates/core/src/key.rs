//! Secret key layout, parameter derivation and IV handling.
//!
//! Bit layout, MSB-first:
//!
//! ```text
//! flag(1) | r0(prec) | l0(prec) | a(4) | n × [ i(k) | j(k) | e(4) ]
//! ```
//!
//! where `flag = 0` selects `prec = 16`, `flag = 1` selects `prec = 32`, and
//! `k = ceil(log2 ℓ)`. For `ℓ = 8` a 16-bit key with 6 triples is 97 bits and
//! a 32-bit key with 5 triples is 119 bits.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::chaos::{generate_window, ChaosError, ChaoticState};
use crate::gf::{FieldMatrix, FieldSpec, FieldVector};
use crate::kernel::{CipherError, CipherParams, CipherState, Matrices, Mode};
use crate::permutation::KeyPermutation;

pub const KEY_FILE_MAGIC: &str = "plcie-key";
pub const MAX_RETRIES: u64 = 64;
/// Redraws of `F` before giving up; an odd seed's orbit holds at least 256
/// distinct 8x8 draws at 16-bit precision.
pub const MAX_F_DRAWS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("key of {bits} bits does not match the layout for ell={ell}")]
    Length { bits: usize, ell: usize },
    #[error("key has {n} triples; at most {max} are allowed for ell={ell}")]
    TooManyTriples { n: usize, max: usize, ell: usize },
    #[error("weak key: {0}")]
    WeakKey(&'static str),
    #[error("triple position ({i}, {j}) is outside a {ell}x{ell} matrix")]
    TriplePosition { i: u8, j: u8, ell: usize },
    #[error("value {0} does not fit in 4 bits")]
    Nibble(u8),
    #[error("precision must be 16 or 32, got {0}")]
    Precision(u32),
    #[error("ell must be between 1 and 16, got {0}")]
    Ell(usize),
    #[error("value {value} does not fit in {prec} bits")]
    Width { value: u64, prec: u32 },
    #[error("no duplicate-free orbit window after {0} attempts")]
    RetryExhausted(u64),
    #[error("no invertible F within {0} draws")]
    SingularF(usize),
    #[error("malformed key file: {0}")]
    KeyFile(String),
    #[error("IV must have {expected} symbols, got {found}")]
    IvLength { expected: usize, found: usize },
    #[error("IV symbol {0} is not a field element")]
    IvSymbol(u8),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// One sparse entry `E[i][j] = e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub i: u8,
    pub j: u8,
    pub e: u8,
}

/// Parsed secret key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyMaterial {
    prec: u32,
    r0: u64,
    l0: u64,
    a: u8,
    triples: Vec<Triple>,
}

fn index_bits(ell: usize) -> usize {
    ell.next_power_of_two().trailing_zeros() as usize
}

fn triple_bits(ell: usize) -> usize {
    2 * index_bits(ell) + 4
}

/// Largest admissible triple count: `n < ℓ²/2`.
pub fn max_triples(ell: usize) -> usize {
    (ell * ell).div_ceil(2).saturating_sub(1)
}

fn check_ell(ell: usize) -> Result<(), KeyError> {
    if (1..=16).contains(&ell) {
        Ok(())
    } else {
        Err(KeyError::Ell(ell))
    }
}

impl KeyMaterial {
    pub fn new(prec: u32, r0: u64, l0: u64, a: u8, triples: Vec<Triple>, ell: usize) -> Result<Self, KeyError> {
        check_ell(ell)?;
        if prec != 16 && prec != 32 {
            return Err(KeyError::Precision(prec));
        }
        for v in [r0, l0] {
            if v >> prec != 0 {
                return Err(KeyError::Width { value: v, prec });
            }
        }
        if r0 == 0 {
            return Err(KeyError::WeakKey("r0 = 0 is a fixed point of the map"));
        }
        if l0 == 0 {
            return Err(KeyError::WeakKey("l0 = 0 skips no transient iterates"));
        }
        if a > 15 {
            return Err(KeyError::Nibble(a));
        }
        let max = max_triples(ell);
        if triples.len() > max {
            return Err(KeyError::TooManyTriples { n: triples.len(), max, ell });
        }
        for t in &triples {
            if t.i as usize >= ell || t.j as usize >= ell {
                return Err(KeyError::TriplePosition { i: t.i, j: t.j, ell });
            }
            if t.e > 15 {
                return Err(KeyError::Nibble(t.e));
            }
        }
        Ok(KeyMaterial { prec, r0, l0, a, triples })
    }

    /// A random key with `n` triples at distinct positions, each differing
    /// from the default entry `a`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, prec: u32, n: usize, ell: usize) -> Result<Self, KeyError> {
        check_ell(ell)?;
        if prec != 16 && prec != 32 {
            return Err(KeyError::Precision(prec));
        }
        let max = max_triples(ell);
        if n > max {
            return Err(KeyError::TooManyTriples { n, max, ell });
        }
        let top = 1u64 << prec;
        let r0 = rng.random_range(1..top);
        let l0 = rng.random_range(1..top);
        let a = rng.random_range(0..16u8);
        let triples = index::sample(rng, ell * ell, n)
            .into_iter()
            .map(|pos| {
                let e = (a + rng.random_range(1..16u8)) % 16;
                Triple { i: (pos / ell) as u8, j: (pos % ell) as u8, e }
            })
            .collect();
        Self::new(prec, r0, l0, a, triples, ell)
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn r0(&self) -> u64 {
        self.r0
    }

    pub fn l0(&self) -> u64 {
        self.l0
    }

    pub fn a(&self) -> u8 {
        self.a
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn bit_len(&self, ell: usize) -> usize {
        1 + 2 * self.prec as usize + 4 + self.triples.len() * triple_bits(ell)
    }

    /// Serializes to the MSB-first bit layout.
    pub fn to_bits(&self, ell: usize) -> Vec<bool> {
        let mut bits = Vec::with_capacity(self.bit_len(ell));
        let mut push = |v: u64, width: usize| bits.extend((0..width).rev().map(|b| v >> b & 1 == 1));
        push((self.prec == 32) as u64, 1);
        push(self.r0, self.prec as usize);
        push(self.l0, self.prec as usize);
        push(self.a as u64, 4);
        let k = index_bits(ell);
        for t in &self.triples {
            push(t.i as u64, k);
            push(t.j as u64, k);
            push(t.e as u64, 4);
        }
        bits
    }

    /// Parses the MSB-first bit layout; the triple count is inferred from the length.
    pub fn from_bits(bits: &[bool], ell: usize) -> Result<Self, KeyError> {
        check_ell(ell)?;
        let len_err = KeyError::Length { bits: bits.len(), ell };
        let prec = match bits.first() {
            Some(false) => 16,
            Some(true) => 32,
            None => return Err(len_err),
        };
        let fixed = 1 + 2 * prec + 4;
        let tw = triple_bits(ell);
        if bits.len() < fixed || !(bits.len() - fixed).is_multiple_of(tw) {
            return Err(len_err);
        }
        let mut pos = 1;
        let mut take = |width: usize| {
            let v = bits[pos..pos + width].iter().fold(0u64, |acc, &b| acc << 1 | b as u64);
            pos += width;
            v
        };
        let r0 = take(prec);
        let l0 = take(prec);
        let a = take(4) as u8;
        let n = (bits.len() - fixed) / tw;
        let max = max_triples(ell);
        if n > max {
            return Err(KeyError::TooManyTriples { n, max, ell });
        }
        let k = index_bits(ell);
        let triples = (0..n)
            .map(|_| Triple { i: take(k) as u8, j: take(k) as u8, e: take(4) as u8 })
            .collect();
        Self::new(prec as u32, r0, l0, a, triples, ell)
    }

    /// Key file text: a header line and the key bits as lowercase hex,
    /// zero-padded at the end to a whole number of nibbles.
    pub fn to_key_file(&self, ell: usize, field: FieldSpec) -> String {
        let mut out = format!("{KEY_FILE_MAGIC} v1 ell={ell} field={}\n", field_tag(field));
        for chunk in self.to_bits(ell).chunks(4) {
            let nib = (0..4).fold(0u8, |acc, b| acc << 1 | chunk.get(b).copied().unwrap_or(false) as u8);
            write!(out, "{nib:x}").expect("writing to a String");
        }
        out.push('\n');
        out
    }

    /// Parses a key file. The bit length is recovered as the only length in
    /// the last hex digit's range that fits the layout (triples are at least
    /// 4 bits wide, so there is exactly one).
    pub fn from_key_file(text: &str) -> Result<(Self, usize, FieldSpec), KeyError> {
        let bad = |msg: &str| KeyError::KeyFile(msg.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(KEY_FILE_MAGIC) || fields.next() != Some("v1") {
            return Err(bad("expected header 'plcie-key v1'"));
        }
        let (mut ell, mut field) = (None, None);
        for kv in fields {
            match kv.split_once('=') {
                Some(("ell", v)) => ell = Some(v.parse::<usize>().map_err(|_| bad("ell is not a number"))?),
                Some(("field", v)) => field = Some(parse_field_tag(v).ok_or_else(|| bad("unknown field"))?),
                _ => return Err(bad("unexpected header entry")),
            }
        }
        let ell = ell.ok_or_else(|| bad("header lacks ell"))?;
        let field = field.ok_or_else(|| bad("header lacks field"))?;
        check_ell(ell)?;
        let body: String = lines.collect();
        let mut bits = Vec::with_capacity(body.len() * 4);
        for ch in body.chars() {
            let nib = ch.to_digit(16).filter(|_| !ch.is_ascii_uppercase()).ok_or_else(|| bad("body is not lowercase hex"))?;
            bits.extend((0..4).rev().map(|b| nib >> b & 1 == 1));
        }
        let prec = match bits.first() {
            Some(false) => 16,
            Some(true) => 32,
            None => return Err(bad("empty key body")),
        };
        let fixed = 1 + 2 * prec + 4;
        let tw = triple_bits(ell);
        let len = (bits.len().saturating_sub(3)..=bits.len())
            .find(|&l| l >= fixed && (l - fixed) % tw == 0)
            .ok_or(KeyError::Length { bits: bits.len(), ell })?;
        if bits[len..].iter().any(|&b| b) {
            return Err(bad("nonzero padding bits"));
        }
        Ok((Self::from_bits(&bits[..len], ell)?, ell, field))
    }

    /// The secret matrix `E`: every entry `a`, then the triples in order.
    pub fn e_matrix(&self, ell: usize, field: FieldSpec) -> Result<FieldMatrix, KeyError> {
        let a = self.a % field.order() as u8;
        let mut e = FieldMatrix::from_vec(field, ell, ell, vec![a; ell * ell]).map_err(CipherError::from)?;
        for t in &self.triples {
            e.set(t.i as usize, t.j as usize, t.e % field.order() as u8).map_err(CipherError::from)?;
        }
        Ok(e)
    }
}

pub fn field_tag(field: FieldSpec) -> String {
    format!("gf{}", field.order())
}

pub fn parse_field_tag(tag: &str) -> Option<FieldSpec> {
    match tag {
        "gf16" => Some(FieldSpec::Gf16),
        _ => FieldSpec::prime(tag.strip_prefix("gf")?.parse().ok()?).ok(),
    }
}

/// Fills matrices from successive orbit values; entry = floor(q · x).
struct EntryStream {
    state: ChaoticState,
    q: u64,
}

impl EntryStream {
    fn next_entry(&mut self) -> u8 {
        self.state = self.state.step();
        ((self.state.value() * self.q) >> self.state.prec()) as u8
    }

    fn matrix(&mut self, field: FieldSpec, ell: usize) -> FieldMatrix {
        let data = (0..ell * ell).map(|_| self.next_entry()).collect();
        FieldMatrix::from_vec(field, ell, ell, data).expect("entries below q")
    }
}

/// Builds the key permutation, retrying with perturbed seeds on repeated
/// window values. Returns the permutation and the orbit point after the window.
pub fn derive_permutation(km: &KeyMaterial, q: usize) -> Result<(KeyPermutation, ChaoticState), KeyError> {
    for attempt in 0..MAX_RETRIES {
        // odd seeds have the full period 2^(prec-2)
        let seed = (km.r0 ^ attempt) | 1;
        let seed = ChaoticState::new(seed, km.prec).expect("seed nonzero and in range");
        match generate_window(seed, km.l0, q) {
            Ok(w) => {
                let perm = KeyPermutation::from_window(&w).expect("window is duplicate-free");
                return Ok((perm, w.last_state().expect("q >= 1")));
            }
            Err(ChaosError::RetryNeeded { .. }) => continue,
            Err(e) => unreachable!("window generation failed: {e}"),
        }
    }
    Err(KeyError::RetryExhausted(MAX_RETRIES))
}

/// Derives the full parameter set from a key.
///
/// `B`, `W` and then `F` (redrawn until invertible) are read from the orbit
/// continuing past the permutation window; `D` is the superdiagonal shift and
/// `A = E F⁻¹ B`. Synchronous mode sets `W = E = 0` but keeps `A` keyed.
pub fn derive_params(km: &KeyMaterial, ell: usize, field: FieldSpec, mode: Mode) -> Result<CipherParams, KeyError> {
    check_ell(ell)?;
    let (perm, after) = derive_permutation(km, field.order())?;
    let mut stream = EntryStream { state: after, q: field.order() as u64 };
    let b = stream.matrix(field, ell);
    let w = stream.matrix(field, ell);
    let (f, f_inv) = (0..MAX_F_DRAWS)
        .find_map(|_| {
            let f = stream.matrix(field, ell);
            f.inverse().ok().map(|inv| (f, inv))
        })
        .ok_or(KeyError::SingularF(MAX_F_DRAWS))?;
    let e = km.e_matrix(ell, field)?;
    let a = e.try_mul(&f_inv).and_then(|m| m.try_mul(&b)).map_err(CipherError::from)?;
    let d = FieldMatrix::shift(field, ell);
    let m = match mode {
        Mode::SelfSynchronous => Matrices { a, b, d, e, f, w },
        Mode::Synchronous => {
            let zero = FieldMatrix::zeros(field, ell, ell);
            Matrices { a, b, d, e: zero.clone(), f, w: zero }
        }
    };
    Ok(CipherParams::new(field, perm, m, 4 * ell, mode)?)
}

/// Public initial value: `2ℓ` field symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InitVector {
    field: FieldSpec,
    words: Vec<u8>,
}

impl InitVector {
    pub fn new(field: FieldSpec, words: Vec<u8>, ell: usize) -> Result<Self, KeyError> {
        if words.len() != 2 * ell {
            return Err(KeyError::IvLength { expected: 2 * ell, found: words.len() });
        }
        if let Some(&bad) = words.iter().find(|&&w| !field.contains(w)) {
            return Err(KeyError::IvSymbol(bad));
        }
        Ok(InitVector { field, words })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, ell: usize) -> Self {
        let q = field.order() as u8;
        InitVector { field, words: (0..2 * ell).map(|_| rng.random_range(0..q)).collect() }
    }

    pub fn words(&self) -> &[u8] {
        &self.words
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
}

/// Presets `s` from the first half of the IV and the memory from the second;
/// the step counter starts at `-ι` so the payload begins at `t = 0`.
pub fn init_from_iv(iv: &InitVector, params: &CipherParams) -> Result<CipherState, KeyError> {
    let ell = params.ell();
    if iv.words.len() != 2 * ell {
        return Err(KeyError::IvLength { expected: 2 * ell, found: iv.words.len() });
    }
    if iv.field != params.field() {
        return Err(CipherError::from(crate::gf::GfError::FieldMismatch(params.field(), iv.field)).into());
    }
    let s = FieldVector::from_vec(iv.field, iv.words[..ell].to_vec()).map_err(CipherError::from)?;
    let mem = FieldVector::from_vec(iv.field, iv.words[ell..].to_vec()).map_err(CipherError::from)?;
    Ok(CipherState::new(s, mem, -(params.iota() as i64))?)
}
