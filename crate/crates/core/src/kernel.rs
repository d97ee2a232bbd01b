//! Cipher kernels: state update, keystream, encryption and the
//! unknown-input-observer decryption.
//!
//! With `℘` the element-wise key permutation, the self-synchronous encryptor
//! runs
//!
//! ```text
//! z_t     = W c~_t + B ℘(s_t)
//! c_t     = z_t + F ℘(p_t)
//! s_{t+1} = W c~_t + D s_t + A ℘(s_t) + E ℘(p_t)
//! ```
//!
//! and the decryptor is an observer of that system driven by ciphertext only:
//!
//! ```text
//! ẑ_t     = W c~_t + B ℘(ŝ_t)
//! p̂_t     = ℘⁻¹(F⁻¹(c_t - ẑ_t))
//! ŝ_{t+1} = W c~_t + D ŝ_t + A ℘(ŝ_t) + E F⁻¹(c_t - ẑ_t)
//! ```
//!
//! When `A = E F⁻¹ B` the state error obeys `e_{t+1} = D e_t`, so a nilpotent
//! `D` drives any initial mismatch to zero in `n0` steps.
//!
//! The plaintext symbol is embedded as `p_t = [p, 0, ..., 0]` and the memory
//! `c~_t` is a shift register of the last `ℓ` ciphertext first components,
//! newest first. Synchronous mode drops the ciphertext feedback (`W = E = 0`).

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::gf::{self, FieldMatrix, FieldSpec, FieldVector, GfError};
use crate::permutation::KeyPermutation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("matrix {name} must be {ell}x{ell} over {field}")]
    Shape { name: &'static str, ell: usize, field: FieldSpec },
    #[error("permutation acts on {perm} elements but the field has {field}")]
    PermutationSize { perm: usize, field: usize },
    #[error("F is not invertible")]
    SingularF,
    #[error("self-synchronous mode requires A = E F^-1 B")]
    ObserverCondition,
    #[error("self-synchronous mode requires a nilpotent D")]
    NotNilpotent,
    #[error("synchronous mode requires W = E = 0")]
    SyncFeedback,
    #[error("operation requires {expected:?} mode but the parameters are {actual:?}")]
    ModeMismatch { expected: Mode, actual: Mode },
    #[error("vector has length {found}, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("symbol {0} is not a field element")]
    Symbol(u8),
    #[error("ciphertext of {len} symbols is not a whole number of {ell}-symbol vectors")]
    CipherLength { len: usize, ell: usize },
    #[error("whitening prefix must have {expected} symbols, got {found}")]
    Whitening { expected: usize, found: usize },
    #[error("vector length must be at least 1")]
    EmptyState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Synchronous,
    SelfSynchronous,
}

/// The six public/secret matrices of the scheme.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matrices {
    pub a: FieldMatrix,
    pub b: FieldMatrix,
    pub d: FieldMatrix,
    pub e: FieldMatrix,
    pub f: FieldMatrix,
    pub w: FieldMatrix,
}

/// Validated cipher parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CipherParams {
    ell: usize,
    field: FieldSpec,
    perm: KeyPermutation,
    m: Matrices,
    f_inv: FieldMatrix,
    iota: usize,
    mode: Mode,
    nilpotency: Option<usize>,
    // ℘(p_t) = π(p)·e_1 + π(0)·(1 - e_1), so F ℘(p_t) = π(p)·F[:,0] + F·[0, π(0), ..., π(0)]
    f_first: Vec<u8>,
    f_rest: Vec<u8>,
    e_first: Vec<u8>,
    e_rest: Vec<u8>,
}

impl CipherParams {
    /// Validates the matrices against the requirements of `mode`.
    ///
    /// Self-synchronous parameters must satisfy `A = E F⁻¹ B` with `D`
    /// nilpotent; synchronous parameters must have `W = E = 0`.
    pub fn new(
        field: FieldSpec,
        perm: KeyPermutation,
        m: Matrices,
        iota: usize,
        mode: Mode,
    ) -> Result<Self, CipherError> {
        let ell = m.f.rows();
        if ell == 0 {
            return Err(CipherError::EmptyState);
        }
        for (name, mat) in [("A", &m.a), ("B", &m.b), ("D", &m.d), ("E", &m.e), ("F", &m.f), ("W", &m.w)] {
            if mat.field() != field || mat.rows() != ell || mat.cols() != ell {
                return Err(CipherError::Shape { name, ell, field });
            }
        }
        if perm.len() != field.order() {
            return Err(CipherError::PermutationSize { perm: perm.len(), field: field.order() });
        }
        let f_inv = m.f.inverse().map_err(|_| CipherError::SingularF)?;
        let nilpotency = m.d.nilpotency_index();
        match mode {
            Mode::SelfSynchronous => {
                if nilpotency.is_none() {
                    return Err(CipherError::NotNilpotent);
                }
                if m.e.try_mul(&f_inv)?.try_mul(&m.b)? != m.a {
                    return Err(CipherError::ObserverCondition);
                }
            }
            Mode::Synchronous => {
                if !m.w.is_zero() || !m.e.is_zero() {
                    return Err(CipherError::SyncFeedback);
                }
            }
        }
        let pi0 = perm.apply(0);
        let mut tail = vec![pi0; ell];
        tail[0] = 0;
        let tail = FieldVector::from_vec(field, tail)?;
        Ok(CipherParams {
            ell,
            field,
            f_first: m.f.column(0).into_vec(),
            f_rest: m.f.mul_vec(&tail)?.into_vec(),
            e_first: m.e.column(0).into_vec(),
            e_rest: m.e.mul_vec(&tail)?.into_vec(),
            perm,
            m,
            f_inv,
            iota,
            mode,
            nilpotency,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn permutation(&self) -> &KeyPermutation {
        &self.perm
    }

    pub fn matrices(&self) -> &Matrices {
        &self.m
    }

    pub fn f_inv(&self) -> &FieldMatrix {
        &self.f_inv
    }

    /// Length of the whitening prefix.
    pub fn iota(&self) -> usize {
        self.iota
    }

    pub fn with_iota(mut self, iota: usize) -> Self {
        self.iota = iota;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Nilpotency index `n0` of `D`, if `D` is nilpotent.
    pub fn nilpotency_index(&self) -> Option<usize> {
        self.nilpotency
    }

    fn require_mode(&self, expected: Mode) -> Result<(), CipherError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(CipherError::ModeMismatch { expected, actual: self.mode })
        }
    }

    fn check_state(&self, state: &CipherState) -> Result<(), CipherError> {
        for v in [&state.s, &state.mem] {
            if v.len() != self.ell {
                return Err(CipherError::Length { expected: self.ell, found: v.len() });
            }
            if v.field() != self.field {
                return Err(GfError::FieldMismatch(self.field, v.field()).into());
            }
        }
        Ok(())
    }

    fn check_symbol(&self, p: u8) -> Result<(), CipherError> {
        if self.field.contains(p) {
            Ok(())
        } else {
            Err(CipherError::Symbol(p))
        }
    }

    fn check_vector(&self, c: &[u8]) -> Result<(), CipherError> {
        if c.len() != self.ell {
            return Err(CipherError::Length { expected: self.ell, found: c.len() });
        }
        c.iter().try_for_each(|&v| self.check_symbol(v))
    }

    /// `out = F ℘(p_t)` (or `E ℘(p_t)`) for the embedded plaintext `[p, 0, ..., 0]`.
    #[inline]
    fn embedded_product(&self, first: &[u8], rest: &[u8], permuted_p: u8, out: &mut [u8]) {
        out.copy_from_slice(rest);
        gf::scale_add_assign(self.field, out, permuted_p, first);
    }

    /// Synchronous keystream step: returns `z_t = B ℘(s_t)` and advances
    /// `s_{t+1} = D s_t + A ℘(s_t)`. Memory is left untouched.
    pub fn sync_step(&self, state: &mut CipherState) -> Result<FieldVector, CipherError> {
        self.require_mode(Mode::Synchronous)?;
        self.check_state(state)?;
        let mut scratch = Scratch::new(self.ell);
        let mut z = vec![0u8; self.ell];
        self.sync_core(state, &mut z, &mut scratch);
        Ok(FieldVector::from_vec_unchecked(self.field, z))
    }

    fn sync_core(&self, state: &mut CipherState, z: &mut [u8], scr: &mut Scratch) {
        let f = self.field;
        let s = state.s.as_mut_slice();
        self.perm.apply_into(s, &mut scr.u);
        self.m.b.mul_vec_into(&scr.u, z);
        self.m.d.mul_vec_into(s, &mut scr.t1);
        self.m.a.mul_vec_into(&scr.u, &mut scr.t2);
        s.copy_from_slice(&scr.t1);
        gf::add_assign(f, s, &scr.t2);
        state.t += 1;
    }

    /// Encrypts one plaintext symbol in self-synchronous mode, returning the
    /// `ℓ`-symbol cipher vector and advancing state and memory.
    pub fn ss_encrypt_symbol(&self, state: &mut CipherState, p: u8) -> Result<FieldVector, CipherError> {
        self.require_mode(Mode::SelfSynchronous)?;
        self.encrypt_symbol(state, p)
    }

    /// Observer step: recovers one plaintext symbol from a cipher vector in
    /// self-synchronous mode.
    pub fn ss_decrypt_symbol(&self, state: &mut CipherState, c: &FieldVector) -> Result<u8, CipherError> {
        self.require_mode(Mode::SelfSynchronous)?;
        self.decrypt_symbol(state, c)
    }

    /// Encrypts one symbol in whichever mode the parameters were built for.
    pub fn encrypt_symbol(&self, state: &mut CipherState, p: u8) -> Result<FieldVector, CipherError> {
        self.check_state(state)?;
        self.check_symbol(p)?;
        let mut scratch = Scratch::new(self.ell);
        let mut c = vec![0u8; self.ell];
        self.encrypt_core(state, p, &mut c, &mut scratch);
        Ok(FieldVector::from_vec_unchecked(self.field, c))
    }

    /// Decrypts one cipher vector in whichever mode the parameters were built for.
    pub fn decrypt_symbol(&self, state: &mut CipherState, c: &FieldVector) -> Result<u8, CipherError> {
        self.check_state(state)?;
        if c.field() != self.field {
            return Err(GfError::FieldMismatch(self.field, c.field()).into());
        }
        self.check_vector(c.as_slice())?;
        let mut scratch = Scratch::new(self.ell);
        Ok(self.decrypt_core(state, c.as_slice(), &mut scratch))
    }

    fn encrypt_core(&self, state: &mut CipherState, p: u8, c: &mut [u8], scr: &mut Scratch) {
        let f = self.field;
        let pp = self.perm.apply(p);
        if self.mode == Mode::Synchronous {
            self.sync_core(state, c, scr);
            self.embedded_product(&self.f_first, &self.f_rest, pp, &mut scr.t1);
            gf::add_assign(f, c, &scr.t1);
            return;
        }
        let s = state.s.as_mut_slice();
        // y = W c~
        self.m.w.mul_vec_into(state.mem.as_slice(), &mut scr.y);
        self.perm.apply_into(s, &mut scr.u);
        // c = y + B ℘(s) + F ℘(p_t)
        self.m.b.mul_vec_into(&scr.u, c);
        gf::add_assign(f, c, &scr.y);
        self.embedded_product(&self.f_first, &self.f_rest, pp, &mut scr.t1);
        gf::add_assign(f, c, &scr.t1);
        // s' = y + D s + A ℘(s) + E ℘(p_t)
        self.m.d.mul_vec_into(s, &mut scr.t1);
        self.m.a.mul_vec_into(&scr.u, &mut scr.t2);
        s.copy_from_slice(&scr.y);
        gf::add_assign(f, s, &scr.t1);
        gf::add_assign(f, s, &scr.t2);
        self.embedded_product(&self.e_first, &self.e_rest, pp, &mut scr.t1);
        gf::add_assign(f, s, &scr.t1);
        state.push_memory(c[0]);
        state.t += 1;
    }

    fn decrypt_core(&self, state: &mut CipherState, c: &[u8], scr: &mut Scratch) -> u8 {
        let f = self.field;
        if self.mode == Mode::Synchronous {
            let mut z = std::mem::take(&mut scr.z);
            self.sync_core(state, &mut z, scr);
            scr.g.copy_from_slice(c);
            gf::sub_assign(f, &mut scr.g, &z);
            scr.z = z;
            self.f_inv.mul_vec_into(&scr.g, &mut scr.y);
            return self.perm.invert(scr.y[0]);
        }
        let s = state.s.as_mut_slice();
        self.m.w.mul_vec_into(state.mem.as_slice(), &mut scr.y);
        self.perm.apply_into(s, &mut scr.u);
        // ẑ = y + B ℘(ŝ); g = F⁻¹(c - ẑ)
        self.m.b.mul_vec_into(&scr.u, &mut scr.z);
        gf::add_assign(f, &mut scr.z, &scr.y);
        scr.t1.copy_from_slice(c);
        gf::sub_assign(f, &mut scr.t1, &scr.z);
        self.f_inv.mul_vec_into(&scr.t1, &mut scr.g);
        let p_hat = self.perm.invert(scr.g[0]);
        // ŝ' = y + D ŝ + A ℘(ŝ) + E g
        self.m.d.mul_vec_into(s, &mut scr.t1);
        self.m.a.mul_vec_into(&scr.u, &mut scr.t2);
        self.m.e.mul_vec_into(&scr.g, &mut scr.z);
        s.copy_from_slice(&scr.y);
        gf::add_assign(f, s, &scr.t1);
        gf::add_assign(f, s, &scr.t2);
        gf::add_assign(f, s, &scr.z);
        state.push_memory(c[0]);
        state.t += 1;
        p_hat
    }

    /// Observer error `s - ŝ`.
    pub fn observer_error(&self, s: &FieldVector, s_hat: &FieldVector) -> Result<FieldVector, CipherError> {
        for v in [s, s_hat] {
            if v.len() != self.ell {
                return Err(CipherError::Length { expected: self.ell, found: v.len() });
            }
        }
        Ok(s.try_sub(s_hat)?)
    }

    /// Encrypts the whitening prefix followed by the payload, starting from
    /// `state`. Returns `ℓ` cipher symbols per input symbol.
    pub fn encrypt_stream(
        &self,
        mut state: CipherState,
        whitening: &[u8],
        payload: &[u8],
    ) -> Result<Vec<u8>, CipherError> {
        self.check_state(&state)?;
        if whitening.len() != self.iota {
            return Err(CipherError::Whitening { expected: self.iota, found: whitening.len() });
        }
        let total = whitening.len() + payload.len();
        let mut out = vec![0u8; total * self.ell];
        let mut scratch = Scratch::new(self.ell);
        for (&p, c) in whitening.iter().chain(payload).zip(out.chunks_exact_mut(self.ell)) {
            self.check_symbol(p)?;
            self.encrypt_core(&mut state, p, c, &mut scratch);
        }
        Ok(out)
    }

    /// Runs the decryptor over a whole cipher stream and returns every
    /// recovered symbol, whitening prefix included.
    pub fn decrypt_stream_all(&self, mut state: CipherState, cipher: &[u8]) -> Result<Vec<u8>, CipherError> {
        self.check_state(&state)?;
        if !cipher.len().is_multiple_of(self.ell) {
            return Err(CipherError::CipherLength { len: cipher.len(), ell: self.ell });
        }
        cipher.iter().try_for_each(|&v| self.check_symbol(v))?;
        let mut scratch = Scratch::new(self.ell);
        Ok(cipher
            .chunks_exact(self.ell)
            .map(|c| self.decrypt_core(&mut state, c, &mut scratch))
            .collect())
    }

    /// Decrypts a cipher stream and discards the `ι` whitening symbols.
    pub fn decrypt_stream(&self, state: CipherState, cipher: &[u8]) -> Result<Vec<u8>, CipherError> {
        let mut all = self.decrypt_stream_all(state, cipher)?;
        if all.len() < self.iota {
            return Err(CipherError::Whitening { expected: self.iota, found: all.len() });
        }
        all.drain(..self.iota);
        Ok(all)
    }
}

struct Scratch {
    y: Vec<u8>,
    u: Vec<u8>,
    z: Vec<u8>,
    g: Vec<u8>,
    t1: Vec<u8>,
    t2: Vec<u8>,
}

impl Scratch {
    fn new(ell: usize) -> Self {
        Scratch {
            y: vec![0; ell],
            u: vec![0; ell],
            z: vec![0; ell],
            g: vec![0; ell],
            t1: vec![0; ell],
            t2: vec![0; ell],
        }
    }
}

/// Internal state `s_t`, memory `c~_t` and time index `t` of one cipher end.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CipherState {
    s: FieldVector,
    mem: FieldVector,
    t: i64,
}

impl CipherState {
    pub fn new(s: FieldVector, mem: FieldVector, t: i64) -> Result<Self, CipherError> {
        if s.len() != mem.len() {
            return Err(CipherError::Length { expected: s.len(), found: mem.len() });
        }
        if s.field() != mem.field() {
            return Err(GfError::FieldMismatch(s.field(), mem.field()).into());
        }
        Ok(CipherState { s, mem, t })
    }

    pub fn zeros(field: FieldSpec, ell: usize) -> Self {
        CipherState { s: FieldVector::zeros(field, ell), mem: FieldVector::zeros(field, ell), t: 0 }
    }

    pub fn state(&self) -> &FieldVector {
        &self.s
    }

    pub fn memory(&self) -> &FieldVector {
        &self.mem
    }

    /// Step counter; negative while the whitening prefix is being consumed.
    pub fn t(&self) -> i64 {
        self.t
    }

    /// Memory update: shift the register by one and insert `newest` at the
    /// front, dropping the oldest entry.
    pub fn memory_update(&mut self, newest: u8) -> Result<(), CipherError> {
        if !self.mem.field().contains(newest) {
            return Err(CipherError::Symbol(newest));
        }
        self.push_memory(newest);
        Ok(())
    }

    #[inline]
    fn push_memory(&mut self, newest: u8) {
        let mem = self.mem.as_mut_slice();
        if let Some(last) = mem.len().checked_sub(1) {
            mem.copy_within(..last, 1);
            mem[0] = newest;
        }
    }
}

/// Random parameter sets for tests and experiments.
///
/// These bypass the key schedule: every matrix is drawn uniformly, `D` is a
/// random strictly upper triangular matrix and `A` is set to `E F⁻¹ B`.
pub mod testing {
    use super::*;

    pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, n: usize) -> FieldMatrix {
        let q = field.order() as u8;
        let data = (0..n * n).map(|_| rng.random_range(0..q)).collect();
        FieldMatrix::from_vec(field, n, n, data).expect("entries drawn in range")
    }

    pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, n: usize) -> (FieldMatrix, FieldMatrix) {
        loop {
            let m = random_matrix(rng, field, n);
            if let Ok(inv) = m.inverse() {
                return (m, inv);
            }
        }
    }

    pub fn random_strictly_upper<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, n: usize) -> FieldMatrix {
        let mut m = random_matrix(rng, field, n);
        for r in 0..n {
            for c in 0..=r {
                m.set(r, c, 0).expect("zero is a field element");
            }
        }
        m
    }

    pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, n: usize) -> FieldVector {
        let q = field.order() as u8;
        FieldVector::from_vec(field, (0..n).map(|_| rng.random_range(0..q)).collect()).expect("in range")
    }

    pub fn random_state<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, n: usize) -> CipherState {
        CipherState::new(random_vector(rng, field, n), random_vector(rng, field, n), 0).expect("same shape")
    }

    pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, q: usize) -> KeyPermutation {
        let mut fwd: Vec<u8> = (0..q).map(|i| i as u8).collect();
        fwd.shuffle(rng);
        KeyPermutation::from_forward(fwd).expect("shuffle is a bijection")
    }

    /// Uniformly random self-synchronous (or synchronous) parameters.
    pub fn random_params<R: Rng + ?Sized>(rng: &mut R, field: FieldSpec, ell: usize, mode: Mode) -> CipherParams {
        let perm = random_permutation(rng, field.order());
        let b = random_matrix(rng, field, ell);
        let (f, f_inv) = random_invertible(rng, field, ell);
        let d = random_strictly_upper(rng, field, ell);
        let (e, w) = match mode {
            Mode::SelfSynchronous => (random_matrix(rng, field, ell), random_matrix(rng, field, ell)),
            Mode::Synchronous => (FieldMatrix::zeros(field, ell, ell), FieldMatrix::zeros(field, ell, ell)),
        };
        let a = match mode {
            Mode::SelfSynchronous => e.try_mul(&f_inv).and_then(|x| x.try_mul(&b)).expect("square"),
            Mode::Synchronous => random_matrix(rng, field, ell),
        };
        CipherParams::new(field, perm, Matrices { a, b, d, e, f, w }, 4 * ell, mode).expect("valid by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const GF16: FieldSpec = FieldSpec::Gf16;

    fn vecf(v: &[u8]) -> FieldVector {
        FieldVector::from_vec(GF16, v.to_vec()).unwrap()
    }

    fn zero(n: usize) -> FieldMatrix {
        FieldMatrix::zeros(GF16, n, n)
    }

    fn id(n: usize) -> FieldMatrix {
        FieldMatrix::identity(GF16, n)
    }

    /// Straight-line re-evaluation of the encryption equations using full
    /// matrix products and an explicitly permuted `[p, 0, ..., 0]`.
    fn reference_encrypt(params: &CipherParams, s: &FieldVector, mem: &FieldVector, p: u8) -> (FieldVector, FieldVector) {
        let m = params.matrices();
        let perm = params.permutation();
        let mut pt = vec![0u8; params.ell()];
        pt[0] = p;
        let perm_p = perm.apply_vec(&FieldVector::from_vec(params.field(), pt).unwrap()).unwrap();
        let perm_s = perm.apply_vec(s).unwrap();
        let y = m.w.mul_vec(mem).unwrap();
        let z = y.try_add(&m.b.mul_vec(&perm_s).unwrap()).unwrap();
        let c = z.try_add(&m.f.mul_vec(&perm_p).unwrap()).unwrap();
        let s_next = y
            .try_add(&m.d.mul_vec(s).unwrap())
            .and_then(|v| v.try_add(&m.a.mul_vec(&perm_s).unwrap()))
            .and_then(|v| v.try_add(&m.e.mul_vec(&perm_p).unwrap()))
            .unwrap();
        (c, s_next)
    }

    #[test]
    fn memory_update_is_a_shift_register() {
        let mut st = CipherState::new(vecf(&[0, 0, 0]), vecf(&[4, 7, 2]), 0).unwrap();
        st.memory_update(9).unwrap();
        assert_eq!(st.memory().as_slice(), &[9, 4, 7]);

        let mut st = CipherState::zeros(GF16, 5);
        st.memory_update(0).unwrap();
        assert!(st.memory().is_zero());

        let mut st = CipherState::new(vecf(&[0, 0]), vecf(&[10, 11]), 0).unwrap();
        st.memory_update(12).unwrap();
        assert_eq!(st.memory().as_slice(), &[12, 10]);
        assert_eq!(st.memory_update(16), Err(CipherError::Symbol(16)));
    }

    fn sync_params(a: FieldMatrix, b: FieldMatrix, d: FieldMatrix) -> CipherParams {
        let n = b.rows();
        let m = Matrices { a, b, d, e: zero(n), f: id(n), w: zero(n) };
        CipherParams::new(GF16, KeyPermutation::identity(16), m, 0, Mode::Synchronous).unwrap()
    }

    #[test]
    fn sync_step_examples() {
        let params = sync_params(zero(2), id(2), zero(2));
        let mut st = CipherState::new(vecf(&[5, 7]), vecf(&[0, 0]), 0).unwrap();
        let z = params.sync_step(&mut st).unwrap();
        assert_eq!(z.as_slice(), &[5, 7]);
        assert!(st.state().is_zero());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = sync_params(random_matrix(&mut rng, GF16, 3), zero(3), FieldMatrix::shift(GF16, 3));
        let mut st = random_state(&mut rng, GF16, 3);
        assert!(params.sync_step(&mut st).unwrap().is_zero());
    }

    #[test]
    fn sync_step_matches_straight_line_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = random_params(&mut rng, GF16, 2, Mode::Synchronous);
        let mut st = random_state(&mut rng, GF16, 2);
        for _ in 0..50 {
            let m = params.matrices();
            let perm_s = params.permutation().apply_vec(st.state()).unwrap();
            let z_ref = m.b.mul_vec(&perm_s).unwrap();
            let s_ref = m.d.mul_vec(st.state()).unwrap().try_add(&m.a.mul_vec(&perm_s).unwrap()).unwrap();
            let mem_before = st.memory().clone();
            let z = params.sync_step(&mut st).unwrap();
            assert_eq!(z, z_ref);
            assert_eq!(st.state(), &s_ref);
            assert_eq!(st.memory(), &mem_before);
        }
    }

    #[test]
    fn mode_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ss = random_params(&mut rng, GF16, 4, Mode::SelfSynchronous);
        let sy = random_params(&mut rng, GF16, 4, Mode::Synchronous);
        let mut st = CipherState::zeros(GF16, 4);
        assert!(matches!(ss.sync_step(&mut st), Err(CipherError::ModeMismatch { .. })));
        assert!(matches!(sy.ss_encrypt_symbol(&mut st, 1), Err(CipherError::ModeMismatch { .. })));
    }

    #[test]
    fn self_sync_encrypt_examples() {
        let n = 4;
        let m = Matrices { a: zero(n), b: zero(n), d: zero(n), e: zero(n), f: id(n), w: zero(n) };
        let params = CipherParams::new(GF16, KeyPermutation::identity(16), m, 0, Mode::SelfSynchronous).unwrap();
        let mut st = CipherState::zeros(GF16, n);
        let c = params.ss_encrypt_symbol(&mut st, 3).unwrap();
        assert_eq!(c.as_slice(), &[3, 0, 0, 0]);
        assert_eq!(st.memory().as_slice(), &[3, 0, 0, 0]);

        // keystream z = [1, 2, 3, 4] via B = I and s = z with π = identity
        let m = Matrices { a: zero(n), b: id(n), d: zero(n), e: zero(n), f: id(n), w: zero(n) };
        let params = CipherParams::new(GF16, KeyPermutation::identity(16), m, 0, Mode::SelfSynchronous).unwrap();
        let mut st = CipherState::new(vecf(&[1, 2, 3, 4]), vecf(&[0; 4]), 0).unwrap();
        let c = params.ss_encrypt_symbol(&mut st, 3).unwrap();
        assert_eq!(c.as_slice()[0], 1 ^ 3);
        assert_eq!(c.len(), n);
    }

    #[test]
    fn self_sync_encrypt_matches_straight_line_evaluation() {
        for (field, seed) in [(GF16, 4u64), (FieldSpec::prime(17).unwrap(), 5)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = random_params(&mut rng, field, 8, Mode::SelfSynchronous);
            let mut st = random_state(&mut rng, field, 8);
            for _ in 0..100 {
                let p = rng.random_range(0..field.order() as u8);
                let (c_ref, s_ref) = reference_encrypt(&params, st.state(), st.memory(), p);
                let mut mem_ref = st.memory().as_slice().to_vec();
                mem_ref.rotate_right(1);
                mem_ref[0] = c_ref.as_slice()[0];
                let c = params.ss_encrypt_symbol(&mut st, p).unwrap();
                assert_eq!(c, c_ref);
                assert_eq!(st.state(), &s_ref);
                assert_eq!(st.memory().as_slice(), &mem_ref[..]);
            }
        }
    }

    #[test]
    fn decrypt_inverts_encrypt_from_shared_state() {
        for field in [GF16, FieldSpec::prime(17).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for mode in [Mode::SelfSynchronous, Mode::Synchronous] {
                let params = random_params(&mut rng, field, 8, mode);
                let init = random_state(&mut rng, field, 8);
                let (mut enc, mut dec) = (init.clone(), init);
                for p in (0..field.order() as u8).cycle().take(200) {
                    let c = params.encrypt_symbol(&mut enc, p).unwrap();
                    assert_eq!(params.decrypt_symbol(&mut dec, &c).unwrap(), p);
                }
                assert_eq!(enc, dec);
            }
        }
    }

    #[test]
    fn observer_converges_from_mismatched_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for field in [GF16, FieldSpec::prime(17).unwrap()] {
            for _ in 0..20 {
                let params = random_params(&mut rng, field, 8, Mode::SelfSynchronous);
                let n0 = params.nilpotency_index().unwrap();
                let mut enc = random_state(&mut rng, field, 8);
                // observer shares the ciphertext memory but not the internal state
                let mut dec = CipherState::new(random_vector(&mut rng, field, 8), enc.memory().clone(), 0).unwrap();
                let d = &params.matrices().d;
                for t in 1..=40 {
                    let e_t = params.observer_error(enc.state(), dec.state()).unwrap();
                    if t > n0 {
                        assert!(e_t.is_zero(), "error must vanish after n0 = {n0} steps");
                    }
                    let p = rng.random_range(0..field.order() as u8);
                    let c = params.ss_encrypt_symbol(&mut enc, p).unwrap();
                    let p_hat = params.ss_decrypt_symbol(&mut dec, &c).unwrap();
                    let e_next = params.observer_error(enc.state(), dec.state()).unwrap();
                    assert_eq!(e_next, d.mul_vec(&e_t).unwrap());
                    if t > n0 {
                        assert_eq!(p_hat, p);
                    }
                }
            }
        }
    }

    #[test]
    fn observer_error_in_characteristic_two_is_xor() {
        let params = random_params(&mut ChaCha8Rng::seed_from_u64(8), GF16, 3, Mode::SelfSynchronous);
        let a = vecf(&[1, 9, 15]);
        let b = vecf(&[3, 9, 0]);
        assert_eq!(params.observer_error(&a, &b).unwrap().as_slice(), &[2, 0, 15]);
        assert!(params.observer_error(&a, &a).unwrap().is_zero());
        assert!(params.observer_error(&a, &vecf(&[1])).is_err());
    }

    #[test]
    fn construction_enforces_observer_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let good = random_params(&mut rng, GF16, 4, Mode::SelfSynchronous);
        let base = good.matrices().clone();

        let mut m = base.clone();
        m.a = random_matrix(&mut rng, GF16, 4);
        assert_eq!(
            CipherParams::new(GF16, good.permutation().clone(), m, 0, Mode::SelfSynchronous),
            Err(CipherError::ObserverCondition)
        );

        let mut m = base.clone();
        m.d = id(4);
        assert_eq!(
            CipherParams::new(GF16, good.permutation().clone(), m, 0, Mode::SelfSynchronous),
            Err(CipherError::NotNilpotent)
        );

        let mut m = base.clone();
        m.f = zero(4);
        assert_eq!(
            CipherParams::new(GF16, good.permutation().clone(), m, 0, Mode::SelfSynchronous),
            Err(CipherError::SingularF)
        );

        assert_eq!(
            CipherParams::new(GF16, good.permutation().clone(), base.clone(), 0, Mode::Synchronous),
            Err(CipherError::SyncFeedback)
        );

        assert!(matches!(
            CipherParams::new(GF16, KeyPermutation::identity(4), base, 0, Mode::SelfSynchronous),
            Err(CipherError::PermutationSize { .. })
        ));
    }

    #[test]
    fn stream_round_trip_and_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = random_params(&mut rng, GF16, 8, Mode::SelfSynchronous);
        let init = random_state(&mut rng, GF16, 8);
        let whitening: Vec<u8> = (0..params.iota()).map(|_| rng.random_range(0..16)).collect();
        let payload: Vec<u8> = (0..500).map(|_| rng.random_range(0..16)).collect();
        let cipher = params.encrypt_stream(init.clone(), &whitening, &payload).unwrap();
        assert_eq!(cipher.len(), 8 * (params.iota() + payload.len()));
        assert_eq!(params.decrypt_stream(init.clone(), &cipher).unwrap(), payload);
        assert!(matches!(
            params.encrypt_stream(init.clone(), &whitening[1..], &payload),
            Err(CipherError::Whitening { .. })
        ));
        assert!(matches!(
            params.decrypt_stream(init, &cipher[1..]),
            Err(CipherError::CipherLength { .. })
        ));
    }

    #[test]
    fn synchronous_keystream_ignores_ciphertext() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = random_params(&mut rng, GF16, 8, Mode::Synchronous);
        let init = random_state(&mut rng, GF16, 8);
        let (mut a, mut b) = (init.clone(), init);
        for _ in 0..100 {
            let za = params.sync_step(&mut a).unwrap();
            // decrypting garbage must not perturb the receiver's keystream
            let mut probe = b.clone();
            let junk = random_vector(&mut rng, GF16, 8);
            params.decrypt_symbol(&mut probe, &junk).unwrap();
            let zb = params.sync_step(&mut b).unwrap();
            assert_eq!(za, zb);
            assert_eq!(probe, b);
        }
    }

    #[test]
    fn embedded_plaintext_shortcut_matches_full_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = random_params(&mut rng, GF16, 8, Mode::SelfSynchronous);
        for p in 0..16u8 {
            let mut pt = vec![0u8; 8];
            pt[0] = p;
            let perm_p = params.permutation().apply_vec(&vecf(&pt)).unwrap();
            let full = params.matrices().f.mul_vec(&perm_p).unwrap();
            let mut out = vec![0; 8];
            params.embedded_product(&params.f_first, &params.f_rest, params.permutation().apply(p), &mut out);
            assert_eq!(out, full.as_slice());
        }
    }
}
