//! The keyed permutation `pi_k` of a finite field, and its element-wise
//! extension to vectors.
//!
//! The permutation is read off a window of consecutive orbit values: sort the
//! window, and send the rank of each value to the rank of its orbit successor.
//! The last value of the window wraps around to the first, so the result is
//! always a single cycle through all `q` ranks. Field element `i` is
//! identified with rank `i`.

use thiserror::Error;

use crate::chaos::OrbitWindow;
use crate::gf::FieldVector;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermutationError {
    #[error("permutation table is not a bijection on 0..{0}")]
    NotBijection(usize),
    #[error("permutations act on 1 to 256 elements, got {0}")]
    Size(usize),
    #[error("orbit window contains a repeated value")]
    RepeatedValue,
    #[error("vector over a field of order {field} cannot be permuted by a permutation of {perm} elements")]
    FieldOrder { field: usize, perm: usize },
}

/// A permutation of `{0, ..., q-1}` together with its inverse table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyPermutation {
    forward: Vec<u8>,
    inverse: Vec<u8>,
}

impl KeyPermutation {
    pub fn identity(q: usize) -> Self {
        let forward: Vec<u8> = (0..q).map(|i| i as u8).collect();
        KeyPermutation { inverse: forward.clone(), forward }
    }

    pub fn from_forward(forward: Vec<u8>) -> Result<Self, PermutationError> {
        let q = forward.len();
        if q == 0 || q > 256 {
            return Err(PermutationError::Size(q));
        }
        let mut inverse = vec![None; q];
        for (i, &j) in forward.iter().enumerate() {
            let slot = inverse.get_mut(j as usize).ok_or(PermutationError::NotBijection(q))?;
            if slot.replace(i as u8).is_some() {
                return Err(PermutationError::NotBijection(q));
            }
        }
        let inverse = inverse.into_iter().map(|v| v.expect("every slot filled")).collect();
        Ok(KeyPermutation { forward, inverse })
    }

    /// Builds the permutation from a duplicate-free orbit window.
    pub fn from_window(window: &OrbitWindow) -> Result<Self, PermutationError> {
        let values = window.values();
        let q = values.len();
        if q == 0 || q > 256 {
            return Err(PermutationError::Size(q));
        }
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_unstable_by_key(|&t| values[t]);
        if order.windows(2).any(|w| values[w[0]] == values[w[1]]) {
            return Err(PermutationError::RepeatedValue);
        }
        let mut rank = vec![0u8; q];
        for (r, &t) in order.iter().enumerate() {
            rank[t] = r as u8;
        }
        let mut forward = vec![0u8; q];
        for t in 0..q {
            forward[rank[t] as usize] = rank[(t + 1) % q];
        }
        Self::from_forward(forward)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[u8] {
        &self.forward
    }

    pub fn inverse(&self) -> &[u8] {
        &self.inverse
    }

    #[inline]
    pub fn apply(&self, a: u8) -> u8 {
        self.forward[a as usize]
    }

    #[inline]
    pub fn invert(&self, a: u8) -> u8 {
        self.inverse[a as usize]
    }

    fn check_field(&self, v: &FieldVector) -> Result<(), PermutationError> {
        let field = v.field().order();
        if field != self.len() {
            return Err(PermutationError::FieldOrder { field, perm: self.len() });
        }
        Ok(())
    }

    /// Element-wise `pi_k` on a vector.
    pub fn apply_vec(&self, v: &FieldVector) -> Result<FieldVector, PermutationError> {
        self.check_field(v)?;
        let data = v.as_slice().iter().map(|&a| self.apply(a)).collect();
        Ok(FieldVector::from_vec_unchecked(v.field(), data))
    }

    /// Element-wise `pi_k^-1` on a vector.
    pub fn invert_vec(&self, v: &FieldVector) -> Result<FieldVector, PermutationError> {
        self.check_field(v)?;
        let data = v.as_slice().iter().map(|&a| self.invert(a)).collect();
        Ok(FieldVector::from_vec_unchecked(v.field(), data))
    }

    #[inline]
    pub(crate) fn apply_into(&self, src: &[u8], dst: &mut [u8]) {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = self.forward[s as usize];
        }
    }

    /// Cycle decomposition, each cycle starting at its smallest element.
    pub fn cycles(&self) -> Vec<Vec<u8>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i as u8);
                i = self.forward[i] as usize;
            }
            out.push(cycle);
        }
        out
    }

    pub fn is_single_cycle(&self) -> bool {
        self.cycles().len() == 1
    }
}
