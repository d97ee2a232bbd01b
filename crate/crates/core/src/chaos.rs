//! The Rényi map `x -> 3x mod 1` and its finite-precision discretization.
//!
//! States are `prec`-bit fixed-point fractions `x = X / 2^prec` with
//! `X` in `[1, 2^prec - 1]`. On such grid points the discretized map is
//! exactly `X -> 3X mod 2^prec`, so every orbit is computed in integer
//! arithmetic and is bit-reproducible on any platform.

use std::io::{self, Write};

use num_rational::Ratio;
use thiserror::Error;

pub const MAX_PREC: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChaosError {
    #[error("precision must be between 2 and {MAX_PREC} bits, got {0}")]
    Precision(u32),
    #[error("state {x} is outside [1, 2^{prec} - 1]")]
    State { x: u64, prec: u32 },
    #[error("argument must lie strictly between 0 and 1")]
    Domain,
    #[error("orbit window of {q} values contains a repeated value")]
    RetryNeeded { q: usize },
}

/// A point of the discretized orbit, `x = value / 2^prec`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChaoticState {
    x: u64,
    prec: u32,
}

impl ChaoticState {
    pub fn new(x: u64, prec: u32) -> Result<Self, ChaosError> {
        if !(2..=MAX_PREC).contains(&prec) {
            return Err(ChaosError::Precision(prec));
        }
        if x == 0 || x >> prec != 0 {
            return Err(ChaosError::State { x, prec });
        }
        Ok(ChaoticState { x, prec })
    }

    /// Quantizes a real in (0, 1) onto the `prec`-bit grid (the map `g`).
    pub fn from_fraction(x: Ratio<u64>, prec: u32) -> Result<Self, ChaosError> {
        check_unit_interval(x)?;
        Self::new(quantize(x, prec), prec)
    }

    pub fn value(self) -> u64 {
        self.x
    }

    pub fn prec(self) -> u32 {
        self.prec
    }

    fn mask(self) -> u64 {
        (1u64 << self.prec) - 1
    }

    pub fn as_fraction(self) -> Ratio<u64> {
        Ratio::new(self.x, 1u64 << self.prec)
    }

    /// One iteration of the discretized map.
    #[inline]
    pub fn step(self) -> Self {
        ChaoticState { x: (3 * self.x) & self.mask(), prec: self.prec }
    }

    /// `n` iterations at once: `X * 3^n mod 2^prec`.
    pub fn advance(self, mut n: u64) -> Self {
        let mask = self.mask();
        let mut base = 3u64;
        let mut acc = self.x;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.wrapping_mul(base) & mask;
            }
            base = base.wrapping_mul(base) & mask;
            n >>= 1;
        }
        ChaoticState { x: acc, prec: self.prec }
    }

    /// The four most significant fraction bits, `floor(16 x)`.
    pub fn top_nibble(self) -> u8 {
        if self.prec >= 4 {
            (self.x >> (self.prec - 4)) as u8
        } else {
            (self.x << (4 - self.prec)) as u8
        }
    }
}

fn check_unit_interval(x: Ratio<u64>) -> Result<(), ChaosError> {
    if *x.numer() == 0 || x.numer() >= x.denom() {
        Err(ChaosError::Domain)
    } else {
        Ok(())
    }
}

/// `floor(2^prec * x)`, the integer numerator of `g(x)`.
pub fn quantize(x: Ratio<u64>, prec: u32) -> u64 {
    (((*x.numer() as u128) << prec) / *x.denom() as u128) as u64
}

/// The real Rényi map on exact rationals: fractional part of `3x`.
pub fn renyi_step_exact(x: Ratio<u64>) -> Result<Ratio<u64>, ChaosError> {
    check_unit_interval(x)?;
    let y = x * 3;
    Ok(y.fract())
}

/// `q` consecutive orbit values after discarding `l0` transient iterates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitWindow {
    values: Vec<u64>,
    start_index: u64,
    prec: u32,
}

impl OrbitWindow {
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Orbit index of the first value; iterates are numbered from 1.
    pub fn start_index(&self) -> u64 {
        self.start_index
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The state right after the window, where a continued stream picks up.
    pub fn last_state(&self) -> Option<ChaoticState> {
        self.values.last().map(|&x| ChaoticState { x, prec: self.prec })
    }
}

/// Iterates the map `l0` times (discarded), then collects `q` values.
/// Fails with [`ChaosError::RetryNeeded`] if the window repeats a value.
pub fn generate_window(seed: ChaoticState, l0: u64, q: usize) -> Result<OrbitWindow, ChaosError> {
    let mut state = seed.advance(l0);
    let mut values = Vec::with_capacity(q);
    for _ in 0..q {
        state = state.step();
        values.push(state.value());
    }
    let mut sorted = values.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ChaosError::RetryNeeded { q });
    }
    Ok(OrbitWindow { values, start_index: l0 + 1, prec: seed.prec })
}

/// Successive iterates after `start` (the start point itself is not yielded).
pub fn orbit(start: ChaoticState) -> impl Iterator<Item = ChaoticState> {
    std::iter::successors(Some(start.step()), |s| Some(s.step()))
}

/// Writes `words` orbit iterates following `seed.advance(skip)` as raw
/// big-endian bit strings, `prec` bits each, packed MSB-first. The output is
/// meant for external randomness test suites.
pub fn write_orbit_bits<W: Write>(seed: ChaoticState, skip: u64, words: usize, out: &mut W) -> io::Result<()> {
    let prec = seed.prec();
    let mut acc: u64 = 0;
    let mut pending = 0u32;
    for s in orbit(seed.advance(skip)).take(words) {
        for bit in (0..prec).rev() {
            acc = acc << 1 | (s.value() >> bit & 1);
            pending += 1;
            if pending == 8 {
                out.write_all(&[acc as u8])?;
                acc = 0;
                pending = 0;
            }
        }
    }
    if pending > 0 {
        out.write_all(&[(acc << (8 - pending)) as u8])?;
    }
    Ok(())
}
