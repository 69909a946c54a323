//! Phase-free Pauli strings in binary symplectic form.
//!
//! A string on `n` qubits is stored as two packed words `x` and `z`. Qubit 0
//! is the leftmost character of the textual form ("ZZI" has Z on qubits 0
//! and 1) and lives in bit `n - 1` of each word, so the integer value of the
//! words reads the same way as the text.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported qubit count.
pub const MAX_QUBITS: usize = 32;

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// An `n`-qubit Pauli operator with its phase discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: u8,
    x: u32,
    z: u32,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "at most {MAX_QUBITS} qubits are supported");
        PauliString {
            n: n as u8,
            x: 0,
            z: 0,
        }
    }

    /// Builds a string from packed words; bits above `n` must be clear.
    pub fn from_words(n: usize, x: u32, z: u32) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::Argument(format!(
                "{n} qubits exceeds the maximum of {MAX_QUBITS}"
            )));
        }
        let mask = Self::mask(n);
        if x & !mask != 0 || z & !mask != 0 {
            return Err(Error::Argument(format!(
                "bit words do not fit in {n} qubits"
            )));
        }
        Ok(PauliString { n: n as u8, x, z })
    }

    /// A single-qubit operator `p` acting on `qubit`, identity elsewhere.
    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(qubit, p);
        s
    }

    fn mask(n: usize) -> u32 {
        if n == 32 {
            u32::MAX
        } else {
            (1u32 << n) - 1
        }
    }

    fn bit(&self, qubit: usize) -> u32 {
        assert!(
            qubit < self.n as usize,
            "qubit {qubit} out of range for {} qubits",
            self.n
        );
        1 << (self.n as usize - 1 - qubit)
    }

    pub fn num_qubits(&self) -> usize {
        self.n as usize
    }

    pub fn x_word(&self) -> u32 {
        self.x
    }

    pub fn z_word(&self) -> u32 {
        self.z
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        let b = self.bit(qubit);
        Pauli::from_bits(self.x & b != 0, self.z & b != 0)
    }

    pub fn set(&mut self, qubit: usize, p: Pauli) {
        let b = self.bit(qubit);
        let (x, z) = p.bits();
        self.x = if x { self.x | b } else { self.x & !b };
        self.z = if z { self.z | b } else { self.z & !b };
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Number of qubits acted on non-trivially.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Argument(format!(
                "Pauli length mismatch: {} vs {} qubits",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Phase-free product.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        PauliString {
            n: self.n,
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        }
    }

    /// Parity of the symplectic inner product; `true` means anticommuting.
    pub(crate) fn anticommutes_unchecked(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 1
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_len(other)?;
        Ok(!self.anticommutes_unchecked(other))
    }

    /// All `4^n` strings on `n` qubits, ordered by `(x, z)` as integers.
    pub fn all(n: usize) -> impl Iterator<Item = PauliString> {
        assert!(
            n <= 12,
            "enumerating all Pauli strings is limited to 12 qubits"
        );
        let side = 1u32 << n;
        (0..side).flat_map(move |x| (0..side).map(move |z| PauliString { n: n as u8, x, z }))
    }
}

/// Syndrome bits of `error` against `generators`: bit `k` is set iff the
/// error anticommutes with generator `k` (measured outcome -1).
pub fn syndrome(error: &PauliString, generators: &[PauliString]) -> Result<Vec<bool>> {
    for g in generators {
        error.check_len(g)?;
    }
    check_commuting(generators)?;
    Ok(generators
        .iter()
        .map(|g| error.anticommutes_unchecked(g))
        .collect())
}

/// Syndrome packed into an integer with generator `k` at bit `k`.
pub(crate) fn syndrome_index_unchecked(error: &PauliString, generators: &[PauliString]) -> usize {
    generators
        .iter()
        .enumerate()
        .filter(|(_, g)| error.anticommutes_unchecked(g))
        .fold(0, |acc, (k, _)| acc | (1 << k))
}

pub(crate) fn check_commuting(generators: &[PauliString]) -> Result<()> {
    for (i, a) in generators.iter().enumerate() {
        for b in &generators[i + 1..] {
            a.check_len(b)?;
            if a.anticommutes_unchecked(b) {
                return Err(Error::CodeDefinition(format!(
                    "generators {a} and {b} anticommute"
                )));
            }
        }
    }
    Ok(())
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.num_qubits() {
            write!(f, "{}", self.get(q).as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let n = s.chars().count();
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Argument(format!(
                "invalid Pauli string length {n}: {s:?}"
            )));
        }
        let mut out = PauliString::identity(n);
        for (q, c) in s.chars().enumerate() {
            let p = match c {
                'I' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => {
                    return Err(Error::Argument(format!(
                        "invalid Pauli letter {other:?} in {s:?}"
                    )))
                }
            };
            out.set(q, p);
        }
        Ok(out)
    }
}
