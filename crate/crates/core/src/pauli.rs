//! Bit-packed Pauli strings with exact phase tracking.
//!
//! A [`PauliString`] stores `i^phase · σ(x₀,z₀) ⊗ … ⊗ σ(x_{n-1},z_{n-1})` where
//! `σ(0,0)=I`, `σ(1,0)=X`, `σ(0,1)=Z` and `σ(1,1)=Y` (the Hermitian one). With
//! this convention a string with `phase == 0` is Hermitian, and the strings
//! with phase `+1` are exactly the elements of the N-qubit Pauli set.

use std::fmt;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Power of `i`, i.e. an element of {+1, +i, −1, −i}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_power(k: u32) -> Self {
        Phase((k % 4) as u8)
    }

    pub fn power(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0.is_multiple_of(2)
    }

    pub fn to_complex(self) -> C64 {
        match self.0 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

/// Single-site Pauli operator. The discriminant is the two-bit code `x<<1 | z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli1 {
    I = 0,
    Z = 1,
    X = 2,
    Y = 3,
}

impl Pauli1 {
    pub const ALL: [Pauli1; 4] = [Pauli1::I, Pauli1::X, Pauli1::Y, Pauli1::Z];

    pub fn from_bits(x: bool, z: bool) -> Self {
        Self::from_code(((x as u8) << 1) | z as u8)
    }

    pub fn from_code(code: u8) -> Self {
        match code & 3 {
            0 => Pauli1::I,
            1 => Pauli1::Z,
            2 => Pauli1::X,
            _ => Pauli1::Y,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn x(self) -> bool {
        matches!(self, Pauli1::X | Pauli1::Y)
    }

    pub fn z(self) -> bool {
        matches!(self, Pauli1::Z | Pauli1::Y)
    }

    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli1::I => [[l, o], [o, l]],
            Pauli1::X => [[o, l], [l, o]],
            Pauli1::Y => [[o, -i], [i, o]],
            Pauli1::Z => [[l, o], [o, -l]],
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli1::I => 'I',
            Pauli1::X => 'X',
            Pauli1::Y => 'Y',
            Pauli1::Z => 'Z',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: Phase,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        PauliString {
            n_qubits,
            x: vec![0; words(n_qubits)],
            z: vec![0; words(n_qubits)],
            phase: Phase::ONE,
        }
    }

    pub fn from_paulis(paulis: &[Pauli1]) -> Self {
        let mut p = Self::identity(paulis.len());
        for (k, &s) in paulis.iter().enumerate() {
            p.set(k, s);
        }
        p
    }

    /// Parses labels like `"XIZ"`, `"-YY"` or `"+iZ"`.
    pub fn parse(label: &str) -> Result<Self> {
        let (phase, body) = if let Some(rest) = label.strip_prefix("-i") {
            (Phase::MINUS_I, rest)
        } else if let Some(rest) = label.strip_prefix("+i") {
            (Phase::I, rest)
        } else if let Some(rest) = label.strip_prefix('i') {
            (Phase::I, rest)
        } else if let Some(rest) = label.strip_prefix('-') {
            (Phase::MINUS_ONE, rest)
        } else if let Some(rest) = label.strip_prefix('+') {
            (Phase::ONE, rest)
        } else {
            (Phase::ONE, label)
        };
        let paulis = body
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli1::I),
                'X' => Ok(Pauli1::X),
                'Y' => Ok(Pauli1::Y),
                'Z' => Ok(Pauli1::Z),
                _ => Err(Error::param("label", format!("unexpected character {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if paulis.is_empty() {
            return Err(Error::param("label", "empty Pauli label"));
        }
        let mut p = Self::from_paulis(&paulis);
        p.phase = phase;
        Ok(p)
    }

    /// Hermitian string with x/z bits taken from the low `n_qubits` bits of
    /// `x_mask`/`z_mask`; bit `n-1-k` of each mask belongs to qubit `k`.
    pub fn from_masks(n_qubits: usize, x_mask: u64, z_mask: u64) -> Self {
        debug_assert!(n_qubits <= 64);
        let mut p = Self::identity(n_qubits);
        for k in 0..n_qubits {
            let b = n_qubits - 1 - k;
            p.set(
                k,
                Pauli1::from_bits((x_mask >> b) & 1 == 1, (z_mask >> b) & 1 == 1),
            );
        }
        p
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn get(&self, k: usize) -> Pauli1 {
        let (w, b) = (k / 64, k % 64);
        Pauli1::from_bits((self.x[w] >> b) & 1 == 1, (self.z[w] >> b) & 1 == 1)
    }

    pub fn set(&mut self, k: usize, s: Pauli1) {
        assert!(k < self.n_qubits, "qubit {k} out of range");
        let (w, b) = (k / 64, k % 64);
        let m = 1u64 << b;
        self.x[w] = (self.x[w] & !m) | ((s.x() as u64) << b);
        self.z[w] = (self.z[w] & !m) | ((s.z() as u64) << b);
    }

    pub fn x_bits(&self) -> &[u64] {
        &self.x
    }

    pub fn z_bits(&self) -> &[u64] {
        &self.z
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase.is_real()
    }

    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(x, z)| (x | z).count_ones() as usize)
            .sum()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let mut parity = 0u32;
        for w in 0..self.x.len() {
            parity ^= ((self.x[w] & other.z[w]) ^ (self.z[w] & other.x[w])).count_ones() & 1;
        }
        parity == 0
    }

    /// Operator product `self · rhs` with exact phase.
    pub fn mul(&self, rhs: &PauliString) -> PauliString {
        assert_eq!(self.n_qubits, rhs.n_qubits, "qubit count mismatch");
        // σ(x,z) = i^{xz} X^x Z^z and Z^a X^b = (-1)^{ab} X^b Z^a
        let mut k: u32 = self.phase.0 as u32 + rhs.phase.0 as u32;
        let mut x = Vec::with_capacity(self.x.len());
        let mut z = Vec::with_capacity(self.z.len());
        for w in 0..self.x.len() {
            let (x1, z1, x2, z2) = (self.x[w], self.z[w], rhs.x[w], rhs.z[w]);
            let (x3, z3) = (x1 ^ x2, z1 ^ z2);
            k += (x1 & z1).count_ones() + (x2 & z2).count_ones() + 2 * (z1 & x2).count_ones();
            // i^{-x3 z3}
            k += 3 * (x3 & z3).count_ones();
            x.push(x3);
            z.push(z3);
        }
        PauliString {
            n_qubits: self.n_qubits,
            x,
            z,
            phase: Phase::from_power(k),
        }
    }

    /// Two-bit-per-site code, most significant pair for qubit 0.
    pub fn code(&self) -> usize {
        assert!(self.n_qubits <= 16);
        (0..self.n_qubits).fold(0usize, |acc, k| (acc << 2) | self.get(k).code() as usize)
    }

    pub fn from_code(n_qubits: usize, code: usize) -> Self {
        let mut p = Self::identity(n_qubits);
        for k in 0..n_qubits {
            let shift = 2 * (n_qubits - 1 - k);
            p.set(k, Pauli1::from_code(((code >> shift) & 3) as u8));
        }
        p
    }

    /// Dense matrix including the phase; qubit 0 is the most significant index bit.
    pub fn matrix(&self) -> DMatrix<C64> {
        assert!(self.n_qubits <= 10, "dense Pauli matrix too large");
        let mut m = DMatrix::from_element(1, 1, self.phase.to_complex());
        for k in 0..self.n_qubits {
            let s = self.get(k).matrix();
            let sm = DMatrix::from_fn(2, 2, |r, c| s[r][c]);
            m = m.kronecker(&sm);
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase.0 {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}")?;
        for k in 0..self.n_qubits {
            write!(f, "{}", self.get(k).label())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_close(a: &DMatrix<C64>, b: &DMatrix<C64>) -> bool {
        (a - b).iter().all(|d| d.norm() < 1e-12)
    }

    #[test]
    fn single_site_products() {
        let x = PauliString::parse("X").unwrap();
        let y = PauliString::parse("Y").unwrap();
        let z = PauliString::parse("Z").unwrap();
        assert_eq!(x.mul(&y), PauliString::parse("iZ").unwrap());
        assert_eq!(y.mul(&x), PauliString::parse("-iZ").unwrap());
        assert_eq!(z.mul(&x), PauliString::parse("iY").unwrap());
        assert_eq!(y.mul(&y), PauliString::parse("I").unwrap());
    }

    #[test]
    fn parse_and_display() {
        let p = PauliString::parse("-iXYZI").unwrap();
        assert_eq!(p.to_string(), "-iXYZI");
        assert_eq!(p.weight(), 3);
        assert!(PauliString::parse("XQ").is_err());
    }

    #[test]
    fn code_roundtrip_matches_masks() {
        let p = PauliString::from_masks(3, 0b110, 0b011);
        assert_eq!(p.to_string(), "+XYZ");
        assert_eq!(PauliString::from_code(3, p.code()), p);
    }

    fn arb_pauli(n: usize) -> impl Strategy<Value = PauliString> {
        (proptest::collection::vec(0u8..4, n), 0u32..4).prop_map(|(codes, ph)| {
            let ps: Vec<_> = codes.into_iter().map(Pauli1::from_code).collect();
            PauliString::from_paulis(&ps).with_phase(Phase::from_power(ph))
        })
    }

    proptest! {
        #[test]
        fn product_matches_dense_matrices(a in arb_pauli(3), b in arb_pauli(3)) {
            let prod = a.mul(&b);
            prop_assert!(dense_close(&prod.matrix(), &(a.matrix() * b.matrix())));
        }

        #[test]
        fn commutation_matches_products(a in arb_pauli(4), b in arb_pauli(4)) {
            let ab = a.mul(&b);
            let ba = b.mul(&a);
            prop_assert_eq!(a.commutes_with(&b), ab == ba);
        }

        #[test]
        fn multiword_product_is_consistent(codes in proptest::collection::vec(0u8..4, 70)) {
            let ps: Vec<_> = codes.iter().copied().map(Pauli1::from_code).collect();
            let p = PauliString::from_paulis(&ps);
            // Hermitian strings square to +identity
            prop_assert_eq!(p.mul(&p), PauliString::identity(70));
        }
    }
}
