//! Dense state vectors and enumeration-based entropies for small chains.
//!
//! Amplitude index bit `n-1-k` belongs to qubit `k`, so qubit 0 is the most
//! significant bit, matching the left-to-right contraction order of an MPS.

use nalgebra::{Matrix2, Matrix4};
use rand::Rng;

use crate::clifford::{to_dynamic2, to_dynamic4, unitarity_deviation};
use crate::error::{Error, Result};
use crate::mps::{entropy_bits, DEGENERATE_BRANCH, MAX_DENSE_QUBITS};
use crate::pauli::{PauliString, C64};

/// Largest chain for which all 4^N Pauli expectations are enumerated.
pub const MAX_ENUMERATION_QUBITS: usize = 8;

const UNITARY_TOL: f64 = 1e-8;
const ZERO_EXPECTATION: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenyiIndex {
    /// α → 0: log of the support size.
    Zero,
    /// α → 1: stabilizer Shannon entropy.
    One,
    Two,
}

impl RenyiIndex {
    pub fn from_alpha(alpha: u32) -> Result<Self> {
        match alpha {
            0 => Ok(RenyiIndex::Zero),
            1 => Ok(RenyiIndex::One),
            2 => Ok(RenyiIndex::Two),
            _ => Err(Error::param("alpha", format!("{alpha} not in {{0, 1, 2}}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn basis_state(n_qubits: usize, bits: &[bool]) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::param("n_qubits", "must be positive"));
        }
        if n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::TooManyQubits {
                n_qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        if bits.len() != n_qubits {
            return Err(Error::param("bits", "length must equal n_qubits"));
        }
        let index = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = C64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        Self::basis_state(n_qubits, &vec![false; n_qubits])
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n_qubits || n_qubits == 0 {
            return Err(Error::param("amplitudes", "length must be a power of two"));
        }
        if n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::TooManyQubits {
                n_qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::param("amplitudes", "zero vector"));
        }
        Ok(StateVector {
            n_qubits,
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Tensor product `self ⊗ other` (self on the left).
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        StateVector::from_amplitudes(amps)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &[C64]) -> f64 {
        let ov: C64 = self.amps.iter().zip(other).map(|(a, b)| a.conj() * b).sum();
        ov.norm_sqr()
    }

    fn bit(&self, site: usize) -> usize {
        self.n_qubits - 1 - site
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_qubits {
            return Err(Error::SiteOutOfRange {
                site,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply_gate1(&mut self, site: usize, gate: &Matrix2<C64>) -> Result<()> {
        self.check_site(site)?;
        let deviation = unitarity_deviation(&to_dynamic2(gate));
        if deviation > UNITARY_TOL {
            return Err(Error::NonUnitary { deviation });
        }
        let m = 1usize << self.bit(site);
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | m]);
                self.amps[i] = gate[(0, 0)] * a0 + gate[(0, 1)] * a1;
                self.amps[i | m] = gate[(1, 0)] * a0 + gate[(1, 1)] * a1;
            }
        }
        Ok(())
    }

    /// Gate on adjacent sites `(left, left+1)`; `left` is the high index bit of the 4×4 matrix.
    pub fn apply_gate2(&mut self, left: usize, gate: &Matrix4<C64>) -> Result<()> {
        self.check_site(left + 1)?;
        let deviation = unitarity_deviation(&to_dynamic4(gate));
        if deviation > UNITARY_TOL {
            return Err(Error::NonUnitary { deviation });
        }
        let ml = 1usize << self.bit(left);
        let mr = 1usize << self.bit(left + 1);
        for i in 0..self.amps.len() {
            if i & (ml | mr) == 0 {
                let idx = [i, i | mr, i | ml, i | ml | mr];
                let v = idx.map(|j| self.amps[j]);
                for (row, &j) in idx.iter().enumerate() {
                    self.amps[j] = gate[(row, 0)] * v[0]
                        + gate[(row, 1)] * v[1]
                        + gate[(row, 2)] * v[2]
                        + gate[(row, 3)] * v[3];
                }
            }
        }
        Ok(())
    }

    pub fn prob_zero(&self, site: usize) -> Result<f64> {
        self.check_site(site)?;
        let m = 1usize << self.bit(site);
        let p0: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok(p0 / self.norm_sqr())
    }

    pub fn measure_z<R: Rng + ?Sized>(&mut self, site: usize, rng: &mut R) -> Result<u8> {
        let u: f64 = rng.random();
        self.measure_z_with(site, u)
    }

    /// Same outcome rule as [`crate::mps::MpsState::measure_z_with`].
    pub fn measure_z_with(&mut self, site: usize, u: f64) -> Result<u8> {
        let p0 = self.prob_zero(site)?;
        let mut outcome = if u < p0 { 0u8 } else { 1u8 };
        let p_out = if outcome == 0 { p0 } else { 1.0 - p0 };
        if p_out < DEGENERATE_BRANCH {
            outcome ^= 1;
        }
        let m = 1usize << self.bit(site);
        let keep_set = if outcome == 0 { 0 } else { m };
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & m != keep_set {
                *a = C64::new(0.0, 0.0);
            }
        }
        let norm = self.norm_sqr().sqrt();
        for a in self.amps.iter_mut() {
            *a /= norm;
        }
        Ok(outcome)
    }

    /// Direct `⟨ψ|P|ψ⟩` for a Hermitian Pauli string.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::param("p", "qubit count differs from the state"));
        }
        let n = self.n_qubits;
        let (mut xm, mut zm) = (0usize, 0usize);
        for k in 0..n {
            let s = p.get(k);
            xm |= (s.x() as usize) << (n - 1 - k);
            zm |= (s.z() as usize) << (n - 1 - k);
        }
        let y_count = (xm & zm).count_ones();
        // (X^x Z^z ψ)(b) = (-1)^{z·(b⊕x)} ψ(b⊕x)
        let mut acc = C64::new(0.0, 0.0);
        for b in 0..self.amps.len() {
            let c = b ^ xm;
            let sign = if (zm & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc += self.amps[b].conj() * self.amps[c] * sign;
        }
        let val = acc * i_power(y_count) * p.phase().to_complex();
        debug_assert!(val.im.abs() < ZERO_EXPECTATION, "non-Hermitian expectation {val}");
        Ok(val.re)
    }

    /// All 4^N expectations, ordered lexicographically in (x mask, z mask):
    /// entry `x·2^N + z` is `⟨σ(x, z)⟩` with the masks of [`PauliString::from_masks`].
    pub fn all_pauli_expectations(&self) -> Result<Vec<f64>> {
        let n = self.n_qubits;
        if n > MAX_ENUMERATION_QUBITS {
            return Err(Error::TooManyQubits {
                n_qubits: n,
                limit: MAX_ENUMERATION_QUBITS,
            });
        }
        let dim = 1usize << n;
        let mut out = vec![0.0; dim * dim];
        let mut f = vec![C64::new(0.0, 0.0); dim];
        for x in 0..dim {
            // f(c) = ψ*(c⊕x) ψ(c); Walsh-Hadamard over c gives Σ_c (-1)^{z·c} f(c)
            for c in 0..dim {
                f[c] = self.amps[c ^ x].conj() * self.amps[c];
            }
            walsh_hadamard(&mut f);
            for z in 0..dim {
                let v = f[z] * i_power((x & z).count_ones());
                out[x * dim + z] = v.re;
            }
        }
        Ok(out)
    }

    /// Half-chain entropy from the eigenvalues of the reduced density matrix.
    pub fn exact_entanglement(&self) -> Result<f64> {
        self.entanglement_at(self.n_qubits / 2)
    }

    /// Entropy of the first `left` qubits, in bits.
    pub fn entanglement_at(&self, left: usize) -> Result<f64> {
        if left == 0 || left >= self.n_qubits {
            return Err(Error::param("cut", "must split the chain"));
        }
        let dl = 1usize << left;
        let dr = 1usize << (self.n_qubits - left);
        let psi = faer::Mat::<C64>::from_fn(dl, dr, |i, j| self.amps[i * dr + j]);
        let sv = psi.singular_values().expect("SVD converges");
        Ok(entropy_bits(sv.iter().map(|s| s * s)))
    }

    pub fn exact_stabilizer_entropy(&self, alpha: RenyiIndex) -> Result<f64> {
        Ok(StabilizerEntropies::from_expectations(self.n_qubits, &self.all_pauli_expectations()?).get(alpha))
    }

    pub fn stabilizer_entropies(&self) -> Result<StabilizerEntropies> {
        Ok(StabilizerEntropies::from_expectations(self.n_qubits, &self.all_pauli_expectations()?))
    }
}

fn i_power(k: u32) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

fn walsh_hadamard(f: &mut [C64]) {
    let mut h = 1;
    while h < f.len() {
        for i in (0..f.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (f[j], f[j + h]);
                f[j] = a + b;
                f[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Stabilizer Rényi entropies (bits) from one enumeration of ⟨P⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilizerEntropies {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    /// `Σ_P Ξ_P`, which must equal 1.
    pub xi_total: f64,
}

impl StabilizerEntropies {
    pub fn from_expectations(n_qubits: usize, expectations: &[f64]) -> Self {
        let scale = (n_qubits as f64).exp2().recip();
        let (mut support, mut shannon, mut purity, mut total) = (0usize, 0.0, 0.0, 0.0);
        for &e in expectations {
            let e2 = e * e;
            if e.abs() >= ZERO_EXPECTATION {
                support += 1;
                shannon -= scale * e2 * e2.log2();
            }
            purity += scale * e2 * e2;
            total += scale * e2;
        }
        StabilizerEntropies {
            m0: (support as f64).log2() - n_qubits as f64,
            m1: shannon,
            m2: -purity.log2() + 0.0,
            xi_total: total,
        }
    }

    pub fn get(&self, alpha: RenyiIndex) -> f64 {
        match alpha {
            RenyiIndex::Zero => self.m0,
            RenyiIndex::One => self.m1,
            RenyiIndex::Two => self.m2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::gates;

    const EPS: f64 = 1e-12;

    fn t_plus() -> StateVector {
        let mut s = StateVector::zero_state(1).unwrap();
        s.apply_gate1(0, &gates::hadamard()).unwrap();
        s.apply_gate1(0, &gates::t_gate()).unwrap();
        s
    }

    fn bell() -> StateVector {
        let mut s = StateVector::zero_state(2).unwrap();
        s.apply_gate1(0, &gates::hadamard()).unwrap();
        s.apply_gate2(0, &gates::cnot()).unwrap();
        s
    }

    fn p(l: &str) -> PauliString {
        PauliString::parse(l).unwrap()
    }

    #[test]
    fn evolve_examples() {
        let mut s = StateVector::zero_state(3).unwrap();
        let before = s.clone();
        s.apply_gate1(1, &Matrix2::identity()).unwrap();
        assert_eq!(s, before);

        let mut s = StateVector::zero_state(1).unwrap();
        s.apply_gate1(0, &gates::pauli_x()).unwrap();
        assert_eq!(s.amplitudes()[1], C64::new(1.0, 0.0));

        let b = bell();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.amplitudes()[0].re - r).abs() < EPS);
        assert!((b.amplitudes()[3].re - r).abs() < EPS);

        let bad = Matrix2::from_element(C64::new(1.0, 0.0));
        assert!(s.apply_gate1(0, &bad).is_err());
    }

    #[test]
    fn pauli_expectations() {
        let z = StateVector::zero_state(1).unwrap();
        assert!((z.pauli_expectation(&p("Z")).unwrap() - 1.0).abs() < EPS);
        let mut plus = StateVector::zero_state(1).unwrap();
        plus.apply_gate1(0, &gates::hadamard()).unwrap();
        assert!((plus.pauli_expectation(&p("X")).unwrap() - 1.0).abs() < EPS);
        let b = bell();
        assert!((b.pauli_expectation(&p("XX")).unwrap() - 1.0).abs() < EPS);
        assert!((b.pauli_expectation(&p("ZZ")).unwrap() - 1.0).abs() < EPS);
        assert!((b.pauli_expectation(&p("YY")).unwrap() + 1.0).abs() < EPS);
        assert!(b.pauli_expectation(&p("XI")).unwrap().abs() < EPS);
    }

    #[test]
    fn enumeration_matches_direct_expectations() {
        let mut s = StateVector::zero_state(3).unwrap();
        s.apply_gate1(0, &gates::hadamard()).unwrap();
        s.apply_gate1(0, &gates::t_gate()).unwrap();
        s.apply_gate2(0, &gates::cnot()).unwrap();
        s.apply_gate1(2, &gates::hadamard()).unwrap();
        s.apply_gate2(1, &gates::cnot()).unwrap();
        s.apply_gate1(1, &gates::t_gate()).unwrap();
        let all = s.all_pauli_expectations().unwrap();
        for x in 0..8u64 {
            for z in 0..8u64 {
                let direct = s
                    .pauli_expectation(&PauliString::from_masks(3, x, z))
                    .unwrap();
                assert!((all[(x * 8 + z) as usize] - direct).abs() < EPS);
            }
        }
    }

    #[test]
    fn entanglement_examples() {
        assert_eq!(StateVector::zero_state(4).unwrap().exact_entanglement().unwrap(), 0.0);
        assert!((bell().exact_entanglement().unwrap() - 1.0).abs() < EPS);
        let mut two = bell().tensor(&bell()).unwrap();
        // (0,1),(2,3) → swap 1,2 → (0,2),(1,3)
        two.apply_gate2(1, &gates::swap()).unwrap();
        assert!((two.exact_entanglement().unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn magic_of_t_plus() {
        let m2 = t_plus().exact_stabilizer_entropy(RenyiIndex::Two).unwrap();
        assert!((m2 - (4.0f64 / 3.0).log2()).abs() < EPS);
        let pair = t_plus().tensor(&t_plus()).unwrap();
        let m2p = pair.exact_stabilizer_entropy(RenyiIndex::Two).unwrap();
        assert!((m2p - 2.0 * (4.0f64 / 3.0).log2()).abs() < EPS);
    }

    #[test]
    fn zero_state_has_no_magic() {
        let s = StateVector::zero_state(4).unwrap();
        let e = s.stabilizer_entropies().unwrap();
        assert_eq!((e.m0, e.m1, e.m2), (0.0, 0.0, 0.0));
        assert!((e.xi_total - 1.0).abs() < EPS);
    }

    #[test]
    fn enumeration_guard() {
        let s = StateVector::zero_state(9).unwrap();
        assert!(matches!(
            s.exact_stabilizer_entropy(RenyiIndex::Two),
            Err(Error::TooManyQubits { .. })
        ));
        assert!(RenyiIndex::from_alpha(3).is_err());
    }
}
