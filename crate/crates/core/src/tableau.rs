//! Stabilizer tableau with destabilizers, bit-packed rows.
//!
//! Rows `0..n` are destabilizers, rows `n..2n` stabilizers and row `2n` is
//! scratch space for deterministic measurements. A row `(x, z, r)` stands for
//! `(-1)^r ⊗ σ(x_k, z_k)` with `σ(1,1) = Y`.

use rand::Rng;

use crate::clifford::{CliffordGate1, PauliMap};
use crate::error::{Error, Result};
use crate::pauli::{Pauli1, PauliString, Phase};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerTableau {
    n_qubits: usize,
    words: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    r: Vec<bool>,
}

impl StabilizerTableau {
    /// `|0…0⟩`: destabilizers `X_k`, stabilizers `Z_k`.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::param("n_qubits", "must be positive"));
        }
        let words = n_qubits.div_ceil(64);
        let rows = 2 * n_qubits + 1;
        let mut t = StabilizerTableau {
            n_qubits,
            words,
            x: vec![0; rows * words],
            z: vec![0; rows * words],
            r: vec![false; rows],
        };
        for k in 0..n_qubits {
            t.x[k * words + k / 64] |= 1 << (k % 64);
            t.z[(n_qubits + k) * words + k / 64] |= 1 << (k % 64);
        }
        Ok(t)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    #[inline]
    fn bit(v: &[u64], row: usize, words: usize, q: usize) -> bool {
        (v[row * words + q / 64] >> (q % 64)) & 1 == 1
    }

    #[inline]
    fn local_code(&self, row: usize, q: usize) -> usize {
        let w = self.words;
        ((Self::bit(&self.x, row, w, q) as usize) << 1) | Self::bit(&self.z, row, w, q) as usize
    }

    #[inline]
    fn set_local(&mut self, row: usize, q: usize, code: u8) {
        let i = row * self.words + q / 64;
        let m = 1u64 << (q % 64);
        let xb = (code >> 1) & 1 == 1;
        let zb = code & 1 == 1;
        self.x[i] = if xb { self.x[i] | m } else { self.x[i] & !m };
        self.z[i] = if zb { self.z[i] | m } else { self.z[i] & !m };
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

    /// Conjugates every row by a one- or two-site Clifford given by its Pauli map.
    /// Two-site maps act on `(site, site + 1)`.
    pub fn apply_map(&mut self, site: usize, map: &PauliMap) -> Result<()> {
        match map.sites() {
            1 => {
                self.check_site(site)?;
                for row in 0..2 * self.n_qubits {
                    let (c, neg) = map.image_code(self.local_code(row, site));
                    self.set_local(row, site, c);
                    self.r[row] ^= neg;
                }
            }
            2 => {
                self.check_site(site + 1)?;
                for row in 0..2 * self.n_qubits {
                    let code = (self.local_code(row, site) << 2) | self.local_code(row, site + 1);
                    let (c, neg) = map.image_code(code);
                    self.set_local(row, site, c >> 2);
                    self.set_local(row, site + 1, c & 3);
                    self.r[row] ^= neg;
                }
            }
            k => panic!("{k}-site maps are not supported"),
        }
        Ok(())
    }

    pub fn apply_clifford1(&mut self, site: usize, gate: &CliffordGate1) -> Result<()> {
        self.apply_map(site, &gate.action)
    }

    /// Row `h` becomes `row_i · row_h`, with the sign of the Hermitian product.
    fn rowsum(&mut self, h: usize, i: usize) {
        let w = self.words;
        // σ(x,z) = i^{xz} X^x Z^z, same bookkeeping as PauliString::mul
        let mut k: u32 = 2 * (self.r[h] as u32 + self.r[i] as u32);
        for j in 0..w {
            let (x1, z1) = (self.x[i * w + j], self.z[i * w + j]);
            let (x2, z2) = (self.x[h * w + j], self.z[h * w + j]);
            let (x3, z3) = (x1 ^ x2, z1 ^ z2);
            k += (x1 & z1).count_ones() + (x2 & z2).count_ones() + 2 * (z1 & x2).count_ones();
            k += 3 * (x3 & z3).count_ones();
            self.x[h * w + j] = x3;
            self.z[h * w + j] = z3;
        }
        self.r[h] = (k % 4) >= 2;
    }

    fn copy_row(&mut self, dst: usize, src: usize) {
        let w = self.words;
        self.x.copy_within(src * w..(src + 1) * w, dst * w);
        self.z.copy_within(src * w..(src + 1) * w, dst * w);
        self.r[dst] = self.r[src];
    }

    fn clear_row(&mut self, row: usize) {
        let w = self.words;
        self.x[row * w..(row + 1) * w].fill(0);
        self.z[row * w..(row + 1) * w].fill(0);
        self.r[row] = false;
    }

    /// True when no stabilizer anticommutes with `Z_site`.
    pub fn is_deterministic(&self, site: usize) -> bool {
        let n = self.n_qubits;
        (n..2 * n).all(|row| !Self::bit(&self.x, row, self.words, site))
    }

    pub fn measure_z<R: Rng + ?Sized>(&mut self, site: usize, rng: &mut R) -> Result<u8> {
        let u: f64 = rng.random();
        self.measure_z_with(site, u)
    }

    /// Random branch: outcome 0 iff `u < 1/2`, matching the Born-rule engines.
    /// Deterministic branch: `u` is ignored.
    pub fn measure_z_with(&mut self, site: usize, u: f64) -> Result<u8> {
        self.check_site(site)?;
        let n = self.n_qubits;
        let w = self.words;
        let pivot = (n..2 * n).find(|&row| Self::bit(&self.x, row, w, site));
        match pivot {
            Some(p) => {
                for row in 0..2 * n {
                    if row != p && Self::bit(&self.x, row, w, site) {
                        self.rowsum(row, p);
                    }
                }
                self.copy_row(p - n, p);
                self.clear_row(p);
                let outcome = if u < 0.5 { 0u8 } else { 1u8 };
                self.set_local(p, site, Pauli1::Z.code());
                self.r[p] = outcome == 1;
                Ok(outcome)
            }
            None => {
                let scratch = 2 * n;
                self.clear_row(scratch);
                for d in 0..n {
                    if Self::bit(&self.x, d, w, site) {
                        self.rowsum(scratch, d + n);
                    }
                }
                Ok(self.r[scratch] as u8)
            }
        }
    }

    pub fn stabilizers(&self) -> Vec<PauliString> {
        (self.n_qubits..2 * self.n_qubits)
            .map(|row| self.row_pauli(row))
            .collect()
    }

    pub fn destabilizers(&self) -> Vec<PauliString> {
        (0..self.n_qubits).map(|row| self.row_pauli(row)).collect()
    }

    fn row_pauli(&self, row: usize) -> PauliString {
        let paulis: Vec<Pauli1> = (0..self.n_qubits)
            .map(|q| Pauli1::from_code(self.local_code(row, q) as u8))
            .collect();
        let sign = if self.r[row] { Phase::MINUS_ONE } else { Phase::ONE };
        PauliString::from_paulis(&paulis).with_phase(sign)
    }

    /// GF(2) rank of the stabilizer generators restricted to qubits `0..left`.
    pub fn restricted_rank(&self, left: usize) -> usize {
        let n = self.n_qubits;
        // pack (x | z) of the restricted columns into fresh rows
        let cols = 2 * left;
        let cw = cols.div_ceil(64).max(1);
        let mut rows: Vec<Vec<u64>> = (n..2 * n)
            .map(|row| {
                let mut v = vec![0u64; cw];
                for q in 0..left {
                    if Self::bit(&self.x, row, self.words, q) {
                        v[q / 64] |= 1 << (q % 64);
                    }
                    let zc = left + q;
                    if Self::bit(&self.z, row, self.words, q) {
                        v[zc / 64] |= 1 << (zc % 64);
                    }
                }
                v
            })
            .collect();
        gf2_rank(&mut rows, cols)
    }

    /// Half-chain entanglement entropy in bits (an integer for stabilizer states).
    pub fn entanglement_entropy(&self) -> Result<usize> {
        if !self.n_qubits.is_multiple_of(2) {
            return Err(Error::param("n_qubits", "half-chain cut needs an even chain"));
        }
        let half = self.n_qubits / 2;
        Ok(self.restricted_rank(half) - half)
    }

    /// Generators pairwise commute and the full (x|z) matrix has rank n.
    pub fn is_valid_state(&self) -> bool {
        let stabs = self.stabilizers();
        for i in 0..stabs.len() {
            for j in 0..i {
                if !stabs[i].commutes_with(&stabs[j]) {
                    return false;
                }
            }
        }
        self.restricted_rank(self.n_qubits) == self.n_qubits
    }
}

fn gf2_rank(rows: &mut [Vec<u64>], cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let (w, m) = (c / 64, 1u64 << (c % 64));
        let Some(p) = (rank..rows.len()).find(|&i| rows[i][w] & m != 0) else {
            continue;
        };
        rows.swap(rank, p);
        for i in 0..rows.len() {
            if i != rank && rows[i][w] & m != 0 {
                let (a, b) = if i < rank {
                    let (lo, hi) = rows.split_at_mut(rank);
                    (&mut lo[i], &hi[0])
                } else {
                    let (lo, hi) = rows.split_at_mut(i);
                    (&mut hi[0], &lo[rank])
                };
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    *x ^= *y;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::{numerical_action, to_dynamic2, gates, CliffordGate2, Layer, Clifford2Recipe};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(l: &str) -> PauliString {
        PauliString::parse(l).unwrap()
    }

    #[test]
    fn hadamard_turns_z_into_x() {
        let mut t = StabilizerTableau::zero_state(1).unwrap();
        let h = numerical_action(&to_dynamic2(&gates::hadamard())).unwrap();
        t.apply_map(0, &h).unwrap();
        assert_eq!(t.stabilizers(), vec![p("X")]);
    }

    #[test]
    fn cnot_propagation() {
        let mut t = StabilizerTableau::zero_state(2).unwrap();
        t.apply_map(0, &CliffordGate2::from_layers(&[Layer::CnotLeftControl]).action)
            .unwrap();
        assert_eq!(t.stabilizers(), vec![p("ZI"), p("ZZ")]);
    }

    fn bell() -> StabilizerTableau {
        let mut t = StabilizerTableau::zero_state(2).unwrap();
        let h = numerical_action(&to_dynamic2(&gates::hadamard())).unwrap();
        t.apply_map(0, &h).unwrap();
        t.apply_map(0, &CliffordGate2::from_layers(&[Layer::CnotLeftControl]).action)
            .unwrap();
        t
    }

    #[test]
    fn measurements() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = StabilizerTableau::zero_state(3).unwrap();
        assert!(t.is_deterministic(1));
        assert_eq!(t.measure_z(1, &mut rng).unwrap(), 0);

        for _ in 0..50 {
            let mut b = bell();
            assert!(!b.is_deterministic(0));
            let o1 = b.measure_z(0, &mut rng).unwrap();
            assert!(b.is_deterministic(1));
            assert_eq!(b.measure_z(1, &mut rng).unwrap(), o1);
            assert!(b.is_valid_state());
        }
    }

    #[test]
    fn plus_state_outcomes_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = numerical_action(&to_dynamic2(&gates::hadamard())).unwrap();
        let mut zeros = 0;
        for _ in 0..10_000 {
            let mut t = StabilizerTableau::zero_state(1).unwrap();
            t.apply_map(0, &h).unwrap();
            zeros += (t.measure_z(0, &mut rng).unwrap() == 0) as usize;
        }
        let f = zeros as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&f), "{f}");
    }

    #[test]
    fn entanglement_of_simple_states() {
        assert_eq!(StabilizerTableau::zero_state(4).unwrap().entanglement_entropy().unwrap(), 0);
        assert_eq!(bell().entanglement_entropy().unwrap(), 1);
    }

    #[test]
    fn random_circuits_keep_a_valid_tableau() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 70; // spans two words
        let mut t = StabilizerTableau::zero_state(n).unwrap();
        for step in 0..20 {
            for left in (step % 2..n - 1).step_by(2) {
                t.apply_map(left, &Clifford2Recipe::sample(&mut rng).action()).unwrap();
            }
            for q in (0..n).step_by(5) {
                t.measure_z(q, &mut rng).unwrap();
            }
            assert!(t.is_valid_state());
            let e = t.entanglement_entropy().unwrap();
            assert!(e <= n / 2);
        }
    }
}
