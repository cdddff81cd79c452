//! Open-boundary matrix product states for qubit chains.
//!
//! Site tensors are stored row-major with index order (left bond, physical,
//! right bond), so the same buffer reads as a `(2·l) × r` matrix (left
//! grouping) or an `l × (2·r)` matrix (right grouping). The state is always
//! kept in mixed canonical form around `center`.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors, SvdParams};
use faer::{Auto, Par, Spec};
use nalgebra::{DMatrix, Matrix2, Matrix4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clifford::{to_dynamic2, to_dynamic4, unitarity_deviation};
use crate::error::{Error, Result};
use crate::pauli::C64;

/// Largest chain that may be expanded into a dense state vector.
pub const MAX_DENSE_QUBITS: usize = 14;

/// Outcome probabilities below this are treated as impossible branches.
pub const DEGENERATE_BRANCH: f64 = 1e-14;

const UNITARY_TOL: f64 = 1e-8;
const ENTROPY_CUTOFF: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub rel_threshold: f64,
    pub max_bond: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            rel_threshold: 1e-6,
            max_bond: 256,
        }
    }
}

impl TruncationPolicy {
    /// The looser thresholds used to check convergence of the default ones.
    pub fn convergence_check() -> Self {
        TruncationPolicy {
            rel_threshold: 1e-5,
            max_bond: 128,
        }
    }

    /// No truncation at all.
    pub fn exact() -> Self {
        TruncationPolicy {
            rel_threshold: 0.0,
            max_bond: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_threshold >= 0.0) {
            return Err(Error::param("rel_threshold", "must be non-negative"));
        }
        if self.max_bond < 1 {
            return Err(Error::param("max_bond", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of singular values to keep from a non-increasing list.
    fn keep(&self, sorted: &[f64]) -> usize {
        let cutoff = self.rel_threshold * sorted[0];
        let above = sorted.iter().take_while(|&&s| s >= cutoff).count();
        above.min(self.max_bond).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    left: usize,
    right: usize,
    data: Vec<C64>,
}

impl SiteTensor {
    fn product(amp0: C64, amp1: C64) -> Self {
        SiteTensor {
            left: 1,
            right: 1,
            data: vec![amp0, amp1],
        }
    }

    pub fn left_dim(&self) -> usize {
        self.left
    }

    pub fn right_dim(&self) -> usize {
        self.right
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> C64 {
        self.data[(a * 2 + s) * self.right + b]
    }

    /// The `l × r` matrix `A[:, s, :]`.
    pub fn slice(&self, s: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.left, self.right, |a, b| self.get(a, s, b))
    }

    fn left_grouped(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(2 * self.left, self.right, &self.data)
    }

    fn right_grouped(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.left, 2 * self.right, &self.data)
    }

    fn from_left_grouped(m: &DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows() % 2, 0);
        SiteTensor {
            left: m.nrows() / 2,
            right: m.ncols(),
            data: row_major(m),
        }
    }

    fn from_right_grouped(m: &DMatrix<C64>) -> Self {
        debug_assert_eq!(m.ncols() % 2, 0);
        SiteTensor {
            left: m.nrows(),
            right: m.ncols() / 2,
            data: row_major(m),
        }
    }

    fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn row_major(m: &DMatrix<C64>) -> Vec<C64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Singular values sorted non-increasing, ties kept in original order, with
/// the matching column/row permutation of `U` and `V†`.
fn sorted_svd(m: DMatrix<C64>) -> Result<Factors> {
    let fm = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let mut qr_only: SvdParams = Auto::<C64>::auto();
    qr_only.recursion_threshold = usize::MAX;
    let (u, s, v) = faer_svd(&fm, Auto::<C64>::auto())
        .or_else(|| faer_svd(&fm, qr_only))
        .or_else(|| nalgebra_svd(m.clone()))
        .ok_or(Error::SvdFailed {
            rows: m.nrows(),
            cols: m.ncols(),
        })?;
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let sorted = order.iter().map(|&i| s[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]);
    let v_t = DMatrix::from_fn(k, v.nrows(), |r, c| v[(c, order[r])].conj());
    Ok((u, sorted, v_t))
}

type Factors = (DMatrix<C64>, Vec<f64>, DMatrix<C64>);

fn all_finite<'a>(it: impl IntoIterator<Item = &'a C64>) -> bool {
    it.into_iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// Thin SVD `m = U S V†`; `None` if faer fails or returns non-finite factors.
fn faer_svd(m: &faer::Mat<C64>, params: SvdParams) -> Option<Factors> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let mut u = faer::Mat::<C64>::zeros(rows, k);
    let mut v = faer::Mat::<C64>::zeros(cols, k);
    let mut s = Diag::<C64>::zeros(k);
    let spec: Spec<SvdParams, C64> = params.into();
    let mut buf = MemBuffer::new(svd_scratch::<C64>(
        rows,
        cols,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        Par::Seq,
        spec,
    ));
    svd(
        m.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        spec,
    )
    .ok()?;
    let u = DMatrix::from_fn(rows, k, |i, j| u[(i, j)]);
    let v = DMatrix::from_fn(cols, k, |i, j| v[(i, j)]);
    let s: Vec<f64> = (0..k).map(|i| s[i].re).collect();
    let ok = all_finite(u.iter()) && all_finite(v.iter()) && s.iter().all(|x| x.is_finite());
    ok.then_some((u, s, v))
}

fn nalgebra_svd(m: DMatrix<C64>) -> Option<Factors> {
    let svd = m.try_svd(true, true, f64::EPSILON, 0)?;
    let (u, v_t) = (svd.u?, svd.v_t?);
    let s = svd.singular_values.iter().copied().collect::<Vec<_>>();
    let ok = all_finite(u.iter()) && all_finite(v_t.iter()) && s.iter().all(|x| x.is_finite());
    ok.then(|| (u, s, v_t.adjoint()))
}

fn check_unitary(u: &DMatrix<C64>) -> Result<()> {
    let deviation = unitarity_deviation(u);
    if deviation > UNITARY_TOL {
        return Err(Error::NonUnitary { deviation });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct MpsState {
    n_qubits: usize,
    sites: Vec<SiteTensor>,
    center: usize,
    policy: TruncationPolicy,
}

impl MpsState {
    /// Product state `|b₀ b₁ … b_{n-1}⟩`.
    pub fn basis_state(n_qubits: usize, bits: &[bool], policy: TruncationPolicy) -> Result<Self> {
        if n_qubits < 2 || !n_qubits.is_multiple_of(2) {
            return Err(Error::param(
                "n_qubits",
                format!("{n_qubits} must be even and at least 2 for a half-chain cut"),
            ));
        }
        if bits.len() != n_qubits {
            return Err(Error::param("bits", "length must equal n_qubits"));
        }
        policy.validate()?;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let sites = bits
            .iter()
            .map(|&b| {
                if b {
                    SiteTensor::product(zero, one)
                } else {
                    SiteTensor::product(one, zero)
                }
            })
            .collect();
        Ok(MpsState {
            n_qubits,
            sites,
            center: 0,
            policy,
        })
    }

    pub fn zero_state(n_qubits: usize, policy: TruncationPolicy) -> Result<Self> {
        Self::basis_state(n_qubits, &vec![false; n_qubits], policy)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn site(&self, k: usize) -> &SiteTensor {
        &self.sites[k]
    }

    /// Dimensions of the `n-1` internal bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.n_qubits - 1]
            .iter()
            .map(|s| s.right)
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
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

    /// Moves the orthogonality center with QR sweeps.
    pub fn move_center(&mut self, to: usize) {
        assert!(to < self.n_qubits);
        while self.center < to {
            let k = self.center;
            let qr = self.sites[k].left_grouped().qr();
            let (q, r) = (qr.q(), qr.r());
            self.sites[k] = SiteTensor::from_left_grouped(&q);
            let next = &r * self.sites[k + 1].right_grouped();
            self.sites[k + 1] = SiteTensor::from_right_grouped(&next);
            self.center += 1;
        }
        while self.center > to {
            let k = self.center;
            let qr = self.sites[k].right_grouped().adjoint().qr();
            let (q, r) = (qr.q(), qr.r());
            self.sites[k] = SiteTensor::from_right_grouped(&q.adjoint());
            let prev = self.sites[k - 1].left_grouped() * r.adjoint();
            self.sites[k - 1] = SiteTensor::from_left_grouped(&prev);
            self.center -= 1;
        }
    }

    pub fn apply_gate1(&mut self, site: usize, gate: &Matrix2<C64>) -> Result<()> {
        self.check_site(site)?;
        check_unitary(&to_dynamic2(gate))?;
        if *gate == Matrix2::identity() {
            return Ok(());
        }
        let t = &mut self.sites[site];
        let (l, r) = (t.left, t.right);
        for a in 0..l {
            for b in 0..r {
                let i0 = (a * 2) * r + b;
                let i1 = (a * 2 + 1) * r + b;
                let (v0, v1) = (t.data[i0], t.data[i1]);
                t.data[i0] = gate[(0, 0)] * v0 + gate[(0, 1)] * v1;
                t.data[i1] = gate[(1, 0)] * v0 + gate[(1, 1)] * v1;
            }
        }
        Ok(())
    }

    /// Applies a two-site gate on `(left, left+1)`, truncates the new bond and
    /// renormalizes. Leaves the center on `left+1`. Returns the discarded
    /// weight (sum of dropped squared singular values, before renormalizing).
    pub fn apply_gate2(&mut self, left: usize, gate: &Matrix4<C64>) -> Result<f64> {
        if left + 1 >= self.n_qubits {
            return Err(Error::SiteOutOfRange {
                site: left + 1,
                n_qubits: self.n_qubits,
            });
        }
        check_unitary(&to_dynamic4(gate))?;
        if self.center != left && self.center != left + 1 {
            self.move_center(left);
        }
        let a = &self.sites[left];
        let b = &self.sites[left + 1];
        let (l, r) = (a.left, b.right);
        let theta = a.left_grouped() * b.right_grouped();
        // theta[(a, s1), (s2, b)]
        let mut out = DMatrix::<C64>::zeros(2 * l, 2 * r);
        for x in 0..l {
            for y in 0..r {
                let v = [
                    theta[(2 * x, y)],
                    theta[(2 * x, r + y)],
                    theta[(2 * x + 1, y)],
                    theta[(2 * x + 1, r + y)],
                ];
                for t1 in 0..2 {
                    for t2 in 0..2 {
                        let row = t1 * 2 + t2;
                        let w = gate[(row, 0)] * v[0]
                            + gate[(row, 1)] * v[1]
                            + gate[(row, 2)] * v[2]
                            + gate[(row, 3)] * v[3];
                        out[(2 * x + t1, t2 * r + y)] = w;
                    }
                }
            }
        }
        let (u, s, v_t) = sorted_svd(out)?;
        let keep = self.policy.keep(&s);
        let kept_weight: f64 = s[..keep].iter().map(|x| x * x).sum();
        let dropped: f64 = s[keep..].iter().map(|x| x * x).sum();
        let scale = 1.0 / kept_weight.sqrt();
        let new_a = u.columns(0, keep).into_owned();
        let mut new_b = v_t.rows(0, keep).into_owned();
        for (k, mut row) in new_b.row_iter_mut().enumerate() {
            row *= C64::new(s[k] * scale, 0.0);
        }
        self.sites[left] = SiteTensor::from_left_grouped(&new_a);
        self.sites[left + 1] = SiteTensor::from_right_grouped(&new_b);
        self.center = left + 1;
        Ok(dropped)
    }

    /// Probability of outcome 0 for a Z measurement on `site`. Moves the center.
    pub fn prob_zero(&mut self, site: usize) -> Result<f64> {
        self.check_site(site)?;
        self.move_center(site);
        let t = &self.sites[site];
        let mut p0 = 0.0;
        for a in 0..t.left {
            for b in 0..t.right {
                p0 += t.get(a, 0, b).norm_sqr();
            }
        }
        Ok(p0 / t.norm_sqr())
    }

    /// Born-rule Z measurement using one uniform draw from `rng`.
    pub fn measure_z<R: Rng + ?Sized>(&mut self, site: usize, rng: &mut R) -> Result<u8> {
        let u: f64 = rng.random();
        self.measure_z_with(site, u)
    }

    /// Measurement with an externally supplied uniform variate `u ∈ [0, 1)`:
    /// outcome 0 iff `u < P(0)`, unless that branch is degenerate.
    pub fn measure_z_with(&mut self, site: usize, u: f64) -> Result<u8> {
        let p0 = self.prob_zero(site)?;
        let mut outcome = if u < p0 { 0u8 } else { 1u8 };
        let p_out = if outcome == 0 { p0 } else { 1.0 - p0 };
        if p_out < DEGENERATE_BRANCH {
            outcome ^= 1;
        }
        let t = &mut self.sites[site];
        let kill = 1 - outcome as usize;
        for a in 0..t.left {
            for b in 0..t.right {
                t.data[(a * 2 + kill) * t.right + b] = C64::new(0.0, 0.0);
            }
        }
        let norm = t.norm_sqr().sqrt();
        for c in t.data.iter_mut() {
            *c /= norm;
        }
        Ok(outcome)
    }

    /// Schmidt coefficients across the half-chain cut, non-increasing.
    pub fn schmidt_coefficients(&self) -> Vec<f64> {
        let cut = self.n_qubits / 2 - 1;
        let mut work;
        let state = if self.center == cut {
            self
        } else {
            work = self.clone();
            work.move_center(cut);
            &work
        };
        let m = state.sites[cut].left_grouped();
        let mut s: Vec<f64> = m
            .singular_values_unordered()
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Half-chain von Neumann entropy in bits.
    pub fn entanglement_entropy(&self) -> f64 {
        entropy_bits(self.schmidt_coefficients().iter().map(|s| s * s))
    }

    /// `⟨ψ|ψ⟩` by full transfer-matrix contraction.
    pub fn norm_sqr(&self) -> f64 {
        let mut env = DMatrix::<C64>::from_element(1, 1, C64::new(1.0, 0.0));
        for t in &self.sites {
            let mut next = DMatrix::<C64>::zeros(t.right, t.right);
            for s in 0..2 {
                let a = t.slice(s);
                next += a.adjoint() * &env * &a;
            }
            env = next;
        }
        env[(0, 0)].re
    }

    /// Largest deviation from left (right) orthonormality over sites left
    /// (right) of the center.
    pub fn canonical_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, t) in self.sites.iter().enumerate() {
            if k == self.center {
                continue;
            }
            let g = if k < self.center {
                let m = t.left_grouped();
                m.adjoint() * m
            } else {
                let m = t.right_grouped();
                &m * m.adjoint()
            };
            let id = DMatrix::<C64>::identity(g.nrows(), g.ncols());
            worst = worst.max((g - id).iter().map(|d| d.norm()).fold(0.0, f64::max));
        }
        worst
    }

    pub fn to_state_vector(&self) -> Result<Vec<C64>> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::TooManyQubits {
                n_qubits: self.n_qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        // rows: prefix index, columns: open right bond
        let mut acc = vec![C64::new(1.0, 0.0)];
        let mut rows = 1usize;
        let mut bond = 1usize;
        for t in &self.sites {
            let r = t.right;
            let mut next = vec![C64::new(0.0, 0.0); rows * 2 * r];
            for i in 0..rows {
                for a in 0..bond {
                    let c = acc[i * bond + a];
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for s in 0..2 {
                        for b in 0..r {
                            next[(i * 2 + s) * r + b] += c * t.get(a, s, b);
                        }
                    }
                }
            }
            acc = next;
            rows *= 2;
            bond = r;
        }
        Ok(acc)
    }
}

/// `−Σ w log₂ w` over weights, skipping weights below 1e-15.
pub fn entropy_bits(weights: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = weights
        .into_iter()
        .filter(|&w| w >= ENTROPY_CUTOFF)
        .map(|w| -w * w.log2())
        .sum();
    h.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::{gates, sample_clifford2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-10;

    fn bell_pair(n: usize, left: usize) -> MpsState {
        let mut s = MpsState::zero_state(n, TruncationPolicy::default()).unwrap();
        s.apply_gate1(left, &gates::hadamard()).unwrap();
        s.apply_gate2(left, &gates::cnot()).unwrap();
        s
    }

    fn z_expectation(s: &MpsState, site: usize) -> f64 {
        let mut c = s.clone();
        2.0 * c.prob_zero(site).unwrap() - 1.0
    }

    #[test]
    fn basis_states() {
        let s = MpsState::zero_state(4, TruncationPolicy::default()).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < EPS);
        assert_eq!(s.entanglement_entropy(), 0.0);

        let s = MpsState::basis_state(2, &[false, true], TruncationPolicy::default()).unwrap();
        assert!((z_expectation(&s, 0) - 1.0).abs() < EPS);
        assert!((z_expectation(&s, 1) + 1.0).abs() < EPS);

        let s = MpsState::basis_state(8, &[true, false, true, true, false, false, true, false], TruncationPolicy::default()).unwrap();
        assert!(s.bond_dims().iter().all(|&d| d == 1));

        assert!(MpsState::zero_state(5, TruncationPolicy::default()).is_err());
    }

    #[test]
    fn single_site_gates() {
        let mut s = MpsState::zero_state(2, TruncationPolicy::default()).unwrap();
        s.apply_gate1(0, &gates::hadamard()).unwrap();
        let v = s.to_state_vector().unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].re - r).abs() < EPS && (v[2].re - r).abs() < EPS);

        let before = s.clone();
        s.apply_gate1(1, &Matrix2::identity()).unwrap();
        assert_eq!(before.sites, s.sites);

        let bad = Matrix2::new(
            C64::new(1.0, 0.0),
            C64::new(0.1, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
        );
        assert!(matches!(s.apply_gate1(0, &bad), Err(Error::NonUnitary { .. })));
    }

    #[test]
    fn bell_state_schmidt_and_entropy() {
        let s = bell_pair(2, 0);
        let v = s.to_state_vector().unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0].re - r).abs() < EPS && (v[3].re - r).abs() < EPS);
        assert!(v[1].norm() < EPS && v[2].norm() < EPS);
        let sc = s.schmidt_coefficients();
        assert_eq!(sc.len(), 2);
        assert!(sc.iter().all(|x| (x - r).abs() < EPS));
        assert!((s.entanglement_entropy() - 1.0).abs() < EPS);
    }

    #[test]
    fn two_bell_pairs_across_cut() {
        // pairs on (0,1) and (2,3), then swapped into (0,2) and (1,3)
        let mut s = bell_pair(4, 0);
        s.apply_gate1(2, &gates::hadamard()).unwrap();
        s.apply_gate2(2, &gates::cnot()).unwrap();
        assert!(s.entanglement_entropy().abs() < EPS);
        s.apply_gate2(1, &gates::swap()).unwrap();
        assert!((s.entanglement_entropy() - 2.0).abs() < EPS);
    }

    #[test]
    fn ghz_schmidt_coefficients() {
        for n in [2usize, 4, 6, 8] {
            let mut s = MpsState::zero_state(n, TruncationPolicy::default()).unwrap();
            s.apply_gate1(0, &gates::hadamard()).unwrap();
            for k in 0..n - 1 {
                s.apply_gate2(k, &gates::cnot()).unwrap();
            }
            let sc = s.schmidt_coefficients();
            assert_eq!(sc.len(), 2, "n = {n}");
            let sum: f64 = sc.iter().map(|x| x * x).sum();
            assert!((sum - 1.0).abs() < EPS);
        }
    }

    #[test]
    fn swap_twice_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = MpsState::zero_state(4, TruncationPolicy::default()).unwrap();
        for k in 0..3 {
            s.apply_gate2(k, &sample_clifford2(&mut rng).unitary).unwrap();
        }
        let before = s.to_state_vector().unwrap();
        s.apply_gate2(1, &gates::swap()).unwrap();
        s.apply_gate2(1, &gates::swap()).unwrap();
        let after = s.to_state_vector().unwrap();
        let overlap: C64 = before.iter().zip(&after).map(|(a, b)| a.conj() * b).sum();
        assert!((overlap.norm() - 1.0).abs() < EPS);
    }

    #[test]
    fn random_clifford_on_product_state_has_bond_at_most_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut s = MpsState::zero_state(4, TruncationPolicy::default()).unwrap();
            s.apply_gate2(1, &sample_clifford2(&mut rng).unitary).unwrap();
            assert!(s.max_bond_dim() <= 2);
        }
    }

    #[test]
    fn measurement_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = MpsState::zero_state(2, TruncationPolicy::default()).unwrap();
        let v = s.to_state_vector().unwrap();
        assert_eq!(s.measure_z(0, &mut rng).unwrap(), 0);
        assert_eq!(v, s.to_state_vector().unwrap());

        for _ in 0..20 {
            let mut b = bell_pair(2, 0);
            let o1 = b.measure_z(0, &mut rng).unwrap();
            let o2 = b.measure_z(1, &mut rng).unwrap();
            assert_eq!(o1, o2);
            assert!((b.norm_sqr() - 1.0).abs() < EPS);
        }
    }

    #[test]
    fn degenerate_branch_is_never_selected() {
        let mut s = MpsState::zero_state(2, TruncationPolicy::default()).unwrap();
        // P(1) = 0, so an out-of-range draw must still give outcome 0
        assert_eq!(s.measure_z_with(0, 1.0).unwrap(), 0);
        let mut s = MpsState::basis_state(2, &[true, false], TruncationPolicy::default()).unwrap();
        assert_eq!(s.measure_z_with(0, 0.0).unwrap(), 1);
    }

    #[test]
    fn plus_state_measurement_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut zeros = 0;
        for _ in 0..10_000 {
            let mut s = MpsState::zero_state(2, TruncationPolicy::default()).unwrap();
            s.apply_gate1(1, &gates::hadamard()).unwrap();
            if s.measure_z(1, &mut rng).unwrap() == 0 {
                zeros += 1;
            }
        }
        let f = zeros as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&f), "frequency {f}");
    }

    #[test]
    fn canonical_form_and_norm_survive_random_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut s = MpsState::zero_state(10, TruncationPolicy::default()).unwrap();
        for step in 0..40 {
            let off = step % 2;
            for left in (off..9).step_by(2) {
                s.apply_gate2(left, &sample_clifford2(&mut rng).unitary).unwrap();
            }
            s.apply_gate1(step % 10, &gates::t_gate()).unwrap();
            if step % 3 == 0 {
                s.measure_z((step * 7) % 10, &mut rng).unwrap();
            }
            assert!((s.norm_sqr() - 1.0).abs() < EPS);
            assert!(s.canonical_deviation() < 1e-8);
            let chi = s.bond_dims()[4] as f64;
            assert!(s.entanglement_entropy() <= chi.log2() + 1e-9);
        }
    }

    #[test]
    fn dense_guard() {
        let s = MpsState::zero_state(16, TruncationPolicy::default()).unwrap();
        assert!(matches!(s.to_state_vector(), Err(Error::TooManyQubits { .. })));
    }

    // two-site block from an N = 48 trajectory; faer's default SVD returns NaN vectors
    #[test]
    fn degenerate_block_gets_finite_svd() {
        let bytes = include_bytes!("../tests/data/degenerate_theta.bin");
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let m = DMatrix::from_fn(128, 128, |i, j| {
            let k = 2 * (i * 128 + j);
            C64::new(vals[k], vals[k + 1])
        });
        let fm = faer::Mat::<C64>::from_fn(128, 128, |i, j| m[(i, j)]);
        assert!(faer_svd(&fm, Auto::<C64>::auto()).is_none());

        let (u, s, v_t) = sorted_svd(m.clone()).unwrap();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let mut us = u.clone();
        for (k, mut col) in us.column_iter_mut().enumerate() {
            col *= C64::new(s[k], 0.0);
        }
        assert!((us * &v_t - &m).norm() < 1e-12);
        assert!(unitarity_deviation(&u) < 1e-10);
        assert!(unitarity_deviation(&v_t.adjoint()) < 1e-10);
    }
}
