//! Stabilizer Rényi entropy of MPS states by perfect sampling of Pauli strings.
//!
//! With the state right-canonical (center on site 0), the marginal of
//! `Ξ_P = 2^{-N} ⟨P⟩²` over a prefix `P₁…P_k` equals `2^{-k} ‖L_k‖²_F`, where
//! `L_k` is the single-copy left environment `Σ A^* P A` of the prefix. Each
//! sample is drawn by one left-to-right sweep choosing `P_k` from the
//! conditional `‖L_k(P_k)‖² / (2‖L_{k-1}‖²)`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::MpsState;
use crate::pauli::{Pauli1, PauliString, C64};

/// Sample count used for each magic estimate unless configured otherwise.
pub const DEFAULT_MAGIC_SAMPLES: usize = 128;

const NORMALIZATION_TOL: f64 = 1e-6;
const MIN_MEAN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PauliSample {
    pub string: PauliString,
    /// `⟨ψ|P|ψ⟩`.
    pub expectation: f64,
    /// `Ξ_P`, the probability with which the string was drawn.
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagicEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub alpha: u32,
}

/// Read-only sampler over a right-canonical copy of a state.
pub struct PauliSampler {
    n_qubits: usize,
    slices: Vec<[DMatrix<C64>; 2]>,
    conj_slices: Vec<[DMatrix<C64>; 2]>,
}

impl PauliSampler {
    pub fn new(state: &MpsState) -> Self {
        let mut work = state.clone();
        work.move_center(0);
        let n = work.n_qubits();
        let slices: Vec<[DMatrix<C64>; 2]> = (0..n)
            .map(|k| [work.site(k).slice(0), work.site(k).slice(1)])
            .collect();
        let conj_slices = slices
            .iter()
            .map(|[a, b]| [a.conjugate(), b.conjugate()])
            .collect();
        PauliSampler {
            n_qubits: n,
            slices,
            conj_slices,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Draws one Pauli string from `Ξ_P`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PauliSample> {
        let mut env = DMatrix::<C64>::from_element(1, 1, C64::new(1.0, 0.0));
        let mut scale = 1.0f64;
        let mut weight = 1.0f64;
        let mut string = PauliString::identity(self.n_qubits);
        let i = C64::new(0.0, 1.0);
        for k in 0..self.n_qubits {
            let [a0, a1] = &self.slices[k];
            let [c0, c1] = &self.conj_slices[k];
            // T_s = Lᵀ A_s, K_{s s'} = T_sᵀ conj(A_{s'})
            let envt = env.transpose();
            let t0 = (&envt * a0).transpose();
            let t1 = (&envt * a1).transpose();
            let k00 = &t0 * c0;
            let k01 = &t0 * c1;
            let k10 = &t1 * c0;
            let k11 = &t1 * c1;
            let candidates = [
                (Pauli1::I, &k00 + &k11),
                (Pauli1::X, &k01 + &k10),
                (Pauli1::Y, (&k01 * i) - (&k10 * i)),
                (Pauli1::Z, &k00 - &k11),
            ];
            let weights: Vec<f64> = candidates.iter().map(|(_, m)| m.norm_squared()).collect();
            let total: f64 = weights.iter().sum();
            let expected = 2.0 * env.norm_squared();
            let deviation = (total - expected).abs() / expected;
            if !(deviation < NORMALIZATION_TOL) {
                return Err(Error::BrokenCanonicalForm { site: k, deviation });
            }
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = 3;
            for (j, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc && *w > 0.0 {
                    pick = j;
                    break;
                }
            }
            while weights[pick] == 0.0 {
                pick -= 1;
            }
            let (pauli, next) = &candidates[pick];
            weight *= weights[pick] / total;
            let nrm = weights[pick].sqrt();
            scale *= nrm;
            env = next / C64::new(nrm, 0.0);
            string.set(k, *pauli);
        }
        let expectation = scale * env[(0, 0)].re;
        Ok(PauliSample {
            string,
            expectation,
            weight,
        })
    }
}

pub fn sample_pauli<R: Rng + ?Sized>(state: &MpsState, rng: &mut R) -> Result<PauliSample> {
    PauliSampler::new(state).sample(rng)
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < 2 {
        return Err(Error::param("n_samples", "need at least 2 samples"));
    }
    Ok(())
}

fn squared_expectations<R: Rng + ?Sized>(
    state: &MpsState,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = PauliSampler::new(state);
    (0..n_samples)
        .map(|_| sampler.sample(rng).map(|s| (s.expectation * s.expectation).min(1.0)))
        .collect()
}

/// `M₂ ≈ −log₂(mean ⟨P⟩²)` with a jackknife error through the logarithm.
pub fn estimate_m2<R: Rng + ?Sized>(
    state: &MpsState,
    n_samples: usize,
    rng: &mut R,
) -> Result<MagicEstimate> {
    check_samples(n_samples)?;
    let xs = squared_expectations(state, n_samples, rng)?;
    m2_from_squares(&xs)
}

pub(crate) fn m2_from_squares(xs: &[f64]) -> Result<MagicEstimate> {
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let mean = sum / n;
    if mean < MIN_MEAN {
        return Err(Error::EstimatorBlowUp { mean });
    }
    let value = -mean.log2() + 0.0;
    let loo: Vec<f64> = xs
        .iter()
        .map(|x| -((sum - x) / (n - 1.0)).log2())
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let var = (n - 1.0) / n * loo.iter().map(|t| (t - loo_mean).powi(2)).sum::<f64>();
    Ok(MagicEstimate {
        value,
        std_error: var.sqrt(),
        n_samples: xs.len(),
        alpha: 2,
    })
}

/// Stabilizer Shannon entropy `M₁ ≈ mean(−log₂⟨P⟩²)`.
pub fn estimate_m1<R: Rng + ?Sized>(
    state: &MpsState,
    n_samples: usize,
    rng: &mut R,
) -> Result<MagicEstimate> {
    check_samples(n_samples)?;
    let xs = squared_expectations(state, n_samples, rng)?;
    if let Some(&x) = xs.iter().find(|&&x| x < MIN_MEAN) {
        return Err(Error::EstimatorBlowUp { mean: x });
    }
    let ys: Vec<f64> = xs.iter().map(|x| -x.log2() + 0.0).collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MagicEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        n_samples: ys.len(),
        alpha: 1,
    })
}
