//! Cross-engine consistency suites: MPS and tableau against the dense state
//! vector, the Pauli sampler against full enumeration, and the magic-monotone
//! properties on stabilizer states.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::circuit::{CircuitParams, Engine, EngineKind, MpsEngine, Trajectory};
use crate::clifford::{gates, sample_clifford1, Clifford2Recipe};
use crate::error::Result;
use crate::exact::{RenyiIndex, StateVector};
use crate::magic::PauliSampler;
use crate::mps::{MpsState, TruncationPolicy};
use crate::pauli::PauliString;
use crate::rng::{mix, StreamRng};
use crate::tableau::StabilizerTableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            _ => Err(crate::Error::param("level", format!("expected fast or full, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Lockstep MPS (untruncated) and state-vector trajectories under shared
/// seeds. Checks per-step fidelity, measurement records and entanglement.
pub fn mps_vs_exact(n: usize, circuits: usize, seed: u64) -> Result<CheckResult> {
    let mut params = CircuitParams::new(n, 0.2, 2.0, 1.0, EngineKind::Mps);
    params.truncation = TruncationPolicy::exact();
    let mut worst_infidelity: f64 = 0.0;
    let mut worst_entropy: f64 = 0.0;
    let mut outcomes_match = true;
    for c in 0..circuits {
        let s = mix(seed, &[c as u64]);
        let mps = MpsEngine {
            state: MpsState::zero_state(n, params.truncation)?,
            magic_samples: params.magic_samples,
        };
        let mut a = Trajectory::new(params.clone(), s, mps)?;
        let mut b = Trajectory::new(params.clone(), s, StateVector::zero_state(n)?)?;
        for _ in 0..params.total_steps {
            a.step()?;
            b.step()?;
            let fid = b.engine().fidelity(&a.engine().state.to_state_vector()?);
            worst_infidelity = worst_infidelity.max(1.0 - fid);
            let de = (a.engine().entanglement()? - b.engine().entanglement()?).abs();
            worst_entropy = worst_entropy.max(de);
        }
        outcomes_match &= a.outcomes() == b.outcomes();
    }
    Ok(CheckResult {
        name: "mps-vs-exact",
        passed: worst_infidelity <= 1e-10 && worst_entropy <= 1e-8 && outcomes_match,
        detail: format!(
            "N = {n}, {circuits} circuits: max infidelity {worst_infidelity:.2e}, max entropy gap {worst_entropy:.2e}, outcomes {}",
            if outcomes_match { "identical" } else { "DIFFER" }
        ),
    })
}

/// Lockstep Clifford-only trajectories on the tableau and the state vector.
/// Every stabilizer generator must have expectation +1 on the dense state.
pub fn tableau_vs_exact(n: usize, circuits: usize, seed: u64) -> Result<CheckResult> {
    let params = CircuitParams::new(n, 0.15, 0.0, 1.0, EngineKind::Tableau);
    let mut worst_stab: f64 = 0.0;
    let mut worst_entropy: f64 = 0.0;
    let mut outcomes_match = true;
    for c in 0..circuits {
        let s = mix(seed, &[c as u64]);
        let mut a = Trajectory::new(params.clone(), s, StabilizerTableau::zero_state(n)?)?;
        let mut b = Trajectory::new(params.clone(), s, StateVector::zero_state(n)?)?;
        for _ in 0..params.total_steps {
            a.step()?;
            b.step()?;
            for g in a.engine().stabilizers() {
                worst_stab = worst_stab.max((b.engine().pauli_expectation(&g)? - 1.0).abs());
            }
            let de = (Engine::entanglement(a.engine())? - b.engine().exact_entanglement()?).abs();
            worst_entropy = worst_entropy.max(de);
        }
        outcomes_match &= a.outcomes() == b.outcomes();
    }
    Ok(CheckResult {
        name: "tableau-vs-exact",
        passed: worst_stab <= 1e-9 && worst_entropy <= 1e-8 && outcomes_match,
        detail: format!(
            "N = {n}, {circuits} circuits: max stabilizer deviation {worst_stab:.2e}, max entropy gap {worst_entropy:.2e}, outcomes {}",
            if outcomes_match { "identical" } else { "DIFFER" }
        ),
    })
}

/// A random brickwork Clifford circuit of `depth` layers with a T gate
/// inserted on each listed `(layer, site)`, built on both an MPS and a dense
/// state.
pub fn random_circuit_state(
    n: usize,
    depth: usize,
    t_gates: &[(usize, usize)],
    rng: &mut StreamRng,
) -> Result<(MpsState, StateVector)> {
    let mut mps = MpsState::zero_state(n, TruncationPolicy::exact())?;
    let mut exact = StateVector::zero_state(n)?;
    let t = gates::t_gate();
    for layer in 0..depth {
        for site in 0..n {
            let g = sample_clifford1(rng);
            mps.apply_gate1(site, &g.unitary)?;
            exact.apply_gate1(site, &g.unitary)?;
        }
        for left in (layer % 2..n - 1).step_by(2) {
            let u = Clifford2Recipe::sample(rng).unitary();
            mps.apply_gate2(left, &u)?;
            exact.apply_gate2(left, &u)?;
        }
        for &(l, site) in t_gates {
            if l == layer {
                mps.apply_gate1(site, &t)?;
                exact.apply_gate1(site, &t)?;
            }
        }
    }
    Ok((mps, exact))
}

fn pauli_index(p: &PauliString) -> usize {
    let n = p.n_qubits();
    let (mut xm, mut zm) = (0usize, 0usize);
    for k in 0..n {
        let s = p.get(k);
        xm |= (s.x() as usize) << (n - 1 - k);
        zm |= (s.z() as usize) << (n - 1 - k);
    }
    (xm << n) | zm
}

/// Total-variation distance between sampled Pauli frequencies and the exact
/// distribution `2^{-N}⟨P⟩²`.
pub fn sampler_total_variation(
    mps: &MpsState,
    exact: &StateVector,
    samples: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let n = exact.n_qubits();
    let xi: Vec<f64> = exact
        .all_pauli_expectations()?
        .iter()
        .map(|e| e * e / (1u64 << n) as f64)
        .collect();
    let sampler = PauliSampler::new(mps);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for _ in 0..samples {
        *counts.entry(pauli_index(&sampler.sample(rng)?.string)).or_default() += 1;
    }
    let tv = xi
        .iter()
        .enumerate()
        .map(|(i, &x)| (counts.get(&i).copied().unwrap_or(0) as f64 / samples as f64 - x).abs())
        .sum::<f64>();
    Ok(0.5 * tv)
}

/// Sampler against enumeration on Clifford-scrambled states carrying one T
/// gate each.
pub fn sampler_vs_enumeration(n: usize, states: usize, samples: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let site = rng.random_range(0..n);
        let (mps, exact) = random_circuit_state(n, n, &[(n / 2, site)], &mut rng)?;
        worst = worst.max(sampler_total_variation(&mps, &exact, samples, &mut rng)?);
    }
    Ok(CheckResult {
        name: "sampler-vs-enumeration",
        passed: worst < 0.05,
        detail: format!("N = {n}, {states} states, {samples} samples: max TV distance {worst:.4}"),
    })
}

/// Faithfulness, ordering and T-count bounds of the exact stabilizer
/// entropies on random circuits.
pub fn magic_properties(states: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut worst_stab: f64 = 0.0;
    let mut violations = Vec::new();
    for i in 0..states {
        let n = 2 + 2 * rng.random_range(0..4usize);
        let (_, clifford) = random_circuit_state(n, 4, &[], &mut rng)?;
        let m = clifford.stabilizer_entropies()?;
        worst_stab = worst_stab.max(m.m0.abs()).max(m.m1.abs()).max(m.m2.abs());
        let k = rng.random_range(1..=4usize);
        let ts: Vec<(usize, usize)> = (0..k).map(|_| (rng.random_range(0..4), rng.random_range(0..n))).collect();
        let (_, magic) = random_circuit_state(n, 4, &ts, &mut rng)?;
        let m = magic.stabilizer_entropies()?;
        let ordered = m.m2 <= m.m1 + 1e-9 && m.m1 <= m.m0 + 1e-9;
        let bounded = m.m0 >= -1e-9 && m.m0 < n as f64 && m.m2 <= k as f64 + 1e-9;
        if !(ordered && bounded) {
            violations.push(format!("state {i}: N = {n}, k = {k}, {m:?}"));
        }
    }
    Ok(CheckResult {
        name: "magic-properties",
        passed: worst_stab <= 1e-9 && violations.is_empty(),
        detail: format!(
            "{states} states: max |M| on stabilizer states {worst_stab:.2e}, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" ({v})")).unwrap_or_default()
        ),
    })
}

/// The exact value `M₂(T|+⟩) = log₂(4/3)`.
pub fn t_state_value() -> Result<CheckResult> {
    let mut s = StateVector::zero_state(1)?;
    s.apply_gate1(0, &gates::hadamard())?;
    s.apply_gate1(0, &gates::t_gate())?;
    let m2 = s.exact_stabilizer_entropy(RenyiIndex::Two)?;
    let gap = (m2 - (4.0f64 / 3.0).log2()).abs();
    Ok(CheckResult {
        name: "t-state-value",
        passed: gap <= 1e-12,
        detail: format!("M2(T|+>) = {m2:.15}, gap {gap:.1e}"),
    })
}

pub fn run(level: Level, seed: u64) -> Result<Vec<CheckResult>> {
    let (circuits, tab_n, samples, states) = match level {
        Level::Fast => (4, 6, 10_000, 20),
        Level::Full => (20, 8, 10_000, 100),
    };
    Ok(vec![
        t_state_value()?,
        mps_vs_exact(8, circuits, mix(seed, &[1]))?,
        tableau_vs_exact(tab_n, circuits, mix(seed, &[2]))?,
        if level == Level::Fast {
            sampler_vs_enumeration(4, 3, samples, mix(seed, &[3]))?
        } else {
            sampler_vs_enumeration(6, 3, samples, mix(seed, &[3]))?
        },
        magic_properties(states, mix(seed, &[4]))?,
    ])
}
