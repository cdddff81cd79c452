//! Hybrid brickwork circuits: random two-site Cliffords, probabilistic T
//! gates and probabilistic Z measurements, run on any [`Engine`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clifford::{gates, sample_clifford1, Clifford2Recipe, CliffordGate1};
use crate::error::{Error, Result};
use crate::exact::{StateVector, MAX_ENUMERATION_QUBITS};
use crate::magic::estimate_m2;
use crate::mps::{MpsState, TruncationPolicy};
use crate::rng::{magic_stream, stream, Stream, StreamRng};
use crate::tableau::StabilizerTableau;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Mps,
    Tableau,
    Exact,
}

impl std::str::FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mps" => Ok(EngineKind::Mps),
            "tableau" => Ok(EngineKind::Tableau),
            "exact" => Ok(EngineKind::Exact),
            _ => Err(Error::param("engine", format!("unknown engine {s:?}"))),
        }
    }
}

/// Order of the T-gate and measurement sub-steps after each Clifford layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrder {
    #[default]
    TThenMeasure,
    MeasureThenT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub n_qubits: usize,
    /// Measurement probability per qubit and step.
    pub p: f64,
    pub eta: f64,
    pub beta: f64,
    pub total_steps: usize,
    pub obs_period: usize,
    pub engine: EngineKind,
    /// When false, every qubit gets an independent single-site Clifford per
    /// step instead of the two-site brickwork (the separable model).
    pub brickwork: bool,
    pub step_order: StepOrder,
    pub truncation: TruncationPolicy,
    pub magic_samples: usize,
}

impl CircuitParams {
    pub fn new(n_qubits: usize, p: f64, eta: f64, beta: f64, engine: EngineKind) -> Self {
        CircuitParams {
            n_qubits,
            p,
            eta,
            beta,
            total_steps: 4 * n_qubits,
            obs_period: 8,
            engine,
            brickwork: true,
            step_order: StepOrder::default(),
            truncation: TruncationPolicy::default(),
            magic_samples: crate::magic::DEFAULT_MAGIC_SAMPLES,
        }
    }

    /// T-gate probability `q(N) = η / N^β`.
    pub fn t_probability(&self) -> f64 {
        self.eta / (self.n_qubits as f64).powf(self.beta)
    }

    pub fn key(&self) -> GridKey {
        GridKey {
            eta: self.eta,
            p: self.p,
            beta: self.beta,
            n: self.n_qubits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 || !self.n_qubits.is_multiple_of(2) {
            return Err(Error::param("n_qubits", format!("{} must be even and ≥ 2", self.n_qubits)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", format!("{} not in [0, 1]", self.p)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::param("eta", format!("{} must be ≥ 0", self.eta)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::param("beta", format!("{} must be ≥ 0", self.beta)));
        }
        let q = self.t_probability();
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::param("eta", format!("q(N) = {q} not in [0, 1]")));
        }
        if self.total_steps == 0 {
            return Err(Error::param("total_steps", "must be positive"));
        }
        if self.obs_period == 0 {
            return Err(Error::param("obs_period", "must be positive"));
        }
        match self.engine {
            EngineKind::Tableau if self.eta > 0.0 => {
                return Err(Error::param("engine", "tableau engine requires eta = 0"));
            }
            EngineKind::Exact if self.n_qubits > MAX_ENUMERATION_QUBITS => {
                return Err(Error::param(
                    "n_qubits",
                    format!("exact engine supports at most {MAX_ENUMERATION_QUBITS} qubits"),
                ));
            }
            EngineKind::Mps if self.magic_samples < 2 => {
                return Err(Error::param("magic_samples", "need at least 2"));
            }
            _ => {}
        }
        self.truncation.validate()
    }
}

/// Identifies one grid point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridKey {
    pub eta: f64,
    pub p: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl GridKey {
    pub fn seed_words(&self) -> [u64; 4] {
        [
            self.eta.to_bits(),
            self.p.to_bits(),
            self.beta.to_bits(),
            self.n as u64,
        ]
    }

    pub fn same_as(&self, other: &GridKey) -> bool {
        self.seed_words() == other.seed_words()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSample {
    pub t: usize,
    pub entanglement: f64,
    pub magic: Option<f64>,
    pub magic_err: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub qubit_steps: u64,
    pub t_gates: u64,
    pub measurements: u64,
    pub two_site_gates: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub key: GridKey,
    pub traj: usize,
    pub seed: u64,
    pub samples: Vec<ObservableSample>,
    pub events: EventCounts,
}

/// A simulation backend for one trajectory.
pub trait Engine {
    fn n_qubits(&self) -> usize;
    fn apply_clifford1(&mut self, site: usize, gate: &CliffordGate1) -> Result<()>;
    fn apply_clifford2(&mut self, left: usize, gate: &Clifford2Recipe) -> Result<()>;
    fn apply_t(&mut self, site: usize) -> Result<()>;
    /// Consumes exactly one uniform variate from `rng`.
    fn measure_z(&mut self, site: usize, rng: &mut StreamRng) -> Result<u8>;
    fn entanglement(&self) -> Result<f64>;
    /// `(value, error)` of the stabilizer 2-Rényi entropy, if the engine can
    /// represent magic at all.
    fn magic(&self, rng: &mut StreamRng) -> Result<Option<(f64, f64)>>;
}

#[derive(Clone, Debug)]
pub struct MpsEngine {
    pub state: MpsState,
    pub magic_samples: usize,
}

impl Engine for MpsEngine {
    fn n_qubits(&self) -> usize {
        self.state.n_qubits()
    }

    fn apply_clifford1(&mut self, site: usize, gate: &CliffordGate1) -> Result<()> {
        self.state.apply_gate1(site, &gate.unitary)
    }

    fn apply_clifford2(&mut self, left: usize, gate: &Clifford2Recipe) -> Result<()> {
        self.state.apply_gate2(left, &gate.unitary()).map(|_| ())
    }

    fn apply_t(&mut self, site: usize) -> Result<()> {
        self.state.apply_gate1(site, &gates::t_gate())
    }

    fn measure_z(&mut self, site: usize, rng: &mut StreamRng) -> Result<u8> {
        self.state.measure_z(site, rng)
    }

    fn entanglement(&self) -> Result<f64> {
        Ok(self.state.entanglement_entropy())
    }

    fn magic(&self, rng: &mut StreamRng) -> Result<Option<(f64, f64)>> {
        let est = estimate_m2(&self.state, self.magic_samples, rng)?;
        Ok(Some((est.value, est.std_error)))
    }
}

impl Engine for StateVector {
    fn n_qubits(&self) -> usize {
        StateVector::n_qubits(self)
    }

    fn apply_clifford1(&mut self, site: usize, gate: &CliffordGate1) -> Result<()> {
        self.apply_gate1(site, &gate.unitary)
    }

    fn apply_clifford2(&mut self, left: usize, gate: &Clifford2Recipe) -> Result<()> {
        self.apply_gate2(left, &gate.unitary())
    }

    fn apply_t(&mut self, site: usize) -> Result<()> {
        self.apply_gate1(site, &gates::t_gate())
    }

    fn measure_z(&mut self, site: usize, rng: &mut StreamRng) -> Result<u8> {
        StateVector::measure_z(self, site, rng)
    }

    fn entanglement(&self) -> Result<f64> {
        self.exact_entanglement()
    }

    fn magic(&self, _rng: &mut StreamRng) -> Result<Option<(f64, f64)>> {
        let m2 = self.exact_stabilizer_entropy(crate::exact::RenyiIndex::Two)?;
        Ok(Some((m2, 0.0)))
    }
}

impl Engine for StabilizerTableau {
    fn n_qubits(&self) -> usize {
        StabilizerTableau::n_qubits(self)
    }

    fn apply_clifford1(&mut self, site: usize, gate: &CliffordGate1) -> Result<()> {
        StabilizerTableau::apply_clifford1(self, site, gate)
    }

    fn apply_clifford2(&mut self, left: usize, gate: &Clifford2Recipe) -> Result<()> {
        self.apply_map(left, &gate.action())
    }

    fn apply_t(&mut self, _site: usize) -> Result<()> {
        Err(Error::param("engine", "tableau engine cannot apply T gates"))
    }

    fn measure_z(&mut self, site: usize, rng: &mut StreamRng) -> Result<u8> {
        StabilizerTableau::measure_z(self, site, rng)
    }

    fn entanglement(&self) -> Result<f64> {
        Ok(self.entanglement_entropy()? as f64)
    }

    fn magic(&self, _rng: &mut StreamRng) -> Result<Option<(f64, f64)>> {
        Ok(None)
    }
}

/// Step-by-step driver for one trajectory. Two drivers built from the same
/// parameters and seed consume identical random streams, whatever the engine.
pub struct Trajectory<E: Engine> {
    params: CircuitParams,
    seed: u64,
    q: f64,
    engine: E,
    gate_rng: StreamRng,
    t_rng: StreamRng,
    meas_rng: StreamRng,
    t: usize,
    outcomes: Vec<(usize, usize, u8)>,
    events: EventCounts,
}

impl<E: Engine> Trajectory<E> {
    pub fn new(params: CircuitParams, seed: u64, engine: E) -> Result<Self> {
        params.validate()?;
        if engine.n_qubits() != params.n_qubits {
            return Err(Error::param("n_qubits", "engine size differs from params"));
        }
        Ok(Trajectory {
            q: params.t_probability(),
            params,
            seed,
            engine,
            gate_rng: stream(seed, Stream::Gates),
            t_rng: stream(seed, Stream::TGates),
            meas_rng: stream(seed, Stream::Measurements),
            t: 0,
            outcomes: Vec::new(),
            events: EventCounts::default(),
        })
    }

    pub fn engine(&self) -> &E {
        &self.engine
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// `(t, site, outcome)` for every measurement so far.
    pub fn outcomes(&self) -> &[(usize, usize, u8)] {
        &self.outcomes
    }

    pub fn events(&self) -> EventCounts {
        self.events
    }

    /// Advances one time step: Clifford layer, then T gates and measurements
    /// in the configured order.
    pub fn step(&mut self) -> Result<()> {
        self.t += 1;
        let n = self.params.n_qubits;
        if self.params.brickwork {
            // odd steps pair (0,1),(2,3),…; even steps (1,2),(3,4),… with the ends idle
            let offset = if self.t % 2 == 1 { 0 } else { 1 };
            for left in (offset..n - 1).step_by(2) {
                let recipe = Clifford2Recipe::sample(&mut self.gate_rng);
                self.engine.apply_clifford2(left, &recipe)?;
                self.events.two_site_gates += 1;
            }
        } else {
            for site in 0..n {
                let g = sample_clifford1(&mut self.gate_rng);
                self.engine.apply_clifford1(site, g)?;
            }
        }
        match self.params.step_order {
            StepOrder::TThenMeasure => {
                self.t_gates()?;
                self.measurements()?;
            }
            StepOrder::MeasureThenT => {
                self.measurements()?;
                self.t_gates()?;
            }
        }
        self.events.qubit_steps += n as u64;
        Ok(())
    }

    fn t_gates(&mut self) -> Result<()> {
        for site in 0..self.params.n_qubits {
            if self.t_rng.random::<f64>() < self.q {
                self.engine.apply_t(site)?;
                self.events.t_gates += 1;
            }
        }
        Ok(())
    }

    fn measurements(&mut self) -> Result<()> {
        for site in 0..self.params.n_qubits {
            if self.meas_rng.random::<f64>() < self.params.p {
                let outcome = self.engine.measure_z(site, &mut self.meas_rng)?;
                self.outcomes.push((self.t, site, outcome));
                self.events.measurements += 1;
            }
        }
        Ok(())
    }

    pub fn observe(&self) -> Result<ObservableSample> {
        let entanglement = self.engine.entanglement()?;
        let mut rng = magic_stream(self.seed, self.t);
        let magic = self.engine.magic(&mut rng)?;
        Ok(ObservableSample {
            t: self.t,
            entanglement,
            magic: magic.map(|m| m.0),
            magic_err: magic.map(|m| m.1),
        })
    }

    /// Runs to `total_steps`, observing every `obs_period` steps.
    pub fn run(mut self, traj: usize) -> Result<TrajectoryRecord> {
        let mut samples = Vec::with_capacity(self.params.total_steps / self.params.obs_period);
        while self.t < self.params.total_steps {
            self.step()?;
            if self.t.is_multiple_of(self.params.obs_period) {
                samples.push(self.observe()?);
            }
        }
        Ok(TrajectoryRecord {
            key: self.params.key(),
            traj,
            seed: self.seed,
            samples,
            events: self.events,
        })
    }
}

/// Runs one trajectory from `|0…0⟩` on the engine named in `params`.
pub fn run_trajectory(params: &CircuitParams, seed: u64) -> Result<TrajectoryRecord> {
    run_trajectory_indexed(params, seed, 0)
}

pub fn run_trajectory_indexed(
    params: &CircuitParams,
    seed: u64,
    traj: usize,
) -> Result<TrajectoryRecord> {
    params.validate()?;
    let n = params.n_qubits;
    match params.engine {
        EngineKind::Mps => {
            let engine = MpsEngine {
                state: MpsState::zero_state(n, params.truncation)?,
                magic_samples: params.magic_samples,
            };
            Trajectory::new(params.clone(), seed, engine)?.run(traj)
        }
        EngineKind::Exact => {
            Trajectory::new(params.clone(), seed, StateVector::zero_state(n)?)?.run(traj)
        }
        EngineKind::Tableau => {
            Trajectory::new(params.clone(), seed, StabilizerTableau::zero_state(n)?)?.run(traj)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ok = CircuitParams::new(8, 0.2, 2.0, 1.0, EngineKind::Mps);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.p = 1.5;
        assert!(matches!(bad.validate(), Err(Error::InvalidParam { field: "p", .. })));
        let mut bad = ok.clone();
        bad.engine = EngineKind::Tableau;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.eta = 16.0; // q = 2
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.n_qubits = 7;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn full_measurement_kills_entanglement() {
        for engine in [EngineKind::Mps, EngineKind::Exact] {
            let params = CircuitParams::new(8, 1.0, 2.0, 1.0, engine);
            let rec = run_trajectory(&params, 3).unwrap();
            assert_eq!(rec.samples.len(), 4);
            for s in &rec.samples {
                assert!(s.entanglement.abs() < 1e-10);
                assert_eq!(s.t % 8, 0);
            }
        }
    }

    #[test]
    fn clifford_only_trajectory_has_no_magic() {
        let params = CircuitParams::new(8, 0.1, 0.0, 1.0, EngineKind::Mps);
        let rec = run_trajectory(&params, 17).unwrap();
        for s in &rec.samples {
            let (m, e) = (s.magic.unwrap(), s.magic_err.unwrap());
            assert!(m.abs() <= 3.0 * e + 1e-9, "magic {m} ± {e} at t = {}", s.t);
        }
    }

    #[test]
    fn tableau_records_omit_magic() {
        let params = CircuitParams::new(12, 0.1, 0.0, 1.0, EngineKind::Tableau);
        let rec = run_trajectory(&params, 5).unwrap();
        assert!(rec.samples.iter().all(|s| s.magic.is_none() && s.magic_err.is_none()));
        assert_eq!(rec.samples.len(), 6);
    }

    #[test]
    fn same_seed_same_record() {
        let params = CircuitParams::new(8, 0.2, 2.0, 1.0, EngineKind::Mps);
        let a = run_trajectory(&params, 42).unwrap();
        let b = run_trajectory(&params, 42).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory(&params, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn brickwork_pairs_are_disjoint_and_alternate() {
        // count the two-site gates per step for N = 8: 4 on odd steps, 3 on even steps
        let params = CircuitParams::new(8, 0.0, 0.0, 1.0, EngineKind::Tableau);
        let mut traj = Trajectory::new(params, 1, StabilizerTableau::zero_state(8).unwrap()).unwrap();
        traj.step().unwrap();
        assert_eq!(traj.events().two_site_gates, 4);
        traj.step().unwrap();
        assert_eq!(traj.events().two_site_gates, 7);
    }

    #[test]
    fn separable_variant_stays_a_product_state() {
        let mut params = CircuitParams::new(8, 0.3, 1.0, 1.0, EngineKind::Mps);
        params.brickwork = false;
        let rec = run_trajectory(&params, 8).unwrap();
        assert!(rec.samples.iter().all(|s| s.entanglement.abs() < 1e-12));
    }
}
