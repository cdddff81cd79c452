//! Single- and two-site Clifford gates and their random sampling.
//!
//! Each gate carries both its unitary and its conjugation action on Pauli
//! strings ([`PauliMap`]). The action is composed symbolically, with exact
//! phases, so tableau engines never need to look at the matrix.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::pauli::{Pauli1, PauliString, Phase, C64};

/// Number of two-site layers composed into one random two-site Clifford.
pub const CLIFFORD2_LAYERS: usize = 30;

/// Conjugation action `Q ↦ U Q U†` of a k-site Clifford on all 4^k Hermitian
/// Pauli strings, indexed by [`PauliString::code`]. Images carry phase ±1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliMap {
    sites: usize,
    images: Vec<(u8, bool)>,
}

impl PauliMap {
    pub fn identity(sites: usize) -> Self {
        let n = 1usize << (2 * sites);
        PauliMap {
            sites,
            images: (0..n).map(|c| (c as u8, false)).collect(),
        }
    }

    /// Builds the full table from images of `X_j` and `Z_j` for each site, given
    /// in the order `[X_0, Z_0, X_1, Z_1, …]`.
    pub fn from_generator_images(sites: usize, gens: &[PauliString]) -> Result<Self> {
        assert_eq!(gens.len(), 2 * sites);
        let n = 1usize << (2 * sites);
        let mut images = Vec::with_capacity(n);
        for code in 0..n {
            let q = PauliString::from_code(sites, code);
            // σ(x,z) = i^{xz} X^x Z^z, so the image is i^{xz} U X U† U Z U†
            let mut img = PauliString::identity(sites);
            let mut ypow = 0u32;
            for j in 0..sites {
                let s = q.get(j);
                if s.x() {
                    img = img.mul(&gens[2 * j]);
                }
                if s.z() {
                    img = img.mul(&gens[2 * j + 1]);
                }
                if s.x() && s.z() {
                    ypow += 1;
                }
            }
            let phase = img.phase() * Phase::from_power(ypow);
            if !phase.is_real() {
                return Err(Error::NotClifford);
            }
            images.push((img.code() as u8, phase == Phase::MINUS_ONE));
        }
        Ok(PauliMap { sites, images })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Image of the Hermitian Pauli with the given code: `(code, negative)`.
    #[inline]
    pub fn image_code(&self, code: usize) -> (u8, bool) {
        self.images[code]
    }

    pub fn image(&self, p: &PauliString) -> PauliString {
        assert_eq!(p.n_qubits(), self.sites);
        let (c, neg) = self.images[p.code()];
        let sign = if neg { Phase::MINUS_ONE } else { Phase::ONE };
        PauliString::from_code(self.sites, c as usize).with_phase(sign * p.phase())
    }

    /// Images of `X_0, Z_0, X_1, Z_1, …`.
    pub fn generator_images(&self) -> Vec<PauliString> {
        let mut out = Vec::with_capacity(2 * self.sites);
        for j in 0..self.sites {
            for s in [Pauli1::X, Pauli1::Z] {
                let mut q = PauliString::identity(self.sites);
                q.set(j, s);
                out.push(self.image(&q));
            }
        }
        out
    }

    /// Action of `second ∘ first`, i.e. of the unitary `U_second · U_first`.
    pub fn then(&self, second: &PauliMap) -> PauliMap {
        assert_eq!(self.sites, second.sites);
        let images = self
            .images
            .iter()
            .map(|&(c, neg)| {
                let (c2, neg2) = second.images[c as usize];
                (c2, neg ^ neg2)
            })
            .collect();
        PauliMap {
            sites: self.sites,
            images,
        }
    }

    /// Two-site action of a pair of independent single-site maps.
    pub fn tensor(left: &PauliMap, right: &PauliMap) -> PauliMap {
        assert!(left.sites == 1 && right.sites == 1);
        let images = (0..16usize)
            .map(|code| {
                let (l, nl) = left.images[code >> 2];
                let (r, nr) = right.images[code & 3];
                ((l << 2) | r, nl ^ nr)
            })
            .collect();
        PauliMap { sites: 2, images }
    }
}

/// Derives the conjugation action of a 2^k × 2^k unitary numerically.
pub fn numerical_action(unitary: &DMatrix<C64>) -> Result<PauliMap> {
    let dim = unitary.nrows();
    let sites = dim.trailing_zeros() as usize;
    assert_eq!(1 << sites, dim);
    let n = 1usize << (2 * sites);
    let adj = unitary.adjoint();
    let basis: Vec<DMatrix<C64>> = (0..n)
        .map(|c| PauliString::from_code(sites, c).matrix())
        .collect();
    let mut images = Vec::with_capacity(n);
    for q in &basis {
        let m = unitary * q * &adj;
        let mut found = None;
        for (c, p) in basis.iter().enumerate() {
            // Paulis are orthogonal under the trace inner product.
            let overlap = (p.adjoint() * &m).trace() / dim as f64;
            if (overlap.norm() - 1.0).abs() < 1e-8 {
                let residual = (&m - p * overlap).norm();
                if residual < 1e-8 && overlap.im.abs() < 1e-8 {
                    found = Some((c as u8, overlap.re < 0.0));
                }
                break;
            }
        }
        images.push(found.ok_or(Error::NotClifford)?);
    }
    Ok(PauliMap { sites, images })
}

/// Deviation `‖U†U − 1‖_max`.
pub fn unitarity_deviation(u: &DMatrix<C64>) -> f64 {
    let prod = u.adjoint() * u;
    let id = DMatrix::<C64>::identity(u.nrows(), u.ncols());
    (prod - id).iter().map(|d| d.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct CliffordGate1 {
    pub index: usize,
    pub unitary: Matrix2<C64>,
    pub action: PauliMap,
}

impl CliffordGate1 {
    pub fn by_index(index: usize) -> &'static CliffordGate1 {
        &single_site_table()[index]
    }

    pub fn identity() -> &'static CliffordGate1 {
        Self::by_index(0)
    }

    pub fn image_x(&self) -> PauliString {
        self.action.image(&PauliString::parse("X").unwrap())
    }

    pub fn image_z(&self) -> PauliString {
        self.action.image(&PauliString::parse("Z").unwrap())
    }
}

/// All 24 single-qubit Cliffords modulo global phase, generated as the closure
/// of ⟨H, S⟩ in breadth-first order; index 0 is the identity.
pub fn single_site_table() -> &'static [CliffordGate1] {
    static TABLE: OnceLock<Vec<CliffordGate1>> = OnceLock::new();
    TABLE.get_or_init(build_single_site_table)
}

fn fix_global_phase(u: Matrix2<C64>) -> Matrix2<C64> {
    let pivot = u.iter().find(|c| c.norm() > 1e-9).copied().unwrap();
    u * (pivot.conj() / pivot.norm())
}

fn build_single_site_table() -> Vec<CliffordGate1> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let h = Matrix2::new(
        C64::new(r, 0.0),
        C64::new(r, 0.0),
        C64::new(r, 0.0),
        C64::new(-r, 0.0),
    );
    let s = Matrix2::new(
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 1.0),
    );
    let p = |l: &str| PauliString::parse(l).unwrap();
    let h_map = PauliMap::from_generator_images(1, &[p("Z"), p("X")]).unwrap();
    let s_map = PauliMap::from_generator_images(1, &[p("Y"), p("Z")]).unwrap();

    let mut table = vec![CliffordGate1 {
        index: 0,
        unitary: Matrix2::identity(),
        action: PauliMap::identity(1),
    }];
    let mut head = 0;
    while head < table.len() {
        for (g, g_map) in [(&h, &h_map), (&s, &s_map)] {
            let u = fix_global_phase(g * table[head].unitary);
            if table
                .iter()
                .all(|c| (c.unitary - u).iter().any(|d| d.norm() > 1e-9))
            {
                let action = table[head].action.then(g_map);
                table.push(CliffordGate1 {
                    index: table.len(),
                    unitary: u,
                    action,
                });
            }
        }
        head += 1;
    }
    assert_eq!(table.len(), 24);
    table
}

pub fn sample_clifford1<R: Rng + ?Sized>(rng: &mut R) -> &'static CliffordGate1 {
    CliffordGate1::by_index(rng.random_range(0..24))
}

/// One layer of the two-site construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Singles(usize, usize),
    Swap,
    CnotLeftControl,
    CnotRightControl,
}

impl Layer {
    fn unitary(self) -> Matrix4<C64> {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        match self {
            Layer::Singles(a, b) => {
                let ua = CliffordGate1::by_index(a).unitary;
                let ub = CliffordGate1::by_index(b).unitary;
                Matrix4::from_fn(|r, c| ua[(r >> 1, c >> 1)] * ub[(r & 1, c & 1)])
            }
            Layer::Swap => Matrix4::new(l, o, o, o, o, o, l, o, o, l, o, o, o, o, o, l),
            Layer::CnotLeftControl => Matrix4::new(l, o, o, o, o, l, o, o, o, o, o, l, o, o, l, o),
            Layer::CnotRightControl => {
                Matrix4::new(l, o, o, o, o, o, o, l, o, o, l, o, o, l, o, o)
            }
        }
    }

    fn action(self) -> &'static PauliMap {
        static FIXED: OnceLock<[PauliMap; 3]> = OnceLock::new();
        static SINGLES: OnceLock<Vec<PauliMap>> = OnceLock::new();
        match self {
            Layer::Singles(a, b) => {
                let singles = SINGLES.get_or_init(|| {
                    let t = single_site_table();
                    (0..24 * 24)
                        .map(|k| PauliMap::tensor(&t[k / 24].action, &t[k % 24].action))
                        .collect()
                });
                &singles[a * 24 + b]
            }
            _ => {
                let fixed = FIXED.get_or_init(|| {
                    let p = |l: &str| PauliString::parse(l).unwrap();
                    let gen = |g: [&str; 4]| {
                        PauliMap::from_generator_images(2, &g.map(p)).unwrap()
                    };
                    [
                        gen(["IX", "IZ", "XI", "ZI"]),
                        gen(["XX", "ZI", "IX", "ZZ"]),
                        gen(["XI", "ZZ", "XX", "IZ"]),
                    ]
                });
                match self {
                    Layer::Swap => &fixed[0],
                    Layer::CnotLeftControl => &fixed[1],
                    _ => &fixed[2],
                }
            }
        }
    }
}

/// The sampled recipe of a random two-site Clifford: 30 layers applied in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clifford2Recipe {
    pub layers: Vec<Layer>,
}

impl Clifford2Recipe {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let layers = (0..CLIFFORD2_LAYERS)
            .map(|_| match rng.random_range(0..4) {
                0 => Layer::Singles(rng.random_range(0..24), rng.random_range(0..24)),
                1 => Layer::Swap,
                2 => Layer::CnotLeftControl,
                _ => Layer::CnotRightControl,
            })
            .collect();
        Clifford2Recipe { layers }
    }

    pub fn action(&self) -> PauliMap {
        self.layers
            .iter()
            .fold(PauliMap::identity(2), |acc, l| acc.then(l.action()))
    }

    pub fn unitary(&self) -> Matrix4<C64> {
        self.layers
            .iter()
            .fold(Matrix4::identity(), |acc, l| l.unitary() * acc)
    }

    pub fn build(&self) -> CliffordGate2 {
        CliffordGate2 {
            unitary: self.unitary(),
            action: self.action(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CliffordGate2 {
    pub unitary: Matrix4<C64>,
    pub action: PauliMap,
}

impl CliffordGate2 {
    pub fn identity() -> Self {
        CliffordGate2 {
            unitary: Matrix4::identity(),
            action: PauliMap::identity(2),
        }
    }

    pub fn from_layers(layers: &[Layer]) -> Self {
        Clifford2Recipe {
            layers: layers.to_vec(),
        }
        .build()
    }

    /// Images of `XI, ZI, IX, IZ`.
    pub fn generator_images(&self) -> Vec<PauliString> {
        self.action.generator_images()
    }
}

pub fn sample_clifford2<R: Rng + ?Sized>(rng: &mut R) -> CliffordGate2 {
    Clifford2Recipe::sample(rng).build()
}

/// Either gate kind, for [`conjugate`].
#[derive(Clone, Copy)]
pub enum AnyClifford<'a> {
    One(&'a CliffordGate1),
    Two(&'a CliffordGate2),
}

/// `U P U†` for `p` restricted to the gate's support, as a signed Pauli.
pub fn conjugate(gate: AnyClifford<'_>, p: &PauliString) -> Result<PauliString> {
    let map = match gate {
        AnyClifford::One(g) => &g.action,
        AnyClifford::Two(g) => &g.action,
    };
    if p.n_qubits() != map.sites() {
        return Err(Error::param(
            "p",
            format!(
                "Pauli on {} sites, gate acts on {}",
                p.n_qubits(),
                map.sites()
            ),
        ));
    }
    Ok(map.image(p))
}

/// Standard gate matrices used throughout the crate.
pub mod gates {
    use super::*;

    pub fn hadamard() -> Matrix2<C64> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Matrix2::new(
            C64::new(r, 0.0),
            C64::new(r, 0.0),
            C64::new(r, 0.0),
            C64::new(-r, 0.0),
        )
    }

    pub fn phase_s() -> Matrix2<C64> {
        Matrix2::new(
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 1.0),
        )
    }

    pub fn t_gate() -> Matrix2<C64> {
        Matrix2::new(
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
        )
    }

    pub fn pauli_x() -> Matrix2<C64> {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        Matrix2::new(o, l, l, o)
    }

    pub fn cnot() -> Matrix4<C64> {
        Layer::CnotLeftControl.unitary()
    }

    pub fn swap() -> Matrix4<C64> {
        Layer::Swap.unitary()
    }

    pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
        Matrix4::from_fn(|r, c| a[(r >> 1, c >> 1)] * b[(r & 1, c & 1)])
    }
}

pub(crate) fn to_dynamic2(u: &Matrix2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, c| u[(r, c)])
}

pub(crate) fn to_dynamic4(u: &Matrix4<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |r, c| u[(r, c)])
}
