//! Deterministic instance families.

use std::f64::consts::TAU;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, AlgebraDescriptor, CMatrix, Element, FunctionalRep};
use crate::error::{Error, Result};
use crate::extension::{ExtensionInstance, SubspaceMap};
use crate::field::MapField;
use crate::seminorm::{balanced_chain, BaseNorm, NodeScalars, PNorm, SeminormSpec, VectorSpaceModel};
use crate::space::Grid;
use crate::subspace;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerateKind {
    #[default]
    Smooth,
    Crossing,
    Random,
    Extension,
    Balanced,
}

impl FromStr for GenerateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Instance(format!("unknown instance kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateParams {
    pub kind: GenerateKind,
    pub seed: u64,
    pub blocks: Vec<usize>,
    pub nodes: usize,
    /// Conjugate the crossing family by a seeded unitary.
    pub rotate: bool,
    pub dim: usize,
    pub subspace_dim: usize,
    pub margin: f64,
    pub delta: f64,
    pub norm: PNorm,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            kind: GenerateKind::Smooth,
            seed: 0,
            blocks: vec![2],
            nodes: 50,
            rotate: false,
            dim: 4,
            subspace_dim: 2,
            margin: 0.3,
            delta: 0.1,
            norm: PNorm::L2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generated {
    Field(MapField),
    Extension(ExtensionInstance),
}

pub fn generate(params: &GenerateParams) -> Result<Generated> {
    let field_grid = || Grid::unit_interval(params.nodes);
    match params.kind {
        GenerateKind::Smooth => {
            let a = AlgebraDescriptor::new(params.blocks.clone())?;
            Ok(Generated::Field(smooth_field(&a, field_grid()?, params.seed)?))
        }
        GenerateKind::Crossing => {
            let a = AlgebraDescriptor::new(params.blocks.clone())?;
            let rotation = params.rotate.then_some(params.seed);
            Ok(Generated::Field(crossing_field(&a, field_grid()?, rotation)?))
        }
        GenerateKind::Random => {
            let a = AlgebraDescriptor::new(params.blocks.clone())?;
            Ok(Generated::Field(random_field(&a, field_grid()?, params.seed)?))
        }
        GenerateKind::Extension => Ok(Generated::Extension(extension_instance(params)?)),
        GenerateKind::Balanced => {
            let b = balanced_instance(params)?;
            let mut inst = b.extension.clone();
            inst.seminorm = b.balanced_seminorm()?;
            Ok(Generated::Extension(inst))
        }
    }
}

/// `ρ(s) = H₀ + cos(2πs) H₁ + sin(2πs) H₂ + cos(4πs) H₃` with seeded Hermitian `H_i`.
pub fn smooth_field(a: &AlgebraDescriptor, grid: Grid, seed: u64) -> Result<MapField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size: usize = a.blocks().iter().sum();
    let scale = 1.0 / (2.0 * size as f64);
    let h: Vec<Element> = (0..4).map(|_| a.random_selfadjoint(&mut rng).scale(scale)).collect();
    MapField::from_fn(grid, a.clone(), |_, s| {
        let coeffs = [1.0, (TAU * s).cos(), (TAU * s).sin(), (2.0 * TAU * s).cos()];
        let mut acc = a.zero();
        for (c, hi) in coeffs.iter().zip(&h) {
            acc = acc.combine(1.0, hi, *c)?;
        }
        FunctionalRep::from_element(&acc)
    })
}

/// `diag(s − ½, ½ − s, 0, …)` over the flattened diagonal, optionally conjugated by a
/// seeded blockwise unitary. Both eigenvalues pass through zero at `s = ½`.
pub fn crossing_field(a: &AlgebraDescriptor, grid: Grid, rotation: Option<u64>) -> Result<MapField> {
    let size: usize = a.blocks().iter().sum();
    let unitaries: Option<Vec<CMatrix>> = match rotation {
        None => None,
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = a.random_selfadjoint(&mut rng);
            Some(
                h.blocks()
                    .iter()
                    .enumerate()
                    .map(|(b, m)| Ok(algebra::hermitian_eigen(m, b)?.1))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    MapField::from_fn(grid, a.clone(), |_, s| {
        let mut diag = vec![0.0; size];
        diag[0] = s - 0.5;
        if size > 1 {
            diag[1] = 0.5 - s;
        }
        let d = Element::diagonal(a, &diag)?;
        match &unitaries {
            None => FunctionalRep::from_element(&d),
            Some(us) => {
                let blocks = d.blocks().iter().zip(us).map(|(m, u)| u * m * u.adjoint()).collect();
                FunctionalRep::new(a, blocks)
            }
        }
    })
}

/// Independent random Hermitian functional at every node.
pub fn random_field(a: &AlgebraDescriptor, grid: Grid, seed: u64) -> Result<MapField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size: usize = a.blocks().iter().sum();
    let n = grid.len();
    let rho: Vec<FunctionalRep> = (0..n)
        .map(|_| FunctionalRep::from_element(&a.random_selfadjoint(&mut rng).scale(1.0 / size as f64)))
        .collect::<Result<_>>()?;
    MapField::new(grid, a.clone(), rho)
}

fn dual_norm(p: PNorm, v: &[f64]) -> f64 {
    match p {
        PNorm::L1 => PNorm::LInf.apply_slice(v),
        PNorm::L2 => PNorm::L2.apply_slice(v),
        PNorm::LInf => PNorm::L1.apply_slice(v),
    }
}

/// Extension problem with coercivity margin `c`: `m = s(t)‖·‖` and
/// `φ(y)(t) = ⟨g_t, y⟩` with `g_t ∈ Y`, `‖g_t‖_* = s(t) − c`, so that
/// `min_{‖y‖=1} m_δ(y) − φ(y) = c + δ`.
pub fn extension_instance(params: &GenerateParams) -> Result<ExtensionInstance> {
    let (n, k, c) = (params.dim, params.subspace_dim, params.margin);
    if n == 0 || k > n {
        return Err(Error::Instance(format!("need 0 <= subspace_dim <= dim, dim >= 1 (got {k}, {n})")));
    }
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::Instance(format!("margin must lie in (0, 0.5), got {c}")));
    }
    if !(params.delta >= 0.0 && params.delta.is_finite()) {
        return Err(Error::Instance("delta must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let q = match params.norm {
        PNorm::L2 => {
            let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            subspace::orthonormalize(&g)
        }
        _ => DMatrix::identity(n, n),
    };
    let y: Vec<Vec<f64>> = (0..k).map(|j| q.column(j).iter().cloned().collect()).collect();
    let yc: Vec<Vec<f64>> = (k..n).map(|j| q.column(j).iter().cloned().collect()).collect();
    let space = VectorSpaceModel::new(n, BaseNorm::new(params.norm), y.clone(), yc)?;
    let grid = Grid::unit_interval(params.nodes)?;
    let coords = grid.unit_coordinates();
    let theta: f64 = rng.gen_range(0.0..TAU);
    let scales: Vec<f64> = coords.iter().map(|s| 1.0 + 0.5 * (TAU * s + theta).sin()).collect();
    let a: Vec<[f64; 3]> = (0..k)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();
    let mut values = Vec::with_capacity(coords.len());
    for (t, s) in coords.iter().enumerate() {
        let w: Vec<f64> = a
            .iter()
            .map(|r| r[0] + r[1] * (TAU * s).cos() + r[2] * (TAU * s).sin())
            .collect();
        let mut g = vec![0.0; n];
        for (wj, yj) in w.iter().zip(&y) {
            for i in 0..n {
                g[i] += wj * yj[i];
            }
        }
        let dn = dual_norm(params.norm, &g);
        let factor = if dn > 0.0 { (scales[t] - c) / dn } else { 0.0 };
        let g: Vec<f64> = g.iter().map(|x| x * factor).collect();
        values.push(y.iter().map(|yj| yj.iter().zip(&g).map(|(p, q)| p * q).sum()).collect());
    }
    Ok(ExtensionInstance {
        space,
        phi: SubspaceMap { grid, values },
        seminorm: SeminormSpec::ScaledNorm {
            norm: BaseNorm::new(params.norm),
            scale: NodeScalars(scales),
        },
        delta: params.delta,
        order: None,
    })
}

/// An extension instance with a chain `F₁ ⊂ … ⊂ F_k = Y` and an overlapping node cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancedInstance {
    pub extension: ExtensionInstance,
    pub chain: Vec<Vec<Vec<f64>>>,
    pub sets: Vec<Vec<usize>>,
}

impl BalancedInstance {
    pub fn balanced_seminorm(&self) -> Result<SeminormSpec> {
        balanced_chain(
            &self.extension.seminorm,
            &self.extension.space,
            self.extension.delta,
            &self.chain,
            &self.sets,
            self.extension.phi.grid.len(),
        )
    }
}

pub fn balanced_instance(params: &GenerateParams) -> Result<BalancedInstance> {
    if params.subspace_dim == 0 {
        return Err(Error::Instance("a balanced chain needs subspace_dim >= 1".into()));
    }
    let extension = extension_instance(params)?;
    let y = &extension.space.subspace;
    let chain: Vec<Vec<Vec<f64>>> = (1..=y.len()).map(|j| y[..j].to_vec()).collect();
    let coords = extension.phi.grid.unit_coordinates();
    let parts = chain.len() as f64;
    let overlap = 0.5 / parts;
    let sets = (0..chain.len())
        .map(|i| {
            let lo = i as f64 / parts - overlap;
            let hi = (i + 1) as f64 / parts + overlap;
            (0..coords.len()).filter(|&t| coords[t] >= lo && coords[t] <= hi).collect()
        })
        .collect();
    Ok(BalancedInstance { extension, chain, sets })
}
