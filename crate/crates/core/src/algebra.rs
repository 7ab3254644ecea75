//! Finite-dimensional C*-algebras `A = ⊕ M_{d_b}(ℂ)`, their selfadjoint
//! elements, and selfadjoint functionals represented through the trace
//! pairing `φ(x) = Σ_b Tr(ρ_b x_b)`.
//!
//! The Jordan decomposition of a single functional is the spectral sign
//! split of its representing matrices; everything in [`crate::jordan`] is
//! built on it.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::{IMAG_RESIDUE, TOL_HERM, ZERO_EIGENVALUE};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// JSON form of a block matrix list: block → row → column → `[re, im]`.
pub type BlockMatricesJson = Vec<Vec<Vec<[f64; 2]>>>;

/// Direct sum of full matrix blocks. All blocks of size one give the
/// commutative algebra of functions on a finite set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AlgebraDescriptor {
    blocks: Vec<usize>,
}

impl TryFrom<Vec<usize>> for AlgebraDescriptor {
    type Error = Error;

    fn try_from(blocks: Vec<usize>) -> Result<Self> {
        AlgebraDescriptor::new(blocks)
    }
}

impl From<AlgebraDescriptor> for Vec<usize> {
    fn from(desc: AlgebraDescriptor) -> Self {
        desc.blocks
    }
}

impl AlgebraDescriptor {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Shape("algebra needs at least one block".into()));
        }
        if blocks.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("block dimensions must be >= 1: {blocks:?}")));
        }
        Ok(AlgebraDescriptor { blocks })
    }

    /// `ℂ^k`, functions on a k-point set.
    pub fn commutative(points: usize) -> Result<Self> {
        AlgebraDescriptor::new(vec![1; points])
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn is_commutative(&self) -> bool {
        self.blocks.iter().all(|&d| d == 1)
    }

    /// Real dimension of `A^sa` (equal to the complex dimension of `A`).
    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(|d| d * d).sum()
    }

    pub fn unit(&self) -> Element {
        Element::trusted(self.blocks.iter().map(|&d| CMatrix::identity(d, d)).collect(), true)
    }

    pub fn zero(&self) -> Element {
        Element::trusted(self.blocks.iter().map(|&d| CMatrix::zeros(d, d)).collect(), true)
    }

    /// Hilbert-Schmidt orthonormal basis of `A^sa`.
    pub fn selfadjoint_basis(&self) -> Vec<Element> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut basis = Vec::with_capacity(self.dimension());
        for (b, &d) in self.blocks.iter().enumerate() {
            let embed = |m: CMatrix| {
                let blocks = self
                    .blocks
                    .iter()
                    .enumerate()
                    .map(|(c, &dc)| if c == b { m.clone() } else { CMatrix::zeros(dc, dc) })
                    .collect();
                Element::trusted(blocks, true)
            };
            for i in 0..d {
                let mut m = CMatrix::zeros(d, d);
                m[(i, i)] = C64::new(1.0, 0.0);
                basis.push(embed(m));
            }
            for i in 0..d {
                for j in (i + 1)..d {
                    let mut re = CMatrix::zeros(d, d);
                    re[(i, j)] = C64::new(s, 0.0);
                    re[(j, i)] = C64::new(s, 0.0);
                    basis.push(embed(re));
                    let mut im = CMatrix::zeros(d, d);
                    im[(i, j)] = C64::new(0.0, s);
                    im[(j, i)] = C64::new(0.0, -s);
                    basis.push(embed(im));
                }
            }
        }
        basis
    }

    /// Random selfadjoint element with Gaussian (GUE-like) blocks.
    pub fn random_selfadjoint<R: Rng>(&self, rng: &mut R) -> Element {
        let blocks = self
            .blocks
            .iter()
            .map(|&d| {
                let g = gaussian_matrix(d, rng);
                (&g + g.adjoint()) * C64::new(0.5, 0.0)
            })
            .collect();
        Element::trusted(blocks, true)
    }

    /// Random `h` with `0 ≤ h ≤ 1`: Haar-ish eigenbasis, eigenvalues uniform in `[0, 1]`.
    pub fn random_positive_contraction<R: Rng>(&self, rng: &mut R) -> Element {
        let blocks = self
            .blocks
            .iter()
            .map(|&d| {
                let g = gaussian_matrix(d, rng);
                let herm = (&g + g.adjoint()) * C64::new(0.5, 0.0);
                let vecs = if d == 1 {
                    CMatrix::identity(1, 1)
                } else {
                    SymmetricEigen::new(herm).eigenvectors
                };
                let vals: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..=1.0)).collect();
                compose_spectral(&vecs, &vals)
            })
            .collect();
        Element::trusted(blocks, true)
    }

    fn check_blocks(&self, blocks: &[CMatrix]) -> Result<()> {
        if blocks.len() != self.blocks.len() {
            return Err(Error::Shape(format!(
                "expected {} blocks, got {}",
                self.blocks.len(),
                blocks.len()
            )));
        }
        for (b, (m, &d)) in blocks.iter().zip(&self.blocks).enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Shape(format!(
                    "block {b} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }
}

fn gaussian_matrix<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// `V diag(vals) V*`.
pub(crate) fn compose_spectral(vecs: &CMatrix, vals: &[f64]) -> CMatrix {
    let d = vecs.nrows();
    let mut out = CMatrix::zeros(d, d);
    for (k, &lam) in vals.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let v = vecs.column(k);
        out += (&v * v.adjoint()) * C64::new(lam, 0.0);
    }
    out
}

fn hermitian_residual(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian block.
pub(crate) fn hermitian_eigen(m: &CMatrix, block: usize) -> Result<(Vec<f64>, CMatrix)> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen {
            block,
            reason: "non-finite entry".into(),
        });
    }
    let d = m.nrows();
    if d == 1 {
        return Ok((vec![m[(0, 0)].re], CMatrix::identity(1, 1)));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 10_000).ok_or_else(|| Error::Eigen {
        block,
        reason: "no convergence".into(),
    })?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

fn blocks_to_json(blocks: &[CMatrix]) -> BlockMatricesJson {
    blocks
        .iter()
        .map(|m| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect()
        })
        .collect()
}

fn blocks_from_json(json: &BlockMatricesJson) -> Result<Vec<CMatrix>> {
    json.iter()
        .enumerate()
        .map(|(b, rows)| {
            let d = rows.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::Shape(format!("block {b} is not square")));
            }
            Ok(CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
        })
        .collect()
}

/// Element of `A`, stored blockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    blocks: Vec<CMatrix>,
    selfadjoint: bool,
}

impl Element {
    pub fn new(desc: &AlgebraDescriptor, blocks: Vec<CMatrix>) -> Result<Self> {
        desc.check_blocks(&blocks)?;
        let selfadjoint = blocks
            .iter()
            .all(|m| hermitian_residual(m) <= TOL_HERM * max_entry(m).max(1.0));
        Ok(Element { blocks, selfadjoint })
    }

    fn trusted(blocks: Vec<CMatrix>, selfadjoint: bool) -> Self {
        Element { blocks, selfadjoint }
    }

    /// Selfadjoint element with real diagonal blocks; `values` runs over all
    /// diagonal positions block after block.
    pub fn diagonal(desc: &AlgebraDescriptor, values: &[f64]) -> Result<Self> {
        let total: usize = desc.blocks().iter().sum();
        if values.len() != total {
            return Err(Error::Shape(format!(
                "expected {total} diagonal values, got {}",
                values.len()
            )));
        }
        let mut offset = 0;
        let blocks = desc
            .blocks()
            .iter()
            .map(|&d| {
                let m = CMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        C64::new(values[offset + i], 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                offset += d;
                m
            })
            .collect();
        Ok(Element::trusted(blocks, true))
    }

    /// Single-block selfadjoint element from real symmetric entries.
    pub fn real_symmetric(desc: &AlgebraDescriptor, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let m = CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j], 0.0));
        Element::new(desc, vec![m])
    }

    pub fn from_json(desc: &AlgebraDescriptor, json: &BlockMatricesJson) -> Result<Self> {
        Element::new(desc, blocks_from_json(json)?)
    }

    pub fn to_json(&self) -> BlockMatricesJson {
        blocks_to_json(&self.blocks)
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.selfadjoint
    }

    fn require_selfadjoint(&self) -> Result<()> {
        if self.selfadjoint {
            Ok(())
        } else {
            let residual = self.blocks.iter().map(hermitian_residual).fold(0.0, f64::max);
            Err(Error::NotSelfAdjoint { residual })
        }
    }

    pub fn scale(&self, a: f64) -> Element {
        let blocks = self.blocks.iter().map(|m| m * C64::new(a, 0.0)).collect();
        Element::trusted(blocks, self.selfadjoint)
    }

    pub fn add(&self, other: &Element) -> Result<Element> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Element) -> Result<Element> {
        self.zip(other, |a, b| a - b)
    }

    /// Real linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Element, b: f64) -> Result<Element> {
        self.zip(other, |x, y| x * C64::new(a, 0.0) + y * C64::new(b, 0.0))
    }

    fn zip(&self, other: &Element, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Result<Element> {
        if self.blocks.len() != other.blocks.len()
            || self.blocks.iter().zip(&other.blocks).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Shape("elements live in different algebras".into()));
        }
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect();
        Ok(Element::trusted(blocks, self.selfadjoint && other.selfadjoint))
    }

    /// Per-block eigenvalues of a selfadjoint element.
    pub fn spectrum(&self) -> Result<Vec<Vec<f64>>> {
        self.require_selfadjoint()?;
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, m)| hermitian_eigen(m, b).map(|(vals, _)| vals))
            .collect()
    }

    /// `(min, max)` of the spectrum.
    pub fn spectral_bounds(&self) -> Result<(f64, f64)> {
        let spec = self.spectrum()?;
        let lo = spec.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let hi = spec.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((lo, hi))
    }
}

/// C*-norm of a selfadjoint element: largest absolute eigenvalue over all blocks.
pub fn op_norm(x: &Element) -> Result<f64> {
    let spec = x.spectrum()?;
    Ok(spec.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Selfadjoint functional `x ↦ Σ_b Tr(ρ_b x_b)`; each `ρ_b` Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalRep {
    blocks: Vec<CMatrix>,
}

/// Orthogonal positive parts `ρ = ρ⁺ − ρ⁻`.
#[derive(Clone, Debug, PartialEq)]
pub struct JordanParts {
    pub positive: FunctionalRep,
    pub negative: FunctionalRep,
}

impl FunctionalRep {
    pub fn new(desc: &AlgebraDescriptor, blocks: Vec<CMatrix>) -> Result<Self> {
        FunctionalRep::with_tolerance(desc, blocks, TOL_HERM)
    }

    /// As `new`, with a custom Hermiticity tolerance.
    pub fn with_tolerance(desc: &AlgebraDescriptor, blocks: Vec<CMatrix>, tol_herm: f64) -> Result<Self> {
        desc.check_blocks(&blocks)?;
        for m in &blocks {
            let residual = hermitian_residual(m);
            if residual > tol_herm * max_entry(m).max(1.0) {
                return Err(Error::NotSelfAdjoint { residual });
            }
        }
        Ok(FunctionalRep {
            blocks: blocks.iter().map(symmetrize).collect(),
        })
    }

    pub(crate) fn trusted(blocks: Vec<CMatrix>) -> Self {
        FunctionalRep { blocks }
    }

    pub fn zero(desc: &AlgebraDescriptor) -> Self {
        FunctionalRep::trusted(desc.blocks().iter().map(|&d| CMatrix::zeros(d, d)).collect())
    }

    /// Same matrices as the selfadjoint element `x`.
    pub fn from_element(x: &Element) -> Result<Self> {
        x.require_selfadjoint()?;
        Ok(FunctionalRep::trusted(x.blocks.iter().map(symmetrize).collect()))
    }

    pub fn diagonal(desc: &AlgebraDescriptor, weights: &[f64]) -> Result<Self> {
        Ok(FunctionalRep::trusted(Element::diagonal(desc, weights)?.blocks))
    }

    pub fn from_json(desc: &AlgebraDescriptor, json: &BlockMatricesJson) -> Result<Self> {
        FunctionalRep::new(desc, blocks_from_json(json)?)
    }

    pub fn from_json_with_tolerance(desc: &AlgebraDescriptor, json: &BlockMatricesJson, tol_herm: f64) -> Result<Self> {
        FunctionalRep::with_tolerance(desc, blocks_from_json(json)?, tol_herm)
    }

    pub fn to_json(&self) -> BlockMatricesJson {
        blocks_to_json(&self.blocks)
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn shape(&self) -> Vec<usize> {
        self.blocks.iter().map(|m| m.nrows()).collect()
    }

    /// `φ(x)` for selfadjoint `x`.
    pub fn pair(&self, x: &Element) -> Result<f64> {
        x.require_selfadjoint()?;
        if self.shape() != x.blocks.iter().map(|m| m.nrows()).collect::<Vec<_>>() {
            return Err(Error::Shape("functional and element live in different algebras".into()));
        }
        let mut acc = C64::new(0.0, 0.0);
        for (rho, xb) in self.blocks.iter().zip(&x.blocks) {
            let d = rho.nrows();
            for i in 0..d {
                for j in 0..d {
                    acc += rho[(i, j)] * xb[(j, i)];
                }
            }
        }
        if acc.im.abs() > IMAG_RESIDUE * acc.re.abs().max(1.0) {
            return Err(Error::NotSelfAdjoint { residual: acc.im.abs() });
        }
        Ok(acc.re)
    }

    /// `Σ_b Tr ρ_b`, the value at the unit.
    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|m| m.trace().re).sum()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Vec<f64>>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, m)| hermitian_eigen(m, b).map(|(vals, _)| vals))
            .collect()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self
            .eigenvalues()?
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min))
    }

    pub fn norm(&self) -> Result<f64> {
        functional_norm(self)
    }

    pub fn scale(&self, a: f64) -> FunctionalRep {
        FunctionalRep::trusted(self.blocks.iter().map(|m| m * C64::new(a, 0.0)).collect())
    }

    pub fn add(&self, other: &FunctionalRep) -> Result<FunctionalRep> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &FunctionalRep) -> Result<FunctionalRep> {
        self.combine(1.0, other, -1.0)
    }

    pub fn combine(&self, a: f64, other: &FunctionalRep, b: f64) -> Result<FunctionalRep> {
        if self.shape() != other.shape() {
            return Err(Error::Shape("functionals live on different algebras".into()));
        }
        Ok(FunctionalRep::trusted(
            self.blocks
                .iter()
                .zip(&other.blocks)
                .map(|(x, y)| x * C64::new(a, 0.0) + y * C64::new(b, 0.0))
                .collect(),
        ))
    }

    /// Largest entry modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &FunctionalRep) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| max_entry(&(a - b)))
            .fold(0.0, f64::max)
    }
}

/// Norm of the functional: the trace norm `Σ_b Σ |λ(ρ_b)|`.
pub fn functional_norm(rho: &FunctionalRep) -> Result<f64> {
    Ok(rho.eigenvalues()?.iter().flatten().map(|v| v.abs()).sum())
}

/// Spectral sign split. Eigenvalues with `|λ| ≤ 1e-12` go to neither part.
pub fn jordan_decompose_functional(rho: &FunctionalRep) -> Result<JordanParts> {
    let mut pos = Vec::with_capacity(rho.blocks.len());
    let mut neg = Vec::with_capacity(rho.blocks.len());
    for (b, m) in rho.blocks.iter().enumerate() {
        // Split the representative with a positive leading entry so that −ρ gives the exact swap.
        let flip = leading_sign(m) < 0.0;
        let canon = if flip { -m } else { m.clone() };
        let (vals, vecs) = hermitian_eigen(&canon, b)?;
        let plus: Vec<f64> = vals
            .iter()
            .map(|&v| if v > ZERO_EIGENVALUE { v } else { 0.0 })
            .collect();
        let minus: Vec<f64> = vals
            .iter()
            .map(|&v| if v < -ZERO_EIGENVALUE { -v } else { 0.0 })
            .collect();
        let (p, n) = (compose_spectral(&vecs, &plus), compose_spectral(&vecs, &minus));
        if flip {
            pos.push(n);
            neg.push(p);
        } else {
            pos.push(p);
            neg.push(n);
        }
    }
    Ok(JordanParts {
        positive: FunctionalRep::trusted(pos.iter().map(symmetrize).collect()),
        negative: FunctionalRep::trusted(neg.iter().map(symmetrize).collect()),
    })
}

fn leading_sign(m: &CMatrix) -> f64 {
    m.iter()
        .flat_map(|c| [c.re, c.im])
        .find(|v| *v != 0.0)
        .map_or(1.0, f64::signum)
}

/// Support projection of the negative spectral part, blockwise.
pub(crate) fn negative_support(rho: &FunctionalRep) -> Result<Element> {
    let mut blocks = Vec::with_capacity(rho.blocks.len());
    for (b, m) in rho.blocks.iter().enumerate() {
        let (vals, vecs) = hermitian_eigen(m, b)?;
        let ind: Vec<f64> = vals
            .iter()
            .map(|&v| if v < -ZERO_EIGENVALUE { 1.0 } else { 0.0 })
            .collect();
        blocks.push(symmetrize(&compose_spectral(&vecs, &ind)));
    }
    Ok(Element::trusted(blocks, true))
}

/// Deterministic random state (positive, total trace one).
pub fn random_state(desc: &AlgebraDescriptor, seed: u64) -> FunctionalRep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<CMatrix> = desc
        .blocks()
        .iter()
        .map(|&d| {
            let g = gaussian_matrix(d, &mut rng);
            &g * g.adjoint()
        })
        .collect();
    // Exponential block weights make the block distribution a flat Dirichlet.
    let weights: Vec<f64> = blocks
        .iter()
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    for (m, w) in blocks.iter_mut().zip(&weights) {
        let tr = m.trace().re;
        *m *= C64::new(w / (total * tr), 0.0);
    }
    FunctionalRep::trusted(blocks.iter().map(symmetrize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(blocks: &[usize]) -> AlgebraDescriptor {
        AlgebraDescriptor::new(blocks.to_vec()).unwrap()
    }

    fn sym2(a: f64, b: f64, c: f64) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(a, 0.0), C64::new(b, 0.0), C64::new(b, 0.0), C64::new(c, 0.0)],
        )
    }

    #[test]
    fn descriptor_validation() {
        assert!(AlgebraDescriptor::new(vec![]).is_err());
        assert!(AlgebraDescriptor::new(vec![2, 0]).is_err());
        let a = desc(&[3, 2]);
        assert_eq!(a.dimension(), 13);
        assert_eq!(a.selfadjoint_basis().len(), 13);
        assert!(desc(&[1, 1, 1]).is_commutative());
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(op_norm(&desc(&[3]).unit()).unwrap(), 1.0);
        let x = Element::diagonal(&desc(&[1, 1]), &[2.0, -5.0]).unwrap();
        assert_eq!(op_norm(&x).unwrap(), 5.0);
        let flip = Element::new(&desc(&[2]), vec![sym2(0.0, 1.0, 0.0)]).unwrap();
        assert!((op_norm(&flip).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn op_norm_rejects_non_selfadjoint() {
        let a = desc(&[2]);
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        );
        let x = Element::new(&a, vec![m]).unwrap();
        assert!(!x.is_selfadjoint());
        assert!(matches!(op_norm(&x), Err(Error::NotSelfAdjoint { .. })));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = desc(&[2]);
        assert!(Element::new(&a, vec![CMatrix::zeros(3, 3)]).is_err());
        assert!(FunctionalRep::new(&a, vec![]).is_err());
    }

    #[test]
    fn functional_norm_examples() {
        let a = desc(&[1, 1]);
        let rho = FunctionalRep::diagonal(&a, &[1.0, -2.0]).unwrap();
        assert!((functional_norm(&rho).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(functional_norm(&FunctionalRep::zero(&a)).unwrap(), 0.0);
        let state = random_state(&desc(&[3, 2]), 5);
        assert!((functional_norm(&state).unwrap() - state.trace()).abs() < 1e-12);
    }

    #[test]
    fn jordan_of_diagonal() {
        let a = desc(&[1, 1]);
        let rho = FunctionalRep::diagonal(&a, &[1.0, -2.0]).unwrap();
        let parts = jordan_decompose_functional(&rho).unwrap();
        assert_eq!(parts.positive, FunctionalRep::diagonal(&a, &[1.0, 0.0]).unwrap());
        assert_eq!(parts.negative, FunctionalRep::diagonal(&a, &[0.0, 2.0]).unwrap());
    }

    #[test]
    fn jordan_of_flip_matches_eigenvector_oracle() {
        // eigenvectors (1, ±1)/√2 with eigenvalues ±1
        let a = desc(&[2]);
        let rho = FunctionalRep::new(&a, vec![sym2(0.0, 1.0, 0.0)]).unwrap();
        let parts = jordan_decompose_functional(&rho).unwrap();
        let plus = FunctionalRep::new(&a, vec![sym2(0.5, 0.5, 0.5)]).unwrap();
        let minus = FunctionalRep::new(&a, vec![sym2(0.5, -0.5, 0.5)]).unwrap();
        assert!(parts.positive.max_abs_diff(&plus) < 1e-14);
        assert!(parts.negative.max_abs_diff(&minus) < 1e-14);
    }

    #[test]
    fn jordan_of_positive_is_trivial() {
        let rho = random_state(&desc(&[3]), 11);
        let parts = jordan_decompose_functional(&rho).unwrap();
        assert!(parts.positive.max_abs_diff(&rho) < 1e-13);
        assert!(parts.negative.max_abs_diff(&FunctionalRep::zero(&desc(&[3]))) < 1e-13);
    }

    #[test]
    fn eigensolver_failure_is_diagnosed() {
        let a = desc(&[2]);
        let rho = FunctionalRep::trusted(vec![sym2(f64::NAN, 0.0, 1.0)]);
        let _ = a;
        assert!(matches!(
            jordan_decompose_functional(&rho),
            Err(Error::Eigen { block: 0, .. })
        ));
    }

    #[test]
    fn random_state_contract() {
        assert_eq!(
            random_state(&desc(&[1]), 3),
            FunctionalRep::diagonal(&desc(&[1]), &[1.0]).unwrap()
        );
        let s = random_state(&desc(&[2]), 9);
        assert!(s.min_eigenvalue().unwrap() > -1e-14);
        assert!((s.trace() - 1.0).abs() < 1e-14);
        assert_eq!(s, random_state(&desc(&[2]), 9));
        let p = random_state(&desc(&[1, 1]), 4);
        let w: Vec<f64> = p.blocks().iter().map(|m| m[(0, 0)].re).collect();
        assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pairing_with_unit_is_trace() {
        let a = desc(&[3, 2]);
        let s = random_state(&a, 1);
        assert!((s.pair(&a.unit()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn positive_contraction_spectrum() {
        let a = desc(&[3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = a.random_positive_contraction(&mut rng);
        let (lo, hi) = h.spectral_bounds().unwrap();
        assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12);
    }
}
