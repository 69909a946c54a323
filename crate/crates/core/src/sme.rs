//! Conditional density-matrix filter for continuous syndrome measurement.
//!
//! ```text
//! dρ = Σₖ γ T[Eₖ]ρ dt + Σᵢ κ T[Mᵢ]ρ dt + Σᵢ √κ H[Mᵢ]ρ (dYᵢ − 2√κ Tr[Mᵢρ] dt)
//! T[X]ρ = XρX† − ρ
//! H[X]ρ = Xρ + ρX† − Tr[(X + X†)ρ]ρ
//! ```
//!
//! Pauli operators act on computational basis states as signed
//! permutations, so the step never forms dense operator products. Basis
//! index bit `n - 1 - q` is the state of qubit `q`, matching
//! [`PauliString`] word layout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codes::StabilizerCode;
use crate::error::{Error, Result};
use crate::pauli::PauliString;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Trace below which a step is treated as collapsed.
pub const TRACE_FLOOR: f64 = 1e-6;

/// A Pauli operator as a phased signed permutation:
/// `P|c⟩ = phase · (−1)^{popcount(z & c)} |c ⊕ x⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliOp {
    x: usize,
    z: usize,
    phase: Complex64,
}

impl PauliOp {
    /// The Hermitian operator for `p` (each Y carries its `i`).
    pub fn hermitian(p: &PauliString) -> Self {
        let x = p.x_word() as usize;
        let z = p.z_word() as usize;
        let phase = match (x & z).count_ones() % 4 {
            0 => ONE,
            1 => Complex64::new(0.0, 1.0),
            2 => -ONE,
            _ => Complex64::new(0.0, -1.0),
        };
        PauliOp { x, z, phase }
    }

    fn sign(&self, c: usize) -> f64 {
        if (self.z & c).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    fn coef(&self, c: usize) -> Complex64 {
        self.phase * self.sign(c)
    }

    pub fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::from_element(v.len(), ZERO);
        for c in 0..v.len() {
            out[c ^ self.x] += self.coef(c) * v[c];
        }
        out
    }

    /// `P ρ`.
    fn left(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = rho.nrows();
        DMatrix::from_fn(d, d, |a, b| {
            let c = a ^ self.x;
            self.coef(c) * rho[(c, b)]
        })
    }

    /// `ρ P`.
    fn right(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = rho.nrows();
        DMatrix::from_fn(d, d, |a, b| rho[(a, b ^ self.x)] * self.coef(b))
    }

    /// `P ρ P†`.
    pub fn sandwich(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = rho.nrows();
        DMatrix::from_fn(d, d, |a, b| {
            let (ca, cb) = (a ^ self.x, b ^ self.x);
            rho[(ca, cb)] * (self.sign(ca) * self.sign(cb))
        })
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for c in 0..dim {
            m[(c ^ self.x, c)] = self.coef(c);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub DMatrix<Complex64>);

impl DensityMatrix {
    pub fn from_pure(psi: &DVector<Complex64>) -> Self {
        DensityMatrix(psi * psi.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(DMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.0 - self.0.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermitian within 1e-10, unit trace within 1e-10 and eigenvalues above -1e-8.
    pub fn is_valid(&self) -> bool {
        self.hermiticity_error() <= 1e-10
            && (self.trace() - ONE).norm() <= 1e-10
            && self.min_eigenvalue() >= -1e-8
    }

    /// `P ρ P†` for a phase-free string.
    pub fn conjugated(&self, p: &PauliString) -> Self {
        DensityMatrix(PauliOp::hermitian(p).sandwich(&self.0))
    }

    /// `‖[A, ρ]‖_max` for a Pauli `A`.
    pub fn commutator_norm(&self, p: &PauliString) -> f64 {
        let op = PauliOp::hermitian(p);
        (op.left(&self.0) - op.right(&self.0))
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Random full-rank state `AA† / Tr` with Gaussian `A`.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let a = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(
            StandardNormal.sample(&mut *rng),
            StandardNormal.sample(&mut *rng),
        )
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    DensityMatrix(rho / tr)
}

/// Operator tables and rates for one code, built once and shared.
#[derive(Debug, Clone)]
pub struct SmeModel {
    dim: usize,
    gamma: f64,
    kappa: f64,
    errors: Vec<PauliOp>,
    generators: Vec<PauliOp>,
    projectors: Vec<DMatrix<Complex64>>,
    logical_x: Option<PauliOp>,
}

impl SmeModel {
    pub fn new(code: &StabilizerCode) -> Self {
        let n = code.num_qubits();
        assert!(n <= 10, "dense density matrices are limited to 10 qubits");
        let dim = 1usize << n;
        let generators: Vec<PauliOp> = code.generators().iter().map(PauliOp::hermitian).collect();
        let identity = DMatrix::<Complex64>::identity(dim, dim);
        let dense_gens: Vec<DMatrix<Complex64>> =
            generators.iter().map(|g| g.to_dense(dim)).collect();
        let projectors = (0..code.num_syndromes())
            .map(|s| {
                dense_gens
                    .iter()
                    .enumerate()
                    .fold(identity.clone(), |acc, (k, m)| {
                        let sign = if s >> k & 1 == 1 { -1.0 } else { 1.0 };
                        acc * (&identity + m * Complex64::new(sign, 0.0)) * Complex64::new(0.5, 0.0)
                    })
            })
            .collect();
        SmeModel {
            dim,
            gamma: code.gamma,
            kappa: code.kappa,
            errors: code
                .error_channels()
                .iter()
                .map(PauliOp::hermitian)
                .collect(),
            generators,
            projectors,
            logical_x: code.logical_x().map(PauliOp::hermitian),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_syndromes(&self) -> usize {
        self.projectors.len()
    }

    pub fn projector(&self, s: usize) -> &DMatrix<Complex64> {
        &self.projectors[s]
    }

    /// `Tr[Πₛ ρ]` for every syndrome `s`.
    pub fn syndrome_probs(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.projectors
            .iter()
            .map(|pi| {
                let mut acc = ZERO;
                for a in 0..self.dim {
                    for b in 0..self.dim {
                        acc += pi[(a, b)] * rho.0[(b, a)];
                    }
                }
                acc.re
            })
            .collect()
    }

    /// The encoded state `c₀|0_L⟩ + c₁|1_L⟩`, where `|0_L⟩` is the
    /// normalized projection of the first computational basis state with
    /// nonzero overlap onto the code space and `|1_L⟩ = X_L|0_L⟩`.
    pub fn encode_state(&self, c0: Complex64, c1: Complex64) -> Result<DVector<Complex64>> {
        if ((c0.norm_sqr() + c1.norm_sqr()) - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "amplitudes are not normalized: {c0}, {c1}"
            )));
        }
        let lx = self
            .logical_x
            .ok_or_else(|| Error::Argument("code has no logical qubit to encode".into()))?;
        let code_proj = &self.projectors[0];
        let zero_l = (0..self.dim)
            .map(|b| code_proj.column(b).into_owned())
            .find(|v| v.norm() > 1e-6)
            .ok_or_else(|| Error::CodeDefinition("empty code space".into()))?;
        let zero_l = &zero_l / Complex64::new(zero_l.norm(), 0.0);
        let one_l = lx.apply_vec(&zero_l);
        Ok(zero_l * c0 + one_l * c1)
    }

    pub fn encode(&self, c0: Complex64, c1: Complex64) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_pure(&self.encode_state(c0, c1)?))
    }

    /// One Euler–Maruyama step followed by re-Hermitization and trace
    /// renormalization.
    pub fn step(&self, rho: &DensityMatrix, dy: &[f64], dt: f64) -> Result<DensityMatrix> {
        debug_assert_eq!(dy.len(), self.generators.len());
        let r = &rho.0;
        let mut next = r.clone();
        let gdt = Complex64::new(self.gamma * dt, 0.0);
        for e in &self.errors {
            next += (e.sandwich(r) - r) * gdt;
        }
        let kdt = Complex64::new(self.kappa * dt, 0.0);
        let sk = self.kappa.sqrt();
        for (m, &dyi) in self.generators.iter().zip(dy) {
            let left = m.left(r);
            let right = m.right(r);
            let expect = left.trace().re;
            next += (m.sandwich(r) - r) * kdt;
            let innov = dyi - 2.0 * sk * expect * dt;
            next += (left + right - r * Complex64::new(2.0 * expect, 0.0))
                * Complex64::new(sk * innov, 0.0);
        }
        let herm = (&next + next.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = herm.trace().re;
        if !(tr.is_finite() && tr >= TRACE_FLOOR) {
            return Err(Error::Numerical {
                step: 0,
                reason: format!("density matrix trace collapsed to {tr:e}"),
            });
        }
        Ok(DensityMatrix(herm / Complex64::new(tr, 0.0)))
    }
}

/// `⟨Ψ| R ρ R† |Ψ⟩`.
pub fn recovery_fidelity(
    rho: &DensityMatrix,
    correction: &PauliString,
    psi: &DVector<Complex64>,
) -> f64 {
    let corrected = rho.conjugated(correction);
    (psi.adjoint() * &corrected.0 * psi)[(0, 0)]
        .re
        .clamp(0.0, 1.0)
}
