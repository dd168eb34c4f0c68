//! Finite-dimensional state-vector oracle.
//!
//! States, non-degenerate observables, change-of-basis transforms and
//! Hamiltonians over `ℂⁿ`. This is the hidden ground truth every simulated
//! measurement samples from: nothing downstream of the coding operations is
//! allowed to read amplitudes directly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const STATE_NORM_TOL: f64 = 1e-12;
pub const UNITARY_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Threshold below which a superposition counts as annihilated.
pub const ANNIHILATION_TOL: f64 = 1e-12;

pub const MAX_EXPM_DIM: usize = 16;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entry of `|M†M − I|`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.ncols();
    let g = m.adjoint() * m;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    let d = m - m.adjoint();
    d.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Frobenius norm of `AB − BA`.
pub fn commutator_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    (a * b - b * a).norm()
}

/// `⟨a|b⟩`, conjugate-linear in the first argument.
pub fn inner_product(a: &[C64], b: &[C64]) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit vector in `ℂⁿ`, `n ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct OracleState {
    amplitudes: Vec<C64>,
}

impl OracleState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::invalid("state dimension must be at least 2"));
        }
        let n = norm(&amplitudes);
        if (n - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `amplitudes` first; fails only for the zero vector.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if n < ANNIHILATION_TOL {
            return Err(Error::DestructiveAnnihilation(n));
        }
        Self::new(amplitudes.into_iter().map(|z| z / n).collect())
    }

    pub fn basis(dim: usize, j: usize) -> Result<Self> {
        if j >= dim {
            return Err(Error::invalid(format!(
                "basis index {j} out of range for dim {dim}"
            )));
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[j] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn to_vector(&self) -> CVector {
        CVector::from_column_slice(&self.amplitudes)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &OracleState) -> Result<f64> {
        Ok(inner_product(&self.amplitudes, &other.amplitudes)?.norm_sqr())
    }
}

impl TryFrom<Vec<C64>> for OracleState {
    type Error = Error;
    fn try_from(v: Vec<C64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OracleState> for Vec<C64> {
    fn from(s: OracleState) -> Self {
        s.amplitudes
    }
}

/// Non-degenerate observable: strictly increasing eigenvalues and a unitary
/// eigenbasis whose columns are the eigenvectors `|u_j⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    name: String,
    eigenvalues: Vec<f64>,
    eigenbasis: CMatrix,
}

impl ObservableSpec {
    pub fn new(
        name: impl Into<String>,
        eigenvalues: Vec<f64>,
        eigenbasis: CMatrix,
    ) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim < 2 {
            return Err(Error::invalid("observable dimension must be at least 2"));
        }
        if eigenbasis.nrows() != dim || eigenbasis.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: eigenbasis.ncols(),
            });
        }
        if eigenvalues.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::DegenerateSpectrum);
        }
        let defect = unitarity_defect(&eigenbasis);
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self {
            name: name.into(),
            eigenvalues,
            eigenbasis,
        })
    }

    /// Eigenvalues `0, 1, …, dim−1` on the given basis.
    pub fn with_index_spectrum(name: impl Into<String>, eigenbasis: CMatrix) -> Result<Self> {
        let dim = eigenbasis.ncols();
        Self::new(name, (0..dim).map(|j| j as f64).collect(), eigenbasis)
    }

    pub fn standard(name: impl Into<String>, dim: usize) -> Result<Self> {
        Self::with_index_spectrum(name, CMatrix::identity(dim, dim))
    }

    pub fn fourier(name: impl Into<String>, dim: usize) -> Result<Self> {
        Self::with_index_spectrum(name, fourier_matrix(dim))
    }

    /// Fourier basis with its rows twisted by `exp(iπk²/n)`; in dimension 2 this
    /// is the circular basis `(1, ±i)/√2`.
    pub fn chirp(name: impl Into<String>, dim: usize) -> Result<Self> {
        Self::with_index_spectrum(name, chirp_matrix(dim))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenbasis(&self) -> &CMatrix {
        &self.eigenbasis
    }

    pub fn eigenvector(&self, j: usize) -> OracleState {
        OracleState {
            amplitudes: self.eigenbasis.column(j).iter().copied().collect(),
        }
    }

    /// `Σ_j a_j |u_j⟩⟨u_j|`.
    pub fn operator(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&a| C64::new(a, 0.0)),
        ));
        &self.eigenbasis * d * self.eigenbasis.adjoint()
    }

    pub fn commutes_with(&self, other: &ObservableSpec) -> bool {
        self.dim() == other.dim()
            && commutator_norm(&self.operator(), &other.operator()) < HERMITIAN_TOL
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

pub fn fourier_matrix(dim: usize) -> CMatrix {
    let n = dim as f64;
    CMatrix::from_fn(dim, dim, |k, j| {
        C64::from_polar(
            1.0 / n.sqrt(),
            2.0 * std::f64::consts::PI * (k * j) as f64 / n,
        )
    })
}

pub fn chirp_matrix(dim: usize) -> CMatrix {
    let n = dim as f64;
    let f = fourier_matrix(dim);
    CMatrix::from_fn(dim, dim, |k, j| {
        f[(k, j)] * C64::from_polar(1.0, std::f64::consts::PI * (k * k) as f64 / n)
    })
}

/// Dirac transform `τ_kj = ⟨v_k|u_j⟩` from the eigenbasis of `source` (the
/// `u_j`) to that of `target` (the `v_k`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformMatrix {
    source: String,
    target: String,
    #[serde(with = "crate::serde_complex::matrix")]
    entries: CMatrix,
}

impl TransformMatrix {
    pub fn new(
        source: impl Into<String>,
        target: impl Into<String>,
        entries: CMatrix,
    ) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let defect = unitarity_defect(&entries);
        if defect > UNITARY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self {
            source: source.into(),
            target: target.into(),
            entries,
        })
    }

    pub fn between(source: &ObservableSpec, target: &ObservableSpec) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim(),
            });
        }
        Self::new(
            source.name(),
            target.name(),
            target.eigenbasis.adjoint() * &source.eigenbasis,
        )
    }

    pub fn identity(name: impl Into<String>, dim: usize) -> Self {
        let name = name.into();
        Self {
            source: name.clone(),
            target: name,
            entries: CMatrix::identity(dim, dim),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Transform back from `target` to `source` (the adjoint).
    pub fn inverse(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            entries: self.entries.adjoint(),
        }
    }

    /// Checks unitarity again; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        Self::new(
            self.source.clone(),
            self.target.clone(),
            self.entries.clone(),
        )
        .map(|_| ())
    }
}

/// Hermitian generator of the evolution, with its eigendecomposition cached.
#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    matrix: CMatrix,
    hbar: f64,
    energies: Vec<f64>,
    eigenvectors: CMatrix,
}

impl HamiltonianSpec {
    pub fn new(matrix: CMatrix, hbar: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() > MAX_EXPM_DIM {
            return Err(Error::invalid(format!(
                "Hamiltonian dimension above {MAX_EXPM_DIM}"
            )));
        }
        if !(hbar > 0.0) {
            return Err(Error::invalid("hbar must be positive"));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        // Symmetrize away the tolerated defect before decomposing.
        let h = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = h.symmetric_eigen();
        Ok(Self {
            matrix,
            hbar,
            energies: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `exp(−iH t/ħ)` from the cached eigendecomposition.
    pub fn propagator(&self, dt: f64) -> CMatrix {
        let phases = CVector::from_iterator(
            self.dim(),
            self.energies
                .iter()
                .map(|&e| C64::from_polar(1.0, -e * dt / self.hbar)),
        );
        &self.eigenvectors * CMatrix::from_diagonal(&phases) * self.eigenvectors.adjoint()
    }
}

/// Expansion coefficients `c_j = ⟨u_j|ψ⟩`.
pub fn coefficients(state: &OracleState, obs: &ObservableSpec) -> Result<Vec<C64>> {
    if state.dim() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            found: state.dim(),
        });
    }
    Ok((obs.eigenbasis.adjoint() * state.to_vector())
        .iter()
        .copied()
        .collect())
}

/// Born law `π_j = |⟨u_j|ψ⟩|²`.
pub fn born_law(state: &OracleState, obs: &ObservableSpec) -> Result<Vec<f64>> {
    Ok(coefficients(state, obs)?
        .iter()
        .map(|c| c.norm_sqr())
        .collect())
}

/// Inverse-CDF sampler over a fixed Born law.
#[derive(Clone, Debug)]
pub struct BornSampler {
    cumulative: Vec<f64>,
    last_nonzero: usize,
}

impl BornSampler {
    pub fn new(law: &[f64]) -> Result<Self> {
        if law.is_empty() || law.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("law must be non-empty and non-negative"));
        }
        let total: f64 = law.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyLaw);
        }
        let mut acc = 0.0;
        let cumulative = law
            .iter()
            .map(|&p| {
                acc += p / total;
                acc
            })
            .collect();
        let last_nonzero = law.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Ok(Self {
            cumulative,
            last_nonzero,
        })
    }

    pub fn for_state(state: &OracleState, obs: &ObservableSpec) -> Result<Self> {
        Self::new(&born_law(state, obs)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let j = self.cumulative.partition_point(|&c| c <= u);
        j.min(self.last_nonzero)
    }
}

/// Draws one eigenvalue index with probability `π_j`.
pub fn sample_outcome<R: Rng + ?Sized>(
    state: &OracleState,
    obs: &ObservableSpec,
    rng: &mut R,
) -> Result<usize> {
    Ok(BornSampler::for_state(state, obs)?.sample(rng))
}

/// `d = τ·c`.
pub fn dirac_transform(coeffs: &[C64], tau: &TransformMatrix) -> Result<Vec<C64>> {
    if coeffs.len() != tau.dim() {
        return Err(Error::DimensionMismatch {
            expected: tau.dim(),
            found: coeffs.len(),
        });
    }
    Ok((&tau.entries * CVector::from_column_slice(coeffs))
        .iter()
        .copied()
        .collect())
}

/// `exp(−iH dt/ħ) ψ`.
pub fn evolve(state: &OracleState, h: &HamiltonianSpec, dt: f64) -> Result<OracleState> {
    if state.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: state.dim(),
        });
    }
    if !(dt >= 0.0) {
        return Err(Error::invalid(format!(
            "evolution time must be non-negative, got {dt}"
        )));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let v = h.propagator(dt) * state.to_vector();
    // Renormalize the last few ulps of drift.
    OracleState::normalized(v.iter().copied().collect())
}

fn check_superposition(weights: &[C64], states: &[OracleState]) -> Result<usize> {
    if weights.len() != states.len() {
        return Err(Error::LengthMismatch(weights.len(), states.len()));
    }
    let first = states
        .first()
        .ok_or_else(|| Error::invalid("superposition needs at least one state"))?;
    let dim = first.dim();
    if let Some(s) = states.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: s.dim(),
        });
    }
    if weights.iter().all(|w| w.norm() == 0.0) {
        return Err(Error::invalid("all superposition weights are zero"));
    }
    Ok(dim)
}

/// Normalized `Σ λ_i ψ_i`.
pub fn compose_superposition(weights: &[C64], states: &[OracleState]) -> Result<OracleState> {
    let dim = check_superposition(weights, states)?;
    let mut sum = vec![C64::new(0.0, 0.0); dim];
    for (w, s) in weights.iter().zip(states) {
        for (acc, a) in sum.iter_mut().zip(s.amplitudes()) {
            *acc += w * a;
        }
    }
    OracleState::normalized(sum)
}

/// Un-normalized expansion of `|Σ_i λ_i c_ji|²` into diagonal and
/// interference parts, per eigenvalue index `j` of `obs`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpositionExpansion {
    /// `Σ_i |λ_i c_ji|²`
    pub direct: Vec<f64>,
    /// `Σ_{i≠i'} (λ_i c_ji)* λ_i' c_ji'`, real by construction.
    pub interference: Vec<f64>,
}

impl SuperpositionExpansion {
    /// The expansion divided by its total: the law of the composite state.
    pub fn normalized_law(&self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .direct
            .iter()
            .zip(&self.interference)
            .map(|(d, i)| d + i)
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    }

    /// Law of the corresponding statistical mixture (interference dropped).
    pub fn mixture_law(&self) -> Vec<f64> {
        let total: f64 = self.direct.iter().sum();
        self.direct.iter().map(|x| x / total).collect()
    }
}

pub fn superposition_expansion(
    weights: &[C64],
    states: &[OracleState],
    obs: &ObservableSpec,
) -> Result<SuperpositionExpansion> {
    check_superposition(weights, states)?;
    let terms: Vec<Vec<C64>> = weights
        .iter()
        .zip(states)
        .map(|(w, s)| Ok(coefficients(s, obs)?.into_iter().map(|c| w * c).collect()))
        .collect::<Result<_>>()?;
    let dim = obs.dim();
    let mut direct = vec![0.0; dim];
    let mut interference = vec![0.0; dim];
    for j in 0..dim {
        for (i, ti) in terms.iter().enumerate() {
            direct[j] += ti[j].norm_sqr();
            for (k, tk) in terms.iter().enumerate() {
                if k != i {
                    interference[j] += (ti[j].conj() * tk[j]).re;
                }
            }
        }
    }
    Ok(SuperpositionExpansion {
        direct,
        interference,
    })
}

/// Random draws for fixtures, tests and benches.
pub mod random {
    use super::*;
    use rand_distr::StandardNormal;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(standard_normal(rng), standard_normal(rng))
    }

    /// Haar-random unit vector.
    pub fn state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> OracleState {
        let v = (0..dim).map(|_| gaussian_c64(rng)).collect();
        OracleState::normalized(v).expect("gaussian vector is non-zero")
    }

    /// Haar-random unitary (QR of a Ginibre matrix with the phase fix).
    pub fn unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
        let g = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
        let qr = g.qr();
        let (mut q, r) = (qr.q(), qr.r());
        for j in 0..dim {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            let mut col = q.column_mut(j);
            col *= phase;
        }
        q
    }

    /// Random real rotation (orthogonal matrix).
    pub fn orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| standard_normal(rng));
        let qr = g.qr();
        let (q, r) = (qr.q(), qr.r());
        CMatrix::from_fn(dim, dim, |i, j| {
            C64::new(q[(i, j)] * r[(j, j)].signum(), 0.0)
        })
    }

    pub fn hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
        let g = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
        (&g + g.adjoint()) * C64::new(0.5, 0.0)
    }

    /// Observable on a Haar-random eigenbasis with eigenvalues `0..dim`.
    pub fn observable<R: Rng + ?Sized>(name: &str, dim: usize, rng: &mut R) -> ObservableSpec {
        ObservableSpec::with_index_spectrum(name, unitary(dim, rng))
            .expect("Haar unitary is unitary")
    }
}
