//! Generation operations, specimens and coding-measurement successions.
//!
//! A [`GenerationOp`] is a recipe; [`GenerationOp::prepare`] resolves it into
//! a [`PreparedGeneration`] holding the hidden oracle state once, and every
//! realization borrows that state as a fresh [`Specimen`]. Measuring a
//! specimen destroys it: each coded outcome needs a whole new succession.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dbb::{GuidingWave, Vec3};
use crate::error::{Error, Result};
use crate::finprob::{FactualLaw, LawParams};
use crate::hilbert::{
    compose_superposition, evolve, BornSampler, CMatrix, HamiltonianSpec, ObservableSpec,
    OracleState, C64,
};
use crate::rng::{try_par_trials, StreamRng};

/// One factor `S_i` of a multi-system generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub enum GenerationKind {
    Simple(OracleState),
    Composed {
        weights: Vec<C64>,
        components: Vec<GenerationOp>,
    },
    /// Joint state on `⊗ ℂ^{dim_i}`, first factor most significant.
    MultiSystem {
        factors: Vec<Factor>,
        state: OracleState,
    },
    Evolved {
        base: Box<GenerationOp>,
        hamiltonian: HamiltonianSpec,
        dt: f64,
    },
}

#[derive(Clone, Debug)]
pub struct GenerationOp {
    pub id: String,
    pub kind: GenerationKind,
    /// Wave attached for guided coding; specimens then carry a corpuscle position.
    pub guidance: Option<GuidingWave>,
}

impl GenerationOp {
    pub fn simple(id: impl Into<String>, state: OracleState) -> Self {
        Self {
            id: id.into(),
            kind: GenerationKind::Simple(state),
            guidance: None,
        }
    }

    pub fn composed(
        id: impl Into<String>,
        weights: Vec<C64>,
        components: Vec<GenerationOp>,
    ) -> Self {
        Self {
            id: id.into(),
            kind: GenerationKind::Composed {
                weights,
                components,
            },
            guidance: None,
        }
    }

    pub fn multi_system(id: impl Into<String>, factors: Vec<Factor>, state: OracleState) -> Self {
        Self {
            id: id.into(),
            kind: GenerationKind::MultiSystem { factors, state },
            guidance: None,
        }
    }

    pub fn evolved(
        id: impl Into<String>,
        base: GenerationOp,
        hamiltonian: HamiltonianSpec,
        dt: f64,
    ) -> Self {
        Self {
            id: id.into(),
            kind: GenerationKind::Evolved {
                base: Box::new(base),
                hamiltonian,
                dt,
            },
            guidance: None,
        }
    }

    pub fn with_guidance(mut self, wave: GuidingWave) -> Self {
        self.guidance = Some(wave);
        self
    }

    fn resolve(&self) -> Result<(OracleState, Option<Vec<Factor>>)> {
        match &self.kind {
            GenerationKind::Simple(s) => Ok((s.clone(), None)),
            GenerationKind::Composed {
                weights,
                components,
            } => {
                let states = components
                    .iter()
                    .map(|g| g.resolve().map(|(s, _)| s))
                    .collect::<Result<Vec<_>>>()?;
                Ok((compose_superposition(weights, &states)?, None))
            }
            GenerationKind::MultiSystem { factors, state } => {
                if factors.is_empty() || factors.iter().any(|f| f.dim < 2) {
                    return Err(Error::invalid(
                        "multi-system generation needs factors of dimension ≥ 2",
                    ));
                }
                let product: usize = factors.iter().map(|f| f.dim).product();
                if product != state.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: product,
                        found: state.dim(),
                    });
                }
                Ok((state.clone(), Some(factors.clone())))
            }
            GenerationKind::Evolved {
                base,
                hamiltonian,
                dt,
            } => {
                let (s, factors) = base.resolve()?;
                Ok((evolve(&s, hamiltonian, *dt)?, factors))
            }
        }
    }

    /// Resolves the recipe into its hidden state.
    pub fn prepare(&self) -> Result<PreparedGeneration> {
        let (state, factors) = self.resolve()?;
        Ok(PreparedGeneration {
            id: self.id.clone(),
            state,
            factors,
            guidance: self.guidance.clone(),
        })
    }
}

/// A generation whose hidden state has been computed.
#[derive(Clone, Debug)]
pub struct PreparedGeneration {
    id: String,
    state: OracleState,
    factors: Option<Vec<Factor>>,
    guidance: Option<GuidingWave>,
}

impl PreparedGeneration {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn factors(&self) -> Option<&[Factor]> {
        self.factors.as_deref()
    }

    pub fn guidance(&self) -> Option<&GuidingWave> {
        self.guidance.as_ref()
    }

    /// Oracle access to the hidden state, for exact reference laws.
    pub fn state(&self) -> &OracleState {
        &self.state
    }

    /// One realization of the generation.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Specimen<'_>> {
        self.generate_trial(0, rng)
    }

    pub fn generate_trial<R: Rng + ?Sized>(
        &self,
        trial_id: u64,
        rng: &mut R,
    ) -> Result<Specimen<'_>> {
        let corpuscle_position = match &self.guidance {
            Some(w) => Some(w.sample_position(rng)?),
            None => None,
        };
        Ok(Specimen {
            generation: self,
            corpuscle_position,
            alive: true,
            trial_id,
        })
    }
}

/// One specimen produced by a generation. Any measurement consumes it.
#[derive(Debug)]
pub struct Specimen<'g> {
    generation: &'g PreparedGeneration,
    corpuscle_position: Option<Vec3>,
    alive: bool,
    trial_id: u64,
}

/// A registered mark coded into one eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodedOutcome {
    pub observable: String,
    pub eigen_index: usize,
    pub eigenvalue: f64,
    /// `(Δx·Δt)` cell of the mark; the coding map is the identity on indices
    pub region_index: usize,
    pub trial_id: u64,
}

impl CodedOutcome {
    fn new(obs: &ObservableSpec, j: usize, trial_id: u64) -> Self {
        Self {
            observable: obs.name().to_string(),
            eigen_index: j,
            eigenvalue: obs.eigenvalues()[j],
            region_index: j,
            trial_id,
        }
    }
}

impl<'g> Specimen<'g> {
    pub fn hidden_state(&self) -> &'g OracleState {
        &self.generation.state
    }

    pub fn corpuscle_position(&self) -> Option<Vec3> {
        self.corpuscle_position
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn trial_id(&self) -> u64 {
        self.trial_id
    }

    fn consume(&mut self) -> Result<()> {
        if !self.alive {
            return Err(Error::DestroyedSpecimen);
        }
        self.alive = false;
        Ok(())
    }

    /// Non-guided coding: an eigenvalue index drawn from the Born law.
    pub fn mes_coding_nc<R: Rng + ?Sized>(
        &mut self,
        obs: &ObservableSpec,
        rng: &mut R,
    ) -> Result<CodedOutcome> {
        if !self.alive {
            return Err(Error::DestroyedSpecimen);
        }
        let sampler = BornSampler::for_state(self.hidden_state(), obs)?;
        let j = self.code_with(&sampler, rng)?;
        Ok(CodedOutcome::new(obs, j, self.trial_id))
    }

    /// [`Self::mes_coding_nc`] with the Born sampler of this generation and
    /// observable built once by the caller; draws the same index.
    pub(crate) fn code_with<R: Rng + ?Sized>(
        &mut self,
        sampler: &BornSampler,
        rng: &mut R,
    ) -> Result<usize> {
        self.consume()?;
        Ok(sampler.sample(rng))
    }

    /// Guided coding: the corpuscle position and the momentum the attached
    /// wave assigns to it at time `t`.
    pub fn mes_coding_guided(&mut self, t: f64) -> Result<(Vec3, Vec3)> {
        if !self.alive {
            return Err(Error::DestroyedSpecimen);
        }
        let wave = self
            .generation
            .guidance
            .as_ref()
            .ok_or(Error::GuidedCodingUnavailable)?;
        let r = self
            .corpuscle_position
            .ok_or(Error::GuidedCodingUnavailable)?;
        let p = wave.guided_momentum_at(r, t)?;
        self.consume()?;
        Ok((r, p))
    }

    /// Complete measurement of a multi-system specimen: one mark per factor,
    /// drawn from the joint law in the product of the factor eigenbases.
    pub fn mes_complete<R: Rng + ?Sized>(
        &mut self,
        factor_obs: &[ObservableSpec],
        rng: &mut R,
    ) -> Result<Vec<CodedOutcome>> {
        if !self.alive {
            return Err(Error::DestroyedSpecimen);
        }
        let factors = self
            .generation
            .factors()
            .ok_or_else(|| Error::invalid("specimen is not multi-system"))?;
        let law = joint_law(self.hidden_state(), factors, factor_obs)?;
        self.consume()?;
        let mut flat = BornSampler::new(&law)?.sample(rng);
        let mut idx = vec![0; factors.len()];
        for (slot, f) in idx.iter_mut().zip(factors).rev() {
            *slot = flat % f.dim;
            flat /= f.dim;
        }
        Ok(idx
            .into_iter()
            .zip(factor_obs)
            .map(|(j, o)| CodedOutcome::new(o, j, self.trial_id))
            .collect())
    }
}

fn check_factor_obs(factors: &[Factor], factor_obs: &[ObservableSpec]) -> Result<()> {
    if factors.len() != factor_obs.len() {
        return Err(Error::LengthMismatch(factors.len(), factor_obs.len()));
    }
    for (f, o) in factors.iter().zip(factor_obs) {
        if f.dim != o.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim,
                found: o.dim(),
            });
        }
    }
    Ok(())
}

/// Born law of the joint state in `⊗ U_i`, indexed first-factor-major.
pub fn joint_law(
    state: &OracleState,
    factors: &[Factor],
    factor_obs: &[ObservableSpec],
) -> Result<Vec<f64>> {
    check_factor_obs(factors, factor_obs)?;
    let mut basis: CMatrix = DMatrix::identity(1, 1);
    for o in factor_obs {
        basis = basis.kronecker(o.eigenbasis());
    }
    if basis.nrows() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.nrows(),
            found: state.dim(),
        });
    }
    Ok((basis.adjoint() * state.to_vector())
        .iter()
        .map(|z| z.norm_sqr())
        .collect())
}

/// Marginal law of factor `i` obtained by summing the joint law over the others.
pub fn marginal_law(
    state: &OracleState,
    factors: &[Factor],
    factor_obs: &[ObservableSpec],
    i: usize,
) -> Result<Vec<f64>> {
    if i >= factors.len() {
        return Err(Error::invalid(format!("factor index {i} out of range")));
    }
    let joint = joint_law(state, factors, factor_obs)?;
    let inner: usize = factors[i + 1..].iter().map(|f| f.dim).product();
    let d = factors[i].dim;
    let mut out = vec![0.0; d];
    for (flat, p) in joint.iter().enumerate() {
        out[(flat / inner) % d] += p;
    }
    Ok(out)
}

/// `p = m·d/(t_n − t₀)` for a flight of displacement `d`.
pub fn time_of_flight(displacement: Vec3, t_n: f64, t0: f64, m: f64) -> Result<Vec3> {
    let dt = t_n - t0;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveFlightTime(dt));
    }
    if !(m > 0.0) {
        return Err(Error::invalid("mass must be positive"));
    }
    Ok(displacement.map(|x| m * x / dt))
}

/// `n` independent successions `[generate → mes_coding_nc]` accumulated in
/// trial order into a law with the given stability parameters.
pub fn run_successions(
    g: &PreparedGeneration,
    obs: &ObservableSpec,
    n: u64,
    params: LawParams,
    seed: u64,
) -> Result<FactualLaw> {
    if n == 0 {
        return Err(Error::invalid("need at least one succession"));
    }
    params.validate()?;
    if obs.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: obs.dim(),
        });
    }
    // every specimen carries the same hidden state, so one sampler serves all
    let sampler = BornSampler::for_state(g.state(), obs)?;
    let indices = try_par_trials(seed, n, |id, rng: &mut StreamRng| {
        g.generate_trial(id, rng)?.code_with(&sampler, rng)
    })?;
    let mut law = FactualLaw::for_observable(obs.name(), obs.dim(), params)?;
    for j in indices {
        law.accumulate_index(j)?;
    }
    Ok(law)
}

/// `(position, momentum)` pairs from `n` guided codings at time `t`.
pub fn guided_ensemble(
    g: &PreparedGeneration,
    n: u64,
    t: f64,
    seed: u64,
) -> Result<Vec<(Vec3, Vec3)>> {
    if g.guidance().is_none() {
        return Err(Error::GuidedCodingUnavailable);
    }
    try_par_trials(seed, n, |id, rng: &mut StreamRng| {
        g.generate_trial(id, rng)?.mes_coding_guided(t)
    })
}

/// Counts of complete multi-system measurements, indexed first-factor-major.
pub fn run_complete_successions(
    g: &PreparedGeneration,
    factor_obs: &[ObservableSpec],
    n: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    let factors = g
        .factors()
        .ok_or_else(|| Error::invalid("generation is not multi-system"))?;
    check_factor_obs(factors, factor_obs)?;
    let dims: Vec<usize> = factors.iter().map(|f| f.dim).collect();
    let outcomes = try_par_trials(seed, n, |id, rng: &mut StreamRng| {
        let marks = g.generate_trial(id, rng)?.mes_complete(factor_obs, rng)?;
        Ok::<_, Error>(
            marks
                .iter()
                .zip(&dims)
                .fold(0usize, |acc, (m, d)| acc * d + m.eigen_index),
        )
    })?;
    let mut counts = vec![0u64; dims.iter().product()];
    for k in outcomes {
        counts[k] += 1;
    }
    Ok(counts)
}
