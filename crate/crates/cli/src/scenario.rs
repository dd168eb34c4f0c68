//! Scenario files: the JSON description of one run.
//!
//! Complex numbers are `[re, im]` pairs and matrices are lists of rows.
//! Everything that refers to something else does so by name, and
//! [`Scenario::load`] resolves every name and checks every matrix before a
//! command runs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use factum_core::dbb::{
    BornCheckConfig, ExpConfig, GuidingWave, PlaneWave, PlaneWaveSum, TwoWaveParams, TwoWaveState,
};
use factum_core::genesis::{Factor, GenerationOp};
use factum_core::hilbert::{chirp_matrix, fourier_matrix, random};
use factum_core::serde_complex::{matrix::from_rows, Pair};
use factum_core::{
    HamiltonianSpec, LawParams, ObservableSpec, OracleState, PreparedGeneration, RetrievalConfig,
    TransformMatrix, C64,
};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

type Rows = Vec<Vec<Pair>>;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Relative to the scenario file; `--out` takes precedence.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub states: IndexMap<String, StateDef>,
    #[serde(default)]
    pub observables: IndexMap<String, ObservableDef>,
    #[serde(default)]
    pub transforms: Vec<TransformDef>,
    #[serde(default)]
    pub hamiltonians: IndexMap<String, HamiltonianDef>,
    #[serde(default)]
    pub generations: IndexMap<String, GenerationDef>,
    #[serde(default)]
    pub measurement: Option<MeasurementPlan>,
    #[serde(default)]
    pub stability: Option<StabilitySection>,
    #[serde(default)]
    pub tree: Option<TreeSection>,
    #[serde(default)]
    pub reconstruct: Option<ReconstructSection>,
    #[serde(default)]
    pub exp: Option<ExpSection>,
    #[serde(default)]
    pub borncheck: Option<BornCheckSection>,

    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateDef {
    Amplitudes {
        amplitudes: Vec<C64>,
        #[serde(default)]
        normalize: bool,
    },
    Basis {
        dim: usize,
        index: usize,
    },
    Random {
        dim: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableDef {
    Standard {
        dim: usize,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
    },
    Fourier {
        dim: usize,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
    },
    Chirp {
        dim: usize,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
    },
    /// Columns of `matrix` are the eigenvectors.
    Explicit {
        matrix: Rows,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
    },
    Random {
        dim: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformDef {
    pub from: String,
    pub to: String,
    pub matrix: Rows,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianDef {
    pub matrix: Rows,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenerationDef {
    Simple {
        state: String,
        #[serde(default)]
        guidance: Option<GuidingWave>,
    },
    Composed {
        weights: Vec<C64>,
        components: Vec<String>,
        #[serde(default)]
        guidance: Option<GuidingWave>,
    },
    MultiSystem {
        factors: Vec<Factor>,
        state: String,
        #[serde(default)]
        guidance: Option<GuidingWave>,
    },
    Evolved {
        base: String,
        hamiltonian: String,
        dt: f64,
        #[serde(default)]
        guidance: Option<GuidingWave>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementPlan {
    pub generation: String,
    pub observables: Vec<String>,
    pub n: u64,
    #[serde(default)]
    pub params: LawParams,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default)]
    pub params: Option<LawParams>,
    pub source: StabilitySource,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StabilitySource {
    /// A law in JSON form (with its block history) or CSV form.
    LawFile { path: PathBuf },
    /// Successions of a named generation and observable.
    Successions {
        generation: String,
        observable: String,
        n: u64,
    },
    /// Consecutive runs of independent draws from fixed laws.
    Segments {
        observable: String,
        segments: Vec<Segment>,
    },
    /// Literal per-block counts, optionally repeated.
    BlockCounts {
        observable: String,
        blocks: Vec<Vec<u64>>,
        #[serde(default = "one_usize")]
        repeat: usize,
    },
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub probabilities: Vec<f64>,
    pub trials: u64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    /// Reconstruct on this observable and record the branch correlations.
    #[serde(default)]
    pub mpc_reference: Option<String>,
    #[serde(default)]
    pub retrieval: RetrievalOptions,
}

/// Phase-retrieval settings; the restart seed derives from the run seed.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalOptions {
    pub restarts: usize,
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        let d = RetrievalConfig::default();
        Self {
            restarts: d.restarts,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

impl RetrievalOptions {
    pub fn config(&self, seed: u64) -> RetrievalConfig {
        RetrievalConfig {
            restarts: self.restarts,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            seed,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    pub reference: String,
    pub partners: Vec<String>,
    #[serde(default)]
    pub heldout: Vec<String>,
    pub source: LawSource,
    #[serde(default)]
    pub retrieval: RetrievalOptions,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSource {
    /// Born laws of a generation's hidden state.
    Exact { generation: String },
    /// Laws measured through `n` successions per observable.
    Sampled {
        generation: String,
        n: u64,
        #[serde(default)]
        params: LawParams,
    },
    /// Literal probability vectors.
    Probabilities { laws: IndexMap<String, Vec<f64>> },
    /// Law files in JSON or CSV form.
    Files { laws: IndexMap<String, PathBuf> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TwoWaveDef {
    Electron,
    Particle {
        rest_mass: f64,
        speed: f64,
        theta0: f64,
        #[serde(default)]
        delta_phase: f64,
    },
    Params(TwoWaveParams),
}

impl TwoWaveDef {
    pub fn build(&self) -> CliResult<TwoWaveState> {
        Ok(match self {
            TwoWaveDef::Electron => TwoWaveState::electron_default(),
            TwoWaveDef::Particle {
                rest_mass,
                speed,
                theta0,
                delta_phase,
            } => TwoWaveState::from_particle(*rest_mass, *speed, *theta0, *delta_phase)?,
            TwoWaveDef::Params(p) => TwoWaveState::new(*p)?,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpSection {
    pub state: TwoWaveDef,
    #[serde(default)]
    pub config: ExpConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveDef {
    PlaneWaves {
        components: Vec<PlaneWave>,
        box_side: f64,
        #[serde(default)]
        hbar: Option<f64>,
    },
    /// The two branches of a two-wave state with the given weights, in a box
    /// spanning `box_periods` fringe periods.
    TwoWave {
        state: TwoWaveDef,
        weights: [C64; 2],
        box_periods: f64,
    },
}

impl WaveDef {
    pub fn build(&self) -> CliResult<PlaneWaveSum> {
        Ok(match self {
            WaveDef::PlaneWaves {
                components,
                box_side,
                hbar,
            } => PlaneWaveSum::new(
                components.clone(),
                *box_side,
                hbar.unwrap_or(factum_core::dbb::PLANCK_H / (2.0 * std::f64::consts::PI)),
            )?,
            WaveDef::TwoWave {
                state,
                weights,
                box_periods,
            } => {
                let s = state.build()?;
                PlaneWaveSum::from_two_wave(&s, *weights, box_periods * s.fringe_period())?
            }
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BornCheckSection {
    pub wave: WaveDef,
    #[serde(default)]
    pub config: BornCheckConfig,
}

impl Scenario {
    /// Parses and validates a scenario file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: PathBuf) -> CliResult<Self> {
        let mut s: Scenario =
            serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        s.base_dir = base_dir;
        s.validate()?;
        Ok(s)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> CliResult<()> {
        for name in self.states.keys() {
            self.state(name)?;
        }
        for name in self.observables.keys() {
            self.observable(name)?;
        }
        for t in &self.transforms {
            self.transform_def(t)?;
        }
        for name in self.hamiltonians.keys() {
            self.hamiltonian(name)?;
        }
        for name in self.generations.keys() {
            self.generation(name)?;
        }
        if let Some(m) = &self.measurement {
            self.generation(&m.generation)?;
            m.params.validate()?;
            for o in &m.observables {
                self.observable(o)?;
            }
            if m.n == 0 {
                return Err(CliError::Schema("measurement.n must be at least 1".into()));
            }
        }
        if let Some(st) = &self.stability {
            if let Some(p) = st.params {
                p.validate()?;
            }
            if let StabilitySource::Successions {
                generation,
                observable,
                ..
            } = &st.source
            {
                self.generation(generation)?;
                self.observable(observable)?;
            }
        }
        if let Some(t) = &self.tree {
            let m = self
                .measurement
                .as_ref()
                .ok_or_else(|| CliError::Schema("tree section needs a measurement plan".into()))?;
            if let Some(r) = &t.mpc_reference {
                if !m.observables.contains(r) {
                    return Err(CliError::Unresolved {
                        kind: "measured observable",
                        name: r.clone(),
                    });
                }
            }
        }
        if let Some(r) = &self.reconstruct {
            match &r.source {
                LawSource::Exact { generation } | LawSource::Sampled { generation, .. } => {
                    self.generation(generation)?;
                    for o in std::iter::once(&r.reference).chain(&r.partners) {
                        self.observable(o)?;
                    }
                }
                LawSource::Probabilities { laws } => {
                    for o in std::iter::once(&r.reference).chain(&r.partners) {
                        if !laws.contains_key(o) {
                            return Err(CliError::Unresolved {
                                kind: "law",
                                name: o.clone(),
                            });
                        }
                    }
                }
                LawSource::Files { laws } => {
                    for o in std::iter::once(&r.reference).chain(&r.partners) {
                        if !laws.contains_key(o) {
                            return Err(CliError::Unresolved {
                                kind: "law file",
                                name: o.clone(),
                            });
                        }
                    }
                }
            }
            for o in r.partners.iter().chain(&r.heldout) {
                self.transform(&r.reference, o)?;
            }
        }
        if let Some(e) = &self.exp {
            e.state.build()?;
            e.config.validate()?;
        }
        if let Some(b) = &self.borncheck {
            b.wave.build()?;
        }
        Ok(())
    }

    pub fn state(&self, name: &str) -> CliResult<OracleState> {
        let def = self
            .states
            .get(name)
            .ok_or_else(|| CliError::unresolved("state", name))?;
        Ok(match def {
            StateDef::Amplitudes {
                amplitudes,
                normalize: false,
            } => OracleState::new(amplitudes.clone())?,
            StateDef::Amplitudes {
                amplitudes,
                normalize: true,
            } => OracleState::normalized(amplitudes.clone())?,
            StateDef::Basis { dim, index } => OracleState::basis(*dim, *index)?,
            StateDef::Random { dim, seed } => {
                check_dim(*dim)?;
                random::state(*dim, &mut ChaCha8Rng::seed_from_u64(*seed))
            }
        })
    }

    pub fn observable(&self, name: &str) -> CliResult<ObservableSpec> {
        let def = self
            .observables
            .get(name)
            .ok_or_else(|| CliError::unresolved("observable", name))?;
        let with =
            |basis: DMatrix<C64>, eigenvalues: &Option<Vec<f64>>| -> CliResult<ObservableSpec> {
                Ok(match eigenvalues {
                    Some(ev) => ObservableSpec::new(name, ev.clone(), basis)?,
                    None => ObservableSpec::with_index_spectrum(name, basis)?,
                })
            };
        match def {
            ObservableDef::Standard { dim, eigenvalues } => {
                check_dim(*dim)?;
                with(DMatrix::identity(*dim, *dim), eigenvalues)
            }
            ObservableDef::Fourier { dim, eigenvalues } => {
                check_dim(*dim)?;
                with(fourier_matrix(*dim), eigenvalues)
            }
            ObservableDef::Chirp { dim, eigenvalues } => {
                check_dim(*dim)?;
                with(chirp_matrix(*dim), eigenvalues)
            }
            ObservableDef::Explicit {
                matrix,
                eigenvalues,
            } => with(matrix_from(matrix)?, eigenvalues),
            ObservableDef::Random { dim, seed } => {
                check_dim(*dim)?;
                Ok(random::observable(
                    name,
                    *dim,
                    &mut ChaCha8Rng::seed_from_u64(*seed),
                ))
            }
        }
    }

    fn transform_def(&self, t: &TransformDef) -> CliResult<TransformMatrix> {
        Ok(TransformMatrix::new(
            &t.from,
            &t.to,
            matrix_from(&t.matrix)?,
        )?)
    }

    /// The transform from `from` to `to`: an explicit entry (or the inverse
    /// of one in the other direction) wins over one derived from the two
    /// observables' eigenbases.
    pub fn transform(&self, from: &str, to: &str) -> CliResult<TransformMatrix> {
        if let Some(t) = self
            .transforms
            .iter()
            .find(|t| t.from == from && t.to == to)
        {
            return self.transform_def(t);
        }
        if let Some(t) = self
            .transforms
            .iter()
            .find(|t| t.from == to && t.to == from)
        {
            return Ok(self.transform_def(t)?.inverse());
        }
        if from == to {
            if let Ok(o) = self.observable(from) {
                return Ok(TransformMatrix::identity(from, o.dim()));
            }
        }
        match (self.observable(from), self.observable(to)) {
            (Ok(a), Ok(b)) => Ok(TransformMatrix::between(&a, &b)?),
            _ => Err(CliError::Unresolved {
                kind: "transform",
                name: format!("{from} -> {to}"),
            }),
        }
    }

    pub fn hamiltonian(&self, name: &str) -> CliResult<HamiltonianSpec> {
        let def = self
            .hamiltonians
            .get(name)
            .ok_or_else(|| CliError::unresolved("hamiltonian", name))?;
        Ok(HamiltonianSpec::new(matrix_from(&def.matrix)?, def.hbar)?)
    }

    /// Builds the named recipe, following references to other recipes.
    pub fn generation(&self, name: &str) -> CliResult<GenerationOp> {
        self.generation_inner(name, &mut HashSet::new())
    }

    fn generation_inner(&self, name: &str, seen: &mut HashSet<String>) -> CliResult<GenerationOp> {
        if !seen.insert(name.to_string()) {
            return Err(CliError::Schema(format!(
                "generation `{name}` refers to itself"
            )));
        }
        let def = self
            .generations
            .get(name)
            .ok_or_else(|| CliError::unresolved("generation", name))?;
        let (op, guidance) = match def {
            GenerationDef::Simple { state, guidance } => {
                (GenerationOp::simple(name, self.state(state)?), guidance)
            }
            GenerationDef::Composed {
                weights,
                components,
                guidance,
            } => {
                let parts = components
                    .iter()
                    .map(|c| self.generation_inner(c, seen))
                    .collect::<CliResult<Vec<_>>>()?;
                (
                    GenerationOp::composed(name, weights.clone(), parts),
                    guidance,
                )
            }
            GenerationDef::MultiSystem {
                factors,
                state,
                guidance,
            } => (
                GenerationOp::multi_system(name, factors.clone(), self.state(state)?),
                guidance,
            ),
            GenerationDef::Evolved {
                base,
                hamiltonian,
                dt,
                guidance,
            } => {
                let b = self.generation_inner(base, seen)?;
                (
                    GenerationOp::evolved(name, b, self.hamiltonian(hamiltonian)?, *dt),
                    guidance,
                )
            }
        };
        seen.remove(name);
        let op = match guidance {
            Some(w) => op.with_guidance(w.clone()),
            None => op,
        };
        // resolving here surfaces dimension and annihilation errors at load
        op.prepare()?;
        Ok(op)
    }

    pub fn prepared(&self, name: &str) -> CliResult<PreparedGeneration> {
        Ok(self.generation(name)?.prepare()?)
    }
}

fn check_dim(dim: usize) -> CliResult<()> {
    if dim < 2 {
        return Err(CliError::Schema(format!(
            "dimension must be at least 2, got {dim}"
        )));
    }
    Ok(())
}

fn matrix_from(rows: &Rows) -> CliResult<DMatrix<C64>> {
    let m = from_rows(rows).map_err(CliError::Schema)?;
    if m.nrows() != m.ncols() {
        return Err(CliError::Schema(format!(
            "matrix must be square, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}
