//! Pilot-wave guidance for closed-form interference fields.
//!
//! [`TwoWaveState`] is the stable superposition of two plane waves crossing
//! at `±θ⁰` around the `Ox` axis:
//!
//! ```text
//! ψ⁰ = √2 cos(χz + δ/2) · exp(i·2πν(t − x·sinθ⁰/V)) · exp(iδ/2),   χ = 2π(ν/V)·cosθ⁰
//! ```
//!
//! Its amplitude is time independent and periodic in `z`, so the quantum
//! potential is constant and the corpuscle is guided along `Ox` with speed
//! `(c²/V)·sinθ⁰`. On top of that the module models ionization kicks, the
//! resulting trace angles, the two-layer time-of-flight experiment, and the
//! sampling check of guided momenta on arbitrary plane-wave sums.
//!
//! All quantities here carry SI units.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::histogram::{mean_and_std, Histogram1D, VectorHistogram};
use crate::rng::{derive_seed, par_trials, try_par_trials, StreamRng};

pub const PLANCK_H: f64 = 6.626_070_15e-34;
pub const LIGHT_SPEED: f64 = 299_792_458.0;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// `|cos(χz + δ/2)|` below this counts as a node.
pub const NODE_TOL: f64 = 1e-12;

pub type Vec3 = [f64; 3];

fn scale(v: Vec3, s: f64) -> Vec3 {
    v.map(|x| x * s)
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Raw parameters of a [`TwoWaveState`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoWaveParams {
    /// frequency ν (1/s)
    pub nu: f64,
    /// phase speed V (m/s)
    pub phase_speed: f64,
    /// half-angle θ⁰ of each wave with `Oz` (rad)
    pub theta0: f64,
    /// relative phase δ of the two waves (rad)
    pub delta_phase: f64,
    /// rest mass m₀ (kg)
    pub rest_mass: f64,
    /// quantum mass M (kg)
    pub quantum_mass: f64,
    /// light speed c (m/s)
    #[serde(default = "default_c")]
    pub c: f64,
    /// action constant h (J·s)
    #[serde(default = "default_h")]
    pub h: f64,
}

fn default_c() -> f64 {
    LIGHT_SPEED
}

fn default_h() -> f64 {
    PLANCK_H
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TwoWaveParams", into = "TwoWaveParams")]
pub struct TwoWaveState {
    p: TwoWaveParams,
}

impl TryFrom<TwoWaveParams> for TwoWaveState {
    type Error = Error;
    fn try_from(p: TwoWaveParams) -> Result<Self> {
        Self::new(p)
    }
}

impl From<TwoWaveState> for TwoWaveParams {
    fn from(s: TwoWaveState) -> Self {
        s.p
    }
}

impl TwoWaveState {
    pub fn new(p: TwoWaveParams) -> Result<Self> {
        let positive = [p.nu, p.phase_speed, p.rest_mass, p.quantum_mass, p.c, p.h];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(
                "ν, V, m₀, M, c and h must be positive and finite",
            ));
        }
        let s = Self { p };
        if !(s.chi() > 0.0) {
            return Err(Error::invalid(format!(
                "χ = 2π(ν/V)cosθ⁰ must be positive, got {}",
                s.chi()
            )));
        }
        let v = s.guided_velocity()[0];
        if !(v.abs() < p.c) {
            return Err(Error::invalid(format!(
                "guided speed {v} m/s is not below c"
            )));
        }
        Ok(s)
    }

    /// de Broglie wave of a particle of rest mass `m0` moving at `speed` in
    /// each branch: `M = γm₀`, `ν = Mc²/h`, `V = c²/speed`.
    pub fn from_particle(m0: f64, speed: f64, theta0: f64, delta_phase: f64) -> Result<Self> {
        if !(speed > 0.0 && speed < LIGHT_SPEED) {
            return Err(Error::invalid("particle speed must lie in (0, c)"));
        }
        let gamma = 1.0 / (1.0 - (speed / LIGHT_SPEED).powi(2)).sqrt();
        let m = gamma * m0;
        Self::new(TwoWaveParams {
            nu: m * LIGHT_SPEED * LIGHT_SPEED / PLANCK_H,
            phase_speed: LIGHT_SPEED * LIGHT_SPEED / speed,
            theta0,
            delta_phase,
            rest_mass: m0,
            quantum_mass: m,
            c: LIGHT_SPEED,
            h: PLANCK_H,
        })
    }

    /// A 10⁷ m/s electron in waves at θ⁰ = 1.2 rad, δ = 0.
    pub fn electron_default() -> Self {
        Self::from_particle(ELECTRON_MASS, 1.0e7, 1.2, 0.0).expect("default parameters are valid")
    }

    pub fn params(&self) -> &TwoWaveParams {
        &self.p
    }

    pub fn with_theta0(&self, theta0: f64) -> Result<Self> {
        Self::new(TwoWaveParams { theta0, ..self.p })
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(TwoWaveParams { nu, ..self.p })
    }

    pub fn hbar(&self) -> f64 {
        self.p.h / (2.0 * PI)
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.p.nu
    }

    /// Wavenumber `2πν/V` of each branch.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.p.nu / self.p.phase_speed
    }

    /// `χ = 2π(ν/V)·cosθ⁰`.
    pub fn chi(&self) -> f64 {
        self.wavenumber() * self.p.theta0.cos()
    }

    /// Distance between neighbouring bright fringes, `π/χ`.
    pub fn fringe_period(&self) -> f64 {
        PI / self.chi()
    }

    /// `z` of the bright fringe through the origin's neighbourhood, where `χz + δ/2 = 0`.
    pub fn central_maximum(&self) -> f64 {
        -self.p.delta_phase / (2.0 * self.chi())
    }

    fn fringe_argument(&self, z: f64) -> f64 {
        self.chi() * z + self.p.delta_phase / 2.0
    }

    /// `a(z) = √2·cos(χz + δ/2)`; the stable state has no time dependence.
    pub fn amplitude(&self, z: f64, _t: f64) -> f64 {
        SQRT_2 * self.fringe_argument(z).cos()
    }

    /// `|ψ⁰|² = a²`.
    pub fn density(&self, z: f64) -> f64 {
        let a = self.amplitude(z, 0.0);
        a * a
    }

    /// The two component waves at `(x, z, t)`, each of modulus `1/√2`.
    pub fn components(&self, x: f64, z: f64, t: f64) -> (C64, C64) {
        let common = self.omega() * t - self.wavenumber() * self.p.theta0.sin() * x;
        let chi = self.chi();
        let w = std::f64::consts::FRAC_1_SQRT_2;
        (
            C64::from_polar(w, common + chi * z + self.p.delta_phase),
            C64::from_polar(w, common - chi * z),
        )
    }

    /// `ψ₁ + ψ₂` evaluated from the components.
    pub fn psi(&self, x: f64, z: f64, t: f64) -> C64 {
        let (a, b) = self.components(x, z, t);
        a + b
    }

    /// Guided velocity `((c²/V)·sinθ⁰, 0, 0)`, uniform in space and time.
    pub fn guided_velocity(&self) -> Vec3 {
        [
            self.p.c * self.p.c * self.p.theta0.sin() / self.p.phase_speed,
            0.0,
            0.0,
        ]
    }

    /// `p⁰ = M·v`.
    pub fn guided_momentum(&self) -> Vec3 {
        scale(self.guided_velocity(), self.p.quantum_mass)
    }

    /// de Broglie momenta `M·(c²/V)·(sinθ⁰, 0, ∓cosθ⁰)` of the two branches:
    /// the two-valued momentum spectrum of the superposition.
    pub fn branch_momenta(&self) -> [Vec3; 2] {
        let k = self.p.quantum_mass * self.p.c * self.p.c / self.p.phase_speed;
        let (s, co) = (self.p.theta0.sin(), self.p.theta0.cos());
        [[k * s, 0.0, -k * co], [k * s, 0.0, k * co]]
    }

    /// Angle of each branch momentum with `Ox` (rad).
    pub fn branch_directions(&self) -> [f64; 2] {
        self.branch_momenta().map(|p| p[2].atan2(p[0]))
    }

    /// `Q = (h²/8π²m₀)·□a/a` with `□ = c⁻²∂²ₜ − ∇²`; equals `(h²/8π²m₀)χ²`
    /// wherever it is defined.
    pub fn quantum_potential(&self, z: f64) -> Result<f64> {
        let u = self.fringe_argument(z);
        let co = u.cos();
        if co.abs() < NODE_TOL {
            return Err(Error::NodeSingularity(z));
        }
        let chi = self.chi();
        let a = SQRT_2 * co;
        let a_zz = -SQRT_2 * chi * chi * co;
        // a carries no time dependence, so only the spatial part survives
        let box_over_a = -a_zz / a;
        Ok(self.potential_prefactor() * box_over_a)
    }

    fn potential_prefactor(&self) -> f64 {
        self.p.h * self.p.h / (8.0 * PI * PI * self.p.rest_mass)
    }

    /// `F = −dQ/dz`. At a node the potential is undefined but its limit is
    /// the same constant, so the force is reported as zero there.
    pub fn quantum_force(&self, z: f64) -> f64 {
        let u = self.fringe_argument(z);
        let (s, co) = u.sin_cos();
        if co.abs() < NODE_TOL {
            return 0.0;
        }
        let chi = self.chi();
        // d/dz(−a''/a) = (−a'''·a + a''·a') / a², with a = √2 cos u
        let a = SQRT_2 * co;
        let numerator = 2.0 * chi.powi(3) * (-(s * co) + co * s);
        -self.potential_prefactor() * numerator / (a * a)
    }

    /// Velocity from the phase of the factorized closed form; the `z`
    /// dependence sits entirely in the real amplitude, so only `Ox` remains.
    pub fn velocity_field(&self, _r: Vec3, _t: f64) -> Vec3 {
        let dphi_dt = self.omega();
        let grad = [-self.wavenumber() * self.p.theta0.sin(), 0.0, 0.0];
        let c2 = self.p.c * self.p.c;
        grad.map(|g| -c2 * g / dphi_dt)
    }

    /// Integrates a trajectory under the guidance velocity plus the quantum
    /// force, returning `steps + 1` positions.
    pub fn propagate(&self, r0: Vec3, duration: f64, steps: usize) -> Vec<Vec3> {
        let dt = duration / steps.max(1) as f64;
        let mut r = r0;
        let mut kick_vz = 0.0;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(r);
        for n in 0..steps {
            let t = n as f64 * dt;
            let v = self.velocity_field(r, t);
            kick_vz += self.quantum_force(r[2]) / self.p.quantum_mass * dt;
            r = [
                r[0] + v[0] * dt,
                r[1] + v[1] * dt,
                r[2] + (v[2] + kick_vz) * dt,
            ];
            out.push(r);
        }
        out
    }

    /// `h²χ / (4π c² m₀²)` (m/rad), the default displacement per unit phase jump.
    pub fn default_kappa(&self) -> f64 {
        let p = &self.p;
        p.h * p.h * self.chi() / (4.0 * PI * p.c * p.c * p.rest_mass * p.rest_mass)
    }

    /// Draws `z` from the fringe density `a²(z)/∫a²` over `periods` bright
    /// fringes centred on [`central_maximum`](Self::central_maximum).
    pub fn sample_fringe_z<R: Rng + ?Sized>(&self, periods: f64, rng: &mut R) -> f64 {
        let width = periods * self.fringe_period();
        let z0 = self.central_maximum();
        loop {
            let z = z0 + (rng.random::<f64>() - 0.5) * width;
            // a² ≤ 2
            if 2.0 * rng.random::<f64>() < self.density(z) {
                return z;
            }
        }
    }
}

/// Displacement `Δz = −κ·Δδ` of the corpuscle after one ionization.
pub fn ionization_kick(dd: f64, kappa: f64) -> f64 {
    -kappa * dd
}

/// Trace angles with `Ox`: entry `i` is `arctan(Σ_{j≤i} Δz_j/λ_j)`, the
/// direction from the first ionization to the one after interaction `i`.
pub fn trace_angles(kicks: &[f64], spacings: &[f64]) -> Result<Vec<f64>> {
    if kicks.len() != spacings.len() {
        return Err(Error::LengthMismatch(kicks.len(), spacings.len()));
    }
    if spacings.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::invalid("interaction spacings must be positive"));
    }
    let mut acc = 0.0;
    Ok(kicks
        .iter()
        .zip(spacings)
        .map(|(dz, l)| {
            acc += dz / l;
            acc.atan()
        })
        .collect())
}

/// Law of the phase jump Δδ at one ionization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KickLaw {
    Uniform { half_width: f64 },
}

impl Default for KickLaw {
    fn default() -> Self {
        KickLaw::Uniform {
            half_width: PI / 2.0,
        }
    }
}

impl KickLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            KickLaw::Uniform { half_width } => (2.0 * rng.random::<f64>() - 1.0) * half_width,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            KickLaw::Uniform { half_width } if half_width >= 0.0 && half_width.is_finite() => {
                Ok(())
            }
            _ => Err(Error::invalid(
                "kick law half-width must be finite and non-negative",
            )),
        }
    }
}

/// Parameters of the two-layer experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpConfig {
    /// distance λ between the thin layer L1 and the thick layer L2 (m)
    pub lambda_sep: f64,
    /// displacement per unit phase jump κ (m/rad); `None` uses the default formula
    pub kappa: Option<f64>,
    pub kick_law: KickLaw,
    pub n_trials: u64,
    /// ionizing interactions in L1 per trial (1 or 2 in the experiment)
    pub elastic_interactions_per_trial: usize,
    /// bright fringes covered by the initial position window
    pub fringe_periods: f64,
    /// multiples of λ probed by the direction-vs-λ table
    pub lambda_factors: Vec<f64>,
    pub angle_bins: usize,
    pub pz_bins: usize,
    pub fringe_bins_per_period: usize,
    pub phase_bins: usize,
}

impl Default for ExpConfig {
    fn default() -> Self {
        Self {
            lambda_sep: 1.0e-9,
            kappa: None,
            kick_law: KickLaw::default(),
            n_trials: 100_000,
            elastic_interactions_per_trial: 2,
            fringe_periods: 16.0,
            lambda_factors: vec![1.0, 2.0, 4.0, 8.0],
            angle_bins: 180,
            pz_bins: 200,
            fringe_bins_per_period: 20,
            phase_bins: 20,
        }
    }
}

impl ExpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_sep > 0.0) {
            return Err(Error::invalid("lambda_sep must be positive"));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0) {
                return Err(Error::invalid("kappa must be non-negative"));
            }
        }
        self.kick_law.validate()?;
        if self.n_trials == 0 || self.elastic_interactions_per_trial == 0 {
            return Err(Error::invalid(
                "need at least one trial and one interaction per trial",
            ));
        }
        if !(self.fringe_periods > 0.0) || self.lambda_factors.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::invalid(
                "fringe window and lambda factors must be positive",
            ));
        }
        if self.angle_bins == 0
            || self.pz_bins == 0
            || self.fringe_bins_per_period == 0
            || self.phase_bins == 0
        {
            return Err(Error::invalid("histogram bin counts must be positive"));
        }
        Ok(())
    }

    pub fn kappa_for(&self, s: &TwoWaveState) -> f64 {
        self.kappa.unwrap_or_else(|| s.default_kappa())
    }
}

/// Registered data of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// `(position, time)` of the ionization at L1 and of the first one at L2
    pub ionizations: Vec<(Vec3, f64)>,
    pub estimated_p: Vec3,
    pub gammas: Vec<f64>,
}

/// One succession of the experiment: initial position from the fringe
/// density, kicks in L1, guided flight to L2, time-of-flight estimate.
pub fn simulate_trial<R: Rng + ?Sized>(
    s: &TwoWaveState,
    cfg: &ExpConfig,
    kappa: f64,
    rng: &mut R,
) -> TraceRecord {
    let z1 = s.sample_fringe_z(cfg.fringe_periods, rng);
    let r1 = [0.0, 0.0, z1];
    let t1 = 0.0;
    let n = cfg.elastic_interactions_per_trial;
    let kicks: Vec<f64> = (0..n)
        .map(|_| ionization_kick(cfg.kick_law.sample(rng), kappa))
        .collect();
    let spacings = vec![cfg.lambda_sep; n];
    let gammas = trace_angles(&kicks, &spacings).expect("spacings are positive");

    // direction of displacement is conserved: flight along Ox at the guided speed
    let vx = s.guided_velocity()[0];
    let t2 = t1 + cfg.lambda_sep / vx;
    let r2 = [
        r1[0] + cfg.lambda_sep,
        r1[1],
        r1[2] + kicks.iter().sum::<f64>(),
    ];
    let estimated_p = crate::genesis::time_of_flight(sub(r2, r1), t2, t1, s.params().quantum_mass)
        .expect("flight time is positive");
    TraceRecord {
        ionizations: vec![(r1, t1), (r2, t2)],
        estimated_p,
        gammas,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub mean_abs_gamma: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmReference {
    pub momenta: [Vec3; 2],
    pub directions: [f64; 2],
}

/// Ensemble summary of [`simulate_exp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpSummary {
    pub n_trials: u64,
    pub kappa: f64,
    pub guided_momentum: Vec3,
    pub mean_estimated_p: Vec3,
    pub std_estimated_p: Vec3,
    pub sigma_px: f64,
    pub sigma_z: f64,
    pub heisenberg_product: f64,
    pub hbar_half: f64,
    pub qm_reference: QmReference,
    /// fraction of estimated directions closer to a two-wave branch direction than to `Ox`
    pub qm_direction_mass: f64,
    pub angle_histogram: Histogram1D,
    pub pz_histogram: Histogram1D,
    pub fringe_histogram: Histogram1D,
    /// `(χz + δ/2) mod π` at L2: bright fringes at 0 and π, dark at π/2
    pub fringe_phase_histogram: Histogram1D,
    pub lambda_scaling: Vec<LambdaRow>,
    pub lambda_slope: f64,
}

impl ExpSummary {
    /// `(max − min)/(max + min)` of the folded fringe-phase histogram.
    pub fn fringe_visibility(&self) -> f64 {
        let c = &self.fringe_phase_histogram.counts;
        let max = *c.iter().max().unwrap_or(&0) as f64;
        let min = *c.iter().min().unwrap_or(&0) as f64;
        if max + min == 0.0 {
            0.0
        } else {
            (max - min) / (max + min)
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Mean `|γ|` of the first-to-L2 trace angle at spacing `lambda`.
pub fn mean_abs_trace_angle(
    cfg: &ExpConfig,
    kappa: f64,
    lambda: f64,
    n: u64,
    seed: u64,
) -> LambdaRow {
    let k = cfg.elastic_interactions_per_trial;
    let abs_gammas = par_trials(seed, n, |_, rng: &mut StreamRng| {
        let kicks: Vec<f64> = (0..k)
            .map(|_| ionization_kick(cfg.kick_law.sample(rng), kappa))
            .collect();
        let g = trace_angles(&kicks, &vec![lambda; k]).expect("lambda is positive");
        g.last().copied().unwrap_or(0.0).abs()
    });
    let (m, sd) = mean_and_std(&abs_gammas);
    LambdaRow {
        lambda,
        mean_abs_gamma: m,
        std_err: sd / (n as f64).sqrt(),
    }
}

pub fn simulate_exp(s: &TwoWaveState, cfg: &ExpConfig, seed: u64) -> Result<ExpSummary> {
    cfg.validate()?;
    let kappa = cfg.kappa_for(s);
    let traces = par_trials(
        derive_seed(seed, "exp/trials"),
        cfg.n_trials,
        |_, rng: &mut StreamRng| simulate_trial(s, cfg, kappa, rng),
    );

    let p0 = s.guided_momentum();
    let qm = QmReference {
        momenta: s.branch_momenta(),
        directions: s.branch_directions(),
    };
    let p_branch_z = qm.momenta[1][2].abs();

    let mut angle_h = Histogram1D::new(-PI / 2.0, PI / 2.0, cfg.angle_bins)?;
    let mut pz_h = Histogram1D::new(-1.5 * p_branch_z, 1.5 * p_branch_z, cfg.pz_bins)?;
    let period = s.fringe_period();
    let half = 0.5 * (cfg.fringe_periods + 2.0) * period;
    let zc = s.central_maximum();
    let fringe_bins =
        ((cfg.fringe_periods + 2.0) * cfg.fringe_bins_per_period as f64).round() as usize;
    let mut fringe_h = Histogram1D::new(zc - half, zc + half, fringe_bins.max(1))?;
    let mut phase_h = Histogram1D::new(0.0, PI, cfg.phase_bins)?;

    let mut comps: [Vec<f64>; 3] = Default::default();
    let mut z_initial = Vec::with_capacity(traces.len());
    let mut qm_like = 0u64;
    let qm_dir = qm.directions[1].abs();
    for tr in &traces {
        let p = tr.estimated_p;
        for (c, x) in comps.iter_mut().zip(p) {
            c.push(x);
        }
        let angle = p[2].atan2(p[0]);
        angle_h.add(angle);
        pz_h.add(p[2]);
        if angle.abs() > 0.5 * qm_dir {
            qm_like += 1;
        }
        z_initial.push(tr.ionizations[0].0[2]);
        let z2 = tr.ionizations[1].0[2];
        fringe_h.add(z2);
        phase_h.add((s.chi() * z2 + s.params().delta_phase / 2.0).rem_euclid(PI));
    }
    let stats = comps.map(|c| mean_and_std(&c));
    let (_, sigma_z) = mean_and_std(&z_initial);
    let sigma_px = stats[0].1;

    let lambda_scaling: Vec<LambdaRow> = cfg
        .lambda_factors
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let lambda = f * cfg.lambda_sep;
            mean_abs_trace_angle(
                cfg,
                kappa,
                lambda,
                cfg.n_trials,
                derive_seed(seed, &format!("exp/lambda/{i}")),
            )
        })
        .collect();
    let lambda_slope =
        if lambda_scaling.len() >= 2 && lambda_scaling.iter().all(|r| r.mean_abs_gamma > 0.0) {
            let xs: Vec<f64> = lambda_scaling.iter().map(|r| r.lambda).collect();
            let ys: Vec<f64> = lambda_scaling.iter().map(|r| r.mean_abs_gamma).collect();
            log_log_slope(&xs, &ys)
        } else {
            f64::NAN
        };

    Ok(ExpSummary {
        n_trials: cfg.n_trials,
        kappa,
        guided_momentum: p0,
        mean_estimated_p: stats.map(|s| s.0),
        std_estimated_p: stats.map(|s| s.1),
        sigma_px,
        sigma_z,
        heisenberg_product: sigma_px * sigma_z,
        hbar_half: s.hbar() / 2.0,
        qm_reference: qm,
        qm_direction_mass: qm_like as f64 / cfg.n_trials as f64,
        angle_histogram: angle_h,
        pz_histogram: pz_h,
        fringe_histogram: fringe_h,
        fringe_phase_histogram: phase_h,
        lambda_scaling,
        lambda_slope,
    })
}

/// One plane-wave component `w·exp(i p·r/ħ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub weight: C64,
    pub momentum: Vec3,
}

/// Finite sum of plane waves on a periodic cube `[0, L)³`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveSum {
    pub components: Vec<PlaneWave>,
    pub box_side: f64,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
}

fn default_hbar() -> f64 {
    PLANCK_H / (2.0 * PI)
}

impl PlaneWaveSum {
    pub fn new(components: Vec<PlaneWave>, box_side: f64, hbar: f64) -> Result<Self> {
        let w = Self {
            components,
            box_side,
            hbar,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid(
                "plane-wave sum needs at least one component",
            ));
        }
        if self.components.iter().all(|c| c.weight.norm() == 0.0) {
            return Err(Error::ZeroField);
        }
        if !(self.box_side > 0.0) || !(self.hbar > 0.0) {
            return Err(Error::invalid("box side and hbar must be positive"));
        }
        Ok(())
    }

    /// The two branches of `s` with the given weights, on a cube of side `box_side`.
    pub fn from_two_wave(s: &TwoWaveState, weights: [C64; 2], box_side: f64) -> Result<Self> {
        let [p1, p2] = s.branch_momenta();
        Self::new(
            vec![
                PlaneWave {
                    weight: weights[0],
                    momentum: p1,
                },
                PlaneWave {
                    weight: weights[1],
                    momentum: p2,
                },
            ],
            box_side,
            s.hbar(),
        )
    }

    pub fn psi(&self, r: Vec3) -> C64 {
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * C64::from_polar(
                        1.0,
                        (c.momentum[0] * r[0] + c.momentum[1] * r[1] + c.momentum[2] * r[2])
                            / self.hbar,
                    )
            })
            .sum()
    }

    /// Upper bound `(Σ|w|)²` of `|ψ|²`.
    pub fn density_bound(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight.norm())
            .sum::<f64>()
            .powi(2)
    }

    /// `ħ∇(arg ψ) = Σ_n p_n Re(t_n ψ̄)/|ψ|²` with `t_n = w_n e^{ip_n·r/ħ}`;
    /// `None` exactly on a node.
    pub fn guided_momentum_at(&self, r: Vec3) -> Option<Vec3> {
        let terms: Vec<C64> = self
            .components
            .iter()
            .map(|c| {
                c.weight
                    * C64::from_polar(
                        1.0,
                        (c.momentum[0] * r[0] + c.momentum[1] * r[1] + c.momentum[2] * r[2])
                            / self.hbar,
                    )
            })
            .collect();
        let psi: C64 = terms.iter().sum();
        let rho = psi.norm_sqr();
        if rho == 0.0 {
            return None;
        }
        let mut p = [0.0; 3];
        for (t, c) in terms.iter().zip(&self.components) {
            let share = (t * psi.conj()).re / rho;
            for (acc, pi) in p.iter_mut().zip(c.momentum) {
                *acc += pi * share;
            }
        }
        Some(p)
    }

    /// Rejection sample from `|ψ|²` on the box.
    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3> {
        const MAX_ATTEMPTS: usize = 1_000_000;
        let bound = self.density_bound();
        for _ in 0..MAX_ATTEMPTS {
            let r = [0, 1, 2].map(|_| rng.random::<f64>() * self.box_side);
            if rng.random::<f64>() * bound < self.psi(r).norm_sqr() {
                return Ok(r);
            }
        }
        Err(Error::ZeroField)
    }

    /// Sums `p_j + p_k` over component pairs `j < k` with weights
    /// `∝ |w_j|²|w_k|²`; a single component contributes itself.
    pub fn pair_sum_spectrum(&self) -> Vec<CandidateLine> {
        let n = self.components.len();
        if n == 1 {
            return vec![CandidateLine {
                momentum: self.components[0].momentum,
                weight: 1.0,
            }];
        }
        let mut lines = Vec::new();
        for j in 0..n {
            for k in j + 1..n {
                let (a, b) = (&self.components[j], &self.components[k]);
                let w = a.weight.norm_sqr() * b.weight.norm_sqr();
                if w > 0.0 {
                    let p = [0, 1, 2].map(|i| a.momentum[i] + b.momentum[i]);
                    lines.push(CandidateLine {
                        momentum: p,
                        weight: w,
                    });
                }
            }
        }
        let total: f64 = lines.iter().map(|l| l.weight).sum();
        for l in &mut lines {
            l.weight /= total;
        }
        lines
    }

    pub fn max_momentum(&self) -> f64 {
        self.components
            .iter()
            .map(|c| norm3(c.momentum))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub momentum: Vec3,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BornCheckConfig {
    pub n_samples: u64,
    /// momentum lattice cell; `None` uses `10⁻⁶·max|p_n|`
    pub bin_width: Option<f64>,
}

impl Default for BornCheckConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            bin_width: None,
        }
    }
}

/// Side-by-side comparison of sampled guided momenta with the pair-sum spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BornCheckRecord {
    pub n_samples: u64,
    pub guided_mean: Vec3,
    pub guided_std: Vec3,
    pub guided_histogram: VectorHistogram,
    pub histogram_mass: f64,
    pub candidate_spectrum: Vec<CandidateLine>,
    pub candidate_histogram: VectorHistogram,
    /// total-variation distance between the two histograms
    pub total_variation: f64,
}

pub fn extended_born_check(
    w: &PlaneWaveSum,
    cfg: &BornCheckConfig,
    seed: u64,
) -> Result<BornCheckRecord> {
    w.validate()?;
    if cfg.n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let bin = match cfg.bin_width {
        Some(b) => b,
        None => 1e-6 * w.max_momentum().max(f64::MIN_POSITIVE),
    };
    let momenta: Vec<Vec3> = try_par_trials(
        derive_seed(seed, "borncheck"),
        cfg.n_samples,
        |_, rng: &mut StreamRng| loop {
            let r = w.sample_position(rng)?;
            if let Some(p) = w.guided_momentum_at(r) {
                return Ok::<_, Error>(p);
            }
        },
    )?;

    let mut hist = VectorHistogram::new(bin)?;
    let unit = 1.0 / cfg.n_samples as f64;
    for &p in &momenta {
        hist.add_weighted(p, unit);
    }
    let comps: [Vec<f64>; 3] = [0, 1, 2].map(|i| momenta.iter().map(|p| p[i]).collect());
    let stats = comps.map(|c| mean_and_std(&c));

    let spectrum = w.pair_sum_spectrum();
    let mut cand = VectorHistogram::new(bin)?;
    for l in &spectrum {
        cand.add_weighted(l.momentum, l.weight);
    }
    let tv = hist.total_variation(&cand)?;
    Ok(BornCheckRecord {
        n_samples: cfg.n_samples,
        guided_mean: stats.map(|s| s.0),
        guided_std: stats.map(|s| s.1),
        histogram_mass: hist.total_mass(),
        guided_histogram: hist,
        candidate_spectrum: spectrum,
        candidate_histogram: cand,
        total_variation: tv,
    })
}

/// Field attached to a generation for guided coding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GuidingWave {
    TwoWave {
        state: TwoWaveState,
        #[serde(default = "default_fringe_periods")]
        fringe_periods: f64,
    },
    PlaneWaves(PlaneWaveSum),
}

fn default_fringe_periods() -> f64 {
    16.0
}

impl GuidingWave {
    /// Initial corpuscle position drawn from `|Φ|²`.
    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3> {
        match self {
            GuidingWave::TwoWave {
                state,
                fringe_periods,
            } => Ok([0.0, 0.0, state.sample_fringe_z(*fringe_periods, rng)]),
            GuidingWave::PlaneWaves(w) => w.sample_position(rng),
        }
    }

    /// Guided momentum of a corpuscle at `r`.
    pub fn guided_momentum_at(&self, r: Vec3, t: f64) -> Result<Vec3> {
        match self {
            GuidingWave::TwoWave { state, .. } => Ok(scale(
                state.velocity_field(r, t),
                state.params().quantum_mass,
            )),
            GuidingWave::PlaneWaves(w) => {
                w.guided_momentum_at(r).ok_or(Error::NodeSingularity(r[2]))
            }
        }
    }

    pub fn hbar(&self) -> f64 {
        match self {
            GuidingWave::TwoWave { state, .. } => state.hbar(),
            GuidingWave::PlaneWaves(w) => w.hbar,
        }
    }
}
