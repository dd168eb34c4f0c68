//! Predictively equivalent expansions built from measured laws alone.
//!
//! Amplitudes on a reference observable `A` are `√π_A`. Their phases are the
//! minimizer of the consistency residual
//!
//! ```text
//! R(α) = Σ_B Σ_k ( |Σ_j τᴮ_kj √π_A(j) e^{iα_j}|² − π_B(k) )²
//! ```
//!
//! over the partner laws, with the phase of the first nonzero amplitude
//! fixed at 0. Coefficients on every other observable then follow from the
//! transform `τ`.

use std::f64::consts::PI;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finprob::FactualLaw;
use crate::hilbert::{dirac_transform, CMatrix, TransformMatrix, C64};
use crate::rng::{derive_seed, stream_rng};

/// Coefficient magnitudes below this have their phase reported as 0.
pub const ZERO_AMPLITUDE: f64 = 1e-12;
pub const EXACT_TOLERANCE: f64 = 1e-10;
/// Restarts launched per parallel batch before checking for convergence.
pub const RESTART_BATCH: usize = 8;

/// Per-observable amplitudes and phases; the reference observable's first
/// nonzero phase is the gauge and equals 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSet {
    pub reference_observable: String,
    pub amplitudes: IndexMap<String, Vec<f64>>,
    pub phases: IndexMap<String, Vec<f64>>,
}

impl ExpansionSet {
    /// Reference-only expansion with the given phases.
    pub fn from_reference(
        name: impl Into<String>,
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        if amplitudes.len() != phases.len() {
            return Err(Error::LengthMismatch(amplitudes.len(), phases.len()));
        }
        let name = name.into();
        let mut set = Self {
            reference_observable: name.clone(),
            amplitudes: IndexMap::new(),
            phases: IndexMap::new(),
        };
        set.insert(name, amplitudes, phases);
        Ok(set)
    }

    /// Splits complex coefficients into amplitude and phase entries.
    pub fn from_coefficients(name: impl Into<String>, coeffs: &[C64]) -> Self {
        let (a, p) = split(coeffs);
        let name = name.into();
        let mut set = Self {
            reference_observable: name.clone(),
            amplitudes: IndexMap::new(),
            phases: IndexMap::new(),
        };
        set.insert(name, a, p);
        set
    }

    fn insert(&mut self, name: String, amplitudes: Vec<f64>, phases: Vec<f64>) {
        self.amplitudes.insert(name.clone(), amplitudes);
        self.phases.insert(name, phases);
    }

    pub fn coefficients(&self, observable: &str) -> Option<Vec<C64>> {
        let a = self.amplitudes.get(observable)?;
        let p = self.phases.get(observable)?;
        Some(
            a.iter()
                .zip(p)
                .map(|(&r, &t)| C64::from_polar(r, t))
                .collect(),
        )
    }

    pub fn reference_coefficients(&self) -> Vec<C64> {
        self.coefficients(&self.reference_observable)
            .expect("reference entry is always present")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitudes.contains_key(&self.reference_observable) {
            return Err(Error::invalid("expansion lacks its reference observable"));
        }
        for (name, a) in &self.amplitudes {
            let p = self
                .phases
                .get(name)
                .ok_or_else(|| Error::invalid(format!("no phases for `{name}`")))?;
            if p.len() != a.len() {
                return Err(Error::LengthMismatch(a.len(), p.len()));
            }
            let s: f64 = a.iter().map(|x| x * x).sum();
            if (s - 1.0).abs() > 1e-8 || a.iter().any(|&x| x < 0.0) {
                return Err(Error::NotNormalized(s.sqrt()));
            }
        }
        Ok(())
    }
}

fn split(coeffs: &[C64]) -> (Vec<f64>, Vec<f64>) {
    coeffs
        .iter()
        .map(|z| {
            let r = z.norm();
            (r, if r < ZERO_AMPLITUDE { 0.0 } else { z.arg() })
        })
        .unzip()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ambiguity {
    Unique,
    ConjugatePair,
    Underdetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub residual: f64,
    pub tolerance: f64,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub converged: bool,
    pub ambiguity_flag: Ambiguity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub restarts: usize,
    /// `None`: 1e−10 for exact laws, `10·σ²` for sampled ones
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            tolerance: None,
            max_iterations: 500,
            seed: 0,
        }
    }
}

/// `|c_j| = √π_j` for a probability vector.
pub fn amplitudes_from_probabilities(pi: &[f64]) -> Result<Vec<f64>> {
    if pi.is_empty() {
        return Err(Error::EmptyLaw);
    }
    if pi.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::invalid("probabilities must be non-negative"));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(total));
    }
    Ok(pi.iter().map(|p| p.sqrt()).collect())
}

pub fn amplitudes_from_law(law: &FactualLaw) -> Result<Vec<f64>> {
    amplitudes_from_probabilities(&law.frequencies()?)
}

/// `τ` taking coefficients on `from` to coefficients on `to`, using either a
/// direct transform or the adjoint of the reverse one.
pub fn link(taus: &[TransformMatrix], from: &str, to: &str) -> Result<TransformMatrix> {
    if let Some(t) = taus.iter().find(|t| t.source() == from && t.target() == to) {
        return Ok(t.clone());
    }
    if let Some(t) = taus.iter().find(|t| t.source() == to && t.target() == from) {
        return Ok(t.inverse());
    }
    Err(Error::UnlinkedObservable {
        from: from.to_string(),
        to: to.to_string(),
    })
}

/// The least-squares phase problem for one reference law.
struct PhaseProblem<'a> {
    amplitudes: Vec<f64>,
    partners: Vec<(&'a [f64], &'a CMatrix)>,
    /// indices of free phases (nonzero amplitude, not the gauge)
    free: Vec<usize>,
    n_rows: usize,
}

impl<'a> PhaseProblem<'a> {
    fn new(amplitudes: Vec<f64>, partners: Vec<(&'a [f64], &'a CMatrix)>) -> Result<Self> {
        let d = amplitudes.len();
        for (law, tau) in &partners {
            if tau.nrows() != d || law.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: law.len().max(tau.nrows()),
                });
            }
        }
        let mut nonzero = (0..d).filter(|&j| amplitudes[j] > 0.0);
        let _gauge = nonzero.next();
        let free = nonzero.collect();
        let n_rows = partners.len() * d;
        Ok(Self {
            amplitudes,
            partners,
            free,
            n_rows,
        })
    }

    fn full_phases(&self, x: &[f64]) -> Vec<f64> {
        let mut alpha = vec![0.0; self.amplitudes.len()];
        for (&j, &v) in self.free.iter().zip(x) {
            alpha[j] = v;
        }
        alpha
    }

    fn coefficients(&self, x: &[f64]) -> Vec<C64> {
        self.amplitudes
            .iter()
            .zip(self.full_phases(x))
            .map(|(&a, t)| C64::from_polar(a, t))
            .collect()
    }

    /// Residual vector `|d_k|² − π_B(k)` stacked over partners.
    fn residuals(&self, x: &[f64]) -> DVector<f64> {
        let c = self.coefficients(x);
        let mut r = DVector::zeros(self.n_rows);
        let d = c.len();
        for (b, (law, tau)) in self.partners.iter().enumerate() {
            for k in 0..d {
                let dk: C64 = (0..d).map(|j| tau[(k, j)] * c[j]).sum();
                r[b * d + k] = dk.norm_sqr() - law[k];
            }
        }
        r
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.residuals(x).norm_squared()
    }

    /// Jacobian of the residual vector, `∂|d_k|²/∂α_j = −2 Im(d̄_k τ_kj c_j)`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let c = self.coefficients(x);
        let d = c.len();
        let mut jac = DMatrix::zeros(self.n_rows, self.free.len());
        for (b, (_, tau)) in self.partners.iter().enumerate() {
            for k in 0..d {
                let dk: C64 = (0..d).map(|j| tau[(k, j)] * c[j]).sum();
                for (col, &j) in self.free.iter().enumerate() {
                    jac[(b * d + k, col)] = -2.0 * (dk.conj() * tau[(k, j)] * c[j]).im;
                }
            }
        }
        jac
    }

    /// Backtracking gradient descent followed by damped Gauss–Newton; both
    /// accept a step only if it lowers `R`.
    fn descend(&self, mut x: Vec<f64>, max_iterations: usize, target: f64) -> (Vec<f64>, f64) {
        let mut f = self.value(&x);
        if self.free.is_empty() {
            return (x, f);
        }
        let mut step = 1.0;
        for _ in 0..max_iterations / 4 {
            if f <= target {
                return (x, f);
            }
            let r = self.residuals(&x);
            let g = self.jacobian(&x).transpose() * &r * 2.0;
            let g2 = g.norm_squared();
            if g2 < 1e-30 {
                break;
            }
            let mut accepted = false;
            while step > 1e-12 {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(g.iter())
                    .map(|(xi, gi)| xi - step * gi)
                    .collect();
                let ft = self.value(&trial);
                if ft <= f - 1e-4 * step * g2 {
                    x = trial;
                    f = ft;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        let mut mu = 1e-3;
        for _ in 0..max_iterations {
            if f <= target {
                break;
            }
            let r = self.residuals(&x);
            let j = self.jacobian(&x);
            let jt = j.transpose();
            let jtj = &jt * &j;
            let rhs = -(&jt * &r);
            let mut improved = false;
            while mu < 1e12 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += mu * (1.0 + jtj[(i, i)]);
                }
                let Some(delta) = a.cholesky().map(|ch| ch.solve(&rhs)) else {
                    mu *= 4.0;
                    continue;
                };
                let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(xi, di)| xi + di).collect();
                let ft = self.value(&trial);
                if ft < f {
                    let rel_gain = (f - ft) / f.max(f64::MIN_POSITIVE);
                    x = trial;
                    f = ft;
                    mu = (mu / 3.0).max(1e-15);
                    improved = rel_gain > 1e-12;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (x, f)
    }

    fn rank_deficient(&self, x: &[f64]) -> bool {
        if self.free.is_empty() {
            return false;
        }
        let j = self.jacobian(x);
        let sv = j.singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let rank = sv.iter().filter(|&&s| s > 1e-8 * max.max(1e-300)).count();
        max == 0.0 || rank < self.free.len()
    }
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Phase retrieval on explicit probability vectors. `partners` pairs each
/// partner law `π_B` with the transform from the reference to `B`.
pub fn retrieve_phases_from_probabilities(
    pi_a: &[f64],
    partners: &[(&[f64], &TransformMatrix)],
    cfg: &RetrievalConfig,
) -> Result<(Vec<f64>, RetrievalReport)> {
    solve(
        pi_a,
        partners,
        cfg,
        cfg.tolerance.unwrap_or(EXACT_TOLERANCE),
    )
}

/// Upper bound of the sampling variance summed over partner laws and the
/// reference law: each of `K` outcomes has variance at most `1/(4n)`.
pub fn sampled_variance(law_a: &FactualLaw, partners: &[&FactualLaw]) -> f64 {
    let term = |l: &FactualLaw| l.spectrum().len() as f64 / (4.0 * l.n_total().max(1) as f64);
    term(law_a) + partners.iter().map(|l| term(l)).sum::<f64>()
}

/// Phase retrieval on measured laws; `taus[B]` maps the reference to `B`.
pub fn retrieve_phases(
    law_a: &FactualLaw,
    laws_others: &IndexMap<String, FactualLaw>,
    taus: &IndexMap<String, TransformMatrix>,
    cfg: &RetrievalConfig,
) -> Result<(Vec<f64>, RetrievalReport)> {
    let pi_a = law_a.frequencies()?;
    let mut freqs = Vec::with_capacity(laws_others.len());
    let mut tau_list = Vec::with_capacity(laws_others.len());
    for (name, law) in laws_others {
        let tau = taus.get(name).ok_or_else(|| Error::UnlinkedObservable {
            from: law_a
                .spectrum()
                .first()
                .map(|l| l.observable.clone())
                .unwrap_or_default(),
            to: name.clone(),
        })?;
        freqs.push(law.frequencies()?);
        tau_list.push(tau);
    }
    let partners: Vec<(&[f64], &TransformMatrix)> =
        freqs.iter().map(Vec::as_slice).zip(tau_list).collect();
    let sampled: Vec<&FactualLaw> = laws_others.values().collect();
    let tol = cfg
        .tolerance
        .unwrap_or_else(|| 10.0 * sampled_variance(law_a, &sampled) + EXACT_TOLERANCE);
    solve(&pi_a, &partners, cfg, tol)
}

fn solve(
    pi_a: &[f64],
    partners: &[(&[f64], &TransformMatrix)],
    cfg: &RetrievalConfig,
    tolerance: f64,
) -> Result<(Vec<f64>, RetrievalReport)> {
    if partners.is_empty() {
        return Err(Error::invalid(
            "phase retrieval needs at least one partner law",
        ));
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let amplitudes = amplitudes_from_probabilities(pi_a)?;
    let problem = PhaseProblem::new(
        amplitudes,
        partners.iter().map(|(l, t)| (*l, t.entries())).collect(),
    )?;
    let m = problem.free.len();
    let stream_seed = derive_seed(cfg.seed, "phase-retrieval");
    // R is a sum of squared law deviations; at 1e-24 every predicted
    // probability is within 1e-12 of its law
    let target = tolerance * 1e-14;

    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut used = 0;
    while used < cfg.restarts {
        let batch: Vec<usize> = (used..(used + RESTART_BATCH).min(cfg.restarts)).collect();
        let results: Vec<(usize, Vec<f64>, f64)> = batch
            .par_iter()
            .map(|&i| {
                let x0 = if i == 0 {
                    vec![0.0; m]
                } else {
                    let mut rng = stream_rng(stream_seed, i as u64);
                    (0..m).map(|_| rng.random_range(-PI..PI)).collect()
                };
                let (x, f) = problem.descend(x0, cfg.max_iterations, target);
                (i, x, f)
            })
            .collect();
        used += batch.len();
        for (i, x, f) in results {
            if best.as_ref().is_none_or(|(bf, _, _)| f < *bf) {
                best = Some((f, i, x));
            }
        }
        if best.as_ref().is_some_and(|(f, _, _)| *f <= target) {
            break;
        }
    }
    let (residual, best_restart, x) = best.expect("at least one restart ran");
    if !(residual <= tolerance) {
        return Err(Error::InconsistentLaws {
            residual,
            tolerance,
        });
    }
    let x: Vec<f64> = x.into_iter().map(wrap).collect();
    let ambiguity_flag = if problem.rank_deficient(&x) {
        Ambiguity::Underdetermined
    } else if partners.len() == 1 {
        let conj: Vec<f64> = x.iter().map(|v| wrap(-v)).collect();
        let distinct = x.iter().zip(&conj).any(|(a, b)| wrap(a - b).abs() > 1e-6);
        let rc = problem.value(&conj);
        if distinct && (rc - residual).abs() <= tolerance.max(1e-12 * residual.abs()) {
            Ambiguity::ConjugatePair
        } else {
            Ambiguity::Unique
        }
    } else {
        Ambiguity::Unique
    };
    let phases = problem.full_phases(&x);
    Ok((
        phases,
        RetrievalReport {
            residual,
            tolerance,
            restarts_used: used,
            best_restart,
            converged: true,
            ambiguity_flag,
        },
    ))
}

/// Coefficients on every observable of `law_map` from the reference phases.
pub fn assemble_equivalent(
    law_map: &IndexMap<String, FactualLaw>,
    reference: &str,
    phases_a: &[f64],
    taus: &[TransformMatrix],
) -> Result<ExpansionSet> {
    let law_a = law_map
        .get(reference)
        .ok_or_else(|| Error::invalid(format!("no law for reference observable `{reference}`")))?;
    let amps = amplitudes_from_law(law_a)?;
    assemble_from_amplitudes(
        law_map.keys().map(String::as_str),
        reference,
        &amps,
        phases_a,
        taus,
    )
}

/// As [`assemble_equivalent`], from explicit reference amplitudes.
pub fn assemble_from_amplitudes<'a>(
    observables: impl IntoIterator<Item = &'a str>,
    reference: &str,
    amplitudes_a: &[f64],
    phases_a: &[f64],
    taus: &[TransformMatrix],
) -> Result<ExpansionSet> {
    if amplitudes_a.len() != phases_a.len() {
        return Err(Error::LengthMismatch(amplitudes_a.len(), phases_a.len()));
    }
    let phases: Vec<f64> = amplitudes_a
        .iter()
        .zip(phases_a)
        .map(|(&a, &t)| if a < ZERO_AMPLITUDE { 0.0 } else { t })
        .collect();
    let mut set = ExpansionSet::from_reference(reference, amplitudes_a.to_vec(), phases)?;
    let c = set.reference_coefficients();
    for name in observables {
        if name == reference {
            continue;
        }
        let tau = link(taus, reference, name)?;
        let (a, p) = split(&dirac_transform(&c, &tau)?);
        set.insert(name.to_string(), a, p);
    }
    Ok(set)
}

/// Law predicted for the target of `tau_to_c`.
pub fn predict_heldout(expansion: &ExpansionSet, tau_to_c: &TransformMatrix) -> Result<Vec<f64>> {
    if tau_to_c.source() != expansion.reference_observable {
        return Err(Error::UnlinkedObservable {
            from: expansion.reference_observable.clone(),
            to: tau_to_c.target().to_string(),
        });
    }
    Ok(
        dirac_transform(&expansion.reference_coefficients(), tau_to_c)?
            .iter()
            .map(|z| z.norm_sqr())
            .collect(),
    )
}

/// Retrieval plus assembly over a whole law map: the reference's partners
/// are all other observables in the map.
pub fn reconstruct(
    law_map: &IndexMap<String, FactualLaw>,
    reference: &str,
    taus: &[TransformMatrix],
    cfg: &RetrievalConfig,
) -> Result<(ExpansionSet, RetrievalReport)> {
    let law_a = law_map
        .get(reference)
        .ok_or_else(|| Error::invalid(format!("no law for reference observable `{reference}`")))?;
    let mut others = IndexMap::new();
    let mut links = IndexMap::new();
    for (name, law) in law_map {
        if name != reference {
            links.insert(name.clone(), link(taus, reference, name)?);
            others.insert(name.clone(), law.clone());
        }
    }
    if others.is_empty() {
        let amps = amplitudes_from_law(law_a)?;
        let set = ExpansionSet::from_reference(reference, amps.clone(), vec![0.0; amps.len()])?;
        let free = amps.iter().filter(|&&a| a > 0.0).count().saturating_sub(1);
        let report = RetrievalReport {
            residual: 0.0,
            tolerance: cfg.tolerance.unwrap_or(EXACT_TOLERANCE),
            restarts_used: 0,
            best_restart: 0,
            converged: true,
            ambiguity_flag: if free > 0 {
                Ambiguity::Underdetermined
            } else {
                Ambiguity::Unique
            },
        };
        return Ok((set, report));
    }
    let (phases, report) = retrieve_phases(law_a, &others, &links, cfg)?;
    Ok((
        assemble_equivalent(law_map, reference, &phases, taus)?,
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{born_law, c, coefficients, random, ObservableSpec, OracleState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn amplitude_examples() {
        assert_eq!(
            amplitudes_from_probabilities(&[1.0, 0.0, 0.0]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            amplitudes_from_probabilities(&[0.25, 0.75]).unwrap(),
            vec![0.5, 0.75f64.sqrt()]
        );
        assert_eq!(amplitudes_from_probabilities(&[]), Err(Error::EmptyLaw));
    }

    #[test]
    fn circular_state_recovered_from_two_partner_bases() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = OracleState::new(vec![c(h, 0.0), c(0.0, h)]).unwrap();
        let a = ObservableSpec::standard("A", 2).unwrap();
        let b = ObservableSpec::fourier("B", 2).unwrap();
        let cc = ObservableSpec::chirp("C", 2).unwrap();
        let (tb, tc) = (
            TransformMatrix::between(&a, &b).unwrap(),
            TransformMatrix::between(&a, &cc).unwrap(),
        );
        let (pa, pb, pc) = (
            born_law(&psi, &a).unwrap(),
            born_law(&psi, &b).unwrap(),
            born_law(&psi, &cc).unwrap(),
        );
        let (phases, report) = retrieve_phases_from_probabilities(
            &pa,
            &[(&pb, &tb), (&pc, &tc)],
            &RetrievalConfig::default(),
        )
        .unwrap();
        assert!(report.residual < 1e-10 && report.converged);
        assert_eq!(report.ambiguity_flag, Ambiguity::Unique);
        let amps = amplitudes_from_probabilities(&pa).unwrap();
        let rec: Vec<C64> = amps
            .iter()
            .zip(&phases)
            .map(|(&r, &t)| C64::from_polar(r, t))
            .collect();
        let rec = OracleState::new(rec).unwrap();
        assert!(rec.fidelity(&psi).unwrap() >= 1.0 - 1e-6);
        assert_eq!(phases[0], 0.0);
    }

    #[test]
    fn single_real_partner_reports_conjugate_pair() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = OracleState::new(vec![c(h, 0.0), c(0.0, h)]).unwrap();
        let a = ObservableSpec::standard("A", 2).unwrap();
        let cc = ObservableSpec::chirp("C", 2).unwrap();
        let tc = TransformMatrix::between(&a, &cc).unwrap();
        let (pa, pc) = (born_law(&psi, &a).unwrap(), born_law(&psi, &cc).unwrap());
        // the circular basis sees (1, ±i) with different laws, but (1, i) and
        // (1, −i) conjugate into each other only through a real transform
        let hb = ObservableSpec::fourier("B", 2).unwrap();
        let tb = TransformMatrix::between(&a, &hb).unwrap();
        let pb = born_law(&psi, &hb).unwrap();
        let (_, r) =
            retrieve_phases_from_probabilities(&pa, &[(&pb, &tb)], &RetrievalConfig::default())
                .unwrap();
        assert_eq!(r.ambiguity_flag, Ambiguity::ConjugatePair);
        let (_, r) =
            retrieve_phases_from_probabilities(&pa, &[(&pc, &tc)], &RetrievalConfig::default())
                .unwrap();
        assert_eq!(r.ambiguity_flag, Ambiguity::Unique);
    }

    #[test]
    fn real_positive_state_needs_no_phases() {
        let psi = OracleState::normalized(vec![c(1.0, 0.0), c(2.0, 0.0), c(0.5, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ObservableSpec::standard("A", 3).unwrap();
        let b = random::observable("B", 3, &mut rng);
        let tb = TransformMatrix::between(&a, &b).unwrap();
        let (pa, pb) = (born_law(&psi, &a).unwrap(), born_law(&psi, &b).unwrap());
        let p = PhaseProblem::new(
            amplitudes_from_probabilities(&pa).unwrap(),
            vec![(&pb, tb.entries())],
        )
        .unwrap();
        assert!(p.value(&vec![0.0; p.free.len()]) < 1e-28);
        let (_, report) =
            retrieve_phases_from_probabilities(&pa, &[(&pb, &tb)], &RetrievalConfig::default())
                .unwrap();
        assert!(report.residual < 1e-20);
    }

    #[test]
    fn non_quantum_pair_is_inconsistent() {
        let id = TransformMatrix::identity("A", 2);
        let err = retrieve_phases_from_probabilities(
            &[1.0, 0.0],
            &[(&[0.5, 0.5], &id)],
            &RetrievalConfig::default(),
        );
        match err {
            Err(Error::InconsistentLaws { residual, .. }) => {
                assert!((residual - 0.5).abs() < 1e-15)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gauge_invariance_of_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random::state(4, &mut rng);
        let a = ObservableSpec::standard("A", 4).unwrap();
        let b = random::observable("B", 4, &mut rng);
        let tb = TransformMatrix::between(&a, &b).unwrap();
        let pb = born_law(&psi, &b).unwrap();
        let amps = amplitudes_from_probabilities(&born_law(&psi, &a).unwrap()).unwrap();
        let residual = |alpha: &[f64]| {
            let c: Vec<C64> = amps
                .iter()
                .zip(alpha)
                .map(|(&r, &t)| C64::from_polar(r, t))
                .collect();
            let d = dirac_transform(&c, &tb).unwrap();
            d.iter()
                .zip(&pb)
                .map(|(z, p)| (z.norm_sqr() - p).powi(2))
                .sum::<f64>()
        };
        for _ in 0..20 {
            let alpha: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
            let shift = rng.random_range(-PI..PI);
            let shifted: Vec<f64> = alpha.iter().map(|x| x + shift).collect();
            assert!((residual(&alpha) - residual(&shifted)).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random::state(4, &mut rng);
        let a = ObservableSpec::standard("A", 4).unwrap();
        let b = random::observable("B", 4, &mut rng);
        let tb = TransformMatrix::between(&a, &b).unwrap();
        let pb = born_law(&psi, &b).unwrap();
        let p = PhaseProblem::new(
            amplitudes_from_probabilities(&born_law(&psi, &a).unwrap()).unwrap(),
            vec![(&pb, tb.entries())],
        )
        .unwrap();
        let x: Vec<f64> = (0..p.free.len())
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let j = p.jacobian(&x);
        let h = 1e-6;
        for col in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[col] += h;
            xm[col] -= h;
            let fd = (p.residuals(&xp) - p.residuals(&xm)) / (2.0 * h);
            for row in 0..fd.len() {
                assert!((fd[row] - j[(row, col)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn descent_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = random::state(3, &mut rng);
        let a = ObservableSpec::standard("A", 3).unwrap();
        let b = random::observable("B", 3, &mut rng);
        let tb = TransformMatrix::between(&a, &b).unwrap();
        let pb = born_law(&psi, &b).unwrap();
        let p = PhaseProblem::new(
            amplitudes_from_probabilities(&born_law(&psi, &a).unwrap()).unwrap(),
            vec![(&pb, tb.entries())],
        )
        .unwrap();
        let mut x: Vec<f64> = (0..p.free.len())
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let mut f = p.value(&x);
        for _ in 0..30 {
            let (nx, nf) = p.descend(x.clone(), 4, 0.0);
            assert!(nf <= f);
            x = nx;
            f = nf;
        }
    }

    #[test]
    fn assembled_amplitudes_match_oracle_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random::state(3, &mut rng);
        let a = ObservableSpec::standard("A", 3).unwrap();
        let b = random::observable("B", 3, &mut rng);
        let tb = TransformMatrix::between(&a, &b).unwrap();
        let ca = coefficients(&psi, &a).unwrap();
        let g = ca[0].arg();
        let amps: Vec<f64> = ca.iter().map(|z| z.norm()).collect();
        let phases: Vec<f64> = ca.iter().map(|z| wrap(z.arg() - g)).collect();
        let set = assemble_from_amplitudes(["A", "B"], "A", &amps, &phases, &[tb]).unwrap();
        set.validate().unwrap();
        for (x, p) in set.amplitudes["B"].iter().zip(born_law(&psi, &b).unwrap()) {
            assert!((x - p.sqrt()).abs() < 1e-10);
        }
        let single = assemble_from_amplitudes(["A"], "A", &amps, &phases, &[]).unwrap();
        assert_eq!(single.amplitudes.len(), 1);
        let back = predict_heldout(&single, &TransformMatrix::identity("A", 3)).unwrap();
        for (x, p) in back.iter().zip(born_law(&psi, &a).unwrap()) {
            assert!((x - p).abs() < 1e-12);
        }
    }

    #[test]
    fn unlinked_observable_is_reported() {
        let set = ExpansionSet::from_reference("A", vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let t = TransformMatrix::identity("X", 2);
        assert!(matches!(
            predict_heldout(&set, &t),
            Err(Error::UnlinkedObservable { .. })
        ));
        assert!(matches!(
            link(&[t], "A", "B"),
            Err(Error::UnlinkedObservable { .. })
        ));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert!((wrap(-PI) - PI).abs() < 1e-15);
        assert!((wrap(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
