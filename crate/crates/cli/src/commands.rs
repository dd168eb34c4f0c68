//! The five pipelines. Each reads its section of a scenario and writes its
//! artifacts into an [`OutputDir`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use factum_core::dbb::{extended_born_check, simulate_exp};
use factum_core::genesis::run_successions;
use factum_core::hilbert::{born_law, BornSampler};
use factum_core::histogram::{Histogram1D, VectorHistogram};
use factum_core::probtree::{
    build_tree, meta_correlation, meta_correlation_laws, MetaCorrelationRecord,
};
use factum_core::reconstruct::{
    amplitudes_from_probabilities, assemble_from_amplitudes, predict_heldout, reconstruct,
    retrieve_phases, retrieve_phases_from_probabilities,
};
use factum_core::rng::{derive_seed, par_trials};
use factum_core::{
    ExpansionSet, FactualLaw, OracleState, RetrievalReport, StabilityVerdict, TransformMatrix,
};
use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{csv_writer, sha256_hex, OutputDir, RunManifest};
use crate::scenario::{LawSource, Scenario, StabilitySource};

type Probabilities = IndexMap<String, Vec<f64>>;
type Laws = IndexMap<String, FactualLaw>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Stability,
    Tree,
    Reconstruct,
    Exp,
    Borncheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Stability => "stability",
            Command::Tree => "tree",
            Command::Reconstruct => "reconstruct",
            Command::Exp => "exp",
            Command::Borncheck => "borncheck",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Worker threads; `None` lets the pool pick.
    pub workers: Option<usize>,
}

/// Loads the scenario, runs `command` on a dedicated worker pool and writes
/// the manifest last.
pub fn run(command: Command, scenario_path: &Path, opts: &RunOptions) -> CliResult<RunManifest> {
    let start = Instant::now();
    let bytes = std::fs::read(scenario_path).map_err(|e| CliError::io(scenario_path, e))?;
    let scenario = Scenario::load(scenario_path)?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let out_dir = match (&opts.out, &scenario.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => scenario.resolve_path(o),
        (None, None) => {
            return Err(CliError::Schema(
                "no output directory: pass --out or set output_dir".into(),
            ))
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.workers {
        if n == 0 {
            return Err(CliError::Schema("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Schema(format!("worker pool: {e}")))?;
    let workers = pool.current_num_threads();

    let mut out = OutputDir::create(&out_dir)?;
    pool.install(|| match command {
        Command::Stability => cmd_stability(&scenario, seed, &mut out),
        Command::Tree => cmd_tree(&scenario, seed, &mut out),
        Command::Reconstruct => cmd_reconstruct(&scenario, seed, &mut out),
        Command::Exp => cmd_exp(&scenario, seed, &mut out),
        Command::Borncheck => cmd_borncheck(&scenario, seed, &mut out),
    })?;
    out.finish(
        command.name(),
        seed,
        sha256_hex(&bytes),
        workers,
        start.elapsed().as_secs_f64(),
    )
}

fn read_law(path: &Path) -> CliResult<FactualLaw> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let law = if path.extension().is_some_and(|e| e == "json") {
        FactualLaw::from_json(&text)?
    } else {
        FactualLaw::read_csv(text.as_bytes())?
    };
    Ok(law)
}

fn write_law(out: &mut OutputDir, rel: &str, law: &FactualLaw) -> CliResult<()> {
    out.write_with(rel, |buf| Ok(law.write_csv(buf)?))
}

/// Observable names become file names, so they are kept to a safe alphabet.
fn file_stem(name: &str) -> CliResult<&str> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        || name.starts_with('.')
    {
        return Err(CliError::Schema(format!(
            "observable name `{name}` is not usable as a file name"
        )));
    }
    Ok(name)
}

pub fn cmd_stability(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let section = s
        .stability
        .as_ref()
        .ok_or(CliError::MissingSection("stability"))?;
    let params = section.params.unwrap_or_default();
    let law = match &section.source {
        StabilitySource::LawFile { path } => {
            if section.params.is_some() {
                return Err(CliError::Schema(
                    "a law file carries its own params; drop `stability.params`".into(),
                ));
            }
            read_law(&s.resolve_path(path))?
        }
        StabilitySource::Successions {
            generation,
            observable,
            n,
        } => {
            let g = s.prepared(generation)?;
            run_successions(
                &g,
                &s.observable(observable)?,
                *n,
                params,
                derive_seed(seed, "stability"),
            )?
        }
        StabilitySource::Segments {
            observable,
            segments,
        } => {
            let dim = segments
                .first()
                .map(|g| g.probabilities.len())
                .ok_or_else(|| CliError::Schema("no segments".into()))?;
            let mut law = FactualLaw::for_observable(observable, dim, params)?;
            for (i, seg) in segments.iter().enumerate() {
                if seg.probabilities.len() != dim {
                    return Err(CliError::Schema(format!(
                        "segment {i} has {} outcomes, expected {dim}",
                        seg.probabilities.len()
                    )));
                }
                let sampler = BornSampler::new(&seg.probabilities)?;
                for k in par_trials(
                    derive_seed(seed, &format!("segment/{i}")),
                    seg.trials,
                    |_, rng| sampler.sample(rng),
                ) {
                    law.accumulate_index(k)?;
                }
            }
            law
        }
        StabilitySource::BlockCounts {
            observable,
            blocks,
            repeat,
        } => {
            let dim = blocks
                .first()
                .map(Vec::len)
                .ok_or_else(|| CliError::Schema("no blocks".into()))?;
            let mut law = FactualLaw::for_observable(observable, dim, params)?;
            for (i, b) in blocks.iter().enumerate() {
                if b.len() != dim || b.iter().sum::<u64>() != params.n0 {
                    return Err(CliError::Schema(format!(
                        "block {i} must have {dim} counts summing to N0 = {}",
                        params.n0
                    )));
                }
            }
            for _ in 0..*repeat {
                for b in blocks {
                    for (k, &c) in b.iter().enumerate() {
                        for _ in 0..c {
                            law.accumulate_index(k)?;
                        }
                    }
                }
            }
            law
        }
    };
    let verdict = law.check_convergence()?;
    write_law(out, "law.csv", &law)?;
    out.write_json("law.json", &law)?;
    out.write_json("verdict.json", &verdict)
}

#[derive(Serialize)]
struct TreeDocument<'a> {
    trunk: &'a str,
    trunk_only: bool,
    branches: Vec<BranchDocument>,
    mpc: &'a MetaCorrelationRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    expansion: Option<&'a ExpansionSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retrieval: Option<&'a RetrievalReport>,
}

#[derive(Serialize)]
struct BranchDocument {
    members: Vec<String>,
    /// Observable → law file, relative to the output directory.
    laws: IndexMap<String, String>,
    verdicts: IndexMap<String, VerdictEntry>,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum VerdictEntry {
    Verdict(StabilityVerdict),
    Unavailable(String),
}

pub fn cmd_tree(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let plan = s
        .measurement
        .as_ref()
        .ok_or(CliError::MissingSection("measurement"))?;
    let section = s.tree.clone().unwrap_or_default();
    let g = s.prepared(&plan.generation)?;
    let observables = plan
        .observables
        .iter()
        .map(|o| s.observable(o))
        .collect::<CliResult<Vec<_>>>()?;
    for o in &plan.observables {
        file_stem(o)?;
    }
    let mut tree = build_tree(
        &g,
        &observables,
        plan.n,
        plan.params,
        derive_seed(seed, "tree"),
    )?;

    let mut fitted = None;
    if let Some(reference) = &section.mpc_reference {
        let taus = plan
            .observables
            .iter()
            .filter(|o| *o != reference)
            .map(|o| s.transform(reference, o))
            .collect::<CliResult<Vec<_>>>()?;
        let cfg = section.retrieval.config(derive_seed(seed, "retrieval"));
        let (set, report) = reconstruct(&tree.law_map(), reference, &taus, &cfg)?;
        meta_correlation(&mut tree, &set, &taus)?;
        fitted = Some((set, report));
    }

    let mut branches = Vec::new();
    for b in &tree.branches {
        let mut laws = IndexMap::new();
        let mut verdicts = IndexMap::new();
        for (name, law) in &b.laws {
            let rel = format!("laws/{}.csv", file_stem(name)?);
            write_law(out, &rel, law)?;
            laws.insert(name.clone(), rel);
            let v = match law.check_convergence() {
                Ok(v) => VerdictEntry::Verdict(v),
                Err(e) => VerdictEntry::Unavailable(e.to_string()),
            };
            verdicts.insert(name.clone(), v);
        }
        branches.push(BranchDocument {
            members: b.group.members.clone(),
            laws,
            verdicts,
        });
    }
    let doc = TreeDocument {
        trunk: &tree.trunk,
        trunk_only: tree.trunk_only,
        branches,
        mpc: &tree.mpc,
        expansion: fitted.as_ref().map(|f| &f.0),
        retrieval: fitted.as_ref().map(|f| &f.1),
    };
    out.write_json("tree.json", &doc)
}

#[derive(Serialize)]
struct HeldoutPrediction {
    observable: String,
    predicted: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_deviation: Option<f64>,
}

#[derive(Serialize)]
struct ReconstructReport<'a> {
    retrieval: &'a RetrievalReport,
    mpc: MetaCorrelationRecord,
    max_mpc_residual: f64,
    heldout: Vec<HeldoutPrediction>,
}

pub fn cmd_reconstruct(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let r = s
        .reconstruct
        .as_ref()
        .ok_or(CliError::MissingSection("reconstruct"))?;
    let names: Vec<&str> = std::iter::once(r.reference.as_str())
        .chain(r.partners.iter().map(String::as_str))
        .collect();
    let taus_partners = r
        .partners
        .iter()
        .map(|p| s.transform(&r.reference, p))
        .collect::<CliResult<Vec<_>>>()?;
    let cfg = r.retrieval.config(derive_seed(seed, "retrieval"));

    // exact probabilities, or measured laws whose sampling noise sets the tolerance
    let mut oracle: Option<OracleState> = None;
    let (probabilities, measured): (Probabilities, Option<Laws>) = match &r.source {
        LawSource::Exact { generation } => {
            let g = s.prepared(generation)?;
            let mut m = IndexMap::new();
            for n in &names {
                m.insert(n.to_string(), born_law(g.state(), &s.observable(n)?)?);
            }
            oracle = Some(g.state().clone());
            (m, None)
        }
        LawSource::Sampled {
            generation,
            n,
            params,
        } => {
            let g = s.prepared(generation)?;
            let mut laws = IndexMap::new();
            for name in &names {
                let law = run_successions(
                    &g,
                    &s.observable(name)?,
                    *n,
                    *params,
                    derive_seed(seed, &format!("law/{name}")),
                )?;
                laws.insert(name.to_string(), law);
            }
            oracle = Some(g.state().clone());
            (frequencies(&laws)?, Some(laws))
        }
        LawSource::Probabilities { laws } => (
            names
                .iter()
                .map(|n| (n.to_string(), laws[*n].clone()))
                .collect(),
            None,
        ),
        LawSource::Files { laws } => {
            let mut m = IndexMap::new();
            for n in &names {
                m.insert(n.to_string(), read_law(&s.resolve_path(&laws[*n]))?);
            }
            (frequencies(&m)?, Some(m))
        }
    };

    let pi_a = &probabilities[&r.reference];
    let (phases, report) = match &measured {
        Some(laws) => {
            let others: IndexMap<String, FactualLaw> = r
                .partners
                .iter()
                .map(|p| (p.clone(), laws[p].clone()))
                .collect();
            let taus: IndexMap<String, TransformMatrix> = r
                .partners
                .iter()
                .cloned()
                .zip(taus_partners.iter().cloned())
                .collect();
            retrieve_phases(&laws[&r.reference], &others, &taus, &cfg)?
        }
        None => {
            let partners: Vec<(&[f64], &TransformMatrix)> = r
                .partners
                .iter()
                .map(|p| probabilities[p].as_slice())
                .zip(&taus_partners)
                .collect();
            retrieve_phases_from_probabilities(pi_a, &partners, &cfg)?
        }
    };
    let amps = amplitudes_from_probabilities(pi_a)?;
    let set = assemble_from_amplitudes(
        names.iter().copied(),
        &r.reference,
        &amps,
        &phases,
        &taus_partners,
    )?;
    let mpc = meta_correlation_laws(&set, &probabilities, &taus_partners)?;

    let mut heldout = Vec::new();
    for h in &r.heldout {
        let predicted = predict_heldout(&set, &s.transform(&r.reference, h)?)?;
        let truth = match (&oracle, s.observable(h)) {
            (Some(psi), Ok(obs)) => Some(born_law(psi, &obs)?),
            _ => None,
        };
        let max_deviation = truth.as_ref().map(|t| {
            t.iter()
                .zip(&predicted)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        heldout.push(HeldoutPrediction {
            observable: h.clone(),
            predicted,
            oracle: truth,
            max_deviation,
        });
    }

    out.write_json("expansion.json", &set)?;
    let max_mpc_residual = mpc.max_residual();
    out.write_json(
        "report.json",
        &ReconstructReport {
            retrieval: &report,
            mpc,
            max_mpc_residual,
            heldout,
        },
    )
}

fn frequencies(laws: &IndexMap<String, FactualLaw>) -> CliResult<IndexMap<String, Vec<f64>>> {
    laws.iter()
        .map(|(k, l)| Ok((k.clone(), l.frequencies()?)))
        .collect()
}

fn write_histogram(out: &mut OutputDir, rel: &str, h: &Histogram1D) -> CliResult<()> {
    out.write_with(rel, |buf| Ok(h.write_csv(buf)?))
}

/// Drops the named keys from a serialized object; histograms go to CSV.
fn without(value: impl Serialize, keys: &[&str]) -> CliResult<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    if let Some(obj) = v.as_object_mut() {
        for k in keys {
            obj.remove(*k);
        }
    }
    Ok(v)
}

pub fn cmd_exp(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let section = s.exp.as_ref().ok_or(CliError::MissingSection("exp"))?;
    let state = section.state.build()?;
    let summary = simulate_exp(&state, &section.config, derive_seed(seed, "exp"))?;

    write_histogram(out, "angle_histogram.csv", &summary.angle_histogram)?;
    write_histogram(out, "pz_histogram.csv", &summary.pz_histogram)?;
    write_histogram(out, "fringe_histogram.csv", &summary.fringe_histogram)?;
    write_histogram(
        out,
        "fringe_phase_histogram.csv",
        &summary.fringe_phase_histogram,
    )?;
    out.write_with("lambda_scaling.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["lambda", "mean_abs_gamma", "std_err"])
            .map_err(csv_err)?;
        for row in &summary.lambda_scaling {
            w.write_record([
                row.lambda.to_string(),
                row.mean_abs_gamma.to_string(),
                row.std_err.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Schema(e.to_string()))
    })?;
    let mut doc = without(
        &summary,
        &[
            "angle_histogram",
            "pz_histogram",
            "fringe_histogram",
            "fringe_phase_histogram",
        ],
    )?;
    doc["fringe_visibility"] = summary.fringe_visibility().into();
    doc["state"] = serde_json::to_value(state.params())?;
    out.write_json("summary.json", &doc)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Schema(format!("csv: {e}"))
}

fn write_cells(out: &mut OutputDir, rel: &str, h: &VectorHistogram) -> CliResult<()> {
    out.write_with(rel, |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["px", "py", "pz", "mass"])
            .map_err(csv_err)?;
        for (cell, m) in h.cells() {
            let c = h.center(*cell);
            w.write_record([
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                m.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Schema(e.to_string()))
    })
}

pub fn cmd_borncheck(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let section = s
        .borncheck
        .as_ref()
        .ok_or(CliError::MissingSection("borncheck"))?;
    let wave = section.wave.build()?;
    let rec = extended_born_check(&wave, &section.config, derive_seed(seed, "borncheck"))?;

    for (name, h) in [
        ("guided", &rec.guided_histogram),
        ("candidate", &rec.candidate_histogram),
    ] {
        write_cells(out, &format!("{name}_cells.csv"), h)?;
        for (axis, label) in ["px", "py", "pz"].iter().enumerate() {
            out.write_with(&format!("{name}_{label}.csv"), |buf| {
                Ok(h.write_marginal_csv(axis, buf)?)
            })?;
        }
    }
    let mut doc = without(&rec, &["guided_histogram", "candidate_histogram"])?;
    doc["bin_width"] = rec.guided_histogram.bin_width.into();
    doc["guided_histogram_mean"] = serde_json::to_value(rec.guided_histogram.mean())?;
    out.write_json("summary.json", &doc)
}
