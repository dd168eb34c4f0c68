//! Probability trees: a generation as trunk, one branch per group of
//! mutually compatible observables, factual laws as crowns, and the
//! meta-correlations that bind the branch laws together.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finprob::{FactualLaw, LawParams};
use crate::genesis::{run_successions, PreparedGeneration};
use crate::hilbert::{dirac_transform, BornSampler, ObservableSpec, TransformMatrix};
use crate::reconstruct::{link, ExpansionSet};
use crate::rng::{derive_seed, par_trials, StreamRng};

/// Observables whose oracle operators pairwise commute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityGroup {
    pub members: Vec<String>,
}

/// Greedy first-fit partition in input order: each observable joins the
/// first group all of whose members it commutes with.
pub fn partition_branches(observables: &[ObservableSpec]) -> Vec<CompatibilityGroup> {
    let mut groups: Vec<Vec<&ObservableSpec>> = Vec::new();
    for o in observables {
        match groups
            .iter_mut()
            .find(|g| g.iter().all(|m| m.commutes_with(o)))
        {
            Some(g) => g.push(o),
            None => groups.push(vec![o]),
        }
    }
    groups
        .into_iter()
        .map(|g| CompatibilityGroup {
            members: g.into_iter().map(|o| o.name().to_string()).collect(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub group: CompatibilityGroup,
    pub laws: IndexMap<String, FactualLaw>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaCorrelationPair {
    pub a: String,
    pub b: String,
    /// `max_k |predicted(b_k) − measured(b_k)|`
    pub residual: f64,
    pub predicted: Vec<f64>,
    pub measured: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaCorrelationRecord {
    pub pairs: Vec<MetaCorrelationPair>,
}

impl MetaCorrelationRecord {
    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTree {
    pub trunk: String,
    pub branches: Vec<Branch>,
    pub mpc: MetaCorrelationRecord,
    pub trunk_only: bool,
}

impl ProbabilityTree {
    /// Tree over explicitly given laws, grouped as in `groups`.
    pub fn from_laws(
        trunk: impl Into<String>,
        groups: Vec<CompatibilityGroup>,
        mut laws: IndexMap<String, FactualLaw>,
    ) -> Result<Self> {
        let mut branches = Vec::with_capacity(groups.len());
        for group in groups {
            let mut branch_laws = IndexMap::new();
            for name in &group.members {
                let law = laws
                    .swap_remove(name)
                    .ok_or_else(|| Error::invalid(format!("no law for observable `{name}`")))?;
                branch_laws.insert(name.clone(), law);
            }
            branches.push(Branch {
                group,
                laws: branch_laws,
            });
        }
        if let Some(extra) = laws.keys().next() {
            return Err(Error::invalid(format!(
                "observable `{extra}` belongs to no branch"
            )));
        }
        let trunk_only = branches.len() == 1;
        Ok(Self {
            trunk: trunk.into(),
            branches,
            mpc: MetaCorrelationRecord::default(),
            trunk_only,
        })
    }

    pub fn law(&self, observable: &str) -> Option<&FactualLaw> {
        self.branches.iter().find_map(|b| b.laws.get(observable))
    }

    pub fn observables(&self) -> impl Iterator<Item = &str> {
        self.branches
            .iter()
            .flat_map(|b| b.laws.keys().map(String::as_str))
    }

    /// All laws keyed by observable, in branch order.
    pub fn law_map(&self) -> IndexMap<String, FactualLaw> {
        self.branches
            .iter()
            .flat_map(|b| b.laws.iter().map(|(k, v)| (k.clone(), v.clone())))
            .collect()
    }
}

/// Builds one law per observable through `n` successions each. Laws are
/// seeded per observable name, so the processing order does not matter.
/// A generation with a guiding wave is coded in one joint way for every
/// observable and yields a single trunk-only branch.
pub fn build_tree(
    g: &PreparedGeneration,
    observables: &[ObservableSpec],
    n: u64,
    params: LawParams,
    seed: u64,
) -> Result<ProbabilityTree> {
    if observables.is_empty() {
        return Err(Error::invalid("tree needs at least one observable"));
    }
    let groups = if g.guidance().is_some() {
        vec![CompatibilityGroup {
            members: observables.iter().map(|o| o.name().to_string()).collect(),
        }]
    } else {
        partition_branches(observables)
    };
    let laws: Vec<(String, FactualLaw)> = observables
        .par_iter()
        .map(|o| {
            let law = run_successions(
                g,
                o,
                n,
                params,
                derive_seed(seed, &format!("law/{}", o.name())),
            )?;
            Ok((o.name().to_string(), law))
        })
        .collect::<Result<_>>()?;
    let map: IndexMap<String, FactualLaw> = laws.into_iter().collect();
    if map.len() != observables.len() {
        return Err(Error::invalid("observable names must be unique"));
    }
    ProbabilityTree::from_laws(g.id(), groups, map)
}

/// Predicted laws for every non-reference observable of `measured`, compared
/// against the measured probabilities.
pub fn meta_correlation_laws(
    expansion: &ExpansionSet,
    measured: &IndexMap<String, Vec<f64>>,
    taus: &[TransformMatrix],
) -> Result<MetaCorrelationRecord> {
    let a = &expansion.reference_observable;
    let c = expansion.reference_coefficients();
    let mut pairs = Vec::new();
    for (b, m) in measured {
        if b == a {
            continue;
        }
        let tau = link(taus, a, b)?;
        let predicted: Vec<f64> = dirac_transform(&c, &tau)?
            .iter()
            .map(|z| z.norm_sqr())
            .collect();
        if predicted.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: predicted.len(),
                found: m.len(),
            });
        }
        let residual = predicted
            .iter()
            .zip(m)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        pairs.push(MetaCorrelationPair {
            a: a.clone(),
            b: b.clone(),
            residual,
            predicted,
            measured: m.clone(),
        });
    }
    Ok(MetaCorrelationRecord { pairs })
}

/// [`meta_correlation_laws`] on the tree's measured frequencies; also
/// stores the record in the tree.
pub fn meta_correlation(
    tree: &mut ProbabilityTree,
    expansion: &ExpansionSet,
    taus: &[TransformMatrix],
) -> Result<MetaCorrelationRecord> {
    if tree.law(&expansion.reference_observable).is_none() {
        return Err(Error::invalid(format!(
            "reference observable `{}` is not in the tree",
            expansion.reference_observable
        )));
    }
    let measured = tree
        .law_map()
        .into_iter()
        .map(|(k, l)| Ok((k, l.frequencies()?)))
        .collect::<Result<IndexMap<_, _>>>()?;
    let record = meta_correlation_laws(expansion, &measured, taus)?;
    tree.mpc = record.clone();
    Ok(record)
}

/// Joint outcome counts of a group of commuting observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLaw {
    pub observables: Vec<String>,
    /// outcome index tuple → count
    #[serde(with = "crate::serde_complex::pairs")]
    pub counts: BTreeMap<Vec<usize>, u64>,
    pub n_total: u64,
}

impl JointLaw {
    /// Relative frequencies of observable `i` alone.
    pub fn marginal(&self, i: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (k, &c) in &self.counts {
            out[k[i]] += c as f64;
        }
        out.iter_mut().for_each(|x| *x /= self.n_total as f64);
        out
    }
}

/// Samples commuting observables together: one draw in the shared
/// eigenbasis of the first, read off as an eigenvalue index of each.
pub fn sample_joint(
    g: &PreparedGeneration,
    group: &[&ObservableSpec],
    n: u64,
    seed: u64,
) -> Result<JointLaw> {
    let first = *group
        .first()
        .ok_or_else(|| Error::invalid("empty compatibility group"))?;
    let d = first.dim();
    // column j of the first basis is, up to phase, column perm[j] of each other basis
    let mut perms = Vec::with_capacity(group.len());
    for o in group {
        if !first.commutes_with(o) {
            return Err(Error::invalid(format!(
                "`{}` does not commute with `{}`",
                o.name(),
                first.name()
            )));
        }
        let overlap = o.eigenbasis().adjoint() * first.eigenbasis();
        let perm: Vec<usize> = (0..d)
            .map(|j| {
                (0..d)
                    .max_by(|&a, &b| overlap[(a, j)].norm().total_cmp(&overlap[(b, j)].norm()))
                    .unwrap_or(0)
            })
            .collect();
        perms.push(perm);
    }
    let sampler = BornSampler::for_state(g.state(), first)?;
    let draws = par_trials(seed, n, |_, rng: &mut StreamRng| sampler.sample(rng));
    let mut counts = BTreeMap::new();
    for j in draws {
        let key: Vec<usize> = perms.iter().map(|p| p[j]).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(JointLaw {
        observables: group.iter().map(|o| o.name().to_string()).collect(),
        counts,
        n_total: n,
    })
}
