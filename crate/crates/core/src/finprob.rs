//! Finite, factual probability laws.
//!
//! A [`FactualLaw`] accumulates coded outcomes over a fixed spectrum and keeps
//! its trial stream partitioned into consecutive blocks of `N₀` trials. The
//! stability verdict compares every complete block's relative frequencies
//! with the pooled frequencies: a law is stable at `(ε, δ, N₀)` when, for
//! every label, at least a fraction `1 − δ` of the blocks lies within `ε` of
//! the pooled value. The trailing partial block never takes part in a verdict.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One element of a spectrum: an observable and the index of one of its
/// eigenvalues.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub observable: String,
    pub index: usize,
}

impl OutcomeLabel {
    pub fn new(observable: impl Into<String>, index: usize) -> Self {
        Self {
            observable: observable.into(),
            index,
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.observable, self.index)
    }
}

impl FromStr for OutcomeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, idx) = s
            .rsplit_once(':')
            .ok_or_else(|| Error::Format(format!("label `{s}` lacks `:index`")))?;
        let index = idx
            .parse()
            .map_err(|_| Error::Format(format!("label `{s}` has a bad index")))?;
        Ok(Self::new(name, index))
    }
}

/// `(ε, δ, N₀)` of a law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawParams {
    pub epsilon: f64,
    pub delta: f64,
    pub n0: u64,
}

impl Default for LawParams {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            delta: 0.05,
            n0: 10_000,
        }
    }
}

impl LawParams {
    pub fn new(epsilon: f64, delta: f64, n0: u64) -> Result<Self> {
        let p = Self { epsilon, delta, n0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0,1), got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if self.n0 == 0 {
            return Err(Error::invalid("block size N0 must be positive"));
        }
        Ok(())
    }
}

/// Empirical relative-frequency law with block bookkeeping.
///
/// Counts are stored aligned with `spectrum`. Trials are split into
/// `blocks` (complete, exactly `n0` trials each), the open `current` block,
/// and `unblocked`: leftovers of partial blocks folded in by [`merge`](Self::merge),
/// which are counted but never form a block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactualLaw {
    spectrum: Vec<OutcomeLabel>,
    counts: Vec<u64>,
    n_total: u64,
    params: LawParams,
    blocks: Vec<Vec<u64>>,
    current: Vec<u64>,
    current_len: u64,
    unblocked: Vec<u64>,
}

impl FactualLaw {
    pub fn new(spectrum: Vec<OutcomeLabel>, params: LawParams) -> Result<Self> {
        params.validate()?;
        if spectrum.is_empty() {
            return Err(Error::invalid("spectrum must not be empty"));
        }
        for (i, l) in spectrum.iter().enumerate() {
            if spectrum[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate label `{l}` in spectrum")));
            }
        }
        let k = spectrum.len();
        Ok(Self {
            spectrum,
            counts: vec![0; k],
            n_total: 0,
            params,
            blocks: Vec::new(),
            current: vec![0; k],
            current_len: 0,
            unblocked: vec![0; k],
        })
    }

    /// Law over the eigenvalue indices `0..dim` of one observable.
    pub fn for_observable(observable: &str, dim: usize, params: LawParams) -> Result<Self> {
        Self::new(
            (0..dim).map(|j| OutcomeLabel::new(observable, j)).collect(),
            params,
        )
    }

    pub fn spectrum(&self) -> &[OutcomeLabel] {
        &self.spectrum
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count_of(&self, label: &OutcomeLabel) -> Option<u64> {
        self.position(label).map(|i| self.counts[i])
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn params(&self) -> LawParams {
        self.params
    }

    pub fn block_history(&self) -> &[Vec<u64>] {
        &self.blocks
    }

    pub fn complete_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn position(&self, label: &OutcomeLabel) -> Option<usize> {
        self.spectrum.iter().position(|l| l == label)
    }

    /// Records one coded outcome.
    pub fn accumulate(&mut self, outcome: &OutcomeLabel) -> Result<()> {
        let i = self
            .position(outcome)
            .ok_or_else(|| Error::UnknownLabel(outcome.to_string()))?;
        self.accumulate_index(i)
    }

    /// Records an outcome by its position in the spectrum.
    pub fn accumulate_index(&mut self, i: usize) -> Result<()> {
        if i >= self.spectrum.len() {
            return Err(Error::UnknownLabel(format!("#{i}")));
        }
        self.counts[i] += 1;
        self.n_total += 1;
        self.current[i] += 1;
        self.current_len += 1;
        if self.current_len == self.params.n0 {
            let full = std::mem::replace(&mut self.current, vec![0; self.spectrum.len()]);
            self.blocks.push(full);
            self.current_len = 0;
        }
        Ok(())
    }

    /// Relative frequencies `counts / n_total`, aligned with the spectrum.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.n_total == 0 {
            return Err(Error::EmptyLaw);
        }
        let n = self.n_total as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }

    pub fn frequency_map(&self) -> Result<IndexMap<String, f64>> {
        let f = self.frequencies()?;
        Ok(self.spectrum.iter().map(|l| l.to_string()).zip(f).collect())
    }

    /// Block-based `(ε, δ, N₀)` stability verdict.
    pub fn check_convergence(&self) -> Result<StabilityVerdict> {
        let nb = self.blocks.len();
        if nb < 2 {
            return Err(Error::InsufficientBlocks {
                needed: 2,
                found: nb,
            });
        }
        let k = self.spectrum.len();
        let n0 = self.params.n0 as f64;
        let pooled_n = n0 * nb as f64;
        let pooled: Vec<f64> = (0..k)
            .map(|i| self.blocks.iter().map(|b| b[i]).sum::<u64>() as f64 / pooled_n)
            .collect();

        let mut within = vec![0usize; k];
        let mut worst = 0.0f64;
        for b in &self.blocks {
            for i in 0..k {
                let dev = (b[i] as f64 / n0 - pooled[i]).abs();
                worst = worst.max(dev);
                if dev <= self.params.epsilon {
                    within[i] += 1;
                }
            }
        }

        // Compare counts rather than fractions so 95/100 vs 1 − 0.05 is exact.
        let required = (1.0 - self.params.delta) * nb as f64 - 1e-9;
        let stable = within.iter().all(|&w| w as f64 >= required);
        let labels = self.spectrum.iter().map(|l| l.to_string());
        Ok(StabilityVerdict {
            stable,
            per_label_fraction_within_epsilon: labels
                .clone()
                .zip(within.iter().map(|&w| w as f64 / nb as f64))
                .collect(),
            worst_deviation: worst,
            pooled_frequencies: labels.zip(pooled).collect(),
            blocks_used: nb,
            params: self.params,
        })
    }

    /// Combines two laws over the same spectrum and parameters: counts add,
    /// complete blocks concatenate (self first), open blocks are folded into
    /// the unblocked remainder.
    pub fn merge(&self, other: &FactualLaw) -> Result<FactualLaw> {
        if self.spectrum != other.spectrum {
            return Err(Error::IncompatibleLaws("spectra differ".into()));
        }
        if self.params != other.params {
            return Err(Error::IncompatibleLaws(
                "(epsilon, delta, N0) differ".into(),
            ));
        }
        let k = self.spectrum.len();
        let add = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let mut unblocked = add(&self.unblocked, &other.unblocked);
        unblocked = add(&unblocked, &self.current);
        unblocked = add(&unblocked, &other.current);
        Ok(FactualLaw {
            spectrum: self.spectrum.clone(),
            counts: add(&self.counts, &other.counts),
            n_total: self.n_total + other.n_total,
            params: self.params,
            blocks: self.blocks.iter().chain(&other.blocks).cloned().collect(),
            current: vec![0; k],
            current_len: 0,
            unblocked,
        })
    }

    /// Law with the given counts and no block structure (all trials unblocked).
    pub fn from_counts(
        spectrum: Vec<OutcomeLabel>,
        counts: Vec<u64>,
        params: LawParams,
    ) -> Result<Self> {
        let mut law = Self::new(spectrum, params)?;
        if counts.len() != law.spectrum.len() {
            return Err(Error::LengthMismatch(counts.len(), law.spectrum.len()));
        }
        law.n_total = counts.iter().sum();
        law.unblocked = counts.clone();
        law.counts = counts;
        Ok(law)
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let k = self.spectrum.len();
        let lens_ok = self.counts.len() == k
            && self.current.len() == k
            && self.unblocked.len() == k
            && self.blocks.iter().all(|b| b.len() == k);
        if !lens_ok {
            return Err(Error::Format(
                "count vectors do not match the spectrum".into(),
            ));
        }
        if self.counts.iter().sum::<u64>() != self.n_total {
            return Err(Error::Format("counts do not sum to n_total".into()));
        }
        if self
            .blocks
            .iter()
            .any(|b| b.iter().sum::<u64>() != self.params.n0)
        {
            return Err(Error::Format(
                "a complete block does not hold N0 trials".into(),
            ));
        }
        if self.current.iter().sum::<u64>() != self.current_len
            || self.current_len >= self.params.n0
        {
            return Err(Error::Format("open block is inconsistent".into()));
        }
        for i in 0..k {
            let parts =
                self.blocks.iter().map(|b| b[i]).sum::<u64>() + self.current[i] + self.unblocked[i];
            if parts != self.counts[i] {
                return Err(Error::Format("block history disagrees with counts".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let law: FactualLaw = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        law.validate()?;
        Ok(law)
    }

    /// Flat CSV: a `n_total,n0,epsilon,delta` header record, then one
    /// `label,count` record per spectrum element.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let fmt_err = |e: csv::Error| Error::Format(e.to_string());
        let mut wr = csv::WriterBuilder::new()
            .flexible(true)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wr.write_record(["n_total", "n0", "epsilon", "delta"])
            .map_err(fmt_err)?;
        wr.write_record([
            self.n_total.to_string(),
            self.params.n0.to_string(),
            self.params.epsilon.to_string(),
            self.params.delta.to_string(),
        ])
        .map_err(fmt_err)?;
        wr.write_record(["label", "count"]).map_err(fmt_err)?;
        for (l, c) in self.spectrum.iter().zip(&self.counts) {
            wr.write_record([l.to_string(), c.to_string()])
                .map_err(fmt_err)?;
        }
        wr.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads the CSV form. Block history is not part of that format, so the
    /// result carries its counts as unblocked trials.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let fmt_err = |e: csv::Error| Error::Format(e.to_string());
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let records: Vec<csv::StringRecord> = rd
            .records()
            .collect::<std::result::Result<_, _>>()
            .map_err(fmt_err)?;
        if records.len() < 3 || &records[0][0] != "n_total" || &records[2][0] != "label" {
            return Err(Error::Format("law CSV lacks its header records".into()));
        }
        let meta = &records[1];
        if meta.len() != 4 {
            return Err(Error::Format(
                "law CSV metadata record needs 4 fields".into(),
            ));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number `{s}`")))
        };
        let parse_u = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Format(format!("bad count `{s}`")))
        };
        let n_total = parse_u(&meta[0])?;
        let params = LawParams::new(parse_f(&meta[2])?, parse_f(&meta[3])?, parse_u(&meta[1])?)?;
        let mut spectrum = Vec::new();
        let mut counts = Vec::new();
        for rec in &records[3..] {
            if rec.len() != 2 {
                return Err(Error::Format("law CSV rows need `label,count`".into()));
            }
            spectrum.push(rec[0].parse()?);
            counts.push(parse_u(&rec[1])?);
        }
        let law = Self::from_counts(spectrum, counts, params)?;
        if law.n_total != n_total {
            return Err(Error::Format(
                "counts do not sum to the declared n_total".into(),
            ));
        }
        Ok(law)
    }
}

/// Outcome of [`FactualLaw::check_convergence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub per_label_fraction_within_epsilon: IndexMap<String, f64>,
    pub worst_deviation: f64,
    pub pooled_frequencies: IndexMap<String, f64>,
    pub blocks_used: usize,
    pub params: LawParams,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn coin(n0: u64) -> FactualLaw {
        FactualLaw::for_observable("A", 2, LawParams::new(0.02, 0.05, n0).unwrap()).unwrap()
    }

    fn a(i: usize) -> OutcomeLabel {
        OutcomeLabel::new("A", i)
    }

    #[test]
    fn accumulate_counts_and_rejects_unknown() {
        let mut law = coin(10);
        law.accumulate(&a(0)).unwrap();
        assert_eq!(law.counts(), &[1, 0]);
        assert_eq!(law.n_total(), 1);
        law.accumulate(&a(1)).unwrap();
        assert_eq!(law.counts(), &[1, 1]);
        assert_eq!(law.n_total(), 2);
        assert_eq!(
            law.accumulate(&a(2)),
            Err(Error::UnknownLabel("A:2".into()))
        );
        assert_eq!(
            law.accumulate(&OutcomeLabel::new("B", 0)),
            Err(Error::UnknownLabel("B:0".into()))
        );
    }

    #[test]
    fn blocks_close_at_n0() {
        let mut law = coin(3);
        for i in [0, 1, 0, 1, 1] {
            law.accumulate_index(i).unwrap();
        }
        assert_eq!(law.block_history(), &[vec![2, 1]]);
        law.validate().unwrap();
    }

    #[test]
    fn frequencies_arithmetic() {
        let mut law = coin(10);
        for i in [0, 0, 0, 1] {
            law.accumulate_index(i).unwrap();
        }
        assert_eq!(law.frequencies().unwrap(), vec![0.75, 0.25]);

        let mut delta = FactualLaw::for_observable("A", 1, LawParams::default()).unwrap();
        for _ in 0..5 {
            delta.accumulate_index(0).unwrap();
        }
        assert_eq!(delta.frequencies().unwrap(), vec![1.0]);
        assert_eq!(coin(10).frequencies(), Err(Error::EmptyLaw));
    }

    #[test]
    fn identical_blocks_are_stable_with_zero_dispersion() {
        let mut law = coin(4);
        for _ in 0..10 {
            for i in [0, 1, 1, 0] {
                law.accumulate_index(i).unwrap();
            }
        }
        let v = law.check_convergence().unwrap();
        assert!(v.stable);
        assert_eq!(v.worst_deviation, 0.0);
        assert_eq!(v.blocks_used, 10);
    }

    #[test]
    fn partial_block_is_ignored() {
        let mut law = coin(4);
        for _ in 0..2 {
            for i in [0, 1, 1, 0] {
                law.accumulate_index(i).unwrap();
            }
        }
        // a wildly different partial block must not change the verdict
        for _ in 0..3 {
            law.accumulate_index(0).unwrap();
        }
        let v = law.check_convergence().unwrap();
        assert!(v.stable);
        assert_eq!(v.worst_deviation, 0.0);
    }

    #[test]
    fn insufficient_blocks() {
        let mut law = coin(4);
        for _ in 0..7 {
            law.accumulate_index(0).unwrap();
        }
        assert_eq!(
            law.check_convergence(),
            Err(Error::InsufficientBlocks {
                needed: 2,
                found: 1
            })
        );
    }

    #[test]
    fn drift_is_unstable() {
        // Every block frequency sits about 0.2 away from the pooled 0.5.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut law =
            FactualLaw::for_observable("A", 2, LawParams::new(0.1, 0.05, 10_000).unwrap()).unwrap();
        for b in 0..100 {
            let p = if b < 50 { 0.3 } else { 0.7 };
            for _ in 0..10_000 {
                law.accumulate_index(usize::from(rng.random::<f64>() < p))
                    .unwrap();
            }
        }
        let v = law.check_convergence().unwrap();
        assert!(!v.stable);
        assert!(v.worst_deviation >= 0.18);
        assert!(v
            .per_label_fraction_within_epsilon
            .values()
            .all(|&f| f == 0.0));
    }

    #[test]
    fn stability_is_deterministic() {
        let mut law = coin(100);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            law.accumulate_index(rng.random_range(0..2)).unwrap();
        }
        assert_eq!(
            law.check_convergence().unwrap(),
            law.check_convergence().unwrap()
        );
    }

    #[test]
    fn csv_and_json_round_trip() {
        let mut law = coin(3);
        for i in [0, 1, 1, 1, 0, 1, 1] {
            law.accumulate_index(i).unwrap();
        }
        let csv = law.to_csv_string().unwrap();
        assert!(
            csv.starts_with("n_total,n0,epsilon,delta\n7,3,0.02,0.05\nlabel,count\nA:0,2\nA:1,5\n")
        );
        let back = FactualLaw::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(back.counts(), law.counts());
        assert_eq!(back.params(), law.params());
        let json = law.to_json().unwrap();
        assert_eq!(FactualLaw::from_json(&json).unwrap(), law);
    }

    #[test]
    fn corrupt_json_is_rejected() {
        let law = coin(3);
        let mut v: serde_json::Value = serde_json::from_str(&law.to_json().unwrap()).unwrap();
        v["n_total"] = 5.into();
        assert!(FactualLaw::from_json(&v.to_string()).is_err());
    }

    fn law_from(seq: &[usize], n0: u64) -> FactualLaw {
        let mut law =
            FactualLaw::for_observable("A", 3, LawParams::new(0.1, 0.1, n0).unwrap()).unwrap();
        for &i in seq {
            law.accumulate_index(i).unwrap();
        }
        law
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_one(seq in prop::collection::vec(0usize..3, 1..400)) {
            let law = law_from(&seq, 7);
            let s: f64 = law.frequencies().unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() <= 4.0 * f64::EPSILON);
            law.validate().unwrap();
        }

        #[test]
        fn merge_is_associative_and_commutative(
            x in prop::collection::vec(0usize..3, 0..60),
            y in prop::collection::vec(0usize..3, 0..60),
            z in prop::collection::vec(0usize..3, 0..60),
        ) {
            let (a, b, c) = (law_from(&x, 5), law_from(&y, 5), law_from(&z, 5));
            let ab_c = a.merge(&b).unwrap().merge(&c).unwrap();
            let a_bc = a.merge(&b.merge(&c).unwrap()).unwrap();
            prop_assert_eq!(ab_c.counts(), a_bc.counts());
            prop_assert_eq!(ab_c.block_history(), a_bc.block_history());
            let ba = b.merge(&a).unwrap();
            let ab = a.merge(&b).unwrap();
            prop_assert_eq!(ab.counts(), ba.counts());
            let mut hb = ab.block_history().to_vec();
            let mut hc = ba.block_history().to_vec();
            hb.sort();
            hc.sort();
            prop_assert_eq!(hb, hc);
            ab_c.validate().unwrap();

            // pooled frequencies of the merge are the count-weighted mean
            if a.n_total() > 0 && b.n_total() > 0 {
                let (fa, fb, fab) = (a.frequencies().unwrap(), b.frequencies().unwrap(), ab.frequencies().unwrap());
                let (na, nb) = (a.n_total() as f64, b.n_total() as f64);
                for i in 0..3 {
                    prop_assert!((fab[i] - (na * fa[i] + nb * fb[i]) / (na + nb)).abs() < 1e-12);
                }
            }
        }
    }
}
