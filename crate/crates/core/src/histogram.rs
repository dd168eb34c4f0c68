//! Uniform 1-D histograms and sparse 3-D momentum histograms.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-range histogram. Values outside `[lo, hi)` go to the under/overflow
/// counters so no sample is silently dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram1D {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::invalid(format!(
                "bad histogram range [{lo}, {hi}) with {bins} bins"
            )));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            self.overflow += 1;
        } else {
            let i = (((x - self.lo) / self.width()) as usize).min(self.bins() - 1);
            self.counts[i] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Adds another histogram with the same binning.
    pub fn merge(&mut self, other: &Histogram1D) -> Result<()> {
        if self.lo != other.lo || self.hi != other.hi || self.bins() != other.bins() {
            return Err(Error::invalid("histogram binning differs"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }

    /// Bin masses relative to all recorded samples (in-range masses sum to 1
    /// when nothing over- or underflowed).
    pub fn masses(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// `bin_low,bin_high,mass` rows, LF terminated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let fmt_err = |e: csv::Error| Error::Format(e.to_string());
        wr.write_record(["bin_low", "bin_high", "mass"])
            .map_err(fmt_err)?;
        for (i, m) in self.masses().into_iter().enumerate() {
            let (a, b) = self.edges(i);
            wr.write_record([a.to_string(), b.to_string(), m.to_string()])
                .map_err(fmt_err)?;
        }
        wr.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Sparse histogram of 3-vectors on a cubic lattice of cell size `bin_width`;
/// cell `(i, j, k)` collects values rounding to `bin_width·(i, j, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorHistogram {
    pub bin_width: f64,
    #[serde(with = "crate::serde_complex::pairs")]
    cells: BTreeMap<[i64; 3], f64>,
}

impl VectorHistogram {
    pub fn new(bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0) {
            return Err(Error::invalid("bin width must be positive"));
        }
        Ok(Self {
            bin_width,
            cells: BTreeMap::new(),
        })
    }

    pub fn cell_of(&self, v: [f64; 3]) -> [i64; 3] {
        v.map(|x| (x / self.bin_width).round() as i64)
    }

    pub fn add_weighted(&mut self, v: [f64; 3], w: f64) {
        *self.cells.entry(self.cell_of(v)).or_insert(0.0) += w;
    }

    /// Rescales so the masses sum to one.
    pub fn normalize(&mut self) {
        let total: f64 = self.cells.values().sum();
        if total > 0.0 {
            for m in self.cells.values_mut() {
                *m /= total;
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.values().sum()
    }

    pub fn cells(&self) -> &BTreeMap<[i64; 3], f64> {
        &self.cells
    }

    pub fn center(&self, cell: [i64; 3]) -> [f64; 3] {
        cell.map(|i| i as f64 * self.bin_width)
    }

    /// Mass-weighted mean of the cell centres.
    pub fn mean(&self) -> [f64; 3] {
        let total = self.total_mass();
        let mut m = [0.0; 3];
        for (cell, w) in &self.cells {
            for (acc, x) in m.iter_mut().zip(self.center(*cell)) {
                *acc += x * w / total;
            }
        }
        m
    }

    /// Half the L1 distance between two histograms on the same lattice.
    pub fn total_variation(&self, other: &VectorHistogram) -> Result<f64> {
        if self.bin_width != other.bin_width {
            return Err(Error::invalid("histograms use different lattices"));
        }
        let mut sum = 0.0;
        for (k, a) in &self.cells {
            sum += (a - other.cells.get(k).copied().unwrap_or(0.0)).abs();
        }
        for (k, b) in &other.cells {
            if !self.cells.contains_key(k) {
                sum += b.abs();
            }
        }
        Ok(0.5 * sum)
    }

    /// Marginal along `axis` as `(bin_low, bin_high, mass)` rows.
    pub fn marginal(&self, axis: usize) -> Vec<(f64, f64, f64)> {
        let mut m: BTreeMap<i64, f64> = BTreeMap::new();
        for (cell, w) in &self.cells {
            *m.entry(cell[axis]).or_insert(0.0) += w;
        }
        m.into_iter()
            .map(|(i, w)| {
                (
                    (i as f64 - 0.5) * self.bin_width,
                    (i as f64 + 0.5) * self.bin_width,
                    w,
                )
            })
            .collect()
    }

    pub fn write_marginal_csv<W: Write>(&self, axis: usize, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let fmt_err = |e: csv::Error| Error::Format(e.to_string());
        wr.write_record(["bin_low", "bin_high", "mass"])
            .map_err(fmt_err)?;
        for (a, b, m) in self.marginal(axis) {
            wr.write_record([a.to_string(), b.to_string(), m.to_string()])
                .map_err(fmt_err)?;
        }
        wr.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Mean and population standard deviation, computed on data shifted by the
/// first sample so identical samples give exactly zero spread.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let Some(&x0) = xs.first() else {
        return (f64::NAN, f64::NAN);
    };
    let n = xs.len() as f64;
    let (s, s2) = xs.iter().fold((0.0, 0.0), |(s, s2), &x| {
        let d = x - x0;
        (s + d, s2 + d * d)
    });
    let m = s / n;
    (x0 + m, (s2 / n - m * m).max(0.0).sqrt())
}
