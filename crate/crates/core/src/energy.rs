//! Relative energy: external transfers plus on-chip MACs.
//!
//! Units are relative. External transfers are assumed 10 to 100 times as
//! expensive as a MAC; the default ratio is 64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::EmaBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub ext_cost_per_elem: f64,
    pub int_cost_per_mac: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            ext_cost_per_elem: 64.0,
            int_cost_per_mac: 1.0,
        }
    }
}

impl EnergyParams {
    pub fn new(ext_cost_per_elem: f64, int_cost_per_mac: f64) -> Result<Self> {
        let params = Self {
            ext_cost_per_elem,
            int_cost_per_mac,
        };
        params.check()?;
        Ok(params)
    }

    /// External cost `ratio` with a unit MAC cost.
    pub fn with_ratio(ratio: f64) -> Result<Self> {
        Self::new(ratio, 1.0)
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("ext_cost_per_elem", self.ext_cost_per_elem),
            ("int_cost_per_mac", self.int_cost_per_mac),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidEnergyParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn ratio(&self) -> f64 {
        self.ext_cost_per_elem / self.int_cost_per_mac
    }
}

pub fn energy(ema: &EmaBreakdown, macs: u64, params: &EnergyParams) -> f64 {
    ema.total() as f64 * params.ext_cost_per_elem + macs as f64 * params.int_cost_per_mac
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyCost {
    pub label: String,
    pub ema: EmaBreakdown,
    pub macs: u64,
}

impl PolicyCost {
    pub fn new(label: impl Into<String>, ema: EmaBreakdown, macs: u64) -> Self {
        Self {
            label: label.into(),
            ema,
            macs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPolicy {
    pub label: String,
    pub ema_total: u64,
    pub macs: u64,
    pub energy: f64,
    /// 1 for the cheapest policy.
    pub rank: usize,
}

/// Reduction of `candidate` relative to the costlier `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReduction {
    pub baseline: String,
    pub candidate: String,
    pub energy_reduction: f64,
    pub ema_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyComparison {
    /// Sorted by label.
    pub policies: Vec<RankedPolicy>,
    /// Every unordered pair once, in label order.
    pub pairs: Vec<PairReduction>,
}

impl EnergyComparison {
    pub fn pair(&self, baseline: &str, candidate: &str) -> Option<&PairReduction> {
        self.pairs
            .iter()
            .find(|p| p.baseline == baseline && p.candidate == candidate)
    }
}

fn reduction(baseline: f64, candidate: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - candidate) / baseline
    }
}

pub fn compare(policies: &[PolicyCost], params: &EnergyParams) -> Result<EnergyComparison> {
    if policies.len() < 2 {
        return Err(Error::TooFewPolicies(policies.len()));
    }
    params.check()?;

    let mut sorted: Vec<&PolicyCost> = policies.iter().collect();
    sorted.sort_by(|a, b| a.label.cmp(&b.label));
    let energies: Vec<f64> = sorted
        .iter()
        .map(|p| energy(&p.ema, p.macs, params))
        .collect();

    let mut order: Vec<usize> = (0..sorted.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; sorted.len()];
    for (rank, &idx) in order.iter().enumerate() {
        ranks[idx] = rank + 1;
    }

    let ranked = sorted
        .iter()
        .zip(&energies)
        .zip(&ranks)
        .map(|((p, &e), &rank)| RankedPolicy {
            label: p.label.clone(),
            ema_total: p.ema.total(),
            macs: p.macs,
            energy: e,
            rank,
        })
        .collect();

    let mut pairs = Vec::new();
    for a in 0..sorted.len() {
        for b in a + 1..sorted.len() {
            let (base, cand) = if energies[b] > energies[a] { (b, a) } else { (a, b) };
            pairs.push(PairReduction {
                baseline: sorted[base].label.clone(),
                candidate: sorted[cand].label.clone(),
                energy_reduction: reduction(energies[base], energies[cand]),
                ema_reduction: reduction(
                    sorted[base].ema.total() as f64,
                    sorted[cand].ema.total() as f64,
                ),
            });
        }
    }

    Ok(EnergyComparison {
        policies: ranked,
        pairs,
    })
}
