//! Exact finite-N distribution of S by enumeration of measurement outcomes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linres::to_c;
use crate::model::RisModel;
use crate::qlinalg::{trace, Operator};

pub const BRANCH_BUDGET: usize = 1_000_000;
/// Support points closer than this in every coordinate are merged.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default)]
pub struct FCSDistribution {
    /// Sorted lexicographically.
    pub support: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl FCSDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.support.first().map_or(0, |s| s.len());
        let mut out = vec![0.0; m];
        for (s, p) in self.support.iter().zip(&self.probabilities) {
            for (o, x) in out.iter_mut().zip(s) {
                *o += p * x;
            }
        }
        out
    }
}

pub(crate) fn merge_support(mut entries: Vec<(Vec<f64>, f64)>) -> FCSDistribution {
    entries.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = FCSDistribution::default();
    for (s, p) in entries {
        if let Some(last) = out.support.last() {
            if last.iter().zip(&s).all(|(a, b)| (a - b).abs() <= SUPPORT_TOL) {
                *out.probabilities.last_mut().unwrap() += p;
                continue;
            }
        }
        out.support.push(s);
        out.probabilities.push(p);
    }
    out
}

/// Σ_ς p(ς) e^{−α·ς}.
pub fn mgf_from_distribution(dist: &FCSDistribution, alpha: &[f64]) -> f64 {
    dist.support
        .iter()
        .zip(&dist.probabilities)
        .map(|(s, p)| p * (-s.iter().zip(alpha).map(|(x, a)| x * a).sum::<f64>()).exp())
        .sum()
}

/// ½ Σ |p − q| over the union of supports.
pub fn total_variation(a: &FCSDistribution, b: &FCSDistribution) -> f64 {
    let mut entries: Vec<(Vec<f64>, f64)> = a.support.iter().cloned().zip(a.probabilities.iter().copied()).collect();
    entries.extend(b.support.iter().cloned().zip(b.probabilities.iter().map(|p| -p)));
    0.5 * merge_support(entries).probabilities.iter().map(|p| p.abs()).sum::<f64>()
}

/// Distribution of S along `sequence` from ρ₀. Branches carrying the same net
/// cluster counts are summed as unnormalized states before continuing.
pub fn exact_distribution(model: &RisModel, sequence: &[usize], rho0: &Operator) -> Result<FCSDistribution> {
    let m = model.m();
    let mut branches: f64 = 1.0;
    for &j in sequence {
        if j >= m {
            return Err(Error::Index { index: j, len: m });
        }
        let nc = model.env_decomposition(j).projectors.len() as f64;
        branches *= nc * nc;
    }
    if branches > BRANCH_BUDGET as f64 {
        return Err(Error::BranchBudget { branches, budget: BRANCH_BUDGET });
    }
    // key layout: per probe, one net counter per cluster
    let offsets: Vec<usize> = (0..m)
        .scan(0, |acc, j| {
            let o = *acc;
            *acc += model.env_decomposition(j).projectors.len();
            Some(o)
        })
        .collect();
    let key_len = offsets.last().map_or(0, |o| o + model.env_decomposition(m - 1).projectors.len());
    let blocks: Vec<Vec<Vec<Operator>>> = (0..m).map(|j| model.kraus_blocks(j, false)).collect();
    let probs: Vec<Vec<f64>> = (0..m).map(|j| model.env_probabilities(j)).collect();

    let mut layer: HashMap<Vec<i32>, Operator> = HashMap::new();
    layer.insert(vec![0; key_len], rho0.clone());
    for &j in sequence {
        let dec = model.env_decomposition(j);
        let nc = dec.projectors.len();
        let mut next: HashMap<Vec<i32>, Operator> = HashMap::new();
        for (key, rho) in &layer {
            for s in 0..nc {
                for sp in 0..nc {
                    let mut out = Operator::zeros(rho.nrows(), rho.ncols());
                    for (k, &ck) in dec.cluster_of.iter().enumerate() {
                        if ck != s {
                            continue;
                        }
                        for (kp, &ckp) in dec.cluster_of.iter().enumerate() {
                            if ckp != sp {
                                continue;
                            }
                            let v = &blocks[j][k][kp];
                            out += v * rho * v.adjoint() * to_c(probs[j][k]);
                        }
                    }
                    if trace(&out).re <= 0.0 {
                        continue;
                    }
                    let mut nk = key.clone();
                    nk[offsets[j] + s] -= 1;
                    nk[offsets[j] + sp] += 1;
                    next.entry(nk)
                        .and_modify(|acc| *acc += &out)
                        .or_insert(out);
                }
            }
        }
        layer = next;
    }
    let entries = layer
        .into_iter()
        .map(|(key, rho)| {
            let s = (0..m)
                .map(|j| {
                    let dec = model.env_decomposition(j);
                    let b = model.probes[j].beta;
                    dec.projectors
                        .iter()
                        .enumerate()
                        .map(|(c, (l, _))| b * l * key[offsets[j] + c] as f64)
                        .sum()
                })
                .collect();
            (s, trace(&rho).re)
        })
        .collect();
    Ok(merge_support(entries))
}
