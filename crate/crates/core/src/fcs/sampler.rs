//! Two-time measurement trajectories of the probe energies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::exact::{merge_support, FCSDistribution};
use crate::error::{Error, Result};
use crate::linres::to_c;
use crate::model::RisModel;
use crate::qlinalg::{trace, Operator};
use crate::semigroup::CompositeKind;

/// RNG words reserved per step; a step draws at most three f64 (six words).
const WORDS_PER_STEP: u128 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub n: usize,
    pub probe: usize,
    /// Entropy-observable outcomes β_jλ before and after the interaction.
    pub s: f64,
    pub s_prime: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub steps: Vec<Step>,
    /// S per probe: Σ (s' − s).
    pub cumulative_entropy: Vec<f64>,
    /// Q_j = −S_j/β_j (energy balance −Σ(λ' − λ) when β_j = 0).
    pub cumulative_energy: Vec<f64>,
}

struct ProbeData {
    beta: f64,
    /// Per cluster: energy, total probability, member eigenvector indices.
    clusters: Vec<(f64, f64, Vec<usize>)>,
    p: Vec<f64>,
    blocks: Vec<Vec<Operator>>,
}

struct Sampler {
    kind: CompositeKind,
    order: Vec<usize>,
    weights: Vec<f64>,
    probes: Vec<ProbeData>,
    rho0: Operator,
}

impl Sampler {
    fn new(model: &RisModel, kind: CompositeKind, rho0: &Operator) -> Result<Self> {
        if rho0.nrows() != model.d_sys() || rho0.ncols() != model.d_sys() {
            return Err(Error::Dimension("initial state has the wrong dimension".into()));
        }
        let probes = (0..model.m())
            .map(|j| {
                let dec = model.env_decomposition(j);
                let p = model.env_probabilities(j);
                let mut clusters: Vec<(f64, f64, Vec<usize>)> =
                    dec.projectors.iter().map(|(l, _)| (*l, 0.0, Vec::new())).collect();
                for (k, &cl) in dec.cluster_of.iter().enumerate() {
                    clusters[cl].1 += p[k];
                    clusters[cl].2.push(k);
                }
                ProbeData { beta: model.probes[j].beta, clusters, p, blocks: model.kraus_blocks(j, false) }
            })
            .collect();
        Ok(Sampler {
            kind,
            order: kind.order(model.m()),
            weights: model.weights(),
            probes,
            rho0: rho0.clone(),
        })
    }

    fn run(&self, n_steps: usize, seed: u64, index: u64) -> TrajectoryRecord {
        let m = self.probes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut rho = self.rho0.clone();
        let mut steps = Vec::with_capacity(n_steps);
        let mut entropy = vec![0.0; m];
        let mut energy = vec![0.0; m];
        for n in 0..n_steps {
            rng.set_word_pos(n as u128 * WORDS_PER_STEP);
            let j = if self.kind.is_cyclic() {
                self.order[n % m]
            } else {
                categorical(&mut rng, &self.weights)
            };
            let pd = &self.probes[j];
            let cluster_p: Vec<f64> = pd.clusters.iter().map(|c| c.1).collect();
            let s = categorical(&mut rng, &cluster_p);
            let (lam, ps, members) = &pd.clusters[s];
            // unnormalized system branches for each final cluster
            let branches: Vec<Operator> = pd
                .clusters
                .iter()
                .map(|(_, _, finals)| {
                    let mut b = Operator::zeros(rho.nrows(), rho.ncols());
                    for &k in members {
                        let w = to_c(pd.p[k] / ps);
                        for &kp in finals {
                            let v = &pd.blocks[k][kp];
                            b += v * &rho * v.adjoint() * w;
                        }
                    }
                    b
                })
                .collect();
            let probs: Vec<f64> = branches.iter().map(|b| trace(b).re.max(0.0)).collect();
            let sp = categorical(&mut rng, &probs);
            let lam_after = pd.clusters[sp].0;
            rho = &branches[sp] * to_c(1.0 / probs[sp]);
            let (s0, s1) = (pd.beta * lam, pd.beta * lam_after);
            entropy[j] += s1 - s0;
            energy[j] += lam_after - lam;
            steps.push(Step { n, probe: j, s: s0, s_prime: s1 });
        }
        let heat: Vec<f64> = (0..m)
            .map(|j| {
                let b = self.probes[j].beta;
                if b != 0.0 {
                    -entropy[j] / b
                } else {
                    -energy[j]
                }
            })
            .collect();
        TrajectoryRecord { index, seed, steps, cumulative_entropy: entropy, cumulative_energy: heat }
    }
}

/// Inverse-CDF draw; falls back to the last index with positive weight.
fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc && w > 0.0 {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// One trajectory; its random stream depends only on (seed, index).
pub fn sample_trajectory(
    model: &RisModel,
    kind: CompositeKind,
    rho0: &Operator,
    n_steps: usize,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    Ok(Sampler::new(model, kind, rho0)?.run(n_steps, seed, index))
}

/// Trajectories 0..n_traj on `workers` threads (0 = rayon default), in index order.
pub fn sample_batch(
    model: &RisModel,
    kind: CompositeKind,
    rho0: &Operator,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let sampler = Sampler::new(model, kind, rho0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..n_traj as u64)
            .into_par_iter()
            .map(|i| sampler.run(n_steps, seed, i))
            .collect()
    }))
}

pub fn empirical_distribution(records: &[TrajectoryRecord]) -> FCSDistribution {
    let w = 1.0 / records.len().max(1) as f64;
    merge_support(records.iter().map(|r| (r.cumulative_entropy.clone(), w)).collect())
}

/// Sample mean of e^{−α·S} and its standard error.
pub fn empirical_mgf(records: &[TrajectoryRecord], alpha: &[f64]) -> (f64, f64) {
    let n = records.len() as f64;
    let xs: Vec<f64> = records
        .iter()
        .map(|r| (-r.cumulative_entropy.iter().zip(alpha).map(|(s, a)| s * a).sum::<f64>()).exp())
        .collect();
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
