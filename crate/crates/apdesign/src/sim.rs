//! Monte Carlo harness and exhaustive enumeration oracle.
//!
//! The oracle computes the exact realization distribution of a component by
//! multiplying the sequential conditional rules over all bit vectors; it
//! shares no code with the sampler, so the two can check each other. The
//! scenario runner replays a design many times under per-replication
//! substreams and aggregates in replication order, which keeps reports
//! byte-identical for any worker-thread count.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::decompose::{decompose_one_to_one, AlternatingComponent, ComponentKind, EdgeLabel};
use crate::design::{
    ap_randomize_rep, naive_randomize, substream, DesignKind, DesignParams, NaivePick, StreamDomain,
};
use crate::error::SimError;
use crate::estimate::{
    confidence_interval, gamma_hat, naive_variance, sigma2_i_hat, variance_exact,
};
use crate::many_to_one::decompose_many_to_one;
use crate::matching::{build_disagreement, AgentId, MatchEdge, Matching, OutcomeTable};

/// Exact distribution over the feasible realizations of one component:
/// pairs of (selection vector, probability), covering probability one.
/// Independent of the sampler by construction — probabilities come from
/// multiplying the conditional rules directly.
pub fn enumerate_oracle(
    comp: &AlternatingComponent,
    p: f64,
) -> Result<Vec<(Vec<u8>, f64)>, SimError> {
    let k = comp.k();
    if k > 20 {
        return Err(SimError::TooLarge(k));
    }
    let first = p / (1.0 + p);
    let mut out = Vec::new();
    for bits in 0u32..(1 << k) {
        let w: Vec<u8> = (0..k).map(|j| ((bits >> j) & 1) as u8).collect();
        let mut prob = if w[0] == 1 { first } else { 1.0 - first };
        let mut feasible = true;
        let random_until = if comp.is_cycle() { k - 1 } else { k };
        for j in 1..random_until {
            if w[j - 1] == 1 {
                if w[j] == 1 {
                    feasible = false;
                    break;
                }
            } else {
                prob *= if w[j] == 1 { p } else { 1.0 - p };
            }
        }
        if feasible && comp.is_cycle() {
            let want = (w[0] == 0 && w[k - 2] == 0) as u8;
            feasible = w[k - 1] == want;
        }
        if feasible && prob > 0.0 {
            out.push((w, prob));
        }
    }
    Ok(out)
}

/// Compensated (Neumaier) sum; keeps oracle expectations accurate to a few
/// ulps even over thousands of terms, as the 1e-12 identity checks require.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut correction = 0.0;
    for t in terms {
        let new_sum = sum + t;
        correction += if sum.abs() >= t.abs() {
            (sum - new_sum) + t
        } else {
            (t - new_sum) + sum
        };
        sum = new_sum;
    }
    sum + correction
}

/// Mean and variance of a statistic over an enumerated distribution,
/// computed with compensated two-pass summation.
pub fn oracle_mean_var<F: Fn(&[u8]) -> f64>(dist: &[(Vec<u8>, f64)], stat: F) -> (f64, f64) {
    let values: Vec<f64> = dist.iter().map(|(w, _)| stat(w)).collect();
    let mean = compensated_sum(dist.iter().zip(&values).map(|((_, p), v)| p * v));
    let var = compensated_sum(
        dist.iter()
            .zip(&values)
            .map(|((_, p), v)| p * (v - mean) * (v - mean)),
    );
    (mean, var)
}

/// How the component structure of a scenario is produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Use the given components as-is.
    FixedComponents {
        components: Vec<AlternatingComponent>,
    },
    /// A fixed number of random components with lengths uniform on
    /// [min_len, max_len]; a component is a cycle with probability
    /// `cycle_fraction` (cycle lengths are rounded up to even >= 4).
    RandomOneToOne {
        components: usize,
        cycle_fraction: f64,
        min_len: usize,
        max_len: usize,
    },
    /// Two independent random feasible many-to-one matchings on the given
    /// sides, decomposed by the flow construction.
    RandomManyToOne {
        suppliers: u32,
        demands: u32,
        capacity: u32,
    },
    /// n workers and n jobs; treatment matches worker k to job k, control
    /// shifts to job k+1 (mod n). The disagreement set is one cycle of
    /// length 2n.
    CyclicShift { n: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// Every pair yields exactly B.
    ConstantB { b: f64 },
    /// Independent uniform draws on [0, B], fixed across replications.
    UniformOnZeroB { b: f64 },
    /// Outcomes from a CSV table (header a,b,y).
    TableFromFile { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub generator: Generator,
    pub outcomes: OutcomeModel,
    pub params: DesignParams,
    pub replications: u64,
    #[serde(default = "default_design")]
    pub design: DesignKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Estimand normalizer; defaults to the number of t-edges.
    #[serde(default)]
    pub normalizer: Option<f64>,
}

fn default_design() -> DesignKind {
    DesignKind::Ap
}

fn default_alpha() -> f64 {
    0.95
}

/// Aggregate diagnostics over the replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub design: DesignKind,
    pub replications: u64,
    pub components: usize,
    pub edges: usize,
    pub normalizer: f64,
    pub tau_true: f64,
    pub mean_tau_hat: f64,
    pub bias: f64,
    /// Sample variance of tau_hat; undefined for a single replication.
    pub empirical_variance: Option<f64>,
    pub mean_sigma2_hat: Option<f64>,
    pub true_variance: f64,
    pub ks_statistic: Option<f64>,
    pub normal_verdict: Option<bool>,
    pub ci_coverage: Option<f64>,
    pub note: String,
}

/// A finished run: the report plus the raw estimates for external
/// diagnostics (Q-Q plotting, custom tests).
#[derive(Debug, Clone)]
pub struct SimRun {
    pub report: SimReport,
    pub tau_hats: Vec<f64>,
}

/// A concrete simulation instance: components, full outcome table, and the
/// estimand pieces derived from them.
#[derive(Debug, Clone)]
pub struct Instance {
    pub components: Vec<AlternatingComponent>,
    pub outcomes: OutcomeTable,
    pub normalizer: f64,
    pub ybar_t: f64,
    pub ybar_c: f64,
}

impl Instance {
    pub fn tau(&self) -> f64 {
        self.ybar_t - self.ybar_c
    }
}

/// Materialize a scenario's components and outcomes. Instance randomness
/// derives from the scenario seed on its own stream, so replications do not
/// disturb it.
pub fn build_instance(spec: &ScenarioSpec) -> Result<Instance, SimError> {
    let mut rng = substream(spec.params.seed, 0, 0, StreamDomain::Instance);
    let components = match &spec.generator {
        Generator::FixedComponents { components } => {
            for c in components {
                AlternatingComponent::new(c.kind, c.vertices.clone(), c.labels.clone())?;
            }
            components.clone()
        }
        Generator::RandomOneToOne {
            components,
            cycle_fraction,
            min_len,
            max_len,
        } => random_one_to_one(*components, *cycle_fraction, *min_len, *max_len, &mut rng),
        Generator::RandomManyToOne {
            suppliers,
            demands,
            capacity,
        } => {
            let (mt, mc) = random_many_to_one(*suppliers, *demands, *capacity, &mut rng)?;
            let d = build_disagreement(&mt, &mc)?;
            decompose_many_to_one(&d)?
        }
        Generator::CyclicShift { n } => {
            let (mt, mc) = cyclic_shift_matchings(*n)?;
            let d = build_disagreement(&mt, &mc)?;
            decompose_one_to_one(&d)?
        }
    };

    let outcomes = match &spec.outcomes {
        OutcomeModel::TableFromFile { path } => crate::io::read_outcomes(path.as_ref())?,
        model => {
            let mut outcome_rng = substream(spec.params.seed, 0, 1, StreamDomain::Outcomes);
            let mut entries = Vec::new();
            for comp in &components {
                for (u, v, _) in comp.edges() {
                    let y = match model {
                        OutcomeModel::ConstantB { b } => *b,
                        OutcomeModel::UniformOnZeroB { b } => outcome_rng.gen_range(0.0..=*b),
                        OutcomeModel::TableFromFile { .. } => unreachable!(),
                    };
                    entries.push((MatchEdge { a: u, b: v }, y));
                }
            }
            OutcomeTable::new(entries, None)?
        }
    };

    let mut t_total = 0.0;
    let mut c_total = 0.0;
    let mut t_count = 0usize;
    for comp in &components {
        for (u, v, l) in comp.edges() {
            let y = outcomes
                .get(u, v)
                .ok_or(crate::error::MatchingError::MissingOutcome(MatchEdge {
                    a: u,
                    b: v,
                }))?;
            match l {
                EdgeLabel::T => {
                    t_total += y;
                    t_count += 1;
                }
                EdgeLabel::C => c_total += y,
            }
        }
    }
    let normalizer = spec.normalizer.unwrap_or(t_count.max(1) as f64);
    Ok(Instance {
        components,
        outcomes,
        normalizer,
        ybar_t: t_total / normalizer,
        ybar_c: c_total / normalizer,
    })
}

fn cyclic_shift_matchings(n: u32) -> Result<(Matching, Matching), SimError> {
    let workers: Vec<AgentId> = (1..=n).map(|i| AgentId::new(i).unwrap()).collect();
    let jobs: Vec<AgentId> = (1..=n).map(|i| AgentId::new(n + i).unwrap()).collect();
    let population: BTreeSet<AgentId> = workers.iter().chain(jobs.iter()).copied().collect();
    let mut t_edges = Vec::new();
    let mut c_edges = Vec::new();
    for k in 0..n as usize {
        t_edges.push(MatchEdge::one_to_one(workers[k], jobs[k]).map_err(SimError::Matching)?);
        let shifted = jobs[(k + 1) % n as usize];
        c_edges.push(MatchEdge::one_to_one(workers[k], shifted).map_err(SimError::Matching)?);
    }
    let mt = Matching::one_to_one(t_edges, population.clone()).map_err(SimError::Matching)?;
    let mc = Matching::one_to_one(c_edges, population).map_err(SimError::Matching)?;
    Ok((mt, mc))
}

fn random_one_to_one(
    count: usize,
    cycle_fraction: f64,
    min_len: usize,
    max_len: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<AlternatingComponent> {
    let min_len = min_len.max(1);
    let max_len = max_len.max(min_len);
    let mut next_id = 1u32;
    let mut fresh = |n: usize| -> Vec<AgentId> {
        let ids = (next_id..next_id + n as u32)
            .map(|i| AgentId::new(i).unwrap())
            .collect();
        next_id += n as u32;
        ids
    };
    let mut components = Vec::with_capacity(count);
    for _ in 0..count {
        let cycle = rng.gen_bool(cycle_fraction.clamp(0.0, 1.0));
        let first = if rng.gen_bool(0.5) {
            EdgeLabel::T
        } else {
            EdgeLabel::C
        };
        let comp = if cycle {
            let mut k = rng.gen_range(min_len..=max_len).max(4);
            if k % 2 == 1 {
                k += 1;
            }
            let mut vertices = fresh(k);
            vertices.push(vertices[0]);
            let labels = (0..k)
                .map(|j| if j % 2 == 0 { first } else { first.other() })
                .collect();
            AlternatingComponent::new(ComponentKind::Cycle, vertices, labels)
                .expect("generated cycle is well-formed")
        } else {
            let k = rng.gen_range(min_len..=max_len);
            let vertices = fresh(k + 1);
            let labels = (0..k)
                .map(|j| if j % 2 == 0 { first } else { first.other() })
                .collect();
            AlternatingComponent::new(ComponentKind::Path, vertices, labels)
                .expect("generated path is well-formed")
        };
        components.push(comp);
    }
    for comp in &mut components {
        comp.canonicalize();
    }
    components
}

/// Two independent random feasible many-to-one matchings over suppliers
/// 1..=s and demands s+1..=s+m.
pub fn random_many_to_one(
    suppliers: u32,
    demands: u32,
    capacity: u32,
    rng: &mut ChaCha12Rng,
) -> Result<(Matching, Matching), SimError> {
    let supplier_ids: Vec<AgentId> = (1..=suppliers).map(|i| AgentId::new(i).unwrap()).collect();
    let demand_ids: Vec<AgentId> = (1..=demands)
        .map(|i| AgentId::new(suppliers + i).unwrap())
        .collect();
    let supplier_set: BTreeSet<AgentId> = supplier_ids.iter().copied().collect();
    let demand_set: BTreeSet<AgentId> = demand_ids.iter().copied().collect();
    let draw = |rng: &mut ChaCha12Rng| -> Result<Matching, SimError> {
        let mut load = vec![0u32; supplier_ids.len()];
        let mut order = demand_ids.clone();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for d in order {
            if rng.gen_bool(0.85) {
                let open: Vec<usize> = (0..supplier_ids.len())
                    .filter(|&i| load[i] < capacity)
                    .collect();
                if let Some(&i) = open.as_slice().choose(rng) {
                    load[i] += 1;
                    edges.push(
                        MatchEdge::many_to_one(supplier_ids[i], d).map_err(SimError::Matching)?,
                    );
                }
            }
        }
        Matching::many_to_one(edges, supplier_set.clone(), demand_set.clone(), capacity)
            .map_err(SimError::Matching)
    };
    Ok((draw(rng)?, draw(rng)?))
}

struct RepOutcome {
    tau_hat: f64,
    sigma2_hat: Option<f64>,
    covered: Option<bool>,
}

/// Run the scenario: repeated randomization and estimation with
/// deterministic aggregation.
pub fn run_simulation(spec: &ScenarioSpec) -> Result<SimRun, SimError> {
    if spec.replications == 0 {
        return Err(SimError::NoReplications);
    }
    spec.params.validate()?;
    let instance = build_instance(spec)?;
    let n = instance.normalizer;
    let tau_true = instance.tau();

    let true_variance = match spec.design {
        DesignKind::Ap => {
            let mut total = 0.0;
            for (i, comp) in instance.components.iter().enumerate() {
                total += variance_exact(comp, &instance.outcomes, spec.params.p_for(i))?;
            }
            total / (n * n)
        }
        DesignKind::Naive => naive_variance(instance.ybar_t, instance.ybar_c),
    };

    let reps: Vec<Result<RepOutcome, SimError>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replication(spec, &instance, rep, tau_true))
        .collect();
    let mut tau_hats = Vec::with_capacity(reps.len());
    let mut sigma_sum = 0.0;
    let mut sigma_count = 0u64;
    let mut covered = 0u64;
    let mut covered_count = 0u64;
    for rep in reps {
        let rep = rep?;
        tau_hats.push(rep.tau_hat);
        if let Some(s) = rep.sigma2_hat {
            sigma_sum += s;
            sigma_count += 1;
        }
        if let Some(c) = rep.covered {
            covered_count += 1;
            covered += c as u64;
        }
    }

    let r = tau_hats.len() as f64;
    let mean_tau_hat = tau_hats.iter().sum::<f64>() / r;
    let empirical_variance = (tau_hats.len() >= 2).then(|| {
        tau_hats
            .iter()
            .map(|t| (t - mean_tau_hat) * (t - mean_tau_hat))
            .sum::<f64>()
            / (r - 1.0)
    });
    let (ks_statistic, normal_verdict) = if tau_hats.len() >= 100 {
        let check = normality_check(&tau_hats)?;
        (Some(check.statistic), Some(check.pass))
    } else {
        (None, None)
    };

    let report = SimReport {
        design: spec.design,
        replications: spec.replications,
        components: instance.components.len(),
        edges: instance.components.iter().map(|c| c.k()).sum(),
        normalizer: n,
        tau_true,
        mean_tau_hat,
        bias: mean_tau_hat - tau_true,
        empirical_variance,
        mean_sigma2_hat: (sigma_count > 0).then(|| sigma_sum / sigma_count as f64),
        true_variance,
        ks_statistic,
        normal_verdict,
        ci_coverage: (covered_count > 0).then(|| covered as f64 / covered_count as f64),
        note: match spec.outcomes {
            OutcomeModel::TableFromFile { .. } => "outcomes from table".into(),
            _ => "synthetic surrogate".into(),
        },
    };
    Ok(SimRun { report, tau_hats })
}

fn run_replication(
    spec: &ScenarioSpec,
    instance: &Instance,
    rep: u64,
    tau_true: f64,
) -> Result<RepOutcome, SimError> {
    match spec.design {
        DesignKind::Ap => {
            let assignment = ap_randomize_rep(&instance.components, &spec.params, rep)?;
            let mut gamma_total = 0.0;
            let mut sigma_total = 0.0;
            for (i, comp) in instance.components.iter().enumerate() {
                let p = spec.params.p_for(i);
                gamma_total += gamma_hat(comp, &assignment.w[i], &instance.outcomes, p)?;
                sigma_total += sigma2_i_hat(comp, &assignment.w[i], &instance.outcomes, p)?;
            }
            let n = instance.normalizer;
            let tau_hat = gamma_total / n;
            let sigma2_hat = sigma_total / (n * n);
            let (lo, hi) = confidence_interval(tau_hat, sigma2_hat.max(0.0), spec.alpha)?;
            Ok(RepOutcome {
                tau_hat,
                sigma2_hat: Some(sigma2_hat),
                covered: Some(lo <= tau_true && tau_true <= hi),
            })
        }
        DesignKind::Naive => {
            let tau_hat = match naive_randomize(spec.params.seed, rep) {
                NaivePick::PickT => 2.0 * instance.ybar_t,
                NaivePick::PickC => -2.0 * instance.ybar_c,
            };
            Ok(RepOutcome {
                tau_hat,
                sigma2_hat: None,
                covered: None,
            })
        }
    }
}

/// Kolmogorov–Smirnov check of standardized samples against the standard
/// normal, with Q-Q pairs for external plotting. The pass threshold is the
/// asymptotic 1% critical value 1.63 / sqrt(n).
#[derive(Debug, Clone)]
pub struct NormalityCheck {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Sorted (empirical quantile, normal quantile) pairs.
    pub qq: Vec<(f64, f64)>,
}

pub fn normality_check(samples: &[f64]) -> Result<NormalityCheck, SimError> {
    let n = samples.len();
    if n < 100 {
        return Err(SimError::TooFewSamples(n));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).expect("standardized samples are finite"));

    let normal = Normal::standard();
    let mut statistic: f64 = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let cdf = normal.cdf(zi);
        statistic = statistic
            .max(cdf - i as f64 / nf)
            .max((i + 1) as f64 / nf - cdf);
    }
    let threshold = 1.63 / nf.sqrt();
    let qq = z
        .iter()
        .enumerate()
        .map(|(i, &zi)| (zi, normal.inverse_cdf((i as f64 + 0.5) / nf)))
        .collect();
    Ok(NormalityCheck {
        statistic,
        threshold,
        pass: statistic < threshold,
        qq,
    })
}
