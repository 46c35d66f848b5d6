//! The alternating-path randomized design and the naive baseline.
//!
//! Randomization proceeds sequentially along each component: the first edge
//! is selected with probability p/(1+p); each later edge is selected with
//! probability p when its predecessor was skipped and never otherwise. On a
//! cycle the final edge is deterministic — selected exactly when both the
//! first and the second-to-last edges were skipped. Components randomize
//! independently.
//!
//! Reproducibility contract: draws use ChaCha12 keyed by
//! (seed, replication, component index, domain tag), so a realization is
//! bit-identical across runs, platforms, and any parallel execution order.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::decompose::AlternatingComponent;
use crate::error::DesignError;

/// Domain tags keep the randomization, the naive coin, and synthetic outcome
/// draws on disjoint streams.
#[derive(Debug, Clone, Copy)]
pub enum StreamDomain {
    ApComponent = 0,
    NaiveCoin = 1,
    Outcomes = 2,
    Instance = 3,
}

/// Deterministic substream for (seed, replication, stream index, domain).
pub fn substream(seed: u64, replication: u64, index: u64, domain: StreamDomain) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&(domain as u64).to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Design parameters: the shared conditional probability p, optional
/// per-component overrides, and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub p: f64,
    #[serde(
        default,
        skip_serializing_if = "BTreeMap::is_empty",
        deserialize_with = "deserialize_index_map"
    )]
    pub overrides: BTreeMap<usize, f64>,
    pub seed: u64,
}

/// Map of component index to p, accepting integer or string keys (JSON
/// object keys and TOML table keys are strings).
pub fn deserialize_index_map<'de, D>(deserializer: D) -> Result<BTreeMap<usize, f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    struct MapVisitor;

    impl<'de> serde::de::Visitor<'de> for MapVisitor {
        type Value = BTreeMap<usize, f64>;

        fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.write_str("a map from component index to p")
        }

        fn visit_map<A: serde::de::MapAccess<'de>>(
            self,
            mut access: A,
        ) -> Result<Self::Value, A::Error> {
            #[derive(Deserialize)]
            #[serde(untagged)]
            enum Key {
                Int(usize),
                Str(String),
            }
            let mut out = BTreeMap::new();
            while let Some((key, value)) = access.next_entry::<Key, f64>()? {
                let index = match key {
                    Key::Int(i) => i,
                    Key::Str(s) => s
                        .parse()
                        .map_err(|_| serde::de::Error::custom(format!("bad index \"{s}\"")))?,
                };
                out.insert(index, value);
            }
            Ok(out)
        }
    }

    deserializer.deserialize_map(MapVisitor)
}

impl DesignParams {
    pub fn new(p: f64, seed: u64) -> Result<Self, DesignError> {
        check_p(p)?;
        Ok(DesignParams {
            p,
            overrides: BTreeMap::new(),
            seed,
        })
    }

    pub fn with_overrides(
        p: f64,
        seed: u64,
        overrides: BTreeMap<usize, f64>,
    ) -> Result<Self, DesignError> {
        check_p(p)?;
        for &v in overrides.values() {
            check_p(v)?;
        }
        Ok(DesignParams { p, overrides, seed })
    }

    /// Effective p for component `index`.
    pub fn p_for(&self, index: usize) -> f64 {
        self.overrides.get(&index).copied().unwrap_or(self.p)
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        check_p(self.p)?;
        for &v in self.overrides.values() {
            check_p(v)?;
        }
        Ok(())
    }
}

pub(crate) fn check_p(p: f64) -> Result<(), DesignError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(DesignError::InvalidP(p));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Ap,
    Naive,
}

/// Per-edge binary selections produced by a design draw, together with the
/// parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRealization {
    pub design: DesignKind,
    pub params: DesignParams,
    /// `w[i][j]` selects edge j of component i.
    pub w: Vec<Vec<u8>>,
}

/// Draw one realization of the AP design over `components` (replication 0).
pub fn ap_randomize(
    components: &[AlternatingComponent],
    params: &DesignParams,
) -> Result<AssignmentRealization, DesignError> {
    ap_randomize_rep(components, params, 0)
}

/// Draw the `replication`-th realization. Component substreams make the
/// result independent of iteration or thread order.
pub fn ap_randomize_rep(
    components: &[AlternatingComponent],
    params: &DesignParams,
    replication: u64,
) -> Result<AssignmentRealization, DesignError> {
    params.validate()?;
    let mut w = Vec::with_capacity(components.len());
    for (i, comp) in components.iter().enumerate() {
        let mut rng = substream(
            params.seed,
            replication,
            i as u64,
            StreamDomain::ApComponent,
        );
        w.push(draw_component(comp, params.p_for(i), &mut rng));
    }
    Ok(AssignmentRealization {
        design: DesignKind::Ap,
        params: params.clone(),
        w,
    })
}

fn draw_component(comp: &AlternatingComponent, p: f64, rng: &mut ChaCha12Rng) -> Vec<u8> {
    let k = comp.k();
    let mut w = vec![0u8; k];
    w[0] = rng.gen_bool(p / (1.0 + p)) as u8;
    let random_until = if comp.is_cycle() { k - 1 } else { k };
    for j in 1..random_until {
        if w[j - 1] == 0 {
            w[j] = rng.gen_bool(p) as u8;
        }
    }
    if comp.is_cycle() {
        w[k - 1] = (w[0] == 0 && w[k - 2] == 0) as u8;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NaivePick {
    PickT,
    PickC,
}

/// The naive baseline: adopt the whole treatment matching or the whole
/// control matching with equal probability.
pub fn naive_randomize(seed: u64, replication: u64) -> NaivePick {
    let mut rng = substream(seed, replication, 0, StreamDomain::NaiveCoin);
    if rng.gen_bool(0.5) {
        NaivePick::PickT
    } else {
        NaivePick::PickC
    }
}

/// Unconditional selection probability of edge `j` (1-based) of a component.
/// Only the final edge of a cycle differs from p/(1+p).
pub fn unconditional_prob(
    comp: &AlternatingComponent,
    j: usize,
    p: f64,
) -> Result<f64, DesignError> {
    check_p(p)?;
    let k = comp.k();
    if j < 1 || j > k {
        return Err(DesignError::IndexOutOfRange { index: j, k });
    }
    if comp.is_cycle() && j == k {
        Ok((1.0 - neg_pow(p, j - 1)) / ((1.0 + p) * (1.0 + p)))
    } else {
        Ok(p / (1.0 + p))
    }
}

/// Joint selection probability of edges `j < q` of one component.
pub fn joint_prob(
    comp: &AlternatingComponent,
    j: usize,
    q: usize,
    p: f64,
) -> Result<f64, DesignError> {
    check_p(p)?;
    let k = comp.k();
    if j < 1 || q <= j || q > k {
        return Err(DesignError::IndexOutOfRange { index: q, k });
    }
    if comp.is_cycle() && q == k {
        let num = p * (1.0 - neg_pow(p, j - 1)) * (1.0 - neg_pow(p, k - 1 - j));
        Ok(num / (1.0 + p).powi(3))
    } else {
        Ok((p * p - neg_pow(p, q - j + 1)) / ((1.0 + p) * (1.0 + p)))
    }
}

/// (-p)^e without going through a signed base.
pub(crate) fn neg_pow(p: f64, e: usize) -> f64 {
    let mag = p.powi(e as i32);
    if e % 2 == 0 {
        mag
    } else {
        -mag
    }
}
