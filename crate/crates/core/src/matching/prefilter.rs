use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use super::{Closure, Effect, MatchError, PreferenceSet};
use crate::signal::ConsentRequest;
use crate::taxonomy::Registry;

/// Plain bloom filter with Kirsch–Mitzenmacher double hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: usize,
    k: u32,
    count: usize,
}

impl BloomFilter {
    pub fn new(m: usize, k: u32) -> Self {
        BloomFilter {
            bits: vec![0; m.div_ceil(64)],
            m,
            k: k.max(1),
            count: 0,
        }
    }

    /// `m = ceil(-n ln p / ln² 2)`, `k = round(m/n ln 2)`, at least one hash.
    pub fn optimal_params(n: usize, fpr: f64) -> (usize, u32) {
        if n == 0 {
            return (0, 1);
        }
        let ln2 = std::f64::consts::LN_2;
        let m = (-(n as f64) * fpr.ln() / (ln2 * ln2)).ceil() as usize;
        let k = ((m as f64 / n as f64) * ln2).round() as u32;
        (m, k.max(1))
    }

    fn indexes(&self, key: &str) -> impl Iterator<Item = usize> + '_ {
        let h1 = seeded(0, key);
        let h2 = seeded(1, key) | 1;
        let m = self.m as u64;
        (0..u64::from(self.k)).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    pub fn insert(&mut self, key: &str) {
        if self.m == 0 {
            return;
        }
        let idx: Vec<usize> = self.indexes(key).collect();
        for i in idx {
            self.bits[i / 64] |= 1 << (i % 64);
        }
        self.count += 1;
    }

    pub fn contains(&self, key: &str) -> bool {
        self.m != 0
            && self
                .indexes(key)
                .all(|i| self.bits[i / 64] & (1 << (i % 64)) != 0)
    }

    pub fn bit_count(&self) -> usize {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    /// Number of insertions made.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

fn seeded(seed: u64, key: &str) -> u64 {
    let mut h = DefaultHasher::new();
    seed.hash(&mut h);
    key.hash(&mut h);
    h.finish()
}

/// One filter per rule effect, keyed by `"<registry_id>:<concept id>"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefilterPair {
    pub permit_filter: BloomFilter,
    pub prohibit_filter: BloomFilter,
    /// `(m, k)` shared by both filters.
    pub params: (usize, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PrefilterResult {
    NoRuleCanApply,
    MaybeApplies,
}

/// Both filters are sized for the number of distinct rule targets.
pub fn build_prefilter(
    prefs: &PreferenceSet,
    target_fpr: f64,
) -> Result<PrefilterPair, MatchError> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(MatchError::InvalidRate(target_fpr));
    }
    let distinct: BTreeSet<String> = prefs.rules.iter().map(|r| r.target.key()).collect();
    let (m, k) = BloomFilter::optimal_params(distinct.len(), target_fpr);
    let mut permit_filter = BloomFilter::new(m, k);
    let mut prohibit_filter = BloomFilter::new(m, k);
    for r in &prefs.rules {
        match r.effect {
            Effect::Permit => permit_filter.insert(&r.target.key()),
            Effect::Prohibit => prohibit_filter.insert(&r.target.key()),
        }
    }
    Ok(PrefilterPair {
        permit_filter,
        prohibit_filter,
        params: (m, k),
    })
}

/// Probe every node of the request closure, including concepts reached
/// through registry mappings, so that cross-vocabulary rules are never
/// filtered out. An unresolvable request has nothing to match and yields
/// `NoRuleCanApply`.
pub fn prefilter_check(
    pair: &PrefilterPair,
    request: &ConsentRequest,
    registry: &Registry,
) -> PrefilterResult {
    if pair.permit_filter.is_empty() && pair.prohibit_filter.is_empty() {
        return PrefilterResult::NoRuleCanApply;
    }
    let Ok(closure) = Closure::of_request(registry, request) else {
        return PrefilterResult::NoRuleCanApply;
    };
    let hit = closure.entries().into_iter().any(|(c, _)| {
        let key = c.key();
        pair.permit_filter.contains(&key) || pair.prohibit_filter.contains(&key)
    });
    if hit {
        PrefilterResult::MaybeApplies
    } else {
        PrefilterResult::NoRuleCanApply
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::PreferenceRule;

    #[test]
    fn sizing_formula() {
        assert_eq!(BloomFilter::optimal_params(1000, 0.01), (9586, 7));
        let ln2 = std::f64::consts::LN_2;
        for (n, p) in [(1usize, 0.5f64), (10, 0.1), (250, 0.001), (77, 0.03)] {
            let m = (-(n as f64) * p.ln() / ln2.powi(2)).ceil() as usize;
            let k = ((m as f64 / n as f64) * ln2).round().max(1.0) as u32;
            assert_eq!(BloomFilter::optimal_params(n, p), (m, k));
        }
    }

    #[test]
    fn empty_prefs_probe_negative() {
        let pair = build_prefilter(&PreferenceSet::default(), 0.01).unwrap();
        assert_eq!(pair.params.0, 0);
        assert!(!pair.permit_filter.contains("2:Marketing"));
        assert!(!pair.prohibit_filter.contains(""));
    }

    #[test]
    fn inserted_targets_probe_positive() {
        let rules = (0..300)
            .map(|i| {
                if i % 3 == 0 {
                    PreferenceRule::permit(2, &format!("c{i}"))
                } else {
                    PreferenceRule::prohibit(7, &format!("c{i}"))
                }
            })
            .collect();
        let pair = build_prefilter(&PreferenceSet::new(rules), 0.01).unwrap();
        for i in 0..300 {
            if i % 3 == 0 {
                assert!(pair.permit_filter.contains(&format!("2:c{i}")));
            } else {
                assert!(pair.prohibit_filter.contains(&format!("7:c{i}")));
            }
        }
    }

    #[test]
    fn rate_out_of_range() {
        for p in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(build_prefilter(&PreferenceSet::default(), p).is_err());
        }
    }
}
