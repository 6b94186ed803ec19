//! m-connectivity, m-profiles and the τ sparsity counts.
//!
//! For an index vector `𝐢 = (i₁, …, i_q)` two entries are m-connected when a
//! chain of entries of `𝐢` links them with every hop at distance at most `m`.
//! The m-profile is the multiset of class sizes (counting duplicates), sorted
//! in descending order. `τ^m_{q₁,…,q_S}` counts the vectors of `𝓘ₙ^q` with a
//! given profile, so the counts over all profiles of length-`q` vectors sum to
//! `n^q`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index_space::IndexSpace;

/// Default guard for [`tau_exact`].
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;

/// Disjoint-set forest with path compression and union by rank.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i;
        }
        self.rank.fill(0);
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] = self.rank[a].saturating_add(1);
        }
    }
}

/// A vector of node ids; duplicates allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexVector(Vec<usize>);

impl IndexVector {
    pub fn new(space: &IndexSpace, entries: Vec<usize>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("index vector must have at least one entry"));
        }
        if let Some(&bad) = entries.iter().find(|&&i| i >= space.len()) {
            return Err(invalid(format!(
                "node {bad} is out of range 0..{}",
                space.len()
            )));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Class sizes `Θ₁ ≥ Θ₂ ≥ … ≥ Θ_S > 0`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MProfile(Vec<usize>);

impl MProfile {
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(invalid("profile parts must be positive and non-empty"));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self(parts))
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    /// `q = ΣΘ_s`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// `S`, the number of classes.
    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// All profiles of length-`q` vectors, i.e. the integer partitions of `q`.
    pub fn all_of_order(q: usize) -> Vec<MProfile> {
        fn rec(rest: usize, max: usize, acc: &mut Vec<usize>, out: &mut Vec<MProfile>) {
            if rest == 0 {
                out.push(MProfile(acc.clone()));
                return;
            }
            for part in (1..=rest.min(max)).rev() {
                acc.push(part);
                rec(rest - part, part, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        if q > 0 {
            rec(q, q, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Constant of the neighbourhood-size bound `τ ≤ C n^S η^{q-S}`.
    ///
    /// `C = q! / (∏ Θ_s! ∏_k r_k!) · ∏ Θ_s^{Θ_s - 2}`: the first factor counts
    /// set partitions of the `q` slots into unlabelled blocks of the given
    /// sizes (`r_k` is the multiplicity of each distinct size), the second
    /// counts labelled spanning trees per block (Cayley). Every m-connected
    /// block admits a spanning tree whose edges join entries within distance
    /// `m`, so rooting each tree at its first slot leaves `n` choices for the
    /// root and at most `η_m` for every other slot.
    pub fn lemma_constant(&self) -> f64 {
        let q = self.order();
        let mut log_c = ln_factorial(q);
        for &part in &self.0 {
            log_c -= ln_factorial(part);
            if part >= 3 {
                log_c += (part as f64 - 2.0) * (part as f64).ln();
            }
        }
        let mut i = 0;
        while i < self.0.len() {
            let run = self.0[i..].iter().take_while(|&&p| p == self.0[i]).count();
            log_c -= ln_factorial(run);
            i += run;
        }
        log_c.exp().round()
    }
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|v| (v as f64).ln()).sum()
}

impl fmt::Display for MProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for MProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad profile `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        MProfile::new(parts)
    }
}

impl TryFrom<String> for MProfile {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MProfile> for String {
    fn from(p: MProfile) -> String {
        p.to_string()
    }
}

/// Profile counts for vectors of length `q` at radius `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauTable {
    pub m: f64,
    pub q: usize,
    pub entries: BTreeMap<MProfile, f64>,
    /// Exact enumeration (`true`) or the neighbourhood-size bound.
    pub exact: bool,
}

impl TauTable {
    /// Count for `profile`, zero when absent.
    pub fn get(&self, profile: &MProfile) -> f64 {
        self.entries.get(profile).copied().unwrap_or(0.0)
    }

    pub fn get_parts(&self, parts: &[usize]) -> f64 {
        MProfile::new(parts.to_vec())
            .map(|p| self.get(&p))
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

/// Result of [`m_profile`]: the classes (as sets of distinct nodes, each
/// sorted) and the profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProfileResult {
    pub classes: Vec<Vec<usize>>,
    pub profile: MProfile,
}

/// Quotient of the entries of `ivec` by m-connectedness.
pub fn m_profile(space: &IndexSpace, ivec: &IndexVector, m: f64) -> ProfileResult {
    let entries = ivec.entries();
    let q = entries.len();
    let mut sets = DisjointSet::new(q);
    for a in 0..q {
        for b in a + 1..q {
            if space.distance_unchecked(entries[a], entries[b]).within(m) {
                sets.union(a, b);
            }
        }
    }
    let mut by_root: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    for (slot, &node) in entries.iter().enumerate() {
        let class = by_root.entry(sets.find(slot)).or_default();
        class.0 += 1;
        class.1.push(node);
    }
    let mut counts = Vec::with_capacity(by_root.len());
    let mut classes = Vec::with_capacity(by_root.len());
    for (_, (count, mut nodes)) in by_root {
        nodes.sort_unstable();
        nodes.dedup();
        counts.push(count);
        classes.push(nodes);
    }
    classes.sort();
    ProfileResult {
        classes,
        profile: MProfile::new(counts).expect("non-empty index vector"),
    }
}

/// `true` iff every other entry of `ivec` is farther than `m` from the entry
/// at `position`.
pub fn is_m_free(space: &IndexSpace, ivec: &IndexVector, position: usize, m: f64) -> Result<bool> {
    let entries = ivec.entries();
    let Some(&target) = entries.get(position) else {
        return Err(invalid(format!(
            "position {position} is out of range for a vector of length {}",
            entries.len()
        )));
    };
    Ok(entries
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != position)
        .all(|(_, &other)| !space.distance_unchecked(target, other).within(m)))
}

/// Exact `τ^m` for every profile by enumerating `𝓘ₙ^q`, guarded by
/// [`DEFAULT_ENUMERATION_BUDGET`].
pub fn tau_exact(space: &IndexSpace, q: usize, m: f64) -> Result<TauTable> {
    tau_exact_with_budget(space, q, m, DEFAULT_ENUMERATION_BUDGET)
}

pub fn tau_exact_with_budget(
    space: &IndexSpace,
    q: usize,
    m: f64,
    budget: u128,
) -> Result<TauTable> {
    if q == 0 {
        return Err(invalid("q must be at least 1"));
    }
    if !(m >= 0.0) {
        return Err(invalid(format!("radius m = {m} must be non-negative")));
    }
    let n = space.len();
    let required = (n as u128).checked_pow(q as u32).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded {
            required,
            limit: budget,
        });
    }
    let within = space.within_table(m);

    // Split on the first entry; each worker enumerates the remaining q-1
    // entries as an odometer. Integer counts merge exactly in any order.
    let merged = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
            let mut ivec = vec![0usize; q];
            ivec[0] = first;
            let mut sets = DisjointSet::new(q);
            loop {
                *counts
                    .entry(profile_of(&ivec, n, &within, &mut sets))
                    .or_insert(0) += 1;
                // advance odometer over positions 1..q
                let mut pos = q;
                loop {
                    pos -= 1;
                    if pos == 0 {
                        return counts;
                    }
                    ivec[pos] += 1;
                    if ivec[pos] < n {
                        break;
                    }
                    ivec[pos] = 0;
                }
            }
        })
        .reduce(BTreeMap::new, |mut acc, part| {
            for (k, v) in part {
                *acc.entry(k).or_insert(0) += v;
            }
            acc
        });

    let entries = merged
        .into_iter()
        .map(|(parts, count)| (MProfile(parts), count as f64))
        .collect();
    Ok(TauTable {
        m,
        q,
        entries,
        exact: true,
    })
}

fn profile_of(ivec: &[usize], n: usize, within: &[bool], sets: &mut DisjointSet) -> Vec<usize> {
    let q = ivec.len();
    sets.reset();
    for a in 0..q {
        for b in a + 1..q {
            if within[ivec[a] * n + ivec[b]] {
                sets.union(a, b);
            }
        }
    }
    let mut sizes = vec![0usize; q];
    for slot in 0..q {
        sizes[sets.find(slot)] += 1;
    }
    sizes.retain(|&s| s > 0);
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Upper bound `C · n^S · η_m^{q-S}` for a single profile; see
/// [`MProfile::lemma_constant`] for `C`.
pub fn tau_bound(space: &IndexSpace, profile: &MProfile, m: f64) -> Result<f64> {
    let eta = space.eta_max(m)?;
    Ok(tau_bound_from(space.len(), eta, profile))
}

/// Same bound from `n` and `η_m` directly.
pub fn tau_bound_from(n: usize, eta: usize, profile: &MProfile) -> f64 {
    let s = profile.classes() as i32;
    let q = profile.order() as i32;
    profile.lemma_constant() * (n as f64).powi(s) * (eta as f64).powi(q - s)
}

/// Bound for every profile of order `q`.
pub fn tau_bound_table(space: &IndexSpace, q: usize, m: f64) -> Result<TauTable> {
    if q == 0 {
        return Err(invalid("q must be at least 1"));
    }
    let eta = space.eta_max(m)?;
    let entries = MProfile::all_of_order(q)
        .into_iter()
        .map(|p| {
            let bound = tau_bound_from(space.len(), eta, &p);
            (p, bound)
        })
        .collect();
    Ok(TauTable {
        m,
        q,
        entries,
        exact: false,
    })
}
