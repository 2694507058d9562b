//! Apriori frequent-itemset mining and association rules.
//!
//! Items are dictionary-encoded and each item keeps a vertical bitset of the
//! transactions containing it, so the support of a candidate is the popcount
//! of an intersection. Counts are exact integers; fractional supports are
//! derived from `count / total` only for presentation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest item universe the exhaustive enumerator accepts.
pub const MAX_EXHAUSTIVE_UNIVERSE: usize = 20;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("min_support must lie in (0, 1], got {0}")]
    InvalidSupport(f64),
    #[error("min_confidence must lie in (0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("at least one transaction is required")]
    NoTransactions,
    #[error("{items} distinct items exceed the exhaustive limit of {limit}")]
    UniverseTooLarge { items: usize, limit: usize },
    #[error("itemsets are not closed under subsets: {0:?} is missing")]
    NotSubsetClosed(Vec<String>),
    #[error("itemsets disagree on the transaction total")]
    MixedTotals,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub items: BTreeSet<String>,
}

impl Transaction {
    pub fn new<I, S>(id: impl Into<String>, items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            items: items.into_iter().map(Into::into).collect(),
        }
    }
}

/// A frequent itemset with its exact count over `total` transactions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ItemSet {
    /// Sorted, distinct.
    pub items: Vec<String>,
    pub count: u64,
    pub total: u64,
}

impl ItemSet {
    pub fn new(mut items: Vec<String>, count: u64, total: u64) -> Self {
        items.sort();
        items.dedup();
        Self { items, count, total }
    }

    pub fn support(&self) -> f64 {
        self.count as f64 / self.total as f64
    }

    pub fn meets(&self, min_support: f64) -> bool {
        self.count >= min_count(min_support, self.total)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn record(&self) -> ItemSetRecord {
        ItemSetRecord {
            items: self.items.clone(),
            count: self.count,
            total: self.total,
            fraction: format!("{}/{}", self.count, self.total),
            support: format!("{:.3}", self.support()),
        }
    }
}

/// Serialized form of an [`ItemSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSetRecord {
    pub items: Vec<String>,
    pub count: u64,
    pub total: u64,
    pub fraction: String,
    pub support: String,
}

impl From<ItemSetRecord> for ItemSet {
    fn from(r: ItemSetRecord) -> Self {
        ItemSet::new(r.items, r.count, r.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: Vec<String>,
    pub consequent: Vec<String>,
    /// Transactions containing antecedent and consequent.
    pub count: u64,
    pub antecedent_count: u64,
    pub total: u64,
    pub confidence: f64,
    pub support: f64,
}

impl AssociationRule {
    /// Confidence recomputed from the raw counts.
    pub fn confidence_from_counts(&self) -> f64 {
        self.count as f64 / self.antecedent_count as f64
    }
}

/// Smallest count meeting `min_support` over `total` transactions.
pub fn min_count(min_support: f64, total: u64) -> u64 {
    // The epsilon keeps products such as 0.15 * 20 from rounding up to 4.
    let raw = (min_support * total as f64 - 1e-9).ceil();
    (raw.max(1.0)) as u64
}

fn check_support(min_support: f64) -> Result<(), MiningError> {
    if min_support > 0.0 && min_support <= 1.0 {
        Ok(())
    } else {
        Err(MiningError::InvalidSupport(min_support))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct TidSet(Vec<u64>);

impl TidSet {
    fn empty(len: usize) -> Self {
        TidSet(vec![0; len.div_ceil(64)])
    }

    fn insert(&mut self, tid: usize) {
        self.0[tid / 64] |= 1 << (tid % 64);
    }

    fn and(&self, other: &TidSet) -> TidSet {
        TidSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn count(&self) -> u64 {
        self.0.iter().map(|w| w.count_ones() as u64).sum()
    }
}

/// Level-wise Apriori.
///
/// Returns every itemset of size `1..=max_k` (unbounded when `None`) whose
/// support is at least `min_support`, sorted by support descending, size
/// ascending, then items.
pub fn apriori(
    transactions: &[Transaction],
    min_support: f64,
    max_k: Option<usize>,
) -> Result<Vec<ItemSet>, MiningError> {
    check_support(min_support)?;
    if transactions.is_empty() {
        return Err(MiningError::NoTransactions);
    }
    let total = transactions.len() as u64;
    let threshold = min_count(min_support, total);
    let max_k = max_k.unwrap_or(usize::MAX);
    if max_k == 0 {
        return Ok(Vec::new());
    }

    let universe: Vec<&str> = transactions
        .iter()
        .flat_map(|t| t.items.iter().map(String::as_str))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, u32> = universe.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();

    let mut tids = vec![TidSet::empty(transactions.len()); universe.len()];
    for (tid, t) in transactions.iter().enumerate() {
        for item in &t.items {
            tids[index[item.as_str()] as usize].insert(tid);
        }
    }

    let mut level: Vec<(Vec<u32>, TidSet, u64)> = tids
        .into_iter()
        .enumerate()
        .filter_map(|(i, tid)| {
            let c = tid.count();
            (c >= threshold).then(|| (vec![i as u32], tid, c))
        })
        .collect();

    let mut found: Vec<(Vec<u32>, u64)> = level.iter().map(|(s, _, c)| (s.clone(), *c)).collect();
    let mut k = 1;
    while !level.is_empty() && k < max_k {
        let frequent: HashSet<&[u32]> = level.iter().map(|(s, _, _)| s.as_slice()).collect();
        let mut candidates: Vec<(usize, usize, Vec<u32>)> = Vec::new();
        let mut start = 0;
        while start < level.len() {
            // group of sets sharing the (k-1)-prefix
            let prefix = &level[start].0[..k - 1];
            let mut end = start + 1;
            while end < level.len() && &level[end].0[..k - 1] == prefix {
                end += 1;
            }
            for i in start..end {
                for j in i + 1..end {
                    let mut cand = level[i].0.clone();
                    cand.push(*level[j].0.last().expect("nonempty"));
                    if all_subsets_frequent(&cand, &frequent) {
                        candidates.push((i, j, cand));
                    }
                }
            }
            start = end;
        }
        let next: Vec<(Vec<u32>, TidSet, u64)> = candidates
            .into_par_iter()
            .filter_map(|(i, j, cand)| {
                let tid = level[i].1.and(&level[j].1);
                let c = tid.count();
                (c >= threshold).then_some((cand, tid, c))
            })
            .collect();
        found.extend(next.iter().map(|(s, _, c)| (s.clone(), *c)));
        level = next;
        k += 1;
    }

    let mut out: Vec<ItemSet> = found
        .into_iter()
        .map(|(ids, count)| ItemSet {
            items: ids.iter().map(|&i| universe[i as usize].to_string()).collect(),
            count,
            total,
        })
        .collect();
    sort_itemsets(&mut out);
    Ok(out)
}

fn all_subsets_frequent(cand: &[u32], frequent: &HashSet<&[u32]>) -> bool {
    // The two generating parents are frequent by construction: skip them.
    let k = cand.len();
    let mut sub = Vec::with_capacity(k - 1);
    for skip in 0..k.saturating_sub(2) {
        sub.clear();
        sub.extend(cand.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v));
        if !frequent.contains(sub.as_slice()) {
            return false;
        }
    }
    true
}

/// Support descending, size ascending, then lexicographic items.
pub fn sort_itemsets(sets: &mut [ItemSet]) {
    sets.sort_by(|a, b| {
        // supports share a denominator within one mining run, but compare
        // as rationals so mixed inputs order correctly too
        let lhs = b.count as u128 * a.total as u128;
        let rhs = a.count as u128 * b.total as u128;
        lhs.cmp(&rhs)
            .then(a.items.len().cmp(&b.items.len()))
            .then_with(|| a.items.cmp(&b.items))
    });
}

/// Exact support counts for every nonempty subset of a small item universe.
///
/// This is the exhaustive reference for [`apriori`]: all `2^U - 1` candidate
/// itemsets are counted by scanning the transactions.
pub struct ExhaustiveCounts {
    items: Vec<String>,
    counts: Vec<u32>,
    total: u64,
}

impl ExhaustiveCounts {
    pub fn new(transactions: &[Transaction], max_universe: usize) -> Result<Self, MiningError> {
        if transactions.is_empty() {
            return Err(MiningError::NoTransactions);
        }
        let items: Vec<String> = transactions
            .iter()
            .flat_map(|t| t.items.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let limit = max_universe.min(MAX_EXHAUSTIVE_UNIVERSE);
        if items.len() > limit {
            return Err(MiningError::UniverseTooLarge { items: items.len(), limit });
        }
        let masks: Vec<u32> = transactions
            .iter()
            .map(|t| {
                t.items
                    .iter()
                    .map(|it| 1u32 << items.binary_search(it).expect("item in universe"))
                    .fold(0, |a, b| a | b)
            })
            .collect();
        let n = 1usize << items.len();
        let mut counts = vec![0u32; n];
        for (mask, slot) in counts.iter_mut().enumerate().skip(1) {
            let mask = mask as u32;
            *slot = masks.iter().filter(|&&t| t & mask == mask).count() as u32;
        }
        Ok(Self {
            items,
            counts,
            total: transactions.len() as u64,
        })
    }

    pub fn universe(&self) -> &[String] {
        &self.items
    }

    pub fn frequent(&self, min_support: f64, max_k: Option<usize>) -> Result<Vec<ItemSet>, MiningError> {
        check_support(min_support)?;
        let threshold = min_count(min_support, self.total);
        let max_k = max_k.unwrap_or(usize::MAX);
        let mut out = Vec::new();
        for (mask, &count) in self.counts.iter().enumerate().skip(1) {
            if (count as u64) < threshold || (mask.count_ones() as usize) > max_k {
                continue;
            }
            let items = (0..self.items.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| self.items[b].clone())
                .collect();
            out.push(ItemSet {
                items,
                count: count as u64,
                total: self.total,
            });
        }
        sort_itemsets(&mut out);
        Ok(out)
    }
}

/// Exhaustive frequent-itemset enumeration for universes of at most
/// `max_universe` (capped at 20) distinct items.
pub fn brute_force_itemsets(
    transactions: &[Transaction],
    min_support: f64,
    max_universe: usize,
) -> Result<Vec<ItemSet>, MiningError> {
    check_support(min_support)?;
    ExhaustiveCounts::new(transactions, max_universe)?.frequent(min_support, None)
}

/// Association rules `A => S \ A` for every frequent set `S` and nonempty
/// proper subset `A` with confidence at least `min_confidence`.
///
/// Sorted by confidence descending, support descending, then antecedent and
/// consequent lexicographically.
pub fn rules(itemsets: &[ItemSet], min_confidence: f64) -> Result<Vec<AssociationRule>, MiningError> {
    if !(min_confidence > 0.0 && min_confidence <= 1.0) {
        return Err(MiningError::InvalidConfidence(min_confidence));
    }
    let Some(first) = itemsets.first() else {
        return Ok(Vec::new());
    };
    let total = first.total;
    if itemsets.iter().any(|s| s.total != total) {
        return Err(MiningError::MixedTotals);
    }
    let counts: HashMap<&[String], u64> = itemsets.iter().map(|s| (s.items.as_slice(), s.count)).collect();

    let mut out = Vec::new();
    for set in itemsets.iter().filter(|s| s.items.len() >= 2) {
        let n = set.items.len();
        if n > 30 {
            // 2^n subsets; Apriori output at this size is not realistic input
            return Err(MiningError::NotSubsetClosed(set.items.clone()));
        }
        for mask in 1u64..(1u64 << n) - 1 {
            let (antecedent, consequent): (Vec<_>, Vec<_>) = set
                .items
                .iter()
                .enumerate()
                .partition(|(i, _)| mask & (1 << i) != 0);
            let antecedent: Vec<String> = antecedent.into_iter().map(|(_, s)| s.clone()).collect();
            let consequent: Vec<String> = consequent.into_iter().map(|(_, s)| s.clone()).collect();
            let a_count = *counts
                .get(antecedent.as_slice())
                .ok_or_else(|| MiningError::NotSubsetClosed(antecedent.clone()))?;
            let confidence = set.count as f64 / a_count as f64;
            if confidence + 1e-12 < min_confidence {
                continue;
            }
            out.push(AssociationRule {
                antecedent,
                consequent,
                count: set.count,
                antecedent_count: a_count,
                total,
                confidence,
                support: set.count as f64 / total as f64,
            });
        }
    }
    out.sort_by(|a, b| {
        let lhs = b.count as u128 * a.antecedent_count as u128;
        let rhs = a.count as u128 * b.antecedent_count as u128;
        lhs.cmp(&rhs)
            .then(b.count.cmp(&a.count))
            .then_with(|| a.antecedent.cmp(&b.antecedent))
            .then_with(|| a.consequent.cmp(&b.consequent))
    });
    Ok(out)
}

/// One transaction per user: the accounts that user follows.
///
/// Users that follow nobody produce an empty transaction.
pub fn followed_accounts_transactions<S: AsRef<str>>(
    users: &[S],
    follow_edges: &[(String, String)],
) -> Vec<Transaction> {
    let mut follows: HashMap<&str, BTreeSet<String>> = HashMap::new();
    for (follower, followed) in follow_edges {
        follows.entry(follower.as_str()).or_default().insert(followed.clone());
    }
    users
        .iter()
        .map(|u| Transaction {
            id: u.as_ref().to_string(),
            items: follows.remove(u.as_ref()).unwrap_or_default(),
        })
        .collect()
}

/// Reads one transaction per line, items separated by commas.
///
/// Blank lines are empty transactions. Transaction ids are 1-based line numbers.
pub fn read_transactions_csv<R: BufRead>(reader: R) -> Result<Vec<Transaction>, MiningError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let items = line
            .split(',')
            .map(|s| s.trim().trim_matches('"').trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        out.push(Transaction::new((idx + 1).to_string(), items));
    }
    Ok(out)
}

pub fn read_transactions_jsonl<R: BufRead>(reader: R) -> Result<Vec<Transaction>, MiningError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transaction = serde_json::from_str(&line).map_err(|e| MiningError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_itemsets_jsonl<W: Write>(mut w: W, sets: &[ItemSet]) -> std::io::Result<()> {
    for s in sets {
        serde_json::to_writer(&mut w, &s.record())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_rules_jsonl<W: Write>(mut w: W, rules: &[AssociationRule]) -> std::io::Result<()> {
    for r in rules {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Count of transactions containing each item, keyed by item.
pub fn item_frequencies(transactions: &[Transaction]) -> BTreeMap<String, u64> {
    let mut freq = BTreeMap::new();
    for t in transactions {
        for item in &t.items {
            *freq.entry(item.clone()).or_insert(0) += 1;
        }
    }
    freq
}
