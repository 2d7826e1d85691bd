//! Candidate ranking with median-rank ties, hit ratio and reciprocal rank.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PairInstance;

/// The top-n cutoffs reported for hit ratio.
pub const HR_CUTOFFS: [usize; 5] = [5, 10, 15, 20, 30];

/// Ranks for `scores` (higher is better), aligned with the input order.
///
/// A tie group of size `g` occupying positions `p..p+g-1` gets rank
/// `(2p + g - 1) / 2` for every member. Ties are exact float equality.
pub fn assign_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let p = (start + 1) as f64;
        let g = (end - start) as f64;
        let rank = (2.0 * p + g - 1.0) / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub target_name: String,
    pub score: f64,
    pub rank: f64,
}

/// All candidates for one source, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub source_name: String,
    pub entries: Vec<RankedEntry>,
    pub gold_targets: BTreeSet<String>,
}

impl RankedList {
    pub fn new(source_name: impl Into<String>, candidates: Vec<(String, f64)>, gold_targets: BTreeSet<String>) -> Self {
        let scores: Vec<f64> = candidates.iter().map(|c| c.1).collect();
        let ranks = assign_ranks(&scores);
        let mut entries: Vec<RankedEntry> = candidates
            .into_iter()
            .zip(ranks)
            .map(|((target_name, score), rank)| RankedEntry { target_name, score, rank })
            .collect();
        entries.sort_by(|a, b| a.rank.total_cmp(&b.rank).then_with(|| a.target_name.cmp(&b.target_name)));
        RankedList { source_name: source_name.into(), entries, gold_targets }
    }

    /// Smallest assigned rank over the gold targets present in the list.
    pub fn best_gold_rank(&self) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| self.gold_targets.contains(&e.target_name))
            .map(|e| e.rank)
            .min_by(f64::total_cmp)
    }

    pub fn top(&self, n: usize) -> &[RankedEntry] {
        &self.entries[..n.min(self.entries.len())]
    }
}

pub fn reciprocal_rank(list: &RankedList) -> Result<f64> {
    list.best_gold_rank().map(|r| 1.0 / r).ok_or_else(|| Error::GoldMissing(list.source_name.clone()))
}

/// Fraction of sources whose best gold rank is at most `n`. Sources with no
/// gold target in their list count as misses.
pub fn hit_ratio(lists: &[RankedList], n: usize) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    let hits = lists.iter().filter(|l| l.best_gold_rank().is_some_and(|r| r <= n as f64)).count();
    hits as f64 / lists.len() as f64
}

/// Mean reciprocal rank; a source with no gold target in its list
/// contributes 0.
pub fn mrr(lists: &[RankedList]) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    lists.iter().map(|l| reciprocal_rank(l).unwrap_or(0.0)).sum::<f64>() / lists.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hr: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub per_source_rr: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn from_lists(lists: &[RankedList]) -> Self {
        MetricReport {
            hr: HR_CUTOFFS.iter().map(|&n| (n, hit_ratio(lists, n))).collect(),
            mrr: mrr(lists),
            per_source_rr: lists.iter().map(|l| (l.source_name.clone(), reciprocal_rank(l).unwrap_or(0.0))).collect(),
        }
    }

    pub fn hr_at(&self, n: usize) -> f64 {
        self.hr.get(&n).copied().unwrap_or(f64::NAN)
    }

    /// Looks up a metric by display name: `HR-5` ... `HR-30` or `MRR`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        if name.eq_ignore_ascii_case("mrr") {
            return Some(self.mrr);
        }
        let n: usize = name.strip_prefix("HR-").or_else(|| name.strip_prefix("hr-"))?.parse().ok()?;
        self.hr.get(&n).copied()
    }
}

/// Metric names in report order.
pub fn metric_names() -> Vec<String> {
    let mut names: Vec<String> = HR_CUTOFFS.iter().rev().map(|n| format!("HR-{n}")).collect();
    names.push("MRR".into());
    names
}

/// Groups scored pairs into one ranked list per source, in order of first
/// appearance. Gold targets come from the pairs' gold flags.
pub fn lists_from_scores(pairs: &[PairInstance], scores: &[f64]) -> Result<Vec<RankedList>> {
    if pairs.len() != scores.len() {
        return Err(Error::LengthMismatch(pairs.len(), scores.len()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, (Vec<(String, f64)>, BTreeSet<String>)> = HashMap::new();
    for (p, &score) in pairs.iter().zip(scores) {
        let g = groups.entry(&p.source_name).or_insert_with(|| {
            order.push(&p.source_name);
            Default::default()
        });
        g.0.push((p.target_name.clone(), score));
        if p.gold {
            g.1.insert(p.target_name.clone());
        }
    }
    Ok(order
        .into_iter()
        .map(|s| {
            let (cands, gold) = groups.remove(s).unwrap_or_default();
            RankedList::new(s, cands, gold)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn list(scores: &[f64], gold: &[usize]) -> RankedList {
        RankedList::new(
            "src",
            scores.iter().enumerate().map(|(i, &s)| (format!("t{i:03}"), s)).collect(),
            gold.iter().map(|i| format!("t{i:03}")).collect(),
        )
    }

    // Counting reference: rank = #strictly better + (#equal + 1) / 2.
    fn brute_rank(scores: &[f64], i: usize) -> f64 {
        let better = scores.iter().filter(|&&s| s > scores[i]).count() as f64;
        let equal = scores.iter().filter(|&&s| s == scores[i]).count() as f64;
        better + (equal + 1.0) / 2.0
    }

    #[test]
    fn rank_examples() {
        assert_eq!(assign_ranks(&[0.9, 0.8, 0.7]), vec![1.0, 2.0, 3.0]);
        assert_eq!(assign_ranks(&[0.9, 0.8, 0.7, 0.5, 0.5, 0.5, 0.1]), vec![1.0, 2.0, 3.0, 5.0, 5.0, 5.0, 7.0]);
        assert_eq!(assign_ranks(&[0.4, 0.4, 0.1]), vec![1.5, 1.5, 3.0]);
        assert!(assign_ranks(&[]).is_empty());
    }

    #[test]
    fn rr_examples() {
        assert_eq!(reciprocal_rank(&list(&[0.9, 0.1], &[0])).unwrap(), 1.0);
        assert_eq!(reciprocal_rank(&list(&[0.9, 0.8, 0.7, 0.6], &[3])).unwrap(), 0.25);
        // gold at ranks 5 and 2 -> smallest wins
        assert_eq!(reciprocal_rank(&list(&[0.9, 0.8, 0.7, 0.6, 0.5], &[4, 1])).unwrap(), 0.5);
        // three-way tie at positions 4-6
        let l = list(&[0.9, 0.8, 0.7, 0.5, 0.5, 0.5], &[4]);
        assert_eq!(reciprocal_rank(&l).unwrap(), 0.2);
        assert!(matches!(reciprocal_rank(&list(&[0.9], &[])), Err(Error::GoldMissing(_))));
    }

    #[test]
    fn hr_examples() {
        let perfect = vec![list(&[0.9, 0.1], &[0]), list(&[0.9, 0.1], &[0])];
        assert_eq!(hit_ratio(&perfect, 5), 1.0);
        assert_eq!(mrr(&perfect), 1.0);

        let mut scores: Vec<f64> = (0..50).map(|i| 1.0 - i as f64 / 100.0).collect();
        let a = list(&scores, &[2]);
        let b = list(&scores, &[39]);
        assert_eq!(hit_ratio(&[a, b], 30), 0.5);

        // tie group over positions 29-31 has rank 30
        scores[29] = scores[28];
        scores[30] = scores[28];
        let l = list(&scores, &[30]);
        assert_eq!(l.best_gold_rank(), Some(30.0));
        assert_eq!(hit_ratio(&[l], 30), 1.0);
    }

    #[test]
    fn mrr_examples() {
        let mk = |r: usize| {
            let scores: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
            list(&scores, &[r - 1])
        };
        let lists = vec![mk(1), mk(2), mk(4)];
        assert!((mrr(&lists) - 0.58333).abs() < 1e-5);
        assert!((mrr(&lists) - 1.75 / 3.0).abs() < 1e-9);
        assert_eq!(mrr(&lists[1..2]), 0.5);
    }

    #[test]
    fn report_lookup() {
        let r = MetricReport::from_lists(&[list(&[0.9, 0.1], &[1])]);
        assert_eq!(r.metric("MRR"), Some(0.5));
        assert_eq!(r.metric("HR-5"), Some(1.0));
        assert_eq!(r.metric("HR-7"), None);
        assert_eq!(metric_names(), ["HR-30", "HR-20", "HR-15", "HR-10", "HR-5", "MRR"]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let n_sources = rng.random_range(1..20);
            let n_targets = rng.random_range(1..120);
            let mut lists = Vec::new();
            let mut brute_best = Vec::new();
            for _ in 0..n_sources {
                // coarse grid forces tie groups
                let levels = rng.random_range(1..12);
                let scores: Vec<f64> = (0..n_targets).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
                let n_gold = rng.random_range(1..=n_targets.min(3));
                let gold: Vec<usize> = (0..n_gold).map(|_| rng.random_range(0..n_targets)).collect();
                brute_best.push(gold.iter().map(|&g| brute_rank(&scores, g)).fold(f64::INFINITY, f64::min));
                lists.push(list(&scores, &gold));
            }
            for (l, &b) in lists.iter().zip(&brute_best) {
                assert_eq!(l.best_gold_rank().unwrap(), b);
            }
            for n in HR_CUTOFFS {
                let expect = brute_best.iter().filter(|&&r| r <= n as f64).count() as f64 / n_sources as f64;
                assert!((hit_ratio(&lists, n) - expect).abs() <= 1e-12);
            }
            let expect = brute_best.iter().map(|r| 1.0 / r).sum::<f64>() / n_sources as f64;
            assert!((mrr(&lists) - expect).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn ranks_invariants(scores in proptest::collection::vec(0u8..6, 1..40)) {
            let s: Vec<f64> = scores.iter().map(|&x| f64::from(x)).collect();
            let ranks = assign_ranks(&s);
            let n = s.len() as f64;
            prop_assert!((ranks.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
            prop_assert!(ranks.iter().all(|&r| r >= 1.0 && r <= n));
            for i in 0..s.len() {
                prop_assert_eq!(ranks[i], brute_rank(&s, i));
            }
        }

        #[test]
        fn ranks_permutation_invariant(scores in proptest::collection::vec(0u8..4, 1..30), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let s: Vec<f64> = scores.iter().map(|&x| f64::from(x)).collect();
            let base = assign_ranks(&s);
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let r = assign_ranks(&shuffled);
            for (k, &i) in idx.iter().enumerate() {
                prop_assert_eq!(r[k], base[i]);
            }
        }

        #[test]
        fn monotone_transform_invariance(scores in proptest::collection::vec(0u8..8, 2..30), g in 0usize..30) {
            let g = g % scores.len();
            let s: Vec<f64> = scores.iter().map(|&x| f64::from(x) / 8.0).collect();
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            let (a, b) = (list(&s, &[g]), list(&t, &[g]));
            prop_assert_eq!(a.best_gold_rank(), b.best_gold_rank());
            let (ma, mb) = (MetricReport::from_lists(&[a]), MetricReport::from_lists(&[b]));
            prop_assert_eq!(ma.hr, mb.hr);
            prop_assert_eq!(ma.mrr, mb.mrr);
            prop_assert!(ma.mrr <= 1.0);
        }
    }
}
