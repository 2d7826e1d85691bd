//! Edit-distance similarity scorers.
//!
//! The token scorers compare space-joined token sequences with a normalized
//! insert/delete similarity. Scores are kept unrounded on a 0..=100 scale.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::NormalizedText;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FuzzyScore(f64);

impl FuzzyScore {
    pub const MAX: FuzzyScore = FuzzyScore(100.0);
    pub const MIN: FuzzyScore = FuzzyScore(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    /// The score rescaled to `[0, 1]`.
    pub fn unit(self) -> f64 {
        self.0 / 100.0
    }
}

impl fmt::Display for FuzzyScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// Minimum number of single-character insertions, deletions and
/// substitutions turning `a` into `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn lcs_len(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row = vec![0usize; b.len() + 1];
    for ca in a {
        let mut diag = 0;
        for (j, cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Insert/delete-only edit distance: `|a| + |b| - 2 * LCS(a, b)`.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

/// Normalized indel similarity; two empty strings score 100.
pub fn indel_ratio(a: &str, b: &str) -> FuzzyScore {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return FuzzyScore::MAX;
    }
    let dist = indel_distance(a, b);
    FuzzyScore((1.0 - dist as f64 / total as f64) * 100.0)
}

fn join_sorted<'a>(tokens: impl IntoIterator<Item = &'a String>) -> String {
    let mut v: Vec<&str> = tokens.into_iter().map(String::as_str).collect();
    v.sort_unstable();
    v.join(" ")
}

fn concat(head: &str, tail: &str) -> String {
    match (head.is_empty(), tail.is_empty()) {
        (true, _) => tail.to_string(),
        (_, true) => head.to_string(),
        _ => format!("{head} {tail}"),
    }
}

/// Indel ratio of the alphabetically sorted, space-joined tokens.
pub fn token_sort_ratio(a: &NormalizedText, b: &NormalizedText) -> FuzzyScore {
    indel_ratio(&join_sorted(&a.tokens), &join_sorted(&b.tokens))
}

/// Token-set ratio over deduplicated tokens.
///
/// With `t0` the sorted intersection and `t1`/`t2` the intersection followed
/// by each side's sorted remainder, the score is the best pairwise indel
/// ratio among the three strings. Empty against non-empty scores 0.
pub fn token_set_ratio(a: &NormalizedText, b: &NormalizedText) -> FuzzyScore {
    let set_a: BTreeSet<&String> = a.tokens.iter().collect();
    let set_b: BTreeSet<&String> = b.tokens.iter().collect();
    match (set_a.is_empty(), set_b.is_empty()) {
        (true, true) => return FuzzyScore::MAX,
        (true, false) | (false, true) => return FuzzyScore::MIN,
        _ => {}
    }
    let t0 = join_sorted(set_a.intersection(&set_b).copied());
    let t1 = concat(&t0, &join_sorted(set_a.difference(&set_b).copied()));
    let t2 = concat(&t0, &join_sorted(set_b.difference(&set_a).copied()));
    let best = indel_ratio(&t0, &t1).value().max(indel_ratio(&t0, &t2).value()).max(indel_ratio(&t1, &t2).value());
    FuzzyScore(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Full-table reference implementations, independent of the rolling-row
    // versions above.
    fn levenshtein_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    fn lcs_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                d[i][j] = if a[i - 1] == b[j - 1] { d[i - 1][j - 1] + 1 } else { d[i - 1][j].max(d[i][j - 1]) };
            }
        }
        d[a.len()][b.len()]
    }

    fn nt(tokens: &[&str]) -> NormalizedText {
        NormalizedText::new(tokens.iter().copied())
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), levenshtein_oracle("kitten", "sitting"));
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn indel_examples() {
        assert_eq!(indel_ratio("bmi baselin", "bmi baselin").value(), 100.0);
        assert_eq!(indel_ratio("abc", "").value(), 0.0);
        assert_eq!(indel_ratio("", "").value(), 100.0);
        assert_eq!(lcs_oracle("abcd", "bcde"), 3);
        assert_eq!(indel_ratio("abcd", "bcde").value(), 75.0);
    }

    #[test]
    fn token_sort_examples() {
        assert_eq!(token_sort_ratio(&nt(&["b", "a"]), &nt(&["a", "b"])).value(), 100.0);
        let lcs = lcs_oracle("x y", "y z");
        let expected = (1.0 - (6 - 2 * lcs) as f64 / 6.0) * 100.0;
        let got = token_sort_ratio(&nt(&["x", "y"]), &nt(&["y", "z"])).value();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 33.33).abs() < 0.01, "{got}");
        assert_eq!(token_sort_ratio(&nt(&[]), &nt(&[])).value(), 100.0);
    }

    #[test]
    fn token_set_examples() {
        assert_eq!(token_set_ratio(&nt(&["fuzzy", "fuzzy", "bear"]), &nt(&["fuzzy", "bear"])).value(), 100.0);
        assert_eq!(token_set_ratio(&nt(&["bmi", "baselin"]), &nt(&["bmi", "baselin"])).value(), 100.0);
        // t0 = "a b", t1 = "a b c", t2 = "a b d"
        assert_eq!(indel_ratio("a b", "a b c").value(), 75.0);
        assert_eq!(indel_ratio("a b c", "a b d").value(), 80.0);
        let got = token_set_ratio(&nt(&["a", "b", "c"]), &nt(&["a", "b", "d"])).value();
        assert!((got - 80.0).abs() < 0.01);
        assert_eq!(token_set_ratio(&nt(&[]), &nt(&["a"])).value(), 0.0);
        assert_eq!(token_set_ratio(&nt(&[]), &nt(&[])).value(), 100.0);
    }

    fn token_vec() -> impl Strategy<Value = NormalizedText> {
        proptest::collection::vec("[a-e]{1,4}", 0..6).prop_map(NormalizedText::new)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn levenshtein_matches_oracle(a in "[a-d]{0,40}", b in "[a-d]{0,40}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein_oracle(&a, &b));
            prop_assert_eq!(indel_distance(&a, &b), a.len() + b.len() - 2 * lcs_oracle(&a, &b));
        }

        #[test]
        fn levenshtein_is_a_metric(a in "[a-c]{0,12}", b in "[a-c]{0,12}", c in "[a-c]{0,12}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn ratios_symmetric_and_bounded(a in token_vec(), b in token_vec()) {
            for f in [token_sort_ratio, token_set_ratio] {
                let ab = f(&a, &b).value();
                prop_assert_eq!(ab, f(&b, &a).value());
                prop_assert!((0.0..=100.0).contains(&ab));
            }
        }

        #[test]
        fn set_ratio_full_on_dedup_equal(a in token_vec(), extra in proptest::collection::vec(0usize..6, 0..4)) {
            let mut b = a.clone();
            for i in extra {
                if let Some(t) = a.tokens.get(i) {
                    b.tokens.push(t.clone());
                }
            }
            b.tokens.reverse();
            prop_assert_eq!(token_set_ratio(&a, &b).value(), 100.0);
            prop_assert!(token_set_ratio(&a, &b).value() >= token_sort_ratio(&a, &b).value());
        }
    }
}
