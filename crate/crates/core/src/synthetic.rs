//! Synthetic dictionary pairs with known gold matches.
//!
//! Targets are grouped into sheets, each with its own word pool, so labels
//! within a sheet overlap and label similarity alone is ambiguous. A source
//! variable is a noisy paraphrase of its gold target: each label word is
//! swapped for a fixed synonym with probability `noise`, and the derivation
//! rule shares the target's code words. With `noise == 0` every source
//! repeats its gold target's label, sheet and rule exactly.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{DataDictionary, Provenance, Side, VariableRecord};
use crate::error::{Error, Result};
use crate::features::GoldPairs;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_sources: usize,
    pub n_targets: usize,
    pub n_sheets: usize,
    /// Probability of paraphrasing each source label word.
    pub noise: f64,
    /// Every `k`-th source gets a second gold target with the same label.
    pub multi_gold_every: Option<usize>,
    /// Fraction of targets with a derivation rule.
    pub rule_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_sources: 60,
            n_targets: 300,
            n_sheets: 12,
            noise: 0.5,
            multi_gold_every: Some(10),
            rule_fraction: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub sources: DataDictionary,
    pub targets: DataDictionary,
    pub gold: GoldPairs,
}

impl SyntheticCorpus {
    /// Writes `sources.csv`, `targets.csv` and `gold.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map_err(|e| Error::io(&p, e))
        };
        self.sources.write_csv(open("sources.csv")?)?;
        self.targets.write_csv(open("targets.csv")?)?;
        self.gold.write_csv(open("gold.csv")?)?;
        Ok(())
    }
}

const ONSETS: [&str; 13] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z"];
const VOWELS: [&str; 3] = ["a", "o", "u"];

/// Pronounceable made-up words, distinct and free of English suffixes.
struct WordMint {
    used: HashSet<String>,
}

impl WordMint {
    fn new() -> Self {
        WordMint { used: HashSet::new() }
    }

    fn mint<R: Rng>(&mut self, rng: &mut R, syllables: usize) -> String {
        loop {
            let w: String = (0..syllables)
                .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn mint_many<R: Rng>(&mut self, rng: &mut R, n: usize, syllables: usize) -> Vec<String> {
        (0..n).map(|_| self.mint(rng, syllables)).collect()
    }
}

struct Sheet {
    name: String,
    words: Vec<String>,
}

struct TargetSpec {
    label_words: Vec<String>,
    sheet: usize,
    rule_codes: Vec<String>,
}

fn rule_text(codes: &[String], filler: &[String], long: bool) -> String {
    if long {
        // long rules repeat their code words so keyword extraction keeps them
        let mut words = Vec::new();
        for round in 0..3 {
            words.extend(codes.iter().cloned());
            words.push(filler[round % filler.len()].clone());
            words.extend(filler.iter().take(4).cloned());
        }
        words.join(" ")
    } else {
        format!("derived from {}", codes.join(" "))
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let gold_targets_needed = cfg.n_sources + cfg.multi_gold_every.map_or(0, |k| cfg.n_sources / k.max(1));
    if cfg.n_sources == 0 || cfg.n_sheets == 0 || cfg.n_targets < gold_targets_needed {
        return Err(Error::Invalid(format!(
            "need at least {gold_targets_needed} targets for {} sources",
            cfg.n_sources
        )));
    }
    if !(0.0..=1.0).contains(&cfg.noise) || !(0.0..=1.0).contains(&cfg.rule_fraction) {
        return Err(Error::Invalid("noise and rule_fraction must lie in [0, 1]".into()));
    }
    let mut rng = rng::stream(cfg.seed, &[0x5e_ed]);
    let mut mint = WordMint::new();

    let sheets: Vec<Sheet> = (0..cfg.n_sheets)
        .map(|_| {
            let name = mint.mint_many(&mut rng, 2, 3).join(" ");
            Sheet { name, words: mint.mint_many(&mut rng, 14, 2) }
        })
        .collect();
    let shared = mint.mint_many(&mut rng, 20, 2);
    let filler = mint.mint_many(&mut rng, 8, 3);

    // targets with distinct label word sets
    let mut seen_labels: HashSet<BTreeSet<String>> = HashSet::new();
    let mut targets: Vec<TargetSpec> = Vec::with_capacity(cfg.n_targets);
    while targets.len() < cfg.n_targets {
        let sheet = targets.len() % cfg.n_sheets;
        let len = rng.random_range(3..=5);
        let mut words: Vec<String> = sheets[sheet].words.choose_multiple(&mut rng, len).cloned().collect();
        if rng.random_bool(0.5) {
            words.push(shared.choose(&mut rng).unwrap().clone());
        }
        if !seen_labels.insert(words.iter().cloned().collect()) {
            continue;
        }
        let rule_codes = if rng.random_bool(cfg.rule_fraction) { mint.mint_many(&mut rng, 3, 3) } else { Vec::new() };
        targets.push(TargetSpec { label_words: words, sheet, rule_codes });
    }

    // the first gold_targets_needed targets are gold; duplicates for
    // multi-gold sources copy the label and sheet of their sibling
    let mut order: Vec<usize> = (0..cfg.n_targets).collect();
    order.shuffle(&mut rng);
    let mut gold_of: Vec<Vec<usize>> = (0..cfg.n_sources).map(|s| vec![order[s]]).collect();
    let mut next = cfg.n_sources;
    if let Some(k) = cfg.multi_gold_every {
        for s in (0..cfg.n_sources).filter(|s| (s + 1) % k.max(1) == 0) {
            let twin = order[next];
            next += 1;
            targets[twin].label_words = targets[order[s]].label_words.clone();
            targets[twin].sheet = targets[order[s]].sheet;
            gold_of[s].push(twin);
        }
    }

    let target_name = |i: usize| format!("JP_V{i:04}");
    let mut target_records = Vec::with_capacity(cfg.n_targets);
    for (i, t) in targets.iter().enumerate() {
        let long = !t.rule_codes.is_empty() && i % 3 == 0;
        target_records.push(VariableRecord {
            name: target_name(i),
            label: t.label_words.join(" "),
            sheet_desc: sheets[t.sheet].name.clone(),
            derivation_rule: if t.rule_codes.is_empty() { String::new() } else { rule_text(&t.rule_codes, &filler, long) },
            side: Side::Target,
        });
    }

    let synonym_pool = mint.mint_many(&mut rng, 200, 3);
    let synonym = |w: &str| {
        let h = w.bytes().fold(7usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize));
        synonym_pool[h % synonym_pool.len()].clone()
    };

    let mut source_records = Vec::with_capacity(cfg.n_sources);
    let mut gold_pairs = Vec::new();
    for (s, golds) in gold_of.iter().enumerate() {
        let t = &targets[golds[0]];
        let trec = &target_records[golds[0]];
        let mut words: Vec<String> =
            t.label_words.iter().map(|w| if rng.random_bool(cfg.noise) { synonym(w) } else { w.clone() }).collect();
        if cfg.noise > 0.0 && rng.random_bool(cfg.noise / 2.0) {
            words.push(filler.choose(&mut rng).unwrap().clone());
        }
        let rule = if cfg.noise == 0.0 {
            trec.derivation_rule.clone()
        } else if !t.rule_codes.is_empty() && rng.random_bool(0.85) {
            let mut codes = t.rule_codes.clone();
            codes.shuffle(&mut rng);
            rule_text(&codes, &filler, s % 4 == 0)
        } else {
            String::new()
        };
        let name = format!("EU_V{s:03}");
        for &g in golds {
            gold_pairs.push((name.clone(), target_name(g)));
        }
        source_records.push(VariableRecord {
            name,
            label: words.join(" "),
            sheet_desc: trec.sheet_desc.clone(),
            derivation_rule: rule,
            side: Side::Source,
        });
    }

    let sources = DataDictionary::from_records(Side::Source, source_records, Provenance::in_memory())?;
    let targets = DataDictionary::from_records(Side::Target, target_records, Provenance::in_memory())?;
    let gold = GoldPairs::new(gold_pairs);
    gold.validate(&sources, &targets)?;
    Ok(SyntheticCorpus { sources, targets, gold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a.sources.len(), 60);
        assert_eq!(a.targets.len(), 300);
        assert_eq!(a.gold.n_sources(), 60);
        assert_eq!(a.gold.n_pairs(), 66);
        let b = generate(&cfg).unwrap();
        assert_eq!(a.sources, b.sources);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn noise_free_sources_copy_their_gold_target() {
        let c = generate(&SyntheticConfig { noise: 0.0, ..Default::default() }).unwrap();
        for (s, t) in c.gold.pairs() {
            let (s, t) = (c.sources.get(s).unwrap(), c.targets.get(t).unwrap());
            assert_eq!(s.label, t.label);
            assert_eq!(s.sheet_desc, t.sheet_desc);
        }
        // only gold siblings share a label
        let mut labels = std::collections::HashMap::new();
        for t in c.targets.iter() {
            *labels.entry(t.label.clone()).or_insert(0) += 1;
        }
        assert_eq!(labels.values().filter(|&&n| n == 2).count(), 6);
        assert!(labels.values().all(|&n| n <= 2));
    }

    #[test]
    fn rejects_impossible_sizes() {
        assert!(generate(&SyntheticConfig { n_targets: 10, ..Default::default() }).is_err());
    }
}
