//! Normalize variable labels and compare them with the edit-distance
//! scorers.
//!
//! cargo run --example fuzzy_scores

use harmony::fuzzy::{indel_ratio, levenshtein, token_set_ratio, token_sort_ratio};
use harmony::text::normalize_for_fuzzy;

fn main() {
    let pairs = [
        ("Body mass index (kg/m2)", "BMI: body-mass index"),
        ("Smoking status at baseline", "Baseline status of smoking"),
        ("Sex of participant", "Participant's gender"),
        ("Systolic blood pressure, mmHg", "Diastolic blood pressure"),
    ];
    println!("{:<32} {:<30} {:>5} {:>7} {:>7} {:>7}", "a", "b", "lev", "indel", "sort", "set");
    for (a, b) in pairs {
        let (na, nb) = (normalize_for_fuzzy(a), normalize_for_fuzzy(b));
        println!(
            "{a:<32} {b:<30} {:>5} {:>7} {:>7} {:>7}",
            levenshtein(a, b),
            indel_ratio(&na.joined(), &nb.joined()),
            token_sort_ratio(&na, &nb),
            token_set_ratio(&na, &nb),
        );
        println!("  normalized: {:?} / {:?}", na.tokens, nb.tokens);
    }
}
