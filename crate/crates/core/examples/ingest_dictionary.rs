//! Parse two dictionaries with different headers, reshape a long-format
//! questionnaire, and print corpus statistics.
//!
//! cargo run --example ingest_dictionary

use harmony::dictionary::{corpus_stats, long_to_wide, parse_dictionary, read_long_rows, ColumnMap, Provenance, ReshapeSpec, Side};

const SOURCE: &str = "\
Variable,Description,Form,Derivation
SEXLNM,Sex of participant,Demographics,1 = male; 2 = female
BMI,Body mass index,Anthropometry,weight in kilograms divided by the square of height in metres
SMKNOW,Currently smokes,Lifestyle,
";

const QUESTIONNAIRE: &str = "\
question,text
Q1,How often do you feel tired
Q2,How often do you feel anxious
Q3,How many hours do you sleep
";

fn main() -> anyhow::Result<()> {
    let cols = ColumnMap { name: "Variable".into(), label: "Description".into(), sheet: "Form".into(), rule: "Derivation".into() };
    let sources = parse_dictionary(SOURCE.as_bytes(), Side::Source, &cols, Provenance::in_memory())?;
    for r in sources.iter() {
        println!("{:<8} {:<20} [{}] {}", r.name, r.label, r.sheet_desc, r.derivation_rule);
    }
    println!("{:?}\n", corpus_stats(&sources)?);

    let spec = ReshapeSpec {
        key_variable: "question".into(),
        value_variable: "text".into(),
        name_template: "PHQ_{key}".into(),
        label_template: "{value} ({key})".into(),
    };
    let rows = read_long_rows(QUESTIONNAIRE.as_bytes(), &spec)?;
    for r in long_to_wide(&rows, &spec, "Wellbeing questionnaire", Side::Target)? {
        println!("{:<8} {}", r.name, r.label);
    }
    Ok(())
}
