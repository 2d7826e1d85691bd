//! Data dictionary ingestion.
//!
//! A dictionary is a CSV file with one row per variable. Callers bind their
//! own header names to the four fields through a [`ColumnMap`], since two
//! studies rarely agree on headers. Parsing is fail-fast: one bad row aborts
//! the whole file.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Source => f.write_str("source"),
            Side::Target => f.write_str("target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableRecord {
    pub name: String,
    pub label: String,
    pub sheet_desc: String,
    /// Empty when the dictionary has no derivation rule for this variable.
    pub derivation_rule: String,
    pub side: Side,
}

impl VariableRecord {
    pub fn has_rule(&self) -> bool {
        !self.derivation_rule.is_empty()
    }
}

/// Header names for the four dictionary fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub name: String,
    pub label: String,
    pub sheet: String,
    pub rule: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            name: "name".into(),
            label: "label".into(),
            sheet: "sheet_desc".into(),
            rule: "derivation_rule".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: Option<PathBuf>,
    pub format: String,
}

impl Provenance {
    pub fn in_memory() -> Self {
        Provenance { path: None, format: "csv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDictionary {
    side: Side,
    records: Vec<VariableRecord>,
    provenance: Provenance,
    index: HashMap<String, usize>,
}

impl DataDictionary {
    /// Builds a dictionary from already-validated records, enforcing the
    /// per-side invariants (unique names, non-empty labels, matching side).
    pub fn from_records(side: Side, records: Vec<VariableRecord>, provenance: Provenance) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if rec.name.is_empty() {
                return Err(Error::Invalid(format!("record {i}: empty variable name")));
            }
            if rec.label.is_empty() {
                return Err(Error::EmptyLabel(i));
            }
            if rec.side != side {
                return Err(Error::Invalid(format!("record `{}` belongs to the {} side", rec.name, rec.side)));
            }
            if index.insert(rec.name.clone(), i).is_some() {
                return Err(Error::DuplicateName(rec.name.clone()));
            }
        }
        Ok(DataDictionary { side, records, provenance, index })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn records(&self) -> &[VariableRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&VariableRecord> {
        self.index.get(name).map(|&i| &self.records[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VariableRecord> {
        self.records.iter()
    }

    /// Writes the dictionary as CSV using the default column names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let cols = ColumnMap::default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([&cols.name, &cols.label, &cols.sheet, &cols.rule])?;
        for r in &self.records {
            w.write_record([&r.name, &r.label, &r.sheet_desc, &r.derivation_rule])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Parses in-memory tabular rows. `header` names the columns of every row.
pub fn parse_rows(
    header: &[String],
    rows: &[Vec<String>],
    side: Side,
    columns: &ColumnMap,
    provenance: Provenance,
) -> Result<DataDictionary> {
    let find = |col: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))
    };
    let name_ix = find(&columns.name)?;
    let label_ix = find(&columns.label)?;
    let sheet_ix = find(&columns.sheet)?;
    let rule_ix = find(&columns.rule)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }

    let cell = |row: &Vec<String>, ix: usize| row.get(ix).map(|s| s.trim().to_string()).unwrap_or_default();
    let mut seen = HashSet::with_capacity(rows.len());
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let name = cell(row, name_ix);
        if name.is_empty() {
            return Err(Error::Invalid(format!("row {i}: empty variable name")));
        }
        let label = cell(row, label_ix);
        if label.is_empty() {
            return Err(Error::EmptyLabel(i));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::DuplicateName(name));
        }
        records.push(VariableRecord {
            name,
            label,
            sheet_desc: cell(row, sheet_ix),
            derivation_rule: cell(row, rule_ix),
            side,
        });
    }
    DataDictionary::from_records(side, records, provenance)
}

/// Parses a UTF-8 CSV dictionary with a header row.
pub fn parse_dictionary<R: Read>(
    reader: R,
    side: Side,
    columns: &ColumnMap,
    provenance: Provenance,
) -> Result<DataDictionary> {
    let (header, rows) = read_table(reader)?;
    parse_rows(&header, &rows, side, columns, provenance)
}

pub fn read_dictionary(path: &Path, side: Side, columns: &ColumnMap) -> Result<DataDictionary> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let provenance = Provenance { path: Some(path.to_path_buf()), format: "csv".into() };
    parse_dictionary(file, side, columns, provenance)
}

pub(crate) fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim_start_matches('\u{feff}').to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Describes how question-number/response rows become one variable per
/// question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshapeSpec {
    pub key_variable: String,
    pub value_variable: String,
    pub name_template: String,
    /// May additionally contain `{value}`, replaced by the row's value cell.
    pub label_template: String,
}

impl ReshapeSpec {
    pub fn validate(&self) -> Result<()> {
        for t in [&self.name_template, &self.label_template] {
            if t.matches("{key}").count() != 1 {
                return Err(Error::TemplateMissingPlaceholder(t.clone()));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ReshapeSpec = serde_json::from_str(&raw)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongRow {
    pub key: String,
    pub value: String,
}

/// Reads the key and value columns named by `spec` from a long-format CSV.
pub fn read_long_rows<R: Read>(reader: R, spec: &ReshapeSpec) -> Result<Vec<LongRow>> {
    let (header, rows) = read_table(reader)?;
    let find = |col: &str| {
        header
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))
    };
    let key_ix = find(&spec.key_variable)?;
    let value_ix = find(&spec.value_variable)?;
    Ok(rows
        .iter()
        .map(|r| LongRow {
            key: r.get(key_ix).map(|s| s.trim().to_string()).unwrap_or_default(),
            value: r.get(value_ix).map(|s| s.trim().to_string()).unwrap_or_default(),
        })
        .collect())
}

/// Turns long rows into one record per distinct key, in first-seen order.
pub fn long_to_wide(rows: &[LongRow], spec: &ReshapeSpec, sheet_desc: &str, side: Side) -> Result<Vec<VariableRecord>> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.key.is_empty() {
            return Err(Error::Invalid(format!("row {i}: empty key")));
        }
        if !seen.insert(row.key.as_str()) {
            return Err(Error::DuplicateKey(row.key.clone()));
        }
        out.push(VariableRecord {
            name: spec.name_template.replace("{key}", &row.key),
            label: spec.label_template.replace("{key}", &row.key).replace("{value}", &row.value),
            sheet_desc: sheet_desc.to_string(),
            derivation_rule: String::new(),
            side,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_records: usize,
    pub mean_label_words: f64,
    pub mean_sheet_words: f64,
    pub mean_rule_words: f64,
}

pub fn corpus_stats(dict: &DataDictionary) -> Result<CorpusStats> {
    let n = dict.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mean = |f: &dyn Fn(&VariableRecord) -> &str| {
        dict.iter().map(|r| word_count(f(r)) as f64).sum::<f64>() / n as f64
    };
    Ok(CorpusStats {
        n_records: n,
        mean_label_words: mean(&|r| &r.label),
        mean_sheet_words: mean(&|r| &r.sheet_desc),
        mean_rule_words: mean(&|r| &r.derivation_rule),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Vec<String> {
        ["name", "label", "sheet_desc", "derivation_rule"].map(String::from).to_vec()
    }

    fn row(cells: &[&str]) -> Vec<String> {
        cells.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_table_one_row() {
        let d = parse_rows(
            &header(),
            &[row(&["SEXLNM", "Sex LNM", "Demographics Relationship", ""])],
            Side::Source,
            &ColumnMap::default(),
            Provenance::in_memory(),
        )
        .unwrap();
        let r = &d.records()[0];
        assert_eq!(r.name, "SEXLNM");
        assert_eq!(r.label, "Sex LNM");
        assert_eq!(r.sheet_desc, "Demographics Relationship");
        assert_eq!(r.derivation_rule, "");
        assert_eq!(r.side, Side::Source);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        let cols = ColumnMap::default();
        let err = parse_rows(&header(), &[], Side::Source, &cols, Provenance::in_memory()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput));

        let rows = [row(&["BMIB", "BMI", "Vitals", ""]), row(&["BMIB", "BMI again", "Vitals", ""])];
        let err = parse_rows(&header(), &rows, Side::Source, &cols, Provenance::in_memory()).unwrap_err();
        assert!(matches!(err, Error::DuplicateName(n) if n == "BMIB"));

        let rows = [row(&["A", "ok", "", ""]), row(&["B", "  ", "", ""])];
        let err = parse_rows(&header(), &rows, Side::Source, &cols, Provenance::in_memory()).unwrap_err();
        assert!(matches!(err, Error::EmptyLabel(1)));
    }

    #[test]
    fn missing_column_and_custom_headers() {
        let cols = ColumnMap { name: "VAR".into(), label: "LABEL".into(), sheet: "SHEET".into(), rule: "DEF".into() };
        let csv = "VAR,LABEL,SHEET\nX,Some label,Vitals\n";
        let err = parse_dictionary(csv.as_bytes(), Side::Target, &cols, Provenance::in_memory()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "DEF"));

        // short row: missing rule cell becomes empty
        let csv = "VAR,LABEL,SHEET,DEF\n X , Some label ,Vitals\n";
        let d = parse_dictionary(csv.as_bytes(), Side::Target, &cols, Provenance::in_memory()).unwrap();
        assert_eq!(d.records()[0].name, "X");
        assert_eq!(d.records()[0].label, "Some label");
        assert_eq!(d.records()[0].derivation_rule, "");
    }

    #[test]
    fn reshape_examples() {
        let spec = ReshapeSpec {
            key_variable: "MMSEQSNUM".into(),
            value_variable: "MMSERN".into(),
            name_template: "MMSE_{key}".into(),
            label_template: "MMSE question {key} score".into(),
        };
        let rows = vec![
            LongRow { key: "1".into(), value: "".into() },
            LongRow { key: "2".into(), value: "".into() },
        ];
        let recs = long_to_wide(&rows, &spec, "MMSE", Side::Source).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].name, "MMSE_1");
        assert_eq!(recs[1].name, "MMSE_2");
        assert_eq!(recs[1].label, "MMSE question 2 score");
        assert_eq!(recs[0].sheet_desc, "MMSE");

        let recs = long_to_wide(&[LongRow { key: "8".into(), value: "".into() }], &spec, "", Side::Source).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].name.contains('8'));

        let dup = vec![
            LongRow { key: "3".into(), value: "".into() },
            LongRow { key: "3".into(), value: "".into() },
        ];
        assert!(matches!(long_to_wide(&dup, &spec, "", Side::Source), Err(Error::DuplicateKey(k)) if k == "3"));

        let bad = ReshapeSpec { name_template: "MMSE".into(), ..spec.clone() };
        assert!(matches!(long_to_wide(&rows, &bad, "", Side::Source), Err(Error::TemplateMissingPlaceholder(_))));
        let bad = ReshapeSpec { label_template: "{key} {key}".into(), ..spec };
        assert!(matches!(long_to_wide(&rows, &bad, "", Side::Source), Err(Error::TemplateMissingPlaceholder(_))));
    }

    #[test]
    fn stats_means() {
        let recs = vec![
            VariableRecord { name: "A".into(), label: "two words".into(), sheet_desc: "".into(), derivation_rule: "".into(), side: Side::Target },
            VariableRecord { name: "B".into(), label: "a b c d".into(), sheet_desc: "x".into(), derivation_rule: "".into(), side: Side::Target },
        ];
        let d = DataDictionary::from_records(Side::Target, recs, Provenance::in_memory()).unwrap();
        let s = corpus_stats(&d).unwrap();
        assert_eq!(s.mean_label_words, 3.0);
        assert_eq!(s.mean_rule_words, 0.0);
        assert_eq!(s.mean_sheet_words, 0.5);
        assert_eq!(s.n_records, 2);
    }

    #[test]
    fn stats_on_engineered_corpus() {
        // 352 records: 176 with 11-word labels, 176 with 12-word labels.
        let recs: Vec<_> = (0..352)
            .map(|i| {
                let n = if i % 2 == 0 { 11 } else { 12 };
                VariableRecord {
                    name: format!("V{i}"),
                    label: vec!["w"; n].join(" "),
                    sheet_desc: String::new(),
                    derivation_rule: String::new(),
                    side: Side::Source,
                }
            })
            .collect();
        let d = DataDictionary::from_records(Side::Source, recs, Provenance::in_memory()).unwrap();
        assert_eq!(corpus_stats(&d).unwrap().mean_label_words, 11.5);
    }
}
