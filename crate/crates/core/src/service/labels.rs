use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::GoldPairs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            other => Err(Error::MalformedVerdict(other.to_string())),
        }
    }
}

/// One curator decision. Records are never rewritten; a correction is a
/// newer record for the same (source, target, curator).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchLabel {
    pub id: u64,
    pub source: String,
    pub target: String,
    pub verdict: Verdict,
    pub curator: String,
    pub timestamp: DateTime<Utc>,
}

type LabelKey = (String, String, String);

/// Append-only JSON-lines label log with the derived current state.
///
/// A torn final line (from a crash mid-append) is dropped on open and the
/// file is cut back to the last complete record.
#[derive(Debug)]
pub struct LabelStore {
    path: Option<PathBuf>,
    file: Option<File>,
    log: Vec<MatchLabel>,
    current: BTreeMap<LabelKey, MatchLabel>,
}

impl LabelStore {
    pub fn in_memory() -> Self {
        LabelStore { path: None, file: None, log: Vec::new(), current: BTreeMap::new() }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut store = LabelStore { path: Some(path.clone()), ..Self::in_memory() };
        let mut good_len = 0u64;
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let mut reader = BufReader::new(f);
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| Error::io(&path, e))?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                match serde_json::from_str::<MatchLabel>(line.trim_end()) {
                    Ok(label) => store.apply(label),
                    Err(_) => break,
                }
                good_len += n as u64;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        if file.metadata().map_err(|e| Error::io(&path, e))?.len() != good_len {
            file.set_len(good_len).map_err(|e| Error::io(&path, e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| Error::io(&path, e))?;
        }
        store.file = Some(file);
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn apply(&mut self, label: MatchLabel) {
        let key = (label.source.clone(), label.target.clone(), label.curator.clone());
        self.current.insert(key, label.clone());
        self.log.push(label);
    }

    /// Appends a verdict stamped `now`. If the same curator already has a
    /// record for the pair at or after `now`, the new stamp is moved one
    /// second past it so timestamps stay unique and ordered per key.
    pub fn append(&mut self, source: &str, target: &str, verdict: Verdict, curator: &str, now: DateTime<Utc>) -> Result<MatchLabel> {
        if curator.trim().is_empty() {
            return Err(Error::Invalid("curator must not be empty".into()));
        }
        let now = now.with_nanosecond_zero();
        let key = (source.to_string(), target.to_string(), curator.to_string());
        let timestamp = match self.current.get(&key) {
            Some(prev) if prev.timestamp >= now => prev.timestamp + TimeDelta::seconds(1),
            _ => now,
        };
        let label = MatchLabel {
            id: self.log.len() as u64 + 1,
            source: source.to_string(),
            target: target.to_string(),
            verdict,
            curator: curator.to_string(),
            timestamp,
        };
        if let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) {
            let mut line = serde_json::to_string(&label)?;
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            file.sync_data().map_err(|e| Error::io(path, e))?;
        }
        self.apply(label.clone());
        Ok(label)
    }

    /// Every record in append order.
    pub fn log(&self) -> &[MatchLabel] {
        &self.log
    }

    /// Newest record per (source, target, curator), ordered by id.
    pub fn current(&self) -> Vec<MatchLabel> {
        let mut v: Vec<MatchLabel> = self.current.values().cloned().collect();
        v.sort_by_key(|l| l.id);
        v
    }

    /// Pairs some curator currently accepts.
    pub fn accepted(&self) -> GoldPairs {
        GoldPairs::new(
            self.current
                .values()
                .filter(|l| l.verdict == Verdict::Accept)
                .map(|l| (l.source.clone(), l.target.clone())),
        )
    }
}

trait TruncateNanos {
    fn with_nanosecond_zero(self) -> Self;
}

impl TruncateNanos for DateTime<Utc> {
    fn with_nanosecond_zero(self) -> Self {
        chrono::Timelike::with_nanosecond(&self, 0).unwrap_or(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_800_000_000 + secs, 0).unwrap()
    }

    #[test]
    fn newest_wins() {
        let mut s = LabelStore::in_memory();
        s.append("SEXLNM", "SEX", Verdict::Reject, "ana", t(0)).unwrap();
        s.append("SEXLNM", "SEX", Verdict::Accept, "ana", t(0)).unwrap();
        let cur = s.current();
        assert_eq!(cur.len(), 1);
        assert_eq!(cur[0].verdict, Verdict::Accept);
        assert_eq!(cur[0].timestamp, t(1));
        assert_eq!(s.log().len(), 2);
        assert!(s.accepted().is_match("SEXLNM", "SEX"));
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!("Accept".parse::<Verdict>().unwrap(), Verdict::Accept);
        assert!(matches!("maybe".parse::<Verdict>(), Err(Error::MalformedVerdict(_))));
    }

    #[test]
    fn replay_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        {
            let mut s = LabelStore::open(&path).unwrap();
            for i in 0..5 {
                let v = if i % 2 == 0 { Verdict::Accept } else { Verdict::Reject };
                s.append(&format!("s{}", i % 2), "t", v, "c", t(i)).unwrap();
            }
        }
        let full = LabelStore::open(&path).unwrap();
        assert_eq!(full.log().len(), 5);
        assert_eq!(full.current().len(), 2);

        let bytes = std::fs::read(&path).unwrap();
        let boundaries: Vec<usize> = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1).collect();
        for (n, &cut) in boundaries.iter().enumerate() {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            let s = LabelStore::open(&path).unwrap();
            assert_eq!(s.log().len(), n + 1);
        }
        // a torn tail is dropped and later appends stay readable
        std::fs::write(&path, &bytes[..boundaries[2] + 7]).unwrap();
        let mut s = LabelStore::open(&path).unwrap();
        assert_eq!(s.log().len(), 3);
        s.append("s9", "t", Verdict::Accept, "c", t(99)).unwrap();
        drop(s);
        assert_eq!(LabelStore::open(&path).unwrap().log().len(), 4);
    }
}
