//! Trajectory parsing, SGD preprocessing, and construction of the
//! `(completion, action)` dataset used for graph inference.

mod dataset;
mod jsonl;
mod sgd;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dataset::{build_examples, split_by_hash, ExampleDataset, Split, Target};
pub use jsonl::{parse_jsonl, write_jsonl};
pub use sgd::{parse_sgd, sgd_adapt, SgdDialogue};

use crate::error::{Error, Result};
use crate::types::{normalize_label, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Sgd,
}

impl CorpusFormat {
    /// SGD dumps are JSON arrays; the trajectory format is one object per line.
    pub fn sniff(content: &str) -> Option<Self> {
        match content.trim_start().chars().next()? {
            '[' => Some(CorpusFormat::Sgd),
            '{' => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "sgd" | "sgd-json" => Ok(CorpusFormat::Sgd),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorpusFile {
    pub path: PathBuf,
    pub format: Option<CorpusFormat>,
}

impl CorpusFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: None,
        }
    }

    pub fn with_format(mut self, format: CorpusFormat) -> Self {
        self.format = Some(format);
        self
    }
}

pub fn parse_trajectories(file: &CorpusFile) -> Result<Vec<Trajectory>> {
    if !file.path.exists() {
        return Err(Error::FileNotFound(file.path.clone()));
    }
    let content = fs::read_to_string(&file.path)?;
    parse_str(&content, file.format)
}

/// Parses corpus text, sniffing the format when none is given.
pub fn parse_str(content: &str, format: Option<CorpusFormat>) -> Result<Vec<Trajectory>> {
    let format = match format.or_else(|| CorpusFormat::sniff(content)) {
        Some(f) => f,
        None if content.trim().is_empty() => {
            return Err(Error::Parse {
                line: 1,
                message: "empty corpus file".into(),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "cannot determine corpus format".into(),
            })
        }
    };
    match format {
        CorpusFormat::Jsonl => parse_jsonl(content),
        CorpusFormat::Sgd => parse_sgd(content),
    }
}

/// User-supplied relabeling: each source label expands to one or more labels.
/// Labels without an entry pass through unchanged.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelRewrite(HashMap<String, Vec<String>>);

impl LabelRewrite {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn insert(&mut self, from: &str, to: impl IntoIterator<Item = impl Into<String>>) {
        self.0.insert(
            normalize_label(from),
            to.into_iter().map(|s| normalize_label(&s.into())).collect(),
        );
    }

    pub fn apply(&self, trajectories: &mut [Trajectory]) {
        if self.0.is_empty() {
            return;
        }
        for turn in trajectories.iter_mut().flat_map(|t| t.turns.iter_mut()) {
            let acts = std::mem::take(&mut turn.acts);
            for act in acts {
                match self.0.get(&act) {
                    Some(replacements) => {
                        for r in replacements {
                            turn.push_act(r.clone());
                        }
                    }
                    None => turn.push_act(act),
                }
            }
            if let Some(result) = turn.db_result.as_mut() {
                if let Some(first) = self.0.get(result.as_str()).and_then(|r| r.first()) {
                    *result = first.clone();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Speaker, TurnRecord};

    #[test]
    fn empty_content_is_a_parse_error() {
        assert!(matches!(parse_str("", None), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_str("  \n", Some(CorpusFormat::Jsonl)),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn missing_file_is_reported() {
        let err = parse_trajectories(&CorpusFile::new("/nonexistent/x.jsonl")).unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }

    #[test]
    fn rewrite_expands_labels() {
        let mut rw = LabelRewrite::default();
        rw.insert(
            "SYSTEM Booking-Inform people",
            ["SYSTEM OfferBook", "SYSTEM inform people"],
        );
        let mut trajs = vec![Trajectory {
            id: "0".into(),
            domain: "hotel".into(),
            turns: vec![TurnRecord::new(
                Speaker::System,
                ["SYSTEM Booking-Inform people", "SYSTEM OfferBook"],
            )],
        }];
        rw.apply(&mut trajs);
        assert_eq!(
            trajs[0].turns[0].acts,
            vec!["SYSTEM OfferBook", "SYSTEM inform people"]
        );
    }
}
