use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DomainPair, FeatureDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Leave one subject out within a single session (the lowest session id
    /// unless one is given).
    SingleSession { session: Option<i64> },
    /// Leave one subject out with all of a subject's sessions pooled.
    CrossSession,
    /// Subjects dealt round-robin (in sorted id order) into ten target groups.
    TenFold,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::SingleSession { session: None } => f.write_str("single-session"),
            Protocol::SingleSession { session: Some(s) } => write!(f, "single-session:{s}"),
            Protocol::CrossSession => f.write_str("cross-session"),
            Protocol::TenFold => f.write_str("ten-fold"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-session" | "cross-subject-single-session-loso" => Ok(Protocol::SingleSession { session: None }),
            "cross-session" | "cross-subject-cross-session-loso" => Ok(Protocol::CrossSession),
            "ten-fold" | "ten-fold-cross-subject" => Ok(Protocol::TenFold),
            other => {
                if let Some(rest) = other.strip_prefix("single-session:") {
                    let session = rest
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad session id in protocol `{other}`")))?;
                    return Ok(Protocol::SingleSession { session: Some(session) });
                }
                Err(Error::InvalidArgument(format!(
                    "unknown protocol `{other}` (expected single-session, cross-session or ten-fold)"
                )))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub source_subjects: Vec<i64>,
    pub target_subjects: Vec<i64>,
    /// Restrict both domains to this session; `None` pools every session.
    pub session: Option<i64>,
}

impl Fold {
    fn rows(&self, dataset: &FeatureDataset, subjects: &[i64]) -> Vec<usize> {
        (0..dataset.num_samples())
            .filter(|&i| {
                subjects.binary_search(&dataset.subjects()[i]).is_ok()
                    && self.session.map_or(true, |s| dataset.sessions()[i] == s)
            })
            .collect()
    }

    /// Dataset rows of the target domain, in dataset order.
    pub fn target_rows(&self, dataset: &FeatureDataset) -> Vec<usize> {
        self.rows(dataset, &self.target_subjects)
    }

    /// Build the source/target pair for this fold. Source rows must be labeled.
    pub fn materialize(&self, dataset: &FeatureDataset) -> Result<DomainPair> {
        let src = self.rows(dataset, &self.source_subjects);
        let tgt = self.rows(dataset, &self.target_subjects);
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::InvalidData(format!(
                "fold {}: empty {} domain",
                self.index,
                if src.is_empty() { "source" } else { "target" }
            )));
        }
        DomainPair::new(dataset.select(&src)?, dataset.select(&tgt)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub folds: Vec<Fold>,
}

pub fn make_loso_splits(dataset: &FeatureDataset, protocol: Protocol) -> Result<SplitPlan> {
    let (subjects, session) = match protocol {
        Protocol::SingleSession { session } => {
            let session = match session {
                Some(s) => s,
                None => dataset.session_ids()[0],
            };
            let subjects: BTreeSet<i64> = (0..dataset.num_samples())
                .filter(|&i| dataset.sessions()[i] == session)
                .map(|i| dataset.subjects()[i])
                .collect();
            if subjects.is_empty() {
                return Err(Error::InvalidArgument(format!("no samples in session {session}")));
            }
            (subjects.into_iter().collect::<Vec<_>>(), Some(session))
        }
        Protocol::CrossSession | Protocol::TenFold => (dataset.subject_ids(), None),
    };
    if subjects.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-subject-out splitting needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }

    let groups: Vec<Vec<i64>> = match protocol {
        Protocol::TenFold => {
            let k = subjects.len().min(10);
            let mut groups = vec![Vec::new(); k];
            for (rank, &s) in subjects.iter().enumerate() {
                groups[rank % k].push(s);
            }
            groups
        }
        _ => subjects.iter().map(|&s| vec![s]).collect(),
    };

    let folds = groups
        .into_iter()
        .enumerate()
        .map(|(index, target_subjects)| {
            let source_subjects = subjects
                .iter()
                .copied()
                .filter(|s| target_subjects.binary_search(s).is_err())
                .collect();
            Fold {
                index,
                source_subjects,
                target_subjects,
                session,
            }
        })
        .collect();
    Ok(SplitPlan { protocol, folds })
}
