//! Defect annotations: an append-only JSONL store with supersede semantics
//! and inter-annotator agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{cohens_kappa, MetricError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefectOrigin {
    Overlooked,
    InvalidlyAdapted,
    UnexpectedlyAdapted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RootCauseCategory {
    UnclearRequirement,
    RequirementMisalignment,
    ContextMisapplication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RootCause {
    AmbiguousLiteral,
    UnspecificInstruction,
    MethodSignature,
    OperationalLogic,
    ErrorEdgeCaseHandling,
    FieldMisapplication,
    MethodMisapplication,
    EnvironmentMisapplication,
    InternalContextMisapplication,
}

impl RootCause {
    pub const ALL: [RootCause; 9] = [
        RootCause::AmbiguousLiteral,
        RootCause::UnspecificInstruction,
        RootCause::MethodSignature,
        RootCause::OperationalLogic,
        RootCause::ErrorEdgeCaseHandling,
        RootCause::FieldMisapplication,
        RootCause::MethodMisapplication,
        RootCause::EnvironmentMisapplication,
        RootCause::InternalContextMisapplication,
    ];

    pub fn category(self) -> RootCauseCategory {
        use RootCause::*;
        match self {
            AmbiguousLiteral | UnspecificInstruction => RootCauseCategory::UnclearRequirement,
            MethodSignature | OperationalLogic | ErrorEdgeCaseHandling => RootCauseCategory::RequirementMisalignment,
            FieldMisapplication | MethodMisapplication | EnvironmentMisapplication | InternalContextMisapplication => {
                RootCauseCategory::ContextMisapplication
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DefectAnnotation {
    pub case_id: String,
    pub annotator_id: String,
    pub defect_origin: DefectOrigin,
    pub root_cause: RootCause,
    pub instance_count: u32,
    #[serde(default)]
    pub note: String,
}

impl DefectAnnotation {
    /// Content hash; identical payloads share an id.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("annotation serializes");
        hex::encode(&Sha256::digest(&json)[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub annotation: DefectAnnotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationField {
    DefectOrigin,
    RootCause,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("instance_count must be at least 1")]
    ZeroInstances,
    #[error("annotator id is empty")]
    EmptyAnnotator,
    #[error("no cases labelled by both `{0}` and `{1}`")]
    NoSharedCases(String, String),
    #[error("annotation store {path}: {message}")]
    Store { path: String, message: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// JSONL store; the latest record per (case, annotator) is current.
pub struct AnnotationStore {
    path: PathBuf,
    records: Mutex<Vec<StoredAnnotation>>,
}

impl AnnotationStore {
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let err = |message: String| AnnotationError::Store {
            path: path.display().to_string(),
            message,
        };
        let mut records = Vec::new();
        match std::fs::read_to_string(path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    records.push(serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(err(e.to_string())),
        }
        Ok(AnnotationStore {
            path: path.to_path_buf(),
            records: Mutex::new(records),
        })
    }

    /// Appends `a` unless an identical payload is already stored; returns
    /// its id either way.
    pub fn record(&self, a: DefectAnnotation, known_cases: &BTreeSet<String>) -> Result<String, AnnotationError> {
        if !known_cases.contains(&a.case_id) {
            return Err(AnnotationError::UnknownCase(a.case_id));
        }
        if a.instance_count == 0 {
            return Err(AnnotationError::ZeroInstances);
        }
        if a.annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        let id = a.id();
        let mut records = self.records.lock().expect("store lock");
        // Re-submitting the current label is a no-op; re-submitting an older
        // one supersedes whatever replaced it.
        let current = records
            .iter()
            .rev()
            .find(|r| r.annotation.case_id == a.case_id && r.annotation.annotator_id == a.annotator_id);
        if current.is_some_and(|r| r.id == id) {
            return Ok(id);
        }
        let stored = StoredAnnotation {
            id: id.clone(),
            seq: records.len() as u64,
            annotation: a,
        };
        let mut line = serde_json::to_string(&stored).expect("annotation serializes");
        line.push('\n');
        let err = |e: std::io::Error| AnnotationError::Store {
            path: self.path.display().to_string(),
            message: e.to_string(),
        };
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&self.path).map_err(err)?;
        f.write_all(line.as_bytes()).map_err(err)?;
        records.push(stored);
        Ok(id)
    }

    /// Every stored record in append order.
    pub fn history(&self) -> Vec<StoredAnnotation> {
        self.records.lock().expect("store lock").clone()
    }

    /// Current annotation per (case, annotator).
    pub fn current(&self) -> BTreeMap<(String, String), DefectAnnotation> {
        let mut out = BTreeMap::new();
        for r in self.records.lock().expect("store lock").iter() {
            out.insert((r.annotation.case_id.clone(), r.annotation.annotator_id.clone()), r.annotation.clone());
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<DefectAnnotation> {
        self.records
            .lock()
            .expect("store lock")
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.annotation.clone())
    }

    /// Cohen's kappa between two annotators over their shared cases.
    pub fn agreement(&self, a: &str, b: &str, field: AnnotationField) -> Result<f64, AnnotationError> {
        let current = self.current();
        let by = |who: &str| -> BTreeMap<String, DefectAnnotation> {
            current
                .iter()
                .filter(|((_, ann), _)| ann == who)
                .map(|((case, _), v)| (case.clone(), v.clone()))
                .collect()
        };
        let (la, lb) = (by(a), by(b));
        let shared: Vec<&String> = la.keys().filter(|k| lb.contains_key(*k)).collect();
        if shared.is_empty() {
            return Err(AnnotationError::NoSharedCases(a.into(), b.into()));
        }
        let label = |x: &DefectAnnotation| match field {
            AnnotationField::DefectOrigin => format!("{:?}", x.defect_origin),
            AnnotationField::RootCause => format!("{:?}", x.root_cause),
        };
        let xs: Vec<String> = shared.iter().map(|k| label(&la[*k])).collect();
        let ys: Vec<String> = shared.iter().map(|k| label(&lb[*k])).collect();
        Ok(cohens_kappa(&xs, &ys)?)
    }

    /// Current annotations as CSV.
    pub fn export_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case_id", "annotator_id", "defect_origin", "root_cause_category", "root_cause", "instance_count", "note"])?;
        for a in self.current().values() {
            w.write_record([
                a.case_id.clone(),
                a.annotator_id.clone(),
                format!("{:?}", a.defect_origin),
                format!("{:?}", a.root_cause.category()),
                format!("{:?}", a.root_cause),
                a.instance_count.to_string(),
                a.note.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(case: &str, who: &str, origin: DefectOrigin) -> DefectAnnotation {
        DefectAnnotation {
            case_id: case.into(),
            annotator_id: who.into(),
            defect_origin: origin,
            root_cause: RootCause::OperationalLogic,
            instance_count: 1,
            note: String::new(),
        }
    }

    fn cases() -> BTreeSet<String> {
        ["c1", "c2"].map(String::from).into()
    }

    #[test]
    fn mapping_is_total() {
        let counts = RootCause::ALL.iter().fold(BTreeMap::new(), |mut m, r| {
            *m.entry(r.category()).or_insert(0) += 1;
            m
        });
        assert_eq!(counts.values().sum::<i32>(), 9);
        assert_eq!(counts[&RootCauseCategory::UnclearRequirement], 2);
        assert_eq!(counts[&RootCauseCategory::RequirementMisalignment], 3);
        assert_eq!(counts[&RootCauseCategory::ContextMisapplication], 4);
    }

    #[test]
    fn idempotent_supersede_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let store = AnnotationStore::open(&path).unwrap();
        let a = ann("c1", "alice", DefectOrigin::Overlooked);
        let id = store.record(a.clone(), &cases()).unwrap();
        assert_eq!(store.record(a.clone(), &cases()).unwrap(), id);
        assert_eq!(store.history().len(), 1);
        assert_eq!(store.get(&id), Some(a.clone()));

        let b = ann("c1", "alice", DefectOrigin::InvalidlyAdapted);
        store.record(b.clone(), &cases()).unwrap();
        assert_eq!(store.current()[&("c1".to_string(), "alice".to_string())], b);
        store.record(a.clone(), &cases()).unwrap();
        assert_eq!(store.history().len(), 3);

        let reopened = AnnotationStore::open(&path).unwrap();
        assert_eq!(reopened.history(), store.history());
        assert_eq!(reopened.current()[&("c1".to_string(), "alice".to_string())], a);
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let store = AnnotationStore::open(&dir.path().join("a.jsonl")).unwrap();
        assert!(matches!(
            store.record(ann("zz", "alice", DefectOrigin::Overlooked), &cases()),
            Err(AnnotationError::UnknownCase(_))
        ));
        let mut a = ann("c1", "alice", DefectOrigin::Overlooked);
        a.instance_count = 0;
        assert!(matches!(store.record(a, &cases()), Err(AnnotationError::ZeroInstances)));
        assert!(serde_json::from_str::<DefectAnnotation>(
            r#"{"case_id":"c1","annotator_id":"a","defect_origin":"Bogus","root_cause":"OperationalLogic","instance_count":1}"#
        )
        .is_err());
    }

    #[test]
    fn agreement_over_shared_cases() {
        let dir = tempfile::tempdir().unwrap();
        let store = AnnotationStore::open(&dir.path().join("a.jsonl")).unwrap();
        store.record(ann("c1", "a", DefectOrigin::Overlooked), &cases()).unwrap();
        store.record(ann("c2", "a", DefectOrigin::InvalidlyAdapted), &cases()).unwrap();
        store.record(ann("c1", "b", DefectOrigin::InvalidlyAdapted), &cases()).unwrap();
        store.record(ann("c2", "b", DefectOrigin::Overlooked), &cases()).unwrap();
        assert_eq!(store.agreement("a", "b", AnnotationField::DefectOrigin).unwrap(), -1.0);
        assert_eq!(store.agreement("a", "b", AnnotationField::RootCause).unwrap(), 1.0);
        assert!(matches!(store.agreement("a", "nobody", AnnotationField::RootCause), Err(AnnotationError::NoSharedCases(..))));
    }
}
