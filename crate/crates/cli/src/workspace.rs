//! On-disk workspace: named profiles, job records and result artifacts.
//!
//! Layout under the root:
//!
//! ```text
//! index.json             profiles and job records
//! profiles/<name>.json   degree profiles in the core JSON format
//! results/<job id>/      artifacts of finished jobs
//! ```
//!
//! The index lives in memory behind one `RwLock` and is rewritten
//! atomically (temp file + rename) inside the write lock, so readers always
//! see a consistent snapshot and concurrent updates are never lost.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sexit_core::DegreeProfile;

use crate::jobs::{Artifacts, JobKind, JobParams};

pub const ENV_ROOT: &str = "SEXIT_WORKSPACE";
const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("'{0}' already exists")]
    Conflict(String),
    #[error("'{0}' not found")]
    NotFound(String),
    #[error("invalid name '{0}': use 1-64 characters from [A-Za-z0-9_.-], not starting with '.'")]
    InvalidName(String),
    #[error("job {id} cannot go from {from:?} to {to:?}")]
    Transition {
        id: String,
        from: JobStatus,
        to: JobStatus,
    },
    #[error("job {0} has no result yet")]
    NotReady(String),
    #[error(transparent)]
    Core(#[from] sexit_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = WorkspaceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobStatus::Done | JobStatus::Failed | JobStatus::Cancelled
        )
    }

    /// Only `queued -> running -> {done, failed, cancelled}`.
    pub fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Done)
                | (JobStatus::Running, JobStatus::Failed)
                | (JobStatus::Running, JobStatus::Cancelled)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRef {
    pub primary: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub params: JobParams,
    pub status: JobStatus,
    pub progress: f64,
    #[serde(default)]
    pub result: Option<ResultRef>,
    #[serde(default)]
    pub error: Option<String>,
}

impl JobRecord {
    pub fn queued(id: String, params: JobParams) -> Self {
        JobRecord {
            id,
            kind: params.kind(),
            params,
            status: JobStatus::Queued,
            progress: 0.0,
            result: None,
            error: None,
        }
    }

    /// Applies a status change if the transition is allowed.
    pub fn advance(&mut self, next: JobStatus) -> Result<()> {
        if !self.status.can_become(next) {
            return Err(WorkspaceError::Transition {
                id: self.id.clone(),
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub file: String,
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub profiles: BTreeMap<String, ProfileEntry>,
    pub jobs: BTreeMap<String, JobRecord>,
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    index: RwLock<Index>,
}

pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl Workspace {
    /// Opens or creates a workspace. Jobs left queued or running by a
    /// previous process are marked failed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("profiles"))?;
        fs::create_dir_all(root.join("results"))?;
        let path = root.join(INDEX_FILE);
        let mut index: Index = if path.exists() {
            serde_json::from_slice(&fs::read(&path)?)?
        } else {
            Index::default()
        };
        let mut dirty = !path.exists();
        for job in index.jobs.values_mut() {
            if !job.status.is_terminal() {
                if job.status == JobStatus::Queued {
                    job.advance(JobStatus::Running)?;
                }
                job.advance(JobStatus::Failed)?;
                job.error = Some("interrupted: service stopped before the job finished".into());
                dirty = true;
            }
        }
        // staging directories of interrupted jobs
        for entry in fs::read_dir(root.join("results"))? {
            let entry = entry?;
            if entry.file_name().to_string_lossy().starts_with(".tmp-") {
                fs::remove_dir_all(entry.path())?;
            }
        }
        let ws = Workspace {
            root,
            index: RwLock::new(index),
        };
        if dirty {
            ws.persist(&ws.index.read().expect("index lock"))?;
        }
        Ok(ws)
    }

    /// Opens the workspace named by `SEXIT_WORKSPACE`, else `./sexit-workspace`.
    pub fn from_env() -> Result<Self> {
        let root = std::env::var_os(ENV_ROOT)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("sexit-workspace"));
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn persist(&self, index: &Index) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(index)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join(INDEX_FILE), &bytes)?;
        Ok(())
    }

    /// Runs `f` on the index under the writer lock and persists the result.
    fn write<T>(&self, f: impl FnOnce(&mut Index) -> Result<T>) -> Result<T> {
        let mut guard = self.index.write().expect("index lock");
        let mut next = guard.clone();
        let out = f(&mut next)?;
        self.persist(&next)?;
        *guard = next;
        Ok(out)
    }

    pub fn snapshot(&self) -> Index {
        self.index.read().expect("index lock").clone()
    }

    // profiles

    pub fn list_profiles(&self) -> BTreeMap<String, ProfileEntry> {
        self.index.read().expect("index lock").profiles.clone()
    }

    pub fn put_profile(&self, name: &str, profile: &DegreeProfile) -> Result<ProfileEntry> {
        if !valid_name(name) {
            return Err(WorkspaceError::InvalidName(name.into()));
        }
        let profile = profile.clone().validated()?;
        self.write(|index| {
            if index.profiles.contains_key(name) {
                return Err(WorkspaceError::Conflict(name.into()));
            }
            let file = format!("profiles/{name}.json");
            write_atomic(&self.root.join(&file), profile.to_json().as_bytes())?;
            let entry = ProfileEntry {
                file,
                rate: profile.design_rate(),
            };
            index.profiles.insert(name.into(), entry.clone());
            Ok(entry)
        })
    }

    pub fn get_profile(&self, name: &str) -> Result<DegreeProfile> {
        let file = {
            let index = self.index.read().expect("index lock");
            match index.profiles.get(name) {
                Some(entry) => entry.file.clone(),
                None => return Err(WorkspaceError::NotFound(name.into())),
            }
        };
        let text = fs::read_to_string(self.root.join(file))?;
        Ok(DegreeProfile::from_json(&text)?)
    }

    pub fn delete_profile(&self, name: &str) -> Result<()> {
        self.write(|index| {
            let entry = index
                .profiles
                .remove(name)
                .ok_or_else(|| WorkspaceError::NotFound(name.into()))?;
            match fs::remove_file(self.root.join(entry.file)) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
                _ => Ok(()),
            }
        })
    }

    // jobs

    pub fn insert_job(&self, record: JobRecord) -> Result<()> {
        self.write(|index| {
            if index.jobs.contains_key(&record.id) {
                return Err(WorkspaceError::Conflict(record.id.clone()));
            }
            index.jobs.insert(record.id.clone(), record);
            Ok(())
        })
    }

    pub fn job(&self, id: &str) -> Result<JobRecord> {
        self.index
            .read()
            .expect("index lock")
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| WorkspaceError::NotFound(id.into()))
    }

    pub fn jobs(&self) -> Vec<JobRecord> {
        self.index
            .read()
            .expect("index lock")
            .jobs
            .values()
            .cloned()
            .collect()
    }

    /// Atomically edits one job record.
    pub fn update_job<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut JobRecord) -> Result<T>,
    ) -> Result<T> {
        self.write(|index| {
            let job = index
                .jobs
                .get_mut(id)
                .ok_or_else(|| WorkspaceError::NotFound(id.into()))?;
            f(job)
        })
    }

    // results

    fn result_dir(&self, id: &str) -> PathBuf {
        self.root.join("results").join(id)
    }

    /// Writes the artifacts of a job into a staging directory, then moves
    /// it into place, so a result directory is either complete or absent.
    pub fn store_results(&self, id: &str, artifacts: &Artifacts) -> Result<ResultRef> {
        if !valid_name(id) {
            return Err(WorkspaceError::InvalidName(id.into()));
        }
        let staging = self.root.join("results").join(format!(".tmp-{id}"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        artifacts.write_dir(&staging)?;
        let dest = self.result_dir(id);
        if dest.exists() {
            fs::remove_dir_all(&dest)?;
        }
        fs::rename(staging, dest)?;
        Ok(ResultRef {
            primary: artifacts.primary.clone(),
            files: artifacts.files.iter().map(|(n, _)| n.clone()).collect(),
        })
    }

    pub fn has_results(&self, id: &str) -> bool {
        self.result_dir(id).exists()
    }

    /// Reads one artifact of a finished job; `None` selects the primary one.
    pub fn read_result(&self, id: &str, file: Option<&str>) -> Result<(String, Vec<u8>)> {
        let job = self.job(id)?;
        let result = match (&job.status, &job.result) {
            (JobStatus::Done, Some(r)) => r.clone(),
            _ => return Err(WorkspaceError::NotReady(id.into())),
        };
        let name = file.unwrap_or(&result.primary);
        if !result.files.iter().any(|f| f == name) {
            return Err(WorkspaceError::NotFound(format!("{id}/{name}")));
        }
        let bytes = fs::read(self.result_dir(id).join(name))?;
        Ok((name.to_string(), bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobs::{ProfileSource, ThresholdParams};
    use sexit_core::ChannelKind;

    fn params() -> JobParams {
        JobParams::Threshold(ThresholdParams {
            profile: ProfileSource::Named("reg36".into()),
            channel: ChannelKind::Bec,
        })
    }

    #[test]
    fn transitions_follow_the_lifecycle() {
        use JobStatus::*;
        assert!(Queued.can_become(Running));
        assert!(Running.can_become(Done));
        assert!(Running.can_become(Cancelled));
        assert!(!Queued.can_become(Done));
        assert!(!Done.can_become(Running));
        assert!(!Cancelled.can_become(Failed));
    }

    #[test]
    fn names_are_checked() {
        assert!(valid_name("code_a-mod.2"));
        assert!(!valid_name(""));
        assert!(!valid_name(".hidden"));
        assert!(!valid_name("a/b"));
        assert!(!valid_name(&"x".repeat(65)));
    }

    #[test]
    fn profiles_round_trip_and_stay_unique() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let p = DegreeProfile::regular(3, 6);
        let entry = ws.put_profile("reg36", &p).unwrap();
        assert_eq!(entry.rate, 0.5);
        assert!(matches!(
            ws.put_profile("reg36", &p),
            Err(WorkspaceError::Conflict(_))
        ));
        assert_eq!(ws.get_profile("reg36").unwrap(), p);
        let on_disk = fs::read_to_string(dir.path().join("profiles/reg36.json")).unwrap();
        assert_eq!(on_disk, p.to_json());
        ws.delete_profile("reg36").unwrap();
        assert!(matches!(
            ws.get_profile("reg36"),
            Err(WorkspaceError::NotFound(_))
        ));
        assert!(matches!(
            ws.delete_profile("reg36"),
            Err(WorkspaceError::NotFound(_))
        ));
    }

    #[test]
    fn index_survives_reopen_and_interrupted_jobs_fail() {
        let dir = tempfile::tempdir().unwrap();
        {
            let ws = Workspace::open(dir.path()).unwrap();
            ws.put_profile("reg36", &DegreeProfile::regular(3, 6))
                .unwrap();
            ws.insert_job(JobRecord::queued("j1".into(), params()))
                .unwrap();
            ws.insert_job(JobRecord::queued("j2".into(), params()))
                .unwrap();
            ws.update_job("j2", |j| j.advance(JobStatus::Running))
                .unwrap();
        }
        let ws = Workspace::open(dir.path()).unwrap();
        assert!(ws.list_profiles().contains_key("reg36"));
        for id in ["j1", "j2"] {
            let job = ws.job(id).unwrap();
            assert_eq!(job.status, JobStatus::Failed);
            assert!(job.error.is_some());
        }
    }

    #[test]
    fn failed_update_leaves_index_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        ws.insert_job(JobRecord::queued("j".into(), params()))
            .unwrap();
        let before = ws.snapshot();
        let err = ws.update_job("j", |j| {
            j.progress = 0.5;
            j.advance(JobStatus::Done)
        });
        assert!(matches!(err, Err(WorkspaceError::Transition { .. })));
        assert_eq!(ws.snapshot(), before);
    }

    #[test]
    fn concurrent_updates_are_not_lost() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for t in 0..8 {
                let ws = &ws;
                s.spawn(move || {
                    for k in 0..10 {
                        ws.insert_job(JobRecord::queued(format!("j{t}-{k}"), params()))
                            .unwrap();
                    }
                });
            }
        });
        assert_eq!(ws.jobs().len(), 80);
        let reopened = Workspace::open(dir.path()).unwrap();
        assert_eq!(reopened.jobs().len(), 80);
    }

    #[test]
    fn results_are_served_only_when_done() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        ws.insert_job(JobRecord::queued("j".into(), params()))
            .unwrap();
        assert!(matches!(
            ws.read_result("j", None),
            Err(WorkspaceError::NotReady(_))
        ));
        let art = Artifacts {
            primary: "a.txt".into(),
            files: vec![
                ("a.txt".into(), b"alpha".to_vec()),
                ("b.txt".into(), b"beta".to_vec()),
            ],
            summary: String::new(),
        };
        let r = ws.store_results("j", &art).unwrap();
        ws.update_job("j", |j| {
            j.advance(JobStatus::Running)?;
            j.advance(JobStatus::Done)?;
            j.result = Some(r);
            Ok(())
        })
        .unwrap();
        assert_eq!(ws.read_result("j", None).unwrap().1, b"alpha");
        assert_eq!(ws.read_result("j", Some("b.txt")).unwrap().1, b"beta");
        assert!(matches!(
            ws.read_result("j", Some("c.txt")),
            Err(WorkspaceError::NotFound(_))
        ));
        assert!(!dir.path().join("results/.tmp-j").exists());
    }
}
