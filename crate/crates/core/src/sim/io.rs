use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generator::ActivityLog;
use super::profile::SkillProfile;
use crate::convo::{parse_conversation, serialize_conversation, ClockTime, Conversation, ParseError};
use crate::tracker::MistakeEvent;

/// Everything in an [`ActivityLog`] except the events themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSidecar {
    pub id: String,
    pub seed: u64,
    pub start_time: ClockTime,
    pub mistakes: Vec<MistakeEvent>,
    pub profile: SkillProfile,
}

#[derive(Debug, thiserror::Error)]
pub enum LogIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogIoError + '_ {
    move |source| LogIoError::Io { path: path.to_path_buf(), source }
}

/// Writes `<dir>/<id>.txt` (the events) and `<dir>/<id>.json` (the sidecar).
pub fn write_log(dir: &Path, id: &str, log: &ActivityLog) -> Result<(), LogIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let txt = dir.join(format!("{id}.txt"));
    fs::write(&txt, serialize_conversation(&log.conversation)).map_err(io_err(&txt))?;
    let sidecar = LogSidecar {
        id: id.to_string(),
        seed: log.seed,
        start_time: log.start_time,
        mistakes: log.mistakes.clone(),
        profile: log.profile.clone(),
    };
    let json = dir.join(format!("{id}.json"));
    let body = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&json, body + "\n").map_err(io_err(&json))
}

pub fn read_log(dir: &Path, id: &str) -> Result<ActivityLog, LogIoError> {
    let txt = dir.join(format!("{id}.txt"));
    let json = dir.join(format!("{id}.json"));
    let text = fs::read_to_string(&txt).map_err(io_err(&txt))?;
    let conversation =
        parse_conversation(&text).map_err(|source| LogIoError::Parse { path: txt.clone(), source })?.with_source(id);
    let raw = fs::read_to_string(&json).map_err(io_err(&json))?;
    let side: LogSidecar =
        serde_json::from_str(&raw).map_err(|source| LogIoError::Json { path: json.clone(), source })?;
    Ok(ActivityLog {
        conversation,
        mistakes: side.mistakes,
        seed: side.seed,
        start_time: side.start_time,
        profile: side.profile,
    })
}

/// Reads every log in `dir` (each `.json` sidecar with its `.txt`), sorted by id.
pub fn read_log_dir(dir: &Path) -> Result<Vec<ActivityLog>, LogIoError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    ids.iter().map(|id| read_log(dir, id)).collect()
}

/// Reads every `.txt` conversation in `dir`, sorted by file name. Each
/// conversation's source is its file stem.
pub fn read_conversation_dir(dir: &Path) -> Result<Vec<Conversation>, LogIoError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            parse_conversation(&text)
                .map(|c| c.with_source(stem))
                .map_err(|source| LogIoError::Parse { path: path.clone(), source })
        })
        .collect()
}

/// Writes `<dir>/<id>.txt`.
pub fn write_conversation(dir: &Path, id: &str, c: &Conversation) -> Result<(), LogIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{id}.txt"));
    fs::write(&path, serialize_conversation(c)).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generator::generate_log;
    use crate::task::TaskDef;

    #[test]
    fn round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let task = TaskDef::table_assembly();
        let profile = SkillProfile::default().with_skill(0.0).with_mistake_prob(1.0);
        let log = generate_log(&profile, task.targets(), 5, ClockTime::from_hms(11, 0, 0).unwrap()).unwrap();
        write_log(dir.path(), "log-0001", &log).unwrap();
        let back = read_log(dir.path(), "log-0001").unwrap();
        assert_eq!(back.mistakes, log.mistakes);
        assert_eq!(back.conversation.dialogues, log.conversation.dialogues);
        assert_eq!(back.profile, log.profile);
        let sidecar = fs::read_to_string(dir.path().join("log-0001.json")).unwrap();
        assert!(sidecar.contains("\"kind\": \"screw_frame_before_all_placed\""));
        assert_eq!(read_log_dir(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn missing_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_log(dir.path(), "nope").unwrap_err();
        assert!(err.to_string().contains("nope.txt"));
    }

    #[test]
    fn conversation_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let task = TaskDef::table_assembly();
        let log =
            generate_log(&SkillProfile::default(), task.targets(), 9, ClockTime::from_hms(8, 0, 0).unwrap()).unwrap();
        write_conversation(dir.path(), "b", &log.conversation).unwrap();
        write_conversation(dir.path(), "a", &log.conversation).unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let back = read_conversation_dir(dir.path()).unwrap();
        assert_eq!(back.iter().map(|c| c.source.as_deref().unwrap()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(back[0].dialogues, log.conversation.dialogues);
        fs::write(dir.path().join("c.txt"), "garbage").unwrap();
        assert!(matches!(read_conversation_dir(dir.path()), Err(LogIoError::Parse { .. })));
    }
}
