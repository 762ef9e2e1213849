//! Durable task and session store.
//!
//! Layout under the persistence root:
//!
//! ```text
//! tasks/<task_id>.json         one task descriptor per file
//! sessions/<session_id>.ndjson append-only session log, one record per line
//! ```
//!
//! Every mutation is appended to the session log and synced before the
//! in-memory session changes, so an acknowledged edit survives a crash.

use super::session::{initial_state, LayoutView, Session, SessionState, Snapshot, StateDelta};
use super::ServerError;
use crate::cluster_graph::{proximity_target, NodeId};
use crate::config::Config;
use crate::force_layout::group_centroids;
use crate::formats::{
    serialize_clusters, serialize_tree, TaskBody, TaskDescriptor, TaskKind, CLUSTER_MIME, TREE_MIME,
};
use crate::geometry::Point;
use crate::ops::{EditOp, OpKind};
use crate::stroke_geometry::{interpret_stroke, node_positions, render_edges, EditIntent, Stroke};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

const TASKS_DIR: &str = "tasks";
const SESSIONS_DIR: &str = "sessions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogRecord {
    Open {
        session_id: String,
        task_id: String,
        sentence: usize,
    },
    Apply {
        edit: EditOp,
    },
    Undo,
    Redo,
}

#[derive(Debug)]
struct Entry {
    session: Session,
    log: File,
}

impl Entry {
    fn append(&mut self, record: &LogRecord) -> Result<(), ServerError> {
        let mut line = serde_json::to_vec(record).expect("log records serialize");
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub kind: TaskKind,
    /// Number of sentences (parsing) or mentions (clustering).
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpResponse {
    pub version: u64,
    pub cursor: usize,
    pub log_len: usize,
    pub can_undo: bool,
    pub can_redo: bool,
    pub delta: StateDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DragOutcome {
    pub node: NodeId,
    pub position: Point,
    /// Node the dragged one would link to if dropped here.
    pub target: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrokeOutcome {
    pub intent: EditIntent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub applied: Option<OpResponse>,
}

#[derive(Debug)]
pub struct TaskStore {
    root: PathBuf,
    config: Config,
    tasks: RwLock<BTreeMap<String, TaskDescriptor>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Entry>>>>,
}

fn sync_dir(dir: &Path) -> std::io::Result<()> {
    // Directory handles cannot be opened for syncing on every platform.
    if cfg!(unix) {
        File::open(dir)?.sync_all()?;
    }
    Ok(())
}

impl TaskStore {
    /// Opens (creating if needed) the store at `root` and recovers every
    /// task and session found there.
    pub fn open(root: impl Into<PathBuf>, config: Config) -> Result<Self, ServerError> {
        let root = root.into();
        fs::create_dir_all(root.join(TASKS_DIR))?;
        fs::create_dir_all(root.join(SESSIONS_DIR))?;
        let store = Self {
            root,
            config,
            tasks: RwLock::new(BTreeMap::new()),
            sessions: RwLock::new(BTreeMap::new()),
        };
        store.recover_tasks()?;
        store.recover_sessions()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn recover_tasks(&self) -> Result<(), ServerError> {
        let mut tasks = self.tasks.write().expect("task lock");
        for path in sorted_entries(&self.root.join(TASKS_DIR), "json")? {
            let text = fs::read_to_string(&path)?;
            let mut desc = TaskDescriptor::from_json(&text)
                .map_err(|e| ServerError::CorruptLog(format!("{}: {e}", path.display())))?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let id = desc.task_id.get_or_insert(stem).clone();
            tasks.insert(id, desc);
        }
        tracing::info!(count = tasks.len(), "recovered tasks");
        Ok(())
    }

    fn recover_sessions(&self) -> Result<(), ServerError> {
        let tasks = self.tasks.read().expect("task lock");
        let mut sessions = self.sessions.write().expect("session lock");
        for path in sorted_entries(&self.root.join(SESSIONS_DIR), "ndjson")? {
            let Some(entry) = self.recover_session(&path, &tasks)? else {
                continue;
            };
            sessions.insert(entry.session.id.clone(), Arc::new(Mutex::new(entry)));
        }
        tracing::info!(count = sessions.len(), "recovered sessions");
        Ok(())
    }

    fn recover_session(
        &self,
        path: &Path,
        tasks: &BTreeMap<String, TaskDescriptor>,
    ) -> Result<Option<Entry>, ServerError> {
        let corrupt = |what: String| ServerError::CorruptLog(format!("{}: {what}", path.display()));
        let mut file = OpenOptions::new().read(true).append(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut records = Vec::new();
        let mut valid_len = 0usize;
        let mut start = 0usize;
        while start < bytes.len() {
            let (end, terminated) = match bytes[start..].iter().position(|&b| b == b'\n') {
                Some(i) => (start + i, true),
                None => (bytes.len(), false),
            };
            match serde_json::from_slice::<LogRecord>(&bytes[start..end]) {
                Ok(r) => {
                    records.push(r);
                    valid_len = end + usize::from(terminated);
                }
                // The final line may be torn by a crash mid-append; that
                // record was never acknowledged.
                Err(_) if !terminated => break,
                Err(e) => return Err(corrupt(format!("record {}: {e}", records.len() + 1))),
            }
            start = end + 1;
        }
        if valid_len < bytes.len() {
            tracing::warn!(path = %path.display(), "dropping torn final log record");
            file.set_len(valid_len as u64)?;
            file.sync_data()?;
        } else if valid_len > 0 && bytes[valid_len - 1] != b'\n' {
            file.write_all(b"\n")?;
            file.sync_data()?;
        }

        let mut records = records.into_iter();
        let Some(LogRecord::Open {
            session_id,
            task_id,
            sentence,
        }) = records.next()
        else {
            if bytes.is_empty() || valid_len == 0 {
                // Crashed while opening; the session was never handed out.
                tracing::warn!(path = %path.display(), "removing session log without an open record");
                fs::remove_file(path)?;
                return Ok(None);
            }
            return Err(corrupt("first record is not an open record".into()));
        };
        let task = tasks
            .get(&task_id)
            .ok_or_else(|| corrupt(format!("references unknown task {task_id:?}")))?;
        let initial = initial_state(task, sentence, &self.config)?;
        let mut session = Session::new(session_id, task_id, sentence, initial, &self.config);
        for (i, record) in records.enumerate() {
            let step = match record {
                LogRecord::Apply { edit } => {
                    session.apply(edit).map(drop).map_err(ServerError::from)
                }
                LogRecord::Undo => session.undo(),
                LogRecord::Redo => session.redo(),
                LogRecord::Open { .. } => Err(corrupt("repeated open record".into())),
            };
            step.map_err(|e| corrupt(format!("record {}: {e}", i + 2)))?;
        }
        Ok(Some(Entry { session, log: file }))
    }

    // -- tasks ------------------------------------------------------------

    /// Stores a task. Returns its id and whether it was newly created;
    /// resubmitting an identical task under the same explicit id is a no-op.
    pub fn create_task(&self, mut desc: TaskDescriptor) -> Result<(String, bool), ServerError> {
        desc.validate()?;
        let mut tasks = self.tasks.write().expect("task lock");
        let id = match &desc.task_id {
            Some(id) => {
                if let Some(existing) = tasks.get(id) {
                    return if *existing == desc {
                        Ok((id.clone(), false))
                    } else {
                        Err(ServerError::TaskConflict(id.clone()))
                    };
                }
                id.clone()
            }
            None => {
                let id = uuid::Uuid::new_v4().to_string();
                desc.task_id = Some(id.clone());
                id
            }
        };
        let dir = self.root.join(TASKS_DIR);
        let tmp = dir.join(format!("{id}.json.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(desc.to_json().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, dir.join(format!("{id}.json")))?;
        sync_dir(&dir)?;
        tasks.insert(id.clone(), desc);
        Ok((id, true))
    }

    pub fn task(&self, id: &str) -> Result<TaskDescriptor, ServerError> {
        self.tasks
            .read()
            .expect("task lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServerError::UnknownTask(id.to_string()))
    }

    pub fn list_tasks(&self) -> Vec<TaskSummary> {
        self.tasks
            .read()
            .expect("task lock")
            .iter()
            .map(|(id, desc)| TaskSummary {
                task_id: id.clone(),
                kind: desc.kind(),
                items: match &desc.body {
                    TaskBody::Parsing(f) => f.sentences.len(),
                    TaskBody::Clustering(p) => p.mentions.len(),
                },
            })
            .collect()
    }

    // -- sessions ---------------------------------------------------------

    fn entry(&self, sid: &str) -> Result<Arc<Mutex<Entry>>, ServerError> {
        self.sessions
            .read()
            .expect("session lock")
            .get(sid)
            .cloned()
            .ok_or_else(|| ServerError::UnknownSession(sid.to_string()))
    }

    fn with_entry<R>(
        &self,
        sid: &str,
        f: impl FnOnce(&mut Entry) -> Result<R, ServerError>,
    ) -> Result<R, ServerError> {
        let entry = self.entry(sid)?;
        let mut guard = entry.lock().expect("session poisoned");
        f(&mut guard)
    }

    /// Opens a fresh session. `sentence` picks the sentence of a parsing
    /// task (default 0) and must be absent or 0 for clustering.
    pub fn open_session(
        &self,
        task_id: &str,
        sentence: Option<usize>,
    ) -> Result<Snapshot, ServerError> {
        let task = self.task(task_id)?;
        let sentence = sentence.unwrap_or(0);
        if task.kind() == TaskKind::Clustering && sentence != 0 {
            return Err(ServerError::UnknownSentence {
                sentence,
                available: 1,
            });
        }
        let initial = initial_state(&task, sentence, &self.config)?;
        let sid = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(SESSIONS_DIR);
        let log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(dir.join(format!("{sid}.ndjson")))?;
        let mut entry = Entry {
            session: Session::new(
                sid.clone(),
                task_id.to_string(),
                sentence,
                initial,
                &self.config,
            ),
            log,
        };
        entry.append(&LogRecord::Open {
            session_id: sid.clone(),
            task_id: task_id.to_string(),
            sentence,
        })?;
        sync_dir(&dir)?;
        let snapshot = entry.session.snapshot(&self.config.palette);
        self.sessions
            .write()
            .expect("session lock")
            .insert(sid, Arc::new(Mutex::new(entry)));
        Ok(snapshot)
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .expect("session lock")
            .keys()
            .cloned()
            .collect()
    }

    /// Runs `f` on a consistent view of a session.
    pub fn with_session<R>(
        &self,
        sid: &str,
        f: impl FnOnce(&Session) -> R,
    ) -> Result<R, ServerError> {
        self.with_entry(sid, |e| Ok(f(&e.session)))
    }

    pub fn snapshot(&self, sid: &str) -> Result<Snapshot, ServerError> {
        self.with_session(sid, |s| s.snapshot(&self.config.palette))
    }

    /// Validates, logs, then commits one op. With `base_version` set the op
    /// is refused unless the session is still at that version.
    pub fn apply(
        &self,
        sid: &str,
        op: EditOp,
        base_version: Option<u64>,
    ) -> Result<OpResponse, ServerError> {
        self.with_entry(sid, |e| apply_logged(e, op, base_version))
    }

    pub fn undo(&self, sid: &str) -> Result<Snapshot, ServerError> {
        self.with_entry(sid, |e| {
            if !e.session.can_undo() {
                return Err(ServerError::NothingToUndo);
            }
            e.append(&LogRecord::Undo)?;
            e.session.undo()?;
            Ok(e.session.snapshot(&self.config.palette))
        })
    }

    pub fn redo(&self, sid: &str) -> Result<Snapshot, ServerError> {
        self.with_entry(sid, |e| {
            if !e.session.can_redo() {
                return Err(ServerError::NothingToRedo);
            }
            e.append(&LogRecord::Redo)?;
            e.session.redo()?;
            Ok(e.session.snapshot(&self.config.palette))
        })
    }

    /// The current annotation in its download encoding, with MIME type.
    pub fn result(&self, sid: &str) -> Result<(&'static str, String), ServerError> {
        self.with_session(sid, |s| match s.state() {
            SessionState::Parsing(doc) => (TREE_MIME, serialize_tree(doc).0),
            SessionState::Clustering(g) => (CLUSTER_MIME, serialize_clusters(g).to_json()),
        })
    }

    /// Current view positions. Clustering layouts advance a few steps per
    /// poll so the picture keeps settling after edits.
    pub fn layout(&self, sid: &str) -> Result<LayoutView, ServerError> {
        let config = &self.config;
        self.with_entry(sid, |e| {
            let Entry { session, .. } = e;
            let state = session.state().clone();
            Ok(match state {
                SessionState::Clustering(g) => {
                    let layout = session
                        .layout_mut()
                        .expect("clustering sessions carry a layout");
                    for _ in 0..config.steps_per_poll {
                        layout.advance(&g, &config.layout)?;
                    }
                    LayoutView::Clustering {
                        canvas: layout.canvas,
                        radius: config.layout.radius,
                        positions: layout.positions.clone(),
                        centroids: group_centroids(layout, &g),
                    }
                }
                SessionState::Parsing(doc) => LayoutView::Parsing {
                    positions: node_positions(&doc, &config.render),
                    edges: render_edges(&doc, &config.render),
                },
            })
        })
    }

    /// Moves a mention while it is being dragged and reports the node it
    /// would link to on drop.
    pub fn drag(&self, sid: &str, node: NodeId, to: Point) -> Result<DragOutcome, ServerError> {
        if !to.is_finite() {
            return Err(ServerError::BadRequest(
                "drag position must be finite".into(),
            ));
        }
        let radius = self.config.layout.radius;
        self.with_entry(sid, |e| {
            let kind = e.session.kind();
            let layout = e
                .session
                .layout_mut()
                .ok_or(ServerError::BadRequest(format!(
                    "drag applies to clustering sessions, not {kind}"
                )))?;
            layout.set_position(node, to)?;
            let target = proximity_target(&layout.positions, node, radius)
                .map_err(super::ApplyError::from)?;
            Ok(DragOutcome {
                node,
                position: layout.positions[&node],
                target,
            })
        })
    }

    /// Interprets a stroke drawn over the current tree; with `apply` the
    /// resulting edit goes through the op log like any other.
    pub fn stroke(
        &self,
        sid: &str,
        stroke: &Stroke,
        apply: bool,
        timestamp: f64,
    ) -> Result<StrokeOutcome, ServerError> {
        let render = self.config.render;
        self.with_entry(sid, |e| {
            let SessionState::Parsing(doc) = e.session.state() else {
                return Err(ServerError::BadRequest(format!(
                    "strokes apply to parsing sessions, not {}",
                    e.session.kind()
                )));
            };
            let edges = render_edges(doc, &render);
            let intent = interpret_stroke(doc, &edges, stroke)?;
            let op = match (&intent, apply) {
                (EditIntent::Delete { node }, true) => Some(OpKind::DeleteNode { id: *node }),
                (EditIntent::Group { children }, true) => Some(OpKind::GroupNodes {
                    children: children.clone(),
                }),
                _ => None,
            };
            let applied = match op {
                Some(kind) => Some(apply_logged(e, EditOp::new(kind, timestamp), None)?),
                None => None,
            };
            Ok(StrokeOutcome { intent, applied })
        })
    }
}

fn apply_logged(
    e: &mut Entry,
    op: EditOp,
    base_version: Option<u64>,
) -> Result<OpResponse, ServerError> {
    if let Some(expected) = base_version {
        let actual = e.session.version();
        if expected != actual {
            return Err(ServerError::StaleSession { expected, actual });
        }
    }
    if !op.timestamp.is_finite() {
        return Err(ServerError::BadRequest("timestamp must be finite".into()));
    }
    let (next, delta) = e.session.try_apply(&op)?;
    e.append(&LogRecord::Apply { edit: op.clone() })?;
    e.session.commit(op, next);
    let s = &e.session;
    Ok(OpResponse {
        version: s.version(),
        cursor: s.cursor(),
        log_len: s.op_log().len(),
        can_undo: s.can_undo(),
        can_redo: s.can_redo(),
        delta,
    })
}

fn sorted_entries(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, ServerError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|x| x.to_str()) == Some(extension))
        .collect();
    paths.sort();
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::SentenceFile;
    use crate::tree_editor::TreeNodeId;

    fn parsing_task(id: Option<&str>) -> TaskDescriptor {
        TaskDescriptor {
            task_id: id.map(str::to_string),
            body: TaskBody::Parsing(SentenceFile {
                sentences: vec!["My dog also likes eating sausage"
                    .split(' ')
                    .map(String::from)
                    .collect()],
            }),
            display_html: "<p>parse</p>".into(),
        }
    }

    fn group(ids: &[u32]) -> EditOp {
        EditOp::new(
            OpKind::GroupNodes {
                children: ids.iter().map(|&i| TreeNodeId(i)).collect(),
            },
            0.0,
        )
    }

    #[test]
    fn task_creation_is_idempotent_per_explicit_id() {
        let dir = tempfile::tempdir().unwrap();
        let store = TaskStore::open(dir.path(), Config::default()).unwrap();
        assert_eq!(
            store.create_task(parsing_task(Some("t1"))).unwrap(),
            ("t1".into(), true)
        );
        assert_eq!(
            store.create_task(parsing_task(Some("t1"))).unwrap(),
            ("t1".into(), false)
        );
        let mut other = parsing_task(Some("t1"));
        other.display_html.clear();
        assert!(matches!(
            store.create_task(other),
            Err(ServerError::TaskConflict(_))
        ));
        let (fresh, created) = store.create_task(parsing_task(None)).unwrap();
        assert!(created && fresh != "t1");
        assert_eq!(store.list_tasks().len(), 2);
    }

    #[test]
    fn torn_tail_is_dropped_on_recovery() {
        let dir = tempfile::tempdir().unwrap();
        let sid = {
            let store = TaskStore::open(dir.path(), Config::default()).unwrap();
            store.create_task(parsing_task(Some("t"))).unwrap();
            let sid = store.open_session("t", None).unwrap().session_id;
            store.apply(&sid, group(&[0, 1]), None).unwrap();
            sid
        };
        let path = dir.path().join(SESSIONS_DIR).join(format!("{sid}.ndjson"));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"type":"apply","edit":{"op":"group_n"#)
            .unwrap();
        drop(f);

        let store = TaskStore::open(dir.path(), Config::default()).unwrap();
        let snap = store.snapshot(&sid).unwrap();
        assert_eq!(snap.cursor, 1);
        store.apply(&sid, group(&[2, 3]), None).unwrap();
        let store = TaskStore::open(dir.path(), Config::default()).unwrap();
        assert_eq!(
            store.result(&sid).unwrap().1,
            "(My dog) (also likes) eating sausage"
        );
    }

    #[test]
    fn corrupt_middle_record_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let sid = {
            let store = TaskStore::open(dir.path(), Config::default()).unwrap();
            store.create_task(parsing_task(Some("t"))).unwrap();
            store.open_session("t", None).unwrap().session_id
        };
        let path = dir.path().join(SESSIONS_DIR).join(format!("{sid}.ndjson"));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"garbage\n{\"type\":\"undo\"}\n").unwrap();
        drop(f);
        let err = TaskStore::open(dir.path(), Config::default()).unwrap_err();
        assert_eq!(err.code(), "CorruptLog");
    }

    #[test]
    fn stale_base_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let store = TaskStore::open(dir.path(), Config::default()).unwrap();
        store.create_task(parsing_task(Some("t"))).unwrap();
        let sid = store.open_session("t", None).unwrap().session_id;
        store.apply(&sid, group(&[0, 1]), Some(0)).unwrap();
        let err = store.apply(&sid, group(&[2, 3]), Some(0)).unwrap_err();
        assert!(matches!(
            err,
            ServerError::StaleSession {
                expected: 0,
                actual: 1
            }
        ));
        assert_eq!(err.status(), 409);
    }
}
