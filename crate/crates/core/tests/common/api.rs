//! Driving a live server over HTTP.

use super::{random_step, Step};
use annoforge::config::Config;
use annoforge::formats::{parse_bracketed, parse_clusters, ClusterDocument};
use annoforge::server::{serve, SessionState, TaskStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::sync::Arc;

pub struct Server {
    pub base: String,
    pub store: Arc<TaskStore>,
    pub client: reqwest::Client,
    _dir: tempfile::TempDir,
}

/// An in-process server on an ephemeral port over a fresh data directory.
pub async fn spawn() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TaskStore::open(dir.path(), Config::default()).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, store.clone()));
    Server {
        base,
        store,
        client: reqwest::Client::new(),
        _dir: dir,
    }
}

impl Server {
    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn post_raw(&self, path: &str, body: &'static str) -> (u16, Value) {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    /// Download body and content type.
    pub async fn download(&self, sid: &str) -> (String, String) {
        let resp = self
            .client
            .get(format!("{}/sessions/{sid}/result", self.base))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let mime = resp.headers()["content-type"].to_str().unwrap().to_string();
        (mime, resp.text().await.unwrap())
    }

    /// Creates `task_json`, opens a session, sends `ops` scripted edits
    /// (undos and redos included) and checks the download against the
    /// server's in-memory state. Returns the number of edits accepted.
    pub async fn scripted_session(
        &self,
        task_json: &str,
        ops: usize,
        seed: u64,
    ) -> Result<usize, String> {
        let task: Value = serde_json::from_str(task_json).unwrap();
        let (status, created) = self.post("/tasks", task).await;
        if status != 201 && status != 200 {
            return Err(format!("create task: {status} {created}"));
        }
        let task_id = created["task_id"].as_str().unwrap().to_string();
        let (status, snap) = self
            .post(&format!("/tasks/{task_id}/sessions"), json!({}))
            .await;
        if status != 201 {
            return Err(format!("open session: {status} {snap}"));
        }
        let sid = snap["session_id"].as_str().unwrap().to_string();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut accepted = 0;
        for i in 0..ops {
            let state = self
                .store
                .with_session(&sid, |s| s.state().clone())
                .unwrap();
            let (status, body) = match random_step(&mut rng, &state, i as f64) {
                Step::Op(op) => {
                    self.post(
                        &format!("/sessions/{sid}/ops"),
                        serde_json::to_value(op).unwrap(),
                    )
                    .await
                }
                Step::Undo => self.post(&format!("/sessions/{sid}/undo"), json!({})).await,
                Step::Redo => self.post(&format!("/sessions/{sid}/redo"), json!({})).await,
            };
            match status {
                200 => accepted += 1,
                422 if body["code"].is_string() => {}
                _ => return Err(format!("step {i}: {status} {body}")),
            }
        }
        let (mime, text) = self.download(&sid).await;
        let state = self
            .store
            .with_session(&sid, |s| s.state().clone())
            .unwrap();
        match state {
            SessionState::Parsing(doc) => {
                if !mime.starts_with("text/plain") {
                    return Err(format!("tree served as {mime}"));
                }
                let back = parse_bracketed(&text, Some(doc.tokens())).map_err(|e| e.to_string())?;
                if !back.structurally_eq(&doc) {
                    return Err(format!("download {text:?} differs from the session tree"));
                }
            }
            SessionState::Clustering(g) => {
                if mime != "application/json" {
                    return Err(format!("clusters served as {mime}"));
                }
                let doc = ClusterDocument::from_json(&text).map_err(|e| e.to_string())?;
                let back = parse_clusters(&doc).map_err(|e| e.to_string())?;
                if back != g || g.node_ids().any(|id| back.color_of(id) != g.color_of(id)) {
                    return Err("download differs from the session graph".into());
                }
            }
        }
        Ok(accepted)
    }
}

/// Starts the `annoforge serve` binary on an ephemeral port and waits for
/// it to announce its address.
pub fn launch(data: &std::path::Path) -> (std::process::Child, String) {
    use std::io::BufRead;
    let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_annoforge"))
        .args(["serve", "--port", "0", "--data"])
        .arg(data)
        .env_remove("ANNOFORGE_DATA")
        .env("RUST_LOG", "warn")
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    std::io::BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .expect("address line")
        .to_string();
    (child, base)
}

/// Client-side view of a server reached only through its URL.
pub struct Remote {
    pub base: String,
    pub client: reqwest::Client,
}

impl Remote {
    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (
            resp.status().as_u16(),
            resp.json().await.unwrap_or(Value::Null),
        )
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        (
            resp.status().as_u16(),
            resp.json().await.unwrap_or(Value::Null),
        )
    }
}

/// Drives a session on a live binary, SIGKILLs it mid-session, restarts it
/// on the same data and compares snapshots and downloads.
pub async fn kill_and_restart(steps: usize, seed: u64) -> Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let (mut child, base) = launch(dir.path());
    let remote = Remote {
        base,
        client: reqwest::Client::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut expected = Vec::new();
    let mut accepted = 0;
    for (task, json) in [
        ("c", super::clustering_task_json("c", 12)),
        ("p", super::parsing_task_json("p", &[12])),
    ] {
        remote
            .post("/tasks", serde_json::from_str(&json).unwrap())
            .await;
        let (_, snap) = remote
            .post(&format!("/tasks/{task}/sessions"), json!({}))
            .await;
        let sid = snap["session_id"].as_str().unwrap().to_string();
        for i in 0..steps {
            // Rebuild the current state from the snapshot, as a client would.
            let (_, snap) = remote.get(&format!("/sessions/{sid}")).await;
            let (status, body) = match step_from_snapshot(&mut rng, &snap, i as f64) {
                Step::Op(op) => {
                    remote
                        .post(
                            &format!("/sessions/{sid}/ops"),
                            serde_json::to_value(op).unwrap(),
                        )
                        .await
                }
                Step::Undo => {
                    remote
                        .post(&format!("/sessions/{sid}/undo"), json!({}))
                        .await
                }
                Step::Redo => {
                    remote
                        .post(&format!("/sessions/{sid}/redo"), json!({}))
                        .await
                }
            };
            accepted += usize::from(status == 200);
            if status != 200 && status != 422 {
                return Err(format!("step {i}: {status} {body}"));
            }
        }
        let (_, snap) = remote.get(&format!("/sessions/{sid}")).await;
        let text = remote
            .client
            .get(format!("{}/sessions/{sid}/result", remote.base))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        expected.push((sid, snap, text));
    }
    child.kill().unwrap();
    child.wait().unwrap();

    let (mut child, base) = launch(dir.path());
    let remote = Remote {
        base,
        client: reqwest::Client::new(),
    };
    let mut outcome = Ok(accepted);
    for (sid, snap, text) in expected {
        let (status, again) = remote.get(&format!("/sessions/{sid}")).await;
        let download = remote
            .client
            .get(format!("{}/sessions/{sid}/result", remote.base))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        if status != 200 || again != snap || download != text {
            outcome = Err(format!("session {sid} differs after restart"));
            break;
        }
    }
    child.kill().unwrap();
    child.wait().unwrap();
    outcome
}

/// Next scripted step chosen from a snapshot alone, as a client would.
fn step_from_snapshot<R: rand::Rng>(rng: &mut R, snap: &Value, clock: f64) -> Step {
    let state = &snap["state"];
    if state.get("document").is_some() {
        let doc: ClusterDocument = serde_json::from_value(state["document"].clone()).unwrap();
        return random_step(
            rng,
            &SessionState::Clustering(parse_clusters(&doc).unwrap()),
            clock,
        );
    }
    match rng.random_range(0..10) {
        0 => return Step::Undo,
        1 => return Step::Redo,
        _ => {}
    }
    let nodes = state["nodes"].as_array().unwrap();
    let root = &state["root"];
    let internal: Vec<&Value> = nodes
        .iter()
        .filter(|n| n["kind"]["type"] == "internal")
        .collect();
    let op = match rng.random_range(0..10) {
        0..6 => {
            let parents: Vec<&&Value> = internal
                .iter()
                .filter(|n| n["children"].as_array().unwrap().len() >= 2)
                .collect();
            let kids = parents[rng.random_range(0..parents.len())]["children"]
                .as_array()
                .unwrap();
            let k = rng.random_range(2..=kids.len());
            let start = rng.random_range(0..=kids.len() - k);
            json!({"op": "group_nodes", "children": kids[start..start + k]})
        }
        6..8 => {
            let id = &internal[rng.random_range(0..internal.len())]["id"];
            json!({"op": "delete_node", "id": id})
        }
        _ => {
            let id = if rng.random_bool(0.5) {
                root
            } else {
                &internal[rng.random_range(0..internal.len())]["id"]
            };
            json!({"op": "toggle_fold", "id": id})
        }
    };
    let mut op = op;
    op["timestamp"] = json!(clock);
    Step::Op(serde_json::from_value(op).unwrap())
}
