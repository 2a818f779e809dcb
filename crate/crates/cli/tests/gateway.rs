use std::path::{Path, PathBuf};
use std::sync::Arc;

use agentos_cli::agents::{build_fleet_with_clock, Fleet};
use agentos_cli::config::Settings;
use agentos_cli::gateway::{canonical_replies, Gateway};
use agentos_core::ManualClock;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tempfile::TempDir;

fn sample_character() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../characters/sample.character.json")
}

const SCRIPT: &str = r#"[
  {"matcher": {"contains": "draw a red square"}, "response": "Here you go.\nACTION: GENERATE_IMAGE", "consumeOnce": true},
  {"matcher": {"contains": "please stay quiet"}, "response": "...\nACTION: IGNORE", "consumeOnce": true},
  {"matcher": "default", "response": "Hello there.\nACTION: NONE"}
]"#;

struct Server {
    base: String,
    fleet: Fleet,
    _dir: TempDir,
}

fn fleet_in(dir: &Path) -> Fleet {
    let script = dir.join("script.json");
    std::fs::write(&script, SCRIPT).unwrap();
    let mut settings = Settings::default();
    settings.set("MODEL_SCRIPT", script.display().to_string());
    settings.set("MEDIA_ROOT", dir.display().to_string());
    build_fleet_with_clock(&[sample_character()], &settings, Arc::new(ManualClock::new(1_000))).unwrap()
}

async fn serve() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let fleet = fleet_in(dir.path());
    fleet.start_clients().unwrap();
    let media = dir.path().join("generatedImages");
    let app = Gateway::new(fleet.clone()).router(media);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server { base, fleet, _dir: dir }
}

impl Server {
    fn agent(&self) -> String {
        self.fleet.agents[0].agent_id().to_owned()
    }

    async fn post(&self, body: Value) -> (StatusCode, Value) {
        let res = reqwest::Client::new()
            .post(format!("{}/agents/{}/message", self.base, self.agent()))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = res.status();
        (status, res.json().await.unwrap())
    }

    async fn memories(&self, room: &str) -> Vec<Value> {
        let url = format!("{}/agents/{}/memories?roomId={room}&count=1000", self.base, self.agent());
        reqwest::get(url).await.unwrap().json().await.unwrap()
    }
}

#[tokio::test]
async fn health_and_agent_listing() {
    let s = serve().await;
    let health: Value = reqwest::get(format!("{}/health", s.base)).await.unwrap().json().await.unwrap();
    assert_eq!(health, json!({"status": "ok"}));
    let agents: Value = reqwest::get(format!("{}/agents", s.base)).await.unwrap().json().await.unwrap();
    assert_eq!(agents, json!([{"id": s.agent(), "name": "Eliza"}]));
}

#[tokio::test]
async fn hi_gets_exactly_one_reply() {
    let s = serve().await;
    let (status, body) = s.post(json!({"userId": "u1", "text": "hi"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([{"action": "NONE", "attachments": [], "text": "Hello there."}]));
    // room defaults to web:<userId>
    let mem = s.memories("web:u1").await;
    assert!(mem.iter().any(|m| m["content"]["text"] == "hi"));
    assert!(mem.iter().all(|m| m.get("embedding").is_none()));
}

#[tokio::test]
async fn body_is_the_kernel_reply_list() {
    let s = serve().await;
    let (_, body) = s.post(json!({"userId": "u", "roomId": "r", "text": "what's new?"})).await;
    // an identical fleet driven directly yields the same bytes
    let dir = tempfile::tempdir().unwrap();
    let direct = fleet_in(dir.path());
    let rt = &direct.agents[0];
    let replies = rt.process_message(rt.new_message("u", "r", "what's new?")).unwrap();
    assert_eq!(
        serde_json::to_string(&body).unwrap(),
        serde_json::to_string(&canonical_replies(&replies)).unwrap()
    );
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let s = serve().await;
    let (status, body) = s.post(json!({"userId": "u1", "text": ""})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["violations"][0]["path"], "text");

    let (status, body) = s.post(json!({"text": 5})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["violations"].as_array().unwrap().len(), 2);

    let res = reqwest::Client::new()
        .post(format!("{}/agents/{}/message", s.base, s.agent()))
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);

    let res = reqwest::get(format!("{}/agents/{}/memories", s.base, s.agent())).await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_agent_is_404() {
    let s = serve().await;
    let res = reqwest::Client::new()
        .post(format!("{}/agents/nobody/message", s.base))
        .json(&json!({"userId": "u", "text": "hi"}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
    let res = reqwest::get(format!("{}/agents/nobody/memories?roomId=r", s.base)).await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn ignore_sends_nothing() {
    let s = serve().await;
    let (status, body) = s.post(json!({"userId": "u", "text": "please stay quiet"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

fn messages(mem: &[Value]) -> Vec<(bool, String)> {
    mem.iter()
        .filter(|m| m["kind"] == "MESSAGE")
        .map(|m| (m["userId"] == m["agentId"], m["content"]["text"].as_str().unwrap().to_owned()))
        .collect()
}

#[tokio::test]
async fn sequential_posts_are_processed_in_order() {
    let s = serve().await;
    for i in 0..5 {
        let (status, _) = s.post(json!({"userId": "u", "roomId": "fifo", "text": format!("message {i}")})).await;
        assert_eq!(status, StatusCode::OK);
    }
    let msgs = messages(&s.memories("fifo").await);
    let incoming: Vec<&str> = msgs.iter().filter(|(agent, _)| !agent).map(|(_, t)| t.as_str()).collect();
    assert_eq!(incoming, ["message 0", "message 1", "message 2", "message 3", "message 4"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_to_one_room_never_interleave() {
    let s = Arc::new(serve().await);
    let mut handles = Vec::new();
    for i in 0..8 {
        let s = s.clone();
        handles.push(tokio::spawn(async move {
            s.post(json!({"userId": "u", "roomId": "busy", "text": format!("burst {i}")})).await
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap().0, StatusCode::OK);
    }
    let msgs = messages(&s.memories("busy").await);
    assert_eq!(msgs.len(), 16);
    for pair in msgs.chunks(2) {
        assert!(!pair[0].0 && pair[1].0, "turns interleaved: {msgs:?}");
    }
}

#[tokio::test]
async fn generated_images_are_served_under_media() {
    let s = serve().await;
    let (status, body) = s.post(json!({"userId": "u", "text": "draw a red square"})).await;
    assert_eq!(status, StatusCode::OK);
    // the model's reply, then the handler's reply carrying the image
    let replies = body.as_array().unwrap();
    assert_eq!(replies.len(), 2);
    assert_eq!(replies[0]["action"], "GENERATE_IMAGE");
    let attachments = replies[1]["attachments"].as_array().unwrap();
    assert_eq!(attachments.len(), 1);
    assert_eq!(attachments[0]["contentType"], "image/png");
    let path = PathBuf::from(attachments[0]["url"].as_str().unwrap());
    let name = path.file_name().unwrap().to_str().unwrap();
    let res = reqwest::get(format!("{}/media/{name}", s.base)).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let bytes = res.bytes().await.unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    assert_eq!(bytes.as_ref(), std::fs::read(&path).unwrap());
}
