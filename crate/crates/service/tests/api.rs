use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pursuit_core::agent::AgentParams;
use pursuit_core::harness::replay_episode;
use pursuit_core::human::human_action_dist;
use pursuit_core::{AgentKind, Dir};
use pursuit_service::session::{steps_at, LogRecord};
use pursuit_service::{router, AppState, Engines, LogStore};

fn engines() -> Arc<Engines> {
    static E: OnceLock<Arc<Engines>> = OnceLock::new();
    E.get_or_init(|| Arc::new(Engines::build(Engines::builtin_tasks(), &AgentParams::default()).unwrap()))
        .clone()
}

struct Harness {
    app: Router,
    state: Arc<AppState>,
    _dir: tempfile::TempDir,
}

fn service() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(engines(), LogStore::open(dir.path()).unwrap()));
    Harness {
        app: router(state.clone()),
        state,
        _dir: dir,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn create(app: &Router, seed: u64) -> Value {
    let (status, v) = call(app, "POST", "/sessions", Some(json!({ "seed": seed }))).await;
    assert_eq!(status, StatusCode::CREATED);
    v
}

async fn state(app: &Router, id: &str) -> Value {
    let (status, v) = call(app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    v
}

async fn act(app: &Router, id: &str, dir: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/action"), Some(json!({ "direction": dir }))).await
}

fn dir_name(d: Dir) -> String {
    d.to_string()
}

/// A cooperative player that knows the best target: it answers the agent's
/// upcoming move with the human action of highest Q for that target.
fn cooperative_move(engines: &Engines, task_id: &str, kind: AgentKind, s: usize, belief: &pursuit_core::Belief) -> Dir {
    let e = engines.get(task_id).unwrap();
    let tables = &e.prepared.tables;
    let a = e.policy(kind).select_action(s, belief).unwrap();
    let star = tables.best_target_index();
    let p = human_action_dist(tables, s, a, star, 1.0);
    let h = pursuit_core::agent::argmax_tie_low(&p);
    tables.graph.nodes[s].human_actions[h].first_move().unwrap()
}

#[tokio::test]
async fn new_session_has_seventeen_tasks() {
    let h = service();
    let v = create(&h.app, 1).await;
    assert_eq!(v["queueLength"], 17);
    assert_eq!(v["status"], "active");
    assert_eq!(v["queuePosition"], 0);
    let ep = &v["episode"];
    assert!(ep["legalMoves"].as_array().unwrap().len() >= 1);
    assert_eq!(ep["remainingSteps"], ep["horizon"]);
    assert!(ep.get("agentType").is_none());
    let id = v["sessionId"].as_str().unwrap();
    let kinds = pursuit_service::api::queue_agent_types(&h.state, id).unwrap();
    for k in AgentKind::ALL {
        let n = kinds.iter().filter(|x| **x == k).count();
        // five regular tasks plus any dummy following that set
        assert!(n == 5 || n == 6);
    }
}

#[tokio::test]
async fn same_seed_same_queue() {
    let h = service();
    let a = create(&h.app, 9).await;
    let b = create(&h.app, 9).await;
    assert_ne!(a["sessionId"], b["sessionId"]);
    let qa = pursuit_service::api::queue_agent_types(&h.state, a["sessionId"].as_str().unwrap());
    let qb = pursuit_service::api::queue_agent_types(&h.state, b["sessionId"].as_str().unwrap());
    assert_eq!(qa, qb);
    let logs = |id: &str| h.state.store.read(id).unwrap();
    let queue = |r: &[LogRecord]| match &r[0] {
        LogRecord::Session { queue, .. } => queue.clone(),
        _ => panic!("first record is the session"),
    };
    assert_eq!(
        queue(&logs(a["sessionId"].as_str().unwrap())),
        queue(&logs(b["sessionId"].as_str().unwrap()))
    );
}

#[tokio::test]
async fn empty_body_creates_session_with_random_seed() {
    let h = service();
    let (status, v) = call(&h.app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["queueLength"], 17);
    let (status, v) = call(&h.app, "POST", "/sessions", Some(json!({"seed": "x"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_body");
}

#[tokio::test]
async fn unknown_session_is_404() {
    let h = service();
    for (m, path, body) in [
        ("GET", "/sessions/nope/state", None),
        ("GET", "/sessions/nope/log", None),
        ("POST", "/sessions/nope/action", Some(json!({"direction": "up"}))),
        ("POST", "/sessions/nope/survey", Some(json!({"items": [4, 4, 4, 4]}))),
    ] {
        let (status, v) = call(&h.app, m, path, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(v["code"], "not_found");
        assert!(v["message"].is_string());
    }
}

#[tokio::test]
async fn legal_move_advances_and_backward_move_is_rejected() {
    let h = service();
    let v = create(&h.app, 2).await;
    let id = v["sessionId"].as_str().unwrap().to_string();
    let before = v["episode"].clone();
    let first = before["legalMoves"][0].as_str().unwrap().to_string();
    let (status, step) = act(&h.app, &id, &first).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(step["humanAction"]["moves"][0], first);
    assert!(step["events"].as_array().unwrap().iter().any(|e| e["kind"] == "humanMove"));
    if step["terminal"] == true {
        return;
    }
    let after = state(&h.app, &id).await;
    assert_ne!(after["episode"]["human"], before["human"]);
    assert_eq!(after["episode"]["step"], 1);

    let last = step["humanAction"]["moves"].as_array().unwrap().last().unwrap().as_str().unwrap();
    let back = dir_name(Dir::parse(last).unwrap().reverse());
    let (status, err) = act(&h.app, &id, &back).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "illegal_move");
    assert_eq!(state(&h.app, &id).await, after);

    let (status, err) = act(&h.app, &id, "sideways").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "invalid_direction");
    assert_eq!(state(&h.app, &id).await, after);
}

#[tokio::test]
async fn highlight_only_in_explicit_condition() {
    let h = service();
    let engines = engines();
    let v = create(&h.app, 4).await;
    let id = v["sessionId"].as_str().unwrap().to_string();
    let kinds = pursuit_service::api::queue_agent_types(&h.state, &id).unwrap();
    let mut seen = [false; 3];
    for pos in 0..17 {
        let view = state(&h.app, &id).await;
        assert_eq!(view["queuePosition"], pos);
        let ep = &view["episode"];
        let task_id = ep["taskId"].as_str().unwrap().to_string();
        let kind = kinds[pos];
        seen[AgentKind::ALL.iter().position(|k| *k == kind).unwrap()] = true;
        if kind == AgentKind::Explicit {
            let star = engines.get(&task_id).unwrap().prepared.tables.best_target();
            assert_eq!(ep["highlightedTarget"], star.0, "{task_id}");
        } else {
            assert!(ep.get("highlightedTarget").is_none());
        }
        play_task(&h, &id, &task_id, kind).await;
    }
    assert_eq!(seen, [true; 3]);
}

/// Plays the current task to its end with the cooperative player; returns
/// the final step result.
async fn play_task(h: &Harness, id: &str, task_id: &str, kind: AgentKind) -> Value {
    let engines = engines();
    loop {
        let (s, belief, pos) = current(h, id);
        let d = cooperative_move(&engines, task_id, kind, s, &belief);
        let (status, step) = act(&h.app, id, &dir_name(d)).await;
        assert_eq!(status, StatusCode::OK, "{step}");
        if step["terminal"] == true {
            assert_eq!(step["state"]["queuePosition"], pos + 1);
            return step;
        }
    }
}

/// Engine-side view of the live episode, for the scripted player.
fn current(h: &Harness, id: &str) -> (usize, pursuit_core::Belief, usize) {
    let records = h.state.store.read(id).unwrap();
    let engines = engines();
    let s = pursuit_service::Session::recover(&engines, &records).unwrap();
    let live = s.live.clone().unwrap();
    (live.state, live.belief, s.position)
}

#[tokio::test]
async fn scripted_client_completes_every_task_and_logs_replay() {
    let h = service();
    let engines = engines();
    let v = create(&h.app, 5).await;
    let id = v["sessionId"].as_str().unwrap().to_string();
    let kinds = pursuit_service::api::queue_agent_types(&h.state, &id).unwrap();

    let (status, err) = call(&h.app, "POST", &format!("/sessions/{id}/survey"), Some(json!({"items": [4, 4, 4, 4]}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "no_completed_set");

    for pos in 0..17 {
        let view = state(&h.app, &id).await;
        let task_id = view["episode"]["taskId"].as_str().unwrap().to_string();
        let dummy = view["episode"]["dummy"] == true;
        let last = play_task(&h, &id, &task_id, kinds[pos]).await;
        if dummy || kinds[pos] == AgentKind::Explicit {
            assert_eq!(last["capturedBest"], true, "{task_id} {:?}", kinds[pos]);
        }
        if let Some(set) = last["state"]["surveyDue"].as_u64() {
            let url = format!("/sessions/{id}/survey");
            let (status, _) = call(&h.app, "POST", &url, Some(json!({"items": [4, 8, 4, 4]}))).await;
            assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
            let (status, _) = call(&h.app, "POST", &url, Some(json!({"items": [4, 4, 4]}))).await;
            assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
            let (status, ack) = call(&h.app, "POST", &url, Some(json!({"items": [4, 4, 4, 4]}))).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(ack["set"], set);
            let (status, err) = call(&h.app, "POST", &url, Some(json!({"items": [5, 5, 5, 5]}))).await;
            assert_eq!(status, StatusCode::CONFLICT);
            assert_eq!(err["code"], "duplicate_survey");
        }
    }

    let done = state(&h.app, &id).await;
    assert_eq!(done["status"], "finished");
    assert!(done.get("episode").is_none());
    let (status, err) = act(&h.app, &id, "up").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "session_finished");

    // every logged step is reproduced by the harness engine
    let (status, export) = call(&h.app, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    let records: Vec<LogRecord> = serde_json::from_value(export["records"].clone()).unwrap();
    let mut replayed_steps = 0;
    for r in &records {
        if let LogRecord::TaskStart {
            position,
            task_id,
            agent_type,
            ..
        } = r
        {
            let steps = steps_at(&records, *position);
            let moves: Vec<Dir> = steps.iter().map(|(d, _)| *d).collect();
            let e = engines.get(task_id).unwrap();
            let replay = replay_episode(&e.prepared.tables, e.policy(*agent_type), &moves).unwrap();
            assert_eq!(replay.len(), steps.len());
            for (a, (_, b)) in replay.iter().zip(&steps) {
                assert_eq!(a, *b);
            }
            replayed_steps += steps.len();
        }
    }
    assert!(replayed_steps >= 17);
    let surveys = records.iter().filter(|r| matches!(r, LogRecord::Survey(_))).count();
    assert_eq!(surveys, 3);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let h = service();
    let v = create(&h.app, 6).await;
    let id = v["sessionId"].as_str().unwrap().to_string();
    for _ in 0..3 {
        let view = state(&h.app, &id).await;
        let m = view["episode"]["legalMoves"][0].as_str().unwrap().to_string();
        act(&h.app, &id, &m).await;
    }
    let before = state(&h.app, &id).await;

    let restarted = Arc::new(AppState::new(engines(), h.state.store.clone()));
    assert_eq!(restarted.recover().unwrap(), 1);
    let app = router(restarted);
    assert_eq!(state(&app, &id).await, before);
}

#[tokio::test]
async fn task_listing() {
    let h = service();
    let (status, v) = call(&h.app, "GET", "/tasks", None).await;
    assert_eq!(status, StatusCode::OK);
    let tasks = v.as_array().unwrap();
    assert_eq!(tasks.len(), 7);
    assert_eq!(tasks.iter().filter(|t| t["taskType"] == "dummy").count(), 2);
    for t in tasks {
        let single = t["taskType"] == "dummy";
        assert_eq!(t["evaders"].as_array().unwrap().len(), if single { 1 } else { 2 });
    }
}
