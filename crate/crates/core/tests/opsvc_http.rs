use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use medchain::geo::GeoPoint;
use medchain::opsvc::{router, OpsService};
use medchain::scenario;
use medchain::simkit::{self, Policy};
use medchain::smdp::{self, DispatchAction};
use medchain::world::{PositionFix, WorldState};
use medchain::zones;

struct Api {
    ops: OpsService,
}

impl Api {
    fn new() -> Self {
        Api { ops: OpsService::new() }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(match body {
                Some(b) => Body::from(b.to_string()),
                None => Body::empty(),
            })
            .unwrap();
        let resp = router(self.ops.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, v)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }

    async fn state(&self) -> Value {
        let (s, v) = self.get("/state").await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v
    }
}

async fn mpw_at_600() -> Api {
    let api = Api::new();
    let (s, v) = api.post("/session", json!({"scenario": "mpw2023"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, _) = api.post("/tick", json!({"to": 600.0})).await;
    assert_eq!(s, StatusCode::OK);
    api
}

fn quick() -> Value {
    json!({"iterations": 300, "seed": 3})
}

#[tokio::test]
async fn state_without_session() {
    let api = Api::new();
    let (s, v) = api.get("/state").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "no_session");
}

#[tokio::test]
async fn fresh_session_state_document() {
    let api = Api::new();
    api.post("/session", json!({"scenario": "mpw2023"})).await;
    let st = api.state().await;
    assert_eq!(st["revision"], 0);
    assert_eq!(st["aircraft"].as_array().unwrap().len(), 2);
    assert!(st["aircraft"].as_array().unwrap().iter().all(|a| a["status"] == "idle"));
    let lsv = &st["watercraft"][0];
    assert_eq!(lsv["id"], "LSV-3");
    // underway: position changes as the clock moves
    api.post("/tick", json!({"by": 3600.0})).await;
    let later = api.state().await;
    assert_ne!(later["watercraft"][0]["position"], lsv["position"]);
    assert_eq!(later["revision"], 1);
}

#[tokio::test]
async fn reads_do_not_change_state() {
    let api = mpw_at_600().await;
    let before = api.state().await;
    for _ in 0..2 {
        let (s, rec) = api.post("/recommend", json!({"request_id": "PATIENT-1", "config": quick()})).await;
        assert_eq!(s, StatusCode::OK, "{rec}");
        let (s, _) = api.post("/whatif", json!({"request_id": "PATIENT-1", "forced_axp": "LSV-3"})).await;
        assert_eq!(s, StatusCode::OK);
        api.get("/zones?a=DUSTOFF-1&b=DUSTOFF-2").await;
    }
    assert_eq!(api.state().await, before);
}

#[tokio::test]
async fn recommendation_names_the_lsv_and_is_reproducible() {
    let api = mpw_at_600().await;
    let (s, a) = api.post("/recommend", json!({"request_id": "PATIENT-1", "config": quick()})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(a["action"]["kind"], "dispatch_via_axp");
    assert_eq!(a["action"]["axp_watercraft_id"], "LSV-3");
    let (_, b) = api.post("/recommend", json!({"request_id": "PATIENT-1", "config": quick()})).await;
    assert_eq!(a, b);
    let (s, v) = api.post("/recommend", json!({"request_id": "PATIENT-9"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_request");
    // unforced what-if is the recommendation
    let (_, w) = api.post("/whatif", json!({"request_id": "PATIENT-1", "config": quick()})).await;
    assert_eq!(w["action"], a["action"]);
    assert_eq!(w["predicted_timeline"], a["predicted_timeline"]);
}

// Oracle: dispatch through the forced watercraft at the first chance, via the simulator.
struct ForceAxp(&'static str);

impl Policy for ForceAxp {
    fn name(&self) -> &str {
        "force-axp"
    }

    fn decide(&mut self, s: &WorldState) -> DispatchAction {
        s.pending_requests
            .first()
            .and_then(|r| {
                smdp::request_candidates(s, r, false)
                    .into_iter()
                    .filter(|(a, _)| a.axp_watercraft_id.as_deref() == Some(self.0))
                    .min_by(|(a, ma), (b, mb)| ma.delivered_at.cmp(&mb.delivered_at).then_with(|| a.cmp(b)))
                    .map(|(a, _)| a)
            })
            .unwrap_or_else(|| DispatchAction::hold(s.clock))
    }
}

#[tokio::test]
async fn forced_lsv_whatif_matches_the_simulator() {
    let api = mpw_at_600().await;
    let (s, w) = api.post("/whatif", json!({"request_id": "PATIENT-1", "forced_axp": "LSV-3"})).await;
    assert_eq!(s, StatusCode::OK, "{w}");

    let sc = scenario::load("mpw2023").unwrap();
    let run = simkit::run(&sc, &mut ForceAxp("LSV-3"), 0).unwrap();
    let golden: Vec<(String, f64)> = run
        .events
        .iter()
        .filter(|e| e.kind.name() != "RequestArrival")
        .map(|e| (e.kind.name().to_string(), e.t_ms as f64 / 1000.0))
        .collect();
    let got: Vec<(String, f64)> = w["predicted_timeline"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["event"].as_str().unwrap().to_string(), e["time"].as_f64().unwrap()))
        .collect();
    assert_eq!(got, golden);
    let delivered = golden.iter().find(|(k, _)| k == "Delivered").unwrap().1;
    assert_eq!(w["delivered_at"].as_f64().unwrap(), delivered);
    assert_eq!(w["total_time"].as_f64().unwrap(), delivered - 600.0);
}

#[tokio::test]
async fn out_of_range_watercraft_is_infeasible() {
    let mut doc: Value = serde_json::from_str(&scenario::load("mpw2023").unwrap().to_json()).unwrap();
    let mut far = doc["watercraft"][0].clone();
    far["id"] = json!("FAR-AWAY");
    far["route"] = json!({"waypoints": [{"lat": 30.0, "lon": -140.0}]});
    doc["watercraft"].as_array_mut().unwrap().push(far);
    let api = Api::new();
    let (s, v) = api.post("/session", json!({"scenario_json": doc})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    api.post("/tick", json!({"to": 600.0})).await;
    // the request insists on LSV-3, and FAR-AWAY is out of reach anyway
    let (s, v) = api.post("/whatif", json!({"request_id": "PATIENT-1", "forced_axp": "FAR-AWAY"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["error"], "infeasible");
    let (s, _) = api.post("/whatif", json!({"request_id": "PATIENT-1", "forced_axp": "NOPE"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn commit_flow() {
    let api = mpw_at_600().await;
    let (_, rec) = api.post("/recommend", json!({"request_id": "PATIENT-1", "config": quick()})).await;
    let r0 = api.state().await["revision"].as_u64().unwrap();
    let (s, ack) = api.post("/commit", rec["action"].clone()).await;
    assert_eq!(s, StatusCode::OK, "{ack}");
    assert_eq!(ack["revision"].as_u64().unwrap(), r0 + 1);
    let st = api.state().await;
    let pilot = rec["action"]["aircraft_id"].as_str().unwrap();
    let ac = st["aircraft"].as_array().unwrap().iter().find(|a| a["id"] == pilot).unwrap().clone();
    assert_eq!(ac["status"], "enroute");
    assert!(st["pending_requests"].as_array().unwrap().is_empty());

    let (s, v) = api.post("/commit", rec["action"].clone()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "illegal_action");

    let before = api.state().await;
    let (s, ack) = api.post("/commit", json!({"kind": "hold", "launch_time": 600000})).await;
    assert_eq!(s, StatusCode::OK);
    let after = api.state().await;
    assert_eq!(ack["revision"].as_u64().unwrap(), before["revision"].as_u64().unwrap() + 1);
    assert_eq!(after["aircraft"], before["aircraft"]);
    assert_eq!(after["watercraft"], before["watercraft"]);

    // run the mission out
    api.post("/tick", json!({"to": 7200.0})).await;
    let done = api.state().await;
    assert_eq!(done["delivered"][0]["request_id"], "PATIENT-1");
}

#[tokio::test]
async fn request_intake() {
    let api = mpw_at_600().await;
    let req = json!({
        "id": "PATIENT-2", "time": 500.0, "location": {"lat": 21.45, "lon": -158.0},
        "precedence": "priority", "patient_count": 1, "destination": "TRIPLER"
    });
    let (s, v) = api.post("/requests", req.clone()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let st = api.state().await;
    let pending = st["pending_requests"].as_array().unwrap();
    assert_eq!(pending.len(), 2);
    assert_eq!(pending.iter().find(|r| r["id"] == "PATIENT-2").unwrap()["time"], 500.0);
    let (s, v) = api.post("/requests", req).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "validation_error");
    let (s, _) = api.post("/requests", json!({"id": "x"})).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn position_fixes() {
    let api = mpw_at_600().await;
    let p = json!({"lat": 21.2, "lon": -157.7});
    let (s, _) = api.post("/positions", json!({"id": "LSV-3", "t": 600.0, "position": p})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(api.state().await["watercraft"][0]["position"], p);
    let (s, v) = api.post("/positions", json!({"id": "LSV-3", "t": 599.0, "position": p})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "stale_fix");
    let (s, v) = api.post("/positions", json!({"id": "GHOST", "t": 700.0, "position": p})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_entity");
}

#[tokio::test]
async fn zone_windows_follow_position_fixes() {
    let api = Api::new();
    api.post("/session", json!({"scenario": "oahu_kauai"})).await;
    let sc = scenario::load("oahu_kauai").unwrap();
    let wc = sc.watercraft.iter().find(|w| w.id == "CHANNEL-1").unwrap();
    // reported track is off the Big Island, well outside Kauai's reach
    let fixes = [
        (0.0, GeoPoint::new(20.0, -156.0).unwrap()),
        (3600.0, GeoPoint::new(19.9, -155.9).unwrap()),
    ];
    for (t, p) in fixes {
        let (s, v) = api
            .post("/positions", json!({"id": "CHANNEL-1", "t": t, "position": {"lat": p.lat(), "lon": p.lon()}}))
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let (s, fc) = api.get("/zones?a=OAHU-1&b=KAUAI-1&t0=0&t1=21600&dt=300").await;
    assert_eq!(s, StatusCode::OK, "{fc}");
    let got = &fc["features"][0]["properties"]["windows"];

    let mut fleet = sc.watercraft.clone();
    let tracked = fleet.iter_mut().find(|w| w.id == wc.id).unwrap();
    tracked.override_track = fixes.iter().map(|&(time, position)| PositionFix { time, position }).collect();
    let a = sc.aircraft("OAHU-1").unwrap();
    let b = sc.aircraft("KAUAI-1").unwrap();
    let zone = zones::opportunity_zone(
        a.home_base,
        medchain::world::radius_of_action(a.max_range),
        b.home_base,
        medchain::world::radius_of_action(b.max_range),
    )
    .unwrap();
    let expected = zones::zone_windows(&zone, &fleet, (0.0, 21600.0), 300.0).unwrap();
    let stale = zones::zone_windows(&zone, &sc.watercraft, (0.0, 21600.0), 300.0).unwrap();
    assert_eq!(got, &serde_json::to_value(
        expected.iter().map(|w| json!({"start": w.start, "end": w.end, "watercraft_ids": w.watercraft_ids})).collect::<Vec<_>>()
    ).unwrap());
    assert_ne!(expected, stale, "fixture should make the fixes matter");

    let (s, _) = api.get("/zones?a=OAHU-1&b=NOBODY").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn websocket_gets_every_revision_in_order() {
    let ops = OpsService::new();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(ops.clone());
    tokio::spawn(async move { axum::serve(listener, app).await });

    let (mut ws1, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/events")).await.unwrap();
    let (mut ws2, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/events")).await.unwrap();
    // the upgrade completes before the server subscribes; wait until it has
    while ops.subscriber_count() < 2 {
        tokio::task::yield_now().await;
    }

    ops.start_session(scenario::load("mpw2023").unwrap()).unwrap();
    for t in [100.0, 200.0, 600.0] {
        ops.tick(&medchain::opsvc::TickRequest { to: Some(t), by: None }).unwrap();
    }
    ops.commit(DispatchAction::hold(600_000)).unwrap();

    for ws in [&mut ws1, &mut ws2] {
        let mut revs = Vec::new();
        while revs.len() < 5 {
            let msg = ws.next().await.unwrap().unwrap();
            let v: Value = serde_json::from_str(msg.to_text().unwrap()).unwrap();
            revs.push(v["revision"].as_u64().unwrap());
            if v["revision"] == 3 {
                assert_eq!(v["event"]["type"], "tick");
                assert_eq!(v["event"]["fired"][0]["kind"], "RequestArrival");
            }
        }
        assert_eq!(revs, vec![0, 1, 2, 3, 4]);
    }
}
