use std::io::{Read, Write};
use std::net::TcpStream;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn medchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medchain"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn chain_fig7_uses_an_exchange_ship() {
    let o = medchain(&["chain", "fig7_manila_guam", "--from", "14.5995,120.9842", "--to", "13.4443,144.7937"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_out(&o);
    assert_eq!(v["exchange_points"], serde_json::json!(["CARGO-7"]));
    assert!(v["total_distance_mi"].as_f64().unwrap() >= 1600.0);
}

#[test]
fn chain_without_the_exchange_ship_is_infeasible() {
    let o = medchain(&["chain", "fig7_manila_guam", "--request", "PATIENT-M1", "--without", "CARGO-7"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no feasible"));
}

#[test]
fn usage_errors() {
    assert_eq!(code(&medchain(&["teleport"])), 64);
    assert_eq!(code(&medchain(&["simulate", "mpw2023", "--policy", "coinflip"])), 64);
    assert_eq!(code(&medchain(&["chain", "fig7_manila_guam", "--from", "nonsense", "--to", "0,0"])), 64);
    assert_eq!(code(&medchain(&["--version"])), 0);
}

#[test]
fn invalid_scenarios_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut doc: Value = serde_json::from_str(&medchain::scenario::load("mpw2023").unwrap().to_json()).unwrap();
    doc["watercraft"][0].as_object_mut().unwrap().remove("helipad");
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = medchain(&["plan", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("watercraft[0].helipad"));
    assert_eq!(code(&medchain(&["bench", "nowhere"])), 1);
}

#[test]
fn simulate_writes_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let o = medchain(&["simulate", "oahu_kauai", "--policy", "mcts", "--seed", "11", "--iterations", "200", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn plan_zones_place_and_bench() {
    let o = medchain(&["plan", "mpw2023", "--at", "600", "--iterations", "300"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json_out(&o)["action"]["axp_watercraft_id"], "LSV-3");
    // before the call comes in the advice is to wait
    let o = medchain(&["plan", "mpw2023", "--at", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json_out(&o)["action"]["kind"], "hold");

    let dir = tempfile::tempdir().unwrap();
    let gj = dir.path().join("zones.geojson");
    let o = medchain(&["zones", "fig7_manila_guam", "--pair", "SHIP-HELO", "GUAM-HELO", "--out", gj.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fc: Value = serde_json::from_str(&std::fs::read_to_string(&gj).unwrap()).unwrap();
    assert_eq!(fc["type"], "FeatureCollection");
    assert_eq!(json_out(&o)["windows"][0]["watercraft_ids"][0], "CARGO-7");

    let o = medchain(&["place-axp", "oahu_kauai", "--grid", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json_out(&o)["scores"].as_array().unwrap().len(), 4);

    let o = medchain(&["bench", "mpw2023", "--episodes", "2", "--iterations", "100"]);
    assert_eq!(code(&o), 0);
    let v = json_out(&o);
    assert_eq!(v["greedy"]["episodes"], 2);
    assert_eq!(v["mcts"]["undelivered"], 0);
}

#[test]
fn serve_answers_on_the_requested_port() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let mut child = Command::new(env!("CARGO_BIN_EXE_medchain"))
        .args(["serve", "--scenario", "mpw2023"])
        .env("MEDCHAIN_PORT", port.to_string())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let stream = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => {
                child.kill().ok();
                panic!("server did not come up: {e}");
            }
        }
    };
    let mut stream = stream;
    write!(stream, "GET /state HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().ok();
    child.wait().ok();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"scenario\":\"mpw2023\""));
}
