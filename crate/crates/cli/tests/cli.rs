mod common;

use std::process::Command;

use civicsense_cli::CliError;
use common::{fast_config, Client, TestServer};
use serde_json::Value;

/// A port nothing listens on.
const DEAD_SERVER: &str = "http://127.0.0.1:9";

fn bin(client: &Client, rest: &[&str]) -> std::process::Output {
    let args = client.args(rest);
    Command::new(env!("CARGO_BIN_EXE_civicsense"))
        .args(&args[1..])
        .output()
        .unwrap()
}

#[test]
fn report_online_prints_created_id() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", &server.url);
    c.signup("rahim");
    let out = c.ok(&["report", "garbage", "23.7465", "90.3760", "canal blocked by garbage"]);
    assert_eq!(out, "created report 1 (pending)\n");
    let feed = c.ok(&["feed"]);
    assert!(feed.starts_with("#1 "), "{feed}");
    assert!(feed.contains("canal blocked by garbage"));
    assert!(feed.contains("by rahim"));
}

#[test]
fn offline_report_is_queued_not_sent() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", &server.url);
    c.signup("rahim");
    let out = c.ok(&["report", "garbage", "23.7465", "90.3760", "canal blocked by garbage", "--offline"]);
    assert_eq!(out, "queued offline (position 1)\n");
    let queue: Value = serde_json::from_str(&c.ok(&["--json", "queue"])).unwrap();
    assert_eq!(queue.as_array().unwrap().len(), 1);
    assert_eq!(queue[0]["state"]["state"], "queued");
    assert_eq!(c.ok(&["feed"]), "no reports\n");
}

#[test]
fn unknown_category_fails_before_network() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "x", DEAD_SERVER);
    match c.run(&["report", "plasma", "23.7", "90.3"]) {
        Err(CliError::Invalid { code, .. }) => assert_eq!(code, "UnknownCategory"),
        other => panic!("unexpected {other:?}"),
    }
    let out = bin(&c, &["report", "plasma", "23.7", "90.3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownCategory"));
}

#[test]
fn sync_sends_queue_once() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", &server.url);
    c.signup("rahim");
    for (cat, lat) in [("garbage", "23.74"), ("water", "23.75"), ("air,noise", "23.76")] {
        c.ok(&["report", cat, lat, "90.37", "--offline"]);
    }
    let out = c.ok(&["sync"]);
    assert!(out.ends_with("3 created, 0 duplicate, 0 failed\n"), "{out}");
    assert_eq!(c.ok(&["sync"]), "nothing to sync\n");
    let queue: Value = serde_json::from_str(&c.ok(&["--json", "queue"])).unwrap();
    assert!(queue
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["state"]["state"] == "synced"));
    assert_eq!(server.service.snapshot().reports().count(), 3);
}

#[test]
fn failed_entries_are_marked_and_skipped() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", &server.url);
    c.signup("rahim");
    c.ok(&["report", "garbage", "23.74", "90.37", "--offline"]);
    // Not logged in on this client: the named entry cannot be accepted yet.
    let other = Client::new(dir.path(), "anon", &server.url);
    other.ok(&["report", "air", "23.74", "90.37", "--offline"]);
    let out = other.ok(&["sync"]);
    assert!(out.contains("error Unauthorized"), "{out}");
    assert_eq!(other.ok(&["--json", "queue"]).matches("\"queued\"").count(), 1, "kept for retry");
    other.signup("karim");
    assert!(other.ok(&["sync"]).contains("1 created"));
}

#[test]
fn unreachable_server_leaves_queue_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", DEAD_SERVER);
    c.ok(&["report", "garbage", "23.74", "90.37", "--offline", "--anonymous"]);
    let before = c.ok(&["--json", "queue"]);
    let out = bin(&c, &["sync"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(c.ok(&["--json", "queue"]), before);

    // A failed online submission falls back to the queue.
    let out = c.ok(&["report", "water", "23.74", "90.37", "--anonymous"]);
    assert_eq!(out, "queued offline (position 2)\n");
}

#[test]
fn rating_own_report_is_refused() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", &server.url);
    c.signup("rahim");
    c.ok(&["report", "noise", "23.74", "90.37"]);
    match c.run(&["rate", "1", "support"]) {
        Err(CliError::Api { code, .. }) => assert_eq!(code, "SelfRating"),
        other => panic!("unexpected {other:?}"),
    }
    let out = bin(&c, &["rate", "1", "support"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SelfRating"));
}

#[test]
fn map_stats_and_verdicts() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let author = Client::new(dir.path(), "author", &server.url);
    author.signup("author");
    let raters: Vec<Client> = ["r1", "r2"]
        .iter()
        .map(|n| {
            let c = Client::new(dir.path(), n, &server.url);
            c.signup(n);
            c
        })
        .collect();
    author.ok(&["report", "garbage", "23.7465", "90.3760"]);
    author.ok(&["report", "water", "23.7565", "90.3860"]);
    for id in ["1", "2"] {
        for r in &raters {
            r.ok(&["rate", id, "support"]);
        }
    }
    let stats = author.ok(&["stats"]);
    assert!(stats.contains("garbage      50.0%"), "{stats}");
    let map = author.ok(&["map", "--bbox", "23.7,90.3,23.8,90.4", "--cell-size", "0.005"]);
    let lines: Vec<&str> = map.lines().collect();
    assert_eq!(lines.len(), 1 + 3, "{map}");
    assert!(lines[1].ends_with("   .   .   1"), "{map}");
    assert!(lines[3].ends_with("   1   .   ."), "{map}");
    let air = author.ok(&["map", "--bbox", "23.7,90.3,23.8,90.4", "--category", "air"]);
    assert_eq!(air, "no validated reports in this area\n");

    let admin = Client::new(dir.path(), "ops", &server.url);
    admin.ok(&["login", "ops", "--credential", "adminpass1"]);
    let out = admin.ok(&["verdict", "1", "reject"]);
    assert!(out.contains("rejected (admin)"), "{out}");
    assert!(author.ok(&["stats"]).contains("water       100.0%"));
}

#[test]
fn attachments_are_hashed_and_uploaded() {
    let server = TestServer::in_memory(fast_config());
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(dir.path(), "rahim", &server.url);
    c.signup("rahim");
    let photo = dir.path().join("canal.jpg");
    std::fs::write(&photo, b"not really a jpeg").unwrap();
    let out: Value = serde_json::from_str(&c.ok(&[
        "--json",
        "report",
        "garbage",
        "23.74",
        "90.37",
        "--attachment",
        photo.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(out["result"], "created");
    assert_eq!(out["report"]["attachment_kind"], "photo");
}
