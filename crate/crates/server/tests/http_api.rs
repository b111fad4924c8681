use std::sync::Arc;
use std::time::Duration;

use civicsense_server::{Service, ServiceConfig};
use serde_json::{json, Value};

struct Server {
    base: String,
    client: reqwest::Client,
}

async fn start() -> Server {
    let svc = Arc::new(Service::in_memory(ServiceConfig {
        credential_iterations: 1000,
        ..ServiceConfig::default()
    }));
    svc.ensure_admin("ops", "adminpass1").unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(civicsense_server::serve_service(svc, listener, std::future::pending()));
    Server {
        base,
        client: reqwest::Client::new(),
    }
}

impl Server {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn post(&self, path: &str, token: Option<&str>, body: Value) -> (u16, Value) {
        let mut req = self.client.post(self.url(path)).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        (resp.status().as_u16(), resp.json().await.unwrap())
    }

    async fn get(&self, path: &str, token: Option<&str>) -> (u16, Value) {
        let mut req = self.client.get(self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        (resp.status().as_u16(), resp.json().await.unwrap())
    }

    async fn login(&self, name: &str, credential: &str) -> String {
        let (status, body) = self
            .post("/api/v1/auth/login", None, json!({"name": name, "credential": credential}))
            .await;
        assert_eq!(status, 200, "{body}");
        body["token"].as_str().unwrap().to_string()
    }

    async fn user(&self, name: &str) -> String {
        let (status, body) = self
            .post("/api/v1/auth/register", None, json!({"name": name, "credential": "password123"}))
            .await;
        assert_eq!(status, 201, "{body}");
        self.login(name, "password123").await
    }
}

fn report(key: &str, category: &str, anonymous: bool) -> Value {
    json!({
        "categories": [category],
        "location": {"lat": 23.7465, "lon": 90.3760, "source": "gps"},
        "text": "canal blocked by garbage",
        "anonymous": anonymous,
        "client_key": key,
        "client_time": "2016-12-01T08:00:00Z"
    })
}

#[tokio::test]
async fn register_login_and_error_shape() {
    let s = start().await;
    let (status, body) = s
        .post("/api/v1/auth/register", None, json!({"name": "rahim", "credential": "password123"}))
        .await;
    assert_eq!(status, 201);
    assert_eq!(body["reputation"], 0.5);
    assert_eq!(body["role"], "citizen");

    let (status, body) = s
        .post("/api/v1/auth/register", None, json!({"name": "rahim", "credential": "password123"}))
        .await;
    assert_eq!(status, 409);
    assert_eq!(body["error"]["code"], "NameTaken");
    assert!(body["error"]["message"].is_string());

    let (status, body) = s.post("/api/v1/auth/register", None, json!({"name": 5})).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "BadRequest");

    let (status, body) = s.get("/api/v1/nowhere", None).await;
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "NotFound");
}

#[tokio::test]
async fn report_lifecycle_over_http() {
    let s = start().await;
    let author = s.user("author").await;
    let r1 = s.user("r1").await;
    let r2 = s.user("r2").await;
    let admin = s.login("ops", "adminpass1").await;

    let (status, created) = s.post("/api/v1/reports", Some(&author), report("k1", "garbage", false)).await;
    assert_eq!(status, 201, "{created}");
    assert_eq!(created["status"], json!({"state": "pending"}));
    assert_eq!(created["author"], "author");
    let (status, again) = s.post("/api/v1/reports", Some(&author), report("k1", "garbage", false)).await;
    assert_eq!(status, 200);
    assert_eq!(again["report_id"], created["report_id"]);
    let id = created["report_id"].as_u64().unwrap();

    let (status, body) = s.post("/api/v1/reports", None, report("k2", "garbage", false)).await;
    assert_eq!((status, body["error"]["code"].as_str()), (401, Some("Unauthorized")));
    let (status, body) = s.post("/api/v1/reports", Some("bogus"), report("k2", "garbage", true)).await;
    assert_eq!((status, body["error"]["code"].as_str()), (401, Some("Unauthorized")));
    let (status, body) = s.post("/api/v1/reports", None, report("k2", "plasma", true)).await;
    assert_eq!((status, body["error"]["code"].as_str()), (400, Some("UnknownCategory")));

    let map_q = "/api/v1/map?min_lat=23&min_lon=90&max_lat=24&max_lon=91";
    assert_eq!(s.get(map_q, None).await.1, json!([]));

    let (status, body) = s
        .post(&format!("/api/v1/reports/{id}/ratings"), Some(&author), json!({"vote": 1}))
        .await;
    assert_eq!((status, body["error"]["code"].as_str()), (403, Some("SelfRating")));
    s.post(&format!("/api/v1/reports/{id}/ratings"), Some(&r1), json!({"vote": 1}))
        .await;
    let (status, body) = s
        .post(&format!("/api/v1/reports/{id}/ratings"), Some(&r2), json!({"vote": 1}))
        .await;
    assert_eq!(status, 200);
    assert_eq!(body["status"], json!({"state": "validated", "provenance": "community"}));
    assert_eq!(body["score"], 1.5);

    let (_, cells) = s.get(map_q, None).await;
    assert_eq!(cells.as_array().unwrap().len(), 1);
    assert_eq!(cells[0]["total"], 1);
    assert_eq!(cells[0]["counts"]["garbage"], 1);
    let (_, cells) = s.get(&format!("{map_q}&category=air"), None).await;
    assert_eq!(cells, json!([]));
    let (status, body) = s.get("/api/v1/map?min_lat=23", None).await;
    assert_eq!((status, body["error"]["code"].as_str()), (400, Some("BadBBox")));

    let (_, stats) = s.get("/api/v1/stats/categories", None).await;
    assert_eq!(stats["validated"], 1);
    assert_eq!(stats["distribution"][0]["category"], "garbage");

    let (_, feed) = s.get("/api/v1/feed?page=1&page_size=10", None).await;
    assert_eq!(feed["reports"].as_array().unwrap().len(), 1);
    let (status, _) = s.get("/api/v1/feed?page=0", None).await;
    assert_eq!(status, 400);

    let (status, public) = s.get(&format!("/r/{id}"), None).await;
    assert_eq!(status, 200);
    assert_eq!(public["report_id"], id);
    let (_, link) = s.get(&format!("/api/v1/reports/{id}/share"), None).await;
    assert_eq!(link["path"], format!("/r/{id}"));

    let (status, body) = s
        .post(&format!("/api/v1/admin/reports/{id}/verdict"), Some(&r1), json!({"verdict": "reject"}))
        .await;
    assert_eq!((status, body["error"]["code"].as_str()), (403, Some("NotAdmin")));
    let (status, body) = s
        .post(&format!("/api/v1/admin/reports/{id}/verdict"), Some(&admin), json!({"verdict": "reject"}))
        .await;
    assert_eq!(status, 200, "{body}");
    assert_eq!(s.get(map_q, None).await.1, json!([]));
    let (status, body) = s.get(&format!("/api/v1/r/{id}"), None).await;
    assert_eq!((status, body["error"]["code"].as_str()), (409, Some("ReportRejected")));
    let (status, _) = s.get("/r/9999", None).await;
    assert_eq!(status, 404);
}

#[tokio::test]
async fn sync_and_summary_over_http() {
    let s = start().await;
    let u = s.user("u").await;
    let admin = s.login("ops", "adminpass1").await;
    let mut bad = report("b", "air", false);
    bad["location"]["lat"] = json!(95.0);
    let batch = json!({"entries": [report("a", "air", false), bad, report("c", "water", true)]});
    let (status, body) = s.post("/api/v1/sync", Some(&u), batch.clone()).await;
    assert_eq!(status, 200);
    let outcomes: Vec<_> = body["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["outcome"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(outcomes, ["created", "error", "created"]);
    assert_eq!(body["results"][1]["code"], "BadCoordinates");
    let (_, body) = s.post("/api/v1/sync", Some(&u), batch).await;
    assert_eq!(body["results"][0]["outcome"], "duplicate");
    assert_eq!(body["results"][2]["outcome"], "duplicate");

    let entries: Vec<_> = (0..101).map(|i| report(&format!("x{i}"), "air", false)).collect();
    let (status, body) = s.post("/api/v1/sync", Some(&u), json!({"entries": entries})).await;
    assert_eq!((status, body["error"]["code"].as_str()), (413, Some("BatchTooLarge")));

    let q = "/api/v1/admin/summary?start=2000-01-01T00:00:00Z&end=2100-01-01T00:00:00Z";
    let (status, body) = s.get(q, Some(&u)).await;
    assert_eq!((status, body["error"]["code"].as_str()), (403, Some("NotAdmin")));
    let (status, doc) = s.get(&format!("{q}&detail=detailed"), Some(&admin)).await;
    assert_eq!(status, 200);
    assert_eq!(doc["report_count"], 0);
    let text = s
        .client
        .get(s.url(&format!("{q}&format=text")))
        .bearer_auth(&admin)
        .send()
        .await
        .unwrap();
    assert!(text
        .headers()
        .get("content-type")
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("text/plain"));
    assert!(text.text().await.unwrap().starts_with("POLLUTION REPORT SUMMARY"));
    let (status, body) = s
        .get("/api/v1/admin/summary?start=2020-01-01T00:00:00Z&end=2010-01-01T00:00:00Z", Some(&admin))
        .await;
    assert_eq!((status, body["error"]["code"].as_str()), (400, Some("BadPeriod")));

    let (_, queue) = s.get("/api/v1/admin/queue", Some(&admin)).await;
    assert_eq!(queue.as_array().unwrap().len(), 2);
}

/// Reads SSE frames until `n` data lines have arrived.
async fn read_events(resp: &mut reqwest::Response, n: usize) -> Vec<Value> {
    let mut buf = String::new();
    let mut out = Vec::new();
    while out.len() < n {
        let chunk = tokio::time::timeout(Duration::from_secs(5), resp.chunk())
            .await
            .expect("stream stalled")
            .unwrap()
            .expect("stream ended");
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let frame: String = buf.drain(..end + 2).collect();
            for line in frame.lines() {
                if let Some(data) = line.strip_prefix("data: ") {
                    out.push(serde_json::from_str(data).unwrap());
                }
            }
        }
    }
    out
}

#[tokio::test]
async fn stream_resumes_after_seq() {
    let s = start().await;
    let author = s.user("author").await;
    let r1 = s.user("r1").await;
    let r2 = s.user("r2").await;

    let mut live = s.client.get(s.url("/api/v1/stream")).send().await.unwrap();
    assert_eq!(live.status(), 200);

    for i in 0..3 {
        let (_, body) = s.post("/api/v1/reports", Some(&author), report(&format!("k{i}"), "air", false)).await;
        let id = body["report_id"].as_u64().unwrap();
        for r in [&r1, &r2] {
            s.post(&format!("/api/v1/reports/{id}/ratings"), Some(r), json!({"vote": 1}))
                .await;
        }
    }
    // Three submissions and three validations.
    let events = read_events(&mut live, 6).await;
    let kinds: Vec<_> = events.iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(
        kinds,
        ["report_submitted", "report_validated", "report_submitted", "report_validated", "report_submitted", "report_validated"]
    );
    let seqs: Vec<u64> = events.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));

    let resume = seqs[2];
    let mut again = s
        .client
        .get(s.url(&format!("/api/v1/stream?since_seq={resume}")))
        .send()
        .await
        .unwrap();
    let replayed = read_events(&mut again, 3).await;
    assert_eq!(replayed, events[3..]);

    let mut by_header = s
        .client
        .get(s.url("/api/v1/stream"))
        .header("Last-Event-ID", seqs[4].to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(read_events(&mut by_header, 1).await, events[5..]);
}
