//! The bundled vehicle-management table, offline through the CLI and over
//! HTTP against `reta serve`.

use std::time::{Duration, Instant};

use reta_client::Client;
use reta_core::load_metadata;
use reta_core::reta::Mode;

use crate::common::*;
use crate::{fail, Outcome};

const BUDGET: Duration = Duration::from_secs(1);

// (schema, alice, bob) as canonical permission strings
const EXPECTED: [(&str, &str, &str); 3] = [
    ("vehicle", "R", "CRUD"),
    ("maintenance", "", "CRUD"),
    ("customer", "CRUD", "R"),
];

pub fn reproduce() -> Outcome {
    let path = fixture_path("vehicle.csv");
    let bytes = std::fs::read(&path).map_err(fail("read fixture"))?;
    let (_, report) = load_metadata(&bytes, "vehicle.csv").map_err(fail("parse"))?;
    ensure!(report.is_empty(), "fixture does not validate clean:\n{report}");

    let offline = tempfile::tempdir().map_err(fail("tempdir"))?;
    let started = Instant::now();
    let out = run(reta(offline.path()).args(["--format", "json", "instantiate"]).arg(&path));
    let cli_time = started.elapsed();
    ensure!(out.status.code() == Some(0), "cli instantiate failed: {}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(stdout(&out).trim()).map_err(fail("cli summary"))?;
    ensure!(
        (summary["groups"].as_u64(), summary["users"].as_u64(), summary["schemas"].as_u64()) == (Some(2), Some(2), Some(3)),
        "cli summary {summary}"
    );
    ensure!(cli_time < BUDGET, "cli instantiate took {cli_time:.2?}");

    let served_dir = tempfile::tempdir().map_err(fail("tempdir"))?;
    let served = Served::start(reta(served_dir.path()));
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(fail("runtime"))?;
    let http_time = rt.block_on(async {
        let anonymous = Client::new(&served.base()).map_err(fail("client"))?;
        let started = Instant::now();
        let summary = anonymous.upload_reta(bytes.clone(), "vehicle.csv", Mode::Create).await.map_err(fail("upload"))?;
        let took = started.elapsed();
        ensure!((summary.groups, summary.users, summary.schemas) == (2, 2, 3), "http summary {summary:?}");

        let mut alice = Client::new(&served.base()).map_err(fail("client"))?;
        alice.login_user("vms", "alice", "alice-pw").await.map_err(fail("alice login"))?;
        let mut bob = Client::new(&served.base()).map_err(fail("client"))?;
        bob.login_user("vms", "bob", "bob-pw").await.map_err(fail("bob login"))?;
        for (schema, for_alice, for_bob) in EXPECTED {
            let a = alice.permissions(schema).await.map_err(fail("probe"))?;
            let b = bob.permissions(schema).await.map_err(fail("probe"))?;
            ensure!(
                a["permissions"] == for_alice && b["permissions"] == for_bob,
                "{schema}: alice {} bob {}, expected {for_alice:?} {for_bob:?}",
                a["permissions"],
                b["permissions"]
            );
        }
        Ok::<_, String>(took)
    })?;
    ensure!(http_time < BUDGET, "http instantiate took {http_time:.2?}");
    let status = served.terminate();
    ensure!(status.code() == Some(0), "server exited with {status}");

    Ok(format!(
        "validates clean; 2 groups, 2 users, 3 schemas with per-group permissions; cli {cli_time:.0?}, http {http_time:.0?}"
    ))
}
