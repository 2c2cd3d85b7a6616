//! One system per tenant, isolation between tenants, and many tenants in
//! one process.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use reta_client::{Client, ClientError, ListOptions};
use reta_core::reta::Mode;
use reta_core::{
    authorize, load_metadata, Action, Aggregate, Decision, DenyReason, Error, FilterExpr, Op, Predicate, Principal,
    Query, RecordId, ReTaDocument, Store,
};
use serde_json::{json, Value};

use crate::common::fixture_path;
use crate::local::{runtime, Local};
use crate::{fail, Outcome};

const LETTERS: [char; 4] = ['C', 'R', 'U', 'D'];
const FTYPES: [&str; 5] = ["string", "int", "float", "bool", "date"];

fn random_permissions(rng: &mut StdRng) -> String {
    let set: String = LETTERS.iter().filter(|_| rng.random_bool(0.5)).collect();
    if set.is_empty() {
        "-".into()
    } else {
        set
    }
}

fn document(text: &str) -> Result<ReTaDocument, String> {
    let (doc, report) = load_metadata(text.as_bytes(), "generated.csv").map_err(fail("load"))?;
    ensure!(report.is_empty(), "generated table is invalid:\n{report}\n{text}");
    Ok(doc)
}

/// A random valid table for `tenant`.
fn random_table(rng: &mut StdRng, tenant: &str, password: &str) -> String {
    let groups: Vec<String> = (0..rng.random_range(1..=3)).map(|i| format!("g{i}")).collect();
    let users: Vec<String> = (0..rng.random_range(1..=3)).map(|i| format!("u{i}")).collect();
    let mut out = format!("T,{tenant},{password},System {tenant}\nG,{}\nU,userid,username,password,groups\n", groups.join(","));
    for u in &users {
        let member = groups.choose(rng).unwrap();
        out.push_str(&format!("+,{u},User {u},{u}-{},{member}\n", rng.random::<u32>()));
    }
    for s in 0..rng.random_range(1..=3) {
        let owner = groups.choose(rng).unwrap();
        let entry = users.choose(rng).unwrap();
        let (g, o) = (random_permissions(rng), random_permissions(rng));
        out.push_str(&format!("S,s{s},{owner},{entry},{g},{o}\nFI,ftype,fname,attributes\n"));
        for f in 0..rng.random_range(1..=4) {
            let ftype = FTYPES.choose(rng).unwrap();
            let nullable = if rng.random_bool(0.5) { ",nullable" } else { "" };
            out.push_str(&format!("+,{ftype},f{f}{nullable}\n"));
        }
    }
    out
}

pub fn duplicate_tenants() -> Outcome {
    const ATTEMPTS: usize = 100;
    let mut rng = StdRng::seed_from_u64(0x7e1a);
    let store = Store::in_memory();
    let (mut duplicates, mut wrong_refused, mut right_accepted) = (0, 0, 0);
    for attempt in 0..ATTEMPTS {
        let tenant = format!("t{attempt}x{}", rng.random::<u16>());
        let password = format!("pw-{}", rng.random::<u64>());
        store
            .instantiate(&document(&random_table(&mut rng, &tenant, &password))?, Mode::Create)
            .map_err(fail("first create"))?;
        let before = store.get_system(&tenant).map_err(fail("get"))?;

        // same id, unrelated content and password
        let other_password = format!("other-{}", rng.random::<u64>());
        let other = document(&random_table(&mut rng, &tenant, &other_password))?;
        match store.instantiate(&other, Mode::Create) {
            Err(Error::DuplicateTenant(id)) if id == tenant => duplicates += 1,
            other => return Err(format!("attempt {attempt}: second create gave {other:?}")),
        }
        ensure!(store.get_system(&tenant).ok() == Some(before.clone()), "attempt {attempt}: refused create changed the system");

        let wrong = document(&random_table(&mut rng, &tenant, &format!("{password}!")))?;
        match store.instantiate(&wrong, Mode::Replace) {
            Err(Error::AuthFailure) => wrong_refused += 1,
            other => return Err(format!("attempt {attempt}: replace with a wrong password gave {other:?}")),
        }
        ensure!(store.get_system(&tenant).ok() == Some(before), "attempt {attempt}: refused replace changed the system");

        let right = document(&random_table(&mut rng, &tenant, &password))?;
        let summary = store.instantiate(&right, Mode::Replace).map_err(fail("replace"))?;
        ensure!(summary.schemas == right.schemas.len(), "attempt {attempt}: replace summary {summary:?}");
        right_accepted += 1;
    }
    ensure!(store.tenants().len() == ATTEMPTS, "{} tenants after {ATTEMPTS} creates", store.tenants().len());
    Ok(format!(
        "duplicate create refused {duplicates}/{ATTEMPTS}; wrong-password replace refused {wrong_refused}/{ATTEMPTS}; correct replace accepted {right_accepted}/{ATTEMPTS}"
    ))
}

#[derive(Debug, Clone, Copy)]
enum Actor {
    Tenant,
    Clerk,
    Visitor,
}

const ACTORS: [Actor; 3] = [Actor::Tenant, Actor::Clerk, Actor::Visitor];

#[derive(Debug, Clone)]
enum Step {
    Create(Actor, &'static str, Value),
    Get(Actor, &'static str, u64),
    Update(Actor, &'static str, u64, Value),
    Delete(Actor, &'static str, u64),
    List(Actor, &'static str, FilterExpr),
    Stats(Actor, &'static str, &'static str, Aggregate),
    Probe(Actor, &'static str),
    Export(Actor, &'static str),
}

impl Step {
    fn actor(&self) -> Actor {
        match self {
            Step::Create(a, ..)
            | Step::Get(a, ..)
            | Step::Update(a, ..)
            | Step::Delete(a, ..)
            | Step::List(a, ..)
            | Step::Stats(a, ..)
            | Step::Probe(a, ..)
            | Step::Export(a, ..) => *a,
        }
    }
}

/// Every tenant uses the same group, user and schema ids.
fn shop_table(rng: &mut StdRng, tenant: &str) -> String {
    format!(
        "T,{tenant},{tenant}-secret,Shop {tenant}\n\
         G,staff,guests\n\
         U,userid,username,password,groups\n\
         +,clerk,Clerk,{tenant}-clerk,staff\n\
         +,visitor,Visitor,{tenant}-visitor,guests\n\
         S,items,staff,clerk,{},{}\n\
         FI,ftype,fname,attributes\n\
         +,string,name,unique\n\
         +,int,qty,nullable\n\
         +,float,price,nullable\n\
         S,notes,guests,visitor,{},{}\n\
         FI,ftype,fname,attributes\n\
         +,string,text\n\
         +,date,day,nullable\n",
        random_permissions(rng),
        random_permissions(rng),
        random_permissions(rng),
        random_permissions(rng),
    )
}

fn random_body(rng: &mut StdRng, schema: &str, partial: bool) -> Value {
    let mut body = serde_json::Map::new();
    let mut put = |rng: &mut StdRng, key: &str, value: Value| {
        if !partial || rng.random_bool(0.5) {
            body.insert(key.into(), value);
        }
    };
    if schema == "items" {
        let name = json!(format!("n{}", rng.random_range(0..8)));
        put(rng, "name", name);
        let qty = match rng.random_range(0..10) {
            0 => json!(null),
            1 => json!("many"),
            _ => json!(rng.random_range(0..100)),
        };
        put(rng, "qty", qty);
        let price = if rng.random_bool(0.2) { json!(null) } else { json!(rng.random_range(0..400) as f64 / 4.0) };
        put(rng, "price", price);
    } else {
        let text = json!(format!("note {}", rng.random_range(0..20)));
        put(rng, "text", text);
        let day = match rng.random_range(0..8) {
            0 => json!(null),
            1 => json!("2024-02-30"),
            d => json!(format!("2024-03-{d:02}")),
        };
        put(rng, "day", day);
    }
    Value::Object(body)
}

fn random_step(rng: &mut StdRng) -> Step {
    let actor = *ACTORS.choose(rng).unwrap();
    let schema = if rng.random_bool(0.6) { "items" } else { "notes" };
    let id = rng.random_range(1..=6);
    match rng.random_range(0..12) {
        0..=3 => Step::Create(actor, schema, random_body(rng, schema, false)),
        4 => Step::Get(actor, schema, id),
        5 | 6 => Step::Update(actor, schema, id, random_body(rng, schema, true)),
        7 => Step::Delete(actor, schema, id),
        8 => {
            let filter = if schema == "items" {
                FilterExpr {
                    all: vec![Predicate::new("qty", Op::Ge, rng.random_range(0..100))],
                    any: vec![],
                }
            } else {
                FilterExpr {
                    all: vec![],
                    any: vec![Predicate::new("text", Op::Contains, "1"), Predicate::new("day", Op::Ne, "2024-03-03")],
                }
            };
            Step::List(actor, schema, filter)
        }
        9 => {
            let (field, agg) = if schema == "items" { ("price", Aggregate::Sum) } else { ("day", Aggregate::Max) };
            Step::Stats(actor, schema, field, agg)
        }
        10 => Step::Probe(actor, schema),
        _ => Step::Export(actor, schema),
    }
}

/// Sessions of one tenant, indexed like [`ACTORS`].
struct Sessions([Client; 3]);

impl Sessions {
    async fn open(base: &str, tenant: &str) -> Result<Sessions, String> {
        let mut tenant_client = Client::new(base).map_err(fail("client"))?;
        tenant_client
            .login_tenant(tenant, &format!("{tenant}-secret"))
            .await
            .map_err(fail("tenant login"))?;
        let mut clerk = Client::new(base).map_err(fail("client"))?;
        clerk.login_user(tenant, "clerk", &format!("{tenant}-clerk")).await.map_err(fail("clerk login"))?;
        let mut visitor = Client::new(base).map_err(fail("client"))?;
        visitor
            .login_user(tenant, "visitor", &format!("{tenant}-visitor"))
            .await
            .map_err(fail("visitor login"))?;
        Ok(Sessions([tenant_client, clerk, visitor]))
    }

    fn of(&self, actor: Actor) -> &Client {
        &self.0[actor as usize]
    }
}

/// The observable result of one step.
async fn perform(sessions: &Sessions, step: &Step) -> String {
    let c = sessions.of(step.actor());
    let result: Result<Value, ClientError> = match step {
        Step::Create(_, schema, body) => c.create_record(schema, body).await,
        Step::Get(_, schema, id) => c.get_record(schema, &id.to_string()).await,
        Step::Update(_, schema, id, body) => c.update_record(schema, &id.to_string(), body).await,
        Step::Delete(_, schema, id) => c.delete_record(schema, &id.to_string()).await.map(|()| Value::Null),
        Step::List(_, schema, filter) => {
            let options = ListOptions {
                filter: filter.clone(),
                ..ListOptions::default()
            };
            c.list(schema, &options)
                .await
                .map(|page| json!({"records": page.records, "total": page.total}))
        }
        Step::Stats(_, schema, field, agg) => c.stats(schema, field, *agg, &FilterExpr::default()).await,
        Step::Probe(_, schema) => c.permissions(schema).await,
        Step::Export(_, schema) => c
            .export(schema)
            .await
            .map(|bytes| Value::String(String::from_utf8_lossy(&bytes).into_owned())),
    };
    match result {
        Ok(v) => format!("ok {v}"),
        Err(ClientError::Api { status, code, .. }) => format!("error {status} {code}"),
        Err(other) => format!("failure {other}"),
    }
}

async fn upload(base: &str, table: &str) -> Result<(), String> {
    Client::new(base)
        .map_err(fail("client"))?
        .upload_reta(table.as_bytes().to_vec(), "shop.csv", Mode::Create)
        .await
        .map_err(fail("upload"))?;
    Ok(())
}

/// Requests a session of `from` makes against `victim`'s system.
fn intrusions(victim: &str) -> Vec<(reqwest::Method, String, Option<Value>)> {
    use reqwest::Method;
    let q = format!("tenant={victim}");
    vec![
        (Method::GET, format!("/api/data?{q}"), None),
        (Method::GET, format!("/api/data/items?{q}"), None),
        (Method::GET, format!("/api/data/items/1?{q}"), None),
        (Method::POST, format!("/api/data/items?{q}"), Some(json!({"name": "intruder"}))),
        (Method::PUT, format!("/api/data/items/1?{q}"), Some(json!({"qty": 0}))),
        (Method::DELETE, format!("/api/data/items/1?{q}"), None),
        (Method::GET, format!("/api/data/notes/export?{q}"), None),
        (Method::GET, format!("/api/data/items/stats?field=qty&agg=count&{q}"), None),
        (Method::GET, format!("/api/data/notes/permissions?{q}"), None),
        (Method::GET, format!("/api/meta?{q}"), None),
        (Method::GET, format!("/api/meta/users?{q}"), None),
        (Method::PUT, format!("/api/meta/groups/intruders?{q}"), Some(json!({}))),
        (Method::DELETE, format!("/api/meta/schemas/items?{q}"), None),
    ]
}

/// Returns `Ok(())` when the request was refused as cross-tenant.
async fn intrude(http: &reqwest::Client, base: &str, token: &str, victim: &str, rng: &mut StdRng) -> Result<(), String> {
    let (method, path, body) = intrusions(victim).choose(rng).cloned().unwrap();
    let mut request = http.request(method.clone(), format!("{base}{path}")).bearer_auth(token);
    if let Some(body) = body {
        request = request.json(&body);
    }
    let response = request.send().await.map_err(fail("send"))?;
    let status = response.status().as_u16();
    let body: Value = response.json().await.map_err(fail("body"))?;
    ensure!(
        status == 403 && body["error"]["code"] == "cross-tenant",
        "{method} {path} answered {status} {body}"
    );
    Ok(())
}

/// Logs in to `victim` as a same-named user with the attacker's password.
async fn borrow_credentials(http: &reqwest::Client, base: &str, attacker: &str, victim: &str) -> Result<(), String> {
    let response = http
        .post(format!("{base}/api/auth/user"))
        .json(&json!({"tenant": victim, "userid": "clerk", "password": format!("{attacker}-clerk")}))
        .send()
        .await
        .map_err(fail("send"))?;
    ensure!(response.status().as_u16() == 401, "login to {victim} with {attacker}'s password answered {}", response.status());
    Ok(())
}

pub fn isolation() -> Outcome {
    const PAIRS: usize = 50;
    const STEPS: usize = 40;
    let mut rng = StdRng::seed_from_u64(0x1501);
    let rt = runtime();
    rt.block_on(async move {
        let http = reqwest::Client::new();
        let (mut compared, mut denied, mut steps_run) = (0, 0, 0);
        for pair in 0..PAIRS {
            let names = [format!("a{pair}"), format!("b{pair}")];
            let tables = [shop_table(&mut rng, &names[0]), shop_table(&mut rng, &names[1])];
            let traces: [Vec<Step>; 2] = [
                (0..STEPS).map(|_| random_step(&mut rng)).collect(),
                (0..STEPS).map(|_| random_step(&mut rng)).collect(),
            ];

            let shared = Local::start(Store::in_memory()).await;
            upload(&shared.base, &tables[0]).await?;
            upload(&shared.base, &tables[1]).await?;
            let sessions = [Sessions::open(&shared.base, &names[0]).await?, Sessions::open(&shared.base, &names[1]).await?];
            let mut histories: [Vec<String>; 2] = [Vec::new(), Vec::new()];
            let mut next = [0, 0];
            while next[0] < STEPS || next[1] < STEPS {
                let side = if next[0] == STEPS {
                    1
                } else if next[1] == STEPS {
                    0
                } else {
                    rng.random_range(0..2)
                };
                let step = &traces[side][next[side]];
                histories[side].push(perform(&sessions[side], step).await);
                next[side] += 1;
                steps_run += 1;

                if rng.random_bool(0.5) {
                    let attacker = rng.random_range(0..2);
                    let actor = *ACTORS.choose(&mut rng).unwrap();
                    let token = sessions[attacker].of(actor).token().unwrap().to_string();
                    intrude(&http, &shared.base, &token, &names[1 - attacker], &mut rng)
                        .await
                        .map_err(|e| format!("pair {pair}: {e}"))?;
                    denied += 1;
                }
                if rng.random_bool(0.05) {
                    let attacker = rng.random_range(0..2);
                    borrow_credentials(&http, &shared.base, &names[attacker], &names[1 - attacker]).await?;
                    denied += 1;
                }
            }

            shared.stop().await?;

            for side in 0..2 {
                let solo = Local::start(Store::in_memory()).await;
                upload(&solo.base, &tables[side]).await?;
                let alone = Sessions::open(&solo.base, &names[side]).await?;
                let mut history = Vec::with_capacity(STEPS);
                for step in &traces[side] {
                    history.push(perform(&alone, step).await);
                }
                solo.stop().await?;
                if let Some(i) = (0..STEPS).find(|&i| history[i] != histories[side][i]) {
                    return Err(format!(
                        "tenant {} step {i} {:?}: interleaved {:?}, alone {:?}",
                        names[side], traces[side][i], histories[side][i], history[i]
                    ));
                }
                compared += 1;
            }
        }
        Ok(format!(
            "{PAIRS} pairs, {steps_run} interleaved steps; {compared}/{} histories equal their solo runs; {denied}/{denied} cross-tenant attempts denied",
            2 * PAIRS
        ))
    })
}

pub fn many_tenants() -> Outcome {
    const TENANTS: usize = 200;
    const BUDGET: Duration = Duration::from_secs(60);
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x200);
    let template = std::fs::read_to_string(fixture_path("vehicle.csv")).map_err(fail("fixture"))?;
    let dir = tempfile::tempdir().map_err(fail("tempdir"))?;
    let ids: Vec<String> = (0..TENANTS).map(|i| format!("fleet{i:03}")).collect();
    let mut documents = Vec::with_capacity(TENANTS);
    let mut first_id: Option<RecordId> = None;
    {
        let store = Store::open(dir.path()).map_err(fail("open"))?;
        for id in &ids {
            let text = template.replace("T,vms,vms-admin-pw,", &format!("T,{id},pw-{},", rng.random::<u64>()));
            let doc = document(&text)?;
            store.instantiate(&doc, Mode::Create).map_err(fail("create"))?;
            documents.push(doc);
        }
        for (id, doc) in ids.iter().zip(&documents) {
            ensure!(
                matches!(store.instantiate(doc, Mode::Create), Err(Error::DuplicateTenant(ref d)) if d == id),
                "{id} was created twice"
            );
            // colliding unique values across tenants are fine
            let values = [
                ("plate", Some(reta_core::Value::String("SHARED".into()))),
                ("model", Some(reta_core::Value::String(id.clone()))),
                ("year", Some(reta_core::Value::Int(2020))),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            // record ids are counted per tenant, so every tenant's first id is the same
            let record = store.insert_record(id, "vehicle", &values).map_err(fail("insert"))?;
            let first = *first_id.get_or_insert(record);
            ensure!(record == first, "{id}: first record id {record}, expected {first}");
        }
        store.flush().map_err(fail("flush"))?;
    }

    // everything below runs against a reopened store
    let store = Store::open(dir.path()).map_err(fail("reopen"))?;
    let listed: BTreeSet<String> = store.tenants().into_iter().collect();
    ensure!(listed.len() == TENANTS && listed == ids.iter().cloned().collect(), "reopened store lists {} tenants", listed.len());
    let logged: BTreeSet<String> = store.creation_log().into_iter().map(|e| e.tenant).collect();
    ensure!(logged.len() == TENANTS, "creation log names {} tenants", logged.len());

    let mut cross_checks = 0;
    for (i, id) in ids.iter().enumerate() {
        let result = store.query(id, "vehicle", &Query::default()).map_err(fail("query"))?;
        ensure!(result.total == 1, "{id} sees {} vehicles", result.total);
        let model = &result.records[0].values[1];
        ensure!(model.as_ref().map(|v| v.render()) == Some(id.clone()), "{id} sees {model:?}");

        let neighbour = &ids[(i + 1) % TENANTS];
        let principals = [
            Principal::Tenant { tenant: id.clone() },
            Principal::User {
                tenant: id.clone(),
                userid: "bob".into(),
            },
        ];
        for p in &principals {
            for action in [Action::Read, Action::Create, Action::Admin] {
                let decision = store
                    .read(neighbour, |s| authorize(Some(p), action, Some("vehicle"), s))
                    .map_err(fail("read"))?;
                ensure!(decision == Decision::Deny(DenyReason::CrossTenant), "{p:?} {action:?} on {neighbour}: {decision:?}");
                cross_checks += 1;
            }
        }
    }
    let took = started.elapsed();
    ensure!(took < BUDGET, "took {took:.2?}");
    Ok(format!(
        "{TENANTS} tenants created, duplicates refused, data namespaced and durable; {cross_checks} cross-tenant decisions denied; {took:.1?}"
    ))
}
