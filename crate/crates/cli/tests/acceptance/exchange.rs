//! Export, import into a fresh tenant, export again.

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use reta_core::reta::Mode;
use reta_core::{load_metadata, FieldType, FieldValues, Query, Store, TabularDocument, Value};

use crate::{fail, Outcome};

const RECORDS: usize = 1000;

fn table(tenant: &str) -> String {
    format!(
        "T,{tenant},{tenant}-pw,Round trip\n\
         G,all\n\
         U,userid,username,password,groups\n\
         +,u,U,u-pw,all\n\
         S,mixed,all,u,CRUD,-\n\
         FI,ftype,fname,attributes\n\
         +,string,key,unique\n\
         +,string,label\n\
         +,string,memo,nullable\n\
         +,int,count\n\
         +,int,delta,nullable\n\
         +,float,ratio\n\
         +,float,weight,nullable\n\
         +,bool,flag\n\
         +,bool,maybe,nullable\n\
         +,date,day\n\
         +,date,due,nullable\n"
    )
}

const PIECES: &[&str] = &[
    "a", "Z", "0", "9", " ", ",", "\"", "\n", "\r\n", "\t", "'", ";", "+", "=", "-", "é", "京", "🚗", "x y", "null",
];

fn random_string(rng: &mut StdRng) -> String {
    (0..rng.random_range(1..=10)).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

fn random_float(rng: &mut StdRng) -> f64 {
    match rng.random_range(0..6) {
        0 => loop {
            let f = f64::from_bits(rng.random());
            if f.is_finite() {
                break f;
            }
        },
        1 => *[0.0, -0.0, 1.0, -1.0, f64::MAX, f64::MIN, f64::MIN_POSITIVE, 5e-324, 0.1, 1e21, 1e-7].choose(rng).unwrap(),
        2 => rng.random_range(-1000..1000) as f64,
        _ => rng.random_range(-1e6..1e6),
    }
}

fn random_int(rng: &mut StdRng) -> i64 {
    match rng.random_range(0..4) {
        0 => *[0, -1, i64::MIN, i64::MAX].choose(rng).unwrap(),
        1 => rng.random(),
        _ => rng.random_range(-10_000..10_000),
    }
}

fn random_value(rng: &mut StdRng, ftype: FieldType) -> Value {
    match ftype {
        FieldType::String => Value::String(random_string(rng)),
        FieldType::Int => Value::Int(random_int(rng)),
        FieldType::Float => Value::Float(random_float(rng)),
        FieldType::Bool => Value::Bool(rng.random()),
        FieldType::Date => {
            let (y, m) = (rng.random_range(1..=9999), rng.random_range(1..=12));
            let d = rng.random_range(1..=31);
            FieldType::Date
                .parse_literal(&format!("{y:04}-{m:02}-{d:02}"))
                .or_else(|_| FieldType::Date.parse_literal(&format!("{y:04}-{m:02}-28")))
                .expect("day 28 exists in every month")
        }
    }
}

/// Value equality with floats compared bit for bit.
fn same(a: &Option<Value>, b: &Option<Value>) -> bool {
    match (a, b) {
        (Some(Value::Float(x)), Some(Value::Float(y))) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

fn export_bytes(store: &Store, tenant: &str) -> Result<Vec<u8>, String> {
    Ok(store.export(tenant, "mixed").map_err(fail("export"))?.to_csv())
}

pub fn round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xe8c4);
    let store = Store::in_memory();
    for tenant in ["source", "target"] {
        let (doc, report) = load_metadata(table(tenant).as_bytes(), "mixed.csv").map_err(fail("load"))?;
        ensure!(report.is_empty(), "{report}");
        store.instantiate(&doc, Mode::Create).map_err(fail("create"))?;
    }
    let schema = store.read("source", |s| s.schema("mixed").cloned()).map_err(fail("read"))?.unwrap();

    let mut originals = Vec::with_capacity(RECORDS);
    let mut nulls = 0;
    for i in 0..RECORDS {
        let mut row = Vec::with_capacity(schema.fields.len());
        for (j, field) in schema.fields.iter().enumerate() {
            let value = if j == 0 {
                Some(Value::String(format!("k{i}{}", random_string(&mut rng))))
            } else if field.nullable() && rng.random_bool(0.3) {
                nulls += 1;
                None
            } else {
                Some(random_value(&mut rng, field.ftype))
            };
            row.push(value);
        }
        let values: FieldValues = schema.fields.iter().map(|f| f.fname.clone()).zip(row.iter().cloned()).collect();
        store.insert_record("source", "mixed", &values).map_err(fail("insert"))?;
        originals.push(row);
    }

    let first = export_bytes(&store, "source")?;
    let doc = TabularDocument::from_bytes(&first, "export.csv").map_err(fail("read export"))?;
    let outcome = store.import("target", "mixed", &doc, true).map_err(fail("import"))?;
    ensure!(outcome.inserted == RECORDS, "imported {} of {RECORDS}", outcome.inserted);

    let imported = store.query("target", "mixed", &Query::default()).map_err(fail("query"))?.records;
    ensure!(imported.len() == RECORDS, "target holds {} records", imported.len());
    for (n, (original, back)) in originals.iter().zip(&imported).enumerate() {
        for (i, field) in schema.fields.iter().enumerate() {
            ensure!(
                same(&original[i], &back.values[i]),
                "record {n} field {}: wrote {:?}, read back {:?}",
                field.fname,
                original[i],
                back.values[i]
            );
        }
    }
    let second = export_bytes(&store, "target")?;
    ensure!(first == second, "the two exports differ ({} vs {} bytes)", first.len(), second.len());
    Ok(format!(
        "{RECORDS} records x {} fields ({nulls} nulls) equal after re-import; exports byte-equal ({} bytes)",
        schema.fields.len(),
        first.len()
    ))
}
