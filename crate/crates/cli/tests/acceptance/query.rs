//! Queries and statistics against a linear-scan oracle that keeps its own
//! copy of the rows.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use reta_core::reta::Mode;
use reta_core::{
    load_metadata, Aggregate, FieldType, FieldValues, FilterExpr, Op, Order, Page, Predicate, Query, StatValue, Store,
    Value,
};
use serde_json::json;

use crate::{fail, Outcome};

const RECORDS: usize = 1000;
const FILTERS: usize = 200;

const TABLE: &str = "T,q,q-pw,Query\n\
G,all\n\
U,userid,username,password,groups\n\
+,u,U,u-pw,all\n\
S,fleet,all,u,CRUD,-\n\
FI,ftype,fname,attributes\n\
+,string,name\n\
+,string,tag,nullable\n\
+,int,year\n\
+,int,seats,nullable\n\
+,float,price\n\
+,float,rating,nullable\n\
+,bool,active\n\
+,bool,leased,nullable\n\
+,date,bought\n\
+,date,sold,nullable\n";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Text,
    Whole,
    Real,
    Flag,
    Day,
}

// (name, kind, nullable) in table order
const FIELDS: [(&str, Kind, bool); 10] = [
    ("name", Kind::Text, false),
    ("tag", Kind::Text, true),
    ("year", Kind::Whole, false),
    ("seats", Kind::Whole, true),
    ("price", Kind::Real, false),
    ("rating", Kind::Real, true),
    ("active", Kind::Flag, false),
    ("leased", Kind::Flag, true),
    ("bought", Kind::Day, false),
    ("sold", Kind::Day, true),
];

const WORDS: [&str; 8] = ["alpha", "alp", "beta", "be", "gamma", "Alpha", "delta", "epsilon"];

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Text(String),
    Whole(i64),
    Real(f64),
    Flag(bool),
    Day(i32, u32, u32),
}

impl Cell {
    fn random(rng: &mut StdRng, kind: Kind) -> Cell {
        match kind {
            Kind::Text => Cell::Text(WORDS.choose(rng).unwrap().to_string()),
            Kind::Whole => Cell::Whole(rng.random_range(-5..40)),
            Kind::Real => Cell::Real(rng.random_range(-40..400) as f64 / 8.0 + [0.0, 0.1, 1e-3].choose(rng).unwrap()),
            Kind::Flag => Cell::Flag(rng.random()),
            Kind::Day => Cell::Day(rng.random_range(2019..=2021), rng.random_range(1..=12), rng.random_range(1..=28)),
        }
    }

    fn date_text(y: i32, m: u32, d: u32) -> String {
        format!("{y:04}-{m:02}-{d:02}")
    }

    fn to_value(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Whole(i) => Value::Int(*i),
            Cell::Real(f) => Value::Float(*f),
            Cell::Flag(b) => Value::Bool(*b),
            Cell::Day(y, m, d) => FieldType::Date.parse_literal(&Self::date_text(*y, *m, *d)).unwrap(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => json!(s),
            Cell::Whole(i) => json!(i),
            Cell::Real(f) => json!(f),
            Cell::Flag(b) => json!(b),
            Cell::Day(y, m, d) => json!(Self::date_text(*y, *m, *d)),
        }
    }

    fn cmp(&self, other: &Cell) -> Option<Ordering> {
        match (self, other) {
            (Cell::Text(a), Cell::Text(b)) => Some(a.cmp(b)),
            (Cell::Whole(a), Cell::Whole(b)) => Some(a.cmp(b)),
            (Cell::Real(a), Cell::Real(b)) => a.partial_cmp(b),
            (Cell::Flag(a), Cell::Flag(b)) => Some(a.cmp(b)),
            (Cell::Day(y1, m1, d1), Cell::Day(y2, m2, d2)) => Some((y1, m1, d1).cmp(&(y2, m2, d2))),
            _ => None,
        }
    }
}

struct Row {
    id: u64,
    cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone)]
struct Pred {
    field: usize,
    op: Op,
    literal: Vec<Cell>,
}

impl Pred {
    fn holds(&self, row: &Row) -> bool {
        let Some(v) = &row.cells[self.field] else {
            return self.op == Op::Ne;
        };
        let first = &self.literal[0];
        let ord = v.cmp(first);
        match self.op {
            Op::Eq => ord == Some(Ordering::Equal),
            Op::Ne => ord != Some(Ordering::Equal),
            Op::Lt => ord == Some(Ordering::Less),
            Op::Le => matches!(ord, Some(Ordering::Less | Ordering::Equal)),
            Op::Gt => ord == Some(Ordering::Greater),
            Op::Ge => matches!(ord, Some(Ordering::Greater | Ordering::Equal)),
            Op::Contains => matches!((v, first), (Cell::Text(s), Cell::Text(n)) if s.contains(n.as_str())),
            Op::In => self.literal.iter().any(|l| v.cmp(l) == Some(Ordering::Equal)),
        }
    }

    fn to_predicate(&self) -> Predicate {
        let value = if self.op == Op::In {
            serde_json::Value::Array(self.literal.iter().map(Cell::to_json).collect())
        } else {
            self.literal[0].to_json()
        };
        Predicate::new(FIELDS[self.field].0, self.op, value)
    }

    fn random(rng: &mut StdRng) -> Pred {
        let field = rng.random_range(0..FIELDS.len());
        let kind = FIELDS[field].1;
        let mut ops = vec![Op::Eq, Op::Ne, Op::In];
        if matches!(kind, Kind::Whole | Kind::Real | Kind::Day) {
            ops.extend([Op::Lt, Op::Le, Op::Gt, Op::Ge]);
        }
        if kind == Kind::Text {
            ops.push(Op::Contains);
        }
        let op = *ops.choose(rng).unwrap();
        let count = if op == Op::In { rng.random_range(1..=4) } else { 1 };
        let literal = match (op, kind) {
            (Op::Contains, _) => vec![Cell::Text(["a", "al", "pha", "e", "A", "z"].choose(rng).unwrap().to_string())],
            _ => (0..count).map(|_| Cell::random(rng, kind)).collect(),
        };
        Pred { field, op, literal }
    }
}

fn matches(all: &[Pred], any: &[Pred], row: &Row) -> bool {
    all.iter().all(|p| p.holds(row)) && (any.is_empty() || any.iter().any(|p| p.holds(row)))
}

/// Expected aggregate in oracle terms.
#[derive(Debug, PartialEq)]
enum Expected {
    Int(i64),
    Float(f64),
    Date(String),
    Empty,
}

fn fold(agg: Aggregate, kind: Kind, matched: &[&Row], field: usize) -> Expected {
    if agg == Aggregate::Count {
        return Expected::Int(matched.len() as i64);
    }
    let present: Vec<&Cell> = matched.iter().filter_map(|r| r.cells[field].as_ref()).collect();
    let as_f64 = |c: &Cell| match c {
        Cell::Whole(i) => *i as f64,
        Cell::Real(f) => *f,
        _ => unreachable!(),
    };
    match agg {
        Aggregate::Sum if kind == Kind::Whole => Expected::Int(
            present
                .iter()
                .map(|c| match c {
                    Cell::Whole(i) => *i,
                    _ => unreachable!(),
                })
                .sum(),
        ),
        Aggregate::Sum => Expected::Float(present.iter().map(|c| as_f64(c)).sum()),
        Aggregate::Avg if present.is_empty() => Expected::Empty,
        Aggregate::Avg => Expected::Float(present.iter().map(|c| as_f64(c)).sum::<f64>() / present.len() as f64),
        Aggregate::Min | Aggregate::Max => {
            let mut best: Option<&Cell> = None;
            for c in present {
                let replace = match best {
                    None => true,
                    Some(b) => {
                        let ord = c.cmp(b).unwrap();
                        if agg == Aggregate::Min {
                            ord == Ordering::Less
                        } else {
                            ord == Ordering::Greater
                        }
                    }
                };
                if replace {
                    best = Some(c);
                }
            }
            match best {
                None => Expected::Empty,
                Some(Cell::Whole(i)) => Expected::Int(*i),
                Some(Cell::Real(f)) => Expected::Float(*f),
                Some(Cell::Day(y, m, d)) => Expected::Date(Cell::date_text(*y, *m, *d)),
                Some(other) => unreachable!("{other:?}"),
            }
        }
        Aggregate::Count => unreachable!(),
    }
}

fn agrees(expected: &Expected, actual: StatValue) -> bool {
    match (expected, actual) {
        (Expected::Int(e), StatValue::Int(a)) => *e == a,
        (Expected::Float(e), StatValue::Float(a)) => {
            let scale = e.abs().max(a.abs());
            (e - a).abs() <= 1e-9 * scale
        }
        (Expected::Date(e), StatValue::Date(_)) => actual.to_json() == json!(e),
        (Expected::Empty, StatValue::Empty) => true,
        _ => false,
    }
}

fn aggregates_for(kind: Kind) -> Vec<Aggregate> {
    let mut aggs = vec![Aggregate::Count];
    if matches!(kind, Kind::Whole | Kind::Real) {
        aggs.extend([Aggregate::Sum, Aggregate::Avg]);
    }
    if matches!(kind, Kind::Whole | Kind::Real | Kind::Day) {
        aggs.extend([Aggregate::Min, Aggregate::Max]);
    }
    aggs
}

/// Oracle ordering: by value with nulls last, then by id.
fn oracle_order(rows: &mut [&Row], field: usize, descending: bool) {
    rows.sort_by(|a, b| {
        let by_value = match (&a.cells[field], &b.cells[field]) {
            (Some(x), Some(y)) => {
                let o = x.cmp(y).unwrap();
                if descending {
                    o.reverse()
                } else {
                    o
                }
            }
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_value.then(a.id.cmp(&b.id))
    });
}

pub fn oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x0f11);
    let store = Store::in_memory();
    let (doc, report) = load_metadata(TABLE.as_bytes(), "query.csv").map_err(fail("load"))?;
    ensure!(report.is_empty(), "{report}");
    store.instantiate(&doc, Mode::Create).map_err(fail("create"))?;

    let mut rows = Vec::with_capacity(RECORDS);
    for _ in 0..RECORDS {
        let cells: Vec<Option<Cell>> = FIELDS
            .iter()
            .map(|&(_, kind, nullable)| (!nullable || rng.random_bool(0.75)).then(|| Cell::random(&mut rng, kind)))
            .collect();
        let values: FieldValues = FIELDS
            .iter()
            .zip(&cells)
            .map(|((name, ..), c)| (name.to_string(), c.as_ref().map(Cell::to_value)))
            .collect();
        let id = store.insert_record("q", "fleet", &values).map_err(fail("insert"))?;
        rows.push(Row { id: id.0, cells });
    }

    let (mut sets_equal, mut orders_equal, mut stats_equal, mut matched_total) = (0, 0, 0, 0);
    for n in 0..FILTERS {
        let all: Vec<Pred> = (0..rng.random_range(0..=3)).map(|_| Pred::random(&mut rng)).collect();
        let any: Vec<Pred> = (0..rng.random_range(0..=3)).map(|_| Pred::random(&mut rng)).collect();
        let filter = FilterExpr {
            all: all.iter().map(Pred::to_predicate).collect(),
            any: any.iter().map(Pred::to_predicate).collect(),
        };
        let mut expected: Vec<&Row> = rows.iter().filter(|r| matches(&all, &any, r)).collect();
        matched_total += expected.len();

        let plain = Query {
            filter: filter.clone(),
            ..Query::default()
        };
        let result = store.query("q", "fleet", &plain).map_err(fail("query"))?;
        let got: BTreeSet<u64> = result.records.iter().map(|r| r.id.0).collect();
        let want: BTreeSet<u64> = expected.iter().map(|r| r.id).collect();
        ensure!(
            got == want && result.total == want.len(),
            "filter {n} {filter:?}: engine {} ids, oracle {}; first difference {:?}",
            got.len(),
            want.len(),
            got.symmetric_difference(&want).next()
        );
        sets_equal += 1;

        let field = rng.random_range(0..FIELDS.len());
        let descending = rng.random_bool(0.5);
        let offset = rng.random_range(0..=expected.len());
        let limit = rng.random_range(0..50);
        let paged = Query {
            filter: filter.clone(),
            page: Page {
                offset,
                limit: Some(limit),
            },
            order: Some(Order {
                field: FIELDS[field].0.to_string(),
                descending,
            }),
        };
        let page = store.query("q", "fleet", &paged).map_err(fail("query"))?;
        oracle_order(&mut expected, field, descending);
        let want: Vec<u64> = expected.iter().skip(offset).take(limit).map(|r| r.id).collect();
        let got: Vec<u64> = page.records.iter().map(|r| r.id.0).collect();
        ensure!(got == want, "filter {n} ordered by {} desc={descending}: engine {got:?}, oracle {want:?}", FIELDS[field].0);
        orders_equal += 1;

        for (index, &(name, kind, _)) in FIELDS.iter().enumerate() {
            for agg in aggregates_for(kind) {
                let want = fold(agg, kind, &expected, index);
                let got = store.statistics("q", "fleet", name, agg, &filter).map_err(fail("statistics"))?;
                ensure!(agrees(&want, got), "filter {n} {agg:?}({name}): engine {got:?}, oracle {want:?}");
                stats_equal += 1;
            }
        }
    }
    Ok(format!(
        "id sets {sets_equal}/{FILTERS}, ordered pages {orders_equal}/{FILTERS}, aggregates {stats_equal}/{stats_equal}; mean {} matches per filter",
        matched_total / FILTERS
    ))
}
