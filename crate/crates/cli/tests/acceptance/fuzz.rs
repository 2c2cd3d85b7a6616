//! Mutated requirements tables through the full load path.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use reta_core::{load_metadata, Error, TabularDocument};

use crate::common::fixture_path;
use crate::{fail, panic_text, Outcome};

const INPUTS: usize = 100_000;
const BUDGET: Duration = Duration::from_secs(1);

const MARKERS: &[&str] = &["T", "G", "U", "S", "FI", "+", "t", "fi", "", "X", "++", " S ", "\u{feff}T"];
const TOKENS: &[&str] = &[
    "", "int", "float", "date", "bool", "string", "unique", "nullable", "notnull", "default=", "default=x",
    "default=2024-02-30", "CRUD", "-", "crud", "XYZ", ";;", "a;b", "\"", "\"\"", "é", "0", "9999999999999999999999",
];
const BYTES: &[u8] = b",\"\n\r+;= TSGUFI-\t\x00\xff\xc3\xa9";

fn lines(bytes: &[u8]) -> Vec<Vec<u8>> {
    bytes.split(|&b| b == b'\n').map(<[u8]>::to_vec).collect()
}

fn join(lines: &[Vec<u8>]) -> Vec<u8> {
    lines.join(&b'\n')
}

fn mutate_text(rng: &mut StdRng, input: &mut Vec<u8>) {
    let len = input.len();
    match rng.random_range(0..12) {
        0 if len > 0 => {
            let i = rng.random_range(0..len);
            input[i] = rng.random();
        }
        1 => {
            let i = rng.random_range(0..=len);
            let run = rng.random_range(1..=4);
            for _ in 0..run {
                input.insert(i, *BYTES.choose(rng).unwrap());
            }
        }
        2 if len > 0 => {
            let start = rng.random_range(0..len);
            let end = (start + rng.random_range(1..=32)).min(len);
            input.drain(start..end);
        }
        3 => {
            let mut ls = lines(input);
            let i = rng.random_range(0..ls.len());
            let copy = ls[i].clone();
            ls.insert(rng.random_range(0..=ls.len()), copy);
            *input = join(&ls);
        }
        4 => {
            let mut ls = lines(input);
            ls.remove(rng.random_range(0..ls.len()));
            *input = join(&ls);
        }
        5 => {
            let mut ls = lines(input);
            let (a, b) = (rng.random_range(0..ls.len()), rng.random_range(0..ls.len()));
            ls.swap(a, b);
            *input = join(&ls);
        }
        6 | 7 => {
            let mut ls = lines(input);
            let i = rng.random_range(0..ls.len());
            let text = String::from_utf8_lossy(&ls[i]).into_owned();
            let mut cells: Vec<String> = text.split(',').map(str::to_string).collect();
            let c = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..cells.len() + 2) };
            let token = if c == 0 { MARKERS.choose(rng) } else { TOKENS.choose(rng) };
            let token = token.unwrap().to_string();
            if c < cells.len() {
                cells[c] = token;
            } else {
                cells.push(token);
            }
            ls[i] = cells.join(",").into_bytes();
            *input = join(&ls);
        }
        8 => input.truncate(rng.random_range(0..=len)),
        9 => {
            let i = rng.random_range(0..=len);
            let (unit, times): (&[u8], usize) = match rng.random_range(0..4) {
                0 => (b",", 5000),
                1 => (b"x", 20_000),
                2 => (b"\n+,f,string,x", 2000),
                _ => (b"\"", 3),
            };
            let blob = unit.repeat(times);
            input.splice(i..i, blob);
        }
        10 => {
            let mut ls = lines(input);
            ls.shuffle(rng);
            *input = join(&ls);
        }
        _ => *input = (0..rng.random_range(0..200)).map(|_| rng.random()).collect(),
    }
}

fn mutate_bytes(rng: &mut StdRng, input: &mut Vec<u8>) {
    let len = input.len();
    match rng.random_range(0..4) {
        0 if len > 0 => {
            let i = rng.random_range(0..len);
            input[i] = rng.random();
        }
        1 if len > 4 => input.truncate(rng.random_range(4..len)),
        2 if len > 0 => {
            let start = rng.random_range(0..len);
            let end = (start + rng.random_range(1..=64)).min(len);
            input.drain(start..end);
        }
        _ => {
            let i = rng.random_range(0..=len);
            input.insert(i, rng.random());
        }
    }
}

fn to_xlsx(doc: &TabularDocument) -> Vec<u8> {
    let mut wb = rust_xlsxwriter::Workbook::new();
    let ws = wb.add_worksheet();
    for (r, row) in doc.rows.iter().enumerate() {
        for (c, cell) in row.cells.iter().enumerate().take(1000) {
            // the writer refuses over-long cells; those inputs stay CSV-only
            let _ = ws.write_string(r as u32, c as u16, cell);
        }
    }
    wb.save_to_buffer().expect("workbook")
}

#[derive(Default)]
struct Tally {
    valid: usize,
    invalid: usize,
    parse_errors: usize,
    unreadable: usize,
    unstructured: Vec<String>,
    panics: Vec<String>,
    slowest: Duration,
}

impl Tally {
    fn feed(&mut self, input: &[u8]) {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| load_metadata(input, "fuzz.csv")));
        self.slowest = self.slowest.max(started.elapsed());
        match outcome {
            Ok(Ok((_, report))) if report.is_empty() => self.valid += 1,
            Ok(Ok(_)) => self.invalid += 1,
            Ok(Err(Error::Parse(errors))) => {
                if errors.0.is_empty() || errors.0.iter().any(|e| e.row == 0 || e.column == 0) {
                    self.unstructured.push(format!("{errors:?}"));
                } else {
                    self.parse_errors += 1;
                }
            }
            Ok(Err(Error::Tabular(_))) => self.unreadable += 1,
            Ok(Err(other)) => self.unstructured.push(other.to_string()),
            Err(payload) => self.panics.push(panic_text(&*payload)),
        }
    }
}

pub fn parser_robustness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xf022);
    let fixture = std::fs::read(fixture_path("vehicle.csv")).map_err(fail("fixture"))?;
    let seeds: Vec<Vec<u8>> = vec![
        fixture.clone(),
        b"T,x,pw,X\nG,g\nU,userid,username,password,groups\n+,u,U,p,g\nS,s,g,u,CRUD,-\nFI,ftype,fname,attributes\n+,int,n,default=1\n"
            .to_vec(),
        b"T,x,pw,X\n\nG,a,b\n+,c\n\n".to_vec(),
    ];
    let xlsx_seed = to_xlsx(&TabularDocument::from_csv(&fixture, "vehicle.csv").map_err(fail("fixture"))?);

    let previous = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut tally = Tally::default();
    for n in 0..INPUTS {
        let input = match n % 100 {
            // raw damage to a workbook
            0..=2 => {
                let mut bytes = xlsx_seed.clone();
                for _ in 0..rng.random_range(1..=3) {
                    mutate_bytes(&mut rng, &mut bytes);
                }
                bytes
            }
            // cell-level damage, then written as a workbook
            3 | 4 => {
                let mut text = seeds.choose(&mut rng).unwrap().clone();
                mutate_text(&mut rng, &mut text);
                match TabularDocument::from_csv(&text, "m.csv") {
                    Ok(doc) => to_xlsx(&doc),
                    Err(_) => text,
                }
            }
            _ => {
                let mut text = seeds.choose(&mut rng).unwrap().clone();
                for _ in 0..rng.random_range(1..=4) {
                    mutate_text(&mut rng, &mut text);
                }
                text
            }
        };
        tally.feed(&input);
    }
    std::panic::set_hook(previous);

    ensure!(tally.panics.is_empty(), "{} panics, first: {}", tally.panics.len(), tally.panics[0]);
    ensure!(
        tally.unstructured.is_empty(),
        "{} unstructured outcomes, first: {}",
        tally.unstructured.len(),
        tally.unstructured[0]
    );
    ensure!(tally.slowest < BUDGET, "slowest input took {:.2?}", tally.slowest);
    Ok(format!(
        "{INPUTS} inputs: {} valid, {} with diagnostics, {} positioned parse failures, {} unreadable; no panics; slowest {:.1?}",
        tally.valid, tally.invalid, tally.parse_errors, tally.unreadable, tally.slowest
    ))
}
