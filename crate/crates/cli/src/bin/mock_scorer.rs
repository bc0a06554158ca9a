//! Line-protocol scorer for exercising the external oracle.
//!
//! Reads one JSON request per line and answers `{id, score}`. Modes:
//! `score <v>` answers `v`, `sleep <secs>` answers 0 after a delay,
//! `garbage` answers a non-JSON line, `error <msg>` reports an error and
//! `atoms` answers the ligand atom count.

use std::io::{self, BufRead, Write};
use std::thread::sleep;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

enum Mode {
    Score(f64),
    Sleep(f64),
    Garbage,
    Error(String),
    Atoms,
}

fn parse_mode(args: &[String]) -> Result<Mode> {
    let arg = |i: usize| args.get(i).with_context(|| format!("{} needs a value", args[0]));
    Ok(match args.first().map(String::as_str) {
        Some("score") => Mode::Score(arg(1)?.parse()?),
        Some("sleep") => Mode::Sleep(arg(1)?.parse()?),
        Some("garbage") => Mode::Garbage,
        Some("error") => Mode::Error(arg(1)?.clone()),
        Some("atoms") | None => Mode::Atoms,
        Some(other) => bail!("unknown mode {other:?}"),
    })
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = parse_mode(&args)?;
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let req: Value = serde_json::from_str(&line?)?;
        let id = req["id"].clone();
        let reply = match &mode {
            Mode::Score(v) => json!({ "id": id, "score": v }).to_string(),
            Mode::Sleep(secs) => {
                sleep(Duration::from_secs_f64(*secs));
                json!({ "id": id, "score": 0.0 }).to_string()
            }
            Mode::Garbage => "not json".to_string(),
            Mode::Error(msg) => json!({ "id": id, "error": msg }).to_string(),
            Mode::Atoms => {
                let n = req["ligand_coords"].as_array().map_or(0, Vec::len);
                json!({ "id": id, "score": n as f64 }).to_string()
            }
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}
