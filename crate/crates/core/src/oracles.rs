//! Reward and energy oracles: built-in scorers and a subprocess adapter
//! speaking newline-delimited JSON.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{LigandRecord, PocketRecord};
use crate::geometry::distance;
use crate::metrics::is_valid_structure;
use crate::molgraph::{BondOrder, Element};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle spec `{0}`")]
    InvalidSpec(String),
    #[error("external scorer timed out after {0:?}")]
    ExternalTimeout(Duration),
    #[error("external scorer protocol error: {0}")]
    ExternalProtocol(String),
    #[error("external scorer reported: {0}")]
    ExternalReported(String),
    #[error("external scorer i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("no valid candidate to select from")]
    NoValidCandidates,
}

/// Parsed oracle description, written `contains_element:N`,
/// `proximity:4.0`, `constant:1.5` or `external:<timeout secs>:<command>`.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    ContainsElement(Element),
    Proximity { contact: f64 },
    Constant(f64),
    External { timeout: Duration, command: Vec<String> },
}

impl FromStr for OracleSpec {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || OracleError::InvalidSpec(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "contains_element" => Element::from_symbol(rest)
                .map(OracleSpec::ContainsElement)
                .ok_or_else(bad),
            "proximity" => {
                let contact: f64 = rest.parse().map_err(|_| bad())?;
                if contact > 0.0 && contact.is_finite() {
                    Ok(OracleSpec::Proximity { contact })
                } else {
                    Err(bad())
                }
            }
            "constant" => rest.parse().map(OracleSpec::Constant).map_err(|_| bad()),
            "external" => {
                let (secs, cmd) = rest.split_once(':').ok_or_else(bad)?;
                let secs: f64 = secs.parse().map_err(|_| bad())?;
                let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
                if !(secs > 0.0 && secs.is_finite()) || command.is_empty() {
                    return Err(bad());
                }
                Ok(OracleSpec::External {
                    timeout: Duration::from_secs_f64(secs),
                    command,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Scores a decoded, valid ligand in the context of its pocket.
pub trait RewardOracle: Send + Sync {
    fn score(&self, pocket: &PocketRecord, ligand: &LigandRecord) -> Result<f64, OracleError>;
}

/// Lower is better.
pub trait EnergyModel: Send + Sync {
    fn energy(&self, ligand: &LigandRecord) -> f64;
}

/// 1 if the element occurs in the ligand, else 0.
#[derive(Debug, Clone, Copy)]
pub struct ContainsElement(pub Element);

impl RewardOracle for ContainsElement {
    fn score(&self, _pocket: &PocketRecord, ligand: &LigandRecord) -> Result<f64, OracleError> {
        let hit = ligand.graph().atoms().iter().any(|a| a.element == self.0);
        Ok(if hit { 1.0 } else { 0.0 })
    }
}

/// Negative count of ligand atoms within `contact` Å of any pocket CA.
#[derive(Debug, Clone, Copy)]
pub struct Proximity {
    pub contact: f64,
}

impl RewardOracle for Proximity {
    fn score(&self, pocket: &PocketRecord, ligand: &LigandRecord) -> Result<f64, OracleError> {
        let ca = pocket.ca_coords().rows();
        let close = ligand
            .conformer()
            .rows()
            .iter()
            .filter(|p| ca.iter().any(|c| distance(p, c) <= self.contact))
            .count();
        Ok(-(close as f64))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl RewardOracle for Constant {
    fn score(&self, _pocket: &PocketRecord, _ligand: &LigandRecord) -> Result<f64, OracleError> {
        Ok(self.0)
    }
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: u64,
    pocket_atoms: Vec<&'static str>,
    pocket_coords: &'a [[f64; 3]],
    smiles: &'a str,
    ligand_coords: &'a [[f64; 3]],
}

#[derive(Debug, Deserialize)]
struct Response {
    id: u64,
    score: Option<f64>,
    error: Option<String>,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Session {
    fn spawn(command: &[String]) -> Result<Session, OracleError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Session { child, stdin, lines })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Subprocess scorer with a bounded pool of sessions, one request in
/// flight per session. A session that times out or breaks protocol is
/// killed and replaced on the next request.
pub struct ExternalOracle {
    command: Vec<String>,
    timeout: Duration,
    max_sessions: usize,
    idle: Mutex<(Vec<Session>, usize)>,
    freed: Condvar,
    next_id: AtomicU64,
}

impl ExternalOracle {
    pub fn new(command: Vec<String>, timeout: Duration, max_sessions: usize) -> ExternalOracle {
        assert!(!command.is_empty() && max_sessions > 0);
        ExternalOracle {
            command,
            timeout,
            max_sessions,
            idle: Mutex::new((Vec::new(), 0)),
            freed: Condvar::new(),
            next_id: AtomicU64::new(0),
        }
    }

    fn acquire(&self) -> Result<Session, OracleError> {
        let mut guard = self.idle.lock().expect("pool lock");
        loop {
            if let Some(s) = guard.0.pop() {
                return Ok(s);
            }
            if guard.1 < self.max_sessions {
                guard.1 += 1;
                drop(guard);
                return Session::spawn(&self.command).inspect_err(|_| self.forget());
            }
            guard = self.freed.wait(guard).expect("pool lock");
        }
    }

    fn release(&self, s: Session) {
        self.idle.lock().expect("pool lock").0.push(s);
        self.freed.notify_one();
    }

    fn forget(&self) {
        self.idle.lock().expect("pool lock").1 -= 1;
        self.freed.notify_one();
    }

    fn exchange(&self, s: &mut Session, id: u64, line: &str) -> Result<f64, OracleError> {
        writeln!(s.stdin, "{line}")?;
        s.stdin.flush()?;
        let deadline = Instant::now() + self.timeout;
        // answers to other ids are stale and skipped
        let mut pending: HashMap<u64, Response> = HashMap::new();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let text = match s.lines.recv_timeout(left) {
                Ok(t) => t,
                Err(RecvTimeoutError::Timeout) => return Err(OracleError::ExternalTimeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(OracleError::ExternalProtocol("scorer closed its output".into()))
                }
            };
            let resp: Response =
                serde_json::from_str(&text).map_err(|e| OracleError::ExternalProtocol(format!("{e}: {text}")))?;
            pending.insert(resp.id, resp);
            if let Some(resp) = pending.remove(&id) {
                return match (resp.score, resp.error) {
                    (_, Some(e)) => Err(OracleError::ExternalReported(e)),
                    (Some(v), None) if v.is_finite() => Ok(v),
                    _ => Err(OracleError::ExternalProtocol(format!("no finite score in: {text}"))),
                };
            }
        }
    }
}

impl RewardOracle for ExternalOracle {
    fn score(&self, pocket: &PocketRecord, ligand: &LigandRecord) -> Result<f64, OracleError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let req = Request {
            id,
            pocket_atoms: pocket.atoms().map(|a| a.form()).collect(),
            pocket_coords: pocket.ca_coords().rows(),
            smiles: ligand.smiles(),
            ligand_coords: ligand.conformer().rows(),
        };
        let line = serde_json::to_string(&req).map_err(|e| OracleError::ExternalProtocol(e.to_string()))?;
        let mut session = self.acquire()?;
        match self.exchange(&mut session, id, &line) {
            Ok(v) => {
                self.release(session);
                Ok(v)
            }
            Err(e @ OracleError::ExternalReported(_)) => {
                self.release(session);
                Err(e)
            }
            Err(e) => {
                session.kill();
                self.forget();
                Err(e)
            }
        }
    }
}

/// Builds the oracle a spec describes.
pub fn build_oracle(spec: &OracleSpec) -> Box<dyn RewardOracle> {
    match spec {
        OracleSpec::ContainsElement(e) => Box::new(ContainsElement(*e)),
        OracleSpec::Proximity { contact } => Box::new(Proximity { contact: *contact }),
        OracleSpec::Constant(c) => Box::new(Constant(*c)),
        OracleSpec::External { timeout, command } => Box::new(ExternalOracle::new(command.clone(), *timeout, 4)),
    }
}

/// Penalty per nonbonded pair closer than [`CLASH_DISTANCE`].
pub const CLASH_PENALTY: f64 = 100.0;
pub const CLASH_DISTANCE: f64 = 1.0;

fn covalent_radius(e: Element) -> f64 {
    match e {
        Element::H => 0.31,
        Element::B => 0.84,
        Element::C => 0.76,
        Element::N => 0.71,
        Element::O => 0.66,
        Element::F => 0.57,
        Element::P => 1.07,
        Element::S => 1.05,
        Element::Cl => 1.02,
        Element::Br => 1.20,
        Element::I => 1.39,
    }
}

/// Reference bond length in Å from a constants table, falling back to
/// scaled covalent radii.
pub fn reference_length(a: Element, b: Element, order: BondOrder) -> f64 {
    use BondOrder::*;
    use Element::*;
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    match (x, y, order) {
        (C, C, Single) => 1.54,
        (C, C, Double) => 1.34,
        (C, C, Triple) => 1.20,
        (C, C, Aromatic) => 1.40,
        (C, N, Single) => 1.47,
        (C, N, Double) => 1.28,
        (C, N, Triple) => 1.16,
        (C, N, Aromatic) => 1.34,
        (C, O, Single) => 1.43,
        (C, O, Double) => 1.22,
        (C, O, Aromatic) => 1.36,
        (H, C, Single) => 1.09,
        (H, N, Single) => 1.01,
        (H, O, Single) => 0.96,
        _ => {
            let scale = match order {
                Single => 1.0,
                Aromatic => 0.91,
                Double => 0.87,
                Triple => 0.78,
            };
            (covalent_radius(x) + covalent_radius(y)) * scale
        }
    }
}

/// Sum of squared bond-length deviations plus a flat clash penalty.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinEnergy;

impl EnergyModel for BuiltinEnergy {
    fn energy(&self, ligand: &LigandRecord) -> f64 {
        let g = ligand.graph();
        let rows = ligand.conformer().rows();
        let atoms = g.atoms();
        let mut e = 0.0;
        for b in g.bonds() {
            let d =
                distance(&rows[b.a], &rows[b.b]) - reference_length(atoms[b.a].element, atoms[b.b].element, b.order);
            e += d * d;
        }
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                if distance(&rows[i], &rows[j]) < CLASH_DISTANCE && g.bond_between(i, j).is_none() {
                    e += CLASH_PENALTY;
                }
            }
        }
        e
    }
}

/// Index and energy of the lowest-energy valid candidate; the lowest
/// index wins ties.
pub fn assisted_select(candidates: &[LigandRecord], model: &dyn EnergyModel) -> Result<(usize, f64), OracleError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !is_valid_structure(c.graph()) {
            continue;
        }
        let e = model.energy(c);
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    best.ok_or(OracleError::NoValidCandidates)
}
