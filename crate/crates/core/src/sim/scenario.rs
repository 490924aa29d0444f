// Licensed under the Apache-2.0 license.

//! Scenario description and its line-oriented text format.
//!
//! ```text
//! # comment
//! [ports]
//! count = 4
//! grant_timeout = 64
//! bridge_trigger = half_full
//!
//! [modules]
//! 1 = multiplier 3
//! 2 = encoder latency 2
//!
//! [regs]
//! 0x14 = 0x2
//!
//! [apps]
//! 1 = gen 64
//!
//! [chains]
//! 1 = multiplier(3) encoder decoder
//!
//! [host_costs]
//! 1 = 100 100 100
//!
//! [events]
//! 500 = poke 0x10 0x2
//! 900 = release 2
//! 0 = inject 1 0x1 gen 8
//!
//! [expect]
//! completion.1 = 13
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bridge::{BridgeTrigger, DEFAULT_FIFO_DEPTH};
use crate::compute::{parse_word, ModuleKind, DATA_MASK};
use crate::manager::{DEFAULT_QUOTA, DEFAULT_RECONFIG_CYCLES};
use crate::protocol::{Timeouts, DEFAULT_BURST_LEN};
use crate::regfile::{ErrorCode, RegisterMap, APP_COUNT, DEFAULT_PORT_COUNT, MAX_PORTS};
use crate::Word;

pub const DEFAULT_CLOCK_HZ: u64 = 250_000_000;
pub const DEFAULT_MAX_CYCLES: u64 = 100_000_000;
/// Payload words per burst after the leading application-ID word.
pub const PAYLOAD_PER_BURST: usize = DEFAULT_BURST_LEN - 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleSpec {
    pub port: usize,
    pub kind: ModuleKind,
    pub latency: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppData {
    /// `n` bursts of seeded random 26-bit payload.
    Generate(usize),
    /// Payload words, split into bursts of seven.
    Words(Vec<Word>),
    /// Little-endian 32-bit payload words read from a file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppSpec {
    pub id: u8,
    pub data: AppData,
    pub chain: Vec<ModuleKind>,
    /// Host cycles per burst for each chain stage when it runs on the host.
    pub host_costs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Poke { addr: u32, value: Word },
    Release { port: usize },
    Arrive { app: u8 },
    /// Hands a burst straight to a port's master interface.
    Inject { port: usize, dest: Word, words: Vec<Word> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedEvent {
    pub cycle: u64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// Time-to-grant of the last request issued by a port.
    TimeToGrant { port: usize, cycles: u64 },
    /// Completion latency of the last request issued by a port.
    Completion { port: usize, cycles: u64 },
    /// Largest completion latency over all requests.
    WorstCompletion(u64),
    AppStatus { app: u8, code: ErrorCode },
    RegionStatus { port: usize, code: ErrorCode },
    Reg { addr: u32, value: Word },
    /// Host-to-module delivery latency of an app's first burst.
    Delivery { app: u8, cycles: u64 },
    /// App results equal the chain applied in software.
    Reference { app: u8 },
    /// App finishes within this many cycles of its data start.
    EndToEndAtMost { app: u8, cycles: u64 },
    Completed { app: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub ports: usize,
    pub clock_hz: u64,
    pub timeouts: Timeouts,
    pub trigger: BridgeTrigger,
    pub fifo_depth: usize,
    pub max_cycles: u64,
    pub seed: u64,
    pub reconfig_cycles: u64,
    pub host_transfer_cycles: u64,
    /// Package quota the manager writes when it wires a chain.
    pub quota: u8,
    /// Regions occupied by another tenant (no module, not allocatable until released).
    pub reserved: Vec<usize>,
    pub modules: Vec<ModuleSpec>,
    pub regs: Vec<(u32, Word)>,
    pub apps: Vec<AppSpec>,
    pub events: Vec<TimedEvent>,
    pub expect: Vec<Expectation>,
    /// Directory that relative data-file paths resolve against.
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::new(DEFAULT_PORT_COUNT)
    }
}

impl Scenario {
    pub fn new(ports: usize) -> Self {
        Self {
            ports,
            clock_hz: DEFAULT_CLOCK_HZ,
            timeouts: Timeouts::default(),
            trigger: BridgeTrigger::HalfFull,
            fifo_depth: DEFAULT_FIFO_DEPTH,
            max_cycles: DEFAULT_MAX_CYCLES,
            seed: 0,
            reconfig_cycles: DEFAULT_RECONFIG_CYCLES,
            host_transfer_cycles: 0,
            quota: DEFAULT_QUOTA,
            reserved: Vec::new(),
            modules: Vec::new(),
            regs: Vec::new(),
            apps: Vec::new(),
            events: Vec::new(),
            expect: Vec::new(),
            base_dir: None,
        }
    }

    pub fn reg(mut self, addr: u32, value: Word) -> Self {
        self.regs.push((addr, value));
        self
    }

    pub fn module(mut self, port: usize, kind: ModuleKind) -> Self {
        self.modules.push(ModuleSpec { port, kind, latency: 1 });
        self
    }

    pub fn event(mut self, cycle: u64, action: Action) -> Self {
        self.events.push(TimedEvent { cycle, action });
        self
    }

    pub fn app(mut self, app: AppSpec) -> Self {
        self.apps.push(app);
        self
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut sc = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            sc.set(&section, key.trim(), value.trim())
                .map_err(|message| ScenarioError::Parse { line: line_no, message })?;
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        let mut sc = Self::parse(&text)?;
        sc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(sc)
    }

    /// `section.key=value`; a bare key means the `[ports]` section.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ScenarioError> {
        let bad = |m: String| ScenarioError::invalid(format!("--override {spec}"), m);
        let (lhs, value) = spec.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
        let (section, key) = lhs.trim().split_once('.').unwrap_or(("ports", lhs.trim()));
        self.set(section, key, value.trim()).map_err(bad)?;
        self.validate()
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        match section {
            "ports" => self.set_port_key(key, value),
            "modules" => {
                let port = parse_index(key)?;
                let (kind_text, latency) = match value.split_once(" latency ") {
                    Some((k, l)) => (k, parse_num(l)? as u32),
                    None => (value, 1),
                };
                let kind = kind_text.parse::<ModuleKind>().map_err(|e| e.to_string())?;
                self.modules.retain(|m| m.port != port);
                self.modules.push(ModuleSpec { port, kind, latency });
                Ok(())
            }
            "regs" => {
                let addr = parse_word(key).ok_or_else(|| format!("bad register address `{key}`"))?;
                let v = parse_word(value).ok_or_else(|| format!("bad register value `{value}`"))?;
                self.regs.push((addr, v));
                Ok(())
            }
            "apps" => {
                let id = parse_app(key)?;
                let data = parse_app_data(value)?;
                self.app_entry(id).data = data;
                Ok(())
            }
            "chains" => {
                let id = parse_app(key)?;
                let chain = value
                    .split([' ', ',', '\t'])
                    .filter(|t| !t.is_empty() && *t != "->")
                    .map(|t| t.parse::<ModuleKind>().map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()?;
                self.app_entry(id).chain = chain;
                Ok(())
            }
            "host_costs" => {
                let id = parse_app(key)?;
                let costs = value.split_whitespace().map(parse_num).collect::<Result<Vec<_>, _>>()?;
                self.app_entry(id).host_costs = costs;
                Ok(())
            }
            "events" => {
                let cycle = parse_num(key)?;
                let action = parse_action(value)?;
                self.events.push(TimedEvent { cycle, action });
                Ok(())
            }
            "expect" => {
                self.expect.push(parse_expectation(key, value)?);
                Ok(())
            }
            "" => Err(format!("`{key}` outside of any section")),
            other => Err(format!("unknown section `[{other}]`")),
        }
    }

    fn set_port_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "count" => self.ports = parse_num(value)? as usize,
            "clock_hz" => self.clock_hz = parse_num(value)?,
            "grant_timeout" => self.timeouts.grant = parse_num(value)? as u32,
            "ack_timeout" => self.timeouts.ack = parse_num(value)? as u32,
            "bridge_trigger" => self.trigger = value.parse()?,
            "fifo_depth" => self.fifo_depth = parse_num(value)? as usize,
            "max_cycles" => self.max_cycles = parse_num(value)?,
            "seed" => self.seed = parse_num(value)?,
            "reconfig_cycles" => self.reconfig_cycles = parse_num(value)?,
            "host_transfer_cycles" => self.host_transfer_cycles = parse_num(value)?,
            "quota" => {
                self.quota = u8::try_from(parse_num(value)?).map_err(|_| format!("quota `{value}` exceeds 255"))?
            }
            "reserved" => {
                self.reserved =
                    value.split([' ', ',']).filter(|t| !t.is_empty()).map(parse_index).collect::<Result<_, _>>()?
            }
            other => return Err(format!("unknown key `{other}` in [ports]")),
        }
        Ok(())
    }

    fn app_entry(&mut self, id: u8) -> &mut AppSpec {
        if let Some(i) = self.apps.iter().position(|a| a.id == id) {
            return &mut self.apps[i];
        }
        self.apps.push(AppSpec { id, data: AppData::Generate(0), chain: Vec::new(), host_costs: Vec::new() });
        self.apps.last_mut().expect("just pushed")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let map = RegisterMap::new(self.ports).map_err(|e| ScenarioError::invalid("ports.count", e.to_string()))?;
        if self.ports < 2 {
            return Err(ScenarioError::invalid("ports.count", "need the bridge port and at least one region"));
        }
        if self.clock_hz == 0 {
            return Err(ScenarioError::invalid("ports.clock_hz", "must be positive"));
        }
        if self.timeouts.grant == 0 || self.timeouts.ack == 0 {
            return Err(ScenarioError::invalid("ports.grant_timeout/ack_timeout", "must be positive"));
        }
        if self.fifo_depth < DEFAULT_BURST_LEN {
            return Err(ScenarioError::invalid("ports.fifo_depth", format!("must hold a burst ({DEFAULT_BURST_LEN})")));
        }
        let region = |field: &str, p: usize| {
            if p == 0 || p >= self.ports {
                Err(ScenarioError::invalid(field, format!("port {p} is not a region (1..{})", self.ports - 1)))
            } else {
                Ok(())
            }
        };
        for &p in &self.reserved {
            region("ports.reserved", p)?;
        }
        for (i, m) in self.modules.iter().enumerate() {
            region(&format!("modules.{}", m.port), m.port)?;
            if self.reserved.contains(&m.port) || self.modules[..i].iter().any(|o| o.port == m.port) {
                return Err(ScenarioError::invalid(format!("modules.{}", m.port), "port declared twice"));
            }
            if m.latency == 0 {
                return Err(ScenarioError::invalid(format!("modules.{}", m.port), "latency must be at least 1"));
            }
        }
        for &(addr, _) in &self.regs {
            if addr % 4 != 0 || addr > map.last_addr() {
                return Err(ScenarioError::invalid(format!("regs.{addr:#x}"), "address out of range"));
            }
            if map.is_status(addr) {
                return Err(ScenarioError::invalid(format!("regs.{addr:#x}"), "status registers are read-only"));
            }
        }
        for (i, app) in self.apps.iter().enumerate() {
            let field = format!("apps.{}", app.id);
            if app.id as usize >= APP_COUNT {
                return Err(ScenarioError::invalid(field, "application IDs are 0..3"));
            }
            if self.apps[..i].iter().any(|a| a.id == app.id) {
                return Err(ScenarioError::invalid(field, "declared twice"));
            }
            if !app.host_costs.is_empty() && app.host_costs.len() != app.chain.len() {
                return Err(ScenarioError::invalid(
                    format!("host_costs.{}", app.id),
                    format!("{} costs for a {}-stage chain", app.host_costs.len(), app.chain.len()),
                ));
            }
        }
        for ev in &self.events {
            let field = format!("events.{}", ev.cycle);
            match &ev.action {
                Action::Poke { addr, .. } => {
                    if addr % 4 != 0 || *addr > map.last_addr() || map.is_status(*addr) {
                        return Err(ScenarioError::invalid(field, format!("cannot poke {addr:#x}")));
                    }
                }
                Action::Release { port } => region(&field, *port)?,
                Action::Arrive { app } => {
                    if !self.apps.iter().any(|a| a.id == *app) {
                        return Err(ScenarioError::invalid(field, format!("unknown app {app}")));
                    }
                }
                Action::Inject { port, words, .. } => {
                    if *port >= self.ports {
                        return Err(ScenarioError::invalid(field, format!("port {port} out of range")));
                    }
                    if words.is_empty() || words.len() > DEFAULT_BURST_LEN {
                        return Err(ScenarioError::invalid(field, "inject needs 1..8 words"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Host cost of each stage of an app (zero where unset).
    pub fn host_costs(&self, app: &AppSpec) -> Vec<u64> {
        if app.host_costs.is_empty() {
            vec![0; app.chain.len()]
        } else {
            app.host_costs.clone()
        }
    }

    /// Bursts of an app, each led by `(sequence << 2) | id`.
    pub fn bursts(&self, app: &AppSpec) -> Result<Vec<Vec<Word>>, ScenarioError> {
        let payload: Vec<Word> = match &app.data {
            AppData::Generate(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (u64::from(app.id) << 32));
                (0..n * PAYLOAD_PER_BURST).map(|_| rng.gen::<Word>() & DATA_MASK).collect()
            }
            AppData::Words(w) => w.clone(),
            AppData::File(p) => {
                let path = match &self.base_dir {
                    Some(base) if p.is_relative() => base.join(p),
                    _ => p.clone(),
                };
                let bytes = std::fs::read(&path).map_err(|source| ScenarioError::Io { path, source })?;
                bytes
                    .chunks(4)
                    .map(|c| {
                        let mut b = [0u8; 4];
                        b[..c.len()].copy_from_slice(c);
                        Word::from_le_bytes(b)
                    })
                    .collect()
            }
        };
        Ok(payload
            .chunks(PAYLOAD_PER_BURST)
            .enumerate()
            .map(|(seq, chunk)| {
                let mut burst = Vec::with_capacity(chunk.len() + 1);
                burst.push(((seq as Word) << 2) | Word::from(app.id));
                burst.extend_from_slice(chunk);
                burst
            })
            .collect())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[ports]")?;
        writeln!(f, "count = {}", self.ports)?;
        writeln!(f, "clock_hz = {}", self.clock_hz)?;
        writeln!(f, "grant_timeout = {}", self.timeouts.grant)?;
        writeln!(f, "ack_timeout = {}", self.timeouts.ack)?;
        writeln!(f, "bridge_trigger = {}", self.trigger)?;
        writeln!(f, "fifo_depth = {}", self.fifo_depth)?;
        writeln!(f, "max_cycles = {}", self.max_cycles)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "reconfig_cycles = {}", self.reconfig_cycles)?;
        writeln!(f, "host_transfer_cycles = {}", self.host_transfer_cycles)?;
        writeln!(f, "quota = {}", self.quota)?;
        if !self.reserved.is_empty() {
            let r: Vec<String> = self.reserved.iter().map(|p| p.to_string()).collect();
            writeln!(f, "reserved = {}", r.join(" "))?;
        }
        if !self.modules.is_empty() {
            writeln!(f, "\n[modules]")?;
            for m in &self.modules {
                writeln!(f, "{} = {} latency {}", m.port, m.kind, m.latency)?;
            }
        }
        if !self.regs.is_empty() {
            writeln!(f, "\n[regs]")?;
            for (a, v) in &self.regs {
                writeln!(f, "{a:#04x} = {v:#x}")?;
            }
        }
        if !self.apps.is_empty() {
            writeln!(f, "\n[apps]")?;
            for a in &self.apps {
                match &a.data {
                    AppData::Generate(n) => writeln!(f, "{} = gen {n}", a.id)?,
                    AppData::Words(w) => {
                        let w: Vec<String> = w.iter().map(|x| format!("{x:#x}")).collect();
                        writeln!(f, "{} = hex {}", a.id, w.join(" "))?
                    }
                    AppData::File(p) => writeln!(f, "{} = file {}", a.id, p.display())?,
                }
            }
            writeln!(f, "\n[chains]")?;
            for a in &self.apps {
                let c: Vec<String> = a.chain.iter().map(|k| k.to_string()).collect();
                writeln!(f, "{} = {}", a.id, c.join(" "))?;
            }
            writeln!(f, "\n[host_costs]")?;
            for a in self.apps.iter().filter(|a| !a.host_costs.is_empty()) {
                let c: Vec<String> = a.host_costs.iter().map(|k| k.to_string()).collect();
                writeln!(f, "{} = {}", a.id, c.join(" "))?;
            }
        }
        if !self.events.is_empty() {
            writeln!(f, "\n[events]")?;
            for e in &self.events {
                let a = match &e.action {
                    Action::Poke { addr, value } => format!("poke {addr:#x} {value:#x}"),
                    Action::Release { port } => format!("release {port}"),
                    Action::Arrive { app } => format!("arrive {app}"),
                    Action::Inject { port, dest, words } => {
                        let w: Vec<String> = words.iter().map(|x| format!("{x:#x}")).collect();
                        format!("inject {port} {dest:#x} {}", w.join(" "))
                    }
                };
                writeln!(f, "{} = {a}", e.cycle)?;
            }
        }
        if !self.expect.is_empty() {
            writeln!(f, "\n[expect]")?;
            for e in &self.expect {
                match e {
                    Expectation::TimeToGrant { port, cycles } => writeln!(f, "ttg.{port} = {cycles}")?,
                    Expectation::Completion { port, cycles } => writeln!(f, "completion.{port} = {cycles}")?,
                    Expectation::WorstCompletion(c) => writeln!(f, "worst_completion = {c}")?,
                    Expectation::AppStatus { app, code } => writeln!(f, "app_status.{app} = {}", code.bits())?,
                    Expectation::RegionStatus { port, code } => writeln!(f, "region_status.{port} = {}", code.bits())?,
                    Expectation::Reg { addr, value } => writeln!(f, "reg.{addr:#x} = {value:#x}")?,
                    Expectation::Delivery { app, cycles } => writeln!(f, "delivery.{app} = {cycles}")?,
                    Expectation::Reference { app } => writeln!(f, "reference.{app} = true")?,
                    Expectation::EndToEndAtMost { app, cycles } => writeln!(f, "end_to_end_max.{app} = {cycles}")?,
                    Expectation::Completed { app } => writeln!(f, "completed.{app} = true")?,
                }
            }
        }
        Ok(())
    }
}

fn parse_num(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    let parsed = match t.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => t.parse::<u64>().ok().or_else(|| {
            // scientific shorthand such as 1e8
            let (m, e) = t.split_once(['e', 'E'])?;
            let m: u64 = m.parse().ok()?;
            let e: u32 = e.parse().ok()?;
            m.checked_mul(10u64.checked_pow(e)?)
        }),
    };
    parsed.ok_or_else(|| format!("bad number `{s}`"))
}

fn parse_index(s: &str) -> Result<usize, String> {
    let n = parse_num(s)? as usize;
    if n >= MAX_PORTS {
        return Err(format!("port {n} out of range"));
    }
    Ok(n)
}

fn parse_app(s: &str) -> Result<u8, String> {
    let n = parse_num(s)?;
    if n as usize >= APP_COUNT {
        return Err(format!("application ID {n} out of range (0..3)"));
    }
    Ok(n as u8)
}

fn parse_words(tokens: &[&str]) -> Result<Vec<Word>, String> {
    tokens.iter().map(|t| parse_word(t).ok_or_else(|| format!("bad word `{t}`"))).collect()
}

fn parse_app_data(value: &str) -> Result<AppData, String> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    match tokens.as_slice() {
        ["gen", n] => Ok(AppData::Generate(parse_num(n)? as usize)),
        ["hex", rest @ ..] => Ok(AppData::Words(parse_words(rest)?)),
        ["file", path] => Ok(AppData::File(PathBuf::from(path))),
        _ => Err(format!("expected `gen N`, `hex w...` or `file PATH`, got `{value}`")),
    }
}

fn parse_action(value: &str) -> Result<Action, String> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    match tokens.as_slice() {
        ["poke", addr, v] => Ok(Action::Poke {
            addr: parse_word(addr).ok_or_else(|| format!("bad address `{addr}`"))?,
            value: parse_word(v).ok_or_else(|| format!("bad value `{v}`"))?,
        }),
        ["release", p] => Ok(Action::Release { port: parse_index(p)? }),
        ["arrive", a] => Ok(Action::Arrive { app: parse_app(a)? }),
        ["inject", p, dest, "gen", n] => {
            let n = parse_num(n)? as usize;
            Ok(Action::Inject {
                port: parse_index(p)?,
                dest: parse_word(dest).ok_or_else(|| format!("bad destination `{dest}`"))?,
                words: (0..n as Word).collect(),
            })
        }
        ["inject", p, dest, words @ ..] => Ok(Action::Inject {
            port: parse_index(p)?,
            dest: parse_word(dest).ok_or_else(|| format!("bad destination `{dest}`"))?,
            words: parse_words(words)?,
        }),
        _ => Err(format!("unknown event `{value}`")),
    }
}

fn parse_code(s: &str) -> Result<ErrorCode, String> {
    let n = parse_num(s)?;
    u8::try_from(n).ok().and_then(ErrorCode::from_bits).ok_or_else(|| format!("bad error code `{s}`"))
}

fn parse_expectation(key: &str, value: &str) -> Result<Expectation, String> {
    let (name, arg) = key.split_once('.').unwrap_or((key, ""));
    let flag = |v: &str| match v {
        "true" | "yes" | "1" => Ok(()),
        _ => Err(format!("`{key}` expects true")),
    };
    Ok(match name {
        "ttg" => Expectation::TimeToGrant { port: parse_index(arg)?, cycles: parse_num(value)? },
        "completion" => Expectation::Completion { port: parse_index(arg)?, cycles: parse_num(value)? },
        "worst_completion" => Expectation::WorstCompletion(parse_num(value)?),
        "app_status" => Expectation::AppStatus { app: parse_app(arg)?, code: parse_code(value)? },
        "region_status" => Expectation::RegionStatus { port: parse_index(arg)?, code: parse_code(value)? },
        "reg" => Expectation::Reg {
            addr: parse_word(arg).ok_or_else(|| format!("bad address `{arg}`"))?,
            value: parse_word(value).ok_or_else(|| format!("bad value `{value}`"))?,
        },
        "delivery" => Expectation::Delivery { app: parse_app(arg)?, cycles: parse_num(value)? },
        "reference" => {
            flag(value)?;
            Expectation::Reference { app: parse_app(arg)? }
        }
        "completed" => {
            flag(value)?;
            Expectation::Completed { app: parse_app(arg)? }
        }
        "end_to_end_max" => Expectation::EndToEndAtMost { app: parse_app(arg)?, cycles: parse_num(value)? },
        _ => return Err(format!("unknown expectation `{key}`")),
    })
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# three stages on fabric
[ports]
count = 4
bridge_trigger = full
max_cycles = 1e6
quota = 16

[modules]
1 = multiplier 5
2 = encoder latency 2

[regs]
0x14 = 0x2

[apps]
1 = gen 3
2 = hex 1 2 3 4 5 6 7 8 9

[chains]
1 = multiplier(3) -> encoder -> decoder
2 = encoder

[host_costs]
1 = 10 20 30

[events]
100 = poke 0x10 0x2
200 = release 3
0 = inject 1 0x1 gen 8

[expect]
completion.1 = 13
app_status.1 = 0
reference.1 = true
";

    #[test]
    fn parses_all_sections() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(sc.trigger, BridgeTrigger::Full);
        assert_eq!(sc.max_cycles, 1_000_000);
        assert_eq!(sc.quota, 16);
        assert_eq!(sc.modules[0], ModuleSpec { port: 1, kind: ModuleKind::Multiplier(5), latency: 1 });
        assert_eq!(sc.modules[1].latency, 2);
        assert_eq!(sc.regs, vec![(0x14, 2)]);
        assert_eq!(sc.apps[0].chain.len(), 3);
        assert_eq!(sc.apps[0].host_costs, vec![10, 20, 30]);
        assert_eq!(sc.events.len(), 3);
        assert_eq!(sc.expect[0], Expectation::Completion { port: 1, cycles: 13 });
        let bursts = sc.bursts(&sc.apps[1]).unwrap();
        assert_eq!(bursts, vec![vec![2, 1, 2, 3, 4, 5, 6, 7], vec![(1 << 2) | 2, 8, 9]]);
        assert_eq!(sc.bursts(&sc.apps[0]).unwrap().len(), 3);
    }

    #[test]
    fn display_round_trips() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        let again = Scenario::parse(&sc.to_string()).unwrap();
        assert_eq!(again.modules, sc.modules);
        assert_eq!(again.apps, sc.apps);
        assert_eq!(again.events, sc.events);
        assert_eq!(again.regs, sc.regs);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Scenario::parse("[ports]\ncount = 4\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 3, .. }), "{err}");
        let err = Scenario::parse("[modules]\n0 = encoder\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { .. }), "{err}");
        let err = Scenario::parse("[regs]\n0x44 = 1\n").unwrap_err();
        assert!(err.to_string().contains("read-only"));
    }

    #[test]
    fn overrides() {
        let mut sc = Scenario::default();
        sc.apply_override("quota=128").unwrap();
        sc.apply_override("ports.grant_timeout=100").unwrap();
        sc.apply_override("regs.0x24=0x08080808").unwrap();
        assert_eq!(sc.quota, 128);
        assert_eq!(sc.timeouts.grant, 100);
        assert_eq!(sc.regs, vec![(0x24, 0x0808_0808)]);
        assert!(sc.apply_override("count=1").is_err());
    }

    #[test]
    fn generated_data_is_seeded() {
        let mut sc = Scenario::parse("[apps]\n0 = gen 4\n").unwrap();
        let a = sc.bursts(&sc.apps[0]).unwrap();
        assert_eq!(a, sc.bursts(&sc.apps[0]).unwrap());
        sc.seed = 9;
        assert_ne!(a, sc.bursts(&sc.apps[0]).unwrap());
        assert!(a.iter().all(|b| b[1..].iter().all(|w| *w <= DATA_MASK)));
    }
}
