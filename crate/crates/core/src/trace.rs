// Licensed under the Apache-2.0 license.

//! Timestamped event log shared by every component.

use std::fmt;
use std::io::{self, Write};

use sha2::{Digest, Sha256};

use crate::regfile::ErrorCode;
use crate::Word;

pub const CSV_HEADER: &str = "cycle,component,event,src,dst,app,word,code";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Regfile,
    Manager,
    Host,
    Bridge,
    Master(usize),
    MasterPort(usize),
    Arbiter(usize),
    Slave(usize),
    Module(usize),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Regfile => f.write_str("regfile"),
            Self::Manager => f.write_str("manager"),
            Self::Host => f.write_str("host"),
            Self::Bridge => f.write_str("bridge"),
            Self::Master(p) => write!(f, "master{p}"),
            Self::MasterPort(p) => write!(f, "mport{p}"),
            Self::Arbiter(p) => write!(f, "arbiter{p}"),
            Self::Slave(p) => write!(f, "slave{p}"),
            Self::Module(p) => write!(f, "module{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Request,
    Validate,
    Reject,
    Grant,
    Release,
    QuotaExhausted,
    Data,
    Ack,
    Stall,
    Retry,
    Complete,
    Error,
    Reset,
    Poke,
    Reconfig,
    Push,
    Deliver,
    Drop,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Request => "request",
            Self::Validate => "validate",
            Self::Reject => "reject",
            Self::Grant => "grant",
            Self::Release => "release",
            Self::QuotaExhausted => "quota_exhausted",
            Self::Data => "data",
            Self::Ack => "ack",
            Self::Stall => "stall",
            Self::Retry => "retry",
            Self::Complete => "complete",
            Self::Error => "error",
            Self::Reset => "reset",
            Self::Poke => "poke",
            Self::Reconfig => "reconfig",
            Self::Push => "push",
            Self::Deliver => "deliver",
            Self::Drop => "drop",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub cycle: u64,
    pub component: Component,
    pub kind: EventKind,
    pub src: Option<usize>,
    pub dst: Option<usize>,
    pub app: Option<u8>,
    pub word: Option<Word>,
    pub code: Option<ErrorCode>,
}

impl TraceEvent {
    pub fn new(cycle: u64, component: Component, kind: EventKind) -> Self {
        Self { cycle, component, kind, src: None, dst: None, app: None, word: None, code: None }
    }

    pub fn src(mut self, port: usize) -> Self {
        self.src = Some(port);
        self
    }

    pub fn dst(mut self, port: usize) -> Self {
        self.dst = Some(port);
        self
    }

    pub fn app(mut self, app: u8) -> Self {
        self.app = Some(app);
        self
    }

    pub fn word(mut self, word: Word) -> Self {
        self.word = Some(word);
        self
    }

    pub fn code(mut self, code: ErrorCode) -> Self {
        self.code = Some(code);
        self
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            self.cycle,
            self.component,
            self.kind,
            opt(self.src),
            opt(self.dst),
            opt(self.app),
            self.word.map(|w| format!("{w:#010x}")).unwrap_or_default(),
            opt(self.code.map(ErrorCode::bits)),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: TraceEvent) {
        debug_assert!(self.events.last().is_none_or(|e| e.cycle <= event.cycle), "trace went back in time");
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter()
    }

    pub fn filter<'a>(&'a self, component: Component, kind: EventKind) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.component == component && e.kind == kind)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for e in &self.events {
            writeln!(out, "{e}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace CSV is ASCII")
    }

    /// SHA-256 of the CSV rendering, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering() {
        let mut t = Trace::new();
        t.push(TraceEvent::new(4, Component::Master(1), EventKind::Data).src(1).dst(0).app(2).word(0xAB));
        t.push(TraceEvent::new(12, Component::Master(1), EventKind::Complete).src(1).code(ErrorCode::Success));
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "4,master1,data,1,0,2,0x000000ab,");
        assert_eq!(lines[2], "12,master1,complete,1,,,,0");
        assert_eq!(t.digest().len(), 64);
    }
}
