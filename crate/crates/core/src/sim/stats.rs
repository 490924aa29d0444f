// Licensed under the Apache-2.0 license.

//! Latency bookkeeping, and its reconstruction from a raw trace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::regfile::ErrorCode;
use crate::trace::{Component, EventKind, Trace};
use crate::Word;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub port: usize,
    pub request_cycle: u64,
    pub first_data: Option<u64>,
    pub last_data: Option<u64>,
    pub complete_cycle: Option<u64>,
    pub code: Option<ErrorCode>,
    pub words_sent: usize,
}

impl RequestRecord {
    pub fn new(port: usize, request_cycle: u64) -> Self {
        Self {
            port,
            request_cycle,
            first_data: None,
            last_data: None,
            complete_cycle: None,
            code: None,
            words_sent: 0,
        }
    }

    /// Cycles from the request until the first data word is on the bus.
    pub fn time_to_grant(&self) -> Option<u64> {
        self.first_data.map(|d| d - self.request_cycle)
    }

    /// Cycles from the request up to and including the status cycle.
    pub fn completion_latency(&self) -> Option<u64> {
        self.complete_cycle.map(|c| c - self.request_cycle + 1)
    }
}

/// One host burst moved from a FIFO into a module's slave buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub app: u8,
    pub burst: u64,
    pub first_push: u64,
    pub last_store: u64,
}

impl DeliveryRecord {
    pub fn latency(&self) -> u64 {
        self.last_store - self.first_push + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AppReport {
    pub app: u8,
    pub bursts: usize,
    pub arrival: u64,
    /// Cycle the chain was ready and host transfers began.
    pub data_start: Option<u64>,
    pub completion: Option<u64>,
    pub fabric_stages_initial: usize,
    pub fabric_stages_final: usize,
    /// Bursts lost to errors (dropped at the bridge or failed in the fabric).
    pub lost: usize,
    pub host_busy_cycles: u64,
    /// Final results, indexed by burst sequence number.
    pub results: Vec<Option<Vec<Word>>>,
    /// Results equal the chain applied in software.
    pub reference_ok: bool,
    /// Chain length; zero for raw apps routed by register settings alone.
    pub chain_len: usize,
}

impl AppReport {
    /// Cycles spent programming regions before data could flow.
    pub fn reconfig_cycles(&self) -> Option<u64> {
        self.data_start.map(|s| s - self.arrival)
    }

    pub fn end_to_end(&self) -> Option<u64> {
        Some(self.completion? - self.data_start?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LatencyStats {
    pub requests: Vec<RequestRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub apps: Vec<AppReport>,
    pub cycles: u64,
    pub clock_hz: u64,
}

impl LatencyStats {
    pub fn to_ms(&self, cycles: u64) -> f64 {
        cycles as f64 * 1e3 / self.clock_hz.max(1) as f64
    }

    pub fn last_request(&self, port: usize) -> Option<&RequestRecord> {
        self.requests.iter().rev().find(|r| r.port == port)
    }

    pub fn worst_completion(&self) -> Option<u64> {
        self.requests.iter().filter_map(RequestRecord::completion_latency).max()
    }

    pub fn app(&self, app: u8) -> Option<&AppReport> {
        self.apps.iter().find(|a| a.app == app)
    }

    /// Request and per-app timing rebuilt from trace events alone.
    pub fn from_trace(trace: &Trace) -> TraceStats {
        let mut open: BTreeMap<usize, usize> = BTreeMap::new();
        let mut requests: Vec<RequestRecord> = Vec::new();
        let mut app_start: BTreeMap<u8, u64> = BTreeMap::new();
        let mut app_end: BTreeMap<u8, u64> = BTreeMap::new();
        for e in trace.iter() {
            match (e.component, e.kind) {
                (Component::Master(p), EventKind::Request) => {
                    open.insert(p, requests.len());
                    requests.push(RequestRecord::new(p, e.cycle));
                }
                (Component::Master(p), EventKind::Data) => {
                    if let Some(r) = open.get(&p).map(|&i| &mut requests[i]) {
                        r.first_data.get_or_insert(e.cycle);
                        r.last_data = Some(e.cycle);
                        r.words_sent += 1;
                    }
                }
                (Component::Master(p), EventKind::Complete) => {
                    if let Some(i) = open.remove(&p) {
                        requests[i].complete_cycle = Some(e.cycle);
                        requests[i].code = e.code;
                    }
                }
                (Component::Regfile, EventKind::Reset) if e.word == Some(1) => {
                    // an aborted request never completes
                    if let Some(p) = e.src {
                        open.remove(&p);
                    }
                }
                (Component::Host, EventKind::Request) => {
                    if let Some(a) = e.app {
                        app_start.insert(a, e.cycle);
                    }
                }
                (Component::Host, EventKind::Complete) => {
                    if let Some(a) = e.app {
                        app_end.insert(a, e.cycle);
                    }
                }
                _ => {}
            }
        }
        let end_to_end = app_end
            .iter()
            .filter_map(|(a, end)| app_start.get(a).map(|s| (*a, end - s)))
            .collect();
        TraceStats { requests, end_to_end }
    }

    /// The subset of these stats that [`Self::from_trace`] can rebuild.
    pub fn trace_view(&self) -> TraceStats {
        TraceStats {
            requests: self.requests.clone(),
            end_to_end: self.apps.iter().filter_map(|a| a.end_to_end().map(|e| (a.app, e))).collect(),
        }
    }

    pub fn requests_csv(&self) -> String {
        let mut s = String::from("port,request,first_data,complete,time_to_grant,completion,code,words\n");
        let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.requests {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.port,
                r.request_cycle,
                opt(r.first_data),
                opt(r.complete_cycle),
                opt(r.time_to_grant()),
                opt(r.completion_latency()),
                r.code.map(|c| c.bits().to_string()).unwrap_or_default(),
                r.words_sent,
            );
        }
        s
    }

    pub fn apps_csv(&self) -> String {
        let mut s = String::from(
            "app,bursts,fabric_stages_initial,fabric_stages_final,arrival,data_start,completion,reconfig_cycles,end_to_end_cycles,end_to_end_ms,lost,reference_ok\n",
        );
        let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        for a in &self.apps {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                a.app,
                a.bursts,
                a.fabric_stages_initial,
                a.fabric_stages_final,
                a.arrival,
                opt(a.data_start),
                opt(a.completion),
                opt(a.reconfig_cycles()),
                opt(a.end_to_end()),
                a.end_to_end().map(|c| format!("{:.4}", self.to_ms(c))).unwrap_or_default(),
                a.lost,
                a.reference_ok,
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cycles simulated: {} ({:.4} ms)", self.cycles, self.to_ms(self.cycles));
        let ok = self.requests.iter().filter(|r| r.code == Some(ErrorCode::Success)).count();
        let _ = writeln!(s, "requests: {} ({} ok, {} failed)", self.requests.len(), ok, self.requests.len() - ok);
        if let Some(w) = self.worst_completion() {
            let _ = writeln!(s, "worst completion latency: {w} cycles");
        }
        let mut by_app: BTreeMap<u8, Vec<u64>> = BTreeMap::new();
        for d in &self.deliveries {
            by_app.entry(d.app).or_default().push(d.latency());
        }
        for (app, l) in &by_app {
            let _ = writeln!(
                s,
                "app {app}: {} host-to-module deliveries, first {} cycles, max {} cycles",
                l.len(),
                l[0],
                l.iter().max().copied().unwrap_or(0),
            );
        }
        for a in &self.apps {
            match a.end_to_end() {
                Some(e) => {
                    let _ = writeln!(
                        s,
                        "app {}: {} bursts, fabric stages {}->{}, end-to-end {} cycles ({:.4} ms), reconfig {} cycles, lost {}, reference {}",
                        a.app,
                        a.bursts,
                        a.fabric_stages_initial,
                        a.fabric_stages_final,
                        e,
                        self.to_ms(e),
                        a.reconfig_cycles().unwrap_or(0),
                        a.lost,
                        match (a.chain_len, a.reference_ok) {
                            (0, _) => "unchecked (raw app)",
                            (_, true) => "ok",
                            (_, false) => "MISMATCH",
                        },
                    );
                }
                None => {
                    let _ = writeln!(s, "app {}: did not complete", a.app);
                }
            }
        }
        s
    }
}

/// Timing recoverable from the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStats {
    pub requests: Vec<RequestRecord>,
    pub end_to_end: BTreeMap<u8, u64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceEvent;

    #[test]
    fn request_latencies() {
        let mut r = RequestRecord::new(1, 10);
        r.first_data = Some(14);
        r.complete_cycle = Some(22);
        assert_eq!(r.time_to_grant(), Some(4));
        assert_eq!(r.completion_latency(), Some(13));
    }

    #[test]
    fn rebuild_from_events() {
        let mut t = Trace::new();
        t.push(TraceEvent::new(0, Component::Master(2), EventKind::Request).src(2));
        for c in 4..12 {
            t.push(TraceEvent::new(c, Component::Master(2), EventKind::Data).src(2).word(0));
        }
        t.push(TraceEvent::new(12, Component::Master(2), EventKind::Complete).src(2).code(ErrorCode::Success));
        let ts = LatencyStats::from_trace(&t);
        assert_eq!(ts.requests.len(), 1);
        assert_eq!(ts.requests[0].time_to_grant(), Some(4));
        assert_eq!(ts.requests[0].completion_latency(), Some(13));
        assert_eq!(ts.requests[0].words_sent, 8);
    }
}
