// Licensed under the Apache-2.0 license.

//! Cycle-accurate kernel: ports, crossbar, bridge, modules, manager and host
//! advanced in a fixed order every clock.
//!
//! Per cycle:
//! 1. scheduled scenario events
//! 2. manager (reconfiguration completions, rewires)
//! 3. host (completions, host-only stages, FIFO pushes)
//! 4. reset lines
//! 5. bridge egress, streaming and ingress
//! 6. masters drive, slaves answer, masters advance
//! 7. crossbar arbiters and master ports clock
//! 8. modules advance
//!
//! When nothing is in flight the kernel jumps straight to the next cycle at
//! which something is scheduled.

pub mod batch;
pub mod bench;
pub mod host;
pub mod scenario;
pub mod stats;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::bridge::{app_id, Bridge, Ingress};
use crate::compute::ComputeModule;
use crate::crossbar::{Crossbar, OneHotAddress};
use crate::manager::{Manager, ManagerAction, ManagerError, RegionState};
use crate::protocol::{Drive, MasterEvent, MasterInputs, MasterInterface, ModuleRequest, SlaveInterface, SlaveOutputs};
use crate::regfile::{ErrorCode, RegisterFile};
use crate::trace::{Component, EventKind, Trace, TraceEvent};
use crate::Word;

use host::{Host, HostApp};
use scenario::{Action, Expectation, Scenario, ScenarioError, TimedEvent};
use stats::{AppReport, DeliveryRecord, LatencyStats, RequestRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    /// The run was cut short; `output` holds everything up to the limit.
    #[error("cycle limit of {limit} reached with work still pending")]
    CycleLimitExceeded { limit: u64, output: Box<RunOutput> },
}

impl SimError {
    /// Partial results of a run that hit the cycle limit.
    pub fn partial_output(&self) -> Option<&RunOutput> {
        match self {
            Self::CycleLimitExceeded { output, .. } => Some(output),
            Self::Scenario(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub stats: LatencyStats,
    /// Register file as it stood at the end of the run.
    pub regfile: RegisterFile,
    pub cycles: u64,
}

/// Outcome of one expectation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub expectation: Expectation,
    pub passed: bool,
    pub actual: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:?} (actual: {})", self.expectation, self.actual)
    }
}

fn show<T: fmt::Debug>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v:?}"))
}

impl RunOutput {
    pub fn digest(&self) -> String {
        self.trace.digest()
    }

    pub fn check(&self, expectations: &[Expectation]) -> Vec<Check> {
        expectations.iter().map(|e| self.check_one(e)).collect()
    }

    fn check_one(&self, e: &Expectation) -> Check {
        let s = &self.stats;
        let (passed, actual) = match *e {
            Expectation::TimeToGrant { port, cycles } => {
                let v = s.last_request(port).and_then(RequestRecord::time_to_grant);
                (v == Some(cycles), show(v))
            }
            Expectation::Completion { port, cycles } => {
                let v = s.last_request(port).and_then(RequestRecord::completion_latency);
                (v == Some(cycles), show(v))
            }
            Expectation::WorstCompletion(cycles) => {
                let v = s.worst_completion();
                (v == Some(cycles), show(v))
            }
            Expectation::AppStatus { app, code } => {
                let v = self.regfile.app_status(app as usize);
                (v == Some(code), show(v))
            }
            Expectation::RegionStatus { port, code } => {
                let v = self.regfile.region_status(port);
                (v == Some(code), show(v))
            }
            Expectation::Reg { addr, value } => {
                let v = self.regfile.read(addr).ok();
                (v == Some(value), v.map_or_else(|| "unreadable".into(), |v| format!("{v:#x}")))
            }
            Expectation::Delivery { app, cycles } => {
                let v = s.deliveries.iter().find(|d| d.app == app).map(DeliveryRecord::latency);
                (v == Some(cycles), show(v))
            }
            Expectation::Reference { app } => {
                let v = s.app(app).map(|a| a.reference_ok);
                (v == Some(true), show(v))
            }
            Expectation::EndToEndAtMost { app, cycles } => {
                let v = s.app(app).and_then(AppReport::end_to_end);
                (v.is_some_and(|v| v <= cycles), show(v))
            }
            Expectation::Completed { app } => {
                let v = s.app(app).and_then(|a| a.completion);
                (v.is_some(), show(v))
            }
        };
        Check { expectation: e.clone(), passed, actual }
    }
}

/// Who handed the current request to a master interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Idle,
    Module,
    Injected,
    Bridge { burst: u64, app: u8 },
}

#[derive(Debug, Clone)]
pub struct System {
    cycle: u64,
    max_cycles: u64,
    clock_hz: u64,
    regfile: RegisterFile,
    crossbar: Crossbar,
    masters: Vec<MasterInterface>,
    owners: Vec<Owner>,
    injections: Vec<VecDeque<ModuleRequest>>,
    slaves: Vec<SlaveInterface>,
    /// Slave outputs of the previous cycle.
    slave_out: Vec<SlaveOutputs>,
    /// Registered data_read lines into the slave buffers.
    data_read: Vec<bool>,
    modules: Vec<Option<ComputeModule>>,
    bridge: Bridge,
    bridge_pending: Option<(ModuleRequest, u64, u8)>,
    manager: Manager,
    host: Host,
    events: VecDeque<TimedEvent>,
    pending_start: Vec<u8>,
    prev_reset: Word,
    open: Vec<Option<usize>>,
    requests: Vec<RequestRecord>,
    deliveries: Vec<DeliveryRecord>,
    trace: Trace,
}

fn invalid(field: &str, message: impl fmt::Display) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.to_string() }
}

impl System {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let n = scenario.ports;
        let mut regfile = RegisterFile::new(n).map_err(|e| invalid("ports.count", e))?;
        for &(addr, value) in &scenario.regs {
            regfile.poke(addr, value).map_err(|e| invalid(&format!("regs.{addr:#x}"), e))?;
        }
        let mut manager = Manager::new(n, scenario.reconfig_cycles, scenario.quota);
        let mut modules = vec![None; n];
        for spec in &scenario.modules {
            modules[spec.port] = Some(ComputeModule::with_latency(spec.kind, spec.latency));
            manager.reserve(spec.port).map_err(|e| invalid("modules", e))?;
        }
        for &p in &scenario.reserved {
            manager.reserve(p).map_err(|e| invalid("ports.reserved", e))?;
        }
        let mut host = Host::new(scenario.host_transfer_cycles);
        for (i, app) in scenario.apps.iter().enumerate() {
            let bursts = scenario.bursts(app)?;
            host.add(HostApp::new(app.id, app.chain.clone(), scenario.host_costs(app), bursts, i));
        }
        let mut events: Vec<TimedEvent> = scenario
            .apps
            .iter()
            .filter(|a| !scenario.events.iter().any(|e| e.action == Action::Arrive { app: a.id }))
            .map(|a| TimedEvent { cycle: 0, action: Action::Arrive { app: a.id } })
            .collect();
        events.extend(scenario.events.iter().cloned());
        events.sort_by_key(|e| e.cycle);
        Ok(Self {
            cycle: 0,
            max_cycles: scenario.max_cycles,
            clock_hz: scenario.clock_hz,
            crossbar: Crossbar::new(n),
            masters: vec![MasterInterface::new(scenario.timeouts); n],
            owners: vec![Owner::Idle; n],
            injections: vec![VecDeque::new(); n],
            slaves: vec![SlaveInterface::new(); n],
            slave_out: vec![SlaveOutputs::default(); n],
            data_read: vec![false; n],
            modules,
            bridge: Bridge::new(scenario.fifo_depth, scenario.trigger),
            bridge_pending: None,
            manager,
            host,
            events: events.into(),
            pending_start: Vec::new(),
            prev_reset: regfile.reset_bits(),
            regfile,
            open: vec![None; n],
            requests: Vec::new(),
            deliveries: Vec::new(),
            trace: Trace::new(),
        })
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn regfile(&self) -> &RegisterFile {
        &self.regfile
    }

    pub fn crossbar(&self) -> &Crossbar {
        &self.crossbar
    }

    pub fn manager(&self) -> &Manager {
        &self.manager
    }

    pub fn host(&self) -> &Host {
        &self.host
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn module(&self, port: usize) -> Option<&ComputeModule> {
        self.modules.get(port).and_then(Option::as_ref)
    }

    pub fn master(&self, port: usize) -> &MasterInterface {
        &self.masters[port]
    }

    pub fn slave(&self, port: usize) -> &SlaveInterface {
        &self.slaves[port]
    }

    fn ports(&self) -> usize {
        self.masters.len()
    }

    /// Nothing changes until the next scheduled wake-up.
    pub fn is_quiescent(&self) -> bool {
        let n = self.ports();
        self.bridge_pending.is_none()
            && self.bridge.is_idle()
            && (0..n).all(|p| {
                // nothing ever drains a region slave that has no module behind it
                let sink = p != 0 && self.modules[p].is_none();
                let out = self.slave_out[p];
                self.masters[p].is_idle()
                    && self.owners[p] == Owner::Idle
                    && self.injections[p].is_empty()
                    && (sink || self.slaves[p].is_empty() && !out.buffer_full)
                    && !out.ack
                    && !out.stall
                    && !self.data_read[p]
                    && self.modules[p].as_ref().is_none_or(|m| !m.is_busy())
                    && !self.crossbar.master_port(p).request()
                    && !self.crossbar.master_port(p).error()
                    && self.crossbar.slave_port(p).arbiter().is_idle()
            })
            && !self.host.active_at(self.cycle)
    }

    /// Earliest cycle at or after now with scheduled work.
    pub fn next_wake(&self) -> Option<u64> {
        let now = self.cycle;
        let host = &self.host;
        [
            self.events.front().map(|e| e.cycle.max(now)),
            self.manager.next_wake(now, |a| host.in_fabric(a)),
            host.next_wake(now),
        ]
        .into_iter()
        .flatten()
        .min()
    }

    /// Runs until nothing is left to do or the cycle limit is reached.
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        loop {
            if self.is_quiescent() {
                match self.next_wake() {
                    Some(w) => self.cycle = w,
                    None => break,
                }
            }
            if self.cycle >= self.max_cycles {
                let limit = self.max_cycles;
                return Err(SimError::CycleLimitExceeded { limit, output: Box::new(self.into_output()) });
            }
            self.step();
        }
        Ok(self.into_output())
    }

    pub fn into_output(self) -> RunOutput {
        let apps = self
            .host
            .apps()
            .iter()
            .map(|a| AppReport {
                app: a.id,
                bursts: a.bursts.len(),
                arrival: a.arrival.unwrap_or(0),
                data_start: a.data_start,
                completion: a.completion,
                fabric_stages_initial: a.fabric_initial,
                fabric_stages_final: a.fabric_stages(),
                lost: a.lost,
                host_busy_cycles: a.host_busy,
                results: a.results.clone(),
                reference_ok: a.reference_ok(),
                chain_len: a.chain.len(),
            })
            .collect();
        let stats = LatencyStats {
            requests: self.requests,
            deliveries: self.deliveries,
            apps,
            cycles: self.cycle,
            clock_hz: self.clock_hz,
        };
        RunOutput { trace: self.trace, stats, regfile: self.regfile, cycles: self.cycle }
    }

    /// Advances exactly one clock cycle.
    pub fn step(&mut self) {
        let c = self.cycle;
        self.apply_events(c);
        self.manager_phase(c);
        self.report_completions(c);
        self.host.compute_host_only(c);
        self.host.push(c, &mut self.bridge, &mut self.trace);
        let held = self.reset_phase(c);
        if !held[0] {
            self.bridge_phase(c);
        }
        self.bus_phase(c, &held);
        self.report_completions(c);
        self.cycle += 1;
    }

    fn apply_events(&mut self, c: u64) {
        while self.events.front().is_some_and(|e| e.cycle <= c) {
            let Some(ev) = self.events.pop_front() else { break };
            match ev.action {
                Action::Poke { addr, value } => {
                    let kind = match self.regfile.poke(addr, value) {
                        Ok(()) => EventKind::Poke,
                        Err(_) => EventKind::Error,
                    };
                    self.trace.push(TraceEvent::new(c, Component::Regfile, kind).dst(addr as usize).word(value));
                }
                Action::Release { port } => {
                    let actions = self.manager.release(port, c, &mut self.regfile);
                    self.apply_actions(c, actions);
                }
                Action::Arrive { app } => self.arrive(c, app),
                Action::Inject { port, dest, words } => {
                    self.injections[port].push_back(ModuleRequest::burst(words, OneHotAddress::new(dest)));
                }
            }
        }
    }

    fn arrive(&mut self, c: u64, app: u8) {
        self.host.arrive(app, c);
        let Some(chain) = self.host.app(app).map(|a| a.chain.clone()) else { return };
        match self.manager.place(app, chain, c, &mut self.regfile) {
            Ok(p) if p.regions.is_empty() => self.host.start(app, c, 0, &mut self.trace),
            Ok(p) => {
                for &port in &p.regions {
                    if let RegionState::Reconfiguring { until, .. } = self.manager.regions()[port] {
                        self.program(c, port, app, until);
                    }
                }
                self.pending_start.push(app);
            }
            Err(ManagerError::NoRegionsAvailable) => {
                self.trace.push(TraceEvent::new(c, Component::Manager, EventKind::Error).app(app));
                self.host.start(app, c, 0, &mut self.trace);
            }
            Err(_) => {
                self.trace.push(TraceEvent::new(c, Component::Manager, EventKind::Error).app(app));
            }
        }
    }

    fn program(&mut self, c: u64, port: usize, app: u8, until: u64) {
        self.modules[port] = None;
        self.trace.push(
            TraceEvent::new(c, Component::Manager, EventKind::Reconfig)
                .src(port)
                .app(app)
                .word(until.saturating_sub(c) as Word),
        );
    }

    fn apply_actions(&mut self, c: u64, actions: Vec<ManagerAction>) {
        for action in actions {
            match action {
                ManagerAction::Program { port, app, until } => {
                    self.program(c, port, app, until);
                    self.host.set_paused(app, true);
                }
                ManagerAction::Load { port, kind, app } => {
                    self.modules[port] = Some(ComputeModule::new(kind));
                    self.trace.push(TraceEvent::new(c, Component::Manager, EventKind::Complete).src(port).app(app));
                }
                ManagerAction::Unload { port } => {
                    self.modules[port] = None;
                    self.trace.push(TraceEvent::new(c, Component::Manager, EventKind::Release).src(port));
                }
                ManagerAction::Rewired { app, fabric_stages } => {
                    self.host.rewire(app, fabric_stages, c);
                    self.trace.push(
                        TraceEvent::new(c, Component::Manager, EventKind::Validate)
                            .app(app)
                            .word(fabric_stages as Word),
                    );
                }
                ManagerAction::Rejected { port, .. } => {
                    self.trace.push(TraceEvent::new(c, Component::Manager, EventKind::Error).src(port));
                }
            }
        }
    }

    fn manager_phase(&mut self, c: u64) {
        let host = &self.host;
        let actions = self.manager.tick(c, &mut self.regfile, |a| host.in_fabric(a));
        self.apply_actions(c, actions);
        let mut started = Vec::new();
        let manager = &self.manager;
        self.pending_start.retain(|&app| {
            let ready = manager.app(app).is_some_and(|p| {
                p.regions.iter().all(|&r| matches!(manager.regions()[r], RegionState::Allocated { .. }))
            });
            if ready {
                started.push((app, manager.app(app).map_or(0, |p| p.fabric_stages())));
            }
            !ready
        });
        for (app, stages) in started {
            self.host.start(app, c, stages, &mut self.trace);
        }
    }

    fn report_completions(&mut self, c: u64) {
        for app in self.host.due_completions(c) {
            self.trace.push(TraceEvent::new(c, Component::Host, EventKind::Complete).app(app));
            let actions = self.manager.finish(app, c, &mut self.regfile);
            self.apply_actions(c, actions);
        }
    }

    /// Applies reset lines; returns which ports are held this cycle.
    fn reset_phase(&mut self, c: u64) -> Vec<bool> {
        let bits = self.regfile.reset_bits();
        let n = self.ports();
        let mut held = vec![false; n];
        for (p, h) in held.iter_mut().enumerate() {
            *h = bits >> p & 1 == 1;
            if *h != (self.prev_reset >> p & 1 == 1) {
                self.trace.push(TraceEvent::new(c, Component::Regfile, EventKind::Reset).src(p).word(Word::from(*h)));
            }
            if !*h {
                continue;
            }
            if let Owner::Bridge { .. } | Owner::Module = self.owners[p] {
                if let Some(&w0) = self.masters[p].words().first() {
                    self.host.lose(w0, c);
                }
            }
            if p == 0 {
                if let Some((req, _, _)) = self.bridge_pending.take() {
                    if let Some(&w0) = req.words.first() {
                        self.host.lose(w0, c);
                    }
                }
            }
            self.masters[p].reset();
            self.slaves[p].reset();
            if let Some(m) = self.modules[p].as_mut() {
                if m.state() == crate::compute::ModuleState::MakeRequest {
                    if let Some(&w0) = m.output().first() {
                        if self.owners[p] != Owner::Module {
                            self.host.lose(w0, c);
                        }
                    }
                }
                m.reset();
            }
            self.owners[p] = Owner::Idle;
            self.open[p] = None;
            self.slave_out[p] = SlaveOutputs::default();
            self.data_read[p] = false;
        }
        self.prev_reset = bits;
        held
    }

    fn bridge_phase(&mut self, c: u64) {
        if self.slave_out[0].buffer_full && !self.slaves[0].is_empty() {
            let words = self.slaves[0].contents();
            self.data_read[0] = true;
            self.egress(c, words);
        }
        for w in self.bridge.feed() {
            self.masters[0].append(w);
        }
        let idle = self.masters[0].is_idle() && self.owners[0] == Owner::Idle && self.bridge_pending.is_none();
        match self.bridge.ingress(&self.regfile, idle) {
            Some(Ingress::Request { burst, channel, app, request }) => {
                self.trace.push(
                    TraceEvent::new(c, Component::Bridge, EventKind::Request)
                        .src(channel)
                        .app(app)
                        .word(request.destination.bits()),
                );
                self.bridge_pending = Some((request, burst, app));
            }
            Some(Ingress::Drop { burst, channel, app, destination }) => {
                self.trace.push(
                    TraceEvent::new(c, Component::Bridge, EventKind::Drop)
                        .src(channel)
                        .app(app)
                        .word(destination)
                        .code(ErrorCode::InvalidAddress),
                );
                self.regfile.report_app_status(app as usize, ErrorCode::InvalidAddress);
                let seq = (burst & 0xFFFF_FFFF) as Word;
                self.host.lose(seq << 2 | Word::from(app), c);
            }
            Some(Ingress::Loopback { words, .. }) => self.egress(c, words),
            None => {}
        }
    }

    fn egress(&mut self, c: u64, words: Vec<Word>) {
        let e = self.bridge.egress(words);
        self.bridge.take_c2h(e.channel);
        let w0 = e.words.first().copied().unwrap_or(0);
        self.trace.push(TraceEvent::new(c, Component::Bridge, EventKind::Deliver).dst(e.channel).app(e.app).word(w0));
        self.host.receive(c, &e.words);
    }

    fn next_request(&mut self, m: usize) -> Option<ModuleRequest> {
        if m == 0 {
            if let Some((req, burst, app)) = self.bridge_pending.take() {
                self.owners[0] = Owner::Bridge { burst, app };
                return Some(req);
            }
        } else if let Some(module) = self.modules[m].as_mut() {
            if let Some(words) = module.pending_request() {
                let req = ModuleRequest::burst(words.to_vec(), OneHotAddress::new(self.regfile.region_dest(m)));
                module.mark_issued();
                self.owners[m] = Owner::Module;
                return Some(req);
            }
        }
        let req = self.injections[m].pop_front()?;
        self.owners[m] = Owner::Injected;
        Some(req)
    }

    fn bus_phase(&mut self, c: u64, held: &[bool]) {
        let n = self.ports();
        let signals: Vec<_> = (0..n).map(|m| self.crossbar.signals(m)).collect();
        let drives: Vec<Drive> = (0..n)
            .map(|m| {
                if held[m] {
                    return Drive::default();
                }
                let s = signals[m];
                self.masters[m].drive(&MasterInputs { grant: s.grant, retry: s.retry, error_in: s.error_in, ..Default::default() })
            })
            .collect();

        let mut ack_to = vec![false; n];
        let mut stall_to = vec![false; n];
        let mut out = vec![SlaveOutputs::default(); n];
        for s in 0..n {
            if held[s] {
                continue;
            }
            let (m, inputs) = self.crossbar.route(s, &drives);
            out[s] = self.slaves[s].step(&inputs, self.data_read[s]);
            let Some(m) = m else { continue };
            ack_to[m] |= out[s].ack;
            stall_to[m] |= out[s].stall;
            if out[s].ack || out[s].stall {
                let kind = if out[s].ack { EventKind::Ack } else { EventKind::Stall };
                let mut ev = TraceEvent::new(c, Component::Slave(s), kind).src(m).dst(s);
                if let Some((_, w)) = inputs.data {
                    ev = ev.word(w);
                }
                self.trace.push(ev);
            }
        }
        self.data_read[0] = false;

        let mut cyc = vec![false; n];
        let mut addr = vec![0; n];
        let mut completion: Vec<Option<ErrorCode>> = vec![None; n];
        for m in 0..n {
            if held[m] {
                continue;
            }
            let s = signals[m];
            let inputs =
                MasterInputs { grant: s.grant, retry: s.retry, error_in: s.error_in, stall: stall_to[m], ack: ack_to[m] };
            let req = if self.masters[m].is_idle() && self.owners[m] == Owner::Idle { self.next_request(m) } else { None };
            let (o, events) = self.masters[m].step(&inputs, req);
            cyc[m] = o.cyc;
            addr[m] = o.addr.bits();
            for ev in events {
                if let MasterEvent::Complete(code) = ev {
                    completion[m] = Some(code);
                }
                self.master_event(c, m, ev);
            }
        }

        let acks: Vec<bool> = out.iter().map(|o| o.ack).collect();
        self.crossbar.commit(c, &cyc, &addr, &acks, &self.regfile, &mut self.trace);

        for p in 1..n {
            if held[p] {
                continue;
            }
            let Some(module) = self.modules[p].as_mut() else {
                self.data_read[p] = false;
                continue;
            };
            let slave = &self.slaves[p];
            let st = module.step(out[p].buffer_full, || slave.contents(), completion[p].take());
            self.data_read[p] = module.data_read();
            if let Some(words) = st.latched {
                let mut ev = TraceEvent::new(c, Component::Module(p), EventKind::Deliver).src(p);
                if let Some(&w0) = words.first() {
                    ev = ev.app(app_id(w0)).word(w0);
                }
                self.trace.push(ev);
            }
            if let Some(code) = st.finished {
                self.trace.push(TraceEvent::new(c, Component::Module(p), EventKind::Complete).src(p).code(code));
            }
        }
        self.slave_out = out;
    }

    fn master_event(&mut self, c: u64, m: usize, ev: MasterEvent) {
        let owner = self.owners[m];
        let target = self.masters[m].destination().target();
        let w0 = self.masters[m].words().first().copied();
        let app = match owner {
            Owner::Bridge { app, .. } => Some(app),
            Owner::Module => w0.map(app_id),
            Owner::Injected | Owner::Idle => None,
        };
        let base = |kind| {
            let mut e = TraceEvent::new(c, Component::Master(m), kind).src(m);
            if let Some(t) = target {
                e = e.dst(t);
            }
            if let Some(a) = app {
                e = e.app(a);
            }
            e
        };
        match ev {
            MasterEvent::Request { .. } => {
                self.open[m] = Some(self.requests.len());
                self.requests.push(RequestRecord::new(m, c));
                let e = base(EventKind::Request).word(self.masters[m].destination().bits());
                self.trace.push(e);
            }
            MasterEvent::Data { word, .. } => {
                if let Some(r) = self.open[m].map(|i| &mut self.requests[i]) {
                    r.first_data.get_or_insert(c);
                    r.last_data = Some(c);
                    r.words_sent += 1;
                }
                self.trace.push(base(EventKind::Data).word(word));
            }
            MasterEvent::Yield => self.trace.push(base(EventKind::Retry)),
            MasterEvent::Error(code) => self.trace.push(base(EventKind::Error).code(code)),
            MasterEvent::Complete(code) => {
                self.trace.push(base(EventKind::Complete).code(code));
                let record = self.open[m].take().map(|i| {
                    let r = &mut self.requests[i];
                    r.complete_cycle = Some(c);
                    r.code = Some(code);
                    r.clone()
                });
                if m == 0 {
                    if let Some(a) = app {
                        self.regfile.report_app_status(a as usize, code);
                    }
                } else {
                    self.regfile.report_region_status(m, code);
                }
                match owner {
                    Owner::Bridge { burst, app } if code.is_success() => {
                        let last_store = record.as_ref().and_then(|r| r.last_data).unwrap_or(c);
                        let first_push =
                            self.host.first_push(burst).or(record.as_ref().map(|r| r.request_cycle)).unwrap_or(c);
                        self.deliveries.push(DeliveryRecord { app, burst, first_push, last_store });
                    }
                    Owner::Bridge { .. } | Owner::Module if !code.is_success() => {
                        if let Some(w0) = w0 {
                            self.host.lose(w0, c);
                        }
                    }
                    _ => {}
                }
                self.owners[m] = Owner::Idle;
            }
        }
    }
}

/// Builds and runs a scenario.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    System::new(scenario)?.run()
}
