// Licensed under the Apache-2.0 license.

//! Oracles and harnesses shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashSet;

use elastisim::arbiter::{Arbiter, ArbiterEvent};
use elastisim::crossbar::OneHotAddress;
use elastisim::protocol::{
    MasterInputs, MasterInterface, MasterState, ModuleRequest, SlaveInputs, SlaveInterface, Timeouts,
    DEFAULT_BURST_LEN, SLAVE_SLOTS,
};
use elastisim::regfile::{ErrorCode, RegisterFile};
use elastisim::sim::scenario::{Action, Scenario};
use elastisim::trace::{Component, EventKind};
use elastisim::Word;

/// Walks the ports in cyclic order starting after `prev`.
pub fn select_oracle(requests: u32, prev: Option<usize>, n: usize) -> Option<usize> {
    let start = prev.map_or(0, |p| p + 1);
    (0..n).map(|k| (start + k) % n).find(|&c| requests >> c & 1 == 1)
}

/// Exhaustive comparison of `select` against the oracle for `n` ports.
/// Returns the number of cases checked and the mismatches.
pub fn select_sweep(n: usize) -> (usize, Vec<(u32, Option<usize>)>) {
    let mut bad = Vec::new();
    let mut cases = 0;
    for requests in 0..1u32 << n {
        for prev in std::iter::once(None).chain((0..n).map(Some)) {
            cases += 1;
            if elastisim::arbiter::select(requests, prev) != select_oracle(requests, prev, n) {
                bad.push((requests, prev));
            }
        }
    }
    (cases, bad)
}

/// One turn at the bus: who held it and how many packages were acked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Turn {
    pub master: usize,
    pub acks: u32,
}

/// Drives a lone arbiter with `quotas.len()` masters that always want the
/// bus. A master told to retry lowers its request for one cycle; the slave
/// acks every word on the cycle it is sent.
pub fn wrr_turns(quotas: &[u8], cycles: usize) -> Vec<Turn> {
    let n = quotas.len();
    let all: u32 = (1 << n) - 1;
    let mut arb = Arbiter::new();
    let mut turns: Vec<Turn> = Vec::new();
    for _ in 0..cycles {
        let out = arb.outputs();
        let ack = out.grant_to.is_some();
        if let (Some(m), Some(t)) = (out.grant_to, turns.last_mut()) {
            assert_eq!(t.master, m, "ack credited to a master that does not hold the bus");
            t.acks += 1;
        }
        let requests = match out.retry_to {
            Some(m) => all & !(1 << m),
            None => all,
        };
        for ev in arb.step(requests, ack, |m| quotas[m]) {
            if let ArbiterEvent::Grant { master, .. } = ev {
                turns.push(Turn { master, acks: 0 });
            }
        }
    }
    turns
}

/// Checks a quota table: turns rotate 0,1,..,n-1 and each finished turn
/// carries exactly the master's quota. Returns the number of whole rotations.
pub fn wrr_check(quotas: &[u8], cycles: usize) -> Result<usize, String> {
    let n = quotas.len();
    let turns = wrr_turns(quotas, cycles);
    // the last turn may be cut off by the end of the run
    let done = &turns[..turns.len().saturating_sub(1)];
    for (i, t) in done.iter().enumerate() {
        if t.master != i % n {
            return Err(format!("turn {i} went to master {} instead of {}", t.master, i % n));
        }
        if t.acks != u32::from(quotas[t.master]) {
            return Err(format!("turn {i}: master {} got {} acks, quota {}", t.master, t.acks, quotas[t.master]));
        }
    }
    let rotations = done.len() / n;
    let mut per_master = vec![0u32; n];
    for t in &done[..rotations * n] {
        per_master[t.master] += t.acks;
    }
    for m in 0..n {
        if per_master[m] != rotations as u32 * u32::from(quotas[m]) {
            return Err(format!("master {m}: {} acks over {rotations} rotations", per_master[m]));
        }
    }
    Ok(rotations)
}

/// Environment side of the joint master/slave exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Bus {
    /// Arbitration not yet won (again).
    Waiting,
    Granted { acks_at_grant: usize },
    /// Grant lost for good (e.g. the slave port went into reset).
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    master: MasterInterface,
    slave: SlaveInterface,
    bus: Bus,
    ever_granted: bool,
    retries: u8,
    completes: u8,
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    grant: bool,
    error_in: bool,
    retry: bool,
    lose: bool,
    data_read: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Exploration {
    /// Sum of the distinct states in every layer.
    pub states: usize,
    pub paths_closed: usize,
    /// Longest path from request to the master's return to idle.
    pub max_depth: usize,
    pub violations: Vec<String>,
}

fn choices(node: &Node, max_retries: u8) -> Vec<Choice> {
    let base = Choice { grant: false, error_in: false, retry: false, lose: false, data_read: false };
    let mut out = Vec::new();
    for data_read in [false, true] {
        let c = Choice { data_read, ..base };
        match node.bus {
            Bus::Waiting => {
                out.push(c);
                out.push(Choice { grant: true, ..c });
                if !node.ever_granted {
                    out.push(Choice { error_in: true, ..c });
                }
            }
            Bus::Granted { acks_at_grant } => {
                out.push(Choice { grant: true, ..c });
                out.push(Choice { lose: true, ..c });
                let sending = matches!(node.master.state(), MasterState::Sending | MasterState::Stalled);
                if sending && node.retries < max_retries && node.master.acks_received() > acks_at_grant {
                    out.push(Choice { retry: true, ..c });
                }
            }
            Bus::Lost => out.push(c),
        }
    }
    out
}

fn advance(node: &Node, c: Choice) -> (Node, Option<ErrorCode>) {
    let mut n = node.clone();
    let granted_now = match node.bus {
        Bus::Waiting => c.grant,
        Bus::Granted { .. } => !c.lose && !c.retry,
        Bus::Lost => false,
    };
    let mut inputs = MasterInputs { grant: granted_now, retry: c.retry, error_in: c.error_in, ..Default::default() };
    let drive = n.master.drive(&inputs);
    let connected = granted_now || c.retry;
    let s = n.slave.step(&SlaveInputs { cyc: drive.cyc && connected, data: drive.data }, c.data_read);
    inputs.ack = s.ack;
    inputs.stall = s.stall;
    let (out, _) = n.master.step(&inputs, None);
    n.bus = match node.bus {
        Bus::Waiting if c.grant => {
            n.ever_granted = true;
            Bus::Granted { acks_at_grant: node.master.acks_received() }
        }
        Bus::Granted { .. } if c.lose => Bus::Lost,
        Bus::Granted { .. } if c.retry => {
            n.retries += 1;
            Bus::Waiting
        }
        b => b,
    };
    if out.error_code_out.is_some() {
        n.completes += 1;
    }
    (n, out.error_code_out)
}

/// Breadth-first search over every environment schedule for one 8-word
/// request, from every initial slave occupancy. A path closes when the
/// master is idle again; any path still open at `horizon` is a deadlock.
pub fn explore_protocol(timeouts: Timeouts, max_retries: u8, horizon: usize) -> Exploration {
    let mut ex = Exploration::default();
    let mut layer: HashSet<Node> = HashSet::new();
    for prefill in 0..1u32 << SLAVE_SLOTS {
        let mut slave = SlaveInterface::new();
        for slot in (0..SLAVE_SLOTS).filter(|s| prefill >> s & 1 == 1) {
            slave.step(&SlaveInputs { cyc: true, data: Some((slot, 0xEE)) }, false);
        }
        slave.step(&SlaveInputs::default(), false);
        let mut master = MasterInterface::new(timeouts);
        let words = vec![0x5A; DEFAULT_BURST_LEN];
        master.step(&MasterInputs::default(), Some(ModuleRequest::burst(words, OneHotAddress::port(1))));
        layer.insert(Node { master, slave, bus: Bus::Waiting, ever_granted: false, retries: 0, completes: 0 });
    }
    for depth in 1..=horizon {
        ex.states += layer.len();
        let mut next = HashSet::new();
        for node in &layer {
            for c in choices(node, max_retries) {
                let (n, code) = advance(node, c);
                if n.completes > 1 {
                    ex.violations.push(format!("second status {code:?} at depth {depth}"));
                    continue;
                }
                if n.master.is_idle() {
                    if n.completes != 1 {
                        ex.violations.push(format!("idle without a status at depth {depth}"));
                    }
                    ex.paths_closed += 1;
                    ex.max_depth = ex.max_depth.max(depth);
                } else {
                    next.insert(n);
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
    }
    if !layer.is_empty() {
        ex.violations.push(format!("{} states still busy at the horizon of {horizon} cycles", layer.len()));
    }
    ex
}

/// Result of one isolation probe from port 1.
#[derive(Debug, Clone)]
pub struct IsolationProbe {
    pub mask: Word,
    pub dest: Word,
    pub accepted: bool,
    pub violation: Option<String>,
}

/// Port 1 sends one burst to `dest` with `allowed(1) = mask` on an
/// `ports`-port crossbar and the outcome is checked against the mask rule.
pub fn isolation_probe(ports: usize, mask: Word, dest: Word) -> IsolationProbe {
    let mut rf = RegisterFile::new(ports).expect("port count");
    rf.set_allowed_mask(1, mask);
    for s in 0..ports {
        rf.set_quota(s, 1, DEFAULT_BURST_LEN as u8);
    }
    let mut sc = elastisim::sim::bench::preload(Scenario::new(ports), &rf);
    let words: Vec<Word> = (0..DEFAULT_BURST_LEN as Word).map(|i| 0x100 + i).collect();
    sc = sc.event(0, Action::Inject { port: 1, dest, words });
    let port_mask: Word = if ports >= 32 { Word::MAX } else { (1 << ports) - 1 };
    let target = OneHotAddress::new(dest).target().filter(|&t| t < ports);
    let accepted = target.is_some_and(|t| (mask & port_mask) >> t & 1 == 1);
    let mut probe = IsolationProbe { mask, dest, accepted, violation: None };
    let out = match elastisim::run(&sc) {
        Ok(out) => out,
        Err(e) => {
            probe.violation = Some(format!("run failed: {e}"));
            return probe;
        }
    };
    let status = out.regfile.region_status(1);
    let slave_events = out
        .trace
        .iter()
        .filter(|e| matches!(e.component, Component::Slave(_) | Component::Arbiter(_)))
        .count();
    let data_events = out.trace.filter(Component::Master(1), EventKind::Data).count();
    probe.violation = if accepted {
        let t = target.expect("accepted implies a target");
        let acks = out.trace.filter(Component::Slave(t), EventKind::Ack).count();
        if dest & mask == 0 {
            Some("accepted a destination outside the mask".into())
        } else if status != Some(ErrorCode::Success) {
            Some(format!("accepted request finished with {status:?}"))
        } else if acks != DEFAULT_BURST_LEN {
            Some(format!("{acks} acks at port {t}"))
        } else {
            None
        }
    } else if status != Some(ErrorCode::InvalidAddress) {
        Some(format!("rejected request finished with {status:?}"))
    } else if slave_events != 0 {
        Some(format!("{slave_events} slave-side events for a rejected request"))
    } else if data_events != 0 {
        Some(format!("{data_events} words sent for a rejected request"))
    } else {
        None
    };
    probe
}
