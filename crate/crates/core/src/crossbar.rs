// Licensed under the Apache-2.0 license.

//! N×N switch: isolation in the master ports, one WRR arbiter per slave
//! port, and the per-cycle multiplexing of granted master lines onto slaves.

use std::fmt;

use crate::arbiter::{Arbiter, ArbiterEvent, ArbiterOutputs, RequestVector};
use crate::protocol::{Drive, SlaveInputs};
use crate::regfile::{ErrorCode, RegisterFile};
use crate::trace::{Component, EventKind, Trace, TraceEvent};
use crate::Word;

/// Destination selector with one bit per crossbar port.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OneHotAddress(Word);

impl OneHotAddress {
    pub const fn new(bits: Word) -> Self {
        Self(bits)
    }

    pub fn port(port: usize) -> Self {
        assert!(port < Word::BITS as usize, "port {port} out of range");
        Self(1 << port)
    }

    pub const fn bits(self) -> Word {
        self.0
    }

    pub const fn is_onehot(self) -> bool {
        self.0.is_power_of_two()
    }

    /// Port index if exactly one bit is set.
    pub fn target(self) -> Option<usize> {
        self.is_onehot().then(|| self.0.trailing_zeros() as usize)
    }
}

impl fmt::Display for OneHotAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Forward(usize),
    Reject(ErrorCode),
}

/// Master-port isolation check: the destination is ANDed with the allowed
/// mask and the request is forwarded only if the result is nonzero.
pub fn validate(destination: OneHotAddress, allowed_mask: Word) -> Validation {
    // multicast is not supported, so anything but a single bit is rejected
    if !destination.is_onehot() {
        return Validation::Reject(ErrorCode::InvalidAddress);
    }
    let hit = destination.bits() & allowed_mask;
    if hit == 0 {
        Validation::Reject(ErrorCode::InvalidAddress)
    } else {
        Validation::Forward(hit.trailing_zeros() as usize)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MasterPort {
    /// Slave the current request was validated for; latched when cyc rises.
    target: Option<usize>,
    rejected: bool,
    request_reg: bool,
    error_reg: bool,
    prev_cyc: bool,
}

impl MasterPort {
    pub fn target(&self) -> Option<usize> {
        self.target
    }

    /// Registered request line seen by the slave-port arbiters.
    pub fn request(&self) -> bool {
        self.request_reg
    }

    /// Registered error line returned to the master interface.
    pub fn error(&self) -> bool {
        self.error_reg
    }

    fn update(&mut self, cyc: bool, validation: impl FnOnce() -> Validation) -> Option<Validation> {
        let mut fresh = None;
        if cyc && !self.prev_cyc {
            let v = validation();
            match v {
                Validation::Forward(s) => {
                    self.target = Some(s);
                    self.rejected = false;
                }
                Validation::Reject(_) => {
                    self.target = None;
                    self.rejected = true;
                }
            }
            fresh = Some(v);
        }
        if !cyc {
            self.target = None;
            self.rejected = false;
        }
        self.request_reg = cyc && self.target.is_some();
        self.error_reg = cyc && self.rejected;
        self.prev_cyc = cyc;
        fresh
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SlavePort {
    arbiter: Arbiter,
    in_reset: bool,
}

impl SlavePort {
    pub fn arbiter(&self) -> &Arbiter {
        &self.arbiter
    }

    pub fn in_reset(&self) -> bool {
        self.in_reset
    }

    pub fn outputs(&self) -> ArbiterOutputs {
        if self.in_reset {
            ArbiterOutputs::default()
        } else {
            self.arbiter.outputs()
        }
    }

    pub fn connected_master(&self) -> Option<usize> {
        self.outputs().connected
    }
}

/// Grant-side signals a master interface sees from the switch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortSignals {
    pub grant: bool,
    pub retry: bool,
    pub error_in: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Crossbar {
    masters: Vec<MasterPort>,
    slaves: Vec<SlavePort>,
}

impl Crossbar {
    pub fn new(ports: usize) -> Self {
        Self { masters: vec![MasterPort::default(); ports], slaves: vec![SlavePort::default(); ports] }
    }

    pub fn ports(&self) -> usize {
        self.masters.len()
    }

    pub fn master_port(&self, m: usize) -> &MasterPort {
        &self.masters[m]
    }

    pub fn slave_port(&self, s: usize) -> &SlavePort {
        &self.slaves[s]
    }

    pub fn signals(&self, m: usize) -> PortSignals {
        let mut sig = PortSignals { error_in: self.masters[m].error_reg, ..Default::default() };
        for port in &self.slaves {
            let out = port.outputs();
            sig.grant |= out.grant_to == Some(m);
            sig.retry |= out.retry_to == Some(m);
        }
        sig
    }

    /// Slave `s`'s view of the bus: the connected master's lines, or nothing.
    pub fn route(&self, s: usize, drives: &[Drive]) -> (Option<usize>, SlaveInputs) {
        let out = self.slaves[s].outputs();
        match out.connected {
            Some(m) => {
                let d = drives[m];
                let data = if out.grant_to == Some(m) { d.data } else { None };
                (Some(m), SlaveInputs { cyc: d.cyc, data })
            }
            None => (None, SlaveInputs::default()),
        }
    }

    /// Master whose ack/stall lines come from slave `s`, if any.
    pub fn connected_master(&self, s: usize) -> Option<usize> {
        self.slaves[s].connected_master()
    }

    /// Clocks arbiters and master ports at the end of a cycle.
    ///
    /// `cyc`/`addr` are what each master drove this cycle, `acks` the ack
    /// output of each slave interface.
    pub fn commit(
        &mut self,
        cycle: u64,
        cyc: &[bool],
        addr: &[Word],
        acks: &[bool],
        regfile: &RegisterFile,
        trace: &mut Trace,
    ) {
        let n = self.ports();
        for (s, port) in self.slaves.iter_mut().enumerate() {
            let held = regfile.in_reset(s);
            let events = if held {
                port.arbiter.reset().into_iter().collect()
            } else {
                let requests: RequestVector = (0..n)
                    .filter(|&m| !regfile.in_reset(m))
                    .filter(|&m| self.masters[m].request_reg && self.masters[m].target == Some(s))
                    .fold(0, |acc, m| acc | 1 << m);
                port.arbiter.step(requests, acks[s], |m| regfile.quota(s, m))
            };
            port.in_reset = held;
            for ev in events {
                let te = match ev {
                    ArbiterEvent::Grant { master, packages } => {
                        TraceEvent::new(cycle, Component::Arbiter(s), EventKind::Grant).word(packages)
                            .src(master)
                    }
                    ArbiterEvent::Release { master } => {
                        TraceEvent::new(cycle, Component::Arbiter(s), EventKind::Release).src(master)
                    }
                    ArbiterEvent::QuotaExhausted { master } => {
                        TraceEvent::new(cycle, Component::Arbiter(s), EventKind::QuotaExhausted).src(master)
                    }
                };
                trace.push(te.dst(s));
            }
        }
        let port_mask = if n >= 32 { Word::MAX } else { (1 << n) - 1 };
        for (m, port) in self.masters.iter_mut().enumerate() {
            if regfile.in_reset(m) {
                *port = MasterPort::default();
                continue;
            }
            let dest = OneHotAddress::new(addr[m]);
            let fresh = port.update(cyc[m], || validate(dest, regfile.allowed_mask(m) & port_mask));
            match fresh {
                Some(Validation::Forward(s)) => {
                    trace.push(TraceEvent::new(cycle, Component::MasterPort(m), EventKind::Validate).src(m).dst(s));
                }
                Some(Validation::Reject(code)) => {
                    trace.push(
                        TraceEvent::new(cycle, Component::MasterPort(m), EventKind::Reject)
                            .src(m)
                            .word(dest.bits())
                            .code(code),
                    );
                }
                None => {}
            }
        }
    }
}
