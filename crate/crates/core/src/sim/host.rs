// Licensed under the Apache-2.0 license.

//! Host side of the model: pushes application data into the bridge FIFOs,
//! collects results, and runs the chain stages that are not on the fabric.
//!
//! Host work is modelled as a single sequential CPU per application with a
//! fixed cost per burst per stage; transfers across PCIe add a fixed
//! `transfer` delay before data reaches the FIFOs and after results leave.

use crate::bridge::{Bridge, H2C_CHANNELS};
use crate::compute::ModuleKind;
use crate::trace::{Component, EventKind, Trace, TraceEvent};
use crate::Word;

/// Burst identifier shared by host and bridge: app in the top half, sequence below.
pub fn burst_id(app: u8, seq: usize) -> u64 {
    (u64::from(app) << 32) | seq as u64
}

/// Sequence number carried in a burst's leading word.
pub fn burst_seq(word0: Word) -> usize {
    (word0 >> 2) as usize
}

#[derive(Debug, Clone)]
pub struct HostApp {
    pub id: u8,
    pub chain: Vec<ModuleKind>,
    pub costs: Vec<u64>,
    pub bursts: Vec<Vec<Word>>,
    channel: usize,
    pub arrival: Option<u64>,
    pub data_start: Option<u64>,
    push_from: u64,
    fabric_stages: usize,
    pub fabric_initial: usize,
    paused: bool,
    next_burst: usize,
    next_word: usize,
    stages_at_push: Vec<usize>,
    first_push: Vec<Option<u64>>,
    dropped: Vec<bool>,
    in_fabric: u64,
    settled: usize,
    pub lost: usize,
    busy_until: u64,
    last_ready: u64,
    pub host_busy: u64,
    pub results: Vec<Option<Vec<Word>>>,
    pub completion: Option<u64>,
    completion_reported: bool,
}

impl HostApp {
    pub fn new(id: u8, chain: Vec<ModuleKind>, costs: Vec<u64>, bursts: Vec<Vec<Word>>, channel: usize) -> Self {
        let n = bursts.len();
        Self {
            id,
            chain,
            costs,
            bursts,
            channel: channel % H2C_CHANNELS,
            arrival: None,
            data_start: None,
            push_from: 0,
            fabric_stages: 0,
            fabric_initial: 0,
            paused: false,
            next_burst: 0,
            next_word: 0,
            stages_at_push: vec![0; n],
            first_push: vec![None; n],
            dropped: vec![false; n],
            in_fabric: 0,
            settled: 0,
            lost: 0,
            busy_until: 0,
            last_ready: 0,
            host_busy: 0,
            results: vec![None; n],
            completion: None,
            completion_reported: false,
        }
    }

    pub fn fabric_stages(&self) -> usize {
        self.fabric_stages
    }

    /// Bursts currently inside the FPGA (from first push until results come back).
    pub fn in_fabric(&self) -> u64 {
        self.in_fabric
    }

    pub fn is_done(&self) -> bool {
        self.completion.is_some()
    }

    fn started(&self) -> bool {
        self.data_start.is_some()
    }

    /// Bursts go through the bridge. An app with an empty chain is raw: its
    /// bursts follow whatever routing the registers hold.
    fn on_fabric(&self) -> bool {
        self.fabric_stages > 0 || self.chain.is_empty()
    }

    /// Software reference for a burst: the whole chain applied in order.
    pub fn reference(&self, seq: usize) -> Vec<Word> {
        self.chain.iter().fold(self.bursts[seq].clone(), |acc, k| k.apply(&acc))
    }

    pub fn reference_ok(&self) -> bool {
        self.lost == 0 && (0..self.bursts.len()).all(|i| self.results[i].as_deref() == Some(&self.reference(i)[..]))
    }

    fn finish_stages(&mut self, from: usize, words: &[Word], ready: u64) -> u64 {
        let out = self.chain[from..].iter().fold(words.to_vec(), |acc, k| k.apply(&acc));
        let cost: u64 = self.costs[from..].iter().sum();
        let start = ready.max(self.busy_until);
        self.busy_until = start + cost;
        self.host_busy += cost;
        if let Some(slot) = self.results.get_mut(burst_seq(words[0])) {
            *slot = Some(out);
        }
        self.busy_until
    }

    fn settle(&mut self, ready: u64) {
        self.settled += 1;
        self.last_ready = self.last_ready.max(ready);
        if self.settled == self.bursts.len() {
            self.completion = Some(self.last_ready);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Host {
    apps: Vec<HostApp>,
    channel_owner: [Option<usize>; H2C_CHANNELS],
    transfer: u64,
}

impl Host {
    pub fn new(transfer: u64) -> Self {
        Self { apps: Vec::new(), channel_owner: [None; H2C_CHANNELS], transfer }
    }

    pub fn add(&mut self, app: HostApp) {
        self.apps.push(app);
    }

    pub fn apps(&self) -> &[HostApp] {
        &self.apps
    }

    fn index(&self, app: u8) -> Option<usize> {
        self.apps.iter().position(|a| a.id == app)
    }

    pub fn app(&self, app: u8) -> Option<&HostApp> {
        self.index(app).map(|i| &self.apps[i])
    }

    pub fn in_fabric(&self, app: u8) -> u64 {
        self.app(app).map_or(0, HostApp::in_fabric)
    }

    pub fn arrive(&mut self, app: u8, now: u64) {
        if let Some(i) = self.index(app) {
            self.apps[i].arrival.get_or_insert(now);
        }
    }

    /// Chain is configured: the host starts moving data at `now`.
    pub fn start(&mut self, app: u8, now: u64, fabric_stages: usize, trace: &mut Trace) {
        let transfer = self.transfer;
        let Some(i) = self.index(app) else { return };
        let a = &mut self.apps[i];
        if a.started() {
            return;
        }
        a.data_start = Some(now);
        a.fabric_stages = fabric_stages;
        a.fabric_initial = fabric_stages;
        a.push_from = now + if a.on_fabric() { transfer } else { 0 };
        a.busy_until = now;
        trace.push(TraceEvent::new(now, Component::Host, EventKind::Request).app(app));
        if a.bursts.is_empty() {
            a.completion = Some(now);
        }
    }

    pub fn set_paused(&mut self, app: u8, paused: bool) {
        if let Some(i) = self.index(app) {
            self.apps[i].paused = paused;
        }
    }

    /// New bursts of `app` now cross `fabric_stages` stages on the FPGA.
    pub fn rewire(&mut self, app: u8, fabric_stages: usize, now: u64) {
        let transfer = self.transfer;
        if let Some(i) = self.index(app) {
            let a = &mut self.apps[i];
            if a.fabric_stages == 0 && fabric_stages > 0 {
                a.push_from = a.push_from.max(now + transfer);
            }
            a.fabric_stages = fabric_stages;
            a.paused = false;
        }
    }

    /// One word per channel per cycle into the bridge FIFOs.
    pub fn push(&mut self, now: u64, bridge: &mut Bridge, trace: &mut Trace) {
        for ch in 0..H2C_CHANNELS {
            let owner = match self.channel_owner[ch] {
                Some(i) => Some(i),
                None => (0..self.apps.len()).find(|&i| {
                    let a = &self.apps[i];
                    a.channel == ch
                        && a.started()
                        && !a.paused
                        && a.on_fabric()
                        && now >= a.push_from
                        && a.next_burst < a.bursts.len()
                }),
            };
            let Some(i) = owner else { continue };
            if !bridge.has_space(ch) {
                continue;
            }
            let a = &mut self.apps[i];
            let seq = a.next_burst;
            let len = a.bursts[seq].len();
            if a.next_word == 0 {
                a.stages_at_push[seq] = a.fabric_stages;
                a.first_push[seq] = Some(now);
                a.in_fabric += 1;
                self.channel_owner[ch] = Some(i);
            }
            let word = a.bursts[seq][a.next_word];
            bridge.push(ch, burst_id(a.id, seq), len, word);
            trace.push(TraceEvent::new(now, Component::Host, EventKind::Push).dst(ch).app(a.id).word(word));
            a.next_word += 1;
            if a.next_word == len {
                a.next_word = 0;
                a.next_burst += 1;
                self.channel_owner[ch] = None;
            }
        }
    }

    /// Runs one burst per idle app whose whole chain lives on the host.
    pub fn compute_host_only(&mut self, now: u64) {
        for a in &mut self.apps {
            if !a.started() || a.on_fabric() || a.next_burst >= a.bursts.len() {
                continue;
            }
            if a.busy_until > now {
                continue;
            }
            let seq = a.next_burst;
            a.next_burst += 1;
            a.stages_at_push[seq] = 0;
            let words = a.bursts[seq].clone();
            let ready = a.finish_stages(0, &words, now);
            a.settle(ready);
        }
    }

    /// A result burst left the fabric on a card-to-host channel.
    pub fn receive(&mut self, now: u64, words: &[Word]) {
        let Some(&w0) = words.first() else { return };
        let Some(i) = self.index(crate::bridge::app_id(w0)) else { return };
        let transfer = self.transfer;
        let a = &mut self.apps[i];
        let seq = burst_seq(w0);
        if seq >= a.bursts.len() || a.results[seq].is_some() || a.dropped[seq] {
            return;
        }
        a.in_fabric = a.in_fabric.saturating_sub(1);
        let from = a.stages_at_push[seq];
        let ready = a.finish_stages(from, words, now + transfer);
        a.settle(ready);
    }

    /// A burst was lost inside the fabric.
    pub fn lose(&mut self, word0: Word, now: u64) {
        let Some(i) = self.index(crate::bridge::app_id(word0)) else { return };
        let a = &mut self.apps[i];
        let seq = burst_seq(word0);
        if seq >= a.bursts.len() || a.results[seq].is_some() || a.first_push[seq].is_none() || a.dropped[seq] {
            return;
        }
        a.dropped[seq] = true;
        a.in_fabric = a.in_fabric.saturating_sub(1);
        a.lost += 1;
        a.settle(now);
    }

    pub fn first_push(&self, burst: u64) -> Option<u64> {
        let app = (burst >> 32) as u8;
        let seq = (burst & 0xFFFF_FFFF) as usize;
        self.app(app).and_then(|a| a.first_push.get(seq).copied().flatten())
    }

    /// Completion events whose time has come, in app order.
    pub fn due_completions(&mut self, now: u64) -> Vec<u8> {
        let mut out = Vec::new();
        for a in &mut self.apps {
            if !a.completion_reported && a.completion.is_some_and(|c| c <= now) {
                a.completion_reported = true;
                out.push(a.id);
            }
        }
        out
    }

    /// Something can happen on the host side at exactly `now`.
    pub fn active_at(&self, now: u64) -> bool {
        self.next_wake(now) == Some(now) || self.channel_owner.iter().any(Option::is_some)
    }

    /// Earliest cycle ≥ `now` at which the host has something to do.
    pub fn next_wake(&self, now: u64) -> Option<u64> {
        let mut best: Option<u64> = None;
        let mut consider = |c: u64| {
            if c >= now {
                best = Some(best.map_or(c, |b| b.min(c)));
            }
        };
        for a in &self.apps {
            if let (false, Some(c)) = (a.completion_reported, a.completion) {
                consider(c.max(now));
            }
            if !a.started() || a.next_burst >= a.bursts.len() {
                continue;
            }
            if a.on_fabric() {
                if !a.paused {
                    consider(a.push_from.max(now));
                }
            } else {
                consider(a.busy_until.max(now));
            }
        }
        best
    }
}
