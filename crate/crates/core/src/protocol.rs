// Licensed under the Apache-2.0 license.

//! Pipelined WISHBONE-style master and slave interface state machines.
//!
//! Both sides are plain step functions over explicit state. A cycle is
//! evaluated in two halves: the kernel first asks the master what it drives
//! ([`MasterInterface::drive`]), routes that through the crossbar to the
//! slave ([`SlaveInterface::step`]), and then commits the master with the
//! slave's same-cycle ack/stall ([`MasterInterface::step`]).

use crate::crossbar::OneHotAddress;
use crate::regfile::ErrorCode;
use crate::Word;

pub const DEFAULT_BURST_LEN: usize = 8;
pub const SLAVE_SLOTS: usize = 8;
pub const DEFAULT_GRANT_TIMEOUT: u32 = 64;
pub const DEFAULT_ACK_TIMEOUT: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Timeouts {
    pub grant: u32,
    pub ack: u32,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self { grant: DEFAULT_GRANT_TIMEOUT, ack: DEFAULT_ACK_TIMEOUT }
    }
}

/// What a module (or the host bridge) hands its master interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleRequest {
    /// Words available now; a streaming source may append the rest later.
    pub words: Vec<Word>,
    /// Total words in the transfer.
    pub len: usize,
    pub destination: OneHotAddress,
}

impl ModuleRequest {
    pub fn burst(words: Vec<Word>, destination: OneHotAddress) -> Self {
        let len = words.len();
        Self { words, len, destination }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MasterState {
    Idle,
    Requesting,
    AwaitGrant,
    Sending,
    Stalled,
    AwaitAcks,
    Complete,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MasterInputs {
    /// Slave port grants this master and still has packages left.
    pub grant: bool,
    /// Slave port ran out of packages for this master: give the bus up and re-request.
    pub retry: bool,
    /// Master port rejected the destination.
    pub error_in: bool,
    pub stall: bool,
    pub ack: bool,
}

/// Bus-facing signals a master drives during one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Drive {
    pub cyc: bool,
    /// (word_select, data) when a word is on the bus.
    pub data: Option<(usize, Word)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MasterOutputs {
    pub cyc: bool,
    pub data: Option<(usize, Word)>,
    pub addr: OneHotAddress,
    /// Status handed back to the module in the status-register cycle.
    pub error_code_out: Option<ErrorCode>,
}

/// Observable state changes, turned into trace events by the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MasterEvent {
    Request { len: usize },
    Data { index: usize, word: Word },
    Yield,
    Error(ErrorCode),
    Complete(ErrorCode),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MasterInterface {
    state: MasterState,
    words: Vec<Word>,
    burst_len: usize,
    words_sent: usize,
    acks_received: usize,
    grant_timer: u32,
    ack_timer: u32,
    destination: OneHotAddress,
    code: Option<ErrorCode>,
    timeouts: Timeouts,
}

impl MasterInterface {
    pub fn new(timeouts: Timeouts) -> Self {
        Self {
            state: MasterState::Idle,
            words: Vec::new(),
            burst_len: 0,
            words_sent: 0,
            acks_received: 0,
            grant_timer: 0,
            ack_timer: 0,
            destination: OneHotAddress::default(),
            code: None,
            timeouts,
        }
    }

    pub fn state(&self) -> MasterState {
        self.state
    }

    pub fn is_idle(&self) -> bool {
        self.state == MasterState::Idle
    }

    pub fn words_sent(&self) -> usize {
        self.words_sent
    }

    pub fn acks_received(&self) -> usize {
        self.acks_received
    }

    pub fn burst_len(&self) -> usize {
        self.burst_len
    }

    pub fn destination(&self) -> OneHotAddress {
        self.destination
    }

    pub fn grant_timer(&self) -> u32 {
        self.grant_timer
    }

    pub fn ack_timer(&self) -> u32 {
        self.ack_timer
    }

    pub fn timeouts(&self) -> Timeouts {
        self.timeouts
    }

    pub fn set_timeouts(&mut self, timeouts: Timeouts) {
        self.timeouts = timeouts;
    }

    /// Words of the current transfer supplied so far.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Words of the current transfer the source has supplied so far.
    pub fn buffered(&self) -> usize {
        self.words.len()
    }

    /// Appends a streamed word to the in-flight transfer.
    pub fn append(&mut self, word: Word) {
        debug_assert!(self.words.len() < self.burst_len);
        self.words.push(word);
    }

    /// Drops any transaction in flight (reset line held).
    pub fn reset(&mut self) {
        *self = Self::new(self.timeouts);
    }

    fn offers_word(&self, inputs: &MasterInputs) -> Option<(usize, Word)> {
        let may_send = match self.state {
            MasterState::AwaitGrant => !inputs.error_in,
            MasterState::Sending | MasterState::Stalled => true,
            _ => false,
        };
        if !may_send || inputs.retry || !inputs.grant {
            return None;
        }
        let i = self.words_sent;
        if i < self.burst_len && i < self.words.len() {
            Some((i % SLAVE_SLOTS, self.words[i]))
        } else {
            None
        }
    }

    /// Signals driven this cycle, before the slave has answered.
    pub fn drive(&self, inputs: &MasterInputs) -> Drive {
        let cyc = match self.state {
            MasterState::Requesting | MasterState::AwaitGrant | MasterState::AwaitAcks => true,
            MasterState::Sending | MasterState::Stalled => !inputs.retry,
            MasterState::Idle | MasterState::Complete => false,
        };
        Drive { cyc, data: self.offers_word(inputs) }
    }

    fn finish(&mut self, code: ErrorCode, events: &mut Vec<MasterEvent>) {
        if !code.is_success() {
            events.push(MasterEvent::Error(code));
        }
        self.code = Some(code);
        self.state = MasterState::Complete;
    }

    fn ack_wait(&mut self, events: &mut Vec<MasterEvent>) {
        self.ack_timer += 1;
        if self.ack_timer >= self.timeouts.ack {
            self.finish(ErrorCode::AckTimeout, events);
        }
    }

    fn transfer(&mut self, inputs: &MasterInputs, events: &mut Vec<MasterEvent>) {
        let Some((_, word)) = self.offers_word(inputs) else {
            // source has not supplied the next word yet
            self.state = MasterState::Sending;
            return;
        };
        if inputs.stall {
            self.state = MasterState::Stalled;
            self.ack_wait(events);
            return;
        }
        events.push(MasterEvent::Data { index: self.words_sent, word });
        self.words_sent += 1;
        self.state = MasterState::Sending;
        if inputs.ack {
            self.acks_received += 1;
            self.ack_timer = 0;
        }
        if self.words_sent == self.burst_len {
            if self.acks_received == self.words_sent {
                self.finish(ErrorCode::Success, events);
            } else {
                self.state = MasterState::AwaitAcks;
            }
        }
    }

    /// Advances one clock cycle. `inputs.stall`/`inputs.ack` must be the
    /// slave's response to [`Self::drive`] under the same inputs.
    pub fn step(
        &mut self,
        inputs: &MasterInputs,
        module_request: Option<ModuleRequest>,
    ) -> (MasterOutputs, Vec<MasterEvent>) {
        let drive = self.drive(inputs);
        let mut out = MasterOutputs { cyc: drive.cyc, data: drive.data, addr: self.destination, error_code_out: None };
        let mut events = Vec::new();
        match self.state {
            MasterState::Idle => {
                if let Some(req) = module_request {
                    debug_assert!(req.len > 0 && req.words.len() <= req.len);
                    self.words = req.words;
                    self.burst_len = req.len;
                    self.destination = req.destination;
                    self.words_sent = 0;
                    self.acks_received = 0;
                    self.grant_timer = 0;
                    self.ack_timer = 0;
                    self.code = None;
                    self.state = MasterState::Requesting;
                    events.push(MasterEvent::Request { len: req.len });
                }
            }
            MasterState::Requesting => {
                out.addr = self.destination;
                self.grant_timer = 0;
                self.state = MasterState::AwaitGrant;
            }
            MasterState::AwaitGrant => {
                if inputs.error_in {
                    self.finish(ErrorCode::InvalidAddress, &mut events);
                } else if inputs.grant && !inputs.retry {
                    self.grant_timer = 0;
                    self.transfer(inputs, &mut events);
                } else {
                    self.grant_timer += 1;
                    if self.grant_timer >= self.timeouts.grant {
                        self.finish(ErrorCode::GrantTimeout, &mut events);
                    }
                }
            }
            MasterState::Sending | MasterState::Stalled => {
                if inputs.retry {
                    events.push(MasterEvent::Yield);
                    self.state = MasterState::Requesting;
                } else if inputs.grant {
                    self.transfer(inputs, &mut events);
                } else {
                    self.state = MasterState::Stalled;
                    self.ack_wait(&mut events);
                }
            }
            MasterState::AwaitAcks => {
                if inputs.ack {
                    self.acks_received += 1;
                    self.ack_timer = 0;
                }
                if self.acks_received >= self.words_sent {
                    self.finish(ErrorCode::Success, &mut events);
                } else {
                    self.ack_wait(&mut events);
                }
            }
            MasterState::Complete => {
                let code = self.code.take().unwrap_or_default();
                out.error_code_out = Some(code);
                events.push(MasterEvent::Complete(code));
                self.state = MasterState::Idle;
            }
        }
        (out, events)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlaveState {
    Idle,
    Accepting,
    Stalling,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlaveInputs {
    pub cyc: bool,
    /// (word_select, data) routed from the connected master.
    pub data: Option<(usize, Word)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlaveOutputs {
    pub ack: bool,
    pub stall: bool,
    pub buffer_full: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlaveInterface {
    state: SlaveState,
    buffer: [Word; SLAVE_SLOTS],
    valid: [bool; SLAVE_SLOTS],
    stall_asserted: bool,
    stored: u64,
}

impl Default for SlaveInterface {
    fn default() -> Self {
        Self::new()
    }
}

impl SlaveInterface {
    pub fn new() -> Self {
        Self {
            state: SlaveState::Idle,
            buffer: [0; SLAVE_SLOTS],
            valid: [false; SLAVE_SLOTS],
            stall_asserted: false,
            stored: 0,
        }
    }

    pub fn state(&self) -> SlaveState {
        self.state
    }

    pub fn stall_asserted(&self) -> bool {
        self.stall_asserted
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_count() == 0
    }

    /// Total words stored (and acked) since construction.
    pub fn stored(&self) -> u64 {
        self.stored
    }

    /// Valid words in slot order, as the module latches them.
    pub fn contents(&self) -> Vec<Word> {
        self.buffer.iter().zip(self.valid).filter(|(_, v)| *v).map(|(w, _)| *w).collect()
    }

    pub fn buffer_full(&self, cyc: bool) -> bool {
        let any = self.valid.iter().any(|v| *v);
        self.valid.iter().all(|v| *v) || (any && !cyc)
    }

    pub fn reset(&mut self) {
        let stored = self.stored;
        *self = Self::new();
        self.stored = stored;
    }

    /// Advances one clock cycle. `data_read` is the module's registered
    /// acknowledgement that it has latched the buffer contents.
    pub fn step(&mut self, inputs: &SlaveInputs, data_read: bool) -> SlaveOutputs {
        if data_read {
            self.valid = [false; SLAVE_SLOTS];
        }
        let mut out = SlaveOutputs::default();
        match inputs.data {
            Some((sel, word)) => {
                let slot = sel % SLAVE_SLOTS;
                if self.valid[slot] {
                    self.state = SlaveState::Stalling;
                    out.stall = true;
                } else {
                    self.buffer[slot] = word;
                    self.valid[slot] = true;
                    self.stored += 1;
                    self.state = SlaveState::Accepting;
                    out.ack = true;
                }
            }
            None if inputs.cyc => {
                if self.state == SlaveState::Idle {
                    self.state = SlaveState::Accepting;
                }
            }
            None => self.state = SlaveState::Idle,
        }
        self.stall_asserted = out.stall;
        out.buffer_full = self.buffer_full(inputs.cyc);
        out
    }
}
