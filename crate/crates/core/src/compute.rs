// Licensed under the Apache-2.0 license.

//! Computation-module template and the concrete module kinds.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::regfile::ErrorCode;
use crate::Word;

pub const HAMMING_DATA_BITS: u32 = 26;
pub const HAMMING_CODE_BITS: u32 = 31;
pub const DATA_MASK: Word = (1 << HAMMING_DATA_BITS) - 1;
pub const CODE_MASK: Word = (1 << HAMMING_CODE_BITS) - 1;
pub const DEFAULT_MULTIPLIER: Word = 3;

/// Codeword positions (1-based) that carry data, in ascending order.
const fn data_positions() -> [u32; HAMMING_DATA_BITS as usize] {
    let mut out = [0; HAMMING_DATA_BITS as usize];
    let mut pos = 1;
    let mut i = 0;
    while pos <= HAMMING_CODE_BITS {
        if !pos.is_power_of_two() {
            out[i] = pos;
            i += 1;
        }
        pos += 1;
    }
    out
}

const DATA_POSITIONS: [u32; HAMMING_DATA_BITS as usize] = data_positions();

/// XOR of the 1-based positions of all set bits.
fn position_xor(code: Word) -> u32 {
    let mut acc = 0;
    let mut bits = code & CODE_MASK;
    while bits != 0 {
        let k = bits.trailing_zeros();
        acc ^= k + 1;
        bits &= bits - 1;
    }
    acc
}

/// Hamming(31,26) encoder. Parity sits at positions 1, 2, 4, 8 and 16; bit
/// `k-1` of the result is position `k`.
pub fn hamming_encode(data: Word) -> Word {
    debug_assert!(data <= DATA_MASK, "payload wider than 26 bits");
    let mut code = 0;
    for (i, pos) in DATA_POSITIONS.iter().enumerate() {
        if data >> i & 1 == 1 {
            code |= 1 << (pos - 1);
        }
    }
    let syndrome = position_xor(code);
    for p in 0..5 {
        if syndrome >> p & 1 == 1 {
            code |= 1 << ((1 << p) - 1);
        }
    }
    code
}

/// Returns the corrected payload and the syndrome (0 when clean).
pub fn hamming_decode(code: Word) -> (Word, u32) {
    let mut code = code & CODE_MASK;
    let syndrome = position_xor(code);
    if syndrome != 0 {
        code ^= 1 << (syndrome - 1);
    }
    let data = DATA_POSITIONS
        .iter()
        .enumerate()
        .fold(0, |acc, (i, pos)| acc | ((code >> (pos - 1)) & 1) << i);
    (data, syndrome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModuleKind {
    Multiplier(Word),
    HammingEncoder,
    HammingDecoder,
    /// Pass-through stand-in for a stage executed on the host.
    HostStub,
}

impl ModuleKind {
    /// Stage function on a single payload word.
    pub fn apply_word(self, word: Word) -> Word {
        match self {
            Self::Multiplier(c) => word.wrapping_mul(c),
            Self::HammingEncoder => hamming_encode(word & DATA_MASK),
            Self::HammingDecoder => hamming_decode(word).0,
            Self::HostStub => word,
        }
    }

    /// Whole-burst function; word 0 carries the application ID and is passed through.
    pub fn apply(self, burst: &[Word]) -> Vec<Word> {
        burst
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 { w } else { self.apply_word(w) })
            .collect()
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Multiplier(c) => write!(f, "multiplier({c})"),
            Self::HammingEncoder => f.write_str("encoder"),
            Self::HammingDecoder => f.write_str("decoder"),
            Self::HostStub => f.write_str("host"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown module kind `{0}`")]
pub struct UnknownModule(pub String);

impl FromStr for ModuleKind {
    type Err = UnknownModule;

    /// Accepts `multiplier`, `multiplier(5)`, `multiplier 5`, `encoder`, `decoder`, `host`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || UnknownModule(t.to_string());
        let (name, arg) = match t.find(['(', ' ']) {
            Some(i) => (&t[..i], Some(t[i..].trim_matches(|c: char| c == '(' || c == ')' || c.is_whitespace()))),
            None => (t, None),
        };
        match (name.to_ascii_lowercase().as_str(), arg) {
            ("multiplier" | "mul", None) => Ok(Self::Multiplier(DEFAULT_MULTIPLIER)),
            ("multiplier" | "mul", Some(a)) => parse_word(a).map(Self::Multiplier).ok_or_else(bad),
            ("encoder" | "enc", None) => Ok(Self::HammingEncoder),
            ("decoder" | "dec", None) => Ok(Self::HammingDecoder),
            ("host" | "hoststub", None) => Ok(Self::HostStub),
            _ => Err(bad()),
        }
    }
}

/// Decimal or `0x` hex.
pub fn parse_word(s: &str) -> Option<Word> {
    let s = s.trim().replace('_', "");
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => Word::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModuleState {
    Idle,
    RegisterData,
    Compute,
    MakeRequest,
}

/// What the module tells the kernel after a step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModuleStep {
    /// Burst latched from the slave buffer this cycle.
    pub latched: Option<Vec<Word>>,
    /// Request finished this cycle with this status.
    pub finished: Option<ErrorCode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComputeModule {
    kind: ModuleKind,
    latency: u32,
    state: ModuleState,
    input: Vec<Word>,
    output: Vec<Word>,
    error_reg: Option<ErrorCode>,
    timer: u32,
    issued: bool,
    data_read: bool,
    bursts: u64,
}

impl ComputeModule {
    pub fn new(kind: ModuleKind) -> Self {
        Self::with_latency(kind, 1)
    }

    pub fn with_latency(kind: ModuleKind, latency: u32) -> Self {
        Self {
            kind,
            latency: latency.max(1),
            state: ModuleState::Idle,
            input: Vec::new(),
            output: Vec::new(),
            error_reg: None,
            timer: 0,
            issued: false,
            data_read: false,
            bursts: 0,
        }
    }

    pub fn kind(&self) -> ModuleKind {
        self.kind
    }

    pub fn state(&self) -> ModuleState {
        self.state
    }

    pub fn latency(&self) -> u32 {
        self.latency
    }

    pub fn error_reg(&self) -> Option<ErrorCode> {
        self.error_reg
    }

    pub fn output(&self) -> &[Word] {
        &self.output
    }

    /// Bursts whose outbound request has completed.
    pub fn bursts_done(&self) -> u64 {
        self.bursts
    }

    /// Registered data_read line for the slave buffer.
    pub fn data_read(&self) -> bool {
        self.data_read
    }

    /// Output burst waiting for the master interface to pick it up.
    pub fn pending_request(&self) -> Option<&[Word]> {
        (self.state == ModuleState::MakeRequest && !self.issued).then_some(self.output.as_slice())
    }

    pub fn mark_issued(&mut self) {
        self.issued = true;
    }

    pub fn is_busy(&self) -> bool {
        self.state != ModuleState::Idle
    }

    /// Back to power-on state, keeping kind and latency.
    pub fn reset(&mut self) {
        let bursts = self.bursts;
        *self = Self::with_latency(self.kind, self.latency);
        self.bursts = bursts;
    }

    /// One cycle. `buffer_full` is the slave interface's output this cycle,
    /// `contents` its valid words, `completion` the master's status if the
    /// module's request completed this cycle.
    pub fn step(
        &mut self,
        buffer_full: bool,
        contents: impl FnOnce() -> Vec<Word>,
        completion: Option<ErrorCode>,
    ) -> ModuleStep {
        self.data_read = false;
        let mut out = ModuleStep::default();
        match self.state {
            ModuleState::Idle => {
                if buffer_full {
                    self.state = ModuleState::RegisterData;
                }
            }
            ModuleState::RegisterData => {
                self.input = contents();
                self.data_read = true;
                out.latched = Some(self.input.clone());
                self.timer = self.latency;
                self.state = ModuleState::Compute;
            }
            ModuleState::Compute => {
                self.timer -= 1;
                if self.timer == 0 {
                    self.output = self.kind.apply(&self.input);
                    self.issued = false;
                    self.state = ModuleState::MakeRequest;
                }
            }
            ModuleState::MakeRequest => {
                if let Some(code) = completion {
                    self.error_reg = Some(code);
                    self.output.clear();
                    self.issued = false;
                    self.bursts += 1;
                    out.finished = Some(code);
                    self.state = if buffer_full { ModuleState::RegisterData } else { ModuleState::Idle };
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Parity bit p covers every position whose index has bit p set.
    fn oracle_encode(data: Word) -> Word {
        let mut positions = [false; 32];
        let mut d = 0;
        for (pos, slot) in positions.iter_mut().enumerate().skip(1) {
            if pos & (pos - 1) != 0 {
                *slot = data >> d & 1 == 1;
                d += 1;
            }
        }
        for p in 0..5 {
            let parity = (1..=31usize).filter(|pos| pos & (1 << p) != 0 && positions[*pos]).count() % 2 == 1;
            positions[1 << p] = parity;
        }
        (1..=31).fold(0, |acc, pos| acc | (positions[pos] as Word) << (pos - 1))
    }

    #[test]
    fn encode_examples() {
        assert_eq!(hamming_encode(0), 0);
        assert_eq!(hamming_encode(DATA_MASK), oracle_encode(DATA_MASK));
        assert_eq!(hamming_decode(0), (0, 0));
        assert_eq!(hamming_decode(hamming_encode(0x155_5555)), (0x155_5555, 0));
    }

    #[test]
    fn encode_matches_oracle_on_single_bits() {
        for i in 0..HAMMING_DATA_BITS {
            assert_eq!(hamming_encode(1 << i), oracle_encode(1 << i));
        }
    }

    #[test]
    fn single_flip_correction() {
        let d = 0x2A5_A5A5 & DATA_MASK;
        for k in 0..31 {
            assert_eq!(hamming_decode(hamming_encode(d) ^ (1 << k)), (d, k + 1));
        }
    }

    #[test]
    fn multiplier_keeps_app_id() {
        let out = ModuleKind::Multiplier(3).apply(&[2, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(out, vec![2, 3, 6, 9, 12, 15, 18, 21]);
        assert_eq!(ModuleKind::Multiplier(3).apply_word(u32::MAX), u32::MAX.wrapping_mul(3));
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("multiplier(5)".parse(), Ok(ModuleKind::Multiplier(5)));
        assert_eq!("multiplier 0x10".parse(), Ok(ModuleKind::Multiplier(16)));
        assert_eq!("encoder".parse(), Ok(ModuleKind::HammingEncoder));
        assert_eq!("decoder".parse(), Ok(ModuleKind::HammingDecoder));
        assert!("fft".parse::<ModuleKind>().is_err());
        for k in [ModuleKind::Multiplier(7), ModuleKind::HammingEncoder, ModuleKind::HammingDecoder, ModuleKind::HostStub] {
            assert_eq!(k.to_string().parse(), Ok(k));
        }
    }

    #[test]
    fn fsm_cycle() {
        let mut m = ComputeModule::new(ModuleKind::Multiplier(3));
        let burst = vec![1, 1, 2, 3, 4, 5, 6, 7];
        m.step(true, || unreachable!(), None);
        assert_eq!(m.state(), ModuleState::RegisterData);
        let s = m.step(true, || burst.clone(), None);
        assert_eq!(s.latched.as_deref(), Some(&burst[..]));
        assert!(m.data_read());
        m.step(false, Vec::new, None);
        assert!(!m.data_read());
        assert_eq!(m.pending_request(), Some(&[1, 3, 6, 9, 12, 15, 18, 21][..]));
        m.mark_issued();
        assert_eq!(m.pending_request(), None);
        m.step(false, Vec::new, None);
        assert_eq!(m.state(), ModuleState::MakeRequest);
        // next burst already waiting: latched the cycle after completion
        let s = m.step(true, Vec::new, Some(ErrorCode::Success));
        assert_eq!(s.finished, Some(ErrorCode::Success));
        assert_eq!(m.state(), ModuleState::RegisterData);
        assert_eq!(m.error_reg(), Some(ErrorCode::Success));
        assert!(m.output().is_empty());
    }
}
