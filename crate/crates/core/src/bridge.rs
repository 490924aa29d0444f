// Licensed under the Apache-2.0 license.

//! Host bridge on crossbar port 0: three host-to-card FIFOs feeding the
//! port's master interface and a slave interface fanning finished bursts out
//! to three card-to-host queues.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::crossbar::OneHotAddress;
use crate::protocol::{ModuleRequest, DEFAULT_BURST_LEN};
use crate::regfile::{RegisterFile, APP_COUNT};
use crate::Word;

pub const H2C_CHANNELS: usize = 3;
pub const C2H_CHANNELS: usize = 3;
pub const DEFAULT_FIFO_DEPTH: usize = 2 * DEFAULT_BURST_LEN;

/// Application ID carried in the low bits of a burst's first word.
pub fn app_id(word0: Word) -> u8 {
    (word0 as usize % APP_COUNT) as u8
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum BridgeTrigger {
    /// Request as soon as half a burst is buffered.
    #[default]
    HalfFull,
    /// Wait for the whole burst.
    Full,
}

impl BridgeTrigger {
    pub fn threshold(self, burst_len: usize) -> usize {
        match self {
            Self::HalfFull => burst_len.div_ceil(2),
            Self::Full => burst_len,
        }
    }
}

impl fmt::Display for BridgeTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HalfFull => "half_full",
            Self::Full => "full",
        })
    }
}

impl FromStr for BridgeTrigger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "half_full" | "half" => Ok(Self::HalfFull),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown bridge trigger `{other}`")),
        }
    }
}

/// One word in a host-to-card FIFO, tagged with the burst it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    word: Word,
    burst: u64,
    len: usize,
}

/// Burst handed over to the crossbar (or dropped) by the ingress side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ingress {
    /// Request for the port-0 master; remaining words follow via [`Bridge::feed`].
    Request { burst: u64, channel: usize, app: u8, request: ModuleRequest },
    /// Application ID maps to no usable destination; the burst is discarded.
    Drop { burst: u64, channel: usize, app: u8, destination: Word },
    /// Destination is the host itself.
    Loopback { burst: u64, channel: usize, app: u8, words: Vec<Word> },
}

/// Burst read out of the port-0 slave and queued on a card-to-host channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Egress {
    pub channel: usize,
    pub app: u8,
    pub words: Vec<Word>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Streaming {
    burst: u64,
    channel: usize,
    left: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bridge {
    h2c: Vec<VecDeque<Slot>>,
    depth: usize,
    trigger: BridgeTrigger,
    /// Channel to try first in the next service round.
    next_channel: usize,
    streaming: Option<Streaming>,
    /// Dropped bursts and how many of their words are still to come.
    dropping: Vec<(u64, usize)>,
    c2h: Vec<VecDeque<Vec<Word>>>,
    c2h_select: u8,
}

impl Bridge {
    pub fn new(depth: usize, trigger: BridgeTrigger) -> Self {
        Self {
            h2c: vec![VecDeque::new(); H2C_CHANNELS],
            depth: depth.max(1),
            trigger,
            next_channel: 0,
            streaming: None,
            dropping: Vec::new(),
            c2h: vec![VecDeque::new(); C2H_CHANNELS],
            c2h_select: 0b001,
        }
    }

    pub fn trigger(&self) -> BridgeTrigger {
        self.trigger
    }

    pub fn c2h_select(&self) -> u8 {
        self.c2h_select
    }

    pub fn fifo_len(&self, channel: usize) -> usize {
        self.h2c[channel].len()
    }

    pub fn has_space(&self, channel: usize) -> bool {
        self.h2c[channel].len() < self.depth
    }

    pub fn is_streaming(&self) -> bool {
        self.streaming.is_some()
    }

    /// Nothing buffered and nothing in flight on the ingress side.
    pub fn is_idle(&self) -> bool {
        self.streaming.is_none() && self.h2c.iter().all(VecDeque::is_empty)
    }

    /// Host pushes one word of burst `burst` (of `len` words) into a FIFO.
    pub fn push(&mut self, channel: usize, burst: u64, len: usize, word: Word) -> bool {
        if !self.has_space(channel) {
            return false;
        }
        self.h2c[channel].push_back(Slot { word, burst, len });
        true
    }

    fn head_run(&self, channel: usize) -> Option<(u64, usize, usize)> {
        let q = &self.h2c[channel];
        let head = q.front()?;
        let have = q.iter().take_while(|s| s.burst == head.burst).count();
        Some((head.burst, head.len, have))
    }

    fn discard_dropped(&mut self) {
        for q in &mut self.h2c {
            while let Some(head) = q.front() {
                let Some(d) = self.dropping.iter_mut().find(|d| d.0 == head.burst) else {
                    break;
                };
                d.1 -= 1;
                q.pop_front();
            }
        }
        self.dropping.retain(|d| d.1 > 0);
    }

    /// Words of the burst currently streaming into the master that are
    /// buffered and may be appended now.
    pub fn feed(&mut self) -> Vec<Word> {
        let Some(s) = self.streaming.as_mut() else {
            return Vec::new();
        };
        let q = &mut self.h2c[s.channel];
        let mut out = Vec::new();
        while s.left > 0 && q.front().is_some_and(|slot| slot.burst == s.burst) {
            out.push(q.pop_front().map(|slot| slot.word).unwrap_or_default());
            s.left -= 1;
        }
        if s.left == 0 {
            self.streaming = None;
        }
        out
    }

    /// Picks the next channel whose head burst has reached the trigger level.
    /// `master_idle` says whether the port-0 master can take a request now.
    pub fn ingress(&mut self, regfile: &RegisterFile, master_idle: bool) -> Option<Ingress> {
        self.discard_dropped();
        if self.streaming.is_some() {
            return None;
        }
        for k in 0..H2C_CHANNELS {
            let ch = (self.next_channel + k) % H2C_CHANNELS;
            let Some((burst, len, have)) = self.head_run(ch) else {
                continue;
            };
            let app = app_id(self.h2c[ch][0].word);
            let dest = OneHotAddress::new(regfile.app_dest(app as usize));
            let unusable = dest.target().is_none_or(|p| p >= regfile.port_count());
            if unusable {
                self.next_channel = (ch + 1) % H2C_CHANNELS;
                self.dropping.push((burst, len));
                self.discard_dropped();
                return Some(Ingress::Drop { burst, channel: ch, app, destination: dest.bits() });
            }
            if dest.target() == Some(0) {
                if have < len {
                    continue;
                }
                self.next_channel = (ch + 1) % H2C_CHANNELS;
                let words = self.h2c[ch].drain(..len).map(|s| s.word).collect();
                return Some(Ingress::Loopback { burst, channel: ch, app, words });
            }
            if !master_idle || have < self.trigger.threshold(len).min(len) {
                continue;
            }
            self.next_channel = (ch + 1) % H2C_CHANNELS;
            let words: Vec<Word> = self.h2c[ch].drain(..have).map(|s| s.word).collect();
            if have < len {
                self.streaming = Some(Streaming { burst, channel: ch, left: len - have });
            }
            let request = ModuleRequest { words, len, destination: dest };
            return Some(Ingress::Request { burst, channel: ch, app, request });
        }
        None
    }

    fn rotate(&mut self) -> usize {
        let ch = self.c2h_select.trailing_zeros() as usize;
        self.c2h_select = if self.c2h_select == 1 << (C2H_CHANNELS - 1) { 1 } else { self.c2h_select << 1 };
        ch
    }

    /// Queues a finished burst on the selected card-to-host channel.
    pub fn egress(&mut self, words: Vec<Word>) -> Egress {
        let channel = self.rotate();
        let app = words.first().map_or(0, |w| app_id(*w));
        self.c2h[channel].push_back(words.clone());
        Egress { channel, app, words }
    }

    /// Host side drains a card-to-host queue.
    pub fn take_c2h(&mut self, channel: usize) -> Vec<Vec<Word>> {
        self.c2h[channel].drain(..).collect()
    }
}
