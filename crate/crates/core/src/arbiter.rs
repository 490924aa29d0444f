// Licensed under the Apache-2.0 license.

//! Weighted round-robin arbiter for one crossbar slave port.
//!
//! Selection is the usual two-pass leading-zero-count scheme: requests at or
//! below the previous grantee are masked off by a thermometer mask and the
//! first remaining request wins; if none remain the unmasked vector is used.
//! Each grant loads a package counter from the register file quota lane of
//! the grantee and every ack counts it down. When it hits zero the grantee is
//! told to retry and the port re-arbitrates once the request line drops.

pub type RequestVector = u32;

/// Index of the next requester after `prev_grant` in cyclic order.
pub fn select(requests: RequestVector, prev_grant: Option<usize>) -> Option<usize> {
    if requests == 0 {
        return None;
    }
    let masked = match prev_grant {
        Some(p) if p < 31 => requests & !((2u32 << p) - 1),
        Some(_) => 0,
        None => requests,
    };
    let pick = if masked != 0 { masked } else { requests };
    // first set bit from the bottom == leading zeros of the bit-reversed vector
    Some(pick.reverse_bits().leading_zeros() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    /// Second decision cycle; the candidate was picked in the cycle before.
    Deciding(usize),
    Granted(usize),
    /// The grantee dropped its request with packages left and nobody else
    /// was waiting: the slave is disconnected but the counter is kept, so a
    /// returning grantee skips selection.
    Parked(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArbiterOutputs {
    /// Master allowed to put data on the bus this cycle.
    pub grant_to: Option<usize>,
    /// Connected master whose packages are used up.
    pub retry_to: Option<usize>,
    pub connected: Option<usize>,
    pub slave_enable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArbiterEvent {
    Grant { master: usize, packages: u32 },
    Release { master: usize },
    QuotaExhausted { master: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arbiter {
    phase: Phase,
    prev_grant: Option<usize>,
    remaining: u32,
}

impl Default for Arbiter {
    fn default() -> Self {
        Self::new()
    }
}

impl Arbiter {
    pub fn new() -> Self {
        Self { phase: Phase::Idle, prev_grant: None, remaining: 0 }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn prev_grant(&self) -> Option<usize> {
        self.prev_grant
    }

    pub fn remaining_packages(&self) -> u32 {
        self.remaining
    }

    pub fn granted(&self) -> Option<usize> {
        match self.phase {
            Phase::Granted(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_idle(&self) -> bool {
        matches!(self.phase, Phase::Idle | Phase::Parked(_))
    }

    /// Signals driven at the start of the cycle.
    pub fn outputs(&self) -> ArbiterOutputs {
        match self.phase {
            Phase::Granted(m) => ArbiterOutputs {
                grant_to: (self.remaining > 0).then_some(m),
                retry_to: (self.remaining == 0).then_some(m),
                connected: Some(m),
                slave_enable: true,
            },
            _ => ArbiterOutputs::default(),
        }
    }

    /// Drops any grant while the port is held in reset. `prev_grant` survives.
    pub fn reset(&mut self) -> Option<ArbiterEvent> {
        let ev = self.granted().map(|master| ArbiterEvent::Release { master });
        self.phase = Phase::Idle;
        self.remaining = 0;
        ev
    }

    /// Advances one cycle.
    ///
    /// `requests` is the registered request vector from the master ports
    /// (masters in reset already removed), `ack` is the slave's ack this
    /// cycle and `quota` reads the current register file lane for a master.
    pub fn step(
        &mut self,
        requests: RequestVector,
        ack: bool,
        quota: impl Fn(usize) -> u8,
    ) -> Vec<ArbiterEvent> {
        let mut events = Vec::new();
        let eligible = (0..RequestVector::BITS as usize)
            .filter(|&m| requests >> m & 1 == 1 && quota(m) > 0)
            .fold(0, |acc, m| acc | 1 << m);
        match self.phase {
            Phase::Idle => {
                if let Some(m) = select(eligible, self.prev_grant) {
                    self.phase = Phase::Deciding(m);
                }
            }
            Phase::Deciding(m) => {
                if eligible >> m & 1 == 1 {
                    self.remaining = u32::from(quota(m));
                    self.prev_grant = Some(m);
                    self.phase = Phase::Granted(m);
                    events.push(ArbiterEvent::Grant { master: m, packages: self.remaining });
                } else {
                    self.phase = Phase::Idle;
                }
            }
            Phase::Granted(m) => {
                if ack && self.remaining > 0 {
                    self.remaining -= 1;
                    if self.remaining == 0 {
                        events.push(ArbiterEvent::QuotaExhausted { master: m });
                    }
                }
                if requests >> m & 1 == 0 {
                    events.push(ArbiterEvent::Release { master: m });
                    let others = eligible & !(1 << m);
                    self.phase = if self.remaining > 0 && others == 0 { Phase::Parked(m) } else { Phase::Idle };
                }
            }
            Phase::Parked(m) => {
                let others = eligible & !(1 << m);
                if others != 0 {
                    self.remaining = 0;
                    if let Some(c) = select(eligible, self.prev_grant) {
                        self.phase = Phase::Deciding(c);
                    }
                } else if eligible >> m & 1 == 1 {
                    self.phase = Phase::Granted(m);
                    events.push(ArbiterEvent::Grant { master: m, packages: self.remaining });
                }
            }
        }
        events
    }
}
