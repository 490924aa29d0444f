// Licensed under the Apache-2.0 license.

//! Configuration and status register file.
//!
//! The base map (0x00..=0x4C, twenty 32-bit words) is laid out for a 4-port
//! crossbar. Larger crossbars append one allowed-mask and one destination
//! register per extra port, extra quota words for masters beyond lane 3, and
//! extra region status words, all starting at 0x50.

use std::fmt;

use thiserror::Error;

use crate::Word;

pub const DEFAULT_DEVICE_ID: Word = 0x1500_0001;
pub const DEFAULT_PORT_COUNT: usize = 4;
/// Largest crossbar the register map can describe (one reset bit per port).
pub const MAX_PORTS: usize = 32;
/// Number of application IDs (2-bit IDs).
pub const APP_COUNT: usize = 4;

pub const DEVICE_ID_ADDR: u32 = 0x00;
pub const RESET_ADDR: u32 = 0x10;
pub const REGION_STATUS_ADDR: u32 = 0x44;
pub const APP_STATUS_ADDR: u32 = 0x48;
pub const ICAP_STATUS_ADDR: u32 = 0x4C;

const BASE_WORDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegError {
    #[error("address {0:#x} is outside the register map")]
    OutOfRange(u32),
    #[error("address {0:#x} is a status register and cannot be written from the host path")]
    StatusWriteDenied(u32),
    #[error("port count {0} is not supported (1..={MAX_PORTS})")]
    BadPortCount(usize),
}

/// Two-bit transaction status reported by master interfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ErrorCode {
    #[default]
    Success = 0,
    AckTimeout = 1,
    InvalidAddress = 2,
    GrantTimeout = 3,
}

impl ErrorCode {
    pub fn bits(self) -> u8 {
        self as u8
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        match bits {
            0 => Some(Self::Success),
            1 => Some(Self::AckTimeout),
            2 => Some(Self::InvalidAddress),
            3 => Some(Self::GrantTimeout),
            _ => None,
        }
    }

    pub fn is_success(self) -> bool {
        self == Self::Success
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Success => "success",
            Self::AckTimeout => "ack-timeout",
            Self::InvalidAddress => "invalid-address",
            Self::GrantTimeout => "grant-timeout",
        };
        f.write_str(s)
    }
}

/// State of the (simulated) reconfiguration engine, mirrored at 0x4C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcapStatus {
    Idle = 0,
    Busy = 1,
    Done = 2,
    Error = 3,
}

/// Which side of the chip is accessing the register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessPath {
    /// Host bypass link: may not touch status registers.
    Host,
    /// Fabric-side status reporting and the resource manager's own bookkeeping.
    Fabric,
}

/// Word-addressed register layout for an N-port crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterMap {
    ports: usize,
}

impl RegisterMap {
    pub fn new(ports: usize) -> Result<Self, RegError> {
        if ports == 0 || ports > MAX_PORTS {
            return Err(RegError::BadPortCount(ports));
        }
        Ok(Self { ports })
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    fn lane_groups(&self) -> usize {
        self.ports.div_ceil(4)
    }

    fn extra_ports(&self) -> usize {
        self.ports.saturating_sub(4)
    }

    fn ext_quota_base(&self) -> usize {
        BASE_WORDS + 2 * self.extra_ports()
    }

    fn ext_status_base(&self) -> usize {
        // every (slave, lane group) pair except the 4x1 block in the base map
        let base_quota = self.ports.min(4);
        self.ext_quota_base() + self.ports * self.lane_groups() - base_quota
    }

    pub fn word_count(&self) -> usize {
        if self.ports <= 4 {
            BASE_WORDS
        } else {
            self.ext_status_base() + self.lane_groups() - 1
        }
    }

    /// Highest valid byte address.
    pub fn last_addr(&self) -> u32 {
        (self.word_count() as u32 - 1) * 4
    }

    /// Destination register of the module in region `port` (1..N).
    pub fn region_dest(&self, port: usize) -> u32 {
        debug_assert!(port >= 1 && port < self.ports.max(4));
        if port < 4 {
            4 * port as u32
        } else {
            4 * (BASE_WORDS + 2 * (port - 4) + 1) as u32
        }
    }

    /// Allowed-destination mask of the master side of `port`.
    pub fn allowed(&self, port: usize) -> u32 {
        if port < 4 {
            0x14 + 4 * port as u32
        } else {
            4 * (BASE_WORDS + 2 * (port - 4)) as u32
        }
    }

    /// Word and byte lane holding the quota that slave port `slave` grants master `master`.
    pub fn quota(&self, slave: usize, master: usize) -> (u32, u32) {
        let group = master / 4;
        let lane = (master % 4) as u32;
        if slave < 4 && group == 0 {
            return (0x24 + 4 * slave as u32, lane);
        }
        // enumerate (slave, group) pairs in order, skipping the base block
        let linear = slave * self.lane_groups() + group;
        let skipped = (0..=slave.min(3)).filter(|&s| s * self.lane_groups() < linear).count();
        let idx = self.ext_quota_base() + linear - skipped;
        (4 * idx as u32, lane)
    }

    pub fn app_dest(&self, app: usize) -> u32 {
        debug_assert!(app < APP_COUNT);
        0x34 + 4 * app as u32
    }

    /// Word and byte lane holding the last-transaction status of region `port`.
    pub fn region_status(&self, port: usize) -> (u32, u32) {
        let group = port / 4;
        let lane = (port % 4) as u32;
        if group == 0 {
            (REGION_STATUS_ADDR, lane)
        } else {
            (4 * (self.ext_status_base() + group - 1) as u32, lane)
        }
    }

    pub fn app_status(&self, app: usize) -> (u32, u32) {
        (APP_STATUS_ADDR, app as u32)
    }

    pub fn is_status(&self, addr: u32) -> bool {
        if matches!(addr, REGION_STATUS_ADDR | APP_STATUS_ADDR | ICAP_STATUS_ADDR) {
            return true;
        }
        let idx = (addr / 4) as usize;
        self.ports > 4 && idx >= self.ext_status_base() && idx < self.word_count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterFile {
    map: RegisterMap,
    words: Vec<Word>,
    device_id: Word,
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self::new(DEFAULT_PORT_COUNT).expect("default port count is valid")
    }
}

impl RegisterFile {
    pub fn new(ports: usize) -> Result<Self, RegError> {
        Self::with_device_id(ports, DEFAULT_DEVICE_ID)
    }

    pub fn with_device_id(ports: usize, device_id: Word) -> Result<Self, RegError> {
        let map = RegisterMap::new(ports)?;
        let mut words = vec![0; map.word_count()];
        words[0] = device_id;
        Ok(Self { map, words, device_id })
    }

    pub fn map(&self) -> &RegisterMap {
        &self.map
    }

    pub fn port_count(&self) -> usize {
        self.map.ports
    }

    pub fn device_id(&self) -> Word {
        self.device_id
    }

    fn index(&self, addr: u32) -> Result<usize, RegError> {
        if !addr.is_multiple_of(4) || addr > self.map.last_addr() {
            return Err(RegError::OutOfRange(addr));
        }
        Ok((addr / 4) as usize)
    }

    pub fn read(&self, addr: u32) -> Result<Word, RegError> {
        self.index(addr).map(|i| self.words[i])
    }

    pub fn write(&mut self, path: AccessPath, addr: u32, value: Word) -> Result<(), RegError> {
        let idx = self.index(addr)?;
        if path == AccessPath::Host && self.map.is_status(addr) {
            return Err(RegError::StatusWriteDenied(addr));
        }
        self.words[idx] = value;
        Ok(())
    }

    /// Host-path write, as issued by `poke`.
    pub fn poke(&mut self, addr: u32, value: Word) -> Result<(), RegError> {
        self.write(AccessPath::Host, addr, value)
    }

    fn word(&self, addr: u32) -> Word {
        self.words[(addr / 4) as usize]
    }

    fn set_word(&mut self, addr: u32, value: Word) {
        self.words[(addr / 4) as usize] = value;
    }

    fn set_lane(&mut self, (addr, lane): (u32, u32), value: u8) {
        let shift = lane * 8;
        let w = (self.word(addr) & !(0xFF << shift)) | (u32::from(value) << shift);
        self.set_word(addr, w);
    }

    fn lane(&self, (addr, lane): (u32, u32)) -> u8 {
        (self.word(addr) >> (lane * 8)) as u8
    }

    fn port_mask(&self) -> Word {
        if self.map.ports == 32 {
            Word::MAX
        } else {
            (1 << self.map.ports) - 1
        }
    }

    pub fn reset_bits(&self) -> Word {
        self.word(RESET_ADDR) & self.port_mask()
    }

    pub fn in_reset(&self, port: usize) -> bool {
        self.reset_bits() >> port & 1 == 1
    }

    pub fn set_reset(&mut self, port: usize, held: bool) {
        let w = self.word(RESET_ADDR);
        let w = if held { w | 1 << port } else { w & !(1 << port) };
        self.set_word(RESET_ADDR, w);
    }

    pub fn allowed_mask(&self, port: usize) -> Word {
        self.word(self.map.allowed(port)) & self.port_mask()
    }

    pub fn set_allowed_mask(&mut self, port: usize, mask: Word) {
        self.set_word(self.map.allowed(port), mask);
    }

    /// Packages slave port `slave` lets master `master` send per grant.
    pub fn quota(&self, slave: usize, master: usize) -> u8 {
        assert!(slave < self.map.ports && master < self.map.ports, "port index out of range");
        self.lane(self.map.quota(slave, master))
    }

    pub fn set_quota(&mut self, slave: usize, master: usize, packages: u8) {
        assert!(slave < self.map.ports && master < self.map.ports, "port index out of range");
        self.set_lane(self.map.quota(slave, master), packages);
    }

    /// Raw destination register of region `port`.
    pub fn region_dest(&self, port: usize) -> Word {
        self.word(self.map.region_dest(port))
    }

    pub fn set_region_dest(&mut self, port: usize, onehot: Word) {
        self.set_word(self.map.region_dest(port), onehot);
    }

    pub fn app_dest(&self, app: usize) -> Word {
        self.word(self.map.app_dest(app))
    }

    pub fn set_app_dest(&mut self, app: usize, onehot: Word) {
        self.set_word(self.map.app_dest(app), onehot);
    }

    pub fn region_status(&self, port: usize) -> Option<ErrorCode> {
        ErrorCode::from_bits(self.lane(self.map.region_status(port)))
    }

    pub fn app_status(&self, app: usize) -> Option<ErrorCode> {
        ErrorCode::from_bits(self.lane(self.map.app_status(app)))
    }

    pub fn report_region_status(&mut self, port: usize, code: ErrorCode) {
        self.set_lane(self.map.region_status(port), code.bits());
    }

    pub fn report_app_status(&mut self, app: usize, code: ErrorCode) {
        self.set_lane(self.map.app_status(app), code.bits());
    }

    pub fn icap_status(&self) -> Word {
        self.word(ICAP_STATUS_ADDR)
    }

    pub fn set_icap_status(&mut self, status: IcapStatus) {
        self.set_word(ICAP_STATUS_ADDR, status as Word);
    }

    /// Every in-range byte address in ascending order.
    pub fn addresses(&self) -> impl Iterator<Item = u32> {
        (0..self.map.word_count() as u32).map(|i| i * 4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_state() {
        let rf = RegisterFile::default();
        assert_eq!(rf.read(0x0), Ok(DEFAULT_DEVICE_ID));
        assert_eq!(rf.read(0x10), Ok(0));
        for addr in rf.addresses().skip(1) {
            assert_eq!(rf.read(addr), Ok(0), "addr {addr:#x}");
        }
        assert_eq!(rf.map().last_addr(), 0x4C);
    }

    #[test]
    fn read_after_write_sweep() {
        let mut rf = RegisterFile::default();
        for addr in rf.addresses() {
            let v = 0xA5A5_0000 | addr;
            rf.write(AccessPath::Fabric, addr, v).unwrap();
            assert_eq!(rf.read(addr), Ok(v));
        }
        rf.poke(0x24, 0x0808_0808).unwrap();
        assert_eq!(rf.read(0x24), Ok(0x0808_0808));
    }

    #[test]
    fn out_of_range_and_unaligned() {
        let mut rf = RegisterFile::default();
        assert_eq!(rf.read(0x50), Err(RegError::OutOfRange(0x50)));
        assert_eq!(rf.read(0x2), Err(RegError::OutOfRange(0x2)));
        assert_eq!(rf.poke(0x51, 1), Err(RegError::OutOfRange(0x51)));
    }

    #[test]
    fn host_cannot_write_status() {
        let mut rf = RegisterFile::default();
        for addr in [0x44, 0x48, 0x4C] {
            assert_eq!(rf.poke(addr, 7), Err(RegError::StatusWriteDenied(addr)));
            assert_eq!(rf.read(addr), Ok(0));
        }
        rf.report_region_status(3, ErrorCode::InvalidAddress);
        assert_eq!(rf.read(0x44), Ok(0x0200_0000));
        rf.report_app_status(1, ErrorCode::GrantTimeout);
        assert_eq!(rf.read(0x48), Ok(0x0000_0300));
    }

    #[test]
    fn quota_lanes() {
        let mut rf = RegisterFile::default();
        rf.poke(0x24, 0x0000_0800).unwrap();
        assert_eq!(rf.quota(0, 1), 8);
        assert_eq!(rf.quota(0, 0), 0);
        for s in 0..4 {
            rf.poke(0x24 + 4 * s, 0x1010_1010).unwrap();
        }
        for s in 0..4 {
            for m in 0..4 {
                assert_eq!(rf.quota(s, m), 16);
            }
        }
        rf.set_quota(2, 3, 0x80);
        assert_eq!(rf.read(0x2C), Ok(0x8010_1010));
    }

    #[test]
    fn field_semantics() {
        let mut rf = RegisterFile::default();
        rf.poke(0x14, 0b0110).unwrap();
        assert_eq!(rf.allowed_mask(0), 0b0110);
        rf.poke(0x10, 0b0010).unwrap();
        assert!(rf.in_reset(1));
        assert!(!rf.in_reset(0));
        rf.poke(0x8, 0b1000).unwrap();
        assert_eq!(rf.region_dest(2), 0b1000);
        rf.poke(0x3C, 0b0010).unwrap();
        assert_eq!(rf.app_dest(2), 0b0010);
    }

    #[test]
    fn extended_map_is_disjoint() {
        for ports in 5..=12 {
            let map = RegisterMap::new(ports).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            let mut claim = |addr: u32| {
                assert!(addr <= map.last_addr(), "{ports} ports: {addr:#x} beyond map");
                seen.insert(addr)
            };
            for p in 0..ports {
                assert!(claim(map.allowed(p)));
                if p >= 1 {
                    assert!(claim(map.region_dest(p)));
                }
            }
            let mut quota_words = std::collections::BTreeSet::new();
            for s in 0..ports {
                for m in 0..ports {
                    quota_words.insert(map.quota(s, m).0);
                }
            }
            for q in &quota_words {
                assert!(claim(*q));
            }
            // base map for ports < 4 is unchanged
            assert_eq!(map.allowed(3), 0x20);
            assert_eq!(map.quota(3, 3), (0x30, 3));
            assert!(map.is_status(map.region_status(ports - 1).0));
            assert!(!map.is_status(map.allowed(ports - 1)));
        }
    }

    #[test]
    fn error_code_encoding() {
        for bits in 0..4u8 {
            assert_eq!(ErrorCode::from_bits(bits).unwrap().bits(), bits);
        }
        assert_eq!(ErrorCode::from_bits(4), None);
    }
}
