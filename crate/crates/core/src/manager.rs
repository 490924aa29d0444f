// Licensed under the Apache-2.0 license.

//! Elastic resource manager: region inventory, placement of application
//! chains across PR regions and the host, simulated reconfiguration, and
//! rewiring of destination chains when regions free up.
//!
//! Every register write that touches a region happens while that region is
//! held in reset; a predecessor stage is only rewired once the application
//! has no burst inside the fabric.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::compute::ModuleKind;
use crate::regfile::{IcapStatus, RegisterFile};
use crate::Word;

pub const DEFAULT_RECONFIG_CYCLES: u64 = 10_000;
pub const DEFAULT_QUOTA: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionState {
    Free,
    /// Occupied by something the manager does not own.
    Static,
    Allocated { app: u8, stage: usize },
    Reconfiguring { app: u8, stage: usize, until: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StagePlacement {
    Fabric(usize),
    Host,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManagerError {
    #[error("no PR regions available")]
    NoRegionsAvailable,
    #[error("application {0} is already placed")]
    AlreadyPlaced(u8),
    #[error("unknown application {0}")]
    UnknownApp(u8),
    #[error("port {0} is not a PR region")]
    NotARegion(usize),
    #[error("region {port} is in use by running application {app}")]
    RegionBusy { port: usize, app: u8 },
}

/// Register-file view of an application's chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppPlacement {
    pub app: u8,
    pub chain: Vec<ModuleKind>,
    /// Region of each fabric stage; always a prefix of the chain.
    pub regions: Vec<usize>,
    /// Set while a freshly reconfigured region waits for the chain to drain.
    pub expanding: Option<usize>,
    pub finished: bool,
}

impl AppPlacement {
    pub fn fabric_stages(&self) -> usize {
        self.regions.len()
    }

    pub fn host_stages(&self) -> usize {
        self.chain.len() - self.regions.len() - usize::from(self.expanding.is_some())
    }

    pub fn placement(&self) -> Vec<StagePlacement> {
        (0..self.chain.len())
            .map(|i| self.regions.get(i).map_or(StagePlacement::Host, |r| StagePlacement::Fabric(*r)))
            .collect()
    }

    /// Host pushes are held back while a stage is being spliced in.
    pub fn paused(&self) -> bool {
        self.expanding.is_some()
    }
}

/// Something the kernel must act on after a manager call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManagerAction {
    /// Region entered reset for programming; it is done at `until`.
    Program { port: usize, app: u8, until: u64 },
    /// Region was programmed with `kind` and is about to leave reset.
    Load { port: usize, kind: ModuleKind, app: u8 },
    /// Region's module is gone.
    Unload { port: usize },
    /// App's chain changed: new bursts see `fabric_stages` stages in fabric.
    Rewired { app: u8, fabric_stages: usize },
    Rejected { port: usize, reason: ManagerError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manager {
    regions: Vec<RegionState>,
    apps: BTreeMap<u8, AppPlacement>,
    waiting: VecDeque<u8>,
    reconfig_cycles: u64,
    quota: u8,
    /// Cycle at which the (single) configuration port is free again.
    icap_free_at: u64,
}

impl Manager {
    /// Port 0 is the host bridge and never a region.
    pub fn new(ports: usize, reconfig_cycles: u64, quota: u8) -> Self {
        let mut regions = vec![RegionState::Free; ports];
        regions[0] = RegionState::Static;
        Self { regions, apps: BTreeMap::new(), waiting: VecDeque::new(), reconfig_cycles, quota, icap_free_at: 0 }
    }

    pub fn regions(&self) -> &[RegionState] {
        &self.regions
    }

    pub fn app(&self, app: u8) -> Option<&AppPlacement> {
        self.apps.get(&app)
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppPlacement> {
        self.apps.values()
    }

    pub fn quota(&self) -> u8 {
        self.quota
    }

    pub fn reconfig_cycles(&self) -> u64 {
        self.reconfig_cycles
    }

    /// Marks a region as occupied by a module the manager does not own.
    pub fn reserve(&mut self, port: usize) -> Result<(), ManagerError> {
        match self.regions.get(port) {
            Some(RegionState::Free) if port > 0 => {
                self.regions[port] = RegionState::Static;
                Ok(())
            }
            _ => Err(ManagerError::NotARegion(port)),
        }
    }

    pub fn free_regions(&self) -> Vec<usize> {
        (1..self.regions.len()).filter(|&p| self.regions[p] == RegionState::Free).collect()
    }

    /// Earliest pending reconfiguration completion.
    pub fn next_deadline(&self) -> Option<u64> {
        self.regions
            .iter()
            .filter_map(|r| match r {
                RegionState::Reconfiguring { until, .. } => Some(*until),
                _ => None,
            })
            .min()
    }

    /// Earliest cycle at or after `now` at which [`Self::tick`] has work.
    /// A finished reconfiguration still waiting for its app to drain only
    /// counts once `in_flight` reports it empty.
    pub fn next_wake(&self, now: u64, in_flight: impl Fn(u8) -> u64) -> Option<u64> {
        self.regions
            .iter()
            .filter_map(|r| match *r {
                RegionState::Reconfiguring { until, .. } if until > now => Some(until),
                RegionState::Reconfiguring { app, .. } if in_flight(app) == 0 => Some(now),
                _ => None,
            })
            .min()
    }

    pub fn is_settled(&self) -> bool {
        self.next_deadline().is_none() && self.apps.values().all(|a| a.expanding.is_none())
    }

    fn schedule_reconfig(&mut self, now: u64) -> u64 {
        let start = self.icap_free_at.max(now);
        self.icap_free_at = start + self.reconfig_cycles;
        self.icap_free_at
    }

    fn onehot(port: usize) -> Word {
        1 << port
    }

    /// Writes destination, isolation mask and quota lane for one stage.
    fn wire_stage(&self, regfile: &mut RegisterFile, port: usize, successor: usize) {
        regfile.set_region_dest(port, Self::onehot(successor));
        regfile.set_allowed_mask(port, Self::onehot(successor));
        regfile.set_quota(successor, port, self.quota);
    }

    fn wire_entry(&self, regfile: &mut RegisterFile, app: u8, first: usize) {
        regfile.set_app_dest(app as usize, Self::onehot(first));
        let mask = regfile.allowed_mask(0) | Self::onehot(first);
        regfile.set_allowed_mask(0, mask);
        regfile.set_quota(first, 0, self.quota);
    }

    fn clear_stage(regfile: &mut RegisterFile, port: usize) {
        regfile.set_region_dest(port, 0);
        regfile.set_allowed_mask(port, 0);
        for s in 0..regfile.port_count() {
            regfile.set_quota(s, port, 0);
            regfile.set_quota(port, s, 0);
        }
    }

    /// Allocates free regions to the longest feasible prefix of the chain.
    ///
    /// All registers are written at once while the regions are held in
    /// reset; [`Self::tick`] releases them as their reconfiguration ends.
    /// With no free region the app is queued for later expansion and
    /// `NoRegionsAvailable` is returned: every stage runs on the host.
    pub fn place(
        &mut self,
        app: u8,
        chain: Vec<ModuleKind>,
        now: u64,
        regfile: &mut RegisterFile,
    ) -> Result<AppPlacement, ManagerError> {
        if self.apps.contains_key(&app) {
            return Err(ManagerError::AlreadyPlaced(app));
        }
        let free = self.free_regions();
        let k = free.len().min(chain.len());
        let regions: Vec<usize> = free[..k].to_vec();
        for (stage, &port) in regions.iter().enumerate() {
            regfile.set_reset(port, true);
            let until = self.schedule_reconfig(now);
            self.regions[port] = RegionState::Reconfiguring { app, stage, until };
            let successor = regions.get(stage + 1).copied().unwrap_or(0);
            self.wire_stage(regfile, port, successor);
        }
        if let Some(&first) = regions.first() {
            self.wire_entry(regfile, app, first);
            regfile.set_icap_status(IcapStatus::Busy);
        }
        let placement = AppPlacement { app, chain, regions, expanding: None, finished: false };
        let empty_chain = placement.chain.is_empty();
        if placement.host_stages() > 0 {
            self.waiting.push_back(app);
        }
        self.apps.insert(app, placement.clone());
        if k == 0 && !empty_chain {
            return Err(ManagerError::NoRegionsAvailable);
        }
        Ok(placement)
    }

    /// Moves the next host stage of `app` into `port`. The region is
    /// programmed now; the predecessor is rewired by [`Self::tick`] once the
    /// reconfiguration is over and the app has drained.
    pub fn expand(
        &mut self,
        app: u8,
        port: usize,
        now: u64,
        regfile: &mut RegisterFile,
    ) -> Result<Option<ManagerAction>, ManagerError> {
        if self.regions.get(port) != Some(&RegionState::Free) || port == 0 {
            return Err(ManagerError::NotARegion(port));
        }
        let p = self.apps.get(&app).ok_or(ManagerError::UnknownApp(app))?;
        if p.host_stages() == 0 || p.finished || p.expanding.is_some() {
            return Ok(None);
        }
        let stage = p.fabric_stages();
        regfile.set_reset(port, true);
        let until = self.schedule_reconfig(now);
        self.regions[port] = RegionState::Reconfiguring { app, stage, until };
        self.wire_stage(regfile, port, 0);
        regfile.set_icap_status(IcapStatus::Busy);
        if let Some(p) = self.apps.get_mut(&app) {
            p.expanding = Some(port);
        }
        Ok(Some(ManagerAction::Program { port, app, until }))
    }

    /// Frees a region. Regions of a running application cannot be released.
    pub fn release(&mut self, port: usize, now: u64, regfile: &mut RegisterFile) -> Vec<ManagerAction> {
        let mut actions = Vec::new();
        match self.regions.get(port).copied() {
            Some(RegionState::Static) if port > 0 => {}
            Some(RegionState::Allocated { app, .. } | RegionState::Reconfiguring { app, .. })
                if self.apps.get(&app).is_some_and(|a| !a.finished) =>
            {
                actions.push(ManagerAction::Rejected { port, reason: ManagerError::RegionBusy { port, app } });
                return actions;
            }
            Some(RegionState::Allocated { .. }) => {}
            _ => {
                actions.push(ManagerAction::Rejected { port, reason: ManagerError::NotARegion(port) });
                return actions;
            }
        }
        Self::clear_stage(regfile, port);
        regfile.set_reset(port, false);
        self.regions[port] = RegionState::Free;
        actions.push(ManagerAction::Unload { port });
        actions.extend(self.offer(port, now, regfile));
        actions
    }

    /// Hands a free region to the longest-waiting app that still has host stages.
    fn offer(&mut self, port: usize, now: u64, regfile: &mut RegisterFile) -> Option<ManagerAction> {
        while let Some(&app) = self.waiting.front() {
            let ready = self.apps.get(&app).is_some_and(|a| !a.finished && a.host_stages() > 0);
            if !ready {
                self.waiting.pop_front();
                continue;
            }
            if self.apps[&app].expanding.is_some() {
                // one stage at a time per app; try the next in line
                let next = self.waiting.iter().copied().skip(1).find(|a| {
                    self.apps.get(a).is_some_and(|p| !p.finished && p.host_stages() > 0 && p.expanding.is_none())
                });
                return next.and_then(|other| self.expand(other, port, now, regfile).ok().flatten());
            }
            let action = self.expand(app, port, now, regfile).ok().flatten();
            if self.apps[&app].host_stages() == 0 {
                self.waiting.pop_front();
            }
            return action;
        }
        None
    }

    /// Marks an app finished and frees all its regions.
    pub fn finish(&mut self, app: u8, now: u64, regfile: &mut RegisterFile) -> Vec<ManagerAction> {
        let Some(p) = self.apps.get_mut(&app) else {
            return Vec::new();
        };
        if p.finished {
            return Vec::new();
        }
        p.finished = true;
        let mut ports = p.regions.clone();
        ports.extend(p.expanding.take());
        if let Some(&first) = p.regions.first() {
            let mask = regfile.allowed_mask(0) & !Self::onehot(first);
            regfile.set_allowed_mask(0, mask);
        }
        regfile.set_app_dest(app as usize, 0);
        self.waiting.retain(|a| *a != app);
        let mut actions = Vec::new();
        for port in ports {
            self.regions[port] = RegionState::Allocated { app, stage: 0 };
            actions.extend(self.release(port, now, regfile));
        }
        actions
    }

    /// Applies reconfiguration completions and pending rewires.
    ///
    /// `in_flight(app)` reports how many of the app's bursts are still inside
    /// the fabric; a predecessor is rewired only when it is zero.
    pub fn tick(&mut self, now: u64, regfile: &mut RegisterFile, in_flight: impl Fn(u8) -> u64) -> Vec<ManagerAction> {
        let mut actions = Vec::new();
        for port in 1..self.regions.len() {
            let RegionState::Reconfiguring { app, stage, until } = self.regions[port] else {
                continue;
            };
            if until > now {
                continue;
            }
            let Some(p) = self.apps.get(&app) else {
                continue;
            };
            let kind = p.chain[stage];
            if p.expanding == Some(port) {
                if in_flight(app) > 0 {
                    continue;
                }
                let pred = p.regions.last().copied();
                match pred {
                    Some(pred) => self.wire_stage(regfile, pred, port),
                    None => self.wire_entry(regfile, app, port),
                }
                let p = self.apps.get_mut(&app).expect("present");
                p.regions.push(port);
                p.expanding = None;
                actions.push(ManagerAction::Load { port, kind, app });
                actions.push(ManagerAction::Rewired { app, fabric_stages: p.regions.len() });
            } else {
                actions.push(ManagerAction::Load { port, kind, app });
            }
            self.regions[port] = RegionState::Allocated { app, stage };
            regfile.set_reset(port, false);
        }
        if !actions.is_empty() && self.next_deadline().is_none() {
            regfile.set_icap_status(IcapStatus::Done);
        }
        actions
    }

    /// Every non-bridge allowed mask names only regions of the same app or port 0.
    pub fn isolation_holds(&self, regfile: &RegisterFile) -> bool {
        (1..self.regions.len()).all(|port| {
            let mask = regfile.allowed_mask(port);
            let owner = match self.regions[port] {
                RegionState::Allocated { app, .. } | RegionState::Reconfiguring { app, .. } => Some(app),
                _ => None,
            };
            (0..self.regions.len()).filter(|t| mask >> t & 1 == 1).all(|t| {
                t == 0
                    || match (owner, self.regions[t]) {
                        (Some(a), RegionState::Allocated { app, .. } | RegionState::Reconfiguring { app, .. }) => a == app,
                        _ => false,
                    }
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> Vec<ModuleKind> {
        vec![ModuleKind::Multiplier(3), ModuleKind::HammingEncoder, ModuleKind::HammingDecoder]
    }

    #[test]
    fn single_region_places_multiplier_only() {
        let mut rf = RegisterFile::new(4).unwrap();
        let mut m = Manager::new(4, 100, 8);
        m.reserve(2).unwrap();
        m.reserve(3).unwrap();
        let p = m.place(1, chain3(), 0, &mut rf).unwrap();
        assert_eq!(p.placement(), vec![StagePlacement::Fabric(1), StagePlacement::Host, StagePlacement::Host]);
        assert_eq!(rf.region_dest(1), 0b0001);
        assert_eq!(rf.allowed_mask(1), 0b0001);
        assert_eq!(rf.quota(0, 1), 8);
        assert_eq!(rf.app_dest(1), 0b0010);
        assert_eq!(rf.allowed_mask(0), 0b0010);
        assert_eq!(rf.quota(1, 0), 8);
        assert!(rf.in_reset(1));
        let acts = m.tick(100, &mut rf, |_| 0);
        assert_eq!(acts, vec![ManagerAction::Load { port: 1, kind: ModuleKind::Multiplier(3), app: 1 }]);
        assert!(!rf.in_reset(1));
        assert!(m.isolation_holds(&rf));
    }

    #[test]
    fn full_chain_and_sequential_reconfig() {
        let mut rf = RegisterFile::new(4).unwrap();
        let mut m = Manager::new(4, 100, 8);
        let p = m.place(2, chain3(), 5, &mut rf).unwrap();
        assert_eq!(p.regions, vec![1, 2, 3]);
        assert_eq!((rf.region_dest(1), rf.region_dest(2), rf.region_dest(3)), (0b0100, 0b1000, 0b0001));
        assert_eq!(m.next_deadline(), Some(105));
        assert_eq!(m.tick(105, &mut rf, |_| 0).len(), 1);
        assert_eq!(m.tick(205, &mut rf, |_| 0).len(), 1);
        assert!(rf.in_reset(3));
        assert_eq!(m.tick(305, &mut rf, |_| 0).len(), 1);
        assert_eq!(rf.reset_bits(), 0);
    }

    #[test]
    fn no_regions_runs_on_host() {
        let mut rf = RegisterFile::new(2).unwrap();
        let mut m = Manager::new(2, 100, 8);
        m.reserve(1).unwrap();
        assert_eq!(m.place(0, chain3(), 0, &mut rf), Err(ManagerError::NoRegionsAvailable));
        assert_eq!(m.app(0).unwrap().host_stages(), 3);
        assert!(m.place(1, vec![], 0, &mut rf).unwrap().regions.is_empty());
    }

    #[test]
    fn release_expands_waiting_app_after_drain() {
        let mut rf = RegisterFile::new(4).unwrap();
        let mut m = Manager::new(4, 100, 8);
        m.reserve(2).unwrap();
        m.reserve(3).unwrap();
        m.place(1, chain3(), 0, &mut rf).unwrap();
        m.tick(100, &mut rf, |_| 0);
        m.release(2, 500, &mut rf);
        assert!(rf.in_reset(2));
        assert!(m.app(1).unwrap().paused());
        // predecessor untouched while the new region is programmed
        assert_eq!(rf.region_dest(1), 0b0001);
        assert!(m.tick(600, &mut rf, |_| 3).is_empty());
        assert_eq!(rf.region_dest(1), 0b0001);
        let acts = m.tick(601, &mut rf, |_| 0);
        assert!(acts.contains(&ManagerAction::Rewired { app: 1, fabric_stages: 2 }));
        assert_eq!(rf.region_dest(1), 0b0100);
        assert_eq!(rf.allowed_mask(1), 0b0100);
        assert_eq!(rf.quota(2, 1), 8);
        assert_eq!(rf.region_dest(2), 0b0001);
        assert!(!rf.in_reset(2));
        assert!(m.isolation_holds(&rf));
    }

    #[test]
    fn running_app_region_cannot_be_released() {
        let mut rf = RegisterFile::new(4).unwrap();
        let mut m = Manager::new(4, 10, 8);
        m.place(1, chain3(), 0, &mut rf).unwrap();
        let acts = m.release(1, 50, &mut rf);
        assert!(matches!(acts[..], [ManagerAction::Rejected { port: 1, .. }]));
        let acts = m.finish(1, 60, &mut rf);
        assert_eq!(acts.iter().filter(|a| matches!(a, ManagerAction::Unload { .. })).count(), 3);
        assert_eq!(m.free_regions(), vec![1, 2, 3]);
        assert_eq!(rf.allowed_mask(0), 0);
    }
}
