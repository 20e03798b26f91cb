use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PrivacyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Local,
    Global,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Local => "local",
            EventKind::Global => "global",
        })
    }
}

/// Who injected the noise of a release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    EdgeServer(usize),
    Device(usize),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::EdgeServer(c) => write!(f, "edge server {c}"),
            Entity::Device(i) => write!(f, "device {i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub t: usize,
    pub k: usize,
    pub tier: Tier,
    pub event: EventKind,
    pub subnet: usize,
    /// Set for device-tier releases.
    pub device: Option<usize>,
    pub sigma: f64,
    pub sensitivity: f64,
}

impl Release {
    pub fn entity(&self) -> Entity {
        match (self.tier, self.device) {
            (Tier::Device, Some(i)) => Entity::Device(i),
            _ => Entity::EdgeServer(self.subnet),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LedgerRepr {
    planned_local: usize,
    planned_global: usize,
    releases: Vec<Release>,
}

/// Append-only record of noisy releases, bounded by the planned counts the
/// noise was composed over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LedgerRepr", into = "LedgerRepr")]
pub struct PrivacyLedger {
    planned_local: usize,
    planned_global: usize,
    releases: Vec<Release>,
    counts: BTreeMap<(Entity, EventKind), usize>,
}

impl PrivacyLedger {
    pub fn new(planned_local: usize, planned_global: usize) -> Self {
        Self { planned_local, planned_global, releases: Vec::new(), counts: BTreeMap::new() }
    }

    pub fn planned(&self, event: EventKind) -> usize {
        match event {
            EventKind::Local => self.planned_local,
            EventKind::Global => self.planned_global,
        }
    }

    /// Append `release`, refusing any release beyond the planned count for
    /// its entity and event class.
    pub fn record(&mut self, release: Release) -> Result<usize, PrivacyError> {
        let key = (release.entity(), release.event);
        let planned = self.planned(release.event);
        let count = self.counts.entry(key).or_insert(0);
        if *count >= planned {
            return Err(PrivacyError::OverBudget { entity: key.0, event: key.1, planned });
        }
        *count += 1;
        self.releases.push(release);
        Ok(*count)
    }

    pub fn releases(&self) -> &[Release] {
        &self.releases
    }

    pub fn len(&self) -> usize {
        self.releases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.releases.is_empty()
    }

    pub fn entity_count(&self, entity: Entity, event: EventKind) -> usize {
        self.counts.get(&(entity, event)).copied().unwrap_or(0)
    }

    /// Number of `event` aggregations subnet `subnet` has released, counting
    /// each instant once whichever tier injected the noise.
    pub fn event_count(&self, subnet: usize, event: EventKind) -> usize {
        let mut last = None;
        let mut n = 0;
        for r in self.releases.iter().filter(|r| r.subnet == subnet && r.event == event) {
            if last != Some(r.t) {
                n += 1;
                last = Some(r.t);
            }
        }
        n
    }
}

impl TryFrom<LedgerRepr> for PrivacyLedger {
    type Error = PrivacyError;
    fn try_from(repr: LedgerRepr) -> Result<Self, Self::Error> {
        let mut ledger = PrivacyLedger::new(repr.planned_local, repr.planned_global);
        for r in repr.releases {
            ledger.record(r)?;
        }
        Ok(ledger)
    }
}

impl From<PrivacyLedger> for LedgerRepr {
    fn from(l: PrivacyLedger) -> Self {
        LedgerRepr { planned_local: l.planned_local, planned_global: l.planned_global, releases: l.releases }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local(t: usize, subnet: usize) -> Release {
        Release {
            t,
            k: 0,
            tier: Tier::Edge,
            event: EventKind::Local,
            subnet,
            device: None,
            sigma: 0.1,
            sensitivity: 0.08,
        }
    }

    #[test]
    fn first_release_counts_one() {
        let mut l = PrivacyLedger::new(3, 1);
        assert_eq!(l.record(local(5, 0)).unwrap(), 1);
        assert_eq!(l.event_count(0, EventKind::Local), 1);
    }

    #[test]
    fn fourth_local_release_is_refused() {
        let mut l = PrivacyLedger::new(3, 1);
        for t in [5, 10, 15] {
            l.record(local(t, 0)).unwrap();
        }
        let err = l.record(local(25, 0)).unwrap_err();
        assert!(matches!(err, PrivacyError::OverBudget { planned: 3, .. }));
        assert_eq!(l.len(), 3);
        // Other subnets keep their own allowance.
        assert!(l.record(local(5, 1)).is_ok());
    }

    #[test]
    fn device_releases_count_per_device() {
        let mut l = PrivacyLedger::new(1, 1);
        for i in 0..3 {
            l.record(Release { tier: Tier::Device, device: Some(i), ..local(4, 0) }).unwrap();
        }
        assert_eq!(l.event_count(0, EventKind::Local), 1);
        assert_eq!(l.entity_count(Entity::Device(2), EventKind::Local), 1);
        assert!(l.record(Release { tier: Tier::Device, device: Some(2), ..local(8, 0) }).is_err());
    }

    #[test]
    fn json_round_trip_rechecks_counts() {
        let mut l = PrivacyLedger::new(2, 1);
        l.record(local(1, 0)).unwrap();
        let json = serde_json::to_string(&l).unwrap();
        let back: PrivacyLedger = serde_json::from_str(&json).unwrap();
        assert_eq!(back, l);

        let tampered = json.replace("\"planned_local\":2", "\"planned_local\":0");
        assert!(serde_json::from_str::<PrivacyLedger>(&tampered).is_err());
    }
}
