use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Spawn,
    QueueHead,
    Release { a: Option<VehicleId>, b: Option<VehicleId> },
    EnterRegion { a: Option<VehicleId>, b: Option<VehicleId>, a_x: Option<f64>, b_x: Option<f64> },
    Merge { a: Option<VehicleId>, b: Option<VehicleId>, s_a: Option<f64>, s_b: Option<f64>, lead_gap: Option<f64> },
    Fail,
    EnhancedBrakeOn,
    EnhancedBrakeOff,
    Despawn { delay: f64 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::QueueHead => "queue_head",
            EventKind::Release { .. } => "release",
            EventKind::EnterRegion { .. } => "enter_region",
            EventKind::Merge { .. } => "merge",
            EventKind::Fail => "fail",
            EventKind::EnhancedBrakeOn => "enhanced_brake_on",
            EventKind::EnhancedBrakeOff => "enhanced_brake_off",
            EventKind::Despawn { .. } => "despawn",
        }
    }
}

/// One log record: `(time, vehicle id, event kind, x, v)` plus kind-specific
/// fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub id: VehicleId,
    #[serde(flatten)]
    pub kind: EventKind,
    pub x: f64,
    pub v: f64,
}

/// Append-only event record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    enabled: bool,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        Self { events: Vec::new(), enabled }
    }

    pub fn push(&mut self, event: Event) {
        if self.enabled {
            self.events.push(event);
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            *out.entry(e.kind.name().to_string()).or_insert(0) += 1;
        }
        out
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Vec<Event>, serde_json::Error> {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_lines_carry_required_fields() {
        let mut log = EventLog::new(true);
        log.push(Event { t: 1.5, id: VehicleId(3), kind: EventKind::Spawn, x: -1500.0, v: 38.0 });
        log.push(Event {
            t: 2.0,
            id: VehicleId(4),
            kind: EventKind::Merge { a: Some(VehicleId(1)), b: None, s_a: Some(3.0), s_b: None, lead_gap: Some(12.0) },
            x: 40.0,
            v: 28.0,
        });
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["t", "id", "event", "x", "v"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first["event"], "spawn");
        assert_eq!(EventLog::read_jsonl(&text).unwrap(), log.events());
        assert_eq!(log.counts()["merge"], 1);
    }

    #[test]
    fn disabled_log_stays_empty() {
        let mut log = EventLog::new(false);
        log.push(Event { t: 0.0, id: VehicleId(0), kind: EventKind::Fail, x: 0.0, v: 0.0 });
        assert!(log.is_empty());
    }
}
