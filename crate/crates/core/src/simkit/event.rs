use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::Millis;

/// Event kinds in tie-break order: at equal timestamps events sort by this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    RequestArrival,
    Launch,
    ArrivePickup,
    ServiceComplete,
    ArriveAXP,
    PatientDropoff,
    PatientPickup,
    RefuelComplete,
    ArriveFacility,
    Delivered,
}

impl EventKind {
    /// Kinds at which the decision process wakes up.
    pub fn is_epoch(self) -> bool {
        matches!(
            self,
            EventKind::RequestArrival | EventKind::Delivered | EventKind::RefuelComplete
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::RequestArrival => "RequestArrival",
            EventKind::Launch => "Launch",
            EventKind::ArrivePickup => "ArrivePickup",
            EventKind::ServiceComplete => "ServiceComplete",
            EventKind::ArriveAXP => "ArriveAXP",
            EventKind::PatientDropoff => "PatientDropoff",
            EventKind::PatientPickup => "PatientPickup",
            EventKind::RefuelComplete => "RefuelComplete",
            EventKind::ArriveFacility => "ArriveFacility",
            EventKind::Delivered => "Delivered",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One line of the event log. Field order is the sort order and the JSON field order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: Millis,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aircraft: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watercraft: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facility: Option<String>,
}

impl Event {
    pub fn new(t_ms: Millis, kind: EventKind) -> Self {
        Event {
            t_ms,
            kind,
            aircraft: None,
            request: None,
            watercraft: None,
            facility: None,
        }
    }

    pub fn aircraft(mut self, id: &str) -> Self {
        self.aircraft = Some(id.to_string());
        self
    }

    pub fn request(mut self, id: &str) -> Self {
        self.request = Some(id.to_string());
        self
    }

    pub fn watercraft(mut self, id: &str) -> Self {
        self.watercraft = Some(id.to_string());
        self
    }

    pub fn facility(mut self, id: &str) -> Self {
        self.facility = Some(id.to_string());
        self
    }
}

/// Serializes a log as JSON Lines, one event per line with a trailing newline.
pub fn to_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<Event>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
