use serde::{Deserialize, Serialize};

use super::protocol::{node_hex, Ack, IngestRecord, RecordBody};
use crate::store::{Store, StoreError};

/// Address reserved for loopback probes. Probe records are validated and
/// acknowledged but never stored.
pub const SELF_TEST_NODE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotificationKind {
    CameraSnapshotRequested,
    SipCallInitiated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Camera(u64),
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub t_ms: u64,
    pub kind: NotificationKind,
    pub node: u64,
    /// Measurement row that holds the alarm.
    pub measurement_id: u64,
    pub target: Target,
}

/// Stand-in for the camera and VoIP side: every event is only recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NotificationLog {
    pub events: Vec<NotificationEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("notify expects an ALARM record")]
    NotAlarm,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Ingestion endpoint state: the store plus the notification stubs.
#[derive(Debug)]
pub struct Ingestor {
    store: Store,
    notifications: NotificationLog,
    /// Measurements at or above this magnitude² are flagged as risky.
    risk_threshold_g2: f64,
}

impl Ingestor {
    pub fn new(store: Store, risk_threshold_g2: f64) -> Self {
        Self {
            store,
            notifications: NotificationLog::default(),
            risk_threshold_g2,
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn notifications(&self) -> &NotificationLog {
        &self.notifications
    }

    pub fn into_parts(self) -> (Store, NotificationLog) {
        (self.store, self.notifications)
    }

    /// Parses and ingests one protocol line. The ack is produced only after
    /// the store append returned.
    pub fn handle_post(&mut self, line: &str) -> Result<Ack, IngestError> {
        match IngestRecord::parse(line) {
            Ok(r) => self.handle_record(&r),
            Err(_) => Ok(Ack::BadRequest),
        }
    }

    pub fn handle_record(&mut self, r: &IngestRecord) -> Result<Ack, IngestError> {
        if r.node == SELF_TEST_NODE {
            return Ok(Ack::Ok);
        }
        let Some(node) = self.store.node_by_address(&node_hex(r.node)) else {
            return Ok(Ack::UnknownNode);
        };
        let node_id = node.id;
        if self.store.measurement_by_seq(node_id, r.seq).is_some() {
            return Ok(Ack::OkDuplicate);
        }
        let (values, risk) = match r.body {
            RecordBody::Data { x, y, z } => {
                (vec![x, y, z], x * x + y * y + z * z >= self.risk_threshold_g2)
            }
            RecordBody::Alarm { code } => (vec![code as f64], true),
        };
        let mid = self
            .store
            .insert_measurement(node_id, r.t_ms, &values, risk, Some(r.seq))?;
        if r.is_alarm() {
            self.notify(r, mid)?;
        }
        Ok(Ack::Ok)
    }

    /// Requests a snapshot and then a call for an alarm, targeting the
    /// camera in the carrier's room when one can be found.
    pub fn notify(&mut self, r: &IngestRecord, measurement_id: u64) -> Result<(), IngestError> {
        if !r.is_alarm() {
            return Err(IngestError::NotAlarm);
        }
        let camera = self
            .store
            .node_by_address(&node_hex(r.node))
            .map(|n| n.id)
            .and_then(|id| self.store.resolve_alarm_targets(id).ok().flatten())
            .and_then(|t| t.camera_id);
        let target = camera.map_or(Target::Unresolved, Target::Camera);
        for kind in [
            NotificationKind::CameraSnapshotRequested,
            NotificationKind::SipCallInitiated,
        ] {
            self.notifications.events.push(NotificationEvent {
                t_ms: r.t_ms,
                kind,
                node: r.node,
                measurement_id,
                target,
            });
        }
        Ok(())
    }
}
