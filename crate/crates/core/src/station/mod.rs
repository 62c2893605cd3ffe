//! Base station and server side of the prototype.
//!
//! Node decisions become [`RadioFrame`]s, the base station turns each frame
//! into an [`IngestRecord`] line, and the endpoint persists records into the
//! [`store`](crate::store) and raises camera/call notifications for alarms.

mod frame;
mod ingest;
mod protocol;
mod server;

pub use frame::{FrameError, Payload, RadioFrame, ALARM_FRAME_LEN, DATA_FRAME_LEN, HEADER_LEN};
pub use ingest::{
    IngestError, Ingestor, NotificationEvent, NotificationKind, NotificationLog, Target,
    SELF_TEST_NODE,
};
pub use protocol::{forward, node_hex, Ack, IngestRecord, ProtocolError, RecordBody};
pub use server::{
    post_lines, self_test, self_test_with_timeout, serve, ClientError, IngestQueue, SelfTest,
    ServerHandle, DEFAULT_PORT, SELF_TEST_TIMEOUT,
};

use crate::node::Decision;
use crate::store::{Camera, Entity, Person, PersonRoom, Room, SensorNode, SensorType, Store, StoreError};

/// Frame the node radio would emit for a decision; `None` for silence.
pub fn frame_for(node_address: u64, seq: u32, t_ms: u64, decision: &Decision) -> Option<RadioFrame> {
    let payload = match decision {
        Decision::TransmitData(s) => Payload::Data {
            x: s.ax as f32,
            y: s.ay as f32,
            z: s.az as f32,
        },
        Decision::TransmitAlarm(code) => Payload::Alarm { code: *code },
        Decision::Silent => return None,
    };
    Some(RadioFrame {
        node_address,
        seq,
        t_ms,
        payload,
    })
}

/// Ids created by [`provision_home`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provisioned {
    pub node_id: u64,
    pub person_id: u64,
    pub room_id: u64,
    pub camera_id: u64,
}

/// Registers an accelerometer node carried by one person who lives in one
/// room watched by one camera. Idempotent for the node address.
pub fn provision_home(store: &mut Store, node_address: u64) -> Result<Provisioned, StoreError> {
    let type_id = store.upsert(Entity::SensorType(SensorType {
        id: 0,
        description: "accelerometer".into(),
    }))?;
    let existing = store.node_by_address(&node_hex(node_address)).cloned();
    let person_id = match existing.as_ref().and_then(|n| n.person_id) {
        Some(p) => p,
        None => store.upsert(Entity::Person(Person {
            id: 0,
            first_name: "Resident".into(),
            last_name: node_hex(node_address),
        }))?,
    };
    let node_id = store.upsert(Entity::SensorNode(SensorNode {
        id: existing.map_or(0, |n| n.id),
        ieee_address: node_hex(node_address),
        name: "body node".into(),
        type_id,
        person_id: Some(person_id),
    }))?;
    if let Some(t) = store.resolve_alarm_targets(node_id)? {
        if let (Some(room_id), Some(camera_id)) = (t.room_id, t.camera_id) {
            return Ok(Provisioned {
                node_id,
                person_id,
                room_id,
                camera_id,
            });
        }
    }
    let room_id = store.upsert(Entity::Room(Room {
        id: 0,
        name: "living room".into(),
    }))?;
    store.upsert(Entity::PersonRoom(PersonRoom {
        id: 0,
        person_id,
        room_id,
    }))?;
    let camera_id = store.upsert(Entity::Camera(Camera {
        id: 0,
        name: "living room cam".into(),
        ip: "192.168.0.20".into(),
        url: "http://192.168.0.20/snapshot.jpg".into(),
        room_id: Some(room_id),
    }))?;
    Ok(Provisioned {
        node_id,
        person_id,
        room_id,
        camera_id,
    })
}
