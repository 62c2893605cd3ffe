//! File-backed entity store for nodes, measurements, people, rooms and
//! cameras.
//!
//! Every entity has its own append-only log (`<Entity>.log`) of `key=value`
//! lines; the in-memory index is rebuilt by replaying the logs on open, with
//! later lines for the same id replacing earlier ones. A `MANIFEST` file
//! pins the schema version.
//!
//! Dependent rows are checked on every write: a node needs its sensor type,
//! a measurement its node, a data value its measurement and an image its
//! camera. A failed write leaves both the index and the logs' visible state
//! untouched.

mod record;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use record::{Record, RecordWriter};

pub const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "MANIFEST";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("integrity violation in {kind}: missing {missing}")]
    Integrity { kind: EntityKind, missing: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{file}:{line}: {reason}")]
    Corrupt {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("store schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    SensorTypes,
    SensorNodes,
    SensorMeasurements,
    SensorData,
    Persons,
    Rooms,
    PersonRoom,
    Cameras,
    CameraImages,
}

impl EntityKind {
    /// Replay order: parents before children.
    pub const ALL: [EntityKind; 9] = [
        EntityKind::SensorTypes,
        EntityKind::Persons,
        EntityKind::Rooms,
        EntityKind::PersonRoom,
        EntityKind::SensorNodes,
        EntityKind::Cameras,
        EntityKind::CameraImages,
        EntityKind::SensorMeasurements,
        EntityKind::SensorData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::SensorTypes => "SensorTypes",
            EntityKind::SensorNodes => "SensorNodes",
            EntityKind::SensorMeasurements => "SensorMeasurements",
            EntityKind::SensorData => "SensorData",
            EntityKind::Persons => "Persons",
            EntityKind::Rooms => "Rooms",
            EntityKind::PersonRoom => "PersonRoom",
            EntityKind::Cameras => "Cameras",
            EntityKind::CameraImages => "CameraImages",
        }
    }

    /// Column order used by the CSV dump.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            EntityKind::SensorTypes => &["id", "description"],
            EntityKind::SensorNodes => &["id", "ieee_address", "name", "type_id", "person_id"],
            EntityKind::SensorMeasurements => &["id", "timestamp", "risk", "node_id", "seq"],
            EntityKind::SensorData => &["id", "value", "measurement_id"],
            EntityKind::Persons => &["id", "first_name", "last_name"],
            EntityKind::Rooms => &["id", "name"],
            EntityKind::PersonRoom => &["id", "person_id", "room_id"],
            EntityKind::Cameras => &["id", "name", "ip", "url", "room_id"],
            EntityKind::CameraImages => &["id", "timestamp", "image_data", "camera_id"],
        }
    }

    fn file_name(self) -> String {
        format!("{}.log", self.name())
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown entity {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorType {
    pub id: u64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorNode {
    pub id: u64,
    pub ieee_address: String,
    pub name: String,
    pub type_id: u64,
    /// Person carrying the node, if any.
    pub person_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub id: u64,
    pub node_id: u64,
    /// Milliseconds; not unique.
    pub timestamp: u64,
    pub risk: bool,
    /// Radio sequence number of the record that produced this row.
    pub seq: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDatum {
    pub id: u64,
    pub measurement_id: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    pub id: u64,
    pub first_name: String,
    pub last_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRoom {
    pub id: u64,
    pub person_id: u64,
    pub room_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Camera {
    pub id: u64,
    pub name: String,
    pub ip: String,
    pub url: String,
    pub room_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraImage {
    pub id: u64,
    pub camera_id: u64,
    pub timestamp: u64,
    pub data: Vec<u8>,
}

/// A row for [`Store::upsert`]. An `id` of 0 asks the store to find the row
/// by natural key or assign a fresh id.
#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    SensorType(SensorType),
    SensorNode(SensorNode),
    Person(Person),
    Room(Room),
    PersonRoom(PersonRoom),
    Camera(Camera),
    CameraImage(CameraImage),
}

impl Entity {
    pub fn kind(&self) -> EntityKind {
        match self {
            Entity::SensorType(_) => EntityKind::SensorTypes,
            Entity::SensorNode(_) => EntityKind::SensorNodes,
            Entity::Person(_) => EntityKind::Persons,
            Entity::Room(_) => EntityKind::Rooms,
            Entity::PersonRoom(_) => EntityKind::PersonRoom,
            Entity::Camera(_) => EntityKind::Cameras,
            Entity::CameraImage(_) => EntityKind::CameraImages,
        }
    }

    fn id_mut(&mut self) -> &mut u64 {
        match self {
            Entity::SensorType(e) => &mut e.id,
            Entity::SensorNode(e) => &mut e.id,
            Entity::Person(e) => &mut e.id,
            Entity::Room(e) => &mut e.id,
            Entity::PersonRoom(e) => &mut e.id,
            Entity::Camera(e) => &mut e.id,
            Entity::CameraImage(e) => &mut e.id,
        }
    }
}

/// A measurement with its data values in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub measurement: Measurement,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmTargets {
    pub person_id: u64,
    pub room_id: Option<u64>,
    pub camera_id: Option<u64>,
}

fn check_len(field: &str, value: &str, max: usize) -> Result<(), StoreError> {
    let n = value.chars().count();
    if n > max {
        return Err(StoreError::Validation(format!(
            "{field} is {n} characters, limit is {max}"
        )));
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
struct Tables {
    types: BTreeMap<u64, SensorType>,
    nodes: BTreeMap<u64, SensorNode>,
    measurements: BTreeMap<u64, Measurement>,
    data: BTreeMap<u64, SensorDatum>,
    persons: BTreeMap<u64, Person>,
    rooms: BTreeMap<u64, Room>,
    person_rooms: BTreeMap<u64, PersonRoom>,
    cameras: BTreeMap<u64, Camera>,
    images: BTreeMap<u64, CameraImage>,

    type_by_description: HashMap<String, u64>,
    node_by_address: HashMap<String, u64>,
    person_room_by_pair: HashMap<(u64, u64), u64>,
    by_node_time: HashMap<u64, BTreeSet<(u64, u64)>>,
    data_by_measurement: HashMap<u64, Vec<u64>>,
    by_node_seq: HashMap<(u64, u32), u64>,
    next_id: HashMap<EntityKind, u64>,
}

impl Tables {
    fn bump(&mut self, kind: EntityKind, id: u64) {
        let next = self.next_id.entry(kind).or_insert(1);
        *next = (*next).max(id + 1);
    }

    fn fresh_id(&self, kind: EntityKind) -> u64 {
        self.next_id.get(&kind).copied().unwrap_or(1)
    }

    fn integrity(kind: EntityKind, missing: String) -> StoreError {
        StoreError::Integrity { kind, missing }
    }

    /// Checks an entity against limits and foreign keys without touching
    /// any table.
    fn validate(&self, e: &Entity) -> Result<(), StoreError> {
        let kind = e.kind();
        match e {
            Entity::SensorType(t) => check_len("description", &t.description, 64),
            Entity::SensorNode(n) => {
                check_len("ieee_address", &n.ieee_address, 64)?;
                check_len("name", &n.name, 64)?;
                if n.ieee_address.is_empty() {
                    return Err(StoreError::Validation("ieee_address must not be empty".into()));
                }
                if !self.types.contains_key(&n.type_id) {
                    return Err(Self::integrity(kind, format!("SensorTypes id {}", n.type_id)));
                }
                if let Some(p) = n.person_id {
                    if !self.persons.contains_key(&p) {
                        return Err(Self::integrity(kind, format!("Persons id {p}")));
                    }
                }
                if let Some(&other) = self.node_by_address.get(&n.ieee_address) {
                    if n.id != 0 && other != n.id {
                        return Err(StoreError::Validation(format!(
                            "ieee_address {} already belongs to node {other}",
                            n.ieee_address
                        )));
                    }
                }
                Ok(())
            }
            Entity::Person(p) => {
                check_len("first_name", &p.first_name, 64)?;
                check_len("last_name", &p.last_name, 64)
            }
            Entity::Room(r) => check_len("name", &r.name, 64),
            Entity::PersonRoom(pr) => {
                if !self.persons.contains_key(&pr.person_id) {
                    return Err(Self::integrity(kind, format!("Persons id {}", pr.person_id)));
                }
                if !self.rooms.contains_key(&pr.room_id) {
                    return Err(Self::integrity(kind, format!("Rooms id {}", pr.room_id)));
                }
                Ok(())
            }
            Entity::Camera(c) => {
                check_len("name", &c.name, 64)?;
                check_len("ip", &c.ip, 16)?;
                check_len("url", &c.url, 128)?;
                if let Some(r) = c.room_id {
                    if !self.rooms.contains_key(&r) {
                        return Err(Self::integrity(kind, format!("Rooms id {r}")));
                    }
                }
                Ok(())
            }
            Entity::CameraImage(i) => {
                if !self.cameras.contains_key(&i.camera_id) {
                    return Err(Self::integrity(kind, format!("Cameras id {}", i.camera_id)));
                }
                Ok(())
            }
        }
    }

    /// Resolves `id == 0` through natural keys or a fresh id.
    fn resolve_id(&self, e: &mut Entity) {
        let existing = match &*e {
            Entity::SensorType(t) => self.type_by_description.get(&t.description).copied(),
            Entity::SensorNode(n) => self.node_by_address.get(&n.ieee_address).copied(),
            Entity::PersonRoom(pr) => self
                .person_room_by_pair
                .get(&(pr.person_id, pr.room_id))
                .copied(),
            _ => None,
        };
        let kind = e.kind();
        let id = e.id_mut();
        if *id == 0 {
            *id = existing.unwrap_or_else(|| self.fresh_id(kind));
        }
    }

    fn apply(&mut self, e: Entity) {
        let kind = e.kind();
        match e {
            Entity::SensorType(t) => {
                self.bump(kind, t.id);
                if let Some(old) = self.types.get(&t.id) {
                    self.type_by_description.remove(&old.description);
                }
                self.type_by_description.insert(t.description.clone(), t.id);
                self.types.insert(t.id, t);
            }
            Entity::SensorNode(n) => {
                self.bump(kind, n.id);
                if let Some(old) = self.nodes.get(&n.id) {
                    self.node_by_address.remove(&old.ieee_address);
                }
                self.node_by_address.insert(n.ieee_address.clone(), n.id);
                self.nodes.insert(n.id, n);
            }
            Entity::Person(p) => {
                self.bump(kind, p.id);
                self.persons.insert(p.id, p);
            }
            Entity::Room(r) => {
                self.bump(kind, r.id);
                self.rooms.insert(r.id, r);
            }
            Entity::PersonRoom(pr) => {
                self.bump(kind, pr.id);
                if let Some(old) = self.person_rooms.get(&pr.id) {
                    self.person_room_by_pair.remove(&(old.person_id, old.room_id));
                }
                self.person_room_by_pair.insert((pr.person_id, pr.room_id), pr.id);
                self.person_rooms.insert(pr.id, pr);
            }
            Entity::Camera(c) => {
                self.bump(kind, c.id);
                self.cameras.insert(c.id, c);
            }
            Entity::CameraImage(i) => {
                self.bump(kind, i.id);
                self.images.insert(i.id, i);
            }
        }
    }

    fn apply_measurement(&mut self, m: Measurement) {
        self.bump(EntityKind::SensorMeasurements, m.id);
        self.by_node_time
            .entry(m.node_id)
            .or_default()
            .insert((m.timestamp, m.id));
        if let Some(seq) = m.seq {
            self.by_node_seq.insert((m.node_id, seq), m.id);
        }
        self.data_by_measurement.entry(m.id).or_default();
        self.measurements.insert(m.id, m);
    }

    fn apply_datum(&mut self, d: SensorDatum) {
        self.bump(EntityKind::SensorData, d.id);
        self.data_by_measurement
            .entry(d.measurement_id)
            .or_default()
            .push(d.id);
        self.data.insert(d.id, d);
    }
}

fn encode(e: &Entity) -> String {
    match e {
        Entity::SensorType(t) => RecordWriter::new()
            .field("id", t.id)
            .field("description", &t.description)
            .finish(),
        Entity::SensorNode(n) => RecordWriter::new()
            .field("id", n.id)
            .field("ieee_address", &n.ieee_address)
            .field("name", &n.name)
            .field("type_id", n.type_id)
            .opt("person_id", n.person_id)
            .finish(),
        Entity::Person(p) => RecordWriter::new()
            .field("id", p.id)
            .field("first_name", &p.first_name)
            .field("last_name", &p.last_name)
            .finish(),
        Entity::Room(r) => RecordWriter::new()
            .field("id", r.id)
            .field("name", &r.name)
            .finish(),
        Entity::PersonRoom(pr) => RecordWriter::new()
            .field("id", pr.id)
            .field("person_id", pr.person_id)
            .field("room_id", pr.room_id)
            .finish(),
        Entity::Camera(c) => RecordWriter::new()
            .field("id", c.id)
            .field("name", &c.name)
            .field("ip", &c.ip)
            .field("url", &c.url)
            .opt("room_id", c.room_id)
            .finish(),
        Entity::CameraImage(i) => RecordWriter::new()
            .field("id", i.id)
            .field("timestamp", i.timestamp)
            .field("image_data", hex::encode(&i.data))
            .field("camera_id", i.camera_id)
            .finish(),
    }
}

fn encode_measurement(m: &Measurement) -> String {
    RecordWriter::new()
        .field("id", m.id)
        .field("timestamp", m.timestamp)
        .field("risk", m.risk)
        .field("node_id", m.node_id)
        .opt("seq", m.seq)
        .finish()
}

fn encode_datum(d: &SensorDatum) -> String {
    RecordWriter::new()
        .field("id", d.id)
        .field("value", d.value)
        .field("measurement_id", d.measurement_id)
        .finish()
}

enum Parsed {
    Entity(Entity),
    Measurement(Measurement),
    Datum(SensorDatum),
}

fn decode(kind: EntityKind, r: &Record) -> Result<Parsed, String> {
    Ok(match kind {
        EntityKind::SensorTypes => Parsed::Entity(Entity::SensorType(SensorType {
            id: r.get("id")?,
            description: r.str("description")?,
        })),
        EntityKind::SensorNodes => Parsed::Entity(Entity::SensorNode(SensorNode {
            id: r.get("id")?,
            ieee_address: r.str("ieee_address")?,
            name: r.str("name")?,
            type_id: r.get("type_id")?,
            person_id: r.opt("person_id")?,
        })),
        EntityKind::Persons => Parsed::Entity(Entity::Person(Person {
            id: r.get("id")?,
            first_name: r.str("first_name")?,
            last_name: r.str("last_name")?,
        })),
        EntityKind::Rooms => Parsed::Entity(Entity::Room(Room {
            id: r.get("id")?,
            name: r.str("name")?,
        })),
        EntityKind::PersonRoom => Parsed::Entity(Entity::PersonRoom(PersonRoom {
            id: r.get("id")?,
            person_id: r.get("person_id")?,
            room_id: r.get("room_id")?,
        })),
        EntityKind::Cameras => Parsed::Entity(Entity::Camera(Camera {
            id: r.get("id")?,
            name: r.str("name")?,
            ip: r.str("ip")?,
            url: r.str("url")?,
            room_id: r.opt("room_id")?,
        })),
        EntityKind::CameraImages => Parsed::Entity(Entity::CameraImage(CameraImage {
            id: r.get("id")?,
            camera_id: r.get("camera_id")?,
            timestamp: r.get("timestamp")?,
            data: hex::decode(r.str("image_data")?).map_err(|e| format!("image_data: {e}"))?,
        })),
        EntityKind::SensorMeasurements => Parsed::Measurement(Measurement {
            id: r.get("id")?,
            node_id: r.get("node_id")?,
            timestamp: r.get("timestamp")?,
            risk: r.get("risk")?,
            seq: r.opt("seq")?,
        }),
        EntityKind::SensorData => Parsed::Datum(SensorDatum {
            id: r.get("id")?,
            measurement_id: r.get("measurement_id")?,
            value: r.get("value")?,
        }),
    })
}

#[derive(Debug)]
enum Backend {
    Memory,
    Dir {
        root: PathBuf,
        files: HashMap<EntityKind, File>,
    },
}

impl Backend {
    fn append(&mut self, kind: EntityKind, bytes: &str) -> io::Result<()> {
        match self {
            Backend::Memory => Ok(()),
            Backend::Dir { root, files } => {
                let file = match files.entry(kind) {
                    std::collections::hash_map::Entry::Occupied(o) => o.into_mut(),
                    std::collections::hash_map::Entry::Vacant(v) => v.insert(
                        OpenOptions::new()
                            .create(true)
                            .append(true)
                            .open(root.join(kind.file_name()))?,
                    ),
                };
                file.write_all(bytes.as_bytes())?;
                file.flush()
            }
        }
    }
}

#[derive(Debug)]
pub struct Store {
    tables: Tables,
    backend: Backend,
    orphans_dropped: usize,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            tables: Tables::default(),
            backend: Backend::Memory,
            orphans_dropped: 0,
        }
    }

    /// Opens (or creates) a store directory and replays its logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = dir.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let manifest = root.join(MANIFEST);
        if manifest.exists() {
            let text = fs::read_to_string(&manifest)?;
            let found = text
                .lines()
                .find_map(|l| l.strip_prefix("schema_version="))
                .unwrap_or("")
                .trim()
                .to_string();
            if found != SCHEMA_VERSION.to_string() {
                return Err(StoreError::SchemaVersion { found });
            }
        } else {
            fs::write(&manifest, format!("schema_version={SCHEMA_VERSION}\n"))?;
        }

        let mut store = Self {
            tables: Tables::default(),
            backend: Backend::Memory,
            orphans_dropped: 0,
        };
        for kind in EntityKind::ALL {
            let path = root.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let mut bytes = fs::read(&path)?;
            // a torn final line from an interrupted append is discarded
            if let Some(pos) = bytes.iter().rposition(|&b| b == b'\n') {
                if pos + 1 != bytes.len() {
                    bytes.truncate(pos + 1);
                    OpenOptions::new().write(true).open(&path)?.set_len(bytes.len() as u64)?;
                }
            } else if !bytes.is_empty() {
                bytes.clear();
                OpenOptions::new().write(true).open(&path)?.set_len(0)?;
            }
            let text = String::from_utf8(bytes).map_err(|e| StoreError::Corrupt {
                file: kind.file_name(),
                line: 0,
                reason: e.to_string(),
            })?;
            for (i, line) in text.lines().enumerate() {
                store.replay_line(kind, i + 1, line)?;
            }
        }
        store.backend = Backend::Dir {
            root,
            files: HashMap::new(),
        };
        Ok(store)
    }

    fn replay_line(&mut self, kind: EntityKind, lineno: usize, line: &str) -> Result<(), StoreError> {
        let corrupt = |reason: String| StoreError::Corrupt {
            file: kind.file_name(),
            line: lineno,
            reason,
        };
        let record = Record::parse(line).map_err(corrupt)?;
        match decode(kind, &record).map_err(corrupt)? {
            Parsed::Entity(e) => {
                self.tables.validate(&e).map_err(|e| corrupt(e.to_string()))?;
                self.tables.apply(e);
            }
            Parsed::Measurement(m) => {
                if !self.tables.nodes.contains_key(&m.node_id) {
                    return Err(corrupt(format!("measurement {} has no node {}", m.id, m.node_id)));
                }
                self.tables.apply_measurement(m);
            }
            Parsed::Datum(d) => {
                // data rows are written before their measurement; without it
                // they belong to an insert that never completed
                if self.tables.measurements.contains_key(&d.measurement_id) {
                    self.tables.apply_datum(d);
                } else {
                    self.tables.bump(EntityKind::SensorData, d.id);
                    self.orphans_dropped += 1;
                }
            }
        }
        Ok(())
    }

    /// Data rows discarded on open because their measurement never landed.
    pub fn orphans_dropped(&self) -> usize {
        self.orphans_dropped
    }

    /// Inserts or replaces a row and returns its id.
    pub fn upsert(&mut self, mut entity: Entity) -> Result<u64, StoreError> {
        self.tables.resolve_id(&mut entity);
        self.tables.validate(&entity)?;
        let id = *entity.id_mut();
        self.backend.append(entity.kind(), &encode(&entity))?;
        self.tables.apply(entity);
        Ok(id)
    }

    /// Stores one measurement and one data row per value.
    pub fn insert_measurement(
        &mut self,
        node_id: u64,
        timestamp: u64,
        values: &[f64],
        risk: bool,
        seq: Option<u32>,
    ) -> Result<u64, StoreError> {
        if !self.tables.nodes.contains_key(&node_id) {
            return Err(StoreError::Integrity {
                kind: EntityKind::SensorMeasurements,
                missing: format!("SensorNodes id {node_id}"),
            });
        }
        if values.is_empty() {
            return Err(StoreError::Validation(
                "a measurement needs at least one data value".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(StoreError::Validation(format!("non-finite data value {v}")));
        }
        if let Some(s) = seq {
            if self.tables.by_node_seq.contains_key(&(node_id, s)) {
                return Err(StoreError::Validation(format!(
                    "node {node_id} already has a measurement with seq {s}"
                )));
            }
        }

        let mid = self.tables.fresh_id(EntityKind::SensorMeasurements);
        let first_data = self.tables.fresh_id(EntityKind::SensorData);
        let data: Vec<SensorDatum> = values
            .iter()
            .enumerate()
            .map(|(i, v)| SensorDatum {
                id: first_data + i as u64,
                measurement_id: mid,
                value: *v,
            })
            .collect();
        let m = Measurement {
            id: mid,
            node_id,
            timestamp,
            risk,
            seq,
        };

        let data_lines: String = data.iter().map(encode_datum).collect();
        self.backend.append(EntityKind::SensorData, &data_lines)?;
        self.backend
            .append(EntityKind::SensorMeasurements, &encode_measurement(&m))?;

        self.tables.apply_measurement(m);
        for d in data {
            self.tables.apply_datum(d);
        }
        Ok(mid)
    }

    pub fn node(&self, id: u64) -> Option<&SensorNode> {
        self.tables.nodes.get(&id)
    }

    pub fn node_by_address(&self, ieee_address: &str) -> Option<&SensorNode> {
        self.tables
            .node_by_address
            .get(ieee_address)
            .and_then(|id| self.tables.nodes.get(id))
    }

    pub fn sensor_type(&self, id: u64) -> Option<&SensorType> {
        self.tables.types.get(&id)
    }

    pub fn person(&self, id: u64) -> Option<&Person> {
        self.tables.persons.get(&id)
    }

    pub fn room(&self, id: u64) -> Option<&Room> {
        self.tables.rooms.get(&id)
    }

    pub fn camera(&self, id: u64) -> Option<&Camera> {
        self.tables.cameras.get(&id)
    }

    pub fn image(&self, id: u64) -> Option<&CameraImage> {
        self.tables.images.get(&id)
    }

    pub fn measurement(&self, id: u64) -> Option<MeasurementRow> {
        let m = self.tables.measurements.get(&id)?;
        Some(self.row(m))
    }

    pub fn measurement_by_seq(&self, node_id: u64, seq: u32) -> Option<u64> {
        self.tables.by_node_seq.get(&(node_id, seq)).copied()
    }

    fn row(&self, m: &Measurement) -> MeasurementRow {
        let values = self
            .tables
            .data_by_measurement
            .get(&m.id)
            .map(|ids| ids.iter().map(|d| self.tables.data[d].value).collect())
            .unwrap_or_default();
        MeasurementRow {
            measurement: m.clone(),
            values,
        }
    }

    pub fn count(&self, kind: EntityKind) -> usize {
        match kind {
            EntityKind::SensorTypes => self.tables.types.len(),
            EntityKind::SensorNodes => self.tables.nodes.len(),
            EntityKind::SensorMeasurements => self.tables.measurements.len(),
            EntityKind::SensorData => self.tables.data.len(),
            EntityKind::Persons => self.tables.persons.len(),
            EntityKind::Rooms => self.tables.rooms.len(),
            EntityKind::PersonRoom => self.tables.person_rooms.len(),
            EntityKind::Cameras => self.tables.cameras.len(),
            EntityKind::CameraImages => self.tables.images.len(),
        }
    }

    /// Measurements of a node with `t_from <= timestamp <= t_to`, ascending by
    /// timestamp then id.
    pub fn query_measurements(
        &self,
        node_id: u64,
        t_from: u64,
        t_to: u64,
        risk_only: bool,
    ) -> Result<Vec<MeasurementRow>, StoreError> {
        if !self.tables.nodes.contains_key(&node_id) {
            return Err(StoreError::Integrity {
                kind: EntityKind::SensorMeasurements,
                missing: format!("SensorNodes id {node_id}"),
            });
        }
        if t_from > t_to {
            return Err(StoreError::Validation(format!("t_from {t_from} > t_to {t_to}")));
        }
        let Some(index) = self.tables.by_node_time.get(&node_id) else {
            return Ok(Vec::new());
        };
        Ok(index
            .range((t_from, 0)..=(t_to, u64::MAX))
            .map(|(_, id)| &self.tables.measurements[id])
            .filter(|m| !risk_only || m.risk)
            .map(|m| self.row(m))
            .collect())
    }

    /// Follows node → carrier → carrier's rooms → cameras. Rooms are tried in
    /// ascending id order and the first one with a camera wins; if none has a
    /// camera the first room is reported without one.
    pub fn resolve_alarm_targets(&self, node_id: u64) -> Result<Option<AlarmTargets>, StoreError> {
        let node = self.tables.nodes.get(&node_id).ok_or_else(|| StoreError::Integrity {
            kind: EntityKind::SensorNodes,
            missing: format!("SensorNodes id {node_id}"),
        })?;
        let Some(person_id) = node.person_id else {
            return Ok(None);
        };
        let rooms: BTreeSet<u64> = self
            .tables
            .person_rooms
            .values()
            .filter(|pr| pr.person_id == person_id)
            .map(|pr| pr.room_id)
            .collect();
        for &room in &rooms {
            if let Some(cam) = self.tables.cameras.values().find(|c| c.room_id == Some(room)) {
                return Ok(Some(AlarmTargets {
                    person_id,
                    room_id: Some(room),
                    camera_id: Some(cam.id),
                }));
            }
        }
        Ok(Some(AlarmTargets {
            person_id,
            room_id: rooms.first().copied(),
            camera_id: None,
        }))
    }

    /// Writes one entity as CSV with a header row, rows in id order.
    pub fn dump_csv<W: Write>(&self, kind: EntityKind, out: W) -> Result<(), StoreError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| StoreError::Io(io::Error::other(e));
        w.write_record(kind.columns()).map_err(csv_err)?;
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows: Vec<Vec<String>> = match kind {
            EntityKind::SensorTypes => self
                .tables
                .types
                .values()
                .map(|t| vec![t.id.to_string(), t.description.clone()])
                .collect(),
            EntityKind::SensorNodes => self
                .tables
                .nodes
                .values()
                .map(|n| {
                    vec![
                        n.id.to_string(),
                        n.ieee_address.clone(),
                        n.name.clone(),
                        n.type_id.to_string(),
                        opt(n.person_id),
                    ]
                })
                .collect(),
            EntityKind::SensorMeasurements => self
                .tables
                .measurements
                .values()
                .map(|m| {
                    vec![
                        m.id.to_string(),
                        m.timestamp.to_string(),
                        m.risk.to_string(),
                        m.node_id.to_string(),
                        m.seq.map(|s| s.to_string()).unwrap_or_default(),
                    ]
                })
                .collect(),
            EntityKind::SensorData => self
                .tables
                .data
                .values()
                .map(|d| vec![d.id.to_string(), d.value.to_string(), d.measurement_id.to_string()])
                .collect(),
            EntityKind::Persons => self
                .tables
                .persons
                .values()
                .map(|p| vec![p.id.to_string(), p.first_name.clone(), p.last_name.clone()])
                .collect(),
            EntityKind::Rooms => self
                .tables
                .rooms
                .values()
                .map(|r| vec![r.id.to_string(), r.name.clone()])
                .collect(),
            EntityKind::PersonRoom => self
                .tables
                .person_rooms
                .values()
                .map(|pr| vec![pr.id.to_string(), pr.person_id.to_string(), pr.room_id.to_string()])
                .collect(),
            EntityKind::Cameras => self
                .tables
                .cameras
                .values()
                .map(|c| vec![c.id.to_string(), c.name.clone(), c.ip.clone(), c.url.clone(), opt(c.room_id)])
                .collect(),
            EntityKind::CameraImages => self
                .tables
                .images
                .values()
                .map(|i| {
                    vec![
                        i.id.to_string(),
                        i.timestamp.to_string(),
                        hex::encode(&i.data),
                        i.camera_id.to_string(),
                    ]
                })
                .collect(),
        };
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Verifies every foreign key and cardinality rule over the whole index.
    pub fn check_integrity(&self) -> Result<(), String> {
        let t = &self.tables;
        for n in t.nodes.values() {
            if !t.types.contains_key(&n.type_id) {
                return Err(format!("node {} lacks type {}", n.id, n.type_id));
            }
            if n.person_id.is_some_and(|p| !t.persons.contains_key(&p)) {
                return Err(format!("node {} references missing person", n.id));
            }
        }
        for m in t.measurements.values() {
            if !t.nodes.contains_key(&m.node_id) {
                return Err(format!("measurement {} lacks node {}", m.id, m.node_id));
            }
            if t.data_by_measurement.get(&m.id).is_none_or(Vec::is_empty) {
                return Err(format!("measurement {} has no data", m.id));
            }
        }
        for d in t.data.values() {
            if !t.measurements.contains_key(&d.measurement_id) {
                return Err(format!("datum {} lacks measurement {}", d.id, d.measurement_id));
            }
        }
        for pr in t.person_rooms.values() {
            if !t.persons.contains_key(&pr.person_id) || !t.rooms.contains_key(&pr.room_id) {
                return Err(format!("person-room link {} dangles", pr.id));
            }
        }
        for c in t.cameras.values() {
            if c.room_id.is_some_and(|r| !t.rooms.contains_key(&r)) {
                return Err(format!("camera {} references missing room", c.id));
            }
        }
        for i in t.images.values() {
            if !t.cameras.contains_key(&i.camera_id) {
                return Err(format!("image {} lacks camera {}", i.id, i.camera_id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accel_type(s: &mut Store) -> u64 {
        s.upsert(Entity::SensorType(SensorType {
            id: 0,
            description: "accelerometer".into(),
        }))
        .unwrap()
    }

    fn node(s: &mut Store, type_id: u64, addr: &str, person: Option<u64>) -> Result<u64, StoreError> {
        s.upsert(Entity::SensorNode(SensorNode {
            id: 0,
            ieee_address: addr.into(),
            name: "spot".into(),
            type_id,
            person_id: person,
        }))
    }

    #[test]
    fn type_then_node() {
        let mut s = Store::in_memory();
        let t = accel_type(&mut s);
        let n = node(&mut s, t, "0014.4F01.0000.1A2B", None).unwrap();
        assert_eq!(s.node(n).unwrap().type_id, t);
        assert_eq!(s.sensor_type(t).unwrap().description, "accelerometer");
        // natural keys make both idempotent
        assert_eq!(accel_type(&mut s), t);
        assert_eq!(node(&mut s, t, "0014.4F01.0000.1A2B", None).unwrap(), n);
        assert_eq!(s.count(EntityKind::SensorNodes), 1);
    }

    #[test]
    fn node_without_type() {
        let mut s = Store::in_memory();
        let err = node(&mut s, 999, "a", None).unwrap_err();
        assert!(matches!(err, StoreError::Integrity { kind: EntityKind::SensorNodes, .. }));
        assert_eq!(s.count(EntityKind::SensorNodes), 0);
    }

    #[test]
    fn camera_ip_limit() {
        let mut s = Store::in_memory();
        let cam = |ip: &str| {
            Entity::Camera(Camera {
                id: 0,
                name: "hall".into(),
                ip: ip.into(),
                url: "http://cam/snap".into(),
                room_id: None,
            })
        };
        assert!(s.upsert(cam("192.168.100.1")).is_ok());
        let err = s.upsert(cam("192.168.100.1.123")).unwrap_err();
        assert!(matches!(err, StoreError::Validation(_)), "{err}");
    }

    #[test]
    fn measurement_rows() {
        let mut s = Store::in_memory();
        let t = accel_type(&mut s);
        let n = node(&mut s, t, "n1", None).unwrap();
        let m = s.insert_measurement(n, 1000, &[0.0, 0.0, 1.0], true, Some(7)).unwrap();
        assert_eq!(s.count(EntityKind::SensorMeasurements), 1);
        assert_eq!(s.count(EntityKind::SensorData), 3);
        let row = s.measurement(m).unwrap();
        assert_eq!(row.values, vec![0.0, 0.0, 1.0]);
        assert!(row.measurement.risk);
        assert_eq!(s.measurement_by_seq(n, 7), Some(m));

        assert!(matches!(
            s.insert_measurement(n, 1000, &[], false, None),
            Err(StoreError::Validation(_))
        ));
        assert!(matches!(
            s.insert_measurement(42, 1000, &[1.0], false, None),
            Err(StoreError::Integrity { .. })
        ));
        assert_eq!(s.count(EntityKind::SensorData), 3);
    }

    #[test]
    fn range_queries() {
        let mut s = Store::in_memory();
        let t = accel_type(&mut s);
        let n = node(&mut s, t, "n1", None).unwrap();
        assert!(s.query_measurements(n, 0, 10, false).unwrap().is_empty());
        s.insert_measurement(n, 300, &[3.0], true, None).unwrap();
        s.insert_measurement(n, 100, &[1.0], false, None).unwrap();
        s.insert_measurement(n, 200, &[2.0], true, None).unwrap();
        let rows = s.query_measurements(n, 100, 200, false).unwrap();
        let ts: Vec<u64> = rows.iter().map(|r| r.measurement.timestamp).collect();
        assert_eq!(ts, vec![100, 200]);
        let risky = s.query_measurements(n, 0, u64::MAX, true).unwrap();
        assert!(risky.iter().all(|r| r.measurement.risk));
        assert_eq!(risky.len(), 2);
        assert!(s.query_measurements(99, 0, 1, false).is_err());
    }

    #[test]
    fn alarm_target_chain() {
        let mut s = Store::in_memory();
        let t = accel_type(&mut s);
        let loose = node(&mut s, t, "loose", None).unwrap();
        assert_eq!(s.resolve_alarm_targets(loose).unwrap(), None);

        let p = s
            .upsert(Entity::Person(Person {
                id: 0,
                first_name: "Ada".into(),
                last_name: "L".into(),
            }))
            .unwrap();
        let carried = node(&mut s, t, "carried", Some(p)).unwrap();
        assert_eq!(
            s.resolve_alarm_targets(carried).unwrap(),
            Some(AlarmTargets {
                person_id: p,
                room_id: None,
                camera_id: None
            })
        );

        let r = s.upsert(Entity::Room(Room { id: 0, name: "living".into() })).unwrap();
        s.upsert(Entity::PersonRoom(PersonRoom {
            id: 0,
            person_id: p,
            room_id: r,
        }))
        .unwrap();
        let c = s
            .upsert(Entity::Camera(Camera {
                id: 0,
                name: "cam".into(),
                ip: "10.0.0.2".into(),
                url: "http://10.0.0.2/snap".into(),
                room_id: Some(r),
            }))
            .unwrap();
        assert_eq!(
            s.resolve_alarm_targets(carried).unwrap(),
            Some(AlarmTargets {
                person_id: p,
                room_id: Some(r),
                camera_id: Some(c)
            })
        );
        assert!(s.resolve_alarm_targets(77).is_err());
    }

    #[test]
    fn image_requires_camera() {
        let mut s = Store::in_memory();
        let img = Entity::CameraImage(CameraImage {
            id: 0,
            camera_id: 5,
            timestamp: 1,
            data: vec![1, 2, 3],
        });
        assert!(matches!(s.upsert(img), Err(StoreError::Integrity { .. })));
    }

    #[test]
    fn entity_names_parse() {
        for k in EntityKind::ALL {
            assert_eq!(k.name().parse::<EntityKind>().unwrap(), k);
        }
        assert!("Widgets".parse::<EntityKind>().is_err());
    }
}
