//! Store Agent: registry of task packages served to the harmoniser.
//!
//! A package is a declarative state machine plus metadata. Its checksum is a
//! 64-bit FNV-1a hash of the canonical serialization: key-sorted JSON with no
//! insignificant whitespace, covering every field except the checksum.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dynamic_agent::{validate, FsmDefinition, Violation};
use crate::messaging::{AgentId, Bus, BusError, DownloadResponse, Mailbox, Payload, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Checksum(pub u64);

impl Serialize for Checksum {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&format_args!("{:016x}", self.0))
    }
}

impl<'de> Deserialize<'de> for Checksum {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(serde::de::Error::custom("checksum must be 16 lowercase hex digits"));
        }
        u64::from_str_radix(&s, 16).map(Checksum).map_err(serde::de::Error::custom)
    }
}

/// The package file document: everything but the checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageDocument {
    pub name: String,
    pub version: u32,
    pub default_priority: u32,
    pub fsm: FsmDefinition,
}

impl PackageDocument {
    /// Key-sorted compact JSON.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("package documents serialize");
        serde_json::to_vec(&value).expect("json values serialize")
    }
}

pub fn checksum_of(bytes: &[u8]) -> Checksum {
    let mut h = FnvHasher::default();
    h.write(bytes);
    Checksum(h.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPackage {
    #[serde(flatten)]
    pub doc: PackageDocument,
    pub checksum: Checksum,
}

impl TaskPackage {
    pub fn new(doc: PackageDocument) -> Self {
        let checksum = checksum_of(&doc.canonical_bytes());
        Self { doc, checksum }
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn version(&self) -> u32 {
        self.doc.version
    }

    pub fn fsm(&self) -> &FsmDefinition {
        &self.doc.fsm
    }

    pub fn verify(&self) -> bool {
        checksum_of(&self.doc.canonical_bytes()) == self.checksum
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("{name} v{version} is already published")]
    DuplicateVersion { name: String, version: u32 },
    #[error("invalid state machine in {name}: {violations:?}")]
    InvalidFsm { name: String, violations: Vec<Violation> },
    #[error("no package named `{0}`")]
    UnknownTask(String),
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub version: u32,
    pub default_priority: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Store {
    packages: BTreeMap<String, BTreeMap<u32, TaskPackage>>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, pkg: TaskPackage) -> Result<(), StoreError> {
        if let Err(violations) = validate(pkg.fsm()) {
            return Err(StoreError::InvalidFsm { name: pkg.name().to_owned(), violations });
        }
        let versions = self.packages.entry(pkg.name().to_owned()).or_default();
        if versions.contains_key(&pkg.version()) {
            return Err(StoreError::DuplicateVersion { name: pkg.name().to_owned(), version: pkg.version() });
        }
        versions.insert(pkg.version(), pkg);
        Ok(())
    }

    /// Latest version of the named package.
    pub fn download(&self, name: &str) -> Result<TaskPackage, StoreError> {
        self.packages
            .get(name)
            .and_then(|v| v.values().next_back())
            .cloned()
            .ok_or_else(|| StoreError::UnknownTask(name.to_owned()))
    }

    /// Latest version of every package, sorted by name.
    pub fn list(&self) -> Vec<CatalogEntry> {
        self.packages
            .values()
            .filter_map(|v| v.values().next_back())
            .map(|p| CatalogEntry {
                name: p.doc.name.clone(),
                version: p.doc.version,
                default_priority: p.doc.default_priority,
            })
            .collect()
    }

    /// Publishes every `*.json` package document in `dir`, in file name order.
    pub fn load_dir(dir: &Path) -> Result<Self, StoreError> {
        let load_err = |path: &Path, message: String| StoreError::Load { path: path.display().to_string(), message };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| load_err(dir, e.to_string()))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut store = Store::new();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|e| load_err(&path, e.to_string()))?;
            let pkg = parse_package(&text).map_err(|e| load_err(&path, e.to_string()))?;
            store.publish(pkg).map_err(|e| load_err(&path, e.to_string()))?;
        }
        Ok(store)
    }

    /// The three packages shipped with the crate.
    pub fn shipped() -> Self {
        let mut store = Store::new();
        for text in SHIPPED_PACKAGES {
            store.publish(parse_package(text).expect("shipped package parses")).expect("shipped package is valid");
        }
        store
    }
}

pub const SHIPPED_PACKAGES: [&str; 3] = [
    include_str!("../data/packages/call_robot.json"),
    include_str!("../data/packages/guard.json"),
    include_str!("../data/packages/medicine_reminder.json"),
];

/// Parses a package file document and computes its checksum.
pub fn parse_package(text: &str) -> Result<TaskPackage, serde_json::Error> {
    let doc: PackageDocument = serde_json::from_str(text)?;
    Ok(TaskPackage::new(doc))
}

pub struct StoreAgent {
    mailbox: Mailbox,
    store: Store,
}

impl StoreAgent {
    pub fn new(bus: &mut Bus, store: Store) -> Result<Self, BusError> {
        let mailbox = bus.register_agent(AgentId::store())?;
        Ok(Self { mailbox, store })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn step(&mut self, bus: &mut Bus, now: Tick) {
        while let Some(env) = bus.poll_due(&self.mailbox, now) {
            if let Payload::DownloadRequest(req) = env.payload {
                let package = self.store.download(&req.task_name).ok();
                let resp = DownloadResponse { task_name: req.task_name, request_id: req.request_id, package };
                let _ = bus.send(now, self.mailbox.id(), &env.src, Payload::DownloadResponse(resp));
            }
        }
    }
}
