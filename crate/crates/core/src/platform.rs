//! CPU identification and the per-core capability/event database.
//!
//! Cores are identified from their machine identification registers
//! (`mvendorid`, `marchid`, `mimpid`) rather than from OS event discovery.
//! The database ships embedded; `MPERF_PLATFORM_DB` points at a replacement
//! file and `MPERF_FORCE_PLATFORM` skips identification entirely.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const PLATFORM_DB_ENV: &str = "MPERF_PLATFORM_DB";
pub const FORCE_PLATFORM_ENV: &str = "MPERF_FORCE_PLATFORM";

pub const GENERIC_PLATFORM: &str = "generic";

/// Names allowed for [`EventKind::StandardHardware`] events.
pub const STANDARD_EVENTS: [&str; 5] = [
    "cycles",
    "instructions",
    "cache-references",
    "cache-misses",
    "branch-misses",
];

const EMBEDDED_DB: &str = include_str!("../data/platforms.json");

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("cpu info is missing field `{0}`")]
    MissingField(&'static str),
    #[error("cpu info field `{field}` is not a hex value: {value:?}")]
    ParseError { field: &'static str, value: String },
    #[error("invalid platform database: {0}")]
    InvalidDatabase(String),
    #[error("unknown platform `{0}`")]
    UnknownPlatform(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw identification register values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CpuIdentity {
    pub vendor_id: u64,
    pub arch_id: u64,
    pub impl_id: u64,
}

impl CpuIdentity {
    pub const fn new(vendor_id: u64, arch_id: u64, impl_id: u64) -> Self {
        Self {
            vendor_id,
            arch_id,
            impl_id,
        }
    }
}

impl fmt::Display for CpuIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mvendorid={:#x} marchid={:#x} mimpid={:#x}",
            self.vendor_id, self.arch_id, self.impl_id
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RvvVersion {
    None,
    V0_7_1,
    V1_0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverflowSupport {
    None,
    Limited,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpstreamLinux {
    No,
    Partial,
    Yes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    StandardHardware,
    VendorRaw,
}

/// Privilege modes an event counts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeScope {
    All,
    UserOnly,
    SupervisorOnly,
    MachineOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "EventWire")]
pub struct EventDescriptor {
    pub name: String,
    pub kind: EventKind,
    /// Vendor event encoding; 0 for standard events.
    pub raw_code: u64,
    pub sampling_capable: bool,
    pub mode_scope: ModeScope,
}

impl EventDescriptor {
    pub fn standard(name: &str, sampling_capable: bool) -> Self {
        Self {
            name: name.to_string(),
            kind: EventKind::StandardHardware,
            raw_code: 0,
            sampling_capable,
            mode_scope: ModeScope::All,
        }
    }

    pub fn vendor_raw(name: &str, raw_code: u64, sampling_capable: bool, mode_scope: ModeScope) -> Self {
        Self {
            name: name.to_string(),
            kind: EventKind::VendorRaw,
            raw_code,
            sampling_capable,
            mode_scope,
        }
    }
}

#[derive(Deserialize)]
struct EventWire {
    name: String,
    kind: EventKind,
    #[serde(default)]
    raw_code: Option<u64>,
    sampling_capable: bool,
    mode_scope: ModeScope,
}

impl TryFrom<EventWire> for EventDescriptor {
    type Error = String;

    fn try_from(w: EventWire) -> Result<Self, Self::Error> {
        let raw_code = match w.kind {
            EventKind::StandardHardware => {
                if !STANDARD_EVENTS.contains(&w.name.as_str()) {
                    return Err(format!("`{}` is not a standard hardware event", w.name));
                }
                if w.raw_code.unwrap_or(0) != 0 {
                    return Err(format!("standard event `{}` carries a raw code", w.name));
                }
                0
            }
            EventKind::VendorRaw => w
                .raw_code
                .ok_or_else(|| format!("vendor event `{}` has no raw_code", w.name))?,
        };
        Ok(Self {
            name: w.name,
            kind: w.kind,
            raw_code,
            sampling_capable: w.sampling_capable,
            mode_scope: w.mode_scope,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformProfile {
    pub name: String,
    pub out_of_order: bool,
    pub rvv_version: RvvVersion,
    pub overflow_support: OverflowSupport,
    pub upstream_linux: UpstreamLinux,
    pub events: Vec<EventDescriptor>,
}

impl PlatformProfile {
    pub fn event(&self, name: &str) -> Option<&EventDescriptor> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn sampling_capable_events(&self) -> impl Iterator<Item = &EventDescriptor> {
        self.events.iter().filter(|e| e.sampling_capable)
    }

    pub fn event_names(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.name.as_str()).collect()
    }

    /// One-line summary of the capability cells, used in diagnostics.
    pub fn capability_summary(&self) -> String {
        format!(
            "{}: out-of-order {}, RVV {}, overflow interrupt support {}, upstream Linux {}",
            self.name,
            yes_no(self.out_of_order),
            match self.rvv_version {
                RvvVersion::None => "not supported",
                RvvVersion::V0_7_1 => "0.7.1",
                RvvVersion::V1_0 => "1.0",
            },
            match self.overflow_support {
                OverflowSupport::None => "No",
                OverflowSupport::Limited => "Limited",
                OverflowSupport::Full => "Yes",
            },
            match self.upstream_linux {
                UpstreamLinux::No => "No",
                UpstreamLinux::Partial => "Partial",
                UpstreamLinux::Yes => "Yes",
            },
        )
    }
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "Yes"
    } else {
        "No"
    }
}

/// Conservative profile for cores missing from the database: counting only.
pub fn generic_profile() -> PlatformProfile {
    PlatformProfile {
        name: GENERIC_PLATFORM.to_string(),
        out_of_order: false,
        rvv_version: RvvVersion::None,
        overflow_support: OverflowSupport::None,
        upstream_linux: UpstreamLinux::No,
        events: vec![
            EventDescriptor::standard("cycles", false),
            EventDescriptor::standard("instructions", false),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapabilityDimension {
    OutOfOrder,
    RvvVersion,
    OverflowSupport,
    UpstreamLinux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    OutOfOrder(bool),
    RvvVersion(RvvVersion),
    OverflowSupport(OverflowSupport),
    UpstreamLinux(UpstreamLinux),
}

pub fn capability(profile: &PlatformProfile, dimension: CapabilityDimension) -> Capability {
    match dimension {
        CapabilityDimension::OutOfOrder => Capability::OutOfOrder(profile.out_of_order),
        CapabilityDimension::RvvVersion => Capability::RvvVersion(profile.rvv_version),
        CapabilityDimension::OverflowSupport => Capability::OverflowSupport(profile.overflow_support),
        CapabilityDimension::UpstreamLinux => Capability::UpstreamLinux(profile.upstream_linux),
    }
}

/// Identification register value in the database file: a JSON number or a
/// `0x`-prefixed hex string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RegValue(u64);

impl<'de> Deserialize<'de> for RegValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(n) => Ok(RegValue(n)),
            Repr::Str(s) => parse_hex(&s)
                .map(RegValue)
                .ok_or_else(|| serde::de::Error::custom(format!("not a hex value: {s:?}"))),
        }
    }
}

impl Serialize for RegValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:#x}", self.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DbEntry {
    vendor_id: RegValue,
    arch_id: RegValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    impl_id: Option<RegValue>,
    #[serde(flatten)]
    profile: PlatformProfile,
}

/// The capability database, keyed by `(vendor_id, arch_id)` with `impl_id`
/// as an optional refinement.
#[derive(Debug, Clone)]
pub struct PlatformDb {
    entries: Vec<DbEntry>,
}

impl PlatformDb {
    pub fn embedded() -> Self {
        Self::from_json(EMBEDDED_DB).expect("embedded platform database is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, PlatformError> {
        let entries: Vec<DbEntry> =
            serde_json::from_str(text).map_err(|e| PlatformError::InvalidDatabase(e.to_string()))?;
        let db = Self { entries };
        db.validate()?;
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self, PlatformError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlatformError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The embedded database, or the file named by `MPERF_PLATFORM_DB`.
    pub fn from_env() -> Result<Self, PlatformError> {
        match std::env::var_os(PLATFORM_DB_ENV) {
            Some(path) if !path.is_empty() => Self::load(Path::new(&path)),
            _ => Ok(Self::embedded()),
        }
    }

    fn validate(&self) -> Result<(), PlatformError> {
        let mut names = HashSet::new();
        for entry in &self.entries {
            let p = &entry.profile;
            if p.name == GENERIC_PLATFORM || !names.insert(p.name.as_str()) {
                return Err(PlatformError::InvalidDatabase(format!(
                    "duplicate or reserved profile name `{}`",
                    p.name
                )));
            }
            let mut event_names = HashSet::new();
            for e in &p.events {
                if !event_names.insert(e.name.as_str()) {
                    return Err(PlatformError::InvalidDatabase(format!(
                        "{}: duplicate event `{}`",
                        p.name, e.name
                    )));
                }
            }
            let has_sampling = p.events.iter().any(|e| e.sampling_capable);
            let overflow = p.overflow_support != OverflowSupport::None;
            if has_sampling != overflow {
                return Err(PlatformError::InvalidDatabase(format!(
                    "{}: sampling-capable events must exist iff overflow support is not None",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn profiles(&self) -> impl Iterator<Item = &PlatformProfile> {
        self.entries.iter().map(|e| &e.profile)
    }

    /// Looks up a profile by name; `generic` always resolves.
    pub fn by_name(&self, name: &str) -> Option<PlatformProfile> {
        if name == GENERIC_PLATFORM {
            return Some(generic_profile());
        }
        self.profiles().find(|p| p.name == name).cloned()
    }

    pub fn identify_platform(&self, id: &CpuIdentity) -> PlatformProfile {
        let mut fallback = None;
        for entry in &self.entries {
            if entry.vendor_id.0 != id.vendor_id || entry.arch_id.0 != id.arch_id {
                continue;
            }
            match entry.impl_id {
                Some(imp) if imp.0 == id.impl_id => return entry.profile.clone(),
                Some(_) => {}
                None => {
                    fallback.get_or_insert(&entry.profile);
                }
            }
        }
        fallback.cloned().unwrap_or_else(generic_profile)
    }

    /// Resolves the profile of the machine we are running on, honouring
    /// `MPERF_FORCE_PLATFORM`. Hosts without readable identification
    /// registers get the generic profile.
    pub fn host_profile(&self) -> Result<PlatformProfile, PlatformError> {
        if let Ok(name) = std::env::var(FORCE_PLATFORM_ENV) {
            if !name.is_empty() {
                return self.by_name(&name).ok_or(PlatformError::UnknownPlatform(name));
            }
        }
        let profile = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|text| read_local_identity(&text).ok())
            .map(|id| self.identify_platform(&id))
            .unwrap_or_else(generic_profile);
        Ok(profile)
    }
}

fn parse_hex(s: &str) -> Option<u64> {
    let s = s.trim();
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

/// Parses `mvendorid`/`marchid`/`mimpid` out of cpuinfo-style `key : value`
/// text. The first occurrence of each key wins (every hart repeats them).
pub fn read_local_identity(proc_info_text: &str) -> Result<CpuIdentity, PlatformError> {
    let mut vendor = None;
    let mut arch = None;
    let mut imp = None;
    for line in proc_info_text.lines() {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let (field, slot) = match key.trim() {
            "mvendorid" => ("mvendorid", &mut vendor),
            "marchid" => ("marchid", &mut arch),
            "mimpid" => ("mimpid", &mut imp),
            _ => continue,
        };
        if slot.is_some() {
            continue;
        }
        let parsed = parse_hex(value).ok_or_else(|| PlatformError::ParseError {
            field,
            value: value.trim().to_string(),
        })?;
        *slot = Some(parsed);
    }
    Ok(CpuIdentity {
        vendor_id: vendor.ok_or(PlatformError::MissingField("mvendorid"))?,
        arch_id: arch.ok_or(PlatformError::MissingField("marchid"))?,
        impl_id: imp.ok_or(PlatformError::MissingField("mimpid"))?,
    })
}
