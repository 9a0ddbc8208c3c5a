//! Bridge manifest: chains, contracts, semantic hints and pairings.

use crate::evm::{Selector, U256};
use crate::{Error, Result};
use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; 20]);

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        let raw = hex::decode(digits).map_err(|e| format!("bad address `{s}`: {e}"))?;
        Ok(Address(raw.try_into().map_err(|_| format!("address `{s}` is not 20 bytes"))?))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A 32-byte event topic.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topic(pub [u8; 32]);

impl Topic {
    pub fn word(&self) -> U256 {
        U256::from_be_bytes(self.0)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Topic {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        let raw = hex::decode(digits).map_err(|e| format!("bad topic `{s}`: {e}"))?;
        Ok(Topic(raw.try_into().map_err(|_| format!("topic `{s}` is not 32 bytes"))?))
    }
}

impl Serialize for Topic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Destination,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindHint {
    Deposit,
    Withdraw,
    Authorize,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Meaning {
    #[serde(rename = "balance")]
    Balance,
    #[serde(rename = "authorization")]
    Authorization,
    #[serde(rename = "recordList", alias = "record_list", alias = "recordlist")]
    RecordList,
    #[serde(rename = "liquidity")]
    Liquidity,
    /// Bridge-supported token or chain identifiers.
    #[serde(rename = "support")]
    Support,
    #[serde(rename = "other")]
    Other,
}

impl Meaning {
    pub fn as_str(self) -> &'static str {
        match self {
            Meaning::Balance => "balance",
            Meaning::Authorization => "authorization",
            Meaning::RecordList => "recordList",
            Meaning::Liquidity => "liquidity",
            Meaning::Support => "support",
            Meaning::Other => "other",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AbiHint {
    pub selector: Selector,
    pub name: String,
    pub kind: KindHint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EventHint {
    pub topic0: Topic,
    pub name: String,
    pub kind: KindHint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StorageHint {
    pub slot: U256,
    pub meaning: Meaning,
    /// Variable name used in reports; defaults to the meaning.
    pub name: Option<String>,
}

impl StorageHint {
    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.meaning.as_str().to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InternalHint {
    pub entry: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContractEntry {
    pub address: Address,
    pub bytecode: PathBuf,
    pub abi: Vec<AbiHint>,
    pub events: Vec<EventHint>,
    pub storage: Vec<StorageHint>,
    pub internal_functions: Vec<InternalHint>,
}

impl ContractEntry {
    pub fn abi_hint(&self, sel: Selector) -> Option<&AbiHint> {
        self.abi.iter().find(|h| h.selector == sel)
    }

    pub fn event_hint(&self, topic: U256) -> Option<&EventHint> {
        self.events.iter().find(|h| h.topic0.word() == topic)
    }

    pub fn storage_hint(&self, slot: U256) -> Option<&StorageHint> {
        self.storage.iter().find(|h| h.slot == slot)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainEntry {
    pub chain_id: u64,
    pub role: Role,
    pub contracts: Vec<ContractEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Pairing {
    pub deposit_event: Topic,
    pub authorize_selector: Selector,
}

/// Analysis settings pinned by a manifest; each overrides the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub assoc_threshold: Option<f64>,
    pub max_path_depth: Option<usize>,
    pub loop_unroll: Option<usize>,
    pub timeout_secs: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BridgeDescriptor {
    pub name: String,
    pub chains: Vec<ChainEntry>,
    pub pairings: Vec<Pairing>,
    pub config: ConfigOverrides,
}

impl BridgeDescriptor {
    pub fn chain(&self, role: Role) -> &ChainEntry {
        self.chains
            .iter()
            .find(|c| c.role == role)
            .expect("validated descriptors have both roles")
    }

    pub fn contracts(&self) -> impl Iterator<Item = (Role, &ContractEntry)> {
        self.chains
            .iter()
            .flat_map(|c| c.contracts.iter().map(move |e| (c.role, e)))
    }

    pub fn contract(&self, address: Address) -> Option<(Role, &ContractEntry)> {
        self.contracts().find(|(_, e)| e.address == address)
    }
}

mod raw {
    use super::{ConfigOverrides, KindHint, Meaning, Role};
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Document {
        pub bridge: Bridge,
        #[serde(default)]
        pub config: ConfigOverrides,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Bridge {
        pub name: String,
        pub chains: Vec<Chain>,
        #[serde(default)]
        pub pairings: Vec<Pairing>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Chain {
        pub chain_id: u64,
        pub role: Role,
        #[serde(default)]
        pub contracts: Vec<Contract>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Contract {
        pub address: String,
        pub bytecode: String,
        #[serde(default)]
        pub abi: Vec<Abi>,
        #[serde(default)]
        pub events: Vec<Event>,
        #[serde(default)]
        pub storage: Vec<Storage>,
        #[serde(default)]
        pub internal_functions: Vec<Internal>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Abi {
        pub selector: String,
        pub name: String,
        #[serde(default = "other")]
        pub kind: KindHint,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Event {
        pub topic0: String,
        pub name: String,
        #[serde(default = "other")]
        pub kind: KindHint,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Storage {
        pub slot: i64,
        pub meaning: Meaning,
        pub name: Option<String>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Internal {
        pub entry: i64,
        pub name: String,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Pairing {
        pub deposit_event: String,
        pub authorize_selector: String,
    }

    fn other() -> KindHint {
        KindHint::Other
    }
}

fn parse_field<T: FromStr<Err = String>>(path: &str, text: &str) -> Result<T> {
    text.parse().map_err(|e: String| Error::manifest(path, e))
}

/// Parse and validate a manifest. Relative bytecode paths resolve against `base_dir`.
pub fn load_manifest(document: &str, base_dir: &Path) -> Result<BridgeDescriptor> {
    let doc: raw::Document = toml::from_str(document).map_err(|e| {
        let message = e.message().to_string();
        let at = e
            .span()
            .map(|s| {
                let line = document[..s.start].matches('\n').count() + 1;
                format!("line {line}")
            })
            .unwrap_or_else(|| "document".into());
        Error::manifest(at, message)
    })?;
    if doc.bridge.name.trim().is_empty() {
        return Err(Error::manifest("bridge.name", "must not be empty"));
    }
    let mut chains = Vec::new();
    let mut seen_addresses = BTreeSet::new();
    for (ci, chain) in doc.bridge.chains.iter().enumerate() {
        let mut contracts = Vec::new();
        for (ki, c) in chain.contracts.iter().enumerate() {
            let at = format!("bridge.chains[{ci}].contracts[{ki}]");
            let address: Address = parse_field(&format!("{at}.address"), &c.address)?;
            if !seen_addresses.insert(address) {
                return Err(Error::manifest(
                    format!("{at}.address"),
                    format!("duplicate contract address {address}"),
                ));
            }
            if c.bytecode.trim().is_empty() {
                return Err(Error::manifest(format!("{at}.bytecode"), "must not be empty"));
            }
            let mut abi = Vec::new();
            for (i, h) in c.abi.iter().enumerate() {
                abi.push(AbiHint {
                    selector: parse_field(&format!("{at}.abi[{i}].selector"), &h.selector)?,
                    name: h.name.clone(),
                    kind: h.kind,
                });
            }
            let mut events = Vec::new();
            for (i, h) in c.events.iter().enumerate() {
                events.push(EventHint {
                    topic0: parse_field(&format!("{at}.events[{i}].topic0"), &h.topic0)?,
                    name: h.name.clone(),
                    kind: h.kind,
                });
            }
            let mut storage = Vec::new();
            for (i, h) in c.storage.iter().enumerate() {
                let slot = u64::try_from(h.slot).map_err(|_| {
                    Error::manifest(format!("{at}.storage[{i}].slot"), "must be non-negative")
                })?;
                storage.push(StorageHint {
                    slot: U256::from(slot),
                    meaning: h.meaning,
                    name: h.name.clone(),
                });
            }
            let mut internal_functions = Vec::new();
            for (i, h) in c.internal_functions.iter().enumerate() {
                let entry = usize::try_from(h.entry).map_err(|_| {
                    Error::manifest(
                        format!("{at}.internal_functions[{i}].entry"),
                        "must be non-negative",
                    )
                })?;
                internal_functions.push(InternalHint {
                    entry,
                    name: h.name.clone(),
                });
            }
            contracts.push(ContractEntry {
                address,
                bytecode: base_dir.join(c.bytecode.trim()),
                abi,
                events,
                storage,
                internal_functions,
            });
        }
        chains.push(ChainEntry {
            chain_id: chain.chain_id,
            role: chain.role,
            contracts,
        });
    }
    for role in [Role::Source, Role::Destination] {
        let n = chains.iter().filter(|c| c.role == role).count();
        if n != 1 {
            return Err(Error::Role(format!(
                "expected exactly one {} chain, found {n}",
                match role {
                    Role::Source => "source",
                    Role::Destination => "destination",
                }
            )));
        }
    }
    let mut pairings = Vec::new();
    for (i, p) in doc.bridge.pairings.iter().enumerate() {
        let at = format!("bridge.pairings[{i}]");
        let pairing = Pairing {
            deposit_event: parse_field(&format!("{at}.deposit_event"), &p.deposit_event)?,
            authorize_selector: parse_field(&format!("{at}.authorize_selector"), &p.authorize_selector)?,
        };
        let event_on = |role: Role| {
            chains.iter().filter(|c| c.role == role).any(|c| {
                c.contracts
                    .iter()
                    .any(|k| k.events.iter().any(|e| e.topic0 == pairing.deposit_event))
            })
        };
        let selector_on = |role: Role| {
            chains.iter().filter(|c| c.role == role).any(|c| {
                c.contracts
                    .iter()
                    .any(|k| k.abi.iter().any(|a| a.selector == pairing.authorize_selector))
            })
        };
        if !event_on(Role::Source) {
            if event_on(Role::Destination) {
                return Err(Error::Role(format!(
                    "{at}: deposit event {} is declared on the destination chain",
                    pairing.deposit_event
                )));
            }
            return Err(Error::manifest(
                format!("{at}.deposit_event"),
                "not declared by any source-chain contract",
            ));
        }
        if !selector_on(Role::Destination) {
            if selector_on(Role::Source) {
                return Err(Error::Role(format!(
                    "{at}: authorize selector {} is declared on the source chain",
                    pairing.authorize_selector
                )));
            }
            return Err(Error::manifest(
                format!("{at}.authorize_selector"),
                "not declared by any destination-chain contract",
            ));
        }
        pairings.push(pairing);
    }
    if let Some(t) = doc.config.assoc_threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::manifest("config.assoc_threshold", "must lie in (0, 1)"));
        }
    }
    if doc.config.max_path_depth == Some(0) {
        return Err(Error::manifest("config.max_path_depth", "must be at least 1"));
    }
    if doc.config.timeout_secs == Some(0) {
        return Err(Error::manifest("config.timeout_secs", "must be at least 1"));
    }
    Ok(BridgeDescriptor {
        name: doc.bridge.name,
        chains,
        pairings,
        config: doc.config,
    })
}

pub fn load_manifest_file(path: &Path) -> Result<BridgeDescriptor> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_manifest(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOPIC: &str = "0xddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef";

    fn doc(src_role: &str, pairing_topic: &str) -> String {
        format!(
            r#"
[bridge]
name = "mini"

[[bridge.chains]]
chain_id = 1
role = "{src_role}"
[[bridge.chains.contracts]]
address = "0x00000000000000000000000000000000000000aa"
bytecode = "src.hex"
events = [{{ topic0 = "{TOPIC}", name = "Transfer", kind = "deposit" }}]
storage = [{{ slot = 2, meaning = "balance" }}]

[[bridge.chains]]
chain_id = 2
role = "destination"
[[bridge.chains.contracts]]
address = "0x00000000000000000000000000000000000000bb"
bytecode = "dst.hex"
abi = [{{ selector = "0x12345678", name = "Receive", kind = "authorize" }}]

[[bridge.pairings]]
deposit_event = "{pairing_topic}"
authorize_selector = "0x12345678"
"#
        )
    }

    #[test]
    fn valid_manifest() {
        let d = load_manifest(&doc("source", TOPIC), Path::new("/m")).unwrap();
        assert_eq!(d.pairings.len(), 1);
        assert_eq!(d.chain(Role::Source).contracts[0].bytecode, Path::new("/m/src.hex"));
        assert_eq!(
            d.chain(Role::Source).contracts[0].storage[0].meaning,
            Meaning::Balance
        );
    }

    #[test]
    fn two_destination_chains_is_role_error() {
        let err = load_manifest(&doc("destination", TOPIC), Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Role(_)), "{err}");
    }

    #[test]
    fn schema_errors_carry_a_path() {
        let bad = doc("source", "0x1234");
        match load_manifest(&bad, Path::new(".")).unwrap_err() {
            Error::Manifest { path, .. } => assert_eq!(path, "bridge.pairings[0].deposit_event"),
            other => panic!("unexpected {other}"),
        }
        let unknown = doc("source", TOPIC).replace("chain_id = 2", "chain_id = 2\ncolor = 1");
        assert!(matches!(
            load_manifest(&unknown, Path::new(".")),
            Err(Error::Manifest { .. })
        ));
    }
}
