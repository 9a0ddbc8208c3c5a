//! Bridge fixtures: hand-assembled contracts reproducing the bridge shapes
//! the analyzer is built for, plus a random bridge generator.

pub mod bridges;
pub mod code;
pub mod random;

use serde::Serialize;
use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct AbiDoc {
    pub selector: String,
    pub name: String,
    pub kind: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EventDoc {
    pub topic0: String,
    pub name: String,
    pub kind: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StorageDoc {
    pub slot: i64,
    pub meaning: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InternalDoc {
    pub entry: i64,
    pub name: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractDoc {
    pub address: String,
    pub bytecode: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub abi: Vec<AbiDoc>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventDoc>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub storage: Vec<StorageDoc>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub internal_functions: Vec<InternalDoc>,
}

#[derive(Clone, Debug, Serialize)]
struct ChainDoc {
    chain_id: u64,
    role: &'static str,
    contracts: Vec<ContractDoc>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingDoc {
    pub deposit_event: String,
    pub authorize_selector: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConfigDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assoc_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_path_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop_unroll: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

impl ConfigDoc {
    fn is_empty(&self) -> bool {
        self.assoc_threshold.is_none()
            && self.max_path_depth.is_none()
            && self.loop_unroll.is_none()
            && self.timeout_secs.is_none()
    }
}

#[derive(Serialize)]
struct BridgeDoc<'a> {
    name: &'a str,
    chains: Vec<ChainDoc>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pairings: Vec<PairingDoc>,
}

#[derive(Serialize)]
struct ManifestDoc<'a> {
    bridge: BridgeDoc<'a>,
    #[serde(skip_serializing_if = "ConfigDoc::is_empty")]
    config: ConfigDoc,
}

/// One contract: its code and its manifest entry.
#[derive(Clone, Debug)]
pub struct Contract {
    pub doc: ContractDoc,
    pub code: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub source: Vec<Contract>,
    pub destination: Vec<Contract>,
    pub pairings: Vec<PairingDoc>,
    pub config: ConfigDoc,
}

impl Fixture {
    pub fn manifest(&self) -> String {
        let chain = |chain_id, role, cs: &[Contract]| ChainDoc {
            chain_id,
            role,
            contracts: cs.iter().map(|c| c.doc.clone()).collect(),
        };
        let doc = ManifestDoc {
            bridge: BridgeDoc {
                name: &self.name,
                chains: vec![
                    chain(1, "source", &self.source),
                    chain(56, "destination", &self.destination),
                ],
                pairings: self.pairings.clone(),
            },
            config: self.config.clone(),
        };
        toml::to_string(&doc).expect("manifest serializes")
    }

    /// Files making up the fixture, relative to its directory.
    pub fn files(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("manifest.toml".to_string(), self.manifest());
        for c in self.source.iter().chain(&self.destination) {
            out.insert(c.doc.bytecode.clone(), format!("0x{}\n", hex::encode(&c.code)));
        }
        out
    }

    /// Write into `root/<name>/`, returning the manifest path.
    pub fn write(&self, root: &Path) -> io::Result<PathBuf> {
        let dir = root.join(&self.name);
        std::fs::create_dir_all(&dir)?;
        for (file, text) in self.files() {
            std::fs::write(dir.join(file), text)?;
        }
        Ok(dir.join("manifest.toml"))
    }
}

/// Every named fixture, in a fixed order.
pub fn all() -> Vec<Fixture> {
    bridges::all()
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}

/// Directory the generated fixtures are committed to.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}
