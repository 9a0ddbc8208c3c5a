use axe_core::access::RuleSet;
use axe_core::analysis::{analyze, analyze_manifest, Progress};
use axe_core::bridge::manifest::ConfigOverrides;
use axe_core::bridge::{load_manifest_file, load_program};
use axe_core::evm::asm::assemble_text;
use axe_core::report::{render, Format};
use axe_core::{AnalysisConfig, Error};
use std::path::{Path, PathBuf};

const TOPIC: &str = "0x1111111111111111111111111111111111111111111111111111111111111111";

// deposit(uint256 amount): require(amount != 0); emit Deposit(amount)
fn source() -> String {
    format!(
        "PUSH0 CALLDATALOAD PUSH1 0xe0 SHR
         DUP1 PUSH4 0x11111111 EQ @deposit JUMPI
         PUSH0 DUP1 REVERT
         deposit:
         PUSH1 0x04 CALLDATALOAD DUP1 @ok JUMPI PUSH0 DUP1 REVERT
         ok:
         PUSH0 MSTORE
         PUSH32 {TOPIC} PUSH1 0x20 PUSH0 LOG1 STOP"
    )
}

// withdraw(uint256 amount, address to): balance[to] += amount, no checks
const DESTINATION: &str = "
    PUSH0 CALLDATALOAD PUSH1 0xe0 SHR
    DUP1 PUSH4 0x22222222 EQ @withdraw JUMPI
    PUSH0 DUP1 REVERT
    withdraw:
    PUSH1 0x24 CALLDATALOAD DUP1 PUSH0 MSTORE PUSH0 PUSH1 0x20 MSTORE PUSH1 0x40 PUSH0 SHA3
    DUP1 SLOAD PUSH1 0x04 CALLDATALOAD ADD SWAP1 SSTORE POP STOP";

fn write_bridge(dir: &Path) -> PathBuf {
    let hex = |code: Vec<u8>| format!("0x{}\n", hex::encode(code));
    std::fs::write(dir.join("src.hex"), hex(assemble_text(&source()).unwrap())).unwrap();
    std::fs::write(dir.join("dst.hex"), hex(assemble_text(DESTINATION).unwrap())).unwrap();
    let manifest = format!(
        r#"[bridge]
name = "tiny"

[[bridge.chains]]
chain_id = 1
role = "source"

[[bridge.chains.contracts]]
address = "0x0000000000000000000000000000000000000001"
bytecode = "src.hex"
abi = [{{ selector = "0x11111111", name = "deposit", kind = "deposit" }}]
events = [{{ topic0 = "{TOPIC}", name = "Deposit", kind = "deposit" }}]

[[bridge.chains]]
chain_id = 2
role = "destination"

[[bridge.chains.contracts]]
address = "0x0000000000000000000000000000000000000002"
bytecode = "dst.hex"
abi = [{{ selector = "0x22222222", name = "withdraw", kind = "withdraw" }}]
storage = [{{ slot = 0, meaning = "balance", name = "balance" }}]

[[bridge.pairings]]
deposit_event = "{TOPIC}"
authorize_selector = "0x22222222"
"#
    );
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest).unwrap();
    path
}

#[test]
fn unchecked_withdrawal_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_bridge(dir.path());
    let a = analyze_manifest(&m, &ConfigOverrides::default(), &Progress::new()).unwrap();
    let r = &a.report;
    assert_eq!(r.bridge, "tiny");
    let withdraw: Vec<_> = r.findings.iter().filter(|f| f.function == "withdraw").collect();
    assert!(!withdraw.is_empty(), "{}", render(r, Format::Text));
    assert!(withdraw.iter().any(|f| f.kind.as_str() == "ACCESS_CONTROL_OMISSION"));
    assert!(a.xcfg.relays.len() == 1);
}

#[test]
fn reports_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_bridge(dir.path());
    let run = || {
        let a = analyze_manifest(&m, &ConfigOverrides::default(), &Progress::new()).unwrap();
        render(&a.report, Format::Structured)
    };
    assert_eq!(run(), run());
}

#[test]
fn cancelled_analysis_stops() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_bridge(dir.path());
    let program = load_program(load_manifest_file(&m).unwrap()).unwrap();
    let progress = Progress::new();
    progress.cancel();
    let r = analyze(&program, &RuleSet::builtin(), &AnalysisConfig::default(), &progress);
    assert!(matches!(r, Err(Error::Cancelled)));
}

#[test]
fn bad_bytecode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_bridge(dir.path());
    std::fs::write(dir.path().join("dst.hex"), "0xzz").unwrap();
    let err = load_manifest_file(&m).and_then(load_program).unwrap_err();
    assert!(matches!(err, Error::MalformedHex(_)), "{err}");
    std::fs::write(dir.path().join("dst.hex"), "").unwrap();
    let err = load_manifest_file(&m).and_then(load_program).unwrap_err();
    assert!(matches!(err, Error::EmptyBytecode), "{err}");
}
