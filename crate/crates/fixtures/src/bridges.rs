//! The named fixtures.

use crate::code::{keccak, selector, transfer_fn, Src};
use crate::{AbiDoc, ConfigDoc, Contract, ContractDoc, EventDoc, Fixture, InternalDoc, PairingDoc, StorageDoc};

struct Builder {
    doc: ContractDoc,
    src: Src,
    internals: Vec<(String, String)>,
}

impl Builder {
    fn new(file: &str, address: u32) -> Builder {
        Builder {
            doc: ContractDoc {
                address: format!("0x{address:040x}"),
                bytecode: file.to_string(),
                abi: Vec::new(),
                events: Vec::new(),
                storage: Vec::new(),
                internal_functions: Vec::new(),
            },
            src: Src::new(),
            internals: Vec::new(),
        }
    }

    fn abi(&mut self, signature: &str, kind: &str) -> u32 {
        let sel = selector(signature);
        self.doc.abi.push(AbiDoc {
            selector: format!("{sel:#010x}"),
            name: signature.split('(').next().unwrap_or(signature).to_string(),
            kind: kind.into(),
        });
        sel
    }

    fn event(&mut self, signature: &str, kind: &str) -> [u8; 32] {
        let topic = keccak(signature);
        let topic0 = format!("0x{}", hex::encode(topic));
        if self.doc.events.iter().any(|e| e.topic0 == topic0) {
            return topic;
        }
        self.doc.events.push(EventDoc {
            topic0,
            name: signature.split('(').next().unwrap_or(signature).to_string(),
            kind: kind.into(),
        });
        topic
    }

    fn storage(&mut self, slot: u64, meaning: &str, name: &str) {
        self.doc.storage.push(StorageDoc {
            slot: slot as i64,
            meaning: meaning.into(),
            name: Some(name.into()),
        });
    }

    fn internal(&mut self, label: &str, name: &str) {
        self.internals.push((label.into(), name.into()));
    }

    fn finish(mut self) -> Contract {
        let (code, labels) = self.src.build().expect("fixture assembles");
        for (label, name) in self.internals {
            self.doc.internal_functions.push(InternalDoc {
                entry: labels[&label] as i64,
                name,
            });
        }
        Contract { doc: self.doc, code }
    }
}

fn pairing(topic: &[u8; 32], sel: u32) -> PairingDoc {
    PairingDoc {
        deposit_event: format!("0x{}", hex::encode(topic)),
        authorize_selector: format!("{sel:#010x}"),
    }
}

fn fixture(name: &str, source: Vec<Contract>, destination: Vec<Contract>, pairings: Vec<PairingDoc>) -> Fixture {
    Fixture {
        name: name.into(),
        source,
        destination,
        pairings,
        config: ConfigDoc::default(),
    }
}

// Source-side storage shared by the deposit contracts.
const S_BALANCE: u64 = 0;
const S_SUPPORT: u64 = 1;
const S_NONCE: u64 = 2;

#[derive(Clone, Copy)]
enum First {
    ChainId,
    Param,
}

fn source_storage(b: &mut Builder, support: &str) {
    b.storage(S_BALANCE, "balance", "balance");
    b.storage(S_SUPPORT, "support", support);
    b.storage(S_NONCE, "other", "nonce");
}

/// `deposit(x, to, amount)`: checks the support list, the receiver, the
/// amount and the caller's balance, debits it and emits
/// `(first, to, amount, nonce)`.
fn deposit_fn(s: &mut Src, label: &str, first: First, topic: &[u8; 32]) {
    s.label(label);
    for k in 0..3 {
        s.param(k).set(k);
    }
    s.get(0).load(S_SUPPORT).require();
    s.get(1).raw("ISZERO ISZERO").require();
    s.get(2).raw("ISZERO ISZERO").require();
    s.get(2).raw("CALLER").load(S_BALANCE).raw("LT ISZERO").require();
    s.get(2).raw("CALLER").load(S_BALANCE).raw("SUB CALLER").store(S_BALANCE);
    s.load_var(S_NONCE).raw("PUSH1 0x01 ADD DUP1").store_var(S_NONCE).set(3);
    match first {
        First::ChainId => s.raw("CHAINID"),
        First::Param => s.get(0),
    };
    s.get(1).get(2).get(3).emit(topic, 4).raw("STOP");
}

/// A source contract with one deposit function per `(signature, event, first)`.
fn source(file: &str, address: u32, support: &str, fns: &[(&str, &str, First)]) -> (Contract, Vec<[u8; 32]>) {
    let mut b = Builder::new(file, address);
    source_storage(&mut b, support);
    let mut entries = Vec::new();
    let mut topics = Vec::new();
    for (i, (sig, event, first)) in fns.iter().enumerate() {
        let sel = b.abi(sig, "deposit");
        let topic = b.event(event, "deposit");
        entries.push((sel, format!("deposit_{i}"), topic, *first));
        topics.push(topic);
    }
    let table: Vec<(u32, &str)> = entries.iter().map(|(s, l, _, _)| (*s, l.as_str())).collect();
    b.src.dispatcher(&table);
    for (_, label, topic, first) in &entries {
        deposit_fn(&mut b.src, label, *first, topic);
    }
    (b.finish(), topics)
}

fn chainswap_source(address: u32) -> (Contract, [u8; 32]) {
    let (c, topics) = source(
        "source.hex",
        address,
        "supportChain",
        &[(
            "deposit(uint256,address,uint256)",
            "Deposit(uint256,address,uint256,uint256)",
            First::ChainId,
        )],
    );
    (c, topics[0])
}

/// Receive-style destination, straight-line, with or without the quota
/// check on the recovered signer.
fn chainswap(name: &str, quota: bool) -> Fixture {
    const BAL: u64 = 0;
    const REC: u64 = 1;
    const SUP: u64 = 2;
    const QUOTA: u64 = 3;
    let (src, deposit) = chainswap_source(0xa001);
    let mut b = Builder::new("destination.hex", 0xa002);
    b.storage(BAL, "balance", "balance");
    b.storage(REC, "recordList", "received");
    b.storage(SUP, "support", "supportChain");
    b.storage(QUOTA, "authorization", "Quota");
    let sel = b.abi("Receive(uint256,address,uint256,uint256,uint8,bytes32,bytes32)", "authorize");
    b.internal("transfer", "_transfer");
    let s = &mut b.src;
    s.dispatcher(&[(sel, "receive")]).label("receive");
    for k in 0..7 {
        s.param(k).set(k);
    }
    s.get(0).load(SUP).require();
    s.get(0).get(1).get(2).get(3).hash(4).set(7);
    s.get(7).load(REC).raw("ISZERO").require();
    s.get(1).raw("ISZERO ISZERO").require();
    s.get(7).get(4).get(5).get(6).ecrecover().set(8);
    s.get(8).raw("ISZERO ISZERO").require();
    if quota {
        s.get(8).load(QUOTA).raw("ISZERO ISZERO").require();
    }
    s.raw("PUSH1 0x01").get(7).store(REC);
    s.call("transfer", &[1, 2]).raw("STOP");
    transfer_fn(s, "transfer", BAL);
    fixture(name, vec![src], vec![b.finish()], vec![pairing(&deposit, sel)])
}

/// Router whose withdrawal takes the token type from a default slot
/// (or, fixed, from the relayed token argument).
fn router(name: &str, fixed: bool) -> Fixture {
    const ETH: u64 = 0;
    const PROC: u64 = 1;
    const SUP: u64 = 2;
    const AUTH: u64 = 3;
    const DEFAULT_TOKEN: u64 = 4;
    let (src, topics) = source(
        "source.hex",
        0xb001,
        "supportToken",
        &[(
            "Deposit(address,address,uint256)",
            "Deposit(address,address,uint256,uint256)",
            First::Param,
        )],
    );
    let mut b = Builder::new("destination.hex", 0xb002);
    b.storage(ETH, "balance", "ETH balance");
    b.storage(PROC, "recordList", "processed");
    b.storage(SUP, "support", "supportChain");
    b.storage(AUTH, "authorization", "relayers");
    let sel = b.abi("Withdrawal(address,address,uint256,uint256)", "withdraw");
    let erc20 = selector("transfer(address,uint256)");
    let s = &mut b.src;
    s.dispatcher(&[(sel, "withdrawal")]).label("withdrawal");
    for k in 0..4 {
        s.param(k).set(k);
    }
    s.raw("CHAINID").load(SUP).require();
    s.raw("CALLER").load(AUTH).require();
    s.get(3).load(PROC).raw("ISZERO").require();
    s.get(1).raw("ISZERO ISZERO").require();
    s.raw("PUSH1 0x01").get(3).store(PROC);
    if fixed {
        s.get(0).set(4);
    } else {
        s.load_var(DEFAULT_TOKEN).set(4);
    }
    s.get(4).raw("@erc20 JUMPI");
    s.get(1).load(ETH).get(2).raw("ADD").get(1).store(ETH);
    s.raw("@done JUMP").label("erc20");
    s.raw(&format!("PUSH4 {erc20:#010x} PUSH1 0xe0 SHL PUSH2 0x0100 MSTORE"));
    s.get(1).raw("PUSH2 0x0104 MSTORE").get(2).raw("PUSH2 0x0124 MSTORE");
    s.raw("PUSH1 0x20 PUSH0 PUSH1 0x44 PUSH2 0x0100 PUSH0").get(4).raw("GAS CALL POP");
    s.label("done").raw("STOP");
    fixture(name, vec![src], vec![b.finish()], vec![pairing(&topics[0], sel)])
}

/// Two source contracts with one deposit-success check each.
fn diversity() -> Fixture {
    let mut radar = Builder::new("radar.hex", 0xc001);
    radar.storage(0, "balance", "balanceOf");
    let sel = radar.abi("bridgeTokens(uint256,bytes32,address)", "deposit");
    let topic = radar.event("Deposit(uint256,bytes32,address)", "deposit");
    let transfer_from = selector("transferFrom(address,address,uint256)");
    let s = &mut radar.src;
    s.dispatcher(&[(sel, "bridge")]).label("bridge");
    for k in 0..3 {
        s.param(k).set(k);
    }
    s.get(0).raw("CALLER").load(0).raw("LT ISZERO").require();
    s.raw(&format!("PUSH4 {transfer_from:#010x} PUSH1 0xe0 SHL PUSH2 0x0100 MSTORE"));
    s.raw("CALLER PUSH2 0x0104 MSTORE ADDRESS PUSH2 0x0124 MSTORE")
        .get(0)
        .raw("PUSH2 0x0144 MSTORE");
    s.raw("PUSH1 0x20 PUSH0 PUSH1 0x64 PUSH2 0x0100 PUSH0 PUSH20 0x00000000000000000000000000000000000c0ffe GAS CALL POP");
    s.get(0).get(1).get(2).emit(&topic, 3).raw("STOP");

    let mut polka = Builder::new("polkabridge.hex", 0xc002);
    polka.storage(0, "balance", "balanceOf");
    polka.storage(1, "liquidity", "liquidity");
    let sel = polka.abi("mint(address)", "deposit");
    let topic = polka.event("Deposit(address,address,uint256)", "deposit");
    let s = &mut polka.src;
    s.dispatcher(&[(sel, "mint")]).label("mint");
    s.param(0).set(0);
    s.load_var(1).set(1);
    s.get(1).raw("ISZERO ISZERO").require();
    s.get(0).load(0).get(1).raw("ADD").get(0).store(0);
    s.raw("PUSH0").get(0).get(1).emit(&topic, 3).raw("STOP");

    let mut dst = Builder::new("destination.hex", 0xc003);
    dst.src.raw("STOP");
    fixture("fixture-c", vec![radar.finish(), polka.finish()], vec![dst.finish()], vec![])
}

/// Multi-signature withdrawal: a signature-count branch, a loop checking
/// each signatory and counting authorizations, then the transfer.
fn multisig() -> Fixture {
    const BAL: u64 = 0;
    const REC: u64 = 1;
    const SUP: u64 = 2;
    const AUTH: u64 = 3;
    const MIN_SIGS: u64 = 4;
    let (src, deposit) = chainswap_source(0xd001);
    let mut b = Builder::new("destination.hex", 0xd002);
    b.storage(BAL, "balance", "balance");
    b.storage(REC, "recordList", "received");
    b.storage(SUP, "support", "supportChain");
    b.storage(AUTH, "authorization", "authorization");
    b.storage(MIN_SIGS, "authorization", "_minSignatures");
    let sel = b.abi("withdrawal(uint256,address,uint256,uint256)", "withdraw");
    let authorize = b.event("Authorize(uint256,address,uint256,address)", "authorize");
    let receive = b.event("Receive(uint256,address,uint256)", "withdraw");
    b.internal("transfer", "_transfer");
    let s = &mut b.src;
    s.dispatcher(&[(sel, "withdrawal")]).label("withdrawal");
    for k in 0..4 {
        s.param(k).set(k);
    }
    s.get(0).load(SUP).require();
    s.get(0).get(1).get(2).hash(3).set(4);
    s.get(4).load(REC).raw("ISZERO").require();
    s.get(1).raw("ISZERO ISZERO").require();
    // if (signatures.length > _minSignatures)
    s.load_var(MIN_SIGS).get(3).raw("GT ISZERO @after JUMPI");
    s.raw("PUSH0").set(5);
    s.label("loop").get(3).get(5).raw("LT ISZERO @after JUMPI");
    let word = |s: &mut Src, at: u8| {
        s.get(5).raw(&format!("PUSH1 0x80 MUL PUSH1 {at:#04x} ADD CALLDATALOAD"));
    };
    s.get(4);
    word(s, 0x84);
    word(s, 0xa4);
    word(s, 0xc4);
    s.ecrecover().set(6);
    // require(_signatory == signatures[i].signatory)
    word(s, 0xe4);
    s.get(6).raw("EQ").require();
    s.get(1).load(AUTH).raw("PUSH1 0x01 ADD").get(1).store(AUTH);
    s.get(0).get(1).get(2).get(6).emit(&authorize, 4);
    s.get(5).raw("PUSH1 0x01 ADD").set(5).raw("@loop JUMP");
    s.label("after");
    s.get(3).get(1).load(AUTH).raw("EQ").require();
    s.raw("PUSH1 0x01").get(4).store(REC);
    s.call("transfer", &[1, 2]);
    s.get(0).get(1).get(2).emit(&receive, 3).raw("STOP");
    transfer_fn(s, "transfer", BAL);
    fixture("fixture-d", vec![src], vec![b.finish()], vec![pairing(&deposit, sel)])
}

/// Native and alien withdrawals, neither checking the token type.
fn native_alien() -> Fixture {
    const BAL: u64 = 0;
    const PROC: u64 = 1;
    const AUTH: u64 = 2;
    let (src, topics) = source(
        "source.hex",
        0xe001,
        "supportChain",
        &[
            (
                "depositNative(uint256,address,uint256)",
                "DepositNative(uint256,address,uint256,uint256)",
                First::ChainId,
            ),
            (
                "depositAlien(address,address,uint256)",
                "DepositAlien(address,address,uint256,uint256)",
                First::Param,
            ),
        ],
    );
    let mut b = Builder::new("destination.hex", 0xe002);
    b.storage(BAL, "balance", "balance");
    b.storage(PROC, "recordList", "processed");
    b.storage(AUTH, "authorization", "relayers");
    let native = b.abi("saveWithdrawNative(uint256,address,uint256,uint256)", "withdraw");
    let alien = b.abi("saveWithdrawAlien(address,address,uint256,uint256)", "withdraw");
    let s = &mut b.src;
    s.dispatcher(&[(native, "native"), (alien, "alien")]);
    for label in ["native", "alien"] {
        s.label(label);
        for k in 0..4 {
            s.param(k).set(k);
        }
        s.raw("CALLER").load(AUTH).require();
        s.get(3).load(PROC).raw("ISZERO").require();
        s.get(1).raw("ISZERO ISZERO").require();
        s.raw("PUSH1 0x01").get(3).store(PROC);
        s.get(1).load(BAL).get(2).raw("ADD").get(1).store(BAL);
        s.raw("STOP");
    }
    fixture(
        "case-study-1",
        vec![src],
        vec![b.finish()],
        vec![pairing(&topics[0], native), pairing(&topics[1], alien)],
    )
}

/// Two deposit functions relayed to one unlock function.
fn shared_unlock() -> Fixture {
    let mut f = chainswap("fixture-g", true);
    let (src, topics) = source(
        "source.hex",
        0xa001,
        "supportChain",
        &[
            (
                "deposit(uint256,address,uint256)",
                "Deposit(uint256,address,uint256,uint256)",
                First::ChainId,
            ),
            (
                "depositFor(uint256,address,uint256)",
                "Deposit(uint256,address,uint256,uint256)",
                First::ChainId,
            ),
        ],
    );
    assert_eq!(topics[0], topics[1]);
    f.source = vec![src];
    f
}

/// A long chain of branches and a path bound deep enough that
/// enumeration cannot finish.
fn slow() -> Fixture {
    let mut b = Builder::new("source.hex", 0xf001);
    b.storage(0, "balance", "balance");
    let s = &mut b.src;
    s.param(0).set(0);
    for k in 0..300 {
        let join = format!("j{k}");
        s.get(0).raw(&format!("PUSH1 {:#04x} SHR PUSH1 0x01 AND @{join} JUMPI", k % 256));
        s.raw("PUSH1 0x01 POP").label(&join);
    }
    s.raw("CALLER").get(0).raw("SWAP1").store(0).raw("STOP");
    let mut dst = Builder::new("destination.hex", 0xf002);
    dst.src.raw("STOP");
    let mut f = fixture("slow", vec![b.finish()], vec![dst.finish()], vec![]);
    f.config.max_path_depth = Some(240);
    f
}

pub fn all() -> Vec<Fixture> {
    vec![
        chainswap("fixture-a", false),
        chainswap("fixture-a-patched", true),
        router("fixture-b", false),
        router("fixture-b-fixed", true),
        diversity(),
        multisig(),
        native_alien(),
        shared_unlock(),
        slow(),
    ]
}
