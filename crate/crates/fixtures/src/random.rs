//! Random bridges: straight-line and branching code over params, storage
//! and events, paired at random.

use crate::code::{keccak, Src};
use crate::{AbiDoc, ConfigDoc, Contract, ContractDoc, EventDoc, Fixture, PairingDoc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_LOCALS: usize = 14;

struct Gen {
    rng: ChaCha8Rng,
    s: Src,
    locals: usize,
}

impl Gen {
    fn pick(&mut self) -> usize {
        self.rng.gen_range(0..self.locals)
    }

    fn fresh_local(&mut self) -> Option<usize> {
        (self.locals < MAX_LOCALS).then(|| {
            self.locals += 1;
            self.locals - 1
        })
    }

    fn statement(&mut self, topics: &[[u8; 32]], depth: usize) {
        match self.rng.gen_range(0..8) {
            0 => {
                let (v, slot) = (self.pick(), self.rng.gen_range(0..4u64));
                self.s.get(v).store_var(slot);
            }
            1 => {
                let (v, k, base) = (self.pick(), self.pick(), self.rng.gen_range(4..6u64));
                self.s.get(v).get(k).store(base);
            }
            2 => {
                if let Some(d) = self.fresh_local() {
                    let slot = self.rng.gen_range(0..4u64);
                    self.s.load_var(slot).set(d);
                }
            }
            3 => {
                if let Some(d) = self.fresh_local() {
                    let (a, b) = (self.pick(), self.pick());
                    let op = ["ADD", "SUB", "MUL", "XOR"].choose(&mut self.rng).copied().unwrap_or("ADD");
                    self.s.get(a).get(b).raw(op).set(d);
                }
            }
            4 if !topics.is_empty() => {
                let topic = topics[self.rng.gen_range(0..topics.len())];
                let n = self.rng.gen_range(1..=4);
                for _ in 0..n {
                    let v = self.pick();
                    self.s.get(v);
                }
                self.s.emit(&topic, n);
            }
            5 if depth < 2 => {
                let c = self.pick();
                let skip = self.s.fresh("skip");
                self.s.get(c).raw(&format!("ISZERO @{skip} JUMPI"));
                for _ in 0..self.rng.gen_range(1..4) {
                    self.statement(topics, depth + 1);
                }
                self.s.label(&skip);
            }
            6 => {
                let c = self.pick();
                self.s.get(c).require();
            }
            _ => {
                if let Some(d) = self.fresh_local() {
                    let op = ["CALLER", "CALLVALUE", "TIMESTAMP", "CHAINID"]
                        .choose(&mut self.rng)
                        .copied()
                        .unwrap_or("CALLER");
                    self.s.raw(op).set(d);
                }
            }
        }
    }
}

struct Side {
    contract: Contract,
    selectors: Vec<u32>,
    topics: Vec<[u8; 32]>,
}

fn side(rng: &mut ChaCha8Rng, address: u32, abi_kind: &str, event_kind: &str, stem: &str) -> Side {
    let n_fns = rng.gen_range(1..=3);
    let n_events = rng.gen_range(0..=2);
    let topics: Vec<[u8; 32]> = (0..n_events).map(|i| keccak(&format!("{stem}Event{i}(uint256)"))).collect();
    let selectors: Vec<u32> = (0..n_fns).map(|i| 0x1000_0000 * (i as u32 + 1) + address).collect();
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(rng.gen()),
        s: Src::new(),
        locals: 0,
    };
    let labels: Vec<String> = (0..n_fns).map(|i| format!("f{i}")).collect();
    let table: Vec<(u32, &str)> = selectors.iter().copied().zip(labels.iter().map(String::as_str)).collect();
    g.s.dispatcher(&table);
    for label in &labels {
        g.s.label(label);
        g.locals = 0;
        for k in 0..g.rng.gen_range(1..=4) {
            g.s.param(k).set(k);
            g.locals += 1;
        }
        for _ in 0..g.rng.gen_range(3..16) {
            g.statement(&topics, 0);
        }
        g.s.raw("STOP");
    }
    let (code, _) = g.s.build().expect("random contract assembles");
    let doc = ContractDoc {
        address: format!("0x{address:040x}"),
        bytecode: format!("{stem}.hex"),
        abi: selectors
            .iter()
            .enumerate()
            .map(|(i, sel)| AbiDoc {
                selector: format!("{sel:#010x}"),
                name: format!("{stem}{i}"),
                kind: abi_kind.into(),
            })
            .collect(),
        events: topics
            .iter()
            .enumerate()
            .map(|(i, t)| EventDoc {
                topic0: format!("0x{}", hex::encode(t)),
                name: format!("{stem}Event{i}"),
                kind: event_kind.into(),
            })
            .collect(),
        storage: Vec::new(),
        internal_functions: Vec::new(),
    };
    Side {
        contract: Contract { doc, code },
        selectors,
        topics,
    }
}

/// A random two-contract bridge; the same seed gives the same bridge.
pub fn random_bridge(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = side(&mut rng, 0x51, "deposit", "deposit", "src");
    let dst = side(&mut rng, 0xd1, "authorize", "withdraw", "dst");
    let mut pairings = Vec::new();
    for t in &src.topics {
        if rng.gen_bool(0.8) {
            let sel = dst.selectors[rng.gen_range(0..dst.selectors.len())];
            pairings.push(PairingDoc {
                deposit_event: format!("0x{}", hex::encode(t)),
                authorize_selector: format!("{sel:#010x}"),
            });
        }
    }
    Fixture {
        name: format!("random-{seed}"),
        source: vec![src.contract],
        destination: vec![dst.contract],
        pairings,
        config: ConfigDoc::default(),
    }
}
