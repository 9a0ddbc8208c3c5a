//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use axe_core::access::{CheckForm, Perspective, ResourceKind, RuleSet};
use axe_core::analysis::{analyze, analyze_manifest, Analysis, Progress};
use axe_core::association::infer::{noisy_or, Pattern};
use axe_core::association::paths::{enumerate, PathBounds, PathGraph};
use axe_core::bridge::manifest::ConfigOverrides;
use axe_core::bridge::{load_manifest_file, load_program, Address, BridgeProgram};
use axe_core::evm::partition::param_index;
use axe_core::evm::{Opcode, ValueId};
use axe_core::taint::{propagate, SourceKind, TaintFact};
use axe_core::xgraph::{Carried, XDfgEdge, XLabel, XNode, XdNode, Xdfg};
use axe_core::AnalysisConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn manifest(name: &str) -> PathBuf {
    axe_fixtures::fixtures_dir().join(name).join("manifest.toml")
}

fn axe(args: &[&str]) -> (i32, String, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_axe"))
        .args(args)
        .output()
        .expect("axe runs");
    let code = out.status.code().unwrap_or(-1);
    (code, String::from_utf8_lossy(&out.stdout).into_owned(), start.elapsed())
}

fn report(name: &str) -> Result<(Value, Duration), String> {
    let path = manifest(name);
    let (code, stdout, took) = axe(&["analyze", "--manifest", path.to_str().unwrap_or_default()]);
    if code > 1 {
        return Err(format!("{name}: axe exited {code}"));
    }
    serde_json::from_str(&stdout)
        .map(|v| (v, took))
        .map_err(|e| format!("{name}: bad report: {e}"))
}

fn findings<'a>(r: &'a Value, kind: &str) -> Vec<&'a Value> {
    r["findings"]
        .as_array()
        .map(|a| a.iter().filter(|f| f["kind"] == kind).collect())
        .unwrap_or_default()
}

/// `entry -> entry -> {var, var}` built from the structured trace.
fn trace_of(f: &Value) -> String {
    let names: Vec<&str> = f["trace"]["entry_names"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let vars: Vec<&str> = f["trace"]["affected"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v["name"].as_str()).collect())
        .unwrap_or_default();
    format!("{} -> {{{}}}", names.join(" -> "), vars.join(", "))
}

fn missing(f: &Value) -> Vec<String> {
    f["evidence"]["missing"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn analysis(name: &str) -> Result<Analysis, String> {
    analyze_manifest(&manifest(name), &ConfigOverrides::default(), &Progress::new()).map_err(|e| e.to_string())
}

fn criterion_1() -> Outcome {
    let (r, took) = report("fixture-a")?;
    let om = findings(&r, "ACCESS_CONTROL_OMISSION");
    let total = r["summary"]["total"].as_u64().unwrap_or(0);
    ensure(om.len() == 1 && total == 1, || format!("expected one omission, got {total} findings"))?;
    let f = om[0];
    ensure(f["severity"] == "high", || "omission is not high severity".into())?;
    ensure(missing(f) == ["P4"], || format!("missing perspectives {:?}", missing(f)))?;
    let t = trace_of(f);
    ensure(t == "Receive -> _transfer -> {received, balance}", || format!("trace `{t}`"))?;
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    let (p, _) = report("fixture-a-patched")?;
    let n = p["summary"]["total"].as_u64().unwrap_or(u64::MAX);
    ensure(n == 0, || format!("patched variant has {n} findings"))?;
    Ok(format!("trace `{t}`, {:.2}s", took.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let (r, took) = report("fixture-b")?;
    let si = findings(&r, "SEMANTIC_INTEGRITY");
    ensure(si.len() == 1, || format!("{} integrity findings", si.len()))?;
    let t = trace_of(si[0]);
    ensure(t == "Deposit -> Withdrawal -> {ETH balance}", || format!("trace `{t}`"))?;
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    let (fixed, _) = report("fixture-b-fixed")?;
    let n = findings(&fixed, "SEMANTIC_INTEGRITY").len();
    ensure(n == 0, || format!("fixed variant has {n} integrity findings"))?;
    Ok(format!("trace `{t}`, {:.2}s", took.as_secs_f64()))
}

fn criterion_3() -> Outcome {
    let a = analysis("fixture-c")?;
    let mut seen = Vec::new();
    for name in ["bridgeTokens", "mint"] {
        let f = a
            .functions
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| format!("{name} not found"))?;
        ensure(f.checks.len() == 1, || format!("{name}: {} checks", f.checks.len()))?;
        let p = f.checks[0].perspective;
        ensure(p == Some(Perspective::P1), || format!("{name}: check classified {p:?}"))?;
        ensure(f.coverage.is_satisfied(Perspective::P1), || format!("{name}: P1 not covered"))?;
        seen.push(format!("{name}: {:?}", f.checks[0].features));
    }
    let p1_missing = a
        .ac_findings
        .iter()
        .any(|f| f.missing.contains(&Perspective::P1));
    ensure(!p1_missing, || "P1 omission reported".into())?;
    Ok(seen.join("; "))
}

fn criterion_4() -> Outcome {
    let priors: Vec<f64> = Pattern::ALL.iter().map(|p| p.prior()).collect();
    ensure(priors == [0.95, 0.60, 0.60, 0.70, 0.80], || format!("priors {priors:?}"))?;
    let a = analysis("fixture-d")?;
    let f = a
        .functions
        .iter()
        .find(|f| f.name == "withdrawal")
        .ok_or("withdrawal not found")?;
    let p4 = |form: CheckForm| {
        f.checks
            .iter()
            .position(|c| c.form == form && c.perspective == Some(Perspective::P4))
    };
    let count = p4(CheckForm::Branch).ok_or("no signature-count check")?;
    let signatory = p4(CheckForm::RevertGuard).ok_or("no signatory check")?;
    let transfer = f
        .resources
        .iter()
        .position(|r| r.kind == ResourceKind::InternalMethod && r.label == "_transfer")
        .ok_or("no _transfer resource")?;
    let combined = |c: usize| {
        f.associations
            .iter()
            .find(|x| x.check == c && x.resource == transfer)
            .map(|x| x.combined)
            .unwrap_or(0.0)
    };
    let (pc, ps) = (combined(count), combined(signatory));
    ensure(pc >= 0.5 && ps >= 0.5, || format!("count {pc:.3}, signatory {ps:.3}"))?;
    let p4_missing = a.ac_findings.iter().any(|x| x.missing.contains(&Perspective::P4));
    ensure(!p4_missing, || "P4 omission reported".into())?;
    Ok(format!("count check {pc:.3}, signatory check {ps:.3}"))
}

fn criterion_5() -> Outcome {
    let (r, _) = report("case-study-1")?;
    let mut hit = Vec::new();
    for name in ["saveWithdrawNative", "saveWithdrawAlien"] {
        let f = findings(&r, "ACCESS_CONTROL_OMISSION")
            .into_iter()
            .find(|f| f["function"] == name && missing(f).iter().any(|m| m == "P3"))
            .ok_or_else(|| format!("{name}: no P3 finding"))?;
        let vars: Vec<&str> = f["trace"]["affected"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v["name"].as_str()).collect())
            .unwrap_or_default();
        ensure(vars.contains(&"balance"), || format!("{name}: affected {vars:?}"))?;
        hit.push(trace_of(f));
    }
    Ok(hit.join("; "))
}

struct Dag(Vec<Vec<usize>>);

impl PathGraph for Dag {
    type Node = usize;
    type State = usize;
    fn node(&self, s: &usize) -> usize {
        *s
    }
    fn next(&self, s: &usize) -> Vec<usize> {
        self.0[*s].clone()
    }
}

fn dfs_paths(g: &Dag, at: usize, target: usize, path: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
    path.push(at);
    if at == target {
        out.insert(path.clone());
    }
    for n in &g.0[at] {
        dfs_paths(g, *n, target, path, out);
    }
    path.pop();
}

fn vnode(i: usize) -> XdNode {
    XdNode::Value {
        contract: Address([0; 20]),
        id: ValueId(i as u32),
    }
}

fn criterion_6() -> Outcome {
    let never = || false;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9a7 + seed);
        let n = rng.gen_range(2..=12);
        let density = rng.gen_range(0.15..0.6);
        let g = Dag(
            (0..n)
                .map(|i| ((i + 1)..n).filter(|_| rng.gen_bool(density)).collect())
                .collect(),
        );
        let bounds = PathBounds {
            max_depth: 64,
            unroll: 1,
            max_paths: usize::MAX,
        };
        let got: BTreeSet<Vec<usize>> = enumerate(&g, 0, |x| x == n - 1, |_| true, bounds, &never)
            .paths
            .into_iter()
            .collect();
        let mut want = BTreeSet::new();
        dfs_paths(&g, 0, n - 1, &mut Vec::new(), &mut want);
        ensure(got == want, || format!("paths differ on DAG seed {seed}"))?;
    }
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7a1 + seed);
        let n = rng.gen_range(1..=50);
        let m = rng.gen_range(0..=n * 3);
        let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let seeds: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.15)).collect();
        let g = Xdfg::from_edges(edges.iter().map(|(a, b)| XDfgEdge {
            from: vnode(*a),
            to: vnode(*b),
            carried: Carried::Local,
            boundary: None,
        }));
        let facts: Vec<TaintFact> = seeds
            .iter()
            .map(|s| TaintFact {
                origin: SourceKind::Param(*s),
                site: axe_core::bridge::SiteRef {
                    contract: Address([0; 20]),
                    block: 0,
                    offset: *s,
                },
                node: vnode(*s),
                chain: vec![],
            })
            .collect();
        let got = propagate(&g, &facts);
        // Breadth-first reachability from each seed.
        for (i, s) in seeds.iter().enumerate() {
            let mut seen = vec![false; n];
            let mut work = vec![*s];
            while let Some(v) = work.pop() {
                if !std::mem::replace(&mut seen[v], true) {
                    work.extend(edges.iter().filter(|(a, _)| *a == v).map(|(_, b)| *b));
                }
            }
            for (v, reach) in seen.iter().enumerate() {
                let has = got.taint.get(&vnode(v)).is_some_and(|t| t.contains(&i));
                ensure(has == *reach, || format!("taint differs on graph seed {seed}, node {v}"))?;
            }
        }
    }
    Ok("100 DAGs and 100 taint graphs agree with their oracles".into())
}

/// Values a contract's LOG instructions take as indexed topics or data words.
fn logged_values(program: &BridgeProgram, contract: Address) -> BTreeSet<ValueId> {
    let p = program.program(contract);
    let mut out = BTreeSet::new();
    for (_, ins) in p.cfg.sites() {
        if ins.opcode.log_topics().is_none() {
            continue;
        }
        if let Some(f) = p.cfg.facts(ins.offset) {
            out.extend(f.inputs.iter().flat_map(|i| i.iter().skip(3).copied()));
            out.extend(f.mem_inputs.iter().flatten().copied());
        }
    }
    out
}

fn audit(program: &BridgeProgram, a: &Analysis) -> Result<usize, String> {
    let mut checked = 0;
    for e in &a.xdfg.edges {
        let (from_c, to_c) = (e.from.contract(), e.to.contract());
        let crosses = from_c != to_c || from_c.is_none();
        if crosses && e.boundary.is_none() {
            return Err(format!("unlabelled edge {} -> {}", e.from, e.to));
        }
        match e.boundary {
            Some(XLabel::Emitting) => {
                let XdNode::Value { contract, id } = e.from else {
                    return Err(format!("emitting edge from non-value {}", e.from));
                };
                if !logged_values(program, contract).contains(&id) {
                    return Err(format!("emitting edge carries non-argument value {}", e.from));
                }
                checked += 1;
            }
            Some(XLabel::Informing) => {
                let (XdNode::EventArg { index, .. }, XdNode::Value { contract, id }) = (e.from, e.to) else {
                    return Err(format!("malformed informing edge {} -> {}", e.from, e.to));
                };
                let values = &program.program(contract).cfg.values;
                let is_param = values.op_of(id) == Some(Opcode::CALLDATALOAD) && param_index(values, id) == Some(index);
                if !is_param {
                    return Err(format!("informing edge lands on non-parameter {}", e.to));
                }
                checked += 1;
            }
            _ => {}
        }
    }
    for e in a.xcfg.edges_labeled(XLabel::Emitting) {
        let XNode::Block { contract, block } = e.from else {
            return Err(format!("emitting edge from {}", e.from));
        };
        let has_log = program.program(contract).cfg.blocks[&block]
            .instructions
            .iter()
            .any(|i| i.opcode.log_topics().is_some());
        if !has_log {
            return Err(format!("emitting edge from LOG-free block {}", e.from));
        }
        checked += 1;
    }
    Ok(checked)
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for seed in 0..50u64 {
        let path = axe_fixtures::random::random_bridge(seed)
            .write(dir.path())
            .map_err(|e| e.to_string())?;
        let program = load_manifest_file(&path)
            .and_then(load_program)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let a = analyze(&program, &RuleSet::builtin(), &AnalysisConfig::default(), &Progress::new())
            .map_err(|e| format!("seed {seed}: {e}"))?;
        checked += audit(&program, &a).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    ensure(checked > 0, || "no boundary edges were generated".into())?;
    Ok(format!("{checked} boundary edges audited over 50 bridges"))
}

fn criterion_8() -> Outcome {
    for f in axe_fixtures::all().iter().filter(|f| f.name != "slow") {
        let path = manifest(&f.name);
        let args = ["analyze", "--manifest", path.to_str().unwrap_or_default()];
        let (_, first, _) = axe(&args);
        let (_, second, _) = axe(&args);
        ensure(!first.is_empty() && first == second, || format!("{}: reports differ", f.name))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ps: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
    let want = noisy_or(ps.iter().copied());
    for i in 0..1000 {
        ps.shuffle(&mut rng);
        let got = noisy_or(ps.iter().copied());
        ensure(got.to_bits() == want.to_bits(), || format!("permutation {i}: {got} != {want}"))?;
    }
    Ok("reports byte-identical; noisy-OR stable over 1000 permutations".into())
}

fn criterion_9(started: Instant) -> Outcome {
    let expect = [
        ("fixture-a", 1),
        ("fixture-a-patched", 0),
        ("fixture-b", 1),
        ("fixture-b-fixed", 0),
        ("fixture-c", 1),
        ("fixture-d", 0),
        ("case-study-1", 1),
        ("fixture-g", 1),
    ];
    for (name, want) in expect {
        let path = manifest(name);
        let (code, _, _) = axe(&["analyze", "--manifest", path.to_str().unwrap_or_default()]);
        ensure(code == want, || format!("{name}: exit {code}, expected {want}"))?;
    }
    let slow = manifest("slow");
    let (code, out, took) = axe(&["analyze", "--manifest", slow.to_str().unwrap_or_default(), "--timeout-secs", "1"]);
    ensure(code == 3, || format!("slow: exit {code}, expected 3"))?;
    ensure(out.contains("\"timeout\""), || "slow: partial report lacks timeout".into())?;
    ensure(took < Duration::from_secs(10), || format!("slow: took {took:?}"))?;
    let (code, _, _) = axe(&["analyze", "--manifest", "/nonexistent/manifest.toml"]);
    ensure(code == 2, || format!("missing manifest: exit {code}"))?;
    let (code, _, _) = axe(&["analyze", "--bogus"]);
    ensure(code == 2, || format!("bad flag: exit {code}"))?;
    let fixtures = manifest("fixture-a");
    let (code, _, _) = axe(&[
        "analyze",
        "--manifest",
        fixtures.to_str().unwrap_or_default(),
        "--assoc-threshold",
        "1.5",
    ]);
    ensure(code == 2, || format!("bad threshold: exit {code}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("suite took {elapsed:?}"))?;
    Ok(format!("exit codes hold; suite ran in {:.1}s", elapsed.as_secs_f64()))
}

fn main() {
    let started = Instant::now();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("fixture A omission and patched variant", Box::new(criterion_1)),
        ("fixture B integrity and fixed variant", Box::new(criterion_2)),
        ("fixture C heterogeneous P1 checks", Box::new(criterion_3)),
        ("fixture D associations and priors", Box::new(criterion_4)),
        ("native/alien withdrawals lack P3", Box::new(criterion_5)),
        ("path and taint oracles", Box::new(criterion_6)),
        ("cross-chain boundary audit", Box::new(criterion_7)),
        ("determinism", Box::new(criterion_8)),
        ("exit status contract and suite time", Box::new(move || criterion_9(started))),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS  {title}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {title}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
