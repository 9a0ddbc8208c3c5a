//! Findings with stable ids, and their structured and text renderings.

use crate::association::{AcFinding, AcFindingKind, FunctionAnalysis};
use crate::bridge::{Address, BridgeProgram};
use crate::taint::VulnTrace;
use crate::xgraph::{SemFinding, SemKind};
use crate::{AnalysisConfig, Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingKind {
    AccessControlOmission,
    AccessControlViolationPath,
    SemanticGranularity,
    SemanticIntegrity,
}

impl FindingKind {
    pub const ALL: [FindingKind; 4] = [
        FindingKind::AccessControlOmission,
        FindingKind::AccessControlViolationPath,
        FindingKind::SemanticGranularity,
        FindingKind::SemanticIntegrity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::AccessControlOmission => "ACCESS_CONTROL_OMISSION",
            FindingKind::AccessControlViolationPath => "ACCESS_CONTROL_VIOLATION_PATH",
            FindingKind::SemanticGranularity => "SEMANTIC_GRANULARITY",
            FindingKind::SemanticIntegrity => "SEMANTIC_INTEGRITY",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    High,
    Info,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AffectedDoc {
    pub contract: Address,
    pub slot: Option<String>,
    pub name: String,
    pub meaning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceDoc {
    /// Function selectors (or internal entry labels) from the public entry on.
    pub entry_chain: Vec<String>,
    pub entry_names: Vec<String>,
    pub affected: Vec<AffectedDoc>,
    pub rendered: String,
}

impl TraceDoc {
    fn from_trace(t: &VulnTrace) -> TraceDoc {
        TraceDoc {
            entry_chain: t.entry_chain.iter().map(|f| f.key.to_string()).collect(),
            entry_names: t.entry_names.clone(),
            affected: t
                .affected
                .iter()
                .map(|v| AffectedDoc {
                    contract: v.contract,
                    slot: v.slot.map(|s| s.to_string()),
                    name: v.name.clone(),
                    meaning: v.meaning.map(|m| m.as_str().to_string()),
                })
                .collect(),
            rendered: t.render(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Finding {
    pub id: String,
    pub kind: FindingKind,
    pub severity: Severity,
    pub contract: Address,
    pub function_selector: String,
    pub function: String,
    pub evidence: Value,
    pub trace: Option<TraceDoc>,
}

fn finding_id(kind: FindingKind, contract: Address, function: &str, witness: &Value) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update([0]);
    h.update(contract.0);
    h.update([0]);
    h.update(function.as_bytes());
    h.update([0]);
    h.update(witness.to_string().as_bytes());
    hex::encode(&h.finalize()[..8])
}

fn ac_evidence(f: &AcFinding, analyses: &[FunctionAnalysis]) -> Value {
    let fa = analyses.iter().find(|a| a.function == f.function);
    let label = |site: &crate::bridge::SiteRef| {
        fa.and_then(|fa| fa.resources.iter().find(|r| r.site == *site && r.kind != crate::access::ResourceKind::AbiEntry))
            .map(|r| json!({"kind": r.kind.letter().to_string(), "label": r.label, "offset": r.site.offset}))
            .unwrap_or_else(|| json!({"offset": site.offset}))
    };
    let mut ev = json!({
        "missing": f.missing,
        "resources": f.resources.iter().map(label).collect::<Vec<_>>(),
    });
    if let Some(cov) = &f.coverage {
        ev["coverage"] = serde_json::to_value(cov).expect("coverage serializes");
    }
    if let Some(fa) = fa {
        let assoc: Vec<Value> = fa
            .associations
            .iter()
            .filter(|a| f.resources.contains(&fa.resources[a.resource].site))
            .map(|a| {
                let c = &fa.checks[a.check];
                json!({
                    "check": c.site.offset,
                    "perspective": c.perspective.map(|p| p.to_string()).unwrap_or_else(|| "Unclassified".into()),
                    "resource": fa.resources[a.resource].site.offset,
                    "path": a.path,
                    "combined": a.combined,
                    "evidence": a.prior_evidence.iter().map(|e| json!({
                        "pattern": e.pattern.id(),
                        "prior": e.prior,
                        "probability": e.probability,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        ev["associations"] = Value::Array(assoc);
    }
    if !f.paths.is_empty() {
        ev["paths"] = Value::Array(
            f.paths
                .iter()
                .map(|(func, id)| {
                    let blocks = analyses
                        .iter()
                        .find(|a| a.function == *func)
                        .and_then(|a| a.paths.get(*id))
                        .map(|p| p.blocks.clone())
                        .unwrap_or_default();
                    json!({"function": func.key.to_string(), "path": id, "blocks": blocks})
                })
                .collect(),
        );
    }
    ev
}

fn ac_witness(f: &AcFinding) -> Value {
    json!({
        "missing": f.missing,
        "resources": f.resources.iter().map(|s| s.offset).collect::<Vec<_>>(),
        "paths": f.paths.iter().map(|(func, id)| format!("{}#{id}", func.key)).collect::<Vec<_>>(),
    })
}

/// One finding per indicator, sorted and de-duplicated. `traces` holds the
/// access-control indicators' traces first, then the semantic ones.
pub fn assemble(
    ac: &[AcFinding],
    sem: &[SemFinding],
    traces: &[Option<VulnTrace>],
    program: &BridgeProgram,
    analyses: &[FunctionAnalysis],
) -> Vec<Finding> {
    let mut out: Vec<Finding> = Vec::new();
    let trace_at = |i: usize| traces.get(i).cloned().flatten();
    for (i, f) in ac.iter().enumerate() {
        let kind = match f.kind {
            AcFindingKind::Omission => FindingKind::AccessControlOmission,
            AcFindingKind::ViolationPath => FindingKind::AccessControlViolationPath,
        };
        let selector = f.function.key.to_string();
        let trace = trace_at(i);
        out.push(Finding {
            id: finding_id(kind, f.function.contract, &selector, &ac_witness(f)),
            kind,
            severity: if trace.is_some() { Severity::High } else { Severity::Info },
            contract: f.function.contract,
            function_selector: selector,
            function: f.function_name.clone(),
            evidence: ac_evidence(f, analyses),
            trace: trace.as_ref().map(TraceDoc::from_trace),
        });
    }
    for (j, s) in sem.iter().enumerate() {
        let kind = match s.kind {
            SemKind::Granularity => FindingKind::SemanticGranularity,
            SemKind::Integrity => FindingKind::SemanticIntegrity,
        };
        let selector = s.function.key.to_string();
        let witness = serde_json::to_value(&s.witness).expect("witness serializes");
        let trace = trace_at(ac.len() + j);
        let evidence = json!({
            "witness": witness,
            "deposits": s.deposits.iter().map(|d| program.function_name(*d)).collect::<Vec<_>>(),
            "affected": s.affected.iter().map(|v| v.name.clone()).collect::<Vec<_>>(),
        });
        out.push(Finding {
            id: finding_id(kind, s.function.contract, &selector, &witness),
            kind,
            severity: if trace.is_some() { Severity::High } else { Severity::Info },
            contract: s.function.contract,
            function_selector: selector,
            function: s.function_name.clone(),
            evidence,
            trace: trace.as_ref().map(TraceDoc::from_trace),
        });
    }
    out.sort_by(|a, b| {
        (a.contract, &a.function_selector, a.kind, &a.id).cmp(&(b.contract, &b.function_selector, b.kind, &b.id))
    });
    let mut merged: Vec<Finding> = Vec::new();
    for f in out {
        match merged.last_mut() {
            Some(last) if last.id == f.id => {
                if last.trace.is_none() && f.trace.is_some() {
                    *last = f;
                }
            }
            _ => merged.push(f),
        }
    }
    merged
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigDoc {
    pub assoc_threshold: f64,
    pub max_path_depth: usize,
    pub loop_unroll: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub by_kind: BTreeMap<String, usize>,
    pub total: usize,
    pub high: usize,
    pub info: usize,
}

impl Summary {
    pub fn of(findings: &[Finding]) -> Summary {
        let mut by_kind: BTreeMap<String, usize> =
            FindingKind::ALL.iter().map(|k| (k.as_str().to_string(), 0)).collect();
        for f in findings {
            *by_kind.entry(f.kind.as_str().to_string()).or_default() += 1;
        }
        Summary {
            by_kind,
            total: findings.len(),
            high: findings.iter().filter(|f| f.severity == Severity::High).count(),
            info: findings.iter().filter(|f| f.severity == Severity::Info).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimeoutDoc {
    pub after_secs: u64,
    pub completed_stages: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tool_version: String,
    pub bridge: String,
    pub config: ConfigDoc,
    pub summary: Summary,
    pub findings: Vec<Finding>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout: Option<TimeoutDoc>,
}

impl Report {
    pub fn new(bridge: &str, config: &AnalysisConfig, findings: Vec<Finding>, notes: Vec<String>, warnings: Vec<String>) -> Report {
        Report {
            tool_version: TOOL_VERSION.to_string(),
            bridge: bridge.to_string(),
            config: ConfigDoc {
                assoc_threshold: config.assoc_threshold,
                max_path_depth: config.max_path_depth,
                loop_unroll: config.loop_unroll,
            },
            summary: Summary::of(&findings),
            findings,
            notes,
            warnings,
            timeout: None,
        }
    }

    pub fn high_count(&self) -> usize {
        self.summary.high
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Structured,
    Text,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s {
            "structured" | "json" => Ok(Format::Structured),
            "text" => Ok(Format::Text),
            other => Err(Error::Usage(format!(
                "unknown format `{other}` (expected `structured` or `text`)"
            ))),
        }
    }
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => render_text(report),
    }
}

fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "bridge: {}", r.bridge);
    let _ = writeln!(
        s,
        "findings: {} (high {}, info {})",
        r.summary.total, r.summary.high, r.summary.info
    );
    if let Some(t) = &r.timeout {
        let _ = writeln!(
            s,
            "TIMEOUT after {}s; completed stages: {}",
            t.after_secs,
            t.completed_stages.join(", ")
        );
    }
    for f in &r.findings {
        let _ = writeln!(s);
        let sev = match f.severity {
            Severity::High => "high",
            Severity::Info => "info",
        };
        let _ = writeln!(
            s,
            "[{sev}] {} {} {} ({}) id={}",
            f.kind.as_str(),
            f.contract,
            f.function,
            f.function_selector,
            f.id
        );
        if let Some(m) = f.evidence.get("missing").and_then(Value::as_array) {
            let names: Vec<&str> = m.iter().filter_map(Value::as_str).collect();
            let _ = writeln!(s, "  missing: {}", names.join(", "));
        }
        if let Some(a) = f.evidence.get("affected").and_then(Value::as_array) {
            let names: Vec<&str> = a.iter().filter_map(Value::as_str).collect();
            let _ = writeln!(s, "  affected: {}", names.join(", "));
        }
        match &f.trace {
            Some(t) => {
                let _ = writeln!(s, "  trace: {}", t.rendered);
            }
            None => {
                let _ = writeln!(s, "  trace: none (no external input reaches the indicator)");
            }
        }
    }
    if !r.notes.is_empty() {
        let _ = writeln!(s, "\nnotes:");
        for n in &r.notes {
            let _ = writeln!(s, "  - {n}");
        }
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "\nwarnings:");
        for w in &r.warnings {
            let _ = writeln!(s, "  - {w}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        let r = Report::new("b", &AnalysisConfig::default(), vec![], vec![], vec![]);
        let doc: Value = serde_json::from_str(&render(&r, Format::Structured)).unwrap();
        assert_eq!(doc["findings"], json!([]));
        assert_eq!(doc["summary"]["total"], 0);
        for k in FindingKind::ALL {
            assert_eq!(doc["summary"]["by_kind"][k.as_str()], 0);
        }
        assert_eq!(render(&r, Format::Text), render(&r, Format::Text));
    }

    #[test]
    fn unknown_format_is_usage_error() {
        assert!(matches!("yaml".parse::<Format>(), Err(Error::Usage(_))));
    }
}
