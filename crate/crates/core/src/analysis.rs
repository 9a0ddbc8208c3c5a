//! The whole pipeline, from a bound program to a report.

use crate::access::RuleSet;
use crate::association::{
    analyze_function, detect_omission, detect_violation_paths, AcFinding, ContractContext, FunctionAnalysis,
};
use crate::bridge::manifest::ConfigOverrides;
use crate::bridge::{load_manifest_file, load_program, BridgeProgram};
use crate::report::{assemble, Finding, Report};
use crate::taint::{discover_traces, propagate, record_sinks, seed_sources, Indicator, TaintMap};
use crate::xgraph::{build_xcfg, build_xdfg, check_granularity, check_integrity, SemFinding, Xcfg, Xdfg};
use crate::evm::FunctionBody;
use crate::{AnalysisConfig, Error, Result};
use rayon::prelude::*;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

pub const DEFAULT_TIMEOUT_SECS: u64 = 600;

/// What has completed so far, for reporting after a timeout.
#[derive(Clone, Debug, Default)]
pub struct Partial {
    pub bridge: String,
    pub stages: Vec<String>,
    pub findings: Vec<Finding>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
}

/// Shared between the analysis and whoever is watching the clock.
#[derive(Debug, Default)]
pub struct Progress {
    cancel: AtomicBool,
    state: Mutex<Partial>,
}

impl Progress {
    pub fn new() -> Progress {
        Progress::default()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> Partial {
        self.state.lock().expect("progress lock").clone()
    }

    fn update(&self, f: impl FnOnce(&mut Partial)) {
        f(&mut self.state.lock().expect("progress lock"));
    }

    fn stage(&self, name: &str) -> Result<()> {
        log::info!("stage done: {name}");
        self.update(|p| p.stages.push(name.to_string()));
        if self.is_cancelled() {
            return Err(Error::Cancelled);
        }
        Ok(())
    }
}

/// Defaults, then manifest settings, then command-line settings.
pub fn resolve_config(manifest: &ConfigOverrides, cli: &ConfigOverrides) -> Result<(AnalysisConfig, u64)> {
    let mut c = AnalysisConfig::default();
    let mut timeout = DEFAULT_TIMEOUT_SECS;
    for o in [manifest, cli] {
        if let Some(v) = o.assoc_threshold {
            c.assoc_threshold = v;
        }
        if let Some(v) = o.max_path_depth {
            c.max_path_depth = v;
        }
        if let Some(v) = o.loop_unroll {
            c.loop_unroll = v;
        }
        if let Some(v) = o.timeout_secs {
            timeout = v;
        }
    }
    c.validate()?;
    if timeout == 0 {
        return Err(Error::Usage("timeout_secs must be at least 1".into()));
    }
    Ok((c, timeout))
}

/// Every intermediate result plus the final report.
pub struct Analysis {
    pub functions: Vec<FunctionAnalysis>,
    pub ac_findings: Vec<AcFinding>,
    pub sem_findings: Vec<SemFinding>,
    pub xcfg: Xcfg,
    pub xdfg: Xdfg,
    pub taint: TaintMap,
    pub report: Report,
}

pub fn analyze(program: &BridgeProgram, rules: &RuleSet, config: &AnalysisConfig, progress: &Progress) -> Result<Analysis> {
    config.validate()?;
    let bridge = program.descriptor.name.clone();
    let mut warnings = program.warnings.clone();
    progress.update(|p| {
        p.bridge = bridge.clone();
        p.warnings = warnings.clone();
    });
    let cancel = || progress.is_cancelled();

    let contexts: Vec<ContractContext<'_>> = program.programs.values().map(ContractContext::new).collect();
    let jobs: Vec<(usize, &FunctionBody)> = contexts
        .iter()
        .enumerate()
        .flat_map(|(i, ctx)| ctx.program.cfg.public_functions().map(move |f| (i, f)))
        .collect();
    let functions: Vec<FunctionAnalysis> = jobs
        .par_iter()
        .map(|(i, f)| analyze_function(program, &contexts[*i], f, rules, config, &cancel))
        .collect();
    for fa in functions.iter().filter(|f| f.truncated) {
        warnings.push(format!(
            "{}: path enumeration truncated (max_path_depth {}, loop_unroll {})",
            fa.name, config.max_path_depth, config.loop_unroll
        ));
    }
    progress.stage("access-control model")?;

    let mut ac_findings = detect_omission(&functions, rules, config.assoc_threshold);
    ac_findings.extend(detect_violation_paths(&functions, rules, config.assoc_threshold));
    let partial = assemble(&ac_findings, &[], &[], program, &functions);
    progress.update(|p| {
        p.findings = partial;
        p.warnings = warnings.clone();
    });
    progress.stage("access-control detection")?;

    let xcfg = build_xcfg(program);
    let xdfg = build_xdfg(&xcfg, program);
    warnings.extend(xcfg.warnings.iter().cloned());
    progress.stage("cross-chain graphs")?;

    let mut sem_findings = check_granularity(&xcfg, program);
    sem_findings.extend(check_integrity(&xcfg, &xdfg, program));
    let partial = assemble(&ac_findings, &sem_findings, &[], program, &functions);
    progress.update(|p| {
        p.findings = partial;
        p.warnings = warnings.clone();
    });
    progress.stage("semantic detection")?;

    let seeds = seed_sources(program);
    let mut taint = propagate(&xdfg, &seeds);
    record_sinks(program, &mut taint);
    warnings.extend(taint.diagnostics.iter().cloned());
    let indicators: Vec<Indicator<'_>> = ac_findings
        .iter()
        .map(Indicator::Ac)
        .chain(sem_findings.iter().map(Indicator::Sem))
        .collect();
    let outcome = discover_traces(&indicators, &taint, &xdfg, program, &functions);
    progress.stage("taint")?;

    let mut notes = outcome.notes;
    for fa in &functions {
        notes.extend(fa.coverage.notes.iter().map(|n| format!("{}: {n}", fa.name)));
    }
    notes.extend(xdfg.blocked.iter().cloned());
    let findings = assemble(&ac_findings, &sem_findings, &outcome.traces, program, &functions);
    let report = Report::new(&bridge, config, findings, notes, warnings);
    progress.update(|p| {
        p.findings = report.findings.clone();
        p.notes = report.notes.clone();
        p.warnings = report.warnings.clone();
    });
    progress.stage("report")?;
    Ok(Analysis {
        functions,
        ac_findings,
        sem_findings,
        xcfg,
        xdfg,
        taint,
        report,
    })
}

/// Load a manifest and analyze it with `cli` settings layered on top.
pub fn analyze_manifest(path: &Path, cli: &ConfigOverrides, progress: &Progress) -> Result<Analysis> {
    let descriptor = load_manifest_file(path)?;
    let (config, _) = resolve_config(&descriptor.config, cli)?;
    let program = load_program(descriptor)?;
    analyze(&program, &RuleSet::builtin(), &config, progress)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_beats_manifest_beats_default() {
        let manifest = ConfigOverrides {
            max_path_depth: Some(10),
            loop_unroll: Some(3),
            ..Default::default()
        };
        let cli = ConfigOverrides {
            loop_unroll: Some(2),
            ..Default::default()
        };
        let (c, t) = resolve_config(&manifest, &cli).unwrap();
        assert_eq!(c.max_path_depth, 10);
        assert_eq!(c.loop_unroll, 2);
        assert_eq!(c.assoc_threshold, 0.5);
        assert_eq!(t, DEFAULT_TIMEOUT_SECS);
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        let bad = ConfigOverrides {
            assoc_threshold: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(resolve_config(&bad, &ConfigOverrides::default()), Err(Error::Usage(_))));
        let zero = ConfigOverrides {
            timeout_secs: Some(0),
            ..Default::default()
        };
        assert!(matches!(resolve_config(&ConfigOverrides::default(), &zero), Err(Error::Usage(_))));
    }
}
