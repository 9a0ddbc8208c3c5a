//! Command-line driver.

use axe_core::access::RuleSet;
use axe_core::analysis::{analyze, resolve_config, Analysis, Progress};
use axe_core::bridge::manifest::ConfigOverrides;
use axe_core::bridge::{load_manifest_file, load_program};
use axe_core::report::{render, Format, Report, Severity, TimeoutDoc};
use axe_core::Error;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

/// Time a cancelled analysis gets to hand back what it has.
const GRACE: Duration = Duration::from_secs(2);

#[derive(Parser, Debug)]
#[command(name = "axe", version, about = "Find cross-chain vulnerabilities in bridge contract bytecode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze one bridge.
    Analyze {
        /// Bridge manifest (TOML).
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Analyze every manifest under a directory.
    Batch {
        /// Directory holding `*.toml` manifests or `*/manifest.toml`.
        dir: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print the built-in security check model.
    Rules {
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct RunOpts {
    /// Report file (for `batch`, a directory of reports).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `structured` (JSON) or `text`.
    #[arg(long, default_value = "structured")]
    format: String,
    /// Minimum probability for a check to count as protecting a resource.
    #[arg(long)]
    assoc_threshold: Option<f64>,
    /// Longest path explored, in blocks.
    #[arg(long)]
    max_path_depth: Option<usize>,
    #[arg(long)]
    loop_unroll: Option<usize>,
    /// Give up after this long and write a partial report.
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Write the cross-chain graphs next to the report.
    #[arg(long)]
    dump_graphs: bool,
}

impl RunOpts {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            assoc_threshold: self.assoc_threshold,
            max_path_depth: self.max_path_depth,
            loop_unroll: self.loop_unroll,
            timeout_secs: self.timeout_secs,
        }
    }
}

/// Result of analyzing one manifest.
pub enum Outcome {
    Done { report: Report, graphs: Option<(String, String)> },
    TimedOut(Report),
    Failed(Error),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Done { report, .. } if report.high_count() > 0 => EXIT_FINDINGS,
            Outcome::Done { .. } => EXIT_CLEAN,
            Outcome::TimedOut(_) => EXIT_TIMEOUT,
            Outcome::Failed(_) => EXIT_USAGE,
        }
    }

    pub fn report(&self) -> Option<&Report> {
        match self {
            Outcome::Done { report, .. } | Outcome::TimedOut(report) => Some(report),
            Outcome::Failed(_) => None,
        }
    }
}

/// Load, analyze and report one manifest within the configured time.
pub fn analyze_with_timeout(manifest: &Path, cli: &ConfigOverrides, want_graphs: bool) -> Outcome {
    let descriptor = match load_manifest_file(manifest) {
        Ok(d) => d,
        Err(e) => return Outcome::Failed(e),
    };
    let (config, timeout) = match resolve_config(&descriptor.config, cli) {
        Ok(c) => c,
        Err(e) => return Outcome::Failed(e),
    };
    let progress = Arc::new(Progress::new());
    let (tx, rx) = mpsc::channel();
    let worker = Arc::clone(&progress);
    std::thread::spawn(move || {
        let result = load_program(descriptor).and_then(|p| {
            let a = analyze(&p, &RuleSet::builtin(), &config, &worker)?;
            let graphs = want_graphs.then(|| (a.xcfg.dump(), a.xdfg.dump()));
            Ok((a, graphs))
        });
        let _ = tx.send(result);
    });
    let done = |r: Result<(Analysis, Option<(String, String)>), Error>| match r {
        Ok((a, graphs)) => Outcome::Done {
            report: a.report,
            graphs,
        },
        Err(e) => Outcome::Failed(e),
    };
    match rx.recv_timeout(Duration::from_secs(timeout)) {
        Ok(r) => done(r),
        Err(_) => {
            progress.cancel();
            log::warn!("{}: analysis timed out after {timeout}s", manifest.display());
            let _ = rx.recv_timeout(GRACE);
            let p = progress.snapshot();
            let mut report = Report::new(&p.bridge, &config, p.findings, p.notes, p.warnings);
            report.timeout = Some(TimeoutDoc {
                after_secs: timeout,
                completed_stages: p.stages,
            });
            Outcome::TimedOut(report)
        }
    }
}

fn write_out(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn cmd_analyze(manifest: &Path, opts: &RunOpts, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let format: Format = match opts.format.parse() {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(stderr, "axe: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = analyze_with_timeout(manifest, &opts.overrides(), opts.dump_graphs);
    let Some(report) = outcome.report() else {
        if let Outcome::Failed(e) = &outcome {
            let _ = writeln!(stderr, "axe: {e}");
        }
        return EXIT_USAGE;
    };
    if let Err(e) = write_out(opts.out.as_deref(), &render(report, format), stdout) {
        let _ = writeln!(stderr, "axe: {e}");
        return EXIT_USAGE;
    }
    if let Outcome::Done {
        graphs: Some((xcfg, xdfg)),
        ..
    } = &outcome
    {
        match &opts.out {
            Some(out) => {
                let side = |ext: &str| PathBuf::from(format!("{}.{ext}", out.display()));
                let written = std::fs::write(side("xcfg.txt"), xcfg).and_then(|_| std::fs::write(side("xdfg.txt"), xdfg));
                if let Err(e) = written {
                    let _ = writeln!(stderr, "axe: cannot write graphs: {e}");
                }
            }
            None => {
                let _ = write!(stderr, "# xCFG\n{xcfg}# xDFG\n{xdfg}");
            }
        }
    }
    outcome.exit_code()
}

/// Manifests directly in `dir` or one level down, in path order.
pub fn find_manifests(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .max_depth(2)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "toml"))
        .map(|e| e.into_path())
        .collect();
    out.sort();
    out
}

/// Analyze manifests on plain threads. Each analysis already fans out on
/// the rayon pool, so the workers here must not be pool threads themselves.
fn run_all(manifests: &[PathBuf], overrides: &ConfigOverrides) -> Vec<(PathBuf, Outcome)> {
    let workers = std::thread::available_parallelism().map_or(2, |n| n.get()).min(manifests.len());
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<(usize, Outcome)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(m) = manifests.get(i) else {
                    break;
                };
                let outcome = analyze_with_timeout(m, overrides, false);
                done.lock().unwrap_or_else(|e| e.into_inner()).push((i, outcome));
            });
        }
    });
    let mut done = done.into_inner().unwrap_or_else(|e| e.into_inner());
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(i, o)| (manifests[i].clone(), o)).collect()
}

struct Row {
    name: String,
    status: &'static str,
    findings: usize,
    high: usize,
    detail: String,
}

fn cmd_batch(dir: &Path, opts: &RunOpts, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let format: Format = match opts.format.parse() {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(stderr, "axe: {e}");
            return EXIT_USAGE;
        }
    };
    let manifests = find_manifests(dir);
    if manifests.is_empty() {
        let _ = writeln!(stderr, "axe: no manifests under {}", dir.display());
        return EXIT_USAGE;
    }
    let out_dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("axe-reports"));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        let _ = writeln!(stderr, "axe: cannot create {}: {e}", out_dir.display());
        return EXIT_USAGE;
    }
    let overrides = opts.overrides();
    let ext = match format {
        Format::Structured => "json",
        Format::Text => "txt",
    };
    let results = run_all(&manifests, &overrides);
    let mut rows = Vec::new();
    let mut code = EXIT_CLEAN;
    for (path, outcome) in &results {
        let rel = path.strip_prefix(dir).unwrap_or(path).display().to_string();
        match outcome.report() {
            Some(r) => {
                let file = out_dir.join(format!("{}.{ext}", r.bridge));
                if let Err(e) = std::fs::write(&file, render(r, format)) {
                    let _ = writeln!(stderr, "axe: cannot write {}: {e}", file.display());
                }
                rows.push(Row {
                    name: r.bridge.clone(),
                    status: if r.timeout.is_some() { "timeout" } else { "ok" },
                    findings: r.summary.total,
                    high: r.findings.iter().filter(|f| f.severity == Severity::High).count(),
                    detail: file.display().to_string(),
                });
            }
            None => {
                let msg = match outcome {
                    Outcome::Failed(e) => e.to_string(),
                    _ => String::new(),
                };
                rows.push(Row {
                    name: rel,
                    status: "error",
                    findings: 0,
                    high: 0,
                    detail: msg,
                });
            }
        }
        code = code.max(match outcome.exit_code() {
            EXIT_FINDINGS => 1,
            EXIT_TIMEOUT => 2,
            EXIT_USAGE => 3,
            _ => 0,
        });
    }
    rows.sort_by(|a, b| b.findings.cmp(&a.findings).then_with(|| a.name.cmp(&b.name)));
    let _ = writeln!(stdout, "{:<28} {:<8} {:>8} {:>5}  detail", "bridge", "status", "findings", "high");
    for r in &rows {
        let _ = writeln!(
            stdout,
            "{:<28} {:<8} {:>8} {:>5}  {}",
            r.name, r.status, r.findings, r.high, r.detail
        );
    }
    let errors = rows.iter().filter(|r| r.status == "error").count();
    let flagged = rows.iter().filter(|r| r.findings > 0).count();
    let _ = writeln!(
        stdout,
        "{} bridges, {} flagged, {} errors",
        rows.len(),
        flagged,
        errors
    );
    match code {
        1 => EXIT_FINDINGS,
        2 => EXIT_TIMEOUT,
        3 => EXIT_USAGE,
        _ => EXIT_CLEAN,
    }
}

/// Run the command line `args` (program name first); returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_CLEAN };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Analyze { manifest, opts } => cmd_analyze(&manifest, &opts, stdout, stderr),
        Command::Batch { dir, opts } => cmd_batch(&dir, &opts, stdout, stderr),
        Command::Rules { dump } => {
            if !dump {
                let _ = writeln!(stderr, "axe: `rules` needs --dump");
                return EXIT_USAGE;
            }
            let _ = writeln!(stdout, "{}", RuleSet::builtin().to_json());
            EXIT_CLEAN
        }
    }
}
