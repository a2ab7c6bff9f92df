//! `gkab` command-line front end.
//!
//! Exit codes: 0 success or property holds, 1 property fails, 2 usage,
//! parse or validation error, 3 resource limit reached.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gkab::action::{build_ts_skab, ActionError, Filter, Kab};
use gkab::bisim::{e_bisimilar, j_bisimilar, l_bisimilar, s_bisimilar};
use gkab::compiler::{tau_b, tau_d, tau_j, tgkab, tgkabb, tgkabc, tgkabe, tkabs, CompileError};
use gkab::golog::{build_ts_gkab, Gkab};
use gkab::kb::{inc_set, is_consistent, ABox};
use gkab::mu::{model_check, Formula};
use gkab::repair::{b_repairs, c_repair, evolve, RepairError};
use gkab::syntax::{parse_instance_with, Instance};
use gkab::ts::{BuildError, Limits, Ts};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gkab", version, about = "Verification and translation of knowledge and action bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Abort exploration beyond this many states.
    #[arg(long, global = true, default_value_t = 100_000)]
    max_states: usize,
    /// Abort when a run mentions more than this many constants.
    #[arg(long, global = true)]
    max_run_adom: Option<usize>,
    /// Write the JSON report to this file (`-` for stdout).
    #[arg(long, global = true, value_name = "OUT")]
    json: Option<PathBuf>,
    /// Seed for fresh constant generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the explored transition system as JSON.
    #[arg(long, global = true, value_name = "OUT.json")]
    dump_ts: Option<PathBuf>,
    /// Write the explored transition system in Graphviz format.
    #[arg(long, global = true, value_name = "OUT.dot")]
    dot: Option<PathBuf>,
    /// Accept functionality on roles that appear on the right of a role inclusion.
    #[arg(long, global = true)]
    allow_specialized_funct: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether the initial ABox is consistent with the TBox.
    CheckConsistency { file: PathBuf },
    /// Compute the repairs of the initial ABox.
    Repairs {
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: RepairKind,
    },
    /// Apply a bold evolution update to the initial ABox.
    Evolve {
        file: PathBuf,
        /// Facts to add, e.g. "N(a); P(a,b)".
        #[arg(long, default_value = "")]
        add: String,
        /// Facts to delete.
        #[arg(long, default_value = "")]
        del: String,
    },
    /// Explore the transition system of the instance.
    BuildTs {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Semantics::S)]
        semantics: Semantics,
        /// Use the condition-action rules instead of the program.
        #[arg(long)]
        as_kab: bool,
    },
    /// Translate the instance and print the result as an instance file.
    Compile {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: Target,
    },
    /// Model check a named formula.
    Verify {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Semantics::S)]
        semantics: Semantics,
        #[arg(long)]
        formula: String,
        /// Use the condition-action rules instead of the program.
        #[arg(long)]
        as_kab: bool,
    },
    /// Decide a bisimulation between the systems of two instance files.
    Bisim {
        #[arg(long, value_enum)]
        kind: BisimKind,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, value_enum, default_value_t = Semantics::S)]
        left_semantics: Semantics,
        #[arg(long, value_enum, default_value_t = Semantics::S)]
        right_semantics: Semantics,
    },
    /// Translate formulas to the vocabulary of a compiled system.
    TranslateFormula {
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: FormulaKind,
        /// Translate only this formula.
        #[arg(long)]
        formula: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RepairKind {
    B,
    C,
}

#[derive(Clone, Copy, ValueEnum)]
enum Semantics {
    S,
    B,
    C,
    E,
}

impl Semantics {
    fn filter(self) -> Filter {
        match self {
            Semantics::S => Filter::S,
            Semantics::B => Filter::B,
            Semantics::C => Filter::C,
            Semantics::E => Filter::E,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Semantics::S => "s",
            Semantics::B => "b",
            Semantics::C => "c",
            Semantics::E => "e",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    SgkabFromSkab,
    SgkabFromB,
    SgkabFromC,
    SgkabFromE,
    Skab,
}

#[derive(Clone, Copy, ValueEnum)]
enum BisimKind {
    E,
    J,
    L,
    S,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulaKind {
    B,
    D,
    J,
}

/// A failed command with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }

    fn limit(msg: impl Into<String>) -> Self {
        Failure { code: 3, msg: msg.into() }
    }
}

impl From<RepairError> for Failure {
    fn from(e: RepairError) -> Self {
        match e {
            RepairError::CombinatorialLimit(_) => Failure::limit(e.to_string()),
            e => Failure::usage(e.to_string()),
        }
    }
}

impl From<ActionError> for Failure {
    fn from(e: ActionError) -> Self {
        match e {
            ActionError::Repair(r) => r.into(),
            e => Failure::usage(e.to_string()),
        }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::StateLimitExceeded(_) | BuildError::RunBoundExceeded(_) => Failure::limit(e.to_string()),
            BuildError::Action(a) => a.into(),
            e => Failure::usage(e.to_string()),
        }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::usage(e.to_string())
            }
        }
    )*};
}

usage_from!(gkab::kb::KbError, gkab::mu::MuError, CompileError, gkab::syntax::SyntaxError);

/// Result of a successful command.
struct Report {
    holds: bool,
    text: String,
    json: Value,
}

impl Report {
    fn done(text: String, json: Value) -> Self {
        Report { holds: true, text, json }
    }
}

/// The dynamic part of an instance.
enum System {
    Golog(Gkab),
    Rules(Kab),
}

fn read_instance(path: &Path, cli: &Cli) -> Result<Instance, Failure> {
    let src = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    parse_instance_with(&src, cli.allow_specialized_funct).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn system(inst: &Instance, as_kab: bool) -> Result<System, Failure> {
    match (inst.gkab(), inst.kab()) {
        (Some(g), _) if !as_kab => Ok(System::Golog(g)),
        (_, Some(k)) => Ok(System::Rules(k)),
        _ if as_kab => Err(Failure::usage("instance has no process block")),
        _ => Err(Failure::usage("instance has neither a program nor a process block")),
    }
}

fn build(sys: &System, sem: Semantics, inst: &Instance, cli: &Cli) -> Result<Ts, Failure> {
    let limits = Limits { max_states: cli.max_states, max_run_adom: cli.max_run_adom };
    let ts = match (sys, sem) {
        (System::Golog(g), _) => build_ts_gkab(g, sem.filter(), &inst.services, &limits)?,
        (System::Rules(k), Semantics::S) => build_ts_skab(k, &inst.services, &limits)?,
        (System::Rules(k), _) => build_ts_gkab(&tkabs(k).0, sem.filter(), &inst.services, &limits)?,
    };
    write_file(cli.dump_ts.as_deref(), &ts.to_json_pretty())?;
    write_file(cli.dot.as_deref(), &ts.to_dot())?;
    Ok(ts)
}

fn write_file(path: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match path {
        None => Ok(()),
        Some(p) if p == Path::new("-") => {
            println!("{contents}");
            Ok(())
        }
        Some(p) => fs::write(p, contents).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
    }
}

fn facts_json(a: &ABox) -> Value {
    a.iter().map(|f| f.to_string()).collect()
}

/// Parses a `;`-separated fact list against the vocabulary of `inst`.
fn parse_facts(src: &str, inst: &Instance, flag: &str) -> Result<ABox, Failure> {
    let body = src.trim();
    let sep = if body.is_empty() || body.ends_with(';') { "" } else { ";" };
    let header = Instance { tbox: inst.tbox.clone(), ..Instance::default() };
    let text = format!("{header}abox {{ {body}{sep} }}");
    parse_instance_with(&text, true).map(|i| i.abox).map_err(|e| Failure::usage(format!("{flag}: {e}")))
}

fn translate(f: &Formula, kind: FormulaKind) -> Result<Formula, Failure> {
    Ok(match kind {
        FormulaKind::B => tau_b(f)?,
        FormulaKind::D => tau_d(f),
        FormulaKind::J => tau_j(f)?,
    })
}

fn check_consistency(inst: &Instance) -> Result<Report, Failure> {
    let consistent = is_consistent(&inst.tbox, &inst.abox)?;
    let conflicts = inc_set(&inst.tbox, &inst.abox)?;
    let text = if consistent {
        "consistent".to_string()
    } else {
        format!("inconsistent; facts involved in a conflict: {conflicts}")
    };
    Ok(Report { holds: consistent, text, json: json!({ "consistent": consistent, "conflicting": facts_json(&conflicts) }) })
}

fn repairs(inst: &Instance, kind: RepairKind) -> Result<Report, Failure> {
    let (label, reps) = match kind {
        RepairKind::B => ("b", b_repairs(&inst.tbox, &inst.abox)?),
        RepairKind::C => ("c", vec![c_repair(&inst.tbox, &inst.abox)?]),
    };
    let text = reps.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n");
    let json = json!({ "kind": label, "repairs": reps.iter().map(facts_json).collect::<Vec<_>>() });
    Ok(Report::done(text, json))
}

fn compile(inst: &Instance, to: Target, seed: u64) -> Result<Report, Failure> {
    let gkab = || system(inst, false).and_then(|s| match s {
        System::Golog(g) => Ok(g),
        System::Rules(_) => Err(Failure::usage("instance has no program")),
    });
    let mut out = Instance { services: inst.services.clone(), distinguished: inst.distinguished.clone(), ..Instance::default() };
    let (g, formula_kind) = match to {
        Target::SgkabFromSkab => {
            let Some(k) = inst.kab() else { return Err(Failure::usage("instance has no process block")) };
            let (g, warnings) = tkabs(&k);
            for w in warnings {
                eprintln!("warning: {w}");
            }
            out.formulas = inst.formulas.clone();
            (g, None)
        }
        Target::SgkabFromB => (tgkabb(&gkab()?)?, Some(FormulaKind::B)),
        Target::SgkabFromC => (tgkabc(&gkab()?)?, Some(FormulaKind::D)),
        Target::SgkabFromE => (tgkabe(&gkab()?)?, Some(FormulaKind::D)),
        Target::Skab => {
            let (k, _, constants) = tgkab(&gkab()?, seed)?;
            out.distinguished.extend(constants);
            for (n, f) in &inst.formulas {
                out.formulas.push((n.clone(), tau_j(f)?));
            }
            out.tbox = k.tbox;
            out.abox = k.abox;
            out.actions = k.actions;
            out.process = Some(k.process);
            out.collect_constants();
            let text = out.to_string();
            return Ok(Report::done(text.clone(), json!({ "target": "skab", "instance": text })));
        }
    };
    if let Some(kind) = formula_kind {
        for (n, f) in &inst.formulas {
            out.formulas.push((n.clone(), translate(f, kind)?));
        }
    }
    out.tbox = g.tbox;
    out.abox = g.abox;
    out.actions = g.actions;
    out.program = Some(g.program);
    out.collect_constants();
    let text = out.to_string();
    let target = to.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    Ok(Report::done(text.clone(), json!({ "target": target, "instance": text })))
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::CheckConsistency { file } => check_consistency(&read_instance(file, cli)?),
        Command::Repairs { file, kind } => repairs(&read_instance(file, cli)?, *kind),
        Command::Evolve { file, add, del } => {
            let inst = read_instance(file, cli)?;
            let (fplus, fminus) = (parse_facts(add, &inst, "--add")?, parse_facts(del, &inst, "--del")?);
            let next = evolve(&inst.tbox, &inst.abox, &fplus, &fminus)?;
            Ok(Report::done(next.to_string(), json!({ "abox": facts_json(&next) })))
        }
        Command::BuildTs { file, semantics, as_kab } => {
            let inst = read_instance(file, cli)?;
            let ts = build(&system(&inst, *as_kab)?, *semantics, &inst, cli)?;
            let text = format!("{} states, {} edges", ts.len(), ts.edges.len());
            Ok(Report::done(text, json!({ "semantics": semantics.label(), "states": ts.len(), "edges": ts.edges.len() })))
        }
        Command::Compile { file, to } => compile(&read_instance(file, cli)?, *to, cli.seed),
        Command::Verify { file, semantics, formula, as_kab } => {
            let inst = read_instance(file, cli)?;
            let f = inst.formula(formula).ok_or_else(|| Failure::usage(format!("no formula named `{formula}`")))?.clone();
            let ts = build(&system(&inst, *as_kab)?, *semantics, &inst, cli)?;
            let verdict = model_check(&ts, &f)?;
            Ok(Report {
                holds: verdict,
                text: format!("{formula}: {verdict} ({} states)", ts.len()),
                json: json!({
                    "formula": formula,
                    "semantics": semantics.label(),
                    "verdict": verdict,
                    "states": ts.len(),
                    "edges": ts.edges.len(),
                }),
            })
        }
        Command::Bisim { kind, left, right, left_semantics, right_semantics } => {
            let (li, ri) = (read_instance(left, cli)?, read_instance(right, cli)?);
            let lt = build(&system(&li, false)?, *left_semantics, &li, cli)?;
            let rt = build(&system(&ri, false)?, *right_semantics, &ri, cli)?;
            let (label, holds) = match kind {
                BisimKind::E => ("e", e_bisimilar(&lt, &rt)),
                BisimKind::J => ("j", j_bisimilar(&lt, &rt)),
                BisimKind::L => ("l", l_bisimilar(&lt, &rt)),
                BisimKind::S => ("s", s_bisimilar(&lt, &rt)),
            };
            Ok(Report {
                holds,
                text: format!("{}bisimilar", if holds { "" } else { "not " }),
                json: json!({ "kind": label, "bisimilar": holds, "left_states": lt.len(), "right_states": rt.len() }),
            })
        }
        Command::TranslateFormula { file, kind, formula } => {
            let inst = read_instance(file, cli)?;
            if let Some(n) = formula {
                inst.formula(n).ok_or_else(|| Failure::usage(format!("no formula named `{n}`")))?;
            }
            let mut lines = Vec::new();
            let mut out = serde_json::Map::new();
            for (n, f) in inst.formulas.iter().filter(|(n, _)| formula.as_deref().is_none_or(|m| &**n == m)) {
                let g = translate(f, *kind)?;
                lines.push(format!("formula {n}: {g};"));
                out.insert(n.to_string(), Value::String(g.to_string()));
            }
            Ok(Report::done(lines.join("\n"), json!({ "formulas": out })))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(report) => {
            let json_to_stdout = cli.json.as_deref() == Some(Path::new("-"));
            if !report.text.is_empty() && !json_to_stdout {
                println!("{}", report.text);
            }
            let json = serde_json::to_string_pretty(&report.json).expect("report serializes");
            if let Err(f) = write_file(cli.json.as_deref(), &json) {
                eprintln!("error: {}", f.msg);
                return ExitCode::from(f.code);
            }
            ExitCode::from(if report.holds { 0 } else { 1 })
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
