//! Command-line front end.
//!
//! Exit status is 0 on success, 1 for domain errors (bad source, bad config,
//! machine faults) and 2 for I/O errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::assembler::{self, disassemble, image_from_bytes, image_to_bytes, listing};
use crate::config::{ConfigError, RunConfig, SEED_ENV};
use crate::ensemble::{compare_models, run_ensemble_with_members, write_members_csv, EnsembleSpec};
use crate::machine::{Machine, Mode, RunStatus, REGISTER_COUNT};
use crate::physics::{self, PhysicsError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io { .. } => 2,
        }
    }

    fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { path, source } => CliError::Io { path, source },
            other => CliError::domain(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "reduction-machine",
    version,
    about = "Assemble, run and analyse programs for the reduction machine"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a source file into a little-endian memory image.
    Asm {
        input: PathBuf,
        /// Output image; defaults to the input with a `.bin` extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write an address/word listing.
        #[arg(long)]
        listing: Option<PathBuf>,
    },
    /// Print canonical assembly for a memory image.
    Disasm {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one machine.
    Run {
        /// Memory image, or assembly source if it ends in `.asm`.
        program: PathBuf,
        #[command(flatten)]
        common: Common,
        /// JSON-lines trace, one record per step.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run many seeded copies and report macrostate statistics.
    Ensemble {
        program: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(short = 'n', long = "members")]
        members: Option<u64>,
        /// Report JSON path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-member CSV path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also run the other register model and print both.
        #[arg(long)]
        compare: bool,
    },
    /// Pointer kinematics, optionally swept over one parameter.
    Physics {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// `name=lo:hi:points`, where name is a config key such as `u0_v`.
        #[arg(long)]
        sweep: Option<String>,
        /// Print the kinematics as JSON instead of CSV.
        #[arg(long, conflicts_with = "sweep")]
        json: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed and the environment.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_cycles: Option<u64>,
}

/// Runs a parsed command line, writing human output to `out` and warnings to
/// `err`. Returns the exit status.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Asm { input, output, listing } => cmd_asm(&input, output.as_deref(), listing.as_deref()),
        Command::Disasm { input, output } => cmd_disasm(&input, output.as_deref(), out),
        Command::Run { program, common, trace } => cmd_run(&program, &common, trace.as_deref(), out),
        Command::Ensemble {
            program,
            common,
            members,
            report,
            csv,
            compare,
        } => cmd_ensemble(
            &program,
            &common,
            members,
            report.as_deref(),
            csv.as_deref(),
            compare,
            out,
        ),
        Command::Physics {
            config,
            sweep,
            json,
            output,
        } => cmd_physics(config.as_deref(), sweep.as_deref(), json, output.as_deref(), out, err),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn cmd_asm(input: &Path, output: Option<&Path>, listing_path: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(input).map_err(io_err(input))?;
    let program = assembler::parse(&text).map_err(|e| CliError::Domain(format!("{}: {e}", input.display())))?;
    let image = assembler::assemble(&program).map_err(|e| CliError::Domain(format!("{}: {e}", input.display())))?;
    let output = output.map_or_else(|| input.with_extension("bin"), Path::to_path_buf);
    write_file(&output, &image_to_bytes(&image))?;
    if let Some(path) = listing_path {
        write_file(path, listing(&program).as_bytes())?;
    }
    Ok(())
}

fn read_image(path: &Path) -> Result<Vec<u16>, CliError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("asm")) {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        assembler::assemble_text(&text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
    } else {
        let bytes = fs::read(path).map_err(io_err(path))?;
        image_from_bytes(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
    }
}

pub fn cmd_disasm(input: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let text = disassemble(&read_image(input)?);
    match output {
        Some(path) => write_file(path, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn resolve(common: &Common) -> Result<(RunConfig, u64), CliError> {
    let config = load_config(common.config.as_deref())?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = config.resolve_seed(common.seed, env.as_deref())?;
    Ok((config, seed))
}

fn format_registers(values: &[Option<u8>; REGISTER_COUNT]) -> String {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(v) => format!("R{i}={v}"),
            None => format!("R{i}=?"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn cmd_run(program: &Path, common: &Common, trace: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let (config, seed) = resolve(common)?;
    let image = read_image(program)?;
    let max_cycles = common.max_cycles.unwrap_or(config.max_cycles);
    let mut machine = Machine::new(config.machine_config()?, &image).map_err(CliError::domain)?;
    let mut rng = crate::ensemble::member_rng(seed, 0);

    let trace_path = trace.map(Path::to_path_buf).or(config.trace_path.clone());
    let mut lines = String::new();
    let outcome = machine
        .run_observed(max_cycles, &mut rng, |record| {
            if trace_path.is_some() {
                lines.push_str(&serde_json::to_string(&record).expect("trace record serializes"));
                lines.push('\n');
            }
        })
        .map_err(CliError::domain)?;
    if let Some(path) = &trace_path {
        write_file(path, lines.as_bytes())?;
    }

    let mut text = String::new();
    let status = match outcome.status {
        RunStatus::Halted => "halted",
        RunStatus::Timeout => "timeout",
    };
    text.push_str(&format!(
        "status: {status} after {} steps, {} cycles\n",
        outcome.steps,
        machine.cycle()
    ));
    let regs = machine.registers();
    text.push_str(&format!("registers: {}\n", format_registers(&regs.definite_values())));
    text.push_str(&format!(
        "branches: {} (peak {}), pruned mass {}\n",
        regs.branch_count(),
        regs.peak_branch_count(),
        regs.pruned_mass()
    ));
    text.push_str("memory changes:\n");
    for (addr, &word) in machine.memory().iter().enumerate() {
        let before = image.get(addr).copied().unwrap_or(0);
        if word != before {
            text.push_str(&format!("  [{addr:3}] 0x{before:04X} -> 0x{word:04X}\n"));
        }
    }
    text.push_str(&format!(
        "knowledge: {} write-backs, macrostate \"{}\"\n",
        machine.data_log().len(),
        machine.macrostate_key()
    ));
    text.push_str(&format!(
        "information: {} bits acquired, {} bits expected\n",
        machine.information_bits(),
        machine.predicted_bits()
    ));
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_ensemble(
    program: &Path,
    common: &Common,
    members: Option<u64>,
    report_path: Option<&Path>,
    csv_path: Option<&Path>,
    compare: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (config, seed) = resolve(common)?;
    let image = read_image(program)?;
    let spec = EnsembleSpec {
        machine: config.machine_config()?,
        n_members: members.unwrap_or(config.n_members),
        master_seed: seed,
        max_cycles: common.max_cycles.unwrap_or(config.max_cycles),
        lambda_jitter: config.lambda_jitter,
    };
    let (report, outcomes) = run_ensemble_with_members(&spec, &image).map_err(CliError::domain)?;

    if let Some(path) = report_path.map(Path::to_path_buf).or(config.report_path.clone()) {
        let mut json = report.to_json();
        json.push('\n');
        write_file(&path, json.as_bytes())?;
    }
    if let Some(path) = csv_path.map(Path::to_path_buf).or(config.csv_path.clone()) {
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_members_csv(io::BufWriter::new(file), &outcomes).map_err(|e| CliError::Io {
            path: path.clone(),
            source: io::Error::other(e.to_string()),
        })?;
    }

    let mut text = format!("members: {} ({} timed out)\n", report.n_members, report.timeouts);
    text.push_str("macrostates:\n");
    for (key, count) in &report.histogram {
        let shown = if key.is_empty() { "<none>" } else { key };
        text.push_str(&format!(
            "  {shown:>12}  {count:8}  {:.6}\n",
            *count as f64 / report.n_members as f64
        ));
    }
    text.push_str(&format!(
        "empirical entropy: {:.6} bits\n",
        report.empirical_entropy_bits
    ));
    text.push_str(&format!(
        "predicted entropy: {:.6} bits\n",
        report.predicted_entropy_bits
    ));
    text.push_str(&format!(
        "information per member: {:.6} ± {:.6} bits\n",
        report.total_information_acquired_bits, report.information_std_error_bits
    ));
    text.push_str(&format!("max pruned mass: {}\n", report.pruned_mass_max));
    if compare {
        let c = compare_models(&spec, &image).map_err(CliError::domain)?;
        text.push_str("model comparison:\n");
        for m in [&c.fine, &c.coarse] {
            text.push_str(&format!(
                "  {}: pure={} peak_branches={} macrostates={} information={:.6} bits capacity={} pruned={}\n",
                mode_name(m.mode),
                m.always_pure,
                m.peak_branch_count,
                m.macrostate_count,
                m.information_bits,
                m.capacity_bits,
                m.pruned_mass_max
            ));
        }
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Fine => "fine",
        Mode::Coarse => "coarse",
    }
}

/// Kinematics for export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KinematicsRecord {
    #[serde(rename = "a_C")]
    pub a_c: f64,
    pub tau_d: f64,
    pub lambda: f64,
    /// `None` when the pin cannot fire.
    pub latency_cycles: Option<u64>,
}

pub fn kinematics_record(config: &RunConfig) -> Result<KinematicsRecord, CliError> {
    let p = config.physics()?;
    p.validate_dynamics().map_err(CliError::domain)?;
    let k = physics::kinematics(&p).map_err(CliError::domain)?;
    let latency_cycles = match physics::latency_cycles(&k, config.sigma_q_m, config.eta, config.t_cycle_s) {
        Ok(c) => Some(c),
        Err(PhysicsError::PinCannotFire) => None,
        Err(e) => return Err(CliError::domain(e)),
    };
    Ok(KinematicsRecord {
        a_c: k.a_c,
        tau_d: k.tau_d,
        lambda: k.v_terminal,
        latency_cycles,
    })
}

/// Parsed `name=lo:hi:points`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

const SWEEP_ALIASES: &[(&str, &str)] = &[
    ("U0", "u0_v"),
    ("k1", "k1_per_s"),
    ("k2", "k2_per_m"),
    ("e_star", "e_star_c"),
    ("m_star", "m_star_kg"),
    ("l_r", "l_r_m"),
    ("sigma_q", "sigma_q_m"),
    ("t_cycle", "t_cycle_s"),
];

impl Sweep {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::Domain(format!("sweep `{text}` is not of the form name=lo:hi:points"));
        let (name, range) = text.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [lo, hi, points] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let points: usize = points.trim().parse().map_err(|_| bad())?;
        if points == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        let name = name.trim();
        let key = SWEEP_ALIASES
            .iter()
            .find(|(alias, _)| *alias == name)
            .map_or(name, |(_, key)| key)
            .to_string();
        Ok(Self { key, lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }

    /// `base` with the swept key set to `value`.
    pub fn apply(&self, base: &RunConfig, value: f64) -> Result<RunConfig, CliError> {
        let mut json = serde_json::to_value(base).expect("config serializes");
        let map = json.as_object_mut().expect("config is an object");
        let known = matches!(self.key.as_str(), "k1_per_s" | "k2_per_m") || map.contains_key(&self.key);
        if !known || matches!(self.key.as_str(), "mode" | "trace_path" | "report_path" | "csv_path") {
            return Err(CliError::Domain(format!("cannot sweep `{}`", self.key)));
        }
        map.insert(self.key.clone(), value.into());
        serde_json::from_value(json).map_err(|e| CliError::Domain(format!("cannot sweep `{}`: {e}", self.key)))
    }
}

pub fn cmd_physics(
    config_path: Option<&Path>,
    sweep: Option<&str>,
    json: bool,
    output: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let config = match config_path {
        Some(p) => RunConfig::load_unvalidated(p)?,
        None => RunConfig::default(),
    };
    let text = if json {
        warn_geometry(&config, err)?;
        let mut s = serde_json::to_string_pretty(&kinematics_record(&config)?).expect("record serializes");
        s.push('\n');
        s
    } else {
        let (key, points) = match sweep {
            Some(s) => {
                let sweep = Sweep::parse(s)?;
                let configs = sweep
                    .values()
                    .into_iter()
                    .map(|v| Ok((v, sweep.apply(&config, v)?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                (sweep.key, configs)
            }
            None => ("u0_v".to_string(), vec![(config.u0_v, config.clone())]),
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([key.as_str(), "a_C", "tau_d", "lambda", "latency_cycles"])
            .map_err(CliError::domain)?;
        let mut warned = false;
        for (value, c) in &points {
            if !warned {
                warned = warn_geometry(c, err)?;
            }
            let k = kinematics_record(c)?;
            let latency = k.latency_cycles.map_or(String::new(), |l| l.to_string());
            w.write_record([
                value.to_string(),
                k.a_c.to_string(),
                k.tau_d.to_string(),
                k.lambda.to_string(),
                latency,
            ])
            .map_err(CliError::domain)?;
        }
        String::from_utf8(w.into_inner().map_err(CliError::domain)?).expect("csv is utf-8")
    };
    match output {
        Some(path) => write_file(path, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

/// Prints a warning when the tube is not narrower than the resonant
/// wavelength. Returns whether it warned.
fn warn_geometry(config: &RunConfig, err: &mut dyn Write) -> Result<bool, CliError> {
    match config.physics()?.validate_geometry() {
        Ok(()) => Ok(false),
        Err(e) => {
            writeln!(err, "warning: {e}").map_err(stdout_err)?;
            Ok(true)
        }
    }
}
