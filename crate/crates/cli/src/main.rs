//! Command-line front end: configuration-driven closed-form and Monte Carlo
//! experiments for the asynchronous uplink receivers, emitting plot-ready
//! CSV or JSON.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use async_mimo::experiments::{
    optimize_sampling_origin, power_scaling_sweep, run_monte_carlo, ExperimentPlan,
};
use async_mimo::rates::{rate_from_stats, second_order_stats};
use async_mimo::{DelayDist, Error, MomentTable, ReceiverKind, Result};

use config::Settings;
use output::{Cell, Table};

#[derive(Parser)]
#[command(
    name = "async-mimo",
    version,
    about = "Achievable-rate tables for asynchronous massive MIMO uplink receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Direct flags override `--set` pairs,
/// which override the config file, which overrides built-in defaults.
#[derive(Args)]
struct Common {
    /// Flat key-value config file (dotted keys, `key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set pulse.rolloff=0.22`.
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Number of base-station antennas (link.M).
    #[arg(long = "M", value_name = "M")]
    antennas: Option<usize>,
    /// Data-symbol SNR in dB (link.rho_d_db).
    #[arg(long, value_name = "DB")]
    snr_db: Option<f64>,
    /// Pulse shape: rect or rrc (pulse.family).
    #[arg(long)]
    pulse: Option<String>,
    /// Sampling origin in symbol units (link.e).
    #[arg(long, value_name = "E")]
    e: Option<f64>,
    /// Base RNG seed (link.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted (output.path).
    #[arg(long, short, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Output format: csv or json (output.format).
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct UsersArg {
    /// Number of users (link.K).
    #[arg(long = "K", value_name = "K")]
    users: Option<usize>,
}

#[derive(Args)]
struct ReceiverArg {
    /// Receiver: mrc-perfect, mrc-imperfect, mrczf-perfect or
    /// mrczf-imperfect (run.receiver).
    #[arg(long)]
    receiver: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the delay-averaged moment tables for one receiver.
    Moments {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        users: UsersArg,
        #[command(flatten)]
        receiver: ReceiverArg,
    },
    /// Closed-form per-user achievable rates with the SINR decomposition.
    Rate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        users: UsersArg,
        #[command(flatten)]
        receiver: ReceiverArg,
        /// Closed-form variant 1-4 (perfect/imperfect MRC, then MRC-ZF);
        /// shorthand for the matching --receiver.
        #[arg(long, value_name = "1-4")]
        theorem: Option<u8>,
    },
    /// Monte Carlo rates against the closed form, with standard errors.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        users: UsersArg,
        #[command(flatten)]
        receiver: ReceiverArg,
        /// Number of channel realizations (run.trials).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Optimal sampling origin per user count under the large-M objective.
    OptimizeE {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        receiver: ReceiverArg,
        /// User counts: lo..hi[:step] (step defaults to 2), a comma list,
        /// or a single integer (run.k_list). Overrides --K.
        #[arg(long = "K", value_name = "RANGE")]
        k_range: Option<String>,
        /// Coarse search resolution in symbol units (run.grid_step).
        #[arg(long)]
        grid_step: Option<f64>,
    },
    /// Rates along an antenna grid with transmit power scaled down in M.
    PowerScaling {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        users: UsersArg,
        #[command(flatten)]
        receiver: ReceiverArg,
        /// Power law: over-m or over-sqrt-m (run.scaling).
        #[arg(long)]
        scaling: Option<String>,
        /// Energy budget E_d so that rho_d = E_d / M or E_d / sqrt(M)
        /// (run.e_d).
        #[arg(long)]
        e_d: Option<f64>,
        /// Antenna counts, comma separated (run.m_list).
        #[arg(long = "M-list", value_name = "LIST")]
        m_list: Option<String>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("ASYNC_MIMO_THREADS") {
        let n: usize = match threads.parse() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: ASYNC_MIMO_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(2);
            }
        };
        // Ignore the error when a pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                Error::Numeric(_) => ExitCode::from(3),
            }
        }
    }
}

fn resolve(
    common: &Common,
    users: Option<usize>,
    receiver: Option<&ReceiverArg>,
) -> Result<Settings> {
    let mut s = Settings::defaults();
    if let Some(path) = &common.config {
        s.load_file(path)?;
    }
    for pair in &common.set {
        s.apply_override(pair)?;
    }
    if let Some(k) = users {
        s.set("link.K", &k.to_string())?;
    }
    if let Some(m) = common.antennas {
        s.set("link.M", &m.to_string())?;
    }
    if let Some(db) = common.snr_db {
        s.set("link.rho_d_db", &db.to_string())?;
    }
    if let Some(p) = &common.pulse {
        s.set("pulse.family", p)?;
    }
    if let Some(e) = common.e {
        s.set("link.e", &e.to_string())?;
    }
    if let Some(seed) = common.seed {
        s.set("link.seed", &seed.to_string())?;
    }
    if let Some(path) = &common.output {
        s.set("output.path", &path.display().to_string())?;
    }
    if let Some(f) = &common.format {
        s.set("output.format", f)?;
    }
    if let Some(r) = receiver.and_then(|r| r.receiver.as_deref()) {
        s.set("run.receiver", r)?;
    }
    Ok(s)
}

fn emit(settings: &Settings, command: &str, mut table: Table) -> Result<()> {
    table.metadata = vec![
        ("tool", format!("async-mimo {}", env!("CARGO_PKG_VERSION"))),
        ("command", command.to_string()),
        ("seed", settings.get("link.seed").to_string()),
        ("config_hash", settings.hash()),
    ];
    let rendered = table.render(settings.output_format()?);
    match settings.get("output.path") {
        "" => {
            print!("{rendered}");
            Ok(())
        }
        path => std::fs::write(path, rendered)
            .map_err(|e| Error::Config(format!("cannot write {path}: {e}"))),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Moments {
            common,
            users,
            receiver,
        } => {
            let s = resolve(&common, users.users, Some(&receiver))?;
            cmd_moments(&s)
        }
        Command::Rate {
            common,
            users,
            receiver,
            theorem,
        } => {
            let mut s = resolve(&common, users.users, Some(&receiver))?;
            if let Some(t) = theorem {
                let name = match t {
                    1 => "mrc-perfect",
                    2 => "mrc-imperfect",
                    3 => "mrczf-perfect",
                    4 => "mrczf-imperfect",
                    _ => {
                        return Err(Error::Config(format!(
                            "--theorem must be 1, 2, 3 or 4, got {t}"
                        )))
                    }
                };
                s.set("run.receiver", name)?;
            }
            cmd_rate(&s)
        }
        Command::Montecarlo {
            common,
            users,
            receiver,
            trials,
        } => {
            let mut s = resolve(&common, users.users, Some(&receiver))?;
            if let Some(t) = trials {
                s.set("run.trials", &t.to_string())?;
            }
            cmd_montecarlo(&s)
        }
        Command::OptimizeE {
            common,
            receiver,
            k_range,
            grid_step,
        } => {
            let mut s = resolve(&common, None, Some(&receiver))?;
            if let Some(k) = k_range {
                s.set("run.k_list", &k)?;
            }
            if let Some(g) = grid_step {
                s.set("run.grid_step", &g.to_string())?;
            }
            cmd_optimize_e(&s)
        }
        Command::PowerScaling {
            common,
            users,
            receiver,
            scaling,
            e_d,
            m_list,
        } => {
            let mut s = resolve(&common, users.users, Some(&receiver))?;
            if let Some(sc) = scaling {
                s.set("run.scaling", &sc)?;
            }
            if let Some(e) = e_d {
                s.set("run.e_d", &e.to_string())?;
            }
            if let Some(m) = m_list {
                s.set("run.m_list", &m)?;
            }
            cmd_power_scaling(&s)
        }
    }
}

fn cmd_moments(s: &Settings) -> Result<()> {
    let cfg = s.link_config()?;
    let kind = s.receiver()?;
    let table = MomentTable::build(&cfg, &[kind])?;
    let mut out = Table::new(vec!["quantity", "index", "value"]);
    let b = table.lag_bound;
    for n in -b..=b {
        out.push(vec![
            Cell::Text("eg".into()),
            Cell::Int(n),
            Cell::Num(table.eg.get(n)),
        ]);
    }
    for n in -b..=b {
        out.push(vec![
            Cell::Text("eg2".into()),
            Cell::Int(n),
            Cell::Num(table.eg2.get(n)),
        ]);
    }
    out.push(vec![
        Cell::Text("eg2_sum".into()),
        Cell::Int(0),
        Cell::Num(table.eg2_sum),
    ]);
    if let Some(zf) = &table.zf {
        out.push(vec![
            Cell::Text("zf_eps0".into()),
            Cell::Int(0),
            Cell::Num(zf.eps0),
        ]);
        out.push(vec![
            Cell::Text("zf_xi2_sum".into()),
            Cell::Int(0),
            Cell::Num(zf.xi2_sum),
        ]);
    }
    if let Some(zfo) = &table.zfo {
        for (l, u) in zfo.per_user.iter().enumerate() {
            out.push(vec![
                Cell::Text("zfo_qsum".into()),
                Cell::Int(l as i64),
                Cell::Num(u.qsum),
            ]);
            out.push(vec![
                Cell::Text("zfo_q_at".into()),
                Cell::Int(l as i64),
                Cell::Num(u.q_at),
            ]);
            out.push(vec![
                Cell::Text("zfo_v0".into()),
                Cell::Int(l as i64),
                Cell::Num(u.v0),
            ]);
        }
    }
    emit(s, "moments", out)
}

fn cmd_rate(s: &Settings) -> Result<()> {
    let cfg = s.link_config()?;
    let kind = s.receiver()?;
    let table = MomentTable::build(&cfg, &[kind])?;
    let mut out = Table::new(vec![
        "receiver", "user", "rate", "kappa", "sinr", "signal", "isi", "iui", "noise",
    ]);
    for l in 0..cfg.users {
        let stats = second_order_stats(kind, &cfg, &table, l)?;
        let r = rate_from_stats(&stats)?;
        out.push(vec![
            Cell::Text(receiver_name(kind).into()),
            Cell::Int(l as i64),
            Cell::Num(r.rate),
            Cell::Num(r.kappa),
            Cell::Num(r.sinr()),
            Cell::Num(r.signal),
            Cell::Num(r.isi),
            Cell::Num(r.iui),
            Cell::Num(r.noise),
        ]);
    }
    emit(s, "rate", out)
}

fn cmd_montecarlo(s: &Settings) -> Result<()> {
    let cfg = s.link_config()?;
    let kind = s.receiver()?;
    let table = MomentTable::build(&cfg, &[kind])?;
    let mut theory = Vec::with_capacity(cfg.users);
    for l in 0..cfg.users {
        theory.push(rate_from_stats(&second_order_stats(kind, &cfg, &table, l)?)?.rate);
    }
    let plan = ExperimentPlan {
        config: cfg,
        kinds: vec![kind],
        trials: s.usize("run.trials")?,
    };
    let empirical = run_monte_carlo(&plan)?;
    let mut out = Table::new(vec!["user", "empirical", "theory", "stderr", "rel_err"]);
    for (e, &t) in empirical.iter().zip(&theory) {
        out.push(vec![
            Cell::Int(e.user as i64),
            Cell::Num(e.rate),
            Cell::Num(t),
            Cell::Num(e.std_err),
            Cell::Num((e.rate - t).abs() / t.abs().max(f64::MIN_POSITIVE)),
        ]);
    }
    emit(s, "montecarlo", out)
}

fn cmd_optimize_e(s: &Settings) -> Result<()> {
    let kind = s.receiver()?;
    let pulse = s.pulse()?;
    let grid_step = s.f64("run.grid_step")?;
    let mut out = Table::new(vec!["K", "e_star", "objective"]);
    for k in s.usize_range("run.k_list")? {
        let dist = DelayDist::standard_mixture(k)?;
        let found = optimize_sampling_origin(kind, k, &pulse, &dist, grid_step)?;
        out.push(vec![
            Cell::Int(k as i64),
            Cell::Num(found.e_star),
            Cell::Num(found.objective),
        ]);
    }
    emit(s, "optimize-e", out)
}

fn cmd_power_scaling(s: &Settings) -> Result<()> {
    let cfg = s.link_config()?;
    let kind = s.receiver()?;
    let curve = power_scaling_sweep(
        &cfg,
        kind,
        s.f64("run.e_d")?,
        &s.usize_list("run.m_list")?,
        s.scaling()?,
    )?;
    let mut out = Table::new(vec!["receiver", "M", "rho_d", "user", "rate", "limit"]);
    for p in &curve.points {
        for (l, &rate) in p.rates.iter().enumerate() {
            out.push(vec![
                Cell::Text(receiver_name(kind).into()),
                Cell::Int(p.antennas as i64),
                Cell::Num(p.rho_d),
                Cell::Int(l as i64),
                Cell::Num(rate),
                Cell::Num(curve.asymptotes[l]),
            ]);
        }
    }
    emit(s, "power-scaling", out)
}

fn receiver_name(kind: ReceiverKind) -> &'static str {
    match kind {
        ReceiverKind::MrcPerfect => "mrc-perfect",
        ReceiverKind::MrcImperfect => "mrc-imperfect",
        ReceiverKind::MrczfPerfect => "mrczf-perfect",
        ReceiverKind::MrczfImperfect => "mrczf-imperfect",
    }
}
