//! `rmtlab`: run one experiment, write its JSON summary, CSV tables and a
//! run manifest.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use rmtlab_core::registry::Registry;
use rmtlab_core::{CoreError, ExperimentConfig};

use manifest::{fixture_hashes, strip_timings, versions, RunManifest, WallClock};

#[derive(Parser, Debug)]
#[command(
    name = "rmtlab",
    version,
    about = "Dyson Brownian motion and Airy process laboratory"
)]
struct Cli {
    /// JSON experiment configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for randomised modes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment subcommands.
#[derive(Args, Debug, Default)]
struct Common {
    /// Number of particles (matrix size).
    #[arg(long)]
    n: Option<usize>,
    /// Observation times, comma separated, starting at 0.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    times: Vec<f64>,
    /// One window per time as comma-separated endpoints, e.g. `-inf,0`.
    /// Repeat once per time.
    #[arg(long = "window", allow_hyphen_values = true)]
    windows: Vec<String>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    panels: Option<usize>,
    #[arg(long)]
    trunc: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Finite-difference steps, coarsest first.
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo joint probability of Dyson Brownian motion.
    DysonMc {
        #[command(flatten)]
        common: Common,
        /// Also write the sampled eigenvalues as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Chain-quadrature joint probability of Dyson Brownian motion.
    DysonQuad {
        #[command(flatten)]
        common: Common,
    },
    /// Airy process joint probability by Fredholm determinant.
    Airy {
        #[command(flatten)]
        common: Common,
    },
    /// Tracy-Widom F2 table by both routes.
    Tw {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Finite-difference PDE residual.
    Residual {
        #[command(flatten)]
        common: Common,
        /// `dyson` or `airy`.
        #[arg(long)]
        model: Option<String>,
    },
    /// Exact symbolic checks.
    Symbolic {
        #[command(flatten)]
        common: Common,
        /// `m1`, `m2`, `jk`, `commutators` or `series`.
        #[arg(long)]
        check: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        order: Option<u8>,
    },
    /// Finite-difference checks of the boundary-to-parameter identities.
    Verify {
        #[command(flatten)]
        common: Common,
        /// `virasoro` or `e0em`.
        #[arg(long)]
        lemma: Option<String>,
        /// Slice for the Virasoro check.
        #[arg(long)]
        slice: Option<usize>,
        /// Operator order (1 or 2) for the Virasoro check.
        #[arg(long)]
        op_order: Option<u8>,
    },
    /// Run whatever mode the `--config` file names.
    Run,
}

enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) | Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn endpoint_value(token: &str) -> Value {
    match token.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => json!(token.trim()),
    }
}

fn apply_common(raw: &mut Map<String, Value>, opts: &mut Map<String, Value>, c: &Common) {
    if let Some(n) = c.n {
        raw.insert("n".into(), json!(n));
    }
    if !c.times.is_empty() {
        raw.insert("times".into(), json!(c.times));
    }
    if !c.windows.is_empty() {
        let ws: Vec<Vec<Value>> = c
            .windows
            .iter()
            .map(|w| w.split(',').map(endpoint_value).collect())
            .collect();
        raw.insert("windows".into(), json!(ws));
    }
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            opts.insert(k.into(), v);
        }
    };
    set("samples", c.samples.map(|x| json!(x)));
    set("nodes", c.nodes.map(|x| json!(x)));
    set("panels", c.panels.map(|x| json!(x)));
    set("trunc", c.trunc.map(|x| json!(x)));
    set("tol", c.tol.map(|x| json!(x)));
    if !c.h.is_empty() {
        opts.insert("h".into(), json!(c.h));
    }
}

/// Merge the config file and the command line into one raw JSON config.
fn raw_config(cli: &Cli) -> Result<Value, Failure> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Validation(format!(
                    "invalid config: cannot read {}: {e}",
                    path.display()
                ))
            })?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => {
                    return Err(Failure::Validation(
                        "invalid config: expected a JSON object".into(),
                    ))
                }
                Err(e) => return Err(Failure::Validation(format!("invalid config: {e}"))),
            }
        }
        None => Map::new(),
    };
    let mut opts = match raw.remove("options") {
        Some(Value::Object(m)) => m,
        Some(_) => {
            return Err(Failure::Validation(
                "invalid options: expected a JSON object".into(),
            ))
        }
        None => Map::new(),
    };
    let mode = match &cli.command {
        Command::Run => None,
        Command::DysonMc { .. } => Some("dyson-mc"),
        Command::DysonQuad { .. } => Some("dyson-quad"),
        Command::Airy { .. } => Some("airy"),
        Command::Tw { .. } => Some("tw"),
        Command::Residual { .. } => Some("residual"),
        Command::Symbolic { .. } => Some("symbolic"),
        Command::Verify { .. } => Some("verify"),
    };
    if let Some(mode) = mode {
        if let Some(file_mode) = raw.get("mode").and_then(Value::as_str) {
            if file_mode != mode {
                return Err(Failure::Validation(format!(
                    "invalid mode: config file says `{file_mode}` but the subcommand is `{mode}`"
                )));
            }
        }
        raw.insert("mode".into(), json!(mode));
    } else if !raw.contains_key("mode") {
        return Err(Failure::Validation(
            "invalid mode: `run` needs a config file with a mode".into(),
        ));
    }
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            opts.insert(k.into(), v);
        }
    };
    match &cli.command {
        Command::DysonMc { common, csv } => {
            apply_common(&mut raw, &mut opts, common);
            if *csv {
                opts.insert("csv".into(), json!(true));
            }
        }
        Command::DysonQuad { common } | Command::Airy { common } => {
            apply_common(&mut raw, &mut opts, common)
        }
        Command::Tw {
            common,
            from,
            to,
            step,
        } => {
            put("from", from.map(|x| json!(x)));
            put("to", to.map(|x| json!(x)));
            put("step", step.map(|x| json!(x)));
            apply_common(&mut raw, &mut opts, common);
        }
        Command::Residual { common, model } => {
            put("model", model.as_ref().map(|x| json!(x)));
            apply_common(&mut raw, &mut opts, common);
        }
        Command::Symbolic {
            common,
            check,
            m,
            order,
        } => {
            put("check", check.as_ref().map(|x| json!(x)));
            put("m", m.map(|x| json!(x)));
            put("order", order.map(|x| json!(x)));
            apply_common(&mut raw, &mut opts, common);
        }
        Command::Verify {
            common,
            lemma,
            slice,
            op_order,
        } => {
            put("lemma", lemma.as_ref().map(|x| json!(x)));
            put("slice", slice.map(|x| json!(x)));
            put("op_order", op_order.map(|x| json!(x)));
            apply_common(&mut raw, &mut opts, common);
        }
        Command::Run => {}
    }
    if let Some(seed) = cli.seed {
        raw.insert("seed".into(), json!(seed));
    }
    raw.insert("options".into(), Value::Object(opts));
    Ok(Value::Object(raw))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn run(cli: &Cli) -> Result<Value, Failure> {
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let start = Instant::now();
    let raw = raw_config(cli)?;
    let cfg = ExperimentConfig::from_json(&raw.to_string())?;
    let threads = match cli.threads {
        Some(0) => {
            return Err(Failure::Validation(
                "invalid threads: must be positive".into(),
            ))
        }
        Some(t) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Failure::Io(format!("thread pool: {e}")))?;
            t
        }
        None => rayon::current_num_threads(),
    };

    let registry = Registry::standard();
    let output = registry.run(&cfg)?;
    let mut summary = output.summary;
    let timings = strip_timings(&mut summary);

    let mode = cfg.mode.name();
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", cli.out.display())))?;
    let manifest_name = format!("{mode}.manifest.json");
    let summary_name = format!("{mode}.json");
    let mut outputs = vec![summary_name.clone()];

    if let Value::Object(m) = &mut summary {
        m.insert("manifest".into(), json!(manifest_name));
    }
    write(&cli.out.join(&summary_name), &pretty(&summary))?;
    for t in &output.tables {
        let name = format!("{mode}_{}.csv", t.name);
        write(
            &cli.out.join(&name),
            &format!("# manifest: {manifest_name}\n{}", t.to_csv()),
        )?;
        outputs.push(name);
    }

    let manifest = RunManifest {
        mode: mode.into(),
        config: serde_json::to_value(&cfg).expect("serialisable config"),
        fixtures: fixture_hashes(),
        seed: cfg.seed,
        versions: versions(),
        threads,
        outputs,
        wall_clock: WallClock {
            started_unix_ms,
            elapsed_ms: start.elapsed().as_millis(),
            experiment_timings_ms: timings,
        },
    };
    write(&cli.out.join(&manifest_name), &pretty(&manifest))?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{}", pretty(&summary));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
