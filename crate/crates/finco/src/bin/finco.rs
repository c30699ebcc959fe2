use clap::{Parser, Subcommand};
use finco::cli_io::{self, RunMode};
use finco::FincoError;

#[derive(Parser)]
#[command(name = "finco", version, about = "Wavepacket propagation with complex classical trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run from a config file or preset name.
    Run {
        /// Path to a TOML config, or a preset name.
        config: String,
        #[arg(long, value_enum)]
        mode: RunMode,
        /// Dotted-path config overrides, e.g. --override manifold.nx=200
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Inspect the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
    /// Print the version.
    Version,
}

#[derive(Subcommand)]
enum PresetsAction {
    /// List preset names.
    List,
    /// Print a preset as TOML.
    Show { name: String },
}

// exit code 2: configuration error; 3: empty result (all samples filtered)
fn exit_code(err: &FincoError) -> i32 {
    match err {
        FincoError::Config { .. } | FincoError::InvalidInput(_) => 2,
        FincoError::EmptyReconstruction | FincoError::NoRoots => 3,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, mode, overrides } => run(&config, mode, &overrides),
        Command::Presets { action } => presets(action),
        Command::Version => {
            println!("finco {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn run(config: &str, mode: RunMode, overrides: &[String]) -> finco::Result<()> {
    let cfg = cli_io::load_config(config)?;
    let cfg = cli_io::apply_overrides(&cfg, overrides)?;
    if let Some(t_cl) = cfg.classical_period() {
        println!("classical period: {t_cl:.6}");
    }
    let out = cli_io::run(&cfg, mode)?;
    for cp in &out.checkpoints {
        let mut line = format!("t = {:10.4}", cp.t);
        if cp.counts.total > 0 {
            line += &format!("  accepted {}/{}", cp.counts.accepted, cp.counts.total);
        }
        if let Some(n) = cp.branch_count {
            line += &format!("  branches {n}");
        }
        if let Some(psi) = &cp.finco {
            line += &format!("  norm {:.6}", psi.norm);
        }
        if let Some(e) = &cp.errors {
            line += &format!("  l2 {:.3e}", e.l2_density);
        }
        if let Some(e) = &cp.errors_real_filtered {
            line += &format!("  l2(real contour) {:.3e}", e.l2_density);
        }
        println!("{line}");
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn presets(action: PresetsAction) -> finco::Result<()> {
    match action {
        PresetsAction::List => {
            for name in cli_io::PRESET_NAMES {
                println!("{name}");
            }
        }
        PresetsAction::Show { name } => {
            let cfg = cli_io::preset(&name).ok_or_else(|| FincoError::Config {
                key: "preset".into(),
                message: format!("unknown preset `{name}`"),
            })?;
            print!("{}", cli_io::config_to_toml(&cfg));
        }
    }
    Ok(())
}
