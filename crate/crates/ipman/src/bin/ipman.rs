use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipman::config::ExperimentConfig;
use ipman::run;

#[derive(Parser)]
#[command(name = "ipman", version, about = "Interior-point GAN optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Parser)]
struct Common {
    /// Experiment configuration (toml).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: sample, stage1, oracle, stage2, evaluate.
    Run(Common),
    /// Draw the feasible/infeasible training sets.
    Sample(Common),
    /// Train the GAN on the sampled sets.
    Stage1(Common),
    /// Retrain the generator against the frozen discriminator barrier.
    Stage2(Common),
    /// Compute the ground-truth optimum for the configured problem.
    Oracle(Common),
    /// Evaluate the stage-2 generator and emit summary.json.
    Evaluate(Common),
    /// Regenerate the scatter plot from the latest checkpoint.
    Plot(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Run(c)
            | Command::Sample(c)
            | Command::Stage1(c)
            | Command::Stage2(c)
            | Command::Oracle(c)
            | Command::Evaluate(c)
            | Command::Plot(c) => c,
        }
    }
}

fn load_config(common: &Common) -> ipman::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn execute(cli: Cli) -> ipman::Result<()> {
    let cfg = load_config(cli.command.common())?;
    eprintln!("run dir: {}", cfg.run_dir().display());
    match cli.command {
        Command::Run(_) => print_json(&run::run_full(&cfg)?),
        Command::Sample(_) => {
            let (f, i) = run::cmd_sample(&cfg)?;
            eprintln!("wrote {} and {}", f.display(), i.display());
        }
        Command::Stage1(_) => print_json(&run::cmd_stage1(&cfg)?),
        Command::Stage2(_) => print_json(&run::cmd_stage2(&cfg)?),
        Command::Oracle(_) => print_json(&run::cmd_oracle(&cfg)?),
        Command::Evaluate(_) => print_json(&run::cmd_evaluate(&cfg)?),
        Command::Plot(_) => {
            let path = run::cmd_plot(&cfg)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
