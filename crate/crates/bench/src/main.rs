use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowcycle::flowmodel::save_checkpoint;
use flowcycle_bench::report::{config_file, ensure_dir, num, write_atomic};
use flowcycle_bench::{
    ablate, compare_editors, emit_ablation, emit_probe, emit_report, obtain_net, probe_experiment, train_net,
    transfer_experiment, AblationParam, Result, RunConfig,
};

#[derive(Parser)]
#[command(name = "flowcycle", version, about = "Flow-matching editing experiments on synthetic worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seeds` (for `train`, `train.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a velocity network and write net.fck and loss.csv.
    Train(Common),
    /// Run every enabled editor on the task set.
    Compare(Common),
    /// Sweep one parameter holding the rest fixed.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// lambda, steps or cfg
        #[arg(long)]
        param: String,
        /// Comma-separated values; cfg values are `src:tar` or one scale for both.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<String>,
    },
    /// Restore each task from transferred and random noises.
    Transfer(Common),
    /// Restore optimized and random intermediate states under the null condition.
    Probe(Common),
}

fn resolve(c: &Common, train: bool) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = c.seed {
        if train {
            cfg.train.seed = seed;
        } else {
            cfg.seeds = vec![seed];
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn net_for(cfg: &RunConfig) -> Result<flowcycle::flowmodel::VelocityNet> {
    if cfg.checkpoint.is_none() {
        eprintln!("no net.checkpoint set; training a network first");
    }
    obtain_net(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = resolve(&c, true)?;
            let (net, history) = train_net(&cfg)?;
            let dir = &cfg.output_dir;
            ensure_dir(dir)?;
            save_checkpoint(&net, &dir.join("net.fck"))?;
            let mut loss = String::from("step,loss\n");
            for (i, l) in history.iter().enumerate() {
                loss.push_str(&format!("{i},{}\n", num(*l)));
            }
            write_atomic(&dir.join("loss.csv"), loss.as_bytes())?;
            write_atomic(&dir.join("config.txt"), config_file(&cfg.hash(), &cfg.canonical()).as_bytes())?;
            if let (Some(first), Some(last)) = (history.first(), history.last()) {
                println!("trained {} steps, loss {first:.4} -> {last:.4}", history.len());
            }
            println!("wrote {}", dir.join("net.fck").display());
        }
        Command::Compare(c) => {
            let cfg = resolve(&c, false)?;
            let report = compare_editors(&cfg, &net_for(&cfg)?)?;
            emit_report(&report, &cfg.output_dir)?;
            print!("{}", report.summary_csv());
        }
        Command::Ablate { common, param, grid } => {
            let cfg = resolve(&common, false)?;
            let param = AblationParam::parse(&param)?;
            for v in &grid {
                param.apply(&cfg, v)?;
            }
            let reports = ablate(&cfg, &net_for(&cfg)?, param, &grid)?;
            emit_ablation(param, &reports, &cfg.output_dir)?;
            for (v, r) in &reports {
                println!("{}={v}", param.name());
                print!("{}", r.summary_csv());
            }
        }
        Command::Transfer(c) => {
            let cfg = resolve(&c, false)?;
            let report = transfer_experiment(&cfg, &net_for(&cfg)?)?;
            emit_report(&report, &cfg.output_dir)?;
            print!("{}", report.summary_csv());
        }
        Command::Probe(c) => {
            let cfg = resolve(&c, false)?;
            let report = probe_experiment(&cfg, &net_for(&cfg)?)?;
            emit_probe(&report, &cfg.output_dir)?;
            let m = report.medians();
            println!("median deviation  relevant  irrelevant");
            println!("optimized         {:.4}    {:.4}", m[0], m[1]);
            println!("random            {:.4}    {:.4}", m[2], m[3]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
