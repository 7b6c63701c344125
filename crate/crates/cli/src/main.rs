use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crowdshape_core::envs::{EnvConfig, EnvKind};
use crowdshape_core::feedback::{train_oracle, OracleConfig};
use crowdshape_core::harness::{format_table, report, run_experiment, ArmKind, ExperimentConfig};
use crowdshape_core::rng::derive_stream;
use crowdshape_service::{Service, ServiceOptions, SessionTable};

#[derive(Parser)]
#[command(
    name = "crowdshape",
    version,
    about = "Policy shaping from a crowd of unreliable trainers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an oracle policy and dump its Q-table.
    Oracle {
        /// pacman, taxi or frozen_lake
        #[arg(long)]
        env: EnvKind,
        /// FrozenLake map index 0..=3.
        #[arg(long, default_value_t = 0)]
        map: usize,
        /// Training episodes (defaults: 50000 PACMAN/Taxi, 5000 FrozenLake).
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the AUC table of a finished run.
    Report {
        #[arg(long)]
        in_dir: PathBuf,
    },
    /// Train live, taking feedback from human trainers over HTTP.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Longest wait for answers at each episode boundary.
        #[arg(long, default_value_t = 30)]
        query_timeout_secs: u64,
        /// JSON array of {"token", "trainer_id"} objects.
        #[arg(long)]
        sessions_file: Option<PathBuf>,
        /// Query selection arm (default: al_entropy if configured).
        #[arg(long)]
        arm: Option<ArmKind>,
        /// Built trainer UI bundle to serve at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Oracle {
            env,
            map,
            episodes,
            seed,
            out,
        } => {
            let env_cfg = match env {
                EnvKind::FrozenLake => EnvConfig::frozen_lake(map),
                k => EnvConfig::new(k),
            };
            let cfg = OracleConfig {
                episodes,
                ..OracleConfig::default()
            };
            let oracle = train_oracle(&env_cfg, &cfg, &mut derive_stream(seed, "oracle", 0))?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            oracle.write_dump(&env_cfg.label(), BufWriter::new(file))?;
            let built = cfg.training_env(&env_cfg).build()?;
            let rate = oracle.success_rate(&built, 100, seed)?;
            println!(
                "oracle for {} written to {} (greedy success {:.0}%)",
                env_cfg.label(),
                out.display(),
                rate * 100.0
            );
        }
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = run_experiment(&cfg, Some(&out_dir))?;
            print!("{}", format_table(&out.summaries));
        }
        Command::Report { in_dir } => {
            print!("{}", format_table(&report(&in_dir)?));
        }
        Command::Serve {
            config,
            port,
            host,
            query_timeout_secs,
            sessions_file,
            arm,
            ui_dir,
        } => {
            let cfg = ExperimentConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            let sessions = match &sessions_file {
                Some(p) => SessionTable::from_file(p)?,
                None => SessionTable::default(),
            };
            let n_sessions = sessions.len();
            let opts = ServiceOptions {
                query_timeout: Duration::from_secs(query_timeout_secs),
                sessions,
                arm,
                ui_dir,
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                let service = Service::start(cfg, opts)?;
                println!(
                    "serving on http://{} with {n_sessions} session(s)",
                    listener.local_addr()?
                );
                service.serve(listener).await?;
                anyhow::Ok(())
            })?;
        }
        Command::DefaultConfig => println!("{}", ExperimentConfig::default().to_json_pretty()),
    }
    Ok(())
}
