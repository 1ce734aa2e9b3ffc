use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isac_core::ao::{power_ratio, run_ao, run_baseline};
use isac_core::channel::geometry_hash;
use isac_core::harness::{
    compute_metrics, oracle_agreement, with_pool, write_outputs, Experiment, ExperimentConfig, Method,
};
use isac_core::scene::SceneFile;
use isac_core::Error;

#[derive(Parser)]
#[command(name = "isac", version, about = "Vehicle positioning, symbol detection and scattering-map sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; the desk-scale defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "ISAC_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of the configured grid and write CSV files.
    Sweep(Common),
    /// Run one trial of the first grid cell and print its iteration trace.
    Demo {
        #[command(flatten)]
        common: Common,
        /// SNR in dB, overriding the first grid value.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Compare AO with exhaustive search on tiny noiseless instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Write the channel matrices of the configured geometry.
    ChannelDump(Common),
}

fn load(common: &Common) -> isac_core::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if common.threads.is_some() {
        config.threads = common.threads;
    }
    config.validate()?;
    Ok(config)
}

fn sweep(common: &Common) -> isac_core::Result<()> {
    let config = load(common)?;
    let dir = config.output_dir.clone();
    let experiment = Experiment::with_cache(config.clone(), &dir.join("cache"))?;
    let result = with_pool(config.threads, || experiment.run())?;
    write_outputs(&result, &config, &dir)?;
    println!("{:<9} {:>7} {:>7} {:>4} {:>6} {:>8} {:>8} {:>10} {:>6}", "method", "snr_db", "density", "nv", "speed", "tpr", "ser", "mse", "abort");
    for r in &result.rows {
        println!(
            "{:<9} {:>7} {:>7} {:>4} {:>6} {:>8.4} {:>8.4} {:>10.3e} {:>6}",
            r.method.as_str(),
            r.snr_db,
            r.target_density,
            r.n_vehicles,
            r.speed,
            r.detection_tpr.mean,
            r.ser.mean,
            r.mse.mean,
            r.aborted
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn demo(common: &Common, snr: Option<f64>) -> isac_core::Result<()> {
    let mut config = load(common)?;
    config.trials = 1;
    if let Some(snr) = snr {
        config.grid.snr_db = vec![snr];
    }
    let experiment = Experiment::new(config.clone())?;
    let cell = config.cells()[0];
    let (truth, batch) = experiment.trial_inputs(&cell, 0)?;
    let priors = config.priors(&cell, &experiment.geometry)?;
    let options = config.ao_options();
    let channels = &experiment.channels;
    println!(
        "cell snr_db={} target_density={} n_vehicles={} speed={} seed={}",
        cell.snr_db, cell.target_density, cell.n_vehicles, cell.speed, config.seed
    );
    let ones = vec![1u8; experiment.geometry.n_positioning()];
    println!("delta(0) = {:.6e}", power_ratio(&truth, &ones, channels));
    let run = run_ao(&batch, channels, &priors, &config.threshold, &options)?;
    println!("{:>4} {:>6} {:>14} {:>14} {:>8} {:>12} {:>8}", "t", "beta", "residual", "delta", "ser", "mse", "tpr");
    for rec in &run.trace {
        let m = compute_metrics(&truth, &rec.estimate(config.scene.constellation));
        println!(
            "{:>4} {:>6.3} {:>14.6e} {:>14.6e} {:>8.4} {:>12.6e} {:>8.4}",
            rec.t,
            rec.beta,
            rec.residual,
            power_ratio(&truth, &rec.p_hat, channels),
            m.ser,
            m.mse,
            m.detection_tpr
        );
    }
    println!("stop: {:?} (epsilon {:.6e})", run.stop, run.epsilon);
    let base = run_baseline(&batch, channels, &priors, &config.threshold, &options)?;
    for (method, est) in [(Method::Ao, &run.estimate), (Method::Baseline, &base.estimate)] {
        let m = compute_metrics(&truth, est);
        println!(
            "{:<9} detection_rate_paper={:.4} detection_tpr={:.4} ser={:.4} mse={:.6e}",
            method.as_str(),
            m.detection_rate_paper,
            m.detection_tpr,
            m.ser,
            m.mse
        );
    }
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        SceneFile { geometry: experiment.geometry.clone(), truth }.save(&dir.join("scene.json"))?;
        println!("wrote {}", dir.join("scene.json").display());
    }
    Ok(())
}

fn oracle(common: &Common, trials: usize) -> isac_core::Result<bool> {
    let seed = common.seed.unwrap_or(1);
    let report = oracle_agreement(seed, trials)?;
    let pass = report.agreements == report.trials;
    println!(
        "exhaustive agreement {}/{}: {}",
        report.agreements,
        report.trials,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn channel_dump(common: &Common) -> isac_core::Result<()> {
    let config = load(common)?;
    let experiment = Experiment::new(config.clone())?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let hash = geometry_hash(&experiment.geometry, config.channel.carrier_hz, config.channel.vehicle_scattering);
    let ch = &experiment.channels;
    ch.write_cache(std::io::BufWriter::new(fs::File::create(dir.join("channels.bin"))?), &hash)?;
    write_channel_csv(ch, &dir.join("channels.csv"))?;
    fs::write(dir.join("geometry.json"), serde_json::to_string_pretty(&experiment.geometry)?)?;
    println!(
        "K={} N_p={} N_s={} wavelength={:.6e} m, LOS dominance {:.2} dB",
        ch.n_base_stations(),
        ch.n_positioning(),
        ch.n_sensing(),
        ch.wavelength,
        ch.los_dominance_db()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn write_channel_csv(ch: &isac_core::channel::ChannelSet, path: &Path) -> isac_core::Result<()> {
    let mut out = csv::Writer::from_writer(std::io::BufWriter::new(fs::File::create(path)?));
    out.write_record(["bs", "matrix", "row", "col", "re", "im"])?;
    for k in 0..ch.n_base_stations() {
        for (name, m) in [("vehicle", &ch.vehicle[k]), ("sensing", &ch.sensing[k])] {
            for ((i, j), z) in m.indexed_iter() {
                out.write_record([
                    k.to_string(),
                    name.to_string(),
                    i.to_string(),
                    j.to_string(),
                    format!("{:.16e}", z.re),
                    format!("{:.16e}", z.im),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep(c) => sweep(c).map(|_| true),
        Command::Demo { common, snr } => demo(common, *snr).map(|_| true),
        Command::Oracle { common, trials } => oracle(common, *trials),
        Command::ChannelDump(c) => channel_dump(c).map(|_| true),
    };
    let _ = std::io::stdout().flush();
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
