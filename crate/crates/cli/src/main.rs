//! `fbqkd`: command-line front end for the frequency-bin QKD link simulator.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! run fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use freqbin_qkd::detection::{read_stream_file, simulate_streams, write_binary, write_csv, PhaseSetting, StreamFormat};
use freqbin_qkd::qstate::density_to_csv;
use freqbin_qkd::scenario::{
    decode, distance_rows_to_csv, fringe_demo_to_csv, run_drift_rate, run_fringe_demo, run_qber_vs_time,
    run_skr_vs_distance, run_tomography, windows_to_csv, with_spool_length,
};
use freqbin_qkd::{Error, LinkConfig};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "fbqkd", version, about = "Frequency-bin entanglement QKD link simulator")]
struct Cli {
    /// TOML link configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "fbqkd-out")]
    out: PathBuf,
    /// Simulated duration in seconds.
    #[arg(long, global = true, value_name = "S")]
    duration: Option<f64>,
    /// Run with the phase lock engaged (default).
    #[arg(long, global = true, overrides_with = "unlocked")]
    locked: bool,
    /// Run with the phase lock disengaged.
    #[arg(long, global = true, overrides_with = "locked")]
    unlocked: bool,
    /// Also write whitespace-separated `.dat` files for plotting.
    #[arg(long, global = true)]
    plot_data: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Key rate and QBERs over a set of spool lengths.
    SkrVsDistance {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 2.6, 8.0, 10.6, 26.0])]
        lengths: Vec<f64>,
    },
    /// Windowed QBERs over time for one spool under thermal drift.
    QberVsTime {
        /// Spool length in km; the configured spool when omitted.
        #[arg(long)]
        length: Option<f64>,
    },
    /// Two-qubit state tomography of the source with MLE reconstruction.
    Tomography {
        #[arg(long, default_value_t = 1_000_000)]
        shots: u64,
    },
    /// Control-fringe sweeps and phase fits at the given phases (rad).
    Fringe {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0])]
        thetas: Vec<f64>,
    },
    /// Unlocked phase drift per 600 s, measured from the fringe fits.
    DriftRate {
        #[arg(long)]
        length: Option<f64>,
    },
    /// Write raw timestamp streams with the phase held at zero.
    Simulate {
        #[arg(long)]
        length: Option<f64>,
        /// File name inside the output directory; `.csv` selects CSV,
        /// anything else the binary format.
        #[arg(long, default_value = "streams.bin")]
        file: String,
    },
    /// Match and summarize a recorded stream file.
    Decode { file: PathBuf },
    /// Parse and validate a configuration file.
    ValidateConfig {
        /// Defaults to `--config`.
        path: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Run(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Run(m) => eprintln!("run failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<LinkConfig, Failure> {
    match path {
        Some(p) => Ok(LinkConfig::load(p)?),
        None => Ok(LinkConfig::default()),
    }
}

fn duration(cli: &Cli, default: f64) -> std::result::Result<f64, Failure> {
    let d = cli.duration.unwrap_or(default);
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(Failure::Usage(format!("--duration must be a positive number of seconds, got {d}")))
    }
}

fn check_length(km: f64) -> std::result::Result<f64, Failure> {
    if km.is_finite() && km >= 0.0 {
        Ok(km)
    } else {
        Err(Failure::Usage(format!("spool length must be a non-negative number of km, got {km}")))
    }
}

fn spool(link: &LinkConfig, length: Option<f64>) -> std::result::Result<LinkConfig, Failure> {
    match length {
        Some(km) => Ok(with_spool_length(link, check_length(km)?)),
        None => Ok(link.clone()),
    }
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn new(dir: &Path) -> std::result::Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
        Ok(Writer { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn put(&self, name: &str, text: &str) -> Outcome {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> Outcome {
        self.put(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn run(cli: Cli) -> Outcome {
    if let Command::ValidateConfig { path } = &cli.command {
        let path = path
            .as_deref()
            .or(cli.config.as_deref())
            .ok_or_else(|| Failure::Usage("no configuration file given".into()))?;
        let link = LinkConfig::load(path)?;
        println!(
            "{}: ok (spool {} km, seed {}, {} detectors)",
            path.display(),
            link.spool.length_km,
            link.seed,
            link.detectors.len()
        );
        return Ok(());
    }

    let link = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(link.seed);
    let locked = !cli.unlocked;
    let out = Writer::new(&cli.out)?;

    match &cli.command {
        Command::SkrVsDistance { lengths } => {
            if lengths.is_empty() {
                return Err(Failure::Usage("--lengths needs at least one value".into()));
            }
            for &km in lengths {
                check_length(km)?;
            }
            let secs = duration(&cli, 60.0)?;
            let rows = run_skr_vs_distance(&link, lengths, secs, seed)?;
            out.put("skr_vs_distance.csv", &distance_rows_to_csv(&rows))?;
            out.json("skr_vs_distance.json", &json!({ "duration_s": secs, "seed": seed, "rows": rows }))?;
            if cli.plot_data {
                let mut dat = String::from("# km skr_bps model_skr_bps eps_z eps_x model_eps_z model_eps_x\n");
                for r in &rows {
                    let _ = writeln!(
                        dat,
                        "{} {} {} {} {} {} {}",
                        r.fiber_km, r.skr_bps, r.model.skr_bps, r.eps_z, r.eps_x, r.model.eps_z, r.model.eps_x
                    );
                }
                out.put("skr_vs_distance.dat", &dat)?;
            }
            for r in &rows {
                println!(
                    "{:>6.1} km  eps_z {:.4}  eps_x {:.4}  skr {:.2} bit/s (model {:.2})",
                    r.fiber_km, r.eps_z, r.eps_x, r.skr_bps, r.model.skr_bps
                );
            }
        }
        Command::QberVsTime { length } => {
            let link = spool(&link, *length)?;
            let secs = duration(&cli, 600.0)?;
            let run = run_qber_vs_time(&link, secs, locked, seed)?;
            out.put("qber_windows.csv", &windows_to_csv(&run.windows))?;
            out.put("lock_trace.csv", &run.lock.to_csv())?;
            out.put("delay_histogram.csv", &run.histogram.to_csv())?;
            out.json(
                "qber_summary.json",
                &json!({
                    "fiber_km": run.fiber_km,
                    "duration_s": run.duration_s,
                    "locked": run.locked,
                    "seed": seed,
                    "car": run.car,
                    "summary": run.summary,
                    "counts": run.counts,
                }),
            )?;
            if cli.plot_data {
                let mut dat = String::from("# t_mid_s eps_z eps_x correlation_fidelity temperature_c\n");
                for w in &run.windows {
                    let _ = writeln!(
                        dat,
                        "{} {} {} {} {}",
                        0.5 * (w.start_s + w.end_s),
                        w.eps_z,
                        w.eps_x,
                        w.correlation_fidelity,
                        w.temperature
                    );
                }
                out.put("qber_vs_time.dat", &dat)?;
            }
            let s = &run.summary;
            println!(
                "{} km, {} s, lock {}: eps_z {:.4}  eps_x {:.4}  skr {:.2} bit/s",
                run.fiber_km,
                run.duration_s,
                if locked { "on" } else { "off" },
                s.eps_z,
                s.eps_x,
                s.skr_bps
            );
        }
        Command::Tomography { shots } => {
            if *shots == 0 {
                return Err(Failure::Usage("--shots must be positive".into()));
            }
            let report = run_tomography(&link, *shots, seed)?;
            out.json("tomography.json", &serde_json::to_value(&report)?)?;
            out.put("density_matrix.csv", &density_to_csv(&report.rho))?;
            let mut counts = String::from("alice,bob,shots,count\n");
            for r in &report.records {
                let s = r.setting;
                let _ = writeln!(counts, "{},{},{},{}", s.alice_projector.label(), s.bob_projector.label(), s.shots, r.count);
            }
            out.put("tomography_counts.csv", &counts)?;
            println!(
                "fidelity to psi+ {:.4} (linear inversion {:.4}), {} iterations",
                report.fidelity_to_psi_plus, report.linear_fidelity_to_psi_plus, report.iterations
            );
        }
        Command::Fringe { thetas } => {
            if thetas.is_empty() || thetas.iter().any(|t| !t.is_finite()) {
                return Err(Failure::Usage("--thetas needs finite values".into()));
            }
            let entries = run_fringe_demo(&link, thetas, seed)?;
            let (samples, fits) = fringe_demo_to_csv(&entries);
            out.put("fringe_samples.csv", &samples)?;
            out.put("fringe_fits.csv", &fits)?;
            for e in &entries {
                println!("theta {:.4} rad -> fit {:.4} rad", e.theta_true, e.fit.theta);
            }
        }
        Command::DriftRate { length } => {
            let link = spool(&link, *length)?;
            let secs = duration(&cli, 36_000.0)?;
            let report = run_drift_rate(&link, secs, seed)?;
            out.json("drift_rate.json", &serde_json::to_value(&report)?)?;
            println!(
                "{} km: {:.4} rad/km per 600 s (mean |dT| {:.4} °C)",
                report.fiber_km, report.rate_rad_per_km_600s, report.mean_abs_dtemp_600s
            );
        }
        Command::Simulate { length, file } => {
            let link = spool(&link, *length)?;
            let secs = duration(&cli, 10.0)?;
            let (a, b) = simulate_streams(&link, secs, &|_| PhaseSetting::default(), seed)?;
            let mut all: Vec<_> = a.into_iter().chain(b).collect();
            all.sort_unstable();
            let path = out.path(file);
            let f = fs::File::create(&path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
            let w = std::io::BufWriter::new(f);
            match StreamFormat::from_path(&path) {
                StreamFormat::Csv => write_csv(w, &all)?,
                StreamFormat::Binary => write_binary(w, &all)?,
            }
            println!("wrote {} ({} records)", path.display(), all.len());
        }
        Command::Decode { file } => {
            let records = read_stream_file(file).map_err(|e| Failure::Run(format!("{}: {e}", file.display())))?;
            let report = decode(&link, &records)?;
            let mut events = String::from("alice_time_ps,alice_detector,bob_detector,delta_t_ps,outcome\n");
            for e in &report.events {
                let _ = writeln!(
                    events,
                    "{},{},{},{},{}",
                    e.alice_time_ps, e.alice_detector, e.bob_detector, e.delta_t_ps, e.outcome
                );
            }
            out.put("events.csv", &events)?;
            out.put("correlation_matrix.csv", &report.counts.correlation_matrix()?.to_csv())?;
            out.put("delay_histogram.csv", &report.histogram.to_csv())?;
            out.json(
                "decode_summary.json",
                &json!({
                    "records": records.len(),
                    "events": report.events.len(),
                    "duration_s": report.duration_s,
                    "car": report.car,
                    "summary": report.summary,
                    "counts": report.counts,
                }),
            )?;
            println!(
                "{} events over {:.3} s: eps_z {:.4}  eps_x {:.4}",
                report.events.len(),
                report.duration_s,
                report.summary.eps_z,
                report.summary.eps_x
            );
        }
        Command::ValidateConfig { .. } => unreachable!(),
    }
    Ok(())
}
