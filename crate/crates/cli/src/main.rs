//! `tcmb`: simulate, track and score the image-based multi-target filters.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use tcmb_core::metrics::Position;
use tcmb_core::scenario::{generate_truth, run_trial_observed, trial_rng, Stream};
use tcmb_core::sensor::{PgmFormat, PgmScaling};
use tcmb_core::{ospa, run_batch, simulate_measurement, Algorithm, OspaParams, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "tcmb",
    version,
    about = "Track-before-detect multi-Bernoulli filtering on image sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the simulated measurement frames of one trial.
    Simulate {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, value_enum, default_value_t = ImageFormat::Pgm)]
        format: ImageFormat,
        #[command(flatten)]
        scaling: ScalingArgs,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter over one trial and write the extracted states.
    Track {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, default_value = "tcmb")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Extractions CSV: k,id,x,vx,y,vy.
        #[arg(long)]
        out: PathBuf,
        /// Cluster membership per step: k,cluster,id.
        #[arg(long)]
        dump_clusters: Option<PathBuf>,
        /// Directory for per-step posterior records (states_KKK.csv).
        #[arg(long)]
        dump_states: Option<PathBuf>,
        /// Directory for per-step measurement frames (PGM).
        #[arg(long)]
        dump_images: Option<PathBuf>,
        #[command(flatten)]
        scaling: ScalingArgs,
    },
    /// Monte Carlo batch; writes k,true_card,mean_card,std_card,mean_ospa.
    Mc {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, default_value = "tcmb")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// OSPA distance between two point-set files (one `x,y` per line).
    Ospa {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 1.0)]
        order: f64,
    },
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario JSON; defaults to the built-in five-target scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Linear grey-level mapping for PGM output; both bounds or neither.
#[derive(clap::Args)]
struct ScalingArgs {
    /// Value mapped to grey level 0 (default: frame minimum).
    #[arg(long, requires = "scale_max", allow_hyphen_values = true)]
    scale_min: Option<f64>,
    /// Value mapped to the top grey level (default: frame maximum).
    #[arg(long, requires = "scale_min", allow_hyphen_values = true)]
    scale_max: Option<f64>,
}

impl ScalingArgs {
    fn scaling(&self) -> CliResult<PgmScaling> {
        match (self.scale_min, self.scale_max) {
            (Some(lo), Some(hi)) if lo < hi => Ok(PgmScaling::Fixed { lo, hi }),
            (Some(_), Some(_)) => Err("--scale-min must be below --scale-max".into()),
            _ => Ok(PgmScaling::Auto),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageFormat {
    /// Binary PGM (P5).
    Pgm,
    /// ASCII PGM (P2).
    PgmAscii,
    /// i,j,value rows.
    Csv,
}

type CliResult<T> = std::result::Result<T, String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            if !rendered.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("tcmb: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate {
            common,
            trial,
            format,
            scaling,
            out,
        } => simulate(&load_scenario(&common)?, trial, format, scaling.scaling()?, &out),
        Command::Track {
            common,
            algorithm,
            trial,
            out,
            dump_clusters,
            dump_states,
            dump_images,
            scaling,
        } => {
            let dumps = Dumps {
                clusters: dump_clusters,
                states: dump_states,
                images: dump_images,
                scaling: scaling.scaling()?,
            };
            track(&load_scenario(&common)?, algorithm, trial, &out, &dumps)
        }
        Command::Mc {
            common,
            algorithm,
            trials,
            jobs,
            out,
        } => monte_carlo(&load_scenario(&common)?, algorithm, trials, jobs, &out),
        Command::Ospa { x, y, cutoff, order } => {
            let params = OspaParams { c: cutoff, p: order };
            params.validate().map_err(|e| e.to_string())?;
            let d = ospa(&read_points(&x)?, &read_points(&y)?, params);
            println!("{d}");
            Ok(())
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> CliResult<ScenarioConfig> {
    let mut sc = match &args.scenario {
        Some(path) => ScenarioConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => ScenarioConfig::builtin(),
    };
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let ctx = |e: io::Error| format!("{}: {e}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(ctx)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(ctx)?;
        w.flush().map_err(ctx)?;
    }
    tmp.persist(path).map_err(|e| ctx(e.error))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn simulate(sc: &ScenarioConfig, trial: u64, format: ImageFormat, scaling: PgmScaling, out: &Path) -> CliResult<()> {
    ensure_dir(out)?;
    let truth = generate_truth(sc, &mut trial_rng(sc.seed, trial, Stream::Truth));
    let mut rng = trial_rng(sc.seed, trial, Stream::Measurement);
    for (k, present) in (1..=sc.steps).zip(&truth) {
        let scene: Vec<_> = present.iter().map(|(i, x)| (*x, sc.targets[*i].intensity)).collect();
        let z = simulate_measurement(&scene, &sc.sensor, &mut rng);
        let (ext, pgm) = match format {
            ImageFormat::Pgm => ("pgm", Some(PgmFormat::Binary)),
            ImageFormat::PgmAscii => ("pgm", Some(PgmFormat::Ascii)),
            ImageFormat::Csv => ("csv", None),
        };
        write_atomic(&out.join(format!("frame_{k:03}.{ext}")), |w| match pgm {
            Some(f) => z.write_pgm(w, f, scaling),
            None => z.write_csv(w),
        })?;
    }
    Ok(())
}

struct Dumps {
    clusters: Option<PathBuf>,
    states: Option<PathBuf>,
    images: Option<PathBuf>,
    scaling: PgmScaling,
}

fn track(sc: &ScenarioConfig, algorithm: Algorithm, trial: u64, out: &Path, dumps: &Dumps) -> CliResult<()> {
    let (dump_states, dump_images) = (dumps.states.as_deref(), dumps.images.as_deref());
    for dir in [dump_states, dump_images].into_iter().flatten() {
        ensure_dir(dir)?;
    }
    let mut extractions = String::from("k,id,x,vx,y,vy\n");
    let mut clusters = String::from("k,cluster,id\n");
    let mut io_error = None;
    let result = run_trial_observed(sc, algorithm, trial, |s| {
        for e in &s.output.extractions {
            let x = e.state;
            let _ = writeln!(extractions, "{},{},{},{},{},{}", s.k, e.id, x[0], x[1], x[2], x[3]);
        }
        for (ci, c) in s.output.clusters.iter().enumerate() {
            for id in &c.member_ids {
                let _ = writeln!(clusters, "{},{ci},{id}", s.k);
            }
        }
        let dumped = dump_states
            .map(|dir| {
                let records = s.output.posterior.to_records();
                write_atomic(&dir.join(format!("states_{:03}.csv", s.k)), |w| {
                    w.write_all(records.as_bytes())
                })
            })
            .transpose()
            .and_then(|_| {
                dump_images
                    .map(|dir| {
                        write_atomic(&dir.join(format!("frame_{:03}.pgm", s.k)), |w| {
                            s.measurement.write_pgm(w, PgmFormat::Binary, dumps.scaling)
                        })
                    })
                    .transpose()
            });
        if let Err(e) = dumped {
            io_error.get_or_insert(e);
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    if let Some(e) = io_error {
        return Err(e);
    }
    write_atomic(out, |w| w.write_all(extractions.as_bytes()))?;
    if let Some(path) = &dumps.clusters {
        write_atomic(path, |w| w.write_all(clusters.as_bytes()))?;
    }
    Ok(())
}

fn monte_carlo(
    sc: &ScenarioConfig,
    algorithm: Algorithm,
    trials: u64,
    jobs: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| e.to_string())?;
    let batch = pool
        .install(|| run_batch(sc, algorithm, trials))
        .map_err(|e| e.to_string())?;
    write_atomic(out, |w| batch.write_csv(w))
}

/// Reads `x,y` (or whitespace separated) points; `#` starts a comment line.
fn read_points(path: &Path) -> CliResult<Vec<Position>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut pts = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: Vec<f64> = fields.iter().filter_map(|f| f.parse().ok()).collect();
        if fields.len() != 2 || parsed.len() != 2 || parsed.iter().any(|v| !v.is_finite()) {
            return Err(format!("{}:{}: expected two numbers", path.display(), n + 1));
        }
        pts.push([parsed[0], parsed[1]]);
    }
    Ok(pts)
}
