//! Command-line front end: `sample`, `estimate`, `study`, `fit`, `patterns`
//! and `states`.
//!
//! Every flag may also come from a JSON file given with `--config`; flags on
//! the command line take precedence.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::evaluation::{fit_power_law_means, threshold_scale_sweep, StudyTable};
use crate::measurement::{load_records, save_records, simulate, NoiseConfig};
use crate::patterns::{GridSpec, PatternTable};
use crate::states::{density_matrix, StateKind, StateModel};

const DEFAULT_REPS: usize = 50;
const DEFAULT_SEED: u64 = 0;
const DEFAULT_STATES_DIM: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "homodyne", version, about = "Density-matrix estimation from noisy homodyne data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate noisy homodyne records and write them as `y,phi` CSV.
    Sample(Opts),
    /// Estimate the density matrix from a sample CSV.
    Estimate(Opts),
    /// Monte Carlo RMSE study over a grid of sample sizes.
    Study(Opts),
    /// Fit a power law to a study CSV.
    Fit(Opts),
    /// Dump one pattern function as `x,f` CSV.
    Patterns(Opts),
    /// Write the truncated density matrix of a catalog state.
    States(Opts),
}

/// All flags, shared by every subcommand. Each subcommand reads the subset
/// it needs.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opts {
    /// JSON file supplying default values for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// vacuum, single_photon, coherent, thermal or cat.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub q0: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long = "B0")]
    #[serde(rename = "B0")]
    pub b0: Option<f64>,
    /// Fock cutoff; overrides the sample-size rule.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n_index: Option<usize>,
    /// Threshold scale; `study` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub kappa: Vec<f64>,
    /// Number of records.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated sample sizes for `study`.
    #[arg(long = "n-grid", value_delimiter = ',')]
    #[serde(default, rename = "n_grid", alias = "n-grid")]
    pub n_grid: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// FFT grid size Q (power of two).
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Row index of the pattern function.
    #[arg(long)]
    pub j: Option<usize>,
    /// Column index of the pattern function.
    #[arg(long)]
    pub k: Option<usize>,
}

impl Opts {
    /// Fill unset fields from `file`.
    fn merge(mut self, file: Opts) -> Self {
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = file.$f; } )* };
        }
        fill!(state, q0, beta, eta, epsilon, r0, b0, n_index, n, reps, seed, grid, input, out, threads, j, k);
        if self.kappa.is_empty() {
            self.kappa = file.kappa;
        }
        if self.n_grid.is_empty() {
            self.n_grid = file.n_grid;
        }
        self
    }

    fn resolve(self) -> Result<Self> {
        match &self.config {
            Some(path) => {
                let f = File::open(path).map_err(|e| Error::io(path, e))?;
                let file: Opts = serde_json::from_reader(f).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: e.line() as u64,
                    message: e.to_string(),
                })?;
                Ok(self.merge(file))
            }
            None => Ok(self),
        }
    }

    fn state(&self) -> Result<StateModel> {
        let name = self
            .state
            .as_deref()
            .ok_or_else(|| Error::param("state", "required"))?;
        StateModel::from_parts(name.parse::<StateKind>()?, self.q0, self.beta)
    }

    fn single_kappa(&self) -> Result<f64> {
        match self.kappa.as_slice() {
            [] => Ok(1.0),
            [k] => Ok(*k),
            _ => Err(Error::param("kappa", "this subcommand takes a single value")),
        }
    }

    fn estimator_config(&self) -> Result<EstimatorConfig> {
        let d = EstimatorConfig::default();
        let cfg = EstimatorConfig {
            eta: self.eta.unwrap_or(d.eta),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            r0: self.r0.unwrap_or(d.r0),
            b0: self.b0.unwrap_or(d.b0),
            n_override: self.n_index,
            kappa: self.single_kappa()?,
            grid: self.grid_spec()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn grid_spec(&self) -> Result<GridSpec> {
        let g = self.grid.map_or_else(GridSpec::default, GridSpec::with_q);
        g.validate()?;
        Ok(g)
    }

    fn noise(&self) -> Result<NoiseConfig> {
        NoiseConfig::new(self.eta.unwrap_or(EstimatorConfig::default().eta))
    }

    fn need<T: Clone>(v: &Option<T>, name: &'static str) -> Result<T> {
        v.clone().ok_or_else(|| Error::param(name, "required"))
    }
}

/// Written next to a sample CSV as `<file>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleInfo {
    pub state: StateModel,
    pub eta: f64,
    pub n: usize,
    pub seed: u64,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn summary_path(path: &Path) -> PathBuf {
    path.with_extension("summary.csv")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn cmd_sample(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let state = o.state()?;
    let noise = o.noise()?;
    let n = Opts::need(&o.n, "n")?;
    let seed = o.seed.unwrap_or(DEFAULT_SEED);
    let path = Opts::need(&o.out, "out")?;
    let records = simulate(&state, &noise, n, seed)?;
    save_records(&records, &path)?;
    let info = SampleInfo {
        state,
        eta: noise.eta(),
        n,
        seed,
    };
    write_json(&info, &sidecar(&path))?;
    writeln!(out, "n={n} eta={} seed={seed} state={}", noise.eta(), state.label()).map_err(stdout_err)
}

fn cmd_estimate(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let input = Opts::need(&o.input, "in")?;
    let records = load_records(&input)?;
    let mut opts = o.clone();
    let info_path = sidecar(&input);
    if info_path.exists() {
        let f = File::open(&info_path).map_err(|e| Error::io(&info_path, e))?;
        let info: SampleInfo = serde_json::from_reader(f)?;
        match opts.eta {
            Some(eta) if eta != info.eta => {
                return Err(Error::EtaMismatch {
                    table: eta,
                    data: info.eta,
                })
            }
            _ => opts.eta = Some(info.eta),
        }
    }
    let cfg = opts.estimator_config()?;
    let result = Estimator::new(cfg)?.estimate(&records)?;
    if let Some(path) = &o.out {
        result.save_json(path)?;
    }
    writeln!(
        out,
        "N_used={} norm={:.6e} nonzero={}",
        result.n_used,
        result.thresholded.norm(),
        result.thresholded.count_nonzero()
    )
    .map_err(stdout_err)
}

fn cmd_study(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let state = o.state()?;
    let mut cfg = Opts {
        kappa: vec![],
        ..o.clone()
    }
    .estimator_config()?;
    let scales = if o.kappa.is_empty() { vec![cfg.kappa] } else { o.kappa.clone() };
    cfg.kappa = scales[0];
    if o.n_grid.is_empty() {
        return Err(Error::param("n-grid", "required"));
    }
    let reps = o.reps.unwrap_or(DEFAULT_REPS);
    let seed = o.seed.unwrap_or(DEFAULT_SEED);
    let studies = threshold_scale_sweep(&state, &cfg, &o.n_grid, &scales, reps, seed)?;

    if let Some(path) = &o.out {
        let mut w = create(path)?;
        for (i, s) in studies.iter().enumerate() {
            s.write_csv(&mut w, i == 0)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let spath = summary_path(path);
        let mut w = create(&spath)?;
        for (i, s) in studies.iter().enumerate() {
            s.write_summary_csv(&mut w, i == 0)?;
        }
        w.flush().map_err(|e| Error::io(&spath, e))?;
    }
    for (i, s) in studies.iter().enumerate() {
        s.write_summary_csv(&mut *out, i == 0)?;
    }
    Ok(())
}

fn cmd_fit(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let input = Opts::need(&o.input, "in")?;
    let f = File::open(&input).map_err(|e| Error::io(&input, e))?;
    let table = StudyTable::read_csv(f, &input)?;
    let kappa = match o.kappa.as_slice() {
        [] => None,
        [k] => Some(*k),
        _ => return Err(Error::param("kappa", "fit takes a single value")),
    };
    let (ns, means, reps) = table.means(kappa)?;
    let gamma = o.noise()?.gamma();
    let fit = fit_power_law_means(&ns, &means, gamma, reps)?;
    if let Some(path) = &o.out {
        write_json(&fit, path)?;
    }
    writeln!(out, "slope={:.6} B_tilde={:.6} gamma={:.6}", fit.slope, fit.b_tilde, fit.gamma).map_err(stdout_err)
}

fn cmd_patterns(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let j = o.j.unwrap_or(0);
    let k = o.k.unwrap_or(0);
    let n_index = o.n_index.unwrap_or(j + k + 1).max(j + k + 1);
    let noise = o.noise()?;
    let table = PatternTable::build(n_index, &noise, &o.grid_spec()?)?;
    let sup = table.sup_norm(j, k)?;
    match &o.out {
        Some(path) => {
            table.save_csv(j, k, path)?;
            write_json(&table.metadata(), &sidecar(path))?;
        }
        None => table.write_csv(j, k, &mut *out)?,
    }
    if o.out.is_some() {
        writeln!(
            out,
            "j={j} k={k} eta={} T={:.6} sup_norm={sup:.9e}",
            noise.eta(),
            table.cutoff()
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

fn cmd_states(o: &Opts, out: &mut dyn Write) -> Result<()> {
    let state = o.state()?;
    let dim = o.n_index.unwrap_or(DEFAULT_STATES_DIM);
    let m = density_matrix(&state, dim)?;
    match &o.out {
        Some(path) => {
            let mut w = create(path)?;
            m.write_csv(&mut w)?;
            w.flush().map_err(|e| Error::io(path, e))?;
            writeln!(out, "state={} dim={dim} trace={:.12}", state.label(), m.trace().re).map_err(stdout_err)
        }
        None => m.write_csv(&mut *out),
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::param("threads", "must be >= 1"));
        }
        // A second initialization (e.g. repeated in-process runs) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

type Handler = fn(&Opts, &mut dyn Write) -> Result<()>;

/// Run an already parsed command, writing human output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let (run, opts): (Handler, Opts) = match cli.command {
        Command::Sample(o) => (cmd_sample, o),
        Command::Estimate(o) => (cmd_estimate, o),
        Command::Study(o) => (cmd_study, o),
        Command::Fit(o) => (cmd_fit, o),
        Command::Patterns(o) => (cmd_patterns, o),
        Command::States(o) => (cmd_states, o),
    };
    let opts = opts.resolve()?;
    init_threads(opts.threads)?;
    run(&opts, out)
}

/// One-line error report: `error kind=<kind> message="<text>"`.
pub fn error_line(kind: &str, message: &str) -> String {
    let flat: String = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error kind={kind} message={flat:?}")
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "{}", error_line("usage", first));
            return 2;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}
