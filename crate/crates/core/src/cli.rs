//! Command-line front end: TOML run configuration, CSV readers and writers,
//! and the five commands.
//!
//! Every output file starts with a provenance line
//! `# featalloc <version> config=<sha256> seed=<seed>`, where the hash is
//! taken over the effective configuration after command-line overrides.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::{
    alpha_metropolis, fit_empirical_bayes, random_alpha_predictive, AlphaPrior, DppParams, FitOptions, FitResult,
};
use crate::infer_crm::{
    binomial_thin, crm_predictive_new, mb_posterior_count, mb_predictive_new, mp_predictive_new, Dependence,
    NewFeatureLaw,
};
use crate::infer_dpp::{dpp_count_posterior, unseen_intensity_map, DppModel, Mode};
use crate::kernels::{GaussianDppKernel, Point, Rect};
use crate::poibin::Pmf;
use crate::priors::{BetaLevy, BetaMarkLaw, CountLaw, GammaMixing, UniformDensity};
use crate::simulate::{
    sample_mb_psi, sample_mixed_psi, sample_observations, sample_poisson_psi, summarize, Atom, DppSampler,
    FeatureSample, Observation, PsiRealization, DEFAULT_EPS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping internal parallelism.
pub const THREADS_ENV: &str = "FEATALLOC_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    MixedPoisson,
    MixedBinomial,
    Dpp,
    RandomAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub family: Family,
    #[serde(default)]
    pub seed: u64,
    /// Number of observations to simulate.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_ngrid")]
    pub ngrid: usize,
    /// Count posterior mode; intensity maps default to `lecam` when unset.
    pub mode: Option<Mode>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Write the intensity map rescaled to integrate to one.
    #[serde(default)]
    pub normalized_map: bool,
    /// Write exact and Le Cam count posteriors side by side.
    #[serde(default)]
    pub compare_modes: bool,
}

fn default_n() -> usize {
    15
}
fn default_ngrid() -> usize {
    crate::kernels::DEFAULT_NGRID
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppSection {
    pub rho: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkSection {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub gamma: f64,
    #[serde(default)]
    pub alpha: f64,
    pub beta: f64,
    /// Weight truncation used when simulating.
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    Poisson,
    NegBinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountSection {
    pub law: CountKind,
    pub lambda: Option<f64>,
    pub r: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPriorKind {
    Uniform,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomAlphaSection {
    #[serde(default = "default_prior_kind")]
    pub prior: AlphaPriorKind,
    pub prior_a: Option<f64>,
    pub prior_b: Option<f64>,
    #[serde(default = "default_iter")]
    pub n_iter: usize,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_prior_kind() -> AlphaPriorKind {
    AlphaPriorKind::Uniform
}
fn default_iter() -> usize {
    100_000
}
fn default_step() -> f64 {
    crate::fit::DEFAULT_STEP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Fit hyperparameters before count posteriors and intensity maps.
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Optional starting point; the data-driven guess fills the gaps.
    pub init_a: Option<f64>,
    pub init_b: Option<f64>,
    pub init_rho: Option<f64>,
    pub init_alpha: Option<f64>,
}

fn default_budget() -> usize {
    FitOptions::default().budget
}
fn default_tol() -> f64 {
    FitOptions::default().tol
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            enabled: false,
            budget: default_budget(),
            tol: default_tol(),
            init_a: None,
            init_b: None,
            init_rho: None,
            init_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Ground-truth locations (`x,y` columns) to survey instead of sampling
    /// them from the prior.
    pub truth_csv: Option<PathBuf>,
}

/// A whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub region: RegionSection,
    pub dpp: Option<DppSection>,
    pub mark: Option<MarkSection>,
    pub levy: Option<LevySection>,
    pub mixing: Option<MixingSection>,
    pub count: Option<CountSection>,
    pub random_alpha: Option<RandomAlphaSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing [{section}] section"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file. A relative `[simulate] truth_csv` is
    /// taken relative to the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(truth), Some(dir)) = (&cfg.simulate.truth_csv, path.parent()) {
            if truth.is_relative() {
                cfg.simulate.truth_csv = Some(dir.join(truth));
            }
        }
        Ok(cfg)
    }

    /// Builds every object the family needs so that bad parameters surface
    /// as configuration errors before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.region()?;
        match self.run.family {
            Family::Poisson => {
                self.levy()?;
            }
            Family::MixedPoisson => {
                self.levy()?;
                self.mixing()?;
            }
            Family::MixedBinomial => {
                self.count_law()?;
                self.mark()?;
            }
            Family::Dpp => {
                self.dpp_model()?;
            }
            Family::RandomAlpha => {
                self.levy()?;
                self.alpha_prior()?;
            }
        }
        Ok(())
    }

    pub fn region(&self) -> Result<Rect> {
        let r = &self.region;
        Rect::new([r.x0, r.y0], [r.width, r.height]).map_err(config_err)
    }

    pub fn mark(&self) -> Result<BetaMarkLaw> {
        let m = self.mark.ok_or_else(|| missing("mark"))?;
        BetaMarkLaw::new(m.a, m.b).map_err(config_err)
    }

    pub fn kernel(&self) -> Result<GaussianDppKernel> {
        let d = self.dpp.ok_or_else(|| missing("dpp"))?;
        GaussianDppKernel::new(d.rho, d.alpha, self.region()?).map_err(config_err)
    }

    pub fn dpp_model(&self) -> Result<DppModel> {
        DppModel::new(self.kernel()?, self.mark()?, self.run.ngrid).map_err(config_err)
    }

    pub fn dpp_params(&self) -> Result<DppParams> {
        let d = self.dpp.ok_or_else(|| missing("dpp"))?;
        let m = self.mark()?;
        Ok(DppParams {
            a: m.a(),
            b: m.b(),
            rho: d.rho,
            alpha: d.alpha,
        })
    }

    pub fn levy(&self) -> Result<BetaLevy> {
        let l = self.levy.ok_or_else(|| missing("levy"))?;
        let levy = BetaLevy::new(l.gamma, l.alpha, l.beta, self.region()?).map_err(config_err)?;
        if !(l.eps > 0.0 && l.eps <= 1.0) {
            return Err(Error::Config(format!("levy.eps must be in (0, 1], got {}", l.eps)));
        }
        Ok(levy)
    }

    pub fn mixing(&self) -> Result<GammaMixing> {
        let m = self.mixing.ok_or_else(|| missing("mixing"))?;
        GammaMixing::new(m.shape, m.rate).map_err(config_err)
    }

    pub fn count_law(&self) -> Result<CountLaw> {
        let c = self.count.ok_or_else(|| missing("count"))?;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("count.{name} is required")));
        match c.law {
            CountKind::Poisson => CountLaw::poisson(need(c.lambda, "lambda")?),
            CountKind::NegBinomial => CountLaw::neg_binomial(need(c.r, "r")?, need(c.p, "p")?),
        }
        .map_err(config_err)
    }

    pub fn alpha_prior(&self) -> Result<AlphaPrior> {
        let s = self.random_alpha.ok_or_else(|| missing("random_alpha"))?;
        if s.n_iter == 0 || !(s.step > 0.0) {
            return Err(Error::Config("random_alpha needs n_iter >= 1 and step > 0".into()));
        }
        match s.prior {
            AlphaPriorKind::Uniform => Ok(AlphaPrior::Uniform),
            AlphaPriorKind::Beta => match (s.prior_a, s.prior_b) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Ok(AlphaPrior::Beta { a, b }),
                _ => Err(Error::Config("a beta alpha prior needs positive prior_a and prior_b".into())),
            },
        }
    }

    /// Hex SHA-256 of the canonical TOML serialization. The output directory
    /// is left out so identical analyses written elsewhere share a hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.out = Default::default();
        let text = toml::to_string(&canonical).expect("configuration serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> String {
        format!("featalloc {VERSION} config={} seed={}", self.hash(), self.run.seed)
    }
}

#[derive(Debug, Parser)]
#[command(name = "featalloc", version, about = "Feature allocation with spatial priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Count posterior evaluation: exact or lecam.
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Grid points per side for the Nyström discretization.
    #[arg(long, global = true)]
    pub ngrid: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample ground truth and observations.
    Simulate,
    /// Empirical-Bayes fit of the DPP hyperparameters.
    Fit {
        /// Observations CSV; defaults to <out>/observations.csv.
        observations: Option<PathBuf>,
    },
    /// Posterior law of the total number of features.
    CountPosterior { observations: Option<PathBuf> },
    /// Map of the intensity of unseen features.
    IntensityMap { observations: Option<PathBuf> },
    /// Law of the number of new features in the next observation.
    PredictNew { observations: Option<PathBuf> },
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.run.mode = Some(m);
        }
        if let Some(o) = &self.out {
            cfg.run.out = o.clone();
        }
        if let Some(n) = self.ngrid {
            cfg.run.ngrid = n;
        }
        cfg.validate()
    }
}

/// Reads the configuration named by `--config`, applies overrides and runs
/// the command. Returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let path = cli
        .overrides
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    cli.overrides.apply(&mut cfg)?;
    init_threads();
    let obs = |o: &Option<PathBuf>| o.clone().unwrap_or_else(|| cfg.run.out.join("observations.csv"));
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Fit { observations } => cmd_fit(&cfg, &obs(observations)),
        Command::CountPosterior { observations } => cmd_count_posterior(&cfg, &obs(observations)),
        Command::IntensityMap { observations } => cmd_intensity_map(&cfg, &obs(observations)),
        Command::PredictNew { observations } => cmd_predict_new(&cfg, &obs(observations)),
    }
}

/// Applies `FEATALLOC_THREADS` to the linear-algebra backend.
pub fn init_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else { return };
    match v.trim().parse::<usize>() {
        Ok(0) | Err(_) => log::warn!("ignoring {THREADS_ENV}={v:?}; expected a positive integer"),
        Ok(1) => faer::set_global_parallelism(faer::Par::Seq),
        Ok(n) => faer::set_global_parallelism(faer::Par::rayon(n)),
    }
}

fn rng_for(cfg: &RunConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.run.seed)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Ground truth for a simulation: a prior draw, or surveyed locations from
/// `[simulate] truth_csv` marked with the configured beta law.
pub fn simulate_truth(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<PsiRealization> {
    if let Some(path) = &cfg.simulate.truth_csv {
        let region = cfg.region()?;
        let mark = cfg.mark()?;
        let locations = read_points_csv(path)?;
        for (i, p) in locations.iter().enumerate() {
            if !region.contains(*p) {
                return Err(Error::DegenerateData(format!(
                    "{}: point {i} at ({}, {}) lies outside the configured region",
                    path.display(),
                    p[0],
                    p[1]
                )));
            }
        }
        let atoms = locations
            .into_iter()
            .map(|location| Atom {
                location,
                weight: mark.sample(rng),
            })
            .collect();
        return PsiRealization::new(atoms);
    }
    match cfg.run.family {
        Family::Poisson => sample_poisson_psi(&cfg.levy()?, cfg.levy.map_or(DEFAULT_EPS, |l| l.eps), rng),
        Family::MixedPoisson => sample_mixed_psi(&cfg.levy()?, &cfg.mixing()?, cfg.levy.map_or(DEFAULT_EPS, |l| l.eps), rng),
        Family::MixedBinomial => Ok(sample_mb_psi(
            &cfg.count_law()?,
            &cfg.mark()?,
            &UniformDensity(cfg.region()?),
            rng,
        )),
        Family::Dpp => {
            let sampler = DppSampler::new(&cfg.kernel()?, cfg.run.ngrid)?;
            Ok(sampler.sample_psi(&cfg.mark()?, rng))
        }
        Family::RandomAlpha => {
            let alpha = match cfg.alpha_prior()? {
                AlphaPrior::Uniform => rand::Rng::random::<f64>(rng),
                AlphaPrior::Beta { a, b } => BetaMarkLaw::new(a, b)?.sample(rng),
            };
            let levy = cfg.levy()?.with_alpha(alpha.min(1.0 - 1e-12))?;
            sample_poisson_psi(&levy, cfg.levy.map_or(DEFAULT_EPS, |l| l.eps), rng)
        }
    }
}

/// Writes `truth.csv` (x, y, weight) and `observations.csv` (obs_id, x, y).
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut rng = rng_for(cfg);
    let truth = simulate_truth(cfg, &mut rng)?;
    let observations = sample_observations(&truth, cfg.run.n, &mut rng);
    let header = cfg.provenance();
    let truth_path = cfg.run.out.join("truth.csv");
    write_file(&truth_path, |w| {
        writeln!(w, "# {header}")?;
        writeln!(w, "x,y,weight")?;
        for a in truth.atoms() {
            writeln!(w, "{},{},{}", a.location[0], a.location[1], a.weight)?;
        }
        Ok(())
    })?;
    let obs_path = cfg.run.out.join("observations.csv");
    write_observations(&obs_path, &observations, Some(&header))?;
    log::info!(
        "simulated {} atoms, {} observations, {} distinct features",
        truth.len(),
        observations.len(),
        summarize(&observations).k()
    );
    Ok(vec![truth_path, obs_path])
}

/// `obs_id,x,y`, one row per displayed feature. A `# n=<n>` comment keeps
/// the number of observations when trailing ones display nothing.
pub fn write_observations(path: &Path, observations: &[Observation], header: Option<&str>) -> Result<()> {
    write_file(path, |w| {
        if let Some(h) = header {
            writeln!(w, "# {h}")?;
        }
        writeln!(w, "# n={}", observations.len())?;
        writeln!(w, "obs_id,x,y")?;
        for (i, o) in observations.iter().enumerate() {
            for p in &o.features {
                writeln!(w, "{i},{},{}", p[0], p[1])?;
            }
        }
        Ok(())
    })
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_reader(path: &Path) -> Result<(csv::Reader<fs::File>, Vec<String>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, e.position().map_or(1, |p| p.line()), e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    Ok((rdr, headers))
}

fn column(path: &Path, headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column {name:?} in header {headers:?}")))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(path, line, format!("missing field {name}")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {name} from {raw:?}")))
}

/// Points from a CSV with `x` and `y` columns.
pub fn read_points_csv(path: &Path) -> Result<Vec<Point>> {
    let (mut rdr, headers) = csv_reader(path)?;
    let (ix, iy) = (column(path, &headers, "x")?, column(path, &headers, "y")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let x: f64 = field(path, &rec, ix, "x")?;
        let y: f64 = field(path, &rec, iy, "y")?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(parse_err(path, rec.position().map_or(0, |p| p.line()), "non-finite coordinate"));
        }
        out.push([x, y]);
    }
    Ok(out)
}

/// Reads observations, taking `n` from a `# n=` comment or else from
/// `default_n`. Feature identity is by exact coordinates.
pub fn read_observations(path: &Path, default_n: usize) -> Result<Vec<Observation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let declared = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("n=").map(str::to_owned));
    let n = match declared {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| parse_err(path, 1, format!("cannot parse observation count from {v:?}")))?,
        None => default_n,
    };
    let (mut rdr, headers) = csv_reader(path)?;
    let (io, ix, iy) = (
        column(path, &headers, "obs_id")?,
        column(path, &headers, "x")?,
        column(path, &headers, "y")?,
    );
    let mut obs = vec![Observation::default(); n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: usize = field(path, &rec, io, "obs_id")?;
        let x: f64 = field(path, &rec, ix, "x")?;
        let y: f64 = field(path, &rec, iy, "y")?;
        if id >= n {
            return Err(parse_err(path, line, format!("obs_id {id} is not below the observation count {n}")));
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(parse_err(path, line, "non-finite coordinate"));
        }
        if obs[id].features.contains(&[x, y]) {
            return Err(parse_err(path, line, format!("observation {id} lists ({x}, {y}) twice")));
        }
        obs[id].features.push([x, y]);
    }
    Ok(obs)
}

fn load_sample(cfg: &RunConfig, path: &Path) -> Result<FeatureSample> {
    let sample = summarize(&read_observations(path, cfg.run.n)?);
    let region = cfg.region()?;
    if let Some(f) = sample.features().iter().find(|f| !region.contains(f.location)) {
        return Err(Error::DegenerateData(format!(
            "{}: feature at ({}, {}) lies outside the configured region",
            path.display(),
            f.location[0],
            f.location[1]
        )));
    }
    Ok(sample)
}

fn fit_for(cfg: &RunConfig, sample: &FeatureSample) -> Result<FitResult> {
    let region = cfg.region()?;
    let guess = DppParams::initial_guess(sample, &region)?;
    let f = &cfg.fit;
    let init = DppParams {
        a: f.init_a.unwrap_or(guess.a),
        b: f.init_b.unwrap_or(guess.b),
        rho: f.init_rho.unwrap_or(guess.rho),
        alpha: f.init_alpha.unwrap_or(guess.alpha),
    };
    if !(init.a > 0.0 && init.b > 0.0 && init.alpha > 0.0 && init.rho > 0.0 && init.repulsion() < 1.0) {
        return Err(Error::Config(format!("invalid fit starting point {init:?}")));
    }
    let opts = FitOptions {
        budget: f.budget,
        tol: f.tol,
        ..FitOptions::default()
    };
    fit_empirical_bayes(sample, &region, cfg.run.ngrid, init, &opts)
}

/// Model for posterior commands: configured hyperparameters, or fitted ones
/// when `[fit] enabled = true`.
fn posterior_model(cfg: &RunConfig, sample: &FeatureSample) -> Result<(DppModel, Option<FitResult>)> {
    if cfg.run.family != Family::Dpp {
        return Err(Error::Config(format!("this command needs family = \"dpp\", got {:?}", cfg.run.family)));
    }
    if cfg.fit.enabled {
        let fit = fit_for(cfg, sample)?;
        Ok((fit.params.model(cfg.region()?, cfg.run.ngrid)?, Some(fit)))
    } else {
        Ok((cfg.dpp_model()?, None))
    }
}

fn fit_comment(fit: &Option<FitResult>) -> Option<String> {
    fit.as_ref().map(|f| {
        format!(
            "fitted a={} b={} rho={} alpha={} log_marginal={}",
            f.params.a, f.params.b, f.params.rho, f.params.alpha, f.log_marginal
        )
    })
}

/// Empirical-Bayes fit; writes `fit_report.txt` and `fit.toml`.
pub fn cmd_fit(cfg: &RunConfig, observations: &Path) -> Result<Vec<PathBuf>> {
    if cfg.run.family != Family::Dpp {
        return Err(Error::Config("fit needs family = \"dpp\"".into()));
    }
    let sample = load_sample(cfg, observations)?;
    if sample.k() == 0 {
        return Err(Error::DegenerateData(format!(
            "{}: no features observed, hyperparameters are not identifiable",
            observations.display()
        )));
    }
    let fit = fit_for(cfg, &sample)?;
    let header = cfg.provenance();
    let p = fit.params;
    let kv = format!(
        "a = {}\nb = {}\nrho = {}\nalpha = {}\nlog_marginal = {}\ninitial_log_marginal = {}\nconverged = {}\niterations = {}\nevaluations = {}\nn = {}\nk = {}\nngrid = {}\nseed = {}\nconfig = \"{}\"\n",
        p.a,
        p.b,
        p.rho,
        p.alpha,
        fit.log_marginal,
        fit.initial_log_marginal,
        fit.converged,
        fit.iterations,
        fit.evaluations,
        sample.n(),
        sample.k(),
        cfg.run.ngrid,
        cfg.run.seed,
        cfg.hash()
    );
    let kv_path = cfg.run.out.join("fit.toml");
    write_file(&kv_path, |w| write!(w, "# {header}\n{kv}"))?;
    let report_path = cfg.run.out.join("fit_report.txt");
    let echoed = toml::to_string(cfg).expect("configuration serializes");
    write_file(&report_path, |w| {
        writeln!(w, "# {header}")?;
        writeln!(w, "Empirical Bayes fit of the DPP model")?;
        writeln!(w, "observations: {} (n = {}, k = {})", observations.display(), sample.n(), sample.k())?;
        writeln!(w, "a = {:.6}  b = {:.6}  rho = {:.6}  alpha = {:.6}", p.a, p.b, p.rho, p.alpha)?;
        writeln!(w, "rho*pi*alpha^2 = {:.6}", p.repulsion())?;
        writeln!(w, "log marginal = {:.6} (start {:.6})", fit.log_marginal, fit.initial_log_marginal)?;
        writeln!(
            w,
            "converged = {}  iterations = {}  evaluations = {}",
            fit.converged, fit.iterations, fit.evaluations
        )?;
        writeln!(w, "seed = {}", cfg.run.seed)?;
        writeln!(w, "\n[configuration]\n{echoed}")
    })?;
    Ok(vec![report_path, kv_path])
}

/// `count_posterior.csv` with `count,probability`, or `count,exact,lecam`
/// when `compare_modes` is set.
pub fn cmd_count_posterior(cfg: &RunConfig, observations: &Path) -> Result<Vec<PathBuf>> {
    let sample = load_sample(cfg, observations)?;
    let header = cfg.provenance();
    let path = cfg.run.out.join("count_posterior.csv");
    if cfg.run.family == Family::MixedBinomial {
        let pmf = mb_posterior_count(&cfg.count_law()?, &cfg.mark()?, sample.n(), sample.k())?.shifted(sample.k());
        write_pmf(&path, &[&header, "family=mixed_binomial"], &[("probability", &pmf)])?;
        return Ok(vec![path]);
    }
    let (model, fit) = posterior_model(cfg, &sample)?;
    let mode = cfg.run.mode.unwrap_or(Mode::Exact);
    let mut comments = vec![header];
    comments.extend(fit_comment(&fit));
    if cfg.run.compare_modes {
        let exact = dpp_count_posterior(&model, &sample, Mode::Exact)?;
        let lecam = dpp_count_posterior(&model, &sample, Mode::Lecam)?;
        comments.push(format!(
            "mean_exact={} mean_lecam={} le_cam_bound={}",
            exact.pmf.mean(),
            lecam.pmf.mean(),
            exact.le_cam_bound.unwrap_or(f64::NAN)
        ));
        let refs: Vec<&str> = comments.iter().map(String::as_str).collect();
        write_pmf(&path, &refs, &[("exact", &exact.pmf), ("lecam", &lecam.pmf)])?;
    } else {
        let post = dpp_count_posterior(&model, &sample, mode)?;
        comments.push(format!("mode={mode} mean={} k={}", post.pmf.mean(), post.k));
        let refs: Vec<&str> = comments.iter().map(String::as_str).collect();
        write_pmf(&path, &refs, &[("probability", &post.pmf)])?;
    }
    Ok(vec![path])
}

fn write_pmf(path: &Path, comments: &[&str], columns: &[(&str, &Pmf)]) -> Result<()> {
    let lo = columns.iter().map(|(_, p)| p.offset()).min().unwrap_or(0);
    let hi = columns.iter().map(|(_, p)| p.max_count()).max().unwrap_or(0);
    write_file(path, |w| {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
        writeln!(w, "count,{}", names.join(","))?;
        for m in lo..=hi {
            let vals: Vec<String> = columns.iter().map(|(_, p)| p.prob(m).to_string()).collect();
            writeln!(w, "{m},{}", vals.join(","))?;
        }
        Ok(())
    })
}

/// `intensity_map.csv`, `intensity_map.pgm`, its scale sidecar and
/// `anchors.csv`. Defaults to Le Cam mode.
pub fn cmd_intensity_map(cfg: &RunConfig, observations: &Path) -> Result<Vec<PathBuf>> {
    let sample = load_sample(cfg, observations)?;
    let (model, fit) = posterior_model(cfg, &sample)?;
    let mode = cfg.run.mode.unwrap_or(Mode::Lecam);
    let mut map = unseen_intensity_map(&model, &sample, mode)?;
    if cfg.run.normalized_map {
        map = map.normalized();
    }
    let mut comment = cfg.provenance();
    if let Some(f) = fit_comment(&fit) {
        comment = format!("{comment} {f}");
    }
    let out = &cfg.run.out;
    let csv_path = out.join("intensity_map.csv");
    write_file(&csv_path, |w| map.write_csv(w, Some(&comment)))?;
    let pgm_path = out.join("intensity_map.pgm");
    write_file(&pgm_path, |w| map.write_pgm(w, Some(&comment)))?;
    let scale_path = out.join("intensity_map_scale.txt");
    write_file(&scale_path, |w| {
        write!(
            w,
            "# {comment}\n{}normalized={}\nintegral={}\n",
            map.pgm_scale_note(),
            cfg.run.normalized_map,
            map.integral()
        )
    })?;
    let anchors_path = out.join("anchors.csv");
    write_file(&anchors_path, |w| {
        writeln!(w, "# {comment}")?;
        writeln!(w, "x,y")?;
        for a in map.anchors() {
            writeln!(w, "{},{}", a[0], a[1])?;
        }
        Ok(())
    })?;
    Ok(vec![csv_path, pgm_path, scale_path, anchors_path])
}

/// `predict_new.csv`: law of the number of new features displayed by
/// observation `n + 1`, with a `depends_on` comment.
pub fn cmd_predict_new(cfg: &RunConfig, observations: &Path) -> Result<Vec<PathBuf>> {
    let sample = load_sample(cfg, observations)?;
    let (n, k) = (sample.n(), sample.k());
    let mut outputs = Vec::new();
    let mut extra = Vec::new();
    let law = match cfg.run.family {
        Family::Poisson => crm_predictive_new(&cfg.levy()?, n)?,
        Family::MixedPoisson => mp_predictive_new(&cfg.mixing()?, &cfg.levy()?, n, k)?,
        Family::MixedBinomial => mb_predictive_new(&cfg.count_law()?, &cfg.mark()?, n, k)?,
        Family::RandomAlpha => {
            let levy = cfg.levy()?;
            let s = cfg.random_alpha.ok_or_else(|| missing("random_alpha"))?;
            let mut rng = rng_for(cfg);
            let chain = alpha_metropolis(
                &sample,
                levy.gamma(),
                levy.beta(),
                &cfg.alpha_prior()?,
                s.n_iter,
                s.step,
                &mut rng,
            )?;
            extra.push(format!(
                "alpha_mean={} acceptance_rate={}",
                chain.mean(),
                chain.acceptance_rate
            ));
            let chain_path = cfg.run.out.join("alpha_chain.csv");
            let header = cfg.provenance();
            write_file(&chain_path, |w| {
                writeln!(w, "# {header}")?;
                writeln!(w, "iteration,alpha")?;
                for (i, a) in chain.draws.iter().enumerate() {
                    writeln!(w, "{i},{a}")?;
                }
                Ok(())
            })?;
            outputs.push(chain_path);
            random_alpha_predictive(&chain, &levy, n)?
        }
        Family::Dpp => {
            // unseen features are displayed independently with probability
            // a / (a + b + n) given the posterior
            let (model, fit) = posterior_model(cfg, &sample)?;
            extra.extend(fit_comment(&fit));
            let mode = cfg.run.mode.unwrap_or(Mode::Exact);
            let post = dpp_count_posterior(&model, &sample, mode)?;
            let unseen = Pmf::new(post.pmf.probs().to_vec(), 0)?;
            NewFeatureLaw {
                count: binomial_thin(&unseen, model.mark().c_p(n))?,
                depends_on: Dependence::Labels,
            }
        }
    };
    let path = cfg.run.out.join("predict_new.csv");
    let mut comments = vec![
        cfg.provenance(),
        format!("depends_on: {}", law.depends_on),
        format!("n={n} k={k} mean={}", law.count.mean()),
    ];
    comments.extend(extra);
    let refs: Vec<&str> = comments.iter().map(String::as_str).collect();
    write_pmf(&path, &refs, &[("probability", &law.count)])?;
    outputs.insert(0, path);
    Ok(outputs)
}
