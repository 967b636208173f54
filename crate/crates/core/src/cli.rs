//! Command-line front end. Every run resolves its full configuration first,
//! writes its outputs into the output directory and records the resolved
//! configuration in `<command>.manifest.json`, from which the run can be
//! repeated with `--from-manifest`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analytic::{critical_energies, integrate_trajectory, peak_scattering_ratio, rates, recoil_rate, cooling_time};
use crate::bloch::{ensemble_fluorescence, EnsembleOptions, HeatingModel, InitialSampler};
use crate::constants::BOLTZMANN;
use crate::error::{invalid, Error, Result};
use crate::estimation::{
    fit_mean_energy, heating_rate_from_fits, measurement_time_auto, simulate_trace, FitOptions, FitOutcome,
    SimulationOptions,
};
use crate::io::{self, Manifest};
use crate::multimode::{effective_profile, find_stable_points, micromotion_profile, mode_rates, Axis, ModeSet, Rate3dOptions};
use crate::scaling::{
    energy_to_kelvin, kelvin_to_energy, parse_key_values, scale_parameters_scaled_only, PhysicalParams, ScaledParams,
    CONFIG_KEYS,
};
use crate::thermal::{build_cache, default_dtau, EnergyDistribution, ShiftWeights};

/// Environment variable naming the default parameter file.
pub const CONFIG_ENV: &str = "RECOOL_CONFIG";
/// Prefix of per-key environment overrides, e.g. `RECOOL_SATURATION=0.5`.
pub const ENV_PREFIX: &str = "RECOOL_";

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_SIGNAL: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "recool", version, about = "Doppler re-cooling fluorescence models and energy estimation")]
pub struct Cli {
    /// Parameter file (key = value). Defaults to the 25Mg+ set.
    #[arg(long, env = CONFIG_ENV, global = true)]
    pub config: Option<PathBuf>,

    /// Override one parameter, e.g. `--set saturation=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    /// Directory for outputs and the run manifest.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Repeat the run recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Cooling and scattering rates of a single energy on a log grid.
    Rates(RatesArgs),
    /// Energy and scattering rate along one cooling trajectory.
    Trajectory(TrajectoryArgs),
    /// Thermally averaged fluorescence, optionally with a synthetic trace.
    Average(AverageArgs),
    /// Maximum-likelihood mean energy from a count trace.
    Fit(FitArgs),
    /// Relative measurement time over detuning and mean energy.
    Design(DesignArgs),
    /// 3-D mode rates with spectator modes and micromotion.
    Modes3d(Modes3dArgs),
    /// Monte Carlo optical Bloch ensemble fluorescence.
    Mc(McArgs),
    /// Tabulated effective or micromotion line profile.
    Spectrum(SpectrumArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rates(_) => "rates",
            Command::Trajectory(_) => "trajectory",
            Command::Average(_) => "average",
            Command::Fit(_) => "fit",
            Command::Design(_) => "design",
            Command::Modes3d(_) => "modes3d",
            Command::Mc(_) => "mc",
            Command::Spectrum(_) => "spectrum",
        }
    }
}

/// Detuning and recoil overrides; without them both come from the parameters.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ScaledOverride {
    /// Scaled detuning δ.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Recoil parameter r of the cooled mode.
    #[arg(long)]
    pub r: Option<f64>,
}

impl ScaledOverride {
    fn given(&self) -> bool {
        self.delta.is_some() || self.r.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct RatesArgs {
    #[command(flatten)]
    pub scaled: ScaledOverride,
    /// Smallest ε·r of the sweep.
    #[arg(long, default_value_t = 1e-4)]
    pub eps_min: f64,
    /// Largest ε·r; 0 gives the single steady-state row.
    #[arg(long, default_value_t = 100.0)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Add recoil heating to dε/dτ.
    #[arg(long)]
    pub recoil: bool,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub scaled: ScaledOverride,
    /// Initial energy: ε·r (`40`), multiples of ε_c (`2ec`) or kelvin (`3.9K`).
    #[arg(long)]
    pub eps0: String,
    /// Scaled end time; defaults to cooling down to ε_c/100.
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub points: usize,
    #[arg(long)]
    pub recoil: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    /// Maxwell-Boltzmann with the given mean.
    Thermal,
    /// Every atom at the given energy.
    Point,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AverageArgs {
    #[command(flatten)]
    pub scaled: ScaledOverride,
    /// Mean energy: ε·r (`5.1`), multiples of ε_c (`2ec`) or kelvin (`3.9K`).
    #[arg(long)]
    pub mean_eps: String,
    #[arg(long, value_enum, default_value_t = DistKind::Thermal)]
    pub dist: DistKind,
    /// Propagator bin width in scaled time.
    #[arg(long)]
    pub dtau: Option<f64>,
    /// Scaled end time of the output; defaults to cooling of the ensemble.
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Output bins.
    #[arg(long, default_value_t = 400)]
    pub bins: usize,
    #[arg(long)]
    pub recoil: bool,
    /// Reuse a cache written by `--save-cache`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Write the propagator cache to `cache.csv`.
    #[arg(long)]
    pub save_cache: bool,
    /// Also write a synthetic count trace with this many bins.
    #[arg(long)]
    pub trace_bins: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub bin_width_s: f64,
    #[arg(long, default_value_t = 1000)]
    pub cycles: u64,
    /// Detected counts per scattered photon.
    #[arg(long, default_value_t = 1e-3)]
    pub efficiency: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dark_rate_hz: f64,
    /// Poisson seed; without it the trace holds rounded expectations.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Heating period stored in the trace metadata.
    #[arg(long)]
    pub heat_duration_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Trace CSV with columns bin_start_s, bin_width_s, counts.
    pub trace: PathBuf,
    /// Metadata JSON; defaults to the sidecar next to the trace.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Largest mean energy searched, in ε·r.
    #[arg(long, default_value_t = 50.0)]
    pub mean_max_r: f64,
    /// Propagator bin width in scaled time; defaults to a tenth of the
    /// narrowest trace bin.
    #[arg(long)]
    pub dtau: Option<f64>,
    /// Reuse a saved cache; it must cover the search range.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    #[arg(long, default_value_t = -1.732_050_807_568_877_2, allow_negative_numbers = true)]
    pub delta_min: f64,
    #[arg(long, default_value_t = -0.2, allow_negative_numbers = true)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 8)]
    pub delta_points: usize,
    /// Smallest mean ε̄·r.
    #[arg(long, default_value_t = 0.1)]
    pub mean_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub mean_max: f64,
    #[arg(long, default_value_t = 9)]
    pub mean_points: usize,
    /// Saturation; defaults to the parameter set.
    #[arg(long)]
    pub saturation: Option<f64>,
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    match s.to_ascii_lowercase().as_str() {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        _ => Err(format!("unknown axis {s:?}, expected x, y or z")),
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct Modes3dArgs {
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub delta: f64,
    /// Scaled RF frequency; 0 disables micromotion.
    #[arg(long, default_value_t = 0.0)]
    pub omega_tilde: f64,
    /// Mode whose energy is swept.
    #[arg(long, value_parser = parse_axis, default_value = "x")]
    pub target: Axis,
    /// Fixed ε·r of the x, y and z modes (the target entry is swept).
    #[arg(long, num_args = 3, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    pub eps_r: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub sweep_min: f64,
    #[arg(long, default_value_t = 100.0)]
    pub sweep_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Constant modulation index from a stray field.
    #[arg(long, default_value_t = 0.0)]
    pub beta0: f64,
    #[arg(long, default_value_t = 128)]
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct McArgs {
    /// Axial mean energy: ε·r, multiples of ε_c or kelvin.
    #[arg(long)]
    pub mean_eps: String,
    #[arg(long, value_enum, default_value_t = DistKind::Thermal)]
    pub dist: DistKind,
    /// Transverse heating: `axial` or `power:<n>` for means ∝ ω^-n.
    #[arg(long, default_value = "axial")]
    pub heating: String,
    #[arg(long, default_value_t = 200)]
    pub n_traj: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Simulated time; defaults to the 1-D cooling time of three times the mean.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long)]
    pub dt_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SpectrumArgs {
    /// Maximal scaled Doppler shifts of the two spectator modes.
    #[arg(long, default_value_t = 0.0)]
    pub dmax_x: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dmax_y: f64,
    /// Modulation index; selects the micromotion sideband profile.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub omega_tilde: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
}

/// Fully resolved run, stored verbatim in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, f64>,
    pub scaled: ScaledParams,
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: PathBuf,
    pub exit_code: i32,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_)
        | Error::ZeroSaturation
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_USAGE,
        Error::CacheTooShort { .. } | Error::Calibration(_) | Error::Numerical(_) | Error::Positivity { .. } => {
            EXIT_NUMERICAL
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Parameters from defaults, the config file, `RECOOL_<KEY>` variables and
/// `--set` flags, in increasing priority.
pub fn resolve_params(
    config: Option<&Path>,
    env: &BTreeMap<String, String>,
    set: &[String],
) -> Result<PhysicalParams> {
    let mut map = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
            let m = parse_key_values(&text)?;
            PhysicalParams::from_key_values(&m)?;
            m
        }
        None => PhysicalParams::mg25().to_key_values(),
    };
    for key in CONFIG_KEYS {
        let var = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
        if let Some(v) = env.get(&var) {
            let v = v.trim().parse().map_err(|_| Error::Parse(format!("{var}: bad number {v:?}")))?;
            map.insert(key.to_string(), v);
        }
    }
    for s in set {
        let line = parse_key_values(s)?;
        if line.is_empty() {
            return Err(Error::Parse(format!("--set expects KEY=VALUE, got {s:?}")));
        }
        map.extend(line);
    }
    PhysicalParams::from_key_values(&map)
}

/// Builds the run configuration from parsed arguments.
pub fn resolve(cli: &Cli, env: &BTreeMap<String, String>) -> Result<RunConfig> {
    if let Some(m) = &cli.from_manifest {
        if cli.command.is_some() || !cli.set.is_empty() {
            return Err(invalid("--from-manifest cannot be combined with a subcommand or --set"));
        }
        let manifest: Manifest = io::read_json(m)?;
        let mut cfg: RunConfig = serde_json::from_value(manifest.config)?;
        if let Some(d) = &cli.out_dir {
            cfg.out_dir = absolute(d);
        }
        return Ok(cfg);
    }
    let mut command = cli.command.clone().ok_or_else(|| invalid("no subcommand given"))?;
    match &mut command {
        Command::Fit(f) => {
            f.trace = absolute(&f.trace);
            f.meta = f.meta.as_deref().map(absolute);
            f.cache = f.cache.as_deref().map(absolute);
        }
        Command::Average(a) => a.cache = a.cache.as_deref().map(absolute),
        _ => {}
    }
    let p = resolve_params(cli.config.as_deref(), env, &cli.set)?;
    let scaled = scale_parameters_scaled_only(&p)?;
    Ok(RunConfig {
        command,
        params: p.to_key_values(),
        scaled,
        out_dir: absolute(cli.out_dir.as_deref().unwrap_or(Path::new("."))),
    })
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    let result = resolve(&cli, &env).and_then(|cfg| execute(&cfg));
    match result {
        Ok(out) => {
            eprintln!("wrote {}", out.manifest.display());
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn sidecar(&mut self, name: &str) {
        let side = io::sidecar_path(name);
        self.manifest.outputs.push(side.to_string_lossy().into_owned());
    }
}

/// Runs a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let p = PhysicalParams::from_key_values(&cfg.params)?;
    let mut out = Outputs { dir: &cfg.out_dir, manifest: Manifest::new(cfg.command.name(), cfg)? };
    let code = match &cfg.command {
        Command::Rates(a) => cmd_rates(a, &cfg.scaled, &mut out)?,
        Command::Trajectory(a) => cmd_trajectory(a, &cfg.scaled, &mut out)?,
        Command::Average(a) => cmd_average(a, &cfg.scaled, &mut out)?,
        Command::Fit(a) => cmd_fit(a, &cfg.scaled, &mut out)?,
        Command::Design(a) => cmd_design(a, &cfg.scaled, &mut out)?,
        Command::Modes3d(a) => cmd_modes3d(a, &mut out)?,
        Command::Mc(a) => cmd_mc(a, &p, &cfg.scaled, &mut out)?,
        Command::Spectrum(a) => cmd_spectrum(a, &mut out)?,
    };
    let manifest = out.manifest.write(&cfg.out_dir)?;
    Ok(RunOutcome { manifest, exit_code: code })
}

fn scaled_pair(o: &ScaledOverride, sp: &ScaledParams) -> Result<(f64, f64)> {
    let delta = o.delta.unwrap_or(sp.delta);
    let r = o.r.unwrap_or(sp.r());
    if !(delta < 0.0) || !(r > 0.0) {
        return Err(invalid("cooling needs delta < 0 and r > 0"));
    }
    Ok((delta, r))
}

/// Parses an energy given as ε·r (`5.1`), multiples of ε_c (`2ec`) or kelvin
/// (`3.9K`); returns scaled ε.
pub fn parse_energy(text: &str, delta: f64, r: f64, sp: Option<&ScaledParams>) -> Result<f64> {
    let s = text.trim();
    let num = |t: &str| -> Result<f64> {
        t.trim().parse::<f64>().map_err(|_| invalid(format!("cannot read energy {text:?}")))
    };
    let eps = if let Some(t) = s.strip_suffix("ec") {
        num(t)? * critical_energies(delta, r)?.eps_c
    } else if let Some(t) = s.strip_suffix('K') {
        let sp = sp.ok_or_else(|| invalid("kelvin energies need laboratory parameters, not --delta/--r"))?;
        kelvin_to_energy(num(t)?, sp)
    } else {
        num(s)? / r
    };
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(invalid(format!("energy {text:?} must be finite and >= 0")));
    }
    Ok(eps)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Serialize)]
struct RatesSummary {
    delta: f64,
    r: f64,
    eps_c_r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_s_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    peak_scattering_ratio: Option<f64>,
}

fn cmd_rates(a: &RatesArgs, sp: &ScaledParams, out: &mut Outputs) -> Result<i32> {
    let (delta, r) = scaled_pair(&a.scaled, sp)?;
    let crit = critical_energies(delta, r)?;
    let rows: Vec<Vec<f64>> = if a.eps_max == 0.0 {
        let dn = 1.0 / (1.0 + delta * delta);
        let de = if a.recoil { recoil_rate(dn, r) } else { 0.0 };
        vec![vec![0.0, de, dn]]
    } else {
        if !(a.eps_min > 0.0 && a.eps_max > a.eps_min) || a.points < 2 {
            return Err(invalid("rates need 0 < eps-min < eps-max and at least 2 points"));
        }
        log_grid(a.eps_min, a.eps_max, a.points)
            .into_iter()
            .map(|x| {
                let rp = rates(x / r, delta, r);
                let de = rp.de_dtau + if a.recoil { recoil_rate(rp.dn_dtau, r) } else { 0.0 };
                vec![x, de, rp.dn_dtau]
            })
            .collect()
    };
    io::write_table(out.path("rates.csv"), &["eps_r", "de_dtau", "dn_dtau"], &rows)?;
    let summary = RatesSummary {
        delta,
        r,
        eps_c_r: crit.eps_c * r,
        eps_s_r: crit.eps_s.map(|e| e * r),
        peak_scattering_ratio: crit.eps_s.map(|_| peak_scattering_ratio(delta)).transpose()?,
    };
    io::write_json(out.path("rates.json"), &summary)?;
    Ok(0)
}

fn cmd_trajectory(a: &TrajectoryArgs, sp: &ScaledParams, out: &mut Outputs) -> Result<i32> {
    let (delta, r) = scaled_pair(&a.scaled, sp)?;
    let lab = (!a.scaled.given()).then_some(sp);
    let eps0 = parse_energy(&a.eps0, delta, r, lab)?;
    let ec = critical_energies(delta, r)?.eps_c;
    let tau_max = match a.tau_max {
        Some(t) => t,
        None => cooling_time(eps0.max(ec), 0.01 * ec, delta, r)?,
    };
    if !(tau_max > 0.0) || a.points < 2 {
        return Err(invalid("trajectory needs tau-max > 0 and at least 2 points"));
    }
    let grid = lin_grid(0.0, tau_max, a.points);
    let pts = integrate_trajectory(eps0, &grid, delta, r, a.recoil)?;
    let t0 = lab.map(|s| s.t0_s).filter(|t| t.is_finite());
    let mut header = vec!["tau", "eps_r", "dn_dtau"];
    if t0.is_some() {
        header.extend(["t_s", "energy_K"]);
    }
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let mut row = vec![p.tau, p.eps * r, p.dn_dtau];
            if let (Some(t0), Some(s)) = (t0, lab) {
                row.extend([p.tau * t0, energy_to_kelvin(p.eps, s)]);
            }
            row
        })
        .collect();
    io::write_table(out.path("trajectory.csv"), &header, &rows)?;
    Ok(0)
}

fn distribution(kind: DistKind, eps: f64) -> Result<EnergyDistribution> {
    match kind {
        DistKind::Thermal => EnergyDistribution::maxwell_boltzmann(eps),
        DistKind::Point => EnergyDistribution::point_mass(eps),
    }
}

/// Cache top that leaves less than 1e-7 of a thermal ensemble above it.
fn cache_top(kind: DistKind, eps: f64) -> f64 {
    match kind {
        DistKind::Thermal => 16.0 * eps,
        DistKind::Point => eps,
    }
}

#[derive(Serialize)]
struct AverageSummary {
    delta: f64,
    r: f64,
    mean_eps: f64,
    mean_eps_r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_energy_k: Option<f64>,
    dtau: f64,
    cache_bins: usize,
    steady_rate: f64,
    initial_rate: f64,
    warnings: Vec<String>,
}

fn cmd_average(a: &AverageArgs, sp: &ScaledParams, out: &mut Outputs) -> Result<i32> {
    let (delta, r) = scaled_pair(&a.scaled, sp)?;
    let lab = (!a.scaled.given()).then_some(sp);
    let mean = parse_energy(&a.mean_eps, delta, r, lab)?;
    let dist = distribution(a.dist, mean)?;
    let cache = match &a.cache {
        Some(path) => {
            let c = io::read_cache(path)?;
            if (c.delta - delta).abs() > 1e-12 * delta.abs() || (c.r - r).abs() > 1e-12 * r {
                return Err(invalid("saved cache was built for a different delta or r"));
            }
            c
        }
        None => {
            let top = cache_top(a.dist, mean);
            let dtau = match a.dtau {
                Some(d) => d,
                None => default_dtau(delta, r, top.max(1.0 / r))?,
            };
            build_cache(delta, r, dtau, top, a.recoil)?
        }
    };
    if a.save_cache {
        io::write_cache(out.path("cache.csv"), &cache)?;
        out.sidecar("cache.csv");
    }
    let ec = critical_energies(delta, r)?.eps_c;
    let tau_max = match a.tau_max {
        Some(t) => t,
        None => cache.time_to_reach(0.01 * ec.min(mean.max(f64::MIN_POSITIVE))).max(cache.dtau),
    };
    if !(tau_max > 0.0) || a.bins == 0 {
        return Err(invalid("average needs tau-max > 0 and at least one bin"));
    }
    let weights = ShiftWeights::new(&dist, &cache)?;
    let edges = lin_grid(0.0, tau_max, a.bins + 1);
    let width = tau_max / a.bins as f64;
    let photons = weights.photons_in_bins(&cache, &edges);
    let t0 = lab.map(|s| s.t0_s).filter(|t| t.is_finite());
    let mut header = vec!["tau", "rate"];
    if t0.is_some() {
        header.extend(["t_s", "rate_hz"]);
    }
    let rows: Vec<Vec<f64>> = photons
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let tau = (i as f64 + 0.5) * width;
            let rate = n / width;
            let mut row = vec![tau, rate];
            if let Some(t0) = t0 {
                row.extend([tau * t0, rate / t0]);
            }
            row
        })
        .collect();
    io::write_table(out.path("average.csv"), &header, &rows)?;
    let summary = AverageSummary {
        delta,
        r,
        mean_eps: mean,
        mean_eps_r: mean * r,
        mean_energy_k: lab.map(|s| energy_to_kelvin(mean, s)),
        dtau: cache.dtau,
        cache_bins: cache.len_bins(),
        steady_rate: cache.steady_rate(),
        initial_rate: rows.first().map(|r| r[1]).unwrap_or(f64::NAN),
        warnings: cache.warnings.clone(),
    };
    io::write_json(out.path("average.json"), &summary)?;
    out.manifest.warnings.extend(cache.warnings.iter().cloned());

    if let Some(n_bins) = a.trace_bins {
        let sp = lab.ok_or_else(|| invalid("synthetic traces need laboratory parameters, not --delta/--r"))?;
        let opts = SimulationOptions {
            n_bins,
            bin_width_s: a.bin_width_s,
            n_cycles: a.cycles,
            detection_efficiency: a.efficiency,
            dark_rate_hz: a.dark_rate_hz,
            seed: a.seed,
        };
        let mut trace = simulate_trace(&dist, &cache, sp, &opts)?;
        trace.heat_duration_s = a.heat_duration_s;
        io::write_trace(out.path("trace.csv"), &trace)?;
        out.sidecar("trace.csv");
    }
    Ok(0)
}

fn cmd_fit(a: &FitArgs, sp: &ScaledParams, out: &mut Outputs) -> Result<i32> {
    let trace = io::read_trace(&a.trace, a.meta.as_deref())?;
    let t0 = sp.time_scale()?;
    let (delta, r) = (sp.delta, sp.r());
    if !(a.mean_max_r > 0.0) {
        return Err(invalid("mean-max-r must be positive"));
    }
    let top = 14.0 * a.mean_max_r / r;
    let cache = match &a.cache {
        Some(path) => io::read_cache(path)?,
        None => {
            let min_bin = trace.bin_width_s.iter().copied().fold(f64::INFINITY, f64::min) / t0;
            let dtau = match a.dtau {
                Some(d) => d,
                None => default_dtau(delta, r, top)?.max(min_bin / 10.0),
            };
            build_cache(delta, r, dtau, top, false)?
        }
    };
    let outcome = fit_mean_energy(&trace, sp, &cache, &FitOptions::default())?;
    io::write_json(out.path("fit.json"), &outcome)?;
    match &outcome {
        FitOutcome::Estimate(fit) => {
            out.manifest.warnings.extend(fit.warnings.iter().cloned());
            if let Some(d) = trace.heat_duration_s {
                let h = heating_rate_from_fits(&[(d, fit.clone())], Some(0.0))?;
                io::write_json(out.path("heating.json"), &h)?;
            }
            Ok(0)
        }
        FitOutcome::BelowSensitivity(lim) => {
            eprintln!(
                "no signal above background: mean energy below {:.4e} (ε·r = {:.4}, {:.4} K)",
                lim.upper_bound, lim.upper_bound_r_units, lim.upper_bound_k
            );
            Ok(EXIT_NO_SIGNAL)
        }
    }
}

fn cmd_design(a: &DesignArgs, sp: &ScaledParams, out: &mut Outputs) -> Result<i32> {
    let s = a.saturation.unwrap_or(sp.saturation);
    if !(a.delta_min < a.delta_max && a.delta_max < 0.0) || !(a.mean_min > 0.0 && a.mean_max >= a.mean_min) {
        return Err(invalid("design needs delta-min < delta-max < 0 and 0 < mean-min <= mean-max"));
    }
    let mut rows = Vec::new();
    for &delta in &lin_grid(a.delta_min, a.delta_max, a.delta_points) {
        for &m in &log_grid(a.mean_min, a.mean_max, a.mean_points) {
            rows.push(vec![delta, m, measurement_time_auto(delta, m, s)?]);
        }
    }
    io::write_table(out.path("design.csv"), &["delta", "mean_eps_r", "relative_measurement_time"], &rows)?;
    Ok(0)
}

fn cmd_modes3d(a: &Modes3dArgs, out: &mut Outputs) -> Result<i32> {
    if a.eps_r.len() != 3 {
        return Err(invalid("--eps-r takes three values"));
    }
    let base = ModeSet { eps: [a.eps_r[0], a.eps_r[1], a.eps_r[2]], r: [1.0; 3], omega_tilde: a.omega_tilde, beta0: a.beta0 };
    base.validate()?;
    let opts = Rate3dOptions { nodes: a.nodes };
    let t = a.target.index();
    let mut rows = Vec::with_capacity(a.points);
    for e in log_grid(a.sweep_min, a.sweep_max, a.points) {
        let mut m = base;
        m.eps[t] = e;
        let de = mode_rates(&m, a.delta, &opts)?;
        let dn = crate::multimode::scattering_rate_3d(&m, a.delta, &opts)?;
        rows.push(vec![e, de[0], de[1], de[2], dn]);
    }
    io::write_table(out.path("modes3d.csv"), &["target_eps_r", "de_r_dtau_x", "de_r_dtau_y", "de_r_dtau_z", "dn_dtau"], &rows)?;
    let stable = find_stable_points(&base, a.target, a.delta, a.sweep_min, a.sweep_max, a.points, &opts)?;
    io::write_json(out.path("modes3d.json"), &serde_json::json!({ "target": a.target, "stable_points_r": stable }))?;
    Ok(0)
}

fn parse_heating(s: &str) -> Result<HeatingModel> {
    let s = s.trim();
    if s == "axial" {
        return Ok(HeatingModel::AxialOnly);
    }
    match s.strip_prefix("power:").map(|n| n.trim().parse::<f64>()) {
        Some(Ok(exponent)) if exponent.is_finite() => Ok(HeatingModel::PowerLaw { exponent }),
        _ => Err(invalid(format!("unknown heating model {s:?}; use axial or power:<n>"))),
    }
}

fn cmd_mc(a: &McArgs, p: &PhysicalParams, sp: &ScaledParams, out: &mut Outputs) -> Result<i32> {
    let (delta, r) = (sp.delta, sp.r());
    let mean = parse_energy(&a.mean_eps, delta, r, Some(sp))?;
    let model = parse_heating(&a.heating)?;
    let sampler = InitialSampler::thermal(distribution(a.dist, mean)?, model, p)?;
    let duration = match a.duration_s {
        Some(d) => d,
        None => {
            let ec = critical_energies(delta, r)?.eps_c;
            cooling_time((3.0 * mean).max(ec), 0.1 * ec, delta, r)? * sp.time_scale()?
        }
    };
    let opts = EnsembleOptions { n_traj: a.n_traj, seed: a.seed, duration_s: duration, n_bins: a.bins, dt_s: a.dt_s };
    let trace = ensemble_fluorescence(&sampler, p, &opts)?;
    io::write_ensemble(out.path("mc.csv"), &trace)?;
    let rows: Vec<Vec<f64>> = (0..trace.t_s.len())
        .map(|i| {
            let e = trace.mean_energy_j[i];
            vec![trace.t_s[i] + trace.bin_width_s, e[0] / BOLTZMANN, e[1] / BOLTZMANN, e[2] / BOLTZMANN]
        })
        .collect();
    io::write_table(out.path("mc_energy.csv"), &["t_s", "energy_x_K", "energy_y_K", "energy_z_K"], &rows)?;
    io::write_json(
        out.path("mc.json"),
        &serde_json::json!({ "dt_s": trace.dt_s, "duration_s": duration, "n_traj": trace.n_traj, "seed": trace.seed }),
    )?;
    Ok(0)
}

fn cmd_spectrum(a: &SpectrumArgs, out: &mut Outputs) -> Result<i32> {
    if !(a.half_width > 0.0) || a.points < 2 {
        return Err(invalid("spectrum needs half-width > 0 and at least 2 points"));
    }
    let grid = lin_grid(-a.half_width, a.half_width, a.points);
    let rows: Vec<Vec<f64>> = match a.beta {
        Some(beta) => {
            let om = a.omega_tilde.ok_or_else(|| invalid("--beta needs --omega-tilde"))?;
            grid.iter().map(|&d| Ok(vec![d, micromotion_profile(d, beta, om)?])).collect::<Result<_>>()?
        }
        None => {
            let prof = effective_profile(a.dmax_x, a.dmax_y)?;
            grid.iter().map(|&d| vec![d, prof.value(d)]).collect()
        }
    };
    io::write_table(out.path("spectrum.csv"), &["delta_eff", "response"], &rows)?;
    Ok(0)
}
