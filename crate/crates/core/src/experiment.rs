//! Experiment orchestration: designs, beampattern and illumination tables,
//! SEP sweeps and the oracle suite, each written into a fresh run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::comm::{simulate_sep, SepEstimate, SepPoint};
use crate::config::{ExperimentConfig, Scheme};
use crate::error::{Error, Result};
use crate::metrics::{worst_case_illumination, write_illumination_csv, CovarianceReference, IlluminationRow};
use crate::oracles::{run_oracles as run_oracle_suite, OracleReport, OracleScale};
use crate::precoder::{beampattern, design, finish_design, DesignSpec, PrecoderDesign};
use crate::scene::{db_to_linear, gen_target_channel_with};

/// Files written by a runner and any results that are only partial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArtifacts {
    pub outputs: Vec<PathBuf>,
    /// Human-readable reasons for partial results (e.g. solver stopped at
    /// the iteration cap). Empty on a clean run.
    pub incomplete: Vec<String>,
}

impl RunArtifacts {
    fn extend(&mut self, other: RunArtifacts) {
        self.outputs.extend(other.outputs);
        self.incomplete.extend(other.incomplete);
    }
}

/// Final one-line summary printed by the command-line runner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_digest: String,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub oracle_status: Option<String>,
    pub incomplete: Vec<String>,
}

impl RunSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Creates `base/<command>-<unix seconds>-<nanoseconds>` plus a numeric
/// suffix if that name already exists.
pub fn create_run_dir(base: &Path, command: &str) -> Result<PathBuf> {
    fs::create_dir_all(base)?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let stem = format!("{command}-{}-{:09}", now.as_secs(), now.subsec_nanos());
    for k in 0u32.. {
        let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("exhausted run directory suffixes")
}

/// Writes the resolved configuration as `config.txt`.
pub fn write_config_snapshot(config: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("config.txt");
    fs::write(&path, config.to_text())?;
    Ok(path)
}

/// Runs the design pipeline; at the iteration cap the last iterate is
/// finished into a design and the second value is `false`.
pub fn design_or_partial(spec: &DesignSpec) -> Result<(PrecoderDesign, bool)> {
    match design(spec) {
        Ok(d) => Ok((d, true)),
        Err(Error::Convergence {
            iterations,
            objective,
            last,
        }) => {
            warn!("relaxed solver stopped after {iterations} iterations at objective {objective:.6e}");
            Ok((finish_design(spec, *last)?, false))
        }
        Err(e) => Err(e),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub const BEAMPATTERN_HEADER: &str = "angle_deg,J_quantized,J_unquantized,d_scaled";

/// Beampattern table of one design: the 1-bit output pattern, the relaxed
/// pattern and the scaled desired pattern `τ d`.
pub fn write_beampattern_csv(mut w: impl Write, d: &PrecoderDesign) -> Result<()> {
    let grid = &d.desired.grid;
    let jq = beampattern(&d.r_z_quantized, grid);
    let ju = beampattern(&d.r_z_star, grid);
    writeln!(w, "{BEAMPATTERN_HEADER}")?;
    for (k, &theta) in grid.angles().iter().enumerate() {
        writeln!(
            w,
            "{:.6},{:.9e},{:.9e},{:.9e}",
            theta.to_degrees(),
            jq[k],
            ju[k],
            d.tau * d.desired.values[k]
        )?;
    }
    Ok(())
}

fn note_partial(art: &mut RunArtifacts, what: String, converged: bool) {
    if !converged {
        art.incomplete
            .push(format!("{what}: relaxed solver hit the iteration cap"));
    }
}

/// Designs at `cfg.beta` and over the β sweep, plus the radar-only design.
/// Writes `beampattern_isac.csv`, `beampattern_radar.csv`,
/// `illumination.csv` and the two design JSON files.
pub fn run_beampattern(cfg: &ExperimentConfig, dir: &Path, pool: &rayon::ThreadPool) -> Result<RunArtifacts> {
    let mut art = RunArtifacts::default();
    let mut betas = vec![cfg.beta];
    betas.extend(cfg.beta_sweep.iter().copied().filter(|&b| b != cfg.beta));

    let radar_spec = DesignSpec::radar_only(cfg)?;
    let specs = betas
        .iter()
        .map(|&b| DesignSpec::isac(cfg, b))
        .collect::<Result<Vec<_>>>()?;
    let (isac, radar) = pool.install(|| {
        rayon::join(
            || specs.par_iter().map(design_or_partial).collect::<Result<Vec<_>>>(),
            || design_or_partial(&radar_spec),
        )
    });
    let isac = isac?;
    let (radar, radar_ok) = radar?;
    for (b, (_, ok)) in betas.iter().zip(&isac) {
        note_partial(&mut art, format!("ISAC design at beta = {b}"), *ok);
    }
    note_partial(&mut art, "radar-only design".into(), radar_ok);
    let main = &isac[0].0;

    let path = dir.join("beampattern_isac.csv");
    write_beampattern_csv(create(&path)?, main)?;
    art.outputs.push(path);
    let path = dir.join("beampattern_radar.csv");
    write_beampattern_csv(create(&path)?, &radar)?;
    art.outputs.push(path);
    for (name, d) in [("design_isac.json", main), ("design_radar.json", &radar)] {
        let path = dir.join(name);
        fs::write(&path, d.to_json()?)?;
        art.outputs.push(path);
    }

    let angles: Vec<f64> = cfg.target_angles_deg.iter().map(|a| a.to_radians()).collect();
    let channels = angles
        .iter()
        .map(|&t| gen_target_channel_with(&cfg.channel, t, cfg.target_distance_m, cfg.num_antennas))
        .collect::<Result<Vec<_>>>()?;
    let rho = db_to_linear(cfg.illumination_power_db);
    let mut rows = Vec::new();
    for &b in &cfg.beta_sweep {
        let idx = betas.iter().position(|&x| x == b).expect("beta in sweep");
        let d = &isac[idx].0;
        for reference in [CovarianceReference::Quantized, CovarianceReference::UnquantizedIsac] {
            let rep = worst_case_illumination(d, reference, &angles, &channels, rho)?;
            info!(
                "illumination beta = {b}, {reference}: worst case {:.3} dB",
                rep.worst_case_db()
            );
            rows.extend(IlluminationRow::from_report(Some(b), &rep));
        }
    }
    let rep = worst_case_illumination(&radar, CovarianceReference::RadarOnly, &angles, &channels, rho)?;
    rows.extend(IlluminationRow::from_report(None, &rep));
    let path = dir.join("illumination.csv");
    write_illumination_csv(create(&path)?, &rows)?;
    art.outputs.push(path);
    Ok(art)
}

pub const SEP_HEADER: &str = "scheme,M,N,K,psk_order,beta,bits,power_db,noise_var,trials,errors,sep,seed,wall_time_s";

/// One SEP CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SepRow {
    pub scheme: Scheme,
    pub beta: f64,
    pub power_db: f64,
    pub estimate: SepEstimate,
    pub wall_time_s: Option<f64>,
}

fn users_served(cfg: &ExperimentConfig, scheme: Scheme) -> usize {
    match scheme {
        Scheme::Zf(k) => k,
        _ => cfg.num_users,
    }
}

/// Writes the header and `rows`. The timing column is left empty unless
/// it was recorded, so untimed reruns are byte-identical.
pub fn write_sep_csv(mut w: impl Write, cfg: &ExperimentConfig, rows: &[SepRow]) -> Result<()> {
    writeln!(w, "{SEP_HEADER}")?;
    for r in rows {
        let t = r.wall_time_s.map(|t| format!("{t:.3}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{:.9e},{},{}",
            r.scheme,
            cfg.num_antennas,
            cfg.num_ris,
            users_served(cfg, r.scheme),
            cfg.psk_order,
            r.beta,
            r.scheme.resolution(),
            r.power_db,
            cfg.channel.noise_variance,
            r.estimate.trials,
            r.estimate.errors,
            r.estimate.sep,
            cfg.master_seed,
            t
        )?;
    }
    Ok(())
}

/// SEP of one scheme at one point, with progress logging.
pub fn sep_point(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    design: &PrecoderDesign,
    beta: f64,
    power_db: f64,
    pool: &rayon::ThreadPool,
) -> Result<SepRow> {
    let start = Instant::now();
    let point = SepPoint {
        config: cfg,
        scheme,
        precoder: &design.w_circ,
        power_db,
    };
    let estimate = simulate_sep(&point, pool)?;
    let elapsed = start.elapsed().as_secs_f64();
    info!(
        "{scheme} beta = {beta} at {power_db} dB: SEP {:.4e} ± {:.1e} ({} symbols, {elapsed:.1} s)",
        estimate.sep,
        estimate.standard_error(),
        estimate.trials
    );
    Ok(SepRow {
        scheme,
        beta,
        power_db,
        estimate,
        wall_time_s: cfg.record_timing.then_some(elapsed),
    })
}

/// SEP over the power sweep for every scheme (`sep_power.csv`) and over the
/// β sweep for the RIST schemes (`sep_beta.csv`).
pub fn run_sep(cfg: &ExperimentConfig, dir: &Path, pool: &rayon::ThreadPool) -> Result<RunArtifacts> {
    let mut art = RunArtifacts::default();
    let (main, ok) = design_or_partial(&DesignSpec::isac(cfg, cfg.beta)?)?;
    note_partial(&mut art, format!("ISAC design at beta = {}", cfg.beta), ok);

    let mut rows = Vec::new();
    for &scheme in &cfg.schemes {
        for &p in &cfg.power_db_sweep {
            rows.push(sep_point(cfg, scheme, &main, cfg.beta, p, pool)?);
        }
    }
    let path = dir.join("sep_power.csv");
    write_sep_csv(create(&path)?, cfg, &rows)?;
    art.outputs.push(path);

    let rist: Vec<Scheme> = cfg
        .schemes
        .iter()
        .copied()
        .filter(|s| matches!(s, Scheme::Rist(_)))
        .collect();
    let mut rows = Vec::new();
    if !rist.is_empty() {
        for &b in &cfg.beta_sweep {
            let (d, ok) = if b == cfg.beta {
                (main.clone(), true)
            } else {
                design_or_partial(&DesignSpec::isac(cfg, b)?)?
            };
            note_partial(&mut art, format!("ISAC design at beta = {b}"), ok);
            for &scheme in &rist {
                rows.push(sep_point(cfg, scheme, &d, b, cfg.beta_sweep_power_db, pool)?);
            }
        }
    }
    let path = dir.join("sep_beta.csv");
    write_sep_csv(create(&path)?, cfg, &rows)?;
    art.outputs.push(path);
    Ok(art)
}

/// Runs the oracle suite and writes `oracles.csv` and `oracles.json`.
pub fn run_oracles(
    scale: &OracleScale,
    seed: u64,
    dir: &Path,
    pool: &rayon::ThreadPool,
) -> Result<(RunArtifacts, OracleReport)> {
    let report = pool.install(|| run_oracle_suite(scale, seed))?;
    for o in &report.outcomes {
        let verdict = if o.passed { "pass" } else { "FAIL" };
        info!(
            "oracle {}: {verdict} (measured {:e}, threshold {:e})",
            o.name, o.measured, o.threshold
        );
    }
    let mut art = RunArtifacts::default();
    let path = dir.join("oracles.csv");
    report.write_csv(create(&path)?)?;
    art.outputs.push(path);
    let path = dir.join("oracles.json");
    fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    art.outputs.push(path);
    Ok((art, report))
}

/// Which experiments a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Beampattern,
    Sep,
    Oracles,
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Beampattern => "beampattern",
            Command::Sep => "sep",
            Command::Oracles => "oracles",
            Command::All => "all",
        }
    }
}

/// Settings of a run beyond the experiment configuration.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_base: PathBuf,
    pub workers: usize,
    pub oracle_scale: OracleScale,
}

/// Executes `command` in a fresh run directory and returns the summary.
/// The summary is also written as `summary.json`.
pub fn execute(command: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let dir = create_run_dir(&opts.out_base, command.name())?;
    info!("writing run outputs to {}", dir.display());
    let mut art = RunArtifacts {
        outputs: vec![write_config_snapshot(cfg, &dir)?],
        incomplete: Vec::new(),
    };
    let mut oracle_status = None;
    if matches!(command, Command::Beampattern | Command::All) {
        art.extend(run_beampattern(cfg, &dir, &pool)?);
    }
    if matches!(command, Command::Sep | Command::All) {
        art.extend(run_sep(cfg, &dir, &pool)?);
    }
    if matches!(command, Command::Oracles | Command::All) {
        let (a, report) = run_oracles(&opts.oracle_scale, cfg.master_seed, &dir, &pool)?;
        art.extend(a);
        oracle_status = Some(report.status().to_string());
    }
    let summary_path = dir.join("summary.json");
    art.outputs.push(summary_path.clone());
    let summary = RunSummary {
        command: command.name().to_string(),
        config_digest: cfg.digest(),
        outputs: art.outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
        oracle_status,
        incomplete: art.incomplete,
    };
    fs::write(&summary_path, summary.to_json()?)?;
    Ok(summary)
}

impl RunSummary {
    /// `true` when every requested experiment completed and every oracle
    /// passed.
    pub fn succeeded(&self) -> bool {
        self.incomplete.is_empty() && self.oracle_status.as_deref().is_none_or(|s| s == "pass")
    }
}
