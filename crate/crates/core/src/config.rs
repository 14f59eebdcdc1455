//! Experiment configuration.
//!
//! Files are flat `key = value` text, one entry per line, `#` starts a
//! comment and lists are comma separated. Every key is optional; missing keys
//! take the defaults below. Unknown keys are rejected, and every constraint
//! violation is reported in a single error.

use std::fmt::{self, Write as _};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::precoder::SolverOptions;
use crate::ris::PhaseResolution;
use crate::scene::{ChannelModelParams, Position};

/// Schemes evaluated by the SEP experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// RIS-modulated 1-bit ISAC transmission with `b`-bit RIS phases.
    Rist(PhaseResolution),
    /// Unquantized maximal-ratio transmission.
    Mrt,
    /// Maximal-ratio transmission through the 1-bit DACs.
    Qmrt,
    /// Unquantized zero-forcing serving `K` users at once.
    Zf(usize),
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Rist(_) => "RIST",
            Scheme::Mrt => "MRT",
            Scheme::Qmrt => "QMRT",
            Scheme::Zf(_) => "ZF",
        }
    }

    /// RIS resolution used by the scheme; baselines use continuous phases.
    pub fn resolution(&self) -> PhaseResolution {
        match self {
            Scheme::Rist(r) => *r,
            _ => PhaseResolution::Continuous,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let (head, tail) = match t.split_once('-') {
            Some((h, r)) => (h.to_string(), Some(r.to_string())),
            None => (t.clone(), None),
        };
        match (head.as_str(), tail.as_deref()) {
            ("RIST", Some(b)) => Ok(Scheme::Rist(PhaseResolution::parse(b)?)),
            ("RIST", None) => Ok(Scheme::Rist(PhaseResolution::Continuous)),
            ("MRT", None) => Ok(Scheme::Mrt),
            ("QMRT", None) => Ok(Scheme::Qmrt),
            ("ZF", Some(k)) => k
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .map(Scheme::Zf)
                .ok_or_else(|| Error::Config(format!("bad ZF user count in {s:?}"))),
            _ => Err(Error::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Rist(r) => write!(f, "RIST-{r}"),
            Scheme::Mrt => f.write_str("MRT"),
            Scheme::Qmrt => f.write_str("QMRT"),
            Scheme::Zf(k) => write!(f, "ZF-{k}"),
        }
    }
}

/// Every parameter of the experiment suite.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_antennas: usize,
    pub num_ris: usize,
    /// Users served by TDM in every realization.
    pub num_users: usize,
    pub target_angles_deg: Vec<f64>,
    pub target_distance_m: f64,
    pub beta: f64,
    pub beta_sweep: Vec<f64>,
    pub psk_order: usize,
    pub ris_bits: PhaseResolution,
    /// Per-antenna transmit power `P/M` in dB, relative to unit power.
    pub power_db_sweep: Vec<f64>,
    /// Operating point of the β sweep.
    pub beta_sweep_power_db: f64,
    /// Per-antenna power used to report illumination.
    pub illumination_power_db: f64,
    pub schemes: Vec<Scheme>,
    pub realizations: usize,
    pub symbols_per_realization: usize,
    pub channel: ChannelModelParams,
    pub master_seed: u64,
    pub bs_position: Position,
    pub ris_position: Position,
    pub user_region_corner: Position,
    pub user_region_size: [f64; 2],
    pub grid_points: usize,
    pub solver: SolverOptions,
    /// Fill the `wall_time_s` CSV column. Off by default so reruns are
    /// byte-identical.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_antennas: 16,
            num_ris: 100,
            num_users: 1,
            target_angles_deg: vec![-45.0, 0.0],
            target_distance_m: 80.0,
            beta: 0.2,
            beta_sweep: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            psk_order: 64,
            ris_bits: PhaseResolution::Bits(4),
            power_db_sweep: vec![104.0, 106.0, 108.0, 110.0, 112.0, 114.0, 116.0, 118.0],
            beta_sweep_power_db: 114.0,
            illumination_power_db: 0.0,
            schemes: vec![
                Scheme::Rist(PhaseResolution::Bits(2)),
                Scheme::Rist(PhaseResolution::Bits(4)),
                Scheme::Rist(PhaseResolution::Continuous),
                Scheme::Mrt,
                Scheme::Qmrt,
                Scheme::Zf(2),
            ],
            realizations: 10_000,
            symbols_per_realization: 200,
            channel: ChannelModelParams::default(),
            master_seed: 0,
            bs_position: [0.0, 0.0, 0.0],
            ris_position: [50.0, 50.0, 10.0],
            user_region_corner: [10.0, 50.0, 0.0],
            user_region_size: [30.0, 50.0],
            grid_points: 181,
            solver: SolverOptions::default(),
            record_timing: false,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> std::result::Result<f64, String> {
    let t = v.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => t.parse().map_err(|_| format!("{key}: expected a number, got {t:?}")),
    }
}

fn parse_usize(key: &str, v: &str) -> std::result::Result<usize, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("{key}: expected a non-negative integer, got {:?}", v.trim()))
}

fn parse_list<T>(
    key: &str,
    v: &str,
    f: impl Fn(&str, &str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(key, s))
        .collect()
}

fn parse_position(key: &str, v: &str) -> std::result::Result<Position, String> {
    let xs = parse_list(key, v, parse_f64)?;
    <[f64; 3]>::try_from(xs).map_err(|_| format!("{key}: expected three comma-separated coordinates"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("{key}: expected true/false, got {other:?}")),
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Parses config text; an empty string yields the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            if let Err(e) = cfg.set(key.trim(), value.trim()) {
                errors.push(format!("line {}: {e}", lineno + 1));
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors.join("; ")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "num_antennas" => self.num_antennas = parse_usize(key, v)?,
            "num_ris" => self.num_ris = parse_usize(key, v)?,
            "num_users" => self.num_users = parse_usize(key, v)?,
            "target_angles_deg" => self.target_angles_deg = parse_list(key, v, parse_f64)?,
            "target_distance_m" => self.target_distance_m = parse_f64(key, v)?,
            "beta" => self.beta = parse_f64(key, v)?,
            "beta_sweep" => self.beta_sweep = parse_list(key, v, parse_f64)?,
            "psk_order" => self.psk_order = parse_usize(key, v)?,
            "ris_bits" => self.ris_bits = PhaseResolution::parse(v).map_err(|e| format!("{key}: {e}"))?,
            "power_db_sweep" => self.power_db_sweep = parse_list(key, v, parse_f64)?,
            "beta_sweep_power_db" => self.beta_sweep_power_db = parse_f64(key, v)?,
            "illumination_power_db" => self.illumination_power_db = parse_f64(key, v)?,
            "schemes" => self.schemes = parse_list(key, v, |k, s| Scheme::parse(s).map_err(|e| format!("{k}: {e}")))?,
            "realizations" => self.realizations = parse_usize(key, v)?,
            "symbols_per_realization" => self.symbols_per_realization = parse_usize(key, v)?,
            "pathloss_offset_db" => self.channel.pathloss_offset_db = parse_f64(key, v)?,
            "pathloss_exponent_coeff_db" => self.channel.pathloss_exponent_coeff_db = parse_f64(key, v)?,
            "rician_k_db" => self.channel.rician_k_factor_db = parse_f64(key, v)?,
            "bs_ris_k_db" => self.channel.bs_ris_k_factor_db = parse_f64(key, v)?,
            "noise_var" => self.channel.noise_variance = parse_f64(key, v)?,
            "master_seed" => {
                self.master_seed = v
                    .trim()
                    .parse()
                    .map_err(|_| format!("{key}: expected an unsigned 64-bit integer"))?
            }
            "bs_position" => self.bs_position = parse_position(key, v)?,
            "ris_position" => self.ris_position = parse_position(key, v)?,
            "user_region_corner" => self.user_region_corner = parse_position(key, v)?,
            "user_region_size" => {
                let xs = parse_list(key, v, parse_f64)?;
                self.user_region_size =
                    <[f64; 2]>::try_from(xs).map_err(|_| format!("{key}: expected width, height"))?;
            }
            "grid_points" => self.grid_points = parse_usize(key, v)?,
            "solver_max_iters" => self.solver.max_iters = parse_usize(key, v)?,
            "solver_tol" => self.solver.tol = parse_f64(key, v)?,
            "record_timing" => self.record_timing = parse_bool(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Checks every constraint and lists all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        if self.num_antennas == 0 {
            e.push("num_antennas must be >= 1".to_string());
        }
        if self.num_ris == 0 {
            e.push("num_ris must be >= 1".to_string());
        }
        if self.num_users == 0 {
            e.push("num_users must be >= 1".to_string());
        }
        if self.target_angles_deg.is_empty() {
            e.push("target_angles_deg needs at least one angle".to_string());
        }
        if self.target_angles_deg.iter().any(|a| !(a.abs() <= 90.0)) {
            e.push("target_angles_deg must lie in [-90, 90]".to_string());
        }
        if !(self.target_distance_m > 0.0 && self.target_distance_m.is_finite()) {
            e.push(format!("target_distance_m must be > 0, got {}", self.target_distance_m));
        }
        let beta_ok = |b: f64| b > 0.0 && b < 1.0;
        if !beta_ok(self.beta) {
            e.push(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if let Some(b) = self.beta_sweep.iter().find(|&&b| !beta_ok(b)) {
            e.push(format!("beta_sweep values must lie in (0, 1), got {b}"));
        }
        if self.psk_order < 2 || !self.psk_order.is_power_of_two() {
            e.push(format!("psk_order must be a power of two >= 2, got {}", self.psk_order));
        }
        if let PhaseResolution::Bits(b) = self.ris_bits {
            if !(1..=8).contains(&b) {
                e.push(format!("ris_bits must be in 1..=8 or inf, got {b}"));
            }
        }
        for s in &self.schemes {
            match s {
                Scheme::Rist(PhaseResolution::Bits(b)) if !(1..=8).contains(b) => {
                    e.push(format!("scheme {s}: RIS bits must be in 1..=8"))
                }
                Scheme::Zf(k) if *k > self.num_antennas => e.push(format!("scheme {s}: ZF needs K <= num_antennas")),
                _ => {}
            }
        }
        if self.power_db_sweep.iter().any(|p| !p.is_finite()) {
            e.push("power_db_sweep values must be finite".to_string());
        }
        if !self.beta_sweep_power_db.is_finite() || !self.illumination_power_db.is_finite() {
            e.push("power levels must be finite".to_string());
        }
        if self.realizations == 0 || self.symbols_per_realization == 0 {
            e.push("realizations and symbols_per_realization must be >= 1".to_string());
        }
        if !(self.channel.noise_variance > 0.0 && self.channel.noise_variance.is_finite()) {
            e.push(format!("noise_var must be > 0, got {}", self.channel.noise_variance));
        }
        if self.channel.rician_k_factor_db.is_nan() || self.channel.bs_ris_k_factor_db.is_nan() {
            e.push("Rician factors must not be NaN".to_string());
        }
        if self.user_region_size.iter().any(|s| !(*s >= 0.0)) {
            e.push("user_region_size must be non-negative".to_string());
        }
        if self.ris_position == self.bs_position {
            e.push("ris_position must differ from bs_position".to_string());
        }
        if self.grid_points < 2 {
            e.push("grid_points must be >= 2".to_string());
        }
        if self.solver.max_iters == 0 || !(self.solver.tol > 0.0) {
            e.push("solver_max_iters must be >= 1 and solver_tol > 0".to_string());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e.join("; ")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Quick-run scale: 100 realizations of 50 symbols.
    pub fn quick(mut self) -> Self {
        self.realizations = 100;
        self.symbols_per_realization = 50;
        self
    }

    /// Resolved configuration in the same `key = value` format it is read from.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = |p: &[f64]| fmt_list(p);
        let ch = &self.channel;
        let _ = writeln!(s, "num_antennas = {}", self.num_antennas);
        let _ = writeln!(s, "num_ris = {}", self.num_ris);
        let _ = writeln!(s, "num_users = {}", self.num_users);
        let _ = writeln!(s, "target_angles_deg = {}", p(&self.target_angles_deg));
        let _ = writeln!(s, "target_distance_m = {}", self.target_distance_m);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "beta_sweep = {}", p(&self.beta_sweep));
        let _ = writeln!(s, "psk_order = {}", self.psk_order);
        let _ = writeln!(s, "ris_bits = {}", self.ris_bits);
        let _ = writeln!(s, "power_db_sweep = {}", p(&self.power_db_sweep));
        let _ = writeln!(s, "beta_sweep_power_db = {}", self.beta_sweep_power_db);
        let _ = writeln!(s, "illumination_power_db = {}", self.illumination_power_db);
        let schemes: Vec<String> = self.schemes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(s, "schemes = {}", schemes.join(", "));
        let _ = writeln!(s, "realizations = {}", self.realizations);
        let _ = writeln!(s, "symbols_per_realization = {}", self.symbols_per_realization);
        let _ = writeln!(s, "pathloss_offset_db = {}", ch.pathloss_offset_db);
        let _ = writeln!(s, "pathloss_exponent_coeff_db = {}", ch.pathloss_exponent_coeff_db);
        let _ = writeln!(s, "rician_k_db = {}", ch.rician_k_factor_db);
        let _ = writeln!(s, "bs_ris_k_db = {}", ch.bs_ris_k_factor_db);
        let _ = writeln!(s, "noise_var = {}", ch.noise_variance);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "bs_position = {}", p(&self.bs_position));
        let _ = writeln!(s, "ris_position = {}", p(&self.ris_position));
        let _ = writeln!(s, "user_region_corner = {}", p(&self.user_region_corner));
        let _ = writeln!(s, "user_region_size = {}", p(&self.user_region_size));
        let _ = writeln!(s, "grid_points = {}", self.grid_points);
        let _ = writeln!(s, "solver_max_iters = {}", self.solver.max_iters);
        let _ = writeln!(s, "solver_tol = {}", self.solver.tol);
        let _ = writeln!(s, "record_timing = {}", self.record_timing);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`to_text`](Self::to_text).
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hash.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
