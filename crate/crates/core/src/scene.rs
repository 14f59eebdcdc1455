//! Scene geometry, steering vectors, pathloss and channel realizations.
//!
//! Coordinates are in meters. The base-station ULA lies along the y axis with
//! its boresight on +x, so a direction `u` maps to the array angle
//! `asin(u_y)`. The RIS is modeled as a ULA along the x axis.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{complex_normal, sub_stream};

pub type Position = [f64; 3];

/// Unit vector along which the base-station elements are spaced.
pub const BS_ARRAY_AXIS: Position = [0.0, 1.0, 0.0];
/// Unit vector along which the RIS elements are spaced.
pub const RIS_ARRAY_AXIS: Position = [1.0, 0.0, 0.0];

/// Half-wavelength-spaced uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    pub axis: Position,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, axis: Position) -> Self {
        Self { num_elements, axis }
    }

    /// Steering vector toward a propagation direction (not necessarily unit length).
    pub fn steering_toward(&self, direction: Position) -> Vec<Complex64> {
        let u = unit(direction);
        steering_from_sine(dot(u, self.axis), self.num_elements)
    }
}

/// ULA response `[1, e^{-jπ sinθ}, ..., e^{-jπ(m-1) sinθ}]`.
pub fn steering_vector(theta: f64, m: usize) -> Vec<Complex64> {
    steering_from_sine(theta.sin(), m)
}

fn steering_from_sine(sine: f64, m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|i| Complex64::from_polar(1.0, -PI * i as f64 * sine))
        .collect()
}

/// Large-scale fading parameters shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModelParams {
    pub pathloss_offset_db: f64,
    pub pathloss_exponent_coeff_db: f64,
    /// Rician factor of the RIS-user links.
    pub rician_k_factor_db: f64,
    /// Rician factor of the BS-RIS link.
    pub bs_ris_k_factor_db: f64,
    pub noise_variance: f64,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        Self {
            pathloss_offset_db: 30.0,
            pathloss_exponent_coeff_db: 22.0,
            rician_k_factor_db: 10.0,
            bs_ris_k_factor_db: 10.0,
            noise_variance: 1.0,
        }
    }
}

impl ChannelModelParams {
    pub fn pathloss_db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!("distance must be positive, got {d}")));
        }
        Ok(self.pathloss_offset_db + self.pathloss_exponent_coeff_db * d.log10())
    }

    /// Linear power gain `10^{-PL/10}`.
    pub fn gain(&self, d: f64) -> Result<f64> {
        Ok(db_to_linear(-self.pathloss_db(d)?))
    }
}

/// `30 + 22 log10(d)` dB.
pub fn pathloss_db(d: f64) -> Result<f64> {
    ChannelModelParams::default().pathloss_db(d)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Line-of-sight link to a target: `sqrt(gain(d)) a(θ)`.
pub fn gen_target_channel(theta: f64, distance: f64, m: usize) -> Result<Vec<Complex64>> {
    gen_target_channel_with(&ChannelModelParams::default(), theta, distance, m)
}

pub fn gen_target_channel_with(
    params: &ChannelModelParams,
    theta: f64,
    distance: f64,
    m: usize,
) -> Result<Vec<Complex64>> {
    let amp = params.gain(distance)?.sqrt();
    Ok(steering_vector(theta, m).into_iter().map(|a| a * amp).collect())
}

/// Rician fading around a unit-power LOS component.
///
/// Every entry draws one CN(0, 1) sample regardless of the factor, so the
/// random stream consumption does not depend on `k_factor_db`.
pub fn gen_rician_channel(los: &CMatrix, k_factor_db: f64, gain: f64, rng: &mut impl Rng) -> CMatrix {
    let (w_los, w_nlos) = if k_factor_db == f64::INFINITY {
        (1.0, 0.0)
    } else {
        let k = db_to_linear(k_factor_db);
        ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
    };
    let amp = gain.sqrt();
    let mut out = CMatrix::zeros(los.rows(), los.cols());
    for i in 0..los.rows() {
        for j in 0..los.cols() {
            let scatter = complex_normal(rng);
            out[(i, j)] = (los[(i, j)] * w_los + scatter * w_nlos) * amp;
        }
    }
    out
}

/// Uniform draw from the rectangle hanging down from `corner`:
/// `x ∈ [cx, cx + width]`, `y ∈ [cy - height, cy]`, `z = cz`.
pub fn sample_user_position_in(corner: Position, size: [f64; 2], rng: &mut impl Rng) -> Position {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    [corner[0] + u * size[0], corner[1] - v * size[1], corner[2]]
}

/// User drop in the default 30 m x 50 m region with top-left corner (10, 50, 0).
pub fn sample_user_position(rng: &mut impl Rng) -> Position {
    sample_user_position_in([10.0, 50.0, 0.0], [30.0, 50.0], rng)
}

/// Geometry plus one realization of every channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub bs_position: Position,
    pub ris_position: Position,
    pub user_positions: Vec<Position>,
    pub target_angles: Vec<f64>,
    /// BS-to-RIS channel, N x M.
    pub h_br: CMatrix,
    /// RIS-to-user channels, one N-vector per user; the link is `h_ru^H`.
    pub h_ru: Vec<Vec<Complex64>>,
    /// BS-to-target channels, one M-vector per target; the link is `g^H`.
    pub g: Vec<Vec<Complex64>>,
}

impl Scene {
    pub fn num_antennas(&self) -> usize {
        self.h_br.cols()
    }

    pub fn num_ris(&self) -> usize {
        self.h_br.rows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

const TAG_BS_RIS: u64 = 1;
const TAG_USER: u64 = 2;

/// Array angle of the RIS as seen from the base station.
pub fn ris_direction(bs: Position, ris: Position) -> f64 {
    let u = unit(sub(ris, bs));
    dot(u, BS_ARRAY_AXIS).clamp(-1.0, 1.0).asin()
}

/// Draws a full scene. `H_br` and each user take a separate sub-stream keyed
/// from one value drawn from `rng`, so user `k` sees the same channel no
/// matter how many users are drawn.
pub fn build_scene(config: &ExperimentConfig, num_users: usize, rng: &mut impl RngCore) -> Result<Scene> {
    let m = config.num_antennas;
    let n = config.num_ris;
    let params = &config.channel;
    let base = rng.next_u64();
    let bs_array = ArrayGeometry::new(m, BS_ARRAY_AXIS);
    let ris_array = ArrayGeometry::new(n, RIS_ARRAY_AXIS);

    let bs = config.bs_position;
    let ris = config.ris_position;
    let d_br = norm(sub(ris, bs));
    let a_bs = bs_array.steering_toward(sub(ris, bs));
    let a_ris = ris_array.steering_toward(sub(bs, ris));
    let los_br = CMatrix::outer(&a_ris, &a_bs);
    let mut rng_br = sub_stream(base, TAG_BS_RIS, 0);
    let h_br = gen_rician_channel(&los_br, params.bs_ris_k_factor_db, params.gain(d_br)?, &mut rng_br);

    let mut user_positions = Vec::with_capacity(num_users);
    let mut h_ru = Vec::with_capacity(num_users);
    for k in 0..num_users {
        let mut rng_u = sub_stream(base, TAG_USER, k as u64);
        let pos = sample_user_position_in(config.user_region_corner, config.user_region_size, &mut rng_u);
        let d = norm(sub(pos, ris));
        let los = ris_array.steering_toward(sub(pos, ris));
        let los = CMatrix::from_vec(n, 1, los)?;
        let h = gen_rician_channel(&los, params.rician_k_factor_db, params.gain(d)?, &mut rng_u);
        user_positions.push(pos);
        h_ru.push(h.column(0));
    }

    let target_angles: Vec<f64> = config.target_angles_deg.iter().map(|a| a.to_radians()).collect();
    let g = target_angles
        .iter()
        .map(|&t| gen_target_channel_with(params, t, config.target_distance_m, m))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene {
        bs_position: bs,
        ris_position: ris,
        user_positions,
        target_angles,
        h_br,
        h_ru,
        g,
    })
}

fn sub(a: Position, b: Position) -> Position {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Position, b: Position) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Position) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: Position) -> Position {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
