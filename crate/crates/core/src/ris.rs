//! Instantaneous RIS phase control.
//!
//! Per symbol the base station knows the 1-bit waveform `z_n`, so it can form
//! the cascade `h_c = diag(h_ru^H) H_br z_n`, co-phase every element with
//! `φ_i = e^{-j angle([h_c]_i)}`, rotate by the PSK symbol and round each
//! element to the `b`-bit phase alphabet.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// RIS phase-shifter resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseResolution {
    Bits(u32),
    Continuous,
}

impl PhaseResolution {
    /// `Δω = 2π / 2^b`; `None` for continuous phases.
    pub fn delta_omega(&self) -> Option<f64> {
        match self {
            PhaseResolution::Bits(b) => Some(TAU / (1u64 << b) as f64),
            PhaseResolution::Continuous => None,
        }
    }

    pub fn levels(&self) -> Option<u64> {
        match self {
            PhaseResolution::Bits(b) => Some(1u64 << b),
            PhaseResolution::Continuous => None,
        }
    }

    /// The feasible set `F = {e^{j k Δω}}`.
    pub fn alphabet(&self) -> Option<Vec<Complex64>> {
        let d = self.delta_omega()?;
        Some(
            (0..self.levels().unwrap())
                .map(|k| Complex64::from_polar(1.0, k as f64 * d))
                .collect(),
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if matches!(t.as_str(), "inf" | "infinity" | "continuous") {
            return Ok(PhaseResolution::Continuous);
        }
        t.parse::<u32>()
            .ok()
            .filter(|b| (1..=30).contains(b))
            .map(PhaseResolution::Bits)
            .ok_or_else(|| Error::Config(format!("bad RIS resolution {s:?} (use bits or inf)")))
    }
}

impl fmt::Display for PhaseResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseResolution::Bits(b) => write!(f, "{b}"),
            PhaseResolution::Continuous => f.write_str("inf"),
        }
    }
}

/// Angle wrapped into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Phase state of the surface for one symbol, stored as angles in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisState {
    pub phi: Vec<f64>,
    pub omega: Vec<f64>,
    /// Alphabet index of every `omega` entry when the resolution is finite.
    pub omega_index: Option<Vec<u64>>,
    pub resolution: PhaseResolution,
}

impl RisState {
    /// Co-phases `h_c`, embeds `symbol` and projects onto the alphabet.
    pub fn for_symbol(h_c: &[Complex64], symbol: Complex64, resolution: PhaseResolution) -> Result<Self> {
        check_unit(symbol)?;
        let phi: Vec<f64> = h_c.iter().map(|&h| phase_of_optimum(h)).collect();
        let sym = symbol.arg();
        let raw: Vec<f64> = phi.iter().map(|p| wrap_angle(p + sym)).collect();
        let (omega, omega_index) = match resolution {
            PhaseResolution::Continuous => (raw, None),
            PhaseResolution::Bits(_) => {
                let d = resolution.delta_omega().unwrap();
                let idx: Vec<u64> = raw.iter().map(|&a| nearest_level(a, resolution)).collect();
                (idx.iter().map(|&k| k as f64 * d).collect(), Some(idx))
            }
        };
        Ok(Self {
            phi,
            omega,
            omega_index,
            resolution,
        })
    }

    pub fn phi_complex(&self) -> Vec<Complex64> {
        self.phi.iter().map(|&a| Complex64::from_polar(1.0, a)).collect()
    }

    pub fn omega_complex(&self) -> Vec<Complex64> {
        self.omega.iter().map(|&a| Complex64::from_polar(1.0, a)).collect()
    }
}

/// `h_c = diag(h_ru^H) H_br z`, i.e. `[h_c]_i = conj(h_ru_i) (H_br z)_i`.
pub fn cascade_channel(h_ru: &[Complex64], h_br: &CMatrix, z: &[Complex64]) -> Result<Vec<Complex64>> {
    if h_br.rows() != h_ru.len() || h_br.cols() != z.len() {
        return Err(Error::Dimension(format!(
            "cascade: h_ru has {} entries, H_br is {}x{}, z has {}",
            h_ru.len(),
            h_br.rows(),
            h_br.cols(),
            z.len()
        )));
    }
    Ok(h_ru.iter().zip(h_br.mul_vec(z)).map(|(h, u)| h.conj() * u).collect())
}

fn phase_of_optimum(h: Complex64) -> f64 {
    if h.norm_sqr() == 0.0 {
        0.0
    } else {
        wrap_angle(-h.arg())
    }
}

/// `φ_i = e^{-j angle([h_c]_i)}`, with `φ_i = 1` where `[h_c]_i = 0`.
pub fn optimal_phase(h_c: &[Complex64]) -> Vec<Complex64> {
    h_c.iter()
        .map(|&h| {
            if h.norm_sqr() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                (h / h.norm()).conj()
            }
        })
        .collect()
}

fn check_unit(s: Complex64) -> Result<()> {
    if (s.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "symbol must have unit modulus, got |s| = {}",
            s.norm()
        )));
    }
    Ok(())
}

/// `ω = φ s` entrywise.
pub fn embed_symbol(phi: &[Complex64], s: Complex64) -> Result<Vec<Complex64>> {
    check_unit(s)?;
    Ok(phi.iter().map(|p| p * s).collect())
}

/// Alphabet index nearest to angle `a` (in `[0, 2π)`); exact ties go to the
/// smaller index.
pub fn nearest_level(a: f64, resolution: PhaseResolution) -> u64 {
    let (Some(d), Some(levels)) = (resolution.delta_omega(), resolution.levels()) else {
        panic!("nearest_level needs a finite resolution");
    };
    let x = wrap_angle(a) / d;
    let lo = (x.floor() as u64).min(levels - 1);
    let hi = (lo + 1) % levels;
    let d_lo = x - lo as f64;
    let d_hi = (lo + 1) as f64 - x;
    if d_hi < d_lo {
        hi
    } else if d_lo < d_hi {
        lo
    } else {
        lo.min(hi)
    }
}

/// Rounds every entry to the nearest alphabet point; passthrough for
/// continuous phases.
pub fn project_discrete(omega: &[Complex64], resolution: PhaseResolution) -> Vec<Complex64> {
    match resolution {
        PhaseResolution::Continuous => omega.to_vec(),
        PhaseResolution::Bits(_) => {
            let d = resolution.delta_omega().unwrap();
            omega
                .iter()
                .map(|w| {
                    let k = nearest_level(w.arg(), resolution);
                    Complex64::from_polar(1.0, k as f64 * d)
                })
                .collect()
        }
    }
}

/// `α = φ^T h_c`.
pub fn modified_gain(phi: &[Complex64], h_c: &[Complex64]) -> Complex64 {
    phi.iter().zip(h_c).map(|(p, h)| p * h).sum()
}

/// `|φ^T h_c|² / σ²`.
pub fn instantaneous_snr(phi: &[Complex64], h_c: &[Complex64], sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(modified_gain(phi, h_c).norm_sqr() / sigma2)
}

/// Writes `n,i,omega_angle` rows for a sequence of states.
pub fn write_phase_trace<'a>(mut w: impl Write, states: impl IntoIterator<Item = &'a RisState>) -> Result<()> {
    writeln!(w, "n,i,omega_angle")?;
    for (n, s) in states.into_iter().enumerate() {
        for (i, a) in s.omega.iter().enumerate() {
            writeln!(w, "{n},{i},{a:.17e}")?;
        }
    }
    Ok(())
}

/// Angular distance between two angles, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d).min(PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cascade_examples() {
        let z = vec![c(0.3, -1.0), c(2.0, 0.5)];
        let h = cascade_channel(&[c(1.0, 0.0); 2], &CMatrix::identity(2), &z).unwrap();
        assert_eq!(h, z);

        let h_br = CMatrix::from_vec(2, 1, vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let h = cascade_channel(&[c(1.0, 0.0), c(0.0, 1.0)], &h_br, &[c(1.0, 0.0)]).unwrap();
        assert_eq!(h, vec![c(1.0, 0.0), c(0.0, -1.0)]);

        assert!(matches!(
            cascade_channel(&[c(1.0, 0.0)], &h_br, &[c(1.0, 0.0)]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cascade_is_linear_in_z() {
        let h_br = CMatrix::from_fn(3, 2, |i, j| c(i as f64 - j as f64, 0.5 * (i + j) as f64));
        let h_ru = vec![c(0.2, 1.0), c(-1.0, 0.3), c(0.7, -0.7)];
        let z1 = vec![c(1.0, 2.0), c(-0.5, 0.1)];
        let z2 = vec![c(0.3, -0.2), c(1.5, 1.0)];
        let sum: Vec<_> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
        let lhs = cascade_channel(&h_ru, &h_br, &sum).unwrap();
        let a = cascade_channel(&h_ru, &h_br, &z1).unwrap();
        let b = cascade_channel(&h_ru, &h_br, &z2).unwrap();
        for i in 0..3 {
            assert!((lhs[i] - a[i] - b[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn optimal_phase_examples() {
        let h = [c(1.0, 1.0), c(-1.0, 0.0)];
        let phi = optimal_phase(&h);
        assert!((phi[0] - Complex64::from_polar(1.0, -FRAC_PI_4)).norm() < 1e-15);
        assert!((phi[1] - Complex64::from_polar(1.0, -PI)).norm() < 1e-15);
        let alpha = modified_gain(&phi, &h);
        assert!((alpha - c(2f64.sqrt() + 1.0, 0.0)).norm() < 1e-15);

        assert_eq!(optimal_phase(&[c(2.0, 0.0), c(0.1, 0.0)]), vec![c(1.0, 0.0); 2]);
        assert_eq!(optimal_phase(&[c(0.0, 0.0)]), vec![c(1.0, 0.0)]);
    }

    #[test]
    fn embed_examples() {
        let phi = vec![c(1.0, 0.0); 3];
        assert_eq!(embed_symbol(&phi, c(1.0, 0.0)).unwrap(), phi);
        assert_eq!(embed_symbol(&phi, c(0.0, 1.0)).unwrap(), vec![c(0.0, 1.0); 3]);
        let phi = optimal_phase(&[c(0.3, 2.0), c(-1.0, -0.4)]);
        let s = Complex64::from_polar(1.0, 2.2);
        let omega = embed_symbol(&phi, s).unwrap();
        for (w, p) in omega.iter().zip(&phi) {
            assert!(angular_distance(w.arg() - p.arg(), s.arg()) < 1e-12);
            assert!((w * s.conj() - p).norm() < 1e-15);
        }
        assert!(matches!(embed_symbol(&phi, c(2.0, 0.0)), Err(Error::Contract(_))));
    }

    #[test]
    fn projection_examples() {
        let one_bit = PhaseResolution::Bits(1);
        let w = project_discrete(&[Complex64::from_polar(1.0, 0.6 * PI)], one_bit);
        assert!((w[0] - c(-1.0, 0.0)).norm() < 1e-15);
        let two_bit = PhaseResolution::Bits(2);
        let w = project_discrete(&[Complex64::from_polar(1.0, 0.3 * PI)], two_bit);
        assert!((w[0] - c(0.0, 1.0)).norm() < 1e-15);
        let cont = [Complex64::from_polar(1.0, 0.123)];
        assert_eq!(project_discrete(&cont, PhaseResolution::Continuous), cont.to_vec());
    }

    #[test]
    fn ties_pick_smaller_index() {
        let two_bit = PhaseResolution::Bits(2);
        assert_eq!(nearest_level(FRAC_PI_4, two_bit), 0);
        assert_eq!(nearest_level(3.0 * FRAC_PI_4, two_bit), 1);
        // between level 3 (3π/2) and level 0 (2π)
        assert_eq!(nearest_level(7.0 * FRAC_PI_4, two_bit), 0);
        assert_eq!(nearest_level(-1e-9, two_bit), 0);
    }

    #[test]
    fn projection_beats_every_candidate() {
        let three = PhaseResolution::Bits(3);
        let alphabet = three.alphabet().unwrap();
        for k in 0..2000 {
            let a = k as f64 * 0.0031415 - 0.5;
            let w = Complex64::from_polar(1.0, a);
            let p = project_discrete(&[w], three)[0];
            let best = (p - w).norm();
            for f in &alphabet {
                assert!(best <= (f - w).norm() + 1e-12);
            }
            assert!(angular_distance(p.arg(), a) <= PI / 8.0 + 1e-12);
        }
    }

    #[test]
    fn state_membership_is_exact() {
        let h = [c(0.3, 0.4), c(-2.0, 0.1), c(0.0, -1.0)];
        let s = Complex64::from_polar(1.0, 2.0 * PI * 5.0 / 64.0);
        let st = RisState::for_symbol(&h, s, PhaseResolution::Bits(3)).unwrap();
        let d = PI / 4.0;
        for (a, k) in st.omega.iter().zip(st.omega_index.as_ref().unwrap()) {
            assert_eq!(*a, *k as f64 * d);
            assert!(*k < 8);
        }
        let cont = RisState::for_symbol(&h, s, PhaseResolution::Continuous).unwrap();
        let alpha = modified_gain(&cont.omega_complex(), &h) * s.conj();
        assert!(alpha.im.abs() < 1e-12);
        assert!(st.phi.iter().chain(&st.omega).all(|&a| (0.0..TAU).contains(&a)));
    }

    #[test]
    fn snr_examples() {
        let h = [c(1.0, 2.0), c(-0.5, 0.5), c(0.0, -3.0)];
        let phi = optimal_phase(&h);
        let sum: f64 = h.iter().map(|z| z.norm()).sum();
        assert!((instantaneous_snr(&phi, &h, 2.0).unwrap() - sum * sum / 2.0).abs() < 1e-12);
        assert_eq!(instantaneous_snr(&phi, &[c(0.0, 0.0); 3], 1.0).unwrap(), 0.0);
        assert!(instantaneous_snr(&phi, &h, 0.0).is_err());
    }

    #[test]
    fn phase_trace_csv() {
        let st = RisState::for_symbol(&[c(1.0, 0.0), c(0.0, 1.0)], c(1.0, 0.0), PhaseResolution::Bits(2)).unwrap();
        let mut buf = Vec::new();
        write_phase_trace(&mut buf, [&st, &st]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("n,i,omega_angle\n0,0,"));
    }

    #[test]
    fn resolution_parse_display() {
        assert_eq!(PhaseResolution::parse("inf").unwrap(), PhaseResolution::Continuous);
        assert_eq!(PhaseResolution::parse("4").unwrap(), PhaseResolution::Bits(4));
        assert!(PhaseResolution::parse("0").is_err());
        assert_eq!(PhaseResolution::Bits(2).to_string(), "2");
        assert_eq!(PhaseResolution::Bits(2).alphabet().unwrap().len(), 4);
    }
}
