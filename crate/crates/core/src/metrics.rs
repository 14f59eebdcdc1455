//! Sensing figures of merit: target illumination power and its worst case
//! over the targets, plus the CSV schema used to report them.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::precoder::PrecoderDesign;
use crate::scene::linear_to_db;

/// Which transmit covariance an illumination figure was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceReference {
    /// 1-bit output statistics of the proposed design.
    Quantized,
    /// Relaxed ISAC solution, as an infinite-resolution transmitter would emit.
    UnquantizedIsac,
    /// Relaxed solution of the radar-only pattern.
    RadarOnly,
}

impl CovarianceReference {
    pub fn name(&self) -> &'static str {
        match self {
            CovarianceReference::Quantized => "proposed",
            CovarianceReference::UnquantizedIsac => "unquantized-isac",
            CovarianceReference::RadarOnly => "radar-only",
        }
    }
}

impl fmt::Display for CovarianceReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-target illumination and its minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationReport {
    /// `(angle in radians, linear power)` per target.
    pub per_target_power: Vec<(f64, f64)>,
    pub worst_case: f64,
    pub reference: CovarianceReference,
}

impl IlluminationReport {
    pub fn worst_case_db(&self) -> f64 {
        linear_to_db(self.worst_case)
    }
}

/// `ρ g^H R g`.
pub fn illumination_power(r_z: &HermitianMatrix, g: &[Complex64], rho: f64) -> Result<f64> {
    if g.len() != r_z.dim() {
        return Err(Error::Dimension(format!(
            "target channel has {} entries, covariance is {}x{}",
            g.len(),
            r_z.dim(),
            r_z.dim()
        )));
    }
    // rounding can leave a tiny negative value for g outside the range of R
    Ok((rho * r_z.matrix().quad_form(g).re).max(0.0))
}

/// Illumination of every target under `r_z`.
pub fn illumination_report(
    r_z: &HermitianMatrix,
    target_angles: &[f64],
    target_channels: &[Vec<Complex64>],
    rho: f64,
    reference: CovarianceReference,
) -> Result<IlluminationReport> {
    if target_channels.is_empty() || target_angles.len() != target_channels.len() {
        return Err(Error::Dimension(format!(
            "{} target angles for {} target channels",
            target_angles.len(),
            target_channels.len()
        )));
    }
    let per_target_power = target_angles
        .iter()
        .zip(target_channels)
        .map(|(&a, g)| Ok((a, illumination_power(r_z, g, rho)?)))
        .collect::<Result<Vec<_>>>()?;
    let worst_case = per_target_power.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(IlluminationReport {
        per_target_power,
        worst_case,
        reference,
    })
}

/// Scores a design. `Quantized` uses the 1-bit output covariance, the other
/// references use the relaxed solution `R_z*`.
pub fn worst_case_illumination(
    design: &PrecoderDesign,
    reference: CovarianceReference,
    target_angles: &[f64],
    target_channels: &[Vec<Complex64>],
    rho: f64,
) -> Result<IlluminationReport> {
    let r = match reference {
        CovarianceReference::Quantized => &design.r_z_quantized,
        CovarianceReference::UnquantizedIsac | CovarianceReference::RadarOnly => &design.r_z_star,
    };
    illumination_report(r, target_angles, target_channels, rho, reference)
}

/// One illumination CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationRow {
    pub beta: Option<f64>,
    pub scheme: String,
    pub target_angle_deg: f64,
    pub power_linear: f64,
    pub worst_case_db: f64,
}

pub const ILLUMINATION_HEADER: &str = "beta,scheme,target_angle_deg,power_linear,power_db,worst_case_db";

impl IlluminationRow {
    /// One row per target of `report`.
    pub fn from_report(beta: Option<f64>, report: &IlluminationReport) -> Vec<Self> {
        report
            .per_target_power
            .iter()
            .map(|&(a, p)| IlluminationRow {
                beta,
                scheme: report.reference.name().to_string(),
                target_angle_deg: a.to_degrees(),
                power_linear: p,
                worst_case_db: report.worst_case_db(),
            })
            .collect()
    }
}

/// Writes the header and the rows. Empty `beta` marks the radar-only design.
pub fn write_illumination_csv(mut w: impl Write, rows: &[IlluminationRow]) -> Result<()> {
    writeln!(w, "{ILLUMINATION_HEADER}")?;
    for r in rows {
        let beta = r.beta.map(|b| format!("{b}")).unwrap_or_default();
        writeln!(
            w,
            "{beta},{},{:.6},{:.12e},{:.6},{:.6}",
            r.scheme,
            r.target_angle_deg,
            r.power_linear,
            linear_to_db(r.power_linear),
            r.worst_case_db
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::tests_support::random_hermitian;
    use crate::linalg::CMatrix;
    use crate::rng::complex_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_gives_norm() {
        let g = vec![c(1.0, 2.0), c(0.0, -1.0), c(3.0, 0.0)];
        let p = illumination_power(&HermitianMatrix::identity(3), &g, 2.0).unwrap();
        assert!((p - 2.0 * 15.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_to_range_is_zero() {
        let u = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let r = HermitianMatrix::new(CMatrix::outer(&u, &u)).unwrap();
        let p = illumination_power(&r, &[c(0.0, 0.0), c(1.0, 1.0)], 5.0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(illumination_power(&HermitianMatrix::identity(3), &[c(1.0, 0.0)], 1.0).is_err());
    }

    #[test]
    fn single_target_worst_case() {
        let g = vec![vec![c(1.0, 0.0), c(1.0, 0.0)]];
        let rep = illumination_report(
            &HermitianMatrix::identity(2),
            &[0.3],
            &g,
            1.0,
            CovarianceReference::Quantized,
        )
        .unwrap();
        assert_eq!(rep.worst_case, rep.per_target_power[0].1);
    }

    #[test]
    fn linear_in_rho_and_phase_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_hermitian(5, 1.0, &mut rng);
            let r = HermitianMatrix::new(a.matrix() * a.matrix()).unwrap();
            let g: Vec<_> = (0..5).map(|_| complex_normal(&mut rng)).collect();
            let p1 = illumination_power(&r, &g, 1.0).unwrap();
            let p3 = illumination_power(&r, &g, 3.0).unwrap();
            assert!((p3 - 3.0 * p1).abs() < 1e-10 * p3.max(1.0));
            let rot = Complex64::from_polar(1.0, 1.234);
            let gr: Vec<_> = g.iter().map(|v| v * rot).collect();
            let pr = illumination_power(&r, &gr, 1.0).unwrap();
            assert!((pr - p1).abs() < 1e-10 * p1.max(1.0));
        }
    }

    #[test]
    fn csv_rows() {
        let rep = IlluminationReport {
            per_target_power: vec![(0.0, 1.0), (-std::f64::consts::FRAC_PI_4, 0.1)],
            worst_case: 0.1,
            reference: CovarianceReference::UnquantizedIsac,
        };
        let rows = IlluminationRow::from_report(Some(0.2), &rep);
        let mut out = Vec::new();
        write_illumination_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], ILLUMINATION_HEADER);
        assert!(lines[2].starts_with("0.2,unquantized-isac,-45.000000,"));
        assert!(lines[2].ends_with(",-10.000000,-10.000000"));
    }
}
