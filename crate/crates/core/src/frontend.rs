//! 1-bit DAC transmit chain.
//!
//! The quantizer keeps the sign of each real and imaginary part and scales by
//! `1/sqrt(2)`, so every antenna emits unit-modulus samples and the output
//! covariance has a unit diagonal, as the arcsine law requires.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI};
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{casin_elementwise, CMatrix, HermitianMatrix};
use crate::rng::complex_normal;

/// Magic bytes opening a waveform dump.
pub const WAVEFORM_MAGIC: [u8; 4] = *b"QWF1";

#[inline]
fn sgn(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn quantize_sample(z: Complex64) -> Complex64 {
    Complex64::new(sgn(z.re) * FRAC_1_SQRT_2, sgn(z.im) * FRAC_1_SQRT_2)
}

/// Entrywise `(sgn(Re) + j sgn(Im)) / sqrt(2)` with `sgn(0) = +1`.
pub fn one_bit_quantize(x: &[Complex64]) -> Vec<Complex64> {
    x.iter().map(|&z| quantize_sample(z)).collect()
}

/// `diag(R)^{-1/2} R diag(R)^{-1/2}`.
pub fn normalize_covariance(r: &HermitianMatrix) -> Result<HermitianMatrix> {
    let d = r.real_diag();
    if let Some((index, &value)) = d.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::DegenerateCovariance { index, value });
    }
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let n = r.dim();
    let mut m = CMatrix::from_fn(n, n, |i, j| r[(i, j)] * (s[i] * s[j]));
    for i in 0..n {
        m[(i, i)] = Complex64::new(1.0, 0.0);
    }
    Ok(HermitianMatrix::symmetrize(m))
}

/// Output covariance of the quantizer, `(2/π) casin(R̃_x)`.
pub fn arcsine_covariance(r_tilde: &HermitianMatrix) -> Result<HermitianMatrix> {
    let m = casin_elementwise(r_tilde.matrix())?.scale(FRAC_2_PI);
    Ok(HermitianMatrix::symmetrize(m))
}

/// Block of 1-bit samples, one column per time index.
#[derive(Debug, Clone)]
pub struct QuantizedWaveform {
    /// M x T, entries in `{±1 ± j}/sqrt(2)`.
    pub samples: CMatrix,
    /// `sqrt(P / M)`.
    pub power_scale: f64,
}

impl QuantizedWaveform {
    pub fn num_antennas(&self) -> usize {
        self.samples.rows()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.cols()
    }

    pub fn sample(&self, n: usize) -> Vec<Complex64> {
        self.samples.column(n)
    }

    /// Empirical `E[z z^H]` over the block (without the power scale).
    pub fn empirical_covariance(&self) -> CMatrix {
        let m = self.num_antennas();
        let t = self.num_samples();
        let mut acc = CMatrix::zeros(m, m);
        for n in 0..t {
            let z = self.sample(n);
            for i in 0..m {
                for j in 0..m {
                    acc[(i, j)] += z[i] * z[j].conj();
                }
            }
        }
        acc.scale(1.0 / t as f64)
    }

    /// Little-endian dump: 16-byte header (magic, M as u32, T as u64) then
    /// interleaved `re, im` f64 pairs in row-major M x T order.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&WAVEFORM_MAGIC)?;
        w.write_all(&(self.num_antennas() as u32).to_le_bytes())?;
        w.write_all(&(self.num_samples() as u64).to_le_bytes())?;
        for z in self.samples.as_slice() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_binary`](Self::write_binary). The power
    /// scale is not stored and must be supplied.
    pub fn read_binary(mut r: impl Read, power_scale: f64) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if header[..4] != WAVEFORM_MAGIC {
            return Err(Error::Domain("bad waveform magic".into()));
        }
        let m = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let t = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let mut data = Vec::with_capacity(m * t);
        let mut buf = [0u8; 16];
        for _ in 0..m * t {
            r.read_exact(&mut buf)?;
            data.push(Complex64::new(
                f64::from_le_bytes(buf[..8].try_into().unwrap()),
                f64::from_le_bytes(buf[8..].try_into().unwrap()),
            ));
        }
        Ok(Self {
            samples: CMatrix::from_vec(m, t, data)?,
            power_scale,
        })
    }
}

/// Draws `num_samples` columns `z_n = Q(W t_n)` with `t_n ~ CN(0, I)`.
pub fn gen_quantized_waveform(
    w: &CMatrix,
    num_samples: usize,
    power: f64,
    rng: &mut impl Rng,
) -> Result<QuantizedWaveform> {
    if num_samples == 0 {
        return Err(Error::Domain("waveform needs at least one sample".into()));
    }
    if !(power > 0.0) {
        return Err(Error::Domain(format!("transmit power must be positive, got {power}")));
    }
    if !w.is_square() {
        return Err(Error::Dimension(format!(
            "precoder must be square, got {}x{}",
            w.rows(),
            w.cols()
        )));
    }
    let m = w.rows();
    let mut samples = CMatrix::zeros(m, num_samples);
    let mut t = vec![Complex64::new(0.0, 0.0); m];
    for n in 0..num_samples {
        for ti in t.iter_mut() {
            *ti = complex_normal(rng);
        }
        let x = w.mul_vec(&t);
        for (i, xi) in x.into_iter().enumerate() {
            samples[(i, n)] = quantize_sample(xi);
        }
    }
    Ok(QuantizedWaveform {
        samples,
        power_scale: (power / m as f64).sqrt(),
    })
}
