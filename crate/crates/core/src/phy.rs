//! Signal-level math: gateway SINR and the ambient backscatter chain.
//!
//! A tag reflects (`B = 1`) or absorbs (`B = 0`) an ambient waveform for `N`
//! consecutive samples per bit. The gateway averages received power over
//! each block and compares it with a threshold:
//!
//! ```text
//! y[n] = x[n] + zeta * B[n / N] * x[n] + l[n]
//! mean |y|^2 over a block  ~=  |1 + zeta*B|^2 * P + noise power
//! ```

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::exec::{self, Execution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrParams {
    /// Transmitter power received at the gateway (W).
    pub p_r: f64,
    /// Jamming transmit power (W).
    pub p_j: f64,
    /// Attenuation applied to the jamming signal, in `[0, 1]`.
    pub phi: f64,
    /// Noise variance (W).
    pub rho2: f64,
}

pub fn sinr(params: &SinrParams) -> Result<f64> {
    let SinrParams { p_r, p_j, phi, rho2 } = *params;
    if !(rho2 > 0.0) {
        return Err(Error::InvalidArgument(format!("rho2 must be > 0, got {rho2}")));
    }
    if !(p_r >= 0.0) || !(p_j >= 0.0) {
        return Err(Error::InvalidArgument("powers must be non-negative".into()));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!("phi must lie in [0, 1], got {phi}")));
    }
    Ok(p_r / (phi * p_j + rho2))
}

/// One backscattered frame: the ambient samples seen at the gateway and the
/// tag bits riding on them.
#[derive(Debug, Clone)]
pub struct BackscatterFrame {
    pub ambient: Vec<Complex64>,
    pub bits: Vec<u8>,
    pub spreading: usize,
    pub zeta: Complex64,
    pub noise_sigma: f64,
}

impl BackscatterFrame {
    pub fn validate(&self) -> Result<()> {
        if self.spreading == 0 {
            return Err(Error::InvalidArgument("spreading must be >= 1".into()));
        }
        let expected = self.bits.len() * self.spreading;
        if self.ambient.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: self.ambient.len(),
            });
        }
        if self.bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("bits must be 0 or 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draws a circular-Gaussian sample with `E|z|^2 = sigma^2`.
pub fn complex_gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Complex64 {
    let s = sigma / std::f64::consts::SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Unit-power synthetic ambient source.
pub fn synthetic_ambient<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<Complex64> {
    (0..len).map(|_| complex_gaussian(1.0, rng)).collect()
}

pub fn modulate<R: Rng + ?Sized>(frame: &BackscatterFrame, rng: &mut R) -> Result<Vec<Complex64>> {
    frame.validate()?;
    let n = frame.spreading;
    let out = frame
        .ambient
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let b = f64::from(frame.bits[i / n]);
            let mut y = x + frame.zeta * b * x;
            if frame.noise_sigma > 0.0 {
                y += complex_gaussian(frame.noise_sigma, rng);
            }
            y
        })
        .collect();
    Ok(out)
}

pub fn average_bit_power(samples: &[Complex64], spreading: usize) -> Result<Vec<f64>> {
    if spreading == 0 {
        return Err(Error::InvalidArgument("spreading must be >= 1".into()));
    }
    if samples.len() % spreading != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} samples is not a multiple of spreading {spreading}",
            samples.len()
        )));
    }
    Ok(samples
        .chunks_exact(spreading)
        .map(|block| block.iter().map(|y| y.norm_sqr()).sum::<f64>() / spreading as f64)
        .collect())
}

/// Midpoint between the expected non-reflecting and reflecting block powers.
pub fn midpoint_threshold(zeta: Complex64, ambient_power: f64, noise_power: f64) -> f64 {
    let reflect = (Complex64::new(1.0, 0.0) + zeta).norm_sqr();
    (1.0 + reflect) * ambient_power / 2.0 + noise_power
}

pub fn threshold_decode(bit_powers: &[f64], threshold: f64) -> Result<Vec<u8>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be > 0, got {threshold}")));
    }
    Ok(bit_powers.iter().map(|&p| u8::from(p > threshold)).collect())
}

pub fn bit_errors(sent: &[u8], received: &[u8]) -> usize {
    sent.iter().zip(received).filter(|(a, b)| a != b).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub spreading: usize,
    pub bits: usize,
    pub errors: usize,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Binomial standard error of the BER estimate.
    pub fn std_error(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        (p * (1.0 - p) / self.bits as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BerSweep {
    pub zeta: Complex64,
    pub noise_sigma: f64,
    pub bits: usize,
    pub seed: u64,
}

/// Runs the full modulate/average/decode chain over random bits and a
/// synthetic ambient source for each spreading factor. Every point owns an
/// independent random stream derived from `seed` and the spreading factor.
pub fn ber_sweep(cfg: &BerSweep, spreads: &[usize], mode: Execution) -> Result<Vec<BerPoint>> {
    let threshold = midpoint_threshold(cfg.zeta, 1.0, cfg.noise_sigma * cfg.noise_sigma);
    let results = exec::map(mode, spreads.to_vec(), |n| -> Result<BerPoint> {
        let mut rng = crate::rng_from_seed(cfg.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let bits: Vec<u8> = (0..cfg.bits).map(|_| rng.random_range(0..=1u8)).collect();
        let frame = BackscatterFrame {
            ambient: synthetic_ambient(cfg.bits * n, &mut rng),
            bits,
            spreading: n,
            zeta: cfg.zeta,
            noise_sigma: cfg.noise_sigma,
        };
        let rx = modulate(&frame, &mut rng)?;
        let decoded = threshold_decode(&average_bit_power(&rx, n)?, threshold)?;
        Ok(BerPoint {
            spreading: n,
            bits: cfg.bits,
            errors: bit_errors(&frame.bits, &decoded),
        })
    });
    results.into_iter().collect()
}
