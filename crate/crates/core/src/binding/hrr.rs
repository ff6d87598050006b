//! Circular-convolution binding (holographic reduced representations).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HrrUnbind {
    /// Approximate inverse: convolve with the involution `y†ⱼ = y₋ⱼ`.
    Correlation,
    /// Divide spectra; exact when every Fourier coefficient of `y` is nonzero.
    ExactSpectral,
}

fn spectrum(x: &Vector, planner: &mut FftPlanner<f64>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn inverse(mut spec: Vec<Complex<f64>>, planner: &mut FftPlanner<f64>) -> Vector {
    let n = spec.len();
    planner.plan_fft_inverse(n).process(&mut spec);
    Vector::from_iterator(n, spec.into_iter().map(|c| c.re / n as f64))
}

/// `(x ⊛ y)_k = Σⱼ xⱼ y_{(k−j) mod n}`, computed through the FFT.
pub fn bind_hrr(x: &Vector, y: &Vector) -> Result<Vector> {
    check_dim(x.len(), y.len())?;
    if x.is_empty() {
        return Err(Error::InvalidDimensions("empty vectors".into()));
    }
    let mut planner = FftPlanner::new();
    let fx = spectrum(x, &mut planner);
    let fy = spectrum(y, &mut planner);
    let prod = fx.iter().zip(&fy).map(|(a, b)| a * b).collect();
    Ok(inverse(prod, &mut planner))
}

pub fn unbind_hrr(r: &Vector, y: &Vector, mode: HrrUnbind) -> Result<Vector> {
    check_dim(r.len(), y.len())?;
    if r.is_empty() {
        return Err(Error::InvalidDimensions("empty vectors".into()));
    }
    let mut planner = FftPlanner::new();
    let fr = spectrum(r, &mut planner);
    let fy = spectrum(y, &mut planner);
    let out: Vec<Complex<f64>> = match mode {
        // the spectrum of y† is the conjugate spectrum of y
        HrrUnbind::Correlation => fr.iter().zip(&fy).map(|(a, b)| a * b.conj()).collect(),
        HrrUnbind::ExactSpectral => {
            if let Some((index, c)) = fy.iter().enumerate().find(|(_, c)| c.norm() <= 1e-9) {
                return Err(Error::SingularSpectrum {
                    index,
                    magnitude: c.norm(),
                });
            }
            fr.iter().zip(&fy).map(|(a, b)| a / b).collect()
        }
    };
    Ok(inverse(out, &mut planner))
}
