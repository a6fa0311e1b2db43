//! Fourier-domain resampling to a common trace length.
//!
//! The signal is transformed, its spectrum truncated (downsampling) or
//! zero-padded (upsampling) and transformed back, scaled by `T_R / T_i`.
//! For an even retained length `N = min(T_i, T_R)` the bin at `N/2` needs a
//! rule to keep the output real:
//!
//! * downsampling: the `+N/2` and `-N/2` input bins fold into the new Nyquist
//!   bin, which for real input is `2 * Re(X[N/2])`;
//! * upsampling: the input Nyquist bin is split in half between `+N/2` and
//!   `-N/2` of the longer spectrum.
//!
//! The imaginary part of an even-length output Nyquist bin is discarded.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub fn resample(values: &[f64], target_len: usize) -> Result<Vec<f64>> {
    let nx = values.len();
    if nx < 2 {
        return Err(Error::BadLength(format!("cannot resample {nx} samples")));
    }
    if target_len < 2 {
        return Err(Error::BadLength(format!("target length {target_len} is below 2")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite value in resampled signal".into()));
    }
    let num = target_len;
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(nx).process(&mut spec);

    let n = nx.min(num);
    let half = num / 2 + 1;
    let mut y = vec![Complex::new(0.0, 0.0); half];
    let keep = (n / 2 + 1).min(half);
    y[..keep].copy_from_slice(&spec[..keep]);
    if n % 2 == 0 {
        if num < nx {
            y[n / 2] *= 2.0;
        } else if nx < num {
            y[n / 2] *= 0.5;
        }
    }

    let mut full = vec![Complex::new(0.0, 0.0); num];
    full[0] = Complex::new(y[0].re, 0.0);
    for k in 1..half {
        if 2 * k == num {
            full[k] = Complex::new(y[k].re, 0.0);
        } else {
            full[k] = y[k];
            full[num - k] = y[k].conj();
        }
    }
    planner.plan_fft_inverse(num).process(&mut full);
    // rustfft leaves the inverse unnormalized: 1/num, times num/nx.
    let scale = 1.0 / nx as f64;
    Ok(full.iter().map(|c| c.re * scale).collect())
}
