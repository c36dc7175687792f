//! Stationary correlation kernels evaluated on scalar distances.

use crate::error::{Error, Result};

/// Kernel family for one input's correlation factor. Both families
/// satisfy g(0, θ) = 1 and decrease strictly in |h|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Matern52,
}

impl KernelFamily {
    /// Parse the CLI spelling of a kernel name.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gauss" | "gaussian" => Ok(KernelFamily::Gaussian),
            "matern52" => Ok(KernelFamily::Matern52),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel '{other}' (expected 'gauss' or 'matern52')"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gauss",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Correlation at distance `h` with range `theta`; no validation.
    #[inline]
    pub fn eval(&self, h: f64, theta: f64) -> f64 {
        debug_assert!(theta > 0.0);
        match self {
            KernelFamily::Gaussian => {
                let r = h / theta;
                (-0.5 * r * r).exp()
            }
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * h.abs() / theta;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

/// Validated kernel evaluation: `h ≥ 0`, `theta > 0`.
pub fn kernel_eval(family: KernelFamily, h: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kernel range must be positive, got {theta}"
        )));
    }
    if !(h >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel distance must be nonnegative, got {h}"
        )));
    }
    Ok(family.eval(h, theta))
}
