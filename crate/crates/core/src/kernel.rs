//! Compactly supported smoothing kernels.
//!
//! Both kernels are symmetric densities on [-1, 1] that vanish at the
//! endpoints of their support and are twice continuously differentiable in
//! the interior. Multivariate weights use the product form
//! `K(x) = k(x_1) * ... * k(x_q)`, which is exactly zero as soon as any
//! coordinate leaves (-1, 1).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    /// `k(t) = 0.75 (1 - t^2)` on [-1, 1].
    Epanechnikov,
    /// `k(t) = (15/16) (1 - t^2)^2` on [-1, 1].
    Quartic,
}

impl KernelSpec {
    /// Evaluates the univariate kernel. Exactly zero for |t| >= 1.
    #[inline(always)]
    pub fn eval_1d(self, t: f64) -> f64 {
        let a = t.abs();
        if a >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t * t;
        match self {
            KernelSpec::Epanechnikov => 0.75 * s,
            KernelSpec::Quartic => 0.9375 * s * s,
        }
    }

    /// Evaluates the product kernel at a difference vector.
    ///
    /// Factors are multiplied in a canonical (sorted) order so the result
    /// is exactly invariant to coordinate permutation.
    #[inline]
    pub fn eval_product(self, dx: &[f64]) -> f64 {
        let mut factors = [0.0_f64; 16];
        let mut buf: Vec<f64>;
        let fs: &mut [f64] = if dx.len() <= 16 {
            &mut factors[..dx.len()]
        } else {
            buf = vec![0.0; dx.len()];
            &mut buf
        };
        for (f, &t) in fs.iter_mut().zip(dx) {
            let v = self.eval_1d(t);
            if v == 0.0 {
                return 0.0;
            }
            *f = v;
        }
        fs.sort_unstable_by(f64::total_cmp);
        fs.iter().product()
    }

    /// First or second derivative of the univariate kernel on [-1, 1].
    ///
    /// At t = +-1 the continuous extension from the interior is returned.
    /// `order` outside {1, 2} or |t| > 1 is an input error.
    pub fn deriv_1d(self, t: f64, order: u32) -> Result<f64> {
        if t.abs() > 1.0 {
            return Err(Error::InvalidInput(format!(
                "derivative requested at t = {t} outside [-1, 1]"
            )));
        }
        match (self, order) {
            (KernelSpec::Epanechnikov, 1) => Ok(-1.5 * t),
            (KernelSpec::Epanechnikov, 2) => Ok(-1.5),
            (KernelSpec::Quartic, 1) => Ok(-3.75 * t * (1.0 - t * t)),
            (KernelSpec::Quartic, 2) => Ok(-3.75 * (1.0 - 3.0 * t * t)),
            (_, o) => Err(Error::InvalidInput(format!(
                "derivative order {o} not supported (expected 1 or 2)"
            ))),
        }
    }

    /// Kernel value at the origin.
    pub fn at_zero(self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.75,
            KernelSpec::Quartic => 0.9375,
        }
    }

    /// Integral of the squared univariate kernel over its support.
    pub fn l2_integral_1d(self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.6,
            KernelSpec::Quartic => 5.0 / 7.0,
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            "quartic" => Ok(KernelSpec::Quartic),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel {other:?} (expected \"epanechnikov\" or \"quartic\")"
            ))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Epanechnikov => write!(f, "epanechnikov"),
            KernelSpec::Quartic => write!(f, "quartic"),
        }
    }
}
