//! Bilinear kernels K(x, y) = (x − c)ᵀ W (y − c) + 1.
//!
//! | kind | c | W |
//! |------|---|---|
//! | K1 `SimpleBilinear` | 0 | I |
//! | K2 `AffineInvariant` | μ | I |
//! | K3 `RescaledAffineInvariant` | μ | Σ⁻¹ |
//! | K4 `Regularized(ν)` | μ | ((1−ν)Σ + νI)⁻¹ |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Mat, SpdMatrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelKind {
    SimpleBilinear,
    AffineInvariant,
    RescaledAffineInvariant,
    Regularized(f64),
}

impl KernelKind {
    pub fn regularized(nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::InvalidParameter(format!("regularization nu={nu} outside [0,1]")));
        }
        Ok(KernelKind::Regularized(nu))
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelKind::Regularized(nu) = *self {
            KernelKind::regularized(nu)?;
        }
        Ok(())
    }

    /// Index 1..=4 matching K1..K4.
    pub fn index(&self) -> usize {
        match self {
            KernelKind::SimpleBilinear => 1,
            KernelKind::AffineInvariant => 2,
            KernelKind::RescaledAffineInvariant => 3,
            KernelKind::Regularized(_) => 4,
        }
    }

    pub fn is_centered(&self) -> bool {
        !matches!(self, KernelKind::SimpleBilinear)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::SimpleBilinear => write!(f, "k1"),
            KernelKind::AffineInvariant => write!(f, "k2"),
            KernelKind::RescaledAffineInvariant => write!(f, "k3"),
            KernelKind::Regularized(nu) => write!(f, "k4:nu={nu}"),
        }
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    /// Accepts `k1`, `k2`, `k3`, `k4:nu=<f>` (also `k4:ν=<f>` and `k4:<f>`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "k1" => return Ok(KernelKind::SimpleBilinear),
            "k2" => return Ok(KernelKind::AffineInvariant),
            "k3" => return Ok(KernelKind::RescaledAffineInvariant),
            _ => {}
        }
        let rest = s
            .strip_prefix("k4:")
            .ok_or_else(|| Error::Parse(format!("unknown kernel '{s}'")))?;
        let value = rest
            .strip_prefix("nu=")
            .or_else(|| rest.strip_prefix("ν="))
            .unwrap_or(rest);
        let nu: f64 = value
            .parse()
            .map_err(|_| Error::Parse(format!("bad regularization in '{s}'")))?;
        KernelKind::regularized(nu)
    }
}

impl TryFrom<String> for KernelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelKind> for String {
    fn from(k: KernelKind) -> String {
        k.to_string()
    }
}

/// A kernel bound to the Gaussian state it depends on. W is cached.
#[derive(Clone, Debug)]
pub struct KernelState {
    kind: KernelKind,
    center: Vector,
    shape: Option<SpdMatrix>,
    weight: Mat,
}

impl KernelState {
    /// Binds `kind` to a mean and covariance. The covariance only has to be
    /// positive definite when the kernel needs its inverse (K3, and K4 with ν = 0).
    pub fn new(kind: KernelKind, mean: &Vector, cov: &Mat) -> Result<Self> {
        kind.validate()?;
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: cov.nrows() });
        }
        let (center, shape) = match kind {
            KernelKind::SimpleBilinear => (Vector::zeros(d), None),
            KernelKind::AffineInvariant => (mean.clone(), None),
            KernelKind::RescaledAffineInvariant => (mean.clone(), Some(SpdMatrix::new(cov.clone())?)),
            KernelKind::Regularized(nu) => {
                let a = cov * (1.0 - nu) + Mat::identity(d, d) * nu;
                (mean.clone(), Some(SpdMatrix::new(a)?))
            }
        };
        let weight = match &shape {
            Some(s) => s.inverse_mat(),
            None => Mat::identity(d, d),
        };
        Ok(KernelState { kind, center, shape, weight })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn shape(&self) -> Option<&SpdMatrix> {
        self.shape.as_ref()
    }

    /// The bilinear weight W.
    pub fn weight(&self) -> &Mat {
        &self.weight
    }

    fn check(&self, x: &Vector, y: &Vector) -> Result<()> {
        let d = self.dim();
        for v in [x, y] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check(x, y)?;
        let xc = x - &self.center;
        let yc = y - &self.center;
        // symmetrized so that K(x, y) == K(y, x) bit for bit
        Ok(0.5 * (xc.dot(&(&self.weight * &yc)) + yc.dot(&(&self.weight * &xc))) + 1.0)
    }

    /// ∇_y K(x, y) = W (x − c).
    pub fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check(x, y)?;
        Ok(&self.weight * (x - &self.center))
    }

    /// ∇_x K(x, y) = W (y − c).
    pub fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.grad_y(y, x)
    }
}

pub fn kernel_eval(state: &KernelState, x: &Vector, y: &Vector) -> Result<f64> {
    state.eval(x, y)
}

pub fn kernel_grad_y(state: &KernelState, x: &Vector, y: &Vector) -> Result<Vector> {
    state.grad_y(x, y)
}
