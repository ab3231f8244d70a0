//! Bloch components, generic expectation values and series comparison.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::exact::DensityTrajectory;
use crate::jump_mc::EnsembleEstimate;
use crate::linalg::CMatrix;
use crate::scalar::Scalar;

/// `tr(ρ O)`.
pub fn expectation<T: Scalar>(rho: &CMatrix<T>, op: &CMatrix<T>) -> Result<Complex<T>> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: op.dim(),
        });
    }
    Ok((rho * op).trace())
}

/// `(tr ρσ_x, tr ρσ_y, tr ρσ_z)` of a qubit state.
pub fn bloch<T: Scalar>(rho: &CMatrix<T>) -> Result<[T; 3]> {
    if rho.dim() != 2 {
        return Err(Error::DimensionUnsupported {
            required: 2,
            found: rho.dim(),
        });
    }
    let r01 = rho[(0, 1)];
    let r10 = rho[(1, 0)];
    Ok([
        r01.re + r10.re,
        r10.im - r01.im,
        rho[(0, 0)].re - rho[(1, 1)].re,
    ])
}

/// `ρ = (1 + x σ_x + y σ_y + z σ_z) / 2`.
pub fn density_from_bloch<T: Scalar>(r: [T; 3]) -> CMatrix<T> {
    let half = T::lit(0.5);
    let [x, y, z] = r;
    CMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 0) => Complex::new(half * (T::one() + z), T::zero()),
        (1, 1) => Complex::new(half * (T::one() - z), T::zero()),
        (0, 1) => Complex::new(half * x, -half * y),
        _ => Complex::new(half * x, half * y),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochSeries<T> {
    pub times: Vec<T>,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
    pub stderr_x: Vec<T>,
    pub stderr_y: Vec<T>,
    pub stderr_z: Vec<T>,
}

impl<T: Scalar> BlochSeries<T> {
    /// Exact series; all standard errors are zero.
    pub fn from_trajectory(traj: &DensityTrajectory<T>) -> Result<Self> {
        let mut out = Self::with_capacity(traj.len());
        for (&t, rho) in traj.times.iter().zip(&traj.states) {
            out.push(t, bloch(rho)?, [T::zero(); 3]);
        }
        Ok(out)
    }

    /// Stochastic series with standard errors from the entry-wise ones:
    /// `x = 2 Re ρ01`, `y = -2 Im ρ01`, `z = 2 ρ00 - 1`.
    pub fn from_estimate(est: &EnsembleEstimate<T>) -> Result<Self> {
        let two = T::lit(2.0);
        let mut out = Self::with_capacity(est.mean.len());
        for ((&t, rho), se) in est.mean.times.iter().zip(&est.mean.states).zip(&est.stderr) {
            let r = bloch(rho)?;
            let s01 = se[(0, 1)];
            out.push(t, r, [two * s01.re, two * s01.im, two * se[(0, 0)].re]);
        }
        Ok(out)
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            stderr_x: Vec::with_capacity(n),
            stderr_y: Vec::with_capacity(n),
            stderr_z: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: T, r: [T; 3], se: [T; 3]) {
        self.times.push(t);
        self.x.push(r[0]);
        self.y.push(r[1]);
        self.z.push(r[2]);
        self.stderr_x.push(se[0]);
        self.stderr_y.push(se[1]);
        self.stderr_z.push(se[2]);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn component(&self, axis: usize) -> (&[T], &[T]) {
        match axis {
            0 => (&self.x, &self.stderr_x),
            1 => (&self.y, &self.stderr_y),
            _ => (&self.z, &self.stderr_z),
        }
    }
}

/// A point passes when `|a - b| <= max(sigmas · σ, floor)` with `σ` the
/// combined standard error `sqrt(σ_a² + σ_b²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub sigmas: f64,
    pub floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            sigmas: 5.0,
            floor: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub tolerance: Tolerance,
    /// Largest `|a - b|` per component.
    pub max_deviation: [f64; 3],
    /// Largest z-score per component; infinite where `σ = 0` and `a ≠ b`.
    pub max_z: [f64; 3],
    /// `|a - b| / σ` per grid point and component.
    pub z_scores: Vec<[f64; 3]>,
    /// Grid points that failed, as `(index, component)`.
    pub failures: Vec<(usize, usize)>,
    pub pass: bool,
}

/// Compares two series on the same grid.
pub fn compare<T: Scalar>(
    a: &BlochSeries<T>,
    b: &BlochSeries<T>,
    tol: Tolerance,
) -> Result<ComparisonReport> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch);
    }
    let grid_tol = T::lit(1e-9);
    if a.times
        .iter()
        .zip(&b.times)
        .any(|(s, t)| (*s - *t).abs() > grid_tol)
    {
        return Err(Error::GridMismatch);
    }
    let mut max_deviation = [0.0f64; 3];
    let mut max_z = [0.0f64; 3];
    let mut z_scores = Vec::with_capacity(a.len());
    let mut failures = Vec::new();
    for k in 0..a.len() {
        let mut zk = [0.0; 3];
        for axis in 0..3 {
            let (va, sa) = a.component(axis);
            let (vb, sb) = b.component(axis);
            let dev = (va[k] - vb[k]).abs().to_f64_lossy();
            let sigma = (sa[k] * sa[k] + sb[k] * sb[k]).sqrt().to_f64_lossy();
            let z = if sigma > 0.0 {
                dev / sigma
            } else if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            zk[axis] = z;
            max_deviation[axis] = max_deviation[axis].max(dev);
            max_z[axis] = max_z[axis].max(z);
            if !(dev <= (tol.sigmas * sigma).max(tol.floor)) {
                failures.push((k, axis));
            }
        }
        z_scores.push(zk);
    }
    Ok(ComparisonReport {
        tolerance: tol,
        max_deviation,
        max_z,
        z_scores,
        pass: failures.is_empty(),
        failures,
    })
}
