//! Natural units (ħ = c = mₑ = 1), the periodic position lattice and its
//! conjugate momentum lattice.
//!
//! Lengths are in reduced Compton wavelengths λ_c, times in λ_c/c, energies in
//! mₑc² and momenta in mₑc.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid with `points` sites on `[-L/2, L/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    length: f64,
    points: usize,
    dx: f64,
    dp: f64,
    x: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridSpec {
    length: f64,
    points: usize,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        Grid::new(s.length, s.points)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec { length: g.length, points: g.points }
    }
}

impl Grid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::BadBoxLength(length));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::BadGridSize(points));
        }
        let dx = length / points as f64;
        let dp = 2.0 * PI / length;
        let x = (0..points).map(|j| -0.5 * length + j as f64 * dx).collect();
        let p = (0..points).map(|k| fourier_index(k, points) as f64 * dp).collect();
        Ok(Grid { length, points, dx, dp, x, p })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dp(&self) -> f64 {
        self.dp
    }

    /// Positions `x_j = -L/2 + j Δx`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Momenta in FFT ordering: `0, Δp, …, (N/2-1)Δp, -N/2 Δp, …, -Δp`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Mode indices with `|p| <= p_max`, in FFT order.
    pub fn modes_within(&self, p_max: f64) -> Vec<usize> {
        (0..self.points).filter(|&k| self.p[k].abs() <= p_max + 1e-12).collect()
    }

    /// Index of the mode closest to momentum `p`.
    pub fn nearest_mode(&self, p: f64) -> usize {
        let n = self.points as i64;
        let k = (p / self.dp).round() as i64;
        k.rem_euclid(n) as usize
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L={} N={} dx={:.6} dp={:.6}", self.length, self.points, self.dx, self.dp)
    }
}

/// Signed frequency index of FFT bin `k`.
fn fourier_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Free relativistic kinetic energy `+sqrt(1 + p²)`.
#[inline]
pub fn free_energy(p: f64) -> f64 {
    1.0f64.hypot(p)
}

/// Unitary discrete Fourier transform on a grid.
///
/// Plane waves are referenced to the left box edge, so the forward transform
/// of `e^{i p_k (x_j - x_0)}/sqrt(N)` is the unit vector at `k`.
#[derive(Clone)]
pub struct Fourier {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Fourier {
    pub fn new(points: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fourier {
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
            scale: 1.0 / (points as f64).sqrt(),
        }
    }

    pub fn for_grid(grid: &Grid) -> Self {
        Self::new(grid.len())
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Unnormalized forward transform.
    #[inline]
    pub fn forward_raw(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    /// Unnormalized inverse transform.
    #[inline]
    pub fn inverse_raw(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        self.forward_raw(buf, &mut scratch);
        buf.iter_mut().for_each(|c| *c *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        self.inverse_raw(buf, &mut scratch);
        buf.iter_mut().for_each(|c| *c *= self.scale);
    }
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("len", &self.forward.len()).finish()
    }
}
