//! Uniform periodic coordinate grid and complex fields sampled on it.
//!
//! The grid follows the periodic convention: `x_max` is not a sample, so
//! `dx = (x_max - x_min) / n` and the conjugate momenta come in the usual
//! FFT wrap-around order.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return Err(Error::InvalidGrid(format!("degenerate range [{x_min}, {x_max})")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count {n} must be a power of two >= 8"
            )));
        }
        Ok(Grid {
            x_min,
            x_max,
            n,
            dx: (x_max - x_min) / n as f64,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Momentum of FFT bin `j` in wrap-around order.
    pub fn k(&self, j: usize) -> f64 {
        let l = self.n as f64 * self.dx;
        if j < self.n / 2 {
            2.0 * PI * j as f64 / l
        } else {
            2.0 * PI * (j as f64 - self.n as f64) / l
        }
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.k(j)).collect()
    }

    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }

    /// Index of the grid point closest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx).round();
        j.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}) bohr x {}", self.x_min, self.x_max, self.n)
    }
}

/// Complex samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("field"));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Field::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        Field {
            grid,
            values: grid.points().into_iter().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&mut self, s: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// L2 distance `||self - other||`.
    pub fn distance(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.dx).sqrt())
    }
}

/// `sum_j conj(a_j) b_j dx`.
pub fn inner_product(a: &Field, b: &Field) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(dot(&a.values, &b.values) * a.grid.dx)
}

/// Unweighted `sum_j conj(a_j) b_j`.
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `sum_j a_j b_j` with a real left operand.
pub(crate) fn dot_real(a: &[f64], b: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += y * *x;
    }
    acc
}

/// |<a|b>| / (||a|| ||b||).
pub fn fidelity(a: &Field, b: &Field) -> Result<f64> {
    let ab = inner_product(a, b)?.norm();
    let den = a.norm() * b.norm();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(ab / den)
}

/// Forward / inverse FFT pair for one grid size. The inverse carries the
/// `1/n` factor so that `inverse(forward(f)) == f`.
#[derive(Clone)]
pub struct Fourier {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).finish()
    }
}

impl Fourier {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fourier {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_with_scratch(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    pub fn inverse_with_scratch(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }
}

/// Second derivative computed spectrally: `F^-1 (-k^2) F f`.
pub fn spectral_second_derivative(f: &Field) -> Result<Field> {
    if f.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("field"));
    }
    let grid = f.grid;
    let fourier = Fourier::new(grid.len());
    let mut buf = f.values.clone();
    fourier.forward(&mut buf);
    for (j, v) in buf.iter_mut().enumerate() {
        let k = grid.k(j);
        *v *= -k * k;
    }
    fourier.inverse(&mut buf);
    Ok(Field { grid, values: buf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian(grid: Grid, x0: f64, sigma: f64) -> Field {
        let norm = (2.0 * PI * sigma * sigma).powf(-0.25);
        Field::from_fn(grid, |x| {
            c(norm * (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0)
        })
    }

    #[test]
    fn standard_grid_spacing() {
        let g = Grid::new(2.0, 12.0, 256).unwrap();
        assert_eq!(g.dx(), 0.0390625);
        assert_eq!(g.x(0), 2.0);
        assert_eq!(g.x(255), 11.9609375);
        assert_abs_diff_eq!(g.k_max(), 80.42477, epsilon = 1e-4);
        let kmax = g.momenta().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        assert_abs_diff_eq!(kmax, g.k_max(), epsilon = 1e-12);
    }

    #[test]
    fn wraparound_momenta() {
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        let expect = [0.0, 2.0, 4.0, 6.0, -8.0, -6.0, -4.0, -2.0];
        for (k, e) in g.momenta().iter().zip(expect) {
            assert_abs_diff_eq!(*k, e * PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(0.0, 1.0, 100).is_err());
        assert!(Grid::new(0.0, 1.0, 4).is_err());
        assert!(Grid::new(1.0, 1.0, 16).is_err());
        assert!(Grid::new(2.0, 1.0, 16).is_err());
    }

    #[test]
    fn field_rejects_wrong_length_and_nan() {
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        assert!(Field::new(g, vec![c(0.0, 0.0); 7]).is_err());
        let mut v = vec![c(0.0, 0.0); 8];
        v[3] = c(f64::NAN, 0.0);
        assert!(Field::new(g, v).is_err());
    }

    #[test]
    fn normalized_gaussian_has_unit_norm() {
        let g = Grid::new(2.0, 12.0, 256).unwrap();
        let f = gaussian(g, 5.0, 0.3);
        assert_abs_diff_eq!(inner_product(&f, &f).unwrap().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_overlap_matches_closed_form() {
        // <g(x0)|g(x0 + d)> = exp(-d^2 / (8 sigma^2)) for equal-width normalized Gaussians.
        let g = Grid::new(2.0, 12.0, 256).unwrap();
        let sigma = 0.3;
        let d = 3.0 * sigma;
        let a = gaussian(g, 5.0, sigma);
        let b = gaussian(g, 5.0 + d, sigma);
        let got = inner_product(&a, &b).unwrap();
        let expect = (-d * d / (8.0 * sigma * sigma)).exp();
        assert_abs_diff_eq!(got.re, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let a = Field::zeros(Grid::new(0.0, 1.0, 8).unwrap());
        let b = Field::zeros(Grid::new(0.0, 2.0, 8).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn laplacian_of_plane_wave() {
        let g = Grid::new(2.0, 12.0, 256).unwrap();
        let k = g.k(7);
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, k * x));
        let d2 = spectral_second_derivative(&f).unwrap();
        for (a, b) in d2.values().iter().zip(f.values()) {
            assert!((a - b * (-k * k)).norm() < 1e-10 * k * k);
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid::new(0.0, 3.0, 64).unwrap();
        let f = Field::from_fn(g, |_| c(2.5, -1.0));
        let d2 = spectral_second_derivative(&f).unwrap();
        assert!(d2.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn laplacian_of_sine_agrees_with_three_point_stencil() {
        let g = Grid::new(0.0, 4.0, 128).unwrap();
        let l = 4.0;
        let f = Field::from_fn(g, |x| c((2.0 * PI * x / l).sin(), 0.0));
        let d2 = spectral_second_derivative(&f).unwrap();
        let v = f.values();
        let h = g.dx();
        let n = g.len();
        let mut max_dev = 0.0f64;
        for j in 0..n {
            let fd = (v[(j + n - 1) % n] - 2.0 * v[j] + v[(j + 1) % n]) / (h * h);
            max_dev = max_dev.max((fd - d2.values()[j]).norm());
        }
        // three-point error is (k^4 h^2 / 12) |f|
        let k = 2.0 * PI / l;
        assert!(max_dev < k.powi(4) * h * h / 12.0 * 1.01);
        for (a, b) in d2.values().iter().zip(v) {
            assert!((a + b * k * k).norm() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn transform_round_trip(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32)) {
            let fourier = Fourier::new(32);
            let orig: Vec<Complex64> = vals.iter().map(|&(a, b)| c(a, b)).collect();
            let mut buf = orig.clone();
            fourier.inverse(&mut buf);
            fourier.forward(&mut buf);
            for (a, b) in buf.iter().zip(&orig) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            // Parseval through forward-then-inverse
            let mut buf = orig.clone();
            fourier.forward(&mut buf);
            let spec: f64 = buf.iter().map(|v| v.norm_sqr()).sum::<f64>() / 32.0;
            let direct: f64 = orig.iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((spec - direct).abs() <= 1e-12 * direct.max(1e-300));
            fourier.inverse(&mut buf);
            let back: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((back - direct).abs() <= 1e-12 * direct.max(1e-300));
        }

        #[test]
        fn laplacian_is_negative_semidefinite(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64)) {
            let g = Grid::new(0.0, 5.0, 64).unwrap();
            let f = Field::new(g, vals.iter().map(|&(a, b)| c(a, b)).collect()).unwrap();
            let d2 = spectral_second_derivative(&f).unwrap();
            let q = inner_product(&f, &d2).unwrap();
            prop_assert!(q.im.abs() < 1e-10 * (1.0 + q.re.abs()));
            prop_assert!(q.re <= 1e-10);
        }

        #[test]
        fn inner_product_conjugate_symmetric(
            a in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
            b in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
        ) {
            let g = Grid::new(0.0, 1.0, 16).unwrap();
            let fa = Field::new(g, a.iter().map(|&(x, y)| c(x, y)).collect()).unwrap();
            let fb = Field::new(g, b.iter().map(|&(x, y)| c(x, y)).collect()).unwrap();
            let ab = inner_product(&fa, &fb).unwrap();
            let ba = inner_product(&fb, &fa).unwrap();
            prop_assert!((ab - ba.conj()).norm() < 1e-14);
        }
    }
}
