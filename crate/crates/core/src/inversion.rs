//! Recovery of the cross-correlations from a signal cube: windowed Fourier
//! transform over tau32, per-peak inversion of the window response, removal
//! of the pulse prefactor and a branch-tracked square root.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::synth::{DelayAxis, PulseConfig, SignalCube};
use crate::units::fs_to_au;
use crate::{EigenBasis, Error, Result};

/// Singular values below this fraction of the largest are discarded.
pub const SVD_CUTOFF: f64 = 1e-10;
/// Condition numbers above this mark a peak inversion as regularized.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Relative amplitude below which a branch step is not trusted.
pub const BRANCH_THRESHOLD: f64 = 1e-3;

/// Rectangular window realized by a Riemann sum over the tau32 samples.
///
/// Sample `j` sits at the centre of the cell `[start + j step, start + (j+1) step]`,
/// so the window opens half a step before the first delay and has half-width
/// `len * step / 2`. All values in atomic units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub half_width: f64,
    pub step: f64,
    pub len: usize,
}

impl Window {
    pub fn from_axis(axis: &DelayAxis) -> Self {
        let step = fs_to_au(axis.step);
        Window {
            start: fs_to_au(axis.start) - 0.5 * step,
            half_width: 0.5 * step * axis.len as f64,
            step,
            len: axis.len,
        }
    }

    pub fn center(&self) -> f64 {
        self.start + self.half_width
    }

    pub fn sample(&self, j: usize) -> f64 {
        self.start + (j as f64 + 0.5) * self.step
    }
}

/// `P~(t, omega)` for one set of frequencies, stored t-major.
#[derive(Clone, Debug)]
pub struct SpectralSlice {
    pub t_axis: DelayAxis,
    pub omegas: Vec<f64>,
    pub values: Vec<Complex64>,
    pub window: Window,
}

impl SpectralSlice {
    pub fn row(&self, i: usize) -> &[Complex64] {
        let m = self.omegas.len();
        &self.values[i * m..(i + 1) * m]
    }
}

/// `sin(x) / x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `P~(t, omega) = sum_j P(t, tau_j) exp(i omega tau_j) dtau`.
pub fn windowed_ft(cube: &SignalCube, omegas: &[f64]) -> Result<SpectralSlice> {
    if cube.values.is_empty() {
        return Err(Error::InvalidArgument("empty signal lattice".into()));
    }
    if omegas.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("frequency samples"));
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("frequency samples must increase".into()));
    }
    let window = Window::from_axis(&cube.lattice.tau32);
    let m = window.len;
    let k = omegas.len();
    // table[j][w] = exp(i w tau_j) dtau
    let mut table = Vec::with_capacity(m * k);
    for j in 0..m {
        let tau = window.sample(j);
        table.extend(omegas.iter().map(|w| Complex64::from_polar(window.step, w * tau)));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); cube.lattice.t.len * k];
    values.par_chunks_mut(k.max(1)).enumerate().for_each(|(i, out)| {
        for (p, trow) in cube.row(i).iter().zip(table.chunks_exact(k)) {
            for (o, e) in out.iter_mut().zip(trow) {
                *o += p * e;
            }
        }
    });
    Ok(SpectralSlice {
        t_axis: cube.lattice.t,
        omegas: omegas.to_vec(),
        values,
        window,
    })
}

/// Continuous rectangular-window response of level `g` at `omega`:
/// `2 T eps~(t) exp(i (omega - w~_g)(tau_start + T)) sinc((omega - w~_g) T)`.
pub fn sinc_kernel(
    omega: f64,
    g: usize,
    basis: &EigenBasis,
    window: &Window,
    pulses: &PulseConfig,
    t_fs: f64,
) -> Complex64 {
    let d = omega - (basis.energy(g) - basis.omega0());
    let t = window.half_width;
    pulses.prefactor(t_fs) * Complex64::from_polar(2.0 * t * sinc(d * t), d * window.center())
}

/// Exact response of the discrete transform to `exp(-i w~ tau)` at detuning
/// `delta = omega - w~`, without the pulse prefactor. Equals the continuous
/// kernel times `x / sin x` with `x = delta dtau / 2`.
pub fn discrete_kernel(delta: f64, window: &Window) -> Complex64 {
    let x = 0.5 * delta * window.step;
    let ratio = if x.sin().abs() < 1e-14 {
        window.len as f64
    } else {
        (window.len as f64 * x).sin() / x.sin()
    };
    Complex64::from_polar(window.step * ratio, delta * window.center())
}

/// `count` uniform frequencies spanning `w~_g +- min adjacent gap / 2`.
pub fn peak_layout(shifted: &[f64], g: usize, count: usize) -> Result<Vec<f64>> {
    if g >= count || count > shifted.len() {
        return Err(Error::InvalidArgument(format!("peak {g} outside {count} levels")));
    }
    if count == 1 {
        return Ok(vec![shifted[0]]);
    }
    let mut gap = f64::INFINITY;
    if g > 0 {
        gap = gap.min(shifted[g] - shifted[g - 1]);
    }
    if g + 1 < count {
        gap = gap.min(shifted[g + 1] - shifted[g]);
    }
    if !(gap > 0.0) {
        return Err(Error::InvalidArgument("levels must be strictly increasing".into()));
    }
    let h = 0.5 * gap;
    let n = count - 1;
    Ok((0..count)
        .map(|i| shifted[g] - h + 2.0 * h * i as f64 / n as f64)
        .collect())
}

/// `S[w][g] = discrete_kernel(omega_w - w~_g)`.
pub fn response_matrix(omegas: &[f64], shifted: &[f64], window: &Window) -> DMatrix<Complex64> {
    DMatrix::from_fn(omegas.len(), shifted.len(), |i, g| {
        discrete_kernel(omegas[i] - shifted[g], window)
    })
}

#[derive(Clone, Debug)]
pub struct Solve {
    pub solution: DMatrix<Complex64>,
    pub condition: f64,
    pub rank: usize,
}

/// Solve `S X = B` by truncated SVD after scaling the columns of `S` to unit norm.
pub fn solve_regularized(s: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<Solve> {
    if s.nrows() != b.nrows() {
        return Err(Error::LengthMismatch {
            expected: s.nrows(),
            got: b.nrows(),
        });
    }
    let norms: Vec<f64> = s.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidArgument("response matrix has a null column".into()));
    }
    let mut scaled = s.clone();
    for (mut col, n) in scaled.column_iter_mut().zip(&norms) {
        col /= Complex64::new(*n, 0.0);
    }
    let raw = s.clone().singular_values();
    let condition = raw.max() / raw.min();
    let svd = scaled.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let uhb = u.adjoint() * b;
    let mut solution = DMatrix::zeros(s.ncols(), b.ncols());
    let mut rank = 0;
    for k in 0..sigma.len() {
        if sigma[k] < SVD_CUTOFF * smax {
            continue;
        }
        rank += 1;
        let coeff = uhb.row(k) / Complex64::new(sigma[k], 0.0);
        solution += vt.row(k).adjoint() * coeff;
    }
    for (mut row, n) in solution.row_iter_mut().zip(&norms) {
        row /= Complex64::new(*n, 0.0);
    }
    Ok(Solve {
        solution,
        condition,
        rank,
    })
}

/// Peak component `eps~(t) c_g(t)^2` isolated from one spectral slice.
#[derive(Clone, Debug)]
pub struct PeakInversion {
    pub g: usize,
    pub values: Vec<Complex64>,
    pub condition: f64,
    pub rank: usize,
    pub regularized: bool,
}

/// Invert the response around peak `g` using the first `slice.omegas.len()`
/// levels of `basis`.
pub fn invert_peak(slice: &SpectralSlice, basis: &EigenBasis, g: usize) -> Result<PeakInversion> {
    let count = slice.omegas.len();
    if count > basis.len() || g >= count {
        return Err(Error::InvalidArgument(format!(
            "peak {g} with {count} frequency samples needs {count} levels (have {})",
            basis.len()
        )));
    }
    let shifted = &basis.shifted()[..count];
    let s = response_matrix(&slice.omegas, shifted, &slice.window);
    let nt = slice.t_axis.len;
    let b = DMatrix::from_fn(count, nt, |w, i| slice.values[i * count + w]);
    let solve = solve_regularized(&s, &b)?;
    Ok(PeakInversion {
        g,
        values: solve.solution.row(g).iter().copied().collect(),
        condition: solve.condition,
        rank: solve.rank,
        regularized: solve.rank < count || solve.condition > CONDITION_LIMIT,
    })
}

/// Divide `eps~(t)` out of a diagonal sequence.
pub fn strip_prefactor(values: &[Complex64], t_axis: &DelayAxis, pulses: &PulseConfig) -> Result<Vec<Complex64>> {
    if values.len() != t_axis.len {
        return Err(Error::LengthMismatch {
            expected: t_axis.len,
            got: values.len(),
        });
    }
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, v)| v / pulses.prefactor(t_axis.value(i)))
        .collect())
}

#[derive(Clone, Debug)]
pub struct BranchRoot {
    pub values: Vec<Complex64>,
    pub confident: Vec<bool>,
}

/// Continuous square root of a sampled sequence. Each root is chosen closest
/// to the quadratic extrapolation of the three previous roots (linear with two).
pub fn sqrt_branch(q: &[Complex64]) -> BranchRoot {
    let peak = q.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = (BRANCH_THRESHOLD * peak).powi(2);
    let mut r: Vec<Complex64> = Vec::with_capacity(q.len());
    for (i, v) in q.iter().enumerate() {
        let mut s = v.sqrt();
        let pred = match i {
            0 => None,
            1 => Some(r[0]),
            2 => Some(2.0 * r[1] - r[0]),
            _ => Some(3.0 * r[i - 1] - 3.0 * r[i - 2] + r[i - 3]),
        };
        match pred {
            None => {
                if s.re < 0.0 {
                    s = -s;
                }
            }
            Some(p) => {
                if (-s - p).norm() < (s - p).norm() {
                    s = -s;
                }
            }
        }
        r.push(s);
    }
    BranchRoot {
        values: r,
        confident: q.iter().map(|v| v.norm() >= floor && peak > 0.0).collect(),
    }
}

/// Complex per-level sequences on the diagonal time axis, stored t-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSet {
    pub t_axis: DelayAxis,
    count: usize,
    values: Vec<Complex64>,
    confident: Vec<bool>,
    pub max_edge_ratio: f64,
}

impl CorrelationSet {
    pub fn new(t_axis: DelayAxis, count: usize, values: Vec<Complex64>) -> Result<Self> {
        let n = t_axis.len * count;
        CorrelationSet::with_confidence(t_axis, count, values, vec![true; n])
    }

    pub fn with_confidence(
        t_axis: DelayAxis,
        count: usize,
        values: Vec<Complex64>,
        confident: Vec<bool>,
    ) -> Result<Self> {
        let n = t_axis.len * count;
        if values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: values.len(),
            });
        }
        if confident.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: confident.len(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("correlation set"));
        }
        Ok(CorrelationSet {
            t_axis,
            count,
            values,
            confident,
            max_edge_ratio: 0.0,
        })
    }

    /// Build from per-level columns.
    pub fn from_columns(t_axis: DelayAxis, columns: &[Vec<Complex64>], confident: &[Vec<bool>]) -> Result<Self> {
        let count = columns.len();
        let nt = t_axis.len;
        if columns.iter().any(|c| c.len() != nt) || confident.len() != count {
            return Err(Error::LengthMismatch {
                expected: nt,
                got: columns.first().map_or(0, |c| c.len()),
            });
        }
        let mut values = Vec::with_capacity(nt * count);
        let mut flags = Vec::with_capacity(nt * count);
        for i in 0..nt {
            for g in 0..count {
                values.push(columns[g][i]);
                flags.push(confident[g].get(i).copied().unwrap_or(false));
            }
        }
        CorrelationSet::with_confidence(t_axis, count, values, flags)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn confidence(&self) -> &[bool] {
        &self.confident
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.count..(i + 1) * self.count]
    }

    pub fn get(&self, i: usize, g: usize) -> Complex64 {
        self.values[i * self.count + g]
    }

    pub fn column(&self, g: usize) -> Vec<Complex64> {
        (0..self.t_axis.len).map(|i| self.get(i, g)).collect()
    }

    pub fn confident(&self, i: usize, g: usize) -> bool {
        self.confident[i * self.count + g]
    }

    pub fn max_modulus(&self, g: usize) -> f64 {
        (0..self.t_axis.len).map(|i| self.get(i, g).norm()).fold(0.0, f64::max)
    }

    /// Keep the first `count` levels.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count > self.count {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {count} of {} levels",
                self.count
            )));
        }
        let mut values = Vec::with_capacity(self.t_axis.len * count);
        let mut flags = Vec::with_capacity(self.t_axis.len * count);
        for i in 0..self.t_axis.len {
            values.extend_from_slice(&self.row(i)[..count]);
            flags.extend_from_slice(&self.confident[i * self.count..i * self.count + count]);
        }
        let mut out = CorrelationSet::with_confidence(self.t_axis, count, values, flags)?;
        out.max_edge_ratio = self.max_edge_ratio;
        Ok(out)
    }

    /// Restrict to the time samples with indices `range`.
    pub fn time_slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.t_axis.len || range.is_empty() {
            return Err(Error::InvalidArgument("time slice out of range".into()));
        }
        let axis = DelayAxis::new(self.t_axis.value(range.start), self.t_axis.step, range.len())?;
        let (a, b) = (range.start * self.count, range.end * self.count);
        let mut out = CorrelationSet::with_confidence(
            axis,
            self.count,
            self.values[a..b].to_vec(),
            self.confident[a..b].to_vec(),
        )?;
        out.max_edge_ratio = self.max_edge_ratio;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub g: usize,
    pub condition: f64,
    pub rank: usize,
    pub regularized: bool,
}

#[derive(Clone, Debug)]
pub struct Recovery {
    /// Stripped `c_g(t)^2`.
    pub squares: CorrelationSet,
    /// `a_g c_g(t)` with unknown signs.
    pub roots: CorrelationSet,
    pub peaks: Vec<PeakSummary>,
}

/// Steps from cube to sign-ambiguous correlations for the first `count` levels.
pub fn recover_correlations(cube: &SignalCube, basis: &EigenBasis, count: usize) -> Result<Recovery> {
    if count == 0 || count > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "{count} levels requested, basis has {}",
            basis.len()
        )));
    }
    let shifted = basis.shifted();
    let t_axis = cube.lattice.t;
    let per_peak: Vec<(PeakInversion, Vec<Complex64>, BranchRoot)> = (0..count)
        .into_par_iter()
        .map(|g| {
            let omegas = peak_layout(&shifted, g, count)?;
            let slice = windowed_ft(cube, &omegas)?;
            let peak = invert_peak(&slice, basis, g)?;
            let sq = strip_prefactor(&peak.values, &t_axis, &cube.pulses)?;
            let root = sqrt_branch(&sq);
            Ok((peak, sq, root))
        })
        .collect::<Result<_>>()?;
    let mut sq_cols = Vec::with_capacity(count);
    let mut root_cols = Vec::with_capacity(count);
    let mut flags = Vec::with_capacity(count);
    let mut peaks = Vec::with_capacity(count);
    for (peak, sq, root) in per_peak {
        peaks.push(PeakSummary {
            g: peak.g,
            condition: peak.condition,
            rank: peak.rank,
            regularized: peak.regularized,
        });
        sq_cols.push(sq);
        root_cols.push(root.values);
        flags.push(root.confident);
    }
    let mut squares = CorrelationSet::from_columns(t_axis, &sq_cols, &flags)?;
    let mut roots = CorrelationSet::from_columns(t_axis, &root_cols, &flags)?;
    squares.max_edge_ratio = cube.max_edge_ratio;
    roots.max_edge_ratio = cube.max_edge_ratio;
    Ok(Recovery { squares, roots, peaks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen;
    use crate::potentials::Preset;
    use crate::synth::{Lattice, Provenance};
    use crate::units::LI2_REDUCED_MASS;
    use crate::Grid;
    use proptest::prelude::*;

    fn basis(count: usize) -> EigenBasis {
        let grid = Grid::new(2.0, 12.0, 256).unwrap();
        eigen::solve(&grid, &Preset::X.model(), LI2_REDUCED_MASS, count).unwrap()
    }

    fn cube_from_rows(lattice: Lattice, rows: impl Fn(usize, f64) -> Complex64, omega0: f64) -> SignalCube {
        let mut values = Vec::new();
        for i in 0..lattice.t.len {
            for j in 0..lattice.tau32.len {
                values.push(rows(i, fs_to_au(lattice.tau32.value(j))));
            }
        }
        SignalCube::new(lattice, values, PulseConfig::standard(omega0), Provenance::Closure).unwrap()
    }

    fn lattice(nt: usize, m: usize) -> Lattice {
        Lattice {
            t: DelayAxis::new(0.0, 0.2, nt).unwrap(),
            tau32: DelayAxis::new(3.0, 1.0, m).unwrap(),
        }
    }

    #[test]
    fn constant_row_gives_rectangle_transform() {
        let lat = lattice(1, 1498);
        let cube = cube_from_rows(lat, |_, _| Complex64::new(0.5, 0.0), 0.0);
        let omegas: Vec<f64> = (0..40).map(|i| -0.003 + 1.5e-4 * i as f64).collect();
        let slice = windowed_ft(&cube, &omegas).unwrap();
        let w = slice.window;
        for (k, &om) in omegas.iter().enumerate() {
            let cont = 0.5 * 2.0 * w.half_width * sinc(om * w.half_width);
            let cont = Complex64::from_polar(cont, om * w.center());
            let x: f64 = 0.5 * om * w.step;
            // relative discretization error is x^2 / 6
            let tol = (x * x / 6.0 + 1e-12) * 2.0 * w.half_width;
            assert!((slice.row(0)[k] - cont).norm() <= tol, "{k}");
        }
    }

    #[test]
    fn discrete_kernel_is_exact_response() {
        let lat = lattice(1, 300);
        let wt = 0.0131;
        let cube = cube_from_rows(lat, |_, tau| Complex64::from_polar(1.0, -wt * tau), 0.0);
        let omegas = [0.0100, 0.0125, 0.0131, 0.0140];
        let slice = windowed_ft(&cube, &omegas).unwrap();
        for (k, &om) in omegas.iter().enumerate() {
            let expect = discrete_kernel(om - wt, &slice.window);
            assert!((slice.row(0)[k] - expect).norm() < 1e-9 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn sinc_kernel_shape() {
        let b = basis(5);
        let lat = lattice(1, 1498);
        let w = Window::from_axis(&lat.tau32);
        let pulses = PulseConfig::standard(b.omega0());
        let wg = b.energy(2) - b.omega0();
        let at_peak = sinc_kernel(wg, 2, &b, &w, &pulses, 7.0);
        assert!((at_peak.norm() - 2.0 * w.half_width * pulses.amplitude()).abs() < 1e-12 * at_peak.norm());
        let zero = sinc_kernel(wg + std::f64::consts::PI / w.half_width, 2, &b, &w, &pulses, 7.0);
        assert!(zero.norm() < 1e-12 * at_peak.norm());
        // the discrete response approaches the continuous one as x -> 0
        let d = 1e-3;
        let cont = sinc_kernel(wg + d, 2, &b, &w, &pulses, 0.0) / pulses.prefactor(0.0);
        let disc = discrete_kernel(d, &w);
        let x = 0.5 * d * w.step;
        assert!((cont - disc).norm() <= (x * x / 6.0 + 1e-12) * disc.norm() * 1.01);
    }

    #[test]
    fn single_peak_is_located() {
        let b = basis(10);
        let shifted = b.shifted();
        let lat = lattice(1, 1498);
        let cube = cube_from_rows(lat, |_, tau| Complex64::from_polar(1.0, -shifted[4] * tau), b.omega0());
        let omegas: Vec<f64> = (0..400).map(|i| 0.5 * shifted[9] * i as f64 / 400.0 + 1e-6).collect();
        let slice = windowed_ft(&cube, &omegas).unwrap();
        let imax = (0..omegas.len())
            .max_by(|&a, &c| slice.row(0)[a].norm().total_cmp(&slice.row(0)[c].norm()))
            .unwrap();
        let spacing = omegas[1] - omegas[0];
        assert!((omegas[imax] - shifted[4]).abs() <= spacing);
    }

    #[test]
    fn peak_layout_spans_half_gaps() {
        let shifted = [0.0, 1.0, 1.8, 2.4];
        let om = peak_layout(&shifted, 1, 4).unwrap();
        assert_eq!(om.len(), 4);
        assert!((om[0] - 0.6).abs() < 1e-15 && (om[3] - 1.4).abs() < 1e-15);
        assert!(peak_layout(&shifted, 4, 4).is_err());
        assert_eq!(peak_layout(&shifted, 0, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn inversion_identity() {
        let b = basis(25);
        let shifted = b.shifted();
        let lat = lattice(3, 1498);
        let w = Window::from_axis(&lat.tau32);
        for g in [0, 7, 24] {
            let omegas = peak_layout(&shifted, g, 25).unwrap();
            let s = response_matrix(&omegas, &shifted, &w);
            let p = DMatrix::from_fn(25, 3, |k, i| {
                Complex64::new((k as f64 + 1.0).recip(), 0.1 * i as f64 - 0.02 * k as f64)
            });
            let rhs = &s * &p;
            let slice = SpectralSlice {
                t_axis: lat.t,
                omegas: omegas.clone(),
                values: (0..3)
                    .flat_map(|i| (0..25).map(move |k| (i, k)))
                    .map(|(i, k)| rhs[(k, i)])
                    .collect(),
                window: w,
            };
            let out = invert_peak(&slice, &b, g).unwrap();
            for i in 0..3 {
                assert!(
                    (out.values[i] - p[(g, i)]).norm() < 1e-10,
                    "g {g}: {}",
                    (out.values[i] - p[(g, i)]).norm()
                );
            }
            assert!(out.condition > 1.0);
        }
    }

    #[test]
    fn single_peak_cube_leaves_other_rows_empty() {
        let b = basis(12);
        let shifted = b.shifted();
        let lat = lattice(2, 1498);
        let pulses = PulseConfig::standard(b.omega0());
        let cube = cube_from_rows(
            lat,
            |i, tau| pulses.prefactor(0.2 * i as f64) * Complex64::from_polar(0.3, -shifted[5] * tau),
            b.omega0(),
        );
        for g in 0..12 {
            let slice = windowed_ft(&cube, &peak_layout(&shifted, g, 12).unwrap()).unwrap();
            let out = invert_peak(&slice, &b, g).unwrap();
            let got = strip_prefactor(&out.values, &lat.t, &pulses).unwrap();
            let expect = if g == 5 { 0.3 } else { 0.0 };
            for v in got {
                assert!((v - expect).norm() < 1e-8, "g {g}: {v}");
            }
        }
    }

    #[test]
    fn strip_prefactor_scale() {
        let pulses = PulseConfig::standard(0.0005);
        let axis = DelayAxis::new(0.0, 0.2, 3).unwrap();
        let vals: Vec<Complex64> = (0..3).map(|i| pulses.prefactor(axis.value(i))).collect();
        for v in strip_prefactor(&vals, &axis, &pulses).unwrap() {
            assert!((v - 1.0).norm() < 1e-14);
        }
        let one = [Complex64::new(1.0, 0.0); 3];
        let s = strip_prefactor(&one, &axis, &pulses).unwrap();
        assert!((s[0].norm() - 1e12 / 16.0).abs() < 1e-3);
        assert!(strip_prefactor(&one[..2], &axis, &pulses).is_err());
    }

    #[test]
    fn sqrt_branch_follows_phase() {
        let w = 0.9;
        let q: Vec<Complex64> = (0..400)
            .map(|i| Complex64::from_polar(1.0, -2.0 * w * 0.05 * i as f64))
            .collect();
        let r = sqrt_branch(&q);
        let sign = r.values[0].re.signum();
        for (i, v) in r.values.iter().enumerate() {
            let expect = Complex64::from_polar(sign, -w * 0.05 * i as f64);
            assert!((v - expect).norm() < 1e-12, "{i}");
        }
        assert!(r.confident.iter().all(|c| *c));
        let c = sqrt_branch(&[Complex64::new(4.0, 0.0); 5]);
        assert!(c.values.iter().all(|v| (v - 2.0).norm() < 1e-15));
    }

    #[test]
    fn sqrt_branch_flags_small_samples() {
        let q: Vec<Complex64> = (0..50).map(|i| Complex64::new((i as f64 * 0.1).powi(2), 0.0)).collect();
        let r = sqrt_branch(&q);
        assert!(!r.confident[0]);
        assert!(r.confident[49]);
        // through the zero the root keeps a single sign
        assert!(r.values.iter().skip(1).all(|v| v.re > 0.0));
    }

    proptest! {
        #[test]
        fn sqrt_branch_squares_back(re in proptest::collection::vec(-1.0f64..1.0, 1..60), im in proptest::collection::vec(-1.0f64..1.0, 60)) {
            let q: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
            let r = sqrt_branch(&q);
            for (a, b) in r.values.iter().zip(&q) {
                prop_assert!((a * a - b).norm() <= 1e-14 * (1.0 + b.norm()));
            }
        }

        #[test]
        fn windowed_ft_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, w1 in 0.0f64..0.02, w2 in 0.0f64..0.02) {
            let lat = lattice(1, 64);
            let f = |tau: f64| Complex64::from_polar(1.0, -w1 * tau);
            let g = |tau: f64| Complex64::new(0.0, (w2 * tau).cos());
            let omegas = [0.001, 0.004, 0.011];
            let cf = windowed_ft(&cube_from_rows(lat, |_, t| f(t), 0.0), &omegas).unwrap();
            let cg = windowed_ft(&cube_from_rows(lat, |_, t| g(t), 0.0), &omegas).unwrap();
            let cs = windowed_ft(&cube_from_rows(lat, |_, t| a * f(t) + b * g(t), 0.0), &omegas).unwrap();
            for k in 0..3 {
                let lin = a * cf.values[k] + b * cg.values[k];
                prop_assert!((cs.values[k] - lin).norm() <= 1e-9 * (1.0 + lin.norm()));
            }
        }
    }
}
