//! Potential from wavefunction snapshots by inverting the time-dependent
//! Schrödinger equation, `V = (i dPsi/dt + Psi'' / 2m) / Psi`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Field, Grid, Result};

/// Eighth-order central first-derivative weights for offsets -4..=4.
pub const TIME_STENCIL: [f64; 9] = [
    1.0 / 280.0,
    -4.0 / 105.0,
    1.0 / 5.0,
    -4.0 / 5.0,
    0.0,
    4.0 / 5.0,
    -1.0 / 5.0,
    4.0 / 105.0,
    -1.0 / 280.0,
];

/// Default mask threshold relative to the peak amplitude.
pub const DEFAULT_ETA: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialEstimate {
    pub grid: Grid,
    /// Real part of the inverted potential; NaN outside the mask unless interpolated.
    pub values: Vec<f64>,
    pub imag_residue: Vec<f64>,
    pub mask: Vec<bool>,
    /// `|Psi|` of the centre snapshot each value came from.
    pub amplitude: Vec<f64>,
    /// Points filled by interpolation across a gap in the merged mask.
    pub interpolated: Vec<bool>,
    pub source_times_fs: Vec<f64>,
}

impl PotentialEstimate {
    pub fn with_source_time(mut self, t_fs: f64) -> Self {
        self.source_times_fs = vec![t_fs];
        self
    }

    /// Extent `[x_first, x_last]` of the mask.
    pub fn coverage(&self) -> Option<(f64, f64)> {
        let first = self.mask.iter().position(|m| *m)?;
        let last = self.mask.iter().rposition(|m| *m)?;
        Some((self.grid.x(first), self.grid.x(last)))
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// `max |V - exact|` over masked points.
    pub fn max_masked_error(&self, exact: &[f64]) -> Result<f64> {
        if exact.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                expected: self.values.len(),
                got: exact.len(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(exact)
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|((v, e), _)| (v - e).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_masked_residue(&self) -> f64 {
        self.imag_residue
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(r, _)| r.abs())
            .fold(0.0, f64::max)
    }

    /// Values on the whole grid: gaps inside the mask hull interpolated
    /// linearly, outside extrapolated linearly with the slope of the four
    /// outermost valid points on each side.
    pub fn extend_to_grid(&self) -> Result<Vec<f64>> {
        let known: Vec<usize> = (0..self.values.len())
            .filter(|&j| (self.mask[j] || self.interpolated[j]) && self.values[j].is_finite())
            .collect();
        if known.is_empty() {
            return Err(Error::AllMasked);
        }
        let mut out = self.values.clone();
        fill_interior(&self.grid, &mut out, &known);
        let (lo, hi) = (known[0], *known.last().unwrap());
        let slope = |a: usize, b: usize| {
            if b > a {
                (out[b] - out[a]) / (self.grid.x(b) - self.grid.x(a))
            } else {
                0.0
            }
        };
        let s_lo = slope(lo, known[known.len().min(4) - 1]);
        let s_hi = slope(known[known.len().saturating_sub(4)], hi);
        for j in 0..lo {
            out[j] = out[lo] + s_lo * (self.grid.x(j) - self.grid.x(lo));
        }
        for j in hi + 1..out.len() {
            out[j] = out[hi] + s_hi * (self.grid.x(j) - self.grid.x(hi));
        }
        Ok(out)
    }
}

fn fill_interior(grid: &Grid, values: &mut [f64], known: &[usize]) {
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in a + 1..b {
            let u = (grid.x(j) - grid.x(a)) / (grid.x(b) - grid.x(a));
            values[j] = values[a] * (1.0 - u) + values[b] * u;
        }
    }
}

fn check_uniform(times: &[f64]) -> Result<f64> {
    if times.len() != TIME_STENCIL.len() {
        return Err(Error::InvalidArgument(format!(
            "the time stencil needs 9 snapshots, got {}",
            times.len()
        )));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::InvalidArgument(
            "snapshots must be uniformly spaced in time".into(),
        ));
    }
    Ok(dt)
}

pub(crate) fn stencil_derivative<S: AsRef<[Complex64]>>(snapshots: &[S], dt: f64) -> Vec<Complex64> {
    let n = snapshots[0].as_ref().len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (w, s) in TIME_STENCIL.iter().zip(snapshots) {
        if *w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(s.as_ref()) {
            *o += v * *w;
        }
    }
    out.iter_mut().for_each(|o| *o /= dt);
    out
}

/// Central eighth-order `d/dt` at the middle of nine snapshots taken at `times`.
pub fn fd_time_derivative(snapshots: &[Field], times: &[f64]) -> Result<Field> {
    if snapshots.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: snapshots.len(),
        });
    }
    let dt = check_uniform(times)?;
    let grid = *snapshots[4].grid();
    if snapshots.iter().any(|s| *s.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let vals: Vec<&[Complex64]> = snapshots.iter().map(|s| s.values()).collect();
    Field::new(grid, stencil_derivative(&vals, dt))
}

pub(crate) fn second_difference(f: &[Complex64], dx: f64) -> Vec<Complex64> {
    let n = f.len();
    let h2 = dx * dx;
    (0..n)
        .map(|j| (f[(j + n - 1) % n] - 2.0 * f[j] + f[(j + 1) % n]) / h2)
        .collect()
}

/// Three-point `d^2/dx^2` with periodic wrap.
pub fn fd_space_second(f: &Field) -> Field {
    Field::new(*f.grid(), second_difference(f.values(), f.grid().dx())).expect("same grid")
}

/// Raw inversion on sample slices; `snapshots` are the nine stencil rows.
pub(crate) fn invert_samples<S: AsRef<[Complex64]>>(
    grid: &Grid,
    snapshots: &[S],
    mass: f64,
    dt: f64,
    eta: f64,
) -> Result<PotentialEstimate> {
    let centre = snapshots[4].as_ref();
    let amplitude: Vec<f64> = centre.iter().map(|c| c.norm()).collect();
    let peak = amplitude.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::AllMasked);
    }
    let dpsi = stencil_derivative(snapshots, dt);
    let lap = second_difference(centre, grid.dx());
    let n = grid.len();
    let mut values = vec![f64::NAN; n];
    let mut imag_residue = vec![f64::NAN; n];
    let mut mask = vec![false; n];
    for j in 0..n {
        if amplitude[j] >= eta * peak {
            let v = (Complex64::i() * dpsi[j] + lap[j] / (2.0 * mass)) / centre[j];
            values[j] = v.re;
            imag_residue[j] = v.im;
            mask[j] = true;
        }
    }
    Ok(PotentialEstimate {
        grid: *grid,
        values,
        imag_residue,
        mask,
        amplitude,
        interpolated: vec![false; n],
        source_times_fs: Vec::new(),
    })
}

/// Invert nine snapshots spaced `dt` (a.u.) apart; points with
/// `|Psi| < eta max |Psi|` at the centre are masked out.
pub fn invert_tdse(snapshots: &[Field], mass: f64, dt: f64, eta: f64) -> Result<PotentialEstimate> {
    if snapshots.len() != TIME_STENCIL.len() {
        return Err(Error::InvalidArgument(format!(
            "the time stencil needs 9 snapshots, got {}",
            snapshots.len()
        )));
    }
    if !(dt > 0.0) || !(mass > 0.0) || !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0, mass > 0, 0 <= eta < 1 (dt {dt}, mass {mass}, eta {eta})"
        )));
    }
    let grid = *snapshots[4].grid();
    if snapshots.iter().any(|s| *s.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let vals: Vec<&[Complex64]> = snapshots.iter().map(|s| s.values()).collect();
    invert_samples(&grid, &vals, mass, dt, eta)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    /// Take each point from the estimate whose snapshot had the largest `|Psi|` there.
    #[default]
    MaxAmplitude,
    /// `|Psi|^2`-weighted mean over the estimates that cover the point.
    WeightedAverage,
}

/// Combine estimates from several snapshot times on one grid.
pub fn merge_snapshots(estimates: &[PotentialEstimate], rule: MergeRule) -> Result<PotentialEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidArgument("no estimates to merge".into()))?;
    let grid = first.grid;
    if estimates.iter().any(|e| e.grid != grid) {
        return Err(Error::GridMismatch);
    }
    let n = grid.len();
    let mut out = PotentialEstimate {
        grid,
        values: vec![f64::NAN; n],
        imag_residue: vec![f64::NAN; n],
        mask: vec![false; n],
        amplitude: vec![0.0; n],
        interpolated: vec![false; n],
        source_times_fs: estimates
            .iter()
            .flat_map(|e| e.source_times_fs.iter().copied())
            .collect(),
    };
    for j in 0..n {
        let covering = estimates.iter().filter(|e| e.mask[j]);
        match rule {
            MergeRule::MaxAmplitude => {
                if let Some(best) = covering.max_by(|a, b| a.amplitude[j].total_cmp(&b.amplitude[j])) {
                    out.values[j] = best.values[j];
                    out.imag_residue[j] = best.imag_residue[j];
                    out.amplitude[j] = best.amplitude[j];
                    out.mask[j] = true;
                }
            }
            MergeRule::WeightedAverage => {
                let (mut wsum, mut v, mut r, mut amp) = (0.0, 0.0, 0.0, 0.0f64);
                for e in covering {
                    let w = e.amplitude[j].powi(2);
                    wsum += w;
                    v += w * e.values[j];
                    r += w * e.imag_residue[j];
                    amp = amp.max(e.amplitude[j]);
                }
                if wsum > 0.0 {
                    out.values[j] = v / wsum;
                    out.imag_residue[j] = r / wsum;
                    out.amplitude[j] = amp;
                    out.mask[j] = true;
                }
            }
        }
    }
    let known: Vec<usize> = (0..n).filter(|&j| out.mask[j]).collect();
    if known.is_empty() {
        return Err(Error::AllMasked);
    }
    let before = out.values.clone();
    fill_interior(&grid, &mut out.values, &known);
    for j in known[0]..=*known.last().unwrap() {
        if !out.mask[j] {
            out.interpolated[j] = before[j].is_nan();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen;
    use crate::potentials::Preset;
    use crate::propagator::{propagate_snapshots, PropagationSpec};
    use crate::units::{fs_to_au, LI2_REDUCED_MASS};

    fn li2_grid() -> Grid {
        Grid::new(2.0, 12.0, 256).unwrap()
    }

    fn scalar_snaps(f: impl Fn(f64) -> Complex64, t0: f64, dt: f64) -> (Vec<Field>, Vec<f64>) {
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        let times: Vec<f64> = (0..9).map(|k| t0 + (k as f64 - 4.0) * dt).collect();
        let snaps = times.iter().map(|&t| Field::from_fn(g, |_| f(t))).collect();
        (snaps, times)
    }

    #[test]
    fn stencil_exact_for_polynomials() {
        let (s, t) = scalar_snaps(|t| Complex64::new(t.powi(7), 0.0), 0.7, 0.05);
        let d = fd_time_derivative(&s, &t).unwrap();
        let expect = 7.0 * 0.7f64.powi(6);
        assert!((d.values()[3].re - expect).abs() < 1e-11 * expect);
        let (s, t) = scalar_snaps(|_| Complex64::new(2.5, -1.0), 0.0, 0.1);
        assert!(fd_time_derivative(&s, &t)
            .unwrap()
            .values()
            .iter()
            .all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn stencil_converges_at_eighth_order() {
        let w = 2.0;
        let err = |dt: f64| {
            let (s, t) = scalar_snaps(|t| Complex64::from_polar(1.0, -w * t), 0.3, dt);
            let d = fd_time_derivative(&s, &t).unwrap();
            (d.values()[0] - Complex64::new(0.0, -w) * Complex64::from_polar(1.0, -w * 0.3)).norm()
        };
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 200.0 && ratio < 300.0, "{ratio}");
    }

    #[test]
    fn stencil_rejects_uneven_times() {
        let (s, mut t) = scalar_snaps(|t| Complex64::new(t, 0.0), 0.0, 0.1);
        t[8] += 0.01;
        assert!(fd_time_derivative(&s, &t).is_err());
        assert!(fd_time_derivative(&s[..8], &t[..8]).is_err());
    }

    #[test]
    fn second_difference_cases() {
        let g = Grid::new(-1.0, 1.0, 64).unwrap();
        let sq = fd_space_second(&Field::from_fn(g, |x| Complex64::new(x * x, 0.0)));
        for j in 1..63 {
            assert!((sq.values()[j].re - 2.0).abs() < 1e-9);
        }
        let c = fd_space_second(&Field::from_fn(g, |_| Complex64::new(3.0, 1.0)));
        assert!(c.values().iter().all(|v| v.norm() < 1e-12));
        let k = g.k(5);
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, k * x));
        let d = fd_space_second(&f);
        let symbol = -2.0 / g.dx().powi(2) * (1.0 - (k * g.dx()).cos());
        for (a, b) in d.values().iter().zip(f.values()) {
            assert!((a - b * symbol).norm() < 1e-9 * symbol.abs());
        }
    }

    fn stationary(g: usize, dt_au: f64) -> (PotentialEstimate, Vec<f64>) {
        let grid = li2_grid();
        let x = Preset::X.model();
        let b = eigen::solve(&grid, &x, LI2_REDUCED_MASS, g + 1).unwrap();
        let e = b.energy(g);
        let snaps: Vec<Field> = (0..9)
            .map(|k| {
                let mut f = b.field(g);
                f.scale(Complex64::from_polar(1.0, -e * (k as f64 - 4.0) * dt_au));
                f
            })
            .collect();
        let est = invert_tdse(&snaps, LI2_REDUCED_MASS, dt_au, DEFAULT_ETA).unwrap();
        (est, x.sample_on_grid(&grid).unwrap())
    }

    #[test]
    fn stationary_state_identity() {
        // the three-point Laplacian error, dx^2 psi''''/(24 m psi), grows with g
        for (g, tol) in [(0, 5e-5), (1, 1e-4), (2, 3e-4), (3, 6e-4)] {
            let (est, exact) = stationary(g, fs_to_au(0.2));
            assert!(est.max_masked_error(&exact).unwrap() < tol, "g {g}");
            assert!(est.max_masked_residue() < 1e-4);
            assert!(est.masked_count() > 20);
        }
    }

    #[test]
    fn free_gaussian_gives_flat_potential() {
        let grid = Grid::new(-20.0, 20.0, 2048).unwrap();
        let mass = 1.0;
        let psi0 = Field::from_fn(grid, |x| Complex64::new((-x * x / 4.0).exp(), 0.0));
        let spec = PropagationSpec::new(vec![0.0; 2048], mass, 0.01);
        let times: Vec<f64> = (0..9).map(|k| 1.0 + 0.05 * k as f64).collect();
        let traj = propagate_snapshots(&psi0, &spec, &times).unwrap();
        let snaps: Vec<Field> = traj.states.into_iter().map(|s| Field::new(grid, s).unwrap()).collect();
        let est = invert_tdse(&snaps, mass, 0.05, DEFAULT_ETA).unwrap();
        assert!(est.max_masked_error(&vec![0.0; 2048]).unwrap() < 1e-3);
    }

    fn li2_packet_estimate(t_fs: f64, dt_fs: f64) -> (PotentialEstimate, Vec<f64>) {
        let grid = li2_grid();
        let b = eigen::solve(&grid, &Preset::X.model(), LI2_REDUCED_MASS, 1).unwrap();
        let va = Preset::A.model().sample_on_grid(&grid).unwrap();
        let spec = PropagationSpec::new(va.clone(), LI2_REDUCED_MASS, fs_to_au(0.02));
        let times: Vec<f64> = (0..9).map(|k| fs_to_au(t_fs + (k as f64 - 4.0) * dt_fs)).collect();
        let traj = propagate_snapshots(&b.field(0), &spec, &times).unwrap();
        let snaps: Vec<Field> = traj.states.into_iter().map(|s| Field::new(grid, s).unwrap()).collect();
        (
            invert_tdse(&snaps, LI2_REDUCED_MASS, fs_to_au(dt_fs), DEFAULT_ETA)
                .unwrap()
                .with_source_time(t_fs),
            va,
        )
    }

    #[test]
    fn exact_packet_recovers_excited_curve() {
        let (est, va) = li2_packet_estimate(5.0, 0.2);
        assert!(est.max_masked_error(&va).unwrap() < 1e-3);
        let (lo, hi) = est.coverage().unwrap();
        assert!(lo < 5.0 && hi > 5.5);
    }

    #[test]
    fn smaller_time_step_reduces_error() {
        let (coarse, va) = li2_packet_estimate(5.0, 0.5);
        let (fine, _) = li2_packet_estimate(5.0, 0.2);
        assert!(fine.max_masked_error(&va).unwrap() < coarse.max_masked_error(&va).unwrap());
    }

    #[test]
    fn all_masked_input_is_rejected() {
        let g = li2_grid();
        let snaps = vec![Field::zeros(g); 9];
        assert!(matches!(invert_tdse(&snaps, 1.0, 0.1, 0.01), Err(Error::AllMasked)));
    }

    fn synthetic(grid: Grid, range: std::ops::Range<usize>, value: f64, amp: f64, t: f64) -> PotentialEstimate {
        let n = grid.len();
        let mask: Vec<bool> = (0..n).map(|j| range.contains(&j)).collect();
        PotentialEstimate {
            grid,
            values: mask.iter().map(|m| if *m { value } else { f64::NAN }).collect(),
            imag_residue: mask.iter().map(|m| if *m { 0.0 } else { f64::NAN }).collect(),
            amplitude: mask.iter().map(|m| if *m { amp } else { 0.0 }).collect(),
            mask,
            interpolated: vec![false; n],
            source_times_fs: vec![t],
        }
    }

    #[test]
    fn merge_identical_is_unchanged() {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let e = synthetic(g, 3..9, 0.5, 1.0, 5.0);
        let m = merge_snapshots(&[e.clone(), e.clone()], MergeRule::MaxAmplitude).unwrap();
        assert_eq!(m.mask, e.mask);
        for j in 3..9 {
            assert_eq!(m.values[j], 0.5);
        }
    }

    #[test]
    fn merge_disjoint_fills_gap() {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let a = synthetic(g, 1..4, 1.0, 1.0, 5.0);
        let b = synthetic(g, 8..12, 3.0, 0.5, 70.0);
        let m = merge_snapshots(&[a, b], MergeRule::MaxAmplitude).unwrap();
        assert_eq!(m.values[2], 1.0);
        assert_eq!(m.values[10], 3.0);
        assert!(m.interpolated[5] && !m.mask[5]);
        assert!((m.values[5] - (1.0 + 2.0 * 2.0 / 5.0)).abs() < 1e-12);
        assert!(m.values[0].is_nan() && !m.interpolated[0]);
        assert_eq!(m.coverage(), Some((g.x(1), g.x(11))));
        assert_eq!(m.source_times_fs, vec![5.0, 70.0]);
        let full = m.extend_to_grid().unwrap();
        assert!(full.iter().all(|v| v.is_finite()));
        assert!(merge_snapshots(&[], MergeRule::MaxAmplitude).is_err());
    }

    #[test]
    fn merge_rules_on_overlap() {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let a = synthetic(g, 2..8, 1.0, 2.0, 5.0);
        let b = synthetic(g, 5..10, 2.0, 1.0, 70.0);
        let max = merge_snapshots(&[a.clone(), b.clone()], MergeRule::MaxAmplitude).unwrap();
        assert_eq!(max.values[6], 1.0);
        assert_eq!(max.values[9], 2.0);
        let avg = merge_snapshots(&[a, b], MergeRule::WeightedAverage).unwrap();
        assert!((avg.values[6] - (4.0 + 2.0) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn extension_is_linear_outside_hull() {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let mut e = synthetic(g, 4..10, 0.0, 1.0, 0.0);
        for j in 4..10 {
            e.values[j] = 2.0 * g.x(j);
        }
        let full = e.extend_to_grid().unwrap();
        for j in 0..16 {
            assert!((full[j] - 2.0 * g.x(j)).abs() < 1e-12);
        }
    }
}
