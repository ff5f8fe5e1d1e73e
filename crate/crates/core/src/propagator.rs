//! Strang split-operator propagation, `exp(-iV dt/2) F^-1 exp(-iT dt) F exp(-iV dt/2)`.
//!
//! All times here are in atomic units.

use num_complex::Complex64;

use crate::grid::{dot, Fourier};
use crate::units::whole_steps;
use crate::{Error, Field, Grid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug)]
pub struct PropagationSpec {
    pub potential: Vec<f64>,
    pub mass: f64,
    /// Step length in atomic units (always positive).
    pub dt: f64,
    pub direction: Direction,
}

impl PropagationSpec {
    pub fn new(potential: Vec<f64>, mass: f64, dt: f64) -> Self {
        PropagationSpec {
            potential,
            mass,
            dt,
            direction: Direction::Forward,
        }
    }

    pub fn backward(mut self) -> Self {
        self.direction = Direction::Backward;
        self
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        if self.potential.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if self.potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        Ok(())
    }
}

/// Precomputed phase factors for repeated stepping on one grid.
pub struct Propagator {
    grid: Grid,
    fourier: Fourier,
    half_v: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: &Grid, spec: &PropagationSpec) -> Result<Self> {
        spec.validate(grid)?;
        let tau = match spec.direction {
            Direction::Forward => spec.dt,
            Direction::Backward => -spec.dt,
        };
        let half_v = spec
            .potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * tau / 2.0))
            .collect();
        let kinetic = grid
            .momenta()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -k * k / (2.0 * spec.mass) * tau))
            .collect();
        let fourier = Fourier::new(grid.len());
        let scratch = vec![Complex64::new(0.0, 0.0); fourier.scratch_len()];
        Ok(Propagator {
            grid: *grid,
            fourier,
            half_v,
            kinetic,
            scratch,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn step(&mut self, psi: &mut [Complex64]) {
        for (p, h) in psi.iter_mut().zip(&self.half_v) {
            *p *= h;
        }
        self.fourier.forward_with_scratch(psi, &mut self.scratch);
        for (p, k) in psi.iter_mut().zip(&self.kinetic) {
            *p *= k;
        }
        self.fourier.inverse_with_scratch(psi, &mut self.scratch);
        for (p, h) in psi.iter_mut().zip(&self.half_v) {
            *p *= h;
        }
    }

    pub fn advance(&mut self, psi: &mut [Complex64], steps: usize) {
        for _ in 0..steps {
            self.step(psi);
        }
    }
}

/// One Strang step.
pub fn split_step(psi: &Field, spec: &PropagationSpec) -> Result<Field> {
    let mut prop = Propagator::new(psi.grid(), spec)?;
    let mut out = psi.clone();
    prop.step(out.values_mut());
    Ok(out)
}

/// Evolve `psi` for `duration` (a.u.), which must be a whole number of steps.
pub fn propagate(psi: &Field, spec: &PropagationSpec, duration: f64) -> Result<Field> {
    let steps = whole_steps(duration, spec.dt)?;
    let mut prop = Propagator::new(psi.grid(), spec)?;
    let mut out = psi.clone();
    prop.advance(out.values_mut(), steps);
    Ok(out)
}

/// Back-propagate `psi_t` from `t_star` to zero under a static potential.
pub fn backward_to_zero(psi_t: &Field, potential: &[f64], mass: f64, t_star: f64, dt: f64) -> Result<Field> {
    let spec = PropagationSpec::new(potential.to_vec(), mass, dt).backward();
    propagate(psi_t, &spec, t_star)
}

/// Largest amplitude in the outer `width` points at either grid edge relative
/// to the global maximum.
pub fn edge_ratio(psi: &[Complex64], width: usize) -> f64 {
    let n = psi.len();
    let max = psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let w = width.min(n / 2);
    let edge = psi[..w]
        .iter()
        .chain(&psi[n - w..])
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    edge / max
}

/// States (or overlaps) sampled along one trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    pub max_edge_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct OverlapRecord {
    pub times: Vec<f64>,
    /// `overlaps[j][p] = <probe_p | psi(t_j)>`
    pub overlaps: Vec<Vec<Complex64>>,
    pub max_edge_ratio: f64,
}

fn sample_steps(t_grid: &[f64], dt: f64) -> Result<Vec<usize>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    let steps: Vec<usize> = t_grid.iter().map(|&t| whole_steps(t, dt)).collect::<Result<_>>()?;
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(steps)
}

fn walk(
    psi0: &Field,
    spec: &PropagationSpec,
    t_grid: &[f64],
    mut visit: impl FnMut(usize, &[Complex64]),
) -> Result<f64> {
    let steps = sample_steps(t_grid, spec.dt)?;
    let mut prop = Propagator::new(psi0.grid(), spec)?;
    let mut psi = psi0.values().to_vec();
    let mut done = 0;
    let mut leak = 0.0f64;
    for (j, &s) in steps.iter().enumerate() {
        prop.advance(&mut psi, s - done);
        done = s;
        leak = leak.max(edge_ratio(&psi, 5));
        visit(j, &psi);
    }
    Ok(leak)
}

/// Evolve once and keep the state at every requested time.
pub fn propagate_snapshots(psi0: &Field, spec: &PropagationSpec, t_grid: &[f64]) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(t_grid.len());
    let leak = walk(psi0, spec, t_grid, |_, psi| states.push(psi.to_vec()))?;
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states,
        max_edge_ratio: leak,
    })
}

/// Evolve once, recording `<probe|psi(t)>` on the fly. With the ground
/// eigenbasis as probes this yields the cross-correlations `c_g(t)`.
pub fn propagate_record(
    psi0: &Field,
    spec: &PropagationSpec,
    t_grid: &[f64],
    probes: &[Field],
) -> Result<OverlapRecord> {
    if probes.iter().any(|p| p.grid() != psi0.grid()) {
        return Err(Error::GridMismatch);
    }
    let dx = psi0.grid().dx();
    let mut overlaps = Vec::with_capacity(t_grid.len());
    let leak = walk(psi0, spec, t_grid, |_, psi| {
        overlaps.push(probes.iter().map(|p| dot(p.values(), psi) * dx).collect());
    })?;
    Ok(OverlapRecord {
        times: t_grid.to_vec(),
        overlaps,
        max_edge_ratio: leak,
    })
}

/// `<psi|H|psi>` with the kinetic term evaluated spectrally.
pub fn energy(psi: &Field, potential: &[f64], mass: f64) -> Result<f64> {
    let grid = psi.grid();
    if potential.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let fourier = Fourier::new(grid.len());
    let mut spec = psi.values().to_vec();
    fourier.forward(&mut spec);
    let n = grid.len() as f64;
    let kinetic: f64 = spec
        .iter()
        .enumerate()
        .map(|(j, c)| c.norm_sqr() * grid.k(j).powi(2) / (2.0 * mass))
        .sum::<f64>()
        * grid.dx()
        / n;
    let pot: f64 = psi
        .values()
        .iter()
        .zip(potential)
        .map(|(c, v)| c.norm_sqr() * v)
        .sum::<f64>()
        * grid.dx();
    Ok(kinetic + pot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen;
    use crate::potentials::Preset;
    use crate::units::{fs_to_au, LI2_REDUCED_MASS};
    use proptest::prelude::*;

    fn standard_grid() -> Grid {
        Grid::new(2.0, 12.0, 256).unwrap()
    }

    fn ground(grid: &Grid) -> eigen::EigenBasis {
        eigen::solve(grid, &Preset::X.model(), LI2_REDUCED_MASS, 25).unwrap()
    }

    fn a_spec(grid: &Grid, dt_fs: f64) -> PropagationSpec {
        let v = Preset::A.model().sample_on_grid(grid).unwrap();
        PropagationSpec::new(v, LI2_REDUCED_MASS, fs_to_au(dt_fs))
    }

    #[test]
    fn tiny_step_is_nearly_identity() {
        let grid = standard_grid();
        let psi = ground(&grid).field(0);
        let mut spec = a_spec(&grid, 0.1);
        spec.dt = 1e-8;
        let out = split_step(&psi, &spec).unwrap();
        assert!(out.distance(&psi).unwrap() < 1e-6);
    }

    #[test]
    fn eigenstate_only_acquires_its_phase() {
        let grid = standard_grid();
        let v = Preset::X.model().sample_on_grid(&grid).unwrap();
        let basis = ground(&grid);
        let dt = fs_to_au(0.1);
        let spec = PropagationSpec::new(v, LI2_REDUCED_MASS, dt);
        for g in [0usize, 3, 10] {
            let psi = basis.field(g);
            let steps = 200;
            let out = propagate(&psi, &spec, dt * steps as f64).unwrap();
            let ov = crate::grid::inner_product(&psi, &out).unwrap();
            assert!((ov.norm() - 1.0).abs() < 1e-8, "g = {g}: |ov| = {}", ov.norm());
            // splitting error in the eigenphase is O(dt^2)
            let expect = Complex64::from_polar(1.0, -basis.energy(g) * dt * steps as f64);
            assert!((ov - expect).norm() < 1e-3, "g = {g}: {ov} vs {expect}");
        }
    }

    #[test]
    fn free_gaussian_spreads_as_expected() {
        let grid = Grid::new(-40.0, 40.0, 512).unwrap();
        let (mass, sigma) = (1.0, 1.0);
        let psi = Field::from_fn(grid, |x| {
            Complex64::new(
                (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25) * (-x * x / (4.0 * sigma * sigma)).exp(),
                0.0,
            )
        });
        let spec = PropagationSpec::new(vec![0.0; 512], mass, 0.05);
        let t = 4.0;
        let out = propagate(&psi, &spec, t).unwrap();
        let dx = grid.dx();
        let var: f64 = out
            .values()
            .iter()
            .zip(grid.points())
            .map(|(c, x)| c.norm_sqr() * x * x)
            .sum::<f64>()
            * dx;
        let expect = sigma * sigma * (1.0 + (t / (2.0 * mass * sigma * sigma)).powi(2));
        assert!((var - expect).abs() < 1e-9 * expect, "{var} vs {expect}");
    }

    #[test]
    fn forward_then_backward_round_trips() {
        let grid = standard_grid();
        let psi = ground(&grid).field(0);
        let spec = a_spec(&grid, 0.1);
        let t = spec.dt * 700.0;
        let fwd = propagate(&psi, &spec, t).unwrap();
        let back = backward_to_zero(&fwd, &spec.potential, spec.mass, t, spec.dt).unwrap();
        assert!(back.distance(&psi).unwrap() < 1e-9);
        let same = backward_to_zero(&fwd, &spec.potential, spec.mass, 0.0, spec.dt).unwrap();
        assert_eq!(same, fwd);
    }

    #[test]
    fn record_starts_from_delta() {
        let grid = standard_grid();
        let basis = ground(&grid);
        let probes: Vec<Field> = (0..25).map(|g| basis.field(g)).collect();
        let spec = a_spec(&grid, 0.1);
        let times: Vec<f64> = (0..50).map(|j| j as f64 * 2.0 * spec.dt).collect();
        let rec = propagate_record(&basis.field(0), &spec, &times, &probes).unwrap();
        for (g, c) in rec.overlaps[0].iter().enumerate() {
            let want = if g == 0 { 1.0 } else { 0.0 };
            assert!((c - want).norm() < 1e-10);
        }
        for row in &rec.overlaps {
            let s: f64 = row.iter().map(|c| c.norm_sqr()).sum();
            assert!(s <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn record_rejects_incommensurate_times() {
        let grid = standard_grid();
        let basis = ground(&grid);
        let spec = a_spec(&grid, 0.1);
        let times = [0.0, 1.5 * spec.dt];
        assert!(matches!(
            propagate_record(&basis.field(0), &spec, &times, &[basis.field(0)]),
            Err(Error::Incommensurate { .. })
        ));
    }

    #[test]
    fn half_step_self_convergence() {
        let grid = standard_grid();
        let basis = ground(&grid);
        let probes: Vec<Field> = (0..25).map(|g| basis.field(g)).collect();
        let coarse = a_spec(&grid, 0.1);
        let fine = a_spec(&grid, 0.05);
        let times: Vec<f64> = (0..=25).map(|j| fs_to_au(2.0 * j as f64)).collect();
        let a = propagate_record(&basis.field(0), &coarse, &times, &probes).unwrap();
        let b = propagate_record(&basis.field(0), &fine, &times, &probes).unwrap();
        let mut dev = 0.0f64;
        for (ra, rb) in a.overlaps.iter().zip(&b.overlaps) {
            for (x, y) in ra.iter().zip(rb) {
                dev = dev.max((x - y).norm());
            }
        }
        // Strang error shrinks 4x when halving dt; the coarse run is within
        // a few 1e-4 of the fine one and the next halving would gain 4x more
        assert!(dev < 2e-3, "{dev}");
        let finer = a_spec(&grid, 0.025);
        let c = propagate_record(&basis.field(0), &finer, &times, &probes).unwrap();
        let mut dev2 = 0.0f64;
        for (rb, rc) in b.overlaps.iter().zip(&c.overlaps) {
            for (x, y) in rb.iter().zip(rc) {
                dev2 = dev2.max((x - y).norm());
            }
        }
        let ratio = dev / dev2;
        assert!(ratio > 3.5 && ratio < 4.5, "order ratio {ratio}");
    }

    #[test]
    fn norm_is_conserved() {
        let grid = standard_grid();
        let psi = ground(&grid).field(0);
        let spec = a_spec(&grid, 0.1);
        let mut prop = Propagator::new(&grid, &spec).unwrap();
        let mut v = psi.values().to_vec();
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            prop.step(&mut v);
            let n: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.dx();
            worst = worst.max((n.sqrt() - 1.0).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn edge_ratio_detects_boundary_amplitude() {
        let mut v = vec![Complex64::new(0.0, 0.0); 64];
        v[30] = Complex64::new(1.0, 0.0);
        assert_eq!(edge_ratio(&v, 5), 0.0);
        v[62] = Complex64::new(0.0, 0.01);
        assert!((edge_ratio(&v, 5) - 0.01).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn propagation_is_linear(
            a in (-2.0f64..2.0, -2.0f64..2.0),
            b in (-2.0f64..2.0, -2.0f64..2.0),
            g1 in 0usize..10,
        ) {
            let grid = standard_grid();
            let basis = ground(&grid);
            let spec = a_spec(&grid, 0.1);
            let (alpha, beta) = (Complex64::new(a.0, a.1), Complex64::new(b.0, b.1));
            let f = basis.field(g1);
            let h = Field::from_fn(grid, |x| Complex64::from_polar((-(x - 6.0).powi(2)).exp(), 3.0 * x));
            let combo = Field::new(grid, f.values().iter().zip(h.values()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
            let t = spec.dt * 50.0;
            let pc = propagate(&combo, &spec, t).unwrap();
            let pf = propagate(&f, &spec, t).unwrap();
            let ph = propagate(&h, &spec, t).unwrap();
            let lin = Field::new(grid, pf.values().iter().zip(ph.values()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
            prop_assert!(pc.distance(&lin).unwrap() < 1e-10);
        }
    }
}
