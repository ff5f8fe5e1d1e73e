//! Heterodyne third-order polarization on the `(t = tau21 = tau43, tau32)`
//! delay lattice, within the delta-pulse and Condon approximations.
//!
//! Two routes are provided. [`synth_direct`] evolves the excited-state packet
//! with the split-operator propagator and the intermediate ground-state
//! interval through the complete grid spectrum of `H_g`; [`synth_closure`]
//! evaluates the truncated sum over ground levels from the cross-correlations.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::inversion::CorrelationSet;
use crate::propagator::{propagate_record, propagate_snapshots, PropagationSpec};
use crate::units::{fs_to_au, whole_steps};
use crate::{EigenBasis, Error, Field, PotentialModel, Result};

/// Uniform delay axis in femtoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl DelayAxis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !start.is_finite() || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "delay axis needs step > 0 and at least one sample (start {start}, step {step}, len {len})"
            )));
        }
        Ok(DelayAxis { start, step, len })
    }

    /// Inclusive range `min..=max` with spacing `step`.
    pub fn from_range(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(max >= min) || !(step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad delay range {min}..{max} step {step}"
            )));
        }
        let len = whole_steps(max - min, step)? + 1;
        DelayAxis::new(min, step, len)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    pub fn values_au(&self) -> Vec<f64> {
        (0..self.len).map(|i| fs_to_au(self.value(i))).collect()
    }

    pub fn last(&self) -> f64 {
        self.value(self.len - 1)
    }

    /// Index of the sample equal (to 1e-6 fs) to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let u = (t - self.start) / self.step;
        let i = u.round();
        if (u - i).abs() * self.step > 1e-6 || i < 0.0 || i as usize >= self.len {
            None
        } else {
            Some(i as usize)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub t: DelayAxis,
    pub tau32: DelayAxis,
}

impl Lattice {
    /// 0-200 fs diagonal at 0.2 fs, tau32 3-6000 fs at 1 fs.
    pub fn full_li2() -> Self {
        Lattice {
            t: DelayAxis::new(0.0, 0.2, 1001).unwrap(),
            tau32: DelayAxis::new(3.0, 1.0, 5998).unwrap(),
        }
    }

    /// 0-80 fs diagonal at 0.2 fs, tau32 3-6000 fs at 1 fs.
    pub fn full_dli2() -> Self {
        Lattice {
            t: DelayAxis::new(0.0, 0.2, 401).unwrap(),
            tau32: DelayAxis::new(3.0, 1.0, 5998).unwrap(),
        }
    }

    /// Reduced lattice for routine runs: 0-80 fs diagonal, tau32 3-1500 fs.
    pub fn desk() -> Self {
        Lattice {
            t: DelayAxis::new(0.0, 0.2, 401).unwrap(),
            tau32: DelayAxis::new(3.0, 1.0, 1498).unwrap(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub mu: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    /// Ground zero-point frequency (hartree).
    pub omega0: f64,
}

impl PulseConfig {
    pub fn new(mu: f64, eps1: f64, eps2: f64, eps3: f64, omega0: f64) -> Result<Self> {
        if [mu, eps1, eps2, eps3, omega0]
            .iter()
            .any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "pulse constants and omega0 must be positive".into(),
            ));
        }
        Ok(PulseConfig {
            mu,
            eps1,
            eps2,
            eps3,
            omega0,
        })
    }

    /// Transition dipole 2 a.u. and 1e-4 a.u. pulse amplitudes.
    pub fn standard(omega0: f64) -> Self {
        PulseConfig {
            mu: 2.0,
            eps1: 1e-4,
            eps2: 1e-4,
            eps3: 1e-4,
            omega0,
        }
    }

    /// `mu^4 eps1 eps2 eps3`.
    pub fn amplitude(&self) -> f64 {
        self.mu.powi(4) * self.eps1 * self.eps2 * self.eps3
    }

    /// `i^3 mu^4 eps1 eps2 eps3 exp(i omega0 (tau21 + tau43))`, delays in fs.
    pub fn prefactor_general(&self, tau21_fs: f64, tau43_fs: f64) -> Complex64 {
        let phase = self.omega0 * fs_to_au(tau21_fs + tau43_fs);
        Complex64::new(0.0, -self.amplitude()) * Complex64::from_polar(1.0, phase)
    }

    /// Prefactor on the diagonal `tau21 = tau43 = t`.
    pub fn prefactor(&self, t_fs: f64) -> Complex64 {
        self.prefactor_general(t_fs, t_fs)
    }

    /// `i mu eps1`, relating the first-order packet to `exp(-i H_e t) psi_0`.
    pub fn first_order_scale(&self) -> Complex64 {
        Complex64::new(0.0, self.mu * self.eps1)
    }
}

pub fn prefactor(pulses: &PulseConfig, t_fs: f64) -> Complex64 {
    pulses.prefactor(t_fs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Closure,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Direct => "direct",
            Provenance::Closure => "closure",
        }
    }
}

/// Complex `P3(t, tau32)` stored t-major.
#[derive(Clone, Debug)]
pub struct SignalCube {
    pub lattice: Lattice,
    pub values: Vec<Complex64>,
    pub pulses: PulseConfig,
    pub provenance: Provenance,
    pub max_edge_ratio: f64,
}

impl SignalCube {
    pub fn new(lattice: Lattice, values: Vec<Complex64>, pulses: PulseConfig, provenance: Provenance) -> Result<Self> {
        let expected = lattice.t.len * lattice.tau32.len;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("signal cube"));
        }
        Ok(SignalCube {
            lattice,
            values,
            pulses,
            provenance,
            max_edge_ratio: 0.0,
        })
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let m = self.lattice.tau32.len;
        &self.values[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.lattice.tau32.len + j]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.lattice.t.len, self.lattice.tau32.len]
    }
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    /// Split-operator step (fs).
    pub dt_fs: f64,
    /// Number of ground levels `N+1` the reconstruction will resolve; sets the Nyquist guard.
    pub basis_count: usize,
    /// Edge/max amplitude ratio above which synthesis aborts.
    pub leak_abort: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            dt_fs: 0.1,
            basis_count: 25,
            leak_abort: 1e-2,
        }
    }
}

/// Edge/max ratio above which a run carries a boundary warning.
pub const LEAK_WARN: f64 = 1e-6;

/// Require `pi / step > 1.1 * omega_max` for the tau32 sampling.
pub fn check_nyquist(tau32_step_fs: f64, omega_tilde_max: f64) -> Result<()> {
    let nyquist = PI / fs_to_au(tau32_step_fs);
    if nyquist > 1.1 * omega_tilde_max {
        Ok(())
    } else {
        Err(Error::Nyquist {
            nyquist,
            omega_max: omega_tilde_max,
        })
    }
}

fn guard(basis: &EigenBasis, count: usize, lattice: &Lattice) -> Result<()> {
    if count == 0 || count > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "basis count {count} not available (have {})",
            basis.len()
        )));
    }
    check_nyquist(lattice.tau32.step, basis.energy(count - 1) - basis.omega0())
}

fn check_leak(ratio: f64, opts: &SynthOptions) -> Result<()> {
    if ratio > opts.leak_abort {
        Err(Error::BoundaryLeak {
            ratio,
            limit: opts.leak_abort,
        })
    } else {
        Ok(())
    }
}

/// Exact cross-correlations `c_g(t) = <psi_g| exp(-i H_e t) |psi_0>` on the
/// diagonal axis, recorded along one split-operator trajectory.
pub fn exact_correlations(
    basis: &EigenBasis,
    excited: &PotentialModel,
    t_axis: &DelayAxis,
    opts: &SynthOptions,
) -> Result<CorrelationSet> {
    let grid = *basis.grid();
    let potential = excited.sample_on_grid(&grid)?;
    let spec = PropagationSpec::new(potential, basis.mass(), fs_to_au(opts.dt_fs));
    let probes: Vec<Field> = (0..basis.len()).map(|g| basis.field(g)).collect();
    let rec = propagate_record(&basis.field(0), &spec, &t_axis.values_au(), &probes)?;
    check_leak(rec.max_edge_ratio, opts)?;
    let mut corr = CorrelationSet::new(*t_axis, basis.len(), rec.overlaps.concat())?;
    corr.max_edge_ratio = rec.max_edge_ratio;
    Ok(corr)
}

fn phase_table(freqs: &[f64], tau_au: &[f64]) -> Vec<Complex64> {
    // row-major [tau][freq]
    let mut out = Vec::with_capacity(freqs.len() * tau_au.len());
    for &tau in tau_au {
        out.extend(freqs.iter().map(|w| Complex64::from_polar(1.0, -w * tau)));
    }
    out
}

fn contract(table: &[Complex64], width: usize, weights: &[Complex64], out: &mut [Complex64]) {
    for (o, row) in out.iter_mut().zip(table.chunks_exact(width)) {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, w) in row.iter().zip(weights) {
            acc += p * w;
        }
        *o = acc;
    }
}

/// Closure sum `P3 = eps~(t) sum_g exp(-i w~_g tau32) c_g(t)^2`.
pub fn synth_closure(
    basis: &EigenBasis,
    corr: &CorrelationSet,
    pulses: &PulseConfig,
    lattice: &Lattice,
) -> Result<SignalCube> {
    let count = corr.count();
    if count != basis.len() {
        return Err(Error::LengthMismatch {
            expected: basis.len(),
            got: count,
        });
    }
    if corr.t_axis != lattice.t {
        return Err(Error::InvalidArgument(
            "correlation time axis differs from the lattice".into(),
        ));
    }
    guard(basis, count, lattice)?;
    let shifted = basis.shifted();
    let tau_au = lattice.tau32.values_au();
    let table = phase_table(&shifted, &tau_au);
    let m = lattice.tau32.len;
    let mut values = vec![Complex64::new(0.0, 0.0); lattice.t.len * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let sq: Vec<Complex64> = corr.row(i).iter().map(|c| c * c).collect();
        contract(&table, count, &sq, row);
        let pre = pulses.prefactor(lattice.t.value(i));
        row.iter_mut().for_each(|v| *v *= pre);
    });
    let mut cube = SignalCube::new(*lattice, values, *pulses, Provenance::Closure)?;
    cube.max_edge_ratio = corr.max_edge_ratio;
    Ok(cube)
}

struct DirectParts {
    /// `<psi_k|a(t)>` for every diagonal time and every grid eigenstate
    ket: Vec<Vec<Complex64>>,
    /// `<xi(t)|psi_k>`
    bra: Vec<Vec<Complex64>>,
    leak: f64,
}

fn direct_parts(
    ground: &EigenBasis,
    excited: &PotentialModel,
    ket_axis: &DelayAxis,
    bra_axis: &DelayAxis,
    opts: &SynthOptions,
) -> Result<DirectParts> {
    let grid = *ground.grid();
    if ground.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "direct synthesis needs the complete ground spectrum ({} states), got {}",
            grid.len(),
            ground.len()
        )));
    }
    let potential = excited.sample_on_grid(&grid)?;
    let spec = PropagationSpec::new(potential, ground.mass(), fs_to_au(opts.dt_fs));
    let psi0 = ground.field(0);
    // a(t) = exp(-i H_e t) psi0; xi(t) = exp(+i H_e t) psi0 by a backward sweep
    let fwd = propagate_snapshots(&psi0, &spec, &ket_axis.values_au())?;
    let bwd = propagate_snapshots(&psi0, &spec.clone().backward(), &bra_axis.values_au())?;
    let leak = fwd.max_edge_ratio.max(bwd.max_edge_ratio);
    check_leak(leak, opts)?;
    let ket = fwd.states.par_iter().map(|a| ground.project(a)).collect();
    let bra = bwd
        .states
        .par_iter()
        .map(|xi| ground.project(xi).into_iter().map(|c| c.conj()).collect())
        .collect();
    Ok(DirectParts { ket, bra, leak })
}

/// `P3 = eps~ <psi0| exp(-i H_e t) exp(-i H~_g tau32) exp(-i H_e t) |psi0>`
/// for every lattice point. `ground` must hold the complete grid spectrum;
/// `exp(-i H~_g tau32)` is applied as `exp(-i H_g tau32)` followed by the
/// phase `exp(+i omega0 tau32)`.
pub fn synth_direct(
    ground: &EigenBasis,
    excited: &PotentialModel,
    pulses: &PulseConfig,
    lattice: &Lattice,
    opts: &SynthOptions,
) -> Result<SignalCube> {
    guard(ground, opts.basis_count, lattice)?;
    let parts = direct_parts(ground, excited, &lattice.t, &lattice.t, opts)?;
    let tau_au = lattice.tau32.values_au();
    let table = phase_table(ground.energies(), &tau_au);
    let shift: Vec<Complex64> = tau_au
        .iter()
        .map(|t| Complex64::from_polar(1.0, ground.omega0() * t))
        .collect();
    let n = ground.len();
    let m = lattice.tau32.len;
    let mut values = vec![Complex64::new(0.0, 0.0); lattice.t.len * m];
    values.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let weights: Vec<Complex64> = parts.bra[i].iter().zip(&parts.ket[i]).map(|(b, a)| b * a).collect();
        contract(&table, n, &weights, row);
        let pre = pulses.prefactor(lattice.t.value(i));
        for (v, s) in row.iter_mut().zip(&shift) {
            *v *= s * pre;
        }
    });
    let mut cube = SignalCube::new(*lattice, values, *pulses, Provenance::Direct)?;
    cube.max_edge_ratio = parts.leak;
    Ok(cube)
}

/// Off-diagonal form `P3(tau21, tau32, tau43)`, laid out `[tau21][tau43][tau32]`.
/// Not used by the reconstruction, which needs only the diagonal.
pub fn synth_direct_offdiag(
    ground: &EigenBasis,
    excited: &PotentialModel,
    pulses: &PulseConfig,
    tau21: &DelayAxis,
    tau43: &DelayAxis,
    tau32: &DelayAxis,
    opts: &SynthOptions,
) -> Result<Vec<Complex64>> {
    let lattice = Lattice {
        t: *tau21,
        tau32: *tau32,
    };
    guard(ground, opts.basis_count, &lattice)?;
    let parts = direct_parts(ground, excited, tau21, tau43, opts)?;
    let tau_au = tau32.values_au();
    let table = phase_table(ground.energies(), &tau_au);
    let n = ground.len();
    let m = tau32.len;
    let mut out = vec![Complex64::new(0.0, 0.0); tau21.len * tau43.len * m];
    out.par_chunks_mut(m).enumerate().for_each(|(idx, row)| {
        let (i, j) = (idx / tau43.len, idx % tau43.len);
        let weights: Vec<Complex64> = parts.bra[j].iter().zip(&parts.ket[i]).map(|(b, a)| b * a).collect();
        contract(&table, n, &weights, row);
        let pre = pulses.prefactor_general(tau21.value(i), tau43.value(j));
        for (v, t) in row.iter_mut().zip(&tau_au) {
            *v *= Complex64::from_polar(1.0, ground.omega0() * t) * pre;
        }
    });
    Ok(out)
}
