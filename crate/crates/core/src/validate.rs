//! Self-checks of every stage against independent references. Failures are
//! report entries, never errors.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::eigen::{self, analytic_morse_levels};
use crate::inversion::recover_correlations;
use crate::io;
use crate::pipeline::{RunManifest, MANIFEST};
use crate::potinv::{invert_tdse, DEFAULT_ETA};
use crate::propagator::{energy, propagate_snapshots, PropagationSpec, Propagator};
use crate::signs::{kinetic_correction, projector, sign_operator};
use crate::synth::{exact_correlations, synth_closure, synth_direct, DelayAxis, Lattice};
use crate::units::fs_to_au;
use crate::{EigenBasis, Field, PotentialModel, Result};

pub const EIGEN_TOL: f64 = 1e-6;
pub const NORM_TOL: f64 = 1e-9;
pub const ENERGY_TOL: f64 = 1e-8;
pub const SYNTH_TOL: f64 = 1e-6;
pub const INVERSION_TOL: f64 = 1e-6;
pub const PROJECTOR_TOL: f64 = 1e-10;
/// Coverage warning when the mask hull is narrower than this fraction of the default-eta hull.
pub const COVERAGE_FRACTION: f64 = 0.75;

const PROPAGATION_STEPS: usize = 2000;
const COMPLETENESS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "fail",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn below(name: &str, measured: f64, threshold: f64, detail: String) -> Check {
        let status = if measured < threshold {
            Status::Pass
        } else {
            Status::Fail
        };
        Check {
            name: name.into(),
            status,
            measured: Some(measured),
            threshold: Some(threshold),
            detail,
        }
    }

    fn failed(name: &str, detail: String) -> Check {
        Check {
            name: name.into(),
            status: Status::Fail,
            measured: None,
            threshold: None,
            detail,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn count(&self, status: Status) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }

    fn push(&mut self, name: &str, check: Result<Vec<Check>>) {
        match check {
            Ok(cs) => self.checks.extend(cs),
            Err(e) => self.checks.push(Check::failed(name, e.to_string())),
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
        for c in &self.checks {
            writeln!(
                f,
                "{:<4}  {:<24} measured {:>10}  threshold {:>10}  {}",
                c.status,
                c.name,
                num(c.measured),
                num(c.threshold),
                c.detail
            )?;
        }
        write!(
            f,
            "{} pass, {} warn, {} fail",
            self.count(Status::Pass),
            self.count(Status::Warn),
            self.count(Status::Fail)
        )
    }
}

fn eigen_oracle(cfg: &RunConfig, model: &PotentialModel, ground: &EigenBasis) -> Result<Vec<Check>> {
    if !matches!(model, PotentialModel::Morse { .. }) {
        return Ok(vec![Check {
            name: "eigen_oracle".into(),
            status: Status::Warn,
            measured: None,
            threshold: Some(EIGEN_TOL),
            detail: "ground curve is not Morse; no closed-form levels".into(),
        }]);
    }
    let mut dev = 0.0f64;
    let mut levels = 0;
    for g in 0..cfg.basis_count {
        match analytic_morse_levels(model, cfg.mass, g) {
            Ok(e) => {
                dev = dev.max((ground.energy(g) - e).abs());
                levels += 1;
            }
            Err(_) => break,
        }
    }
    Ok(vec![Check::below(
        "eigen_oracle",
        dev,
        EIGEN_TOL,
        format!("max |E_FGH - E_Morse| over {levels} levels (Eh)"),
    )])
}

fn propagator_conservation(cfg: &RunConfig, ground: &EigenBasis, excited: &[f64]) -> Result<Vec<Check>> {
    let grid = *ground.grid();
    let spec = PropagationSpec::new(excited.to_vec(), cfg.mass, fs_to_au(cfg.propagation_dt_fs));
    let mut prop = Propagator::new(&grid, &spec)?;
    let mut psi = ground.field(0);
    let n0 = psi.norm_sqr();
    let e0 = energy(&psi, excited, cfg.mass)?;
    let (mut dn, mut de) = (0.0f64, 0.0f64);
    for _ in 0..PROPAGATION_STEPS {
        prop.step(psi.values_mut());
        dn = dn.max((psi.norm_sqr() - n0).abs() / n0);
        de = de.max((energy(&psi, excited, cfg.mass)? - e0).abs() / e0.abs());
    }
    Ok(vec![
        Check::below(
            "propagator_norm",
            dn,
            NORM_TOL,
            format!("relative norm drift over {PROPAGATION_STEPS} steps"),
        ),
        Check::below(
            "propagator_energy",
            de,
            ENERGY_TOL,
            format!("relative energy drift over {PROPAGATION_STEPS} steps"),
        ),
    ])
}

/// Direct and closure cubes on a small lattice (t 0-50 fs step 1, tau32 3-300 fs).
fn synth_equivalence(cfg: &RunConfig, ground: &EigenBasis, excited: &PotentialModel) -> Result<Vec<Check>> {
    let lattice = Lattice {
        t: DelayAxis::from_range(0.0, 50.0, 1.0)?,
        tau32: DelayAxis::from_range(3.0, 300.0, 1.0)?,
    };
    let pulses = cfg.pulses(ground.omega0())?;
    let opts = cfg.synth_options();
    let probe_count = ground.len().min(cfg.basis_count.max(60));
    let probe = exact_correlations(&ground.truncated(probe_count)?, excited, &lattice.t, &opts)?;
    let count = (cfg.basis_count..=probe_count)
        .find(|&k| {
            (0..lattice.t.len)
                .all(|i| 1.0 - probe.row(i)[..k].iter().map(|c| c.norm_sqr()).sum::<f64>() <= COMPLETENESS)
        })
        .unwrap_or(probe_count);
    let closure = synth_closure(&ground.truncated(count)?, &probe.truncated(count)?, &pulses, &lattice)?;
    let direct = synth_direct(ground, excited, &pulses, &lattice, &opts)?;
    let scale = direct.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let dev = direct
        .values
        .iter()
        .zip(&closure.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale;
    Ok(vec![Check::below(
        "synth_equivalence",
        dev,
        SYNTH_TOL,
        format!("max |P_direct - P_closure| / max |P| with {count} closure levels"),
    )])
}

/// Closure cube of known `c_g^2` on the configured lattice, inverted back.
fn inversion_identity(cfg: &RunConfig, ground: &EigenBasis, excited: &PotentialModel) -> Result<Vec<Check>> {
    let lattice = cfg.lattice()?;
    let basis = ground.truncated(cfg.basis_count)?;
    let exact = exact_correlations(&basis, excited, &lattice.t, &cfg.synth_options())?;
    let cube = synth_closure(&basis, &exact, &cfg.pulses(ground.omega0())?, &lattice)?;
    let rec = recover_correlations(&cube, &basis, cfg.basis_count)?;
    let mut worst = 0.0f64;
    for g in 0..basis.len() {
        let col = exact.column(g);
        let scale = col.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        for (i, c) in col.iter().enumerate() {
            worst = worst.max((rec.squares.get(i, g) - c * c).norm() / scale);
        }
    }
    Ok(vec![Check::below(
        "inversion_identity",
        worst,
        INVERSION_TOL,
        format!("max_g max_t |P_g - c_g^2| / max|c_g|^2 over {} levels", basis.len()),
    )])
}

/// Deterministic sign patterns: every level whose index has bit `k` set is flipped.
fn sign_patterns(count: usize) -> Vec<Vec<f64>> {
    let bits = usize::BITS - count.leading_zeros();
    (0..bits)
        .map(|k| {
            (0..count)
                .map(|g| if g > 0 && g >> k & 1 == 1 { -1.0 } else { 1.0 })
                .collect()
        })
        .chain(std::iter::once(
            (0..count).map(|g| if g % 3 == 2 { -1.0 } else { 1.0 }).collect(),
        ))
        .filter(|a: &Vec<f64>| a.iter().any(|s| *s < 0.0))
        .collect()
}

fn supplement(cfg: &RunConfig, ground: &EigenBasis) -> Result<Vec<Check>> {
    let count = cfg.basis_count;
    let basis = ground.truncated(count)?;
    let p = projector(&basis, count)?;
    let patterns = sign_patterns(count);
    let mut worst = 0.0f64;
    let mut min_dt = f64::INFINITY;
    for a in &patterns {
        let one = sign_operator(&basis, a)?;
        worst = worst.max((&one * &one - &p).amax());
        min_dt = min_dt.min(kinetic_correction(&basis, a)?.norm());
    }
    let dt_ok = if min_dt > 0.0 { Status::Pass } else { Status::Fail };
    Ok(vec![
        Check::below(
            "sign_operator_square",
            worst,
            PROJECTOR_TOL,
            format!("max |1~^2 - P| over {} sign vectors", patterns.len()),
        ),
        Check {
            name: "kinetic_correction".into(),
            status: dt_ok,
            measured: Some(min_dt),
            threshold: Some(0.0),
            detail: "min ||1~[T,1~]|| over nontrivial vectors (must be > 0)".into(),
        },
    ])
}

fn mask_hull(snapshots: &[Field], cfg: &RunConfig, eta: f64) -> Result<Option<(f64, f64)>> {
    Ok(invert_tdse(snapshots, cfg.mass, fs_to_au(cfg.potinv_dt_fs), eta)?.coverage())
}

/// Mask extent at the configured eta relative to the default, on exact snapshots.
fn potinv_coverage(cfg: &RunConfig, ground: &EigenBasis, excited: &[f64]) -> Result<Vec<Check>> {
    let grid = *ground.grid();
    let spec = PropagationSpec::new(excited.to_vec(), cfg.mass, fs_to_au(cfg.propagation_dt_fs));
    let mut ratios = Vec::new();
    for &tc in &cfg.snapshot_times_fs {
        let times: Vec<f64> = (-4..=4).map(|k| fs_to_au(tc + k as f64 * cfg.potinv_dt_fs)).collect();
        let traj = propagate_snapshots(&ground.field(0), &spec, &times)?;
        let snaps: Vec<Field> = traj
            .states
            .into_iter()
            .map(|s| Field::new(grid, s))
            .collect::<Result<_>>()?;
        let width = |h: Option<(f64, f64)>| h.map_or(0.0, |(a, b)| b - a);
        let reference = width(mask_hull(&snaps, cfg, DEFAULT_ETA)?);
        let actual = width(mask_hull(&snaps, cfg, cfg.eta)?);
        ratios.push(if reference > 0.0 { actual / reference } else { 1.0 });
    }
    let ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let status = if ratio < COVERAGE_FRACTION {
        Status::Warn
    } else {
        Status::Pass
    };
    Ok(vec![Check {
        name: "potinv_coverage".into(),
        status,
        measured: Some(ratio),
        threshold: Some(COVERAGE_FRACTION),
        detail: format!("mask width at eta = {} relative to eta = {DEFAULT_ETA}", cfg.eta),
    }])
}

/// Re-hash manifest entries and reload every stored array in `dir`.
fn artifacts(dir: &Path) -> Result<Vec<Check>> {
    if !dir.join(MANIFEST).exists() {
        return Ok(vec![Check {
            name: "artifacts".into(),
            status: Status::Warn,
            measured: None,
            threshold: None,
            detail: format!("no {MANIFEST} in {}", dir.display()),
        }]);
    }
    let manifest = RunManifest::load(dir)?;
    let mut problems: Vec<String> = manifest
        .verify(dir)
        .into_iter()
        .map(|p| format!("{p}: checksum"))
        .collect();
    let mut names: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    names.sort();
    for p in &names {
        if let Err(e) = io::load_array(p) {
            problems.push(e.to_string());
        }
    }
    let status = if problems.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    };
    let detail = if problems.is_empty() {
        format!("{} arrays verified in {}", names.len(), dir.display())
    } else {
        problems.join("; ")
    };
    Ok(vec![Check {
        name: "artifacts".into(),
        status,
        measured: Some(problems.len() as f64),
        threshold: Some(1.0),
        detail,
    }])
}

/// Run every check for `cfg`; `artifact_dir`, when given, is verified too.
pub fn validate(cfg: &RunConfig, artifact_dir: Option<&Path>) -> Report {
    let mut report = Report::default();
    if let Err(e) = cfg.validate() {
        report.checks.push(Check::failed("config", e.to_string()));
        return report;
    }
    let setup = (|| {
        let grid = cfg.grid()?;
        let ground_model = cfg.ground.load(&grid)?;
        let excited = cfg.excited.load(&grid)?;
        let ground = eigen::solve(&grid, &ground_model, cfg.mass, grid.len())?;
        let sampled = excited.sample_on_grid(&grid)?;
        Ok::<_, crate::Error>((ground_model, excited, ground, sampled))
    })();
    let (ground_model, excited, ground, sampled) = match setup {
        Ok(s) => s,
        Err(e) => {
            report.checks.push(Check::failed("setup", e.to_string()));
            return report;
        }
    };
    report.push("eigen_oracle", eigen_oracle(cfg, &ground_model, &ground));
    report.push("propagator", propagator_conservation(cfg, &ground, &sampled));
    report.push("synth_equivalence", synth_equivalence(cfg, &ground, &excited));
    report.push("inversion_identity", inversion_identity(cfg, &ground, &excited));
    report.push("supplement", supplement(cfg, &ground));
    report.push("potinv_coverage", potinv_coverage(cfg, &ground, &sampled));
    if let Some(dir) = artifact_dir {
        report.push("artifacts", artifacts(dir));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_are_nontrivial_and_gauge_fixed() {
        let p = sign_patterns(25);
        assert!(p.len() >= 5);
        for a in &p {
            assert_eq!(a[0], 1.0);
            assert!(a.iter().any(|s| *s < 0.0));
        }
    }

    #[test]
    fn report_status() {
        let mut r = Report::default();
        r.checks.push(Check::below("a", 1.0, 2.0, String::new()));
        assert!(r.passed());
        r.checks.push(Check::below("b", 3.0, 2.0, String::new()));
        assert!(!r.passed());
        assert_eq!(r.count(Status::Fail), 1);
        assert!(r.to_string().ends_with("1 pass, 0 warn, 1 fail"));
    }
}
