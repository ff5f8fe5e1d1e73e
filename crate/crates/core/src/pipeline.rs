//! End-to-end runs: eigs -> synth -> invert -> signs -> potential.
//!
//! Every stage reads its inputs from the output directory and writes its own
//! artifacts there, so any stage can be re-run on its own. `manifest.json` is
//! rewritten after each stage.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SynthMode};
use crate::eigen;
use crate::grid::fidelity;
use crate::inversion::{recover_correlations, CorrelationSet, PeakSummary};
use crate::io::{self, ArrayData, Axis, PlotInput, PlotKind};
use crate::potinv::DEFAULT_ETA;
use crate::propagator::{propagate_snapshots, PropagationSpec};
use crate::signs::{field_potential, resolve, ReconstructedField};
use crate::synth::{
    exact_correlations, synth_closure, synth_direct, DelayAxis, Lattice, Provenance, SignalCube, LEAK_WARN,
};
use crate::units::fs_to_au;
use crate::{EigenBasis, Error, Field, Grid, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Eigs,
    Synth,
    Invert,
    Signs,
    Potential,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Eigs, Stage::Synth, Stage::Invert, Stage::Signs, Stage::Potential];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Eigs => "eigs",
            Stage::Synth => "synth",
            Stage::Invert => "invert",
            Stage::Signs => "signs",
            Stage::Potential => "potential",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub artifacts: Vec<Artifact>,
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.to_text(),
            stages: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage.name())
    }

    pub fn all_ok(&self) -> bool {
        Stage::ALL
            .iter()
            .all(|s| self.stage(*s).is_some_and(|r| r.status == StageStatus::Ok))
    }

    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.stages.iter().flat_map(|r| r.warnings.iter())
    }

    /// Replace the record for its stage and drop the records of later stages,
    /// whose inputs it may have changed.
    fn record(&mut self, rec: StageRecord) {
        let stage: Stage = rec.stage.parse().expect("known stage name");
        self.stages
            .retain(|r| r.stage.parse::<Stage>().is_ok_and(|s| s < stage));
        self.stages.push(rec);
    }

    /// Re-hash every referenced file; returns the paths that are missing or changed.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.stages
            .iter()
            .flat_map(|r| r.artifacts.iter())
            .filter(|a| {
                fs::read(dir.join(&a.path))
                    .map(|b| io::sha256_hex(&b) != a.sha256)
                    .unwrap_or(true)
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

/// Collects artifacts, metrics and warnings while a stage runs.
struct StageOutput<'a> {
    dir: &'a Path,
    artifacts: Vec<Artifact>,
    metrics: BTreeMap<String, f64>,
    warnings: Vec<String>,
}

impl<'a> StageOutput<'a> {
    fn new(dir: &'a Path) -> Self {
        StageOutput {
            dir,
            artifacts: Vec::new(),
            metrics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn track(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(name))?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: io::sha256_hex(&bytes),
        });
        Ok(())
    }

    fn array(
        &mut self,
        name: &str,
        shape: &[usize],
        axes: Vec<Axis>,
        data: &ArrayData,
        provenance: &str,
    ) -> Result<()> {
        let meta = io::store_array(&self.dir.join(name), shape, axes, data, provenance)?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: meta.sha256,
        });
        self.track(&Path::new(name).with_extension("json").to_string_lossy())
    }

    fn csv(&mut self, name: &str, kind: PlotKind, input: &PlotInput) -> Result<()> {
        io::emit_plot_csv(kind, input, &self.dir.join(name))?;
        self.track(name)
    }

    /// JSON has no non-finite numbers; those become warnings.
    fn metric(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.metrics.insert(key.into(), value);
        } else {
            self.warnings.push(format!("{key} = {value}"));
        }
    }
}

fn missing(name: &str, dir: &Path) -> Error {
    Error::InvalidArgument(format!(
        "{} not found in {}; run the earlier stages first",
        name,
        dir.display()
    ))
}

fn load(dir: &Path, name: &str) -> Result<(ArrayData, io::ArrayMeta)> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(missing(name, dir));
    }
    io::load_array(&path)
}

fn axis_of(meta: &io::ArrayMeta, k: usize) -> Result<DelayAxis> {
    let a = meta
        .axes
        .get(k)
        .ok_or_else(|| Error::Format(format!("axis {k} missing from metadata")))?;
    match (a.start, a.step) {
        (Some(start), Some(step)) => DelayAxis::new(start, step, meta.shape[k]),
        _ => Err(Error::Format(format!("axis {:?} is not uniform", a.name))),
    }
}

fn x_axis(grid: &Grid) -> Axis {
    Axis::uniform("x", "bohr", grid.x_min(), grid.dx())
}

fn t_axis_meta(axis: &DelayAxis) -> Axis {
    Axis::uniform("t", "fs", axis.start, axis.step)
}

fn level_axis() -> Axis {
    Axis::uniform("g", "index", 0.0, 1.0)
}

/// Ground eigenbasis persisted by the eigs stage (complete grid spectrum).
pub fn load_ground(dir: &Path, cfg: &RunConfig) -> Result<EigenBasis> {
    let grid = cfg.grid()?;
    let energies = load(dir, "ground_energies.bin")?.0.into_real()?;
    let (states, meta) = load(dir, "ground_states.bin")?;
    if meta.shape != [energies.len(), grid.len()] {
        return Err(Error::Format(format!(
            "ground_states.bin shape {:?} does not match the grid",
            meta.shape
        )));
    }
    let states: Vec<Vec<f64>> = states
        .into_real()?
        .chunks_exact(grid.len())
        .map(|c| c.to_vec())
        .collect();
    EigenBasis::from_parts(grid, cfg.mass, energies, states)
}

pub fn load_cube(dir: &Path, cfg: &RunConfig, omega0: f64) -> Result<SignalCube> {
    let (data, meta) = load(dir, "cube.bin")?;
    let lattice = Lattice {
        t: axis_of(&meta, 0)?,
        tau32: axis_of(&meta, 1)?,
    };
    let provenance = match meta.provenance.as_str() {
        "direct" => Provenance::Direct,
        "closure" => Provenance::Closure,
        other => return Err(Error::Format(format!("unknown cube provenance {other:?}"))),
    };
    SignalCube::new(lattice, data.into_complex()?, cfg.pulses(omega0)?, provenance)
}

/// Sign-ambiguous `a_g c_g(t)` with the branch-confidence flags.
pub fn load_roots(dir: &Path) -> Result<CorrelationSet> {
    let (data, meta) = load(dir, "correlations.bin")?;
    let t_axis = axis_of(&meta, 0)?;
    let count = meta.shape[1];
    let flags: Vec<bool> = load(dir, "confidence.bin")?
        .0
        .into_real()?
        .into_iter()
        .map(|f| f != 0.0)
        .collect();
    CorrelationSet::with_confidence(t_axis, count, data.into_complex()?, flags)
}

pub fn load_field(dir: &Path, name: &str, grid: &Grid) -> Result<ReconstructedField> {
    let (data, meta) = load(dir, name)?;
    if meta.shape.get(1) != Some(&grid.len()) {
        return Err(Error::GridMismatch);
    }
    ReconstructedField::new(*grid, axis_of(&meta, 0)?, data.into_complex()?)
}

fn eigs_stage(cfg: &RunConfig, out: &mut StageOutput) -> Result<()> {
    let grid = cfg.grid()?;
    let ground_model = cfg.ground.load(&grid)?;
    let excited_model = cfg.excited.load(&grid)?;
    let basis = eigen::solve(&grid, &ground_model, cfg.mass, grid.len())?;
    if cfg.basis_count > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "basis.count {} exceeds the grid size",
            cfg.basis_count
        )));
    }
    let n = grid.len();
    out.array(
        "ground_energies.bin",
        &[n],
        vec![level_axis()],
        &ArrayData::Real(basis.energies().to_vec()),
        "fgh",
    )?;
    out.array(
        "ground_states.bin",
        &[n, n],
        vec![level_axis(), x_axis(&grid)],
        &ArrayData::Real(basis.states().concat()),
        "fgh",
    )?;
    for (name, model) in [
        ("ground_potential.bin", &ground_model),
        ("excited_potential.bin", &excited_model),
    ] {
        out.array(
            name,
            &[n],
            vec![x_axis(&grid)],
            &ArrayData::Real(model.sample_on_grid(&grid)?),
            "sampled",
        )?;
    }
    out.metric("omega0_hartree", basis.omega0());
    out.metric(
        "top_level_shift_hartree",
        basis.energy(cfg.basis_count - 1) - basis.omega0(),
    );
    let unbound = basis.unbound().iter().filter(|&&g| g < cfg.basis_count).count();
    if unbound > 0 {
        out.warnings.push(format!(
            "{unbound} of the first {} ground levels are unbound",
            cfg.basis_count
        ));
    }
    Ok(())
}

fn synth_stage(cfg: &RunConfig, out: &mut StageOutput) -> Result<()> {
    let dir = out.dir;
    let ground = load_ground(dir, cfg)?;
    let grid = *ground.grid();
    let excited = cfg.excited.load(&grid)?;
    let lattice = cfg.lattice()?;
    let pulses = cfg.pulses(ground.omega0())?;
    let opts = cfg.synth_options();
    let basis = ground.truncated(cfg.basis_count)?;
    let exact = exact_correlations(&basis, &excited, &lattice.t, &opts)?;
    let cube = match cfg.synth_mode {
        SynthMode::Closure => synth_closure(&basis, &exact, &pulses, &lattice)?,
        SynthMode::Direct => synth_direct(&ground, &excited, &pulses, &lattice, &opts)?,
    };
    let spec = PropagationSpec::new(
        excited.sample_on_grid(&grid)?,
        cfg.mass,
        fs_to_au(cfg.propagation_dt_fs),
    );
    let traj = propagate_snapshots(&ground.field(0), &spec, &lattice.t.values_au())?;
    let leak = traj.max_edge_ratio.max(cube.max_edge_ratio);
    if leak > cfg.leak_abort {
        return Err(Error::BoundaryLeak {
            ratio: leak,
            limit: cfg.leak_abort,
        });
    }
    if leak > LEAK_WARN {
        out.warnings
            .push(format!("wavepacket edge/max amplitude reached {leak:.3e}"));
    }
    out.array(
        "cube.bin",
        &[lattice.t.len, lattice.tau32.len],
        vec![
            t_axis_meta(&lattice.t),
            Axis::uniform("tau32", "fs", lattice.tau32.start, lattice.tau32.step),
        ],
        &ArrayData::Complex(cube.values.clone()),
        cube.provenance.tag(),
    )?;
    out.array(
        "correlations_exact.bin",
        &[lattice.t.len, exact.count()],
        vec![t_axis_meta(&lattice.t), level_axis()],
        &ArrayData::Complex(exact.values().to_vec()),
        "propagation",
    )?;
    out.array(
        "wavefunction_exact.bin",
        &[lattice.t.len, grid.len()],
        vec![t_axis_meta(&lattice.t), x_axis(&grid)],
        &ArrayData::Complex(traj.states.concat()),
        "propagation",
    )?;
    out.metric("max_edge_ratio", leak);
    out.metric("cube_max_abs", cube.values.iter().map(|v| v.norm()).fold(0.0, f64::max));
    let missing_pop = (0..lattice.t.len)
        .map(|i| 1.0 - exact.row(i).iter().map(|c| c.norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    out.metric("max_population_outside_basis", missing_pop);
    Ok(())
}

fn invert_stage(cfg: &RunConfig, out: &mut StageOutput) -> Result<()> {
    let dir = out.dir;
    let ground = load_ground(dir, cfg)?;
    let cube = load_cube(dir, cfg, ground.omega0())?;
    let basis = ground.truncated(cfg.basis_count)?;
    let rec = recover_correlations(&cube, &basis, cfg.basis_count)?;
    let t = rec.roots.t_axis;
    let shape = [t.len, rec.roots.count()];
    let axes = || vec![t_axis_meta(&t), level_axis()];
    out.array(
        "correlations_squared.bin",
        &shape,
        axes(),
        &ArrayData::Complex(rec.squares.values().to_vec()),
        "inversion",
    )?;
    out.array(
        "correlations.bin",
        &shape,
        axes(),
        &ArrayData::Complex(rec.roots.values().to_vec()),
        "sqrt_branch",
    )?;
    let flags: Vec<f64> = rec.roots.confidence().iter().map(|&b| b as u8 as f64).collect();
    out.array("confidence.bin", &shape, axes(), &ArrayData::Real(flags), "sqrt_branch")?;
    fs::write(dir.join("peaks.json"), serde_json::to_string_pretty(&rec.peaks)? + "\n")?;
    out.track("peaks.json")?;
    out.csv(
        "correlation_set.csv",
        PlotKind::CorrelationSet,
        &PlotInput::CorrelationSet(&rec.roots),
    )?;
    let worst: Option<&PeakSummary> = rec.peaks.iter().max_by(|a, b| a.condition.total_cmp(&b.condition));
    out.metric("max_condition", worst.map_or(0.0, |p| p.condition));
    out.metric(
        "regularized_peaks",
        rec.peaks.iter().filter(|p| p.regularized).count() as f64,
    );
    out.metric(
        "unconfident_samples",
        rec.roots.confidence().iter().filter(|c| !**c).count() as f64,
    );
    Ok(())
}

fn snapshot_fields(field: &ReconstructedField, times: &[f64]) -> Result<Vec<Field>> {
    times.iter().map(|&t| field.at_time(t)).collect()
}

fn signs_stage(cfg: &RunConfig, out: &mut StageOutput) -> Result<()> {
    let dir = out.dir;
    let ground = load_ground(dir, cfg)?;
    let grid = *ground.grid();
    let basis = ground.truncated(cfg.basis_count)?;
    let roots = load_roots(dir)?;
    let res = resolve(&basis, &roots, cfg.strategy, &cfg.score_config())?;
    let t = res.field.t_axis;
    fs::write(dir.join("signs.txt"), format!("{}\n", res.winner.signs))?;
    out.track("signs.txt")?;
    out.csv(
        "leaderboard.csv",
        PlotKind::Leaderboard,
        &PlotInput::Leaderboard(&res.leaderboard),
    )?;
    out.array(
        "wavefunction.bin",
        &[t.len, grid.len()],
        vec![t_axis_meta(&t), x_axis(&grid)],
        &ArrayData::Complex(res.field.values().to_vec()),
        &format!("assembled signs {}", res.winner.signs),
    )?;
    out.metric("winner_sigma2", res.winner.variance);
    if let Some(f) = res.winner.fidelity {
        out.metric("winner_backprop_fidelity", f);
    }
    write_fidelity(cfg, &res.field, out)
}

/// fidelity.csv and wavefunction_snapshots.csv against the exact propagation.
fn write_fidelity(cfg: &RunConfig, field: &ReconstructedField, out: &mut StageOutput) -> Result<()> {
    let exact = load_field(out.dir, "wavefunction_exact.bin", &field.grid)?;
    if exact.t_axis != field.t_axis {
        return Err(Error::InvalidArgument(
            "exact and reconstructed time axes differ".into(),
        ));
    }
    let t = field.t_axis;
    let fids: Vec<f64> = (0..t.len)
        .map(|i| fidelity(&field.snapshot(i), &exact.snapshot(i)))
        .collect::<Result<_>>()?;
    io::write_series(&out.dir.join("fidelity.csv"), ["t_fs", "fidelity"], &t.values(), &fids)?;
    out.track("fidelity.csv")?;
    let times = &cfg.fidelity_times_fs;
    let recon = snapshot_fields(field, times)?;
    let reference = snapshot_fields(&exact, times)?;
    out.csv(
        "wavefunction_snapshots.csv",
        PlotKind::WavefunctionSnapshots,
        &PlotInput::WavefunctionSnapshots {
            grid: &field.grid,
            times_fs: times,
            reconstructed: &recon,
            exact: &reference,
        },
    )?;
    for (&tf, (a, b)) in times.iter().zip(recon.iter().zip(&reference)) {
        out.metric(&format!("fidelity_t{tf}fs"), fidelity(a, b)?);
    }
    out.metric("min_fidelity", fids.iter().copied().fold(1.0, f64::min));
    Ok(())
}

fn potential_stage(cfg: &RunConfig, out: &mut StageOutput) -> Result<()> {
    let dir = out.dir;
    let grid = cfg.grid()?;
    let field = load_field(dir, "wavefunction.bin", &grid)?;
    let est = field_potential(&field, &cfg.score_config(), &cfg.snapshot_times_fs)?;
    let exact = load(dir, "excited_potential.bin")?.0.into_real()?;
    let n = grid.len();
    out.array(
        "potential.bin",
        &[n],
        vec![x_axis(&grid)],
        &ArrayData::Real(est.values.clone()),
        "tdse_inversion",
    )?;
    let mask: Vec<f64> = est.mask.iter().map(|&b| b as u8 as f64).collect();
    out.array(
        "potential_mask.bin",
        &[n],
        vec![x_axis(&grid)],
        &ArrayData::Real(mask),
        "tdse_inversion",
    )?;
    out.csv(
        "potential_compare.csv",
        PlotKind::PotentialCompare,
        &PlotInput::PotentialCompare {
            estimate: &est,
            exact: &exact,
        },
    )?;
    out.metric("max_masked_error_hartree", est.max_masked_error(&exact)?);
    out.metric("max_masked_imag_residue", est.max_masked_residue());
    out.metric("masked_points", est.masked_count() as f64);
    if let Some((lo, hi)) = est.coverage() {
        out.metric("mask_min_bohr", lo);
        out.metric("mask_max_bohr", hi);
    }
    if cfg.eta > DEFAULT_ETA {
        out.warnings.push(format!(
            "potinv.eta = {} is above the default {DEFAULT_ETA}; the mask shrinks",
            cfg.eta
        ));
    }
    Ok(())
}

/// Run one stage against `dir`, updating its manifest.
pub fn run_stage(cfg: &RunConfig, stage: Stage, dir: &Path) -> Result<RunManifest> {
    cfg.validate().map_err(|e| e.at_stage(stage.name()))?;
    fs::create_dir_all(dir)?;
    let mut manifest = if stage == Stage::Eigs || !dir.join(MANIFEST).exists() {
        RunManifest::new(cfg)
    } else {
        RunManifest::load(dir).map_err(|e| e.at_stage(stage.name()))?
    };
    manifest.config = cfg.to_text();
    let start = Instant::now();
    let mut out = StageOutput::new(dir);
    let result = match stage {
        Stage::Eigs => eigs_stage(cfg, &mut out),
        Stage::Synth => synth_stage(cfg, &mut out),
        Stage::Invert => invert_stage(cfg, &mut out),
        Stage::Signs => signs_stage(cfg, &mut out),
        Stage::Potential => potential_stage(cfg, &mut out),
    };
    let (status, error) = match &result {
        Ok(()) => (StageStatus::Ok, None),
        Err(e) => (StageStatus::Failed, Some(e.to_string())),
    };
    manifest.record(StageRecord {
        stage: stage.name().into(),
        status,
        seconds: start.elapsed().as_secs_f64(),
        artifacts: out.artifacts,
        metrics: out.metrics,
        warnings: out.warnings,
        error,
    });
    manifest.save(dir)?;
    result.map_err(|e| e.at_stage(stage.name()))?;
    Ok(manifest)
}

/// All five stages in order into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    run_pipeline_in(cfg, &cfg.output_dir)
}

pub fn run_pipeline_in(cfg: &RunConfig, dir: &Path) -> Result<RunManifest> {
    let mut manifest = None;
    for stage in Stage::ALL {
        manifest = Some(run_stage(cfg, stage, dir)?);
    }
    Ok(manifest.expect("at least one stage"))
}
