//! Run configuration: flat UTF-8 `key = value` text.
//!
//! ```text
//! # comment
//! system = li2
//! grid.xmin = 2
//! potential.excited = A
//! lattice.t.max_fs = 80
//! search.strategy = beam:64
//! ```
//!
//! Potentials are a preset name (`X`, `A`, `A_tilde`) or the path of a stored
//! real array sampled on the configured grid, relative to the config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::potentials::Preset;
use crate::signs::{BackpropConfig, ScoreConfig, SearchStrategy};
use crate::synth::{DelayAxis, Lattice, PulseConfig, SynthOptions};
use crate::units::LI2_REDUCED_MASS;
use crate::{io, Error, Grid, PotentialModel, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Direct,
    #[default]
    Closure,
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "direct" => Ok(SynthMode::Direct),
            "closure" => Ok(SynthMode::Closure),
            other => Err(Error::Config(format!("unknown synth mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for SynthMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthMode::Direct => "direct",
            SynthMode::Closure => "closure",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialSource {
    Preset(String),
    Tabulated(PathBuf),
}

impl PotentialSource {
    fn parse(value: &str, base: Option<&Path>) -> Self {
        if value.parse::<Preset>().is_ok() {
            PotentialSource::Preset(value.to_string())
        } else {
            let p = PathBuf::from(value);
            match base {
                Some(b) if p.is_relative() => PotentialSource::Tabulated(b.join(p)),
                _ => PotentialSource::Tabulated(p),
            }
        }
    }

    pub fn load(&self, grid: &Grid) -> Result<PotentialModel> {
        match self {
            PotentialSource::Preset(name) => crate::potentials::preset(name),
            PotentialSource::Tabulated(path) => {
                let (data, _) = io::load_array(path)?;
                let values = data.into_real()?;
                PotentialModel::tabulated(*grid, values)
            }
        }
    }

    fn text(&self) -> String {
        match self {
            PotentialSource::Preset(n) => n.clone(),
            PotentialSource::Tabulated(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min_fs: f64,
    pub max_fs: f64,
    pub step_fs: f64,
}

impl AxisSpec {
    pub fn axis(&self) -> Result<DelayAxis> {
        DelayAxis::from_range(self.min_fs, self.max_fs, self.step_fs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: String,
    pub grid_xmin: f64,
    pub grid_xmax: f64,
    pub grid_n: usize,
    pub mass: f64,
    pub ground: PotentialSource,
    pub excited: PotentialSource,
    pub mu: f64,
    pub eps: [f64; 3],
    pub basis_count: usize,
    pub t: AxisSpec,
    pub tau32: AxisSpec,
    pub propagation_dt_fs: f64,
    pub leak_abort: f64,
    pub synth_mode: SynthMode,
    pub strategy: SearchStrategy,
    pub variance_centers_fs: Vec<f64>,
    pub backprop_t_fs: f64,
    pub backprop_snapshots_fs: Vec<f64>,
    pub eta: f64,
    pub potinv_dt_fs: f64,
    pub snapshot_times_fs: Vec<f64>,
    pub fidelity_times_fs: Vec<f64>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Li2 (X -> A) on the reduced CI lattice.
    pub fn li2_desk() -> Self {
        RunConfig {
            system: "li2".into(),
            grid_xmin: 2.0,
            grid_xmax: 12.0,
            grid_n: 256,
            mass: LI2_REDUCED_MASS,
            ground: PotentialSource::Preset("X".into()),
            excited: PotentialSource::Preset("A".into()),
            mu: 2.0,
            eps: [1e-4; 3],
            basis_count: 25,
            t: AxisSpec {
                min_fs: 0.0,
                max_fs: 80.0,
                step_fs: 0.2,
            },
            tau32: AxisSpec {
                min_fs: 3.0,
                max_fs: 1500.0,
                step_fs: 1.0,
            },
            propagation_dt_fs: 0.1,
            leak_abort: 1e-2,
            synth_mode: SynthMode::Closure,
            strategy: SearchStrategy::Beam(64),
            variance_centers_fs: vec![5.0, 35.0, 65.0],
            backprop_t_fs: 70.0,
            backprop_snapshots_fs: vec![5.0, 70.0],
            eta: 1e-2,
            potinv_dt_fs: 0.2,
            snapshot_times_fs: vec![5.0, 70.0],
            fidelity_times_fs: vec![5.0, 25.0, 50.0],
            output_dir: PathBuf::from("out/li2_desk"),
        }
    }

    /// Li2 on the full 0-200 fs, 3-6000 fs lattice.
    pub fn li2_full() -> Self {
        RunConfig {
            t: AxisSpec {
                min_fs: 0.0,
                max_fs: 200.0,
                step_fs: 0.2,
            },
            tau32: AxisSpec {
                min_fs: 3.0,
                max_fs: 6000.0,
                step_fs: 1.0,
            },
            output_dir: PathBuf::from("out/li2_full"),
            ..RunConfig::li2_desk()
        }
    }

    /// Dissociative variant (X -> A_tilde), 40 levels, 0-80 fs.
    pub fn dli2_desk() -> Self {
        RunConfig {
            system: "dli2".into(),
            excited: PotentialSource::Preset("A_tilde".into()),
            basis_count: 40,
            variance_centers_fs: vec![5.0, 40.0, 75.0],
            backprop_t_fs: 60.0,
            backprop_snapshots_fs: vec![5.0, 60.0],
            snapshot_times_fs: vec![5.0, 79.0],
            fidelity_times_fs: vec![5.0, 40.0, 79.0],
            output_dir: PathBuf::from("out/dli2_desk"),
            ..RunConfig::li2_desk()
        }
    }

    pub fn dli2_full() -> Self {
        RunConfig {
            tau32: AxisSpec {
                min_fs: 3.0,
                max_fs: 6000.0,
                step_fs: 1.0,
            },
            output_dir: PathBuf::from("out/dli2_full"),
            ..RunConfig::dli2_desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "li2_desk" => Ok(RunConfig::li2_desk()),
            "li2_full" => Ok(RunConfig::li2_full()),
            "dli2_desk" => Ok(RunConfig::dli2_desk()),
            "dli2_full" => Ok(RunConfig::dli2_full()),
            other => Err(Error::Config(format!("unknown preset config {other:?}"))),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text, path.parent())
    }

    /// Parse `key = value` lines over the Li2 desk defaults; unset keys keep them.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::li2_desk();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            cfg.set(key, value, base)
                .map_err(|e| Error::Config(format!("line {}: {key}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        fn num<T: FromStr>(v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("cannot parse {v:?}")))
        }
        fn list(v: &str) -> Result<Vec<f64>> {
            v.split(',').map(|s| num(s.trim())).collect()
        }
        match key {
            "system" => self.system = value.to_string(),
            "grid.xmin" => self.grid_xmin = num(value)?,
            "grid.xmax" => self.grid_xmax = num(value)?,
            "grid.n" => self.grid_n = num(value)?,
            "mass" => self.mass = num(value)?,
            "potential.ground" => self.ground = PotentialSource::parse(value, base),
            "potential.excited" => self.excited = PotentialSource::parse(value, base),
            "pulses.mu" => self.mu = num(value)?,
            "pulses.eps1" => self.eps[0] = num(value)?,
            "pulses.eps2" => self.eps[1] = num(value)?,
            "pulses.eps3" => self.eps[2] = num(value)?,
            "basis.count" => self.basis_count = num(value)?,
            "lattice.t.min_fs" => self.t.min_fs = num(value)?,
            "lattice.t.max_fs" => self.t.max_fs = num(value)?,
            "lattice.t.step_fs" => self.t.step_fs = num(value)?,
            "lattice.tau32.min_fs" => self.tau32.min_fs = num(value)?,
            "lattice.tau32.max_fs" => self.tau32.max_fs = num(value)?,
            "lattice.tau32.step_fs" => self.tau32.step_fs = num(value)?,
            "propagation.dt_fs" => self.propagation_dt_fs = num(value)?,
            "propagation.leak_abort" => self.leak_abort = num(value)?,
            "synth.mode" => self.synth_mode = value.parse()?,
            "search.strategy" => self.strategy = value.parse()?,
            "search.variance_centers_fs" => self.variance_centers_fs = list(value)?,
            "search.backprop_t_fs" => self.backprop_t_fs = num(value)?,
            "search.backprop_snapshots_fs" => self.backprop_snapshots_fs = list(value)?,
            "potinv.eta" => self.eta = num(value)?,
            "potinv.dt_fs" => self.potinv_dt_fs = num(value)?,
            "snapshots.times_fs" => self.snapshot_times_fs = list(value)?,
            "fidelity.times_fs" => self.fidelity_times_fs = list(value)?,
            "output.dir" => {
                let p = PathBuf::from(value);
                self.output_dir = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                };
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.basis_count < 1 {
            return bad("basis.count must be at least 1".into());
        }
        for (name, a) in [("t", &self.t), ("tau32", &self.tau32)] {
            if !(a.step_fs > 0.0) {
                return bad(format!("lattice.{name}.step_fs must be positive"));
            }
            a.axis().map_err(|e| Error::Config(format!("lattice.{name}: {e}")))?;
        }
        if !(self.mass > 0.0) || !(self.propagation_dt_fs > 0.0) || !(self.potinv_dt_fs > 0.0) {
            return bad("mass and time steps must be positive".into());
        }
        if !(self.mu > 0.0) || self.eps.iter().any(|e| !(*e > 0.0)) {
            return bad("pulse constants must be positive".into());
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad("potinv.eta must lie in [0, 1)".into());
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_xmin, self.grid_xmax, self.grid_n)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Ok(Lattice {
            t: self.t.axis()?,
            tau32: self.tau32.axis()?,
        })
    }

    pub fn pulses(&self, omega0: f64) -> Result<PulseConfig> {
        PulseConfig::new(self.mu, self.eps[0], self.eps[1], self.eps[2], omega0)
    }

    pub fn synth_options(&self) -> SynthOptions {
        SynthOptions {
            dt_fs: self.propagation_dt_fs,
            basis_count: self.basis_count,
            leak_abort: self.leak_abort,
        }
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            mass: self.mass,
            eta: self.eta,
            stencil_dt_fs: self.potinv_dt_fs,
            variance_centers_fs: self.variance_centers_fs.clone(),
            backprop: Some(BackpropConfig {
                t_star_fs: self.backprop_t_fs,
                snapshot_times_fs: self.backprop_snapshots_fs.clone(),
                dt_fs: self.propagation_dt_fs,
            }),
        }
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("system", self.system.clone());
        kv("grid.xmin", self.grid_xmin.to_string());
        kv("grid.xmax", self.grid_xmax.to_string());
        kv("grid.n", self.grid_n.to_string());
        kv("mass", self.mass.to_string());
        kv("potential.ground", self.ground.text());
        kv("potential.excited", self.excited.text());
        kv("pulses.mu", self.mu.to_string());
        kv("pulses.eps1", self.eps[0].to_string());
        kv("pulses.eps2", self.eps[1].to_string());
        kv("pulses.eps3", self.eps[2].to_string());
        kv("basis.count", self.basis_count.to_string());
        kv("lattice.t.min_fs", self.t.min_fs.to_string());
        kv("lattice.t.max_fs", self.t.max_fs.to_string());
        kv("lattice.t.step_fs", self.t.step_fs.to_string());
        kv("lattice.tau32.min_fs", self.tau32.min_fs.to_string());
        kv("lattice.tau32.max_fs", self.tau32.max_fs.to_string());
        kv("lattice.tau32.step_fs", self.tau32.step_fs.to_string());
        kv("propagation.dt_fs", self.propagation_dt_fs.to_string());
        kv("propagation.leak_abort", self.leak_abort.to_string());
        kv("synth.mode", self.synth_mode.to_string());
        kv("search.strategy", self.strategy.to_string());
        kv("search.variance_centers_fs", join(&self.variance_centers_fs));
        kv("search.backprop_t_fs", self.backprop_t_fs.to_string());
        kv("search.backprop_snapshots_fs", join(&self.backprop_snapshots_fs));
        kv("potinv.eta", self.eta.to_string());
        kv("potinv.dt_fs", self.potinv_dt_fs.to_string());
        kv("snapshots.times_fs", join(&self.snapshot_times_fs));
        kv("fidelity.times_fs", join(&self.fidelity_times_fs));
        kv("output.dir", self.output_dir.display().to_string());
        s
    }
}
