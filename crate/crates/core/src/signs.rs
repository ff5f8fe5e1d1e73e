//! Sign resolution: candidate wavefunctions `Psi~ = sum_g a_g c~_g(t) psi_g`,
//! scored by the time variance of their inverted potential and by
//! back-propagation to the initial state, plus the `1~` operator algebra.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::kinetic_matrix;
use crate::grid::fidelity;
use crate::inversion::CorrelationSet;
use crate::potinv::{invert_samples, merge_snapshots, MergeRule, PotentialEstimate, DEFAULT_ETA};
use crate::propagator::backward_to_zero;
use crate::synth::DelayAxis;
use crate::units::{fs_to_au, whole_steps};
use crate::{EigenBasis, Error, Field, Grid, Result};

/// Largest `N` for which exhaustive search is allowed.
pub const EXHAUSTIVE_MAX_N: usize = 16;

/// Signs `a_g in {-1, +1}` with `a_0 = +1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::InvalidArgument("empty sign vector".into()));
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        if signs[0] != 1 {
            return Err(Error::InvalidArgument("a_0 must be +1".into()));
        }
        Ok(SignVector(signs))
    }

    /// Multiply through by `a_0` so the first entry is `+1`.
    pub fn gauge_fixed(signs: &[i8]) -> Result<Self> {
        let a0 = *signs
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty sign vector".into()))?;
        SignVector::new(signs.iter().map(|s| s * a0).collect())
    }

    pub fn all_positive(len: usize) -> Self {
        SignVector(vec![1; len.max(1)])
    }

    /// Entry `g` flipped; `g = 0` flips everything else instead.
    pub fn flipped(&self, g: usize) -> Self {
        let mut v = self.0.clone();
        if g == 0 {
            v.iter_mut().skip(1).for_each(|s| *s = -*s);
        } else {
            v[g] = -v[g];
        }
        SignVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, g: usize) -> i8 {
        self.0[g]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|s| *s as f64).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.0.iter().all(|s| *s == 1)
    }

    /// Indices of entries that differ.
    pub fn differences(&self, other: &SignVector) -> Vec<usize> {
        (0..self.len().min(other.len()))
            .filter(|&g| self.0[g] != other.0[g])
            .collect()
    }
}

impl fmt::Display for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(if *s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for SignVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::InvalidArgument(format!("bad sign character {other:?}"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        SignVector::new(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignCandidate {
    pub signs: SignVector,
    /// Weighted time variance of the inverted potential (hartree^2).
    pub variance: f64,
    /// Back-propagation fidelity, when evaluated.
    pub fidelity: Option<f64>,
}

impl SignCandidate {
    /// Total order used for ranking: variance ascending, fidelity descending, signs.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.variance
            .total_cmp(&other.variance)
            .then_with(|| {
                let a = self.fidelity.unwrap_or(f64::NEG_INFINITY);
                let b = other.fidelity.unwrap_or(f64::NEG_INFINITY);
                b.total_cmp(&a)
            })
            .then_with(|| self.signs.cmp(&other.signs))
    }
}

/// `Psi~(x, t)` on the diagonal time axis, stored t-major. The physical
/// first-order packet is `amplitude_factor * Psi~`.
#[derive(Clone, Debug)]
pub struct ReconstructedField {
    pub grid: Grid,
    pub t_axis: DelayAxis,
    values: Vec<Complex64>,
    pub amplitude_factor: Complex64,
}

impl ReconstructedField {
    pub fn new(grid: Grid, t_axis: DelayAxis, values: Vec<Complex64>) -> Result<Self> {
        let expected = grid.len() * t_axis.len;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(ReconstructedField {
            grid,
            t_axis,
            values,
            amplitude_factor: Complex64::new(1.0, 0.0),
        })
    }

    pub fn with_amplitude_factor(mut self, factor: Complex64) -> Self {
        self.amplitude_factor = factor;
        self
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn snapshot(&self, i: usize) -> Field {
        Field::new(self.grid, self.row(i).to_vec()).expect("row length matches grid")
    }

    pub fn at_time(&self, t_fs: f64) -> Result<Field> {
        let i = self
            .t_axis
            .index_of(t_fs)
            .ok_or_else(|| Error::InvalidArgument(format!("{t_fs} fs is not on the time axis")))?;
        Ok(self.snapshot(i))
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.t_axis.len).map(|i| self.snapshot(i).norm()).collect()
    }
}

fn check_lengths(basis: &EigenBasis, corr: &CorrelationSet, signs: &SignVector) -> Result<()> {
    if signs.len() != corr.count() {
        return Err(Error::LengthMismatch {
            expected: corr.count(),
            got: signs.len(),
        });
    }
    if basis.len() < corr.count() {
        return Err(Error::LengthMismatch {
            expected: corr.count(),
            got: basis.len(),
        });
    }
    Ok(())
}

fn superpose(basis: &EigenBasis, coeffs: &[Complex64], out: &mut [Complex64]) {
    out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    for (g, c) in coeffs.iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (o, p) in out.iter_mut().zip(basis.state(g)) {
            *o += c * p;
        }
    }
}

/// `Psi~(x, t) = sum_g a_g c~_g(t) psi_g(x)`.
pub fn assemble(basis: &EigenBasis, corr: &CorrelationSet, signs: &SignVector) -> Result<ReconstructedField> {
    check_lengths(basis, corr, signs)?;
    let grid = *basis.grid();
    let n = grid.len();
    let a = signs.as_f64();
    let mut values = vec![Complex64::new(0.0, 0.0); corr.t_axis.len * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let coeffs: Vec<Complex64> = corr.row(i).iter().zip(&a).map(|(c, s)| c * *s).collect();
        superpose(basis, &coeffs, out);
    });
    ReconstructedField::new(grid, corr.t_axis, values)
}

/// Grid matrix of `sum_g a_g |psi_g><psi_g|` (acting on samples, with the `dx` weight).
pub fn sign_operator(basis: &EigenBasis, signs: &[f64]) -> Result<DMatrix<f64>> {
    if signs.len() > basis.len() {
        return Err(Error::LengthMismatch {
            expected: basis.len(),
            got: signs.len(),
        });
    }
    let n = basis.grid().len();
    let dx = basis.grid().dx();
    let mut psi = DMatrix::zeros(n, signs.len());
    for (g, _) in signs.iter().enumerate() {
        psi.set_column(g, &nalgebra::DVector::from_column_slice(basis.state(g)));
    }
    let scaled = DMatrix::from_fn(n, signs.len(), |i, g| psi[(i, g)] * signs[g] * dx);
    Ok(&psi * scaled.transpose())
}

/// Projector onto the span of the first `count` levels.
pub fn projector(basis: &EigenBasis, count: usize) -> Result<DMatrix<f64>> {
    sign_operator(basis, &vec![1.0; count])
}

/// `Delta T = 1~ [T, 1~]` for the grid kinetic matrix.
pub fn kinetic_correction(basis: &EigenBasis, signs: &[f64]) -> Result<DMatrix<f64>> {
    let one = sign_operator(basis, signs)?;
    let t = kinetic_matrix(basis.grid(), basis.mass());
    let comm = &t * &one - &one * &t;
    Ok(&one * comm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackpropConfig {
    /// Time of the state that is propagated back (fs).
    pub t_star_fs: f64,
    /// Snapshot times whose inverted potentials are merged (fs).
    pub snapshot_times_fs: Vec<f64>,
    /// Split-operator step (fs).
    pub dt_fs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub mass: f64,
    pub eta: f64,
    /// Spacing of the nine stencil snapshots (fs); a multiple of the time-axis step.
    pub stencil_dt_fs: f64,
    pub variance_centers_fs: Vec<f64>,
    pub backprop: Option<BackpropConfig>,
}

impl ScoreConfig {
    pub fn li2(mass: f64) -> Self {
        ScoreConfig {
            mass,
            eta: DEFAULT_ETA,
            stencil_dt_fs: 0.2,
            variance_centers_fs: vec![5.0, 35.0, 65.0],
            backprop: Some(BackpropConfig {
                t_star_fs: 70.0,
                snapshot_times_fs: vec![5.0, 70.0],
                dt_fs: 0.1,
            }),
        }
    }

    pub fn dli2(mass: f64) -> Self {
        ScoreConfig {
            mass,
            eta: DEFAULT_ETA,
            stencil_dt_fs: 0.2,
            variance_centers_fs: vec![5.0, 40.0, 75.0],
            backprop: Some(BackpropConfig {
                t_star_fs: 60.0,
                snapshot_times_fs: vec![5.0, 60.0],
                dt_fs: 0.1,
            }),
        }
    }
}

/// Indices of the nine stencil samples centred on `center_fs`.
pub fn stencil_indices(t_axis: &DelayAxis, center_fs: f64, stencil_dt_fs: f64) -> Result<Vec<usize>> {
    let stride = whole_steps(stencil_dt_fs, t_axis.step)?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stencil spacing must be positive".into()));
    }
    let c = t_axis
        .index_of(center_fs)
        .ok_or_else(|| Error::InvalidArgument(format!("{center_fs} fs is not on the time axis")))?;
    if c < 4 * stride || c + 4 * stride >= t_axis.len {
        return Err(Error::InvalidArgument(format!(
            "stencil around {center_fs} fs leaves the time axis {}..{} fs",
            t_axis.start,
            t_axis.last()
        )));
    }
    Ok((0..9).map(|k| c + k * stride - 4 * stride).collect())
}

fn variance_from_groups<S: AsRef<[Complex64]> + Sync>(
    grid: &Grid,
    groups: &[Vec<S>],
    cfg: &ScoreConfig,
) -> Result<f64> {
    let dt = fs_to_au(cfg.stencil_dt_fs);
    let n = grid.len();
    let mut vs = Vec::with_capacity(groups.len());
    let mut ws = Vec::with_capacity(groups.len());
    for rows in groups {
        let est = invert_samples(grid, rows, cfg.mass, dt, cfg.eta)?;
        ws.push(
            (0..n)
                .map(|j| if est.mask[j] { est.amplitude[j].powi(2) } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
        vs.push(est.values);
    }
    let total: f64 = ws.iter().flatten().sum();
    if !(total > 0.0) {
        return Err(Error::AllMasked);
    }
    let mut sigma = 0.0;
    for j in 0..n {
        let wx: f64 = ws.iter().map(|w| w[j]).sum();
        if wx == 0.0 {
            continue;
        }
        let mean = ws
            .iter()
            .zip(&vs)
            .filter(|(w, _)| w[j] > 0.0)
            .map(|(w, v)| w[j] * v[j])
            .sum::<f64>()
            / wx;
        sigma += ws
            .iter()
            .zip(&vs)
            .filter(|(w, _)| w[j] > 0.0)
            .map(|(w, v)| w[j] * (v[j] - mean).powi(2))
            .sum::<f64>();
    }
    Ok(sigma / total)
}

/// `sigma^2 = sum w (V - V_bar)^2` over the stencil centres, with `w ~ |Psi~|^2`
/// on unmasked points normalized to one and `V_bar` the weighted time mean.
pub fn variance_score(field: &ReconstructedField, cfg: &ScoreConfig) -> Result<f64> {
    let groups = cfg
        .variance_centers_fs
        .iter()
        .map(|&c| {
            Ok(stencil_indices(&field.t_axis, c, cfg.stencil_dt_fs)?
                .into_iter()
                .map(|i| field.row(i))
                .collect())
        })
        .collect::<Result<Vec<Vec<&[Complex64]>>>>()?;
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no variance centres".into()));
    }
    variance_from_groups(&field.grid, &groups, cfg)
}

fn merged_potential(
    grid: &Grid,
    t_axis: &DelayAxis,
    row: &dyn Fn(usize) -> Vec<Complex64>,
    cfg: &ScoreConfig,
    times: &[f64],
) -> Result<PotentialEstimate> {
    let dt = fs_to_au(cfg.stencil_dt_fs);
    let estimates = times
        .iter()
        .map(|&t| {
            let rows: Vec<Vec<Complex64>> = stencil_indices(t_axis, t, cfg.stencil_dt_fs)?
                .into_iter()
                .map(row)
                .collect();
            Ok(invert_samples(grid, &rows, cfg.mass, dt, cfg.eta)?.with_source_time(t))
        })
        .collect::<Result<Vec<_>>>()?;
    merge_snapshots(&estimates, MergeRule::MaxAmplitude)
}

fn backprop_with(
    grid: &Grid,
    t_axis: &DelayAxis,
    row: &dyn Fn(usize) -> Vec<Complex64>,
    psi0: &Field,
    cfg: &ScoreConfig,
) -> Result<f64> {
    let bp = cfg
        .backprop
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no back-propagation settings".into()))?;
    let i = t_axis
        .index_of(bp.t_star_fs)
        .ok_or_else(|| Error::InvalidArgument(format!("{} fs is not on the time axis", bp.t_star_fs)))?;
    let psi_t = Field::new(*grid, row(i))?;
    if bp.t_star_fs == 0.0 {
        return fidelity(psi0, &psi_t);
    }
    let est = merged_potential(grid, t_axis, row, cfg, &bp.snapshot_times_fs)?;
    let potential = est.extend_to_grid()?;
    let back = backward_to_zero(&psi_t, &potential, cfg.mass, fs_to_au(bp.t_star_fs), fs_to_au(bp.dt_fs))?;
    fidelity(psi0, &back)
}

/// Merged potential from a field at the given snapshot times.
pub fn field_potential(field: &ReconstructedField, cfg: &ScoreConfig, times: &[f64]) -> Result<PotentialEstimate> {
    merged_potential(&field.grid, &field.t_axis, &|i| field.row(i).to_vec(), cfg, times)
}

/// Fidelity between `psi0` and `Psi~(t*)` propagated back to zero under the
/// candidate's own merged static potential.
pub fn backprop_score(field: &ReconstructedField, psi0: &Field, cfg: &ScoreConfig) -> Result<f64> {
    backprop_with(&field.grid, &field.t_axis, &|i| field.row(i).to_vec(), psi0, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    Exhaustive,
    Beam(usize),
    Greedy,
}

impl Default for SearchStrategy {
    fn default() -> Self {
        SearchStrategy::Beam(64)
    }
}

impl FromStr for SearchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "exhaustive" => Ok(SearchStrategy::Exhaustive),
            "greedy" => Ok(SearchStrategy::Greedy),
            "beam" => Ok(SearchStrategy::Beam(64)),
            _ => {
                let w = s
                    .strip_prefix("beam:")
                    .and_then(|w| w.parse::<usize>().ok())
                    .filter(|w| *w > 0)
                    .ok_or_else(|| Error::Config(format!("unknown search strategy {s:?}")))?;
                Ok(SearchStrategy::Beam(w))
            }
        }
    }
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchStrategy::Exhaustive => f.write_str("exhaustive"),
            SearchStrategy::Beam(w) => write!(f, "beam:{w}"),
            SearchStrategy::Greedy => f.write_str("greedy"),
        }
    }
}

/// Scores sign vectors against a fixed correlation set. Stencil rows of every
/// level are precomputed so a candidate costs one weighted sum per row.
pub struct Scorer<'a> {
    basis: &'a EigenBasis,
    corr: &'a CorrelationSet,
    cfg: ScoreConfig,
    /// `rows[r]`: time index of stencil row `r`, grouped by centre in nines
    rows: Vec<usize>,
    /// `parts[g][r * n + j] = c~_g(t_r) psi_g(x_j)`
    parts: Vec<Vec<Complex64>>,
}

impl<'a> Scorer<'a> {
    pub fn new(basis: &'a EigenBasis, corr: &'a CorrelationSet, cfg: ScoreConfig) -> Result<Self> {
        if basis.len() < corr.count() {
            return Err(Error::LengthMismatch {
                expected: corr.count(),
                got: basis.len(),
            });
        }
        if cfg.variance_centers_fs.is_empty() {
            return Err(Error::InvalidArgument("no variance centres".into()));
        }
        let mut rows = Vec::new();
        for &c in &cfg.variance_centers_fs {
            rows.extend(stencil_indices(&corr.t_axis, c, cfg.stencil_dt_fs)?);
        }
        let n = basis.grid().len();
        let parts = (0..corr.count())
            .into_par_iter()
            .map(|g| {
                let mut v = Vec::with_capacity(rows.len() * n);
                for &i in &rows {
                    let c = corr.get(i, g);
                    v.extend(basis.state(g).iter().map(|p| c * p));
                }
                v
            })
            .collect();
        Ok(Scorer {
            basis,
            corr,
            cfg,
            rows,
            parts,
        })
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.corr.count()
    }

    pub fn is_empty(&self) -> bool {
        self.corr.count() == 0
    }

    fn accumulate(&self, signs: &[i8]) -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.parts[0].len()];
        for (g, s) in signs.iter().enumerate() {
            if *s != 0 {
                add_scaled(&mut acc, &self.parts[g], *s as f64);
            }
        }
        acc
    }

    fn variance_of_sum(&self, acc: &[Complex64]) -> Result<f64> {
        let n = self.basis.grid().len();
        let groups: Vec<Vec<&[Complex64]>> = acc
            .chunks_exact(9 * n)
            .map(|block| block.chunks_exact(n).collect())
            .collect();
        variance_from_groups(self.basis.grid(), &groups, &self.cfg)
    }

    /// `sigma^2` for a sign vector; zero entries leave a level out.
    pub fn variance_partial(&self, signs: &[i8]) -> Result<f64> {
        if signs.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: signs.len(),
            });
        }
        self.variance_of_sum(&self.accumulate(signs))
    }

    pub fn variance(&self, signs: &SignVector) -> Result<f64> {
        self.variance_partial(signs.as_slice())
    }

    fn row_for(&self, signs: &SignVector) -> impl Fn(usize) -> Vec<Complex64> + '_ {
        let a = signs.as_f64();
        move |i| {
            let coeffs: Vec<Complex64> = self.corr.row(i).iter().zip(&a).map(|(c, s)| c * *s).collect();
            let mut out = vec![Complex64::new(0.0, 0.0); self.basis.grid().len()];
            superpose(self.basis, &coeffs, &mut out);
            out
        }
    }

    pub fn fidelity(&self, signs: &SignVector) -> Result<f64> {
        if signs.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: signs.len(),
            });
        }
        let row = self.row_for(signs);
        backprop_with(
            self.basis.grid(),
            &self.corr.t_axis,
            &row,
            &self.basis.field(0),
            &self.cfg,
        )
    }

    /// Merged potential of a candidate at the back-propagation snapshot times.
    pub fn potential(&self, signs: &SignVector, times: &[f64]) -> Result<PotentialEstimate> {
        let row = self.row_for(signs);
        merged_potential(self.basis.grid(), &self.corr.t_axis, &row, &self.cfg, times)
    }

    pub fn candidate(&self, signs: SignVector, with_fidelity: bool) -> Result<SignCandidate> {
        let variance = self.variance(&signs)?;
        let fidelity = if with_fidelity && self.cfg.backprop.is_some() {
            Some(self.fidelity(&signs)?)
        } else {
            None
        };
        Ok(SignCandidate {
            signs,
            variance,
            fidelity,
        })
    }

    pub fn stencil_rows(&self) -> &[usize] {
        &self.rows
    }
}

fn add_scaled(acc: &mut [Complex64], part: &[Complex64], s: f64) {
    for (a, p) in acc.iter_mut().zip(part) {
        *a += p * s;
    }
}

#[derive(Clone, Debug)]
pub struct Resolution {
    pub winner: SignCandidate,
    pub field: ReconstructedField,
    /// Complete candidates scored by the search, in rank order.
    pub leaderboard: Vec<SignCandidate>,
}

/// Levels in the order the beam decides them: by `max_t |c~_g|`, largest first.
pub fn beam_order(corr: &CorrelationSet) -> Vec<usize> {
    let mut order: Vec<usize> = (1..corr.count()).collect();
    order.sort_by(|&a, &b| corr.max_modulus(b).total_cmp(&corr.max_modulus(a)).then(a.cmp(&b)));
    order
}

fn beam_search(scorer: &Scorer, width: usize) -> Result<Vec<(f64, Vec<i8>)>> {
    let count = scorer.len();
    let mut start = vec![0i8; count];
    start[0] = 1;
    let base = scorer.accumulate(&start);
    let first = scorer.variance_of_sum(&base)?;
    let mut beam: Vec<(f64, Vec<i8>, Vec<Complex64>)> = vec![(first, start, base)];
    for g in beam_order(scorer.corr) {
        let mut children: Vec<(f64, Vec<i8>, Vec<Complex64>)> = beam
            .par_iter()
            .flat_map_iter(|(_, signs, acc)| {
                [1i8, -1].into_iter().map(move |s| {
                    let mut child = signs.clone();
                    child[g] = s;
                    let mut sum = acc.clone();
                    add_scaled(&mut sum, &scorer.parts[g], s as f64);
                    (child, sum)
                })
            })
            .map(|(child, sum)| Ok((scorer.variance_of_sum(&sum)?, child, sum)))
            .collect::<Result<_>>()?;
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        children.truncate(width);
        beam = children;
    }
    Ok(beam.into_iter().map(|(v, s, _)| (v, s)).collect())
}

fn exhaustive_search(scorer: &Scorer) -> Result<Vec<(f64, Vec<i8>)>> {
    let n = scorer.len() - 1;
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::ExhaustiveTooLarge(n));
    }
    (0u64..1 << n)
        .into_par_iter()
        .map(|bits| {
            let signs: Vec<i8> = std::iter::once(1)
                .chain((0..n).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }))
                .collect();
            Ok((scorer.variance_partial(&signs)?, signs))
        })
        .collect()
}

/// Pick the sign vector whose candidate has the least potential-time
/// variance; back-propagation fidelity breaks ties and is reported.
pub fn resolve(
    basis: &EigenBasis,
    corr: &CorrelationSet,
    strategy: SearchStrategy,
    cfg: &ScoreConfig,
) -> Result<Resolution> {
    if corr.count() == 0 {
        return Err(Error::InvalidArgument("no levels to resolve".into()));
    }
    if let SearchStrategy::Exhaustive = strategy {
        if corr.count() - 1 > EXHAUSTIVE_MAX_N {
            return Err(Error::ExhaustiveTooLarge(corr.count() - 1));
        }
    }
    let scorer = Scorer::new(basis, corr, cfg.clone())?;
    let (scored, fidelity_top) = if corr.count() == 1 {
        (vec![(scorer.variance_partial(&[1])?, vec![1])], 1)
    } else {
        match strategy {
            SearchStrategy::Exhaustive => (exhaustive_search(&scorer)?, 64),
            SearchStrategy::Beam(w) => (beam_search(&scorer, w.max(1))?, w.max(1)),
            SearchStrategy::Greedy => (beam_search(&scorer, 1)?, 1),
        }
    };
    let mut board: Vec<SignCandidate> = scored
        .into_iter()
        .map(|(variance, s)| {
            Ok(SignCandidate {
                signs: SignVector::new(s)?,
                variance,
                fidelity: None,
            })
        })
        .collect::<Result<_>>()?;
    board.sort_by(|a, b| a.rank_cmp(b));
    if cfg.backprop.is_some() {
        let top = fidelity_top.min(board.len());
        let fids: Vec<f64> = board[..top]
            .par_iter()
            .map(|c| scorer.fidelity(&c.signs))
            .collect::<Result<_>>()?;
        for (c, f) in board.iter_mut().zip(fids) {
            c.fidelity = Some(f);
        }
        board.sort_by(|a, b| a.rank_cmp(b));
    }
    let winner = board[0].clone();
    let field = assemble(basis, corr, &winner.signs)?;
    Ok(Resolution {
        winner,
        field,
        leaderboard: board,
    })
}
