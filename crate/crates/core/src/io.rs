//! Array persistence and plot-data emission.
//!
//! An array `name.bin` holds raw little-endian IEEE doubles in row-major
//! order (complex values as interleaved real/imaginary pairs). Its sidecar
//! `name.json` records dtype, shape, axes, provenance and a SHA-256 of the
//! binary file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::inversion::CorrelationSet;
use crate::potinv::PotentialEstimate;
use crate::signs::SignCandidate;
use crate::{Error, Field, Grid, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl ArrayData {
    pub fn dtype(&self) -> &'static str {
        match self {
            ArrayData::Real(_) => "f64",
            ArrayData::Complex(_) => "c128",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::Real(v) => v.len(),
            ArrayData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_real(self) -> Result<Vec<f64>> {
        match self {
            ArrayData::Real(v) => Ok(v),
            ArrayData::Complex(_) => Err(Error::Format("expected a real array".into())),
        }
    }

    pub fn into_complex(self) -> Result<Vec<Complex64>> {
        match self {
            ArrayData::Complex(v) => Ok(v),
            ArrayData::Real(_) => Err(Error::Format("expected a complex array".into())),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 16);
        match self {
            ArrayData::Real(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::Complex(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    /// Sample values when the axis is uniform: `start + i * step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl Axis {
    pub fn new(name: &str, unit: &str) -> Self {
        Axis {
            name: name.into(),
            unit: unit.into(),
            start: None,
            step: None,
        }
    }

    pub fn uniform(name: &str, unit: &str, start: f64, step: f64) -> Self {
        Axis {
            name: name.into(),
            unit: unit.into(),
            start: Some(start),
            step: Some(step),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub axes: Vec<Axis>,
    pub provenance: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `values` (row-major, `shape`) and its sidecar; returns the sidecar contents.
pub fn store_array(
    path: &Path,
    shape: &[usize],
    axes: Vec<Axis>,
    values: &ArrayData,
    provenance: &str,
) -> Result<ArrayMeta> {
    let count: usize = shape.iter().product();
    if count != values.len() {
        return Err(Error::LengthMismatch {
            expected: count,
            got: values.len(),
        });
    }
    if axes.len() != shape.len() {
        return Err(Error::Format(format!(
            "{} axes for a rank-{} array",
            axes.len(),
            shape.len()
        )));
    }
    let bytes = values.to_bytes();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, &bytes)?;
    let meta = ArrayMeta {
        dtype: values.dtype().into(),
        shape: shape.to_vec(),
        axes,
        provenance: provenance.into(),
        sha256: sha256_hex(&bytes),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load_meta(path: &Path) -> Result<ArrayMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?)
}

/// Read an array back, verifying size and checksum against the sidecar.
pub fn load_array(path: &Path) -> Result<(ArrayData, ArrayMeta)> {
    let meta = load_meta(path)?;
    let bytes = fs::read(path)?;
    let width = match meta.dtype.as_str() {
        "f64" => 8,
        "c128" => 16,
        other => return Err(Error::Format(format!("unknown dtype {other:?}"))),
    };
    let count: usize = meta.shape.iter().product();
    if bytes.len() != count * width {
        return Err(Error::Format(format!(
            "{}: {} bytes, shape {:?} needs {}",
            path.display(),
            bytes.len(),
            meta.shape,
            count * width
        )));
    }
    let sum = sha256_hex(&bytes);
    if sum != meta.sha256 {
        return Err(Error::Checksum(format!(
            "{}: expected {}, found {sum}",
            path.display(),
            meta.sha256
        )));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
    let data = if width == 8 {
        ArrayData::Real(bytes.chunks_exact(8).map(f).collect())
    } else {
        ArrayData::Complex(
            bytes
                .chunks_exact(16)
                .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
                .collect(),
        )
    };
    Ok((data, meta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    WavefunctionSnapshots,
    PotentialCompare,
    CorrelationSet,
    Leaderboard,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wavefunction_snapshots" => Ok(PlotKind::WavefunctionSnapshots),
            "potential_compare" => Ok(PlotKind::PotentialCompare),
            "correlation_set" => Ok(PlotKind::CorrelationSet),
            "leaderboard" => Ok(PlotKind::Leaderboard),
            other => Err(Error::InvalidArgument(format!("unknown plot kind {other:?}"))),
        }
    }
}

pub enum PlotInput<'a> {
    WavefunctionSnapshots {
        grid: &'a Grid,
        times_fs: &'a [f64],
        reconstructed: &'a [Field],
        exact: &'a [Field],
    },
    PotentialCompare {
        estimate: &'a PotentialEstimate,
        exact: &'a [f64],
    },
    CorrelationSet(&'a CorrelationSet),
    Leaderboard(&'a [SignCandidate]),
}

impl PlotInput<'_> {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotInput::WavefunctionSnapshots { .. } => PlotKind::WavefunctionSnapshots,
            PlotInput::PotentialCompare { .. } => PlotKind::PotentialCompare,
            PlotInput::CorrelationSet(_) => PlotKind::CorrelationSet,
            PlotInput::Leaderboard(_) => PlotKind::Leaderboard,
        }
    }
}

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_table(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn render(input: &PlotInput) -> Result<String> {
    match input {
        PlotInput::WavefunctionSnapshots {
            grid,
            times_fs,
            reconstructed,
            exact,
        } => {
            if reconstructed.len() != times_fs.len() || exact.len() != times_fs.len() {
                return Err(Error::LengthMismatch {
                    expected: times_fs.len(),
                    got: reconstructed.len().min(exact.len()),
                });
            }
            if reconstructed.iter().chain(exact.iter()).any(|f| f.grid() != *grid) {
                return Err(Error::GridMismatch);
            }
            let mut header = vec!["x_bohr".to_string()];
            for t in *times_fs {
                for part in ["re", "im"] {
                    for which in ["reconstructed", "exact"] {
                        header.push(format!("{part}_{which}_t{t}fs"));
                    }
                }
            }
            let rows = (0..grid.len()).map(|j| {
                let mut r = vec![fmt_f64(grid.x(j))];
                for (a, b) in reconstructed.iter().zip(exact.iter()) {
                    let (za, zb) = (a.values()[j], b.values()[j]);
                    r.extend([fmt_f64(za.re), fmt_f64(zb.re), fmt_f64(za.im), fmt_f64(zb.im)]);
                }
                r
            });
            Ok(csv_table(&header, rows))
        }
        PlotInput::PotentialCompare { estimate, exact } => {
            let grid = estimate.grid;
            if exact.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: exact.len(),
                });
            }
            let header: Vec<String> = ["x_bohr", "V_reconstructed", "V_exact", "mask"]
                .map(String::from)
                .to_vec();
            let rows = (0..grid.len()).map(|j| {
                vec![
                    fmt_f64(grid.x(j)),
                    fmt_f64(estimate.values[j]),
                    fmt_f64(exact[j]),
                    (estimate.mask[j] as u8).to_string(),
                ]
            });
            Ok(csv_table(&header, rows))
        }
        PlotInput::CorrelationSet(corr) => {
            let mut header = vec!["t_fs".to_string()];
            for g in 0..corr.count() {
                header.extend([format!("re_c{g}"), format!("im_c{g}"), format!("confident_c{g}")]);
            }
            let rows = (0..corr.t_axis.len).map(|i| {
                let mut r = vec![fmt_f64(corr.t_axis.value(i))];
                for g in 0..corr.count() {
                    let z = corr.get(i, g);
                    r.extend([fmt_f64(z.re), fmt_f64(z.im), (corr.confident(i, g) as u8).to_string()]);
                }
                r
            });
            Ok(csv_table(&header, rows))
        }
        PlotInput::Leaderboard(cands) => {
            let mut sorted: Vec<&SignCandidate> = cands.iter().collect();
            sorted.sort_by(|a, b| a.rank_cmp(b));
            let header: Vec<String> = ["rank", "signs", "sigma2_hartree2", "fidelity"]
                .map(String::from)
                .to_vec();
            let rows = sorted.into_iter().enumerate().map(|(k, c)| {
                vec![
                    k.to_string(),
                    c.signs.to_string(),
                    fmt_f64(c.variance),
                    c.fidelity.map(fmt_f64).unwrap_or_default(),
                ]
            });
            Ok(csv_table(&header, rows))
        }
    }
}

/// Write one plot CSV; `kind` must match the input variant.
pub fn emit_plot_csv(kind: PlotKind, input: &PlotInput, path: &Path) -> Result<()> {
    if kind != input.kind() {
        return Err(Error::InvalidArgument(format!(
            "plot kind {kind:?} does not match its input"
        )));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, render(input)?)?;
    Ok(())
}

/// Two-column CSV with a header.
pub fn write_series(path: &Path, names: [&str; 2], xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let header = names.map(String::from).to_vec();
    fs::write(
        path,
        csv_table(&header, xs.iter().zip(ys).map(|(x, y)| vec![fmt_f64(*x), fmt_f64(*y)])),
    )?;
    Ok(())
}
