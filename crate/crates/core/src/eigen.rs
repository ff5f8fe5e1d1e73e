//! Fourier-grid Hamiltonian and its low-lying vibrational eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::grid::dot_real;
use crate::{Error, Field, Grid, PotentialModel, Result};

/// Vibrational eigenpairs of a grid Hamiltonian, ascending in energy.
///
/// Each state is real, normalized so that `sum psi^2 dx = 1`, and its
/// largest-magnitude sample is positive.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    grid: Grid,
    mass: f64,
    energies: Vec<f64>,
    states: Vec<Vec<f64>>,
    unbound: Vec<usize>,
}

/// Kinetic energy matrix `F^-1 diag(k^2 / 2m) F`, which is real and circulant.
pub fn kinetic_matrix(grid: &Grid, mass: f64) -> DMatrix<f64> {
    let n = grid.len();
    let ks = grid.momenta();
    let dx = grid.dx();
    let row: Vec<f64> = (0..n)
        .map(|d| {
            ks.iter()
                .map(|&k| (k * d as f64 * dx).cos() * k * k / (2.0 * mass))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    DMatrix::from_fn(n, n, |j, l| row[(j + n - l) % n])
}

pub fn build_hamiltonian(grid: &Grid, potential: &PotentialModel, mass: f64) -> Result<DMatrix<f64>> {
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument(format!("mass must be positive, got {mass}")));
    }
    let v = potential.sample_on_grid(grid)?;
    let mut h = kinetic_matrix(grid, mass);
    for (j, vj) in v.into_iter().enumerate() {
        h[(j, j)] += vj;
    }
    Ok(h)
}

/// Diagonalize `h` and keep the lowest `count` eigenpairs.
pub fn eigenpairs(h: &DMatrix<f64>, grid: &Grid, mass: f64, count: usize) -> Result<EigenBasis> {
    let n = grid.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: h.nrows(),
        });
    }
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "eigenpair count {count} must lie in 1..={n}"
        )));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let scale = 1.0 / grid.dx().sqrt();
    let mut energies = Vec::with_capacity(count);
    let mut states = Vec::with_capacity(count);
    for &i in order.iter().take(count) {
        energies.push(eig.eigenvalues[i]);
        let col = eig.eigenvectors.column(i);
        let mut psi: Vec<f64> = col.iter().map(|v| v * scale).collect();
        let peak = psi
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if peak < 0.0 {
            psi.iter_mut().for_each(|v| *v = -*v);
        }
        states.push(psi);
    }
    Ok(EigenBasis {
        grid: *grid,
        mass,
        energies,
        states,
        unbound: Vec::new(),
    })
}

/// Build and diagonalize in one call, flagging levels above the curve's asymptote.
pub fn solve(grid: &Grid, potential: &PotentialModel, mass: f64, count: usize) -> Result<EigenBasis> {
    let h = build_hamiltonian(grid, potential, mass)?;
    let mut basis = eigenpairs(&h, grid, mass, count)?;
    if let Some(limit) = potential.asymptote() {
        basis.unbound = (0..count).filter(|&g| basis.energies[g] >= limit).collect();
    }
    Ok(basis)
}

/// Closed-form Morse level `E_g = we (g+1/2) - [we (g+1/2)]^2 / 4D + T_e`.
pub fn analytic_morse_levels(model: &PotentialModel, mass: f64, g: usize) -> Result<f64> {
    let PotentialModel::Morse { d, b, t_e, .. } = *model else {
        return Err(Error::InvalidArgument("analytic levels need a Morse curve".into()));
    };
    let we = b * (2.0 * d / mass).sqrt();
    // levels rise while g + 1/2 < 2D / we
    let bound = (2.0 * d / we - 0.5).ceil().max(0.0) as usize;
    if g >= bound {
        return Err(Error::Unbound { level: g, bound });
    }
    let u = we * (g as f64 + 0.5);
    Ok(u - u * u / (4.0 * d) + t_e)
}

impl EigenBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, g: usize) -> f64 {
        self.energies[g]
    }

    /// Zero-point frequency `omega_0`.
    pub fn omega0(&self) -> f64 {
        self.energies[0]
    }

    /// `omega_g - omega_0`.
    pub fn shifted(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e - self.energies[0]).collect()
    }

    pub fn state(&self, g: usize) -> &[f64] {
        &self.states[g]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn field(&self, g: usize) -> Field {
        Field::from_real(self.grid, &self.states[g]).expect("eigenstates are finite")
    }

    /// Indices of levels at or above the dissociation asymptote.
    pub fn unbound(&self) -> &[usize] {
        &self.unbound
    }

    /// `<psi_g|f>` for every state.
    pub fn project(&self, f: &[Complex64]) -> Vec<Complex64> {
        let dx = self.grid.dx();
        self.states.iter().map(|s| dot_real(s, f) * dx).collect()
    }

    /// Keep only the lowest `count` states.
    pub fn truncated(&self, count: usize) -> Result<EigenBasis> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {} states to {count}",
                self.len()
            )));
        }
        Ok(EigenBasis {
            grid: self.grid,
            mass: self.mass,
            energies: self.energies[..count].to_vec(),
            states: self.states[..count].to_vec(),
            unbound: self.unbound.iter().copied().filter(|&g| g < count).collect(),
        })
    }

    pub fn from_parts(grid: Grid, mass: f64, energies: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if energies.len() != states.len() || energies.is_empty() {
            return Err(Error::LengthMismatch {
                expected: energies.len(),
                got: states.len(),
            });
        }
        if let Some(s) = states.iter().find(|s| s.len() != grid.len()) {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: s.len(),
            });
        }
        Ok(EigenBasis {
            grid,
            mass,
            energies,
            states,
            unbound: Vec::new(),
        })
    }
}
