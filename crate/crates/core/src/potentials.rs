//! Potential-energy curves.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Grid, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialModel {
    /// `D (1 - exp(-b (x - x0)))^2 + t_e`
    Morse { d: f64, b: f64, x0: f64, t_e: f64 },
    /// `D exp(-b (x - x0)) + t_e`
    RepulsiveExponential { d: f64, b: f64, x0: f64, t_e: f64 },
    /// Real samples on a grid, linearly interpolated between points.
    Tabulated { grid: Grid, values: Vec<f64> },
}

/// The three curves of the model Li2 systems (atomic units).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    X,
    A,
    ATilde,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::X => "X",
            Preset::A => "A",
            Preset::ATilde => "A_tilde",
        }
    }

    pub fn model(self) -> PotentialModel {
        match self {
            Preset::X => PotentialModel::Morse {
                d: 0.0378492,
                b: 0.4730844,
                x0: 5.0493478,
                t_e: 0.0,
            },
            Preset::A => PotentialModel::Morse {
                d: 0.0426108,
                b: 0.3175063,
                x0: 5.8713786,
                t_e: 0.0640074,
            },
            Preset::ATilde => PotentialModel::RepulsiveExponential {
                d: 9.11267e-5,
                b: 1.5875317,
                x0: 7.3699313,
                t_e: 0.0640074,
            },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" => Ok(Preset::X),
            "A" => Ok(Preset::A),
            "A_tilde" => Ok(Preset::ATilde),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn preset(name: &str) -> Result<PotentialModel> {
    Ok(name.parse::<Preset>()?.model())
}

impl PotentialModel {
    pub fn tabulated(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabulated potential"));
        }
        Ok(PotentialModel::Tabulated { grid, values })
    }

    fn check(&self) -> Result<()> {
        match *self {
            PotentialModel::Morse { d, b, .. } | PotentialModel::RepulsiveExponential { d, b, .. } => {
                if d > 0.0 && b > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "analytic potential needs D > 0 and b > 0 (D = {d}, b = {b})"
                    )))
                }
            }
            PotentialModel::Tabulated { .. } => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check()?;
        Ok(match self {
            PotentialModel::Morse { d, b, x0, t_e } => {
                let s = 1.0 - (-b * (x - x0)).exp();
                d * s * s + t_e
            }
            PotentialModel::RepulsiveExponential { d, b, x0, t_e } => d * (-b * (x - x0)).exp() + t_e,
            PotentialModel::Tabulated { grid, values } => {
                let last = grid.x(grid.len() - 1);
                if !(x >= grid.x_min() && x <= last) {
                    return Err(Error::OutOfRange {
                        x,
                        min: grid.x_min(),
                        max: last,
                    });
                }
                let u = (x - grid.x_min()) / grid.dx();
                let j = (u.floor() as usize).min(grid.len() - 2);
                let w = u - j as f64;
                values[j] * (1.0 - w) + values[j + 1] * w
            }
        })
    }

    pub fn sample_on_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        if let PotentialModel::Tabulated { grid: g, values } = self {
            if g == grid {
                return Ok(values.clone());
            }
        }
        grid.points().into_iter().map(|x| self.eval(x)).collect()
    }

    /// Energy of the dissociation asymptote, if the curve has one.
    pub fn asymptote(&self) -> Option<f64> {
        match *self {
            PotentialModel::Morse { d, t_e, .. } => Some(d + t_e),
            PotentialModel::RepulsiveExponential { t_e, .. } => Some(t_e),
            PotentialModel::Tabulated { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn presets_match_table() {
        match preset("X").unwrap() {
            PotentialModel::Morse { d, .. } => assert_eq!(d, 0.0378492),
            other => panic!("{other:?}"),
        }
        match preset("A").unwrap() {
            PotentialModel::Morse { x0, .. } => assert_eq!(x0, 5.8713786),
            other => panic!("{other:?}"),
        }
        match preset("A_tilde").unwrap() {
            PotentialModel::RepulsiveExponential { b, .. } => assert_eq!(b, 1.5875317),
            other => panic!("{other:?}"),
        }
        assert!(matches!(preset("B"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn morse_minimum_and_limit() {
        let x = Preset::X.model();
        assert_eq!(x.eval(5.0493478).unwrap(), 0.0);
        let a = Preset::A.model();
        assert_abs_diff_eq!(a.eval(5.8713786).unwrap(), 0.0640074, epsilon = 1e-15);
        assert_abs_diff_eq!(a.eval(200.0).unwrap(), 0.1066182, epsilon = 1e-12);
        assert_eq!(a.asymptote(), Some(0.0426108 + 0.0640074));
        // convex around the minimum
        let h = 1e-3;
        let v = |x| a.eval(x).unwrap();
        assert!(v(5.8713786 + h) + v(5.8713786 - h) > 2.0 * v(5.8713786));
    }

    #[test]
    fn repulsive_exponential_at_x0() {
        let m = Preset::ATilde.model();
        assert_abs_diff_eq!(m.eval(7.3699313).unwrap(), 9.11267e-5 + 0.0640074, epsilon = 1e-15);
        assert_abs_diff_eq!(m.eval(300.0).unwrap(), 0.0640074, epsilon = 1e-15);
    }

    #[test]
    fn sampled_x_minimum_sits_near_x0() {
        let g = Grid::new(2.0, 12.0, 256).unwrap();
        let v = Preset::X.model().sample_on_grid(&g).unwrap();
        let (jmin, vmin) = v.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(j, m), (i, &x)| if x < m { (i, x) } else { (j, m) },
        );
        assert_eq!(jmin, g.nearest_index(5.0493478));
        assert!((0.0..1e-5).contains(&vmin));
    }

    #[test]
    fn sampled_a_tilde_is_decreasing() {
        let g = Grid::new(2.0, 12.0, 256).unwrap();
        let v = Preset::ATilde.model().sample_on_grid(&g).unwrap();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn tabulated_constant_and_interpolation() {
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        let flat = PotentialModel::tabulated(g, vec![0.25; 8]).unwrap();
        assert_eq!(flat.sample_on_grid(&g).unwrap(), vec![0.25; 8]);
        let ramp = PotentialModel::tabulated(g, (0..8).map(|j| j as f64).collect()).unwrap();
        assert_abs_diff_eq!(ramp.eval(0.0625).unwrap(), 0.5, epsilon = 1e-12);
        assert!(matches!(ramp.eval(0.95), Err(Error::OutOfRange { .. })));
        assert!(matches!(ramp.eval(-0.1), Err(Error::OutOfRange { .. })));
    }
}
