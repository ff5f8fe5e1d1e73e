//! Atomic units (hbar = 1, bohr, hartree) and the handful of conversions the
//! toolkit needs.

/// Atomic units of time per femtosecond.
pub const AU_PER_FS: f64 = 41.341374575751;

/// Electron masses per unified atomic mass unit.
pub const AU_PER_DALTON: f64 = 1822.888486;

/// Mass of a 7Li atom in daltons.
pub const LI7_MASS_DA: f64 = 7.016004;

/// Reduced mass of 7Li2 in electron masses (about 6394.7).
pub const LI2_REDUCED_MASS: f64 = LI7_MASS_DA * AU_PER_DALTON / 2.0;

pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs * AU_PER_FS
}

pub fn au_to_fs(t_au: f64) -> f64 {
    t_au / AU_PER_FS
}

/// Number of whole `step`s in `time`, or an error when `time` is not (to a
/// relative 1e-6 of a step) an integer multiple of `step`.
pub fn whole_steps(time: f64, step: f64) -> crate::Result<usize> {
    if !(step > 0.0) || !(time >= 0.0) || !time.is_finite() {
        return Err(crate::Error::Incommensurate { time, step });
    }
    let ratio = time / step;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-6 {
        return Err(crate::Error::Incommensurate { time, step });
    }
    Ok(rounded as usize)
}
