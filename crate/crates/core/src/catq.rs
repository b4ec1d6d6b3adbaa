//! Closed-form cat-qubit physics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical knobs of one cat qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatParams {
    /// Mean photon number |α|².
    pub alpha_sq: f64,
    /// Effective single-photon loss rate 1/T1 (1/s).
    pub kappa1_eff: f64,
    /// Error-correction cycle time (s).
    pub t_cycle: f64,
}

impl CatParams {
    pub fn new(alpha_sq: f64, kappa1_eff: f64, t_cycle: f64) -> Result<Self> {
        let p = CatParams { alpha_sq, kappa1_eff, t_cycle };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_sq > 0.0) || !self.alpha_sq.is_finite() {
            return Err(Error::Domain(format!("alpha_sq must be > 0, got {}", self.alpha_sq)));
        }
        if !(self.kappa1_eff >= 0.0) || !self.kappa1_eff.is_finite() {
            return Err(Error::Domain(format!("kappa1_eff must be >= 0, got {}", self.kappa1_eff)));
        }
        if !(self.t_cycle > 0.0) || !self.t_cycle.is_finite() {
            return Err(Error::Domain(format!("t_cycle must be > 0, got {}", self.t_cycle)));
        }
        Ok(())
    }
}

/// Loss-induced transition rates between the even and odd cat states (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFlipRates {
    pub gamma_plus_to_minus: f64,
    pub gamma_minus_to_plus: f64,
}

impl PhaseFlipRates {
    pub fn total(&self) -> f64 {
        self.gamma_plus_to_minus + self.gamma_minus_to_plus
    }
}

/// Diagonals of the two readout POVM elements in the computational basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZReadoutPovm {
    /// Weights of |0⟩⟨0| and |1⟩⟨1| in F0.
    pub f0_diag: (f64, f64),
    /// Weights of |0⟩⟨0| and |1⟩⟨1| in F1.
    pub f1_diag: (f64, f64),
}

impl ZReadoutPovm {
    /// Probability of reporting the wrong outcome for a computational state.
    pub fn error(&self) -> f64 {
        0.5 * (self.f0_diag.1 + self.f1_diag.0)
    }
}

/// γ₊→₋ = κ₁|α|² tanh|α|² and γ₋→₊ = κ₁|α|² coth|α|².
pub fn phase_flip_rates(p: &CatParams) -> Result<PhaseFlipRates> {
    if p.alpha_sq == 0.0 {
        return Err(Error::Domain("alpha_sq = 0: coth diverges".into()));
    }
    p.validate()?;
    let x = p.alpha_sq;
    let t = x.tanh();
    Ok(PhaseFlipRates {
        gamma_plus_to_minus: p.kappa1_eff * x * t,
        gamma_minus_to_plus: p.kappa1_eff * x / t,
    })
}

/// Stationary population of the even cat under single-photon loss.
pub fn steady_state_plus_population(alpha_sq: f64) -> Result<f64> {
    if !(alpha_sq >= 0.0) {
        return Err(Error::Domain(format!("alpha_sq must be >= 0, got {alpha_sq}")));
    }
    let e2 = (-2.0 * alpha_sq).exp();
    let e4 = e2 * e2;
    Ok((1.0 + e2).powi(2) / (2.0 * (1.0 + e4)))
}

/// Symmetrized Z-basis readout POVM including ancilla confusion p_ge, p_eg.
pub fn z_readout_povm(alpha_sq: f64, p_ge: f64, p_eg: f64) -> Result<ZReadoutPovm> {
    if !(alpha_sq >= 0.0) {
        return Err(Error::Domain(format!("alpha_sq must be >= 0, got {alpha_sq}")));
    }
    for (name, v) in [("p_ge", p_ge), ("p_eg", p_eg)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} must lie in [0,1], got {v}")));
        }
    }
    // -expm1 keeps precision when e^{-4|α|²} is close to 1
    let overlap_term = (-(-4.0 * alpha_sq).exp_m1()).sqrt();
    let contrast = overlap_term * (1.0 - 0.5 * (p_ge + p_eg));
    let hi = 0.5 * (1.0 + contrast);
    let lo = 0.5 * (1.0 - contrast);
    Ok(ZReadoutPovm { f0_diag: (hi, lo), f1_diag: (lo, hi) })
}

/// ε = t_cycle / (2 T).
pub fn error_per_cycle(decay_time: f64, t_cycle: f64) -> Result<f64> {
    if !(decay_time > 0.0) {
        return Err(Error::Domain(format!("decay_time must be > 0, got {decay_time}")));
    }
    Ok(t_cycle / (2.0 * decay_time))
}

/// Inverse of [`error_per_cycle`].
pub fn decay_time_from_error(eps: f64, t_cycle: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("error per cycle must be > 0, got {eps}")));
    }
    Ok(t_cycle / (2.0 * eps))
}
