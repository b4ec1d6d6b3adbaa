//! Storage cat ⊗ three-level ancilla model of a repeated CX (CX²) cycle.

use serde::{Deserialize, Serialize};

use super::{
    cat_populations, coherent, evolve, evolve_continued, identity, kron, number, projector, trace_first,
    two_photon_generator, FockSpace, Generator, Op, C64,
};
use crate::error::{Error, Result};

/// One CX² cycle: the ancilla starts in |f⟩ (or |e⟩ with probability
/// `prep_error_e`), the storage rotates at χ_ge or χ_gf depending on the
/// ancilla level, and two-photon dissipation then runs on the storage alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CxModel {
    pub chi_ge: f64,
    pub chi_gf: f64,
    pub gate_time: f64,
    pub ancilla_decay_fe: f64,
    pub ancilla_decay_eg: f64,
    pub prep_error_e: f64,
    pub alpha_sq: f64,
    pub kappa2: f64,
    pub dissipation_time: f64,
}

impl CxModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.chi_ge, self.chi_gf, self.gate_time, self.kappa2, self.dissipation_time, self.alpha_sq];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("CX model parameters must be finite".into()));
        }
        if !(self.gate_time > 0.0 && self.kappa2 > 0.0 && self.dissipation_time > 0.0 && self.alpha_sq > 0.0) {
            return Err(Error::InvalidInput("gate time, kappa2, dissipation time and alpha_sq must be > 0".into()));
        }
        if !(self.ancilla_decay_fe >= 0.0 && self.ancilla_decay_eg >= 0.0) {
            return Err(Error::InvalidInput("ancilla decay rates must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.prep_error_e) {
            return Err(Error::InvalidInput(format!("prep error {} outside [0, 1]", self.prep_error_e)));
        }
        Ok(())
    }
}

/// Population moved from |α⟩ to |−α⟩ by one cycle.
pub fn cx2_bitflip_probability(m: &CxModel, space: FockSpace) -> Result<f64> {
    m.validate()?;
    let n = space.dim;
    let alpha = C64::from(m.alpha_sq.sqrt());
    let level = |k: usize| {
        let mut p = Op::zeros(3, 3);
        p[(k, k)] = C64::from(1.0);
        p
    };
    let lower = |from: usize, to: usize| {
        let mut p = Op::zeros(3, 3);
        p[(to, from)] = C64::from(1.0);
        p
    };
    let (g_, e_, f_) = (0, 1, 2);
    let nhat = number(n);
    let h = kron(&level(e_), &nhat) * C64::from(m.chi_ge) + kron(&level(f_), &nhat) * C64::from(m.chi_gf);
    let id = identity(n);
    let gate = Generator::new(
        h,
        vec![(kron(&lower(f_, e_), &id), m.ancilla_decay_fe), (kron(&lower(e_, g_), &id), m.ancilla_decay_eg)],
    )?;
    let anc = level(f_) * C64::from(1.0 - m.prep_error_e) + level(e_) * C64::from(m.prep_error_e);
    let rho0 = kron(&anc, &projector(&coherent(alpha, n)));
    let after_gate = evolve(&rho0, &gate, m.gate_time)?;
    let storage = trace_first(&after_gate, 3, n);
    let relax = two_photon_generator(alpha, m.kappa2, space)?;
    let out = evolve_continued(&storage, &relax, m.dissipation_time)?;
    let (pp, pm) = cat_populations(&out, alpha);
    if pp + pm < 0.99 {
        return Err(Error::NotConverged { residual: 1.0 - pp - pm });
    }
    Ok(pm)
}
