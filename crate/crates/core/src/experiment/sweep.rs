use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SweepKind};
use super::output::Header;
use super::with_workers;
use crate::error::{Error, Result};
use crate::lindblad::{cx2_bitflip_probability, detuned_stabilization_generator, dissipative_map, CxModel, FockSpace, C64};

/// One sweep point. Failed points keep their error message instead of a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// CX²: flip probability. Buffer detuning: population ending in |−α⟩.
    pub p_flip: Option<f64>,
    /// Buffer detuning only: population ending in |+α⟩.
    pub p_plus: Option<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub header: Header,
    pub kind: SweepKind,
    pub dim: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepOutput {
    pub fn table(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        self.rows
            .iter()
            .map(|r| vec![r.value.to_string(), opt(r.p_flip), opt(r.p_plus), r.error.clone().unwrap_or_default()])
            .collect()
    }
}

fn point(config: &ExperimentConfig, value: f64) -> SweepRow {
    let l = config.lindblad.as_ref().expect("validated");
    let run = || -> Result<(f64, Option<f64>, Vec<String>)> {
        let space = FockSpace::new(l.dim)?;
        match l.kind {
            SweepKind::ChiRatio => {
                let c = l.cx.expect("validated");
                let m = CxModel {
                    chi_ge: value * c.chi_gf,
                    chi_gf: c.chi_gf,
                    gate_time: c.gate_time,
                    ancilla_decay_fe: c.ancilla_decay_fe,
                    ancilla_decay_eg: c.ancilla_decay_eg,
                    prep_error_e: c.prep_error_e,
                    alpha_sq: c.alpha_sq,
                    kappa2: c.kappa2,
                    dissipation_time: c.dissipation_time,
                };
                Ok((cx2_bitflip_probability(&m, space)?, None, vec![]))
            }
            SweepKind::BufferDetuning => {
                let b = l.buffer.expect("validated");
                let alpha = C64::from(b.alpha_sq.sqrt());
                let g = detuned_stabilization_generator(b.g2, value, b.kappa_b, alpha, space)?;
                let (pp, pm) = dissipative_map(C64::new(b.beta_re, b.beta_im), &g, b.t_relax)?;
                Ok((pm, Some(pp), g.warnings.clone()))
            }
        }
    };
    match run() {
        Ok((p, pp, warnings)) => SweepRow { value, p_flip: Some(p), p_plus: pp, warnings, error: None },
        Err(e) => SweepRow { value, p_flip: None, p_plus: None, warnings: vec![], error: Some(e.to_string()) },
    }
}

/// Evaluate every sweep value. Per-point failures are reported in the rows;
/// the call fails only when no point succeeds.
pub fn run_lindblad_sweep(config: &ExperimentConfig, workers: Option<usize>) -> Result<SweepOutput> {
    config.validate()?;
    let l = config.lindblad.as_ref().ok_or_else(|| Error::Config("no [lindblad] section".into()))?;
    let rows: Vec<SweepRow> = with_workers(workers, || l.values.par_iter().map(|&v| point(config, v)).collect())?;
    if rows.iter().all(|r| r.error.is_some()) {
        let first = rows[0].error.clone().unwrap_or_default();
        return Err(Error::Integrator(format!("every sweep point failed; first: {first}")));
    }
    Ok(SweepOutput { header: Header::new(config), kind: l.kind, dim: l.dim, rows })
}
