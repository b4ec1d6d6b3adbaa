use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{DecoderVariant, ExperimentConfig};
use super::memory::{count_failures, cycle_point, eps_from_fit, point_seed, ShotDecoder};
use super::output::Header;
use super::with_workers;
use crate::analysis::{error_budget, fit_exponential, Budget, BudgetOptions, Estimate};
use crate::error::{Error, Result};
use crate::graph::{p_odd, MatchingGraph};
use crate::noise::{idle_bitflip, RepCodeNoiseModel};
use crate::sampler::Basis;

const STREAM_BUDGET: u64 = 2;

/// Summed contributions of one mechanism class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTotal {
    pub class: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetOutput {
    pub header: Header,
    pub d: usize,
    pub alpha_sq: f64,
    /// Nominal strength aᵢ of every mechanism, in budget order.
    pub mechanisms: Vec<(String, f64)>,
    pub budget: Budget,
    pub classes: Vec<ClassTotal>,
    pub sum_of_contributions: f64,
}

const CLASSES: [&str; 4] = ["idle_bitflip", "cx_bitflip", "phase_flip", "measurement"];

fn class_of(label: &str) -> &str {
    label.split('[').next().unwrap_or(label)
}

/// Budget of ε_L = (ε_phase + ε_bit)/2 over per-component mechanisms: idle bit
/// flip per cat, bit flip per CX, phase flip per data cat and syndrome error per
/// ancilla. Erasures enter the syndrome error as p_meas + p_erase/2. The bit-flip
/// part is exact; the phase part is simulated with one fixed shot stream so
/// that every evaluation point sees the same random numbers.
pub fn run_budget(config: &ExperimentConfig, workers: Option<usize>) -> Result<BudgetOutput> {
    config.validate()?;
    let bc = config.budget.as_ref().ok_or_else(|| Error::Config("no [budget] section".into()))?;
    let bf = config.bitflip.ok_or_else(|| Error::Config("budget needs a [bitflip] section".into()))?;
    let d = bc.distance;
    let alpha_sq = bc.alpha_sq;
    let model = config.noise_model(d, alpha_sq)?;
    let n_gates = 2 * (d - 1);
    let mut mechanisms = Vec::new();
    for q in 0..d {
        mechanisms.push((format!("idle_bitflip[{q}]"), idle_bitflip(bf.idle_a, bf.idle_b, alpha_sq)));
    }
    for g in 0..n_gates {
        mechanisms.push((format!("cx_bitflip[{g}]"), 0.5 * (bf.cx_g + bf.cx_f)));
    }
    for q in 0..d {
        mechanisms.push((format!("phase_flip[{q}]"), model.p_z[q]));
    }
    for j in 0..d - 1 {
        mechanisms.push((format!("measurement[{j}]"), model.p_meas[j] + 0.5 * model.p_erase[j]));
    }
    let labels: Vec<String> = mechanisms.iter().map(|m| m.0.clone()).collect();
    let nominal: Vec<f64> = mechanisms.iter().map(|m| m.1).collect();
    let opts = BudgetOptions { step_fraction: bc.step_fraction, noise_factor: bc.noise_factor };
    let n_bit = d + n_gates;
    let memo: Mutex<HashMap<Vec<u64>, Estimate>> = Mutex::new(HashMap::new());

    let phase = |x: &[f64]| -> Result<Estimate> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(e) = memo.lock().expect("memo lock").get(&key) {
            return Ok(*e);
        }
        let m = RepCodeNoiseModel {
            d,
            p_z: x[..d].to_vec(),
            mid_cycle_fraction: model.mid_cycle_fraction,
            p_meas: x[d..].iter().map(|p| p.min(1.0)).collect(),
            p_erase: vec![0.0; d - 1],
            t_cycle: model.t_cycle,
            p_final: model.p_final.clone(),
            p_x: vec![0.0; d],
        };
        let mut points = Vec::new();
        for &cycles in &bc.cycles {
            let dec = ShotDecoder::new(DecoderVariant::NoErasure, MatchingGraph::from_model(&m, cycles)?, None)?;
            let seed = point_seed(config.seed, d, alpha_sq, cycles, Basis::X, STREAM_BUDGET);
            let fails = count_failures(&m, cycles, Basis::X, alpha_sq, seed, bc.shots, std::slice::from_ref(&dec))?;
            let p = cycle_point(cycles, bc.shots, fails[0])?;
            points.push((cycles as f64, p.value, p.sigma));
        }
        let fit = fit_exponential(&points, config.fit.x_offset)?;
        let (value, sigma) = eps_from_fit(&fit);
        let e = Estimate { value, sigma };
        memo.lock().expect("memo lock").insert(key, e);
        Ok(e)
    };
    // ε_L is a sum of a bit-flip term and a phase-flip term, so each half is
    // differentiated on its own and exact differences stay exact.
    let bit_fn = |x: &[f64]| -> Result<Estimate> {
        Ok(Estimate::exact(-0.25 * (1.0 - 2.0 * p_odd(x)).ln()))
    };
    let phase_fn = |x: &[f64]| -> Result<Estimate> {
        let e = phase(x)?;
        Ok(Estimate { value: 0.5 * e.value, sigma: 0.5 * e.sigma })
    };
    let (bit, ph) = with_workers(workers, || -> Result<(Budget, Budget)> {
        let bit = error_budget(bit_fn, &labels[..n_bit], &nominal[..n_bit], &opts)?;
        let ph = error_budget(phase_fn, &labels[n_bit..], &nominal[n_bit..], &opts)?;
        Ok((bit, ph))
    })??;
    let budget = Budget {
        contributions: bit.contributions.into_iter().chain(ph.contributions).collect(),
        nominal: Estimate { value: bit.nominal.value + ph.nominal.value, sigma: ph.nominal.sigma },
    };
    let classes = CLASSES
        .iter()
        .map(|c| {
            let sel = budget.contributions.iter().filter(|k| class_of(&k.label) == *c);
            let (v, s2) = sel.fold((0.0, 0.0), |(v, s2), k| (v + k.value, s2 + k.sigma * k.sigma));
            ClassTotal { class: c.to_string(), value: v, sigma: s2.sqrt() }
        })
        .collect();
    let sum_of_contributions = budget.total();
    Ok(BudgetOutput { header: Header::new(config), d, alpha_sq, mechanisms, budget, classes, sum_of_contributions })
}

impl BudgetOutput {
    pub fn rows(&self) -> Vec<Vec<String>> {
        self.budget
            .contributions
            .iter()
            .zip(&self.mechanisms)
            .map(|(c, m)| vec![c.label.clone(), m.1.to_string(), c.value.to_string(), c.sigma.to_string()])
            .collect()
    }
}
