//! Circuit-level phase-flip noise for the repetition code, plus the
//! phenomenological bit-flip and overhead-projection models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-cycle noise of a distance-d phase-flip repetition code.
///
/// Ancilla `j` sits between data qubits `j` and `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepCodeNoiseModel {
    pub d: usize,
    /// Phase-flip probability per data qubit per cycle.
    pub p_z: Vec<f64>,
    /// Fraction of `p_z` that lands between the two CX layers.
    pub mid_cycle_fraction: f64,
    /// Syndrome measurement error per ancilla.
    pub p_meas: Vec<f64>,
    /// Syndrome erasure probability per ancilla.
    pub p_erase: Vec<f64>,
    /// Cycle time (s).
    pub t_cycle: f64,
    /// Error probability of the final data-qubit measurement.
    pub p_final: Vec<f64>,
    /// Bit-flip probability per data qubit per cycle (Z-basis experiments).
    pub p_x: Vec<f64>,
}

pub const DEFAULT_MID_CYCLE_FRACTION: f64 = 0.5;

fn check_prob(name: &str, v: f64, max: f64) -> Result<()> {
    if !(0.0..=max).contains(&v) {
        return Err(Error::InvalidInput(format!("{name} = {v} outside [0, {max}]")));
    }
    Ok(())
}

impl RepCodeNoiseModel {
    /// Uniform model: same probabilities on every qubit and ancilla.
    pub fn uniform(d: usize, p_z: f64, p_meas: f64, p_erase: f64, t_cycle: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput(format!("distance must be >= 2, got {d}")));
        }
        let m = RepCodeNoiseModel {
            d,
            p_z: vec![p_z; d],
            mid_cycle_fraction: DEFAULT_MID_CYCLE_FRACTION,
            p_meas: vec![p_meas; d - 1],
            p_erase: vec![p_erase; d - 1],
            t_cycle,
            p_final: vec![0.0; d],
            p_x: vec![0.0; d],
        };
        m.validate()?;
        Ok(m)
    }

    /// Noiseless model.
    pub fn noiseless(d: usize, t_cycle: f64) -> Result<Self> {
        Self::uniform(d, 0.0, 0.0, 0.0, t_cycle)
    }

    pub fn ancillas(&self) -> usize {
        self.d - 1
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d < 2 || d > 63 {
            return Err(Error::InvalidInput(format!("distance must lie in [2, 63], got {d}")));
        }
        let lens = [
            ("p_z", self.p_z.len(), d),
            ("p_meas", self.p_meas.len(), d - 1),
            ("p_erase", self.p_erase.len(), d - 1),
            ("p_final", self.p_final.len(), d),
            ("p_x", self.p_x.len(), d),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::InvalidInput(format!("{name} has length {got}, expected {want}")));
            }
        }
        for &p in &self.p_z {
            check_prob("p_z", p, 0.5)?;
        }
        for &p in &self.p_x {
            check_prob("p_x", p, 0.5)?;
        }
        for &p in &self.p_final {
            check_prob("p_final", p, 0.5)?;
        }
        for &p in &self.p_erase {
            check_prob("p_erase", p, 0.5)?;
        }
        // p_meas = 1 is a legal (if useless) model, so the upper bound is 1 here
        for (j, &p) in self.p_meas.iter().enumerate() {
            check_prob("p_meas", p, 1.0)?;
            if p + self.p_erase[j] > 1.0 + 1e-15 {
                return Err(Error::InvalidInput(format!("p_meas + p_erase > 1 on ancilla {j}")));
            }
        }
        check_prob("mid_cycle_fraction", self.mid_cycle_fraction, 1.0)?;
        if !(self.t_cycle > 0.0) {
            return Err(Error::InvalidInput(format!("t_cycle must be > 0, got {}", self.t_cycle)));
        }
        Ok(())
    }
}

/// Phenomenological bit-flip model: idle decay per cat and additive CX terms.
///
/// CX gates are ordered `2j` = (ancilla j, qubit j) and `2j+1` = (ancilla j, qubit j+1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitFlipPhenomModel {
    /// (A, B) per cat: p_idle = A e^{-B |α|²}.
    pub idle: Vec<(f64, f64)>,
    /// (p_g, p_f) per CX gate, the contributions with the ancilla starting in g or f.
    pub cx: Vec<(f64, f64)>,
}

impl BitFlipPhenomModel {
    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.idle {
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::InvalidInput(format!("idle parameters must be >= 0, got ({a}, {b})")));
            }
        }
        for &(g, f) in &self.cx {
            if !(g >= 0.0 && f >= 0.0) {
                return Err(Error::InvalidInput(format!("CX probabilities must be >= 0, got ({g}, {f})")));
            }
        }
        Ok(())
    }

    /// Model for a distance-d code with identical cats and gates.
    pub fn uniform(d: usize, a: f64, b: f64, p_g: f64, p_f: f64) -> Self {
        BitFlipPhenomModel { idle: vec![(a, b); d], cx: vec![(p_g, p_f); 2 * (d.max(1) - 1)] }
    }

    /// Per-data-qubit bit-flip probability per cycle, for injecting into the sampler.
    pub fn per_qubit(&self, alpha_sq: f64) -> Vec<f64> {
        let d = self.idle.len();
        let mut p: Vec<f64> = self.idle.iter().map(|&(a, b)| idle_bitflip(a, b, alpha_sq)).collect();
        for (g, &(pg, pf)) in self.cx.iter().enumerate() {
            let q = g / 2 + g % 2;
            if q < d {
                p[q] += 0.5 * (pg + pf);
            }
        }
        p
    }
}

/// p_Z = κ₁ |α|² t_cycle.
pub fn pz_per_cycle(kappa1_eff: f64, alpha_sq: f64, t_cycle: f64) -> Result<f64> {
    if kappa1_eff < 0.0 || alpha_sq < 0.0 || t_cycle < 0.0 {
        return Err(Error::Domain("pz_per_cycle inputs must be nonnegative".into()));
    }
    let p = kappa1_eff * alpha_sq * t_cycle;
    if p > 0.5 {
        return Err(Error::Domain(format!("phase-flip probability {p} exceeds 0.5")));
    }
    Ok(p)
}

/// A e^{-B |α|²}.
pub fn idle_bitflip(a: f64, b: f64, alpha_sq: f64) -> f64 {
    a * (-b * alpha_sq).exp()
}

/// Least-squares fit of ln p = ln A − B |α|².
pub fn fit_idle_bitflip(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Fit { message: "need at least 2 points".into(), residuals: vec![] });
    }
    if points.iter().any(|&(_, p)| !(p > 0.0)) {
        return Err(Error::Domain("idle bit-flip probabilities must be > 0".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit { message: "degenerate photon numbers".into(), residuals: vec![] });
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    Ok(((my - slope * mx).exp(), -slope))
}

/// Additive CX bit-flip probability and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CxFit {
    pub p_cx: f64,
    pub std_err: f64,
}

/// Fit p_CX² = p_idle + 2 p_cx over points with |α|² ≥ `fit_range_min`.
pub fn fit_cx_phenom(cx2_probs: &[(f64, f64)], idle: (f64, f64), fit_range_min: f64) -> Result<CxFit> {
    let r: Vec<f64> = cx2_probs
        .iter()
        .filter(|p| p.0 >= fit_range_min)
        .map(|&(x, p)| 0.5 * (p - idle_bitflip(idle.0, idle.1, x)))
        .collect();
    if r.len() < 2 {
        return Err(Error::Fit {
            message: format!("{} points with alpha_sq >= {fit_range_min}, need 2", r.len()),
            residuals: r,
        });
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CxFit { p_cx: mean, std_err: (var / n).sqrt() })
}

/// Σᵢ idle + Σⱼ ½(p_g + p_f).
pub fn logical_bitflip_per_cycle(m: &BitFlipPhenomModel, alpha_sq: f64) -> f64 {
    let idle: f64 = m.idle.iter().map(|&(a, b)| idle_bitflip(a, b, alpha_sq)).sum();
    let cx: f64 = m.cx.iter().map(|&(g, f)| 0.5 * (g + f)).sum();
    idle + cx
}

/// Inputs of the coherence-limited overhead projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadInputs {
    pub d: usize,
    pub t_cycle: f64,
    pub t1: f64,
    pub alpha_sq: f64,
    pub t_z: f64,
    pub a_fit: f64,
    pub p_th: f64,
}

impl OverheadInputs {
    pub fn new(d: usize, t_cycle: f64, t1: f64, alpha_sq: f64, t_z: f64) -> Self {
        OverheadInputs { d, t_cycle, t1, alpha_sq, t_z, a_fit: 0.1, p_th: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overhead {
    pub eps_phase: f64,
    pub eps_bit: f64,
    pub eps_total: f64,
}

/// Projected logical error per cycle for idealized gates.
pub fn project_overhead(inp: &OverheadInputs) -> Result<Overhead> {
    if inp.d < 1 || !(inp.t1 > 0.0) || !(inp.t_z > 0.0) || !(inp.p_th > 0.0) {
        return Err(Error::Domain("overhead inputs must be positive".into()));
    }
    let p_z = pz_per_cycle(1.0 / inp.t1, inp.alpha_sq, inp.t_cycle)?;
    let eps_phase = inp.a_fit * (p_z / inp.p_th).powf((inp.d as f64 + 1.0) / 2.0);
    let eps_bit = inp.d as f64 * inp.t_cycle / (2.0 * inp.t_z);
    Ok(Overhead { eps_phase, eps_bit, eps_total: 0.5 * (eps_phase + eps_bit) })
}
