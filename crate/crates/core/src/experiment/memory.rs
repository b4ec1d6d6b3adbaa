use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DecoderVariant, ExperimentConfig, WeightSource};
use super::output::Header;
use super::with_workers;
use crate::analysis::{beta_posterior, fit_exponential, fit_power_law, observable_estimate, DecayFit};
use crate::decoder::{decode_nodes, score_x, score_z, PathCache};
use crate::error::Result;
use crate::graph::{merge_edges_for_erasure, naive_erasure_graph, reconstruct_detectors};
use crate::graph::{correlation_weights, no_erasure_baseline, WeightOptions};
use crate::graph::{detectors_from_record, MatchingGraph};
use crate::noise::RepCodeNoiseModel;
use crate::rng::{derive_seed, shot_seed};
use crate::sampler::{sample_batch, sample_shot, Basis, SyndromeRecord};

/// Decodes X-basis shots for one (d, cycles) with one erasure strategy.
pub struct ShotDecoder {
    variant: DecoderVariant,
    /// Graph for shots without erasures, or for all shots when erasures are ignored.
    graph: MatchingGraph,
    cache: PathCache,
    merge_cap: Option<usize>,
}

impl ShotDecoder {
    /// `graph` is used for erasure-free shots; the erasure variants also use it
    /// as the baseline they rewrite.
    pub fn new(variant: DecoderVariant, graph: MatchingGraph, merge_cap: Option<usize>) -> Result<Self> {
        let cache = PathCache::new(&graph)?;
        Ok(ShotDecoder { variant, graph, cache, merge_cap })
    }

    pub fn variant(&self) -> DecoderVariant {
        self.variant
    }

    pub fn graph(&self) -> &MatchingGraph {
        &self.graph
    }

    /// Whether the decoded shot ends in a logical error.
    pub fn fails(&self, r: &SyndromeRecord) -> Result<bool> {
        if r.basis != Basis::X {
            return Ok(score_z(r));
        }
        if !r.has_erasures() {
            let det = detectors_from_record(r)?;
            return Ok(score_x(r, self.cache.correction(&det.defects())?));
        }
        let collapsed = r.collapse_erasures();
        match self.variant {
            DecoderVariant::NoErasure => {
                let det = detectors_from_record(&collapsed)?;
                Ok(score_x(r, self.cache.correction(&det.defects())?))
            }
            DecoderVariant::Naive => {
                let g = naive_erasure_graph(&self.graph, r)?;
                let det = detectors_from_record(&collapsed)?;
                Ok(score_x(r, decode_nodes(&g, &det.defects())?.correction))
            }
            DecoderVariant::Merged => {
                let rec = reconstruct_detectors(r)?;
                let g = merge_edges_for_erasure(&self.graph, &rec.clusters, self.merge_cap)?;
                let nodes: Vec<usize> = rec.values.iter().enumerate().filter(|(_, &v)| v == 1).map(|(k, _)| k).collect();
                Ok(score_x(r, decode_nodes(&g, &nodes)?.correction))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePoint {
    pub cycles: usize,
    pub shots: u64,
    pub failures: u64,
    /// Posterior estimate of ⟨O(0)O(t)⟩ and its standard deviation.
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub d: usize,
    pub alpha_sq: f64,
    pub basis: Basis,
    /// `None` for Z-basis points, which are not decoded.
    pub decoder: Option<DecoderVariant>,
    pub points: Vec<CyclePoint>,
    pub fit: Option<DecayFit>,
    /// Logical error per cycle and its standard deviation.
    pub eps: Option<f64>,
    pub eps_std: Option<f64>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub d: usize,
    pub basis: Basis,
    pub decoder: Option<DecoderVariant>,
    pub gamma: Option<f64>,
    pub gamma_std: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalError {
    pub d: usize,
    pub alpha_sq: f64,
    pub decoder: DecoderVariant,
    pub eps_phase: f64,
    pub eps_bit: f64,
    pub eps_total: f64,
}

/// Fraction of shots with a nontrivial detector, `[time][space]`, erasures read as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    pub d: usize,
    pub alpha_sq: f64,
    pub cycles: usize,
    pub probabilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryOutput {
    pub header: Header,
    pub results: Vec<PointResult>,
    pub gamma: Vec<GammaFit>,
    pub totals: Vec<TotalError>,
    pub detection: Vec<DetectionTable>,
}

/// ε = 1/(2T) per cycle from a decay time in cycles, with propagated std.
pub fn eps_from_fit(fit: &DecayFit) -> (f64, f64) {
    let t = fit.decay_time;
    (0.5 / t, 0.5 * fit.decay_time_std() / (t * t))
}

fn basis_tag(b: Basis) -> u64 {
    match b {
        Basis::X => 0,
        Basis::Z => 1,
    }
}

const STREAM_SHOTS: u64 = 0;
const STREAM_CALIBRATION: u64 = 1;

/// Seed of the shot stream for one configuration point; `stream` 0 holds the
/// memory-experiment shots, 1 the calibration shots.
pub fn point_seed(seed: u64, d: usize, alpha_sq: f64, cycles: usize, basis: Basis, stream: u64) -> u64 {
    derive_seed(seed, &[d as u64, alpha_sq.to_bits(), cycles as u64, basis_tag(basis), stream])
}

/// Count failures for every decoder over `shots` fresh shots. Sums are
/// integers, so the result does not depend on how work is split.
pub(crate) fn count_failures(
    model: &RepCodeNoiseModel,
    cycles: usize,
    basis: Basis,
    alpha_sq: f64,
    seed: u64,
    shots: u64,
    decoders: &[ShotDecoder],
) -> Result<Vec<u64>> {
    let nv = decoders.len().max(1);
    (0..shots)
        .into_par_iter()
        .map(|i| -> Result<Vec<u64>> {
            let r = sample_shot(model, cycles, basis, alpha_sq, shot_seed(seed, i))?;
            if basis == Basis::Z {
                return Ok(vec![u64::from(score_z(&r)); nv]);
            }
            decoders.iter().map(|dec| dec.fails(&r).map(u64::from)).collect()
        })
        .try_reduce(|| vec![0; nv], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))
}

pub(crate) fn cycle_point(cycles: usize, shots: u64, failures: u64) -> Result<CyclePoint> {
    let post = beta_posterior(shots, failures as f64 / shots as f64)?;
    let (value, sigma) = observable_estimate(&post);
    Ok(CyclePoint { cycles, shots, failures, value, sigma })
}

fn fit_point(d: usize, alpha_sq: f64, basis: Basis, decoder: Option<DecoderVariant>, points: Vec<CyclePoint>, offset: bool) -> PointResult {
    let data: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.cycles as f64, p.value, p.sigma)).collect();
    let (fit, eps, eps_std, fit_error) = match fit_exponential(&data, offset) {
        Ok(f) => {
            let (e, s) = eps_from_fit(&f);
            (Some(f), Some(e), Some(s), None)
        }
        Err(_) if points.iter().all(|p| p.failures == 0) => {
            // nothing to fit; report zero with the posterior floor of the longest run
            let last = points.iter().max_by_key(|p| p.cycles).expect("non-empty");
            let floor = 1.0 / ((last.shots as f64 + 2.0) * last.cycles as f64);
            (None, Some(0.0), Some(floor), Some("no failures observed".to_string()))
        }
        Err(e) => (None, None, None, Some(e.to_string())),
    };
    PointResult { d, alpha_sq, basis, decoder, points, fit, eps, eps_std, fit_error }
}

/// Decoders for one (d, α², cycles), with weights from the model or a calibration batch.
fn build_decoders(
    config: &ExperimentConfig,
    model: &RepCodeNoiseModel,
    calibration: Option<&[SyndromeRecord]>,
    cycles: usize,
) -> Result<Vec<ShotDecoder>> {
    let dec = &config.decoder;
    let opts = WeightOptions::default();
    let (plain, baseline) = match (dec.weights, calibration) {
        (WeightSource::Correlation, Some(cal)) => {
            let plain = correlation_weights(cal, &opts)?.graph;
            let base = if dec.variants.iter().any(|v| *v != DecoderVariant::NoErasure) {
                Some(no_erasure_baseline(cal, &opts)?.graph)
            } else {
                None
            };
            (plain, base)
        }
        _ => {
            let plain = MatchingGraph::from_model(model, cycles)?;
            let mut clean = model.clone();
            clean.p_erase.iter_mut().for_each(|p| *p = 0.0);
            (plain, Some(MatchingGraph::from_model(&clean, cycles)?))
        }
    };
    dec.variants
        .iter()
        .map(|&v| match v {
            DecoderVariant::NoErasure => ShotDecoder::new(v, plain.clone(), dec.merge_cap),
            _ => ShotDecoder::new(v, baseline.clone().expect("baseline built for erasure variants"), dec.merge_cap),
        })
        .collect()
}

fn calibration_shots(config: &ExperimentConfig) -> u64 {
    let f = config.decoder.calibration_fraction;
    if f > 0.0 {
        ((config.code.shots as f64 * f).ceil() as u64).max(1)
    } else {
        0
    }
}

/// Sample, weigh, decode and fit every configured (d, α², basis).
pub fn run_memory_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<MemoryOutput> {
    config.validate()?;
    with_workers(workers, || run_inner(config))?
}

fn run_inner(config: &ExperimentConfig) -> Result<MemoryOutput> {
    let code = &config.code;
    let n_cal = calibration_shots(config);
    let mut results = Vec::new();
    let mut detection = Vec::new();
    let max_cycles = *code.cycles.iter().max().expect("validated");
    for &d in &code.distances {
        for &alpha_sq in &code.alpha_sq {
            let model = config.noise_model(d, alpha_sq)?;
            for &basis in &code.bases {
                let variants: Vec<Option<DecoderVariant>> = match basis {
                    Basis::X => config.decoder.variants.iter().copied().map(Some).collect(),
                    Basis::Z => vec![None],
                };
                let mut per_variant: Vec<Vec<CyclePoint>> = vec![Vec::new(); variants.len()];
                for &cycles in &code.cycles {
                    let decoders = if basis == Basis::X {
                        let cal = if n_cal > 0 {
                            let seed = point_seed(config.seed, d, alpha_sq, cycles, basis, STREAM_CALIBRATION);
                            let batch = sample_batch(&model, cycles, basis, alpha_sq, seed, 0, n_cal as usize)?;
                            if cycles == max_cycles {
                                detection.push(DetectionTable {
                                    d,
                                    alpha_sq,
                                    cycles,
                                    probabilities: crate::sampler::detection_probabilities(&batch)?,
                                });
                            }
                            Some(batch.records)
                        } else {
                            None
                        };
                        build_decoders(config, &model, cal.as_deref(), cycles)?
                    } else {
                        vec![]
                    };
                    let seed = point_seed(config.seed, d, alpha_sq, cycles, basis, STREAM_SHOTS);
                    let fails = count_failures(&model, cycles, basis, alpha_sq, seed, code.shots, &decoders)?;
                    for (k, pts) in per_variant.iter_mut().enumerate() {
                        pts.push(cycle_point(cycles, code.shots, fails[k])?);
                    }
                }
                let offset = basis == Basis::X && config.fit.x_offset;
                for (v, pts) in variants.into_iter().zip(per_variant) {
                    results.push(fit_point(d, alpha_sq, basis, v, pts, offset));
                }
            }
        }
    }
    let gamma = gamma_fits(config, &results);
    let totals = totals(&results);
    Ok(MemoryOutput { header: Header::new(config), results, gamma, totals, detection })
}

fn gamma_fits(config: &ExperimentConfig, results: &[PointResult]) -> Vec<GammaFit> {
    let mut keys: Vec<(usize, Basis, Option<DecoderVariant>)> = Vec::new();
    for r in results {
        let k = (r.d, r.basis, r.decoder);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter(|k| k.1 == Basis::X)
        .map(|(d, basis, decoder)| {
            let sel: Vec<&PointResult> =
                results.iter().filter(|r| r.d == d && r.basis == basis && r.decoder == decoder && r.eps.is_some()).collect();
            let pts: Vec<(f64, f64)> = sel.iter().map(|r| (r.alpha_sq, r.eps.unwrap())).collect();
            let sig: Vec<f64> = sel.iter().map(|r| r.eps_std.unwrap()).collect();
            match fit_power_law(&pts, Some(&sig), config.fit.min_alpha_sq) {
                Ok(f) => GammaFit { d, basis, decoder, gamma: Some(f.gamma), gamma_std: Some(f.gamma_std), error: None },
                Err(e) => GammaFit { d, basis, decoder, gamma: None, gamma_std: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}

fn totals(results: &[PointResult]) -> Vec<TotalError> {
    let mut out = Vec::new();
    for x in results.iter().filter(|r| r.basis == Basis::X) {
        let z = results.iter().find(|r| r.basis == Basis::Z && r.d == x.d && r.alpha_sq == x.alpha_sq);
        if let (Some(ep), Some(eb)) = (x.eps, z.and_then(|z| z.eps)) {
            out.push(TotalError {
                d: x.d,
                alpha_sq: x.alpha_sq,
                decoder: x.decoder.expect("X points carry a decoder"),
                eps_phase: ep,
                eps_bit: eb,
                eps_total: 0.5 * (ep + eb),
            });
        }
    }
    out
}

impl MemoryOutput {
    pub fn result(&self, d: usize, alpha_sq: f64, basis: Basis, decoder: Option<DecoderVariant>) -> Option<&PointResult> {
        self.results.iter().find(|r| r.d == d && r.alpha_sq == alpha_sq && r.basis == basis && r.decoder == decoder)
    }

    pub fn gamma_for(&self, d: usize, decoder: DecoderVariant) -> Option<&GammaFit> {
        self.gamma.iter().find(|g| g.d == d && g.decoder == Some(decoder))
    }

    pub fn point_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for r in &self.results {
            for p in &r.points {
                rows.push(vec![
                    r.d.to_string(),
                    r.alpha_sq.to_string(),
                    format!("{:?}", r.basis),
                    r.decoder.map_or("-", |v| v.name()).to_string(),
                    p.cycles.to_string(),
                    p.shots.to_string(),
                    p.failures.to_string(),
                    p.value.to_string(),
                    p.sigma.to_string(),
                ]);
            }
        }
        rows
    }

    pub fn eps_rows(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        self.results
            .iter()
            .map(|r| {
                vec![
                    r.d.to_string(),
                    r.alpha_sq.to_string(),
                    format!("{:?}", r.basis),
                    r.decoder.map_or("-", |v| v.name()).to_string(),
                    opt(r.fit.as_ref().map(|f| f.decay_time)),
                    opt(r.eps),
                    opt(r.eps_std),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 11
[code]
distances = [3]
alpha_sq = [2.0]
cycles = [1, 3, 5]
shots = 2000
{extra}
[noise]
t1_eff = 60e-6
t_cycle = 1e-6
p_meas = 0.01
p_erase = 0.05
[decoder]
variants = ["none", "naive", "merged"]
"#
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let c = config("");
        let a = run_memory_experiment(&c, Some(1)).unwrap();
        let b = run_memory_experiment(&c, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.results.len(), 3);
        assert!(a.results.iter().all(|r| r.eps.is_some()));
    }

    #[test]
    fn zero_noise_gives_no_failures() {
        let text = r#"
[code]
distances = [3]
alpha_sq = [1.0]
cycles = [1, 2, 3]
shots = 500
bases = ["x", "z"]
[noise]
t1_eff = 1e9
t_cycle = 1e-9
[bitflip]
idle_a = 0.0
idle_b = 1.0
cx_g = 0.0
cx_f = 0.0
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let out = run_memory_experiment(&c, None).unwrap();
        for r in &out.results {
            assert!(r.points.iter().all(|p| p.failures == 0), "{r:?}");
            assert_eq!(r.eps, Some(0.0));
        }
        assert_eq!(out.totals.len(), 1);
    }

    #[test]
    fn rejects_zero_workers() {
        assert!(run_memory_experiment(&config(""), Some(0)).unwrap_err().is_config());
    }
}
