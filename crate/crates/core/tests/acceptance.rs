//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line (visible with `--nocapture`) and fails when its criterion fails.

use std::f64::consts::TAU;
use std::time::Instant;

use catrep::analysis::{error_budget, BudgetOptions, Estimate};
use catrep::catq::{phase_flip_rates, steady_state_plus_population, CatParams};
use catrep::decoder::{brute_force, decode};
use catrep::experiment::{run_budget, run_lindblad_sweep, run_memory_experiment, DecoderVariant, ExperimentConfig};
use catrep::graph::{
    correlation_weights, merge_edges_for_erasure, no_erasure_baseline, p_odd, Cluster, DetectorId,
    EdgeKind, Endpoint, MatchingGraph, Side, WeightOptions,
};
use catrep::lindblad::{parity_relaxation, FockSpace};
use catrep::noise::{project_overhead, OverheadInputs, RepCodeNoiseModel};
use catrep::sampler::{sample_batch, Basis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, pass: bool, detail: &str, start: Instant) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {word} ({:.1} s) {detail}", start.elapsed().as_secs_f64());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn two_sig(x: f64) -> f64 {
    let e = x.abs().log10().floor();
    let s = 10f64.powf(e - 1.0);
    (x / s).round() * s
}

#[test]
fn criterion_01_overhead_projection() {
    let t0 = Instant::now();
    let a = project_overhead(&OverheadInputs::new(11, 1e-6, 300e-6, 5.0, 1.0)).unwrap();
    let b = project_overhead(&OverheadInputs::new(11, 1e-6, 1e-3, 7.0, 100.0)).unwrap();
    let pass = (two_sig(a.eps_total) - 3.8e-6).abs() < 1e-12 && (two_sig(b.eps_total) - 3.3e-8).abs() < 1e-14;
    verdict(1, pass, &format!("eps_L = {:.3e}, {:.3e} (want 3.8e-6, 3.3e-8)", a.eps_total, b.eps_total), t0);
}

/// Odd-parity probability by enumerating all 2^n outcomes.
fn xor_enumeration(ps: &[f64]) -> f64 {
    let n = ps.len();
    (0u32..1 << n)
        .filter(|m| m.count_ones() % 2 == 1)
        .map(|m| (0..n).map(|i| if m >> i & 1 == 1 { ps[i] } else { 1.0 - ps[i] }).product::<f64>())
        .sum()
}

#[test]
fn criterion_02_erasure_edge_merging() {
    let t0 = Instant::now();
    // two parallel p = 0.11 edges: an erased middle ancilla of d = 4
    let base = MatchingGraph::structure(4, 3, 0.11).unwrap();
    let g = merge_edges_for_erasure(&base, &[Cluster { space: 1, first: 1, last: 1 }], None).unwrap();
    let k = g
        .edge_between(g.node_index(DetectorId::new(0, 1)).unwrap(), g.node_index(DetectorId::new(1, 1)).unwrap())
        .unwrap();
    let (p2, w2) = (g.edges[k].p, g.edges[k].w);
    let two_ok = (p2 - 0.1958).abs() < 5e-5 && (w2 - 1.4).abs() < 0.05 && (p2 - xor_enumeration(&[0.11, 0.11])).abs() < 1e-15;

    // three boundary edges with distinct probabilities: d = 2, rounds 0 and 1 erased
    let mut base = MatchingGraph::structure(2, 3, 0.1).unwrap();
    let left: Vec<f64> = vec![0.05, 0.12, 0.3];
    for t in 0..3 {
        let v = base.node_index(DetectorId::new(0, t)).unwrap();
        let k = *base.incident(v).iter().find(|&&k| base.edges[k].b == Endpoint::Boundary(Side::Left)).unwrap();
        base.set_prob(k, left[t]).unwrap();
    }
    let g = merge_edges_for_erasure(&base, &[Cluster { space: 0, first: 0, last: 1 }], None).unwrap();
    let span = g.node_index(DetectorId::new(0, 0)).unwrap();
    let k = *g.incident(span).iter().find(|&&k| g.edges[k].b == Endpoint::Boundary(Side::Left)).unwrap();
    let want = xor_enumeration(&left);
    let mut three_ok = g.edges[k].p == want || (g.edges[k].p - want).abs() < 1e-15;
    // random triples through the same formula
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let ps: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..0.5)).collect();
        three_ok &= (p_odd(&ps) - xor_enumeration(&ps)).abs() < 1e-15;
    }
    verdict(
        2,
        two_ok && three_ok,
        &format!("two-edge p = {p2:.4}, w = {w2:.3}; three-edge p = {:.6} vs enumeration {want:.6}", g.edges[k].p),
        t0,
    );
}

#[test]
fn criterion_03_decoder_exactness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut cases, mut agree) = (0, 0);
    while cases < 500 {
        let d = rng.gen_range(2..=7);
        let cycles = rng.gen_range(0..=4);
        let mut g = MatchingGraph::structure(d, cycles, 0.1).unwrap();
        for k in 0..g.edges.len() {
            g.set_prob(k, rng.gen_range(0.005..0.45)).unwrap();
        }
        let n = g.num_nodes();
        let want = rng.gen_range(0..=10usize.min(n));
        let mut ids: Vec<DetectorId> = Vec::new();
        while ids.len() < want {
            let id = g.nodes[rng.gen_range(0..n)].id;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let fast = decode(&g, &ids).unwrap();
        let slow = brute_force(&g, &ids).unwrap();
        cases += 1;
        agree += usize::from(fast.total_weight_q == slow.total_weight_q);
    }
    verdict(3, agree == cases, &format!("{agree}/{cases} random graphs agree with exhaustive search"), t0);
}

#[test]
fn criterion_04_lindblad_vs_closed_form() {
    let t0 = Instant::now();
    let (kappa2, kappa1) = (1.0, 2e-3);
    let mut pass = true;
    let mut detail = String::new();
    for alpha_sq in [1.0, 2.0, 3.0] {
        let sim = parity_relaxation(alpha_sq, kappa1, kappa2, FockSpace::new(40).unwrap()).unwrap();
        let rates = phase_flip_rates(&CatParams::new(alpha_sq, kappa1, 1.0).unwrap()).unwrap();
        let rel = (sim.rate - rates.total()).abs() / rates.total();
        let dp = (sim.plus_population - steady_state_plus_population(alpha_sq).unwrap()).abs();
        pass &= rel < 0.05 && dp < 1e-3;
        detail += &format!("[a2={alpha_sq}: rate err {:.2}%, p+ err {dp:.1e}] ", 100.0 * rel);
    }
    verdict(4, pass, &detail, t0);
}

const PAPER_NOISE: &str = r#"
[noise]
t1_eff = 60e-6
t_cycle = 2.8e-6
p_meas = [0.01, 0.02, 0.03, 0.015]
p_erase = 0.05
p_final = 0.02
"#;

#[test]
fn criterion_05_below_threshold_ordering() {
    let t0 = Instant::now();
    let text = format!(
        r#"
seed = 5
[code]
distances = [3, 5]
alpha_sq = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
cycles = [2, 4, 6, 8, 10]
shots = 100000
{PAPER_NOISE}
[decoder]
variants = ["merged"]
weights = "correlation"
calibration_fraction = 0.2
"#
    );
    let c = ExperimentConfig::from_toml(&text).unwrap();
    let out = run_memory_experiment(&c, None).unwrap();
    let v = Some(DecoderVariant::Merged);
    let mut ordered = true;
    let mut detail = String::new();
    for &a in &c.code.alpha_sq {
        let e3 = out.result(3, a, Basis::X, v).unwrap().eps.unwrap();
        let e5 = out.result(5, a, Basis::X, v).unwrap().eps.unwrap();
        ordered &= e5 < e3;
        detail += &format!("[a2={a}: {e3:.4} > {e5:.4}] ");
    }
    let g3 = out.gamma_for(3, DecoderVariant::Merged).unwrap().gamma.unwrap();
    let g5 = out.gamma_for(5, DecoderVariant::Merged).unwrap().gamma.unwrap();
    let pass = ordered && (2.0..=2.6).contains(&g5) && g3 < g5;
    detail += &format!("gamma d3 = {g3:.3}, d5 = {g5:.3}");
    verdict(5, pass, &detail, t0);
}

#[test]
fn criterion_06_ideal_scaling() {
    let t0 = Instant::now();
    // t_cycle / T1 = 0.0025, so p_Z runs from 0.375% to 1%
    let text = r#"
seed = 6
[code]
distances = [3, 5]
alpha_sq = [1.5, 2.0, 2.8, 4.0]
cycles = [1, 50, 100]
shots = 2000000
[noise]
t1_eff = 1.12e-3
t_cycle = 2.8e-6
[decoder]
variants = ["none"]
weights = "model"
calibration_fraction = 0.0
"#;
    let c = ExperimentConfig::from_toml(text).unwrap();
    let out = run_memory_experiment(&c, None).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for d in [3usize, 5] {
        let g = out.gamma_for(d, DecoderVariant::NoErasure).unwrap();
        let ideal = (d as f64 + 1.0) / 2.0;
        let gamma = g.gamma.unwrap_or(f64::NAN);
        pass &= (gamma - ideal).abs() <= 0.15 * ideal;
        detail += &format!("[d={d}: gamma {gamma:.3} ± {:.3}, ideal {ideal}] ", g.gamma_std.unwrap_or(f64::NAN));
    }
    verdict(6, pass, &detail, t0);
}

#[test]
fn criterion_07_erasure_benefit() {
    let t0 = Instant::now();
    // |alpha|^2 = 1.5 with the paper-derived T1 gives p_Z = 7%
    let text = format!(
        r#"
seed = 7
[code]
distances = [5]
alpha_sq = [1.5]
cycles = [2, 4, 6, 8, 10]
shots = 300000
{PAPER_NOISE}
[decoder]
variants = ["none", "naive", "merged"]
weights = "correlation"
calibration_fraction = 0.2
"#
    );
    let c = ExperimentConfig::from_toml(&text).unwrap();
    let out = run_memory_experiment(&c, None).unwrap();
    let get = |v| out.result(5, 1.5, Basis::X, Some(v)).unwrap();
    let (none, naive, merged) = (get(DecoderVariant::NoErasure), get(DecoderVariant::Naive), get(DecoderVariant::Merged));
    let (en, ea, em) = (none.eps.unwrap(), naive.eps.unwrap(), merged.eps.unwrap());
    let fails = |r: &catrep::experiment::PointResult| r.points.iter().map(|p| p.failures).sum::<u64>();
    let reduction = 1.0 - em / en;
    let pass = reduction >= 0.10 && em <= ea && fails(merged) <= fails(naive);
    verdict(
        7,
        pass,
        &format!(
            "eps none {en:.5}, naive {ea:.5}, merged {em:.5}; reduction {:.1}%; paired failures naive {} merged {}",
            100.0 * reduction,
            fails(naive),
            fails(merged)
        ),
        t0,
    );
}

fn mean_bulk_time_p(g: &MatchingGraph) -> f64 {
    let ps: Vec<f64> = g
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Time)
        .filter(|e| {
            let t = g.nodes[e.a].id.time;
            t >= 1 && t + 1 < g.cycles
        })
        .map(|e| e.p)
        .collect();
    ps.iter().sum::<f64>() / ps.len() as f64
}

#[test]
fn criterion_08_measurement_error_halving() {
    let t0 = Instant::now();
    let (p_meas, p_erase) = (0.01, 0.05);
    let model = RepCodeNoiseModel::uniform(5, 0.0467, p_meas, p_erase, 2.8e-6).unwrap();
    let batch = sample_batch(&model, 12, Basis::X, 1.0, 8, 0, 100_000).unwrap();
    let opts = WeightOptions::default();
    let plain = mean_bulk_time_p(&correlation_weights(&batch.records, &opts).unwrap().graph);
    let cond = mean_bulk_time_p(&no_erasure_baseline(&batch.records, &opts).unwrap().graph);
    // independent expectations: an erasure read as 1 is wrong half the time
    let plain_expected = p_meas * (1.0 - p_erase) + p_erase / 2.0;
    let ratio = plain / cond;
    let pass = ratio >= 1.8 && (plain - plain_expected).abs() < 0.15 * plain_expected && (cond - p_meas).abs() < 0.2 * p_meas;
    verdict(
        8,
        pass,
        &format!("time-edge p: all shots {plain:.4} (expect {plain_expected:.4}), no-erasure {cond:.4} (expect {p_meas}); ratio {ratio:.2}"),
        t0,
    );
}

#[test]
fn criterion_09_budget_identity() {
    let t0 = Instant::now();
    // quadratic with eps(0) = 0: contributions add up exactly
    let c = [0.3, 1.2, 0.05, 0.7];
    let q = [[0.5, 0.1, 0.0, 0.2], [0.1, 2.0, 0.3, 0.0], [0.0, 0.3, 0.1, 0.4], [0.2, 0.0, 0.4, 1.5]];
    let f = |x: &[f64]| -> catrep::Result<Estimate> {
        let mut v = 0.0;
        for i in 0..4 {
            v += c[i] * x[i];
            for j in 0..4 {
                v += q[i][j] * x[i] * x[j];
            }
        }
        Ok(Estimate::exact(v))
    };
    let labels: Vec<String> = (0..4).map(|i| format!("m{i}")).collect();
    let a = [0.02, 0.1, 0.3, 0.07];
    let b = error_budget(f, &labels, &a, &BudgetOptions::default()).unwrap();
    let quad_err = (b.total() - b.nominal.value).abs() / b.nominal.value;

    let text = format!(
        r#"
seed = 9
[code]
distances = [5]
alpha_sq = [1.5]
cycles = [2]
shots = 1
{PAPER_NOISE}
[bitflip]
idle_a = 0.0154
idle_b = 1.2
cx_g = 5e-4
cx_f = 1.5e-3
[budget]
distance = 5
alpha_sq = 1.5
cycles = [2, 4, 6, 8, 10]
shots = 300000
"#
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let out = run_budget(&cfg, None).unwrap();
    let sim_err = (out.sum_of_contributions - out.budget.nominal.value).abs() / out.budget.nominal.value;
    let classes: Vec<String> = out.classes.iter().map(|c| format!("{} {:.2e}", c.class, c.value)).collect();
    verdict(
        9,
        quad_err < 1e-12 && sim_err < 0.10,
        &format!(
            "quadratic mismatch {quad_err:.1e}; d=5 sum {:.4e} vs eps_L {:.4e} ({:.1}%); {}",
            out.sum_of_contributions,
            out.budget.nominal.value,
            100.0 * sim_err,
            classes.join(", ")
        ),
        t0,
    );
}

#[test]
fn criterion_10_cx_chi_tolerance() {
    let t0 = Instant::now();
    let text = format!(
        r#"
[code]
distances = [3]
alpha_sq = [1.0]
cycles = [1]
shots = 1
[noise]
t1_eff = 60e-6
t_cycle = 2.8e-6
[lindblad]
kind = "chi_ratio"
values = [0.9, 0.95, 1.0, 1.05, 1.1, 1.3]
dim = 32
[lindblad.cx]
chi_gf = {chi}
gate_time = 800e-9
ancilla_decay_fe = 8e4
ancilla_decay_eg = 8e4
prep_error_e = 0.01
alpha_sq = 4.0
kappa2 = {k2}
dissipation_time = 2e-6
"#,
        chi = TAU / 800e-9,
        k2 = TAU * 50e3
    );
    let c = ExperimentConfig::from_toml(&text).unwrap();
    let out = run_lindblad_sweep(&c, None).unwrap();
    let p = |v: f64| out.rows.iter().find(|r| r.value == v).and_then(|r| r.p_flip).unwrap();
    let near: Vec<f64> = [0.9, 0.95, 1.0, 1.05, 1.1].iter().map(|&v| p(v)).collect();
    let spread = near.iter().cloned().fold(0.0, f64::max) / near.iter().cloned().fold(f64::INFINITY, f64::min);
    let growth = p(1.3) / p(1.0);
    let rows: Vec<String> = out.rows.iter().map(|r| format!("{}: {:.2e}", r.value, r.p_flip.unwrap_or(f64::NAN))).collect();
    verdict(
        10,
        spread < 2.0 && growth > 5.0,
        &format!("spread within 0.1: {spread:.2}x; at 0.3: {growth:.1}x; [{}]", rows.join(", ")),
        t0,
    );
}
