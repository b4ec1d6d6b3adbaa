//! Monte Carlo generation of syndrome records for memory experiments.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catq;
use crate::error::{Error, Result};
use crate::graph;
use crate::noise::RepCodeNoiseModel;
use crate::rng::{shot_rng, shot_seed, ShotRng};

/// Syndrome value marking an erased (heralded) measurement.
pub const ERASED: u8 = 2;

const MAGIC: &[u8; 4] = b"RCSY";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    #[serde(alias = "x")]
    X,
    #[serde(alias = "z")]
    Z,
}

impl Basis {
    fn to_byte(self) -> u8 {
        match self {
            Basis::X => 0,
            Basis::Z => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Basis::X),
            1 => Ok(Basis::Z),
            _ => Err(Error::Format(format!("unknown basis byte {b}"))),
        }
    }
}

/// One shot of a memory experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeRecord {
    pub basis: Basis,
    pub d: usize,
    pub cycles: usize,
    /// X basis: 0 = even cat, 1 = odd cat. Z basis: computational value per qubit.
    pub initial_state: Vec<u8>,
    /// Row-major `[cycles][d-1]`, entries in {0, 1, ERASED}.
    pub syndromes: Vec<u8>,
    /// Final per-qubit parity (X) or Z value (Z).
    pub finals: Vec<u8>,
    pub shot_seed: u64,
    /// Net injected flips per data qubit: phase flips in X, bit flips in Z.
    pub true_flips: u64,
}

impl SyndromeRecord {
    pub fn syndrome(&self, t: usize, j: usize) -> u8 {
        self.syndromes[t * (self.d - 1) + j]
    }

    pub fn has_erasures(&self) -> bool {
        self.syndromes.contains(&ERASED)
    }

    /// Copy with every erased syndrome read as 1.
    pub fn collapse_erasures(&self) -> SyndromeRecord {
        let mut r = self.clone();
        for s in &mut r.syndromes {
            if *s == ERASED {
                *s = 1;
            }
        }
        r
    }

    /// True logical flip implied by the injected errors, before any readout error.
    pub fn true_logical_flip(&self) -> bool {
        match self.basis {
            Basis::X => self.true_flips & 1 == 1,
            Basis::Z => self.true_flips.count_ones() % 2 == 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || self.d > 63 {
            return Err(Error::InvalidInput(format!("distance {} out of range", self.d)));
        }
        if self.initial_state.len() != self.d || self.finals.len() != self.d {
            return Err(Error::InvalidInput("initial/final length differs from d".into()));
        }
        if self.syndromes.len() != self.cycles * (self.d - 1) {
            return Err(Error::InvalidInput("syndrome matrix has wrong size".into()));
        }
        if self.initial_state.iter().chain(&self.finals).any(|&v| v > 1) {
            return Err(Error::InvalidInput("initial and final values must be bits".into()));
        }
        if self.syndromes.iter().any(|&v| v > ERASED) {
            return Err(Error::InvalidInput("syndrome values must be 0, 1 or ERASED".into()));
        }
        Ok(())
    }
}

/// Metadata attached to a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub basis: Basis,
    pub d: usize,
    pub cycles: usize,
    pub seed: u64,
    pub model_hash: u64,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotBatch {
    pub records: Vec<SyndromeRecord>,
    pub model: RepCodeNoiseModel,
    pub meta: BatchMeta,
}

impl ShotBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// First 8 bytes (little endian) of SHA-256 over the JSON form of the model.
pub fn model_hash(model: &RepCodeNoiseModel) -> u64 {
    let json = serde_json::to_vec(model).expect("noise model serializes");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Each qubit independently even with the steady-state probability.
pub fn sample_initial_x_state<R: Rng>(d: usize, alpha_sq: f64, rng: &mut R) -> Result<Vec<u8>> {
    let p_plus = catq::steady_state_plus_population(alpha_sq)?;
    Ok((0..d).map(|_| u8::from(rng.gen::<f64>() >= p_plus)).collect())
}

/// Draw one shot. The X-basis initial state is drawn from the steady-state
/// distribution at `alpha_sq` (pass `f64::INFINITY` for a uniform draw).
pub fn sample_shot(
    model: &RepCodeNoiseModel,
    cycles: usize,
    basis: Basis,
    alpha_sq: f64,
    shot_seed: u64,
) -> Result<SyndromeRecord> {
    let mut rng = shot_rng(shot_seed);
    sample_with_rng(model, cycles, basis, alpha_sq, shot_seed, &mut rng)
}

fn sample_with_rng(
    model: &RepCodeNoiseModel,
    cycles: usize,
    basis: Basis,
    alpha_sq: f64,
    seed: u64,
    rng: &mut ShotRng,
) -> Result<SyndromeRecord> {
    let d = model.d;
    let na = d - 1;
    let initial_state = match basis {
        Basis::X => {
            if alpha_sq.is_infinite() {
                (0..d).map(|_| u8::from(rng.gen::<bool>())).collect()
            } else {
                sample_initial_x_state(d, alpha_sq, rng)?
            }
        }
        Basis::Z => vec![u8::from(rng.gen::<bool>()); d],
    };
    // reference stabilizer values seen by the first round
    let reference: Vec<u8> = match basis {
        Basis::X => (0..na).map(|j| initial_state[j] ^ initial_state[j + 1]).collect(),
        Basis::Z => (0..na).map(|_| u8::from(rng.gen::<bool>())).collect(),
    };
    let m = model.mid_cycle_fraction;
    let inject_x = basis == Basis::Z && model.p_x.iter().any(|&p| p > 0.0);
    let mut z: u64 = 0;
    let mut x: u64 = 0;
    let mut syndromes = Vec::with_capacity(cycles * na);
    for _ in 0..cycles {
        let mut early = 0u64;
        let mut mid = 0u64;
        for (q, &p) in model.p_z.iter().enumerate() {
            let u: f64 = rng.gen();
            if u < p * (1.0 - m) {
                early |= 1 << q;
            } else if u < p {
                mid |= 1 << q;
            }
        }
        if inject_x {
            for (q, &p) in model.p_x.iter().enumerate() {
                if rng.gen::<f64>() < p {
                    x ^= 1 << q;
                }
            }
        }
        let z_early = z ^ early;
        let z_after = z_early ^ mid;
        for j in 0..na {
            let ideal = reference[j] ^ ((z_early >> j) & 1) as u8 ^ ((z_after >> (j + 1)) & 1) as u8;
            let u: f64 = rng.gen();
            let pm = model.p_meas[j];
            let s = if u < pm {
                ideal ^ 1
            } else if u < pm + model.p_erase[j] {
                ERASED
            } else {
                ideal
            };
            syndromes.push(s);
        }
        z = z_after;
    }
    let flips = match basis {
        Basis::X => z,
        Basis::Z => x,
    };
    let finals = (0..d)
        .map(|q| {
            let v = initial_state[q] ^ ((flips >> q) & 1) as u8;
            v ^ u8::from(rng.gen::<f64>() < model.p_final[q])
        })
        .collect();
    Ok(SyndromeRecord { basis, d, cycles, initial_state, syndromes, finals, shot_seed: seed, true_flips: flips })
}

/// Generate shots `first..first+count` of the stream keyed by `seed`.
pub fn sample_batch(
    model: &RepCodeNoiseModel,
    cycles: usize,
    basis: Basis,
    alpha_sq: f64,
    seed: u64,
    first: u64,
    count: usize,
) -> Result<ShotBatch> {
    model.validate()?;
    let records = (0..count as u64)
        .into_par_iter()
        .map(|i| sample_shot(model, cycles, basis, alpha_sq, shot_seed(seed, first + i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShotBatch {
        records,
        model: model.clone(),
        meta: BatchMeta {
            basis,
            d: model.d,
            cycles,
            seed,
            model_hash: model_hash(model),
            code_version: crate::VERSION.to_string(),
        },
    })
}

/// Fraction of nontrivial detectors at each `[time][space]`; erasures read as 1.
pub fn detection_probabilities(batch: &ShotBatch) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let d = batch.meta.d;
    let layers = batch.meta.cycles + 1;
    let mut counts = vec![0u64; layers * (d - 1)];
    for r in &batch.records {
        let det = graph::detectors_from_record(&r.collapse_erasures())?;
        for (c, &v) in counts.iter_mut().zip(&det.values) {
            *c += v as u64;
        }
    }
    let n = batch.len() as f64;
    Ok(counts.chunks(d - 1).map(|row| row.iter().map(|&c| c as f64 / n).collect()).collect())
}

/// Binary export.
///
/// Layout (little endian): `"RCSY"`, version u8, basis u8, d u16, cycles u32,
/// shots u64, model hash u64, then per shot: seed u64, true flips u64,
/// `d` initial bytes, `cycles*(d-1)` syndrome bytes, `d` final bytes.
pub fn write_batch<W: Write>(batch: &ShotBatch, mut w: W) -> Result<()> {
    let m = &batch.meta;
    w.write_all(MAGIC)?;
    w.write_all(&[FORMAT_VERSION, m.basis.to_byte()])?;
    w.write_all(&(m.d as u16).to_le_bytes())?;
    w.write_all(&(m.cycles as u32).to_le_bytes())?;
    w.write_all(&(batch.len() as u64).to_le_bytes())?;
    w.write_all(&m.model_hash.to_le_bytes())?;
    for r in &batch.records {
        w.write_all(&r.shot_seed.to_le_bytes())?;
        w.write_all(&r.true_flips.to_le_bytes())?;
        w.write_all(&r.initial_state)?;
        w.write_all(&r.syndromes)?;
        w.write_all(&r.finals)?;
    }
    Ok(())
}

/// Header and records of a binary syndrome file.
#[derive(Debug, Clone, PartialEq)]
pub struct SyndromeFile {
    pub basis: Basis,
    pub d: usize,
    pub cycles: usize,
    pub model_hash: u64,
    pub records: Vec<SyndromeRecord>,
}

pub fn read_batch<R: Read>(mut r: R) -> Result<SyndromeFile> {
    let mut head = [0u8; 28];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if head[4] != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", head[4])));
    }
    let basis = Basis::from_byte(head[5])?;
    let d = u16::from_le_bytes([head[6], head[7]]) as usize;
    let cycles = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let shots = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
    let model_hash = u64::from_le_bytes(head[20..28].try_into().unwrap());
    if !(2..=63).contains(&d) {
        return Err(Error::Format(format!("distance {d} out of range")));
    }
    let mut records = Vec::with_capacity(shots.min(1 << 24));
    let mut buf8 = [0u8; 8];
    for _ in 0..shots {
        r.read_exact(&mut buf8)?;
        let seed = u64::from_le_bytes(buf8);
        r.read_exact(&mut buf8)?;
        let true_flips = u64::from_le_bytes(buf8);
        let mut initial_state = vec![0u8; d];
        r.read_exact(&mut initial_state)?;
        let mut syndromes = vec![0u8; cycles * (d - 1)];
        r.read_exact(&mut syndromes)?;
        let mut finals = vec![0u8; d];
        r.read_exact(&mut finals)?;
        let rec = SyndromeRecord { basis, d, cycles, initial_state, syndromes, finals, shot_seed: seed, true_flips };
        rec.validate().map_err(|e| Error::Format(e.to_string()))?;
        records.push(rec);
    }
    Ok(SyndromeFile { basis, d, cycles, model_hash, records })
}

/// Human-readable export: one shot per line, `E` marks an erasure.
pub fn write_text<W: Write>(batch: &ShotBatch, mut w: W) -> Result<()> {
    let m = &batch.meta;
    writeln!(w, "# basis={:?} d={} cycles={} model_hash={:016x}", m.basis, m.d, m.cycles, m.model_hash)?;
    writeln!(w, "# seed initial | syndromes per round | finals")?;
    let bits = |v: &[u8]| v.iter().map(|&b| char::from(b'0' + b)).collect::<String>();
    for r in &batch.records {
        let rounds: Vec<String> = r
            .syndromes
            .chunks(m.d - 1)
            .map(|row| row.iter().map(|&s| if s == ERASED { 'E' } else { char::from(b'0' + s) }).collect())
            .collect();
        writeln!(w, "{:016x} {} | {} | {}", r.shot_seed, bits(&r.initial_state), rounds.join(" "), bits(&r.finals))?;
    }
    Ok(())
}
