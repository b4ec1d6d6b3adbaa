//! Master-equation engine on a truncated Fock space.
//!
//! Density matrices are dense; generators are applied through sparse copies of
//! their operators. Integration is fixed-step RK4 with
//! dρ/dt = X + X†, X = −i H_eff ρ + ½ Σ γ L ρ L†, H_eff = H − (i/2) Σ γ L†L,
//! which keeps every intermediate state exactly Hermitian.

mod cx;

pub use cx::{cx2_bitflip_probability, CxModel};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Op = DMatrix<C64>;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    pub dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput(format!("Fock dimension {dim} < 2")));
        }
        Ok(FockSpace { dim })
    }

    /// Smallest dimension considered converged for mean photon number `alpha_sq`.
    pub fn recommended(alpha_sq: f64) -> usize {
        (4.0 * alpha_sq + 10.0).ceil() as usize
    }
}

pub fn annihilation(dim: usize) -> Op {
    let mut a = Op::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    a
}

pub fn number(dim: usize) -> Op {
    Op::from_diagonal(&nalgebra::DVector::from_fn(dim, |n, _| C64::from(n as f64)))
}

pub fn parity(dim: usize) -> Op {
    Op::from_diagonal(&nalgebra::DVector::from_fn(dim, |n, _| C64::from(if n % 2 == 0 { 1.0 } else { -1.0 })))
}

pub fn identity(dim: usize) -> Op {
    Op::identity(dim, dim)
}

/// a ⊗ b, with the index of |i⟩⊗|j⟩ equal to i·dim(b) + j.
pub fn kron(a: &Op, b: &Op) -> Op {
    a.kronecker(b)
}

/// Coherent state |β⟩ truncated and renormalized.
pub fn coherent(beta: C64, dim: usize) -> nalgebra::DVector<C64> {
    let mut v = nalgebra::DVector::zeros(dim);
    let mut c = C64::from(1.0);
    for n in 0..dim {
        if n > 0 {
            c *= beta / (n as f64).sqrt();
        }
        v[n] = c;
    }
    let norm = v.norm();
    v / C64::from(norm)
}

/// Normalized cat state |α⟩ ± |−α⟩.
pub fn cat(alpha: C64, even: bool, dim: usize) -> nalgebra::DVector<C64> {
    let s = if even { 1.0 } else { -1.0 };
    let v = coherent(alpha, dim) + coherent(-alpha, dim) * C64::from(s);
    let norm = v.norm();
    v / C64::from(norm)
}

pub fn projector(v: &nalgebra::DVector<C64>) -> Op {
    v * v.adjoint()
}

pub fn fock_dm(n: usize, dim: usize) -> Op {
    let mut r = Op::zeros(dim, dim);
    r[(n, n)] = C64::from(1.0);
    r
}

/// Largest entry modulus.
pub fn max_abs(m: &Op) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Tr(A ρ), real part.
pub fn expect(a: &Op, rho: &Op) -> f64 {
    (a * rho).trace().re
}

/// Partial trace over the first factor of a (n1·n2)-dimensional operator.
pub fn trace_first(rho: &Op, n1: usize, n2: usize) -> Op {
    let mut out = Op::zeros(n2, n2);
    for k in 0..n1 {
        out += rho.view((k * n2, k * n2), (n2, n2));
    }
    out
}

/// Lindblad generator; `alpha` is the stabilized cat amplitude when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub hamiltonian: Op,
    pub jump_ops: Vec<(Op, f64)>,
    pub alpha: Option<C64>,
    pub warnings: Vec<String>,
}

impl Generator {
    pub fn new(hamiltonian: Op, jump_ops: Vec<(Op, f64)>) -> Result<Self> {
        let g = Generator { hamiltonian, jump_ops, alpha: None, warnings: vec![] };
        g.validate()?;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.hamiltonian.ncols() != n {
            return Err(Error::InvalidInput("Hamiltonian must be square".into()));
        }
        let scale = max_abs(&self.hamiltonian).max(1e-300);
        let asym = max_abs(&(&self.hamiltonian - self.hamiltonian.adjoint()));
        if asym > 1e-12 * scale {
            return Err(Error::InvalidInput(format!("Hamiltonian not Hermitian (relative {:.2e})", asym / scale)));
        }
        for (op, rate) in &self.jump_ops {
            if op.nrows() != n || op.ncols() != n {
                return Err(Error::InvalidInput("jump operator dimension mismatch".into()));
            }
            if !(*rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidInput(format!("jump rate {rate} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn with_jump(mut self, op: Op, rate: f64) -> Result<Self> {
        self.jump_ops.push((op, rate));
        self.validate()?;
        Ok(self)
    }

    pub fn with_hamiltonian(mut self, h: &Op) -> Result<Self> {
        self.hamiltonian += h;
        self.validate()?;
        Ok(self)
    }

    pub fn max_rate(&self) -> f64 {
        self.jump_ops.iter().map(|j| j.1).fold(0.0, f64::max)
    }
}

fn truncation_warning(alpha_sq: f64, dim: usize) -> Option<String> {
    let want = FockSpace::recommended(alpha_sq);
    (dim < want).then(|| format!("dimension {dim} below {want} recommended for |alpha|^2 = {alpha_sq}"))
}

/// κ₂ D[â² − α²].
pub fn two_photon_generator(alpha: C64, kappa2: f64, space: FockSpace) -> Result<Generator> {
    if !(kappa2 >= 0.0) {
        return Err(Error::Domain(format!("kappa2 must be >= 0, got {kappa2}")));
    }
    let n = space.dim;
    let a = annihilation(n);
    let l = &a * &a - identity(n) * (alpha * alpha);
    let mut g = Generator::new(Op::zeros(n, n), vec![(l, kappa2)])?;
    g.alpha = Some(alpha);
    g.warnings.extend(truncation_warning(alpha.norm_sqr(), n));
    Ok(g)
}

/// Buffer-eliminated stabilization with buffer detuning Δ_b.
pub fn detuned_stabilization_generator(
    g2: f64,
    delta_b: f64,
    kappa_b: f64,
    alpha: C64,
    space: FockSpace,
) -> Result<Generator> {
    if !(kappa_b > 0.0) {
        return Err(Error::Domain(format!("kappa_b must be > 0, got {kappa_b}")));
    }
    let n = space.dim;
    let a = annihilation(n);
    let l = &a * &a - identity(n) * (alpha * alpha);
    let den = delta_b * delta_b + 0.25 * kappa_b * kappa_b;
    let kerr = -g2 * g2 * delta_b / den;
    let rate = kappa_b * g2 * g2 / den;
    let h = l.adjoint() * &l * C64::from(kerr);
    let mut g = Generator { hamiltonian: h, jump_ops: vec![(l, rate)], alpha: Some(alpha), warnings: vec![] };
    g.validate()?;
    if delta_b.abs() > 0.5 * kappa_b {
        g.warnings.push(format!("|delta_b| = {:.3e} not small against kappa_b = {kappa_b:.3e}", delta_b.abs()));
    }
    g.warnings.extend(truncation_warning(alpha.norm_sqr(), n));
    Ok(g)
}

#[derive(Clone)]
struct Sparse {
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn from_dense(m: &Op) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v != C64::from(0.0) {
                    entries.push((r, c, v));
                }
            }
        }
        Sparse { entries }
    }

    /// out += s · self · x
    fn mul_acc(&self, x: &Op, s: C64, out: &mut Op) {
        let n = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for j in 0..x.ncols() {
            let base = j * n;
            for &(r, c, v) in &self.entries {
                os[base + r] += s * v * xs[base + c];
            }
        }
    }

    fn inf_norm(&self, n: usize) -> f64 {
        let mut rows = vec![0.0; n];
        for &(r, _, v) in &self.entries {
            rows[r] += v.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    fn one_norm(&self, n: usize) -> f64 {
        let mut cols = vec![0.0; n];
        for &(_, c, v) in &self.entries {
            cols[c] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }
}

struct Compiled {
    n: usize,
    heff: Sparse,
    jumps: Vec<(Sparse, f64)>,
    dt_max: f64,
}

impl Compiled {
    fn new(g: &Generator) -> Self {
        let n = g.dim();
        let mut heff = g.hamiltonian.clone();
        for (l, r) in &g.jump_ops {
            heff -= l.adjoint() * l * C64::new(0.0, 0.5 * r);
        }
        let heff = Sparse::from_dense(&heff);
        let jumps: Vec<(Sparse, f64)> = g.jump_ops.iter().map(|(l, r)| (Sparse::from_dense(l), *r)).collect();
        // spectral-radius bound of the Liouvillian
        let mut bound = 2.0 * heff.inf_norm(n).max(heff.one_norm(n));
        for (l, r) in &jumps {
            bound += r * l.inf_norm(n) * l.one_norm(n);
        }
        let mut dt_max = f64::INFINITY;
        if bound > 0.0 {
            dt_max = 2.5 / bound;
        }
        // coherent phases are resolved, not just kept stable
        let h = Sparse::from_dense(&g.hamiltonian);
        let h_bound = 2.0 * h.inf_norm(n).max(h.one_norm(n));
        if h_bound > 0.0 {
            dt_max = dt_max.min(0.1 / h_bound);
        }
        let rmax = g.max_rate();
        if rmax > 0.0 {
            dt_max = dt_max.min(1.0 / (50.0 * rmax));
        }
        Compiled { n, heff, jumps, dt_max }
    }

    fn rhs(&self, rho: &Op, out: &mut Op, scratch: &mut Op) {
        out.fill(C64::from(0.0));
        self.heff.mul_acc(rho, -I, out);
        for (l, r) in &self.jumps {
            scratch.fill(C64::from(0.0));
            l.mul_acc(rho, C64::from(1.0), scratch);
            let b = scratch.adjoint();
            l.mul_acc(&b, C64::from(0.5 * r), out);
        }
        let adj = out.adjoint();
        *out += adj;
    }
}

fn check_state(rho: &Op, what: &str, herm_tol: f64, trace_tol: f64) -> Result<()> {
    let n = rho.nrows();
    if rho.ncols() != n {
        return Err(Error::InvalidInput(format!("{what}: density matrix must be square")));
    }
    let herm = max_abs(&(rho - rho.adjoint()));
    if herm > herm_tol {
        return Err(Error::Integrator(format!("{what}: Hermiticity violated by {herm:.3e}")));
    }
    let tr = rho.trace();
    if (tr - C64::from(1.0)).norm() > trace_tol {
        return Err(Error::Integrator(format!("{what}: trace {tr} differs from 1")));
    }
    Ok(())
}

fn check_psd(rho: &Op) -> Result<()> {
    let h = (rho + rho.adjoint()) * C64::from(0.5);
    let min = h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::InvalidInput(format!("initial state has eigenvalue {min:.3e} < 0")));
    }
    Ok(())
}

fn validate_initial(rho0: &Op, g: &Generator) -> Result<()> {
    if rho0.nrows() != g.dim() || rho0.ncols() != g.dim() {
        return Err(Error::InvalidInput(format!("state dimension {} != generator dimension {}", rho0.nrows(), g.dim())));
    }
    check_state(rho0, "initial state", 1e-10, 1e-10).map_err(|e| match e {
        Error::Integrator(m) => Error::InvalidInput(m),
        e => e,
    })?;
    check_psd(rho0)
}

/// Evolve for time `t`.
pub fn evolve(rho0: &Op, g: &Generator, t: f64) -> Result<Op> {
    Ok(evolve_times(rho0, g, &[t])?.pop().unwrap())
}

/// States at each of the increasing times `times`, from one trajectory.
pub fn evolve_times(rho0: &Op, g: &Generator, times: &[f64]) -> Result<Vec<Op>> {
    g.validate()?;
    validate_initial(rho0, g)?;
    integrate(rho0, g, times)
}

/// Continue from an integrator output; skips the positivity check on `rho0`.
pub(crate) fn evolve_continued(rho0: &Op, g: &Generator, t: f64) -> Result<Op> {
    g.validate()?;
    if rho0.nrows() != g.dim() {
        return Err(Error::InvalidInput("state dimension mismatch".into()));
    }
    check_state(rho0, "continued state", 1e-10, 1e-8)?;
    Ok(integrate(rho0, g, &[t])?.pop().unwrap())
}

fn integrate(rho0: &Op, g: &Generator, times: &[f64]) -> Result<Vec<Op>> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("times must be finite, >= 0 and nondecreasing".into()));
    }
    let c = Compiled::new(g);
    let n = c.n;
    let mut rho = rho0.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (Op::zeros(n, n), Op::zeros(n, n), Op::zeros(n, n), Op::zeros(n, n));
    let mut scratch = Op::zeros(n, n);
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        let span = t - now;
        if span > 0.0 && (!c.jumps.is_empty() || !c.heff.entries.is_empty()) {
            let steps = (span / c.dt_max).ceil().max(1.0);
            if steps > 1e9 {
                return Err(Error::Integrator(format!("{steps:.3e} steps needed (dt {:.3e})", c.dt_max)));
            }
            let h = span / steps;
            for _ in 0..steps as u64 {
                c.rhs(&rho, &mut k1, &mut scratch);
                c.rhs(&(&rho + &k1 * C64::from(0.5 * h)), &mut k2, &mut scratch);
                c.rhs(&(&rho + &k2 * C64::from(0.5 * h)), &mut k3, &mut scratch);
                c.rhs(&(&rho + &k3 * C64::from(h)), &mut k4, &mut scratch);
                let incr = &k1 + (&k2 + &k3) * C64::from(2.0) + &k4;
                rho += incr * C64::from(h / 6.0);
            }
            if rho.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Integrator(format!("non-finite state after {steps} steps of {h:.3e} s")));
            }
        }
        now = t;
        check_state(&rho, &format!("state at t = {t:.3e}"), 1e-10, 1e-8)?;
        out.push(rho.clone());
    }
    Ok(out)
}

/// Populations of the orthonormalized |±α⟩ (symmetric orthogonalization).
pub fn cat_populations(rho: &Op, alpha: C64) -> (f64, f64) {
    let n = rho.nrows();
    let u = coherent(alpha, n);
    let v = coherent(-alpha, n);
    let s = u.dotc(&v);
    let m = s.norm();
    let (cu, cv) = if m < 1e-300 {
        (C64::from(1.0), C64::from(0.0))
    } else {
        // S^{-1/2} = c₀ I + c₁ (S − I)/|s| for S = [[1, s], [s*, 1]]
        let lp = 1.0 / (1.0 + m).sqrt();
        let lm = 1.0 / (1.0 - m).sqrt();
        (C64::from(0.5 * (lp + lm)), C64::from(0.5 * (lp - lm) / m))
    };
    let ut = &u * cu + &v * (cv * s.conj());
    let vt = &v * cu + &u * (cv * s);
    let pop = |w: &nalgebra::DVector<C64>| (w.adjoint() * rho * w)[(0, 0)].re;
    (pop(&ut), pop(&vt))
}

/// Populations of |±α⟩ after relaxing coherent |β⟩ under `g` for `t_relax`.
pub fn dissipative_map(beta: C64, g: &Generator, t_relax: f64) -> Result<(f64, f64)> {
    let alpha = g.alpha.ok_or_else(|| Error::InvalidInput("generator has no cat amplitude".into()))?;
    if t_relax * g.max_rate() < 10.0 {
        return Err(Error::InvalidInput(format!(
            "t_relax {t_relax:.3e} s is shorter than 10 relaxation times (rate {:.3e} /s)",
            g.max_rate()
        )));
    }
    let psi = coherent(beta, g.dim());
    let rho = evolve(&projector(&psi), g, t_relax)?;
    let (pp, pm) = cat_populations(&rho, alpha);
    if pp + pm < 0.99 {
        return Err(Error::NotConverged { residual: 1.0 - pp - pm });
    }
    Ok((pp, pm))
}

/// Parity relaxation of a stabilized cat under added single-photon loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityRelaxation {
    /// Total rate γ₊→₋ + γ₋→₊ (1/s).
    pub rate: f64,
    /// Stationary even-cat population.
    pub plus_population: f64,
}

/// Start in the even cat, let transients settle for 5/κ₂, then read ⟨P⟩ at three
/// equally spaced times and solve x(t) = x∞ + c e^{−Γt} exactly.
pub fn parity_relaxation(alpha_sq: f64, kappa1: f64, kappa2: f64, space: FockSpace) -> Result<ParityRelaxation> {
    if !(alpha_sq > 0.0 && kappa1 > 0.0 && kappa2 > 0.0) {
        return Err(Error::Domain("alpha_sq, kappa1 and kappa2 must be > 0".into()));
    }
    let n = space.dim;
    let alpha = C64::from(alpha_sq.sqrt());
    let g = two_photon_generator(alpha, kappa2, space)?.with_jump(annihilation(n), kappa1)?;
    // spacing of about a quarter of the expected relaxation time
    let h = 0.25 / (2.0 * kappa1 * alpha_sq.max(0.5));
    let t1 = 5.0 / kappa2;
    let out = evolve_times(&projector(&cat(alpha, true, n)), &g, &[t1, t1 + h, t1 + 2.0 * h])?;
    let p = parity(n);
    let x: Vec<f64> = out.iter().map(|r| expect(&p, r)).collect();
    let q = (x[2] - x[1]) / (x[1] - x[0]);
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::NotConverged { residual: q });
    }
    let x_inf = x[0] - (x[1] - x[0]) / (q - 1.0);
    Ok(ParityRelaxation { rate: -q.ln() / h, plus_population: 0.5 * (1.0 + x_inf) })
}
