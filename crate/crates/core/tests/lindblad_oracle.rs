use catrep::lindblad::{
    annihilation, cat_populations, coherent, detuned_stabilization_generator, dissipative_map, evolve, max_abs, number,
    projector, two_photon_generator, FockSpace, Generator, Op, C64,
};

/// Column-stacked Liouvillian: vec(AρB) = (Bᵀ ⊗ A) vec(ρ).
fn liouvillian(g: &Generator) -> Op {
    let n = g.dim();
    let id = Op::identity(n, n);
    let mi = C64::new(0.0, -1.0);
    let h = &g.hamiltonian;
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * mi;
    for (op, rate) in &g.jump_ops {
        let ld = op.adjoint() * op;
        let r = C64::from(*rate);
        l += (op.conjugate().kronecker(op) - id.kronecker(&ld) * C64::from(0.5) - ld.transpose().kronecker(&id) * C64::from(0.5)) * r;
    }
    l
}

fn exact(rho0: &Op, g: &Generator, t: f64) -> Op {
    let n = g.dim();
    let prop = (liouvillian(g) * C64::from(t)).exp();
    let v = prop * nalgebra::DVector::from_column_slice(rho0.as_slice());
    Op::from_column_slice(n, n, v.as_slice())
}

fn mixed_state(n: usize) -> Op {
    let a = coherent(C64::new(0.8, 0.4), n);
    let b = coherent(C64::new(-0.3, 1.1), n);
    projector(&a) * C64::from(0.6) + projector(&b) * C64::from(0.4)
}

#[test]
fn integrator_matches_matrix_exponential() {
    let n = 9;
    let space = FockSpace::new(n).unwrap();
    let kerr = number(n) * number(n) * C64::from(0.3);
    let g = two_photon_generator(C64::from(1.1), 1.0, space)
        .unwrap()
        .with_jump(annihilation(n), 0.2)
        .unwrap()
        .with_hamiltonian(&kerr)
        .unwrap();
    let rho0 = mixed_state(n);
    for t in [0.05, 0.4, 1.5] {
        let a = evolve(&rho0, &g, t).unwrap();
        let b = exact(&rho0, &g, t);
        let err = max_abs(&(a - b));
        assert!(err < 1e-7, "t = {t}: {err:.3e}");
    }
}

#[test]
fn detuned_generator_matches_matrix_exponential() {
    let n = 10;
    let g = detuned_stabilization_generator(1.0, 2.0, 10.0, C64::from(1.2), FockSpace::new(n).unwrap()).unwrap();
    let rho0 = mixed_state(n);
    let a = evolve(&rho0, &g, 0.7).unwrap();
    let b = exact(&rho0, &g, 0.7);
    assert!(max_abs(&(a - b)) < 1e-7);
}

#[test]
fn doubling_truncation_changes_little() {
    // dissipative map with a detuned buffer, and the steady cat from a vacuum start
    let run = |dim: usize| {
        let g = detuned_stabilization_generator(1.0, 1.5, 10.0, C64::from(2f64.sqrt()), FockSpace::new(dim).unwrap()).unwrap();
        dissipative_map(C64::new(0.3, 0.8), &g, 40.0).unwrap().1
    };
    let (a, b) = (run(14), run(28));
    assert!((a - b).abs() / b < 0.01, "{a} {b}");
}

#[test]
fn bit_flip_time_grows_with_alpha() {
    // photon-number dephasing is the only bit-flip channel here
    let mut rates = Vec::new();
    for alpha_sq in [1.0f64, 2.0, 3.0] {
        let n = FockSpace::recommended(alpha_sq).max(16);
        let alpha = C64::from(alpha_sq.sqrt());
        let g = two_photon_generator(alpha, 1.0, FockSpace::new(n).unwrap()).unwrap().with_jump(number(n), 0.1).unwrap();
        let rho0 = projector(&coherent(alpha, n));
        let r1 = evolve(&rho0, &g, 3.0).unwrap();
        let r2 = evolve(&rho0, &g, 8.0).unwrap();
        let p1 = cat_populations(&r1, alpha).1;
        let p2 = cat_populations(&r2, alpha).1;
        assert!(p2 > p1);
        rates.push((p2 - p1) / 5.0);
    }
    assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
}

#[test]
fn detuning_sign_and_conjugation_symmetry() {
    let space = FockSpace::new(16).unwrap();
    let alpha = C64::from(2f64.sqrt());
    let map = |delta: f64, beta: C64| {
        let g = detuned_stabilization_generator(1.0, delta, 10.0, alpha, space).unwrap();
        dissipative_map(beta, &g, 40.0).unwrap()
    };
    let beta = C64::new(0.7, 0.9);
    for delta in [0.0, 1.0, 3.0] {
        // complex conjugation reverses the sign of the detuning
        let (pp, pm) = map(delta, beta);
        let (qp, qm) = map(-delta, beta.conj());
        assert!((pp - qp).abs() < 1e-8 && (pm - qm).abs() < 1e-8, "delta {delta}");
        // a → −a exchanges the two cat states
        let (rp, rm) = map(delta, -beta);
        assert!((pp - rm).abs() < 1e-8 && (pm - rp).abs() < 1e-8, "delta {delta}");
    }
    // undetuned map of an imaginary amplitude is balanced
    let (pp, pm) = map(0.0, C64::new(0.0, 1.0));
    assert!((pp - pm).abs() < 1e-8);
}
