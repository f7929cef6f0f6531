//! Library results checked against independent reference computations.

mod common;

use rand::Rng;
use sdcorp::graph::Topology;
use sdcorp::linalg::{
    discrete_sylvester_residual, eigenvalues, exp_convolution, kron, lu, mat_exp, sigma_max,
    solve_discrete_sylvester, solve_sylvester, spectral_radius, sylvester_residual,
};
use sdcorp::regulator::{
    certify_general_hold, certify_zoh, discretize, solve_regulator_pair, synthesize_k1,
    AgentBlocks,
};
use sdcorp::scenarios::{
    dispatch_radius, equal_ic_optimum, example_4_1, microgrid_flow, run_microgrid, MgState,
    MicrogridParams, PAPER_K1,
};
use sdcorp::sim::{flow, jump, simulate, AgentState};
use sdcorp::{
    Error, Exosystem, HoldSpec, InitialConditions, LeaderGraph, Mat, NetworkState, Plant,
    SimOptions, Spectrum,
};

use common::*;

fn spectrum_of(values: &[(f64, f64)]) -> Spectrum {
    Spectrum::new(
        values
            .iter()
            .map(|&(re, im)| num_complex::Complex64::new(re, im))
            .collect(),
    )
}

#[test]
fn mat_exp_matches_series() {
    let mut rng = rng(1);
    for _ in 0..100 {
        let a = random_with_norm(&mut rng, 3, 2.0);
        let e = mat_exp(&a, 1.0).unwrap();
        assert!(e.approx_eq(&taylor_exp(&a, 1.0), 1e-10));
    }
}

#[test]
fn oscillator_exponential_is_a_rotation() {
    let s = Mat::from_rows(&[[0.0, -2.0], [2.0, 0.0]]);
    let (c, sn) = (0.2f64.cos(), 0.2f64.sin());
    let want = Mat::from_rows(&[[c, -sn], [sn, c]]);
    assert!(mat_exp(&s, 0.1).unwrap().approx_eq(&want, 1e-15));
}

#[test]
fn sampled_example_matches_quadrature() {
    let sc = example_4_1();
    let p = &sc.plants[0];
    let d = discretize(p, &sc.exo, 0.1).unwrap();
    let p_d = simpson_convolution(&p.a, &p.p, &sc.exo.s, 0.1, 10_000);
    let b_d = simpson_convolution(&p.a, &p.b, &Mat::zeros(1, 1), 0.1, 10_000);
    assert!(d.p_d.approx_eq(&p_d, 1e-8));
    assert!(d.b_d.approx_eq(&b_d, 1e-8));
    assert!(d.a_d.approx_eq(&taylor_exp(&p.a, 0.1), 1e-12));
    let direct = exp_convolution(&p.a, &p.p, &sc.exo.s, 0.1).unwrap();
    assert_eq!(direct, d.p_d);
}

#[test]
fn constant_exosystem_integral_matches_input_path() {
    // with S = 0 the P_D integral is the B_D integral with P in place of B
    let sc = example_4_1();
    let mut plant = sc.plants[0].clone();
    plant.p = Mat::col(&[0.3, -1.0, 2.0]);
    plant.q = Mat::zeros(1, 1);
    let exo = Exosystem::new(Mat::zeros(1, 1), vec![1.0]).unwrap();
    let d = discretize(&plant, &exo, 0.2).unwrap();
    let via_input = exp_convolution(&plant.a, &plant.p, &Mat::zeros(1, 1), 0.2).unwrap();
    assert!(d.p_d.approx_eq(&via_input, 1e-15));
}

#[test]
fn example_h_spectrum_and_singular_value() {
    let d = example_4_1().graph.decompose();
    let got = eigenvalues(&d.h).unwrap();
    let want = spectrum_of(&[(3.0, 0.0), (2.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
    // the double eigenvalue is defective, so agreement is at √ε scale
    assert!(got.match_distance(&want).unwrap() < 1e-7);
    let sigma = sigma_max(&d.h).unwrap();
    assert!((sigma - power_sigma_max(&d.h)).abs() < 1e-10 * sigma);
    let paper = d.paper_mu_bound().unwrap();
    assert!((paper - 4.0 / (sigma * sigma)).abs() < 1e-12);
}

#[test]
fn kron_matches_index_formula() {
    let mut rng = rng(2);
    for _ in 0..20 {
        let a = random_mat(&mut rng, 2, 2, 1.0);
        let b = random_mat(&mut rng, 2, 2, 1.0);
        assert_eq!(kron(&a, &b), kron_by_index(&a, &b));
    }
}

#[test]
fn sylvester_with_constant_exosystem_is_a_linear_solve() {
    let mut rng = rng(3);
    for _ in 0..20 {
        // shift makes A Hurwitz
        let a = &random_mat(&mut rng, 3, 3, 1.0) - &Mat::identity(3).scale(4.0);
        let p = random_mat(&mut rng, 3, 1, 1.0);
        let pi = solve_sylvester(&a, &Mat::zeros(1, 1), &p).unwrap();
        let want = -&lu::solve(&a, &p).unwrap();
        assert!(pi.approx_eq(&want, 1e-12));
    }
}

#[test]
fn sylvester_residuals_and_uniqueness() {
    let mut rng = rng(4);
    for _ in 0..50 {
        let a = random_mat(&mut rng, 3, 3, 1.0);
        let s = Mat::from_rows(&[[0.0, -1.3], [1.3, 0.0]]);
        let p = random_mat(&mut rng, 3, 2, 1.0);
        let Ok(pi) = solve_sylvester(&a, &s, &p) else {
            continue;
        };
        let r = sylvester_residual(&a, &s, &p, &pi);
        assert!(r <= 1e-10 * (1.0 + p.norm_inf()), "residual {r}");
        for i in 0..3 {
            for j in 0..2 {
                let mut bumped = pi.clone();
                bumped[(i, j)] += 1e-3;
                assert!(sylvester_residual(&a, &s, &p, &bumped) > r);
            }
        }
    }
}

#[test]
fn discrete_sylvester_examples() {
    let n = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    let x = solve_discrete_sylvester(&Mat::zeros(2, 2), &Mat::identity(2), &n).unwrap();
    assert!(x.approx_eq(&n, 1e-15));
    let x = solve_discrete_sylvester(
        &Mat::identity(2).scale(0.5),
        &Mat::identity(2).scale(2.0),
        &Mat::identity(2),
    )
    .unwrap();
    assert!(x.approx_eq(&Mat::identity(2).scale(2.0 / 3.0), 1e-15));

    let mut rng = rng(5);
    let j = mat_exp(&Mat::from_rows(&[[0.0, -2.0], [2.0, 0.0]]), 0.1).unwrap();
    for _ in 0..30 {
        let m = random_with_norm(&mut rng, 3, 0.9);
        let rhs = random_mat(&mut rng, 3, 2, 1.0);
        let x = solve_discrete_sylvester(&m, &j, &rhs).unwrap();
        assert!(discrete_sylvester_residual(&m, &j, &rhs, &x) <= 1e-10 * (1.0 + rhs.norm_inf()));
        let mut bumped = x.clone();
        bumped[(0, 0)] += 1e-3;
        assert!(discrete_sylvester_residual(&m, &j, &rhs, &bumped) > 1e-6);
    }
}

#[test]
fn regulator_pair_recovers_constructed_solution() {
    let mut rng = rng(6);
    let s = Mat::from_rows(&[[0.0, -0.7], [0.7, 0.0]]);
    let exo = Exosystem::new(s.clone(), vec![1.0, 0.0]).unwrap();
    for _ in 0..20 {
        let a = random_mat(&mut rng, 3, 3, 1.0);
        let p = random_mat(&mut rng, 3, 2, 1.0);
        let Ok(star) = solve_sylvester(&a, &s, &p) else {
            continue;
        };
        let c = random_mat(&mut rng, 1, 3, 1.0);
        let q = -&(&c * &star);
        let plant = Plant::new(a, random_mat(&mut rng, 3, 1, 1.0), c, p, q).unwrap();
        let pi = solve_regulator_pair(&plant, &exo).unwrap();
        assert!(pi.approx_eq(&star, 1e-12));
        assert!(sylvester_residual(&plant.a, &s, &plant.p, &pi) <= 1e-10);
        assert!((&(&plant.c * &pi) + &plant.q).norm_inf() <= 1e-10);
    }
}

#[test]
fn reference_gain_stabilizes_the_sampled_example() {
    let sc = example_4_1();
    let d = discretize(&sc.plants[0], &sc.exo, 0.1).unwrap();
    let k = Mat::from_rows(&[PAPER_K1]);
    assert!(spectral_radius(&(&d.a_d + &(&d.b_d * &k))).unwrap() < 1.0);
}

#[test]
fn synthesized_gain_meets_its_radius_bound() {
    let mut rng = rng(7);
    let mut checked = 0;
    while checked < 30 {
        let a = random_mat(&mut rng, 3, 3, 2.0);
        let b = random_mat(&mut rng, 3, 1, 1.0);
        let Ok(k) = synthesize_k1(&a, &b) else {
            continue;
        };
        checked += 1;
        assert!(spectral_radius(&(&a + &(&b * &k))).unwrap() < 1.0);
    }
}

#[test]
fn example_certificate_and_step_size_limits() {
    let sc = example_4_1();
    let mut design = sc.assemble(&sc.default_gains()).unwrap();
    let cert = certify_zoh(&design, &sc.plants, &sc.exo, &sc.graph).unwrap();
    assert!(cert.passed(), "{:?}", cert.failures);
    assert!((cert.rho_eta - 0.9).abs() < 1e-7);
    for (k1, (k2, pi)) in design.k1.iter().zip(design.k2.iter().zip(&design.pi)) {
        assert_eq!((&(k1 * pi) + k2).norm_inf(), 0.0);
    }

    design.mu = 1.0;
    let cert = certify_zoh(&design, &sc.plants, &sc.exo, &sc.graph).unwrap();
    assert!(!cert.passed());
    assert!((cert.rho_eta - 2.0).abs() < 1e-7);

    for (mu, below) in [(2.0 / 3.0 - 1e-3, true), (2.0 / 3.0 + 1e-3, false)] {
        design.mu = mu;
        let cert = certify_zoh(&design, &sc.plants, &sc.exo, &sc.graph).unwrap();
        assert_eq!(cert.rho_eta < 1.0, below, "mu = {mu}: {}", cert.rho_eta);
    }
}

#[test]
fn zero_gain_on_unstable_plant_fails() {
    let sc = example_4_1();
    let mut design = sc.assemble(&sc.default_gains()).unwrap();
    for (k1, (k2, pi)) in design.k1.iter_mut().zip(design.k2.iter_mut().zip(&design.pi)) {
        *k1 = Mat::zeros(1, 3);
        *k2 = -&(&*k1 * pi);
    }
    let cert = certify_zoh(&design, &sc.plants, &sc.exo, &sc.graph).unwrap();
    assert!(!cert.passed());
    assert!(cert.rho_agent.iter().all(|r| *r >= 1.0));
}

#[test]
fn single_agent_consensus_layer() {
    let g = LeaderGraph::new(Mat::from_rows(&[[0.0, 0.0], [1.0, 0.0]]), Topology::Directed).unwrap();
    assert_eq!(g.decompose().h, Mat::identity(1));
    assert!((g.decompose().exact_mu_bound().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn zoh_as_general_hold_agrees() {
    let sc = example_4_1();
    let design = sc.assemble(&sc.default_gains()).unwrap();
    let zoh = certify_zoh(&design, &sc.plants, &sc.exo, &sc.graph).unwrap();
    let hold = HoldSpec::general(Mat::identity(1), Mat::zeros(1, 1)).unwrap();
    let blocks: Vec<AgentBlocks> = sc
        .plants
        .iter()
        .enumerate()
        .map(|(i, p)| AgentBlocks::new(p, &hold, &design.k1[i], &design.k2[i]).unwrap())
        .collect();
    let general = certify_general_hold(&blocks, &sc.exo, &sc.graph, 0.1, 0.1).unwrap();
    let cert = &general.certificate;
    assert_eq!(cert.passed(), zoh.passed());
    assert!((cert.rho_eta - zoh.rho_eta).abs() < 1e-12);
    for (a, b) in cert.rho_agent.iter().zip(&zoh.rho_agent) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert!(cert.residuals.iter().all(|r| *r <= 1e-6), "{:?}", cert.residuals);
}

fn example_state(seed: u64) -> (sdcorp::scenarios::NetworkScenario, sdcorp::CompensatorDesign, NetworkState) {
    let sc = example_4_1();
    let design = sc.assemble(&sc.default_gains()).unwrap();
    let init = sc.initial_conditions(seed);
    let state = NetworkState {
        agents: init
            .x0
            .iter()
            .zip(&init.eta0)
            .map(|(x, e)| AgentState {
                x: x.clone(),
                xi: vec![0.0],
                eta: e.clone(),
            })
            .collect(),
        w: init.w0,
        t: 0.0,
    };
    (sc, design, state)
}

#[test]
fn flow_matches_rk4() {
    let (sc, design, state) = example_state(11);
    let post = jump(&state, &design, &sc.graph).unwrap();
    let exact = flow(&post, &sc.plants, &sc.exo, &design.hold, 0.1).unwrap();
    let gen = zoh_flow_generator(&sc.plants, &sc.exo.s);
    let rk = rk4_linear(&gen, &pack(&post), 0.1, 1000);
    for (a, b) in pack(&exact).iter().zip(&rk) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn flow_halves_compose() {
    let (sc, design, state) = example_state(12);
    let post = jump(&state, &design, &sc.graph).unwrap();
    let full = flow(&post, &sc.plants, &sc.exo, &design.hold, 0.1).unwrap();
    let half = flow(&post, &sc.plants, &sc.exo, &design.hold, 0.05).unwrap();
    let twice = flow(&half, &sc.plants, &sc.exo, &design.hold, 0.05).unwrap();
    for (a, b) in pack(&full).iter().zip(&pack(&twice)) {
        assert!((a - b).abs() <= 1e-10);
    }
}

fn on_manifold(sc: &sdcorp::scenarios::NetworkScenario, design: &sdcorp::CompensatorDesign) -> InitialConditions {
    let w0 = sc.exo.w0.clone();
    InitialConditions {
        x0: design.pi.iter().map(|pi| pi.mul_vec(&w0)).collect(),
        eta0: vec![w0.clone(); sc.plants.len()],
        w0,
    }
}

#[test]
fn manifold_start_has_zero_error() {
    let sc = example_4_1();
    let design = sc.assemble(&sc.default_gains()).unwrap();
    let trace = simulate(
        &sc.plants,
        &sc.exo,
        &design,
        &sc.graph,
        &on_manifold(&sc, &design),
        &SimOptions {
            horizon: 30.0,
            substeps: 10,
            force: false,
        },
    )
    .unwrap();
    let worst = trace.records.iter().map(|r| r.max_error()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn synchronized_estimates_are_a_fixed_point_of_the_jump() {
    let (sc, design, mut state) = example_state(13);
    for a in &mut state.agents {
        a.eta = state.w.clone();
    }
    let post = jump(&state, &design, &sc.graph).unwrap();
    for (a, b) in post.agents.iter().zip(&state.agents) {
        for (x, y) in a.eta.iter().zip(&b.eta) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}

#[test]
fn example_consensus_error_contracts_at_certified_rate() {
    let sc = example_4_1();
    let design = sc.assemble(&sc.default_gains()).unwrap();
    let trace = simulate(
        &sc.plants,
        &sc.exo,
        &design,
        &sc.graph,
        &sc.initial_conditions(21),
        &SimOptions {
            horizon: 30.0,
            substeps: 1,
            force: false,
        },
    )
    .unwrap();
    let d: Vec<f64> = trace.pre_jump_states().map(|s| s.consensus_error()).collect();
    // per-jump ratio over a late window; the Jordan block of H adds a
    // polynomial factor (k+1)/k that fades slowly
    let ratio = (d[250] / d[150]).powf(1.0 / 100.0);
    assert!((ratio - 0.9).abs() < 0.01, "{ratio}");
}

#[test]
fn oversized_step_does_not_converge() {
    let sc = example_4_1();
    let mut design = sc.assemble(&sc.default_gains()).unwrap();
    design.mu = 1.0;
    let opts = SimOptions {
        horizon: 30.0,
        substeps: 1,
        force: true,
    };
    let init = sc.initial_conditions(22);
    match simulate(&sc.plants, &sc.exo, &design, &sc.graph, &init, &opts) {
        Err(Error::Diverged { .. }) => {}
        Ok(trace) => {
            let d: Vec<f64> = trace.pre_jump_states().map(|s| s.consensus_error()).collect();
            assert!(d.last().unwrap() >= &d[0]);
        }
        Err(e) => panic!("{e}"),
    }
    let unforced = SimOptions { force: false, ..opts };
    assert!(matches!(
        simulate(&sc.plants, &sc.exo, &design, &sc.graph, &init, &unforced),
        Err(Error::CertificateFailed(_))
    ));
}

/// Micro-grid generator written out from the model equations, with the held
/// setpoint appended as a constant state.
fn microgrid_generator(p: &MicrogridParams) -> Mat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = Mat::zeros(6, 6);
    // δ̇ = Δω
    m[(0, 1)] = 1.0;
    // τ_p Δω̇ = −Δω − k_p (P − r P^r)
    m[(1, 1)] = -1.0 / p.tau_p;
    m[(1, 3)] = -p.k_p / p.tau_p;
    m[(1, 5)] = p.k_p * r / p.tau_p;
    // τ_V ΔV̇ = −ΔV − k_q (Q − r P^r)
    m[(2, 2)] = -1.0 / p.tau_v;
    m[(2, 4)] = -p.k_q / p.tau_v;
    m[(2, 5)] = p.k_q * r / p.tau_v;
    // Ṗ = −k1 (P − r P^r), Q̇ = −k2 (Q − r P^r)
    m[(3, 3)] = -p.k1;
    m[(3, 5)] = p.k1 * r;
    m[(4, 4)] = -p.k2;
    m[(4, 5)] = p.k2 * r;
    m
}

#[test]
fn microgrid_flow_matches_rk4() {
    let p = MicrogridParams::table1();
    let gen = microgrid_generator(&p);
    let states = vec![
        MgState([0.1, -0.2, 0.05, 30.0, 10.0]),
        MgState([0.0, 0.0, 0.0, 0.0, 0.0]),
        MgState([1.0, 0.3, -0.1, 100.0, 80.0]),
        MgState([0.0, 0.1, 0.0, 70.0, 70.0]),
        MgState([-0.5, 0.0, 0.2, 50.0, 20.0]),
    ];
    let held = [120.0, 90.0, 60.0, 40.0, 75.0];
    let next = microgrid_flow(&states, &p, &held, 0.5).unwrap();
    for ((s, n), pr) in states.iter().zip(&next).zip(held) {
        let mut z = s.0.to_vec();
        z.push(pr);
        let rk = rk4_linear(&gen, &z, 0.5, 1000);
        for (a, b) in n.0.iter().zip(&rk) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn microgrid_run_matches_rk4_and_reference_dispatch() {
    let mut p = MicrogridParams::table1();
    p.dispatch_h = 1e-3;
    let trace = run_microgrid(&p, 5.0).unwrap();

    // reference loop: dispatch update written from the algorithm, flows by RK4
    let n = p.n();
    let gen = microgrid_generator(&p);
    let mut lambda: Vec<f64> = (0..n).map(|i| p.alpha[i] * p.p_r0[i] + p.beta[i]).collect();
    let mut p_r = p.p_r0.clone();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut mg: Vec<Vec<f64>> = p_r.iter().map(|v| vec![0.0, 0.0, 0.0, r * v, r * v]).collect();
    for k in 0..trace.steps {
        let p_main = p.p_main(k as f64 * p.dispatch_h);
        let mismatch: f64 = p_r.iter().sum::<f64>() - p_main;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let coupling: f64 = (0..n).map(|j| p.laplacian[(i, j)] * lambda[j]).sum();
                lambda[i] - p.mu[i] * coupling - p.a0[i] * mismatch
            })
            .collect();
        lambda = next;
        p_r = (0..n).map(|i| (lambda[i] - p.beta[i]) / p.alpha[i]).collect();
        for (s, pr) in mg.iter_mut().zip(&p_r) {
            let mut z = s.clone();
            z.push(*pr);
            let out = rk4_linear(&gen, &z, p.dispatch_h, 4);
            s.copy_from_slice(&out[..5]);
        }
    }
    for i in 0..n {
        assert!((trace.dispatch.lambda[i] - lambda[i]).abs() <= 1e-6 * lambda[i].abs());
        for c in 0..5 {
            let (a, b) = (trace.mg[i].0[c], mg[i][c]);
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "MG {i} component {c}: {a} vs {b}");
        }
    }
}

#[test]
fn dispatch_fixed_point_is_the_equal_cost_optimum() {
    let p = MicrogridParams::table1();
    assert!(dispatch_radius(&p).unwrap() < 1.0);
    let lam = equal_ic_optimum(&p, 850.0);
    let total: f64 = (0..p.n()).map(|i| (lam - p.beta[i]) / p.alpha[i]).sum();
    assert!((total - 850.0).abs() < 1e-6);
}

#[test]
fn frequency_deviation_returns_to_zero() {
    let p = MicrogridParams::table1();
    let held = vec![200.0; 5];
    let mut states = vec![MgState([0.0; 5]); 5];
    let mut rng = rng(8);
    for s in &mut states {
        for v in s.0.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let later = microgrid_flow(&states, &p, &held, 10.0).unwrap();
    for s in &later {
        assert!(s.delta_omega().abs() < 1e-6);
        assert!((s.p() - std::f64::consts::FRAC_1_SQRT_2 * 200.0).abs() < 1e-6);
    }
}
