//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs all criteria by default; pass criterion numbers as arguments to run a
//! subset (`cargo test --test acceptance -- 4 5`).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weylctl::functionals::{chi_boundary, j_local_invariants, j_local_invariants_geometric, TargetSpec};
use weylctl::geometry::{
    canonical_gate, canonicalize, extract_local_factors, gate_error, kronecker_residual,
    local_invariants, weyl_coordinates, LocalInvariants, NamedClass, WeylPoint, CLASS_MATCH_TOL,
};
use weylctl::krotov::{optimize, IterationRecord, KrotovConfig, MONOTONICITY_SLACK};
use weylctl::linalg::{c, random_local, random_special_unitary, random_unitary, CMatrix, CVector, C64};
use weylctl::models::{
    build_rydberg_internal, build_spinspin, nonlocal_phase, pi_phase_gate, spinspin_diagonal_cnot,
    tanh_envelope_guess, ControlProblem, RydbergParams, SpinSpinParams, RB_5P_DECAY_RATE,
};
use weylctl::propagation::{
    kinetic_apply, propagate_forward, step_chebychev, step_expm, DenseModel,
    GridModel, Hamiltonian, PropagationMethod,
};
use weylctl::types::{unitarity_defect, GateMatrix, SubspaceProjector};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Spin-spin gate duration; a multiple of the drift's trace period so that
/// `det U = 1` is reachable.
const SPINSPIN_T: f64 = 37.0 / 3.681;
const SPINSPIN_STEPS: usize = 2000;

fn violations(history: &[IterationRecord]) -> usize {
    history
        .windows(2)
        .filter(|w| w[1].j_total > w[0].j_total + MONOTONICITY_SLACK)
        .count()
}

fn columns(u: &CMatrix) -> Vec<CVector> {
    (0..u.ncols()).map(|k| u.column(k).into_owned()).collect()
}

fn inv_diff(a: &LocalInvariants, b: &LocalInvariants) -> f64 {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn table_reproduction() -> Outcome {
    // class, (cx, cy, cz), (g1, g2, g3)
    let table = [
        (NamedClass::Identity, [0.0, 0.0, 0.0], [1.0, 0.0, 3.0]),
        (NamedClass::Cnot, [FRAC_PI_2, 0.0, 0.0], [0.0, 0.0, 1.0]),
        (NamedClass::Cphase, [FRAC_PI_2, 0.0, 0.0], [0.0, 0.0, 1.0]),
        (NamedClass::BGate, [FRAC_PI_2, FRAC_PI_4, 0.0], [0.0, 0.0, 0.0]),
        (NamedClass::SqrtSwap, [FRAC_PI_4, FRAC_PI_4, FRAC_PI_4], [0.0, 0.25, 0.0]),
        (NamedClass::Swap, [FRAC_PI_2, FRAC_PI_2, FRAC_PI_2], [-1.0, 0.0, -3.0]),
    ];
    let mut worst: f64 = 0.0;
    for (class, w, g) in table {
        let gate = class.gate();
        let gi = local_invariants(&gate).expect("invariants");
        let wc = weyl_coordinates(&gate).expect("coordinates");
        worst = worst.max(inv_diff(&gi, &LocalInvariants::new(g[0], g[1], g[2])));
        worst = worst.max(wc.max_abs_diff(&WeylPoint::new(w[0], w[1], w[2])));
    }
    Outcome::new(worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

fn invariance_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut inv, mut idem, mut trip) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let u = random_special_unitary(4, &mut rng);
        let alpha: f64 = rng.random_range(0.0..2.0 * PI);
        let v = random_local(&mut rng) * &u * random_local(&mut rng) * C64::from_polar(1.0, alpha);
        let gu = local_invariants(&GateMatrix::new(u.clone()).unwrap()).unwrap();
        let gv = local_invariants(&GateMatrix::new(v).unwrap()).unwrap();
        inv = inv.max(inv_diff(&gu, &gv));

        let raw = WeylPoint::new(
            rng.random_range(-2.0 * PI..2.0 * PI),
            rng.random_range(-2.0 * PI..2.0 * PI),
            rng.random_range(-2.0 * PI..2.0 * PI),
        );
        let once = canonicalize(raw);
        idem = idem.max(canonicalize(once).max_abs_diff(&once));

        let w = weyl_coordinates(&GateMatrix::new(u).unwrap()).unwrap();
        let back = weyl_coordinates(&canonical_gate(w)).unwrap();
        trip = trip.max(back.max_abs_diff(&w));
    }
    Outcome::new(
        inv <= 1e-9 && idem == 0.0 && trip <= 1e-8,
        format!("invariants {inv:.2e}, idempotence {idem:.1e}, round trip {trip:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let full = SubspaceProjector::full(4);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let target = if i % 2 == 0 {
            NamedClass::Cnot.gate()
        } else {
            GateMatrix::new(random_unitary(4, &mut rng)).unwrap()
        };
        let target = TargetSpec::class(target).unwrap();
        let u = random_unitary(4, &mut rng);
        let poly = j_local_invariants(&columns(&u), &target, &full).unwrap();
        let geo = j_local_invariants_geometric(&GateMatrix::new(u).unwrap(), &target).unwrap();
        worst = worst.max((poly - geo).abs());
    }

    let target = TargetSpec::class(NamedClass::Cnot.gate()).unwrap();
    let states = columns(&random_unitary(4, &mut rng));
    let grad = chi_boundary(&states, &target, &full).unwrap();
    let h = 1e-6;
    let mut rel: f64 = 0.0;
    for _ in 0..50 {
        let dir: Vec<CVector> = (0..4)
            .map(|_| CVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        let shifted = |s: f64| -> Vec<CVector> {
            states.iter().zip(&dir).map(|(x, d)| x + d * c(s, 0.0)).collect()
        };
        let jp = j_local_invariants(&shifted(h), &target, &full).unwrap();
        let jm = j_local_invariants(&shifted(-h), &target, &full).unwrap();
        let fd = (jp - jm) / (2.0 * h);
        let an = 2.0 * grad.iter().zip(&dir).map(|(g, d)| g.dotc(d).re).sum::<f64>();
        rel = rel.max((fd - an).abs() / an.abs());
    }
    Outcome::new(
        worst <= 1e-9 && rel < 1e-5,
        format!("polynomial vs invariant distance {worst:.2e}, gradient relative error {rel:.2e}"),
    )
}

fn spinspin_problem(target: TargetSpec) -> ControlProblem {
    build_spinspin(&SpinSpinParams::cnot(), SPINSPIN_T, SPINSPIN_STEPS, target).unwrap()
}

fn run(problem: &ControlProblem, cfg: &KrotovConfig) -> Result<Vec<IterationRecord>, String> {
    optimize(problem, cfg)
        .map(|r| r.history)
        .map_err(|e| e.to_string())
}

fn spinspin_class(j_li: &mut Option<f64>) -> Outcome {
    let p = spinspin_problem(TargetSpec::class(NamedClass::Cnot.gate()).unwrap());
    let cfg = KrotovConfig {
        lambda_a: 7.0e3,
        sigma_a: 5.0,
        max_iters: 500,
        j_t_tol: 0.0,
        delta_j_tol: 0.0,
        check_monotonicity: false,
        ..Default::default()
    };
    let history = match run(&p, &cfg) {
        Ok(h) => h,
        Err(e) => return Outcome::new(false, e),
    };
    let v = violations(&history);
    let best = history
        .iter()
        .position(|r| r.j_t <= 5e-3)
        .map_or("never".to_string(), |i| i.to_string());
    let last = history.last().unwrap();
    *j_li = Some(last.j_t);
    Outcome::new(
        v == 0 && last.j_t <= 5e-3,
        format!(
            "J_T = {:.3e} after {} iterations, <= 5e-3 from iteration {best}, {v} increases",
            last.j_t, last.iteration
        ),
    )
}

fn direct_failure() -> Outcome {
    let p = spinspin_problem(TargetSpec::direct(NamedClass::Cnot.gate()).unwrap());
    let cfg = KrotovConfig {
        lambda_a: 7.0e3,
        max_iters: 200,
        j_t_tol: 0.0,
        delta_j_tol: 0.0,
        check_monotonicity: false,
        ..Default::default()
    };
    match run(&p, &cfg) {
        Ok(h) => {
            let last = h.last().unwrap();
            Outcome::new(
                last.j_t >= 0.5,
                format!("direct error {:.3} after {} iterations", last.j_t, last.iteration),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn diagonal_direct(j_li: Option<f64>) -> Outcome {
    let Some(reference) = j_li else {
        return Outcome::new(false, "needs criterion 4's result");
    };
    let p = spinspin_problem(TargetSpec::direct(spinspin_diagonal_cnot()).unwrap());
    let cfg = KrotovConfig {
        lambda_a: 1.0e3,
        max_iters: 1500,
        j_t_tol: 0.0,
        delta_j_tol: 0.0,
        check_monotonicity: false,
        ..Default::default()
    };
    match run(&p, &cfg) {
        Ok(h) => {
            let last = h.last().unwrap();
            Outcome::new(
                last.j_t <= 5.0 * reference,
                format!(
                    "error {:.3e} vs bound {:.3e} after {} iterations, {} increases",
                    last.j_t,
                    5.0 * reference,
                    last.iteration,
                    violations(&h)
                ),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn local_factors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cnot = NamedClass::Cnot.gate();
    let (mut e_max, mut k_max) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let u = random_local(&mut rng) * cnot.matrix() * random_local(&mut rng);
        let u = GateMatrix::new(u).unwrap();
        match extract_local_factors(&u, &cnot, CLASS_MATCH_TOL) {
            Ok(f) => {
                e_max = e_max.max(gate_error(&u, &cnot, &f.k1, &f.k2));
                k_max = k_max.max(kronecker_residual(&f.k1)).max(kronecker_residual(&f.k2));
            }
            Err(e) => return Outcome::new(false, e.to_string()),
        }
    }
    Outcome::new(
        e_max < 1e-8 && k_max < 1e-6,
        format!("max E {e_max:.2e}, max Kronecker residual {k_max:.2e}"),
    )
}

fn rydberg_gate() -> Outcome {
    let params = RydbergParams::default();
    let step = PI / params.interaction_at(params.separation_um);
    let p = build_rydberg_internal(&params, 100.0, 1000, TargetSpec::class(pi_phase_gate()).unwrap())
        .unwrap();
    let guess = vec![tanh_envelope_guess(p.grid, 0.9).unwrap(); 2];
    let p = p.with_guess(guess).unwrap();
    let cfg = KrotovConfig {
        lambda_a: 0.3,
        sigma_a: 20.0,
        max_iters: 6000,
        j_t_tol: 1e-7,
        delta_j_tol: 1e-12,
        check_monotonicity: false,
        ..Default::default()
    };
    let res = match optimize(&p, &cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let v = violations(&res.history);
    let defect = unitarity_defect(&res.gate);
    match nonlocal_phase(&res.gate) {
        Ok(chi) => Outcome::new(
            v == 0 && (chi - PI).abs() <= 0.05 && defect < 1e-3 && (step - 10.0).abs() < 0.01,
            format!(
                "chi = {chi:.4}, defect {defect:.1e}, {v} increases, {} iterations ({:?}), pi/interaction = {step:.3} ns",
                res.history.len() - 1,
                res.stop
            ),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn max_state_diff(a: &[CVector], b: &[CVector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn propagators() -> Outcome {
    let mut worst_step: f64 = 0.0;
    let mut worst_run: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let mut problems = vec![
        spinspin_problem(TargetSpec::class(NamedClass::Cnot.gate()).unwrap()),
        build_rydberg_internal(&RydbergParams::default(), 20.0, 400, TargetSpec::class(pi_phase_gate()).unwrap())
            .unwrap(),
    ];
    // two internal levels on a 32-point relative-coordinate grid: 64 states
    let params = RydbergParams::default();
    let grid = params.fourier_grid(32).unwrap();
    let pair = DenseModel::new(
        CMatrix::zeros(2, 2),
        vec![weylctl::propagation::ControlTerm {
            operator: CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]),
            control: 0,
            coupling: weylctl::propagation::Coupling::Linear,
        }],
    )
    .unwrap();
    let points = grid.points();
    let potentials = vec![
        points.iter().map(|&r| 2.0 * params.trap_potential_per_atom(r)).collect(),
        points.iter().map(|&r| params.interaction_at(r)).collect(),
    ];
    let grid_model = GridModel::new(grid, pair, potentials).unwrap();

    let models: Vec<&dyn Hamiltonian> = problems
        .iter()
        .map(|p| p.model.as_ref())
        .chain(std::iter::once(&grid_model as &dyn Hamiltonian))
        .collect();
    for model in &models {
        assert!(model.dim() <= 64);
        for _ in 0..5 {
            let controls: Vec<f64> = (0..model.n_controls()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h = model.dense(&controls);
            let psi = CVector::from_fn(model.dim(), |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .normalize();
            for dt in [0.01, 0.3, 2.0] {
                let a = step_expm(&h, &psi, dt);
                let b = step_chebychev(|v| model.apply(&controls, v), &psi, dt, model.spectral_bounds(&controls), false)
                    .unwrap();
                worst_step = worst_step.max((a - b).norm());
            }
        }
    }
    for p in problems.iter_mut() {
        let init = p.initial_states();
        let a = propagate_forward(p.model.as_ref(), &p.guess, &init, PropagationMethod::Expm).unwrap();
        let b = propagate_forward(p.model.as_ref(), &p.guess, &init, PropagationMethod::Chebychev).unwrap();
        worst_run = worst_run.max(max_state_diff(&a.final_states(), &b.final_states()));
    }

    // ground state of the harmonic relative motion only picks up exp(-i ω t / 2)
    let grid = params.fourier_grid(64).unwrap();
    let points = grid.points();
    let one = DenseModel::new(CMatrix::zeros(1, 1), vec![]).unwrap();
    let trap = GridModel::new(
        grid.clone(),
        one,
        vec![points.iter().map(|&r| 2.0 * params.trap_potential_per_atom(r)).collect()],
    )
    .unwrap();
    let s = params.ground_state_width();
    let phi0 = CVector::from_iterator(
        64,
        points.iter().map(|r| {
            let x = r - params.separation_um;
            c((-x * x / (4.0 * s * s)).exp(), 0.0)
        }),
    )
    .normalize();
    let omega = params.trap_frequency();
    let mut auto: f64 = 0.0;
    for t in [1.0, 100.0, 2000.0] {
        let phi = step_chebychev(|v| trap.apply(&[], v), &phi0, t, trap.spectral_bounds(&[]), false).unwrap();
        let overlap = phi0.dotc(&phi);
        auto = auto.max((overlap - C64::from_polar(1.0, -0.5 * omega * t)).norm());
    }

    // plane waves are kinetic eigenstates with eigenvalue κ k²
    let length = grid.r_max() - grid.r_min();
    let mut plane: f64 = 0.0;
    for m in [1.0, 5.0, 20.0] {
        let k = 2.0 * PI * m / length;
        let psi = CVector::from_iterator(64, points.iter().map(|x| C64::from_polar(1.0, k * x))).normalize();
        let tpsi = kinetic_apply(&grid, &psi).unwrap();
        let eig = grid.kinetic_prefactor() * k * k;
        plane = plane.max((tpsi - &psi * c(eig, 0.0)).norm() / eig);
    }

    Outcome::new(
        worst_step <= 1e-10 && worst_run <= 1e-10 && auto <= 1e-8 && plane <= 1e-8,
        format!(
            "step {worst_step:.1e}, propagation {worst_run:.1e}, trap autocorrelation {auto:.1e}, plane wave {plane:.1e}"
        ),
    )
}

fn decay_avoidance() -> Outcome {
    let params = RydbergParams {
        decay_rate: RB_5P_DECAY_RATE,
        ..Default::default()
    };
    let base = build_rydberg_internal(&params, 100.0, 500, TargetSpec::class(pi_phase_gate()).unwrap()).unwrap();
    let guess = vec![tanh_envelope_guess(base.grid, 0.9).unwrap(); 2];
    let base = base.with_guess(guess).unwrap();
    let final_avoid = |lambda_b: f64| -> Result<(f64, usize), String> {
        let cfg = KrotovConfig {
            lambda_a: 1.0,
            lambda_b,
            sigma_a: 20.0,
            max_iters: 300,
            j_t_tol: 0.0,
            delta_j_tol: 0.0,
            check_monotonicity: false,
            ..Default::default()
        }
        .with_minimal_c(4, 100.0);
        let h = run(&base, &cfg)?;
        Ok((h.last().unwrap().avoid_population, violations(&h)))
    };
    match (final_avoid(0.0), final_avoid(20.0)) {
        (Ok((p0, v0)), Ok((p1, v1))) => Outcome::new(
            p1 * 2.0 <= p0,
            format!(
                "avoided population {p0:.3e} without penalty, {p1:.3e} with lambda_b = 20 (ratio {:.2}); {v0}/{v1} increases",
                p0 / p1
            ),
        ),
        (Err(e), _) | (_, Err(e)) => Outcome::new(false, e),
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let secs = Duration::from_secs;
    let mut j_li = None;
    let mut failed = 0;
    let mut check = |n: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) {
            failed += report(n, name, limit, f) as usize;
        }
    };

    check(1, "named class table", secs(1), &mut table_reproduction);
    check(2, "local invariance", secs(10), &mut invariance_suite);
    check(3, "polynomial functional and gradient", secs(120), &mut oracle_equivalence);
    // criterion 6 is judged against the result of 4
    if wanted(4) || wanted(6) {
        failed += report(4, "spin-spin CNOT class", secs(600), &mut || spinspin_class(&mut j_li)) as usize;
    }
    let mut check = |n: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) {
            failed += report(n, name, limit, f) as usize;
        }
    };
    check(5, "direct CNOT stays poor", secs(600), &mut direct_failure);
    check(6, "diagonal CNOT representative", secs(600), &mut || diagonal_direct(j_li));
    check(7, "local factor extraction", secs(30), &mut local_factors);
    check(8, "Rydberg internal-level phase gate", secs(1800), &mut rydberg_gate);
    check(9, "propagator cross-validation", secs(60), &mut propagators);
    check(10, "decay with avoidance penalty", secs(1800), &mut decay_avoidance);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

/// Prints the line for one criterion and returns whether it failed.
fn report(n: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {n:>2}: {} {name}: {}; {:.1} s (limit {} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    !pass
}
