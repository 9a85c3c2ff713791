//! Closed-loop and pipeline properties on the benchmark problem: trajectory
//! self-consistency, dataset invariants (targets recompute exactly, states
//! and inputs feasible at the stated tolerances), and controller feasibility.

mod common;

use common::{benchmark_cost, benchmark_system, benchmark_u, benchmark_x, origin_target};
use nalgebra::{DVector, dvector};
use rand::rngs::StdRng;
use rand::SeedableRng;

use neurodp::{
    backward_reach_sequence, generate_value_dataset, sequential_dp_train, simulate_closed_loop,
    value_controller_step, Controller, CostToGo, FwConfig, HorizonSets, TrainConfig,
};

fn benchmark_sets() -> HorizonSets {
    backward_reach_sequence(&benchmark_system(), &benchmark_x(), &benchmark_u(), &origin_target(), 6)
        .unwrap()
}

#[test]
fn exact_trajectory_is_self_consistent() {
    let sys = benchmark_system();
    let cost = benchmark_cost();
    let sets = benchmark_sets();
    let ctrl = Controller::ExactMpc { gap_tol: 1e-8 };
    let traj = simulate_closed_loop(&ctrl, &sys, &cost, &sets, &dvector![6.75, 9.0], 8).unwrap();

    // Re-simulating the recorded inputs reproduces the states bit-exactly.
    let mut x = traj.states[0].clone();
    for (k, u) in traj.inputs.iter().enumerate() {
        x = sys.step(&x, u);
        for (a, b) in x.iter().zip(traj.states[k + 1].iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "state {k} differs on re-simulation");
        }
    }
    let total: f64 = traj.stage_costs.iter().sum::<f64>() + cost.terminal(traj.states.last().unwrap());
    assert_eq!(total.to_bits(), traj.total_cost.to_bits());

    // The terminal set {0} forces the plan to the origin within the horizon,
    // so the closed loop contracts hard.
    let initial = traj.states[0].norm();
    let last = traj.states.last().unwrap().norm();
    assert!(last <= 0.1 * initial, "final norm {last} vs initial {initial}");
}

#[test]
fn value_dataset_invariants() {
    let sys = benchmark_system();
    let cost = benchmark_cost();
    let sets = benchmark_sets();
    let fw = FwConfig::default();
    let stage = 4;

    let mut rng = StdRng::seed_from_u64(11);
    let data = generate_value_dataset(
        stage,
        CostToGo::Terminal(&cost),
        &sets,
        &sys,
        &cost,
        &fw,
        60,
        &mut rng,
    )
    .unwrap();

    for (x, t) in data.inputs().iter().zip(data.targets()) {
        // Training states lie in their stage set.
        assert!(sets.stage_set(stage).contains(x, 1e-12).unwrap());
        // The recorded target recomputes exactly from the deterministic solve.
        let u = value_controller_step(
            x,
            CostToGo::Terminal(&cost),
            &cost,
            &sys,
            sets.stage_set(stage + 1),
            sets.u_set(),
            &fw,
            None,
        )
        .unwrap();
        let next = sys.step(x, &u);
        let beta = cost.stage(x, &u) + cost.terminal(&next);
        assert!((beta - t[0]).abs() <= 1e-12, "target mismatch: {beta} vs {}", t[0]);
        // Generated inputs respect both constraint layers.
        assert!(sets.u_set().contains(&u, 1e-8).unwrap());
        assert!(sets.stage_set(stage + 1).contains(&next, 1e-8).unwrap());
    }
}

#[test]
fn controllers_emit_feasible_inputs_closed_loop() {
    // Small training budget: feasibility must hold regardless of quality.
    let sys = benchmark_system();
    let cost = benchmark_cost();
    let sets = benchmark_sets();
    let fw = FwConfig::default();
    let train = TrainConfig { max_epochs: 8, seed: 5, ..Default::default() };
    let (nets, _) = sequential_dp_train(&sets, &sys, &cost, &fw, &train, &[8], 40).unwrap();
    let vertices = sets.u_set().enumerate_vertices().unwrap();

    let mut rng = StdRng::seed_from_u64(77);
    let dataset = neurodp::generate_policy_dataset(
        &nets[0], &sets, &sys, &cost, &fw, &vertices, 40, &mut rng,
    )
    .unwrap();
    let mut sizes = vec![2usize, 8, vertices.len()];
    sizes[0] = 2;
    let (policy, _) = neurodp::fit_regression(
        &neurodp::MlpSpec::new(sizes, neurodp::OutputUnit::Softmax),
        &dataset,
        &TrainConfig { max_epochs: 8, seed: 6, ..Default::default() },
    )
    .unwrap();

    let controllers = [
        Controller::ExactMpc { gap_tol: 1e-8 },
        Controller::ValueFw { value_net: nets[0].clone(), cfg: fw.clone() },
        Controller::VertexPolicy { coeff_net: policy, vertices },
    ];
    for ctrl in &controllers {
        for x0 in [dvector![6.75, 9.0], dvector![-8.6, -7.1], DVector::zeros(2)] {
            let traj = simulate_closed_loop(ctrl, &sys, &cost, &sets, &x0, 6)
                .unwrap_or_else(|e| panic!("{} from {x0:?}: {e}", ctrl.name()));
            for u in &traj.inputs {
                assert!(
                    sets.u_set().contains(u, 1e-8).unwrap(),
                    "{} emitted infeasible input {u:?}",
                    ctrl.name()
                );
            }
            if matches!(ctrl, Controller::ValueFw { .. }) {
                for x in &traj.states[1..] {
                    assert!(sets.stage_set(1).contains(x, 1e-8).unwrap());
                }
            }
        }
    }
}

#[test]
fn value_controller_against_fine_polytope_grid() {
    // One-step objective with the exact terminal cost at the last stage: the
    // admissible set is the singleton {-Ax} (B = I, target {0}), so the
    // controller must return it regardless of iteration budget.
    let sys = benchmark_system();
    let cost = benchmark_cost();
    let sets = benchmark_sets();
    let mut rng = StdRng::seed_from_u64(123);
    let samples = sets.stage_set(5).sample_uniform(25, &mut rng).unwrap();
    for x in &samples {
        let u = value_controller_step(
            x,
            CostToGo::Terminal(&cost),
            &cost,
            &sys,
            sets.stage_set(6),
            sets.u_set(),
            &FwConfig::default(),
            None,
        )
        .unwrap();
        let forced = -(sys.a() * x);
        assert!((u - forced).norm() <= 1e-7, "singleton admissible set missed");
    }
}
