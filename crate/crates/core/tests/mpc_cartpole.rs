mod common;

use nalgebra::DVector;
use tubenet::experiment::{ControllerVariant, PlantKind};
use tubenet::mpc::{MpcConfig, MpcOutcome, MpcVariant, TrackingMpc};
use tubenet::plant::nominal_step;

use common::{context, design, short_config};

fn controller(variant: MpcVariant, t: f64) -> TrackingMpc {
    let t = nalgebra::DMatrix::identity(4, 4) * t;
    TrackingMpc::new(MpcConfig::from_synthesis(design(true), 20, t, variant)).unwrap()
}

fn optimal(outcome: MpcOutcome) -> tubenet::mpc::MpcSolution {
    match outcome {
        MpcOutcome::Optimal(sol) => sol,
        other => panic!("expected an optimal solution, got {}", other.tag()),
    }
}

#[test]
fn first_solve_is_feasible_and_consistent() {
    let mpc = controller(MpcVariant::Rt, 1e4);
    let x_r = DVector::from_column_slice(&[0.5, 0.0, 0.0, 0.0]);
    let x0 = DVector::zeros(4);
    let sol = optimal(mpc.solve(&x0, &x_r, false).unwrap());
    assert!(mpc.violation(&sol, &x0, None) <= 1e-7);
    assert!((mpc.cost_of(&sol, &x_r) - sol.cost).abs() <= 1e-6 * (1.0 + sol.cost));
    // The steady state moves toward the reference but the terminal set
    // limits how far in one horizon.
    assert!(sol.x_bar[0] > 0.0 && sol.x_bar[0] < 0.5);
}

#[test]
fn nominal_cost_decreases_without_disturbance() {
    let mpc = controller(MpcVariant::Rt, 1e4);
    let syn = design(true);
    let x_r = DVector::from_column_slice(&[0.5, 0.0, 0.0, 0.0]);
    let mut x = DVector::zeros(4);
    let mut prev = f64::INFINITY;
    for _ in 0..150 {
        let sol = optimal(mpc.solve(&x, &x_r, false).unwrap());
        assert!(sol.cost <= prev + 1e-6 * (1.0 + prev), "{} after {prev}", sol.cost);
        prev = sol.cost;
        x = nominal_step(&x, &sol.u_traj[0], &syn.spec.model);
    }
}

#[test]
fn free_initial_state_never_costs_more() {
    let pinned = controller(MpcVariant::Rt, 1e4);
    let free = controller(MpcVariant::Ert, 1e4);
    let x_r = DVector::from_column_slice(&[0.5, 0.0, 0.0, 0.0]);
    for x_hat in [
        DVector::from_column_slice(&[0.1, 0.05, 0.01, -0.02]),
        DVector::from_column_slice(&[-0.2, 0.0, -0.005, 0.03]),
        DVector::zeros(4),
    ] {
        let a = optimal(pinned.solve(&x_hat, &x_r, false).unwrap());
        let b = optimal(free.solve(&x_hat, &x_r, true).unwrap());
        assert!(b.cost <= a.cost + 1e-6 * (1.0 + a.cost));
        assert!(free.violation(&b, &x_hat, Some(&b.x_traj[0])) <= 1e-7);
    }
}

#[test]
fn far_initial_state_is_infeasible() {
    let mpc = controller(MpcVariant::Rt, 1e4);
    let x_r = DVector::from_column_slice(&[0.5, 0.0, 0.0, 0.0]);
    let x_hat = DVector::from_column_slice(&[0.0, 0.0, 0.29, 1.9]);
    assert!(matches!(
        mpc.solve(&x_hat, &x_r, false).unwrap(),
        MpcOutcome::Infeasible
    ));
}

#[test]
fn baseline_design_is_untightened() {
    let ctx = context(&short_config(PlantKind::Linear, 1), ControllerVariant::R);
    assert_eq!(ctx.synthesis.sets.x_c, ctx.synthesis.spec.x);
    assert!(ctx.synthesis.sets.z_k.offsets().iter().all(|h| *h == 0.0));
}
