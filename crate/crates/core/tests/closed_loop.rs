use hmpc_core::chain::{self, ChainModel};
use hmpc_core::controllers::{make_controller, ControllerKind};
use hmpc_core::morphology::builtin_morphology;
use hmpc_core::scenario::{builtin_scenario, extension_scenario, spiral_scenario, Scenario};
use hmpc_core::sim::{max_limit_excess, run_closed_loop, run_with_controller, summarize, ExecutionLog, LoopOptions};
use nalgebra::{DVector, Vector3};

fn scenario(name: &str) -> Scenario {
    builtin_scenario(name).unwrap().to_scenario().unwrap()
}

/// First `cycles` cycles of a scenario.
fn prefix(sc: &Scenario, kind: ControllerKind, cycles: usize) -> ExecutionLog {
    let reference = sc.reference().unwrap();
    let mut controller = make_controller(kind, sc.config.clone());
    let options = LoopOptions { cycles, seed: sc.seed, noise: sc.noise };
    let records = run_with_controller(&sc.chain, &sc.initial, &reference, controller.as_mut(), options).unwrap();
    ExecutionLog {
        scenario: sc.name.clone(),
        chain: sc.chain.name.clone(),
        controller: kind,
        dof: sc.chain.dof(),
        dt: reference.dt,
        records,
    }
}

/// Damped least-squares position IK, continued from `q`.
fn reach(chain: &ChainModel, target: &Vector3<f64>, mut q: DVector<f64>) -> (DVector<f64>, f64) {
    for _ in 0..400 {
        let (p, _) = chain::forward_kinematics(chain, &q).unwrap();
        let e = target - p;
        if e.norm() < 1e-10 {
            break;
        }
        let j = chain::jacobian(chain, &q).unwrap().rows(0, 3).into_owned();
        let jjt = &j * j.transpose() + nalgebra::Matrix3::identity() * 1e-6;
        q += j.transpose() * jjt.try_inverse().unwrap() * e;
    }
    let (p, _) = chain::forward_kinematics(chain, &q).unwrap();
    (q, (target - p).norm())
}

#[test]
fn six_joint_chain_reaches_every_spiral_waypoint() {
    let chain = builtin_morphology("E").unwrap();
    let file = spiral_scenario("E").unwrap();
    let lim = chain.limits();
    let mut q = DVector::from_column_slice(&file.initial_q);
    for (k, w) in file.waypoints.iter().enumerate() {
        let (next, err) = reach(&chain, &Vector3::from(*w), q);
        assert!(err < 1e-6, "waypoint {k}: residual {err:e}");
        for i in 0..chain.dof() {
            assert!(next[i] > lim.q_lower[i] && next[i] < lim.q_upper[i], "waypoint {k}: q[{i}] = {}", next[i]);
        }
        q = next;
    }
}

#[test]
fn spiral_start_is_the_home_tool_pose() {
    for c in ["A", "B", "C", "D", "E"] {
        let sc = scenario(&format!("spiral_{c}"));
        let reference = sc.reference().unwrap();
        let x0 = chain::end_effector_state(&sc.chain, &sc.initial).unwrap();
        assert!((reference.samples[0].state.p - x0.p).norm() < 1e-12);
        assert!(reference.duration() > 50.0);
    }
}

#[test]
fn all_controllers_respect_limits_on_the_six_joint_spiral() {
    let sc = scenario("spiral_E");
    for kind in ControllerKind::ALL {
        let log = prefix(&sc, kind, 800);
        assert_eq!(log.len(), 800);
        assert!(max_limit_excess(&log, &sc.chain.limits()) <= 1e-6, "{kind}");
        assert_eq!(log.soft_failures(), 0, "{kind}");
        let e: Vec<f64> = log.records.iter().map(|r| r.e_p.norm()).collect();
        assert!(summarize(&e).unwrap().median < 5e-3, "{kind} loses the path");
    }
}

#[test]
fn hierarchical_controller_tracks_position_closer_than_weighted_mpc() {
    let sc = scenario("spiral_E");
    let median = |kind| {
        let log = prefix(&sc, kind, 1500);
        summarize(&log.records.iter().map(|r| r.e_p.norm()).collect::<Vec<_>>()).unwrap().median
    };
    let (h, m) = (median(ControllerKind::Hmpc), median(ControllerKind::WeightedMpc));
    assert!(h < m, "hmpc {h:e} vs mpc {m:e}");
}

#[test]
fn full_extension_completes_with_bounded_inputs() {
    for c in ["A", "B", "C", "D", "E"] {
        let file = extension_scenario(c).unwrap();
        for kind in ControllerKind::ALL {
            let mut f = file.clone();
            f.controller = kind.as_str().into();
            let sc = f.to_scenario().unwrap();
            let log = run_closed_loop(&sc).unwrap();
            assert_eq!(log.len(), sc.cycles(&sc.reference().unwrap()));
            assert!(log.records.iter().all(|r| r.u.iter().all(|v| v.is_finite())), "{c} {kind}");
            assert!(max_limit_excess(&log, &sc.chain.limits()) <= 1e-6, "{c} {kind}");
        }
    }
}

#[test]
fn noisy_runs_repeat_exactly_for_a_seed() {
    let mut file = spiral_scenario("C").unwrap();
    file.noise = 1e-4;
    file.seed = 4;
    let sc = file.to_scenario().unwrap();
    let a = prefix(&sc, ControllerKind::Hmpc, 300);
    let b = prefix(&sc, ControllerKind::Hmpc, 300);
    let strip = |l: &ExecutionLog| l.records.iter().map(|r| (r.q.clone(), r.u.clone(), r.status)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    file.seed = 5;
    let c = prefix(&file.to_scenario().unwrap(), ControllerKind::Hmpc, 300);
    assert_ne!(strip(&a), strip(&c));
}
