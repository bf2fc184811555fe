use hmpc_core::chain::{self, ChainModel};
use hmpc_core::controllers::POSITION_PRIORITY;
use hmpc_core::morphology::{builtin_morphologies, load_chain, planar_arm, serialize_chain};
use hmpc_core::oracles::{fd_hessian_tensor, fd_jacobian, fd_jacobian_dot, FD_HESSIAN_STEP, FD_STEP};
use hmpc_core::so3;
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

fn chains() -> Vec<ChainModel> {
    let mut c = builtin_morphologies();
    c.push(planar_arm());
    c
}

/// Configuration from unit-interval samples, spread over 90% of each range.
fn configuration(chain: &ChainModel, unit: &[f64]) -> DVector<f64> {
    let lim = chain.limits();
    DVector::from_fn(chain.dof(), |i, _| {
        let mid = 0.5 * (lim.q_lower[i] + lim.q_upper[i]);
        mid + 0.9 * (unit[i] - 0.5) * (lim.q_upper[i] - lim.q_lower[i])
    })
}

fn rel(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_jacobian_matches_differences(which in 0usize..6, unit in prop::collection::vec(0.0..1.0f64, 6)) {
        let chain = &chains()[which];
        let q = configuration(chain, &unit);
        let j = chain::jacobian(chain, &q).unwrap();
        prop_assert!(rel(&j, &fd_jacobian(chain, &q, FD_STEP).unwrap()) <= 1e-6);
    }

    #[test]
    fn jacobian_rate_matches_differences(
        which in 0usize..6,
        unit in prop::collection::vec(0.0..1.0f64, 6),
        rate in prop::collection::vec(-2.0..2.0f64, 6),
    ) {
        let chain = &chains()[which];
        let q = configuration(chain, &unit);
        let qd = DVector::from_fn(chain.dof(), |i, _| rate[i]);
        let jd = chain::jacobian_dot(chain, &q, &qd).unwrap();
        prop_assert!(rel(&jd, &fd_jacobian_dot(chain, &q, &qd, FD_STEP).unwrap()) <= 1e-5);
    }

    #[test]
    fn hessian_contraction_is_directional_derivative(
        which in 0usize..6,
        unit in prop::collection::vec(0.0..1.0f64, 6),
        dir in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let chain = &chains()[which];
        let q = configuration(chain, &unit);
        let d = DVector::from_fn(chain.dof(), |i, _| dir[i]);
        let h = fd_hessian_tensor(chain, &q, FD_HESSIAN_STEP).unwrap();
        // Jdot along qd = d is the directional derivative of J along d.
        let jd = chain::jacobian_dot(chain, &q, &d).unwrap();
        prop_assert!((h.contract(&d) - jd).amax() <= 1e-6);
    }

    #[test]
    fn tool_orientation_is_canonical_unit_quaternion(which in 0usize..6, unit in prop::collection::vec(0.0..1.0f64, 6)) {
        let chain = &chains()[which];
        let q = configuration(chain, &unit);
        let x = chain::end_effector_state(chain, &chain::JointState::at_rest(q.clone())).unwrap();
        prop_assert!((x.o.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(x.o[0] >= 0.0);
        let (_, r) = chain::forward_kinematics(chain, &q).unwrap();
        prop_assert!((x.rotation() - r).amax() <= 1e-12);
    }

    #[test]
    fn exp_log_round_trip(v in prop::array::uniform3(-1.7..1.7f64)) {
        let v = Vector3::from(v);
        prop_assume!(v.norm() < 3.1);
        let r = so3::exp(&v);
        prop_assert!(so3::is_rotation(&r, 1e-12));
        prop_assert!((so3::log(&r) - v).amax() <= 1e-12);
    }
}

#[test]
fn builtin_chain_files_round_trip() {
    for chain in chains() {
        let text = serialize_chain(&chain);
        let back = load_chain(&text).unwrap();
        assert_eq!(back, chain, "{}", chain.name);
        assert_eq!(serialize_chain(&back), text);
    }
}

#[test]
fn priority_selector_leaves_redundancy_on_every_builtin() {
    let priority = POSITION_PRIORITY.iter().filter(|&&p| p).count();
    assert_eq!(priority, 3);
    for chain in builtin_morphologies() {
        assert!(priority < chain.dof(), "{} has {} joints", chain.name, chain.dof());
    }
}

#[test]
fn builtin_axis_layouts_are_distinct() {
    let chains = builtin_morphologies();
    let fingerprint = |c: &ChainModel| {
        c.modules
            .iter()
            .map(|m| format!("{:.3},{:.3},{:.3}", m.axis.x, m.axis.y, m.axis.z))
            .chain(std::iter::once(format!("{:?}", c.modules.iter().map(|m| m.parent_transform.translation).collect::<Vec<_>>())))
            .collect::<Vec<_>>()
            .join(";")
    };
    for (i, a) in chains.iter().enumerate() {
        for b in &chains[i + 1..] {
            assert_ne!(fingerprint(a), fingerprint(b), "{} and {}", a.name, b.name);
        }
    }
}
