use hmpc_core::scenario::{spiral_scenario, with_overrides, ScenarioFile};
use hmpc_core::sim::{quantile, summarize};
use hmpc_core::trajectory::{plan_reference, Waypoint};
use hmpc_core::so3;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_reference_stays_within_task_limits(
        steps in prop::collection::vec(prop::array::uniform3(-0.2..0.2f64), 1..5),
        v_max in 0.02..0.5f64,
        a_max in 0.02..0.5f64,
    ) {
        let mut points = vec![Vector3::zeros()];
        for s in &steps {
            let next = points.last().unwrap() + Vector3::from(*s);
            prop_assume!((next - points.last().unwrap()).norm() > 1e-3);
            points.push(next);
        }
        let mut waypoints: Vec<Waypoint> = points.iter().copied().map(Waypoint::at).collect();
        let last = waypoints.len() - 1;
        waypoints[0] = Waypoint::posed(points[0], Matrix3::identity());
        waypoints[last] = Waypoint::posed(points[last], so3::exp(&Vector3::new(0.0, 0.0, 0.5)));
        let r = plan_reference(&waypoints, v_max, a_max, 0.01).unwrap();
        for s in &r.samples {
            prop_assert!(s.state.pd.norm() <= v_max * (1.0 + 1e-6));
            prop_assert!((s.state.o.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!((r.samples[0].state.p - points[0]).norm() < 1e-12);
        prop_assert!((r.samples.last().unwrap().state.p - points.last().unwrap()).norm() < 1e-9);
        // Uniform grid, closed by a final sample at the exact duration.
        let n = r.samples.len();
        for (k, s) in r.samples[..n - 1].iter().enumerate() {
            prop_assert_eq!(s.t, k as f64 * 0.01);
        }
        let gap = r.samples[n - 1].t - r.samples[n - 2].t;
        prop_assert!(gap > 0.0 && gap <= 0.01 + 1e-12);
    }

    #[test]
    fn scenario_files_round_trip(
        seed in any::<u64>(),
        hold in 0.0..5.0f64,
        position in 1.0..1e4f64,
        gain in 0.0..1.0f64,
        high in 1usize..20,
    ) {
        let mut file = spiral_scenario("B").unwrap();
        file.seed = seed;
        file.hold = hold;
        file.weights.position = position;
        file.weights.secondary_gain = gain;
        file.horizons.high = high;
        file.horizons.low = high;
        let back = ScenarioFile::parse(&file.to_toml()).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert!(back.to_scenario().is_ok());
    }

    #[test]
    fn overrides_set_exactly_the_named_key(value in 1usize..50) {
        let file = spiral_scenario("A").unwrap();
        let changed = with_overrides(&file, &[("horizons.n".into(), value.to_string())]).unwrap();
        let mut expected = file.clone();
        expected.horizons.n = value;
        prop_assert_eq!(changed, expected);
    }

    #[test]
    fn box_statistics_are_ordered(data in prop::collection::vec(0.0..10.0f64, 1..200)) {
        let s = summarize(&data).unwrap();
        let min = data.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min <= s.whisker_low && s.whisker_low <= s.q1);
        prop_assert!(s.q1 <= s.median && s.median <= s.q3);
        prop_assert!(s.q3 <= s.whisker_high && s.whisker_high <= s.max);
        prop_assert!(s.outliers < data.len());
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(quantile(&sorted, 0.0), min);
    }
}
