use deltashell_cli::config::{
    Backend, ConvergenceConfig, GeometryConfig, InteractionConfig, SchattenConfig, SolverConfig, StrengthConfig, VolumeConfig,
};
use deltashell_cli::{parse_config_str, Overrides, RunConfig, Task};
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = GeometryConfig> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|radius| GeometryConfig::Circle { radius }),
        (0.1f64..5.0, 0.1f64..5.0).prop_map(|(a, b)| GeometryConfig::Ellipse { a, b }),
        Just(GeometryConfig::Kite),
        (0.1f64..5.0).prop_map(|radius| GeometryConfig::Sphere { radius }),
    ]
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        geometry(),
        -20.0f64..20.0,
        prop::option::of(0.01f64..5.0),
        (4usize..256).prop_map(|h| 2 * h),
        1u32..=199,
        prop::option::of((-50.0f64..-1.0, 0.01f64..0.9)),
        1e-14f64..1e-2,
        prop::sample::subsequence(vec![Task::BoundStates, Task::Schatten, Task::Verify], 1..=3),
        (0.5f64..10.0, 2usize..100, 0.0f64..0.4),
        (-10.0f64..-0.01, prop::sample::subsequence(vec![1u32, 2, 3], 1..=3)),
        any::<u64>(),
    )
        .prop_map(|(g, alpha, beta, n, l_max, bracket, tol, tasks, (l, m, tube), (lambda, powers), seed)| {
            let sphere = matches!(g, GeometryConfig::Sphere { .. });
            let curved = matches!(g, GeometryConfig::Circle { .. }) || sphere;
            let interaction = match beta.filter(|_| curved) {
                Some(beta) => InteractionConfig::DeltaPrime { beta },
                None => InteractionConfig::Delta { alpha: StrengthConfig::Constant(alpha) },
            };
            RunConfig {
                geometry: g,
                interaction,
                solver: SolverConfig {
                    n,
                    l_max,
                    backend: if sphere { Backend::Modes } else { Backend::Auto },
                    bracket: bracket.map(|(lo, frac)| [lo, lo * frac]),
                    tol,
                },
                tasks,
                volume: VolumeConfig { half_width: l, m, tube: tube * l },
                schatten: SchattenConfig { lambda, powers },
                convergence: ConvergenceConfig::default(),
                output: format!("runs/{seed:x}").into(),
                seed,
            }
        })
}

proptest! {
    #[test]
    fn parse_of_emit_is_identity(c in config()) {
        c.validate().unwrap();
        let back = parse_config_str(&c.to_json(), &Overrides::default()).unwrap();
        prop_assert_eq!(back, c);
    }
}
