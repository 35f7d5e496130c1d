use hmflow::analytic::{Bubble, BubbleSpec, Orientation, PerturbedMap, RationalMapSpec, TangentPerturbation};
use hmflow::diagnostics::{outer_energy_scale_from, RadialEnergyTable};
use hmflow::energetics::{degree_from_pullback, energy_density, region_energy, round_degree, Density};
use hmflow::field::{sample_field, MapField};
use hmflow::flow::{run, FlowConfig};
use hmflow::geometry::{ChartId, Region, SpherePoint};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn perturbed_power(k: usize, amplitude: f64, seed: u64) -> MapField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = PerturbedMap {
        base: RationalMapSpec::power(k),
        perturbation: TangentPerturbation::random(&mut rng),
        amplitude,
    };
    sample_field(&map, 65, 1.2).unwrap().synced()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_gap_and_exact_split(k in 1usize..3, amplitude in 0.0f64..0.5, seed in any::<u64>()) {
        let f = perturbed_power(k, amplitude, seed);
        let d = energy_density(&f);
        for chart in [ChartId::North, ChartId::South] {
            let (e, a, b) = (d.values(Density::Total, chart), d.values(Density::Holo, chart), d.values(Density::Anti, chart));
            for idx in 0..e.len() {
                prop_assert!(a[idx] >= 0.0 && b[idx] >= 0.0);
                prop_assert_eq!(e[idx], a[idx] + b[idx]);
            }
        }
        let energy = region_energy(&d, &Region::WholeSphere, Density::Total);
        let deg = degree_from_pullback(&f);
        prop_assert!(energy >= 4.0 * PI * deg.abs() - 0.01 * energy, "E = {energy}, deg = {deg}");
    }

    #[test]
    fn outer_scale_is_antitone_in_epsilon(lambda in 0.05f64..0.25, eps in 1.0f64..6.0, bump in 0.0f64..3.0) {
        let (zero, one) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        let map = BubbleSpec::new(
            RationalMapSpec::identity(),
            vec![Bubble {
                attach: zero,
                scale: lambda,
                map: RationalMapSpec::new(vec![one], vec![zero, one], Orientation::Antiholomorphic).unwrap(),
            }],
            2.0,
        )
        .unwrap();
        let f = sample_field(&map, 129, 1.2).unwrap().synced();
        let table = RadialEnergyTable::new(&energy_density(&f), SpherePoint::NORTH_POLE);
        let lo = outer_energy_scale_from(&table, eps, 0.5).unwrap().lambda;
        let hi = outer_energy_scale_from(&table, eps + bump, 0.5).unwrap().lambda;
        prop_assert!(hi <= lo, "{hi} > {lo}");
    }
}

#[test]
fn flow_keeps_unit_norm_and_degree() {
    for (k, seed) in [(1, 3u64), (2, 8)] {
        let f = perturbed_power(k, 0.3, seed);
        let cfg = FlowConfig {
            t_max: 0.05,
            record_every: 10,
            snapshot_every: 0.01,
            ..FlowConfig::default()
        };
        let trace = run(&f, &cfg).unwrap();
        assert!(trace.snapshots.len() >= 5);
        for s in &trace.snapshots {
            assert!(s.field.max_norm_deviation() <= 1e-12);
            assert_eq!(round_degree(degree_from_pullback(&s.field)), k as i64, "t = {}", s.t);
        }
        for w in trace.rows.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-10);
        }
    }
}
