use std::collections::BTreeSet;

use proptest::prelude::*;
use stgnn_core::data::{assemble_dataset, build_input, NormStats, Profiles, Sample};
use stgnn_core::graph::{
    build_dual, Directionality, DualGraph, Link, PrimalGraph, StaticAttrs, NUM_STATIC,
};
use stgnn_core::synth::{
    demand_shape, gen_network, gen_traffic, select_sensors, upstream_factor, SpeedCurve,
    SynthConfig, TrafficMode,
};
use stgnn_core::Error;

fn two_way(rows: usize, cols: usize) -> SynthConfig {
    SynthConfig {
        rows,
        cols,
        one_way_prob: 0.0,
        ..Default::default()
    }
}

fn network(cfg: &SynthConfig, seed: u64) -> DualGraph {
    let primal = gen_network(cfg, seed).unwrap();
    let mut dual = build_dual(&primal).unwrap();
    select_sensors(&mut dual, cfg.sensor_fraction, seed);
    dual
}

#[test]
fn grid_counts() {
    let primal = gen_network(&two_way(5, 5), 1).unwrap();
    assert_eq!(primal.intersections().len(), 25);
    assert_eq!(primal.links().len(), 2 * 5 * 4);
    assert_eq!(build_dual(&primal).unwrap().num_nodes(), 80);

    let single = gen_network(&two_way(1, 1), 1).unwrap();
    assert_eq!(single.intersections().len(), 1);
    assert!(single.links().is_empty());

    for (r, c) in [(0, 5), (5, 0)] {
        assert!(matches!(
            gen_network(&two_way(r, c), 1),
            Err(Error::Config(_))
        ));
    }
}

#[test]
fn every_turn_except_u_turns() {
    let cfg = SynthConfig {
        one_way_prob: 0.4,
        ..two_way(4, 6)
    };
    let primal = gen_network(&cfg, 3).unwrap();
    assert!(primal.maneuvers().is_empty());
    let dual = build_dual(&primal).unwrap();
    let mut expected = 0;
    for (_, (incoming, outgoing)) in primal.incidence() {
        for a in &incoming {
            expected += outgoing.iter().filter(|b| b.link != a.link).count();
        }
    }
    assert_eq!(dual.edges().len(), expected);
    let one_way = primal
        .links()
        .iter()
        .filter(|l| l.direction == Directionality::OneWay)
        .count();
    assert!(one_way > 0 && one_way < primal.links().len());
}

#[test]
fn attributes_follow_functional_class() {
    let primal = gen_network(&two_way(8, 8), 11).unwrap();
    for l in primal.links() {
        l.attrs.validate().unwrap();
        let limit = [90, 70, 50, 50, 30][l.attrs.functional_class as usize - 1];
        assert_eq!(l.attrs.speed_limit, limit);
        assert!(l.attrs.free_flow_speed <= limit as f64);
        let max_lanes = [4, 4, 3, 2, 2][l.attrs.functional_class as usize - 1];
        assert!(l.attrs.lanes <= max_lanes);
    }
}

#[test]
fn generation_is_deterministic() {
    let cfg = SynthConfig {
        speed_noise: 2.0,
        volume_noise: 0.05,
        missing_rate: 0.1,
        ..Default::default()
    };
    let a = network(&cfg, 9);
    let b = network(&cfg, 9);
    assert_eq!(a, b);
    let ta = gen_traffic(&cfg, &a, 9).unwrap();
    let tb = gen_traffic(&cfg, &b, 9).unwrap();
    assert_eq!(ta.speeds.to_csv("s"), tb.speeds.to_csv("s"));
    assert_eq!(ta.observed.to_csv("h"), tb.observed.to_csv("h"));
    let tc = gen_traffic(&cfg, &a, 10).unwrap();
    assert_ne!(ta.speeds, tc.speeds);
}

#[test]
fn curve_closed_forms() {
    for threshold in [0.0, 0.3, 0.6] {
        let c = SpeedCurve {
            alpha: 1.0,
            beta: 1.0,
            threshold,
        };
        assert!((c.speed(60.0, 1.0) - 30.0).abs() < 1e-12);
        assert_eq!(c.speed(60.0, 0.0), 60.0);
        assert_eq!(c.speed(60.0, threshold), 60.0);
    }
    let c = SpeedCurve {
        alpha: 0.8,
        beta: 2.5,
        threshold: 0.4,
    };
    for x in [0.45, 0.7, 1.0] {
        let v = c.speed(50.0, x);
        assert!((c.utilisation(50.0, v).unwrap() - x).abs() < 1e-12);
    }
    assert_eq!(c.utilisation(50.0, 50.0), None);
}

#[test]
fn zero_demand_gives_free_flow() {
    let cfg = SynthConfig {
        class_utilization: [0.0; 5],
        ..Default::default()
    };
    let dual = network(&cfg, 2);
    let t = gen_traffic(&cfg, &dual, 2).unwrap();
    for ((v, _), p) in t.speeds.iter() {
        assert!(p
            .unwrap()
            .iter()
            .all(|&s| s == dual.node(v).attrs.free_flow_speed));
    }
    for (_, q) in t.truth.iter() {
        assert!(q.unwrap().iter().all(|&q| q == 0.0));
    }
}

#[test]
fn noiseless_speeds_determine_volumes_without_threshold() {
    let cfg = SynthConfig {
        free_flow_threshold: 0.0,
        ..Default::default()
    };
    let dual = network(&cfg, 4);
    let t = gen_traffic(&cfg, &dual, 4).unwrap();
    let curve = SpeedCurve::from_config(&cfg);
    let per_hour = cfg.steps / cfg.horizon;
    for ((v, day), q) in t.truth.iter() {
        let a = dual.node(v).attrs;
        let cap = cfg.capacity_per_lane * a.lanes as f64;
        let speeds = t.speeds.get(v, day).unwrap();
        for (h, &q) in q.unwrap().iter().enumerate() {
            let x: f64 = speeds[h * per_hour..(h + 1) * per_hour]
                .iter()
                .map(|&s| curve.utilisation(a.free_flow_speed, s).unwrap())
                .sum::<f64>()
                / per_hour as f64;
            assert!(
                (cap * x - q).abs() < 1e-8 * q.max(1.0),
                "node {v} day {day} hour {h}"
            );
        }
    }
}

#[test]
fn flipping_a_one_way_street_moves_volume() {
    let cfg = SynthConfig {
        one_way_prob: 1.0,
        ..Default::default()
    };
    let primal = gen_network(&cfg, 5).unwrap();
    let dual = build_dual(&primal).unwrap();
    let truth = gen_traffic(&cfg, &dual, 5).unwrap().truth;
    let mut flipped_any = false;
    for k in 0..primal.links().len() {
        let mut links = primal.links().to_vec();
        let l = &mut links[k];
        std::mem::swap(&mut l.from, &mut l.to);
        let flipped = PrimalGraph::new(primal.intersections().to_vec(), links, Vec::new()).unwrap();
        let fdual = build_dual(&flipped).unwrap();
        let ftruth = gen_traffic(&cfg, &fdual, 5).unwrap().truth;
        let changed = (0..dual.num_nodes())
            .filter(|&v| v != k)
            .any(|v| (0..7).any(|d| truth.get(v, d) != ftruth.get(v, d)));
        flipped_any |= changed;
        if changed {
            break;
        }
    }
    assert!(flipped_any);
}

#[test]
fn only_sensors_reveal_volumes() {
    let cfg = SynthConfig {
        speed_noise: 3.0,
        missing_rate: 0.2,
        ..Default::default()
    };
    let dual = network(&cfg, 6);
    let t = gen_traffic(&cfg, &dual, 6).unwrap();
    let sensors: BTreeSet<usize> = dual.labeled().into_iter().collect();
    assert_eq!(
        sensors.len(),
        (0.3f64 * dual.num_nodes() as f64).round() as usize
    );
    assert_eq!(t.observed.nodes(), sensors);
    assert_eq!(t.speeds.nodes().len(), dual.num_nodes());
    let missing = t.observed.iter().filter(|(_, p)| p.is_none()).count();
    assert!(missing > 0 && missing < t.observed.len());
    for ((v, _), p) in t.speeds.iter() {
        let ffs = dual.node(v).attrs.free_flow_speed;
        assert!(p
            .unwrap()
            .iter()
            .all(|&s| s > 0.0 && s <= ffs + 3.0 * cfg.speed_noise));
    }
    for (_, q) in t.truth.iter() {
        assert!(q.unwrap().iter().all(|&q| q >= 0.0));
    }
}

#[test]
fn raw_mode_days() {
    let cfg = SynthConfig {
        mode: TrafficMode::Raw,
        weeks: 2,
        ..Default::default()
    };
    let dual = network(&cfg, 8);
    let t = gen_traffic(&cfg, &dual, 8).unwrap();
    assert_eq!(t.speeds.days().len(), 14);
    // Same weekday, different days: jitter makes them differ.
    let v = dual.labeled()[0];
    assert_ne!(t.truth.get(v, 1), t.truth.get(v, 8));
}

#[test]
fn demand_shape_is_bounded_and_peaked() {
    for class in 1..=5 {
        for w in 0..7 {
            for h in 0..96 {
                let d = demand_shape(class, w, h as f64 / 4.0);
                assert!((0.0..=1.0).contains(&d));
            }
        }
        assert!(demand_shape(class, 1, 8.0) > demand_shape(class, 1, 3.0));
    }
}

#[test]
fn upstream_factor_reads_predecessors() {
    let dual = network(&two_way(3, 3), 1);
    for v in 0..dual.num_nodes() {
        let f = upstream_factor(&dual, v, 0.3);
        assert!((0.3 + 0.7 * 0.25..=1.0).contains(&f));
    }
}

#[test]
fn samples_per_sensor_and_day() {
    let cfg = two_way(5, 5);
    let mut dual = network(&cfg, 1);
    for v in 0..dual.num_nodes() {
        dual.set_sensor(v, v < 10);
    }
    let t = gen_traffic(&cfg, &dual, 1).unwrap();
    let days: Vec<usize> = (0..7).collect();
    let samples = assemble_dataset(&dual, &t.observed, 2, &days).unwrap();
    assert_eq!(samples.len(), 70);
    for s in &samples {
        assert_eq!(s.subgraph.nodes[s.subgraph.target], s.target);
        assert_eq!(Some(s.volume.as_slice()), t.observed.get(s.target, s.day));
    }

    let mut volumes = t.observed.clone();
    volumes.insert_missing(3, 4);
    volumes.insert_missing(7, 0);
    assert_eq!(
        assemble_dataset(&dual, &volumes, 2, &days).unwrap().len(),
        68
    );

    for v in 0..dual.num_nodes() {
        dual.set_sensor(v, false);
    }
    assert!(assemble_dataset(&dual, &volumes, 2, &days).is_err());
}

fn fitted(seed: u64) -> (DualGraph, Profiles, Vec<Sample>, NormStats) {
    let cfg = SynthConfig {
        speed_noise: 1.0,
        ..Default::default()
    };
    let dual = network(&cfg, seed);
    let t = gen_traffic(&cfg, &dual, seed).unwrap();
    let samples = assemble_dataset(&dual, &t.observed, 2, &(0..7).collect::<Vec<_>>()).unwrap();
    let norm = NormStats::fit(&dual, &t.speeds, &samples).unwrap();
    (dual, t.speeds, samples, norm)
}

#[test]
fn input_layout() {
    let (dual, speeds, samples, norm) = fitted(3);
    let s = &samples[5];
    let x = build_input(&dual, &speeds, &s.subgraph, s.day, &norm).unwrap();
    assert_eq!(x.nodes(), s.subgraph.len());
    assert_eq!(x.speed.dims2(), (s.subgraph.len() * 96, 10));
    let raw = speeds.get(s.subgraph.nodes[1], s.day).unwrap();
    assert!((norm.denormalize_speed(x.speed.get2(96 + 7, 0)) - raw[7]).abs() < 1e-12);
    assert_eq!(x.speed.get2(0, 3 + s.day % 7), 1.0);
}

#[test]
fn constant_column_normalizes_to_zero() {
    let attrs = StaticAttrs {
        speed_limit: 50,
        lanes: 2,
        length: 200.0,
        free_flow_speed: 45.0,
        curvature: 0.0,
        slope_percent: 1.0,
        functional_class: 3,
    };
    let links = (0..3u64)
        .map(|i| Link {
            id: i,
            from: i,
            to: i + 1,
            direction: Directionality::TwoWay,
            attrs: StaticAttrs {
                lanes: 1 + i as u32,
                ..attrs
            },
        })
        .collect();
    let primal = PrimalGraph::new((0..4).collect(), links, Vec::new()).unwrap();
    let mut dual = build_dual(&primal).unwrap();
    for v in 0..dual.num_nodes() {
        dual.set_sensor(v, true);
    }
    let cfg = SynthConfig::default();
    let t = gen_traffic(&cfg, &dual, 1).unwrap();
    let samples = assemble_dataset(&dual, &t.observed, 1, &[0, 1]).unwrap();
    let norm = NormStats::fit(&dual, &t.speeds, &samples).unwrap();
    let z = norm.normalize_statics(&dual.node(0).attrs.to_features());
    for j in [0, 2, 3, 4, 5, 6] {
        assert_eq!(z[j], 0.0);
        assert_eq!(norm.static_std[j], 1.0);
    }
    assert!(z[1] != 0.0);
}

#[test]
fn stats_ignore_non_training_volumes() {
    let (dual, speeds, samples, norm) = fitted(12);
    let (train, held): (Vec<Sample>, Vec<Sample>) =
        samples.iter().cloned().partition(|s| s.target % 3 != 0);
    let a = NormStats::fit(&dual, &speeds, &train).unwrap();
    assert_ne!(a, norm);
    let mut replaced = held.clone();
    for s in &mut replaced {
        s.volume.iter_mut().for_each(|q| *q = *q * 7.0 + 100.0);
    }
    let mut combined = train.clone();
    combined.extend(replaced);
    let train_again: Vec<Sample> = combined.into_iter().filter(|s| s.target % 3 != 0).collect();
    assert_eq!(NormStats::fit(&dual, &speeds, &train_again).unwrap(), a);
}

#[test]
fn profile_csv_round_trip_of_generated_data() {
    let cfg = SynthConfig {
        speed_noise: 2.5,
        missing_rate: 0.3,
        ..Default::default()
    };
    let dual = network(&cfg, 21);
    let t = gen_traffic(&cfg, &dual, 21).unwrap();
    let s = Profiles::parse_csv("s", &t.speeds.to_csv("s"), 96).unwrap();
    assert_eq!(s, t.speeds);
    let q = Profiles::parse_csv("q", &t.observed.to_csv("h"), 24).unwrap();
    assert_eq!(q, t.observed);
}

#[test]
fn config_round_trip() {
    let cfg = SynthConfig {
        mode: TrafficMode::Raw,
        free_flow_threshold: 0.85,
        class_utilization: [0.9, 0.8, 0.7, 0.6, 0.5],
        ..Default::default()
    };
    let mut kv = stgnn_core::config::KeyValues::new();
    cfg.to_kv(&mut kv);
    assert_eq!(SynthConfig::from_kv(&kv).unwrap(), cfg);
    kv.set("synth.horizon", 25);
    assert!(matches!(SynthConfig::from_kv(&kv), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_round_trip(
        feats in prop::array::uniform7(-1e4f64..1e4),
        mean in prop::array::uniform7(-100f64..100.0),
        std in prop::array::uniform7(0.01f64..500.0),
        speed in 0.0f64..150.0,
        q in 0.0f64..5000.0,
    ) {
        let norm = NormStats {
            static_mean: mean,
            static_std: std,
            speed_mean: 40.0,
            speed_std: 13.0,
            volume_std: 321.0,
        };
        let back = norm.denormalize_statics(&norm.normalize_statics(&feats));
        for j in 0..NUM_STATIC {
            prop_assert!((back[j] - feats[j]).abs() <= 1e-12 * feats[j].abs().max(1.0));
        }
        prop_assert!((norm.denormalize_speed(norm.normalize_speed(speed)) - speed).abs() <= 1e-12 * speed.max(1.0));
        prop_assert!((norm.unscale_volume(norm.scale_volume(q)) - q).abs() <= 1e-12 * q.max(1.0));
    }
}
