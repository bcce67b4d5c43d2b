use rand::seq::SliceRandom;
use rand::Rng as _;

use super::config::SynthConfig;
use crate::error::Result;
use crate::graph::{Directionality, DualGraph, Link, PrimalGraph, StaticAttrs};
use crate::rng::substream;

/// Lane range and speed limit per functional class 1..5.
const CLASS_LANES: [(u32, u32); 5] = [(2, 4), (2, 4), (1, 3), (1, 2), (1, 2)];
const CLASS_SPEED: [u32; 5] = [90, 70, 50, 50, 30];

/// Grid of `rows × cols` intersections joined to their horizontal and
/// vertical neighbours by straight, flat links. Every grid line has one functional class; lanes
/// vary per link within the class range. Links are two-way unless drawn
/// one-way with `one_way_prob`, in a random orientation. The turn table is
/// empty, so every turn except a U-turn is permitted.
pub fn gen_network(cfg: &SynthConfig, seed: u64) -> Result<PrimalGraph> {
    cfg.validate()?;
    let (rows, cols) = (cfg.rows, cfg.cols);
    let id = |r: usize, c: usize| (r * cols + c) as u64;
    let intersections: Vec<u64> = (0..rows * cols).map(|i| i as u64).collect();
    let mut rng = substream(seed, "network", &[]);
    // Lines 0..rows are horizontal, rows..rows+cols vertical.
    let line_class: Vec<u8> = (0..rows + cols)
        .map(|_| {
            let r: f64 = rng.gen();
            match r {
                r if r < 0.15 => 1,
                r if r < 0.35 => 2,
                r if r < 0.60 => 3,
                r if r < 0.80 => 4,
                _ => 5,
            }
        })
        .collect();
    let mut links = Vec::new();
    let mut push = |from: u64, to: u64, class: u8, rng: &mut crate::rng::Rng| {
        let k = class as usize - 1;
        let (lo, hi) = CLASS_LANES[k];
        let speed_limit = CLASS_SPEED[k];
        let attrs = StaticAttrs {
            speed_limit,
            lanes: rng.gen_range(lo..=hi),
            length: cfg.spacing * rng.gen_range(0.7..1.3),
            free_flow_speed: speed_limit as f64 * rng.gen_range(0.75..0.95),
            curvature: 0.0,
            slope_percent: 0.0,
            functional_class: class,
        };
        let one_way = rng.gen_bool(cfg.one_way_prob);
        let (from, to) = if one_way && rng.gen_bool(0.5) {
            (to, from)
        } else {
            (from, to)
        };
        let id = links.len() as u64;
        links.push(Link {
            id,
            from,
            to,
            direction: if one_way {
                Directionality::OneWay
            } else {
                Directionality::TwoWay
            },
            attrs,
        });
    };
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            push(id(r, c), id(r, c + 1), line_class[r], &mut rng);
        }
    }
    for c in 0..cols {
        for r in 0..rows.saturating_sub(1) {
            push(id(r, c), id(r + 1, c), line_class[rows + c], &mut rng);
        }
    }
    if links.is_empty() {
        log::warn!("{rows}x{cols} grid has no links; the network is empty");
    }
    PrimalGraph::new(intersections, links, Vec::new())
}

/// Flags `round(fraction · |V|)` dual nodes (at least one) as sensors.
pub fn select_sensors(dual: &mut DualGraph, fraction: f64, seed: u64) -> Vec<usize> {
    let n = dual.num_nodes();
    if n == 0 {
        return Vec::new();
    }
    let count = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "sensors", &[]));
    let mut chosen: Vec<usize> = order[..count].to_vec();
    chosen.sort_unstable();
    for v in 0..n {
        dual.set_sensor(v, false);
    }
    for &v in &chosen {
        dual.set_sensor(v, true);
    }
    chosen
}
