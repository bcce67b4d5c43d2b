//! Literal reference implementations shared by the integration tests. All
//! of them read parameters by name and loop over scalars directly.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng as _;
use stgnn_core::diff::{ParamStore, Tensor, Var};
use stgnn_core::graph::{
    DirectedLink, Directionality, DualGraph, Link, Maneuver, PrimalGraph, StaticAttrs, Travel,
};
use stgnn_core::model::{GraphInput, ModelConfig};
use stgnn_core::nn::Ctx;
use stgnn_core::rng::{substream, Rng};

pub type Rows = Vec<Vec<f64>>;

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn to_rows(t: &Tensor) -> Rows {
    let (m, n) = t.dims2();
    (0..m)
        .map(|r| t.data()[r * n..(r + 1) * n].to_vec())
        .collect()
}

pub fn max_diff(t: &Tensor, o: &Rows) -> f64 {
    let (m, n) = t.dims2();
    assert_eq!(m, o.len(), "row count");
    let mut worst: f64 = 0.0;
    for (r, row) in o.iter().enumerate() {
        assert_eq!(row.len(), n, "column count");
        for (j, x) in row.iter().enumerate() {
            worst = worst.max((t.get2(r, j) - x).abs());
        }
    }
    worst
}

/// Random values for every `*.bias` so oracles exercise them too.
pub fn randomize_biases(store: &mut ParamStore, rng: &mut Rng) {
    let ids: Vec<_> = store
        .iter()
        .filter(|(_, n, _)| n.ends_with(".bias"))
        .map(|(id, _, _)| id)
        .collect();
    for id in ids {
        for x in store.get_mut(id).data_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
}

fn param<'a>(store: &'a ParamStore, name: &str) -> &'a Tensor {
    store.get(
        store
            .by_name(name)
            .unwrap_or_else(|| panic!("missing parameter {name}")),
    )
}

/// `h W + b` for one row using `{prefix}.weight` / `{prefix}.bias`.
pub fn affine(store: &ParamStore, prefix: &str, h: &[f64]) -> Vec<f64> {
    let w = param(store, &format!("{prefix}.weight"));
    let b = param(store, &format!("{prefix}.bias")).data();
    let (cin, cout) = w.dims2();
    assert_eq!(cin, h.len());
    (0..cout)
        .map(|j| b[j] + (0..cin).map(|i| h[i] * w.get2(i, j)).sum::<f64>())
        .collect()
}

fn softmax_aggregate(scores: &[f64], msgs: &[&[f64]]) -> Vec<f64> {
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
    let mut out = vec![0.0; msgs[0].len()];
    for (s, m) in scores.iter().zip(msgs) {
        let alpha = (s - mx).exp() / z;
        for (o, x) in out.iter_mut().zip(m.iter()) {
            *o += alpha * x;
        }
    }
    out
}

/// Direction-aware attention over a directed edge list `(u, v)` meaning
/// `u -> v`, self-loops implied. Parameters under `{prefix}.{in,out,self}`.
pub fn dgat_oracle(
    store: &ParamStore,
    prefix: &str,
    heads: usize,
    h: &Rows,
    edges: &[(usize, usize)],
) -> Rows {
    let n = h.len();
    let dirs = ["in", "out", "self"];
    let proj: Vec<Rows> = dirs
        .iter()
        .map(|d| {
            h.iter()
                .map(|row| affine(store, &format!("{prefix}.{d}.proj"), row))
                .collect()
        })
        .collect();
    let width = proj[0][0].len();
    let c = width / heads;
    let mut out = vec![vec![0.0; width]; n];
    for v in 0..n {
        let mut nbrs: Vec<(usize, usize)> = vec![(v, 2)];
        for &(a, b) in edges {
            if b == v {
                nbrs.push((a, 0));
            }
            if a == v {
                nbrs.push((b, 1));
            }
        }
        for hh in 0..heads {
            let cols = hh * c..(hh + 1) * c;
            let mut scores = Vec::new();
            let mut msgs = Vec::new();
            for &(u, k) in &nbrs {
                let a = param(store, &format!("{prefix}.{}.att", dirs[k]));
                let d = param(store, &format!("{prefix}.{}.emb", dirs[k])).data();
                let mut cat = Vec::new();
                cat.extend_from_slice(&proj[k][v][cols.clone()]);
                cat.extend_from_slice(&proj[k][u][cols.clone()]);
                cat.extend_from_slice(&d[cols.clone()]);
                let e: f64 = (0..3 * c).map(|j| a.get2(hh, j) * cat[j]).sum();
                scores.push(leaky(e));
                msgs.push(&proj[k][u][cols.clone()]);
            }
            let agg = softmax_aggregate(&scores, &msgs);
            out[v][cols].copy_from_slice(&agg);
        }
        out[v].iter_mut().for_each(|x| *x = leaky(*x));
    }
    out
}

/// Standard attention with an O(n²) symmetric adjacency matrix.
pub fn gat_oracle(
    store: &ParamStore,
    prefix: &str,
    heads: usize,
    h: &Rows,
    edges: &[(usize, usize)],
) -> Rows {
    let n = h.len();
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    for (v, row) in adj.iter_mut().enumerate() {
        row[v] = true;
    }
    let wh: Rows = h
        .iter()
        .map(|row| affine(store, &format!("{prefix}.proj"), row))
        .collect();
    let width = wh[0].len();
    let c = width / heads;
    let a = param(store, &format!("{prefix}.att"));
    let mut out = vec![vec![0.0; width]; n];
    for v in 0..n {
        for hh in 0..heads {
            let cols = hh * c..(hh + 1) * c;
            let nbrs: Vec<usize> = (0..n).filter(|&u| adj[v][u]).collect();
            let scores: Vec<f64> = nbrs
                .iter()
                .map(|&u| {
                    leaky(
                        (0..c)
                            .map(|j| {
                                a.get2(hh, j) * wh[v][hh * c + j]
                                    + a.get2(hh, c + j) * wh[u][hh * c + j]
                            })
                            .sum(),
                    )
                })
                .collect();
            let msgs: Vec<&[f64]> = nbrs.iter().map(|&u| &wh[u][cols.clone()]).collect();
            let agg = softmax_aggregate(&scores, &msgs);
            out[v][cols].copy_from_slice(&agg);
        }
        out[v].iter_mut().for_each(|x| *x = leaky(*x));
    }
    out
}

/// Direct summation of the zero-padded same-length convolution over rows
/// laid out `node·steps + t`, followed by ReLU when `relu` is set.
pub fn conv_oracle(store: &ParamStore, prefix: &str, x: &Rows, steps: usize, relu: bool) -> Rows {
    let k = param(store, &format!("{prefix}.kernel"));
    let b = param(store, &format!("{prefix}.bias")).data();
    let (p, cin, cout) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let kd = k.data();
    let half = (p / 2) as isize;
    let n = x.len() / steps;
    let mut out = vec![vec![0.0; cout]; x.len()];
    for v in 0..n {
        for t in 0..steps {
            for o in 0..cout {
                let mut acc = b[o];
                for j in 0..p {
                    let s = t as isize + j as isize - half;
                    if s < 0 || s >= steps as isize {
                        continue;
                    }
                    for i in 0..cin {
                        acc += kd[(j * cin + i) * cout + o] * x[v * steps + s as usize][i];
                    }
                }
                out[v * steps + t][o] = if relu { acc.max(0.0) } else { acc };
            }
        }
    }
    out
}

/// Spatial layer applied independently at each time step.
pub fn per_step(x: &Rows, steps: usize, f: impl Fn(&Rows) -> Rows) -> Rows {
    let n = x.len() / steps;
    let width = f(&(0..n).map(|v| x[v * steps].clone()).collect()).len();
    assert_eq!(width, n);
    let mut out = vec![Vec::new(); x.len()];
    for t in 0..steps {
        let slice: Rows = (0..n).map(|v| x[v * steps + t].clone()).collect();
        for (v, row) in f(&slice).into_iter().enumerate() {
            out[v * steps + t] = row;
        }
    }
    out
}

pub fn attrs(speed_limit: u32, length: f64) -> StaticAttrs {
    StaticAttrs {
        speed_limit,
        lanes: 2,
        length,
        free_flow_speed: 40.0,
        curvature: 0.5,
        slope_percent: 1.0,
        functional_class: 3,
    }
}

pub fn link(id: u64, from: u64, to: u64, two_way: bool) -> Link {
    Link {
        id,
        from,
        to,
        direction: if two_way {
            Directionality::TwoWay
        } else {
            Directionality::OneWay
        },
        attrs: attrs(50, 100.0),
    }
}

/// Random primal network with mixed directionality and a partial turn table.
pub fn random_primal(seed: u64, max_nodes: usize) -> PrimalGraph {
    let mut rng = substream(seed, "random-primal", &[]);
    let n = rng.gen_range(2..=max_nodes) as u64;
    let m = rng.gen_range(1..=2 * n as usize);
    let mut links = Vec::new();
    for id in 0..m as u64 {
        let from = rng.gen_range(0..n);
        let mut to = rng.gen_range(0..n);
        if to == from {
            to = (to + 1) % n;
        }
        links.push(link(100 + id, from, to, rng.gen_bool(0.6)));
    }
    let probe = PrimalGraph::new((0..n).collect(), links.clone(), vec![]).unwrap();
    let mut mans = Vec::new();
    for (_, (inc, out)) in probe.incidence() {
        for &a in &inc {
            for &b in &out {
                if rng.gen_bool(0.5) {
                    mans.push(Maneuver {
                        from: a,
                        to: b,
                        permitted: rng.gen_bool(0.6),
                    });
                }
            }
        }
    }
    PrimalGraph::new((0..n).collect(), links, mans).unwrap()
}

/// Literal enumeration: every ordered pair of directed links is checked for
/// a shared intersection and looked up in the turn table.
pub fn dual_oracle(
    g: &PrimalGraph,
) -> (Vec<(u64, Travel)>, BTreeSet<((u64, Travel), (u64, Travel))>) {
    let mut nodes = Vec::new();
    for l in g.links() {
        nodes.push((l.id, Travel::Forward));
        if l.direction == Directionality::TwoWay {
            nodes.push((l.id, Travel::Backward));
        }
    }
    let mut edges = BTreeSet::new();
    for &(la, ta) in &nodes {
        for &(lb, tb) in &nodes {
            if (la, ta) == (lb, tb) {
                continue;
            }
            let a = g.link(la).unwrap();
            let b = g.link(lb).unwrap();
            if a.head(ta) != b.tail(tb) {
                continue;
            }
            let listed =
                g.maneuvers().iter().rev().find(|m| {
                    m.from == DirectedLink::new(la, ta) && m.to == DirectedLink::new(lb, tb)
                });
            let ok = match listed {
                Some(m) => m.permitted,
                None => !(la == lb && ta != tb),
            };
            if ok {
                edges.insert(((la, ta), (lb, tb)));
            }
        }
    }
    (nodes, edges)
}

pub fn dual_as_sets(
    d: &DualGraph,
) -> (Vec<(u64, Travel)>, BTreeSet<((u64, Travel), (u64, Travel))>) {
    let key = |v: usize| (d.node(v).segment, d.node(v).travel);
    let nodes = (0..d.num_nodes()).map(key).collect();
    let edges = d.edges().iter().map(|&(u, v)| (key(u), key(v))).collect();
    (nodes, edges)
}

pub fn random_edges(n: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(0.3) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Finite-difference check of every parameter and the input for a layer
/// whose forward is `f`; the loss is a fixed random projection of the output.
pub fn layer_gradcheck(
    store: &ParamStore,
    x: &Tensor,
    f: &dyn Fn(&mut Ctx<'_>, Var) -> stgnn_core::Result<Var>,
) -> f64 {
    let loss_of = |store: &ParamStore, x: &Tensor, grads: bool| -> (f64, Vec<Tensor>, Vec<f64>) {
        let mut cx = Ctx::new(store, true, substream(0, "unused", &[]));
        cx.train = false;
        let xv = cx.tape.param(x.clone());
        let y = f(&mut cx, xv).unwrap();
        let shape = cx.tape.value(y).shape().to_vec();
        let mut r = substream(99, "proj", &[]);
        let w = Tensor::new(
            &shape,
            (0..shape.iter().product())
                .map(|_| r.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let wv = cx.tape.constant(w);
        let prod = cx.tape.mul(y, wv).unwrap();
        let l = cx.tape.sum(prod).unwrap();
        let value = cx.tape.value(l).data()[0];
        if !grads {
            return (value, vec![], vec![]);
        }
        cx.tape.backward(l).unwrap();
        let gx = cx
            .tape
            .grad(xv)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; x.len()]);
        (value, cx.gradients(), gx)
    };
    let (_, g, gx) = loss_of(store, x, true);
    let h = 1e-5;
    let rel = |a: f64, fd: f64| (a - fd).abs() / (a.abs().max(fd.abs()) + 1e-6);
    let mut worst: f64 = 0.0;
    for (k, t) in store.values().iter().enumerate() {
        for i in 0..t.len() {
            let mut sp = store.clone();
            sp.values_mut()[k].data_mut()[i] += h;
            let mut sm = store.clone();
            sm.values_mut()[k].data_mut()[i] -= h;
            let fd = (loss_of(&sp, x, false).0 - loss_of(&sm, x, false).0) / (2.0 * h);
            worst = worst.max(rel(g[k].data()[i], fd));
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let fd = (loss_of(store, &xp, false).0 - loss_of(store, &xm, false).0) / (2.0 * h);
        worst = worst.max(rel(gx[i], fd));
    }
    worst
}

/// Whole forward pass written out layer by layer from the parameter names.
pub fn literal_forward(
    store: &ParamStore,
    cfg: &ModelConfig,
    input: &GraphInput,
) -> (Vec<Rows>, Rows, Rows, Rows) {
    let steps = cfg.steps;
    let n = input.nodes();
    let mut x = to_rows(&input.speed);
    let mut blocks = Vec::new();
    for k in 0..cfg.k {
        let a = conv_oracle(store, &format!("st{k}.conv_in"), &x, steps, true);
        let b = per_step(&a, steps, |h| {
            dgat_oracle(store, &format!("st{k}.graph"), cfg.heads, h, &input.edges)
        });
        x = conv_oracle(store, &format!("st{k}.conv_out"), &b, steps, true);
        blocks.push(x.clone());
    }
    let hp: Rows = (0..n)
        .map(|v| {
            let flat: Vec<f64> = (0..steps).flat_map(|t| x[v * steps + t].clone()).collect();
            affine(store, "st.reduce", &flat)
                .into_iter()
                .map(|z| z.max(0.0))
                .collect()
        })
        .collect();
    let mut hf = to_rows(&input.statics);
    for k in 0..cfg.k {
        hf = dgat_oracle(store, &format!("sp{k}"), cfg.heads, &hf, &input.edges);
    }
    let out: Rows = (0..n)
        .map(|v| {
            let joint: Vec<f64> = hp[v].iter().chain(&hf[v]).copied().collect();
            let h: Vec<f64> = affine(store, "fusion.hidden", &joint)
                .into_iter()
                .map(|z| z.max(0.0))
                .collect();
            affine(store, "fusion.out", &h)
        })
        .collect();
    (blocks, hp, hf, out)
}
