use std::path::Path;

use super::config::{ModelConfig, Variant};
use crate::config::KeyValues;
use crate::diff::{checkpoint, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{AttentionEdges, Ctx, Dense, Dgat, Gat, TemporalConv, ATTENTION_SLOPE};
use crate::rng::{substream, Rng};

/// Model input for one neighbourhood subgraph on one day.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    /// Encoded speeds, `(nodes·steps) × speed_dim`, node-major.
    pub speed: Tensor,
    /// Normalised static descriptors, `nodes × static_dim`.
    pub statics: Tensor,
    /// Directed edges in local indices.
    pub edges: Vec<(usize, usize)>,
    /// Local index of the target node.
    pub target: usize,
}

impl GraphInput {
    pub fn nodes(&self) -> usize {
        self.statics.dims2().0
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Local nodes of the output rows.
    pub nodes: Vec<usize>,
    /// Output of each spatio-temporal block, `(nodes·steps) × hidden`.
    pub blocks: Vec<Var>,
    /// Speed-branch embedding, `nodes × hidden`.
    pub hp: Option<Var>,
    /// Static-branch embedding, `nodes × hidden`.
    pub hf: Option<Var>,
    /// `nodes × horizon`.
    pub output: Var,
}

/// Graph layer used inside either branch.
#[derive(Debug, Clone)]
enum Spatial {
    Directed(Dgat),
    Undirected(Gat),
    Local(Dense),
}

/// Node sets processed by each layer. `sets[0]` are the input nodes and
/// layer `k` produces rows for `sets[k + 1]`, a subset of `sets[k]`; all sets
/// are local node indices in ascending order.
struct Plan {
    sets: Vec<Vec<usize>>,
}

impl Plan {
    fn full(n: usize, layers: usize) -> Self {
        Plan {
            sets: vec![(0..n).collect(); layers + 1],
        }
    }

    /// Layer `k` of `layers` only has to cover the ball of radius
    /// `radius - k - 1` around the target.
    fn target(input: &GraphInput, layers: usize, radius: usize) -> Self {
        let n = input.nodes();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &input.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = vec![usize::MAX; n];
        dist[input.target] = 0;
        let mut queue = std::collections::VecDeque::from([input.target]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        let ball = |r: usize| (0..n).filter(|&v| dist[v] <= r).collect::<Vec<_>>();
        Plan {
            sets: (0..=layers)
                .map(|k| ball(radius.saturating_sub(k)))
                .collect(),
        }
    }
}

/// Attention neighbourhoods between two node sets of a plan.
fn layer_edges(
    input: &GraphInput,
    undirected: bool,
    s_in: &[usize],
    s_out: &[usize],
) -> Result<AttentionEdges> {
    let mut pos = vec![usize::MAX; input.nodes()];
    for (i, &v) in s_in.iter().enumerate() {
        pos[v] = i;
    }
    let local: Vec<(usize, usize)> = input
        .edges
        .iter()
        .filter(|&&(a, b)| pos[a] != usize::MAX && pos[b] != usize::MAX)
        .map(|&(a, b)| (pos[a], pos[b]))
        .collect();
    let edges = if undirected {
        AttentionEdges::undirected(s_in.len(), &local)?
    } else {
        AttentionEdges::directed(s_in.len(), &local)?
    };
    if s_in == s_out {
        return Ok(edges);
    }
    let keep: Vec<usize> = s_out.iter().map(|&v| pos[v]).collect();
    edges.restrict(&keep)
}

/// Rows of `s_out` within `s_in`, expanded over `steps` rows per node.
fn subset_rows(s_in: &[usize], s_out: &[usize], steps: usize) -> Option<std::sync::Arc<[usize]>> {
    if s_in == s_out {
        return None;
    }
    let mut pos = std::collections::HashMap::with_capacity(s_in.len());
    for (i, &v) in s_in.iter().enumerate() {
        pos.insert(v, i);
    }
    Some(
        s_out
            .iter()
            .flat_map(|v| {
                let p = pos[v];
                (0..steps).map(move |t| p * steps + t)
            })
            .collect::<Vec<_>>()
            .into(),
    )
}

impl Spatial {
    fn new(
        store: &mut ParamStore,
        name: &str,
        variant: Variant,
        in_dim: usize,
        cfg: &ModelConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let out = cfg.hidden;
        Ok(match variant {
            Variant::NoNeighborhood => Spatial::Local(Dense::new(store, name, in_dim, out, rng)?),
            Variant::UndirectedGat => {
                Spatial::Undirected(Gat::new(store, name, in_dim, out, cfg.heads, rng)?)
            }
            _ => Spatial::Directed(Dgat::new(store, name, in_dim, out, cfg.heads, rng)?),
        })
    }

    fn forward(&self, cx: &mut Ctx<'_>, x: Var, edges: &AttentionEdges) -> Result<Var> {
        match self {
            Spatial::Directed(l) => l.forward(cx, x, edges),
            Spatial::Undirected(l) => l.forward(cx, x, edges),
            Spatial::Local(l) => {
                let y = l.forward(cx, x)?;
                cx.tape.leaky_relu(y, ATTENTION_SLOPE)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct StBlock {
    conv_in: TemporalConv,
    spatial: Spatial,
    conv_out: TemporalConv,
}

#[derive(Debug, Clone)]
struct StBranch {
    blocks: Vec<StBlock>,
    reduce: Dense,
}

/// The two-branch estimator. Parameters live in `store`; layers refer to
/// them by id.
#[derive(Debug, Clone)]
pub struct HdaModel {
    config: ModelConfig,
    variant: Variant,
    store: ParamStore,
    st: Option<StBranch>,
    spatial: Vec<Spatial>,
    fuse: Dense,
    head: Dense,
}

impl HdaModel {
    /// Builds the variant selected by the config's ablation flags, with
    /// parameters drawn from the `init` substream of `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let variant = config.validate()?;
        let mut rng = substream(seed, "init", &[]);
        let mut store = ParamStore::new();
        let c = config.hidden;
        let st = if variant.has_st_branch() {
            let input = if variant == Variant::SingleBranchFusion {
                config.speed_dim + config.static_dim
            } else {
                config.speed_dim
            };
            let mut blocks = Vec::with_capacity(config.k);
            for k in 0..config.k {
                let cin = if k == 0 { input } else { c };
                blocks.push(StBlock {
                    conv_in: TemporalConv::new(
                        &mut store,
                        &format!("st{k}.conv_in"),
                        cin,
                        c,
                        config.kernel,
                        &mut rng,
                    )?,
                    spatial: Spatial::new(
                        &mut store,
                        &format!("st{k}.graph"),
                        variant,
                        c,
                        config,
                        &mut rng,
                    )?,
                    conv_out: TemporalConv::new(
                        &mut store,
                        &format!("st{k}.conv_out"),
                        c,
                        c,
                        config.kernel,
                        &mut rng,
                    )?,
                });
            }
            let reduce = Dense::new(&mut store, "st.reduce", config.steps * c, c, &mut rng)?;
            Some(StBranch { blocks, reduce })
        } else {
            None
        };
        let mut spatial = Vec::new();
        if variant.has_spatial_branch() {
            for k in 0..config.k {
                let cin = if k == 0 { config.static_dim } else { c };
                spatial.push(Spatial::new(
                    &mut store,
                    &format!("sp{k}"),
                    variant,
                    cin,
                    config,
                    &mut rng,
                )?);
            }
        }
        let fuse = Dense::new(&mut store, "fusion.hidden", 2 * c, c, &mut rng)?;
        let head = Dense::new(&mut store, "fusion.out", c, config.horizon, &mut rng)?;
        Ok(HdaModel {
            config: config.clone(),
            variant,
            store,
            st,
            spatial,
            fuse,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_input(&self, input: &GraphInput) -> Result<()> {
        let n = input.nodes();
        let cfg = &self.config;
        if n == 0 || input.target >= n {
            return Err(Error::InvalidInput(format!(
                "target {} outside a {n}-node subgraph",
                input.target
            )));
        }
        if input.statics.dims2().1 != cfg.static_dim || input.statics.shape().len() != 2 {
            return Err(Error::Shape {
                op: "model statics",
                left: input.statics.shape().to_vec(),
                right: vec![n, cfg.static_dim],
            });
        }
        if input.speed.shape() != [n * cfg.steps, cfg.speed_dim] {
            return Err(Error::Shape {
                op: "model speed",
                left: input.speed.shape().to_vec(),
                right: vec![n * cfg.steps, cfg.speed_dim],
            });
        }
        Ok(())
    }

    /// Full `nodes × horizon` output in scaled volume units, without clamping.
    pub fn forward(&self, cx: &mut Ctx<'_>, input: &GraphInput) -> Result<Var> {
        Ok(self.forward_traced(cx, input)?.output)
    }

    /// Forward pass over every node that also returns the intermediate
    /// embeddings.
    pub fn forward_traced(&self, cx: &mut Ctx<'_>, input: &GraphInput) -> Result<Trace> {
        self.check_input(input)?;
        let plan = Plan::full(input.nodes(), self.config.k);
        self.run(cx, input, &plan)
    }

    /// Target node's profile as a `1 × horizon` variable. Only the part of
    /// the subgraph that can reach the target is evaluated; the result
    /// equals the target row of [`HdaModel::forward`].
    pub fn forward_target(&self, cx: &mut Ctx<'_>, input: &GraphInput) -> Result<Var> {
        self.check_input(input)?;
        let radius = if self.variant == Variant::NoNeighborhood {
            0
        } else {
            self.config.k
        };
        let plan = Plan::target(input, self.config.k, radius);
        Ok(self.run(cx, input, &plan)?.output)
    }

    fn run(&self, cx: &mut Ctx<'_>, input: &GraphInput, plan: &Plan) -> Result<Trace> {
        let cfg = &self.config;
        let steps = cfg.steps;
        let undirected = self.variant == Variant::UndirectedGat;
        let all: Vec<usize> = (0..input.nodes()).collect();
        let first = &plan.sets[0];
        let statics_all = cx.tape.constant(input.statics.clone());
        let statics = match subset_rows(&all, first, 1) {
            Some(rows) => cx.tape.gather_rows(statics_all, &rows)?,
            None => statics_all,
        };

        let mut blocks = Vec::new();
        let hp = match &self.st {
            Some(st) => {
                let speed = cx.tape.constant(input.speed.clone());
                let mut x = match subset_rows(&all, first, steps) {
                    Some(rows) => cx.tape.gather_rows(speed, &rows)?,
                    None => speed,
                };
                if self.variant == Variant::SingleBranchFusion {
                    let rep = cx.tape.repeat_rows(statics, steps)?;
                    x = cx.tape.concat(&[x, rep], 1)?;
                }
                for (k, block) in st.blocks.iter().enumerate() {
                    let (s_in, s_out) = (&plan.sets[k], &plan.sets[k + 1]);
                    x = block.conv_in.forward(cx, x, steps)?;
                    x = cx.dropout(x, cfg.dropout_conv)?;
                    x = match &block.spatial {
                        Spatial::Local(_) => {
                            if let Some(rows) = subset_rows(s_in, s_out, steps) {
                                x = cx.tape.gather_rows(x, &rows)?;
                            }
                            block
                                .spatial
                                .forward(cx, x, &AttentionEdges::directed(0, &[])?)?
                        }
                        graph => {
                            let edges =
                                layer_edges(input, undirected, s_in, s_out)?.replicate(steps);
                            graph.forward(cx, x, &edges)?
                        }
                    };
                    x = cx.dropout(x, cfg.dropout_attention)?;
                    x = block.conv_out.forward(cx, x, steps)?;
                    x = cx.dropout(x, cfg.dropout_conv)?;
                    blocks.push(x);
                }
                let rows = plan.sets[cfg.k].len();
                let flat = cx.tape.reshape(x, &[rows, steps * cfg.hidden])?;
                let h = st.reduce.forward(cx, flat)?;
                Some(cx.tape.relu(h)?)
            }
            None => None,
        };

        let hf = if self.spatial.is_empty() {
            None
        } else {
            let mut x = statics;
            for (k, layer) in self.spatial.iter().enumerate() {
                let (s_in, s_out) = (&plan.sets[k], &plan.sets[k + 1]);
                x = match layer {
                    Spatial::Local(_) => {
                        if let Some(rows) = subset_rows(s_in, s_out, 1) {
                            x = cx.tape.gather_rows(x, &rows)?;
                        }
                        layer.forward(cx, x, &AttentionEdges::directed(0, &[])?)?
                    }
                    graph => graph.forward(cx, x, &layer_edges(input, undirected, s_in, s_out)?)?,
                };
                x = cx.dropout(x, cfg.dropout_attention)?;
            }
            Some(x)
        };

        let joint = match (hp, hf) {
            (Some(p), Some(f)) => cx.tape.concat(&[p, f], 1)?,
            (Some(only), None) | (None, Some(only)) => cx.tape.concat(&[only, only], 1)?,
            (None, None) => unreachable!("every variant keeps one branch"),
        };
        let h = self.fuse.forward(cx, joint)?;
        let h = cx.tape.relu(h)?;
        let h = cx.dropout(h, cfg.dropout_fusion)?;
        let output = self.head.forward(cx, h)?;
        Ok(Trace {
            nodes: plan.sets[cfg.k].clone(),
            blocks,
            hp,
            hf,
            output,
        })
    }

    /// Evaluation-mode output for every node of the subgraph (scaled units).
    pub fn predict_all(&self, input: &GraphInput) -> Result<Tensor> {
        let mut cx = Ctx::eval(&self.store);
        let y = self.forward(&mut cx, input)?;
        Ok(cx.tape.value(y).clone())
    }

    /// Evaluation-mode target profile (scaled units), via the pruned pass.
    pub fn predict_target(&self, input: &GraphInput) -> Result<Vec<f64>> {
        let mut cx = Ctx::eval(&self.store);
        let y = self.forward_target(&mut cx, input)?;
        Ok(cx.tape.value(y).data().to_vec())
    }

    /// Writes `params.bin`, `params.manifest` and `model.cfg` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(
            &self.store,
            &dir.join("params.bin"),
            &dir.join("params.manifest"),
        )?;
        let mut kv = KeyValues::new();
        self.config.to_kv(&mut kv);
        kv.save(&dir.join("model.cfg"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KeyValues::read(&dir.join("model.cfg"))?;
        let config = ModelConfig::from_kv(&kv)?;
        let mut model = HdaModel::new(&config, 0)?;
        let stored = checkpoint::load(&dir.join("params.bin"), &dir.join("params.manifest"))?;
        model.store.load_from(&stored)?;
        Ok(model)
    }
}
