use std::sync::Arc;

use super::{init, Ctx, Dense, ATTENTION_SLOPE};
use crate::diff::{ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Orientation of a neighbour relative to the node being updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeDir {
    /// The neighbour feeds into the node (upstream).
    Incoming,
    /// The node feeds into the neighbour (downstream).
    Outgoing,
    SelfLoop,
}

impl EdgeDir {
    pub const ALL: [EdgeDir; 3] = [EdgeDir::Incoming, EdgeDir::Outgoing, EdgeDir::SelfLoop];

    fn slot(self) -> usize {
        match self {
            EdgeDir::Incoming => 0,
            EdgeDir::Outgoing => 1,
            EdgeDir::SelfLoop => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeDir::Incoming => "in",
            EdgeDir::Outgoing => "out",
            EdgeDir::SelfLoop => "self",
        }
    }
}

/// Attention neighbourhoods for a set of rows. Entry `(dst, src, dir)` lets
/// row `dst` attend to row `src`; entries are grouped by direction class.
/// Outputs are produced for a subset of the input rows (all of them unless
/// [`AttentionEdges::restrict`] was applied).
#[derive(Debug, Clone)]
pub struct AttentionEdges {
    rows: usize,
    out_rows: usize,
    dst: [Arc<[usize]>; 3],
    src: [Arc<[usize]>; 3],
    /// Output row of every entry, all classes in class order.
    groups: Arc<[usize]>,
    /// `dst` of all classes concatenated in class order.
    all_dst: Arc<[usize]>,
    /// `src` of all classes concatenated in class order.
    all_src: Arc<[usize]>,
}

impl AttentionEdges {
    /// Builds from explicit labelled entries. Every row needs exactly one
    /// self-loop; `Incoming`/`Outgoing` entries must join distinct rows.
    pub fn from_labeled(rows: usize, entries: &[(usize, usize, EdgeDir)]) -> Result<Self> {
        let mut dst: [Vec<usize>; 3] = Default::default();
        let mut src: [Vec<usize>; 3] = Default::default();
        let mut has_self = vec![false; rows];
        for &(d, s, dir) in entries {
            if d >= rows || s >= rows {
                return Err(Error::InvalidInput(format!(
                    "attention entry ({d}, {s}) outside {rows} rows"
                )));
            }
            match dir {
                EdgeDir::SelfLoop if d != s => {
                    return Err(Error::InvalidInput(format!(
                        "self-loop entry joins distinct rows {d} and {s}"
                    )))
                }
                EdgeDir::SelfLoop => {
                    if has_self[d] {
                        return Err(Error::InvalidInput(format!("row {d} has two self-loops")));
                    }
                    has_self[d] = true;
                }
                _ if d == s => {
                    return Err(Error::InvalidInput(format!(
                        "row {d}: a self-edge must be labelled as a self-loop"
                    )))
                }
                _ => {}
            }
            dst[dir.slot()].push(d);
            src[dir.slot()].push(s);
        }
        if let Some(v) = has_self.iter().position(|h| !h) {
            return Err(Error::InvalidInput(format!("row {v} has no self-loop")));
        }
        let all_dst: Arc<[usize]> = dst.iter().flatten().copied().collect::<Vec<_>>().into();
        let all_src: Vec<usize> = src.iter().flatten().copied().collect();
        Ok(AttentionEdges {
            rows,
            out_rows: rows,
            dst: dst.map(Arc::from),
            src: src.map(Arc::from),
            groups: all_dst.clone(),
            all_dst,
            all_src: all_src.into(),
        })
    }

    /// Directed graph: edge `u -> v` makes `u` an incoming neighbour of `v`
    /// and `v` an outgoing neighbour of `u`. Self-loops are added.
    pub fn directed(rows: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(2 * edges.len() + rows);
        for &(u, v) in edges {
            entries.push((v, u, EdgeDir::Incoming));
            entries.push((u, v, EdgeDir::Outgoing));
        }
        entries.extend((0..rows).map(|v| (v, v, EdgeDir::SelfLoop)));
        Self::from_labeled(rows, &entries)
    }

    /// Symmetrised graph with self-loops; every non-self entry is labelled
    /// `Incoming`, so only the undirected layer should consume it.
    pub fn undirected(rows: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .flat_map(|&(u, v)| [(v, u), (u, v)])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut entries: Vec<_> = pairs
            .into_iter()
            .map(|(d, s)| (d, s, EdgeDir::Incoming))
            .collect();
        entries.extend((0..rows).map(|v| (v, v, EdgeDir::SelfLoop)));
        Self::from_labeled(rows, &entries)
    }

    /// Keeps only the entries whose target is in `keep`; output row `i`
    /// then belongs to input row `keep[i]`.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let mut pos = vec![usize::MAX; self.rows];
        for (i, &r) in keep.iter().enumerate() {
            if r >= self.rows || pos[r] != usize::MAX {
                return Err(Error::InvalidInput(format!(
                    "restricting to invalid or repeated row {r}"
                )));
            }
            pos[r] = i;
        }
        let mut dst: [Vec<usize>; 3] = Default::default();
        let mut src: [Vec<usize>; 3] = Default::default();
        let mut groups = Vec::new();
        for k in 0..3 {
            for (&d, &s) in self.dst[k].iter().zip(self.src[k].iter()) {
                if pos[d] != usize::MAX {
                    dst[k].push(d);
                    src[k].push(s);
                }
            }
            groups.extend(dst[k].iter().map(|&d| pos[d]));
        }
        let all_dst: Vec<usize> = dst.iter().flatten().copied().collect();
        let all_src: Vec<usize> = src.iter().flatten().copied().collect();
        Ok(AttentionEdges {
            rows: self.rows,
            out_rows: keep.len(),
            dst: dst.map(Arc::from),
            src: src.map(Arc::from),
            groups: groups.into(),
            all_dst: all_dst.into(),
            all_src: all_src.into(),
        })
    }

    /// Same neighbourhoods applied independently at each of `steps` time
    /// steps, for rows laid out as `node·steps + t`.
    pub fn replicate(&self, steps: usize) -> Self {
        let expand = |idx: &[usize]| -> Arc<[usize]> {
            idx.iter()
                .flat_map(|&i| (0..steps).map(move |t| i * steps + t))
                .collect::<Vec<_>>()
                .into()
        };
        let dst = [
            expand(&self.dst[0]),
            expand(&self.dst[1]),
            expand(&self.dst[2]),
        ];
        let src = [
            expand(&self.src[0]),
            expand(&self.src[1]),
            expand(&self.src[2]),
        ];
        let all_dst: Vec<usize> = dst.iter().flat_map(|d| d.iter().copied()).collect();
        let all_src: Vec<usize> = src.iter().flat_map(|s| s.iter().copied()).collect();
        AttentionEdges {
            rows: self.rows * steps,
            out_rows: self.out_rows * steps,
            dst,
            src,
            groups: expand(&self.groups),
            all_dst: all_dst.into(),
            all_src: all_src.into(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn out_rows(&self) -> usize {
        self.out_rows
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// `(dst, src)` entries of one direction class.
    pub fn class(&self, dir: EdgeDir) -> (&[usize], &[usize]) {
        (&self.dst[dir.slot()], &self.src[dir.slot()])
    }

    /// All entries as `(dst, src, dir)` with `dst` an input row, in internal
    /// order (the order of the attention coefficients returned by the layers).
    pub fn entries(&self) -> Vec<(usize, usize, EdgeDir)> {
        EdgeDir::ALL
            .iter()
            .flat_map(|&dir| {
                let (d, s) = self.class(dir);
                d.iter().zip(s).map(move |(&d, &s)| (d, s, dir))
            })
            .collect()
    }

    fn check(&self, rows: usize) -> Result<()> {
        if rows != self.rows {
            return Err(Error::Shape {
                op: "attention",
                left: vec![rows],
                right: vec![self.rows],
            });
        }
        Ok(())
    }
}

fn head_width(width: usize, heads: usize) -> Result<usize> {
    if heads == 0 || width % heads != 0 {
        return Err(Error::Config(format!(
            "hidden width {width} is not divisible by {heads} attention heads"
        )));
    }
    Ok(width / heads)
}

/// Attention output of one layer, kept for inspection.
pub struct AttentionOut {
    pub output: Var,
    /// `E×H` coefficients in [`AttentionEdges::entries`] order.
    pub alpha: Var,
}

/// Direction-aware graph attention. Each direction class has its own
/// projection, attention vector and learned direction embedding; one softmax
/// runs over the whole neighbourhood. Heads are concatenated.
#[derive(Debug, Clone)]
pub struct Dgat {
    pub proj: [Dense; 3],
    /// Per class `H×3c`: target, neighbour and embedding parts.
    pub att: [ParamId; 3],
    /// Per class `1×(H·c)`.
    pub emb: [ParamId; 3],
    pub heads: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub slope: f64,
}

impl Dgat {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = head_width(out_dim, heads)?;
        let mut make = |dir: EdgeDir| -> Result<(Dense, ParamId, ParamId)> {
            let tag = dir.name();
            let proj = Dense::new(store, &format!("{name}.{tag}.proj"), in_dim, out_dim, rng)?;
            let att = store.insert(
                format!("{name}.{tag}.att"),
                init::uniform(&[heads, 3 * c], 3 * c, rng),
            )?;
            let emb = store.insert(
                format!("{name}.{tag}.emb"),
                init::normal(&[1, out_dim], 0.1, rng),
            )?;
            Ok((proj, att, emb))
        };
        let (p0, a0, e0) = make(EdgeDir::Incoming)?;
        let (p1, a1, e1) = make(EdgeDir::Outgoing)?;
        let (p2, a2, e2) = make(EdgeDir::SelfLoop)?;
        Ok(Dgat {
            proj: [p0, p1, p2],
            att: [a0, a1, a2],
            emb: [e0, e1, e2],
            heads,
            in_dim,
            out_dim,
            slope: ATTENTION_SLOPE,
        })
    }

    pub fn forward(&self, cx: &mut Ctx<'_>, x: Var, edges: &AttentionEdges) -> Result<Var> {
        Ok(self.forward_with_attention(cx, x, edges)?.output)
    }

    pub fn forward_with_attention(
        &self,
        cx: &mut Ctx<'_>,
        x: Var,
        edges: &AttentionEdges,
    ) -> Result<AttentionOut> {
        let rows = cx.tape.value(x).dims2().0;
        edges.check(rows)?;
        let c = self.out_dim / self.heads;
        let mut scores = Vec::with_capacity(3);
        let mut messages = Vec::with_capacity(3);
        for dir in EdgeDir::ALL {
            let k = dir.slot();
            let (dst, src) = (&edges.dst[k], &edges.src[k]);
            if dst.is_empty() {
                continue;
            }
            let p = self.proj[k].forward(cx, x)?;
            let att = cx.param(self.att[k]);
            let a_dst = cx.tape.slice_cols(att, 0, c)?;
            let a_src = cx.tape.slice_cols(att, c, 2 * c)?;
            let a_emb = cx.tape.slice_cols(att, 2 * c, 3 * c)?;
            let s_dst = cx.tape.head_dot(p, a_dst)?;
            let s_src = cx.tape.head_dot(p, a_src)?;
            let s_dst = cx.tape.gather_rows(s_dst, dst)?;
            let s_src = cx.tape.gather_rows(s_src, src)?;
            let emb = cx.param(self.emb[k]);
            let s_emb = cx.tape.head_dot(emb, a_emb)?;
            let s_emb = cx.tape.repeat_rows(s_emb, dst.len())?;
            let s = cx.tape.add(s_dst, s_src)?;
            scores.push(cx.tape.add(s, s_emb)?);
            messages.push(cx.tape.gather_rows(p, src)?);
        }
        aggregate(cx, &scores, &messages, edges, c, self.slope)
    }
}

/// Standard graph attention with a single parameter set; intended for
/// symmetrised neighbourhoods from [`AttentionEdges::undirected`].
#[derive(Debug, Clone)]
pub struct Gat {
    pub proj: Dense,
    /// `H×2c`: target and neighbour parts.
    pub att: ParamId,
    pub heads: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub slope: f64,
}

impl Gat {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = head_width(out_dim, heads)?;
        let proj = Dense::new(store, &format!("{name}.proj"), in_dim, out_dim, rng)?;
        let att = store.insert(
            format!("{name}.att"),
            init::uniform(&[heads, 2 * c], 2 * c, rng),
        )?;
        Ok(Gat {
            proj,
            att,
            heads,
            in_dim,
            out_dim,
            slope: ATTENTION_SLOPE,
        })
    }

    pub fn forward(&self, cx: &mut Ctx<'_>, x: Var, edges: &AttentionEdges) -> Result<Var> {
        Ok(self.forward_with_attention(cx, x, edges)?.output)
    }

    pub fn forward_with_attention(
        &self,
        cx: &mut Ctx<'_>,
        x: Var,
        edges: &AttentionEdges,
    ) -> Result<AttentionOut> {
        let rows = cx.tape.value(x).dims2().0;
        edges.check(rows)?;
        let c = self.out_dim / self.heads;
        let p = self.proj.forward(cx, x)?;
        let att = cx.param(self.att);
        let a_dst = cx.tape.slice_cols(att, 0, c)?;
        let a_src = cx.tape.slice_cols(att, c, 2 * c)?;
        let s_dst = cx.tape.head_dot(p, a_dst)?;
        let s_src = cx.tape.head_dot(p, a_src)?;
        let s_dst = cx.tape.gather_rows(s_dst, &edges.all_dst)?;
        let s_src = cx.tape.gather_rows(s_src, &edges.all_src)?;
        let s = cx.tape.add(s_dst, s_src)?;
        let m = cx.tape.gather_rows(p, &edges.all_src)?;
        aggregate(cx, &[s], &[m], edges, c, self.slope)
    }
}

/// LeakyReLU scores, pooled softmax per target row, weighted sum of
/// messages, output LeakyReLU.
fn aggregate(
    cx: &mut Ctx<'_>,
    scores: &[Var],
    messages: &[Var],
    edges: &AttentionEdges,
    c: usize,
    slope: f64,
) -> Result<AttentionOut> {
    let s = if scores.len() == 1 {
        scores[0]
    } else {
        cx.tape.concat(scores, 0)?
    };
    let m = if messages.len() == 1 {
        messages[0]
    } else {
        cx.tape.concat(messages, 0)?
    };
    let s = cx.tape.leaky_relu(s, slope)?;
    let alpha = cx
        .tape
        .softmax_over_groups(s, &edges.groups, edges.out_rows)?;
    let weights = if c == 1 {
        alpha
    } else {
        cx.tape.repeat_cols(alpha, c)?
    };
    let weighted = cx.tape.mul(weights, m)?;
    let summed = cx
        .tape
        .scatter_add_rows(weighted, &edges.groups, edges.out_rows)?;
    let output = cx.tape.leaky_relu(summed, slope)?;
    Ok(AttentionOut { output, alpha })
}
