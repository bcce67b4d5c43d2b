use std::fmt;
use std::str::FromStr;

use super::encoding::SPEED_DIMS;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::graph::NUM_STATIC;

/// Individual ablation switches. At most one may be set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablations {
    pub no_st_branch: bool,
    pub no_spatial_branch: bool,
    pub no_neighborhood: bool,
    pub single_branch_fusion: bool,
    pub undirected_gat: bool,
}

/// Architecture selected by the ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    /// Static-descriptor branch only.
    NoStBranch,
    /// Speed branch only.
    NoSpatialBranch,
    /// Graph attention replaced by per-node dense layers.
    NoNeighborhood,
    /// Static descriptors appended to the speed input of a single branch.
    SingleBranchFusion,
    /// Standard attention on the symmetrised graph.
    UndirectedGat,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoStBranch,
        Variant::NoSpatialBranch,
        Variant::NoNeighborhood,
        Variant::SingleBranchFusion,
        Variant::UndirectedGat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoStBranch => "no_st_branch",
            Variant::NoSpatialBranch => "no_spatial_branch",
            Variant::NoNeighborhood => "no_neighborhood",
            Variant::SingleBranchFusion => "single_branch_fusion",
            Variant::UndirectedGat => "undirected_gat",
        }
    }

    pub fn ablations(self) -> Ablations {
        let mut a = Ablations::default();
        match self {
            Variant::Full => {}
            Variant::NoStBranch => a.no_st_branch = true,
            Variant::NoSpatialBranch => a.no_spatial_branch = true,
            Variant::NoNeighborhood => a.no_neighborhood = true,
            Variant::SingleBranchFusion => a.single_branch_fusion = true,
            Variant::UndirectedGat => a.undirected_gat = true,
        }
        a
    }

    pub fn has_st_branch(self) -> bool {
        self != Variant::NoStBranch
    }

    pub fn has_spatial_branch(self) -> bool {
        !matches!(self, Variant::NoSpatialBranch | Variant::SingleBranchFusion)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant {s:?}")))
    }
}

impl Ablations {
    pub fn variant(&self) -> Result<Variant> {
        let set: Vec<Variant> = [
            (self.no_st_branch, Variant::NoStBranch),
            (self.no_spatial_branch, Variant::NoSpatialBranch),
            (self.no_neighborhood, Variant::NoNeighborhood),
            (self.single_branch_fusion, Variant::SingleBranchFusion),
            (self.undirected_gat, Variant::UndirectedGat),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, v)| v)
        .collect();
        match set.as_slice() {
            [] => Ok(Variant::Full),
            [v] => Ok(*v),
            many => Err(Error::Config(format!(
                "conflicting ablation flags: {}",
                many.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Depth of both branches, equal to the neighbourhood radius.
    pub k: usize,
    pub hidden: usize,
    pub heads: usize,
    pub kernel: usize,
    /// Speed samples per day.
    pub steps: usize,
    /// Output volume samples per day.
    pub horizon: usize,
    pub static_dim: usize,
    pub speed_dim: usize,
    pub dropout_conv: f64,
    pub dropout_attention: f64,
    pub dropout_fusion: f64,
    pub ablations: Ablations,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k: 2,
            hidden: 64,
            heads: 4,
            kernel: 9,
            steps: 96,
            horizon: 24,
            static_dim: NUM_STATIC,
            speed_dim: SPEED_DIMS,
            dropout_conv: 0.1,
            dropout_attention: 0.3,
            dropout_fusion: 0.6,
            ablations: Ablations::default(),
        }
    }
}

pub const MODEL_KEYS: &[&str] = &[
    "model.k",
    "model.hidden",
    "model.heads",
    "model.kernel",
    "model.steps",
    "model.horizon",
    "model.static_dim",
    "model.speed_dim",
    "model.dropout_conv",
    "model.dropout_attention",
    "model.dropout_fusion",
    "model.no_st_branch",
    "model.no_spatial_branch",
    "model.no_neighborhood",
    "model.single_branch_fusion",
    "model.undirected_gat",
];

impl ModelConfig {
    pub fn with_variant(mut self, v: Variant) -> Self {
        self.ablations = v.ablations();
        self
    }

    pub fn variant(&self) -> Result<Variant> {
        self.ablations.variant()
    }

    pub fn validate(&self) -> Result<Variant> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return bad("model.k must be at least 1".into());
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!(
                "model.hidden ({}) must be a positive multiple of model.heads ({})",
                self.hidden, self.heads
            ));
        }
        if self.kernel % 2 == 0 {
            return bad(format!("model.kernel must be odd, got {}", self.kernel));
        }
        if self.steps == 0 || self.horizon == 0 || self.static_dim == 0 {
            return bad("model.steps, model.horizon and model.static_dim must be positive".into());
        }
        if self.speed_dim != SPEED_DIMS {
            return bad(format!(
                "model.speed_dim must be {SPEED_DIMS}, got {}",
                self.speed_dim
            ));
        }
        for (name, r) in [
            ("dropout_conv", self.dropout_conv),
            ("dropout_attention", self.dropout_attention),
            ("dropout_fusion", self.dropout_fusion),
        ] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("model.{name} must lie in [0, 1), got {r}"));
            }
        }
        self.variant()
    }

    pub fn to_kv(&self, kv: &mut KeyValues) {
        kv.set("model.k", self.k);
        kv.set("model.hidden", self.hidden);
        kv.set("model.heads", self.heads);
        kv.set("model.kernel", self.kernel);
        kv.set("model.steps", self.steps);
        kv.set("model.horizon", self.horizon);
        kv.set("model.static_dim", self.static_dim);
        kv.set("model.speed_dim", self.speed_dim);
        kv.set("model.dropout_conv", self.dropout_conv);
        kv.set("model.dropout_attention", self.dropout_attention);
        kv.set("model.dropout_fusion", self.dropout_fusion);
        let a = &self.ablations;
        kv.set("model.no_st_branch", a.no_st_branch);
        kv.set("model.no_spatial_branch", a.no_spatial_branch);
        kv.set("model.no_neighborhood", a.no_neighborhood);
        kv.set("model.single_branch_fusion", a.single_branch_fusion);
        kv.set("model.undirected_gat", a.undirected_gat);
    }

    /// Reads `model.*` keys, falling back to defaults; other keys are ignored.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = ModelConfig::default();
        let cfg = ModelConfig {
            k: kv.get_or("model.k", d.k)?,
            hidden: kv.get_or("model.hidden", d.hidden)?,
            heads: kv.get_or("model.heads", d.heads)?,
            kernel: kv.get_or("model.kernel", d.kernel)?,
            steps: kv.get_or("model.steps", d.steps)?,
            horizon: kv.get_or("model.horizon", d.horizon)?,
            static_dim: kv.get_or("model.static_dim", d.static_dim)?,
            speed_dim: kv.get_or("model.speed_dim", d.speed_dim)?,
            dropout_conv: kv.get_or("model.dropout_conv", d.dropout_conv)?,
            dropout_attention: kv.get_or("model.dropout_attention", d.dropout_attention)?,
            dropout_fusion: kv.get_or("model.dropout_fusion", d.dropout_fusion)?,
            ablations: Ablations {
                no_st_branch: kv.get_or("model.no_st_branch", false)?,
                no_spatial_branch: kv.get_or("model.no_spatial_branch", false)?,
                no_neighborhood: kv.get_or("model.no_neighborhood", false)?,
                single_branch_fusion: kv.get_or("model.single_branch_fusion", false)?,
                undirected_gat: kv.get_or("model.undirected_gat", false)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
