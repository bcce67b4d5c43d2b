use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::attrs::StaticAttrs;
use crate::error::{Error, Result};

pub type IntersectionId = u64;
pub type LinkId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Directionality {
    OneWay,
    TwoWay,
}

impl Directionality {
    pub fn code(self) -> u8 {
        match self {
            Directionality::OneWay => 1,
            Directionality::TwoWay => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Directionality::OneWay),
            2 => Some(Directionality::TwoWay),
            _ => None,
        }
    }
}

/// Travel direction along a link: `Forward` runs from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Travel {
    Forward,
    Backward,
}

impl Travel {
    pub fn code(self) -> u8 {
        match self {
            Travel::Forward => 1,
            Travel::Backward => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Travel::Forward),
            2 => Some(Travel::Backward),
            _ => None,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Travel::Forward => Travel::Backward,
            Travel::Backward => Travel::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: IntersectionId,
    pub to: IntersectionId,
    pub direction: Directionality,
    pub attrs: StaticAttrs,
}

impl Link {
    /// Intersection where travel in direction `t` starts.
    pub fn tail(&self, t: Travel) -> IntersectionId {
        match t {
            Travel::Forward => self.from,
            Travel::Backward => self.to,
        }
    }

    /// Intersection where travel in direction `t` ends.
    pub fn head(&self, t: Travel) -> IntersectionId {
        match t {
            Travel::Forward => self.to,
            Travel::Backward => self.from,
        }
    }

    pub fn travels(&self) -> &'static [Travel] {
        match self.direction {
            Directionality::OneWay => &[Travel::Forward],
            Directionality::TwoWay => &[Travel::Forward, Travel::Backward],
        }
    }

    pub fn allows(&self, t: Travel) -> bool {
        t == Travel::Forward || self.direction == Directionality::TwoWay
    }
}

/// A directed traversal of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedLink {
    pub link: LinkId,
    pub travel: Travel,
}

impl DirectedLink {
    pub fn new(link: LinkId, travel: Travel) -> Self {
        DirectedLink { link, travel }
    }
}

/// Turn from one directed link into another at their shared intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Maneuver {
    pub from: DirectedLink,
    pub to: DirectedLink,
    pub permitted: bool,
}

/// Intersection/link road network with a turn table.
///
/// Turns missing from the table are permitted, except U-turns (leaving on
/// the same link the vehicle arrived on), which need an explicit entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalGraph {
    intersections: Vec<IntersectionId>,
    links: Vec<Link>,
    maneuvers: Vec<Maneuver>,
    link_index: HashMap<LinkId, usize>,
    turn_table: HashMap<(DirectedLink, DirectedLink), bool>,
}

impl PrimalGraph {
    pub fn new(
        intersections: Vec<IntersectionId>,
        links: Vec<Link>,
        maneuvers: Vec<Maneuver>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &i in &intersections {
            if !seen.insert(i) {
                return Err(Error::InvalidInput(format!(
                    "duplicate intersection id {i}"
                )));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        for (k, l) in links.iter().enumerate() {
            if link_index.insert(l.id, k).is_some() {
                return Err(Error::InvalidInput(format!("duplicate link id {}", l.id)));
            }
            for end in [l.from, l.to] {
                if !seen.contains(&end) {
                    return Err(Error::InvalidInput(format!(
                        "link {} references unknown intersection {end}",
                        l.id
                    )));
                }
            }
        }
        let mut turn_table = HashMap::with_capacity(maneuvers.len());
        for m in &maneuvers {
            let get = |d: DirectedLink| -> Result<&Link> {
                let l = link_index.get(&d.link).map(|&k| &links[k]).ok_or_else(|| {
                    Error::InvalidInput(format!("maneuver references unknown link {}", d.link))
                })?;
                if !l.allows(d.travel) {
                    return Err(Error::InvalidInput(format!(
                        "maneuver uses backward travel on one-way link {}",
                        d.link
                    )));
                }
                Ok(l)
            };
            let (a, b) = (get(m.from)?, get(m.to)?);
            if a.head(m.from.travel) != b.tail(m.to.travel) {
                return Err(Error::InvalidInput(format!(
                    "maneuver {}->{} joins links that do not share an intersection",
                    m.from.link, m.to.link
                )));
            }
            turn_table.insert((m.from, m.to), m.permitted);
        }
        Ok(PrimalGraph {
            intersections,
            links,
            maneuvers,
            link_index,
            turn_table,
        })
    }

    pub fn intersections(&self) -> &[IntersectionId] {
        &self.intersections
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn maneuvers(&self) -> &[Maneuver] {
        &self.maneuvers
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_index.get(&id).map(|&k| &self.links[k])
    }

    /// Whether the turn `from -> to` is allowed. Assumes the two directed
    /// links meet at an intersection.
    pub fn permits(&self, from: DirectedLink, to: DirectedLink) -> bool {
        match self.turn_table.get(&(from, to)) {
            Some(&p) => p,
            None => !(from.link == to.link && from.travel != to.travel),
        }
    }

    /// Directed links entering / leaving each intersection, in link order.
    pub fn incidence(&self) -> BTreeMap<IntersectionId, (Vec<DirectedLink>, Vec<DirectedLink>)> {
        let mut map: BTreeMap<IntersectionId, (Vec<DirectedLink>, Vec<DirectedLink>)> = self
            .intersections
            .iter()
            .map(|&i| (i, (vec![], vec![])))
            .collect();
        for l in &self.links {
            for &t in l.travels() {
                let d = DirectedLink::new(l.id, t);
                map.get_mut(&l.head(t))
                    .expect("validated endpoint")
                    .0
                    .push(d);
                map.get_mut(&l.tail(t))
                    .expect("validated endpoint")
                    .1
                    .push(d);
            }
        }
        map
    }

    /// Number of link ends at each intersection (a loop counts twice).
    pub fn degrees(&self) -> BTreeMap<IntersectionId, usize> {
        let mut deg: BTreeMap<IntersectionId, usize> =
            self.intersections.iter().map(|&i| (i, 0)).collect();
        for l in &self.links {
            *deg.get_mut(&l.from).expect("validated endpoint") += 1;
            *deg.get_mut(&l.to).expect("validated endpoint") += 1;
        }
        deg
    }
}
