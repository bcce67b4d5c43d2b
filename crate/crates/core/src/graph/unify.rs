//! Contraction of degree-2 link chains into single road segments.

use std::collections::{BTreeSet, HashMap};

use super::attrs::{aggregate_links, MeanMode};
use super::primal::{
    DirectedLink, Directionality, IntersectionId, Link, Maneuver, PrimalGraph, Travel,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Step {
    link: usize,
    /// Walking this link runs against its stored `from -> to` orientation.
    reversed: bool,
}

impl Step {
    fn walk_travel(&self) -> Travel {
        if self.reversed {
            Travel::Backward
        } else {
            Travel::Forward
        }
    }
}

/// An intersection is interior to a chain when exactly two distinct links
/// meet there, traffic can pass straight through it in every direction the
/// links allow, and nothing else branches off.
fn is_interior(primal: &PrimalGraph, node: IntersectionId, ends: &[(usize, bool)]) -> bool {
    if ends.len() != 2 || ends[0].0 == ends[1].0 {
        return false;
    }
    let links = primal.links();
    let (a, b) = (&links[ends[0].0], &links[ends[1].0]);
    // Travel direction of each link that enters `node`.
    let entering = |l: &Link| {
        if l.to == node {
            Travel::Forward
        } else {
            Travel::Backward
        }
    };
    match (a.direction, b.direction) {
        (Directionality::TwoWay, Directionality::TwoWay) => {
            let (ia, ib) = (entering(a), entering(b));
            primal.permits(
                DirectedLink::new(a.id, ia),
                DirectedLink::new(b.id, ib.reversed()),
            ) && primal.permits(
                DirectedLink::new(b.id, ib),
                DirectedLink::new(a.id, ia.reversed()),
            )
        }
        (Directionality::OneWay, Directionality::OneWay) => {
            let a_in = a.to == node;
            let b_in = b.to == node;
            if a_in == b_in {
                return false;
            }
            let (inc, out) = if a_in { (a, b) } else { (b, a) };
            primal.permits(
                DirectedLink::new(inc.id, Travel::Forward),
                DirectedLink::new(out.id, Travel::Forward),
            )
        }
        _ => false,
    }
}

/// Replaces every maximal chain of links through interior intersections by
/// a single link with aggregated descriptors. Turns at removed intersections
/// are dropped; turns at the chain ends are rewritten onto the new link.
///
/// A closed ring of interior intersections has no end to anchor the merged
/// segment and is reported as an error.
pub fn unify_segments(primal: &PrimalGraph, mode: MeanMode) -> Result<PrimalGraph> {
    let links = primal.links();
    let mut ends: HashMap<IntersectionId, Vec<(usize, bool)>> = HashMap::new();
    for (k, l) in links.iter().enumerate() {
        ends.entry(l.from).or_default().push((k, false));
        ends.entry(l.to).or_default().push((k, true));
    }
    let empty = Vec::new();
    let interior: BTreeSet<IntersectionId> = primal
        .intersections()
        .iter()
        .copied()
        .filter(|&i| is_interior(primal, i, ends.get(&i).unwrap_or(&empty)))
        .collect();

    let mut visited = vec![false; links.len()];
    let mut chains: Vec<(IntersectionId, IntersectionId, Vec<Step>)> = Vec::new();
    for &anchor in primal.intersections() {
        if interior.contains(&anchor) {
            continue;
        }
        for &(start_link, _) in ends.get(&anchor).unwrap_or(&empty) {
            if visited[start_link] {
                continue;
            }
            let mut steps = Vec::new();
            let mut cur = anchor;
            let mut link = start_link;
            let end = loop {
                visited[link] = true;
                let l = &links[link];
                let reversed = l.from != cur;
                steps.push(Step { link, reversed });
                let next = if reversed { l.from } else { l.to };
                if !interior.contains(&next) {
                    break next;
                }
                let (other, _) = ends[&next]
                    .iter()
                    .copied()
                    .find(|&(k, _)| k != link)
                    .expect("interior intersections have two distinct links");
                cur = next;
                link = other;
            };
            chains.push((anchor, end, steps));
        }
    }
    if let Some(first) = visited.iter().position(|v| !v) {
        let ring: Vec<String> = visited
            .iter()
            .enumerate()
            .filter(|(_, v)| !**v)
            .map(|(k, _)| links[k].id.to_string())
            .collect();
        return Err(Error::InvalidInput(format!(
            "closed ring of degree-2 intersections without an anchor (starting at link {}): links [{}]",
            links[first].id,
            ring.join(", ")
        )));
    }

    // Representative link index -> replacement link.
    let mut replacement: HashMap<usize, Link> = HashMap::new();
    let mut merged: BTreeSet<usize> = BTreeSet::new();
    // (old directed link, intersection where the turn happens) -> new directed link
    let mut remap: HashMap<(DirectedLink, IntersectionId), DirectedLink> = HashMap::new();
    for (mut start, mut end, mut steps) in chains {
        if steps.len() < 2 {
            continue;
        }
        let first = &links[steps[0].link];
        if first.direction == Directionality::OneWay && steps[0].reversed {
            // Orient the merged one-way segment along the traffic flow.
            steps.reverse();
            for s in &mut steps {
                s.reversed = !s.reversed;
            }
            std::mem::swap(&mut start, &mut end);
        }
        let chain_attrs: Vec<_> = steps.iter().map(|s| links[s.link].attrs).collect();
        let head = steps[0];
        let tail = *steps.last().unwrap();
        let new_id = links[head.link].id;
        let new_link = Link {
            id: new_id,
            from: start,
            to: end,
            direction: links[head.link].direction,
            attrs: aggregate_links(&chain_attrs, mode)?,
        };
        for s in &steps {
            merged.insert(s.link);
        }
        let old_first = links[head.link].id;
        let old_last = links[tail.link].id;
        // Leaving the chain start along the walk, or arriving back at it.
        remap.insert(
            (DirectedLink::new(old_first, head.walk_travel()), start),
            DirectedLink::new(new_id, Travel::Forward),
        );
        remap.insert(
            (
                DirectedLink::new(old_first, head.walk_travel().reversed()),
                start,
            ),
            DirectedLink::new(new_id, Travel::Backward),
        );
        // Arriving at the chain end along the walk, or leaving it backwards.
        remap.insert(
            (DirectedLink::new(old_last, tail.walk_travel()), end),
            DirectedLink::new(new_id, Travel::Forward),
        );
        remap.insert(
            (
                DirectedLink::new(old_last, tail.walk_travel().reversed()),
                end,
            ),
            DirectedLink::new(new_id, Travel::Backward),
        );
        replacement.insert(head.link, new_link);
    }

    let new_links: Vec<Link> = links
        .iter()
        .enumerate()
        .filter_map(|(k, l)| match replacement.get(&k) {
            Some(r) => Some(r.clone()),
            None if merged.contains(&k) => None,
            None => Some(l.clone()),
        })
        .collect();

    let map = |d: DirectedLink, at: IntersectionId| remap.get(&(d, at)).copied().unwrap_or(d);
    let mut new_maneuvers = Vec::new();
    for m in primal.maneuvers() {
        let at = primal
            .link(m.from.link)
            .expect("validated maneuver")
            .head(m.from.travel);
        if interior.contains(&at) {
            continue;
        }
        new_maneuvers.push(Maneuver {
            from: map(m.from, at),
            to: map(m.to, at),
            permitted: m.permitted,
        });
    }

    let intersections = primal
        .intersections()
        .iter()
        .copied()
        .filter(|i| !interior.contains(i))
        .collect();
    PrimalGraph::new(intersections, new_links, new_maneuvers)
}
