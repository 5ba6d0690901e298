use std::fmt;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::offers::{ElementKind, FspOffer};
use crate::pf::PowerFlow;

/// Shortest summed |z| (p.u.) between every pair of buses reachable over in-service branches.
#[derive(Debug, Clone)]
pub struct ElectricalDistance {
    graph: UnGraph<usize, f64>,
}

impl ElectricalDistance {
    pub fn new(pf: &PowerFlow) -> Self {
        let n = pf.ybus().dim();
        let mut graph = UnGraph::with_capacity(n, pf.branches().len());
        for i in 0..n {
            graph.add_node(i);
        }
        for b in pf.branches() {
            graph.add_edge(NodeIndex::new(b.from), NodeIndex::new(b.to), b.z_series().norm());
        }
        ElectricalDistance { graph }
    }

    /// Infinite for disconnected buses.
    pub fn between(&self, a: usize, b: usize) -> f64 {
        let d = dijkstra(&self.graph, NodeIndex::new(a), Some(NodeIndex::new(b)), |e| *e.weight());
        d.get(&NodeIndex::new(b)).copied().unwrap_or(f64::INFINITY)
    }
}

/// Bus position of an offer's element.
pub fn offer_bus(net: &Network, o: &FspOffer) -> Result<usize> {
    let id = match o.kind {
        ElementKind::Load => net.loads.get(o.element).map(|e| e.bus),
        ElementKind::Generator => net.sgens.get(o.element).map(|e| e.bus),
    };
    id.and_then(|id| net.bus_index(id))
        .ok_or_else(|| Error::Config(format!("{o} is not connected to a known bus")))
}

pub fn electrical_distance(net: &Network, pf: &PowerFlow, a: &FspOffer, b: &FspOffer) -> Result<f64> {
    let energized = net.energized();
    let (ba, bb) = (offer_bus(net, a)?, offer_bus(net, b)?);
    if !energized[ba] || !energized[bb] {
        return Err(Error::Contract(format!("{a} or {b} sits on a de-energized bus")));
    }
    Ok(ElectricalDistance::new(pf).between(ba, bb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub component: String,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub distance: f64,
}

impl fmt::Display for MergeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: [{}] + [{}] at {:.6} p.u.",
            self.component,
            self.left.join(", "),
            self.right.join(", "),
            self.distance
        )
    }
}

/// Group `members` by repeatedly fusing the two closest groups (single
/// linkage) until at most `max_groups` remain.
///
/// `dist[i][j]` is the distance between members `i` and `j` as listed in `members`.
pub fn merge_groups(
    members: &[usize],
    dist: &[Vec<f64>],
    max_groups: usize,
    label: impl Fn(usize) -> String,
    component: &str,
) -> (Vec<Vec<usize>>, Vec<MergeEvent>) {
    let mut groups: Vec<Vec<usize>> = (0..members.len()).map(|i| vec![i]).collect();
    let mut events = Vec::new();
    while groups.len() > max_groups.max(1) {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let d = groups[a]
                    .iter()
                    .flat_map(|&i| groups[b].iter().map(move |&j| dist[i][j]))
                    .fold(f64::INFINITY, f64::min);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (d, a, b) = best;
        let right = groups.remove(b);
        let names = |g: &[usize]| g.iter().map(|&i| label(members[i])).collect();
        events.push(MergeEvent {
            component: component.to_string(),
            left: names(&groups[a]),
            right: names(&right),
            distance: d,
        });
        groups[a].extend(right);
    }
    let out = groups.into_iter().map(|g| g.into_iter().map(|i| members[i]).collect()).collect();
    (out, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_pair_merges_first() {
        let d = vec![
            vec![0.0, 1.0, 5.0, 9.0],
            vec![1.0, 0.0, 4.0, 8.0],
            vec![5.0, 4.0, 0.0, 2.0],
            vec![9.0, 8.0, 2.0, 0.0],
        ];
        let (groups, events) = merge_groups(&[10, 11, 12, 13], &d, 2, |i| format!("f{i}"), "line 0");
        assert_eq!(groups, vec![vec![10, 11], vec![12, 13]]);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].to_string(), "line 0: [f10] + [f11] at 1.000000 p.u.");
        let (one, ev) = merge_groups(&[10, 11, 12, 13], &d, 1, |i| format!("f{i}"), "x");
        assert_eq!(one.len(), 1);
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[2].distance, 4.0);
    }

    #[test]
    fn no_merge_when_within_limit() {
        let (g, e) = merge_groups(&[0, 1], &[vec![0.0, 1.0], vec![1.0, 0.0]], 2, |i| i.to_string(), "x");
        assert_eq!(g, vec![vec![0], vec![1]]);
        assert!(e.is_empty());
    }
}
