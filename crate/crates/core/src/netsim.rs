//! Network model: roles, capacities, flows, min-cut feasibility and latency.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{LearningVariant, Link, PointSizes};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("min-cut endpoints must differ (`{0}`)")]
    SameNode(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("role {0:?} must be unique")]
    DuplicateRole(Role),
    #[error("edge {from}->{to}: need 0 <= flow <= rate <= capacity")]
    InvalidEdge { from: String, to: String },
    #[error("no edge {0}->{1}")]
    NoEdge(String, String),
    #[error("no path from `{0}` to `{1}`")]
    NoPath(String, String),
    #[error("edge with zero reliable rate on the path")]
    ZeroRateEdge,
    #[error("negative transfer size {0}")]
    NegativeSize(f64),
    #[error("latency profile lacks the {0:?} segment")]
    IncompleteProfile(Link),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Source,
    Destination,
    Relay,
    Genai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub role: Role,
}

/// Directed single- or multi-hop path abstracted as one edge. `capacity` is
/// used for feasibility, `rate` (reliable rate) for timing; both bits/second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub capacity: f64,
    pub rate: f64,
    #[serde(default)]
    pub flow: f64,
    /// Seconds.
    #[serde(default)]
    pub propagation: f64,
}

/// Immutable network snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct Topology {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyDoc {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl TryFrom<TopologyDoc> for Topology {
    type Error = NetError;
    fn try_from(d: TopologyDoc) -> Result<Self, NetError> {
        Topology::new(d.nodes, d.edges)
    }
}

impl From<Topology> for TopologyDoc {
    fn from(t: Topology) -> Self {
        TopologyDoc {
            nodes: t.nodes,
            edges: t.edges,
        }
    }
}

impl Topology {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, NetError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(NetError::DuplicateNode(n.id.clone()));
            }
        }
        for role in [Role::Source, Role::Destination] {
            if nodes.iter().filter(|n| n.role == role).count() > 1 {
                return Err(NetError::DuplicateRole(role));
            }
        }
        for e in &edges {
            for id in [&e.from, &e.to] {
                if !index.contains_key(id) {
                    return Err(NetError::UnknownNode(id.clone()));
                }
            }
            if !(0.0 <= e.flow && e.flow <= e.rate && e.rate <= e.capacity) {
                return Err(NetError::InvalidEdge {
                    from: e.from.clone(),
                    to: e.to.clone(),
                });
            }
        }
        Ok(Self { nodes, edges, index })
    }

    /// Source `s`, relay `r`, generative node `g`, destination `d`, with
    /// capacities for s→r, r→d, s→g, g→d, r→g and g→r. Rates equal
    /// capacities, propagation is zero.
    pub fn four_role(c_sr: f64, c_rd: f64, c_sg: f64, c_gd: f64, c_rg: f64, c_gr: f64) -> Result<Self, NetError> {
        let nodes = [
            ("s", Role::Source),
            ("r", Role::Relay),
            ("g", Role::Genai),
            ("d", Role::Destination),
        ]
        .into_iter()
        .map(|(id, role)| Node { id: id.into(), role })
        .collect();
        let edges = [
            ("s", "r", c_sr),
            ("r", "d", c_rd),
            ("s", "g", c_sg),
            ("g", "d", c_gd),
            ("r", "g", c_rg),
            ("g", "r", c_gr),
        ]
        .into_iter()
        .filter(|&(_, _, c)| c > 0.0)
        .map(|(a, b, c)| Edge {
            from: a.into(),
            to: b.into(),
            capacity: c,
            rate: c,
            flow: 0.0,
            propagation: 0.0,
        })
        .collect();
        Topology::new(nodes, edges)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn idx(&self, id: &str) -> Result<usize, NetError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| NetError::UnknownNode(id.into()))
    }

    pub fn node_with_role(&self, role: Role) -> Option<&Node> {
        self.nodes.iter().find(|n| n.role == role)
    }

    /// New snapshot with edge `i`'s flow replaced.
    pub fn with_flow(&self, i: usize, flow: f64) -> Result<Self, NetError> {
        let mut edges = self.edges.clone();
        edges[i].flow = flow;
        Topology::new(self.nodes.clone(), edges)
    }

    /// New snapshot without edge `i`.
    pub fn without_edge(&self, i: usize) -> Self {
        let mut t = self.clone();
        t.edges.remove(i);
        t
    }

    /// Max-flow value from `a` to `b` over edge capacities (Edmonds-Karp).
    pub fn min_cut(&self, a: &str, b: &str) -> Result<f64, NetError> {
        let (s, t) = (self.idx(a)?, self.idx(b)?);
        if s == t {
            return Err(NetError::SameNode(a.into()));
        }
        let n = self.nodes.len();
        let mut residual = vec![vec![0.0f64; n]; n];
        for e in &self.edges {
            residual[self.index[&e.from]][self.index[&e.to]] += e.capacity;
        }
        let mut total = 0.0;
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for v in 0..n {
                    if parent[v] == usize::MAX && residual[u][v] > 0.0 {
                        parent[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if parent[t] == usize::MAX {
                return Ok(total);
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                push = push.min(residual[parent[v]][v]);
                v = parent[v];
            }
            let mut v = t;
            while v != s {
                let u = parent[v];
                residual[u][v] -= push;
                residual[v][u] += push;
                v = u;
            }
            total += push;
        }
    }

    /// Bottleneck of the generative route: `min(min_cut(s, g), min_cut(g, d))`.
    pub fn path_capacity(&self, s: &str, g: &str, d: &str) -> Result<f64, NetError> {
        Ok(self.min_cut(s, g)?.min(self.min_cut(g, d)?))
    }

    /// Outflow minus inflow at node `i`.
    pub fn divergence(&self, i: &str) -> Result<f64, NetError> {
        self.idx(i)?;
        let out: f64 = self.edges.iter().filter(|e| e.from == i).map(|e| e.flow).sum();
        let inflow: f64 = self.edges.iter().filter(|e| e.to == i).map(|e| e.flow).sum();
        Ok(out - inflow)
    }

    /// Explicit path through the listed nodes; between consecutive nodes the
    /// fastest parallel edge is used.
    pub fn path(&self, via: &[&str]) -> Result<Path, NetError> {
        let mut hops = Vec::new();
        for w in via.windows(2) {
            self.idx(w[0])?;
            self.idx(w[1])?;
            let e = self
                .edges
                .iter()
                .filter(|e| e.from == w[0] && e.to == w[1])
                .max_by(|x, y| x.rate.total_cmp(&y.rate))
                .ok_or_else(|| NetError::NoEdge(w[0].into(), w[1].into()))?;
            hops.push(Hop {
                rate: e.rate,
                propagation: e.propagation,
            });
        }
        Ok(Path { hops })
    }

    /// Fewest-hop path from `a` to `b`.
    pub fn shortest_path(&self, a: &str, b: &str) -> Result<Path, NetError> {
        let (s, t) = (self.idx(a)?, self.idx(b)?);
        let mut parent = vec![usize::MAX; self.nodes.len()];
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| self.index[&e.from] == u) {
                let v = self.index[&e.to];
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            return Err(NetError::NoPath(a.into(), b.into()));
        }
        let mut ids = vec![t];
        while *ids.last().unwrap() != s {
            ids.push(parent[*ids.last().unwrap()]);
        }
        let names: Vec<&str> = ids.iter().rev().map(|&i| self.nodes[i].id.as_str()).collect();
        self.path(&names)
    }

    pub fn reachable(&self, a: &str, b: &str) -> Result<bool, NetError> {
        match self.shortest_path(a, b) {
            Ok(_) => Ok(true),
            Err(NetError::NoPath(..)) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub rate: f64,
    pub propagation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Path {
    pub hops: Vec<Hop>,
}

impl Path {
    pub fn single(rate: f64, propagation: f64) -> Self {
        Path {
            hops: vec![Hop { rate, propagation }],
        }
    }
}

/// Store-and-forward delay of `size_bits` over `path`.
pub fn transfer_time(size_bits: f64, path: &Path) -> Result<f64, NetError> {
    if size_bits < 0.0 {
        return Err(NetError::NegativeSize(size_bits));
    }
    path.hops.iter().try_fold(0.0, |acc, h| {
        if h.rate > 0.0 {
            Ok(acc + size_bits / h.rate + h.propagation)
        } else {
            Err(NetError::ZeroRateEdge)
        }
    })
}

/// Per-data-point latency components: `T_P` (prompt encoding at the source)
/// and `T_G` (generation at the node) in seconds, plus the path used for each
/// link the learning protocols talk over.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub encode_time: f64,
    pub generation_time: f64,
    pub links: BTreeMap<Link, Path>,
}

impl LatencyProfile {
    /// Fills every link for which `topo` has a path between the role holders.
    pub fn from_topology(
        topo: &Topology,
        s: &str,
        g: &str,
        d: &str,
        encode_time: f64,
        generation_time: f64,
    ) -> Result<Self, NetError> {
        let mut links = BTreeMap::new();
        for (link, a, b) in [
            (Link::SourceToNode, s, g),
            (Link::NodeToSource, g, s),
            (Link::NodeToDestination, g, d),
            (Link::SourceToDestination, s, d),
        ] {
            match topo.shortest_path(a, b) {
                Ok(p) => {
                    links.insert(link, p);
                }
                Err(NetError::NoPath(..)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            encode_time,
            generation_time,
            links,
        })
    }

    pub fn link(&self, link: Link) -> Result<&Path, NetError> {
        self.links.get(&link).ok_or(NetError::IncompleteProfile(link))
    }

    /// Transfer time of one message over `link`.
    pub fn message_time(&self, link: Link, bits: u64) -> Result<f64, NetError> {
        transfer_time(bits as f64, self.link(link)?)
    }
}

/// `T_L = T_P + T_C + T_G` for one data point, where `T_C` sums the transfer
/// times of exactly the data-plane messages `variant` exchanges per point.
pub fn total_latency(profile: &LatencyProfile, sizes: &PointSizes, variant: LearningVariant) -> Result<f64, NetError> {
    let t_c = variant.messages(sizes).into_iter().try_fold(0.0, |acc, (link, bits)| {
        Ok::<_, NetError>(acc + profile.message_time(link, bits)?)
    })?;
    Ok(profile.encode_time + t_c + profile.generation_time)
}
