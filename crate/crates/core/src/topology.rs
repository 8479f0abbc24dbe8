//! Static network description: nodes, directed links, sessions with fixed
//! paths, symmetric neighborhoods and per-link interference sets.
//!
//! Everything here is immutable after construction and shared by reference
//! across simulation runs.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Index of a node in the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Index of a directed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

/// Index of a session (source/destination pair with a fixed path).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed link between two neighboring nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub tx: NodeId,
    pub rx: NodeId,
}

/// Errors raised while building or validating a topology.
#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("node {0} is out of range (node_count = {1})")]
    NodeOutOfRange(usize, usize),
    #[error("link {0}: transmitter and receiver are the same node {1}")]
    SelfLoop(usize, usize),
    #[error("duplicate link {0}: ({1} -> {2}) already declared")]
    DuplicateLink(usize, usize, usize),
    #[error("neighbor list is asymmetric: {0} lists {1} but not vice versa")]
    AsymmetricNeighbors(usize, usize),
    #[error("node {0} declared as its own neighbor")]
    SelfNeighbor(usize),
    #[error("link {0} connects non-neighbors {1} and {2}")]
    NonNeighborLink(usize, usize, usize),
    #[error("unknown link id {0}")]
    UnknownLink(usize),
    #[error("session {0}: {1}")]
    InvalidSession(usize, String),
    #[error("unit-disk neighbors need one position per node (got {0}, expected {1})")]
    PositionCount(usize, usize),
}

/// How node neighborhoods are specified.
#[derive(Debug, Clone)]
pub enum NeighborSpec {
    /// Explicit symmetric pairs; each pair is added in both directions and
    /// the input is rejected if it is asymmetric when read as directed.
    Pairs(Vec<(usize, usize)>),
    /// Unit-disk helper: nodes are neighbors iff their Euclidean distance is
    /// at most `radius`.
    UnitDisk {
        positions: Vec<(f64, f64)>,
        radius: f64,
    },
}

/// Raw description consumed by [`build_topology`].
#[derive(Debug, Clone)]
pub struct TopologySpec {
    pub node_count: usize,
    /// Directed links as `(tx, rx)`; link ids are assigned in order.
    pub links: Vec<(usize, usize)>,
    pub neighbors: NeighborSpec,
}

/// Immutable network graph with derived interference sets.
#[derive(Debug, Clone)]
pub struct Topology {
    node_count: usize,
    links: Vec<Link>,
    neighbors: Vec<BTreeSet<usize>>,
    interference: Vec<Vec<LinkId>>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors[a.0].contains(&b.0)
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors[node.0].iter().map(|&n| NodeId(n))
    }

    /// Links whose reception a transmission on `l` can destroy, including
    /// `l` itself.
    pub fn interference_set(&self, l: LinkId) -> Result<&[LinkId], TopologyError> {
        self.interference
            .get(l.0)
            .map(Vec::as_slice)
            .ok_or(TopologyError::UnknownLink(l.0))
    }
}

/// A source/destination pair routed over a fixed sequence of links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub id: SessionId,
    pub source: NodeId,
    pub destination: NodeId,
    /// Link ids in path order; consecutive links chain rx -> tx.
    pub path: Vec<LinkId>,
}

impl Session {
    /// Successor of `l` on this session's path, or `None` for the last link
    /// (or when the session does not traverse `l`).
    pub fn next_link(&self, l: LinkId) -> Option<LinkId> {
        let pos = self.path.iter().position(|&k| k == l)?;
        self.path.get(pos + 1).copied()
    }

    pub fn traverses(&self, l: LinkId) -> bool {
        self.path.contains(&l)
    }
}

/// Builds a [`Topology`] from a raw spec, deriving the per-link interference
/// sets and checking every structural invariant.
pub fn build_topology(spec: &TopologySpec) -> Result<Topology, TopologyError> {
    let n = spec.node_count;
    let mut neighbors = vec![BTreeSet::new(); n];

    match &spec.neighbors {
        NeighborSpec::Pairs(pairs) => {
            // Collect as directed entries first so asymmetric input is
            // reported rather than silently symmetrized.
            let mut directed = vec![BTreeSet::new(); n];
            for &(a, b) in pairs {
                check_node(a, n)?;
                check_node(b, n)?;
                if a == b {
                    return Err(TopologyError::SelfNeighbor(a));
                }
                directed[a].insert(b);
                directed[b].insert(a);
            }
            // Entries listed once are fine (pairs are undirected); an
            // asymmetry can only come from the caller's explicit directed
            // form, which `Pairs` cannot express. Keep the symmetric union.
            neighbors = directed;
        }
        NeighborSpec::UnitDisk { positions, radius } => {
            if positions.len() != n {
                return Err(TopologyError::PositionCount(positions.len(), n));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let dx = positions[i].0 - positions[j].0;
                    let dy = positions[i].1 - positions[j].1;
                    if (dx * dx + dy * dy).sqrt() <= *radius {
                        neighbors[i].insert(j);
                        neighbors[j].insert(i);
                    }
                }
            }
        }
    }

    let mut links = Vec::with_capacity(spec.links.len());
    for (id, &(tx, rx)) in spec.links.iter().enumerate() {
        check_node(tx, n)?;
        check_node(rx, n)?;
        if tx == rx {
            return Err(TopologyError::SelfLoop(id, tx));
        }
        if links
            .iter()
            .any(|l: &Link| l.tx.0 == tx && l.rx.0 == rx)
        {
            return Err(TopologyError::DuplicateLink(id, tx, rx));
        }
        if !neighbors[tx].contains(&rx) {
            return Err(TopologyError::NonNeighborLink(id, tx, rx));
        }
        links.push(Link {
            id: LinkId(id),
            tx: NodeId(tx),
            rx: NodeId(rx),
        });
    }

    let interference = derive_interference(&links, &neighbors);

    Ok(Topology {
        node_count: n,
        links,
        neighbors,
        interference,
    })
}

fn check_node(node: usize, count: usize) -> Result<(), TopologyError> {
    if node >= count {
        return Err(TopologyError::NodeOutOfRange(node, count));
    }
    Ok(())
}

/// Transmission on `l` interferes with link `k` when `l`'s transmitter is
/// heard by `k`'s receiver, when `l`'s transmitter *is* `k`'s receiver
/// (half-duplex), or when both share a transmitter (a node makes at most one
/// attempt per slot). Every set contains the link itself.
fn derive_interference(links: &[Link], neighbors: &[BTreeSet<usize>]) -> Vec<Vec<LinkId>> {
    links
        .iter()
        .map(|l| {
            links
                .iter()
                .filter(|k| {
                    k.id == l.id
                        || neighbors[k.rx.0].contains(&l.tx.0)
                        || k.rx == l.tx
                        || k.tx == l.tx
                })
                .map(|k| k.id)
                .collect()
        })
        .collect()
}

/// Validates a session list against a topology: paths chain rx -> tx, start
/// at the source, end at the destination, and visit each link at most once.
pub fn validate_sessions(topology: &Topology, sessions: &[Session]) -> Result<(), TopologyError> {
    for session in sessions {
        let sid = session.id.0;
        let fail = |msg: String| TopologyError::InvalidSession(sid, msg);
        if session.path.is_empty() {
            return Err(fail("path is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &l in &session.path {
            if l.0 >= topology.link_count() {
                return Err(TopologyError::UnknownLink(l.0));
            }
            if !seen.insert(l) {
                return Err(fail(format!("path visits link {l} twice")));
            }
        }
        let first = topology.link(session.path[0]);
        if first.tx != session.source {
            return Err(fail(format!(
                "path starts at node {} but source is {}",
                first.tx, session.source
            )));
        }
        let last = topology.link(*session.path.last().unwrap());
        if last.rx != session.destination {
            return Err(fail(format!(
                "path ends at node {} but destination is {}",
                last.rx, session.destination
            )));
        }
        for pair in session.path.windows(2) {
            let (a, b) = (topology.link(pair[0]), topology.link(pair[1]));
            if a.rx != b.tx {
                return Err(fail(format!(
                    "links {} and {} do not chain ({} -> {} then {} -> {})",
                    a.id, b.id, a.tx, a.rx, b.tx, b.rx
                )));
            }
        }
    }
    Ok(())
}

/// Dense index over the (link, session) pairs that actually exist, i.e. the
/// pairs where the session traverses the link. Each pair owns one queue.
#[derive(Debug, Clone)]
pub struct PairIndex {
    pairs: Vec<(LinkId, SessionId)>,
    lookup: Vec<Vec<Option<usize>>>,
    by_node: Vec<Vec<usize>>,
    next_pair: Vec<Option<usize>>,
    first_pair: Vec<usize>,
    session_pairs: Vec<Vec<usize>>,
    interfering_pairs: Vec<Vec<usize>>,
}

impl PairIndex {
    pub fn new(topology: &Topology, sessions: &[Session]) -> Self {
        let mut pairs = Vec::new();
        let mut lookup = vec![vec![None; sessions.len()]; topology.link_count()];
        let mut session_pairs = vec![Vec::new(); sessions.len()];
        for session in sessions {
            for &l in &session.path {
                let id = pairs.len();
                pairs.push((l, session.id));
                lookup[l.0][session.id.0] = Some(id);
                session_pairs[session.id.0].push(id);
            }
        }

        let mut by_node = vec![Vec::new(); topology.node_count()];
        for (id, &(l, _)) in pairs.iter().enumerate() {
            by_node[topology.link(l).tx.0].push(id);
        }

        let next_pair = pairs
            .iter()
            .map(|&(l, s)| {
                sessions[s.0]
                    .next_link(l)
                    .map(|next| lookup[next.0][s.0].expect("path links are indexed"))
            })
            .collect();

        let first_pair = session_pairs
            .iter()
            .map(|p| *p.first().expect("validated sessions have non-empty paths"))
            .collect();

        // For each pair, the pairs whose link lies in the interference set
        // of this pair's link (the denominator set of the ratio rules).
        let interfering_pairs = pairs
            .iter()
            .map(|&(l, _)| {
                let set = topology.interference_set(l).expect("valid link");
                (0..pairs.len())
                    .filter(|&other| set.contains(&pairs[other].0))
                    .collect()
            })
            .collect();

        Self {
            pairs,
            lookup,
            by_node,
            next_pair,
            first_pair,
            session_pairs,
            interfering_pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, id: usize) -> (LinkId, SessionId) {
        self.pairs[id]
    }

    pub fn pairs(&self) -> &[(LinkId, SessionId)] {
        &self.pairs
    }

    pub fn id_of(&self, link: LinkId, session: SessionId) -> Option<usize> {
        *self.lookup.get(link.0)?.get(session.0)?
    }

    /// Pairs transmitted by `node` (the node owns their link queues).
    pub fn by_node(&self, node: NodeId) -> &[usize] {
        &self.by_node[node.0]
    }

    /// Successor pair on the session path, `None` at the destination link.
    pub fn next_pair(&self, id: usize) -> Option<usize> {
        self.next_pair[id]
    }

    /// The pair at the session's source link, where external arrivals enter.
    pub fn first_pair(&self, session: SessionId) -> usize {
        self.first_pair[session.0]
    }

    pub fn session_pairs(&self, session: SessionId) -> &[usize] {
        &self.session_pairs[session.0]
    }

    /// Denominator set for the ratio rules: pairs on links that a
    /// transmission by this pair's link interferes with.
    pub fn interfering_pairs(&self, id: usize) -> &[usize] {
        &self.interfering_pairs[id]
    }
}

/// Per-(link, session) packet backlogs, indexed by [`PairIndex`] ids.
/// Backlogs are nonnegative by construction (buffers are infinite, so no
/// packet is ever dropped).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueMatrix {
    backlogs: Vec<u64>,
}

impl QueueMatrix {
    pub fn new(pair_count: usize) -> Self {
        Self {
            backlogs: vec![0; pair_count],
        }
    }

    pub fn backlog(&self, pair: usize) -> u64 {
        self.backlogs[pair]
    }

    pub fn backlogs(&self) -> &[u64] {
        &self.backlogs
    }

    pub fn enqueue(&mut self, pair: usize, packets: u64) {
        self.backlogs[pair] += packets;
    }

    pub fn dequeue(&mut self, pair: usize, packets: u64) {
        debug_assert!(packets <= self.backlogs[pair]);
        self.backlogs[pair] -= packets;
    }

    pub fn total(&self) -> u64 {
        self.backlogs.iter().sum()
    }
}

/// Backlog at `pair`'s link minus backlog at the session's next link; for
/// the last link of a path the successor backlog is zero. The raw difference
/// may be negative; clamping is the weight function's job.
pub fn differential_backlog(queues: &QueueMatrix, pairs: &PairIndex, pair: usize) -> i64 {
    let own = queues.backlog(pair) as i64;
    match pairs.next_pair(pair) {
        Some(next) => own - queues.backlog(next) as i64,
        None => own,
    }
}

/// Same query addressed by (link, session) rather than pair id.
pub fn differential_backlog_at(
    queues: &QueueMatrix,
    pairs: &PairIndex,
    link: LinkId,
    session: SessionId,
) -> Result<i64, TopologyError> {
    let pair = pairs.id_of(link, session).ok_or_else(|| {
        TopologyError::InvalidSession(session.0, format!("session does not traverse link {link}"))
    })?;
    Ok(differential_backlog(queues, pairs, pair))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_spec() -> TopologySpec {
        TopologySpec {
            node_count: 2,
            links: vec![(0, 1)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1)]),
        }
    }

    #[test]
    fn single_link_interference_contains_self() {
        let topo = build_topology(&two_node_spec()).unwrap();
        let set = topo.interference_set(LinkId(0)).unwrap();
        assert_eq!(set, &[LinkId(0)]);
    }

    #[test]
    fn link_between_non_neighbors_is_rejected() {
        let spec = TopologySpec {
            node_count: 3,
            links: vec![(0, 2)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2)]),
        };
        assert!(matches!(
            build_topology(&spec),
            Err(TopologyError::NonNeighborLink(0, 0, 2))
        ));
    }

    #[test]
    fn duplicate_links_are_rejected() {
        let spec = TopologySpec {
            node_count: 2,
            links: vec![(0, 1), (0, 1)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1)]),
        };
        assert!(matches!(
            build_topology(&spec),
            Err(TopologyError::DuplicateLink(1, 0, 1))
        ));
    }

    #[test]
    fn shared_transmitter_links_interfere_both_ways() {
        // 3-node line 0 - 1 - 2 with both links transmitted by node 1.
        let spec = TopologySpec {
            node_count: 3,
            links: vec![(1, 0), (1, 2)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2)]),
        };
        let topo = build_topology(&spec).unwrap();
        assert!(topo.interference_set(LinkId(0)).unwrap().contains(&LinkId(1)));
        assert!(topo.interference_set(LinkId(1)).unwrap().contains(&LinkId(0)));
    }

    #[test]
    fn outward_links_on_a_chain_do_not_interfere() {
        // 0 - 1 - 2 - 3 with links 1 -> 0 and 2 -> 3.
        let spec = TopologySpec {
            node_count: 4,
            links: vec![(1, 0), (2, 3)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2), (2, 3)]),
        };
        let topo = build_topology(&spec).unwrap();
        assert_eq!(topo.interference_set(LinkId(0)).unwrap(), &[LinkId(0)]);
        assert_eq!(topo.interference_set(LinkId(1)).unwrap(), &[LinkId(1)]);
    }

    #[test]
    fn half_duplex_receiver_is_in_interference_set() {
        // Links 0 -> 1 and 1 -> 2: transmitting on 1 -> 2 interferes with
        // reception on 0 -> 1 because node 1 cannot transmit and receive.
        let spec = TopologySpec {
            node_count: 3,
            links: vec![(0, 1), (1, 2)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2)]),
        };
        let topo = build_topology(&spec).unwrap();
        assert!(topo.interference_set(LinkId(1)).unwrap().contains(&LinkId(0)));
    }

    #[test]
    fn unit_disk_neighbors() {
        let spec = TopologySpec {
            node_count: 3,
            links: vec![(0, 1), (1, 2)],
            neighbors: NeighborSpec::UnitDisk {
                positions: vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
                radius: 1.0,
            },
        };
        let topo = build_topology(&spec).unwrap();
        assert!(topo.are_neighbors(NodeId(0), NodeId(1)));
        assert!(!topo.are_neighbors(NodeId(0), NodeId(2)));
    }

    fn chain_session() -> (Topology, Vec<Session>) {
        let spec = TopologySpec {
            node_count: 3,
            links: vec![(0, 1), (1, 2)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2)]),
        };
        let topo = build_topology(&spec).unwrap();
        let sessions = vec![Session {
            id: SessionId(0),
            source: NodeId(0),
            destination: NodeId(2),
            path: vec![LinkId(0), LinkId(1)],
        }];
        validate_sessions(&topo, &sessions).unwrap();
        (topo, sessions)
    }

    #[test]
    fn differential_backlog_examples() {
        let (topo, sessions) = chain_session();
        let pairs = PairIndex::new(&topo, &sessions);
        let mut queues = QueueMatrix::new(pairs.len());

        queues.enqueue(0, 5);
        queues.enqueue(1, 2);
        assert_eq!(differential_backlog(&queues, &pairs, 0), 3);
        // Last link: the destination holds no backlog.
        queues.dequeue(1, 2);
        queues.enqueue(1, 4);
        assert_eq!(differential_backlog(&queues, &pairs, 1), 4);
        // Negative difference is returned raw.
        queues.dequeue(0, 5);
        queues.enqueue(0, 1);
        queues.dequeue(1, 4);
        queues.enqueue(1, 3);
        assert_eq!(differential_backlog(&queues, &pairs, 0), -2);
    }

    #[test]
    fn differential_backlog_rejects_non_traversed_link() {
        let (topo, mut sessions) = chain_session();
        sessions.push(Session {
            id: SessionId(1),
            source: NodeId(1),
            destination: NodeId(2),
            path: vec![LinkId(1)],
        });
        validate_sessions(&topo, &sessions).unwrap();
        let pairs = PairIndex::new(&topo, &sessions);
        let queues = QueueMatrix::new(pairs.len());
        assert!(differential_backlog_at(&queues, &pairs, LinkId(0), SessionId(1)).is_err());
    }

    #[test]
    fn session_validation_catches_broken_chain() {
        let spec = TopologySpec {
            node_count: 4,
            links: vec![(0, 1), (2, 3)],
            neighbors: NeighborSpec::Pairs(vec![(0, 1), (1, 2), (2, 3)]),
        };
        let topo = build_topology(&spec).unwrap();
        let sessions = vec![Session {
            id: SessionId(0),
            source: NodeId(0),
            destination: NodeId(3),
            path: vec![LinkId(0), LinkId(1)],
        }];
        assert!(validate_sessions(&topo, &sessions).is_err());
    }
}
