//! Test-only oracles shared by the integration suites: a from-scratch
//! SHA-256, a random temporal graph generator, and matrix reachability.
#![allow(dead_code, clippy::needless_range_loop)]

use decprov_core::{attrs, Boundary, Draft, NodeId, ProvLog, RelKind, Timestamp};
use rand::rngs::StdRng;
use rand::Rng;

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98,
    0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8,
    0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
    0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2,
];

/// Plain FIPS 180-4 SHA-256, independent of the `sha2` crate.
pub fn sha256(data: &[u8]) -> [u8; 32] {
    let mut h: [u32; 8] =
        [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19];
    let mut msg = data.to_vec();
    let bit_len = (data.len() as u64).wrapping_mul(8);
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&bit_len.to_be_bytes());
    for block in msg.chunks(64) {
        let mut w = [0u32; 64];
        for (i, word) in block.chunks(4).enumerate() {
            w[i] = u32::from_be_bytes([word[0], word[1], word[2], word[3]]);
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
        for i in 0..64 {
            let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh.wrapping_add(s1).wrapping_add(ch).wrapping_add(K[i]).wrapping_add(w[i]);
            let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = s0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (x, y) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *x = x.wrapping_add(y);
        }
    }
    let mut out = [0u8; 32];
    for (i, word) in h.iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

pub fn sha256_hex(data: &[u8]) -> String {
    sha256(data).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Entity,
    Activity,
}

/// A random log whose lineage edges were chosen to respect time order.
pub struct RandomGraph {
    pub log: ProvLog,
    /// Entity/activity nodes, indexed 0..n.
    pub nodes: Vec<NodeId>,
    pub kinds: Vec<Kind>,
    pub times: Vec<i64>,
    pub agents: Vec<NodeId>,
    /// Lineage edges `(src, dst)` over node indexes: src depends on dst.
    pub lineage: Vec<(usize, usize)>,
    /// `(node index, agent index)` for AttributedTo / AssociatedWith.
    pub attributions: Vec<(usize, usize)>,
    /// `(flow id, entity index, from agent, to agent, boundary)`.
    pub flows: Vec<(NodeId, usize, usize, usize, Boundary)>,
    /// Candidate edges rejected for pointing forward in time.
    pub rejected: usize,
}

impl RandomGraph {
    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    /// Order key of node `i`.
    pub fn key(&self, i: usize) -> (i64, &NodeId) {
        (self.times[i], &self.nodes[i])
    }
}

/// Up to `max_nodes` entities/activities with random (often tied)
/// timestamps, three agents, random lineage edges and flows. Edges that
/// would point forward in time are offered to the log and must be refused.
pub fn random_graph(rng: &mut StdRng, max_nodes: usize) -> RandomGraph {
    let mut log = ProvLog::in_memory();
    let n = rng.gen_range(1..=max_nodes);
    let agents: Vec<NodeId> = (0..3)
        .map(|i| {
            let mut a = attrs([("name", format!("agent-{i}"))]);
            a.insert("reliable".into(), (i != 2).into());
            log.append(Draft::agent(Timestamp::from_millis(0), a)).unwrap()
        })
        .collect();

    let mut nodes = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if rng.gen_bool(0.6) { Kind::Entity } else { Kind::Activity };
        let t = rng.gen_range(1..=12) * 1000;
        let a = attrs([("label", format!("node-{i}")), ("category", format!("c{}", rng.gen_range(0..3)))]);
        let draft = match kind {
            Kind::Entity => Draft::entity(Timestamp::from_millis(t), a),
            Kind::Activity => Draft::activity(Timestamp::from_millis(t), a),
        };
        nodes.push(log.append(draft).unwrap());
        kinds.push(kind);
        times.push(t);
    }

    let mut lineage = Vec::new();
    let mut rejected = 0;
    let attempts = rng.gen_range(0..=2 * n);
    for _ in 0..attempts {
        let (s, d) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if lineage.contains(&(s, d)) {
            continue;
        }
        let rel = match (kinds[s], kinds[d]) {
            (Kind::Activity, _) => RelKind::Used,
            (Kind::Entity, Kind::Activity) => RelKind::Generated,
            (Kind::Entity, Kind::Entity) => RelKind::DerivedFrom,
        };
        let t = Timestamp::from_millis(times[s].max(times[d]));
        let ok = (times[s], &nodes[s]) > (times[d], &nodes[d]);
        match log.append(Draft::relation(rel, &nodes[s], &nodes[d], t)) {
            Ok(_) => {
                assert!(ok, "edge {s}->{d} accepted against time order");
                lineage.push((s, d));
            }
            Err(decprov_core::Error::TemporalViolation { .. }) => {
                assert!(!ok, "edge {s}->{d} refused despite time order");
                rejected += 1;
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    let mut attributions = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.3) {
            let a = rng.gen_range(0..3);
            let rel = match kinds[i] {
                Kind::Entity => RelKind::AttributedTo,
                Kind::Activity => RelKind::AssociatedWith,
            };
            let t = Timestamp::from_millis(times[i]);
            log.append(Draft::relation(rel, &nodes[i], &agents[a], t)).unwrap();
            attributions.push((i, a));
        }
    }

    let mut flows = Vec::new();
    let entities: Vec<usize> = (0..n).filter(|&i| kinds[i] == Kind::Entity).collect();
    if !entities.is_empty() {
        for _ in 0..rng.gen_range(0..=n / 2) {
            let e = entities[rng.gen_range(0..entities.len())];
            let from = rng.gen_range(0..3);
            let to = rng.gen_range(0..3);
            let boundary = if from == to {
                Boundary::None
            } else {
                [Boundary::None, Boundary::Technical, Boundary::Administrative][rng.gen_range(0..3)]
            };
            let t = Timestamp::from_millis(times[e] + rng.gen_range(0..3) * 1000);
            let id = log.append(Draft::flow(&nodes[e], &agents[from], &agents[to], boundary, t)).unwrap();
            flows.push((id, e, from, to, boundary));
        }
    }

    RandomGraph { log, nodes, kinds, times, agents, lineage, attributions, flows, rejected }
}

/// `reach[i][j]`: node j is upstream of node i (i depends on j), including
/// i itself, restricted to nodes where `allowed` holds (the source row is
/// always allowed). Floyd–Warshall over the boolean adjacency matrix.
pub fn closure(n: usize, edges: &[(usize, usize)], allowed: &dyn Fn(usize) -> bool) -> Vec<Vec<bool>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(s, d) in edges {
        reach[s][d] = true;
    }
    for k in 0..n {
        if !allowed(k) {
            continue;
        }
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// All-pairs shortest hop counts over `edges` (`usize::MAX` = unreachable).
pub fn distances(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let inf = usize::MAX;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(s, t) in edges {
        d[s][t] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == inf {
                continue;
            }
            for j in 0..n {
                if d[k][j] != inf && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Brute-force glob: literal, or one `*` matching any split of the text.
pub fn glob_oracle(pattern: &str, text: &str) -> bool {
    match pattern.split_once('*') {
        None => pattern == text,
        Some((p, s)) => (0..=text.len()).any(|i| {
            (i..=text.len())
                .any(|j| text.is_char_boundary(i) && text.is_char_boundary(j) && &text[..i] == p && &text[j..] == s)
        }),
    }
}
