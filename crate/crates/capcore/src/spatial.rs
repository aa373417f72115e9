//! Random spatial networks on the unit-density square.
//!
//! Networks live on the square `[0, √n]²`, so the expected node density is one
//! node per unit area. Generation is deterministic in the seed: regenerating
//! with the same `(n, seed)` reproduces the node set bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::round_sig;

/// A planar location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance to `other`.
    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

// Points serialize as `[x, y]` with coordinates rounded to 12 significant
// digits, which keeps emitted files compact and platform-stable.
impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&round_sig(self.x, 12))?;
        seq.serialize_element(&round_sig(self.y, 12))?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;
        impl<'de> Visitor<'de> for PointVisitor {
            type Value = Point;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a two-element [x, y] array")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Point, A::Error> {
                let x = seq
                    .next_element::<f64>()?
                    .ok_or_else(|| serde::de::Error::invalid_length(0, &self))?;
                let y = seq
                    .next_element::<f64>()?
                    .ok_or_else(|| serde::de::Error::invalid_length(1, &self))?;
                if seq.next_element::<f64>()?.is_some() {
                    return Err(serde::de::Error::invalid_length(3, &self));
                }
                Ok(Point { x, y })
            }
        }
        deserializer.deserialize_seq(PointVisitor)
    }
}

/// A set of nodes on the square `[0, side_length]²` together with the seed
/// that produced it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeSet {
    pub side_length: f64,
    pub seed: u64,
    pub nodes: Vec<Point>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Channel class of a directed link: relay traffic between backbone nodes, or
/// access traffic between a node and its backbone anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkClass {
    Backbone,
    Peripheral,
}

/// A directed transmitter → receiver link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub tx: Point,
    pub rx: Point,
    pub class: LinkClass,
}

impl Link {
    pub fn new(tx: Point, rx: Point, class: LinkClass) -> Self {
        Link { tx, rx, class }
    }

    /// Transmitter–receiver distance.
    pub fn len(&self) -> f64 {
        self.tx.dist(self.rx)
    }
}

/// Smallest distance between any endpoint of `a` and any endpoint of `b`.
///
/// This is the separation that matters when both endpoints of a link can act
/// as transmitters (bi-directional traffic such as data plus acknowledgments).
pub fn link_gap(a: &Link, b: &Link) -> f64 {
    b.tx.dist(a.rx)
        .min(b.rx.dist(a.tx))
        .min(b.rx.dist(a.rx))
        .min(b.tx.dist(a.tx))
}

/// Source–sink demands over a node set: `pairs[k] = (source, sink)` with a
/// demanded rate per pair.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SourceSinkPairs {
    pub pairs: Vec<(u32, u32)>,
    pub rates: Vec<f64>,
}

impl SourceSinkPairs {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn place_nodes(rng: &mut ChaCha8Rng, count: usize, side: f64) -> Vec<Point> {
    (0..count)
        .map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
        .collect()
}

/// Generate a random network of expected size `n` on the square `[0, √n]²`.
///
/// The node count is Poisson with mean `n` (so disjoint regions carry
/// independent point counts); positions are independent uniforms. Use
/// [`generate_network_fixed`] to pin the count to exactly `n`.
pub fn generate_network(n: u64, seed: u64) -> Result<NodeSet> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "expected node count must be positive (side length would be 0)".into(),
        ));
    }
    let side = (n as f64).sqrt();
    let mut rng = rng_for(seed);
    let poisson = Poisson::new(n as f64)
        .map_err(|e| Error::InvalidParameter(format!("invalid Poisson mean {n}: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;
    Ok(NodeSet {
        side_length: side,
        seed,
        nodes: place_nodes(&mut rng, count, side),
    })
}

/// Generate a network with exactly `n` nodes uniform on `[0, √n]²`.
pub fn generate_network_fixed(n: u64, seed: u64) -> Result<NodeSet> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "node count must be positive (side length would be 0)".into(),
        ));
    }
    let side = (n as f64).sqrt();
    let mut rng = rng_for(seed);
    Ok(NodeSet {
        side_length: side,
        seed,
        nodes: place_nodes(&mut rng, n as usize, side),
    })
}

/// Draw one source–sink pair per node: node `k` sources pair `k`, and its sink
/// is uniform over the other nodes. Sinks may repeat across pairs.
///
/// Demanded rates default to 1 per pair; max–min accounting downstream treats
/// them as relative weights.
pub fn sample_pairs(nodes: &NodeSet, seed: u64) -> Result<SourceSinkPairs> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 nodes to form source–sink pairs, got {n}"
        )));
    }
    let mut rng = rng_for(seed);
    let pairs = (0..n as u32)
        .map(|s| {
            // Uniform over the n-1 other nodes: draw from [0, n-1) and skip s.
            let mut d = rng.gen_range(0..n as u32 - 1);
            if d >= s {
                d += 1;
            }
            (s, d)
        })
        .collect::<Vec<_>>();
    Ok(SourceSinkPairs {
        rates: vec![1.0; pairs.len()],
        pairs,
    })
}

/// Draw a permutation traffic pattern: sinks form a fixed-point-free
/// permutation of the nodes, so every node is also the sink of exactly one
/// pair.
pub fn sample_pairs_permutation(nodes: &NodeSet, seed: u64) -> Result<SourceSinkPairs> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 nodes to form source–sink pairs, got {n}"
        )));
    }
    let mut rng = rng_for(seed);
    let mut perm: Vec<u32> = (0..n as u32).collect();
    // Fisher–Yates, resampled until no node maps to itself. Each attempt
    // succeeds with probability ~ 1/e, so a handful of rounds suffice.
    loop {
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        if perm.iter().enumerate().all(|(s, &d)| s as u32 != d) {
            break;
        }
    }
    Ok(SourceSinkPairs {
        pairs: (0..n as u32).map(|s| (s, perm[s as usize])).collect(),
        rates: vec![1.0; n],
    })
}
