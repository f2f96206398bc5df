use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeshError {
    #[error("coordinate {coord} outside mesh {dims:?}")]
    OutOfRange { coord: Coord, dims: [u32; 3] },
    #[error("malformed mesh dimensions `{0}` (expected XxYxZ)")]
    BadDims(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Coord {
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Coord {
    pub const fn new(x: u32, y: u32, z: u32) -> Self {
        Coord { x, y, z }
    }
}

impl From<[u32; 3]> for Coord {
    fn from([x, y, z]: [u32; 3]) -> Self {
        Coord { x, y, z }
    }
}

impl From<Coord> for [u32; 3] {
    fn from(c: Coord) -> Self {
        [c.x, c.y, c.z]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
    Local,
}

impl Port {
    pub const ALL: [Port; 7] = [
        Port::PlusX,
        Port::MinusX,
        Port::PlusY,
        Port::MinusY,
        Port::PlusZ,
        Port::MinusZ,
        Port::Local,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Port::PlusZ | Port::MinusZ)
    }

    /// Neighbour reached through this port (unchecked against the mesh).
    pub fn step(self, c: Coord) -> Coord {
        match self {
            Port::PlusX => Coord { x: c.x + 1, ..c },
            Port::MinusX => Coord { x: c.x - 1, ..c },
            Port::PlusY => Coord { y: c.y + 1, ..c },
            Port::MinusY => Coord { y: c.y - 1, ..c },
            Port::PlusZ => Coord { z: c.z + 1, ..c },
            Port::MinusZ => Coord { z: c.z - 1, ..c },
            Port::Local => c,
        }
    }
}

fn one() -> u64 {
    1
}

fn default_flit() -> u64 {
    16
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshTopology {
    pub dims: [u32; 3],
    /// cycles per horizontal hop
    #[serde(default = "one")]
    pub link_latency: u64,
    /// cycles per vertical (TSV) hop
    #[serde(default = "one")]
    pub tsv_latency: u64,
    /// cycles per router traversal
    #[serde(default = "one")]
    pub router_delay: u64,
    /// bytes
    #[serde(default = "default_flit")]
    pub flit_width: u64,
}

impl MeshTopology {
    pub fn new(dims: [u32; 3]) -> Self {
        MeshTopology {
            dims,
            link_latency: 1,
            tsv_latency: 1,
            router_delay: 1,
            flit_width: 16,
        }
    }

    pub fn nodes(&self) -> usize {
        self.dims.iter().map(|d| *d as usize).product()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dims.contains(&0) {
            out.push("mesh dimensions must be at least 1".to_string());
        }
        if self.link_latency == 0 || self.tsv_latency == 0 {
            out.push("link and TSV latencies must be at least 1 cycle".to_string());
        }
        if self.router_delay == 0 {
            out.push("router_delay must be at least 1 cycle".to_string());
        }
        if self.flit_width == 0 {
            out.push("flit_width must be positive".to_string());
        }
        out
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.dims[0] && c.y < self.dims[1] && c.z < self.dims[2]
    }

    fn check(&self, c: Coord) -> Result<(), MeshError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(MeshError::OutOfRange {
                coord: c,
                dims: self.dims,
            })
        }
    }

    pub fn index(&self, c: Coord) -> usize {
        (c.z as usize * self.dims[1] as usize + c.y as usize) * self.dims[0] as usize + c.x as usize
    }

    pub fn coord(&self, index: usize) -> Coord {
        let x = index % self.dims[0] as usize;
        let rest = index / self.dims[0] as usize;
        let y = rest % self.dims[1] as usize;
        let z = rest / self.dims[1] as usize;
        Coord::new(x as u32, y as u32, z as u32)
    }

    /// Manhattan distance between two in-range nodes.
    pub fn hop_count(&self, src: Coord, dst: Coord) -> Result<u32, MeshError> {
        self.check(src)?;
        self.check(dst)?;
        Ok(src.x.abs_diff(dst.x) + src.y.abs_diff(dst.y) + src.z.abs_diff(dst.z))
    }

    /// Per-hop cost in cycles when leaving through `port`.
    pub fn hop_cycles(&self, port: Port) -> u64 {
        let wire = if port.is_vertical() {
            self.tsv_latency
        } else {
            self.link_latency
        };
        self.router_delay + wire
    }

    /// Full XYZ route from `src` to `dst` as the sequence of output ports,
    /// excluding the final `Local`.
    pub fn route(&self, src: Coord, dst: Coord) -> Result<Vec<Port>, MeshError> {
        self.check(src)?;
        self.check(dst)?;
        let mut at = src;
        let mut ports = Vec::new();
        loop {
            match route_next_hop(at, dst) {
                Port::Local => return Ok(ports),
                p => {
                    ports.push(p);
                    at = p.step(at);
                }
            }
        }
    }
}

/// XYZ dimension-order routing: fix X, then Y, then Z.
pub fn route_next_hop(current: Coord, dst: Coord) -> Port {
    use std::cmp::Ordering::*;
    match current.x.cmp(&dst.x) {
        Less => return Port::PlusX,
        Greater => return Port::MinusX,
        Equal => {}
    }
    match current.y.cmp(&dst.y) {
        Less => return Port::PlusY,
        Greater => return Port::MinusY,
        Equal => {}
    }
    match current.z.cmp(&dst.z) {
        Less => Port::PlusZ,
        Greater => Port::MinusZ,
        Equal => Port::Local,
    }
}

/// Sum of |i - j| over all ordered pairs of `0..n`.
fn pair_distance_sum(n: u64) -> u64 {
    (n * n * n - n) / 3
}

/// Exact mean Manhattan distance over all ordered node pairs, self-pairs
/// included.
pub fn mean_hop_count(dims: [u32; 3]) -> Ratio<u64> {
    dims.iter()
        .map(|d| {
            let n = u64::from(*d);
            Ratio::new(pair_distance_sum(n), n * n)
        })
        .fold(Ratio::from_integer(0), |acc, r| acc + r)
}

/// Mean over distinct ordered pairs only; zero for a single node.
pub fn mean_hop_count_distinct(dims: [u32; 3]) -> Ratio<u64> {
    let n: u64 = dims.iter().map(|d| u64::from(*d)).product();
    if n < 2 {
        return Ratio::from_integer(0);
    }
    mean_hop_count(dims) * Ratio::new(n * n, n * n - n)
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses `XxYxZ`.
pub fn parse_dims(s: &str) -> Result<[u32; 3], MeshError> {
    let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
    let bad = || MeshError::BadDims(s.to_string());
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut dims = [0u32; 3];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = p.trim().parse().map_err(|_| bad())?;
        if *d == 0 {
            return Err(bad());
        }
    }
    Ok(dims)
}
