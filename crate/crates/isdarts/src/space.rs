//! Search-space descriptions: cells, supernet layout, comparison subsets,
//! binary masks and subnet enumeration.
//!
//! A *cell* is a small DAG; every edge `(i, j)` with `i < j` carries an
//! ordered list of candidate operations. Candidates compete for `c` slots
//! inside *comparison subsets*: one subset per edge (`per_edge`) or one per
//! destination node pooling all its incoming edges (`per_node`). A *mask*
//! assigns one bit per candidate, grouped by subset; shrinking clears bits,
//! never sets them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::OpKind;

/// What a cell emits: its highest-numbered node, or the channel-concat of
/// every intermediate (non-input) node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutput {
    LastNode,
    ConcatIntermediate,
}

/// The DAG template instantiated by every cell in the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Total node count, inputs included.
    pub num_nodes: usize,
    /// Leading nodes that receive the cell inputs (1 or 2).
    pub num_inputs: usize,
    /// Directed edges `(i, j)`, `i < j`, destination never an input node.
    pub edges: Vec<(usize, usize)>,
    /// Candidate operations per edge, aligned with `edges`.
    pub candidate_ops: Vec<Vec<OpKind>>,
    /// Feature channels each node carries (in the first block).
    pub channels: usize,
    pub output: CellOutput,
}

/// How the raw image enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemKind {
    /// ReLU-free 3×3 convolution (with norm) mapping input channels to the
    /// cell width.
    Conv3x3,
    /// Tile the input channels up to the cell width, unchanged. Keeps the
    /// stem parameter-free so a parameter-free subnet stays trivial
    /// end-to-end.
    Replicate,
}

/// Full network layout: stacked cells, reductions between blocks, stem and
/// classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupernetSpec {
    pub cell: CellSpec,
    pub cells_per_block: usize,
    /// Blocks are separated by a strided conv that halves the spatial size
    /// and doubles the width.
    pub num_blocks: usize,
    pub stem: StemKind,
    pub in_channels: usize,
    pub classes: usize,
}

/// How candidates are grouped for competition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    PerEdge,
    PerNode,
}

/// A supernet plus the rules of the competition run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub supernet: SupernetSpec,
    pub mode: SubsetMode,
    /// Candidates reserved per comparison subset at the end of the search.
    pub c: usize,
}

/// One comparison subset: a label for reports plus the global candidate
/// indices competing in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub label: String,
    pub members: Vec<usize>,
}

/// All comparison subsets of a space, plus reverse lookups from global
/// candidate index to `(edge, slot)` and `(subset, position)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsets {
    pub groups: Vec<Subset>,
    pub c: usize,
    /// Global candidate index → (edge index, candidate slot on that edge).
    pub edge_slot: Vec<(usize, usize)>,
    /// Global candidate index → (subset index, position inside subset).
    pub position: Vec<(usize, usize)>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let cell = &self.supernet.cell;
        if !(1..=2).contains(&cell.num_inputs) {
            return Err(Error::Config(format!(
                "cell.num_inputs must be 1 or 2, got {}",
                cell.num_inputs
            )));
        }
        if cell.num_nodes <= cell.num_inputs {
            return Err(Error::Config(format!(
                "cell.num_nodes ({}) must exceed num_inputs ({})",
                cell.num_nodes, cell.num_inputs
            )));
        }
        if cell.channels == 0 {
            return Err(Error::Config("cell.channels must be positive".into()));
        }
        if cell.edges.is_empty() {
            return Err(Error::Config("cell.edges must not be empty".into()));
        }
        if cell.candidate_ops.len() != cell.edges.len() {
            return Err(Error::Config(format!(
                "cell.candidate_ops has {} entries for {} edges",
                cell.candidate_ops.len(),
                cell.edges.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let mut incoming = vec![0usize; cell.num_nodes];
        for (k, &(i, j)) in cell.edges.iter().enumerate() {
            if i >= j {
                return Err(Error::Config(format!("cell.edges[{k}]: ({i},{j}) must have i < j")));
            }
            if j >= cell.num_nodes {
                return Err(Error::Config(format!(
                    "cell.edges[{k}]: node {j} out of range for {} nodes",
                    cell.num_nodes
                )));
            }
            if j < cell.num_inputs {
                return Err(Error::Config(format!(
                    "cell.edges[{k}]: destination {j} is an input node"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Config(format!("cell.edges[{k}]: duplicate edge ({i},{j})")));
            }
            incoming[j] += 1;
            if cell.candidate_ops[k].is_empty() {
                return Err(Error::Config(format!("cell.candidate_ops[{k}] is empty")));
            }
        }
        for node in cell.num_inputs..cell.num_nodes {
            if incoming[node] == 0 {
                return Err(Error::Config(format!("node {node} has no incoming edge")));
            }
        }
        if self.supernet.cells_per_block == 0 || self.supernet.num_blocks == 0 {
            return Err(Error::Config(
                "supernet.cells_per_block and supernet.num_blocks must be positive".into(),
            ));
        }
        if self.supernet.classes < 2 {
            return Err(Error::Config(format!(
                "supernet.classes must be ≥ 2, got {}",
                self.supernet.classes
            )));
        }
        if self.supernet.in_channels == 0 {
            return Err(Error::Config("supernet.in_channels must be positive".into()));
        }
        if self.supernet.stem == StemKind::Replicate
            && cell.channels % self.supernet.in_channels != 0
        {
            return Err(Error::Config(format!(
                "replicate stem needs cell.channels ({}) divisible by in_channels ({})",
                cell.channels, self.supernet.in_channels
            )));
        }
        if self.c == 0 {
            return Err(Error::Config("c (reserved candidates per subset) must be positive".into()));
        }
        let subsets = self.subsets();
        for s in &subsets.groups {
            if s.members.len() < self.c {
                return Err(Error::Config(format!(
                    "subset {} holds {} candidates, fewer than c = {}",
                    s.label,
                    s.members.len(),
                    self.c
                )));
            }
        }
        Ok(())
    }

    /// Total candidates across all edges.
    pub fn num_candidates(&self) -> usize {
        self.supernet.cell.candidate_ops.iter().map(Vec::len).sum()
    }

    /// Operation kind of a global candidate index.
    pub fn candidate_kind(&self, global: usize) -> OpKind {
        let (edge, slot) = self.subsets().edge_slot[global];
        self.supernet.cell.candidate_ops[edge][slot]
    }

    /// Build the comparison subsets for the configured mode.
    pub fn subsets(&self) -> Subsets {
        let cell = &self.supernet.cell;
        let mut edge_slot = Vec::new();
        let mut edge_offsets = Vec::with_capacity(cell.edges.len());
        let mut next = 0usize;
        for (e, ops) in cell.candidate_ops.iter().enumerate() {
            edge_offsets.push(next);
            for slot in 0..ops.len() {
                edge_slot.push((e, slot));
                next += 1;
            }
        }

        let groups: Vec<Subset> = match self.mode {
            SubsetMode::PerEdge => cell
                .edges
                .iter()
                .enumerate()
                .map(|(e, &(i, j))| Subset {
                    // Comma-free so the label can sit in a CSV field.
                    label: format!("edge({i}-{j})"),
                    members: (0..cell.candidate_ops[e].len())
                        .map(|slot| edge_offsets[e] + slot)
                        .collect(),
                })
                .collect(),
            SubsetMode::PerNode => (cell.num_inputs..cell.num_nodes)
                .map(|node| {
                    let mut members = Vec::new();
                    for (e, &(_, j)) in cell.edges.iter().enumerate() {
                        if j == node {
                            members
                                .extend((0..cell.candidate_ops[e].len()).map(|s| edge_offsets[e] + s));
                        }
                    }
                    Subset { label: format!("node{node}"), members }
                })
                .collect(),
        };

        let mut position = vec![(usize::MAX, usize::MAX); edge_slot.len()];
        for (h, subset) in groups.iter().enumerate() {
            for (pos, &g) in subset.members.iter().enumerate() {
                position[g] = (h, pos);
            }
        }
        Subsets { groups, c: self.c, edge_slot, position }
    }

    /// Hex digest identifying this space (layout + mode + c), used to pair
    /// oracle tables with search runs.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("space serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of fully shrunk subnets: product over subsets of
    /// `binom(|φ|, c)`. Errors if the product overflows `u128`.
    pub fn count_subnets(&self) -> Result<u128> {
        let subsets = self.subsets();
        let mut total: u128 = 1;
        for s in &subsets.groups {
            let ways = binomial(s.members.len(), self.c).ok_or_else(|| {
                Error::EnumerationCap { count: u128::MAX, cap: u128::MAX }
            })?;
            total = total.checked_mul(ways).ok_or(Error::EnumerationCap {
                count: u128::MAX,
                cap: u128::MAX,
            })?;
        }
        Ok(total)
    }

    /// Every fully shrunk mask in lexicographic order (first subset varies
    /// slowest). Refuses when the space exceeds `cap`.
    pub fn enumerate_subnets(&self, cap: u128) -> Result<Vec<Mask>> {
        let count = self.count_subnets()?;
        if count > cap {
            return Err(Error::EnumerationCap { count, cap });
        }
        let subsets = self.subsets();
        let per_subset: Vec<Vec<Vec<bool>>> = subsets
            .groups
            .iter()
            .map(|s| combinations_as_bits(s.members.len(), self.c))
            .collect();

        let mut out = Vec::with_capacity(count as usize);
        let mut idx = vec![0usize; per_subset.len()];
        loop {
            let groups: Vec<Vec<bool>> = idx
                .iter()
                .enumerate()
                .map(|(h, &i)| per_subset[h][i].clone())
                .collect();
            out.push(Mask { groups });
            // Odometer increment, last subset fastest.
            let mut pos = per_subset.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < per_subset[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

/// `n choose k` in `u128`, `None` on overflow.
fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// All `k`-subsets of `0..n` as bit vectors, ordered lexicographically by
/// the ascending index tuples.
fn combinations_as_bits(n: usize, k: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut pick: Vec<usize> = (0..k).collect();
    loop {
        let mut bits = vec![false; n];
        for &p in &pick {
            bits[p] = true;
        }
        out.push(bits);
        // Next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if pick[i] < n - k + i {
                pick[i] += 1;
                for j in i + 1..k {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Binary candidate-presence vector, grouped by comparison subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    pub groups: Vec<Vec<bool>>,
}

impl Mask {
    /// All candidates active (the starting point of every search).
    pub fn all_ones(subsets: &Subsets) -> Self {
        Mask { groups: subsets.groups.iter().map(|s| vec![true; s.members.len()]).collect() }
    }

    /// Bit for a global candidate index.
    pub fn is_active(&self, subsets: &Subsets, global: usize) -> bool {
        let (h, pos) = subsets.position[global];
        self.groups[h][pos]
    }

    pub fn active_in_subset(&self, h: usize) -> usize {
        self.groups[h].iter().filter(|b| **b).count()
    }

    pub fn total_active(&self) -> usize {
        self.groups.iter().flatten().filter(|b| **b).count()
    }

    /// `true` when every bit active here is also active in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(&other.groups)
                .all(|(a, b)| {
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| !*x || *y)
                })
    }

    /// Compact text form: subset bit strings joined by `|`, e.g. `100|010`.
    pub fn id_string(&self) -> String {
        self.groups
            .iter()
            .map(|g| g.iter().map(|b| if *b { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_id_string(id: &str) -> Result<Self> {
        let mut groups = Vec::new();
        for part in id.split('|') {
            let mut bits = Vec::with_capacity(part.len());
            for ch in part.chars() {
                match ch {
                    '0' => bits.push(false),
                    '1' => bits.push(true),
                    other => {
                        return Err(Error::Format(format!(
                            "mask id contains invalid character {other:?}"
                        )))
                    }
                }
            }
            if bits.is_empty() {
                return Err(Error::Format("mask id contains an empty subset".into()));
            }
            groups.push(bits);
        }
        Ok(Mask { groups })
    }

    /// Checks the per-subset bounds `c ≤ |active| ≤ |φ|` against a space.
    pub fn validate_against(&self, subsets: &Subsets) -> Result<()> {
        if self.groups.len() != subsets.groups.len() {
            return Err(Error::Config(format!(
                "mask has {} subsets, space has {}",
                self.groups.len(),
                subsets.groups.len()
            )));
        }
        for (h, (bits, subset)) in self.groups.iter().zip(&subsets.groups).enumerate() {
            if bits.len() != subset.members.len() {
                return Err(Error::Config(format!(
                    "mask subset {h} has {} bits, subset {} has {} candidates",
                    bits.len(),
                    subset.label,
                    subset.members.len()
                )));
            }
            let active = bits.iter().filter(|b| **b).count();
            if active < subsets.c || active > subset.members.len() {
                return Err(Error::Config(format!(
                    "mask subset {} has {} active candidates, allowed range [{}, {}]",
                    subset.label,
                    active,
                    subsets.c,
                    subset.members.len()
                )));
            }
        }
        Ok(())
    }
}

/// Named space presets used by the test suites and examples.
impl SearchSpace {
    /// Three-edge, three-op cell: 27 fully shrunk subnets. Small enough to
    /// brute-force in seconds; the replicate stem keeps parameter-free
    /// subnets honest (they stay trivial classifiers end-to-end). A single
    /// cell keeps the importance comparison honest too: the cell input has
    /// no cross-channel structure, so an identity candidate can only
    /// relay variance actually created inside this cell, never amplitude
    /// accumulated by stacking.
    pub fn micro() -> Self {
        let ops = vec![OpKind::Zero, OpKind::Skip, OpKind::Conv3x3];
        SearchSpace {
            supernet: SupernetSpec {
                cell: CellSpec {
                    num_nodes: 3,
                    num_inputs: 1,
                    edges: vec![(0, 1), (0, 2), (1, 2)],
                    candidate_ops: vec![ops.clone(), ops.clone(), ops],
                    channels: 4,
                    output: CellOutput::LastNode,
                },
                cells_per_block: 1,
                num_blocks: 1,
                stem: StemKind::Replicate,
                in_channels: 1,
                classes: 4,
            },
            mode: SubsetMode::PerEdge,
            c: 1,
        }
    }

    /// Four-node fully connected cell with the five-op vocabulary:
    /// 5⁶ = 15 625 subnets, one candidate kept per edge.
    pub fn bench() -> Self {
        let ops = vec![
            OpKind::Zero,
            OpKind::Skip,
            OpKind::Conv1x1,
            OpKind::Conv3x3,
            OpKind::AvgPool3x3,
        ];
        let mut edges = Vec::new();
        for j in 1..4usize {
            for i in 0..j {
                edges.push((i, j));
            }
        }
        let candidate_ops = vec![ops; edges.len()];
        SearchSpace {
            supernet: SupernetSpec {
                cell: CellSpec {
                    num_nodes: 4,
                    num_inputs: 1,
                    edges,
                    candidate_ops,
                    channels: 4,
                    output: CellOutput::LastNode,
                },
                cells_per_block: 2,
                num_blocks: 1,
                stem: StemKind::Replicate,
                in_channels: 1,
                classes: 4,
            },
            mode: SubsetMode::PerEdge,
            c: 1,
        }
    }

    /// Two-input cell family with the eight-op vocabulary and per-node
    /// competition keeping two candidates per node. The last node pools
    /// five edges × eight ops = forty candidates.
    pub fn wide() -> Self {
        let ops = vec![
            OpKind::Zero,
            OpKind::MaxPool3x3,
            OpKind::AvgPool3x3,
            OpKind::Skip,
            OpKind::SepConv3x3,
            OpKind::SepConv5x5,
            OpKind::DilConv3x3,
            OpKind::DilConv5x5,
        ];
        let mut edges = Vec::new();
        for j in 2..6usize {
            for i in 0..j {
                edges.push((i, j));
            }
        }
        let candidate_ops = vec![ops; edges.len()];
        SearchSpace {
            supernet: SupernetSpec {
                cell: CellSpec {
                    num_nodes: 6,
                    num_inputs: 2,
                    edges,
                    candidate_ops,
                    channels: 4,
                    output: CellOutput::ConcatIntermediate,
                },
                cells_per_block: 1,
                num_blocks: 1,
                stem: StemKind::Conv3x3,
                in_channels: 1,
                classes: 4,
            },
            mode: SubsetMode::PerNode,
            c: 2,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "micro" => Some(Self::micro()),
            "bench" => Some(Self::bench()),
            "wide" => Some(Self::wide()),
            _ => None,
        }
    }
}
