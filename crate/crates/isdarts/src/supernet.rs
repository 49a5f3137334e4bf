//! The weight-sharing supernet: every candidate operation instantiated on
//! every edge of every cell, with three ways to run it.
//!
//! * **Masked** — only candidates whose mask bit is set execute; their
//!   outputs sum into the destination node. This is the IS-DARTS training
//!   and evaluation path.
//! * **Mixed** — every candidate executes and is scaled by a softmax
//!   weight element supplied on the tape (the DARTS path).
//! * **Materialized** — [`Supernet::materialize`] extracts a standalone
//!   subnet that keeps only the masked-in candidates *and their trained
//!   weights*, so its forward pass reproduces the masked supernet exactly.
//!
//! Layout: stem → `num_blocks` blocks of `cells_per_block` cells, a
//! strided-conv reduction (spatial ÷2, width ×2) between blocks, then a
//! global-average-pool classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{BnLayer, Classifier, ConvLayer, OpInstance, ParamAlloc, Parameter};
use crate::space::{CellOutput, CellSpec, Mask, SearchSpace, StemKind, Subsets};
use crate::tensor::{ops, Element, Tape, ValueId};

/// How edges combine their candidates during a forward pass.
pub enum EdgeMode<'a> {
    /// Execute active candidates only and sum them.
    Masked(&'a Mask),
    /// Execute all candidates, each scaled by its element of the per-subset
    /// weight vector (already softmaxed, living on the tape).
    Mixed(&'a [ValueId]),
}

/// One candidate output captured during a probed forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ProbeRecord {
    /// Cell counter across the whole network, in execution order.
    pub cell: usize,
    /// Global candidate index within the search space.
    pub candidate: usize,
    /// The candidate's output feature map on the tape.
    pub value: ValueId,
}

#[derive(Debug, Clone)]
struct Stem<E: Element> {
    kind: StemKind,
    conv: Option<ConvLayer<E>>,
    norm: Option<BnLayer<E>>,
    /// Replicate factor (`width / in_channels`) for the parameter-free stem.
    times: usize,
}

impl<E: Element> Stem<E> {
    fn build(
        kind: StemKind,
        in_channels: usize,
        width: usize,
        alloc: &mut ParamAlloc,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        match kind {
            StemKind::Conv3x3 => Stem {
                kind,
                conv: Some(ConvLayer::build(alloc, rng, in_channels, width, 3, 1, 1, 1, 1)),
                norm: Some(BnLayer::new(width)),
                times: 1,
            },
            StemKind::Replicate => {
                Stem { kind, conv: None, norm: None, times: width / in_channels }
            }
        }
    }

    fn forward(&mut self, tape: &mut Tape<E>, x: ValueId, train: bool) -> Result<ValueId> {
        match self.kind {
            StemKind::Conv3x3 => {
                let h = self.conv.as_ref().expect("conv stem has conv").forward(tape, x)?;
                self.norm.as_mut().expect("conv stem has norm").forward(tape, h, train)
            }
            StemKind::Replicate => {
                if self.times == 1 {
                    return Ok(x);
                }
                let copies = vec![x; self.times];
                ops::concat_channels(tape, &copies)
            }
        }
    }

    fn cast<T: Element>(&self) -> Stem<T> {
        Stem {
            kind: self.kind,
            conv: self.conv.as_ref().map(ConvLayer::cast),
            norm: self.norm.as_ref().map(BnLayer::cast),
            times: self.times,
        }
    }
}

/// ReLU → 1×1 conv → norm adapter mapping a cell input to the node width.
#[derive(Debug, Clone)]
struct Preproc<E: Element> {
    conv: ConvLayer<E>,
    norm: BnLayer<E>,
}

impl<E: Element> Preproc<E> {
    fn build(in_ch: usize, out_ch: usize, alloc: &mut ParamAlloc, rng: &mut ChaCha8Rng) -> Self {
        Preproc {
            conv: ConvLayer::build(alloc, rng, in_ch, out_ch, 1, 1, 0, 1, 1),
            norm: BnLayer::new(out_ch),
        }
    }

    fn forward(&mut self, tape: &mut Tape<E>, x: ValueId, train: bool) -> Result<ValueId> {
        let h = ops::relu(tape, x);
        let h = self.conv.forward(tape, h)?;
        self.norm.forward(tape, h, train)
    }

    fn cast<T: Element>(&self) -> Preproc<T> {
        Preproc { conv: self.conv.cast(), norm: self.norm.cast() }
    }
}

#[derive(Debug, Clone)]
struct Cell<E: Element> {
    /// One optional adapter per cell input (present when channel counts
    /// differ from the node width).
    preprocess: Vec<Option<Preproc<E>>>,
    /// Candidate instances, `[edge][slot]`, aligned with the spec.
    ops: Vec<Vec<OpInstance<E>>>,
}

impl<E: Element> Cell<E> {
    fn build(
        spec: &CellSpec,
        width: usize,
        input_channels: &[usize],
        alloc: &mut ParamAlloc,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let preprocess = input_channels
            .iter()
            .map(|&c| (c != width).then(|| Preproc::build(c, width, alloc, rng)))
            .collect();
        let ops = spec
            .candidate_ops
            .iter()
            .map(|cands| {
                cands
                    .iter()
                    .map(|&kind| OpInstance::build(kind, width, alloc, rng))
                    .collect()
            })
            .collect();
        Cell { preprocess, ops }
    }

    #[allow(clippy::too_many_arguments)]
    fn forward(
        &mut self,
        tape: &mut Tape<E>,
        raw_inputs: &[ValueId],
        mode: &EdgeMode<'_>,
        train: bool,
        mut probe: Option<&mut Vec<ProbeRecord>>,
        cell_index: usize,
        spec: &CellSpec,
        subsets: &Subsets,
        edge_offsets: &[usize],
    ) -> Result<ValueId> {
        let mut nodes: Vec<ValueId> = Vec::with_capacity(spec.num_nodes);
        for (slot, &raw) in raw_inputs.iter().enumerate() {
            let v = match &mut self.preprocess[slot] {
                Some(pre) => pre.forward(tape, raw, train)?,
                None => raw,
            };
            nodes.push(v);
        }

        for j in spec.num_inputs..spec.num_nodes {
            let mut contribs: Vec<ValueId> = Vec::new();
            for (e, &(i, dst)) in spec.edges.iter().enumerate() {
                if dst != j {
                    continue;
                }
                let src = nodes[i];
                for (slot, op) in self.ops[e].iter_mut().enumerate() {
                    let global = edge_offsets[e] + slot;
                    match mode {
                        EdgeMode::Masked(mask) => {
                            if !mask.is_active(subsets, global) {
                                continue;
                            }
                            let out = op.forward(tape, src, train)?;
                            if let Some(p) = probe.as_mut() {
                                p.push(ProbeRecord { cell: cell_index, candidate: global, value: out });
                            }
                            contribs.push(out);
                        }
                        EdgeMode::Mixed(weights) => {
                            let out = op.forward(tape, src, train)?;
                            let (h, pos) = subsets.position[global];
                            let scaled = ops::scale_by_elem(tape, out, weights[h], pos)?;
                            if let Some(p) = probe.as_mut() {
                                p.push(ProbeRecord { cell: cell_index, candidate: global, value: scaled });
                            }
                            contribs.push(scaled);
                        }
                    }
                }
            }
            debug_assert!(!contribs.is_empty(), "node {j} received no contributions");
            nodes.push(ops::sum_all(tape, &contribs)?);
        }

        match spec.output {
            CellOutput::LastNode => Ok(nodes[spec.num_nodes - 1]),
            CellOutput::ConcatIntermediate => {
                ops::concat_channels(tape, &nodes[spec.num_inputs..])
            }
        }
    }

    fn cast<T: Element>(&self) -> Cell<T> {
        Cell {
            preprocess: self
                .preprocess
                .iter()
                .map(|p| p.as_ref().map(Preproc::cast))
                .collect(),
            ops: self
                .ops
                .iter()
                .map(|cands| cands.iter().map(OpInstance::cast).collect())
                .collect(),
        }
    }
}

/// ReLU → strided 3×3 conv → norm between blocks.
#[derive(Debug, Clone)]
struct Reduction<E: Element> {
    conv: ConvLayer<E>,
    norm: BnLayer<E>,
}

impl<E: Element> Reduction<E> {
    fn build(in_ch: usize, out_ch: usize, alloc: &mut ParamAlloc, rng: &mut ChaCha8Rng) -> Self {
        Reduction {
            conv: ConvLayer::build(alloc, rng, in_ch, out_ch, 3, 2, 1, 1, 1),
            norm: BnLayer::new(out_ch),
        }
    }

    fn forward(&mut self, tape: &mut Tape<E>, x: ValueId, train: bool) -> Result<ValueId> {
        let h = ops::relu(tape, x);
        let h = self.conv.forward(tape, h)?;
        self.norm.forward(tape, h, train)
    }

    fn cast<T: Element>(&self) -> Reduction<T> {
        Reduction { conv: self.conv.cast(), norm: self.norm.cast() }
    }
}

#[derive(Debug, Clone)]
struct Block<E: Element> {
    cells: Vec<Cell<E>>,
    reduction: Option<Reduction<E>>,
}

/// The full weight-sharing network for one search space.
#[derive(Debug, Clone)]
pub struct Supernet<E: Element> {
    space: SearchSpace,
    subsets: Subsets,
    edge_offsets: Vec<usize>,
    stem: Stem<E>,
    blocks: Vec<Block<E>>,
    classifier: Classifier<E>,
}

impl<E: Element> Supernet<E> {
    /// Builds and initializes every layer from a validated space. The same
    /// seed always yields bitwise-identical parameters.
    pub fn build(space: &SearchSpace, seed: u64) -> Result<Self> {
        space.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alloc = ParamAlloc::new();
        let subsets = space.subsets();
        let cell_spec = &space.supernet.cell;

        let mut edge_offsets = Vec::with_capacity(cell_spec.edges.len());
        let mut next = 0usize;
        for cands in &cell_spec.candidate_ops {
            edge_offsets.push(next);
            next += cands.len();
        }

        let width0 = cell_spec.channels;
        let stem = Stem::build(
            space.supernet.stem,
            space.supernet.in_channels,
            width0,
            &mut alloc,
            &mut rng,
        );

        let cell_out = |width: usize| match cell_spec.output {
            CellOutput::LastNode => width,
            CellOutput::ConcatIntermediate => {
                width * (cell_spec.num_nodes - cell_spec.num_inputs)
            }
        };

        let mut blocks = Vec::with_capacity(space.supernet.num_blocks);
        // Channel counts feeding the next cell: (previous, the one before).
        let mut feed = (width0, width0);
        for b in 0..space.supernet.num_blocks {
            let width = width0 << b;
            let mut cells = Vec::with_capacity(space.supernet.cells_per_block);
            for _ in 0..space.supernet.cells_per_block {
                let input_channels: Vec<usize> = match cell_spec.num_inputs {
                    1 => vec![feed.0],
                    _ => vec![feed.0, feed.1],
                };
                cells.push(Cell::build(cell_spec, width, &input_channels, &mut alloc, &mut rng));
                feed = (cell_out(width), feed.0);
            }
            let reduction = if b + 1 < space.supernet.num_blocks {
                let out_w = width0 << (b + 1);
                let red = Reduction::build(feed.0, out_w, &mut alloc, &mut rng);
                feed = (out_w, out_w);
                Some(red)
            } else {
                None
            };
            blocks.push(Block { cells, reduction });
        }

        let classifier =
            Classifier::build(&mut alloc, &mut rng, feed.0, space.supernet.classes)?;

        Ok(Supernet { space: space.clone(), subsets, edge_offsets, stem, blocks, classifier })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn subsets(&self) -> &Subsets {
        &self.subsets
    }

    /// Forward pass to logits `(B, classes)`.
    pub fn forward(
        &mut self,
        tape: &mut Tape<E>,
        x: ValueId,
        mode: &EdgeMode<'_>,
        train: bool,
        mut probe: Option<&mut Vec<ProbeRecord>>,
    ) -> Result<ValueId> {
        if let EdgeMode::Masked(mask) = mode {
            mask.validate_against(&self.subsets)?;
        }
        let spec = &self.space.supernet.cell;
        let stem_out = self.stem.forward(tape, x, train)?;
        let mut prev = stem_out;
        let mut prev_prev = stem_out;
        let mut cell_index = 0usize;
        for block in &mut self.blocks {
            for cell in &mut block.cells {
                let inputs: Vec<ValueId> = match spec.num_inputs {
                    1 => vec![prev],
                    _ => vec![prev, prev_prev],
                };
                let out = cell.forward(
                    tape,
                    &inputs,
                    mode,
                    train,
                    probe.as_mut().map(|p| &mut **p),
                    cell_index,
                    spec,
                    &self.subsets,
                    &self.edge_offsets,
                )?;
                prev_prev = prev;
                prev = out;
                cell_index += 1;
            }
            if let Some(red) = &mut block.reduction {
                let r = red.forward(tape, prev, train)?;
                prev = r;
                prev_prev = r;
            }
        }
        self.classifier.forward(tape, prev)
    }

    /// Masked forward with every candidate active.
    pub fn forward_full(
        &mut self,
        tape: &mut Tape<E>,
        x: ValueId,
        train: bool,
        probe: Option<&mut Vec<ProbeRecord>>,
    ) -> Result<ValueId> {
        let mask = Mask::all_ones(&self.subsets);
        self.forward(tape, x, &EdgeMode::Masked(&mask), train, probe)
    }

    pub fn num_cells(&self) -> usize {
        self.blocks.iter().map(|b| b.cells.len()).sum()
    }

    /// Extracts the subnet a mask describes, inheriting trained weights and
    /// norm statistics. Edges whose candidates are all masked out are
    /// dropped from the extracted space entirely.
    pub fn materialize(&self, mask: &Mask) -> Result<Supernet<E>> {
        mask.validate_against(&self.subsets)?;

        let spec = &self.space.supernet.cell;
        let mut new_edges = Vec::new();
        let mut new_candidate_ops = Vec::new();
        let mut kept_slots: Vec<Vec<usize>> = Vec::new(); // per kept edge, parent slots
        for (e, &(i, j)) in spec.edges.iter().enumerate() {
            let slots: Vec<usize> = (0..spec.candidate_ops[e].len())
                .filter(|&s| mask.is_active(&self.subsets, self.edge_offsets[e] + s))
                .collect();
            if slots.is_empty() {
                continue;
            }
            new_edges.push((i, j));
            new_candidate_ops.push(slots.iter().map(|&s| spec.candidate_ops[e][s]).collect());
            kept_slots.push(slots);
        }

        let mut new_space = self.space.clone();
        new_space.supernet.cell.edges = new_edges;
        new_space.supernet.cell.candidate_ops = new_candidate_ops;
        new_space.validate()?;
        let subsets = new_space.subsets();

        let cell_spec = &new_space.supernet.cell;
        let mut edge_offsets = Vec::with_capacity(cell_spec.edges.len());
        let mut next = 0usize;
        for cands in &cell_spec.candidate_ops {
            edge_offsets.push(next);
            next += cands.len();
        }

        // Old edge index per kept edge, for slot lookup.
        let kept_edges: Vec<usize> = spec
            .edges
            .iter()
            .enumerate()
            .filter(|&(e, _)| {
                (0..spec.candidate_ops[e].len())
                    .any(|s| mask.is_active(&self.subsets, self.edge_offsets[e] + s))
            })
            .map(|(e, _)| e)
            .collect();

        let blocks = self
            .blocks
            .iter()
            .map(|block| Block {
                cells: block
                    .cells
                    .iter()
                    .map(|cell| Cell {
                        preprocess: cell.preprocess.clone(),
                        ops: kept_edges
                            .iter()
                            .zip(&kept_slots)
                            .map(|(&e, slots)| {
                                slots.iter().map(|&s| cell.ops[e][s].clone()).collect()
                            })
                            .collect(),
                    })
                    .collect(),
                reduction: block.reduction.clone(),
            })
            .collect();

        Ok(Supernet {
            space: new_space,
            subsets,
            edge_offsets,
            stem: self.stem.clone(),
            blocks,
            classifier: self.classifier.clone(),
        })
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Parameter<E>)) {
        if let Some(conv) = &mut self.stem.conv {
            f("stem.conv.weight".into(), &mut conv.weight);
        }
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (ci, cell) in block.cells.iter_mut().enumerate() {
                for (s, pre) in cell.preprocess.iter_mut().enumerate() {
                    if let Some(pre) = pre {
                        f(format!("block{b}.cell{ci}.pre{s}.conv.weight"), &mut pre.conv.weight);
                    }
                }
                for (e, cands) in cell.ops.iter_mut().enumerate() {
                    for (k, op) in cands.iter_mut().enumerate() {
                        op.visit_params(&format!("block{b}.cell{ci}.edge{e}.cand{k}"), f);
                    }
                }
            }
            if let Some(red) = &mut block.reduction {
                f(format!("block{b}.reduce.conv.weight"), &mut red.conv.weight);
            }
        }
        self.classifier.visit_params("head", f);
    }

    pub fn visit_norms(&mut self, f: &mut dyn FnMut(String, &mut BnLayer<E>)) {
        if let Some(norm) = &mut self.stem.norm {
            f("stem.norm".into(), norm);
        }
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (ci, cell) in block.cells.iter_mut().enumerate() {
                for (s, pre) in cell.preprocess.iter_mut().enumerate() {
                    if let Some(pre) = pre {
                        f(format!("block{b}.cell{ci}.pre{s}.norm"), &mut pre.norm);
                    }
                }
                for (e, cands) in cell.ops.iter_mut().enumerate() {
                    for (k, op) in cands.iter_mut().enumerate() {
                        op.visit_norms(&format!("block{b}.cell{ci}.edge{e}.cand{k}"), f);
                    }
                }
            }
            if let Some(red) = &mut block.reduction {
                f(format!("block{b}.reduce.norm"), &mut red.norm);
            }
        }
    }

    /// Exact-precision twin (parameter ids preserved).
    pub fn cast<T: Element>(&self) -> Supernet<T> {
        Supernet {
            space: self.space.clone(),
            subsets: self.subsets.clone(),
            edge_offsets: self.edge_offsets.clone(),
            stem: self.stem.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    cells: b.cells.iter().map(Cell::cast).collect(),
                    reduction: b.reduction.as_ref().map(Reduction::cast),
                })
                .collect(),
            classifier: self.classifier.cast(),
        }
    }

    /// Copies gradients produced by `tape.backward` into every parameter
    /// (zeros where the loss never reached).
    pub fn install_grads(&mut self, tape: &Tape<E>) {
        let grads = tape.param_grads();
        self.visit_params(&mut |_, p| {
            let g = grads
                .get(&p.id)
                .cloned()
                .unwrap_or_else(|| vec![E::zero(); p.value.numel()]);
            p.value.set_grad(Some(g));
        });
    }
}
