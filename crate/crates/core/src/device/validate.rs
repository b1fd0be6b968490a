use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use super::*;
use crate::sim::builtins::{signature, ArgKind};

/// One structural violation found by [`validate_program`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Whether two tiles can be joined by a stream.
pub fn reachable(a: &Tile, b: &Tile) -> bool {
    use TileKind::*;
    match (a.kind, b.kind) {
        (Interface, Memory) | (Memory, Interface) | (Memory, Compute) | (Compute, Memory) => a.col == b.col,
        (Interface, Compute) | (Compute, Interface) => a.col == b.col,
        (Compute, Compute) => {
            (a.col == b.col && a.row.abs_diff(b.row) == 1) || (a.row == b.row && a.col.abs_diff(b.col) == 1)
        }
        _ => false,
    }
}

struct V<'a> {
    p: &'a DeviceProgram,
    out: Vec<Diagnostic>,
}

impl V<'_> {
    fn diag(&mut self, message: impl Into<String>) {
        self.out.push(Diagnostic { message: message.into() });
    }
}

/// Check geometry, FIFO wiring, links, stream and memory limits, core
/// programs and the runtime sequence. An empty result means the program is
/// valid.
pub fn validate_program(p: &DeviceProgram) -> Vec<Diagnostic> {
    let mut v = V { p, out: Vec::new() };
    v.geometry();
    v.fifos();
    v.links();
    v.buffers_and_cores();
    v.streams();
    v.memory_tiles();
    for core in &p.cores {
        v.core(core);
    }
    v.sequence();
    v.actors();
    v.out
}

impl<'a> V<'a> {
    fn geometry(&mut self) {
        let cols = match self.p.device_columns() {
            Some(c) => c,
            None => {
                self.diag(format!("unknown device `{}`", self.p.device));
                ARRAY_COLUMNS
            }
        };
        let mut names = HashSet::new();
        let mut coords = HashSet::new();
        for t in &self.p.tiles {
            if !names.insert(&t.name) {
                self.diag(format!("tile %{} declared twice", t.name));
            }
            if t.col >= cols {
                self.diag(format!("tile %{} column {} is outside device {}", t.name, t.col, self.p.device));
            }
            match t.kind {
                TileKind::Interface if t.col >= INTERFACE_COLUMNS => {
                    self.diag(format!("column {} has no interface tile (%{})", t.col, t.name))
                }
                TileKind::Compute if t.row >= COMPUTE_ROWS => {
                    self.diag(format!("tile %{} row {} is outside compute rows 0..{}", t.name, t.row, COMPUTE_ROWS - 1))
                }
                _ => {}
            }
            if !coords.insert((t.kind, t.col, t.row)) {
                self.diag(format!("tile %{} duplicates another tile's position", t.name));
            }
        }
    }

    fn fifos(&mut self) {
        let mut names = HashSet::new();
        for f in &self.p.fifos {
            if !names.insert(&f.name) {
                self.diag(format!("fifo @{} declared twice", f.name));
            }
            if f.depth == 0 {
                self.diag(format!("fifo @{} has depth 0", f.name));
            }
            if f.obj.elems == 0 {
                self.diag(format!("fifo @{} has empty objects", f.name));
            }
            if f.producer == f.consumer {
                self.diag(format!("fifo @{} has the same producer and consumer %{}", f.name, f.producer));
            }
            let (a, b) = (self.p.tile(&f.producer), self.p.tile(&f.consumer));
            if a.is_none() {
                self.diag(format!("fifo @{} producer %{} is not a declared tile", f.name, f.producer));
            }
            if b.is_none() {
                self.diag(format!("fifo @{} consumer %{} is not a declared tile", f.name, f.consumer));
            }
            if let (Some(a), Some(b)) = (a, b) {
                if a.name != b.name && !reachable(a, b) {
                    self.diag(format!("fifo @{}: %{} cannot stream to %{}", f.name, a.name, b.name));
                }
            }
        }
    }

    fn links(&mut self) {
        let mut as_source = HashSet::new();
        let mut as_dest = HashSet::new();
        for l in &self.p.links {
            let kind = l.kind.name();
            let srcs: Vec<&ObjectFifo> = l.sources.iter().filter_map(|n| self.p.fifo(n)).collect();
            let dsts: Vec<&ObjectFifo> = l.dests.iter().filter_map(|n| self.p.fifo(n)).collect();
            for n in l.sources.iter().chain(&l.dests) {
                if self.p.fifo(n).is_none() {
                    self.diag(format!("{kind} link names undeclared fifo @{n}"));
                }
            }
            for n in &l.sources {
                if !as_source.insert(n.clone()) {
                    self.diag(format!("fifo @{n} feeds more than one link"));
                }
            }
            for n in &l.dests {
                if !as_dest.insert(n.clone()) {
                    self.diag(format!("fifo @{n} is filled by more than one link"));
                }
            }
            if srcs.len() != l.sources.len() || dsts.len() != l.dests.len() {
                continue;
            }
            let mut tiles: Vec<&str> = srcs.iter().map(|f| f.consumer.as_str()).collect();
            tiles.extend(dsts.iter().map(|f| f.producer.as_str()));
            tiles.sort_unstable();
            tiles.dedup();
            if tiles.len() != 1 {
                self.diag(format!("{kind} link fifos do not meet at a single tile"));
                continue;
            }
            if self.p.tile(tiles[0]).map(|t| t.kind) != Some(TileKind::Memory) {
                self.diag(format!("{kind} link at %{} must be on a memory tile", tiles[0]));
            }
            let dt = srcs[0].obj.dtype;
            if srcs.iter().chain(&dsts).any(|f| f.obj.dtype != dt) {
                self.diag(format!("{kind} link mixes element types"));
                continue;
            }
            let src_elems: usize = srcs.iter().map(|f| f.obj.elems).sum();
            let dst_elems: usize = dsts.iter().map(|f| f.obj.elems).sum();
            match &l.kind {
                LinkKind::Distribute | LinkKind::Join => {
                    let (one, many) = if matches!(l.kind, LinkKind::Distribute) {
                        (srcs.len(), dsts.len())
                    } else {
                        (dsts.len(), srcs.len())
                    };
                    if one != 1 || many == 0 {
                        self.diag(format!("{kind} link has the wrong number of fifos"));
                    } else if src_elems != dst_elems {
                        self.diag(format!("{kind} link moves {src_elems} elements in but {dst_elems} out"));
                    }
                }
                LinkKind::Broadcast => {
                    if srcs.len() != 1 || dsts.is_empty() {
                        self.diag("broadcast link needs one source and at least one destination");
                    } else if dsts.iter().any(|d| d.obj.elems != src_elems) {
                        self.diag("broadcast destinations must match the source object size");
                    }
                }
                LinkKind::Permute(dims) => {
                    if srcs.len() != 1 || dsts.len() != 1 {
                        self.diag("permute link needs exactly one source and one destination");
                    } else if src_elems != dst_elems
                        || pattern_len(dims) != src_elems
                        || pattern_extent(dims) >= src_elems
                    {
                        self.diag(format!("permute pattern does not cover a {src_elems}-element object"));
                    }
                }
            }
        }
    }

    fn buffers_and_cores(&mut self) {
        let mut names = HashSet::new();
        for b in &self.p.buffers {
            if !names.insert(&b.name) {
                self.diag(format!("buffer @{} declared twice", b.name));
            }
            if self.p.tile(&b.tile).map(|t| t.kind) != Some(TileKind::Compute) {
                self.diag(format!("buffer @{} must live on a declared compute tile", b.name));
            }
        }
        for t in self.p.tiles.iter().filter(|t| !self.p.cores.iter().any(|c| c.tile == t.name)) {
            let bytes: usize = self.p.buffers.iter().filter(|b| b.tile == t.name).map(|b| b.obj.bytes()).sum();
            if bytes > COMPUTE_TILE_BYTES {
                self.out.push(Diagnostic {
                    message: format!("tile %{} uses {bytes} bytes and exceeds 64KB compute tile memory", t.name),
                });
            }
        }
        let mut cores = HashSet::new();
        for c in &self.p.cores {
            if self.p.tile(&c.tile).map(|t| t.kind) != Some(TileKind::Compute) {
                self.diag(format!("aie.core on %{}, which is not a declared compute tile", c.tile));
            }
            if !cores.insert(&c.tile) {
                self.diag(format!("tile %{} has more than one core program", c.tile));
            }
        }
    }

    fn streams(&mut self) {
        for t in self.p.tiles.iter().filter(|t| t.kind == TileKind::Compute) {
            let ins = self.p.fifos.iter().filter(|f| f.consumer == t.name).count();
            let outs = self.p.fifos.iter().filter(|f| f.producer == t.name).count();
            if ins > MAX_INPUT_STREAMS {
                self.diag(format!("compute tile %{} has {ins} input fifos and exceeds two input streams", t.name));
            }
            if outs > MAX_OUTPUT_STREAMS {
                self.diag(format!("compute tile %{} has {outs} output fifos and exceeds two output streams", t.name));
            }
        }
    }

    fn memory_tiles(&mut self) {
        for t in self.p.tiles.iter().filter(|t| t.kind == TileKind::Memory) {
            let broadcast_dests: HashSet<&str> = self
                .p
                .links
                .iter()
                .filter(|l| l.kind == LinkKind::Broadcast)
                .flat_map(|l| l.dests.iter().map(String::as_str))
                .collect();
            let broadcasts = self
                .p
                .links
                .iter()
                .filter(|l| l.kind == LinkKind::Broadcast && l.dests.iter().any(|d| self.p.fifo(d).is_some_and(|f| f.producer == t.name)))
                .count();
            let endpoints = self
                .p
                .fifos
                .iter()
                .filter(|f| f.consumer == t.name || (f.producer == t.name && !broadcast_dests.contains(f.name.as_str())))
                .count();
            let movers = endpoints + broadcasts;
            if movers > MEMORY_TILE_MOVERS {
                self.diag(format!("memory tile %{} needs {movers} data movers and exceeds 12 data movers", t.name));
            }
            let bytes: usize = self
                .p
                .fifos
                .iter()
                .filter(|f| f.consumer == t.name)
                .map(|f| f.depth * f.obj.bytes())
                .sum();
            if bytes > MEMORY_TILE_BYTES {
                self.diag(format!("memory tile %{} holds {bytes} bytes and exceeds 512KB memory tile memory", t.name));
            }
        }
    }

    fn core(&mut self, core: &'a CoreProgram) {
        let mut cx = CoreCx {
            tile: &core.tile,
            regs: HashMap::new(),
            held: BTreeMap::new(),
            held_bytes: 0,
            peak: 0,
            diags: Vec::new(),
            p: self.p,
        };
        cx.block(&core.body);
        for ((fifo, port), n) in &cx.held {
            if *n > 0 {
                cx.diags.push(format!("acquires {n} object(s) of @{fifo} ({port}) that are never released"));
            }
        }
        let buffers: usize = self.p.buffers.iter().filter(|b| b.tile == core.tile).map(|b| b.obj.bytes()).sum();
        let total = buffers + cx.peak;
        if total > COMPUTE_TILE_BYTES {
            cx.diags.push(format!("uses {total} bytes and exceeds 64KB compute tile memory"));
        }
        for d in cx.diags {
            self.diag(format!("core %{}: {d}", core.tile));
        }
    }

    fn sequence(&mut self) {
        let seq = &self.p.sequence;
        let mut names = HashSet::new();
        for h in &seq.params {
            if !names.insert(&h.name) {
                self.diag(format!("runtime parameter %{} declared twice", h.name));
            }
            let dirs: HashSet<Direction> =
                seq.transfers.iter().filter(|t| t.param == h.name).map(|t| t.direction).collect();
            if dirs.is_empty() {
                self.diag(format!("runtime parameter %{} is never transferred", h.name));
            } else if dirs.len() > 1 {
                self.diag(format!("runtime parameter %{} is used as both input and output", h.name));
            }
        }
        let mut fifos_used = HashSet::new();
        for t in &seq.transfers {
            let Some(h) = seq.params.iter().find(|h| h.name == t.param) else {
                self.diag(format!("dma on undeclared runtime parameter %{}", t.param));
                continue;
            };
            let Some(f) = self.p.fifo(&t.fifo) else {
                self.diag(format!("dma on undeclared fifo @{}", t.fifo));
                continue;
            };
            if !fifos_used.insert(&t.fifo) {
                self.diag(format!("fifo @{} has more than one host transfer", t.fifo));
            }
            let end = if t.direction == Direction::Input { &f.producer } else { &f.consumer };
            if self.p.tile(end).map(|t| t.kind) != Some(TileKind::Interface) {
                let which = if t.direction == Direction::Input { "produced" } else { "consumed" };
                self.diag(format!("host transfer on @{} needs it {which} at an interface tile", f.name));
            }
            if h.obj.dtype != f.obj.dtype {
                self.diag(format!("host transfer between %{} ({}) and @{} ({}) changes element type", h.name, h.obj.dtype, f.name, f.obj.dtype));
            }
            if t.dims.is_empty() || t.dims.iter().any(|d| d.size == 0) {
                self.diag(format!("host transfer on @{} has an empty access pattern", f.name));
                continue;
            }
            let len = pattern_len(&t.dims);
            if !len.is_multiple_of(f.obj.elems) {
                self.diag(format!("host transfer on @{} moves {len} elements, not a multiple of the {}-element object", f.name, f.obj.elems));
            }
            if t.offset + pattern_extent(&t.dims) >= h.obj.elems {
                self.diag(format!("host transfer on @{} reaches past the end of %{}", f.name, h.name));
            }
        }
    }

    /// Every fifo needs exactly one actor filling it and one draining it.
    fn actors(&mut self) {
        for f in &self.p.fifos {
            let mut producers = 0;
            let mut consumers = 0;
            producers += self.p.links.iter().filter(|l| l.dests.contains(&f.name)).count();
            consumers += self.p.links.iter().filter(|l| l.sources.contains(&f.name)).count();
            for t in &self.p.sequence.transfers {
                if t.fifo == f.name {
                    match t.direction {
                        Direction::Input => producers += 1,
                        Direction::Output => consumers += 1,
                    }
                }
            }
            for c in &self.p.cores {
                let mut uses = HashSet::new();
                c.walk(|op| {
                    if let CoreOp::Acquire { fifo, port, .. } = op {
                        if fifo == &f.name {
                            uses.insert(*port);
                        }
                    }
                });
                if uses.contains(&Port::Produce) {
                    producers += 1;
                }
                if uses.contains(&Port::Consume) {
                    consumers += 1;
                }
            }
            if producers != 1 {
                self.diag(format!("fifo @{} has {producers} producers; exactly one is required", f.name));
            }
            if consumers != 1 {
                self.diag(format!("fifo @{} has {consumers} consumers; exactly one is required", f.name));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reg {
    Index,
    Scalar(DType),
    Obj { obj: ObjType, count: usize },
}

struct CoreCx<'a> {
    p: &'a DeviceProgram,
    tile: &'a str,
    regs: HashMap<&'a str, Reg>,
    held: BTreeMap<(&'a str, Port), usize>,
    held_bytes: usize,
    peak: usize,
    diags: Vec<String>,
}

impl<'a> CoreCx<'a> {
    fn reg(&mut self, name: &str) -> Option<Reg> {
        let r = self.regs.get(name).copied();
        if r.is_none() {
            self.diags.push(format!("%{name} is used before it is defined"));
        }
        r
    }

    fn memref(&mut self, m: &MemRef) -> Option<ObjType> {
        match m {
            MemRef::Reg(r) => match self.reg(r)? {
                Reg::Obj { obj, count } => Some(ObjType::new(obj.elems * count, obj.dtype)),
                _ => {
                    self.diags.push(format!("%{r} is not an acquired object"));
                    None
                }
            },
            MemRef::Buffer(b) => match self.p.buffer(b) {
                Some(buf) if buf.tile == self.tile => Some(buf.obj),
                Some(_) => {
                    self.diags.push(format!("buffer @{b} belongs to another tile"));
                    None
                }
                None => {
                    self.diags.push(format!("buffer @{b} is not declared"));
                    None
                }
            },
        }
    }

    fn index(&mut self, idx: &IndexOperand, obj: Option<ObjType>) {
        match idx {
            IndexOperand::Reg(r) => {
                if let Some(t) = self.reg(r) {
                    if t != Reg::Index {
                        self.diags.push(format!("%{r} is not an index"));
                    }
                }
            }
            IndexOperand::Lit(v) => {
                if let Some(o) = obj {
                    if *v < 0 || *v as usize >= o.elems {
                        self.diags.push(format!("index {v} is outside a {}-element object", o.elems));
                    }
                }
            }
        }
    }

    fn scalar(&mut self, name: &str, dt: DType) {
        if let Some(t) = self.reg(name) {
            if t != Reg::Scalar(dt) {
                self.diags.push(format!("%{name} is not a {dt} value"));
            }
        }
    }

    fn fifo_port(&mut self, fifo: &str, port: Port) -> Option<&'a ObjectFifo> {
        let Some(f) = self.p.fifo(fifo) else {
            self.diags.push(format!("fifo @{fifo} is not declared"));
            return None;
        };
        let end = if port == Port::Consume { &f.consumer } else { &f.producer };
        if end != self.tile {
            let role = if port == Port::Consume { "consumer" } else { "producer" };
            self.diags.push(format!("uses @{fifo} as {port} but is not its {role}"));
            return None;
        }
        Some(f)
    }

    fn block(&mut self, ops: &'a [CoreOp]) {
        for op in ops {
            self.op(op);
        }
    }

    fn op(&mut self, op: &'a CoreOp) {
        match op {
            CoreOp::Const { dst, value } => {
                let r = match value {
                    ConstValue::Index(_) => Reg::Index,
                    ConstValue::Scalar(s) => Reg::Scalar(s.dtype()),
                };
                self.regs.insert(dst, r);
            }
            CoreOp::Arith { dst, op, lhs, rhs, ty } => {
                let want = match ty {
                    RegType::Index => {
                        if op.is_float_op() {
                            self.diags.push(format!("arith.{op} on index values"));
                        }
                        Reg::Index
                    }
                    RegType::Scalar(d) => {
                        if !op.accepts(*d) {
                            self.diags.push(format!("arith.{op} does not apply to {d}"));
                        }
                        Reg::Scalar(*d)
                    }
                };
                for r in [lhs, rhs] {
                    if let Some(t) = self.reg(r) {
                        if t != want {
                            self.diags.push(format!("%{r} is not of type {ty}"));
                        }
                    }
                }
                self.regs.insert(dst, want);
            }
            CoreOp::For { var, lo, hi, body, .. } => {
                self.regs.insert(var, Reg::Index);
                let before = self.held.clone();
                self.block(body);
                self.held.retain(|_, n| *n > 0);
                let trips = hi > lo;
                if trips && self.held != before {
                    self.diags.push(format!("loop over %{var} does not release every object it acquires"));
                }
                self.held = before;
                self.held_bytes = self.held_bytes_now();
            }
            CoreOp::Acquire { dst, fifo, port, n } => {
                let Some(f) = self.fifo_port(fifo, *port) else { return };
                if *n == 0 {
                    self.diags.push(format!("acquire of zero objects from @{fifo}"));
                }
                if *n > f.depth {
                    self.diags.push(format!("acquire of {n} objects exceeds the depth {} of @{fifo}", f.depth));
                }
                *self.held.entry((f.name.as_str(), *port)).or_default() += n;
                self.held.retain(|_, n| *n > 0);
                self.held_bytes = self.held_bytes_now();
                self.peak = self.peak.max(self.held_bytes);
                if let Some(d) = dst {
                    self.regs.insert(d, Reg::Obj { obj: f.obj, count: *n });
                }
            }
            CoreOp::Release { fifo, port, n } => {
                let Some(f) = self.fifo_port(fifo, *port) else { return };
                let held = self.held.entry((f.name.as_str(), *port)).or_default();
                if *n > *held {
                    self.diags.push(format!("releases {n} object(s) of @{fifo} while holding {held}"));
                    *held = 0;
                } else {
                    *held -= n;
                }
                self.held.retain(|_, n| *n > 0);
                self.held_bytes = self.held_bytes_now();
            }
            CoreOp::Load { dst, src, index, ty } => {
                let obj = self.memref(src);
                if let Some(o) = obj {
                    if o.dtype != *ty {
                        self.diags.push(format!("load of {ty} from {} memory", o.dtype));
                    }
                }
                self.index(index, obj);
                self.regs.insert(dst, Reg::Scalar(*ty));
            }
            CoreOp::Store { value, dst, index, ty } => {
                let obj = self.memref(dst);
                if let Some(o) = obj {
                    if o.dtype != *ty {
                        self.diags.push(format!("store of {ty} into {} memory", o.dtype));
                    }
                }
                self.index(index, obj);
                self.scalar(value, *ty);
            }
            CoreOp::VecReduce { dst, src, acc, lanes: l, ty, .. } => {
                if let Some(o) = self.memref(src) {
                    if o.dtype != *ty {
                        self.diags.push(format!("vector reduce of {ty} over {} memory", o.dtype));
                    }
                }
                if *l != lanes(*ty) {
                    self.diags.push(format!("{ty} vectors have {} lanes, not {l}", lanes(*ty)));
                }
                self.scalar(acc, *ty);
                self.regs.insert(dst, Reg::Scalar(*ty));
            }
            CoreOp::Call { dst, kernel, args, ty } => {
                let Some(sig) = signature(kernel) else {
                    self.diags.push(format!("unknown kernel @{kernel}"));
                    return;
                };
                if args.len() != sig.args.len() {
                    self.diags.push(format!("@{kernel} takes {} arguments, got {}", sig.args.len(), args.len()));
                } else {
                    for (a, want) in args.iter().zip(&sig.args) {
                        self.call_arg(kernel, a, *want);
                    }
                }
                if *ty != sig.ret || dst.is_some() != sig.ret.is_some() {
                    let shown = sig.ret.map_or("nothing".to_string(), |d| d.to_string());
                    self.diags.push(format!("@{kernel} returns {shown}"));
                }
                if let (Some(d), Some(r)) = (dst, sig.ret) {
                    self.regs.insert(d, Reg::Scalar(r));
                }
            }
        }
    }

    fn call_arg(&mut self, kernel: &str, a: &CallArg, want: ArgKind) {
        let ok = match (a, want) {
            (CallArg::Int(_), ArgKind::Int) => true,
            (CallArg::Reg(r), ArgKind::Int) => self.reg(r) == Some(Reg::Index),
            (CallArg::Reg(r), ArgKind::Scalar(d)) => self.reg(r) == Some(Reg::Scalar(d)),
            (CallArg::Reg(r), ArgKind::Obj(d)) => {
                self.memref(&MemRef::Reg(r.clone())).is_some_and(|o| o.dtype == d)
            }
            (CallArg::Buffer(b), ArgKind::Obj(d)) => {
                self.memref(&MemRef::Buffer(b.clone())).is_some_and(|o| o.dtype == d)
            }
            _ => false,
        };
        if !ok {
            self.diags.push(format!("argument to @{kernel} does not match {want:?}"));
        }
    }

    fn held_bytes_now(&self) -> usize {
        self.held
            .iter()
            .map(|((f, _), n)| self.p.fifo(f).map_or(0, |f| f.obj.bytes()) * n)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{parse_program, SCALAR_ADD};

    fn diags(src: &str) -> Vec<String> {
        validate_program(&parse_program(src).unwrap()).into_iter().map(|d| d.message).collect()
    }

    #[test]
    fn scalar_add_is_clean() {
        assert_eq!(diags(SCALAR_ADD), Vec::<String>::new());
    }

    #[test]
    fn three_input_streams() {
        let src = SCALAR_ADD.replace(
            "  aie.objectfifo @out0",
            "  %t1 = aie.tile(0, 1)\n  aie.objectfifo @x(%t1 -> %t0, depth = 1) : memref<4xi32>\n  aie.objectfifo @y(%s0 -> %t0, depth = 1) : memref<4xi32>\n  aie.objectfifo @out0",
        );
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("exceeds two input streams")), "{d:?}");
    }

    #[test]
    fn oversized_buffer() {
        let src = SCALAR_ADD.replace("  aie.core(%t0)", "  aie.buffer @big(%t0) : memref<35000xi16>\n  aie.core(%t0)");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("exceeds 64KB compute tile memory")), "{d:?}");
        let ok = SCALAR_ADD.replace("  aie.core(%t0)", "  aie.buffer @big(%t0) : memref<16000xi32>\n  aie.core(%t0)");
        assert_eq!(diags(&ok), Vec::<String>::new());
    }

    #[test]
    fn unreleased_acquire_and_depth() {
        let src = SCALAR_ADD.replace("      aie.objectfifo.release @in0(Consume, 1)\n", "");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("does not release")), "{d:?}");
        let src = SCALAR_ADD.replace("@in0(Consume, 1)", "@in0(Consume, 3)");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("exceeds the depth")), "{d:?}");
    }

    #[test]
    fn wiring_errors() {
        let src = SCALAR_ADD.replace("%t0 = aie.tile(0, 0)", "%t0 = aie.tile(1, 0)");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("outside device")), "{d:?}");
        assert!(d.iter().any(|m| m.contains("cannot stream")), "{d:?}");
        let src = SCALAR_ADD.replace("aie.dma_out @out0 -> %out offset = 0 dims = [(32, 1)]", "aie.dma_out @out0 -> %out offset = 8 dims = [(32, 1)]");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("past the end")), "{d:?}");
        let src = SCALAR_ADD.replace("%w = arith.addi %v, %one : i32", "%w = func.call @nope(%v) : i32");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("unknown kernel")), "{d:?}");
    }

    #[test]
    fn port_direction() {
        let src = SCALAR_ADD.replace("@out0(Produce, 1)", "@out0(Consume, 1)");
        let d = diags(&src);
        assert!(d.iter().any(|m| m.contains("not its consumer")), "{d:?}");
    }
}
