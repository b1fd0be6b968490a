//! Deterministic execution of device programs.
//!
//! Actors are stepped round-robin in a fixed order: host input DMAs, links,
//! cores in (column, row) order, then host output DMAs. Each step performs at
//! most one structured operation. Execution finishes when every DMA and core
//! has finished; a full round in which nothing moves while some of them have
//! not is a deadlock.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use super::builtins::{self, KernelArg};
use super::cost::{CostParams, CostReport};
use crate::device::*;
use crate::scalar::{ArithOp, Scalar};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedActor {
    pub actor: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("deadlock after {steps} scheduler steps:\n{}", format_blocked(.blocked))]
    Deadlock { steps: u64, blocked: Vec<BlockedActor> },
    #[error("{actor} is out of memory: {bytes} bytes live exceeds 65536")]
    OutOfMemory { actor: String, bytes: usize },
    #[error("{actor} trapped: {message}")]
    Trap { actor: String, message: String },
    #[error("{actor} calls unknown kernel @{name}")]
    UnknownKernel { actor: String, name: String },
    #[error("bad inputs: {0}")]
    BadInputs(String),
    #[error("step limit of {0} reached")]
    StepLimit(u64),
}

fn format_blocked(blocked: &[BlockedActor]) -> String {
    blocked.iter().map(|b| format!("  {}: {}", b.actor, b.state)).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOptions {
    /// Record one line per scheduler step.
    pub trace: bool,
    /// Record every element each core acquires for consumption.
    pub instrument: bool,
    pub max_steps: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { trace: false, instrument: false, max_steps: 50_000_000 }
    }
}

/// Everything an execution observed besides the outputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Execution {
    pub outputs: Vec<Vec<u8>>,
    pub cost: CostReport,
    pub steps: u64,
    pub trace: Vec<String>,
    /// Per core tile: elements acquired through Consume ports.
    pub consumed: BTreeMap<String, Vec<Scalar>>,
    /// Per fifo: the largest number of slots ever in use.
    pub max_occupancy: BTreeMap<String, usize>,
    /// Per core tile: compute cost units.
    pub core_cost: BTreeMap<String, f64>,
}

/// A simulator session: cost parameters, options and the set of program
/// artifacts already initialized (their setup cost is paid).
#[derive(Debug, Clone, Default)]
pub struct SimSession {
    pub params: CostParams,
    pub options: SimOptions,
    initialized: HashSet<String>,
}

impl SimSession {
    pub fn new(params: CostParams) -> Self {
        SimSession { params, options: SimOptions::default(), initialized: HashSet::new() }
    }

    pub fn with_options(mut self, options: SimOptions) -> Self {
        self.options = options;
        self
    }

    pub fn is_initialized(&self, p: &DeviceProgram) -> bool {
        self.initialized.contains(&print_program(p))
    }

    /// Execute `p`. `inputs` holds one byte buffer per input binding in
    /// order; the result holds one per output binding.
    pub fn execute(&mut self, p: &DeviceProgram, inputs: &[Vec<u8>]) -> Result<(Vec<Vec<u8>>, CostReport), SimError> {
        let e = self.execute_detailed(p, inputs)?;
        Ok((e.outputs, e.cost))
    }

    pub fn execute_detailed(&mut self, p: &DeviceProgram, inputs: &[Vec<u8>]) -> Result<Execution, SimError> {
        let mut e = run(p, inputs, &self.params, &self.options)?;
        let key = print_program(p);
        e.cost.setup = if self.initialized.contains(&key) { 0.0 } else { self.params.setup_constant };
        self.initialized.insert(key);
        Ok(e)
    }
}

/// Execute with a fresh session.
pub fn execute(p: &DeviceProgram, inputs: &[Vec<u8>], session: &mut SimSession) -> Result<(Vec<Vec<u8>>, CostReport), SimError> {
    session.execute(p, inputs)
}

struct Fifo {
    name: String,
    depth: usize,
    obj: ObjType,
    slots: Vec<Vec<Scalar>>,
    leases: Vec<u64>,
    free: VecDeque<usize>,
    producer_held: VecDeque<usize>,
    ready: VecDeque<usize>,
    consumer_held: VecDeque<usize>,
    max_used: usize,
}

impl Fifo {
    fn new(f: &ObjectFifo) -> Self {
        Fifo {
            name: f.name.clone(),
            depth: f.depth,
            obj: f.obj,
            slots: vec![vec![Scalar::zero(f.obj.dtype); f.obj.elems]; f.depth],
            leases: vec![0; f.depth],
            free: (0..f.depth).collect(),
            producer_held: VecDeque::new(),
            ready: VecDeque::new(),
            consumer_held: VecDeque::new(),
            max_used: 0,
        }
    }

    fn used(&self) -> usize {
        self.depth - self.free.len()
    }

    fn note(&mut self) {
        self.max_used = self.max_used.max(self.used());
        debug_assert!(self.producer_held.len() + self.ready.len() + self.consumer_held.len() <= self.depth);
    }

    fn available(&self, port: Port) -> usize {
        match port {
            Port::Produce => self.free.len(),
            Port::Consume => self.ready.len(),
        }
    }

    /// Take `n` slots for `port`; the caller has checked availability.
    fn acquire(&mut self, port: Port, n: usize, lease: &mut u64) -> (Vec<usize>, Vec<u64>) {
        let mut slots = Vec::with_capacity(n);
        let mut leases = Vec::with_capacity(n);
        for _ in 0..n {
            let s = match port {
                Port::Produce => self.free.pop_front(),
                Port::Consume => self.ready.pop_front(),
            }
            .expect("availability checked");
            *lease += 1;
            self.leases[s] = *lease;
            match port {
                Port::Produce => self.producer_held.push_back(s),
                Port::Consume => self.consumer_held.push_back(s),
            }
            slots.push(s);
            leases.push(*lease);
        }
        self.note();
        (slots, leases)
    }

    fn release(&mut self, port: Port, n: usize) -> Result<(), String> {
        let held = match port {
            Port::Produce => &mut self.producer_held,
            Port::Consume => &mut self.consumer_held,
        };
        if held.len() < n {
            return Err(format!("releases {n} object(s) of @{} ({port}) while holding {}", self.name, held.len()));
        }
        for _ in 0..n {
            let s = held.pop_front().expect("length checked");
            self.leases[s] = 0;
            match port {
                Port::Produce => self.ready.push_back(s),
                Port::Consume => self.free.push_back(s),
            }
        }
        Ok(())
    }

    /// Producer side of a data mover: fill one free slot and publish it.
    fn push(&mut self, data: Vec<Scalar>) {
        let s = self.free.pop_front().expect("availability checked");
        self.slots[s] = data;
        self.ready.push_back(s);
        self.note();
    }

    /// Consumer side of a data mover: take the oldest published object.
    fn pop(&mut self) -> Vec<Scalar> {
        let s = self.ready.pop_front().expect("availability checked");
        let data = std::mem::take(&mut self.slots[s]);
        self.slots[s] = vec![Scalar::zero(self.obj.dtype); self.obj.elems];
        self.free.push_back(s);
        data
    }
}

#[derive(Debug, Clone)]
struct Handle {
    fifo: usize,
    slots: Vec<usize>,
    leases: Vec<u64>,
}

#[derive(Debug, Clone)]
enum RegVal {
    Index(i64),
    Scalar(Scalar),
    Obj(Handle),
}

struct Frame<'p> {
    ops: &'p [CoreOp],
    pc: usize,
    /// Loop variable, current value, bound and step of the loop owning this
    /// frame.
    looping: Option<(&'p str, i64, i64, i64)>,
}

struct Core<'p> {
    tile: &'p Tile,
    frames: Vec<Frame<'p>>,
    regs: HashMap<&'p str, RegVal>,
    buffers: HashMap<&'p str, Vec<Scalar>>,
    buffer_bytes: usize,
    held_bytes: usize,
    cost: f64,
    consumed: Vec<Scalar>,
}

enum Actor<'p> {
    DmaIn { t: &'p DmaTransfer, fifo: usize, data: Vec<Scalar>, addrs: Vec<usize>, pos: usize },
    Link { l: &'p Link, srcs: Vec<usize>, dsts: Vec<usize> },
    Core(Box<Core<'p>>),
    DmaOut { t: &'p DmaTransfer, fifo: usize, out: usize, addrs: Vec<usize>, pos: usize },
}

enum Step {
    Progress(String),
    Blocked(String),
    Done,
}

struct Machine<'p> {
    p: &'p DeviceProgram,
    params: &'p CostParams,
    fifos: Vec<Fifo>,
    fifo_index: HashMap<&'p str, usize>,
    outputs: Vec<Vec<Scalar>>,
    lease: u64,
    instrument: bool,
}

fn trap(actor: &str, message: impl Into<String>) -> SimError {
    SimError::Trap { actor: actor.to_string(), message: message.into() }
}

fn run(p: &DeviceProgram, inputs: &[Vec<u8>], params: &CostParams, opts: &SimOptions) -> Result<Execution, SimError> {
    let fifos: Vec<Fifo> = p.fifos.iter().map(Fifo::new).collect();
    let fifo_index: HashMap<&str, usize> = p.fifos.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect();
    let lookup = |name: &str| -> Result<usize, SimError> {
        fifo_index.get(name).copied().ok_or_else(|| trap("runtime sequence", format!("unknown fifo @{name}")))
    };

    let bindings = p.bindings();
    let in_params: Vec<&HostParam> = bindings.iter().filter(|(_, d)| *d == Direction::Input).map(|(h, _)| *h).collect();
    let out_params: Vec<&HostParam> = bindings.iter().filter(|(_, d)| *d == Direction::Output).map(|(h, _)| *h).collect();
    if inputs.len() != in_params.len() {
        return Err(SimError::BadInputs(format!("program takes {} input buffers, got {}", in_params.len(), inputs.len())));
    }
    let mut host_in: HashMap<&str, Vec<Scalar>> = HashMap::new();
    for (h, bytes) in in_params.iter().zip(inputs) {
        if bytes.len() != h.obj.bytes() {
            return Err(SimError::BadInputs(format!("%{} needs {} bytes, got {}", h.name, h.obj.bytes(), bytes.len())));
        }
        host_in.insert(h.name.as_str(), Scalar::read_all(h.obj.dtype, bytes));
    }
    let outputs: Vec<Vec<Scalar>> = out_params.iter().map(|h| vec![Scalar::zero(h.obj.dtype); h.obj.elems]).collect();

    let mut actors: Vec<Actor> = Vec::new();
    for t in p.sequence.transfers.iter().filter(|t| t.direction == Direction::Input) {
        let data = host_in.get(t.param.as_str()).cloned().ok_or_else(|| trap("runtime sequence", format!("unknown parameter %{}", t.param)))?;
        let addrs: Vec<usize> = pattern_addresses(t.offset, &t.dims).collect();
        if let Some(a) = addrs.iter().find(|a| **a >= data.len()) {
            return Err(trap(&format!("dma_in %{}", t.param), format!("address {a} is outside the buffer")));
        }
        actors.push(Actor::DmaIn { t, fifo: lookup(&t.fifo)?, data, addrs, pos: 0 });
    }
    for l in &p.links {
        let srcs = l.sources.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?;
        let dsts = l.dests.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?;
        actors.push(Actor::Link { l, srcs, dsts });
    }
    let mut cores: Vec<&CoreProgram> = p.cores.iter().collect();
    let tile_of = |c: &CoreProgram| p.tile(&c.tile).map(|t| (t.col, t.row));
    cores.sort_by_key(|c| tile_of(c));
    for c in cores {
        let tile = p.tile(&c.tile).ok_or_else(|| trap(&format!("core %{}", c.tile), "not a declared tile"))?;
        let buffers: HashMap<&str, Vec<Scalar>> = p
            .buffers
            .iter()
            .filter(|b| b.tile == c.tile)
            .map(|b| (b.name.as_str(), vec![Scalar::zero(b.obj.dtype); b.obj.elems]))
            .collect();
        let buffer_bytes = p.buffers.iter().filter(|b| b.tile == c.tile).map(|b| b.obj.bytes()).sum();
        actors.push(Actor::Core(Box::new(Core {
            tile,
            frames: vec![Frame { ops: &c.body, pc: 0, looping: None }],
            regs: HashMap::new(),
            buffers,
            buffer_bytes,
            held_bytes: 0,
            cost: 0.0,
            consumed: Vec::new(),
        })));
    }
    let out_slot: HashMap<&str, usize> = out_params.iter().enumerate().map(|(i, h)| (h.name.as_str(), i)).collect();
    for t in p.sequence.transfers.iter().filter(|t| t.direction == Direction::Output) {
        let out = *out_slot.get(t.param.as_str()).ok_or_else(|| trap("runtime sequence", format!("unknown parameter %{}", t.param)))?;
        let addrs: Vec<usize> = pattern_addresses(t.offset, &t.dims).collect();
        if let Some(a) = addrs.iter().find(|a| **a >= outputs[out].len()) {
            return Err(trap(&format!("dma_out %{}", t.param), format!("address {a} is outside the buffer")));
        }
        actors.push(Actor::DmaOut { t, fifo: lookup(&t.fifo)?, out, addrs, pos: 0 });
    }

    let mut m = Machine { p, params, fifos, fifo_index, outputs, lease: 0, instrument: opts.instrument };
    let mut done = vec![false; actors.len()];
    let mut steps: u64 = 0;
    let mut trace = Vec::new();
    loop {
        let mut progressed = false;
        let mut pending = false;
        let mut blocked = Vec::new();
        for (i, a) in actors.iter_mut().enumerate() {
            if done[i] {
                continue;
            }
            let name = actor_name(a);
            match m.step(a)? {
                Step::Done => {
                    if !matches!(a, Actor::Link { .. }) {
                        done[i] = true;
                    }
                    if opts.trace {
                        trace.push(format!("step {steps}: {name}: finished"));
                    }
                }
                Step::Progress(what) => {
                    progressed = true;
                    steps += 1;
                    if opts.trace {
                        trace.push(format!("step {steps}: {name}: {what}"));
                    }
                    if steps >= opts.max_steps {
                        return Err(SimError::StepLimit(opts.max_steps));
                    }
                }
                Step::Blocked(why) => {
                    if !matches!(a, Actor::Link { .. }) {
                        pending = true;
                    }
                    blocked.push(BlockedActor { actor: name, state: why });
                }
            }
            if !matches!(a, Actor::Link { .. }) && !done[i] {
                pending = true;
            }
        }
        if !pending {
            break;
        }
        if !progressed {
            return Err(SimError::Deadlock { steps, blocked });
        }
    }

    let mut core_cost = BTreeMap::new();
    let mut consumed = BTreeMap::new();
    for a in &actors {
        if let Actor::Core(c) = a {
            core_cost.insert(c.tile.name.clone(), c.cost);
            if opts.instrument {
                consumed.insert(c.tile.name.clone(), c.consumed.clone());
            }
        }
    }
    let compute = core_cost.values().copied().fold(0.0, f64::max);
    let xfer = p
        .sequence
        .params
        .iter()
        .map(|h| params.sync_cost(h.obj.bytes(), p.param_columns(&h.name), 0))
        .sum();
    let max_occupancy = m.fifos.iter().map(|f| (f.name.clone(), f.max_used)).collect();
    Ok(Execution {
        outputs: m.outputs.iter().map(|o| Scalar::encode_all(o)).collect(),
        cost: CostReport { setup: 0.0, xfer, compute },
        steps,
        trace,
        consumed,
        max_occupancy,
        core_cost,
    })
}

fn actor_name(a: &Actor) -> String {
    match a {
        Actor::DmaIn { t, .. } => format!("dma_in %{} -> @{}", t.param, t.fifo),
        Actor::Link { l, .. } => format!("{} link @{}", l.kind.name(), l.sources.join(",@")),
        Actor::Core(c) => format!("core %{}({}, {})", c.tile.name, c.tile.col, c.tile.row),
        Actor::DmaOut { t, .. } => format!("dma_out @{} -> %{}", t.fifo, t.param),
    }
}

impl<'p> Machine<'p> {
    fn step(&mut self, a: &mut Actor<'p>) -> Result<Step, SimError> {
        match a {
            Actor::DmaIn { t, fifo, data, addrs, pos } => {
                if *pos >= addrs.len() {
                    return Ok(Step::Done);
                }
                let f = &mut self.fifos[*fifo];
                if f.free.is_empty() {
                    return Ok(Step::Blocked(format!("waiting for a free slot in @{}", t.fifo)));
                }
                let n = f.obj.elems;
                let obj: Vec<Scalar> = addrs[*pos..*pos + n].iter().map(|a| data[*a]).collect();
                f.push(obj);
                *pos += n;
                Ok(Step::Progress(format!("sent {n} elements ({} of {})", pos, addrs.len())))
            }
            Actor::DmaOut { t, fifo, out, addrs, pos } => {
                if *pos >= addrs.len() {
                    return Ok(Step::Done);
                }
                let f = &mut self.fifos[*fifo];
                if f.ready.is_empty() {
                    return Ok(Step::Blocked(format!("waiting for an object from @{}", t.fifo)));
                }
                let obj = f.pop();
                let n = obj.len();
                let dst = &mut self.outputs[*out];
                for (a, v) in addrs[*pos..*pos + n].iter().zip(obj) {
                    dst[*a] = v;
                }
                *pos += n;
                Ok(Step::Progress(format!("received {n} elements ({} of {})", pos, addrs.len())))
            }
            Actor::Link { l, srcs, dsts } => self.link(l, srcs, dsts),
            Actor::Core(c) => self.core_step(c),
        }
    }

    fn link(&mut self, l: &Link, srcs: &[usize], dsts: &[usize]) -> Result<Step, SimError> {
        if let Some(s) = srcs.iter().find(|s| self.fifos[**s].ready.is_empty()) {
            let name = &self.fifos[*s].name;
            // an idle link waiting on its input is not holding anything up
            return Ok(if srcs.iter().all(|s| self.fifos[*s].ready.is_empty()) {
                Step::Done
            } else {
                Step::Blocked(format!("waiting for an object from @{name}"))
            });
        }
        if let Some(d) = dsts.iter().find(|d| self.fifos[**d].free.is_empty()) {
            return Ok(Step::Blocked(format!("waiting for a free slot in @{}", self.fifos[*d].name)));
        }
        let mut data: Vec<Scalar> = Vec::new();
        for s in srcs {
            data.extend(self.fifos[*s].pop());
        }
        match &l.kind {
            LinkKind::Distribute => {
                let mut at = 0;
                for d in dsts {
                    let n = self.fifos[*d].obj.elems;
                    let part = data.get(at..at + n).ok_or_else(|| trap("link", "distribute slices overrun the source"))?;
                    self.fifos[*d].push(part.to_vec());
                    at += n;
                }
            }
            LinkKind::Join => {
                let d = dsts[0];
                if data.len() != self.fifos[d].obj.elems {
                    return Err(trap("link", "join inputs do not fill the destination"));
                }
                self.fifos[d].push(data);
            }
            LinkKind::Broadcast => {
                for d in dsts {
                    self.fifos[*d].push(data.clone());
                }
            }
            LinkKind::Permute(dims) => {
                let mut out = Vec::with_capacity(data.len());
                for a in pattern_addresses(0, dims) {
                    out.push(*data.get(a).ok_or_else(|| trap("link", format!("permute address {a} out of range")))?);
                }
                self.fifos[dsts[0]].push(out);
            }
        }
        Ok(Step::Progress(format!("moved {} elements", self.fifos[dsts[0]].obj.elems * dsts.len())))
    }

    fn core_step(&mut self, c: &mut Core<'p>) -> Result<Step, SimError> {
        let name = format!("core %{}", c.tile.name);
        loop {
            let Some(frame) = c.frames.last_mut() else {
                return Ok(Step::Done);
            };
            if frame.pc < frame.ops.len() {
                let op = &frame.ops[frame.pc];
                return self.exec(c, op, &name);
            }
            match frame.looping {
                Some((var, cur, hi, step)) if cur + step < hi => {
                    frame.looping = Some((var, cur + step, hi, step));
                    frame.pc = 0;
                    c.regs.insert(var, RegVal::Index(cur + step));
                }
                _ => {
                    c.frames.pop();
                }
            }
        }
    }

    fn exec(&mut self, c: &mut Core<'p>, op: &'p CoreOp, name: &str) -> Result<Step, SimError> {
        let scalar_cost = self.params.scalar_op_cost;
        let advance = |c: &mut Core<'p>| {
            if let Some(f) = c.frames.last_mut() {
                f.pc += 1;
            }
        };
        let desc = match op {
            CoreOp::Const { dst, value } => {
                let v = match value {
                    ConstValue::Index(i) => RegVal::Index(*i),
                    ConstValue::Scalar(s) => RegVal::Scalar(*s),
                };
                c.regs.insert(dst, v);
                c.cost += scalar_cost;
                format!("%{dst} = constant")
            }
            CoreOp::Arith { dst, op: aop, lhs, rhs, ty } => {
                let v = match ty {
                    RegType::Index => {
                        let (a, b) = (index_reg(c, lhs, name)?, index_reg(c, rhs, name)?);
                        RegVal::Index(index_op(*aop, a, b).ok_or_else(|| trap(name, format!("arith.{aop} on index values")))?)
                    }
                    RegType::Scalar(_) => {
                        let (a, b) = (scalar_reg(c, lhs, name)?, scalar_reg(c, rhs, name)?);
                        RegVal::Scalar(Scalar::apply(*aop, a, b).map_err(|m| trap(name, m))?)
                    }
                };
                c.regs.insert(dst, v);
                c.cost += scalar_cost;
                format!("%{dst} = arith.{aop}")
            }
            CoreOp::For { var, lo, hi, step, body } => {
                advance(c);
                if lo < hi {
                    c.regs.insert(var, RegVal::Index(*lo));
                    c.frames.push(Frame { ops: body, pc: 0, looping: Some((var, *lo, *hi, *step)) });
                }
                return Ok(Step::Progress(format!("enter loop %{var}")));
            }
            CoreOp::Acquire { dst, fifo, port, n } => {
                let fi = self.fifo_of(fifo, name)?;
                self.check_port(c, fi, *port, name)?;
                let f = &mut self.fifos[fi];
                if f.available(*port) < *n {
                    return Ok(Step::Blocked(format!(
                        "blocked on acquire @{fifo}({port}, {n}): {} of {} object(s) available",
                        f.available(*port),
                        n
                    )));
                }
                let bytes = f.obj.bytes() * n;
                if c.held_bytes + bytes + c.buffer_bytes > COMPUTE_TILE_BYTES {
                    return Err(SimError::OutOfMemory { actor: name.to_string(), bytes: c.held_bytes + bytes + c.buffer_bytes });
                }
                let (slots, leases) = f.acquire(*port, *n, &mut self.lease);
                if self.instrument && *port == Port::Consume {
                    for s in &slots {
                        c.consumed.extend_from_slice(&f.slots[*s]);
                    }
                }
                c.held_bytes += bytes;
                if let Some(d) = dst {
                    c.regs.insert(d, RegVal::Obj(Handle { fifo: fi, slots, leases }));
                }
                c.cost += scalar_cost;
                format!("acquire @{fifo}({port}, {n})")
            }
            CoreOp::Release { fifo, port, n } => {
                let fi = self.fifo_of(fifo, name)?;
                self.check_port(c, fi, *port, name)?;
                let f = &mut self.fifos[fi];
                f.release(*port, *n).map_err(|m| trap(name, m))?;
                c.held_bytes = c.held_bytes.saturating_sub(f.obj.bytes() * n);
                c.cost += scalar_cost;
                format!("release @{fifo}({port}, {n})")
            }
            CoreOp::Load { dst, src, index, ty } => {
                let i = self.index(c, index, name)?;
                let v = self.read(c, src, i, name)?;
                if v.dtype() != *ty {
                    return Err(trap(name, format!("load of {ty} from {} memory", v.dtype())));
                }
                c.regs.insert(dst, RegVal::Scalar(v));
                c.cost += scalar_cost;
                format!("%{dst} = load")
            }
            CoreOp::Store { value, dst, index, ty } => {
                let i = self.index(c, index, name)?;
                let v = scalar_reg(c, value, name)?;
                if v.dtype() != *ty {
                    return Err(trap(name, format!("store of {} as {ty}", v.dtype())));
                }
                self.write(c, dst, i, v, name)?;
                c.cost += scalar_cost;
                "store".to_string()
            }
            CoreOp::VecReduce { dst, combiner, src, acc, lanes: l, ty } => {
                let data = self.whole(c, src, name)?;
                let acc = scalar_reg(c, acc, name)?;
                if acc.dtype() != *ty || data.iter().any(|x| x.dtype() != *ty) || *l != lanes(*ty) {
                    return Err(trap(name, "vector reduce operand types do not match"));
                }
                let r = builtins::lane_reduce(*combiner, &data, acc);
                c.cost += self.params.vector_cost(data.len().div_ceil(*l), *ty);
                c.regs.insert(dst, RegVal::Scalar(r));
                format!("%{dst} = aievec.reduce {}", combiner.name())
            }
            CoreOp::Call { dst, kernel, args, .. } => {
                let mut kargs = Vec::with_capacity(args.len());
                for a in args {
                    kargs.push(match a {
                        CallArg::Int(v) => KernelArg::Int(*v),
                        CallArg::Buffer(b) => KernelArg::Obj(self.whole(c, &MemRef::Buffer(b.clone()), name)?),
                        CallArg::Reg(r) => match c.regs.get(r.as_str()) {
                            Some(RegVal::Index(v)) => KernelArg::Int(*v),
                            Some(RegVal::Scalar(s)) => KernelArg::Scalar(*s),
                            Some(RegVal::Obj(_)) => KernelArg::Obj(self.whole(c, &MemRef::Reg(r.clone()), name)?),
                            None => return Err(trap(name, format!("%{r} is not defined"))),
                        },
                    });
                }
                let outcome = builtins::call(kernel, &mut kargs)
                    .ok_or_else(|| SimError::UnknownKernel { actor: name.to_string(), name: kernel.clone() })?
                    .map_err(|m| trap(name, format!("@{kernel}: {m}")))?;
                for (a, k) in args.iter().zip(kargs) {
                    if let KernelArg::Obj(data) = k {
                        let m = match a {
                            CallArg::Buffer(b) => MemRef::Buffer(b.clone()),
                            CallArg::Reg(r) => MemRef::Reg(r.clone()),
                            CallArg::Int(_) => continue,
                        };
                        self.write_whole(c, &m, data, name)?;
                    }
                }
                c.cost += self.params.kernel_call_overhead + self.params.vector_cost(outcome.vector_ops, outcome.compute_dtype);
                match (dst, outcome.ret) {
                    (Some(d), Some(v)) => {
                        c.regs.insert(d, RegVal::Scalar(v));
                    }
                    (Some(d), None) => return Err(trap(name, format!("@{kernel} returns nothing for %{d}"))),
                    _ => {}
                }
                format!("call @{kernel}")
            }
        };
        advance(c);
        Ok(Step::Progress(desc))
    }

    fn fifo_of(&self, fifo: &str, name: &str) -> Result<usize, SimError> {
        self.fifo_index.get(fifo).copied().ok_or_else(|| trap(name, format!("unknown fifo @{fifo}")))
    }

    fn check_port(&self, c: &Core, fi: usize, port: Port, name: &str) -> Result<(), SimError> {
        let f = &self.p.fifos[fi];
        let end = if port == Port::Consume { &f.consumer } else { &f.producer };
        if *end != c.tile.name {
            return Err(trap(name, format!("uses @{}({port}) from the wrong tile", f.name)));
        }
        Ok(())
    }

    fn handle<'c>(&self, c: &'c Core, r: &str, name: &str) -> Result<&'c Handle, SimError> {
        match c.regs.get(r) {
            Some(RegVal::Obj(h)) => {
                let f = &self.fifos[h.fifo];
                if h.slots.iter().zip(&h.leases).any(|(s, l)| f.leases[*s] != *l) {
                    return Err(trap(name, format!("%{r} is used after its objects were released")));
                }
                Ok(h)
            }
            Some(_) => Err(trap(name, format!("%{r} is not an object"))),
            None => Err(trap(name, format!("%{r} is not defined"))),
        }
    }

    fn index(&self, c: &Core, idx: &IndexOperand, name: &str) -> Result<usize, SimError> {
        let v = match idx {
            IndexOperand::Lit(v) => *v,
            IndexOperand::Reg(r) => index_reg(c, r, name)?,
        };
        usize::try_from(v).map_err(|_| trap(name, format!("negative index {v}")))
    }

    fn read(&self, c: &Core, m: &MemRef, i: usize, name: &str) -> Result<Scalar, SimError> {
        match m {
            MemRef::Buffer(b) => {
                let buf = c.buffers.get(b.as_str()).ok_or_else(|| trap(name, format!("unknown buffer @{b}")))?;
                buf.get(i).copied().ok_or_else(|| trap(name, format!("index {i} out of bounds for @{b}")))
            }
            MemRef::Reg(r) => {
                let h = self.handle(c, r, name)?;
                let f = &self.fifos[h.fifo];
                let (s, o) = (i / f.obj.elems, i % f.obj.elems);
                let slot = h.slots.get(s).ok_or_else(|| trap(name, format!("index {i} out of bounds for %{r}")))?;
                Ok(f.slots[*slot][o])
            }
        }
    }

    fn write(&mut self, c: &mut Core, m: &MemRef, i: usize, v: Scalar, name: &str) -> Result<(), SimError> {
        match m {
            MemRef::Buffer(b) => {
                let buf = c.buffers.get_mut(b.as_str()).ok_or_else(|| trap(name, format!("unknown buffer @{b}")))?;
                if buf.first().is_some_and(|x| x.dtype() != v.dtype()) {
                    return Err(trap(name, format!("store of {} into @{b}", v.dtype())));
                }
                let len = buf.len();
                *buf.get_mut(i).ok_or_else(|| trap(name, format!("index {i} out of bounds for @{b} ({len} elements)")))? = v;
                Ok(())
            }
            MemRef::Reg(r) => {
                let h = self.handle(c, r, name)?.clone();
                let f = &mut self.fifos[h.fifo];
                if f.obj.dtype != v.dtype() {
                    return Err(trap(name, format!("store of {} into %{r}", v.dtype())));
                }
                let (s, o) = (i / f.obj.elems, i % f.obj.elems);
                let slot = h.slots.get(s).ok_or_else(|| trap(name, format!("index {i} out of bounds for %{r}")))?;
                f.slots[*slot][o] = v;
                Ok(())
            }
        }
    }

    fn whole(&self, c: &Core, m: &MemRef, name: &str) -> Result<Vec<Scalar>, SimError> {
        match m {
            MemRef::Buffer(b) => c.buffers.get(b.as_str()).cloned().ok_or_else(|| trap(name, format!("unknown buffer @{b}"))),
            MemRef::Reg(r) => {
                let h = self.handle(c, r, name)?;
                let f = &self.fifos[h.fifo];
                Ok(h.slots.iter().flat_map(|s| f.slots[*s].iter().copied()).collect())
            }
        }
    }

    fn write_whole(&mut self, c: &mut Core, m: &MemRef, data: Vec<Scalar>, name: &str) -> Result<(), SimError> {
        match m {
            MemRef::Buffer(b) => {
                let buf = c.buffers.get_mut(b.as_str()).ok_or_else(|| trap(name, format!("unknown buffer @{b}")))?;
                *buf = data;
                Ok(())
            }
            MemRef::Reg(r) => {
                let h = self.handle(c, r, name)?.clone();
                let f = &mut self.fifos[h.fifo];
                let n = f.obj.elems;
                for (k, s) in h.slots.iter().enumerate() {
                    f.slots[*s].copy_from_slice(&data[k * n..(k + 1) * n]);
                }
                Ok(())
            }
        }
    }
}

fn index_reg(c: &Core, r: &str, name: &str) -> Result<i64, SimError> {
    match c.regs.get(r) {
        Some(RegVal::Index(v)) => Ok(*v),
        Some(_) => Err(trap(name, format!("%{r} is not an index"))),
        None => Err(trap(name, format!("%{r} is not defined"))),
    }
}

fn scalar_reg(c: &Core, r: &str, name: &str) -> Result<Scalar, SimError> {
    match c.regs.get(r) {
        Some(RegVal::Scalar(v)) => Ok(*v),
        Some(_) => Err(trap(name, format!("%{r} is not a scalar"))),
        None => Err(trap(name, format!("%{r} is not defined"))),
    }
}

fn index_op(op: ArithOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        ArithOp::AddI => a.wrapping_add(b),
        ArithOp::SubI => a.wrapping_sub(b),
        ArithOp::MulI => a.wrapping_mul(b),
        ArithOp::MaxSI => a.max(b),
        ArithOp::MinSI => a.min(b),
        ArithOp::MaxUI => (a as u64).max(b as u64) as i64,
        ArithOp::MinUI => (a as u64).min(b as u64) as i64,
        _ => return None,
    })
}

impl fmt::Display for BlockedActor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.actor, self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{parse_program, validate_program, SCALAR_ADD};
    use crate::ir::DType;
    use proptest::prelude::*;

    fn i32_bytes(v: impl IntoIterator<Item = i32>) -> Vec<u8> {
        v.into_iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    fn i32_values(b: &[u8]) -> Vec<i32> {
        b.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()
    }

    #[test]
    fn scalar_add_adds_one() {
        let p = parse_program(SCALAR_ADD).unwrap();
        let mut s = SimSession::default();
        let (out, cost) = s.execute(&p, &[i32_bytes(0..32)]).unwrap();
        assert_eq!(i32_values(&out[0]), (1..=32).collect::<Vec<_>>());
        assert_eq!(cost.setup, 3000.0);
        assert!(cost.compute > 0.0 && cost.xfer > 0.0);
        let (_, again) = s.execute(&p, &[i32_bytes(0..32)]).unwrap();
        assert_eq!(again.setup, 0.0);
        assert_eq!(again.compute, cost.compute);
    }

    #[test]
    fn runs_are_deterministic() {
        let p = parse_program(SCALAR_ADD).unwrap();
        let opts = SimOptions { trace: true, ..SimOptions::default() };
        let a = SimSession::default().with_options(opts.clone()).execute_detailed(&p, &[i32_bytes(0..32)]).unwrap();
        let b = SimSession::default().with_options(opts).execute_detailed(&p, &[i32_bytes(0..32)]).unwrap();
        assert_eq!(a, b);
        assert!(!a.trace.is_empty());
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let p = parse_program(SCALAR_ADD).unwrap();
        let err = SimSession::default().execute(&p, &[i32_bytes(0..31)]).unwrap_err();
        assert!(matches!(err, SimError::BadInputs(_)), "{err}");
        assert!(matches!(SimSession::default().execute(&p, &[]), Err(SimError::BadInputs(_))));
    }

    #[test]
    fn missing_release_deadlocks_with_report() {
        // the input object is never handed back, so the second iteration
        // cannot acquire once both slots are held
        let text = SCALAR_ADD
            .replace("scf.for %i = 0 to 1 step 1", "scf.for %i = 0 to 3 step 1")
            .replace("      aie.objectfifo.release @in0(Consume, 1)\n", "")
            .replace("memref<32xi32>, %out", "memref<96xi32>, %out")
            .replace("%out : memref<32xi32>", "%out : memref<96xi32>")
            .replace("dims = [(32, 1)]", "dims = [(96, 1)]");
        let p = parse_program(&text).unwrap();
        assert!(!validate_program(&p).is_empty());
        let err = SimSession::default().execute(&p, &[i32_bytes(0..96)]).unwrap_err();
        let SimError::Deadlock { steps, blocked } = &err else { panic!("{err}") };
        assert!(*steps > 0);
        let core = blocked.iter().find(|b| b.actor.starts_with("core %t0")).unwrap();
        assert!(core.state.contains("acquire @in0(Consume, 1)"), "{}", core.state);
        assert!(err.to_string().contains("deadlock"));
    }

    #[test]
    fn use_after_release_traps() {
        let text = SCALAR_ADD.replace(
            "      aie.objectfifo.release @out0(Produce, 1)\n",
            "      aie.objectfifo.release @out0(Produce, 1)\n      %z = memref.load %a[0] : i32\n",
        );
        let p = parse_program(&text).unwrap();
        let err = SimSession::default().execute(&p, &[i32_bytes(0..32)]).unwrap_err();
        assert!(err.to_string().contains("after its objects were released"), "{err}");
    }

    #[test]
    fn unknown_kernel_is_reported() {
        let text = SCALAR_ADD.replace("%one = arith.constant 1 : i32", "%one = arith.constant 1 : i32\n    func.call @nope(%one)");
        let p = parse_program(&text).unwrap();
        let err = SimSession::default().execute(&p, &[i32_bytes(0..32)]).unwrap_err();
        assert_eq!(err, SimError::UnknownKernel { actor: "core %t0".into(), name: "nope".into() });
    }

    /// A 1-column pipeline: host -> mem tile -> `cores` cores -> mem tile
    /// -> host. Each core adds its row to every element.
    fn pipeline(cores: usize, obj: usize, iters: usize, depth: usize) -> String {
        let total = cores * obj * iters;
        let mut s = String::from("aie.device(npu1_1col) {\n  %s0 = aie.shim_tile(0)\n  %m0 = aie.mem_tile(0)\n");
        for r in 0..cores {
            s += &format!("  %t{r} = aie.tile(0, {r})\n");
        }
        s += &format!("  aie.objectfifo @in(%s0 -> %m0, depth = {depth}) : memref<{}xi32>\n", obj * cores);
        s += &format!("  aie.objectfifo @out(%m0 -> %s0, depth = {depth}) : memref<{}xi32>\n", obj * cores);
        for r in 0..cores {
            s += &format!("  aie.objectfifo @i{r}(%m0 -> %t{r}, depth = {depth}) : memref<{obj}xi32>\n");
            s += &format!("  aie.objectfifo @o{r}(%t{r} -> %m0, depth = {depth}) : memref<{obj}xi32>\n");
        }
        let list = |p: &str| (0..cores).map(|r| format!("@{p}{r}")).collect::<Vec<_>>().join(", ");
        s += &format!("  aie.objectfifo.link distribute @in -> [{}]\n", list("i"));
        s += &format!("  aie.objectfifo.link join [{}] -> @out\n", list("o"));
        for r in 0..cores {
            s += &format!(
                "  aie.core(%t{r}) {{\n    %k = arith.constant {r} : i32\n    scf.for %i = 0 to {iters} step 1 {{\n      \
                 %a = aie.objectfifo.acquire @i{r}(Consume, 1)\n      %b = aie.objectfifo.acquire @o{r}(Produce, 1)\n      \
                 scf.for %j = 0 to {obj} step 1 {{\n        %v = memref.load %a[%j] : i32\n        %w = arith.addi %v, %k : i32\n        \
                 memref.store %w, %b[%j] : i32\n      }}\n      aie.objectfifo.release @i{r}(Consume, 1)\n      \
                 aie.objectfifo.release @o{r}(Produce, 1)\n    }}\n    aie.end\n  }}\n"
            );
        }
        s += &format!(
            "  aie.runtime_sequence(%x : memref<{total}xi32>, %y : memref<{total}xi32>) {{\n    \
             aie.dma_in %x -> @in offset = 0 dims = [({total}, 1)]\n    aie.dma_out @out -> %y offset = 0 dims = [({total}, 1)]\n  }}\n}}\n"
        );
        s
    }

    fn pipeline_expected(cores: usize, obj: usize, iters: usize, input: &[i32]) -> Vec<i32> {
        let mut out = Vec::with_capacity(input.len());
        for _ in 0..iters {
            for r in 0..cores {
                for _ in 0..obj {
                    let x = input[out.len()];
                    out.push(x.wrapping_add(r as i32));
                }
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn valid_pipelines_complete_within_depth(
            cores in 1usize..=4,
            obj in 1usize..=8,
            iters in 1usize..=4,
            depth in 1usize..=3,
            seed in any::<i32>(),
        ) {
            let text = pipeline(cores, obj, iters, depth);
            let p = parse_program(&text).unwrap();
            prop_assert!(validate_program(&p).is_empty(), "{:?}", validate_program(&p));
            let n = cores * obj * iters;
            let input: Vec<i32> = (0..n as i32).map(|k| k.wrapping_mul(seed)).collect();
            let opts = SimOptions { instrument: true, ..SimOptions::default() };
            let e = SimSession::default().with_options(opts).execute_detailed(&p, &[i32_bytes(input.clone())]).unwrap();
            prop_assert_eq!(i32_values(&e.outputs[0]), pipeline_expected(cores, obj, iters, &input));
            for f in &p.fifos {
                prop_assert!(e.max_occupancy[&f.name] <= f.depth);
            }
            let seen: usize = e.consumed.values().map(|v| v.len()).sum();
            prop_assert_eq!(seen, n);
            prop_assert!(e.consumed.values().flatten().all(|s| s.dtype() == DType::Int32));
        }
    }
}
