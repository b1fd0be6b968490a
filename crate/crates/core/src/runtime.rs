//! Host runtime: device discovery, a buffer registry with dense integer ids,
//! host/device syncs with optional float32 to bfloat16 narrowing, and run
//! dispatch onto the simulator.
//!
//! Every operation returns a `Result`; nothing panics on bad host input.
//! Transfer cost accrues on syncs. A sync is charged as striped over the
//! interface columns of the loaded program.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::device::{self, DeviceProgram, Direction, TileKind};
use crate::host::{HostProgram, SyncDir, XrtwOp};
use crate::ir::DType;
use crate::scalar::Scalar;
use crate::sim::{CostParams, CostReport, SimError, SimOptions, SimSession};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("device {index} does not exist ({count} present)")]
    BadDevice { index: usize, count: usize },
    #[error("cannot load {program}: {message}")]
    LoadFailure { program: String, message: String },
    #[error("cannot allocate buffer: {0}")]
    AllocFailure(String),
    #[error("unknown buffer {0}")]
    UnknownBuffer(usize),
    #[error("buffer {0} is not mapped")]
    UnmappedBuffer(usize),
    #[error("input buffer {0} was not synced to the device")]
    NotSynced(usize),
    #[error("no program is loaded")]
    NoProgram,
    #[error("program takes {expected} buffers, run got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("buffer {id} holds {got} bytes but binding {binding} needs {expected}")]
    SizeMismatch { id: usize, binding: usize, expected: usize, got: usize },
    #[error("no run is pending")]
    NoPendingRun,
    #[error("a run is already pending")]
    RunPending,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
struct Buffer {
    device: Vec<u8>,
    host: Vec<u8>,
    mapped: bool,
    synced: bool,
    convert: Option<(DType, DType)>,
}

#[derive(Debug, Clone)]
struct Loaded {
    program: DeviceProgram,
    columns: usize,
}

#[derive(Debug)]
struct Pending {
    ids: Vec<usize>,
    result: Result<(Vec<Vec<u8>>, CostReport), SimError>,
}

/// Runtime configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub npu_count: usize,
    pub cost: CostParams,
    pub sim: SimOptions,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig { npu_count: 1, cost: CostParams::default(), sim: SimOptions::default() }
    }
}

pub struct RuntimeSession {
    npu_count: usize,
    sim: SimSession,
    buffers: Vec<Buffer>,
    program: Option<Loaded>,
    pending: Option<Pending>,
    cost: CostReport,
    trace: Vec<String>,
}

fn convert_bytes(bytes: &[u8], from: DType, to: DType) -> Vec<u8> {
    let v: Vec<Scalar> = Scalar::read_all(from, bytes).iter().map(|s| s.cast(to)).collect();
    Scalar::encode_all(&v)
}

impl RuntimeSession {
    pub fn new(config: RuntimeConfig) -> Self {
        RuntimeSession {
            npu_count: config.npu_count,
            sim: SimSession::new(config.cost).with_options(config.sim),
            buffers: Vec::new(),
            program: None,
            pending: None,
            cost: CostReport::default(),
            trace: Vec::new(),
        }
    }

    pub fn params(&self) -> &CostParams {
        &self.sim.params
    }

    pub fn num_devices(&self) -> usize {
        self.npu_count
    }

    /// Load a program file, parse and validate it.
    pub fn init(&mut self, device_index: usize, program_ref: &Path) -> Result<(), RuntimeError> {
        self.check_device(device_index)?;
        let name = program_ref.display().to_string();
        let text = std::fs::read_to_string(program_ref)
            .map_err(|e| RuntimeError::LoadFailure { program: name.clone(), message: e.to_string() })?;
        let p = device::parse_program(&text).map_err(|e| RuntimeError::LoadFailure { program: name.clone(), message: e.to_string() })?;
        self.init_program(device_index, &name, p)
    }

    /// Load an in-memory program; `name` only labels diagnostics.
    pub fn init_program(&mut self, device_index: usize, name: &str, program: DeviceProgram) -> Result<(), RuntimeError> {
        self.check_device(device_index)?;
        if self.pending.is_some() {
            return Err(RuntimeError::RunPending);
        }
        let diags = device::validate_program(&program);
        if !diags.is_empty() {
            let message = diags.into_iter().map(|d| d.message).collect::<Vec<_>>().join("; ");
            return Err(RuntimeError::LoadFailure { program: name.to_string(), message });
        }
        let columns: BTreeSet<usize> = program.tiles.iter().filter(|t| t.kind == TileKind::Interface).map(|t| t.col).collect();
        self.program = Some(Loaded { columns: columns.len().max(1), program });
        Ok(())
    }

    fn check_device(&self, index: usize) -> Result<(), RuntimeError> {
        if index >= self.npu_count {
            return Err(RuntimeError::BadDevice { index, count: self.npu_count });
        }
        Ok(())
    }

    /// Allocate `bytes` of zeroed device memory. With `convert`, the host
    /// view holds `from` values and the device `to` values.
    pub fn allocate_buffer(&mut self, bytes: usize, convert: Option<(DType, DType)>) -> Result<usize, RuntimeError> {
        if bytes == 0 {
            return Err(RuntimeError::AllocFailure("size must be positive".into()));
        }
        let host = match convert {
            None => bytes,
            Some((from, to)) => {
                if !bytes.is_multiple_of(to.byte_width()) {
                    return Err(RuntimeError::AllocFailure(format!("{bytes} bytes is not a whole number of {to} values")));
                }
                bytes / to.byte_width() * from.byte_width()
            }
        };
        self.buffers.push(Buffer { device: vec![0; bytes], host: vec![0; host], mapped: false, synced: false, convert });
        Ok(self.buffers.len() - 1)
    }

    fn buffer(&mut self, id: usize) -> Result<&mut Buffer, RuntimeError> {
        self.buffers.get_mut(id).ok_or(RuntimeError::UnknownBuffer(id))
    }

    /// Map a buffer and return its host view.
    pub fn buffer_map(&mut self, id: usize) -> Result<&mut [u8], RuntimeError> {
        let b = self.buffer(id)?;
        b.mapped = true;
        Ok(&mut b.host)
    }

    /// Host view of a mapped buffer.
    pub fn host_view(&self, id: usize) -> Result<&[u8], RuntimeError> {
        let b = self.buffers.get(id).ok_or(RuntimeError::UnknownBuffer(id))?;
        if !b.mapped {
            return Err(RuntimeError::UnmappedBuffer(id));
        }
        Ok(&b.host)
    }

    /// Device contents, for inspection.
    pub fn device_view(&self, id: usize) -> Result<&[u8], RuntimeError> {
        self.buffers.get(id).map(|b| b.device.as_slice()).ok_or(RuntimeError::UnknownBuffer(id))
    }

    pub fn buffer_sync(&mut self, id: usize, dir: SyncDir) -> Result<(), RuntimeError> {
        let columns = self.program.as_ref().map_or(1, |l| l.columns);
        let params = self.sim.params.clone();
        let b = self.buffer(id)?;
        if !b.mapped {
            return Err(RuntimeError::UnmappedBuffer(id));
        }
        match (dir, b.convert) {
            (SyncDir::ToDevice, None) => b.device.copy_from_slice(&b.host),
            (SyncDir::ToDevice, Some((from, to))) => b.device = convert_bytes(&b.host, from, to),
            (SyncDir::FromDevice, None) => b.host.copy_from_slice(&b.device),
            (SyncDir::FromDevice, Some((from, to))) => b.host = convert_bytes(&b.device, to, from),
        }
        if dir == SyncDir::ToDevice {
            b.synced = true;
        }
        let converted = if b.convert.is_some() { b.host.len() } else { 0 };
        self.cost.xfer += params.sync_cost(b.device.len(), columns, converted);
        Ok(())
    }

    /// Bind buffers positionally to the loaded program and simulate it.
    /// Results become visible after `wait` and a from-device sync.
    pub fn run(&mut self, ids: &[usize]) -> Result<(), RuntimeError> {
        let loaded = self.program.as_ref().ok_or(RuntimeError::NoProgram)?;
        if self.pending.is_some() {
            return Err(RuntimeError::RunPending);
        }
        let bindings = loaded.program.bindings();
        if ids.len() != bindings.len() {
            return Err(RuntimeError::ArityMismatch { expected: bindings.len(), got: ids.len() });
        }
        let mut inputs = Vec::new();
        for (k, (id, (param, dir))) in ids.iter().zip(&bindings).enumerate() {
            let b = self.buffers.get(*id).ok_or(RuntimeError::UnknownBuffer(*id))?;
            if !b.mapped {
                return Err(RuntimeError::UnmappedBuffer(*id));
            }
            if b.device.len() != param.obj.bytes() {
                return Err(RuntimeError::SizeMismatch { id: *id, binding: k, expected: param.obj.bytes(), got: b.device.len() });
            }
            if *dir == Direction::Input {
                if !b.synced {
                    return Err(RuntimeError::NotSynced(*id));
                }
                inputs.push(b.device.clone());
            }
        }
        let program = loaded.program.clone();
        let result = self.sim.execute_detailed(&program, &inputs).map(|mut e| {
            self.trace.append(&mut e.trace);
            (e.outputs, e.cost)
        });
        self.pending = Some(Pending { ids: ids.to_vec(), result });
        Ok(())
    }

    /// Complete the pending run, writing outputs to device memory.
    pub fn wait(&mut self) -> Result<(), RuntimeError> {
        let pending = self.pending.take().ok_or(RuntimeError::NoPendingRun)?;
        let (outputs, cost) = pending.result?;
        let loaded = self.program.as_ref().ok_or(RuntimeError::NoProgram)?;
        let out_ids: Vec<usize> = loaded
            .program
            .bindings()
            .iter()
            .zip(&pending.ids)
            .filter(|((_, d), _)| *d == Direction::Output)
            .map(|(_, id)| *id)
            .collect();
        for (id, bytes) in out_ids.into_iter().zip(outputs) {
            self.buffers[id].device = bytes;
        }
        self.cost.setup += cost.setup;
        self.cost.compute += cost.compute;
        Ok(())
    }

    /// Cost accrued since the previous call, which resets it.
    pub fn finish_invocation(&mut self) -> CostReport {
        std::mem::take(&mut self.cost)
    }

    /// Scheduler trace lines collected since the previous call, when
    /// tracing is enabled.
    pub fn take_trace(&mut self) -> Vec<String> {
        std::mem::take(&mut self.trace)
    }

    /// Drop all buffers, keeping the loaded program and the set of
    /// initialized artifacts.
    pub fn release_buffers(&mut self) {
        self.buffers.clear();
    }
}

/// Where `INIT` finds device programs.
pub trait ProgramLoader {
    fn load(&self, program_ref: &str) -> Result<DeviceProgram, String>;
}

/// Programs stored as files relative to a directory.
pub struct DirLoader(pub PathBuf);

impl ProgramLoader for DirLoader {
    fn load(&self, program_ref: &str) -> Result<DeviceProgram, String> {
        let path = self.0.join(program_ref);
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        device::parse_program(&text).map_err(|e| e.to_string())
    }
}

impl ProgramLoader for HashMap<String, DeviceProgram> {
    fn load(&self, program_ref: &str) -> Result<DeviceProgram, String> {
        self.get(program_ref).cloned().ok_or_else(|| format!("no program named {program_ref}"))
    }
}

/// Interpret a host program. `inputs` fills the to-device buffers in id
/// order; the result holds the host view of every from-device buffer in id
/// order. Buffers are released afterwards.
pub fn run_host_program(
    session: &mut RuntimeSession,
    prog: &HostProgram,
    loader: &dyn ProgramLoader,
    inputs: &[Vec<u8>],
) -> Result<Vec<Vec<u8>>, RuntimeError> {
    let mut input_ids: Vec<usize> = Vec::new();
    let mut output_ids: Vec<usize> = Vec::new();
    for op in &prog.ops {
        if let XrtwOp::BufferSync { id, dir } = op {
            let list = if *dir == SyncDir::ToDevice { &mut input_ids } else { &mut output_ids };
            if !list.contains(id) {
                list.push(*id);
            }
        }
    }
    input_ids.sort_unstable();
    output_ids.sort_unstable();
    if input_ids.len() != inputs.len() {
        return Err(RuntimeError::ArityMismatch { expected: input_ids.len(), got: inputs.len() });
    }
    // program ids name buffers in the order they are allocated
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let real = |ids: &HashMap<usize, usize>, id: usize| ids.get(&id).copied().ok_or(RuntimeError::UnknownBuffer(id));
    let result = (|| {
        for op in &prog.ops {
            match op {
                XrtwOp::NumDevices => {
                    session.num_devices();
                }
                XrtwOp::Init { device, program } => {
                    session.check_device(*device)?;
                    let p = loader
                        .load(program)
                        .map_err(|message| RuntimeError::LoadFailure { program: program.clone(), message })?;
                    session.init_program(*device, program, p)?;
                }
                XrtwOp::AllocateBuffer { id, bytes, convert } => {
                    let real_id = session.allocate_buffer(*bytes, *convert)?;
                    ids.insert(*id, real_id);
                }
                XrtwOp::BufferMap { id } => {
                    let r = real(&ids, *id)?;
                    let view = session.buffer_map(r)?;
                    if let Some(k) = input_ids.iter().position(|i| i == id) {
                        if inputs[k].len() != view.len() {
                            return Err(RuntimeError::SizeMismatch { id: *id, binding: k, expected: view.len(), got: inputs[k].len() });
                        }
                        view.copy_from_slice(&inputs[k]);
                    }
                }
                XrtwOp::BufferSync { id, dir } => session.buffer_sync(real(&ids, *id)?, *dir)?,
                XrtwOp::Run { ids: run_ids } => {
                    let r: Vec<usize> = run_ids.iter().map(|i| real(&ids, *i)).collect::<Result<_, _>>()?;
                    session.run(&r)?;
                }
                XrtwOp::Wait => session.wait()?,
            }
        }
        output_ids.iter().map(|id| Ok(session.host_view(real(&ids, *id)?)?.to_vec())).collect()
    })();
    session.release_buffers();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::SCALAR_ADD;

    fn i32_bytes(v: &[i32]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    fn identity_program(n: usize) -> DeviceProgram {
        let text = format!(
            "aie.device(npu1_1col) {{\n  %s0 = aie.shim_tile(0)\n  %m0 = aie.mem_tile(0)\n  \
             aie.objectfifo @in0(%s0 -> %m0, depth = 1) : memref<{n}xi32>\n  \
             aie.objectfifo @out0(%m0 -> %s0, depth = 1) : memref<{n}xi32>\n  \
             aie.objectfifo.link permute @in0 -> @out0 dims = [({n}, 1)]\n  \
             aie.runtime_sequence(%in : memref<{n}xi32>, %out : memref<{n}xi32>) {{\n    \
             aie.dma_in %in -> @in0 offset = 0 dims = [({n}, 1)]\n    aie.dma_out @out0 -> %out offset = 0 dims = [({n}, 1)]\n  }}\n}}\n"
        );
        device::parse_program(&text).unwrap()
    }

    #[test]
    fn devices_and_init() {
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        assert_eq!(s.num_devices(), 1);
        assert_eq!(s.init_program(1, "p", identity_program(4)), Err(RuntimeError::BadDevice { index: 1, count: 1 }));
        assert!(s.init_program(0, "p", identity_program(4)).is_ok());
        let none = RuntimeSession::new(RuntimeConfig { npu_count: 0, ..RuntimeConfig::default() });
        assert_eq!(none.num_devices(), 0);

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.dprog");
        std::fs::write(&bad, "aie.device(npu1_1col) { %s0 = aie.shim_tile(9) }").unwrap();
        assert!(matches!(s.init(0, &bad), Err(RuntimeError::LoadFailure { .. })));
        assert!(matches!(s.init(0, &dir.path().join("missing")), Err(RuntimeError::LoadFailure { .. })));
        let good = dir.path().join("good.dprog");
        std::fs::write(&good, SCALAR_ADD).unwrap();
        assert!(s.init(0, &good).is_ok());
    }

    #[test]
    fn identity_round_trip() {
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        s.init_program(0, "id", identity_program(4)).unwrap();
        let a = s.allocate_buffer(16, None).unwrap();
        let b = s.allocate_buffer(16, None).unwrap();
        assert_eq!((a, b), (0, 1));
        assert!(matches!(s.allocate_buffer(0, None), Err(RuntimeError::AllocFailure(_))));
        assert_eq!(s.buffer_sync(a, SyncDir::ToDevice), Err(RuntimeError::UnmappedBuffer(a)));
        s.buffer_map(a).unwrap().copy_from_slice(&i32_bytes(&[1, 2, 3, 4]));
        s.buffer_map(b).unwrap();
        assert_eq!(s.run(&[a, b]), Err(RuntimeError::NotSynced(a)));
        s.buffer_sync(a, SyncDir::ToDevice).unwrap();
        assert_eq!(s.run(&[a]), Err(RuntimeError::ArityMismatch { expected: 2, got: 1 }));
        s.run(&[a, b]).unwrap();
        assert_eq!(s.run(&[a, b]), Err(RuntimeError::RunPending));
        s.wait().unwrap();
        // not visible until synced back
        assert_eq!(s.host_view(b).unwrap(), &[0u8; 16]);
        s.buffer_sync(b, SyncDir::FromDevice).unwrap();
        assert_eq!(s.host_view(b).unwrap(), i32_bytes(&[1, 2, 3, 4]).as_slice());
        assert_eq!(s.wait(), Err(RuntimeError::NoPendingRun));
        assert_eq!(s.buffer_sync(99, SyncDir::ToDevice), Err(RuntimeError::UnknownBuffer(99)));
        let c = s.finish_invocation();
        assert_eq!(c.setup, 3000.0);
        assert!(c.xfer > 0.0);
        assert_eq!(c.compute, 0.0);
        assert_eq!(s.finish_invocation(), CostReport::default());
    }

    #[test]
    fn conversion_narrows_and_widens() {
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        let id = s.allocate_buffer(2, Some((DType::Float32, DType::BFloat16))).unwrap();
        let view = s.buffer_map(id).unwrap();
        assert_eq!(view.len(), 4);
        view.copy_from_slice(&0.2f32.to_le_bytes());
        s.buffer_sync(id, SyncDir::ToDevice).unwrap();
        assert_eq!(s.device_view(id).unwrap(), &0x3E4Du16.to_le_bytes());
        s.buffer_sync(id, SyncDir::FromDevice).unwrap();
        assert_eq!(f32::from_le_bytes(s.host_view(id).unwrap().try_into().unwrap()), 0.200_195_31);
        // the conversion is charged on top of the transfer
        let conv = s.finish_invocation().xfer;
        let id = s.allocate_buffer(2, None).unwrap();
        s.buffer_map(id).unwrap();
        s.buffer_sync(id, SyncDir::ToDevice).unwrap();
        s.buffer_sync(id, SyncDir::FromDevice).unwrap();
        assert!(conv > s.finish_invocation().xfer);
    }

    #[test]
    fn run_needs_a_program() {
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        assert_eq!(s.run(&[]), Err(RuntimeError::NoProgram));
    }

    #[test]
    fn host_program_drives_the_session() {
        let mut progs = HashMap::new();
        progs.insert("op0.dprog".to_string(), device::parse_program(SCALAR_ADD).unwrap());
        let text = "NUM_DEVICES\nINIT device=0 program=op0.dprog\nALLOCATE_BUFFER id=0 bytes=128\nALLOCATE_BUFFER id=1 bytes=128\n\
                    BUFFER_MAP id=0\nBUFFER_MAP id=1\nBUFFER_SYNC id=0 dir=to_device\nRUN ids=0,1\nWAIT\nBUFFER_SYNC id=1 dir=from_device\n";
        let prog = HostProgram::parse(text).unwrap();
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        let input = i32_bytes(&(0..32).collect::<Vec<_>>());
        let out = run_host_program(&mut s, &prog, &progs, std::slice::from_ref(&input)).unwrap();
        assert_eq!(out, vec![i32_bytes(&(1..=32).collect::<Vec<_>>())]);
        let first = s.finish_invocation();
        run_host_program(&mut s, &prog, &progs, std::slice::from_ref(&input)).unwrap();
        let second = s.finish_invocation();
        assert_eq!(second.setup, 0.0);
        assert!(second.total() < first.total());

        let mut none = RuntimeSession::new(RuntimeConfig { npu_count: 0, ..RuntimeConfig::default() });
        assert!(matches!(run_host_program(&mut none, &prog, &progs, &[input]), Err(RuntimeError::BadDevice { .. })));
    }
}
