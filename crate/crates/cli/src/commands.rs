//! `compile` and `run`.
//!
//! An artifact directory holds:
//!
//! * `module.lair`: the input module, reprinted
//! * `opN.dprog`: device program of op N (NPU ops only)
//! * `opN.xrtw`: host program of op N (NPU ops only)
//! * `placement.txt`: one line per op with its placement and reason
//! * `plan.json`: the flags `run` needs to rebuild the plan

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use npuflow::data::Gen;
use npuflow::device::print_program;
use npuflow::host::{compile_module, CompiledOp, DeviceInfo, HostProgram, Placement};
use npuflow::ir::{parse_module, print_module, IrModule};
use npuflow::kernels::KernelLibrary;
use npuflow::pipeline::{check, module_env, run_cpu, run_npu, PipelineError, Value};
use npuflow::reference::HostTensor;
use npuflow::runtime::{DirLoader, RuntimeConfig, RuntimeError, RuntimeSession};
use npuflow::sim::{CostParams, CostReport, SimOptions};
use serde::{Deserialize, Serialize};

use crate::datafile;
use crate::report::{OpRecord, RunReport};

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Diagnostics(anyhow::Error),
    #[error("simulator fault: {0}")]
    Simulator(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diagnostics(_) => 1,
            CliError::Simulator(_) => 3,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Diagnostics(e)
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 2;

#[derive(Debug, Clone, Default)]
pub struct CompileOptions {
    pub no_npu: bool,
    pub allow_conversion: bool,
    pub libdir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedOp {
    pub index: usize,
    pub result: String,
    pub kind: String,
    pub dtype: String,
    pub placement: Placement,
    pub decision: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub no_npu: bool,
    pub allow_conversion: bool,
    pub libdir: Option<PathBuf>,
    pub ops: Vec<PlannedOp>,
}

fn device_info(no_npu: bool) -> DeviceInfo {
    if no_npu {
        DeviceInfo::without_npu()
    } else {
        DeviceInfo::default()
    }
}

fn kind_name(op: &CompiledOp) -> String {
    op.kind.map_or_else(|| "?".to_string(), |k| k.name().to_string())
}

fn compile_parsed(m: &IrModule, no_npu: bool, allow_conversion: bool, libdir: Option<&Path>) -> anyhow::Result<(Vec<CompiledOp>, DeviceInfo)> {
    let library = KernelLibrary::resolve(libdir)?;
    let device = device_info(no_npu);
    let ops = compile_module(m, &device, &library, allow_conversion)?;
    Ok((ops, device))
}

fn planned(ops: &[CompiledOp], device: &DeviceInfo) -> Vec<PlannedOp> {
    ops.iter()
        .map(|o| PlannedOp {
            index: o.index,
            result: o.result.clone(),
            kind: kind_name(o),
            dtype: o.dtype.mnemonic().to_string(),
            placement: o.decision.placement(),
            decision: o.decision.describe(device),
        })
        .collect()
}

pub fn placement_summary(plan: &[PlannedOp]) -> String {
    let mut s = String::new();
    for p in plan {
        let _ = writeln!(s, "op{} %{} {} {}: {}", p.index, p.result, p.kind, p.dtype, p.decision);
    }
    s
}

/// Compile `input` into `out_dir`, returning the plan.
pub fn cmd_compile(input: &Path, out_dir: &Path, opts: &CompileOptions) -> anyhow::Result<Plan> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let m = parse_module(&text).map_err(|e| anyhow!("{}: {e}", input.display()))?;
    let (ops, device) = compile_parsed(&m, opts.no_npu, opts.allow_conversion, opts.libdir.as_deref())?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let write = |name: &str, body: &str| {
        let p = out_dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    };
    write("module.lair", &print_module(&m))?;
    for op in &ops {
        if let (Some(d), Some(h)) = (&op.device, &op.host) {
            write(&op.program_ref(), &print_program(d))?;
            write(&format!("op{}.xrtw", op.index), &h.to_text())?;
        }
    }
    let plan = Plan {
        no_npu: opts.no_npu,
        allow_conversion: opts.allow_conversion,
        libdir: opts.libdir.clone(),
        ops: planned(&ops, &device),
    };
    write("placement.txt", &placement_summary(&plan.ops))?;
    write("plan.json", &serde_json::to_string_pretty(&plan)?)?;
    Ok(plan)
}

/// Where `run` gets its inputs.
#[derive(Debug, Clone)]
pub enum InputSource {
    Files(Vec<PathBuf>),
    Random(u64),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub inputs: InputSource,
    pub repeat: usize,
    pub check: bool,
    pub cost_config: Option<PathBuf>,
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { inputs: InputSource::Random(0), repeat: 1, check: false, cost_config: None, trace: false }
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    /// Final value of every op result, by name.
    pub values: HashMap<String, Value>,
    pub trace: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.all_passed() {
            EXIT_OK
        } else {
            EXIT_MISMATCH
        }
    }
}

/// Artifacts read back from a directory.
pub struct Artifacts {
    pub dir: PathBuf,
    pub module: IrModule,
    pub plan: Plan,
    pub ops: Vec<CompiledOp>,
}

pub fn load_artifacts(dir: &Path) -> anyhow::Result<Artifacts> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    };
    let module = parse_module(&read("module.lair")?).map_err(|e| anyhow!("module.lair: {e}"))?;
    let plan: Plan = serde_json::from_str(&read("plan.json")?).context("plan.json")?;
    let (mut ops, device) = compile_parsed(&module, plan.no_npu, plan.allow_conversion, plan.libdir.as_deref())?;
    if planned(&ops, &device) != plan.ops {
        bail!("plan.json does not match module.lair; recompile the artifacts");
    }
    for op in &mut ops {
        if op.host.is_some() {
            let name = format!("op{}.xrtw", op.index);
            let h = HostProgram::parse(&read(&name)?).map_err(|e| anyhow!("{name}: {e}"))?;
            let problems = h.check();
            if !problems.is_empty() {
                bail!("{name}: {}", problems.join("; "));
            }
            op.host = Some(h);
            // the device program is loaded from its file at init time
            op.device = None;
        }
    }
    Ok(Artifacts { dir: dir.to_path_buf(), module, plan, ops })
}

fn module_inputs(a: &Artifacts, source: &InputSource) -> anyhow::Result<HashMap<String, HostTensor>> {
    let args: Vec<_> = a.module.args().collect();
    let mut out = HashMap::new();
    match source {
        InputSource::Files(files) => {
            if files.len() != args.len() {
                bail!("module takes {} inputs, got {} --input files", args.len(), files.len());
            }
            for ((name, _), f) in args.iter().zip(files) {
                out.insert(name.to_string(), datafile::read(f)?);
            }
        }
        InputSource::Random(seed) => {
            for (i, (name, ty)) in args.iter().enumerate() {
                let user = a.ops.iter().find(|o| o.operands.iter().any(|n| n == name));
                let kind = user.and_then(|o| o.kind);
                let converted = user.is_some_and(|o| o.decision.conversion().is_some());
                let v = Gen::for_arg(*seed, i).values(kind, ty.dtype(), ty.element_count(), converted);
                out.insert(name.to_string(), HostTensor::from_scalars((*ty).clone(), &v)?);
            }
        }
    }
    Ok(out)
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Runtime(RuntimeError::Sim(s)) => CliError::Simulator(s.to_string()),
        other => CliError::Diagnostics(other.into()),
    }
}

/// Execute an artifact directory `repeat` times in one session.
pub fn cmd_run(dir: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let a = load_artifacts(dir)?;
    run_artifacts(&a, opts)
}

pub fn run_artifacts(a: &Artifacts, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    if opts.repeat == 0 {
        return Err(anyhow!("--repeat must be at least 1").into());
    }
    let cost = match &opts.cost_config {
        Some(p) => CostParams::load(p).map_err(anyhow::Error::from)?,
        None => CostParams::default(),
    };
    let args = module_inputs(a, &opts.inputs)?;
    let config = RuntimeConfig {
        npu_count: if a.plan.no_npu { 0 } else { 1 },
        cost,
        sim: SimOptions { trace: opts.trace, ..SimOptions::default() },
    };
    let mut session = RuntimeSession::new(config);
    let loader = DirLoader(a.dir.clone());
    let mut records: Vec<OpRecord> = a
        .ops
        .iter()
        .zip(&a.plan.ops)
        .map(|(_, p)| OpRecord {
            op: p.index,
            result: p.result.clone(),
            kind: p.kind.clone(),
            dtype: p.dtype.clone(),
            placement: p.placement,
            decision: p.decision.clone(),
            verdict: None,
            passed: None,
            runs: Vec::new(),
        })
        .collect();
    let mut values = HashMap::new();
    let mut trace = Vec::new();
    for repeat in 0..opts.repeat {
        let mut env = module_env(&a.module, &args).map_err(pipeline_error)?;
        for (op, rec) in a.ops.iter().zip(&mut records) {
            let (value, cost) = if op.host.is_some() {
                let r = run_npu(&mut session, op, &loader, &env);
                trace.append(&mut session.take_trace());
                r.map_err(pipeline_error)?
            } else {
                (run_cpu(op, &env).map_err(pipeline_error)?, CostReport::default())
            };
            if opts.check && repeat == 0 {
                let v = check(op, &env, &value).map_err(pipeline_error)?;
                rec.passed = Some(v.passed());
                rec.verdict = Some(v.to_string());
            }
            rec.runs.push(cost);
            env.insert(op.result.clone(), value);
        }
        if repeat + 1 == opts.repeat {
            for op in &a.ops {
                if let Some(v) = env.remove(&op.result) {
                    values.insert(op.result.clone(), v);
                }
            }
        }
    }
    Ok(RunOutcome { report: RunReport { ops: records }, values, trace })
}
