use std::path::Path;
use std::process::{Command, Output};

use npuflow_cli::RunReport;

fn npuflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npuflow")).args(args).env_remove("NPUFLOW_LIBDIR").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sum_module(n: usize) -> String {
    format!(
        "module @sum {{\n  %data = arg : tensor<{n}xi32>\n  %31 = arith.constant 0 : i32\n  \
         %sum = linalg.reduce ins(%data : tensor<{n}xi32>) outs(%31 : i32) dimensions = [0] {{\n  \
         ^bb0(%32 : i32, %33 : i32):\n    %34 = arith.addi %32, %33 : i32\n    linalg.yield %34 : i32\n  }}\n}}\n"
    )
}

const MATMUL: &str = "module {
  %a = arg : tensor<256x256xi16>
  %b = arg : tensor<256x512xi16>
  %c0 = tensor.empty : tensor<256x512xi32>
  %c = linalg.matmul ins(%a, %b : tensor<256x256xi16>, tensor<256x512xi16>) outs(%c0 : tensor<256x512xi32>)
}
";

fn compile(dir: &Path, name: &str, text: &str, extra: &[&str]) -> (String, Output) {
    let src = dir.join(format!("{name}.lair"));
    std::fs::write(&src, text).unwrap();
    let out = dir.join(name);
    let mut args = vec!["compile", src.to_str().unwrap(), "-o", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (out.to_str().unwrap().to_string(), npuflow(&args))
}

#[test]
fn indivisible_sum_falls_back() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, o) = compile(tmp.path(), "s", &sum_module(100000), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let placement = std::fs::read_to_string(Path::new(&dir).join("placement.txt")).unwrap();
    assert_eq!(placement, "op0 %sum sum i32: CPU: element count not divisible by batching factor\n");
    assert!(!Path::new(&dir).join("op0.dprog").exists());
    // the CPU path still runs and checks
    let r = npuflow(&["run", &dir, "--random", "5", "--check"]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    assert!(stdout(&r).contains("verdict: exact match"));
}

#[test]
fn sixteen_cores_and_repeats() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, o) = compile(tmp.path(), "s", &sum_module(262144), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("NPU"));
    let dprog = std::fs::read_to_string(Path::new(&dir).join("op0.dprog")).unwrap();
    assert_eq!(dprog.matches("aie.core(").count(), 16);
    let csv = tmp.path().join("r.csv");
    let r = npuflow(&["run", &dir, "--random", "1", "--repeat", "2", "--csv", csv.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let report = RunReport::read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    let op = &report.ops[0];
    assert_eq!(op.runs.len(), 2);
    assert!(op.subsequent().unwrap().total() < op.first().unwrap().total());
    assert!(stdout(&r).contains("mean 2.."));
}

#[test]
fn no_npu_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, o) = compile(tmp.path(), "s", &sum_module(262144), &["--no-npu"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "op0 %sum sum i32: CPU: no NPU present\n");
}

#[test]
fn matmul_check_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, o) = compile(tmp.path(), "m", MATMUL, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = npuflow(&["run", &dir, "--random", "3", "--check"]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    assert!(stdout(&r).contains("verdict: exact match"), "{}", stdout(&r));
}

#[test]
fn deadlocking_program_reports_blocked_core() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, _) = compile(tmp.path(), "s", &sum_module(262144), &[]);
    let path = Path::new(&dir).join("op0.dprog");
    // the first core waits for a second batch that never comes
    let text = std::fs::read_to_string(&path).unwrap().replacen("scf.for %i = 0 to 1 step 1", "scf.for %i = 0 to 2 step 1", 1);
    std::fs::write(&path, text).unwrap();
    let r = npuflow(&["run", &dir, "--repeat", "1", "--trace"]);
    assert_eq!(r.status.code(), Some(3));
    let err = stderr(&r);
    assert!(err.contains("deadlock"), "{err}");
    assert!(err.contains("core %t0_0"), "{err}");
    assert!(err.contains("blocked on acquire @in0_0(Consume, 1)"), "{err}");
}

#[test]
fn wrong_result_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, _) = compile(tmp.path(), "s", &sum_module(262144), &[]);
    let path = Path::new(&dir).join("op0.dprog");
    let text = std::fs::read_to_string(&path).unwrap().replacen("%acc = arith.constant 0 : i32", "%acc = arith.constant 1 : i32", 1);
    std::fs::write(&path, text).unwrap();
    let r = npuflow(&["run", &dir, "--check"]);
    assert_eq!(r.status.code(), Some(2), "{}", stderr(&r));
    assert!(stdout(&r).contains("verdict: mismatch"));
    // without --check nothing is compared
    assert_eq!(npuflow(&["run", &dir]).status.code(), Some(0));
}

#[test]
fn diagnostics_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, o) = compile(tmp.path(), "bad", "module {\n  %s = linalg.reduce ins(%nope : tensor<4xi32>)\n}\n", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"));
    let r = npuflow(&["run", tmp.path().join("missing").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn input_files_and_cost_config() {
    use npuflow::ir::{DType, TensorType};
    use npuflow::reference::HostTensor;
    use npuflow::scalar::Scalar;

    let tmp = tempfile::tempdir().unwrap();
    let (dir, _) = compile(tmp.path(), "s", &sum_module(262144), &[]);
    let v: Vec<Scalar> = (0..262144).map(Scalar::I32).collect();
    let input = tmp.path().join("x.bin");
    npuflow_cli::datafile::write(&input, &HostTensor::from_scalars(TensorType::vector(262144, DType::Int32), &v).unwrap()).unwrap();
    let cfg = tmp.path().join("cost.toml");
    std::fs::write(&cfg, "setup_constant = 10.0\n").unwrap();
    let csv = tmp.path().join("r.csv");
    let r = npuflow(&["run", &dir, "--input", input.to_str().unwrap(), "--cost-config", cfg.to_str().unwrap(), "--check", "--csv", csv.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    // 0 + 1 + ... + 262143 = 2^35 - 2^17, which wraps to -131072
    let want = ((262143u64 * 262144 / 2) % (1 << 32)) as u32 as i32;
    assert!(stdout(&r).contains(&format!("%sum = {want}")), "{}", stdout(&r));
    let report = RunReport::read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(report.ops[0].runs[0].setup, 10.0);

    std::fs::write(&cfg, "sync_latency = -1.0\n").unwrap();
    let r = npuflow(&["run", &dir, "--cost-config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn libdir_override() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = tmp.path().join("lib");
    std::fs::create_dir_all(lib.join("reduce")).unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/kernels/reduce");
    for f in ["reduce_tiles.manifest", "reduce_tiles.tmpl"] {
        std::fs::copy(src.join(f), lib.join("reduce").join(f)).unwrap();
    }
    let (_, o) = compile(tmp.path(), "m", MATMUL, &["--libdir", lib.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "op0 %c matmul i16: CPU: no device template for matmul on int16\n");
    let (_, o) = compile(tmp.path(), "s", &sum_module(262144), &["--libdir", lib.to_str().unwrap()]);
    assert!(stdout(&o).contains("NPU"));
    // the environment variable is used when no flag is given
    let src = tmp.path().join("m.lair");
    let out = tmp.path().join("m_env");
    let o = Command::new(env!("CARGO_BIN_EXE_npuflow"))
        .args(["compile", src.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .env("NPUFLOW_LIBDIR", &lib)
        .output()
        .unwrap();
    assert!(stdout(&o).contains("CPU: no device template"), "{}", stdout(&o));
}
