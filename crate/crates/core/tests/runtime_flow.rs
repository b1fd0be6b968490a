use npuflow::device::print_program;
use npuflow::host::{compile_module, DeviceInfo, SyncDir};
use npuflow::ir::parse_module;
use npuflow::kernels::KernelLibrary;
use npuflow::runtime::{run_host_program, DirLoader, RuntimeConfig, RuntimeSession};
use npuflow::scalar::Scalar;
use proptest::prelude::*;

const TRANSPOSE: &str = "module {
  %x = arg : tensor<64x128xi16>
  %e = tensor.empty : tensor<128x64xi16>
  %t = linalg.transpose ins(%x : tensor<64x128xi16>) outs(%e : tensor<128x64xi16>) permutation = [1, 0]
}
";

#[test]
fn programs_load_from_files() {
    let m = parse_module(TRANSPOSE).unwrap();
    let ops = compile_module(&m, &DeviceInfo::default(), &KernelLibrary::builtin(), false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(ops[0].program_ref()), print_program(ops[0].device.as_ref().unwrap())).unwrap();
    let v: Vec<Scalar> = (0..64 * 128).map(|i| Scalar::I16(i as i16)).collect();
    let mut s = RuntimeSession::new(RuntimeConfig::default());
    let out = run_host_program(&mut s, ops[0].host.as_ref().unwrap(), &DirLoader(dir.path().to_path_buf()), &[Scalar::encode_all(&v)]).unwrap();
    let got = Scalar::read_all(npuflow::ir::DType::Int16, &out[0]);
    for r in 0..64 {
        for c in 0..128 {
            assert_eq!(got[c * 64 + r], v[r * 128 + c]);
        }
    }
    let cost = s.finish_invocation();
    assert!(cost.setup > 0.0 && cost.xfer > 0.0);
    assert_eq!(cost.compute, 0.0);
}

#[derive(Debug, Clone)]
enum Call {
    Alloc(usize),
    Map(usize),
    Sync(usize, bool),
    Run(Vec<usize>),
    Wait,
    Init(usize),
    Release,
}

fn arb_call() -> impl Strategy<Value = Call> {
    prop_oneof![
        (0usize..300).prop_map(Call::Alloc),
        (0usize..6).prop_map(Call::Map),
        (0usize..6, any::<bool>()).prop_map(|(i, d)| Call::Sync(i, d)),
        prop::collection::vec(0usize..6, 0..4).prop_map(Call::Run),
        Just(Call::Wait),
        (0usize..3).prop_map(Call::Init),
        Just(Call::Release),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // every call reports failure as a value; none panics
    #[test]
    fn arbitrary_call_sequences_do_not_panic(calls in prop::collection::vec(arb_call(), 0..24)) {
        let m = parse_module(TRANSPOSE).unwrap();
        let ops = compile_module(&m, &DeviceInfo::default(), &KernelLibrary::builtin(), false).unwrap();
        let program = ops[0].device.clone().unwrap();
        let mut s = RuntimeSession::new(RuntimeConfig::default());
        for c in calls {
            let _ = match c {
                Call::Alloc(kib) => s.allocate_buffer(kib * 64, None).map(|_| ()),
                Call::Map(id) => s.buffer_map(id).map(|_| ()),
                Call::Sync(id, to) => s.buffer_sync(id, if to { SyncDir::ToDevice } else { SyncDir::FromDevice }),
                Call::Run(ids) => s.run(&ids),
                Call::Wait => s.wait(),
                Call::Init(d) => s.init_program(d, "t", program.clone()),
                Call::Release => {
                    s.release_buffers();
                    Ok(())
                }
            };
        }
    }
}
