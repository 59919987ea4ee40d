//! End-to-end exercise of the C surface: corpus generation, training,
//! evaluation, the bank handle, the gain helper, and error reporting.

use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::ptr;

use bimind_ffi::{
    bimind_bank_dim, bimind_bank_free, bimind_bank_id, bimind_bank_label, bimind_bank_len,
    bimind_bank_open, bimind_bank_seed, bimind_bank_topk, bimind_eval, bimind_last_error,
    bimind_memory_build, bimind_synth_gen, bimind_train, bimind_version, bimind_vox, BimindStatus,
};

const RUN_CONF: &str = "\
d = 12
heads = 2
layers = 1
d_s = 24
k_neighbors = 3
dropout = 0.1
l_max = 24
learning_rate = 0.005
batch_size = 8
max_epochs = 2
patience = 2
fusion_mode = entropy_gate
lambda_agree = 0.1
seed = 91
";

fn cpath(path: &Path) -> CString {
    CString::new(path.to_str().expect("utf-8 path")).expect("no interior NUL")
}

fn last_error() -> String {
    let needed = unsafe { bimind_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; needed + 1];
    let full = unsafe { bimind_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    assert_eq!(full, needed);
    String::from_utf8(buf[..needed].to_vec()).expect("error message is UTF-8")
}

#[test]
fn full_loop_through_the_c_surface() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec_path = dir.path().join("spec.conf");
    fs::write(&spec_path, "kind = content\nn = 32\nseed = 9\nwindow = 24\n").expect("write spec");
    let data_path = dir.path().join("corpus.jsonl");

    let status = unsafe {
        bimind_synth_gen(cpath(&spec_path).as_ptr(), cpath(&data_path).as_ptr())
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    let corpus = fs::read_to_string(&data_path).expect("read corpus");
    assert_eq!(corpus.lines().count(), 32);

    let config_path = dir.path().join("run.conf");
    fs::write(&config_path, RUN_CONF).expect("write config");
    let ckpt_path = dir.path().join("model.ckpt");
    let status = unsafe {
        bimind_train(
            cpath(&config_path).as_ptr(),
            cpath(&data_path).as_ptr(),
            cpath(&ckpt_path).as_ptr(),
        )
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    let bank_path = dir.path().join("model.ckpt.bank");
    assert!(ckpt_path.exists() && bank_path.exists());

    // Evaluate twice: once with the default sibling bank, once naming it.
    let report_dir = dir.path().join("reports");
    let status = unsafe {
        bimind_eval(
            cpath(&ckpt_path).as_ptr(),
            cpath(&data_path).as_ptr(),
            cpath(&report_dir).as_ptr(),
            ptr::null(),
        )
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    let explicit_dir = dir.path().join("reports-explicit");
    let status = unsafe {
        bimind_eval(
            cpath(&ckpt_path).as_ptr(),
            cpath(&data_path).as_ptr(),
            cpath(&explicit_dir).as_ptr(),
            cpath(&bank_path).as_ptr(),
        )
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    for name in ["report.json", "report.txt", "traces.jsonl"] {
        let default_bytes = fs::read(report_dir.join(name)).expect("default report");
        let explicit_bytes = fs::read(explicit_dir.join(name)).expect("explicit report");
        assert!(!default_bytes.is_empty());
        assert_eq!(default_bytes, explicit_bytes, "{name} differs across bank styles");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap())
            .expect("report.json parses");
    assert!(report["fused"]["accuracy"].is_number());

    // The gain helper agrees with a trace line.
    let traces = fs::read_to_string(report_dir.join("traces.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(traces.lines().next().unwrap()).unwrap();
    let pull = |key: &str| -> Vec<f64> {
        first[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect()
    };
    let (z0, ze) = (pull("z0"), pull("ze"));
    let label = first["label"].as_u64().unwrap() as usize;
    let mut gain = f64::NAN;
    let status = unsafe { bimind_vox(z0.as_ptr(), ze.as_ptr(), z0.len(), label, &mut gain) };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    assert_eq!(gain, ze[label] - z0[label]);

    // Bank handle over the training bank.
    let bank = unsafe { bimind_bank_open(cpath(&bank_path).as_ptr()) };
    assert!(!bank.is_null(), "{}", last_error());
    let n = unsafe { bimind_bank_len(bank) };
    let dim = unsafe { bimind_bank_dim(bank) };
    assert!(n > 0);
    assert_eq!(dim, 24);
    assert_eq!(unsafe { bimind_bank_seed(bank) }, 91);

    let query: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut indices = vec![0usize; n + 5];
    let mut sims = vec![0f64; n + 5];
    let mut written = 0usize;
    let mut clamped = true;
    let status = unsafe {
        bimind_bank_topk(
            bank,
            query.as_ptr(),
            dim,
            3,
            ptr::null(),
            indices.as_mut_ptr(),
            sims.as_mut_ptr(),
            &mut written,
            &mut clamped,
        )
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    assert_eq!(written, 3);
    assert!(!clamped);
    assert!(sims[0] >= sims[1] && sims[1] >= sims[2]);
    assert!(indices[..3].iter().all(|&i| i < n));

    // Row metadata for the best match.
    let best = indices[0];
    let id_len = unsafe { bimind_bank_id(bank, best, ptr::null_mut(), 0) };
    assert!(id_len > 0);
    let mut id_buf = vec![0u8; id_len + 1];
    unsafe { bimind_bank_id(bank, best, id_buf.as_mut_ptr().cast(), id_buf.len()) };
    let best_id = String::from_utf8(id_buf[..id_len].to_vec()).expect("id is UTF-8");
    assert!(best_id.starts_with("synth-c-"));
    let label = unsafe { bimind_bank_label(bank, best) };
    assert!(label == 0 || label == 1);

    // Excluding the best match removes exactly that row from the ranking.
    let exclude = CString::new(best_id).unwrap();
    let status = unsafe {
        bimind_bank_topk(
            bank,
            query.as_ptr(),
            dim,
            3,
            exclude.as_ptr(),
            indices.as_mut_ptr(),
            sims.as_mut_ptr(),
            &mut written,
            &mut clamped,
        )
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    assert_eq!(written, 3);
    assert!(indices[..3].iter().all(|&i| i != best));

    // Asking for more rows than exist clamps and says so.
    let status = unsafe {
        bimind_bank_topk(
            bank,
            query.as_ptr(),
            dim,
            n + 5,
            ptr::null(),
            indices.as_mut_ptr(),
            sims.as_mut_ptr(),
            &mut written,
            &mut clamped,
        )
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    assert_eq!(written, n);
    assert!(clamped);

    unsafe { bimind_bank_free(bank) };

    // A standalone bank built over the same corpus opens and matches its
    // requested fingerprint.
    let standalone = dir.path().join("standalone.bank");
    let status = unsafe {
        bimind_memory_build(cpath(&data_path).as_ptr(), cpath(&standalone).as_ptr(), 48, 7)
    };
    assert_eq!(status, BimindStatus::Ok, "{}", last_error());
    let bank = unsafe { bimind_bank_open(cpath(&standalone).as_ptr()) };
    assert!(!bank.is_null(), "{}", last_error());
    assert_eq!(unsafe { bimind_bank_len(bank) }, 32);
    assert_eq!(unsafe { bimind_bank_dim(bank) }, 48);
    assert_eq!(unsafe { bimind_bank_seed(bank) }, 7);
    unsafe { bimind_bank_free(bank) };
}

#[test]
fn failures_return_codes_and_messages() {
    assert_eq!(
        unsafe { bimind_synth_gen(ptr::null(), ptr::null()) },
        BimindStatus::NullArgument
    );
    assert!(last_error().contains("spec_path"));

    let missing = CString::new("/nonexistent/spec.conf").unwrap();
    let out = CString::new("/nonexistent/out.jsonl").unwrap();
    assert_eq!(
        unsafe { bimind_synth_gen(missing.as_ptr(), out.as_ptr()) },
        BimindStatus::Io
    );
    assert!(!last_error().is_empty());

    let not_utf8 = [0xFFu8, 0x00];
    assert_eq!(
        unsafe { bimind_synth_gen(not_utf8.as_ptr().cast(), out.as_ptr()) },
        BimindStatus::InvalidUtf8
    );
    assert!(last_error().contains("UTF-8"));

    let z0 = [0.0, 1.0];
    let ze = [2.5, 1.0];
    let mut gain = f64::NAN;
    assert_eq!(
        unsafe { bimind_vox(z0.as_ptr(), ze.as_ptr(), 2, 0, &mut gain) },
        BimindStatus::Ok
    );
    assert_eq!(gain, 2.5);
    assert_eq!(
        unsafe { bimind_vox(z0.as_ptr(), ze.as_ptr(), 2, 9, &mut gain) },
        BimindStatus::InvalidInput
    );
    assert_eq!(
        unsafe { bimind_vox(ptr::null(), ze.as_ptr(), 2, 0, &mut gain) },
        BimindStatus::NullArgument
    );

    assert!(unsafe { bimind_bank_open(missing.as_ptr()) }.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_handles_degrade_gracefully() {
    assert_eq!(unsafe { bimind_bank_len(ptr::null()) }, 0);
    assert_eq!(unsafe { bimind_bank_dim(ptr::null()) }, 0);
    assert_eq!(unsafe { bimind_bank_seed(ptr::null()) }, 0);
    assert_eq!(unsafe { bimind_bank_label(ptr::null(), 0) }, -1);
    assert_eq!(
        unsafe { bimind_bank_id(ptr::null(), 0, ptr::null_mut(), 0) },
        0
    );
    unsafe { bimind_bank_free(ptr::null_mut()) };

    let version = unsafe { CStr::from_ptr(bimind_version()) };
    assert!(!version.to_str().unwrap().is_empty());
}

#[test]
fn generated_header_covers_the_surface() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bimind.h");
    let header = fs::read_to_string(header_path).expect("generated header exists");
    for symbol in [
        "BimindStatus",
        "BimindBank",
        "bimind_version",
        "bimind_last_error",
        "bimind_synth_gen",
        "bimind_memory_build",
        "bimind_train",
        "bimind_eval",
        "bimind_vox",
        "bimind_bank_open",
        "bimind_bank_len",
        "bimind_bank_dim",
        "bimind_bank_seed",
        "bimind_bank_id",
        "bimind_bank_label",
        "bimind_bank_topk",
        "bimind_bank_free",
        "BIMIND_STATUS_DIVERGED",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}
