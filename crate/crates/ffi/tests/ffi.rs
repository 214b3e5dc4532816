use std::ffi::c_char;
use std::path::Path;
use std::ptr;

use ggn_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { ggn_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn simulate_solve_and_free() {
    unsafe {
        let mut data: *mut GgnData = ptr::null_mut();
        assert_eq!(ggn_simulate(100.0, 0.01, b'a' as c_char, 0, 7, 1, &mut data), GgnStatus::Ok);
        assert!(!data.is_null());
        let delta = ggn_data_delta(data);
        assert!(delta > 0.0);

        let mut report: *mut GgnReport = ptr::null_mut();
        assert_eq!(ggn_run_ggn(data, &mut report), GgnStatus::Ok);
        let mut s = std::mem::zeroed::<GgnSummary>();
        assert_eq!(ggn_report_summary(report, &mut s), GgnStatus::Ok);
        assert_eq!(s.termination, GgnTermination::Discrepancy);
        assert!(s.final_discrepancy <= s.threshold);
        assert!(s.iterations > 0 && s.nodes > 0 && s.relative_error.is_finite());
        ggn_report_free(report);

        let mut nt: *mut GgnReport = ptr::null_mut();
        assert_eq!(ggn_run_nt(data, &mut nt), GgnStatus::Ok);
        ggn_report_free(nt);
        ggn_data_free(data);
    }
}

#[test]
fn bad_arguments_give_codes_and_messages() {
    unsafe {
        let mut data: *mut GgnData = ptr::null_mut();
        assert_eq!(ggn_simulate(1.0, 0.01, b'z' as c_char, 0, 6, 1, &mut data), GgnStatus::InvalidArgument);
        assert!(data.is_null());
        assert!(last_error().contains("case"));
        assert_eq!(ggn_simulate(-1.0, 0.01, b'a' as c_char, 1, 6, 1, &mut data), GgnStatus::InvalidArgument);
        assert_eq!(ggn_simulate(1.0, 0.01, b'a' as c_char, 0, 30, 1, &mut data), GgnStatus::InvalidArgument);
        assert_eq!(ggn_simulate(1.0, 0.01, b'a' as c_char, 0, 6, 1, ptr::null_mut()), GgnStatus::NullPointer);

        let mut report: *mut GgnReport = ptr::null_mut();
        assert_eq!(ggn_run_ggn(ptr::null(), &mut report), GgnStatus::NullPointer);
        assert_eq!(ggn_report_summary(ptr::null(), ptr::null_mut()), GgnStatus::NullPointer);
        assert!(ggn_data_delta(ptr::null()).is_nan());
        ggn_data_free(ptr::null_mut());
        ggn_report_free(ptr::null_mut());

        // zero noise: the solver refuses, the status says so
        assert_eq!(ggn_simulate(1.0, 0.0, b'b' as c_char, 0, 6, 1, &mut data), GgnStatus::Ok);
        assert_eq!(ggn_run_ggn(data, &mut report), GgnStatus::SolverFailure);
        assert!(report.is_null());
        assert!(!last_error().is_empty());
        ggn_data_free(data);
    }
}

#[test]
fn error_buffer_truncates() {
    unsafe {
        let mut data: *mut GgnData = ptr::null_mut();
        ggn_simulate(1.0, 0.01, b'q' as c_char, 0, 6, 1, &mut data);
        let mut small = [1 as c_char; 4];
        let full = ggn_last_error(small.as_mut_ptr(), small.len());
        assert!(full > 3);
        assert_eq!(small[3], 0);
        assert_eq!(ggn_last_error(ptr::null_mut(), 0), full);
    }
}

#[test]
fn header_declares_the_interface_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ggn.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ggn_simulate", "ggn_run_ggn", "ggn_run_nt", "ggn_report_summary", "ggn_last_error", "GGN_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ggn.h\"\nint main(void) { GgnData *d = 0; GgnStatus s = ggn_simulate(1.0, 0.01, 'a', 0, 6, 1, &d); ggn_data_free(d); return s == GGN_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    match std::process::Command::new("cc").arg("-fsyntax-only").arg("-I").arg(include).arg(&src).output() {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("no C compiler available: {e}"),
    }
}
