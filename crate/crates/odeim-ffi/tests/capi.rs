use std::ffi::{CStr, CString};
use std::ptr;

use odeim_ffi::*;

fn algebra(label: &str) -> *mut OdeimAlgebra {
    let s = CString::new(label).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { odeim_algebra_new(s.as_ptr(), &mut out) }, OdeimStatus::Ok);
    assert!(!out.is_null());
    out
}

fn last_error() -> String {
    let p = odeim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn algebra_lifecycle() {
    let a = algebra("A5^(2)");
    let (mut rank, mut h) = (0usize, 0i64);
    assert_eq!(unsafe { odeim_algebra_info(a, &mut rank, &mut h) }, OdeimStatus::Ok);
    assert_eq!((rank, h), (3, 5));
    let mut lam = 0.0;
    assert_eq!(unsafe { odeim_algebra_lambda(a, 1, &mut lam) }, OdeimStatus::Ok);
    assert!((lam - 1.0).abs() < 1e-10);
    assert_eq!(unsafe { odeim_algebra_lambda(a, 4, &mut lam) }, OdeimStatus::InvalidArgument);
    unsafe { odeim_algebra_free(a) };
    unsafe { odeim_algebra_free(ptr::null_mut()) };
}

#[test]
fn error_codes() {
    let bad = CString::new("B2").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { odeim_algebra_new(bad.as_ptr(), &mut out) }, OdeimStatus::InvalidLabel);
    assert!(out.is_null());
    assert!(last_error().contains("B2"));
    assert_eq!(unsafe { odeim_algebra_new(ptr::null(), &mut out) }, OdeimStatus::NullPointer);
    let e6 = CString::new("E6").unwrap();
    assert_eq!(unsafe { odeim_algebra_new(e6.as_ptr(), &mut out) }, OdeimStatus::Unsupported);
    let a = algebra("A2");
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { odeim_airy_new(a, &mut h) }, OdeimStatus::Unsupported);
    unsafe { odeim_algebra_free(a) };
}

#[test]
fn q_system_through_the_abi() {
    let a = algebra("A1");
    let re = [0.3];
    let im = [0.0];
    let mut qs = ptr::null_mut();
    let st = unsafe { odeim_qsystem_new(a, 1.0, re.as_ptr(), im.as_ptr(), 1, 0, ptr::null(), 0, &mut qs) };
    assert_eq!(st, OdeimStatus::Ok, "{}", last_error());
    let mut q = [0.0; 2];
    let mut qt = [0.0; 2];
    // the lowest level of the radial oscillator sits at 4n + 2l + 3
    let st = unsafe { odeim_qsystem_q(qs, 1, 3.6, 0.0, q.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, OdeimStatus::Ok, "{}", last_error());
    let mut far = [0.0; 2];
    unsafe { odeim_qsystem_q(qs, 1, 1.0, 0.0, far.as_mut_ptr(), ptr::null_mut()) };
    assert!(q[0].hypot(q[1]) < 1e-6 * far[0].hypot(far[1]), "{:?} {:?}", q, far);
    // no Q~ without a neighbouring node
    let st = unsafe { odeim_qsystem_q(qs, 1, 1.0, 0.0, q.as_mut_ptr(), qt.as_mut_ptr()) };
    assert_eq!(st, OdeimStatus::InvalidArgument);
    let mut ell = [0.0; 2];
    let mut len = 0usize;
    assert_eq!(unsafe { odeim_qsystem_ell(qs, ell.as_mut_ptr(), 1, &mut len) }, OdeimStatus::Ok);
    assert_eq!((len, ell[0]), (1, 0.3));
    assert_eq!(unsafe { odeim_qsystem_ell(qs, ell.as_mut_ptr(), 0, &mut len) }, OdeimStatus::BufferTooSmall);
    assert_eq!(unsafe { odeim_qsystem_q(qs, 2, 1.0, 0.0, q.as_mut_ptr(), qt.as_mut_ptr()) }, OdeimStatus::InvalidArgument);
    unsafe { odeim_qsystem_free(qs) };
    unsafe { odeim_algebra_free(a) };
}

#[test]
fn seeded_q_system_is_reproducible() {
    let a = algebra("B3");
    let mut ells = Vec::new();
    for _ in 0..2 {
        let mut qs = ptr::null_mut();
        let st = unsafe { odeim_qsystem_new(a, 2.0, ptr::null(), ptr::null(), 0, 7, ptr::null(), 0, &mut qs) };
        assert_eq!(st, OdeimStatus::Ok);
        let mut buf = [0.0; 6];
        let mut len = 0;
        unsafe { odeim_qsystem_ell(qs, buf.as_mut_ptr(), 3, &mut len) };
        ells.push(buf);
        unsafe { odeim_qsystem_free(qs) };
    }
    assert_eq!(ells[0], ells[1]);
    let word = [0usize];
    let mut qs = ptr::null_mut();
    let st = unsafe { odeim_qsystem_new(a, 2.0, ptr::null(), ptr::null(), 0, 7, word.as_ptr(), 1, &mut qs) };
    assert_eq!(st, OdeimStatus::InvalidArgument);
    unsafe { odeim_algebra_free(a) };
}

#[test]
fn airy_through_the_abi() {
    let a = algebra("D43");
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { odeim_airy_new(a, &mut h) }, OdeimStatus::Ok);
    let mut buf = [0.0; 16];
    let mut len = 0;
    assert_eq!(unsafe { odeim_airy_psi(h, 2.0, 0.0, 1, buf.as_mut_ptr(), 8, &mut len) }, OdeimStatus::Ok);
    assert_eq!(len, 8);
    assert!(buf.iter().all(|x| x.is_finite()));
    assert_eq!(unsafe { odeim_airy_psi(h, 2.0, 0.0, 1, buf.as_mut_ptr(), 4, &mut len) }, OdeimStatus::BufferTooSmall);
    let mut q = [0.0; 2];
    assert_eq!(unsafe { odeim_airy_q(h, 1, 5.28995, 0.0, q.as_mut_ptr()) }, OdeimStatus::Ok);
    let mut q0 = [0.0; 2];
    unsafe { odeim_airy_q(h, 1, 0.0, 0.0, q0.as_mut_ptr()) };
    assert!(q[0].hypot(q[1]) < 1e-3 * q0[0].hypot(q0[1]), "{:?} {:?}", q, q0);
    assert_eq!(unsafe { odeim_airy_q(h, 0, 1.0, 0.0, q.as_mut_ptr()) }, OdeimStatus::InvalidArgument);
    unsafe { odeim_airy_free(h) };
    unsafe { odeim_algebra_free(a) };
}

#[test]
fn run_subcommand() {
    let args: Vec<CString> = ["info", "G2"].iter().map(|s| CString::new(*s).unwrap()).collect();
    let ptrs: Vec<*const std::ffi::c_char> = args.iter().map(|s| s.as_ptr()).collect();
    let mut report = ptr::null_mut();
    let mut ok = false;
    assert_eq!(unsafe { odeim_run(ptrs.len(), ptrs.as_ptr(), &mut report, &mut ok) }, OdeimStatus::Ok);
    assert!(ok);
    let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap().to_string();
    unsafe { odeim_string_free(report) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["h_dual"], 4);

    let bad: Vec<CString> = ["nope"].iter().map(|s| CString::new(*s).unwrap()).collect();
    let bp: Vec<*const std::ffi::c_char> = bad.iter().map(|s| s.as_ptr()).collect();
    assert_eq!(unsafe { odeim_run(1, bp.as_ptr(), &mut report, &mut ok) }, OdeimStatus::InvalidArgument);
}

#[test]
fn header_declares_every_export() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/odeim.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let mut n = 0;
    for line in src.lines() {
        let Some(rest) = line.split("extern \"C\" fn ").nth(1) else { continue };
        let name = rest.split('(').next().unwrap();
        assert!(header.contains(&format!("{}(", name)), "{} missing from header", name);
        n += 1;
    }
    assert!(n >= 14);
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = std::env::temp_dir().join(format!("odeim-h-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        "#include \"odeim.h\"\nint probe(void) { OdeimAlgebra *a = 0; return odeim_algebra_new(\"B3\", &a) == ODEIM_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(root.join("include"))
        .arg(&src)
        .status();
    std::fs::remove_dir_all(&dir).ok();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(e) => eprintln!("skipping: no C compiler ({})", e),
    }
}
