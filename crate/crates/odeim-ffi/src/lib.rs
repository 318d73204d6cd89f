//! C ABI over `odeim`.
//!
//! Objects cross the boundary as opaque pointers created by `*_new` and released by
//! the matching `*_free`. Every fallible call returns an [`OdeimStatus`]; the message
//! of the last failure on the calling thread is available through
//! [`odeim_last_error`]. Complex numbers are passed as `(re, im)` pairs of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use odeim::airy::AiryQ;
use odeim::bethe::{random_generic_ell, QSystem};
use odeim::cli;
use odeim::linalg::C64;
use odeim::odeflow::OdeConfig;
use odeim::repmatrix::AffineAlgebra;
use odeim::OdeimError;
use rand::SeedableRng;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidLabel = 2,
    Unsupported = 3,
    InvalidArgument = 4,
    Numerical = 5,
    CheckFailed = 6,
    Parse = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A dual affine algebra with its folding data.
pub struct OdeimAlgebra(AffineAlgebra);

/// Spectral determinants of the ODE with residue `l`, exponent `M` and Weyl word `w`.
pub struct OdeimQSystem(QSystem);

/// Closed-form contour solutions for the linear potential.
pub struct OdeimAiry(AiryQ);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &OdeimError) -> OdeimStatus {
    match e {
        OdeimError::InvalidLabel(_) => OdeimStatus::InvalidLabel,
        OdeimError::Unsupported(_) => OdeimStatus::Unsupported,
        OdeimError::InvalidArgument(_) => OdeimStatus::InvalidArgument,
        OdeimError::Numerical(_) => OdeimStatus::Numerical,
        OdeimError::CheckFailed(_) => OdeimStatus::CheckFailed,
        OdeimError::Parse(_) => OdeimStatus::Parse,
    }
}

enum Fail {
    Null,
    Small(usize),
    Lib(OdeimError),
}

impl From<OdeimError> for Fail {
    fn from(e: OdeimError) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OdeimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OdeimStatus::Ok,
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument");
            OdeimStatus::NullPointer
        }
        Ok(Err(Fail::Small(need))) => {
            set_error(&format!("buffer too small, {} entries needed", need));
            OdeimStatus::BufferTooSmall
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            OdeimStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null)
}

unsafe fn as_str<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null);
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Lib(OdeimError::Parse("string is not UTF-8".into())))
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null);
    }
    out.write(v);
    Ok(())
}

/// Copy complex values into interleaved `out[2k] = re, out[2k+1] = im`.
unsafe fn write_complex(v: &[C64], out: *mut f64, cap: usize, len: *mut usize) -> Result<(), Fail> {
    write(len, v.len())?;
    if cap < v.len() {
        return Err(Fail::Small(v.len()));
    }
    if out.is_null() {
        return Err(Fail::Null);
    }
    for (k, z) in v.iter().enumerate() {
        *out.add(2 * k) = z.re;
        *out.add(2 * k + 1) = z.im;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Owned by the library and
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn odeim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse `label` (`B3`, `A5^(2)`, `D43`, ...) into a new algebra handle.
///
/// # Safety
/// `label` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn odeim_algebra_new(label: *const c_char, out: *mut *mut OdeimAlgebra) -> OdeimStatus {
    guard(|| {
        let s = as_str(label)?;
        let alg = cli::parse_algebra(s)?;
        write(out, Box::into_raw(Box::new(OdeimAlgebra(alg))))
    })
}

/// # Safety
/// `alg` must come from `odeim_algebra_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn odeim_algebra_free(alg: *mut OdeimAlgebra) {
    if !alg.is_null() {
        drop(Box::from_raw(alg));
    }
}

/// Rank of g and dual Coxeter number.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn odeim_algebra_info(alg: *const OdeimAlgebra, rank: *mut usize, h_dual: *mut i64) -> OdeimStatus {
    guard(|| {
        let a = &as_ref(alg)?.0;
        write(rank, a.rank())?;
        write(h_dual, a.fold.h_dual)
    })
}

/// Maximal eigenvalue of Lambda on the fundamental module at 1-based `node`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn odeim_algebra_lambda(alg: *const OdeimAlgebra, node: usize, out: *mut f64) -> OdeimStatus {
    guard(|| {
        let a = &as_ref(alg)?.0;
        if node == 0 || node > a.rank() {
            return Err(OdeimError::InvalidArgument(format!("node {} outside 1..{}", node, a.rank())).into());
        }
        write(out, odeim::spectra::lambda_numeric(a, node - 1)?)
    })
}

/// Build a Q-system. With `ell_re == NULL` the residue is drawn from `seed`; otherwise
/// `ell_re` and `ell_im` hold `n` coefficients. `word` holds `word_len` 1-based Weyl letters.
///
/// # Safety
/// Arrays must hold the stated number of entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odeim_qsystem_new(
    alg: *const OdeimAlgebra,
    m: f64,
    ell_re: *const f64,
    ell_im: *const f64,
    n: usize,
    seed: u64,
    word: *const usize,
    word_len: usize,
    out: *mut *mut OdeimQSystem,
) -> OdeimStatus {
    guard(|| {
        let a = &as_ref(alg)?.0;
        let ell: Vec<C64> = if ell_re.is_null() {
            random_generic_ell(a, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))?
        } else {
            if ell_im.is_null() {
                return Err(Fail::Null);
            }
            (0..n).map(|k| C64::new(*ell_re.add(k), *ell_im.add(k))).collect()
        };
        let w: Vec<usize> = if word_len == 0 {
            Vec::new()
        } else {
            if word.is_null() {
                return Err(Fail::Null);
            }
            let w = std::slice::from_raw_parts(word, word_len);
            if w.iter().any(|&k| k == 0) {
                return Err(OdeimError::InvalidArgument("Weyl letters are 1-based".into()).into());
            }
            w.iter().map(|k| k - 1).collect()
        };
        let qs = QSystem::new(a, m, &ell, &w, OdeConfig::default())?;
        write(out, Box::into_raw(Box::new(OdeimQSystem(qs))))
    })
}

/// # Safety
/// `qs` must come from `odeim_qsystem_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn odeim_qsystem_free(qs: *mut OdeimQSystem) {
    if !qs.is_null() {
        drop(Box::from_raw(qs));
    }
}

/// The residue `l` actually used, as `2 * rank` interleaved doubles.
///
/// # Safety
/// `out` must hold `cap` complex entries; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odeim_qsystem_ell(qs: *const OdeimQSystem, out: *mut f64, cap: usize, len: *mut usize) -> OdeimStatus {
    guard(|| write_complex(&as_ref(qs)?.0.ell, out, cap, len))
}

/// `Q^(node)(E)` and, unless `q_tilde` is NULL, `Q~^(node)(E)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn odeim_qsystem_q(
    qs: *const OdeimQSystem,
    node: usize,
    e_re: f64,
    e_im: f64,
    q: *mut f64,
    q_tilde: *mut f64,
) -> OdeimStatus {
    guard(|| {
        let s = &as_ref(qs)?.0;
        if node == 0 || node > s.rank() {
            return Err(OdeimError::InvalidArgument(format!("node {} outside 1..{}", node, s.rank())).into());
        }
        if q.is_null() {
            return Err(Fail::Null);
        }
        let e = C64::new(e_re, e_im);
        let a = if q_tilde.is_null() {
            s.q(node - 1, e)?
        } else {
            let (a, b) = s.q_pair(node - 1, e)?;
            *q_tilde = b.re;
            *q_tilde.add(1) = b.im;
            a
        };
        *q = a.re;
        *q.add(1) = a.im;
        Ok(())
    })
}

/// `|product + 1|` of the Bethe equation at a zero of `Q^(node)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn odeim_qsystem_bae_residual(
    qs: *const OdeimQSystem,
    node: usize,
    z_re: f64,
    z_im: f64,
    out: *mut f64,
) -> OdeimStatus {
    guard(|| {
        let s = &as_ref(qs)?.0;
        if node == 0 || node > s.rank() {
            return Err(OdeimError::InvalidArgument(format!("node {} outside 1..{}", node, s.rank())).into());
        }
        write(out, s.bae_check(node - 1, C64::new(z_re, z_im))?.residual)
    })
}

/// Contour-integral solver for a twisted algebra.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn odeim_airy_new(alg: *const OdeimAlgebra, out: *mut *mut OdeimAiry) -> OdeimStatus {
    guard(|| {
        let a = &as_ref(alg)?.0;
        write(out, Box::into_raw(Box::new(OdeimAiry(AiryQ::new(a)?))))
    })
}

/// # Safety
/// `h` must come from `odeim_airy_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn odeim_airy_free(h: *mut OdeimAiry) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// `Psi_k(x)`, written as interleaved doubles; `len` receives the dimension.
///
/// # Safety
/// `out` must hold `cap` complex entries; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odeim_airy_psi(
    h: *const OdeimAiry,
    x_re: f64,
    x_im: f64,
    k: i64,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> OdeimStatus {
    guard(|| {
        let a = &as_ref(h)?.0;
        let v = a.solver.psi_k(k as f64, C64::new(x_re, x_im))?;
        write_complex(&v, out, cap, len)
    })
}

/// `Q^(node)(E)` of the linear potential, 1-based node with an integral formula.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn odeim_airy_q(h: *const OdeimAiry, node: usize, e_re: f64, e_im: f64, q: *mut f64) -> OdeimStatus {
    guard(|| {
        let a = &as_ref(h)?.0;
        if node == 0 {
            return Err(OdeimError::InvalidArgument("nodes are 1-based".into()).into());
        }
        let v = a.q(node - 1, C64::new(e_re, e_im))?;
        if q.is_null() {
            return Err(Fail::Null);
        }
        *q = v.re;
        *q.add(1) = v.im;
        Ok(())
    })
}

/// Run a command-line subcommand. `argv` excludes the program name. On success
/// `*report` receives the serialised report, to be released with `odeim_string_free`,
/// and `*ok` whether every check passed.
///
/// # Safety
/// `argv` must hold `argc` valid C strings; `report` and `ok` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odeim_run(argc: usize, argv: *const *const c_char, report: *mut *mut c_char, ok: *mut bool) -> OdeimStatus {
    guard(|| {
        if argc > 0 && argv.is_null() {
            return Err(Fail::Null);
        }
        let mut args = vec!["odeim".to_string()];
        for k in 0..argc {
            args.push(as_str(*argv.add(k))?.to_string());
        }
        let args = cli::expand_config(args)?;
        let parsed = <cli::Cli as clap::Parser>::try_parse_from(args)
            .map_err(|e| OdeimError::InvalidArgument(e.to_string()))?;
        let r = cli::run(&parsed.command)?;
        let bytes = cli::export_report(&r, cli::format_of(&parsed.command))?;
        let s = CString::new(bytes).map_err(|_| OdeimError::Parse("report contains a nul byte".into()))?;
        write(ok, r.ok)?;
        write(report, s.into_raw())
    })
}

/// Release a string returned by `odeim_run`.
///
/// # Safety
/// `s` must come from `odeim_run` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn odeim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
