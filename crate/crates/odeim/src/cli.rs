//! Command-line front end. Every subcommand builds a [`Report`]; the binary only
//! prints it and maps the outcome to an exit status.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::airy::{AiryQ, AirySolver};
use crate::bethe::{default_radius, find_zeros, random_generic_ell, weyl_action, QSystem, ZeroRegion, ZeroSet};
use crate::intertwiners::{morphism_m, psi_vectors, verify_algebraic_psi};
use crate::liealg::{orbits, q_to_string, AlgebraLabel, Family};
use crate::linalg::{self, c, C64};
use crate::odeflow::{verify_numeric_psi, OdeConfig};
use crate::repmatrix::AffineAlgebra;
use crate::spectra::{char_poly, lambda_formula, lambda_spectrum, maximal_eigenvector, verify_lambda_relations};
use crate::{OdeimError, Result};

pub const SCHEMA: u32 = 1;

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "odeim", version, about = "Twisted affine Kac-Moody ODE/IM toolkit", args_override_self = true)]
pub struct Cli {
    /// JSON file whose keys mirror the long flags; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Algebra g (B3, C2, G2, A2, ...) or its dual affine name (A5^(2), D43, ...).
    #[arg(value_name = "ALGEBRA")]
    pub label: Option<String>,
    #[arg(long)]
    pub algebra: Option<String>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct Ode {
    /// Exponent of the potential p(x, E) = x^{Mh} - E.
    #[arg(long = "M", alias = "m", default_value_t = 2.0)]
    pub m: f64,
    /// Residue l as comma-separated complex coefficients; drawn from --seed when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub ell: Option<String>,
    /// Seed of the generic-l draw.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Weyl word w as 1-based letters, rightmost acting first.
    #[arg(long, default_value = "")]
    pub word: String,
    /// Relative tolerance of the ODE integrator.
    #[arg(long, default_value_t = 1e-11)]
    pub rtol: f64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Folding data: simply-laced g~, order r, dual Coxeter number h, D_i and k_i.
    Info(Common),
    /// Cartan matrix of g folded from (g~, sigma), and symmetry of D C.
    Fold(Common),
    /// Spectrum of Lambda = e_0 + ... + e_n on V^(rep) and the maximal eigenvalue relations.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Node i of V^(i), 1-based.
        #[arg(long, default_value_t = 1)]
        rep: usize,
    },
    /// Psi-system m_i(R_i psi_{-D_i/2} ^ psi_{D_i/2}) = beta (x) psi^(j), algebraic and along the ODE.
    PsiCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: Ode,
        /// Only the algebraic identity.
        #[arg(long)]
        algebraic_only: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol_algebraic: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Q^(i)(E) and Q~^(i)(E) on an energy grid.
    Q {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: Ode,
        #[arg(long, default_value_t = 1)]
        node: usize,
        /// `a:b:n` on the real axis or `a:b:n,c:d:m` for a rectangle.
        #[arg(long, default_value = "-4:4:9", allow_hyphen_values = true)]
        e_grid: String,
    },
    /// Zeros of Q^(i) by the argument principle and Newton refinement.
    Zeros {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: Ode,
        #[arg(long, default_value_t = 1)]
        node: usize,
        /// Number of zeros the default disk must enclose.
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Disk radius; sized from --count when absent.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// QQ~ relation rho_chi w^{D theta/2} Q(O^{-D/2}E) Q~(O^{D/2}E) - rho_phi w^{-D theta/2} Q(O^{D/2}E) Q~(O^{-D/2}E) = beta prod Q^(j).
    QqCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: Ode,
        #[arg(long, default_value = "-6:6:5,-3:3:5", allow_hyphen_values = true)]
        e_grid: String,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Bethe equations prod_j O^{-C_ij b_j} Q^(j)(O^{C_ij/2}E*) / Q^(j)(O^{-C_ij/2}E*) = -1 at the zeros of Q^(i).
    BaeCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: Ode,
        #[arg(long, default_value_t = 1)]
        node: usize,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Weyl group action l -> w(l) on the Bethe phases betabar.
    Weyl {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ode: Ode,
    },
    /// Contour-integral solution Psi_k(x) = w^{-kh} Psi(w^k x) of Psi' + (e + x e_0) Psi = 0.
    Airy {
        #[command(flatten)]
        common: Common,
        /// Point x, complex.
        #[arg(long, default_value = "1", allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 0)]
        k: i64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Q^(1) and Q^(2) read off the contour solutions at x = 0, or their zeros and Bethe residuals.
    AiryQ {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "-4:4:9", allow_hyphen_values = true)]
        e_grid: String,
        /// Locate this many zeros of Q^(1) and check the Bethe equations instead of tabulating.
        #[arg(long)]
        zeros: Option<usize>,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Chevalley generators e_i, f_i and the grading of V^(rep).
    DumpGenerators {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        rep: usize,
    },
}

/// A tabular part of a report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: String,
    pub ok: bool,
    pub body: Map<String, Value>,
    pub table: Option<Table>,
}

impl Report {
    fn new(command: &str) -> Self {
        Report { command: command.into(), ok: true, body: Map::new(), table: None }
    }

    fn set(&mut self, key: &str, v: impl serde::Serialize) {
        self.body.insert(key.into(), serde_json::to_value(v).expect("serialisable"));
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("schema".into(), json!(SCHEMA));
        m.insert("command".into(), json!(self.command));
        m.insert("ok".into(), json!(self.ok));
        for (k, v) in &self.body {
            m.insert(k.clone(), v.clone());
        }
        if let Some(t) = &self.table {
            let rows: Vec<Value> = t
                .rows
                .iter()
                .map(|r| Value::Object(t.header.iter().cloned().zip(r.iter().map(|s| cell_value(s))).collect()))
                .collect();
            m.insert("rows".into(), Value::Array(rows));
        }
        Value::Object(m)
    }
}

fn cell_value(s: &str) -> Value {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => json!(s),
    }
}

/// Serialise a report. CSV needs a table.
pub fn export_report(report: &Report, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(&report.to_json()).map_err(|e| OdeimError::Parse(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let t = report
                .table
                .as_ref()
                .ok_or_else(|| OdeimError::InvalidArgument(format!("`{}` has no tabular output", report.command)))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.header).map_err(|e| OdeimError::Parse(e.to_string()))?;
            for r in &t.rows {
                w.write_record(r).map_err(|e| OdeimError::Parse(e.to_string()))?;
            }
            w.into_inner().map_err(|e| OdeimError::Parse(e.to_string()))
        }
    }
}

fn fmt_f(x: f64) -> String {
    // shortest round-trip representation
    format!("{:?}", x)
}

/// `1.5`, `-2i`, `0.3-1e-2i`, `i`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
    let err = || OdeimError::Parse(format!("not a complex number: {}", s));
    if t.is_empty() {
        return Err(err());
    }
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return t.parse::<f64>().map(c).map_err(|_| err());
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let mut cut = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            cut = Some(k);
            break;
        }
    }
    let imag = |u: &str| -> Result<f64> {
        match u {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => u.parse::<f64>().map_err(|_| err()),
        }
    };
    match cut {
        Some(k) => Ok(C64::new(body[..k].parse::<f64>().map_err(|_| err())?, imag(&body[k..])?)),
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}

fn parse_list(s: &str) -> Result<Vec<C64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_complex).collect()
}

/// `a:b:n` or `a:b:n,c:d:m` (real by imaginary).
pub fn parse_grid(s: &str) -> Result<Vec<C64>> {
    let axis = |p: &str| -> Result<Vec<f64>> {
        let f: Vec<&str> = p.split(':').collect();
        let err = || OdeimError::Parse(format!("bad grid axis `{}`", p));
        if f.len() != 3 {
            return Err(err());
        }
        let a: f64 = f[0].trim().parse().map_err(|_| err())?;
        let b: f64 = f[1].trim().parse().map_err(|_| err())?;
        let n: usize = f[2].trim().parse().map_err(|_| err())?;
        if n == 0 || !a.is_finite() || !b.is_finite() || (n > 1 && a == b) {
            return Err(OdeimError::InvalidArgument(format!("degenerate grid axis `{}`", p)));
        }
        Ok((0..n).map(|k| if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect())
    };
    let parts: Vec<&str> = s.split(',').collect();
    let re = axis(parts[0])?;
    let im = match parts.len() {
        1 => vec![0.0],
        2 => axis(parts[1])?,
        _ => return Err(OdeimError::Parse(format!("bad grid `{}`", s))),
    };
    Ok(im.iter().flat_map(|&y| re.iter().map(move |&x| C64::new(x, y))).collect())
}

fn parse_word(s: &str, rank: usize) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let k: usize = p.trim().parse().map_err(|_| OdeimError::Parse(format!("bad Weyl letter `{}`", p)))?;
            if k == 0 || k > rank {
                return Err(OdeimError::InvalidArgument(format!("Weyl letter {} outside 1..{}", k, rank)));
            }
            Ok(k - 1)
        })
        .collect()
}

/// Accepts a label of g (`B3`) or of its dual affine algebra (`A5^(2)`, `A5(2)`, `A52`, `D43`).
pub fn parse_algebra(s: &str) -> Result<AffineAlgebra> {
    let t: String = s.chars().filter(|ch| !matches!(ch, '^' | '(' | ')' | '_' | ' ')).collect();
    let explicit = s.contains('^') || s.contains('(');
    let affine = affine_to_g(&t);
    let label = match (explicit, affine) {
        (_, Some(g)) => g,
        (true, None) => return Err(OdeimError::InvalidLabel(s.to_string())),
        (false, None) => t.parse::<AlgebraLabel>()?,
    };
    AffineAlgebra::new(label)
}

/// `X_n^(r)` written as `Xnr` to the g whose dual it is.
fn affine_to_g(t: &str) -> Option<AlgebraLabel> {
    let fam = t.chars().next()?.to_ascii_uppercase();
    let digits = &t[1..];
    if digits.len() < 2 || !digits.chars().all(|ch| ch.is_ascii_digit()) {
        return None;
    }
    let (n, r) = digits.split_at(digits.len() - 1);
    let n: usize = n.parse().ok()?;
    let g = match (fam, r) {
        ('A', "2") if n % 2 == 1 && n >= 5 => AlgebraLabel::new(Family::B, (n + 1) / 2),
        ('D', "2") if n >= 3 => AlgebraLabel::new(Family::C, n - 1),
        ('D', "3") if n == 4 => AlgebraLabel::new(Family::G, 2),
        ('E', "2") if n == 6 => AlgebraLabel::new(Family::F, 4),
        _ => return None,
    };
    g.ok()
}

fn algebra_of(common: &Common) -> Result<AffineAlgebra> {
    let s = common
        .algebra
        .as_deref()
        .or(common.label.as_deref())
        .ok_or_else(|| OdeimError::InvalidArgument("no algebra given".into()))?;
    parse_algebra(s)
}

fn node_index(alg: &AffineAlgebra, node: usize) -> Result<usize> {
    if node == 0 || node > alg.rank() {
        return Err(OdeimError::InvalidArgument(format!("node {} outside 1..{}", node, alg.rank())));
    }
    Ok(node - 1)
}

/// Residue `l` from `--ell` or the seeded generic draw.
pub fn resolve_ell(alg: &AffineAlgebra, ode: &Ode) -> Result<Vec<C64>> {
    match &ode.ell {
        Some(s) => {
            let v = parse_list(s)?;
            if v.len() != alg.rank() {
                return Err(OdeimError::InvalidArgument(format!("--ell needs {} entries", alg.rank())));
            }
            Ok(v)
        }
        None => random_generic_ell(alg, &mut ChaCha8Rng::seed_from_u64(ode.seed)),
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(OdeimError::InvalidArgument(format!("{} must be positive", name)))
    }
}

fn q_system(alg: &AffineAlgebra, ode: &Ode) -> Result<(QSystem, Vec<C64>)> {
    check_positive("M", ode.m)?;
    check_positive("rtol", ode.rtol)?;
    let ell = resolve_ell(alg, ode)?;
    let word = parse_word(&ode.word, alg.rank())?;
    let cfg = OdeConfig { rtol: ode.rtol, ..OdeConfig::default() };
    Ok((QSystem::new(alg, ode.m, &ell, &word, cfg)?, ell))
}

fn ode_params(r: &mut Report, alg: &AffineAlgebra, ode: &Ode, ell: &[C64]) {
    r.set(
        "params",
        json!({
            "algebra": alg.fold.g.to_string(),
            "affine": alg.name(),
            "M": ode.m,
            "ell": ell,
            "seed": ode.seed,
            "word": parse_word(&ode.word, alg.rank()).unwrap_or_default().iter().map(|k| k + 1).collect::<Vec<_>>(),
            "rtol": ode.rtol,
        }),
    );
}

fn complex_cells(z: C64) -> [String; 2] {
    [fmt_f(z.re), fmt_f(z.im)]
}

fn zero_search(f: &(dyn Fn(C64) -> Result<C64> + Sync), count: usize, radius: Option<f64>) -> Result<ZeroSet> {
    let r = match radius {
        Some(r) => {
            check_positive("radius", r)?;
            r
        }
        None => default_radius(&f, count)?,
    };
    find_zeros(&f, &ZeroRegion::disk(r))
}

fn zeros_table(zs: &ZeroSet) -> Table {
    Table {
        header: ["E_re", "E_im", "residual", "multiplicity"].map(String::from).to_vec(),
        rows: zs
            .zeros
            .iter()
            .map(|z| {
                let [a, b] = complex_cells(z.energy);
                vec![a, b, fmt_f(z.residual), z.multiplicity.to_string()]
            })
            .collect(),
    }
}

/// Run one subcommand.
pub fn run(command: &Command) -> Result<Report> {
    match command {
        Command::Info(common) => {
            let alg = algebra_of(common)?;
            let f = &alg.fold;
            let mut r = Report::new("info");
            r.set("algebra", f.g.to_string());
            r.set("affine", alg.name());
            r.set("tilde", f.tilde.to_string());
            r.set("r", f.r);
            r.set("h_dual", f.h_dual);
            r.set("rank", f.rank());
            r.set("sigma", f.sigma.iter().map(|s| s + 1).collect::<Vec<_>>());
            r.set("D", f.d.iter().map(|q| q_to_string(*q)).collect::<Vec<_>>());
            r.set("k", f.k_tilde.iter().map(|q| q_to_string(*q)).collect::<Vec<_>>());
            r.set("good", &f.good);
            r.set("cartan", &f.cartan);
            Ok(r)
        }
        Command::Fold(common) => {
            let alg = algebra_of(common)?;
            let f = &alg.fold;
            let (nodes, folded) = crate::liealg::fold_cartan(&f.tilde_cartan, &f.sigma);
            let dc = f.sym_cartan();
            let n = dc.len();
            let symmetric = (0..n).all(|i| (0..n).all(|j| dc[i][j] == dc[j][i]));
            let mut r = Report::new("fold");
            r.set("algebra", f.g.to_string());
            r.set("tilde", f.tilde.to_string());
            r.set("tilde_cartan", &f.tilde_cartan);
            r.set("sigma", f.sigma.iter().map(|s| s + 1).collect::<Vec<_>>());
            r.set("orbits", orbits(&f.sigma).iter().map(|o| o.iter().map(|s| s + 1).collect::<Vec<_>>()).collect::<Vec<_>>());
            r.set("nodes", nodes.iter().map(|s| s + 1).collect::<Vec<_>>());
            r.set("cartan", &folded);
            r.set("DC", dc.iter().map(|row| row.iter().map(|q| q_to_string(*q)).collect::<Vec<_>>()).collect::<Vec<_>>());
            r.set("DC_symmetric", symmetric);
            r.ok = symmetric && folded == f.cartan;
            Ok(r)
        }
        Command::Spectrum { common, rep } => {
            let alg = algebra_of(common)?;
            let i = node_index(&alg, *rep)?;
            let v = alg.fundamental_rep(i)?;
            let spec = lambda_spectrum(&v)?;
            let top = maximal_eigenvector(&v)?;
            let formula = lambda_formula(&alg, i);
            let rel = verify_lambda_relations(&alg)?;
            let mut r = Report::new("spectrum");
            r.set("algebra", alg.fold.g.to_string());
            r.set("rep", rep);
            r.set("dim", v.dim());
            r.set("eigenvalues", &spec);
            r.set("maximal", top.value);
            r.set("gap", top.gap);
            r.set("formula", formula);
            let fres = formula.map(|x| (x - top.value).abs());
            r.set("formula_residual", fres);
            r.set("char_poly", char_poly(&v)?);
            r.set("relations", &rel);
            r.ok = fres.map_or(true, |x| x < 1e-10) && rel.iter().all(|x| x.residual < 1e-9);
            r.table = Some(Table {
                header: vec!["re".into(), "im".into()],
                rows: spec.iter().map(|z| complex_cells(*z).to_vec()).collect(),
            });
            Ok(r)
        }
        Command::PsiCheck { common, ode, algebraic_only, tol_algebraic, tol } => {
            let alg = algebra_of(common)?;
            check_positive("tol", *tol)?;
            let pv = psi_vectors(&alg)?;
            let ell = if *algebraic_only { Vec::new() } else { resolve_ell(&alg, ode)? };
            let cfg = OdeConfig { rtol: ode.rtol, ..OdeConfig::default() };
            let pts = [(c(1.0), c(0.0)), (c(0.8), C64::new(1.0, 0.5)), (C64::from_polar(1.3, 0.3), C64::new(-2.0, 1.0))];
            let mut r = Report::new("psi-check");
            ode_params(&mut r, &alg, ode, &ell);
            let mut nodes = Vec::new();
            let mut ok = true;
            for i in 0..alg.rank() {
                let mo = match morphism_m(&alg, i) {
                    Ok(m) => m,
                    Err(OdeimError::Unsupported(msg)) => {
                        nodes.push(json!({"node": i + 1, "unsupported": msg}));
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let chk = match verify_algebraic_psi(&alg, &mo, &pv) {
                    Ok(x) => x,
                    Err(OdeimError::Unsupported(msg)) => {
                        nodes.push(json!({"node": i + 1, "unsupported": msg}));
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                ok &= chk.residual < *tol_algebraic && mo.null_dim == 1;
                let mut numeric = Vec::new();
                if !algebraic_only {
                    for &(x, e) in &pts {
                        let n = verify_numeric_psi(&alg, &mo, chk.beta, ode.m, &ell, x, e, &cfg)?;
                        ok &= n.residual < *tol;
                        numeric.push(n);
                    }
                }
                nodes.push(json!({
                    "node": i + 1,
                    "hom_dim": mo.hom_dim,
                    "null_dim": mo.null_dim,
                    "beta": chk.beta,
                    "algebraic_residual": chk.residual,
                    "numeric": numeric,
                }));
            }
            r.set("nodes", nodes);
            r.ok = ok;
            Ok(r)
        }
        Command::Q { common, ode, node, e_grid } => {
            let alg = algebra_of(common)?;
            let i = node_index(&alg, *node)?;
            let grid = parse_grid(e_grid)?;
            let (qs, ell) = q_system(&alg, ode)?;
            use rayon::prelude::*;
            let vals: Vec<(C64, C64)> = grid.par_iter().map(|&e| qs.q_pair(i, e)).collect::<Result<_>>()?;
            let mut r = Report::new("q");
            ode_params(&mut r, &alg, ode, &ell);
            r.set("node", node);
            r.table = Some(Table {
                header: ["E_re", "E_im", "Q_re", "Q_im", "Qt_re", "Qt_im"].map(String::from).to_vec(),
                rows: grid
                    .iter()
                    .zip(&vals)
                    .map(|(e, (q, qt))| [complex_cells(*e), complex_cells(*q), complex_cells(*qt)].concat())
                    .collect(),
            });
            Ok(r)
        }
        Command::Zeros { common, ode, node, count, radius } => {
            let alg = algebra_of(common)?;
            let i = node_index(&alg, *node)?;
            let (qs, ell) = q_system(&alg, ode)?;
            let f = |e: C64| qs.q(i, e);
            let zs = zero_search(&f, *count, *radius)?;
            let mut r = Report::new("zeros");
            ode_params(&mut r, &alg, ode, &ell);
            r.set("node", node);
            r.set("region", &zs.region);
            r.set("boundary_winding", zs.boundary_winding);
            r.set("cell_winding", zs.cell_winding);
            r.ok = zs.boundary_winding == zs.cell_winding && zs.zeros.iter().map(|z| z.multiplicity).sum::<i64>() == zs.boundary_winding;
            r.table = Some(zeros_table(&zs));
            Ok(r)
        }
        Command::QqCheck { common, ode, e_grid, tol } => {
            let alg = algebra_of(common)?;
            check_positive("tol", *tol)?;
            let grid = parse_grid(e_grid)?;
            let (qs, ell) = q_system(&alg, ode)?;
            let mut r = Report::new("qq-check");
            ode_params(&mut r, &alg, ode, &ell);
            let lemma = qs.lemma_residual()?;
            r.set("lemma_residual", lemma);
            let mut ok = lemma < 1e-10;
            let mut rows = Vec::new();
            let mut skipped = Vec::new();
            use rayon::prelude::*;
            for i in 0..alg.rank() {
                let checks: Vec<_> = grid.par_iter().map(|&e| qs.qq_check(i, e)).collect();
                for chk in checks {
                    match chk {
                        Ok(q) => {
                            ok &= q.residual < *tol;
                            rows.push(
                                [
                                    vec![q.node.to_string()],
                                    complex_cells(q.energy).to_vec(),
                                    vec![fmt_f(q.residual), fmt_f(q.alt_residual)],
                                ]
                                .concat(),
                            );
                        }
                        Err(OdeimError::Unsupported(msg)) => {
                            skipped.push(json!({"node": i + 1, "unsupported": msg}));
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            r.set("skipped", skipped);
            r.ok = ok;
            r.table = Some(Table {
                header: ["node", "E_re", "E_im", "residual", "alt_residual"].map(String::from).to_vec(),
                rows,
            });
            Ok(r)
        }
        Command::BaeCheck { common, ode, node, count, radius, tol } => {
            let alg = algebra_of(common)?;
            check_positive("tol", *tol)?;
            let i = node_index(&alg, *node)?;
            let (qs, ell) = q_system(&alg, ode)?;
            let f = |e: C64| qs.q(i, e);
            let zs = zero_search(&f, *count, *radius)?;
            use rayon::prelude::*;
            let checks: Vec<_> = zs.zeros.par_iter().map(|z| qs.bae_check(i, z.energy)).collect::<Result<_>>()?;
            let mut r = Report::new("bae-check");
            ode_params(&mut r, &alg, ode, &ell);
            r.set("node", node);
            r.set("beta_bar", qs.beta_bar()?);
            r.set("boundary_winding", zs.boundary_winding);
            r.ok = !checks.is_empty() && checks.iter().all(|b| b.residual < *tol);
            r.table = Some(Table {
                header: ["E_re", "E_im", "residual", "alt_residual", "hypothesis_abs"].map(String::from).to_vec(),
                rows: checks
                    .iter()
                    .map(|b| {
                        [
                            complex_cells(b.zero).to_vec(),
                            vec![fmt_f(b.residual), fmt_f(b.alt_residual), fmt_f(b.hypothesis.norm())],
                        ]
                        .concat()
                    })
                    .collect(),
            });
            Ok(r)
        }
        Command::Weyl { common, ode } => {
            let alg = algebra_of(common)?;
            let word = parse_word(&ode.word, alg.rank())?;
            let (qs, ell) = q_system(&alg, &Ode { word: String::new(), ..ode.clone() })?;
            let moved = QSystem::new(&alg, ode.m, &ell, &word, qs.cfg.clone())?;
            let base = qs.beta_bar()?;
            let image = moved.beta_bar()?;
            // w is the identity iff it fixes a generic weight
            let probe: Vec<f64> = (0..alg.rank()).map(|k| 1.0 + 0.1379 * k as f64 + 0.0113 * (k * k) as f64).collect();
            let fixed = weyl_action(&alg, &word, &probe);
            let identity = fixed.iter().zip(&probe).all(|(a, b)| (a - b).abs() < 1e-12);
            let differs = base.iter().zip(&image).any(|(a, b)| (a - b).norm() > 1e-8);
            let mut r = Report::new("weyl");
            ode_params(&mut r, &alg, ode, &ell);
            r.set("chamber", qs.chamber.iter().map(|k| k + 1).collect::<Vec<_>>());
            r.set("acts_as_identity", identity);
            r.set("beta_bar", base);
            r.set("beta_bar_w", image);
            r.set("moved", differs);
            r.set("note", "freeness is checked for this word only");
            r.ok = identity != differs;
            Ok(r)
        }
        Command::Airy { common, x, k, tol } => {
            let alg = algebra_of(common)?;
            check_positive("tol", *tol)?;
            let solver = AirySolver::new(&alg)?;
            let x = parse_complex(x)?;
            let psi = solver.psi_k(*k as f64, x)?;
            let omega = C64::from_polar(1.0, std::f64::consts::TAU * *k as f64 / solver.m as f64);
            let (_, quad) = solver.psi_with_report(omega * x)?;
            let res = solver.ode_residual(omega * x, 1e-3 / (1.0 + x.norm()))?;
            let mut r = Report::new("airy");
            r.set("algebra", alg.fold.g.to_string());
            r.set("affine", alg.name());
            r.set("x", x);
            r.set("k", k);
            r.set("psi", &psi);
            r.set("norm", linalg::norm(&psi));
            r.set("ode_residual", res);
            r.set("quadrature", quad);
            r.ok = res < *tol;
            r.table = Some(Table {
                header: vec!["component".into(), "re".into(), "im".into()],
                rows: psi.iter().enumerate().map(|(j, z)| [vec![(j + 1).to_string()], complex_cells(*z).to_vec()].concat()).collect(),
            });
            Ok(r)
        }
        Command::AiryQ { common, e_grid, zeros, tol } => {
            let alg = algebra_of(common)?;
            let aq = AiryQ::new(&alg)?;
            let mut r = Report::new("airy-q");
            r.set("algebra", alg.fold.g.to_string());
            r.set("affine", alg.name());
            r.set("M", aq.m_ode());
            use rayon::prelude::*;
            match zeros {
                Some(count) => {
                    check_positive("tol", *tol)?;
                    let zs = aq.zeros(*count)?;
                    let checks: Vec<_> = zs.zeros.par_iter().map(|z| aq.bae_check(z.energy)).collect::<Result<_>>()?;
                    r.set("boundary_winding", zs.boundary_winding);
                    r.ok = !checks.is_empty() && checks.iter().all(|b| b.residual < *tol);
                    r.table = Some(Table {
                        header: ["E_re", "E_im", "residual", "alt_residual"].map(String::from).to_vec(),
                        rows: checks
                            .iter()
                            .map(|b| [complex_cells(b.zero).to_vec(), vec![fmt_f(b.residual), fmt_f(b.alt_residual)]].concat())
                            .collect(),
                    });
                }
                None => {
                    let grid = parse_grid(e_grid)?;
                    let two = aq.second.is_some();
                    let vals: Vec<(C64, Option<C64>)> = grid
                        .par_iter()
                        .map(|&e| Ok((aq.q(0, e)?, aq.second.map(|j| aq.q(j, e)).transpose()?)))
                        .collect::<Result<_>>()?;
                    let mut header: Vec<String> = ["E_re", "E_im", "Q1_re", "Q1_im"].map(String::from).to_vec();
                    if two {
                        let j = aq.second.unwrap_or(1) + 1;
                        header.extend([format!("Q{}_re", j), format!("Q{}_im", j)]);
                    }
                    r.table = Some(Table {
                        header,
                        rows: grid
                            .iter()
                            .zip(&vals)
                            .map(|(e, (q1, q2))| {
                                let mut row = [complex_cells(*e), complex_cells(*q1)].concat();
                                if let Some(q2) = q2 {
                                    row.extend(complex_cells(*q2));
                                }
                                row
                            })
                            .collect(),
                    });
                }
            }
            Ok(r)
        }
        Command::DumpGenerators { common, rep } => {
            let alg = algebra_of(common)?;
            let i = node_index(&alg, *rep)?;
            let v = alg.fundamental_rep(i)?;
            let res = v.chevalley_residual(&alg.chevalley_matrix());
            let mut r = Report::new("dump-generators");
            r.set("algebra", alg.fold.g.to_string());
            r.set("affine", alg.name());
            r.set("rep", rep);
            r.set("dim", v.dim());
            r.set("grading", &v.grading);
            r.set("e", v.e.iter().map(linalg::to_nested).collect::<Vec<_>>());
            r.set("f", v.f.iter().map(linalg::to_nested).collect::<Vec<_>>());
            r.set("chevalley_residual", res);
            r.ok = res < 1e-12;
            Ok(r)
        }
    }
}

pub fn format_of(command: &Command) -> Format {
    match command {
        Command::Info(c) | Command::Fold(c) => c.format,
        Command::Spectrum { common, .. }
        | Command::PsiCheck { common, .. }
        | Command::Q { common, .. }
        | Command::Zeros { common, .. }
        | Command::QqCheck { common, .. }
        | Command::BaeCheck { common, .. }
        | Command::Weyl { common, .. }
        | Command::Airy { common, .. }
        | Command::AiryQ { common, .. }
        | Command::DumpGenerators { common, .. } => common.format,
    }
}

/// Splice the keys of a JSON config file in front of the command-line flags of the
/// subcommand, so that explicit flags override them.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let pos = args.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(args) };
    let (path, consumed) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => (args.get(pos + 1).cloned().ok_or_else(|| OdeimError::InvalidArgument("--config needs a path".into()))?, 2),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| OdeimError::InvalidArgument(format!("{}: {}", path, e)))?;
    let cfg: Map<String, Value> = serde_json::from_str(&text).map_err(|e| OdeimError::Parse(format!("{}: {}", path, e)))?;
    let mut rest: Vec<String> = args[..pos].iter().chain(&args[pos + consumed..]).cloned().collect();
    let sub = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1);
    let Some(sub) = sub else { return Ok(rest) };
    let mut injected = Vec::new();
    for (k, v) in cfg {
        let flag = format!("--{}", k);
        match v {
            Value::Bool(true) => injected.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => injected.push(format!("{}={}", flag, s)),
            Value::Number(n) => injected.push(format!("{}={}", flag, n)),
            other => return Err(OdeimError::Parse(format!("config key `{}` must be a scalar, got {}", k, other))),
        }
    }
    rest.splice(sub + 1..sub + 1, injected);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("1.5").unwrap(), c(1.5));
        assert_eq!(parse_complex("1.5-0.8i").unwrap(), C64::new(1.5, -0.8));
        assert_eq!(parse_complex("-2i").unwrap(), C64::new(0.0, -2.0));
        assert_eq!(parse_complex("i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_complex("1e-3+2e+1i").unwrap(), C64::new(1e-3, 20.0));
        assert!(parse_complex("x").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![c(0.0), c(0.5), c(1.0)]);
        let g = parse_grid("0:1:2,-1:1:2").unwrap();
        assert_eq!(g, vec![C64::new(0.0, -1.0), C64::new(1.0, -1.0), C64::new(0.0, 1.0), C64::new(1.0, 1.0)]);
        assert!(parse_grid("0:0:4").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn algebra_names() {
        for (s, g) in [("B3", "B3"), ("A5^(2)", "B3"), ("A52", "B3"), ("D43", "G2"), ("D4^(3)", "G2"), ("D32", "C2"), ("A2", "A2")] {
            assert_eq!(parse_algebra(s).unwrap().fold.g.to_string(), g, "{}", s);
        }
        assert!(parse_algebra("B2").is_err());
        assert!(parse_algebra("A4^(2)").is_err());
    }

    #[test]
    fn words() {
        assert_eq!(parse_word("1,2,1", 3).unwrap(), vec![0, 1, 0]);
        assert_eq!(parse_word("", 3).unwrap(), Vec::<usize>::new());
        assert!(parse_word("4", 3).is_err());
        assert!(parse_word("0", 3).is_err());
    }

    #[test]
    fn empty_zero_table_is_header_only() {
        let zs = ZeroSet { zeros: vec![], boundary_winding: 0, cell_winding: 0, region: ZeroRegion::disk(1.0) };
        let mut r = Report::new("zeros");
        r.table = Some(zeros_table(&zs));
        let out = String::from_utf8(export_report(&r, Format::Csv).unwrap()).unwrap();
        assert_eq!(out, "E_re,E_im,residual,multiplicity\n");
    }

    #[test]
    fn config_is_spliced_after_the_subcommand() {
        let dir = std::env::temp_dir().join(format!("odeim-cfg-{}", std::process::id()));
        std::fs::write(&dir, r#"{"algebra": "G2", "rep": 2, "format": "json"}"#).unwrap();
        let args: Vec<String> =
            ["odeim", "--config", dir.to_str().unwrap(), "spectrum", "--rep", "1"].iter().map(|s| s.to_string()).collect();
        let out = expand_config(args).unwrap();
        std::fs::remove_file(&dir).ok();
        let cli = Cli::try_parse_from(out).unwrap();
        match cli.command {
            Command::Spectrum { common, rep } => {
                assert_eq!(common.algebra.as_deref(), Some("G2"));
                assert_eq!(rep, 1);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn info_b3() {
        let r = run(&Command::Info(Common { label: Some("B3".into()), algebra: None, format: Format::Json })).unwrap();
        let v = r.to_json();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["tilde"], "A5");
        assert_eq!(v["r"], 2);
        assert_eq!(v["h_dual"], 5);
    }
}
