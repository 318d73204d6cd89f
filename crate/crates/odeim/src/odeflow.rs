//! Solutions of `Psi' + (l/x + e + p(x,E) e_0) Psi = 0` with `p = x^{M h} - E`.
//!
//! The subdominant solution is integrated inward. Far out it is carried in the
//! gauge `u = e^{lambda S} q^{h} Psi`, where the stiff part is `x q (Lambda - lambda)`
//! in the variable `log x`, with a Radau IIA scheme. Below the matching radius the
//! original system is integrated with an adaptive Dormand-Prince pair.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{OdeimError, Result};
use crate::linalg::{self, c, norm, CMat, C64};
use crate::intertwiners::PsiMorphism;
use crate::liealg::q_to_f64;
use crate::repmatrix::{tensor_vectors, wedge2_vectors, AffineAlgebra, MatrixRep};
use crate::spectra::maximal_eigenvector_of;

const ZERO: C64 = C64::new(0.0, 0.0);

fn binom(a: f64, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, k| acc * (a - k as f64) / (k as f64 + 1.0))
}

fn on_cut(x: C64) -> bool {
    x.im == 0.0 && x.re <= 0.0
}

/// Truncated WKB data for `p(x,E)^{1/h}`.
#[derive(Clone, Debug, Serialize)]
pub struct Wkb {
    pub m: f64,
    pub h_dual: i64,
    pub energy: C64,
    pub s_trunc: usize,
    pub delta: f64,
    /// `c_0 = 1, c_1(E), ..., c_s(E)`.
    pub coeffs: Vec<C64>,
    pub log_case: bool,
}

impl Wkb {
    pub fn new(m: f64, h_dual: i64, energy: C64) -> Result<Self> {
        if !(m > 0.0) || h_dual < 1 {
            return Err(OdeimError::InvalidArgument("M and h must be positive".into()));
        }
        let h = h_dual as f64;
        let ratio = (m + 1.0) / (h * m);
        let s_trunc = (ratio + 1e-12).floor() as usize;
        let log_case = (ratio - ratio.round()).abs() < 1e-12 && ratio.round() >= 1.0;
        let delta = m * (h * (1.0 + s_trunc as f64) - 1.0) - 1.0;
        let mut w = Wkb { m, h_dual, energy, s_trunc, delta, coeffs: vec![], log_case };
        w.coeffs = (0..=s_trunc).map(|j| w.coefficient(j)).collect();
        Ok(w)
    }

    /// `M h`.
    pub fn k(&self) -> f64 {
        self.m * self.h_dual as f64
    }

    /// `c_j(E) = binom(1/h, j) (-E)^j`.
    pub fn coefficient(&self, j: usize) -> C64 {
        (-self.energy).powi(j as i32) * binom(1.0 / self.h_dual as f64, j)
    }

    fn exponent(&self, j: usize) -> f64 {
        self.m + 1.0 - self.k() * j as f64
    }

    pub fn q(&self, x: C64) -> C64 {
        (0..=self.s_trunc).map(|j| self.coeffs[j] * x.powf(self.m - self.k() * j as f64)).sum()
    }

    /// `p^{1/h}` on the branch asymptotic to `x^M`; valid for `|E| < |x|^{M h}`.
    pub fn qhat(&self, x: C64) -> C64 {
        let z = self.energy * x.powf(-self.k());
        x.powf(self.m) * (c(1.0) - z).powf(1.0 / self.h_dual as f64)
    }

    /// `x q'/q` for `qhat`.
    pub fn log_derivative(&self, x: C64) -> C64 {
        let z = self.energy * x.powf(-self.k());
        c(self.m) / (c(1.0) - z)
    }

    /// `qhat - q` from the tail of the binomial series.
    pub fn qdiff(&self, x: C64) -> C64 {
        self.series_tail(x, |_, xe| xe * x.inv())
    }

    /// `int_x^infinity (qhat - q) dy`.
    pub fn tail(&self, x: C64) -> C64 {
        self.series_tail(x, |e, xe| -xe / e)
    }

    fn series_tail(&self, x: C64, f: impl Fn(f64, C64) -> C64) -> C64 {
        let mut sum = ZERO;
        for j in self.s_trunc + 1..400 {
            let e = self.exponent(j);
            let term = f(e, self.coefficient(j) * x.powf(e));
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() || term.norm() < 1e-300 {
                break;
            }
        }
        sum
    }

    /// `S(x,E)`, with the logarithmic term when `(M+1)/(h M)` is an integer.
    pub fn action(&self, x: C64) -> Result<C64> {
        if on_cut(x) {
            return Err(OdeimError::InvalidArgument(format!("x = {} lies on the cut", x)));
        }
        let mut s = ZERO;
        for j in 0..=self.s_trunc {
            let e = self.exponent(j);
            if self.log_case && j == self.s_trunc {
                s += self.coeffs[j] * x.ln();
            } else {
                s += self.coeffs[j] * x.powf(e) / e;
            }
        }
        Ok(s)
    }
}

/// Tolerances and radii for the subdominant solution.
#[derive(Clone, Debug, Serialize)]
pub struct OdeConfig {
    pub rtol: f64,
    /// Starting radius of the inward integration (automatic if None).
    pub x_far: Option<f64>,
    /// Radau steps per unit of `log x`.
    pub steps_per_unit: usize,
    /// Radius where the gauge is undone (automatic if None).
    pub x_match: Option<f64>,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { rtol: 1e-12, x_far: None, steps_per_unit: 24, x_match: None }
    }
}

/// The connection in a fixed representation, with the data of its maximal eigenvalue.
#[derive(Clone, Debug)]
pub struct Connection {
    pub rep: MatrixRep,
    pub wkb: Wkb,
    /// Diagonal of `l`.
    pub ell: Vec<C64>,
    e_fin: CMat,
    e0: CMat,
    pub lambda: f64,
    pub psi: Vec<C64>,
    /// Eigenvalues of `Lambda` minus `lambda`, exactly zero at `top`.
    shifts: Vec<C64>,
    /// Eigenvectors of `Lambda`, with column `top` equal to `psi`.
    eigvecs: CMat,
    ell_t: CMat,
    grading_t: CMat,
    top: usize,
}

impl Connection {
    /// `ell_coeffs[i]` multiplies `h_{i+1}`.
    pub fn new(rep: &MatrixRep, m: f64, energy: C64, ell_coeffs: &[C64]) -> Result<Self> {
        let n = rep.rank();
        if ell_coeffs.len() != n {
            return Err(OdeimError::InvalidArgument(format!("expected {} coefficients of l, got {}", n, ell_coeffs.len())));
        }
        let mut ell = vec![ZERO; rep.dim()];
        for (i, &li) in ell_coeffs.iter().enumerate() {
            let hm = &rep.h[i + 1];
            if !linalg::is_diagonal(hm, 1e-13) {
                return Err(OdeimError::InvalidArgument("Cartan generators must be diagonal".into()));
            }
            for (j, v) in ell.iter_mut().enumerate() {
                *v += li * hm[(j, j)];
            }
        }
        let lam = rep.lambda();
        let me = maximal_eigenvector_of(&lam)?;
        let (eigvals, eigvecs) = linalg::eig(&lam)?;
        let top = (0..eigvals.len())
            .min_by(|&a, &b| (eigvals[a] - me.value).norm().partial_cmp(&(eigvals[b] - me.value).norm()).unwrap())
            .unwrap();
        let mut eigvecs = eigvecs;
        for (r, v) in me.vector.iter().enumerate() {
            eigvecs[(r, top)] = *v;
        }
        let eiginv = linalg::inverse(&eigvecs);
        let mut shifts: Vec<C64> = eigvals.iter().map(|v| v - me.value).collect();
        shifts[top] = ZERO;
        let ell_t = &eiginv * &linalg::diag(&ell) * &eigvecs;
        let gd: Vec<C64> = rep.grading.iter().map(|&g| c(g)).collect();
        let grading_t = &eiginv * &linalg::diag(&gd) * &eigvecs;
        Ok(Connection {
            rep: rep.clone(),
            wkb: Wkb::new(m, rep.h_dual, energy)?,
            ell,
            e_fin: rep.e_finite(),
            e0: rep.e[0].clone(),
            lambda: me.value,
            psi: me.vector,
            shifts,
            eigvecs,
            ell_t,
            grading_t,
            top,
        })
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn m(&self) -> f64 {
        self.wkb.m
    }

    pub fn energy(&self) -> C64 {
        self.wkb.energy
    }

    pub fn h_dual(&self) -> i64 {
        self.wkb.h_dual
    }

    pub fn at_energy(&self, energy: C64) -> Self {
        let mut out = self.clone();
        out.wkb = Wkb::new(self.wkb.m, self.wkb.h_dual, energy).expect("validated");
        out
    }

    pub fn p(&self, x: C64) -> C64 {
        if x == ZERO {
            return -self.wkb.energy;
        }
        x.powf(self.wkb.k()) - self.wkb.energy
    }

    /// `l/x + e + p e_0`.
    pub fn coefficient_matrix(&self, x: C64) -> CMat {
        let p = self.p(x);
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| {
            let diag = if i == j && self.ell[i] != ZERO { self.ell[i] / x } else { ZERO };
            diag + self.e_fin[(i, j)] + p * self.e0[(i, j)]
        })
    }

    /// `Psi'` from the equation.
    pub fn rhs(&self, x: C64, psi: &[C64]) -> Vec<C64> {
        let p = self.p(x);
        let mut out = linalg::matvec(&self.e_fin, psi);
        let b = linalg::matvec(&self.e0, psi);
        for j in 0..out.len() {
            out[j] = -(out[j] + p * b[j]);
            if self.ell[j] != ZERO {
                out[j] -= self.ell[j] / x * psi[j];
            }
        }
        out
    }

    /// Default matching radius: `x^{M h} >= 10 |E|`, at least 2.
    pub fn matching_radius(&self, cfg: &OdeConfig) -> f64 {
        let auto = (10.0 * self.wkb.energy.norm()).powf(1.0 / self.wkb.k()).max(2.0);
        cfg.x_match.map_or(auto, |x| x.max(auto))
    }

    fn far_radius(&self, x_stop: f64, cfg: &OdeConfig) -> f64 {
        let auto = 10f64.powf(12.0 / (1.0 + self.wkb.m)).max(1e3 * x_stop);
        cfg.x_far.unwrap_or(auto).max(2.0 * x_stop)
    }

    /// Generator of the gauge equation in `t = log x`, in eigencoordinates of `Lambda`.
    fn gauge_matrix(&self, t: f64) -> CMat {
        let x = c(t.exp());
        let qh = self.wkb.qhat(x);
        let drift = x * self.lambda * self.wkb.qdiff(x);
        let kappa = self.wkb.log_derivative(x);
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| {
            let mut v = self.ell_t[(i, j)] - kappa * self.grading_t[(i, j)];
            if i == j {
                v += x * qh * self.shifts[i] + drift;
            }
            -v
        })
    }

    /// Slow-manifold value of the eigencoordinates at `x`, normalised to `u -> psi`.
    fn gauge_initial(&self, x: f64) -> Vec<C64> {
        let xc = c(x);
        let qh = self.wkb.qhat(xc);
        let kappa = self.wkb.log_derivative(xc);
        let drift = xc * self.lambda * self.wkb.qdiff(xc);
        let d = self.dim();
        let mut z = vec![ZERO; d];
        z[self.top] = c(1.0);
        for _ in 0..4 {
            let mut next = vec![ZERO; d];
            next[self.top] = c(1.0);
            for i in (0..d).filter(|&i| i != self.top) {
                let mut acc = ZERO;
                for j in 0..d {
                    acc += (self.ell_t[(i, j)] - kappa * self.grading_t[(i, j)]) * z[j];
                }
                // z_i ~ 1/(x q) moves like x^{-1-M} in t
                let den = xc * qh * self.shifts[i] + drift - c(1.0) - kappa;
                next[i] = -acc / den;
            }
            z = next;
        }
        let amp = (self.lambda * self.wkb.tail(xc)).exp();
        z.iter().map(|v| v * amp).collect()
    }

    /// Subdominant solution at real `x_stop >= matching radius`, via the gauge.
    fn outer(&self, x_stop: f64, cfg: &OdeConfig) -> Result<(Vec<C64>, usize)> {
        let x_far = self.far_radius(x_stop, cfg);
        let t0 = x_far.ln();
        let t1 = x_stop.ln();
        let steps = (((t0 - t1) * cfg.steps_per_unit as f64).ceil() as usize).max(4);
        let h = (t1 - t0) / steps as f64;
        let mut z = self.gauge_initial(x_far);
        let mut t = t0;
        for _ in 0..steps {
            z = radau_step(|s| self.gauge_matrix(s), t, h, &z)?;
            t += h;
        }
        let u = linalg::matvec(&self.eigvecs, &z);
        let xs = c(x_stop);
        let qh = self.wkb.qhat(xs);
        let s = self.wkb.action(xs)?;
        let pre = (-self.lambda * s).exp();
        let psi = (0..self.dim()).map(|j| pre * qh.powf(-self.rep.grading[j]) * u[j]).collect();
        Ok((psi, steps))
    }

    /// The subdominant solution along the default path to `x`.
    pub fn subdominant(&self, x: C64, cfg: &OdeConfig) -> Result<SolutionTrajectory> {
        if on_cut(x) {
            return Err(OdeimError::InvalidArgument(format!("x = {} lies on the cut", x)));
        }
        let r = x.norm();
        let arg = x.arg();
        let x_m = self.matching_radius(cfg);
        let x_stop = x_m.max(r);
        let (mut psi, outer_steps) = self.outer(x_stop, cfg)?;
        let mut path = vec![c(x_stop)];
        let mut values = vec![psi.clone()];
        let mut stats = StepStats::default();
        if r < x_stop {
            let (y, st) = dopri5(
                |xr, y| self.rhs(c(xr), y),
                x_stop,
                r,
                &psi,
                cfg.rtol,
            )?;
            psi = y;
            stats.add(&st);
            path.push(c(r));
            values.push(psi.clone());
        }
        if arg != 0.0 {
            let (y, st) = dopri5(
                |th, y| {
                    let xc = C64::from_polar(r, th);
                    let d = self.rhs(xc, y);
                    let fac = linalg::I * xc;
                    d.into_iter().map(|z| z * fac).collect()
                },
                0.0,
                arg,
                &psi,
                cfg.rtol,
            )?;
            psi = y;
            stats.add(&st);
            path.push(x);
            values.push(psi.clone());
        }
        Ok(SolutionTrajectory {
            path,
            values,
            energy: self.energy(),
            rep: self.rep.name.clone(),
            outer_steps,
            accepted: stats.accepted,
            rejected: stats.rejected,
            max_error: stats.max_error,
        })
    }

    pub fn psi(&self, x: C64, cfg: &OdeConfig) -> Result<Vec<C64>> {
        Ok(self.subdominant(x, cfg)?.values.pop().unwrap())
    }

    /// Continue a known solution value `y` at `x_from` to `x_to` along a straight segment.
    pub fn transport(&self, x_from: C64, x_to: C64, y: &[C64], rtol: f64) -> Result<Vec<C64>> {
        let dx = x_to - x_from;
        let (v, _) = dopri5(
            |s, y| {
                let xc = x_from + dx * s;
                self.rhs(xc, y).into_iter().map(|z| z * dx).collect()
            },
            0.0,
            1.0,
            y,
            rtol,
        )?;
        Ok(v)
    }

    /// `omega^{-k h} Psi(omega^k x, Omega^k E)`, a solution in `V_k`.
    pub fn rotated(&self, k: f64, x: C64, cfg: &OdeConfig) -> Result<Vec<C64>> {
        let h = self.h_dual() as f64;
        let m = self.m();
        if k.abs() >= h * (m + 1.0) / 2.0 {
            return Err(OdeimError::InvalidArgument(format!("rotation index {} out of range", k)));
        }
        let log_omega = TAU / (h * (m + 1.0));
        let xr = x * C64::from_polar(1.0, k * log_omega);
        let arg = x.arg() + k * log_omega;
        if arg.abs() >= PI {
            return Err(OdeimError::InvalidArgument("rotated point crosses the cut".into()));
        }
        let xr = C64::from_polar(xr.norm(), arg);
        let er = self.energy() * C64::from_polar(1.0, TAU * m / (m + 1.0) * k);
        let v = self.at_energy(er).psi(xr, cfg)?;
        Ok(v
            .iter()
            .zip(&self.rep.grading)
            .map(|(z, &g)| z * C64::from_polar(1.0, -k * g * log_omega))
            .collect())
    }

    /// Relative residual `|Psi' + (l/x + e + p e_0) Psi| / |Psi|` at `x`, with
    /// `Psi'` from a five-point difference of independently computed values.
    pub fn residual(&self, x: C64, step: f64, cfg: &OdeConfig) -> Result<f64> {
        let dir = if x.arg() == 0.0 { c(1.0) } else { linalg::I * x / x.norm() };
        let pts: Vec<Vec<C64>> = [-2.0, -1.0, 1.0, 2.0]
            .iter()
            .map(|&k| self.psi(x + dir * (k * step), cfg))
            .collect::<Result<_>>()?;
        let y = self.psi(x, cfg)?;
        let d = y.len();
        let mut res = vec![ZERO; d];
        let f = self.rhs(x, &y);
        for j in 0..d {
            let deriv = (pts[0][j] - pts[3][j] + (pts[2][j] - pts[1][j]) * 8.0) / (dir * (12.0 * step));
            res[j] = deriv - f[j];
        }
        Ok(norm(&res) / norm(&y))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionTrajectory {
    pub path: Vec<C64>,
    pub values: Vec<Vec<C64>>,
    pub energy: C64,
    pub rep: String,
    pub outer_steps: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub max_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_error: f64,
}

impl StepStats {
    fn add(&mut self, o: &StepStats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.max_error = self.max_error.max(o.max_error);
    }
}

const SQ6: f64 = 2.449_489_742_783_178;

/// One step of the 3-stage Radau IIA method for `y' = A(t) y`.
fn radau_step(a: impl Fn(f64) -> CMat, t: f64, h: f64, y: &[C64]) -> Result<Vec<C64>> {
    let cs = [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0];
    let coef = [
        [(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0],
        [(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0],
        [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
    ];
    let d = y.len();
    let mats: Vec<CMat> = cs.iter().map(|&ci| a(t + ci * h)).collect();
    let mut big = linalg::zeros(3 * d, 3 * d);
    for i in 0..3 {
        for j in 0..3 {
            let s = c(-h * coef[i][j]);
            for r in 0..d {
                for q in 0..d {
                    big[(i * d + r, j * d + q)] = s * mats[j][(r, q)];
                }
            }
        }
        for r in 0..d {
            big[(i * d + r, i * d + r)] += c(1.0);
        }
    }
    let rhs = CMat::from_fn(3 * d, 1, |r, _| y[r % d]);
    let sol = linalg::solve(&big, &rhs);
    let out: Vec<C64> = (0..d).map(|r| sol[(2 * d + r, 0)]).collect();
    if out.iter().any(|z| !z.is_finite()) {
        return Err(OdeimError::Numerical("non-finite value in the outer integration".into()));
    }
    Ok(out)
}

/// Adaptive Dormand-Prince 5(4) on the real parameter interval `[t0, t1]`,
/// with norm-wise relative error control.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &[C64], rtol: f64) -> Result<(Vec<C64>, StepStats)>
where
    F: FnMut(f64, &[C64]) -> Vec<C64>,
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const CS: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    let span = t1 - t0;
    let mut stats = StepStats::default();
    if span == 0.0 {
        return Ok((y0.to_vec(), stats));
    }
    let dirn = span.signum();
    let d = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = span / 64.0;
    let mut k1 = f(t, &y);
    let max_steps = 2_000_000;
    while (t1 - t) * dirn > 0.0 {
        if stats.accepted + stats.rejected > max_steps {
            return Err(OdeimError::Numerical(format!("step budget exhausted at t = {}", t)));
        }
        if (t + h - t1) * dirn > 0.0 {
            h = t1 - t;
        }
        let mut ks = vec![k1.clone()];
        for s in 0..6 {
            let mut yt = y.clone();
            for (q, kq) in ks.iter().enumerate() {
                let a = A[s][q];
                if a != 0.0 {
                    linalg::axpy(c(a * h), kq, &mut yt);
                }
            }
            ks.push(f(t + CS[s + 1] * h, &yt));
        }
        let mut ynew = y.clone();
        for (q, kq) in ks.iter().take(6).enumerate() {
            let a = A[5][q];
            if a != 0.0 {
                linalg::axpy(c(a * h), kq, &mut ynew);
            }
        }
        let mut err = vec![ZERO; d];
        for (q, kq) in ks.iter().enumerate() {
            linalg::axpy(c(E[q] * h), kq, &mut err);
        }
        let scale = rtol * norm(&y).max(norm(&ynew)) + 1e-300;
        let en = norm(&err) / scale;
        if !en.is_finite() {
            return Err(OdeimError::Numerical("non-finite value in the inner integration".into()));
        }
        if en <= 1.0 {
            t += h;
            y = ynew;
            k1 = ks.pop().unwrap();
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(en * rtol);
        } else {
            stats.rejected += 1;
        }
        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h.abs() < 1e-14 * span.abs() {
            return Err(OdeimError::Numerical(format!("step size collapse at t = {}", t)));
        }
    }
    Ok((y, stats))
}

/// Frobenius series solutions `x^{-a_j} sum_m c_m x^m` at the origin, one per
/// basis vector, when `M h` is a positive integer.
#[derive(Clone, Debug)]
pub struct FrobeniusBasis {
    pub exponents: Vec<C64>,
    /// `coeffs[j][m]` is the m-th vector coefficient of column j.
    pub coeffs: Vec<Vec<Vec<C64>>>,
    pub x0: f64,
    pub order: usize,
    /// Size of the last retained terms at `x0`, relative to the column.
    pub tail: f64,
}

pub const RESONANCE_TOL: f64 = 1e-6;

/// Smallest distance of a nonzero integer from a difference of distinct exponents.
pub fn resonance_gap(ell: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for a in ell {
        for b in ell {
            let d = a - b;
            if d.norm() < 1e-9 {
                continue;
            }
            let k = d.re.round();
            if k != 0.0 {
                gap = gap.min((d - c(k)).norm());
            }
        }
    }
    gap
}

impl FrobeniusBasis {
    pub fn new(conn: &Connection, order: usize, x0: f64) -> Result<Self> {
        let kf = conn.wkb.k();
        let k = kf.round();
        if (kf - k).abs() > 1e-12 || k < 1.0 {
            return Err(OdeimError::InvalidArgument("Frobenius bases need M h to be a positive integer".into()));
        }
        let k = k as usize;
        if conn.ell.iter().all(|z| z.norm() < 1e-12) {
            return Err(OdeimError::InvalidArgument("l = 0 is resonant".into()));
        }
        let gap = resonance_gap(&conn.ell);
        if gap < RESONANCE_TOL {
            return Err(OdeimError::InvalidArgument(format!("resonant exponents (distance {:.2e})", gap)));
        }
        let d = conn.dim();
        let energy = conn.energy();
        let shifted = CMat::from_fn(d, d, |i, j| conn.e_fin[(i, j)] - energy * conn.e0[(i, j)]);
        let mut coeffs = Vec::with_capacity(d);
        for j in 0..d {
            let a = conn.ell[j];
            let mut cs: Vec<Vec<C64>> = Vec::with_capacity(order + 1);
            let mut c0 = vec![ZERO; d];
            c0[j] = c(1.0);
            cs.push(c0);
            for m in 1..=order {
                let mut r = linalg::matvec(&shifted, &cs[m - 1]);
                if m > k {
                    let b = linalg::matvec(&conn.e0, &cs[m - 1 - k]);
                    linalg::axpy(c(1.0), &b, &mut r);
                }
                for (q, rq) in r.iter_mut().enumerate() {
                    let den = conn.ell[q] - a + c(m as f64);
                    *rq = -*rq / den;
                }
                cs.push(r);
            }
            coeffs.push(cs);
        }
        let mut fb = FrobeniusBasis { exponents: conn.ell.clone(), coeffs, x0, order, tail: 0.0 };
        fb.tail = fb.tail_at(x0);
        Ok(fb)
    }

    /// Increase the order until the tail at `x0` is below `tol`.
    pub fn converged(conn: &Connection, x0: f64, tol: f64) -> Result<Self> {
        let mut order = 60;
        loop {
            let fb = Self::new(conn, order, x0)?;
            if fb.tail < tol {
                return Ok(fb);
            }
            if order >= 1200 {
                return Err(OdeimError::Numerical(format!(
                    "Frobenius series not converged at x0 = {} (tail {:.2e})",
                    x0, fb.tail
                )));
            }
            order *= 2;
        }
    }

    pub fn tail_at(&self, x: f64) -> f64 {
        let mut worst = 0.0f64;
        for col in &self.coeffs {
            let mut total = 0.0f64;
            for (m, cm) in col.iter().enumerate() {
                total = total.max(norm(cm) * x.powi(m as i32));
            }
            let n = col.len();
            let last = (n.saturating_sub(3)..n).map(|m| norm(&col[m]) * x.powi(m as i32)).fold(0.0, f64::max);
            worst = worst.max(last / total.max(1e-300));
        }
        worst
    }

    /// Fundamental matrix at `x` (columns are the series solutions).
    pub fn eval(&self, x: C64) -> CMat {
        let d = self.exponents.len();
        let mut f = linalg::zeros(d, d);
        for j in 0..d {
            let col = self.series(j, x);
            let pre = x.powc(-self.exponents[j]);
            for i in 0..d {
                f[(i, j)] = pre * col[i];
            }
        }
        f
    }

    fn series(&self, j: usize, x: C64) -> Vec<C64> {
        let d = self.exponents.len();
        let mut acc = vec![ZERO; d];
        for cm in self.coeffs[j].iter().rev() {
            for i in 0..d {
                acc[i] = acc[i] * x + cm[i];
            }
        }
        acc
    }

    /// Derivative of the fundamental matrix at `x`.
    pub fn eval_derivative(&self, x: C64) -> CMat {
        let d = self.exponents.len();
        let mut f = linalg::zeros(d, d);
        for j in 0..d {
            let a = self.exponents[j];
            for (m, cm) in self.coeffs[j].iter().enumerate() {
                let w = (c(m as f64) - a) * x.powc(c(m as f64) - a - c(1.0));
                for i in 0..d {
                    f[(i, j)] += w * cm[i];
                }
            }
        }
        f
    }
}

/// Default Frobenius matching radius, shrinking like `|E|^{-1/h}` for large `|E|`.
pub fn default_match_point(energy: C64, h_dual: i64) -> f64 {
    0.5 / energy.norm().max(1.0).powf(1.0 / h_dual as f64)
}

/// Coefficients of the expansion of the subdominant solution in the Frobenius basis.
#[derive(Clone, Debug, Serialize)]
pub struct QSample {
    pub energy: C64,
    pub q: C64,
    pub q_tilde: C64,
    /// Condition number of the matching solve.
    pub condition: f64,
    pub x0: f64,
}

/// Indices of the largest and second largest real part among the exponents.
pub fn leading_exponents(ell: &[C64]) -> Result<(usize, usize)> {
    let mut idx: Vec<usize> = (0..ell.len()).collect();
    idx.sort_by(|&a, &b| ell[b].re.partial_cmp(&ell[a].re).unwrap());
    if idx.len() < 2 {
        return Err(OdeimError::InvalidArgument("representation too small".into()));
    }
    let sep = |a: usize, b: usize| (ell[a].re - ell[b].re).abs() > 1e-9;
    if !sep(idx[0], idx[1]) || (idx.len() > 2 && !sep(idx[1], idx[2])) {
        return Err(OdeimError::InvalidArgument("leading exponents are not simple".into()));
    }
    Ok((idx[0], idx[1]))
}

/// All expansion coefficients of `Psi(x0)` in the Frobenius basis, with the condition number.
pub fn frobenius_coefficients(conn: &Connection, fb: &FrobeniusBasis, cfg: &OdeConfig) -> Result<(Vec<C64>, f64)> {
    let x0 = c(fb.x0);
    let psi = conn.psi(x0, cfg)?;
    let mut f = fb.eval(x0);
    // column equilibration: the columns differ by powers of x0
    let d = f.ncols();
    let scales: Vec<f64> = (0..d).map(|j| (0..d).map(|i| f[(i, j)].norm_sqr()).sum::<f64>().sqrt()).collect();
    for j in 0..d {
        for i in 0..d {
            f[(i, j)] /= scales[j];
        }
    }
    let (s, _) = linalg::svd(&f)?;
    let cond = s[0] / s.last().copied().unwrap_or(0.0).max(1e-300);
    if cond > 1e10 {
        return Err(OdeimError::Numerical(format!("ill-conditioned matching at x0 = {} (cond {:.2e})", fb.x0, cond)));
    }
    let y = linalg::solve_vec(&f, &psi);
    Ok(((0..d).map(|j| y[j] / scales[j]).collect(), cond))
}

/// `Q` and `Q~` as the coefficients of the columns `chi` and `phi`, with `phi`
/// divided by `phi_scale` (the leading vector of `phi` is `phi_scale` times a basis vector).
pub fn extract_q(
    conn: &Connection,
    fb: &FrobeniusBasis,
    chi: usize,
    phi: usize,
    phi_scale: C64,
    cfg: &OdeConfig,
) -> Result<QSample> {
    let (cs, cond) = frobenius_coefficients(conn, fb, cfg)?;
    Ok(QSample { energy: conn.energy(), q: cs[chi], q_tilde: cs[phi] / phi_scale, condition: cond, x0: fb.x0 })
}

/// Both sides of the Psi-system at `(x, E)` against the algebraic constant.
#[derive(Clone, Debug, Serialize)]
pub struct NumericPsiCheck {
    pub node: usize,
    pub x: C64,
    pub energy: C64,
    /// `lhs / rhs` fitted numerically.
    pub ratio: C64,
    /// Constant of the algebraic identity.
    pub beta: C64,
    /// `|lhs - beta rhs| / |lhs|`.
    pub residual: f64,
}

/// `m_i(R_i Psi^(i)_{-D_i/2} ^ Psi^(i)_{D_i/2}) = beta (x)_j (x)_l Psi^(j)_{shift}`.
pub fn verify_numeric_psi(
    alg: &AffineAlgebra,
    morph: &PsiMorphism,
    beta: C64,
    m: f64,
    ell: &[C64],
    x: C64,
    energy: C64,
    cfg: &OdeConfig,
) -> Result<NumericPsiCheck> {
    let i = morph.node - 1;
    let d = q_to_f64(alg.fold.d[i]);
    let vi = alg.fundamental_rep(i)?;
    let ci = Connection::new(&vi, m, energy, ell)?;
    let minus = linalg::matvec(&morph.r, &ci.rotated(-d / 2.0, x, cfg)?);
    let plus = ci.rotated(d / 2.0, x, cfg)?;
    let lhs = linalg::matvec(&morph.m, &wedge2_vectors(&minus, &plus));
    let mut rhs = vec![c(1.0)];
    for &(j, s) in &morph.factors {
        let vj = alg.fundamental_rep(j)?;
        let cj = Connection::new(&vj, m, energy, ell)?;
        rhs = tensor_vectors(&rhs, &cj.rotated(s, x, cfg)?);
    }
    let (ratio, _) = crate::intertwiners::proportionality(&lhs, &rhs);
    let mut diff = lhs.clone();
    linalg::axpy(-beta, &rhs, &mut diff);
    Ok(NumericPsiCheck { node: morph.node, x, energy, ratio, beta, residual: norm(&diff) / norm(&lhs).max(1e-300) })
}
