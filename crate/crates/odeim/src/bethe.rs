//! Spectral determinants `Q^(i)`, `Q~^(i)`, their bilinear relations, Bethe
//! equations at the zeros, and the Weyl group action on the solutions.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OdeimError, Result};
use crate::intertwiners::{morphism_m, psi_vectors, verify_algebraic_psi};
use crate::liealg::q_to_f64;
use crate::linalg::{self, c, C64, I};
use crate::odeflow::{default_match_point, frobenius_coefficients, Connection, FrobeniusBasis, OdeConfig};
use crate::repmatrix::{tensor_vectors, wedge2_vectors, AffineAlgebra};

pub const WEIGHT_TOL: f64 = 1e-9;
pub const REGULAR_TOL: f64 = 1e-6;
pub const GENERIC_TOL: f64 = 1e-4;

/// `Omega^a = e^{2 pi i M a / (M+1)}` for complex `a`.
pub fn big_omega_pow(m: f64, a: C64) -> C64 {
    (linalg::I * (TAU * m / (m + 1.0)) * a).exp()
}

/// `omega^a = e^{2 pi i a / (h (M+1))}`.
pub fn omega_pow(m: f64, h_dual: i64, a: C64) -> C64 {
    (linalg::I * (TAU / (h_dual as f64 * (m + 1.0))) * a).exp()
}

/// `alpha_k(l)` for every simple root, with `l = sum_j l_j h_j`.
pub fn simple_root_values(alg: &AffineAlgebra, ell: &[C64]) -> Vec<C64> {
    let a = alg.chevalley_matrix();
    let n = alg.rank();
    (0..n).map(|k| (0..n).map(|j| ell[j] * a[j + 1][k + 1] as f64).sum()).collect()
}

/// `s_k` acting on `l`.
pub fn reflect_ell(alg: &AffineAlgebra, ell: &[C64], k: usize) -> Vec<C64> {
    let ak = simple_root_values(alg, ell)[k];
    let mut out = ell.to_vec();
    out[k] -= ak;
    out
}

/// `s_k` acting on a weight given by its values on `h_1..h_n`.
pub fn reflect_weight(alg: &AffineAlgebra, mu: &[f64], k: usize) -> Vec<f64> {
    let a = alg.chevalley_matrix();
    (0..mu.len()).map(|j| mu[j] - mu[k] * a[j + 1][k + 1] as f64).collect()
}

/// Apply the word `s_{w_0} s_{w_1} ...` to a weight (rightmost letter first).
pub fn weyl_action(alg: &AffineAlgebra, word: &[usize], mu: &[f64]) -> Vec<f64> {
    word.iter().rev().fold(mu.to_vec(), |acc, &k| reflect_weight(alg, &acc, k))
}

/// The word `w_l` mapping the fundamental chamber onto the chamber of `l`, by the
/// greedy dominance algorithm. Errors if `l` is not regular.
pub fn weyl_chamber(alg: &AffineAlgebra, ell: &[C64]) -> Result<Vec<usize>> {
    let mut cur = ell.to_vec();
    let mut word = Vec::new();
    for _ in 0..10_000 {
        let vals = simple_root_values(alg, &cur);
        match (0..vals.len()).find(|&k| vals[k].re < 0.0) {
            Some(k) => {
                cur = reflect_ell(alg, &cur, k);
                word.push(k);
            }
            None => {
                if vals.iter().any(|v| v.re.abs() < REGULAR_TOL) {
                    return Err(OdeimError::InvalidArgument("l is not regular".into()));
                }
                return Ok(word);
            }
        }
    }
    Err(OdeimError::Numerical("chamber search did not terminate".into()))
}

/// Index of the unique basis vector with the given weight.
pub fn weight_index(weights: &[Vec<f64>], mu: &[f64]) -> Result<usize> {
    let hits: Vec<usize> = (0..weights.len())
        .filter(|&j| weights[j].iter().zip(mu).all(|(a, b)| (a - b).abs() < WEIGHT_TOL))
        .collect();
    match hits.as_slice() {
        [j] => Ok(*j),
        [] => Err(OdeimError::InvalidArgument(format!("weight {:?} does not occur", mu))),
        _ => Err(OdeimError::InvalidArgument(format!("weight {:?} is degenerate", mu))),
    }
}

/// Distance of `l` from resonance in `V^(i)`: smallest |difference - k| over distinct exponents.
pub fn genericity(alg: &AffineAlgebra, ell: &[C64]) -> Result<f64> {
    let mut gap = f64::INFINITY;
    for i in 0..alg.rank() {
        let v = match alg.fundamental_rep(i) {
            Ok(v) => v,
            Err(OdeimError::Unsupported(_)) => continue,
            Err(e) => return Err(e),
        };
        let conn = Connection::new(&v, 1.0, c(0.0), ell)?;
        gap = gap.min(crate::odeflow::resonance_gap(&conn.ell));
    }
    Ok(gap)
}

/// A seeded generic `l` in the dual fundamental chamber: `alpha_k(l)` has real part
/// in `[0.15, 0.65]` and a small imaginary part.
pub fn random_generic_ell(alg: &AffineAlgebra, rng: &mut impl Rng) -> Result<Vec<C64>> {
    let n = alg.rank();
    let a = alg.chevalley_matrix();
    // alpha_k(l) = sum_j l_j a[j+1][k+1]
    let mat = linalg::CMat::from_fn(n, n, |k, j| c(a[j + 1][k + 1] as f64));
    for _ in 0..1000 {
        let target: Vec<C64> =
            (0..n).map(|_| C64::new(rng.gen_range(0.15..0.65), rng.gen_range(-0.1..0.1))).collect();
        let ell = linalg::solve_vec(&mat, &target);
        if genericity(alg, &ell)? > GENERIC_TOL {
            return Ok(ell);
        }
    }
    Err(OdeimError::Numerical("no generic l found".into()))
}

#[derive(Clone, Debug)]
struct NodeQ {
    conn: Connection,
    chi: usize,
    phi: usize,
    gamma: C64,
    delta: C64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeMorphData {
    /// Constant of the algebraic Psi-system.
    pub beta_psi: C64,
    /// `phi = kappa e_phi` makes `m_i(chi ^ phi)` the tensor of the `chi^(j)`.
    pub kappa: C64,
    pub rho_chi: C64,
    pub rho_phi: C64,
}

/// The data `(alg, M, l, w)` and all derived spectral determinants.
pub struct QSystem {
    pub alg: AffineAlgebra,
    pub m: f64,
    pub ell: Vec<C64>,
    /// Weyl word `w` (0-based letters, rightmost acts first).
    pub word: Vec<usize>,
    /// Word of `w_l`.
    pub chamber: Vec<usize>,
    pub cfg: OdeConfig,
    /// Multipliers applied to `Q^(j)` and `Q~^(j)` (all 1 by default).
    pub q_scale: Vec<C64>,
    pub q_tilde_scale: Vec<C64>,
    nodes: Vec<Option<NodeQ>>,
    morphs: Vec<OnceLock<std::result::Result<NodeMorphData, OdeimError>>>,
}

impl QSystem {
    pub fn new(alg: &AffineAlgebra, m: f64, ell: &[C64], word: &[usize], cfg: OdeConfig) -> Result<Self> {
        let n = alg.rank();
        if ell.len() != n {
            return Err(OdeimError::InvalidArgument(format!("expected {} coefficients of l", n)));
        }
        if word.iter().any(|&k| k >= n) {
            return Err(OdeimError::InvalidArgument("Weyl letter out of range".into()));
        }
        let kf = m * alg.fold.h_dual as f64;
        if (kf - kf.round()).abs() > 1e-12 || kf.round() < 1.0 {
            return Err(OdeimError::InvalidArgument("M h must be a positive integer".into()));
        }
        let chamber = weyl_chamber(alg, ell)?;
        let gap = genericity(alg, ell)?;
        if gap < GENERIC_TOL {
            return Err(OdeimError::InvalidArgument(format!("l is not generic (resonance distance {:.2e})", gap)));
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let v = match alg.fundamental_rep(i) {
                Ok(v) => v,
                Err(OdeimError::Unsupported(_)) => {
                    nodes.push(None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let weights = v.weights();
            let top = &weights[0];
            let fv = linalg::matvec(&v.f[i + 1], &{
                let mut hw = vec![c(0.0); v.dim()];
                hw[0] = c(1.0);
                hw
            });
            let sub = (0..fv.len())
                .max_by(|&a, &b| fv[a].norm().partial_cmp(&fv[b].norm()).unwrap())
                .unwrap();
            let lower = &weights[sub];
            let target_chi = weyl_action(alg, &chamber, &weyl_action(alg, word, top));
            let target_phi = weyl_action(alg, &chamber, &weyl_action(alg, word, lower));
            let chi = weight_index(&weights, &target_chi)?;
            let phi = weight_index(&weights, &target_phi)?;
            let conn = Connection::new(&v, m, c(0.0), ell)?;
            let gamma = conn.ell[chi] + v.grading[chi];
            let delta = conn.ell[phi] + v.grading[phi];
            nodes.push(Some(NodeQ { conn, chi, phi, gamma, delta }));
        }
        Ok(QSystem {
            alg: alg.clone(),
            m,
            ell: ell.to_vec(),
            word: word.to_vec(),
            chamber,
            cfg,
            q_scale: vec![c(1.0); n],
            q_tilde_scale: vec![c(1.0); n],
            nodes,
            morphs: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.alg.rank()
    }

    fn node(&self, i: usize) -> Result<&NodeQ> {
        self.nodes
            .get(i)
            .and_then(|x| x.as_ref())
            .ok_or_else(|| OdeimError::Unsupported(format!("node {} has no constructed representation", i + 1)))
    }

    /// Basis indices of `chi^(i)` and `phi^(i)`.
    pub fn directions(&self, i: usize) -> Result<(usize, usize)> {
        let nd = self.node(i)?;
        Ok((nd.chi, nd.phi))
    }

    /// `beta_j = w_l(w(omega_j))(l + h)`.
    pub fn beta(&self) -> Result<Vec<C64>> {
        (0..self.rank()).map(|j| Ok(self.node(j)?.gamma)).collect()
    }

    /// `beta_j / (M h)`.
    pub fn beta_bar(&self) -> Result<Vec<C64>> {
        let k = self.m * self.alg.fold.h_dual as f64;
        Ok(self.beta()?.into_iter().map(|b| b / k).collect())
    }

    /// `theta_i = w_l(w(alpha_i))(l + h)`.
    pub fn theta(&self, i: usize) -> Result<C64> {
        let nd = self.node(i)?;
        Ok(nd.gamma - nd.delta)
    }

    /// `max_i |D_i theta_i - sum_j Cbar_ij beta_j|`.
    pub fn lemma_residual(&self) -> Result<f64> {
        let cbar = self.alg.fold.sym_cartan();
        let beta = self.beta()?;
        let mut worst = 0.0f64;
        for i in 0..self.rank() {
            let lhs = self.theta(i)? * q_to_f64(self.alg.fold.d[i]);
            let rhs: C64 = (0..self.rank()).map(|j| beta[j] * q_to_f64(cbar[i][j])).sum();
            worst = worst.max((lhs - rhs).norm());
        }
        Ok(worst)
    }

    fn coefficients(&self, j: usize, energy: C64) -> Result<(Vec<C64>, f64)> {
        let nd = self.node(j)?;
        let conn = nd.conn.at_energy(energy);
        let x0 = default_match_point(energy, self.alg.fold.h_dual);
        let fb = FrobeniusBasis::converged(&conn, x0, 1e-15)?;
        frobenius_coefficients(&conn, &fb, &self.cfg)
    }

    /// `Q^(j)(E)`.
    pub fn q(&self, j: usize, energy: C64) -> Result<C64> {
        let chi = self.node(j)?.chi;
        Ok(self.coefficients(j, energy)?.0[chi] * self.q_scale[j])
    }

    /// Rescale `chi^(j) -> c_j chi^(j)` and `phi^(i)` so that the morphism identity still holds.
    pub fn rescale_chi(&mut self, cs: &[C64]) {
        let b = self.alg.fold.incidence();
        for i in 0..self.rank() {
            self.q_scale[i] /= cs[i];
            let mut t = cs[i];
            for j in 0..self.rank() {
                t /= cs[j].powi(b[i][j].max(0) as i32);
            }
            self.q_tilde_scale[i] *= t;
        }
    }

    /// `(Q^(i)(E), Q~^(i)(E))`.
    pub fn q_pair(&self, i: usize, energy: C64) -> Result<(C64, C64)> {
        let nd = self.node(i)?;
        let md = self.morph(i)?;
        let (cs, _) = self.coefficients(i, energy)?;
        Ok((cs[nd.chi] * self.q_scale[i], cs[nd.phi] / md.kappa * self.q_tilde_scale[i]))
    }

    /// Normalisation data from the morphism `m_i`.
    pub fn morph(&self, i: usize) -> Result<NodeMorphData> {
        self.morphs[i].get_or_init(|| self.compute_morph(i)).clone()
    }

    fn compute_morph(&self, i: usize) -> Result<NodeMorphData> {
        let nd = self.node(i)?;
        let mo = morphism_m(&self.alg, i)?;
        let pv = psi_vectors(&self.alg)?;
        let beta_psi = verify_algebraic_psi(&self.alg, &mo, &pv)?.beta;
        let d = nd.conn.dim();
        let unit = |k: usize, n: usize| {
            let mut u = vec![c(0.0); n];
            u[k] = c(1.0);
            u
        };
        let img = linalg::matvec(&mo.m, &wedge2_vectors(&unit(nd.chi, d), &unit(nd.phi, d)));
        let mut tgt = vec![c(1.0)];
        for &(j, _) in &mo.factors {
            let nj = self.node(j)?;
            tgt = tensor_vectors(&tgt, &unit(nj.chi, nj.conn.dim()));
        }
        let idx = (0..tgt.len()).find(|&k| tgt[k].norm() > 0.5).unwrap();
        let coef = img[idx];
        if coef.norm() < 1e-10 {
            return Err(OdeimError::Numerical("m_i(chi ^ phi) has no top component".into()));
        }
        Ok(NodeMorphData { beta_psi, kappa: coef.inv(), rho_chi: mo.r[(nd.chi, nd.chi)], rho_phi: mo.r[(nd.phi, nd.phi)] })
    }

    /// `prod_j prod_l Q^(j)(Omega^{(B_ij - 1 - 2l)/(2r) + shift} E)`.
    fn neighbour_product(&self, i: usize, energy: C64, shift: f64) -> Result<C64> {
        let b = self.alg.fold.incidence();
        let r = self.alg.fold.r as f64;
        let mut p = c(1.0);
        for j in 0..self.rank() {
            for l in 0..b[i][j].max(0) {
                let s = (b[i][j] - 1 - 2 * l) as f64 / (2.0 * r) + shift;
                p *= self.q(j, big_omega_pow(self.m, c(s)) * energy)?;
            }
        }
        Ok(p)
    }

    /// Bilinear relation between `Q^(i)` and `Q~^(i)` at `E`.
    pub fn qq_check(&self, i: usize, energy: C64) -> Result<QqCheck> {
        let md = self.morph(i)?;
        let d = q_to_f64(self.alg.fold.d[i]);
        let h = self.alg.fold.h_dual;
        let th = self.theta(i)?;
        let w_plus = omega_pow(self.m, h, th * (d / 2.0));
        let w_minus = w_plus.inv();
        let (qm, qtm) = self.q_pair(i, big_omega_pow(self.m, c(-d / 2.0)) * energy)?;
        let (qp, qtp) = self.q_pair(i, big_omega_pow(self.m, c(d / 2.0)) * energy)?;
        let prod = self.neighbour_product(i, energy, 0.0)?;
        let t1 = md.rho_chi * w_plus * qm * qtp;
        let t2 = md.rho_phi * w_minus * qp * qtm;
        let scale = t1.norm().max(t2.norm()).max((md.beta_psi * prod).norm());
        let residual = (t1 - t2 - md.beta_psi * prod).norm() / scale;
        let p1 = w_plus * qp * qtm;
        let p2 = w_minus * qm * qtp;
        let pscale = p1.norm().max(p2.norm()).max(prod.norm());
        let alt_residual = (prod - (p1 - p2)).norm() / pscale;
        Ok(QqCheck { node: i + 1, energy, product: prod, residual, alt_residual })
    }

    /// `prod_j Omega^{sign Cbar_ij betabar_j} Q^(j)(Omega^{Cbar_ij/2} E) / Q^(j)(Omega^{-Cbar_ij/2} E)`.
    pub fn bae_product(&self, i: usize, zero: C64, sign: f64) -> Result<C64> {
        let cbar = self.alg.fold.sym_cartan();
        let bb = self.beta_bar()?;
        let mut product = c(1.0);
        for j in 0..self.rank() {
            let cij = q_to_f64(cbar[i][j]);
            if cij == 0.0 {
                continue;
            }
            let up = self.q(j, big_omega_pow(self.m, c(cij / 2.0)) * zero)?;
            let down = self.q(j, big_omega_pow(self.m, c(-cij / 2.0)) * zero)?;
            product *= big_omega_pow(self.m, bb[j] * (sign * cij)) * up / down;
        }
        Ok(product)
    }

    /// Bethe equation at a zero `E*` of `Q^(i)`.
    pub fn bae_check(&self, i: usize, zero: C64) -> Result<BaeCheck> {
        let d = q_to_f64(self.alg.fold.d[i]);
        let hyp = self.neighbour_product(i, zero, -d / 2.0)?;
        let qz = self.q(i, zero)?;
        let product = self.bae_product(i, zero, -1.0)?;
        let alt = self.bae_product(i, zero, 1.0)?;
        let derived = match self.morph(i) {
            Ok(md) => {
                let th = self.theta(i)?;
                let hyp_plus = self.neighbour_product(i, zero, d / 2.0)?;
                Some(
                    md.rho_phi / md.rho_chi
                        * omega_pow(self.m, self.alg.fold.h_dual, -th * d)
                        * self.q(i, big_omega_pow(self.m, c(d)) * zero)?
                        / self.q(i, big_omega_pow(self.m, c(-d)) * zero)?
                        * hyp
                        / hyp_plus,
                )
            }
            Err(OdeimError::Unsupported(_)) | Err(OdeimError::InvalidArgument(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(BaeCheck {
            node: i + 1,
            zero,
            q_at_zero: qz,
            hypothesis: hyp,
            product,
            residual: (product + c(1.0)).norm(),
            alt_product: alt,
            alt_residual: (alt + c(1.0)).norm(),
            derived_residual: derived.map(|z| (z + c(1.0)).norm()),
            derived_product: derived,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QqCheck {
    pub node: usize,
    pub energy: C64,
    pub product: C64,
    /// `rho_chi w^{D theta/2} Q(W^{-D/2}E) Q~(W^{D/2}E) - rho_phi w^{-D theta/2} Q(W^{D/2}E) Q~(W^{-D/2}E) - beta product`, relative.
    pub residual: f64,
    /// `product - [w^{D theta/2} Q(W^{D/2}E) Q~(W^{-D/2}E) - w^{-D theta/2} Q(W^{-D/2}E) Q~(W^{D/2}E)]`, relative.
    pub alt_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BaeCheck {
    pub node: usize,
    pub zero: C64,
    pub q_at_zero: C64,
    /// Product of neighbouring Q at the shifted zero (must be nonzero).
    pub hypothesis: C64,
    /// Bethe product with phase `Omega^{-Cbar_ij betabar_j}`.
    pub product: C64,
    /// `|product + 1|`.
    pub residual: f64,
    /// Bethe product with phase `Omega^{+Cbar_ij betabar_j}`.
    pub alt_product: C64,
    pub alt_residual: f64,
    /// Ratio of the bilinear relation at `W^{+-D/2} E*`, before rewriting with `Cbar`.
    pub derived_product: Option<C64>,
    pub derived_residual: Option<f64>,
}

/// Zero search region: the disk `|E| < r_max`, split into a central disk of radius
/// `r_min` and log-polar cells.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroRegion {
    pub r_min: f64,
    pub r_max: f64,
    pub n_angle: usize,
    pub per_decade: usize,
}

impl ZeroRegion {
    pub fn disk(r_max: f64) -> Self {
        ZeroRegion { r_min: (r_max * 1e-4).max(0.5).min(r_max / 2.0), r_max, n_angle: 32, per_decade: 8 }
    }

    pub fn refined(&self) -> Self {
        ZeroRegion { n_angle: 2 * self.n_angle, per_decade: 2 * self.per_decade, ..self.clone() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Zero {
    pub energy: C64,
    /// `|f(E*)|` relative to the local scale of `|f|`.
    pub residual: f64,
    pub multiplicity: i64,
    pub newton_steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroSet {
    pub zeros: Vec<Zero>,
    /// Winding number of the outer circle.
    pub boundary_winding: i64,
    /// Sum of cell windings.
    pub cell_winding: i64,
    pub region: ZeroRegion,
}

const ANGLE_OFFSET: f64 = 0.3719;
const MAX_DEPTH: usize = 14;

fn arg_change<F>(f: &F, path: &(dyn Fn(f64) -> C64 + Sync), t0: f64, t1: f64, v0: C64, v1: C64, depth: usize) -> Result<f64>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    // accept an edge only when the chain 0, 1/3, 1/2, 2/3, 1 has small steps that sum to
    // the whole; the uneven split rules out aliasing by a steady rotation
    let d = (v1 / v0).arg();
    let at = |u: f64| f(path(t0 + (t1 - t0) * u));
    let (va, vm, vb) = (at(1.0 / 3.0)?, at(0.5)?, at(2.0 / 3.0)?);
    let chain = [v0, va, vm, vb, v1];
    let steps: Vec<f64> = chain.windows(2).map(|w| (w[1] / w[0]).arg()).collect();
    let sum: f64 = steps.iter().sum();
    if steps.iter().all(|s| s.abs() < PI / 4.0) && (sum - d).abs() < 1e-6 {
        return Ok(d);
    }
    if depth >= MAX_DEPTH {
        return Err(OdeimError::Numerical("argument tracking did not resolve".into()));
    }
    let tm = 0.5 * (t0 + t1);
    Ok(arg_change(f, path, t0, tm, v0, vm, depth + 1)? + arg_change(f, path, tm, t1, vm, v1, depth + 1)?)
}

/// Winding number of `f` around the circle `|E| = r`.
pub fn circle_winding<F>(f: &F, r: f64, samples: usize) -> Result<i64>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let pts: Vec<f64> = (0..=samples).map(|k| -PI + ANGLE_OFFSET + TAU * k as f64 / samples as f64).collect();
    let vals: Vec<C64> = pts.par_iter().map(|&t| f(C64::from_polar(r, t))).collect::<Result<_>>()?;
    let path = move |t: f64| C64::from_polar(r, t);
    let mut total = 0.0;
    for k in 0..samples {
        total += arg_change(f, &path, pts[k], pts[k + 1], vals[k], vals[k + 1], 0)?;
    }
    Ok((total / TAU).round() as i64)
}

/// Smallest radius `8 * 2^k` whose circle encloses at least `count` zeros.
pub fn default_radius<F>(f: &F, count: usize) -> Result<f64>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let mut r = 8.0;
    while r < 1e9 {
        if circle_winding(f, r, 64)? >= count as i64 {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(OdeimError::Numerical(format!("fewer than {} zeros below |E| = 1e9", count)))
}

/// Zeros of an analytic `f` in the region: argument principle on cells, then
/// Newton with a centred difference derivative.
pub fn find_zeros<F>(f: &F, region: &ZeroRegion) -> Result<ZeroSet>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let na = region.n_angle;
    let decades = (region.r_max / region.r_min).log10();
    let nr = ((decades * region.per_decade as f64).ceil() as usize).max(1);
    let radius = |k: usize| region.r_min * (region.r_max / region.r_min).powf(k as f64 / nr as f64);
    let angle = |a: usize| -PI + ANGLE_OFFSET + TAU * a as f64 / na as f64;
    let grid: Vec<(usize, usize)> = (0..=nr).flat_map(|k| (0..na).map(move |a| (k, a))).collect();
    let vals: Vec<C64> = grid.par_iter().map(|&(k, a)| f(C64::from_polar(radius(k), angle(a)))).collect::<Result<_>>()?;
    let val = |k: usize, a: usize| vals[k * na + a % na];
    // arc edges (k, a) -> (k, a+1), radial edges (k, a) -> (k+1, a)
    let arcs: Vec<f64> = grid
        .par_iter()
        .map(|&(k, a)| {
            let r = radius(k);
            let path = move |t: f64| C64::from_polar(r, t);
            arg_change(f, &path, angle(a), angle(a + 1), val(k, a), val(k, a + 1), 0)
        })
        .collect::<Result<_>>()?;
    let radials: Vec<f64> = grid
        .par_iter()
        .filter(|&&(k, _)| k < nr)
        .map(|&(k, a)| {
            let (r0, r1, th) = (radius(k), radius(k + 1), angle(a));
            let path = move |t: f64| C64::from_polar(r0 * (r1 / r0).powf(t), th);
            arg_change(f, &path, 0.0, 1.0, val(k, a), val(k + 1, a), 0)
        })
        .collect::<Result<_>>()?;
    let arc = |k: usize, a: usize| arcs[k * na + a % na];
    let rad = |k: usize, a: usize| radials[k * na + a % na];
    let mut cells: Vec<Cell> = Vec::new();
    let inner: f64 = (0..na).map(|a| arc(0, a)).sum();
    let inner_w = (inner / TAU).round() as i64;
    let mut cell_total = inner_w;
    for k in 0..nr {
        for a in 0..na {
            let w = rad(k, a) + arc(k + 1, a) - rad(k, a + 1) - arc(k, a);
            let wi = (w / TAU).round() as i64;
            if (w / TAU - wi as f64).abs() > 0.05 || wi < 0 {
                return Err(OdeimError::Numerical("inconsistent cell winding".into()));
            }
            cell_total += wi;
            if wi > 0 {
                cells.push(Cell { r0: radius(k), r1: radius(k + 1), t0: angle(a), t1: angle(a + 1), winding: wi });
            }
        }
    }
    let boundary: f64 = (0..na).map(|a| arc(nr, a)).sum();
    let boundary_winding = (boundary / TAU).round() as i64;
    let mut found: Vec<(C64, usize, i64)> = Vec::new();
    if inner_w > 0 {
        let (z, steps) = newton(f, c(0.0))?;
        found.push((z, steps, inner_w));
    }
    let located: Vec<Vec<(C64, usize, i64)>> = cells.par_iter().map(|cell| cell.locate(f, 0)).collect::<Result<_>>()?;
    found.extend(located.into_iter().flatten());
    let mut zeros: Vec<Zero> = found
        .par_iter()
        .map(|&(z, steps, mult)| {
            let fz = f(z)?;
            let h = 1e-3 * z.norm().max(1.0);
            let scale = [f(z + h)?, f(z - h)?, f(z + I * h)?, f(z - I * h)?].iter().map(|v| v.norm()).fold(0.0, f64::max);
            Ok(Zero { energy: z, residual: fz.norm() / scale.max(1e-300), multiplicity: mult, newton_steps: steps })
        })
        .collect::<Result<_>>()?;
    zeros.retain(|z| z.energy.norm() <= region.r_max);
    zeros.sort_by(|a, b| {
        a.energy.re.partial_cmp(&b.energy.re).unwrap().then(a.energy.im.partial_cmp(&b.energy.im).unwrap())
    });
    zeros.dedup_by(|a, b| (a.energy - b.energy).norm() < 1e-8 * b.energy.norm().max(1.0));
    Ok(ZeroSet { zeros, boundary_winding, cell_winding: cell_total, region: region.clone() })
}

/// Log-polar cell `r0 < |E| < r1`, `t0 < arg E < t1`.
#[derive(Clone, Copy, Debug)]
struct Cell {
    r0: f64,
    r1: f64,
    t0: f64,
    t1: f64,
    winding: i64,
}

impl Cell {
    fn winding_of<F>(f: &F, r0: f64, r1: f64, t0: f64, t1: f64) -> Result<i64>
    where
        F: Fn(C64) -> Result<C64> + Sync,
    {
        let z = |r: f64, t: f64| C64::from_polar(r, t);
        let (v00, v01, v10, v11) = (f(z(r0, t0))?, f(z(r0, t1))?, f(z(r1, t0))?, f(z(r1, t1))?);
        let arc = |r: f64, va: C64, vb: C64| {
            let path = move |t: f64| C64::from_polar(r, t);
            arg_change(f, &path, t0, t1, va, vb, 0)
        };
        let rad = |t: f64, va: C64, vb: C64| {
            let path = move |u: f64| C64::from_polar(r0 * (r1 / r0).powf(u), t);
            arg_change(f, &path, 0.0, 1.0, va, vb, 0)
        };
        let w = rad(t0, v00, v10)? + arc(r1, v10, v11)? - rad(t1, v01, v11)? - arc(r0, v00, v01)?;
        let wi = (w / TAU).round() as i64;
        if (w / TAU - wi as f64).abs() > 0.05 || wi < 0 {
            return Err(OdeimError::Numerical("inconsistent cell winding".into()));
        }
        Ok(wi)
    }

    fn contains(&self, z: C64) -> bool {
        let (r, mut t) = (z.norm(), z.arg());
        while t < self.t0 {
            t += TAU;
        }
        let dr = 0.05 * (self.r1 - self.r0);
        let dt = 0.05 * (self.t1 - self.t0);
        r > self.r0 - dr && r < self.r1 + dr && t > self.t0 - dt && t < self.t1 + dt
    }

    /// Zeros in the cell: Newton from the centre of a cell of winding one, otherwise (or
    /// when Newton leaves the cell) split into four and recurse.
    fn locate<F>(&self, f: &F, depth: usize) -> Result<Vec<(C64, usize, i64)>>
    where
        F: Fn(C64) -> Result<C64> + Sync,
    {
        let rm = (self.r0 * self.r1).sqrt();
        let tm = 0.5 * (self.t0 + self.t1);
        let centre = C64::from_polar(rm, tm);
        if self.winding == 1 || depth >= 8 {
            match newton(f, centre) {
                Ok((z, steps)) if self.contains(z) => return Ok(vec![(z, steps, self.winding)]),
                Ok(_) | Err(OdeimError::Numerical(_)) if depth < 8 => {}
                Ok((z, steps)) => return Ok(vec![(z, steps, self.winding)]),
                Err(e) => return Err(e),
            }
        }
        let mut out = Vec::new();
        for (r0, r1) in [(self.r0, rm), (rm, self.r1)] {
            for (t0, t1) in [(self.t0, tm), (tm, self.t1)] {
                let w = Cell::winding_of(f, r0, r1, t0, t1)?;
                if w > 0 {
                    out.extend(Cell { r0, r1, t0, t1, winding: w }.locate(f, depth + 1)?);
                }
            }
        }
        Ok(out)
    }
}

/// Newton iteration with centred difference derivative (step `1e-5 max(1,|E|)`).
/// Converges when the relative step drops below 1e-13, or stalls below 1e-9.
pub fn newton<F>(f: &F, z0: C64) -> Result<(C64, usize)>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let mut z = z0;
    let mut last = f64::INFINITY;
    for it in 0..80 {
        let h = 1e-5 * z.norm().max(1.0);
        let fz = f(z)?;
        let d = (f(z + h)? - f(z - h)?) / (2.0 * h);
        if d.norm() == 0.0 {
            return Err(OdeimError::Numerical("vanishing derivative in Newton".into()));
        }
        let step = fz / d;
        let step = if step.norm() > 0.5 * z.norm().max(1.0) { step * (0.5 * z.norm().max(1.0) / step.norm()) } else { step };
        z -= step;
        let rel = step.norm() / z.norm().max(1.0);
        // stop at 1e-13, or where the step stalls at the noise floor of f
        if rel < 1e-13 || (rel < 1e-9 && rel > 0.5 * last) {
            return Ok((z, it + 1));
        }
        last = rel;
    }
    Err(OdeimError::Numerical(format!("Newton did not converge from {}", z0)))
}

/// Lowest `count` eigenvalues of `-u'' + (x^2 + L(L+1)/x^2) u = E u` on the half line,
/// by finite volumes for `u = x^{L+1} v` with Richardson extrapolation.
pub fn radial_oscillator_levels(ell: f64, count: usize) -> Vec<f64> {
    let levels = |n: usize| fv_levels(ell, count, n);
    let (e1, e2, e3) = (levels(2000), levels(4000), levels(8000));
    (0..count)
        .map(|k| {
            let r1 = (4.0 * e2[k] - e1[k]) / 3.0;
            let r2 = (4.0 * e3[k] - e2[k]) / 3.0;
            (16.0 * r2 - r1) / 15.0
        })
        .collect()
}

fn fv_levels(ell: f64, count: usize, n: usize) -> Vec<f64> {
    let len = 12.0;
    let h = len / n as f64;
    let p = 2.0 * (ell + 1.0);
    let mom = |a: f64, b: f64, q: f64| (b.powf(q + 1.0) - a.powf(q + 1.0)) / (q + 1.0);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut w = vec![0.0; n];
    for k in 0..n {
        let xm = if k == 0 { 0.0 } else { (k as f64 - 0.5) * h };
        let xp = (k as f64 + 0.5) * h;
        w[k] = mom(xm, xp, p);
        let fp = xp.powf(p) / h;
        let fm = if k == 0 { 0.0 } else { xm.powf(p) / h };
        diag[k] = fp + fm + mom(xm, xp, p + 2.0);
        if k + 1 < n {
            off[k] = -fp;
        }
    }
    let b_diag: Vec<f64> = (0..n).map(|k| diag[k] / w[k]).collect();
    let b_off: Vec<f64> = (0..n.saturating_sub(1)).map(|k| off[k] / (w[k] * w[k + 1]).sqrt()).collect();
    (0..count).map(|k| sturm_eigenvalue(&b_diag, &b_off, k)).collect()
}

/// k-th smallest eigenvalue of a symmetric tridiagonal matrix by bisection.
fn sturm_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let count_below = |x: f64| {
        let mut cnt = 0;
        let mut q = 1.0f64;
        for i in 0..d.len() {
            let e2 = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] };
            q = d[i] - x - if i == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = 1e-300;
            }
            if q < 0.0 {
                cnt += 1;
            }
        }
        cnt
    };
    let mut lo = d.iter().zip(0..).map(|(&di, i)| di - radius_at(e, i)).fold(f64::INFINITY, f64::min);
    let mut hi = d.iter().zip(0..).map(|(&di, i)| di + radius_at(e, i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn radius_at(e: &[f64], i: usize) -> f64 {
    let l = if i > 0 { e[i - 1].abs() } else { 0.0 };
    let r = if i < e.len() { e[i].abs() } else { 0.0 };
    l + r
}


#[cfg(test)]
mod relation_tests {
    use super::*;
    use rand::SeedableRng;

    fn system(name: &str, m: f64, seed: u64, word: &[usize]) -> QSystem {
        let a = AffineAlgebra::new(name.parse().unwrap()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ell = random_generic_ell(&a, &mut rng).unwrap();
        QSystem::new(&a, m, &ell, word, OdeConfig::default()).unwrap()
    }

    const SAMPLES: [(f64, f64); 3] = [(0.7, 0.2), (-3.0, 1.0), (12.0, -5.0)];

    #[test]
    fn qq_b3() {
        let qs = system("B3", 2.0, 7, &[]);
        for i in 0..3 {
            for (re, im) in SAMPLES {
                let r = qs.qq_check(i, C64::new(re, im)).unwrap();
                assert!(r.residual < 1e-6, "node {} E={}: {:e}", i + 1, r.energy, r.residual);
                assert!(r.alt_residual > 1e-2);
            }
        }
    }

    #[test]
    fn qq_a2() {
        let qs = system("A2", 1.0, 7, &[]);
        for i in 0..2 {
            for (re, im) in SAMPLES {
                assert!(qs.qq_check(i, C64::new(re, im)).unwrap().residual < 1e-6);
            }
        }
    }

    #[test]
    fn qq_rescaling() {
        let mut qs = system("G2", 0.5, 3, &[]);
        let e = C64::new(2.0, 1.0);
        qs.rescale_chi(&[C64::new(1.7, -0.4), C64::new(0.3, 2.2)]);
        for i in 0..2 {
            assert!(qs.qq_check(i, e).unwrap().residual < 1e-6);
        }
        qs.q_tilde_scale[1] *= 1.5;
        assert!(qs.qq_check(1, e).unwrap().residual > 1e-2);
    }

    fn zeros_of(qs: &QSystem, i: usize, count: usize) -> Vec<C64> {
        let f = |e: C64| qs.q(i, e);
        let r = default_radius(&f, count).unwrap();
        let zs = find_zeros(&f, &ZeroRegion::disk(r)).unwrap();
        assert_eq!(zs.boundary_winding, zs.cell_winding);
        assert_eq!(zs.zeros.len() as i64, zs.boundary_winding);
        zs.zeros.iter().map(|z| z.energy).collect()
    }

    #[test]
    fn bae_a2_and_weyl_reflection() {
        let qs = system("A2", 1.0, 7, &[]);
        let base = zeros_of(&qs, 0, 5);
        for &z in &base {
            let b = qs.bae_check(0, z).unwrap();
            assert!(b.hypothesis.norm() > 0.0);
            assert!(b.residual < 1e-5, "{}: {:e}", z, b.residual);
            assert!(b.derived_residual.unwrap() < 1e-5);
            assert!(b.alt_residual > 1e-2);
        }
        let mut scaled = system("A2", 1.0, 7, &[]);
        scaled.q_scale = vec![C64::new(3.0, 1.0), C64::new(-0.2, 0.5)];
        let b0 = qs.bae_check(0, base[0]).unwrap();
        let b1 = scaled.bae_check(0, base[0]).unwrap();
        assert!((b0.product - b1.product).norm() < 1e-12 * b0.product.norm());

        let ws = system("A2", 1.0, 7, &[0]);
        assert_ne!(ws.beta_bar().unwrap(), qs.beta_bar().unwrap());
        let moved = zeros_of(&ws, 0, 5);
        assert!((moved[0] - base[0]).norm() > 1e-3);
        for &z in &moved {
            assert!(ws.bae_check(0, z).unwrap().residual < 1e-5);
        }
    }

    #[test]
    fn stabilizer_is_trivial() {
        let a = AffineAlgebra::new("B3".parse().unwrap()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let ell = random_generic_ell(&a, &mut rng).unwrap();
        let base = QSystem::new(&a, 2.0, &ell, &[], OdeConfig::default()).unwrap().beta_bar().unwrap();
        let mut words: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..3 {
            let next: Vec<Vec<usize>> = words
                .iter()
                .flat_map(|w| (0..3).filter(move |&k| w.last() != Some(&k)).map(move |k| [w.clone(), vec![k]].concat()))
                .collect();
            for w in &next {
                let bw = QSystem::new(&a, 2.0, &ell, w, OdeConfig::default()).unwrap().beta_bar().unwrap();
                assert!((0..3).any(|j| (bw[j] - base[j]).norm() > 1e-8), "{:?}", w);
            }
            words = next;
        }
    }

    #[test]
    fn zeros_stable_under_refinement() {
        let a = AffineAlgebra::new("A1".parse().unwrap()).unwrap();
        let qs = QSystem::new(&a, 1.0, &[c(0.3)], &[], OdeConfig::default()).unwrap();
        let f = |e: C64| qs.q(0, e);
        let reg = ZeroRegion::disk(14.0);
        let z1 = find_zeros(&f, &reg).unwrap();
        let z2 = find_zeros(&f, &reg.refined()).unwrap();
        assert_eq!(z1.zeros.len(), z2.zeros.len());
        for (a, b) in z1.zeros.iter().zip(&z2.zeros) {
            assert!((a.energy - b.energy).norm() < 1e-8);
        }
    }
}
