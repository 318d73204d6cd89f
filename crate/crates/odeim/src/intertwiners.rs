//! Numerical intertwiners between matrix representations.
//!
//! A map commuting with the finite part (Cartan, `e_i`, `f_i` for i in I) is
//! fixed by where it sends highest-weight vectors, so the unknowns are the
//! highest-weight data. The affine generators `e_0`, `f_0` then give a small
//! linear system, solved by SVD with threshold `1e-8 * sigma_max`.

use std::collections::BTreeMap;

use faer::Mat;

use crate::error::{OdeimError, Result};
use crate::linalg::{self, c, max_abs, norm, CMat, C64};
use serde::Serialize;

use crate::liealg::q_to_f64;
use crate::repmatrix::{r_isomorphism, tensor_many, tensor_vectors, wedge2_vectors, AffineAlgebra, AffineKind, MatrixRep};
use crate::spectra::{maximal_eigenvector, psi_source, psi_target_factors};

pub const NULL_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct IntertwinerSolution {
    /// Basis of the space of intertwiners.
    pub maps: Vec<CMat>,
    /// Singular values of the reduced system, descending.
    pub singular_values: Vec<f64>,
    /// Number of finite-part equivariant parameters.
    pub params: usize,
}

type WeightKey = Vec<i64>;

fn weight_key(w: &[f64]) -> WeightKey {
    w.iter().map(|x| (2.0 * x).round() as i64).collect()
}

fn weight_spaces(rep: &MatrixRep) -> BTreeMap<WeightKey, Vec<usize>> {
    let mut out: BTreeMap<WeightKey, Vec<usize>> = BTreeMap::new();
    for j in 0..rep.dim() {
        out.entry(weight_key(&rep.weight(j))).or_default().push(j);
    }
    out
}

/// Orthonormal basis of highest-weight vectors of each weight.
fn highest_weight_vectors(rep: &MatrixRep) -> Result<BTreeMap<WeightKey, Vec<Vec<C64>>>> {
    let n = rep.rank();
    let dim = rep.dim();
    let mut out = BTreeMap::new();
    for (key, idx) in weight_spaces(rep) {
        let m = idx.len();
        let a = CMat::from_fn(n * dim, m, |r, j| rep.e[1 + r / dim][(r % dim, idx[j])]);
        let (ns, s) = linalg::nullspace(&a, 1e-9)?;
        let smax = s.first().copied().unwrap_or(0.0);
        // an all-zero block has every vector highest weight
        let ns = if smax < 1e-12 { linalg::eye(m) } else { ns };
        if ns.ncols() == 0 {
            continue;
        }
        let vecs: Vec<Vec<C64>> = (0..ns.ncols())
            .map(|k| {
                let mut v = vec![c(0.0); dim];
                for (j, &i) in idx.iter().enumerate() {
                    v[i] = ns[(j, k)];
                }
                v
            })
            .collect();
        out.insert(key, vecs);
    }
    Ok(out)
}

/// One irreducible component of the finite part, generated from a highest-weight vector
/// by lowering operators. Basis vector k equals `scale_k * f_{gen_k} (basis[parent_k])`.
struct Component {
    weight: WeightKey,
    basis: Vec<Vec<C64>>,
    steps: Vec<(usize, usize, f64)>,
}

fn generate_component(rep: &MatrixRep, hw: &[C64], weight: WeightKey) -> Component {
    let n = rep.rank();
    let mut basis = vec![hw.to_vec()];
    let mut steps = vec![(usize::MAX, 0, 1.0)];
    let mut ortho: Vec<Vec<C64>> = vec![linalg::vscale(hw, c(1.0 / norm(hw)))];
    let mut head = 0;
    while head < basis.len() {
        for i in 0..n {
            let w = linalg::matvec(&rep.f[1 + i], &basis[head]);
            let wn = norm(&w);
            if wn < 1e-12 {
                continue;
            }
            let mut res = w.clone();
            for _ in 0..2 {
                for q in &ortho {
                    let p = linalg::dot(q, &res);
                    linalg::axpy(-p, q, &mut res);
                }
            }
            let rn = norm(&res);
            if rn > 1e-8 * wn {
                ortho.push(linalg::vscale(&res, c(1.0 / rn)));
                basis.push(linalg::vscale(&w, c(1.0 / wn)));
                steps.push((head, i, 1.0 / wn));
            }
        }
        head += 1;
    }
    Component { weight, basis, steps }
}

fn component_images(rep: &MatrixRep, comp: &Component, start: &[C64]) -> Vec<Vec<C64>> {
    let mut imgs: Vec<Vec<C64>> = Vec::with_capacity(comp.basis.len());
    imgs.push(start.to_vec());
    for &(parent, gen, s) in comp.steps.iter().skip(1) {
        let v = linalg::matvec(&rep.f[1 + gen], &imgs[parent]);
        imgs.push(linalg::vscale(&v, c(s)));
    }
    imgs
}

/// Space of maps `M: src -> tgt` with `M rho_src(x) = rho_tgt(x) M` for every generator.
pub fn solve_intertwiner(src: &MatrixRep, tgt: &MatrixRep) -> Result<IntertwinerSolution> {
    if src.rank() != tgt.rank() {
        return Err(OdeimError::InvalidArgument("representations of different algebras".into()));
    }
    let ds = src.dim();
    let dt = tgt.dim();
    let src_hw = highest_weight_vectors(src)?;
    let tgt_hw = highest_weight_vectors(tgt)?;

    let mut comps = Vec::new();
    for (key, vecs) in &src_hw {
        for v in vecs {
            comps.push(generate_component(src, v, key.clone()));
        }
    }
    let total: usize = comps.iter().map(|c| c.basis.len()).sum();
    if total != ds {
        return Err(OdeimError::Numerical(format!(
            "finite-part decomposition covers {} of {} dimensions",
            total, ds
        )));
    }
    let mut offsets = Vec::with_capacity(comps.len());
    let mut cols = Vec::with_capacity(ds);
    for comp in &comps {
        offsets.push(cols.len());
        cols.extend(comp.basis.iter().cloned());
    }
    let b = linalg::from_cols(&cols, ds);
    let b_inv = linalg::inverse(&b);

    // parameters: (component index, target highest-weight vector)
    let mut params: Vec<(usize, Vec<C64>)> = Vec::new();
    for (ci, comp) in comps.iter().enumerate() {
        if let Some(tv) = tgt_hw.get(&comp.weight) {
            for t in tv {
                params.push((ci, t.clone()));
            }
        }
    }
    let p = params.len();
    if p == 0 {
        return Ok(IntertwinerSolution { maps: vec![], singular_values: vec![], params: 0 });
    }
    let maps_p: Vec<CMat> = params
        .iter()
        .map(|(ci, t)| {
            let comp = &comps[*ci];
            let imgs = component_images(tgt, comp, t);
            let w = linalg::from_cols(&imgs, dt);
            let rows = b_inv.subrows(offsets[*ci], comp.basis.len()).to_owned();
            let m = &w * &rows;
            let fro = m.norm_l2();
            linalg::scale(&m, c(1.0 / fro))
        })
        .collect();

    // reduced system, accumulated as a triangular factor block by block
    let mut r_acc: Option<CMat> = None;
    for gen in 0..2 {
        let (xs, xt) = if gen == 0 { (&src.e[0], &tgt.e[0]) } else { (&src.f[0], &tgt.f[0]) };
        let diffs: Vec<CMat> = maps_p.iter().map(|m| m * xs - xt * m).collect();
        let chunk = (20_000 / ds).max(1);
        let mut r0 = 0;
        while r0 < dt {
            let r1 = (r0 + chunk).min(dt);
            let nrows = (r1 - r0) * ds;
            let prev = r_acc.as_ref().map(|r| r.nrows()).unwrap_or(0);
            let stacked = Mat::from_fn(prev + nrows, p, |row, col| {
                if row < prev {
                    r_acc.as_ref().unwrap()[(row, col)]
                } else {
                    let k = row - prev;
                    diffs[col][(r0 + k / ds, k % ds)]
                }
            });
            let qr = stacked.qr();
            let r = qr.R().to_owned();
            let keep = r.nrows().min(p);
            r_acc = Some(r.subrows(0, keep).to_owned());
            r0 = r1;
        }
    }
    let r = r_acc.expect("at least one block");
    // the parameter maps have unit norm, so the generators set the scale of the system
    let gen_scale = [&src.e[0], &tgt.e[0], &src.f[0], &tgt.f[0]]
        .iter()
        .map(|m| max_abs(m))
        .fold(0.0, f64::max);
    let (ns, sv) = linalg::nullspace_floor(&r, NULL_TOL, gen_scale)?;
    let mut maps = Vec::new();
    for k in 0..ns.ncols() {
        let mut m = linalg::zeros(dt, ds);
        for (pi, mp) in maps_p.iter().enumerate() {
            let coef = ns[(pi, k)];
            if coef.norm() > 0.0 {
                m = m + linalg::scale(mp, coef);
            }
        }
        maps.push(m);
    }
    Ok(IntertwinerSolution { maps, singular_values: sv, params: p })
}

/// Largest relative commutation defect of `m` over all generators.
pub fn equivariance_residual(m: &CMat, src: &MatrixRep, tgt: &MatrixRep) -> f64 {
    let mut worst = 0.0f64;
    let scale_m = max_abs(m).max(f64::MIN_POSITIVE);
    for (gs, gt) in [(&src.e, &tgt.e), (&src.f, &tgt.f), (&src.h, &tgt.h)] {
        for (xs, xt) in gs.iter().zip(gt.iter()) {
            let d = m * xs - xt * m;
            let s = max_abs(xs).max(max_abs(xt)).max(1.0);
            worst = worst.max(max_abs(&d) / (scale_m * s));
        }
    }
    worst
}

/// The i-th Psi-system morphism `m_i: wedge^2 V^(i)_{D_i/2} -> (x)_j (x)_l V^(j)_{...}`
/// together with the isomorphism `R_i: V^(i)_k -> V^(i)_{k + D_i}`.
#[derive(Clone, Debug)]
pub struct PsiMorphism {
    pub node: usize,
    pub m: CMat,
    pub r: CMat,
    pub source: MatrixRep,
    pub target: MatrixRep,
    /// (node, shift) of each target factor, in tensor order.
    pub factors: Vec<(usize, f64)>,
    /// Dimension of the full space of intertwiners.
    pub hom_dim: usize,
    /// Dimension after imposing the kernel.
    pub null_dim: usize,
    pub singular_values: Vec<f64>,
}

/// Solve for `m_i`, normalised by `m_i(f_i v_i ^ v_i) = (x) v_j`, with kernel the
/// complement `U` of the submodule generated by `f_i v_i ^ v_i`.
pub fn morphism_m(alg: &AffineAlgebra, i: usize) -> Result<PsiMorphism> {
    let v = alg.fundamental_rep(i)?;
    let d = q_to_f64(alg.fold.d[i]);
    let source = psi_source(alg, i)?;
    let factors = psi_target_factors(alg, i)?;
    let target = tensor_many(&factors.iter().map(|f| f.2.clone()).collect::<Vec<_>>())?;
    let sol = solve_intertwiner(&source, &target)?;
    let mut hw = vec![c(0.0); v.dim()];
    hw[0] = c(1.0);
    let fv = linalg::matvec(&v.f[i + 1], &hw);
    let w = wedge2_vectors(&fv, &hw);
    let map = if sol.maps.len() > 1 {
        restrict_kernel(&sol.maps, &source, &w)?
    } else {
        sol.maps.first().cloned()
    };
    let Some(map) = map else {
        return Err(OdeimError::CheckFailed(format!("no morphism with the prescribed kernel for node {}", i + 1)));
    };
    let img = linalg::matvec(&map, &w);
    if img[0].norm() < 1e-10 * norm(&img).max(1e-300) {
        return Err(OdeimError::Numerical("normalising vector is not mapped to the top vector".into()));
    }
    let m = linalg::scale(&map, img[0].inv());
    let r = r_isomorphism(&v, d)?;
    Ok(PsiMorphism {
        node: i + 1,
        m,
        r,
        source,
        target,
        factors: factors.iter().map(|f| (f.0, f.1)).collect(),
        hom_dim: sol.maps.len(),
        null_dim: 1,
        singular_values: sol.singular_values,
    })
}

/// The combination of `maps` vanishing on the complement `U` of the component
/// containing `w`; errors unless it is unique.
///
/// A generic element `C` of the commutant of the source acts on that component by
/// a scalar `mu`, and `U` is the range of `C - mu`.
fn restrict_kernel(maps: &[CMat], source: &MatrixRep, w: &[C64]) -> Result<Option<CMat>> {
    let comm = solve_intertwiner(source, source)?;
    let mut cg = linalg::zeros(source.dim(), source.dim());
    for (a, ca) in comm.maps.iter().enumerate() {
        let t = C64::new(1.0 / (a as f64 + 1.37), (a as f64 * 0.731).sin());
        cg += linalg::scale(ca, t);
    }
    let cw = linalg::matvec(&cg, w);
    let mu = linalg::dot(w, &cw) / linalg::dot(w, w);
    let mut shifted = cg;
    for j in 0..source.dim() {
        shifted[(j, j)] -= mu;
    }
    let nr = maps[0].nrows();
    let nc = source.dim();
    let imgs: Vec<CMat> = maps.iter().map(|m| m * &shifted).collect();
    let g = Mat::from_fn(nr * nc, maps.len(), |r, a| imgs[a][(r % nr, r / nr)]);
    let (ns, _) = linalg::nullspace(&g, NULL_TOL)?;
    match ns.ncols() {
        0 => Ok(None),
        1 => {
            let mut m = linalg::zeros(maps[0].nrows(), maps[0].ncols());
            for (a, ma) in maps.iter().enumerate() {
                m += linalg::scale(ma, ns[(a, 0)]);
            }
            Ok(Some(m))
        }
        d => Err(OdeimError::CheckFailed(format!("morphism with prescribed kernel is not unique (dimension {})", d))),
    }
}

/// Maximal eigenvectors `psi^(j)` of every constructible `V^(j)` (None at a spin node),
/// and of `U^(n)` in type C.
#[derive(Clone, Debug)]
pub struct PsiVectors {
    pub psi: Vec<Option<Vec<C64>>>,
    pub lambda: Vec<Option<f64>>,
    pub grading: Vec<Option<Vec<f64>>>,
    pub surrogate: Option<Vec<C64>>,
    pub h_dual: i64,
}

pub fn psi_vectors(alg: &AffineAlgebra) -> Result<PsiVectors> {
    let n = alg.rank();
    let mut psi = Vec::new();
    let mut lambda = Vec::new();
    let mut grading = Vec::new();
    for j in 0..n {
        match alg.fundamental_rep(j) {
            Ok(v) => {
                let me = maximal_eigenvector(&v)?;
                psi.push(Some(me.vector));
                lambda.push(Some(me.value));
                grading.push(Some(v.grading.clone()));
            }
            Err(OdeimError::Unsupported(_)) => {
                psi.push(None);
                lambda.push(None);
                grading.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let surrogate = match alg.kind {
        AffineKind::TwistedD => Some(maximal_eigenvector(&alg.spin_surrogate()?)?.vector),
        _ => None,
    };
    Ok(PsiVectors { psi, lambda, grading, surrogate, h_dual: alg.fold.h_dual })
}

/// `gamma^{-s h} v`: the vector v transported to the module shifted by s.
pub fn shifted(v: &[C64], grading: &[f64], h_dual: i64, s: f64) -> Vec<C64> {
    let lg = C64::new(0.0, std::f64::consts::TAU / h_dual as f64);
    v.iter().zip(grading).map(|(z, &g)| z * (-lg * (s * g)).exp()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiCheck {
    pub node: usize,
    /// Fitted constant with `lhs = beta * rhs`.
    pub beta: C64,
    pub residual: f64,
}

/// Fit `lhs = beta * rhs`; return beta and `|lhs - beta rhs| / |lhs|`.
pub fn proportionality(lhs: &[C64], rhs: &[C64]) -> (C64, f64) {
    let beta = linalg::dot(rhs, lhs) / linalg::dot(rhs, rhs);
    let mut diff = lhs.to_vec();
    linalg::axpy(-beta, rhs, &mut diff);
    (beta, norm(&diff) / norm(lhs).max(1e-300))
}

/// Right-hand side `(x)_j (x)_l psi^(j)_{shift}` in tensor order.
pub fn psi_tensor(morph: &PsiMorphism, pv: &PsiVectors, n: usize) -> Result<Vec<C64>> {
    let mut acc = vec![c(1.0)];
    for &(j, s) in &morph.factors {
        let factor = match (&pv.psi[j], &pv.grading[j]) {
            (Some(p), Some(g)) => shifted(p, g, pv.h_dual, s),
            _ if j == n - 1 => pv
                .surrogate
                .clone()
                .ok_or_else(|| OdeimError::Unsupported("missing spin surrogate".into()))?,
            _ => return Err(OdeimError::Unsupported("missing eigenvector".into())),
        };
        acc = tensor_vectors(&acc, &factor);
    }
    Ok(acc)
}

/// `m_i(R_i psi_{-D_i/2} ^ psi_{D_i/2})` against `(x) psi^(j)`.
pub fn verify_algebraic_psi(alg: &AffineAlgebra, morph: &PsiMorphism, pv: &PsiVectors) -> Result<PsiCheck> {
    let i = morph.node - 1;
    let d = q_to_f64(alg.fold.d[i]);
    let p = pv.psi[i].as_ref().ok_or_else(|| OdeimError::Unsupported("spin node".into()))?;
    let g = pv.grading[i].as_ref().unwrap();
    let minus = linalg::matvec(&morph.r, &shifted(p, g, pv.h_dual, -d / 2.0));
    let plus = shifted(p, g, pv.h_dual, d / 2.0);
    let lhs = linalg::matvec(&morph.m, &wedge2_vectors(&minus, &plus));
    let rhs = psi_tensor(morph, pv, alg.rank())?;
    let (beta, residual) = proportionality(&lhs, &rhs);
    Ok(PsiCheck { node: morph.node, beta, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repmatrix::{evaluation_shift, AffineAlgebra};

    fn alg(s: &str) -> AffineAlgebra {
        AffineAlgebra::new(s.parse().unwrap()).unwrap()
    }

    #[test]
    fn identity_is_found() {
        let a = alg("B3");
        let v = a.fundamental_rep(0).unwrap();
        let sol = solve_intertwiner(&v, &v).unwrap();
        assert_eq!(sol.maps.len(), 1);
        let m = &sol.maps[0];
        let m = linalg::scale(m, m[(0, 0)].inv());
        assert!(max_abs(&(m - linalg::eye(v.dim()))) < 1e-10);
    }

    #[test]
    fn wrong_twist_has_no_map() {
        let a = alg("B3");
        let v = a.fundamental_rep(0).unwrap();
        let w = evaluation_shift(&v, 0.25);
        let sol = solve_intertwiner(&v, &w).unwrap();
        assert!(sol.maps.is_empty());
    }

    fn check_psi(name: &str, nodes: &[usize]) {
        let a = alg(name);
        let pv = psi_vectors(&a).unwrap();
        for &i in nodes {
            let m = morphism_m(&a, i).unwrap();
            let chk = verify_algebraic_psi(&a, &m, &pv).unwrap();
            assert!(chk.residual < 1e-9, "{} node {} residual {}", name, i + 1, chk.residual);
        }
    }

    #[test]
    fn algebraic_psi_b3() {
        check_psi("B3", &[0, 1, 2]);
    }

    #[test]
    fn algebraic_psi_c2() {
        check_psi("C2", &[0]);
    }

    #[test]
    fn algebraic_psi_g2() {
        check_psi("G2", &[0, 1]);
    }

    #[test]
    fn c_type_r_matrix() {
        // R_1 = sum_{k<=n} (E_kk + E_k'k') + E_{n+1,n+2}/2 + 2 E_{n+2,n+1}
        let a = alg("C3");
        let v = a.fundamental_rep(0).unwrap();
        let r = crate::repmatrix::r_isomorphism(&v, 0.5).unwrap();
        let n = 3;
        let d = v.dim();
        let want = CMat::from_fn(d, d, |i, j| {
            if i == j && (i < n || i >= n + 2) {
                c(1.0)
            } else if i == n && j == n + 1 {
                c(0.5)
            } else if i == n + 1 && j == n {
                c(2.0)
            } else {
                c(0.0)
            }
        });
        assert!(max_abs(&(r - want)) < 1e-10);
    }
}
