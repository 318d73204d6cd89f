//! Spectral analysis of `Lambda = sum_i e_i` on matrix representations.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{OdeimError, Result};
use crate::liealg::q_to_f64;
use crate::linalg::{self, c, CMat, C64};
use crate::repmatrix::{evaluation_shift, tensor_many, wedge_rep, AffineAlgebra, AffineKind, MatrixRep};

pub const IMAG_TOL: f64 = 1e-9;
pub const GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct MaxEigen {
    pub value: f64,
    pub vector: Vec<C64>,
    /// Distance from the next eigenvalue in real part.
    pub gap: f64,
}

/// Eigenvalues sorted by decreasing real part, then decreasing imaginary part.
pub fn lambda_spectrum(rep: &MatrixRep) -> Result<Vec<C64>> {
    let mut v = linalg::eigvals(&rep.lambda())?;
    sort_desc(&mut v);
    Ok(v)
}

fn sort_desc(v: &mut [C64]) {
    v.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap()));
}

/// The maximal eigenvalue of `Lambda`: real and strictly larger in real part than
/// every other eigenvalue. The eigenvector is normalised to unit length with its
/// largest coordinate real positive.
pub fn maximal_eigenvector(rep: &MatrixRep) -> Result<MaxEigen> {
    maximal_eigenvector_of(&rep.lambda())
}

pub fn maximal_eigenvector_of(lam: &CMat) -> Result<MaxEigen> {
    let (vals, vecs) = linalg::eig(lam)?;
    let scale = vals.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let top = (0..vals.len())
        .max_by(|&a, &b| vals[a].re.partial_cmp(&vals[b].re).unwrap())
        .ok_or_else(|| OdeimError::Numerical("empty spectrum".into()))?;
    let lam_top = vals[top];
    if lam_top.im.abs() > IMAG_TOL * scale {
        return Err(OdeimError::CheckFailed(format!("top eigenvalue {} is not real", lam_top)));
    }
    let next = (0..vals.len())
        .filter(|&j| j != top)
        .map(|j| vals[j].re)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = lam_top.re - next;
    if gap <= GAP_TOL * scale {
        return Err(OdeimError::CheckFailed(format!("no spectral gap at {}", lam_top)));
    }
    let v = phase_fix(&linalg::col(&vecs, top));
    Ok(MaxEigen { value: lam_top.re, vector: v, gap })
}

/// Unit vector with its largest coordinate real positive.
pub fn phase_fix(v: &[C64]) -> Vec<C64> {
    let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let k = v.iter().position(|z| z.norm() > big * (1.0 - 1e-9)).unwrap_or(0);
    let ph = v[k].conj() / v[k].norm();
    let nrm = linalg::norm(v);
    v.iter().map(|z| z * ph / nrm).collect()
}

/// Characteristic polynomial of `Lambda`, highest degree first.
pub fn char_poly(rep: &MatrixRep) -> Result<Vec<C64>> {
    Ok(linalg::poly_from_roots(&linalg::eigvals(&rep.lambda())?))
}

/// Closed forms of the maximal eigenvalue of `V^(i)`, where known.
pub fn lambda_formula(alg: &AffineAlgebra, i: usize) -> Option<f64> {
    let n = alg.rank();
    let t = (i + 1) as f64;
    let ratio = |m: f64| (t * PI / m).sin() / (PI / m).sin();
    match alg.kind {
        AffineKind::Untwisted => Some(ratio((n + 1) as f64)),
        AffineKind::TwistedA => Some(ratio((2 * n - 1) as f64)),
        AffineKind::TwistedD => {
            let m = (2 * n + 2) as f64;
            if i + 1 < n {
                Some(ratio(m))
            } else {
                let gamma_half = PI / alg.fold.h_dual as f64;
                let prev = ((n - 1) as f64 * PI / m).sin() / (PI / m).sin();
                Some(prev / (2.0 * gamma_half.cos()))
            }
        }
        AffineKind::TriplyTwistedD4 => None,
    }
}

/// Numerical maximal eigenvalue of `V^(i)`; in type C the last node goes through `U^(n)`.
pub fn lambda_numeric(alg: &AffineAlgebra, i: usize) -> Result<f64> {
    let n = alg.rank();
    if alg.kind == AffineKind::TwistedD && i == n - 1 {
        let u = maximal_eigenvector(&alg.spin_surrogate()?)?;
        let quarter = PI / (2.0 * alg.fold.h_dual as f64);
        return Ok(u.value / (2.0 * quarter.cos()));
    }
    Ok(maximal_eigenvector(&alg.fundamental_rep(i)?)?.value)
}

/// `(gamma^{-D_i/2} + gamma^{D_i/2}) lambda^(i)`.
pub fn mu(alg: &AffineAlgebra, lambdas: &[f64], i: usize) -> f64 {
    let d = q_to_f64(alg.fold.d[i]);
    let h = alg.fold.h_dual as f64;
    2.0 * (PI * d / h).cos() * lambdas[i]
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaRelation {
    pub node: usize,
    pub lhs: f64,
    pub rhs: C64,
    pub residual: f64,
}

/// Both sides of `mu_i = sum_j sum_l gamma^{(B_ij - 1 - 2l)/(2r)} lambda^(j)`.
pub fn verify_lambda_relations(alg: &AffineAlgebra) -> Result<Vec<LambdaRelation>> {
    let n = alg.rank();
    let lambdas: Vec<f64> = (0..n).map(|i| lambda_numeric(alg, i)).collect::<Result<_>>()?;
    let b = alg.fold.incidence();
    let r = alg.fold.r as f64;
    let h = alg.fold.h_dual as f64;
    let mut out = Vec::new();
    for i in 0..n {
        let lhs = mu(alg, &lambdas, i);
        let mut rhs = c(0.0);
        for j in 0..n {
            for l in 0..b[i][j].max(0) {
                let ex = (b[i][j] - 1 - 2 * l) as f64 / (2.0 * r);
                rhs += C64::from_polar(1.0, 2.0 * PI * ex / h) * lambdas[j];
            }
        }
        out.push(LambdaRelation { node: i + 1, lhs, rhs, residual: (c(lhs) - rhs).norm() });
    }
    Ok(out)
}

/// Source `wedge^2 V^(i)_{D_i/2}` of the i-th Psi-system morphism.
pub fn psi_source(alg: &AffineAlgebra, i: usize) -> Result<MatrixRep> {
    let v = alg.fundamental_rep(i)?;
    Ok(evaluation_shift(&wedge_rep(&v, 2), q_to_f64(alg.fold.d[i]) / 2.0))
}

/// Factors `V^(j)_{(B_ij - 1 - 2l)/(2r)}` of the target, with their node and shift.
///
/// In type C the pair of spin modules at the last node is replaced by `U^(n)`.
pub fn psi_target_factors(alg: &AffineAlgebra, i: usize) -> Result<Vec<(usize, f64, MatrixRep)>> {
    let n = alg.rank();
    let b = alg.fold.incidence();
    let r = alg.fold.r as f64;
    let mut out = Vec::new();
    for j in 0..n {
        if b[i][j] <= 0 {
            continue;
        }
        if alg.kind == AffineKind::TwistedD && j == n - 1 {
            if i == n - 1 {
                return Err(OdeimError::Unsupported("Psi-system source at the spin node".into()));
            }
            out.push((j, 0.0, alg.spin_surrogate()?));
            continue;
        }
        let v = alg.fundamental_rep(j)?;
        for l in 0..b[i][j] {
            let s = (b[i][j] - 1 - 2 * l) as f64 / (2.0 * r);
            out.push((j, s, evaluation_shift(&v, s)));
        }
    }
    if alg.kind == AffineKind::TwistedD && i == n - 1 {
        return Err(OdeimError::Unsupported("Psi-system source at the spin node".into()));
    }
    Ok(out)
}

pub fn psi_target(alg: &AffineAlgebra, i: usize) -> Result<MatrixRep> {
    let f: Vec<MatrixRep> = psi_target_factors(alg, i)?.into_iter().map(|x| x.2).collect();
    tensor_many(&f)
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorMaximality {
    pub node: usize,
    pub expected: f64,
    pub source: f64,
    pub target: f64,
}

/// Maximal eigenvalues of the Psi-system source and target, against `mu_i`.
pub fn maximal_in_tensor(alg: &AffineAlgebra, i: usize) -> Result<TensorMaximality> {
    let n = alg.rank();
    let lambdas: Vec<f64> = (0..n).map(|j| lambda_numeric(alg, j)).collect::<Result<_>>()?;
    let src = maximal_eigenvector(&psi_source(alg, i)?)?;
    let tgt = maximal_eigenvector(&psi_target(alg, i)?)?;
    Ok(TensorMaximality { node: i + 1, expected: mu(alg, &lambdas, i), source: src.value, target: tgt.value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg(s: &str) -> AffineAlgebra {
        AffineAlgebra::new(s.parse().unwrap()).unwrap()
    }

    #[test]
    fn a5_psi1() {
        // psi^(1) = 2 sum_{j<2n} u_j + u_{2n} with eigenvalue 1
        let a = alg("B3");
        let m = maximal_eigenvector(&a.fundamental_rep(0).unwrap()).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        let r = m.vector[0] / m.vector[5];
        assert!((r - c(2.0)).norm() < 1e-10);
    }

    #[test]
    fn c_psi1() {
        // psi^(1) = sum_{k<=n}(u_k + u_k') + (eps+1)/2 u_{n+1} + (1-eps) u_{n+2}
        for n in [2usize, 3] {
            let a = alg(&format!("C{}", n));
            let m = maximal_eigenvector(&a.fundamental_rep(0).unwrap()).unwrap();
            let eps = a.epsilon();
            let v0 = m.vector[0];
            let r1 = m.vector[n] / v0;
            let r2 = m.vector[n + 1] / v0;
            assert!((r1 - (eps + 1.0) / 2.0).norm() < 1e-10, "n={} {}", n, r1);
            assert!((r2 - (c(1.0) - eps)).norm() < 1e-10, "n={} {}", n, r2);
            assert!((m.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn formulas_match() {
        for s in ["A2", "A3", "B3", "B4", "C2", "C3", "C4"] {
            let a = alg(s);
            for i in 0..a.rank() {
                let want = lambda_formula(&a, i).unwrap();
                let got = lambda_numeric(&a, i).unwrap();
                assert!((want - got).abs() < 1e-10, "{} {}: {} vs {}", s, i + 1, want, got);
            }
        }
    }

    #[test]
    fn relations_hold() {
        for s in ["A2", "A3", "B3", "C2", "C3", "G2"] {
            for rel in verify_lambda_relations(&alg(s)).unwrap() {
                assert!(rel.residual < 1e-9, "{} node {}: {}", s, rel.node, rel.residual);
            }
        }
    }

    #[test]
    fn d4_triality_char_poly() {
        let a = alg("G2");
        let p = char_poly(&a.standard_rep().unwrap()).unwrap();
        let r3 = 3f64.sqrt();
        let mut want = vec![c(0.0); 9];
        want[0] = c(1.0);
        want[4] = c(6.0 - 4.0 * r3);
        want[8] = c(-(7.0 - 4.0 * r3));
        for (k, (x, y)) in p.iter().zip(&want).enumerate() {
            assert!((x - y).norm() < 1e-9, "x^{}: {} vs {}", 8 - k, x, y);
        }
    }
}
