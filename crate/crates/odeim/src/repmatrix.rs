//! Finite-dimensional level-zero representations of the affine algebras
//! `A_n^(1)`, `A_{2n-1}^(2)`, `D_{n+1}^(2)` and `D_4^(3)` as explicit matrices.
//!
//! Generator index 0 is the affine node; index `i + 1` is node i of g.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use num_traits::Zero;
use serde::Serialize;

use crate::error::{OdeimError, Result};
use crate::liealg::{langlands_fold, q_to_f64, AlgebraLabel, Family, FoldingData};
use crate::linalg::{self, c, commutator, max_abs, scale, unit, zeros, CMat, C64, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AffineKind {
    /// `A_n^(1)`, self-dual case of type A.
    Untwisted,
    /// `A_{2n-1}^(2)`, dual of `B_n^(1)`.
    TwistedA,
    /// `D_{n+1}^(2)`, dual of `C_n^(1)`.
    TwistedD,
    /// `D_4^(3)`, dual of `G_2^(1)`.
    TriplyTwistedD4,
}

#[derive(Clone, Debug)]
pub struct AffineAlgebra {
    pub fold: FoldingData,
    pub kind: AffineKind,
}

#[derive(Clone, Debug)]
pub struct MatrixRep {
    pub name: String,
    pub e: Vec<CMat>,
    pub f: Vec<CMat>,
    pub h: Vec<CMat>,
    /// Evaluation parameter k, when the representation is a single evaluation module.
    pub eval_k: Option<f64>,
    pub h_dual: i64,
    /// Diagonal of the grading element h.
    pub grading: Vec<f64>,
}

impl AffineAlgebra {
    pub fn new(g: AlgebraLabel) -> Result<Self> {
        let kind = match g.family() {
            Family::A => AffineKind::Untwisted,
            Family::B => AffineKind::TwistedA,
            Family::C => AffineKind::TwistedD,
            Family::G => AffineKind::TriplyTwistedD4,
            _ => {
                return Err(OdeimError::Unsupported(format!(
                    "no matrix realisation for the dual affine algebra of {}",
                    g
                )))
            }
        };
        Ok(Self { fold: langlands_fold(g)?, kind })
    }

    pub fn rank(&self) -> usize {
        self.fold.rank()
    }

    pub fn name(&self) -> String {
        let t = self.fold.tilde;
        match self.kind {
            AffineKind::Untwisted => format!("{}^(1)", t),
            AffineKind::TwistedA | AffineKind::TwistedD => format!("{}^(2)", t),
            AffineKind::TriplyTwistedD4 => format!("{}^(3)", t),
        }
    }

    /// `epsilon_n` of the `D_{n+1}^(2)` realisation: 1 for n even, i for n odd.
    pub fn epsilon(&self) -> C64 {
        if self.rank() % 2 == 0 {
            c(1.0)
        } else {
            I
        }
    }

    /// The defining representation `L(omega_1)_0`.
    pub fn standard_rep(&self) -> Result<MatrixRep> {
        let n = self.rank();
        let (e, f, h) = match self.kind {
            AffineKind::Untwisted => untwisted_a(n),
            AffineKind::TwistedA => twisted_a(n),
            AffineKind::TwistedD => twisted_d(n, self.epsilon()),
            AffineKind::TriplyTwistedD4 => triality_d4(),
        };
        let mut rep = MatrixRep {
            name: format!("{} L(w1)", self.name()),
            e,
            f,
            h,
            eval_k: Some(0.0),
            h_dual: self.fold.h_dual,
            grading: vec![],
        };
        rep.grading = grading_h(&rep)?.0;
        Ok(rep)
    }

    /// The fundamental representation `V^(i)` (node i, 0-based).
    pub fn fundamental_rep(&self, i: usize) -> Result<MatrixRep> {
        let n = self.rank();
        if i >= n {
            return Err(OdeimError::InvalidArgument(format!("node {} out of range", i + 1)));
        }
        let k = q_to_f64(self.fold.k(i));
        let base = self.standard_rep()?;
        let rep = match self.kind {
            AffineKind::Untwisted | AffineKind::TwistedA => wedge_rep(&base, i + 1),
            AffineKind::TwistedD => {
                if i == n - 1 {
                    return Err(OdeimError::Unsupported(
                        "the last fundamental representation of D_{n+1}^(2) is a spin module".into(),
                    ));
                }
                wedge_rep(&base, i + 1)
            }
            // L(w2) of D_4 is all of the second exterior power
            AffineKind::TriplyTwistedD4 => wedge_rep(&base, i + 1),
        };
        let mut rep = evaluation_shift(&rep, k);
        rep.name = format!("{} V^({})", self.name(), i + 1);
        Ok(rep)
    }

    /// `U^(n)`: the n-th exterior power standing in for products of two spin modules
    /// in type C.
    pub fn spin_surrogate(&self) -> Result<MatrixRep> {
        if self.kind != AffineKind::TwistedD {
            return Err(OdeimError::Unsupported("spin surrogate exists only for type C".into()));
        }
        let n = self.rank();
        let cn = if n % 2 == 0 { 0.25 } else { 0.0 };
        let mut rep = evaluation_shift(&wedge_rep(&self.standard_rep()?, n), cn);
        rep.name = format!("{} U^({})", self.name(), n);
        Ok(rep)
    }

    /// Expected `a_ij` with `[h_i, e_j] = a_ij e_j`.
    pub fn chevalley_matrix(&self) -> Vec<Vec<i64>> {
        self.fold.affine_chevalley_matrix()
    }
}

type Gens = (Vec<CMat>, Vec<CMat>, Vec<CMat>);

fn untwisted_a(n: usize) -> Gens {
    let d = n + 1;
    let mut e = vec![unit(d, n, 0)];
    let mut f = vec![unit(d, 0, n)];
    let mut h = vec![unit(d, n, n) - unit(d, 0, 0)];
    for i in 0..n {
        e.push(unit(d, i, i + 1));
        f.push(unit(d, i + 1, i));
        h.push(unit(d, i, i) - unit(d, i + 1, i + 1));
    }
    (e, f, h)
}

fn twisted_a(n: usize) -> Gens {
    let d = 2 * n;
    let et = |j: usize| unit(d, j, j + 1);
    let ft = |j: usize| unit(d, j + 1, j);
    let ht = |j: usize| unit(d, j, j) - unit(d, j + 1, j + 1);
    let e0 = scale(&(unit(d, d - 2, 0) + unit(d, d - 1, 1)), c(0.5));
    let f0 = scale(&(unit(d, 0, d - 2) + unit(d, 1, d - 1)), c(2.0));
    let h0 = unit(d, d - 2, d - 2) + unit(d, d - 1, d - 1) - unit(d, 0, 0) - unit(d, 1, 1);
    let (mut e, mut f, mut h) = (vec![e0], vec![f0], vec![h0]);
    for i in 0..n {
        let j = d - 2 - i;
        if i == n - 1 {
            e.push(et(i));
            f.push(ft(i));
            h.push(ht(i));
        } else {
            e.push(et(i) + et(j));
            f.push(ft(i) + ft(j));
            h.push(ht(i) + ht(j));
        }
    }
    (e, f, h)
}

/// `F_ij` and `G_ij` of the orthogonal realisation with `i' = 2n + 3 - i` (1-based inputs).
struct Orth {
    n: usize,
}

impl Orth {
    fn dim(&self) -> usize {
        2 * self.n + 2
    }
    fn prime(&self, i: usize) -> usize {
        2 * self.n + 3 - i
    }
    fn e(&self, i: usize, j: usize) -> CMat {
        unit(self.dim(), i - 1, j - 1)
    }
    fn fm(&self, i: usize, j: usize) -> CMat {
        let s = if (i + j + 1) % 2 == 0 { 1.0 } else { -1.0 };
        self.e(i, j) + scale(&self.e(self.prime(j), self.prime(i)), c(s))
    }
    fn gm(&self, i: usize, j: usize) -> CMat {
        let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        self.e(i, j) + scale(&self.e(self.prime(j), self.prime(i)), c(s))
    }
    /// Chevalley generators of `o_{2n+2}` (type `D_{n+1}`), nodes 1..n+1.
    fn tilde(&self) -> Gens {
        let n = self.n;
        let (mut e, mut f, mut h) = (vec![], vec![], vec![]);
        for i in 1..=n {
            e.push(self.fm(i, i + 1));
            f.push(self.fm(i + 1, i));
            h.push(self.fm(i, i) - self.fm(i + 1, i + 1));
        }
        let np = self.prime(n + 1);
        e.push(scale(&self.gm(n, np), c(0.5)));
        f.push(scale(&self.gm(np, n), c(2.0)));
        h.push(self.fm(n, n) + self.fm(n + 1, n + 1));
        (e, f, h)
    }
}

fn twisted_d(n: usize, eps: C64) -> Gens {
    let o = Orth { n };
    let (et, ft, ht) = o.tilde();
    let e0 = scale(&(o.fm(n + 1, 1) - scale(&o.gm(n + 2, 1), c(2.0))), eps * 0.5);
    let f0 = scale(&(scale(&o.fm(1, n + 1), c(2.0)) - o.gm(1, n + 2)), eps.inv());
    let h0 = scale(&o.fm(1, 1), c(-2.0));
    let (mut e, mut f, mut h) = (vec![e0], vec![f0], vec![h0]);
    for i in 0..n {
        if i == n - 1 {
            e.push(&et[n - 1] + &et[n]);
            f.push(&ft[n - 1] + &ft[n]);
            h.push(&ht[n - 1] + &ht[n]);
        } else {
            e.push(et[i].clone());
            f.push(ft[i].clone());
            h.push(ht[i].clone());
        }
    }
    (e, f, h)
}

fn triality_d4() -> Gens {
    let o = Orth { n: 3 };
    let (et, ft, ht) = o.tilde();
    let kappa = 1.0 / (3.0 + 2.0 * 3f64.sqrt());
    let eta = C64::from_polar(1.0, PI / 3.0);
    let e0 = scale(
        &(scale(&o.fm(4, 1), eta.conj()) + scale(&o.gm(6, 2), c(2.0)) + scale(&o.gm(5, 1), eta * 2.0)),
        c(kappa),
    );
    let f0 = scale(
        &(scale(&o.fm(1, 4), eta) + scale(&o.gm(2, 6), c(0.5)) + scale(&o.gm(1, 5), eta.conj() * 0.5)),
        c(1.0 / kappa),
    );
    let h0 = scale(&o.fm(1, 1), c(-2.0)) - o.fm(2, 2) - o.fm(3, 3);
    let e = vec![e0, &et[0] + &et[2] + &et[3], et[1].clone()];
    let f = vec![f0, &ft[0] + &ft[2] + &ft[3], ft[1].clone()];
    let h = vec![h0, &ht[0] + &ht[2] + &ht[3], ht[1].clone()];
    (e, f, h)
}

impl MatrixRep {
    pub fn dim(&self) -> usize {
        self.e[0].nrows()
    }

    /// Rank of g (number of finite nodes).
    pub fn rank(&self) -> usize {
        self.e.len() - 1
    }

    /// `Lambda = sum_{i=0}^n e_i`.
    pub fn lambda(&self) -> CMat {
        let mut l = zeros(self.dim(), self.dim());
        for e in &self.e {
            l = l + e;
        }
        l
    }

    /// `e = sum_{i in I} e_i` (no affine generator).
    pub fn e_finite(&self) -> CMat {
        let mut l = zeros(self.dim(), self.dim());
        for e in &self.e[1..] {
            l = l + e;
        }
        l
    }

    /// Eigenvalues of the finite Cartan generators on basis vector j.
    pub fn weight(&self, j: usize) -> Vec<f64> {
        self.h[1..].iter().map(|h| h[(j, j)].re).collect()
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|j| self.weight(j)).collect()
    }

    /// Max-abs residual of the Chevalley relations, relative to the largest generator entry.
    pub fn chevalley_residual(&self, a: &[Vec<i64>]) -> f64 {
        let n = self.e.len();
        let mut scale_ref = 0.0f64;
        for m in self.e.iter().chain(&self.f).chain(&self.h) {
            scale_ref = scale_ref.max(max_abs(m));
        }
        let mut worst = 0.0f64;
        let mut upd = |m: CMat| worst = worst.max(max_abs(&m));
        for i in 0..n {
            for j in 0..n {
                let ef = commutator(&self.e[i], &self.f[j]);
                if i == j {
                    upd(ef - &self.h[i]);
                } else {
                    upd(ef);
                }
                let aij = c(a[i][j] as f64);
                upd(commutator(&self.h[i], &self.e[j]) - scale(&self.e[j], aij));
                upd(commutator(&self.h[i], &self.f[j]) + scale(&self.f[j], aij));
                upd(commutator(&self.h[i], &self.h[j]));
                if i != j {
                    let reps = (1 - a[i][j]) as usize;
                    let mut se = self.e[j].clone();
                    let mut sf = self.f[j].clone();
                    for _ in 0..reps {
                        se = commutator(&self.e[i], &se);
                        sf = commutator(&self.f[i], &sf);
                    }
                    upd(se);
                    upd(sf);
                }
            }
        }
        worst / scale_ref.max(1.0)
    }

    pub fn grading_matrix(&self) -> CMat {
        let d: Vec<C64> = self.grading.iter().map(|&x| c(x)).collect();
        linalg::diag(&d)
    }
}

/// Solve `[h, e_i] = e_i` for `h` in the span of the finite Cartan generators.
///
/// Returns the diagonal of h and the residual of `[h, e_0] = -(h - 1) e_0`
/// (h here the dual Coxeter number).
pub fn grading_h(rep: &MatrixRep) -> Result<(Vec<f64>, f64)> {
    let n = rep.rank();
    for m in &rep.h {
        if !linalg::is_diagonal(m, 1e-14) {
            return Err(OdeimError::Unsupported("Cartan generators must be diagonal".into()));
        }
    }
    // a_ij from the representation itself
    let coef = |hm: &CMat, em: &CMat| -> f64 {
        let com = commutator(hm, em);
        let mut num = C64::zero();
        let mut den = 0.0;
        for jj in 0..em.ncols() {
            for ii in 0..em.nrows() {
                num += em[(ii, jj)].conj() * com[(ii, jj)];
                den += em[(ii, jj)].norm_sqr();
            }
        }
        (num / den).re
    };
    let a = CMat::from_fn(n, n, |i, j| c(coef(&rep.h[i + 1], &rep.e[j + 1])));
    // sum_i x_i a_ij = 1  <=>  a^T x = 1
    let at = a.transpose().to_owned();
    let ones = vec![c(1.0); n];
    let x = linalg::solve_vec(&at, &ones);
    let dim = rep.dim();
    let mut g = vec![0.0; dim];
    for (i, xi) in x.iter().enumerate() {
        for (j, gj) in g.iter_mut().enumerate() {
            *gj += xi.re * rep.h[i + 1][(j, j)].re;
        }
    }
    let hm = linalg::diag(&g.iter().map(|&v| c(v)).collect::<Vec<_>>());
    let com = commutator(&hm, &rep.e[0]);
    let target = scale(&rep.e[0], c(-(rep.h_dual as f64 - 1.0)));
    let res = max_abs(&(com - target)) / max_abs(&rep.e[0]);
    let mut fin = 0.0f64;
    for e in &rep.e[1..] {
        fin = fin.max(max_abs(&(commutator(&hm, e) - e)));
    }
    Ok((g, res.max(fin)))
}

/// Basis of the p-th exterior power: increasing index tuples in lexicographic order.
pub fn wedge_basis(n: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for a in start..n {
            cur.push(a);
            rec(a + 1, n, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, p, &mut Vec::new(), &mut out);
    out
}

/// Action of a matrix on the p-th exterior power by the Leibniz rule.
pub fn wedge_matrix(x: &CMat, basis: &[Vec<usize>], index: &HashMap<Vec<usize>, usize>) -> CMat {
    let n = x.nrows();
    let dim = basis.len();
    let mut out = zeros(dim, dim);
    for (col_idx, s) in basis.iter().enumerate() {
        for t in 0..s.len() {
            let a = s[t];
            for b in 0..n {
                let v = x[(b, a)];
                if v == C64::zero() {
                    continue;
                }
                if b != a && s.contains(&b) {
                    continue;
                }
                let mut ns = s.clone();
                ns[t] = b;
                let (sorted, sgn) = sort_with_sign(ns);
                let row = index[&sorted];
                out[(row, col_idx)] += v * sgn;
            }
        }
    }
    out
}

fn sort_with_sign(mut v: Vec<usize>) -> (Vec<usize>, f64) {
    let mut sgn = 1.0;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sgn = -sgn;
            j -= 1;
        }
    }
    (v, sgn)
}

pub fn wedge_rep(rep: &MatrixRep, p: usize) -> MatrixRep {
    let basis = wedge_basis(rep.dim(), p);
    let index: HashMap<Vec<usize>, usize> = basis.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
    let w = |m: &CMat| wedge_matrix(m, &basis, &index);
    let grading = basis
        .iter()
        .map(|s| s.iter().map(|&a| rep.grading[a]).sum())
        .collect();
    MatrixRep {
        name: format!("wedge{}({})", p, rep.name),
        e: rep.e.iter().map(w).collect(),
        f: rep.f.iter().map(w).collect(),
        h: rep.h.iter().map(w).collect(),
        eval_k: rep.eval_k,
        h_dual: rep.h_dual,
        grading,
    }
}

/// Coordinates of `u ^ v` in the basis of `wedge_basis(n, 2)`.
pub fn wedge2_vectors(u: &[C64], v: &[C64]) -> Vec<C64> {
    let n = u.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push(u[a] * v[b] - u[b] * v[a]);
        }
    }
    out
}

pub fn tensor_vectors(u: &[C64], v: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for a in u {
        for b in v {
            out.push(a * b);
        }
    }
    out
}

pub fn tensor_rep(a: &MatrixRep, b: &MatrixRep) -> MatrixRep {
    let ks = |x: &CMat, y: &CMat| linalg::kron_sum(x, y);
    let mut grading = Vec::with_capacity(a.dim() * b.dim());
    for ga in &a.grading {
        for gb in &b.grading {
            grading.push(ga + gb);
        }
    }
    MatrixRep {
        name: format!("({})x({})", a.name, b.name),
        e: a.e.iter().zip(&b.e).map(|(x, y)| ks(x, y)).collect(),
        f: a.f.iter().zip(&b.f).map(|(x, y)| ks(x, y)).collect(),
        h: a.h.iter().zip(&b.h).map(|(x, y)| ks(x, y)).collect(),
        eval_k: match (a.eval_k, b.eval_k) {
            (Some(x), Some(y)) if (x - y).abs() < 1e-15 => Some(x),
            _ => None,
        },
        h_dual: a.h_dual,
        grading,
    }
}

pub fn tensor_many(reps: &[MatrixRep]) -> Result<MatrixRep> {
    let mut it = reps.iter();
    let first = it
        .next()
        .ok_or_else(|| OdeimError::InvalidArgument("empty tensor product".into()))?
        .clone();
    Ok(it.fold(first, |acc, r| tensor_rep(&acc, r)))
}

/// `V_{k+s}` from `V_k`: `e_0 -> e^{2 pi i s} e_0`, `f_0 -> e^{-2 pi i s} f_0`.
pub fn evaluation_shift(rep: &MatrixRep, s: f64) -> MatrixRep {
    let mut out = rep.clone();
    let ph = C64::from_polar(1.0, TAU * s);
    out.e[0] = scale(&rep.e[0], ph);
    out.f[0] = scale(&rep.f[0], ph.conj());
    out.eval_k = rep.eval_k.map(|k| k + s);
    out
}

/// Diagonal of `base^{-k h}` with `base = exp(log_base)`.
pub fn rotation_operator(rep: &MatrixRep, log_base: C64, k: f64) -> Vec<C64> {
    rep.grading.iter().map(|&g| (-log_base * (k * g)).exp()).collect()
}

/// Isomorphism `R: V_k -> V_{k + D}` normalised so that its (1,1) entry is 1.
pub fn r_isomorphism(rep: &MatrixRep, d: f64) -> Result<CMat> {
    let tgt = evaluation_shift(rep, d);
    let sol = crate::intertwiners::solve_intertwiner(rep, &tgt)?;
    if sol.maps.len() != 1 {
        return Err(OdeimError::CheckFailed(format!(
            "isomorphism space has dimension {}",
            sol.maps.len()
        )));
    }
    let m = &sol.maps[0];
    let big = max_abs(m);
    let j = (0..m.ncols())
        .find(|&j| m[(j, j)].norm() > 1e-8 * big)
        .ok_or_else(|| OdeimError::Numerical("isomorphism has zero diagonal".into()))?;
    let piv = (j, j);
    Ok(scale(m, m[piv].inv()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg(s: &str) -> AffineAlgebra {
        AffineAlgebra::new(s.parse().unwrap()).unwrap()
    }

    #[test]
    fn a5_twisted_grading() {
        let a = alg("B3");
        let v = a.standard_rep().unwrap();
        let want = [2.5, 1.5, 0.5, -0.5, -1.5, -2.5];
        for (g, w) in v.grading.iter().zip(want) {
            assert!((g - w).abs() < 1e-13);
        }
        assert!(grading_h(&v).unwrap().1 < 1e-12);
    }

    #[test]
    fn chevalley_standard() {
        for s in ["A1", "A2", "A3", "B3", "B4", "C2", "C3", "C4", "G2"] {
            let a = alg(s);
            let v = a.standard_rep().unwrap();
            let r = v.chevalley_residual(&a.chevalley_matrix());
            assert!(r < 1e-12, "{} residual {}", s, r);
        }
    }

    #[test]
    fn orthogonal_membership() {
        // A S + S A^at = 0 with S = sum (-1)^{k+1}(E_kk + E_k'k') and A^at_ij = A_j'i'
        for n in 2..=4 {
            let a = alg(&format!("C{}", n));
            let v = a.standard_rep().unwrap();
            let d = v.dim();
            let s = CMat::from_fn(d, d, |i, j| {
                if i != j {
                    return c(0.0);
                }
                let k = if i < n + 1 { i + 1 } else { d - i };
                c(if k % 2 == 1 { 1.0 } else { -1.0 })
            });
            for m in v.e.iter().chain(&v.f).chain(&v.h) {
                let at = CMat::from_fn(d, d, |i, j| m[(d - 1 - j, d - 1 - i)]);
                assert!(max_abs(&(m * &s + &s * &at)) < 1e-13);
            }
        }
    }

    #[test]
    fn wedge_is_a_rep() {
        let a = alg("B3");
        let v = a.standard_rep().unwrap();
        let w = wedge_rep(&v, 3);
        assert_eq!(w.dim(), 20);
        assert!(w.chevalley_residual(&a.chevalley_matrix()) < 1e-12);
        assert!(grading_h(&w).unwrap().1 < 1e-12);
    }

    #[test]
    fn shift_is_periodic() {
        let a = alg("C3");
        let v = a.standard_rep().unwrap();
        let w = evaluation_shift(&v, 1.0);
        assert!(max_abs(&(&w.e[0] - &v.e[0])) < 1e-14);
    }
}
