//! Exact Lie-theoretic data: Cartan matrices, Dynkin foldings, twists.
//!
//! Node indices are 0-based in code and 1-based in labels and JSON.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{OdeimError, Result};

pub type Q = Rational64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AlgebraLabel {
    family: Family,
    rank: usize,
}

impl AlgebraLabel {
    pub fn new(family: Family, rank: usize) -> Result<Self> {
        let ok = match family {
            Family::A => rank >= 1,
            Family::B => rank >= 3,
            Family::C => rank >= 2,
            Family::D => rank >= 4,
            Family::E => (6..=8).contains(&rank),
            Family::F => rank == 4,
            Family::G => rank == 2,
        };
        if ok {
            Ok(Self { family, rank })
        } else {
            Err(OdeimError::InvalidLabel(format!("{:?}{}", family, rank)))
        }
    }

    /// Like `new` but allows the small D ranks that occur as folding targets (D3).
    fn tilde(family: Family, rank: usize) -> Self {
        Self { family, rank }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_simply_laced(&self) -> bool {
        matches!(self.family, Family::A | Family::D | Family::E)
    }
}

impl fmt::Display for AlgebraLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.family, self.rank)
    }
}

impl FromStr for AlgebraLabel {
    type Err = OdeimError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut chars = s.chars();
        let fam = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('A') => Family::A,
            Some('B') => Family::B,
            Some('C') => Family::C,
            Some('D') => Family::D,
            Some('E') => Family::E,
            Some('F') => Family::F,
            Some('G') => Family::G,
            _ => return Err(OdeimError::InvalidLabel(s.to_string())),
        };
        let rank: usize = chars
            .as_str()
            .trim_start_matches('_')
            .parse()
            .map_err(|_| OdeimError::InvalidLabel(s.to_string()))?;
        AlgebraLabel::new(fam, rank)
    }
}

/// Edges of the Dynkin diagram of a simply-laced algebra, 0-based.
pub fn dynkin_edges(label: AlgebraLabel) -> Result<Vec<(usize, usize)>> {
    let n = label.rank;
    let one = |v: &[(usize, usize)]| v.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
    Ok(match label.family {
        Family::A => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
        Family::D => {
            if n < 3 {
                return Err(OdeimError::InvalidLabel(label.to_string()));
            }
            let mut e: Vec<(usize, usize)> = (0..n - 2).map(|i| (i, i + 1)).collect();
            e.push((n - 3, n - 1));
            e
        }
        Family::E => match n {
            6 => one(&[(1, 2), (2, 3), (3, 5), (5, 6), (3, 4)]),
            7 => one(&[(1, 2), (2, 3), (3, 4), (4, 6), (6, 7), (4, 5)]),
            8 => one(&[(1, 2), (2, 3), (3, 4), (4, 5), (5, 7), (7, 8), (5, 6)]),
            _ => return Err(OdeimError::InvalidLabel(label.to_string())),
        },
        _ => {
            return Err(OdeimError::Unsupported(format!(
                "{} is not simply laced",
                label
            )))
        }
    })
}

pub fn simply_laced_cartan(label: AlgebraLabel) -> Result<Vec<Vec<i64>>> {
    let n = label.rank;
    let mut c = vec![vec![0i64; n]; n];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 2;
    }
    for (a, b) in dynkin_edges(label)? {
        c[a][b] = -1;
        c[b][a] = -1;
    }
    Ok(c)
}

/// Folded Cartan matrix `C_ij = sum_{l < <j>} C~_{i, sigma^l(j)}` on orbit minima.
///
/// Returns the orbit representatives (sorted) and the folded matrix.
pub fn fold_cartan(tilde: &[Vec<i64>], sigma: &[usize]) -> (Vec<usize>, Vec<Vec<i64>>) {
    let orbits = orbits(sigma);
    let nodes: Vec<usize> = orbits.iter().map(|o| o[0]).collect();
    let n = nodes.len();
    let mut c = vec![vec![0i64; n]; n];
    for (a, &i) in nodes.iter().enumerate() {
        for (b, orbit) in orbits.iter().enumerate() {
            c[a][b] = orbit.iter().map(|&j| tilde[i][j]).sum();
        }
    }
    (nodes, c)
}

/// Orbits of a permutation, each listed as `j, sigma(j), sigma^2(j), ...` from its minimum.
pub fn orbits(sigma: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; sigma.len()];
    let mut out = Vec::new();
    for start in 0..sigma.len() {
        if seen[start] {
            continue;
        }
        let mut orbit = vec![start];
        seen[start] = true;
        let mut j = sigma[start];
        while j != start {
            seen[j] = true;
            orbit.push(j);
            j = sigma[j];
        }
        out.push(orbit);
    }
    out
}

/// A vertex i is good when no edge from i hits two distinct points of one orbit.
pub fn good_vertices(tilde: &[Vec<i64>], sigma: &[usize]) -> Vec<bool> {
    let n = tilde.len();
    let b = |i: usize, j: usize| if i == j { 0 } else { -tilde[i][j] };
    (0..n)
        .map(|i| (0..n).all(|j| sigma[j] == j || b(i, j) * b(i, sigma[j]) == 0))
        .collect()
}

/// Bipartition of a connected Dynkin diagram with the first node at parity 0.
pub fn bipartition(tilde: &[Vec<i64>]) -> Vec<u8> {
    let n = tilde.len();
    let mut p = vec![u8::MAX; n];
    let mut queue = VecDeque::from([0usize]);
    p[0] = 0;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if j != i && tilde[i][j] != 0 && p[j] == u8::MAX {
                p[j] = 1 - p[i];
                queue.push_back(j);
            }
        }
    }
    p
}

fn sign(p: u8) -> Q {
    if p == 0 {
        Q::one()
    } else {
        -Q::one()
    }
}

/// Twists `k_i` on the nodes of the simply-laced diagram.
///
/// Along an edge (a, b) with a good, `k_b = k_a + s_a D_a / 2`. Edges are
/// visited in the order given by `edge_order` (a permutation of the edge
/// list); every edge constraint is checked once all twists are known.
pub fn twist_assignment(
    tilde: &[Vec<i64>],
    sigma: &[usize],
    d_tilde: &[Q],
    edge_order: Option<&[usize]>,
) -> Result<Vec<Q>> {
    let n = tilde.len();
    let good = good_vertices(tilde, sigma);
    if !good.iter().any(|&g| g) {
        return Err(OdeimError::InvalidArgument("no good vertex".into()));
    }
    let p = bipartition(tilde);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if tilde[i][j] != 0 {
                edges.push((i, j));
            }
        }
    }
    let order: Vec<usize> = match edge_order {
        Some(o) => {
            let mut sorted = o.to_vec();
            sorted.sort_unstable();
            if sorted != (0..edges.len()).collect::<Vec<_>>() {
                return Err(OdeimError::InvalidArgument("edge order is not a permutation".into()));
            }
            o.to_vec()
        }
        None => (0..edges.len()).collect(),
    };
    let half = Q::new(1, 2);
    let step = |a: usize| sign(p[a]) * d_tilde[a] * half;
    let mut k: Vec<Option<Q>> = vec![None; n];
    k[0] = Some(Q::zero());
    loop {
        let mut progress = false;
        for &e in &order {
            let (a, b) = edges[e];
            for (u, v) in [(a, b), (b, a)] {
                if let (Some(ku), None) = (k[u], k[v]) {
                    if good[u] {
                        k[v] = Some(ku + step(u));
                    } else if good[v] {
                        k[v] = Some(ku - step(v));
                    } else {
                        continue;
                    }
                    progress = true;
                }
            }
        }
        if !progress {
            break;
        }
    }
    let k: Vec<Q> = k
        .into_iter()
        .map(|x| x.ok_or_else(|| OdeimError::Numerical("twist propagation stalled".into())))
        .collect::<Result<_>>()?;
    for &(a, b) in &edges {
        for (u, v) in [(a, b), (b, a)] {
            if good[u] && k[v] != k[u] + step(u) {
                return Err(OdeimError::CheckFailed(format!(
                    "inconsistent twists on edge ({}, {})",
                    u + 1,
                    v + 1
                )));
            }
        }
    }
    Ok(k)
}

/// Complete folding data of a simple Lie algebra g.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldingData {
    pub g: AlgebraLabel,
    pub tilde: AlgebraLabel,
    pub r: usize,
    pub sigma: Vec<usize>,
    pub h_dual: i64,
    pub tilde_cartan: Vec<Vec<i64>>,
    /// Orbit minima, i.e. the node set of g inside the simply-laced diagram.
    pub nodes: Vec<usize>,
    pub orbit_len: Vec<usize>,
    pub d: Vec<Q>,
    pub d_tilde: Vec<Q>,
    pub cartan: Vec<Vec<i64>>,
    pub good: Vec<bool>,
    pub parity: Vec<u8>,
    pub k_tilde: Vec<Q>,
}

pub fn langlands_fold(g: AlgebraLabel) -> Result<FoldingData> {
    let n = g.rank;
    let (tilde, sigma, r, h_dual): (AlgebraLabel, Vec<usize>, usize, i64) = match g.family {
        Family::A => (g, (0..n).collect(), 1, n as i64 + 1),
        Family::D => (g, (0..n).collect(), 1, 2 * n as i64 - 2),
        Family::E => {
            let m = n as i64;
            (g, (0..n).collect(), 1, 3 * (m * m - 11 * m + 34))
        }
        Family::B => {
            let nt = 2 * n - 1;
            // sigma(i) = 2n - i on 1..2n-1
            (AlgebraLabel::tilde(Family::A, nt), (0..nt).map(|i| nt - 1 - i).collect(), 2, 2 * n as i64 - 1)
        }
        Family::C => {
            let nt = n + 1;
            let mut s: Vec<usize> = (0..nt).collect();
            s.swap(n - 1, n);
            (AlgebraLabel::tilde(Family::D, nt), s, 2, n as i64 + 1)
        }
        Family::F => {
            // 1<->6, 2<->5, 3 and 4 fixed
            (AlgebraLabel::tilde(Family::E, 6), vec![5, 4, 2, 3, 1, 0], 2, 9)
        }
        Family::G => {
            // 1 -> 3 -> 4 -> 1, 2 fixed
            (AlgebraLabel::tilde(Family::D, 4), vec![2, 1, 3, 0], 3, 4)
        }
    };
    let tilde_cartan = simply_laced_cartan(tilde)?;
    let nt = tilde.rank;
    let orbit_list = orbits(&sigma);
    let mut orbit_len = vec![0usize; nt];
    for o in &orbit_list {
        for &j in o {
            orbit_len[j] = o.len();
        }
    }
    let d_tilde: Vec<Q> = orbit_len.iter().map(|&l| Q::new(l as i64, r as i64)).collect();
    let (nodes, cartan) = fold_cartan(&tilde_cartan, &sigma);
    if nodes.len() != n {
        return Err(OdeimError::CheckFailed(format!("folding of {} has wrong rank", g)));
    }
    let d: Vec<Q> = nodes.iter().map(|&i| d_tilde[i]).collect();
    let good = good_vertices(&tilde_cartan, &sigma);
    let parity = bipartition(&tilde_cartan);
    let k_tilde = twist_assignment(&tilde_cartan, &sigma, &d_tilde, None)?;
    let data = FoldingData {
        g,
        tilde,
        r,
        sigma,
        h_dual,
        tilde_cartan,
        nodes,
        orbit_len,
        d,
        d_tilde,
        cartan,
        good,
        parity,
        k_tilde,
    };
    let cbar = data.sym_cartan();
    for i in 0..n {
        for j in 0..n {
            if cbar[i][j] != cbar[j][i] {
                return Err(OdeimError::CheckFailed("DC is not symmetric".into()));
            }
        }
    }
    Ok(data)
}

impl FoldingData {
    pub fn rank(&self) -> usize {
        self.nodes.len()
    }

    /// Incidence matrix `B = 2 - C` of g.
    pub fn incidence(&self) -> Vec<Vec<i64>> {
        let n = self.rank();
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0 } else { -self.cartan[i][j] }).collect())
            .collect()
    }

    /// Symmetrised Cartan matrix `DC`.
    pub fn sym_cartan(&self) -> Vec<Vec<Q>> {
        self.cartan
            .iter()
            .zip(&self.d)
            .map(|(row, &di)| row.iter().map(|&c| di * Q::from_integer(c)).collect())
            .collect()
    }

    /// Twist of node i of g (index into `nodes`).
    pub fn k(&self, i: usize) -> Q {
        self.k_tilde[self.nodes[i]]
    }

    pub fn k_values(&self) -> Vec<Q> {
        (0..self.rank()).map(|i| self.k(i)).collect()
    }

    /// `s_i = (-1)^{p(i)}` for node i of g.
    pub fn s(&self, i: usize) -> Q {
        sign(self.parity[self.nodes[i]])
    }

    /// Both sides of `k_j - k_i - s_i D_i / 2 = -s_j (B_ij - 1) / (2r)`, when `B_ij != 0`.
    pub fn lemma_kdiff(&self, i: usize, j: usize) -> Option<(Q, Q)> {
        let b = self.incidence()[i][j];
        if b == 0 {
            return None;
        }
        let lhs = self.k(j) - self.k(i) - self.s(i) * self.d[i] / 2;
        let rhs = -self.s(j) * Q::from_integer(b - 1) / Q::from_integer(2 * self.r as i64);
        Some((lhs, rhs))
    }

    /// Coefficients of the highest root of g in the simple-root basis.
    pub fn highest_root(&self) -> Vec<i64> {
        highest_root(&self.cartan)
    }

    /// Matrix `a_ij` with `[h_i, e_j] = a_ij e_j` in a level-zero representation of
    /// the twisted affine algebra. Index 0 is the affine node, index `i + 1` is node i of g.
    pub fn affine_chevalley_matrix(&self) -> Vec<Vec<i64>> {
        let n = self.rank();
        let c = &self.cartan;
        let theta = self.highest_root();
        let mut a = vec![vec![0i64; n + 1]; n + 1];
        a[0][0] = 2;
        for i in 0..n {
            for j in 0..n {
                a[i + 1][j + 1] = c[j][i];
            }
        }
        for j in 0..n {
            a[0][j + 1] = -(0..n).map(|k| theta[k] * c[j][k]).sum::<i64>();
            let v: Q = (0..n)
                .map(|k| Q::from_integer(theta[k] * c[k][j]) * self.d[k])
                .fold(Q::zero(), |s, x| s + x);
            a[j + 1][0] = -v.to_integer();
        }
        a
    }

    pub fn record(&self) -> FoldingRecord {
        FoldingRecord {
            algebra: self.g.to_string(),
            tilde: self.tilde.to_string(),
            r: self.r,
            sigma: self.sigma.iter().map(|&s| s + 1).collect(),
            d: self.d.iter().map(|q| q_to_string(*q)).collect(),
            k: self.k_tilde.iter().map(|q| q_to_string(*q)).collect(),
            cartan: self.cartan.clone(),
        }
    }
}

/// JSON-serialisable form of the folding data. Rationals are stored as `"p/q"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldingRecord {
    pub algebra: String,
    pub tilde: String,
    pub r: usize,
    pub sigma: Vec<usize>,
    #[serde(rename = "D")]
    pub d: Vec<String>,
    pub k: Vec<String>,
    pub cartan: Vec<Vec<i64>>,
}

impl FoldingRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: FoldingRecord = serde_json::from_str(s).map_err(|e| OdeimError::Parse(e.to_string()))?;
        for q in rec.d.iter().chain(&rec.k) {
            parse_q(q)?;
        }
        Ok(rec)
    }

    pub fn d_values(&self) -> Result<Vec<Q>> {
        self.d.iter().map(|s| parse_q(s)).collect()
    }

    pub fn k_values(&self) -> Result<Vec<Q>> {
        self.k.iter().map(|s| parse_q(s)).collect()
    }
}

pub fn q_to_string(q: Q) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_q(s: &str) -> Result<Q> {
    let err = || OdeimError::Parse(format!("bad rational {:?}", s));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: i64 = a.trim().parse().map_err(|_| err())?;
            let b: i64 = b.trim().parse().map_err(|_| err())?;
            if b == 0 {
                return Err(err());
            }
            Ok(Q::new(a, b))
        }
        None => Ok(Q::from_integer(s.trim().parse().map_err(|_| err())?)),
    }
}

pub fn q_to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Positive roots in the simple-root basis, generated by root strings.
///
/// Uses `C_ij = alpha_j(alpha_i^vee)`.
pub fn positive_roots(cartan: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = cartan.len();
    let mut roots: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
        .collect();
    let mut layer = roots.clone();
    while !layer.is_empty() {
        let mut next: Vec<Vec<i64>> = Vec::new();
        for beta in &layer {
            for i in 0..n {
                // p = largest p with beta - p alpha_i a root
                let mut p = 0;
                loop {
                    let mut down = beta.clone();
                    down[i] -= p + 1;
                    if down.iter().all(|&x| x >= 0) && roots.contains(&down) {
                        p += 1;
                    } else {
                        break;
                    }
                }
                let pairing: i64 = (0..n).map(|k| beta[k] * cartan[i][k]).sum();
                if p - pairing > 0 {
                    let mut up = beta.clone();
                    up[i] += 1;
                    if !roots.contains(&up) && !next.contains(&up) {
                        next.push(up);
                    }
                }
            }
        }
        roots.extend(next.iter().cloned());
        layer = next;
    }
    roots
}

pub fn highest_root(cartan: &[Vec<i64>]) -> Vec<i64> {
    positive_roots(cartan)
        .into_iter()
        .max_by_key(|r| r.iter().sum::<i64>())
        .unwrap_or_default()
}

/// `omega = e^{2 pi i / (h (M+1))}`, `Omega = e^{2 pi i M / (M+1)}`, `gamma = e^{2 pi i / h}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaeParameters {
    pub omega: Complex64,
    pub big_omega: Complex64,
    pub gamma: Complex64,
}

pub fn bae_parameters(m: f64, h_dual: i64) -> Result<BaeParameters> {
    if !(m > 0.0) || h_dual <= 0 {
        return Err(OdeimError::InvalidArgument("M and h must be positive".into()));
    }
    let tau = std::f64::consts::TAU;
    let h = h_dual as f64;
    Ok(BaeParameters {
        omega: Complex64::from_polar(1.0, tau / (h * (m + 1.0))),
        big_omega: Complex64::from_polar(1.0, tau * m / (m + 1.0)),
        gamma: Complex64::from_polar(1.0, tau / h),
    })
}

/// `|q|` as f64, handy for tolerance reporting of exact identities.
pub fn q_abs(q: Q) -> f64 {
    q_to_f64(q.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lab(s: &str) -> AlgebraLabel {
        s.parse().unwrap()
    }

    #[test]
    fn label_bounds() {
        assert!(AlgebraLabel::new(Family::B, 2).is_err());
        assert!(AlgebraLabel::new(Family::D, 3).is_err());
        assert!(AlgebraLabel::new(Family::E, 9).is_err());
        assert!(AlgebraLabel::new(Family::G, 2).is_ok());
        assert_eq!(lab("F4").to_string(), "F4");
        assert!("X3".parse::<AlgebraLabel>().is_err());
    }

    #[test]
    fn e6_numbering() {
        let c = simply_laced_cartan(lab("E6")).unwrap();
        assert_eq!(c[2][3], -1);
        assert_eq!(c[2][4], -1);
        assert_eq!(c[3][4], 0);
    }

    #[test]
    fn b3_asymmetry() {
        let f = langlands_fold(lab("B3")).unwrap();
        assert_eq!(f.cartan[1][2], -1);
        assert_eq!(f.cartan[2][1], -2);
    }

    #[test]
    fn g2_sym() {
        let f = langlands_fold(lab("G2")).unwrap();
        assert_eq!(f.cartan, vec![vec![2, -1], vec![-3, 2]]);
        let cb = f.sym_cartan();
        assert_eq!(cb[1][1], Q::new(2, 3));
        assert_eq!(cb[0][1], Q::from_integer(-1));
    }

    #[test]
    fn good_vertex_examples() {
        let f = langlands_fold(lab("B3")).unwrap();
        assert_eq!(f.good, vec![true, true, false, true, true]);
        let g = langlands_fold(lab("G2")).unwrap();
        assert_eq!(g.good, vec![true, false, true, true]);
    }

    #[test]
    fn dual_coxeter_from_roots() {
        for s in ["A3", "B3", "B4", "C2", "C3", "D4", "E6", "F4", "G2"] {
            let f = langlands_fold(lab(s)).unwrap();
            let theta = f.highest_root();
            let marks: Q = theta
                .iter()
                .zip(&f.d)
                .map(|(&c, &d)| Q::from_integer(c) * d)
                .fold(Q::zero(), |a, b| a + b);
            assert_eq!(marks + 1, Q::from_integer(f.h_dual), "{}", s);
        }
    }

    #[test]
    fn json_roundtrip() {
        let f = langlands_fold(lab("C3")).unwrap();
        let rec = f.record();
        let back = FoldingRecord::from_json(&rec.to_json()).unwrap();
        assert_eq!(rec, back);
        assert_eq!(back.k_values().unwrap(), f.k_tilde);
    }

    #[test]
    fn omega_power() {
        let p = bae_parameters(2.0, 5).unwrap();
        let z = p.omega.powf(10.0);
        assert!((z - p.big_omega).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn twists_independent_of_order(seed in 0u64..10_000, which in 0usize..8) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let names = ["B3", "B5", "C2", "C4", "C5", "F4", "G2", "E7"];
            let f = langlands_fold(lab(names[which])).unwrap();
            let nedges = f.tilde_cartan.iter().enumerate()
                .map(|(i, row)| row.iter().skip(i + 1).filter(|&&x| x != 0).count()).sum::<usize>();
            let mut order: Vec<usize> = (0..nedges).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let k = twist_assignment(&f.tilde_cartan, &f.sigma, &f.d_tilde, Some(&order)).unwrap();
            prop_assert_eq!(k, f.k_tilde.clone());
        }

        #[test]
        fn lemma_kdiff_holds(which in 0usize..10) {
            let names = ["A4", "B3", "B4", "B6", "C2", "C3", "C6", "D5", "F4", "G2"];
            let f = langlands_fold(lab(names[which])).unwrap();
            for i in 0..f.rank() {
                for j in 0..f.rank() {
                    if let Some((l, r)) = f.lemma_kdiff(i, j) {
                        prop_assert_eq!(l, r);
                    }
                }
            }
        }
    }
}
