//! Aggregate moment bookkeeping for particles outside the tracked index set.
//!
//! For every observable `f` in {1, a, b, m, a², ab, b²} the change
//! `f(p∘q) - f(p) - f(q)` multiplied by the rate `p.q` is a polynomial of degree
//! at most two in the arms of each partner, so the untracked population is fully
//! described by these seven sums. Mixed terms (tracked `p`, untracked `q`) need
//! higher monomials in `p`, which are summed directly over the tracked types.

use std::collections::BTreeMap;

use crate::model::ParticleType;

/// Exponents of `(a, b, m)`.
pub type Monomial = [u8; 3];

pub const BASIS_LEN: usize = 7;

/// Observables carried by the reservoir, in state-vector order.
pub const BASIS: [Monomial; BASIS_LEN] = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [2, 0, 0], [1, 1, 0], [0, 2, 0]];

pub fn eval_monomial(mono: &Monomial, p: &ParticleType) -> f64 {
    (p.a as f64).powi(mono[0] as i32) * (p.b as f64).powi(mono[1] as i32) * (p.m as f64).powi(mono[2] as i32)
}

pub fn basis_values(p: &ParticleType) -> [f64; BASIS_LEN] {
    std::array::from_fn(|k| eval_monomial(&BASIS[k], p))
}

/// Polynomial in the six variables (a_p, b_p, m_p, a_q, b_q, m_q).
#[derive(Debug, Clone, Default, PartialEq)]
struct PairPoly(BTreeMap<[u8; 6], f64>);

impl PairPoly {
    fn constant(c: f64) -> Self {
        let mut p = Self::default();
        if c != 0.0 {
            p.0.insert([0; 6], c);
        }
        p
    }

    fn var(index: usize) -> Self {
        let mut e = [0u8; 6];
        e[index] = 1;
        Self(BTreeMap::from([(e, 1.0)]))
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.0 {
            *out.0.entry(*e).or_insert(0.0) += c;
        }
        out.0.retain(|_, c| *c != 0.0);
        out
    }

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|(e, c)| (*e, c * s)).collect())
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = Self::default();
        for (e1, c1) in &self.0 {
            for (e2, c2) in &other.0 {
                let e: [u8; 6] = std::array::from_fn(|i| e1[i] + e2[i]);
                *out.0.entry(e).or_insert(0.0) += c1 * c2;
            }
        }
        out.0.retain(|_, c| *c != 0.0);
        out
    }

    fn monomial(vars: [&PairPoly; 3], mono: &Monomial) -> Self {
        let mut out = Self::constant(1.0);
        for (v, &e) in vars.iter().zip(mono) {
            for _ in 0..e {
                out = out.mul(v);
            }
        }
        out
    }
}

/// One term `coef * P[p_mono] * R[q_basis]` of a reservoir derivative.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub coef: f64,
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone)]
pub struct ReservoirModel {
    /// Monomials in the tracked partner that mixed terms need.
    pub tracked_monomials: Vec<Monomial>,
    /// Tracked-untracked encounters, indexed into `tracked_monomials` and `BASIS`.
    pub mixed: [Vec<Term>; BASIS_LEN],
    /// Untracked-untracked encounters, both factors indexed into `BASIS`
    /// (already carrying the 1/2 of unordered pairs).
    pub internal: [Vec<Term>; BASIS_LEN],
}

impl ReservoirModel {
    pub fn new() -> Self {
        let (pa, pb, pm) = (PairPoly::var(0), PairPoly::var(1), PairPoly::var(2));
        let (qa, qb, qm) = (PairPoly::var(3), PairPoly::var(4), PairPoly::var(5));
        let one = PairPoly::constant(1.0);
        let merged = [pa.add(&qa).sub(&one), pb.add(&qb).sub(&one), pm.add(&qm)];
        let rate = qa.mul(&pb).add(&pa.mul(&qb));

        let basis_index = |mono: &[u8]| BASIS.iter().position(|b| b[..] == *mono);
        let mut tracked_monomials: Vec<Monomial> = Vec::new();
        let mut mixed: [Vec<Term>; BASIS_LEN] = Default::default();
        let mut internal: [Vec<Term>; BASIS_LEN] = Default::default();

        for (k, mono) in BASIS.iter().enumerate() {
            let f_merged = PairPoly::monomial([&merged[0], &merged[1], &merged[2]], mono);
            let f_p = PairPoly::monomial([&pa, &pb, &pm], mono);
            let f_q = PairPoly::monomial([&qa, &qb, &qm], mono);

            let mixed_poly = f_merged.sub(&f_q).mul(&rate);
            for (e, c) in &mixed_poly.0 {
                let p_mono: Monomial = [e[0], e[1], e[2]];
                let q = basis_index(&e[3..]).expect("untracked factor stays within the second-order basis");
                let p = match tracked_monomials.iter().position(|m| *m == p_mono) {
                    Some(i) => i,
                    None => {
                        tracked_monomials.push(p_mono);
                        tracked_monomials.len() - 1
                    }
                };
                mixed[k].push(Term { coef: *c, p, q });
            }

            let internal_poly = f_merged.sub(&f_p).sub(&f_q).mul(&rate);
            for (e, c) in &internal_poly.0 {
                let p = basis_index(&e[..3]).expect("second-order closure");
                let q = basis_index(&e[3..]).expect("second-order closure");
                internal[k].push(Term { coef: 0.5 * c, p, q });
            }
        }
        Self { tracked_monomials, mixed, internal }
    }
}

impl Default for ReservoirModel {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force pair sums over two small explicit populations.
    fn pair_sum(
        xs: &[(ParticleType, f64)],
        ys: &[(ParticleType, f64)],
        f: impl Fn(&ParticleType, &ParticleType) -> f64,
    ) -> f64 {
        let mut s = 0.0;
        for (p, cp) in xs {
            for (q, cq) in ys {
                s += f(p, q) * cp * cq;
            }
        }
        s
    }

    fn pt(a: u32, b: u32, m: u32) -> ParticleType {
        ParticleType { a, b, m }
    }

    fn merged(p: &ParticleType, q: &ParticleType) -> ParticleType {
        // allow formal merges of zero-rate pairs; they are weighted by a zero rate
        ParticleType { a: (p.a + q.a).saturating_sub(1), b: (p.b + q.b).saturating_sub(1), m: p.m + q.m }
    }

    #[test]
    fn moment_terms_match_brute_force() {
        let model = ReservoirModel::new();
        let tracked = vec![(pt(1, 2, 1), 0.3), (pt(3, 0, 2), 0.2), (pt(2, 2, 4), 0.05)];
        let untracked = vec![(pt(4, 1, 9), 0.01), (pt(0, 5, 12), 0.02), (pt(2, 3, 10), 0.015)];
        let moments = |pop: &[(ParticleType, f64)], mono: &Monomial| -> f64 {
            pop.iter().map(|(p, c)| c * eval_monomial(mono, p)).sum()
        };
        let r: Vec<f64> = BASIS.iter().map(|m| moments(&untracked, m)).collect();
        let t: Vec<f64> = model.tracked_monomials.iter().map(|m| moments(&tracked, m)).collect();
        for (k, mono) in BASIS.iter().enumerate() {
            let f = |p: &ParticleType| eval_monomial(mono, p);
            let expected_mixed = pair_sum(&tracked, &untracked, |p, q| {
                let rate = p.rate(q) as f64;
                if rate == 0.0 {
                    0.0
                } else {
                    (f(&merged(p, q)) - f(q)) * rate
                }
            });
            let got_mixed: f64 = model.mixed[k].iter().map(|term| term.coef * t[term.p] * r[term.q]).sum();
            assert!((expected_mixed - got_mixed).abs() < 1e-12, "mixed k={k}: {expected_mixed} vs {got_mixed}");

            let expected_internal = 0.5
                * pair_sum(&untracked, &untracked, |p, q| {
                    let rate = p.rate(q) as f64;
                    if rate == 0.0 {
                        0.0
                    } else {
                        (f(&merged(p, q)) - f(p) - f(q)) * rate
                    }
                });
            // self-pairs p == q appear in the continuum moment balance; they are part of the
            // brute-force sum as well, so both sides agree
            let got_internal: f64 = model.internal[k].iter().map(|term| term.coef * r[term.p] * r[term.q]).sum();
            assert!(
                (expected_internal - got_internal).abs() < 1e-12,
                "internal k={k}: {expected_internal} vs {got_internal}"
            );
        }
    }
}
