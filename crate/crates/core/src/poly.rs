//! Multivariate polynomials with exact partial derivatives.
//!
//! Fields are restricted to constants and polynomials so that every
//! x-derivative used downstream is exact rather than approximated; this keeps
//! differentiation error out of the oracle comparisons.

use serde::{Deserialize, Serialize};

/// One monomial `coeff * prod_k x_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Sparse multivariate polynomial in `nvars` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: Vec<Term>,
}

impl Poly {
    pub fn new(nvars: usize, terms: Vec<Term>) -> Self {
        let mut p = Poly { nvars, terms };
        p.normalize();
        p
    }

    pub fn constant(nvars: usize, value: f64) -> Self {
        Poly::new(
            nvars,
            vec![Term {
                coeff: value,
                powers: vec![0; nvars],
            }],
        )
    }

    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: Vec::new(),
        }
    }

    /// Monomial `coeff * x_var`.
    pub fn linear(nvars: usize, var: usize, coeff: f64) -> Self {
        let mut powers = vec![0; nvars];
        powers[var] = 1;
        Poly::new(nvars, vec![Term { coeff, powers }])
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.powers.iter().all(|&p| p == 0))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .zip(x)
                        .map(|(&p, &xi)| xi.powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.powers[var] > 0)
            .map(|t| {
                let mut powers = t.powers.clone();
                powers[var] -= 1;
                Term {
                    coeff: t.coeff * t.powers[var] as f64,
                    powers,
                }
            })
            .collect();
        Poly::new(self.nvars, terms)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Poly::new(self.nvars, terms)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(
            self.nvars,
            self.terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * s,
                    powers: t.powers.clone(),
                })
                .collect(),
        )
    }

    /// Truncation-free product.
    pub fn mul(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let powers = a
                    .powers
                    .iter()
                    .zip(&b.powers)
                    .map(|(&p, &q)| p + q)
                    .collect();
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    powers,
                });
            }
        }
        Poly::new(self.nvars, terms)
    }

    /// Merge like monomials, drop exact zeros, sort for a canonical order.
    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.powers.cmp(&b.powers));
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.powers == t.powers => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != 0.0);
        self.terms = merged;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_partial_are_exact() {
        // p = 0.7 + 0.05 * x1^2  (three variables)
        let p = Poly::new(
            3,
            vec![
                Term {
                    coeff: 0.7,
                    powers: vec![0, 0, 0],
                },
                Term {
                    coeff: 0.05,
                    powers: vec![0, 2, 0],
                },
            ],
        );
        assert_eq!(p.eval(&[0.0, 1.0, 0.0]), 0.75);
        let dp = p.partial(1);
        assert_eq!(dp.eval(&[0.0, 1.0, 0.0]), 0.1);
        assert!((dp.eval(&[5.0, 3.0, -2.0]) - 0.3).abs() < 1e-15);
        assert!(p.partial(0).terms().is_empty());
    }

    #[test]
    fn product_merges_like_terms() {
        let a = Poly::new(
            2,
            vec![
                Term {
                    coeff: 1.0,
                    powers: vec![1, 0],
                },
                Term {
                    coeff: 1.0,
                    powers: vec![0, 1],
                },
            ],
        );
        let sq = a.mul(&a);
        // (x + y)^2 = x^2 + 2xy + y^2
        assert_eq!(sq.terms().len(), 3);
        assert_eq!(sq.eval(&[2.0, 3.0]), 25.0);
    }

    #[test]
    fn constant_detection() {
        assert!(Poly::constant(3, 0.5).is_constant());
        assert!(!Poly::linear(3, 0, 0.1).is_constant());
    }

    #[test]
    fn partial_matches_central_difference_at_random_points() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = Poly::new(
            3,
            vec![
                Term {
                    coeff: 0.3,
                    powers: vec![2, 1, 0],
                },
                Term {
                    coeff: -1.2,
                    powers: vec![0, 0, 3],
                },
                Term {
                    coeff: 0.9,
                    powers: vec![1, 1, 1],
                },
            ],
        );
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for v in 0..3 {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[v] += h;
                xm[v] -= h;
                let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
                let exact = p.partial(v).eval(&x);
                assert!(
                    (fd - exact).abs() <= 1e-8 * (1.0 + exact.abs()),
                    "var {v} at {x:?}: fd {fd} vs exact {exact}"
                );
            }
        }
    }
}
