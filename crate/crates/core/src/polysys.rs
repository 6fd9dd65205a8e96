//! Sparse multivariate polynomial systems, the gamma-trick homotopy between
//! a start and a target system, and total-degree start systems.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ComplexMatrix, ComplexScalar};
use crate::rng::SeededRng;
use crate::tracker::PathHomotopy;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polynomial {index} is identically zero")]
    ZeroPolynomial { index: usize },
    #[error("polynomial {index} is a nonzero constant")]
    ConstantPolynomial { index: usize },
    #[error("system has {equations} equations in {nvars} variables; a square system is required")]
    NotSquare { equations: usize, nvars: usize },
    #[error("system has no equations")]
    Empty,
    #[error("continuation parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("invalid system file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: ComplexScalar,
    pub exponents: Vec<u32>,
}

impl Term {
    pub fn new(coefficient: ComplexScalar, exponents: Vec<u32>) -> Self {
        Self {
            coefficient,
            exponents,
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn monomial(&self, x: &[ComplexScalar]) -> ComplexScalar {
        self.exponents
            .iter()
            .zip(x)
            .fold(ComplexScalar::new(1.0, 0.0), |acc, (&e, xi)| {
                acc * xi.powu(e)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient.norm() == 0.0)
    }

    /// Maximal total degree over the terms with a nonzero coefficient.
    pub fn total_degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|t| t.coefficient.norm() != 0.0)
            .map(Term::degree)
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[ComplexScalar]) -> ComplexScalar {
        self.terms
            .iter()
            .map(|t| t.coefficient * t.monomial(x))
            .sum()
    }

    /// Partial derivative with respect to variable `var`, evaluated at `x`.
    pub fn partial(&self, var: usize, x: &[ComplexScalar]) -> ComplexScalar {
        let mut acc = ComplexScalar::new(0.0, 0.0);
        for term in &self.terms {
            let e = term.exponents[var];
            if e == 0 {
                continue;
            }
            let mut value = term.coefficient * e as f64;
            for (j, (&ej, xj)) in term.exponents.iter().zip(x).enumerate() {
                let power = if j == var { ej - 1 } else { ej };
                value *= xj.powu(power);
            }
            acc += value;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    nvars: usize,
    polynomials: Vec<Polynomial>,
}

impl PolySystem {
    pub fn new(nvars: usize, polynomials: Vec<Polynomial>) -> Result<Self, PolyError> {
        for poly in &polynomials {
            for term in &poly.terms {
                if term.exponents.len() != nvars {
                    return Err(PolyError::DimensionMismatch {
                        expected: nvars,
                        found: term.exponents.len(),
                    });
                }
            }
        }
        Ok(Self { nvars, polynomials })
    }

    /// The affine system `A x - b`.
    pub fn linear(a: &ComplexMatrix, b: &[ComplexScalar]) -> Result<Self, PolyError> {
        let n = a.cols();
        if b.len() != a.rows() {
            return Err(PolyError::DimensionMismatch {
                expected: a.rows(),
                found: b.len(),
            });
        }
        let polys = (0..a.rows())
            .map(|i| {
                let mut terms: Vec<Term> = (0..n)
                    .map(|j| {
                        let mut e = vec![0; n];
                        e[j] = 1;
                        Term::new(a[(i, j)], e)
                    })
                    .collect();
                terms.push(Term::new(-b[i], vec![0; n]));
                Polynomial::new(terms)
            })
            .collect();
        Self::new(n, polys)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn polynomials(&self) -> &[Polynomial] {
        &self.polynomials
    }

    pub fn len(&self) -> usize {
        self.polynomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polynomials.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.polynomials.len() == self.nvars
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.polynomials
            .iter()
            .map(Polynomial::total_degree)
            .collect()
    }

    fn check_point(&self, x: &[ComplexScalar]) -> Result<(), PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, PolyError> {
        self.check_point(x)?;
        Ok(self.polynomials.iter().map(|p| p.evaluate(x)).collect())
    }

    pub fn jacobian(&self, x: &[ComplexScalar]) -> Result<ComplexMatrix, PolyError> {
        self.check_point(x)?;
        let mut jac = ComplexMatrix::zeros(self.polynomials.len(), self.nvars);
        for (i, poly) in self.polynomials.iter().enumerate() {
            for j in 0..self.nvars {
                jac[(i, j)] = poly.partial(j, x);
            }
        }
        Ok(jac)
    }

    pub fn from_json(text: &str) -> Result<Self, PolyError> {
        let file: SystemFile = serde_json::from_str(text)?;
        file.into_system()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SystemFile::from_system(self)).expect("serializable")
    }
}

/// On-disk layout: `{"nvars": k, "polys": [[{"re":..,"im":..,"exp":[..]}, ..], ..]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SystemFile {
    pub nvars: usize,
    pub polys: Vec<Vec<TermRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TermRecord {
    pub re: f64,
    pub im: f64,
    pub exp: Vec<u32>,
}

impl SystemFile {
    pub fn into_system(self) -> Result<PolySystem, PolyError> {
        let polys = self
            .polys
            .into_iter()
            .map(|terms| {
                Polynomial::new(
                    terms
                        .into_iter()
                        .map(|t| Term::new(ComplexScalar::new(t.re, t.im), t.exp))
                        .collect(),
                )
            })
            .collect();
        PolySystem::new(self.nvars, polys)
    }

    pub fn from_system(sys: &PolySystem) -> Self {
        Self {
            nvars: sys.nvars,
            polys: sys
                .polynomials
                .iter()
                .map(|p| {
                    p.terms
                        .iter()
                        .map(|t| TermRecord {
                            re: t.coefficient.re,
                            im: t.coefficient.im,
                            exp: t.exponents.clone(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// `h(x, t) = gamma (1 - t) g(x) + t f(x)`.
#[derive(Debug, Clone)]
pub struct Homotopy {
    target: PolySystem,
    start: PolySystem,
    gamma: ComplexScalar,
}

impl Homotopy {
    pub fn new(
        target: PolySystem,
        start: PolySystem,
        gamma: ComplexScalar,
    ) -> Result<Self, PolyError> {
        if target.nvars != start.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: target.nvars,
                found: start.nvars,
            });
        }
        if target.len() != start.len() {
            return Err(PolyError::DimensionMismatch {
                expected: target.len(),
                found: start.len(),
            });
        }
        Ok(Self {
            target,
            start,
            gamma,
        })
    }

    /// Draws `gamma` uniformly from the unit circle.
    pub fn with_random_gamma(
        target: PolySystem,
        start: PolySystem,
        rng: &mut SeededRng,
    ) -> Result<Self, PolyError> {
        let gamma = rng.unit_circle();
        Self::new(target, start, gamma)
    }

    pub fn gamma(&self) -> ComplexScalar {
        self.gamma
    }

    pub fn target(&self) -> &PolySystem {
        &self.target
    }

    pub fn start(&self) -> &PolySystem {
        &self.start
    }

    fn check_t(t: f64) -> Result<(), PolyError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(PolyError::ParameterOutOfRange(t));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[ComplexScalar], t: f64) -> Result<Vec<ComplexScalar>, PolyError> {
        Self::check_t(t)?;
        // keep the endpoints exact
        if t == 0.0 {
            return Ok(self
                .start
                .evaluate(x)?
                .into_iter()
                .map(|g| self.gamma * g)
                .collect());
        }
        if t == 1.0 {
            return self.target.evaluate(x);
        }
        let f = self.target.evaluate(x)?;
        let g = self.start.evaluate(x)?;
        let wg = self.gamma * (1.0 - t);
        Ok(f.into_iter().zip(g).map(|(f, g)| wg * g + t * f).collect())
    }

    pub fn jacobian(&self, x: &[ComplexScalar], t: f64) -> Result<ComplexMatrix, PolyError> {
        Self::check_t(t)?;
        let jf = self.target.jacobian(x)?;
        let jg = self.start.jacobian(x)?;
        Ok(jg
            .affine_combination(self.gamma * (1.0 - t), &jf, ComplexScalar::new(t, 0.0))
            .expect("same shape"))
    }

    /// `dh/dt = f(x) - gamma g(x)`.
    pub fn dt(&self, x: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, PolyError> {
        let f = self.target.evaluate(x)?;
        let g = self.start.evaluate(x)?;
        Ok(f.into_iter()
            .zip(g)
            .map(|(f, g)| f - self.gamma * g)
            .collect())
    }
}

impl PathHomotopy for Homotopy {
    fn dimension(&self) -> usize {
        self.target.nvars
    }

    fn evaluate(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar> {
        self.eval(x, t).expect("point dimension checked by tracker")
    }

    fn jacobian_x(&self, x: &[ComplexScalar], t: f64) -> ComplexMatrix {
        self.jacobian(x, t)
            .expect("point dimension checked by tracker")
    }

    fn derivative_t(&self, x: &[ComplexScalar], _t: f64) -> Vec<ComplexScalar> {
        self.dt(x).expect("point dimension checked by tracker")
    }
}

/// Total-degree start system `g_i = c_i x_i^{d_i} - 1` with the `c_i` drawn
/// from the unit circle, together with all `prod d_i` start solutions.
pub fn total_degree_start(
    f: &PolySystem,
    rng: &mut SeededRng,
) -> Result<(PolySystem, Vec<Vec<ComplexScalar>>), PolyError> {
    let constants: Vec<ComplexScalar> = (0..f.len()).map(|_| rng.unit_circle()).collect();
    total_degree_start_with(f, &constants)
}

/// As [`total_degree_start`] with explicit constants `c_i` (each nonzero).
pub fn total_degree_start_with(
    f: &PolySystem,
    constants: &[ComplexScalar],
) -> Result<(PolySystem, Vec<Vec<ComplexScalar>>), PolyError> {
    if f.is_empty() {
        return Err(PolyError::Empty);
    }
    if !f.is_square() {
        return Err(PolyError::NotSquare {
            equations: f.len(),
            nvars: f.nvars,
        });
    }
    if constants.len() != f.len() {
        return Err(PolyError::DimensionMismatch {
            expected: f.len(),
            found: constants.len(),
        });
    }
    let n = f.nvars;
    let mut degrees = Vec::with_capacity(n);
    for (i, poly) in f.polynomials.iter().enumerate() {
        if poly.is_zero() {
            return Err(PolyError::ZeroPolynomial { index: i });
        }
        let d = poly.total_degree();
        if d == 0 {
            return Err(PolyError::ConstantPolynomial { index: i });
        }
        degrees.push(d);
    }

    let polys = (0..n)
        .map(|i| {
            let mut e = vec![0; n];
            e[i] = degrees[i];
            Polynomial::new(vec![
                Term::new(constants[i], e),
                Term::new(ComplexScalar::new(-1.0, 0.0), vec![0; n]),
            ])
        })
        .collect();
    let g = PolySystem::new(n, polys)?;

    // roots of c x^d = 1: x = c^{-1/d} * exp(2 pi i k / d)
    let roots: Vec<Vec<ComplexScalar>> = degrees
        .iter()
        .zip(constants)
        .map(|(&d, c)| {
            let base =
                ComplexScalar::from_polar(c.norm().powf(-1.0 / d as f64), -c.arg() / d as f64);
            (0..d)
                .map(|k| base * ComplexScalar::from_polar(1.0, TAU * k as f64 / d as f64))
                .collect()
        })
        .collect();

    let total: usize = degrees.iter().map(|&d| d as usize).product();
    let mut starts = Vec::with_capacity(total);
    let mut index = vec![0usize; n];
    for _ in 0..total {
        starts.push((0..n).map(|i| roots[i][index[i]]).collect());
        for i in (0..n).rev() {
            index[i] += 1;
            if index[i] < degrees[i] as usize {
                break;
            }
            index[i] = 0;
        }
    }
    Ok((g, starts))
}

/// Random dense system: polynomial `i` has every monomial of total degree
/// at most `degrees[i]` with a complex Gaussian coefficient.
pub fn random_dense_system(nvars: usize, degrees: &[u32], rng: &mut SeededRng) -> PolySystem {
    let polys = degrees
        .iter()
        .map(|&d| {
            let terms = exponents_up_to(nvars, d)
                .into_iter()
                .map(|e| Term::new(rng.complex_gaussian(), e))
                .collect();
            Polynomial::new(terms)
        })
        .collect();
    PolySystem::new(nvars, polys).expect("exponent vectors sized by construction")
}

fn exponents_up_to(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            rec(prefix, left - 1, budget - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), nvars, degree, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{distance, norm};

    fn c(re: f64) -> ComplexScalar {
        ComplexScalar::new(re, 0.0)
    }

    fn univariate(coeffs: &[(f64, u32)]) -> PolySystem {
        let terms = coeffs
            .iter()
            .map(|&(a, e)| Term::new(c(a), vec![e]))
            .collect();
        PolySystem::new(1, vec![Polynomial::new(terms)]).unwrap()
    }

    /// Term-by-term evaluation with repeated multiplication.
    fn naive_eval(sys: &PolySystem, x: &[ComplexScalar]) -> Vec<ComplexScalar> {
        sys.polynomials()
            .iter()
            .map(|p| {
                let mut acc = ComplexScalar::new(0.0, 0.0);
                for t in &p.terms {
                    let mut m = t.coefficient;
                    for (j, &e) in t.exponents.iter().enumerate() {
                        for _ in 0..e {
                            m *= x[j];
                        }
                    }
                    acc += m;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn evaluate_simple_quadric() {
        let sys = univariate(&[(1.0, 2), (-1.0, 0)]);
        assert_eq!(sys.evaluate(&[c(1.0)]).unwrap(), vec![c(0.0)]);
        assert_eq!(sys.evaluate(&[c(2.0)]).unwrap(), vec![c(3.0)]);
        assert!(matches!(
            sys.evaluate(&[c(1.0), c(2.0)]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn evaluate_matches_naive_oracle() {
        let mut rng = SeededRng::new(3);
        let sys = random_dense_system(2, &[3, 3], &mut rng);
        let x = rng.gaussian_vector(2);
        let fast = sys.evaluate(&x).unwrap();
        let slow = naive_eval(&sys, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-13 * b.norm().max(1.0));
        }
    }

    #[test]
    fn jacobian_simple_and_linear() {
        let sys = univariate(&[(1.0, 2), (-1.0, 0)]);
        assert_eq!(sys.jacobian(&[c(3.0)]).unwrap()[(0, 0)], c(6.0));

        let mut rng = SeededRng::new(8);
        let a = rng.gaussian_matrix(3, 3);
        let b = rng.gaussian_vector(3);
        let lin = PolySystem::linear(&a, &b).unwrap();
        let jac = lin.jacobian(&rng.gaussian_vector(3)).unwrap();
        assert_eq!(jac, a);
    }

    #[test]
    fn homotopy_endpoints_and_midpoint() {
        let f = univariate(&[(1.0, 2), (-4.0, 0)]);
        let g = univariate(&[(1.0, 2), (-1.0, 0)]);
        let h = Homotopy::new(f.clone(), g.clone(), c(1.0)).unwrap();
        let x = [c(1.0)];
        let mid = h.eval(&x, 1.0 / 3.0).unwrap();
        assert!((mid[0] - c(-1.0)).norm() < 1e-15);

        let gamma = ComplexScalar::from_polar(1.0, 0.7);
        let h = Homotopy::new(f.clone(), g.clone(), gamma).unwrap();
        let x = [ComplexScalar::new(0.3, -1.2)];
        assert_eq!(
            h.eval(&x, 0.0).unwrap()[0],
            gamma * g.evaluate(&x).unwrap()[0]
        );
        assert_eq!(h.eval(&x, 1.0).unwrap(), f.evaluate(&x).unwrap());
        assert!(matches!(
            h.eval(&x, 1.5),
            Err(PolyError::ParameterOutOfRange(_))
        ));
        assert!(matches!(
            h.jacobian(&x, -0.1),
            Err(PolyError::ParameterOutOfRange(_))
        ));
        let dt = h.dt(&x).unwrap()[0];
        let fd = (h.eval(&x, 0.5 + 1e-6).unwrap()[0] - h.eval(&x, 0.5 - 1e-6).unwrap()[0]) / 2e-6;
        assert!((dt - fd).norm() < 1e-8);
    }

    #[test]
    fn homotopy_rejects_mismatched_systems() {
        let f = univariate(&[(1.0, 2)]);
        let g = PolySystem::new(2, vec![]).unwrap();
        assert!(Homotopy::new(f, g, c(1.0)).is_err());
    }

    #[test]
    fn total_degree_roots_of_unity() {
        let mut rng = SeededRng::new(1);
        let f = random_dense_system(2, &[2, 2], &mut rng);
        let (_, starts) = total_degree_start_with(&f, &[c(1.0), c(1.0)]).unwrap();
        assert_eq!(starts.len(), 4);
        for s in &starts {
            for z in s {
                assert!((z.re.abs() - 1.0).abs() < 1e-15 && z.im.abs() < 1e-15);
            }
        }

        let cubic = univariate(&[(1.0, 3), (2.0, 1)]);
        let (g, starts) = total_degree_start_with(&cubic, &[c(1.0)]).unwrap();
        assert_eq!(starts.len(), 3);
        for s in &starts {
            assert!((s[0].norm() - 1.0).abs() < 1e-15);
            assert!(norm(&g.evaluate(s).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn total_degree_random_constants() {
        let mut rng = SeededRng::new(2);
        let f = random_dense_system(2, &[2, 3], &mut rng);
        let (g, starts) = total_degree_start(&f, &mut rng).unwrap();
        assert_eq!(starts.len(), 6);
        for s in &starts {
            assert!(norm(&g.evaluate(s).unwrap()) <= 1e-12);
        }
        for i in 0..starts.len() {
            for j in 0..i {
                assert!(distance(&starts[i], &starts[j]) > 1e-6);
            }
        }
    }

    #[test]
    fn total_degree_rejects_degenerate_input() {
        let zero =
            PolySystem::new(1, vec![Polynomial::new(vec![Term::new(c(0.0), vec![2])])]).unwrap();
        assert!(matches!(
            total_degree_start_with(&zero, &[c(1.0)]),
            Err(PolyError::ZeroPolynomial { index: 0 })
        ));
        let empty = PolySystem::new(0, vec![]).unwrap();
        assert!(matches!(
            total_degree_start_with(&empty, &[]),
            Err(PolyError::Empty)
        ));
        let constant = univariate(&[(3.0, 0)]);
        assert!(matches!(
            total_degree_start_with(&constant, &[c(1.0)]),
            Err(PolyError::ConstantPolynomial { index: 0 })
        ));
    }

    #[test]
    fn json_layout() {
        let text = r#"{"nvars": 2, "polys": [[{"re":1.0,"im":0.0,"exp":[2,0]},{"re":-4.0,"im":0.0,"exp":[0,0]}],
                                            [{"re":1.0,"im":0.0,"exp":[0,2]},{"re":-9.0,"im":0.0,"exp":[0,0]}]]}"#;
        let sys = PolySystem::from_json(text).unwrap();
        assert_eq!(sys.nvars(), 2);
        assert_eq!(sys.degrees(), vec![2, 2]);
        assert_eq!(PolySystem::from_json(&sys.to_json()).unwrap(), sys);
        assert!(
            PolySystem::from_json(r#"{"nvars": 2, "polys": [[{"re":1,"im":0,"exp":[1]}]]}"#)
                .is_err()
        );
        assert!(PolySystem::from_json("not json").is_err());
    }
}
