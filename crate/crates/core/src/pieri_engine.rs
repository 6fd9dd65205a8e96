//! Intersection conditions `det([X(s,t) | L]) = 0`, special planes, the Pieri
//! homotopy attached to an edge of the Pieri tree, and the tree-wide solver.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    cofactor, determinant, distance, lu_decompose, norm, ComplexMatrix, ComplexScalar,
    NumericsError,
};
use crate::pieri_comb::{condition_count, LocalizationPattern, PatternError, PosetCounter};
use crate::rng::SeededRng;
use crate::scheduler::{
    run_dynamic, run_static_rounds, schedule_report, JobId, JobKind, JobMessage, JobSource,
    JobStatus, ResultMessage, Schedule, ScheduleReport,
};
use crate::tracker::{
    newton_polish, track_path, PathHomotopy, PathResult, PathStatus, TrackerOptions,
};

/// Interpolation points closer than this to each other or to 1 are redrawn.
pub const POINT_SEPARATION: f64 = 1e-3;
/// Solutions closer than this (relative coefficient distance) are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-6;
/// Planes whose random m x m compression has a smaller relative pivot are
/// rejected as rank deficient.
pub const RANK_RTOL: f64 = 1e-10;
const GRADIENT_CHECKS: usize = 10;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid problem input: {0}")]
    InvalidInput(String),
    #[error("expected {expected} free coefficients, found {found}")]
    CoefficientCount { expected: usize, found: usize },
    #[error("invalid input file: {0}")]
    Json(#[from] serde_json::Error),
}

fn c(re: f64) -> ComplexScalar {
    ComplexScalar::new(re, 0.0)
}

/// One star of the concatenated layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Star {
    pub column: usize,
    /// 1-based concatenated row.
    pub row: usize,
    /// 0-based row of the `(m+p) x p` matrix.
    pub physical: usize,
    /// Power of `s` multiplying this coefficient.
    pub degree: usize,
    pub fixed: bool,
}

/// Stars of a pattern in column-major order; the top pivot of every column
/// is the fixed entry 1, every other star is a free coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct StarLayout {
    pattern: LocalizationPattern,
    stars: Vec<Star>,
    free: Vec<usize>,
}

impl StarLayout {
    pub fn new(pattern: &LocalizationPattern) -> Self {
        let n = pattern.ambient();
        let mut stars = Vec::new();
        let mut free = Vec::new();
        for (j, &bottom) in pattern.bottom().iter().enumerate() {
            for row in j + 1..=bottom {
                let fixed = row == j + 1;
                if !fixed {
                    free.push(stars.len());
                }
                stars.push(Star {
                    column: j,
                    row,
                    physical: (row - 1) % n,
                    degree: (row - 1) / n,
                    fixed,
                });
            }
        }
        Self {
            pattern: pattern.clone(),
            stars,
            free,
        }
    }

    pub fn pattern(&self) -> &LocalizationPattern {
        &self.pattern
    }

    pub fn stars(&self) -> &[Star] {
        &self.stars
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn free_stars(&self) -> impl Iterator<Item = &Star> {
        self.free.iter().map(|&i| &self.stars[i])
    }

    /// Index among the free coefficients of the star at `(column, row)`.
    pub fn free_index(&self, column: usize, row: usize) -> Option<usize> {
        self.free
            .iter()
            .position(|&i| self.stars[i].column == column && self.stars[i].row == row)
    }

    /// Full coefficient list (fixed entries included) from the free values.
    pub fn expand(&self, free: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, EngineError> {
        if free.len() != self.free.len() {
            return Err(EngineError::CoefficientCount {
                expected: self.free.len(),
                found: free.len(),
            });
        }
        let mut values = vec![c(1.0); self.stars.len()];
        for (&i, &v) in self.free.iter().zip(free) {
            values[i] = v;
        }
        Ok(values)
    }
}

/// `X(s, t)` for fixed coefficients. Column `j` is homogeneous of degree
/// `d_j`, the block of its bottom pivot, so `X(1, 0)` keeps exactly the
/// leading coefficient block of every column.
#[derive(Debug, Clone)]
pub struct MapEvaluator {
    layout: StarLayout,
    values: Vec<ComplexScalar>,
    column_degrees: Vec<usize>,
}

pub fn instantiate_map(
    pattern: &LocalizationPattern,
    free: &[ComplexScalar],
) -> Result<MapEvaluator, EngineError> {
    MapEvaluator::new(StarLayout::new(pattern), free)
}

impl MapEvaluator {
    pub fn new(layout: StarLayout, free: &[ComplexScalar]) -> Result<Self, EngineError> {
        let values = layout.expand(free)?;
        let column_degrees = (0..layout.pattern.p())
            .map(|j| layout.pattern.column_degree(j))
            .collect();
        Ok(Self {
            layout,
            values,
            column_degrees,
        })
    }

    /// Map from all star values, fixed positions included.
    pub fn from_values(
        layout: StarLayout,
        values: Vec<ComplexScalar>,
    ) -> Result<Self, EngineError> {
        if values.len() != layout.stars.len() {
            return Err(EngineError::CoefficientCount {
                expected: layout.stars.len(),
                found: values.len(),
            });
        }
        let column_degrees = (0..layout.pattern.p())
            .map(|j| layout.pattern.column_degree(j))
            .collect();
        Ok(Self {
            layout,
            values,
            column_degrees,
        })
    }

    pub fn layout(&self) -> &StarLayout {
        &self.layout
    }

    pub fn column_degree(&self, j: usize) -> usize {
        self.column_degrees[j]
    }

    /// `s^k t^(d_j - k)` for a star.
    pub fn monomial(&self, star: &Star, s: ComplexScalar, t: f64) -> ComplexScalar {
        let d = self.column_degrees[star.column];
        s.powu(star.degree as u32) * t.powi((d - star.degree) as i32)
    }

    pub fn evaluate(&self, s: ComplexScalar, t: f64) -> ComplexMatrix {
        let mut x = ComplexMatrix::zeros(self.layout.pattern.ambient(), self.layout.pattern.p());
        for (star, v) in self.layout.stars.iter().zip(&self.values) {
            x[(star.physical, star.column)] += v * self.monomial(star, s, t);
        }
        x
    }

    /// `d/dt X(s(t), t)` where `ds` is `s'(t)`.
    pub fn evaluate_dt(&self, s: ComplexScalar, ds: ComplexScalar, t: f64) -> ComplexMatrix {
        let mut x = ComplexMatrix::zeros(self.layout.pattern.ambient(), self.layout.pattern.p());
        for (star, v) in self.layout.stars.iter().zip(&self.values) {
            let k = star.degree;
            let e = self.column_degrees[star.column] - k;
            let mut d = c(0.0);
            if k > 0 {
                d += s.powu(k as u32 - 1) * ds * (k as f64) * t.powi(e as i32);
            }
            if e > 0 {
                d += s.powu(k as u32) * (e as f64) * t.powi(e as i32 - 1);
            }
            x[(star.physical, star.column)] += v * d;
        }
        x
    }
}

/// Basis vectors `e_k` for every physical row not hit by a bottom pivot.
/// Meeting this plane at `(s, t) = (1, 0)` forces a bottom-pivot coefficient
/// to vanish.
pub fn special_plane(pattern: &LocalizationPattern) -> ComplexMatrix {
    let n = pattern.ambient();
    let hit: Vec<usize> = (0..pattern.p())
        .map(|j| pattern.bottom_residue(j))
        .collect();
    let rows: Vec<usize> = (0..n).filter(|k| !hit.contains(k)).collect();
    let mut plane = ComplexMatrix::zeros(n, rows.len());
    for (col, &k) in rows.iter().enumerate() {
        plane[(k, col)] = c(1.0);
    }
    plane
}

fn concat(
    map: &MapEvaluator,
    plane: &ComplexMatrix,
    s: ComplexScalar,
    t: f64,
) -> Result<ComplexMatrix, EngineError> {
    let x = map.evaluate(s, t);
    if plane.rows() != x.rows() || plane.cols() + x.cols() != x.rows() {
        return Err(EngineError::InvalidInput(format!(
            "plane is {}x{}, expected {}x{}",
            plane.rows(),
            plane.cols(),
            x.rows(),
            x.rows() - x.cols()
        )));
    }
    Ok(x.hcat(plane)?)
}

/// `det([X(s, t) | L])`.
pub fn condition_residual(
    map: &MapEvaluator,
    plane: &ComplexMatrix,
    s: ComplexScalar,
    t: f64,
) -> Result<ComplexScalar, EngineError> {
    Ok(determinant(&concat(map, plane, s, t)?)?)
}

/// Gradient of `det([X(s, t) | L])` over the free coefficients: the
/// cofactor of the entry a coefficient lives in, times its monomial.
pub fn condition_gradient(
    map: &MapEvaluator,
    plane: &ComplexMatrix,
    s: ComplexScalar,
    t: f64,
) -> Result<Vec<ComplexScalar>, EngineError> {
    star_gradient(map, plane, s, t, map.layout.free_stars())
}

fn star_gradient<'a>(
    map: &MapEvaluator,
    plane: &ComplexMatrix,
    s: ComplexScalar,
    t: f64,
    stars: impl Iterator<Item = &'a Star>,
) -> Result<Vec<ComplexScalar>, EngineError> {
    let m = concat(map, plane, s, t)?;
    let mut cofactors: HashMap<(usize, usize), ComplexScalar> = HashMap::new();
    let mut grad = Vec::with_capacity(map.layout.stars.len());
    for star in stars {
        let key = (star.physical, star.column);
        let cof = match cofactors.get(&key) {
            Some(v) => *v,
            None => {
                let v = cofactor(&m, star.physical, star.column)?;
                cofactors.insert(key, v);
                v
            }
        };
        grad.push(cof * map.monomial(star, s, t));
    }
    Ok(grad)
}

/// Intersection conditions with `n = mp + q(m+p)` planes and points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInput {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub planes: Vec<ComplexMatrix>,
    pub points: Vec<ComplexScalar>,
    pub seed: u64,
}

impl ProblemInput {
    pub fn new(
        m: usize,
        p: usize,
        q: usize,
        planes: Vec<ComplexMatrix>,
        points: Vec<ComplexScalar>,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let input = Self {
            m,
            p,
            q,
            planes,
            points,
            seed,
        };
        input.validate()?;
        Ok(input)
    }

    /// Complex Gaussian planes and unit-circle points, all from `seed`.
    pub fn random(m: usize, p: usize, q: usize, seed: u64) -> Result<Self, EngineError> {
        if m == 0 || p == 0 {
            return Err(PatternError::InvalidSizes { m, p }.into());
        }
        let n = condition_count(m, p, q);
        let mut rng = SeededRng::new(seed);
        let planes = (0..n).map(|_| rng.gaussian_matrix(m + p, m)).collect();
        let mut points: Vec<ComplexScalar> = Vec::with_capacity(n);
        while points.len() < n {
            let s = rng.unit_circle();
            let too_close = (s - c(1.0)).norm() < POINT_SEPARATION
                || points.iter().any(|o| (o - s).norm() < POINT_SEPARATION);
            if !too_close {
                points.push(s);
            }
        }
        Self::new(m, p, q, planes, points, seed)
    }

    pub fn condition_count(&self) -> usize {
        condition_count(self.m, self.p, self.q)
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.m == 0 || self.p == 0 {
            return Err(PatternError::InvalidSizes {
                m: self.m,
                p: self.p,
            }
            .into());
        }
        let n = self.condition_count();
        if self.planes.len() != n || self.points.len() != n {
            return Err(EngineError::InvalidInput(format!(
                "need {n} planes and points, got {} and {}",
                self.planes.len(),
                self.points.len()
            )));
        }
        let mut rng = SeededRng::new(self.seed ^ 0x5eed_0f91_a7e5);
        let compress = rng.gaussian_matrix(self.m, self.m + self.p);
        for (i, plane) in self.planes.iter().enumerate() {
            if plane.rows() != self.m + self.p || plane.cols() != self.m {
                return Err(EngineError::InvalidInput(format!(
                    "plane {i} is {}x{}, expected {}x{}",
                    plane.rows(),
                    plane.cols(),
                    self.m + self.p,
                    self.m
                )));
            }
            if !plane.is_finite() {
                return Err(EngineError::InvalidInput(format!(
                    "plane {i} has non-finite entries"
                )));
            }
            let lu = lu_decompose(&compress.mul(plane)?)?;
            if !(lu.min_pivot_ratio() > RANK_RTOL) {
                return Err(EngineError::InvalidInput(format!(
                    "plane {i} is not of full column rank"
                )));
            }
        }
        for (i, s) in self.points.iter().enumerate() {
            if !(s.re.is_finite() && s.im.is_finite()) {
                return Err(EngineError::InvalidInput(format!(
                    "point {i} is not finite"
                )));
            }
            if (s - c(1.0)).norm() < 1e-12 {
                return Err(EngineError::InvalidInput(format!(
                    "point {i} coincides with 1"
                )));
            }
            if self.points[..i].iter().any(|o| (o - s).norm() < 1e-12) {
                return Err(EngineError::InvalidInput(format!(
                    "point {i} repeats an earlier point"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = InputFile {
            m: self.m,
            p: self.p,
            q: self.q,
            seed: Some(self.seed),
            planes: self
                .planes
                .iter()
                .map(|pl| {
                    (0..pl.rows())
                        .map(|r| pl.row(r).iter().map(|z| [z.re, z.im]).collect())
                        .collect()
                })
                .collect(),
            points: self.points.iter().map(|z| [z.re, z.im]).collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let file: InputFile = serde_json::from_str(text)?;
        let planes = file
            .planes
            .iter()
            .map(|rows| {
                let rows: Vec<Vec<ComplexScalar>> = rows
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|&[re, im]| ComplexScalar::new(re, im))
                            .collect()
                    })
                    .collect();
                ComplexMatrix::from_rows(&rows)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let points = file
            .points
            .iter()
            .map(|&[re, im]| ComplexScalar::new(re, im))
            .collect();
        Self::new(
            file.m,
            file.p,
            file.q,
            planes,
            points,
            file.seed.unwrap_or(0),
        )
    }
}

/// Planes are lists of rows of `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
struct InputFile {
    m: usize,
    p: usize,
    q: usize,
    #[serde(default)]
    seed: Option<u64>,
    planes: Vec<Vec<Vec<[f64; 2]>>>,
    points: Vec<[f64; 2]>,
}

/// A map fitting a pattern, with its coefficients in layout order (fixed
/// top-pivot ones included) and the normalized residual of each condition
/// it was solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionMap {
    pub pattern: LocalizationPattern,
    pub coefficients: Vec<ComplexScalar>,
    pub residuals: Vec<f64>,
}

impl SolutionMap {
    pub fn from_free(
        pattern: &LocalizationPattern,
        free: &[ComplexScalar],
    ) -> Result<Self, EngineError> {
        let layout = StarLayout::new(pattern);
        Ok(Self {
            pattern: pattern.clone(),
            coefficients: layout.expand(free)?,
            residuals: Vec::new(),
        })
    }

    pub fn free_coefficients(&self) -> Vec<ComplexScalar> {
        let layout = StarLayout::new(&self.pattern);
        layout.free.iter().map(|&i| self.coefficients[i]).collect()
    }

    pub fn map(&self) -> MapEvaluator {
        instantiate_map(&self.pattern, &self.free_coefficients())
            .expect("coefficients sized by pattern")
    }

    /// Sort key: coefficients rounded to 1e-10.
    pub fn canonical_key(&self) -> Vec<i64> {
        self.coefficients
            .iter()
            .flat_map(|z| [(z.re * 1e10).round() as i64, (z.im * 1e10).round() as i64])
            .collect()
    }
}

/// `|det([X|L])|` divided by the product of the row norms of `[X|L]`.
pub fn normalized_residual(
    map: &MapEvaluator,
    plane: &ComplexMatrix,
    s: ComplexScalar,
    t: f64,
) -> Result<f64, EngineError> {
    let m = concat(map, plane, s, t)?;
    let det = determinant(&m)?;
    let scale: f64 = (0..m.rows()).map(|r| norm(m.row(r))).product();
    Ok(if scale == 0.0 {
        0.0
    } else {
        det.norm() / scale
    })
}

/// Random affine chart `sum_r w(j, r) c(r, j) = 1` for every column `j`.
///
/// With the top pivots fixed to 1 a path fails whenever a column's top
/// coefficient would pass through zero; in a random chart this happens
/// with probability zero. All conditions are homogeneous per column, so
/// moving between the two charts is a column rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPatch {
    /// Indexed by column, then by 1-based concatenated row minus one.
    weights: Vec<Vec<ComplexScalar>>,
}

impl ColumnPatch {
    pub fn random(m: usize, p: usize, q: usize, rng: &mut SeededRng) -> Self {
        let weights = crate::pieri_comb::column_heights(m, p, q)
            .into_iter()
            .map(|h| rng.gaussian_vector(h))
            .collect();
        Self { weights }
    }

    /// One chart per problem, so every edge agrees regardless of schedule.
    pub fn for_problem(input: &ProblemInput) -> Self {
        let mut rng = SeededRng::new(input.seed ^ 0xc0_1a_b5_e7);
        Self::random(input.m, input.p, input.q, &mut rng)
    }

    pub fn weight(&self, star: &Star) -> ComplexScalar {
        self.weights[star.column][star.row - 1]
    }
}

/// Pieri homotopy for one tree edge, in the free coefficients of the child
/// pattern. Equation 0 moves the special plane of the child to the plane
/// of condition `k` while `(s, t)` runs from `(1, 0)` to `(s_k, 1)` along
/// `s(t) = (1-t) + s_k t`; equations `1..k` keep conditions `1..k-1` at `t = 1`.
#[derive(Debug, Clone)]
pub struct PieriHomotopy {
    layout: StarLayout,
    special: ComplexMatrix,
    moving_plane: ComplexMatrix,
    moving_point: ComplexScalar,
    fixed_planes: Vec<ComplexMatrix>,
    fixed_points: Vec<ComplexScalar>,
    /// Per-star weights when tracking in a random chart.
    patch: Option<Vec<ComplexScalar>>,
}

impl PieriHomotopy {
    /// Homotopy that imposes condition `condition` (1-based) on maps
    /// fitting `child`, given conditions before it are met.
    pub fn new(
        child: &LocalizationPattern,
        condition: usize,
        input: &ProblemInput,
    ) -> Result<Self, EngineError> {
        let layout = StarLayout::new(child);
        if condition == 0 || condition > input.condition_count() || layout.free_count() != condition
        {
            return Err(EngineError::InvalidInput(format!(
                "pattern {child} with {} free coefficients cannot carry condition {condition}",
                layout.free_count()
            )));
        }
        let k = condition - 1;
        Ok(Self {
            special: special_plane(child),
            moving_plane: input.planes[k].clone(),
            moving_point: input.points[k],
            fixed_planes: input.planes[..k].to_vec(),
            fixed_points: input.points[..k].to_vec(),
            layout,
            patch: None,
        })
    }

    /// Same homotopy in the chart of `patch`: unknowns are all stars,
    /// top pivots included, and one linear equation per column is appended.
    pub fn with_patch(mut self, patch: &ColumnPatch) -> Self {
        self.patch = Some(
            self.layout
                .stars
                .iter()
                .map(|st| patch.weight(st))
                .collect(),
        );
        self
    }

    pub fn is_patched(&self) -> bool {
        self.patch.is_some()
    }

    /// Free coefficients (top pivots 1) of a point of this homotopy.
    pub fn to_free(&self, x: &[ComplexScalar]) -> Vec<ComplexScalar> {
        if self.patch.is_none() {
            return x.to_vec();
        }
        let stars = &self.layout.stars;
        let mut tops = vec![c(1.0); self.layout.pattern.p()];
        for (st, v) in stars.iter().zip(x) {
            if st.fixed {
                tops[st.column] = *v;
            }
        }
        self.layout
            .free
            .iter()
            .map(|&i| x[i] / tops[stars[i].column])
            .collect()
    }

    /// Point of this homotopy for the given free coefficients.
    pub fn from_free(&self, free: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, EngineError> {
        let values = self.layout.expand(free)?;
        let Some(weights) = &self.patch else {
            return Ok(free.to_vec());
        };
        let mut dots = vec![c(0.0); self.layout.pattern.p()];
        for ((st, v), w) in self.layout.stars.iter().zip(&values).zip(weights) {
            dots[st.column] += w * v;
        }
        if dots.iter().any(|d| d.norm() < 1e-300) {
            return Err(EngineError::InvalidInput(
                "column lies on the chart boundary".into(),
            ));
        }
        Ok(self
            .layout
            .stars
            .iter()
            .zip(values)
            .map(|(st, v)| v / dots[st.column])
            .collect())
    }

    pub fn layout(&self) -> &StarLayout {
        &self.layout
    }

    pub fn special_plane(&self) -> &ComplexMatrix {
        &self.special
    }

    fn map(&self, x: &[ComplexScalar]) -> MapEvaluator {
        let map = match self.patch {
            None => MapEvaluator::new(self.layout.clone(), x),
            Some(_) => MapEvaluator::from_values(self.layout.clone(), x.to_vec()),
        };
        map.expect("point sized by tracker")
    }

    fn gradient(
        &self,
        map: &MapEvaluator,
        plane: &ComplexMatrix,
        s: ComplexScalar,
        t: f64,
    ) -> Vec<ComplexScalar> {
        let grad = match self.patch {
            None => star_gradient(map, plane, s, t, self.layout.free_stars()),
            Some(_) => star_gradient(map, plane, s, t, self.layout.stars.iter()),
        };
        grad.expect("shapes checked")
    }

    fn patch_residuals(&self, x: &[ComplexScalar], out: &mut Vec<ComplexScalar>) {
        if let Some(weights) = &self.patch {
            let mut dots = vec![c(-1.0); self.layout.pattern.p()];
            for ((st, v), w) in self.layout.stars.iter().zip(x).zip(weights) {
                dots[st.column] += w * v;
            }
            out.extend(dots);
        }
    }

    pub fn moving_s(&self, t: f64) -> ComplexScalar {
        c(1.0 - t) + self.moving_point * t
    }

    fn moving_plane_at(&self, t: f64) -> ComplexMatrix {
        self.special
            .affine_combination(c(1.0 - t), &self.moving_plane, c(t))
            .expect("planes share shape")
    }

    /// Start point: the parent's coefficients with the new star set to 0.
    pub fn embed_parent(
        &self,
        parent: &LocalizationPattern,
        parent_free: &[ComplexScalar],
    ) -> Result<Vec<ComplexScalar>, EngineError> {
        let parent_layout = StarLayout::new(parent);
        if parent_free.len() != parent_layout.free_count() {
            return Err(EngineError::CoefficientCount {
                expected: parent_layout.free_count(),
                found: parent_free.len(),
            });
        }
        if parent.raised_column(self.layout.pattern()).is_none() {
            return Err(EngineError::InvalidInput(format!(
                "{} is not one step above {parent}",
                self.layout.pattern()
            )));
        }
        let mut x = vec![c(0.0); self.layout.free_count()];
        for (star, v) in parent_layout.free_stars().zip(parent_free) {
            let idx = self
                .layout
                .free_index(star.column, star.row)
                .expect("parent stars are child stars");
            x[idx] = *v;
        }
        self.from_free(&x)
    }
}

impl PathHomotopy for PieriHomotopy {
    fn dimension(&self) -> usize {
        match self.patch {
            None => self.layout.free_count(),
            Some(_) => self.layout.stars.len(),
        }
    }

    fn evaluate(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar> {
        let map = self.map(x);
        let mut out = Vec::with_capacity(x.len());
        out.push(
            condition_residual(&map, &self.moving_plane_at(t), self.moving_s(t), t)
                .expect("shapes checked"),
        );
        for (plane, &s) in self.fixed_planes.iter().zip(&self.fixed_points) {
            out.push(condition_residual(&map, plane, s, 1.0).expect("shapes checked"));
        }
        self.patch_residuals(x, &mut out);
        out
    }

    fn jacobian_x(&self, x: &[ComplexScalar], t: f64) -> ComplexMatrix {
        let map = self.map(x);
        let n = x.len();
        let mut jac = ComplexMatrix::zeros(n, n);
        let rows =
            std::iter::once(self.gradient(&map, &self.moving_plane_at(t), self.moving_s(t), t))
                .chain(
                    self.fixed_planes
                        .iter()
                        .zip(&self.fixed_points)
                        .map(|(plane, &s)| self.gradient(&map, plane, s, 1.0)),
                );
        let mut conditions = 0;
        for (i, row) in rows.enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                jac[(i, j)] = v;
            }
            conditions += 1;
        }
        if let Some(weights) = &self.patch {
            for (j, (st, w)) in self.layout.stars.iter().zip(weights).enumerate() {
                jac[(conditions + st.column, j)] = *w;
            }
        }
        jac
    }

    fn derivative_t(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar> {
        let map = self.map(x);
        let s = self.moving_s(t);
        let ds = self.moving_point - c(1.0);
        let m = map
            .evaluate(s, t)
            .hcat(&self.moving_plane_at(t))
            .expect("shapes checked");
        let dm = map
            .evaluate_dt(s, ds, t)
            .hcat(
                &self
                    .moving_plane
                    .affine_combination(c(1.0), &self.special, c(-1.0))
                    .expect("same shape"),
            )
            .expect("shapes checked");
        let mut d = c(0.0);
        for r in 0..m.rows() {
            for col in 0..m.cols() {
                let entry = dm[(r, col)];
                if entry.norm() != 0.0 {
                    d += entry * cofactor(&m, r, col).expect("square");
                }
            }
        }
        let mut out = vec![c(0.0); x.len()];
        out[0] = d;
        out
    }
}

/// Largest relative deviation between the analytic Jacobian and central
/// differences with step `eps`.
pub fn jacobian_fd_error<H: PathHomotopy + ?Sized>(
    h: &H,
    x: &[ComplexScalar],
    t: f64,
    eps: f64,
) -> f64 {
    let jac = h.jacobian_x(x, t);
    let scale = jac.max_abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for j in 0..x.len() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[j] += c(eps);
        minus[j] -= c(eps);
        let fp = h.evaluate(&plus, t);
        let fm = h.evaluate(&minus, t);
        for i in 0..x.len() {
            let fd = (fp[i] - fm[i]) / (2.0 * eps);
            worst = worst.max((fd - jac[(i, j)]).norm() / scale);
        }
    }
    worst
}

/// One edge of the Pieri tree, self-contained.
#[derive(Debug, Clone)]
pub struct PieriJob {
    pub edge: JobId,
    pub parent: LocalizationPattern,
    pub parent_free: Vec<ComplexScalar>,
    pub child: LocalizationPattern,
    /// 1-based index of the condition this edge imposes.
    pub condition: usize,
    pub check_gradient: bool,
}

#[derive(Debug, Clone)]
pub struct EdgeResult {
    pub child: LocalizationPattern,
    pub condition: usize,
    pub start_residual: f64,
    /// Smallest LU pivot of the start Jacobian over its largest entry.
    pub start_pivot_ratio: f64,
    pub path: Option<PathResult>,
    /// Free coefficients of the child when the path converged.
    pub solution: Option<Vec<ComplexScalar>>,
    pub gradient_error: Option<f64>,
    pub failure: Option<String>,
}

/// Runs one edge job. Pure function of the job and the shared input.
///
/// The start point is checked in the top-pivot chart. With a patch the path
/// is tracked in that chart and its endpoint is brought back and polished.
pub fn run_edge(
    job: &PieriJob,
    input: &ProblemInput,
    patch: Option<&ColumnPatch>,
    opts: &TrackerOptions,
) -> (JobStatus, EdgeResult) {
    let mut result = EdgeResult {
        child: job.child.clone(),
        condition: job.condition,
        start_residual: f64::NAN,
        start_pivot_ratio: f64::NAN,
        path: None,
        solution: None,
        gradient_error: None,
        failure: None,
    };
    let prepared = PieriHomotopy::new(&job.child, job.condition, input).and_then(|h| {
        h.embed_parent(&job.parent, &job.parent_free)
            .map(|x0| (h, x0))
    });
    let (h, x0) = match prepared {
        Ok(v) => v,
        Err(e) => {
            result.failure = Some(e.to_string());
            return (JobStatus::Failed, result);
        }
    };

    result.start_residual = norm(&h.evaluate(&x0, 0.0));
    result.start_pivot_ratio =
        lu_decompose(&h.jacobian_x(&x0, 0.0)).map_or(0.0, |lu| lu.min_pivot_ratio());
    if job.check_gradient {
        result.gradient_error = Some(jacobian_fd_error(&h, &x0, 0.5, 1e-6));
    }
    if !(result.start_residual <= opts.residual_tol) {
        result.failure = Some(format!(
            "start residual {:e} exceeds {:e}; special plane or normalization broken",
            result.start_residual, opts.residual_tol
        ));
        return (JobStatus::Failed, result);
    }

    let path = match patch {
        None => track_path(&h, &x0, opts),
        Some(patch) => {
            let tracked = h.clone().with_patch(patch);
            match tracked.from_free(&x0) {
                Ok(start) => {
                    let mut path = track_path(&tracked, &start, opts);
                    if path.converged() {
                        let (free, _) = newton_polish(
                            &h,
                            tracked.to_free(&path.endpoint),
                            1.0,
                            opts.polish_iters,
                        );
                        path.residual = norm(&h.evaluate(&free, 1.0));
                        if !(path.residual <= opts.residual_tol)
                            || !free.iter().all(|z| z.re.is_finite() && z.im.is_finite())
                        {
                            path.status = PathStatus::Failed;
                        }
                        path.endpoint = free;
                    }
                    path
                }
                Err(e) => {
                    result.failure = Some(e.to_string());
                    return (JobStatus::Failed, result);
                }
            }
        }
    };
    if path.converged() {
        result.solution = Some(path.endpoint.clone());
    } else {
        result.failure = Some(format!("path {:?} at t = {}", path.status, path.t_reached));
    }
    let status = if result.solution.is_some() {
        JobStatus::Completed
    } else {
        JobStatus::Failed
    };
    result.path = Some(path);
    (status, result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LostSubtree {
    pub edge: JobId,
    pub bottom: Vec<usize>,
    pub condition: usize,
    /// Leaves of the Pieri tree below the failed edge.
    pub leaves_lost: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDiagnostics {
    pub edge: JobId,
    pub condition: usize,
    pub bottom: Vec<usize>,
    pub status: JobStatus,
    pub start_residual: f64,
    pub start_pivot_ratio: f64,
    pub steps: usize,
    pub gradient_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PieriSolution {
    /// Leaf solutions in canonical order.
    pub solutions: Vec<SolutionMap>,
    pub lost: Vec<LostSubtree>,
    /// Edge jobs dispatched per condition index (entry 0 is condition 1).
    pub level_jobs: Vec<usize>,
    pub edges: Vec<EdgeDiagnostics>,
    pub report: ScheduleReport,
    pub wall: Duration,
    /// Most solved tree nodes the master held at once.
    pub max_live_nodes: usize,
}

impl PieriSolution {
    pub fn max_residual(&self) -> f64 {
        self.solutions
            .iter()
            .flat_map(|s| s.residuals.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn leaves_lost(&self) -> u64 {
        self.lost.iter().map(|l| l.leaves_lost).sum()
    }
}

/// Master-side job generator walking the Pieri tree.
struct PieriMaster<'a> {
    input: &'a ProblemInput,
    counter: PosetCounter,
    conditions: usize,
    next_edge: JobId,
    rng: SeededRng,
    check_probability: f64,
    checks_left: usize,
    leaves: Vec<SolutionMap>,
    lost: Vec<LostSubtree>,
    level_jobs: Vec<usize>,
    edges: Vec<EdgeDiagnostics>,
    live_nodes: usize,
    max_live_nodes: usize,
    pending: HashMap<JobId, LocalizationPattern>,
}

impl<'a> PieriMaster<'a> {
    fn new(input: &'a ProblemInput) -> Result<Self, EngineError> {
        let counter = PosetCounter::new(input.m, input.p, input.q)?;
        let total_edges: f64 = crate::pieri_comb::level_job_counts(input.m, input.p, input.q)?
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::MAX))
            .sum();
        Ok(Self {
            input,
            counter,
            conditions: input.condition_count(),
            next_edge: 0,
            rng: SeededRng::new(input.seed.wrapping_add(0x9e37_79b9)),
            check_probability: (GRADIENT_CHECKS as f64 / total_edges.max(1.0)).min(1.0),
            checks_left: GRADIENT_CHECKS,
            leaves: Vec::new(),
            lost: Vec::new(),
            level_jobs: vec![0; input.condition_count()],
            edges: Vec::new(),
            live_nodes: 0,
            max_live_nodes: 0,
            pending: HashMap::new(),
        })
    }

    /// Jobs for every outgoing edge of a solved node. The solution is copied
    /// into the payloads, so the node itself is released right here.
    fn expand(
        &mut self,
        node: &LocalizationPattern,
        free: &[ComplexScalar],
    ) -> Vec<JobMessage<PieriJob>> {
        self.live_nodes += 1;
        self.max_live_nodes = self.max_live_nodes.max(self.live_nodes);
        let successors = self.counter.tree_successors(node);
        let mut jobs = Vec::with_capacity(successors.len());
        for child in successors {
            let edge = self.next_edge;
            self.next_edge += 1;
            let condition = child.depth();
            self.level_jobs[condition - 1] += 1;
            let check_gradient =
                self.checks_left > 0 && self.rng.uniform() < self.check_probability;
            if check_gradient {
                self.checks_left -= 1;
            }
            self.pending.insert(edge, child.clone());
            jobs.push(JobMessage::new(
                edge,
                JobKind::PieriEdge,
                PieriJob {
                    edge,
                    parent: node.clone(),
                    parent_free: free.to_vec(),
                    child,
                    condition,
                    check_gradient,
                },
            ));
        }
        self.live_nodes -= 1;
        jobs
    }

    fn record_loss(
        &mut self,
        edge: JobId,
        child: &LocalizationPattern,
        condition: usize,
        reason: String,
    ) {
        let leaves = self
            .counter
            .chains_to_target(child)
            .to_u64()
            .unwrap_or(u64::MAX);
        self.lost.push(LostSubtree {
            edge,
            bottom: child.bottom().to_vec(),
            condition,
            leaves_lost: leaves,
            reason,
        });
    }
}

impl JobSource<PieriJob, EdgeResult> for PieriMaster<'_> {
    fn initial_jobs(&mut self) -> Vec<JobMessage<PieriJob>> {
        let root = LocalizationPattern::trivial(self.input.m, self.input.p, self.input.q)
            .expect("sizes validated");
        self.expand(&root, &[])
    }

    fn on_result(&mut self, result: &ResultMessage<EdgeResult>) -> Vec<JobMessage<PieriJob>> {
        let child = self
            .pending
            .remove(&result.id)
            .expect("result for a dispatched edge");
        let Some(edge) = &result.payload else {
            let condition = child.depth();
            self.record_loss(result.id, &child, condition, "worker crashed".into());
            return Vec::new();
        };
        self.edges.push(EdgeDiagnostics {
            edge: result.id,
            condition: edge.condition,
            bottom: edge.child.bottom().to_vec(),
            status: result.status,
            start_residual: edge.start_residual,
            start_pivot_ratio: edge.start_pivot_ratio,
            steps: edge.path.as_ref().map_or(0, |p| p.steps_used),
            gradient_error: edge.gradient_error,
        });
        match (&edge.solution, result.status) {
            (Some(free), JobStatus::Completed) => {
                if edge.condition == self.conditions {
                    let mut sol =
                        SolutionMap::from_free(&edge.child, free).expect("sized by layout");
                    sol.residuals = condition_residuals(&sol, self.input);
                    self.leaves.push(sol);
                    Vec::new()
                } else {
                    let free = free.clone();
                    self.expand(&edge.child, &free)
                }
            }
            _ => {
                let reason = edge
                    .failure
                    .clone()
                    .unwrap_or_else(|| "unknown failure".into());
                self.record_loss(result.id, &edge.child, edge.condition, reason);
                Vec::new()
            }
        }
    }
}

/// Normalized residuals of a solution on the first conditions it covers.
pub fn condition_residuals(solution: &SolutionMap, input: &ProblemInput) -> Vec<f64> {
    let map = solution.map();
    let k = solution.pattern.depth().min(input.condition_count());
    input.planes[..k]
        .iter()
        .zip(&input.points[..k])
        .map(|(plane, &s)| normalized_residual(&map, plane, s, 1.0).expect("shapes match input"))
        .collect()
}

/// Solves all conditions by walking the Pieri tree, one tracked path per
/// edge. `Schedule::Dynamic` generates jobs as results arrive;
/// `Schedule::Static` runs the tree level by level, splitting each level
/// round-robin.
pub fn solve_pieri(
    input: &ProblemInput,
    schedule: Schedule,
    workers: usize,
    opts: &TrackerOptions,
) -> Result<PieriSolution, EngineError> {
    opts.validate()
        .map_err(|e| EngineError::InvalidInput(format!("tracker options: {e}")))?;
    input.validate()?;
    let clock = Instant::now();
    let mut master = PieriMaster::new(input)?;
    let patch = ColumnPatch::for_problem(input);
    let work = |job: &PieriJob| run_edge(job, input, Some(&patch), opts);
    let results = match schedule {
        Schedule::Dynamic => run_dynamic(&mut master, workers, work).results,
        Schedule::Static => run_static_rounds(&mut master, workers, work),
    };
    let report = schedule_report(&results, Some(workers.max(1)));
    drop(results);

    let mut solutions = std::mem::take(&mut master.leaves);
    solutions.sort_by_key(|s| s.canonical_key());
    let mut edges = std::mem::take(&mut master.edges);
    edges.sort_by_key(|e| e.edge);
    Ok(PieriSolution {
        solutions,
        lost: std::mem::take(&mut master.lost),
        level_jobs: std::mem::take(&mut master.level_jobs),
        edges,
        report,
        wall: clock.elapsed(),
        max_live_nodes: master.max_live_nodes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Normalized residual per solution, per condition.
    pub residuals: Vec<Vec<f64>>,
    pub max_residual: f64,
    /// Smallest relative coefficient distance over all pairs.
    pub min_distance: f64,
    pub duplicates: Vec<(usize, usize)>,
}

/// Relative distance `|a - b| / max(1, |a|, |b|)` between coefficient lists.
pub fn solution_distance(a: &SolutionMap, b: &SolutionMap) -> f64 {
    if a.pattern != b.pattern {
        return f64::INFINITY;
    }
    let scale = norm(&a.coefficients).max(norm(&b.coefficients)).max(1.0);
    distance(&a.coefficients, &b.coefficients) / scale
}

pub fn verify(solutions: &[SolutionMap], input: &ProblemInput) -> VerificationReport {
    let residuals: Vec<Vec<f64>> = solutions
        .iter()
        .map(|s| condition_residuals(s, input))
        .collect();
    let max_residual = residuals.iter().flatten().copied().fold(0.0, f64::max);
    let mut min_distance = f64::INFINITY;
    let mut duplicates = Vec::new();
    for i in 0..solutions.len() {
        for j in 0..i {
            let d = solution_distance(&solutions[i], &solutions[j]);
            min_distance = min_distance.min(d);
            if d < DUPLICATE_TOL {
                duplicates.push((j, i));
            }
        }
    }
    VerificationReport {
        residuals,
        max_residual,
        min_distance,
        duplicates,
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SolutionRecord {
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
    /// `[re, im]` per star, column by column, rows ascending.
    pub coefficients: Vec<[f64; 2]>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SolutionFile {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    pub count: usize,
    pub solutions: Vec<SolutionRecord>,
    pub lost: Vec<LostSubtree>,
}

impl SolutionFile {
    pub fn new(input: &ProblemInput, solution: &PieriSolution) -> Self {
        let mut sorted = solution.solutions.clone();
        sorted.sort_by_key(|s| s.canonical_key());
        let mut lost = solution.lost.clone();
        lost.sort_by(|a, b| (a.condition, &a.bottom).cmp(&(b.condition, &b.bottom)));
        for l in &mut lost {
            // edge ids depend on completion order
            l.edge = 0;
        }
        Self {
            m: input.m,
            p: input.p,
            q: input.q,
            seed: input.seed,
            count: sorted.len(),
            solutions: sorted
                .iter()
                .map(|s| SolutionRecord {
                    top: s.pattern.top(),
                    bottom: s.pattern.bottom().to_vec(),
                    coefficients: s.coefficients.iter().map(|z| [z.re, z.im]).collect(),
                    residuals: s.residuals.clone(),
                })
                .collect(),
            lost,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn into_solutions(self) -> Result<Vec<SolutionMap>, EngineError> {
        self.solutions
            .into_iter()
            .map(|r| {
                let pattern = LocalizationPattern::new(self.m, self.p, self.q, r.bottom)?;
                let coefficients: Vec<ComplexScalar> = r
                    .coefficients
                    .iter()
                    .map(|&[re, im]| ComplexScalar::new(re, im))
                    .collect();
                let expected = StarLayout::new(&pattern).stars().len();
                if coefficients.len() != expected {
                    return Err(EngineError::CoefficientCount {
                        expected,
                        found: coefficients.len(),
                    });
                }
                Ok(SolutionMap {
                    pattern,
                    coefficients,
                    residuals: r.residuals,
                })
            })
            .collect()
    }
}
