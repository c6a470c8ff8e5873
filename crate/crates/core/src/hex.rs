//! Packing `n` unit hexagons into the smallest flat-topped hexagon.
//!
//! A configuration is `n` centres and rotation angles. The container is not
//! part of the solution: its side is always the minimal enclosing side over
//! the `6n` vertices, so containment can never fail and fitness is `−L`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::deadline::Deadline;
use crate::geometry::{
    distance, hex_vertices, min_enclosing_side, penetration_depth_with_vertices, Hexagon, Point2, OVERLAP_TOLERANCE,
};
use crate::math::{cos, hypot, sin_cos, PI, SQRT3, TAU};
use crate::optim::{
    minimize_lbfgs, minimize_sqp, Bounds, ConstrainedObjective, Constraint, LbfgsOptions, SqpOptions, Status,
};
use crate::rng;

pub const MAX_HEXAGONS: usize = 64;

/// Pairs whose centres are at least this far apart cannot overlap.
const CONTACT_RANGE: f64 = 2.0;
/// Central-difference step for overlap gradients.
const FD_STEP: f64 = 1e-7;
/// Depth that the final separation pass drives every pair below.
const SEPARATION_TARGET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HexError {
    #[error("malformed solution: {0}")]
    Malformed(String),
    #[error("hexagon count {0} outside 1..={MAX_HEXAGONS}")]
    CountOutOfRange(usize),
    #[error("constraint violation: {} overlapping pair(s)", .0.overlaps.len())]
    ConstraintViolation(HexValidationReport),
    #[error("improvement failed: {0}")]
    ImprovementFailed(String),
    #[error("deadline expired")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexConfig {
    centers: Vec<Point2>,
    angles: Vec<f64>,
}

impl HexConfig {
    pub fn new(centers: Vec<Point2>, angles: Vec<f64>) -> Result<Self, HexError> {
        if centers.len() != angles.len() {
            return Err(HexError::Malformed(alloc::format!(
                "{} centers but {} angles",
                centers.len(),
                angles.len()
            )));
        }
        if centers.is_empty() {
            return Err(HexError::Malformed("no hexagons".into()));
        }
        if let Some(i) = centers.iter().position(|c| !c.is_finite()) {
            return Err(HexError::Malformed(alloc::format!("non-finite center at index {i}")));
        }
        if let Some(i) = angles.iter().position(|a| !a.is_finite()) {
            return Err(HexError::Malformed(alloc::format!("non-finite angle at index {i}")));
        }
        Ok(Self { centers, angles })
    }

    pub fn n(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Point2] {
        &self.centers
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn hexagon(&self, i: usize) -> Hexagon {
        Hexagon::unit(self.centers[i], self.angles[i])
    }

    pub fn hexagons(&self) -> impl Iterator<Item = Hexagon> + '_ {
        (0..self.n()).map(|i| self.hexagon(i))
    }

    pub fn vertices(&self) -> Vec<Point2> {
        self.hexagons().flat_map(|h| hex_vertices(&h)).collect()
    }

    pub fn side_length(&self) -> f64 {
        min_enclosing_side(&self.vertices()).unwrap_or(0.0)
    }

    /// Angles wrapped to `[0, 2π)`, for output.
    pub fn canonical_angles(&self) -> Vec<f64> {
        self.angles.iter().map(|&a| crate::math::rem_euclid(a, TAU)).collect()
    }

    fn to_vector(&self, side: f64) -> Vec<f64> {
        let mut z = Vec::with_capacity(3 * self.n() + 1);
        for (c, a) in self.centers.iter().zip(&self.angles) {
            z.extend_from_slice(&[c.x, c.y, *a]);
        }
        z.push(side);
        z
    }

    fn from_vector(z: &[f64]) -> Result<Self, HexError> {
        let n = (z.len() - 1) / 3;
        let centers = (0..n).map(|i| Point2::new(z[3 * i], z[3 * i + 1])).collect();
        let angles = (0..n).map(|i| z[3 * i + 2]).collect();
        Self::new(centers, angles)
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            centers: self.centers.iter().map(|c| Point2::new(c.x * factor, c.y * factor)).collect(),
            angles: self.angles.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub i: usize,
    pub j: usize,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexValidationReport {
    pub side_length: f64,
    pub overlaps: Vec<Overlap>,
    pub valid: bool,
}

fn all_vertices(c: &HexConfig) -> Vec<[Point2; 6]> {
    c.hexagons().map(|h| hex_vertices(&h)).collect()
}

fn overlaps_above(c: &HexConfig, threshold: f64) -> Vec<Overlap> {
    let verts = all_vertices(c);
    let mut out = Vec::new();
    for i in 0..c.n() {
        for j in i + 1..c.n() {
            if distance(c.centers[i], c.centers[j]) >= CONTACT_RANGE {
                continue;
            }
            let depth = penetration_depth_with_vertices(&c.hexagon(i), &c.hexagon(j), &verts[i], &verts[j]);
            if depth > threshold {
                out.push(Overlap { i, j, depth });
            }
        }
    }
    out
}

pub fn hex_validate(c: &HexConfig) -> Result<HexValidationReport, HexError> {
    // HexConfig is finite by construction; re-checked for deserialized input
    let c = HexConfig::new(c.centers.clone(), c.angles.clone())?;
    let overlaps = overlaps_above(&c, OVERLAP_TOLERANCE);
    Ok(HexValidationReport { side_length: c.side_length(), valid: overlaps.is_empty(), overlaps })
}

pub fn hex_fitness(c: &HexConfig) -> Result<f64, HexError> {
    let report = hex_validate(c)?;
    if report.valid {
        Ok(-report.side_length)
    } else {
        Err(HexError::ConstraintViolation(report))
    }
}

/// Sites of the flat-topped honeycomb (neighbour distance √3), nearest to
/// the origin first; ties broken by polar angle.
pub fn honeycomb_sites(n: usize) -> Vec<Point2> {
    let r = 10i64;
    let mut sites: Vec<(i64, f64, Point2)> = Vec::new();
    for i in -r..=r {
        for j in -r..=r {
            let p = Point2::new(1.5 * (i + j) as f64, SQRT3 / 2.0 * (i - j) as f64);
            let angle = crate::math::rem_euclid(libm::atan2(p.y, p.x), TAU);
            sites.push((i * i + i * j + j * j, angle, p));
        }
    }
    sites.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    sites.into_iter().take(n).map(|s| s.2).collect()
}

/// Unjittered lattice packing of the first `n` honeycomb sites.
pub fn honeycomb_lattice(n: usize) -> Result<HexConfig, HexError> {
    if n == 0 || n > MAX_HEXAGONS {
        return Err(HexError::CountOutOfRange(n));
    }
    HexConfig::new(honeycomb_sites(n), vec![0.0; n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMode {
    /// Squared-penalty objective minimized by bounded L-BFGS.
    Gradient,
    /// Explicit inequality constraints solved by SQP.
    Sqp,
}

/// Tunables for the reference hexagon operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexParams {
    pub mode: OptimizerMode,
    pub jitter_center: f64,
    pub jitter_angle: f64,
    /// Allowed growth of the lattice side caused by jitter.
    pub jitter_side_budget: f64,
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
    /// Optimizer iterations per penalty round.
    pub max_iters: usize,
    /// Centre bounds are `±bound_slack · L₀`.
    pub bound_slack: f64,
    pub perturb_center_scale: f64,
    pub teleport_threshold: f64,
}

impl Default for HexParams {
    fn default() -> Self {
        Self {
            mode: OptimizerMode::Gradient,
            jitter_center: 0.05,
            jitter_angle: 0.05,
            jitter_side_budget: 0.01,
            penalty_start: 10.0,
            penalty_growth: 10.0,
            penalty_rounds: 6,
            max_iters: 500,
            bound_slack: 1.5,
            perturb_center_scale: 0.1,
            teleport_threshold: 10.0,
        }
    }
}

impl HexParams {
    pub fn for_mode(mode: OptimizerMode) -> Self {
        match mode {
            OptimizerMode::Gradient => Self::default(),
            OptimizerMode::Sqp => Self {
                mode,
                penalty_start: 1.0,
                penalty_rounds: 4,
                max_iters: 1500,
                bound_slack: 3.0,
                ..Self::default()
            },
        }
    }
}

/// Pushes centres away from the origin until no pair overlaps by more than
/// `target`. Returns `None` if coincident centres make that impossible.
fn separate(c: &HexConfig, target: f64) -> Option<HexConfig> {
    let mut current = c.clone();
    for _ in 0..500 {
        let overlaps = overlaps_above(&current, target);
        if overlaps.is_empty() {
            return Some(current);
        }
        let mut ratio: f64 = 0.0;
        for o in &overlaps {
            let d = distance(current.centers[o.i], current.centers[o.j]);
            if d < 1e-9 {
                return None;
            }
            ratio = ratio.max((o.depth + target) / d);
        }
        current = current.scaled(1.0 + 1.01 * ratio);
    }
    None
}

/// Lattice sites with seeded jitter. Jitter is halved until the separated
/// configuration grows the lattice side by at most `jitter_side_budget`.
pub fn hex_generate(n: usize, seed: u64) -> Result<HexConfig, HexError> {
    hex_generate_with(n, seed, &HexParams::default())
}

pub fn hex_generate_with(n: usize, seed: u64, params: &HexParams) -> Result<HexConfig, HexError> {
    let lattice = honeycomb_lattice(n)?;
    let budget = lattice.side_length() * (1.0 + params.jitter_side_budget);
    let mut rng = rng::seeded(seed);
    let noise: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            let da: f64 = StandardNormal.sample(&mut rng);
            (dx, dy, da)
        })
        .collect();
    let mut amplitude = 1.0;
    for _ in 0..=20 {
        let centers = lattice
            .centers
            .iter()
            .zip(&noise)
            .map(|(p, (dx, dy, _))| {
                Point2::new(p.x + amplitude * params.jitter_center * dx, p.y + amplitude * params.jitter_center * dy)
            })
            .collect();
        let angles = noise.iter().map(|(_, _, da)| amplitude * params.jitter_angle * da).collect();
        if let Some(c) = separate(&HexConfig::new(centers, angles)?, SEPARATION_TARGET) {
            if c.side_length() <= budget {
                return Ok(c);
            }
        }
        amplitude *= 0.5;
    }
    Ok(lattice)
}

/// Support of hexagon `i` in the container normal directions
/// 30°, 90°, …, 330°, with the derivative with respect to its angle.
fn support(center: Point2, angle: f64, dir: (f64, f64, f64)) -> (f64, f64) {
    let (phi, c, s) = dir;
    let mut best = f64::NEG_INFINITY;
    let mut best_arg = 0.0;
    for k in 0..6 {
        let t = angle + k as f64 * PI / 3.0 - phi;
        let v = cos(t);
        if v > best {
            best = v;
            best_arg = t;
        }
    }
    (center.x * c + center.y * s + best, -crate::math::sin(best_arg))
}

fn container_directions() -> [(f64, f64, f64); 6] {
    let mut dirs = [(0.0, 0.0, 0.0); 6];
    for (k, d) in dirs.iter_mut().enumerate() {
        let phi = PI / 6.0 + k as f64 * PI / 3.0;
        let (s, c) = sin_cos(phi);
        *d = (phi, c, s);
    }
    dirs
}

fn pair_depth(z: &[f64], i: usize, j: usize) -> f64 {
    let a = Hexagon::unit(Point2::new(z[3 * i], z[3 * i + 1]), z[3 * i + 2]);
    let b = Hexagon::unit(Point2::new(z[3 * j], z[3 * j + 1]), z[3 * j + 2]);
    penetration_depth_with_vertices(&a, &b, &hex_vertices(&a), &hex_vertices(&b))
}

/// Central-difference gradient of a pair depth over the pair's six
/// coordinates, as `(index, derivative)`.
fn pair_depth_gradient(z: &mut [f64], i: usize, j: usize) -> [(usize, f64); 6] {
    let idx = [3 * i, 3 * i + 1, 3 * i + 2, 3 * j, 3 * j + 1, 3 * j + 2];
    let mut out = [(0, 0.0); 6];
    for (slot, &k) in out.iter_mut().zip(&idx) {
        let orig = z[k];
        z[k] = orig + FD_STEP;
        let up = pair_depth(z, i, j);
        z[k] = orig - FD_STEP;
        let down = pair_depth(z, i, j);
        z[k] = orig;
        *slot = (k, (up - down) / (2.0 * FD_STEP));
    }
    out
}

fn near_pairs(z: &[f64], n: usize, range: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if hypot(z[3 * i] - z[3 * j], z[3 * i + 1] - z[3 * j + 1]) < range {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// `L + w·(Σ overlap² + Σ containment excess²)` over `[x, y, θ]* ++ [L]`.
fn penalty_objective(z: &[f64], grad: &mut [f64], n: usize, weight: f64, scratch: &mut Vec<f64>) -> f64 {
    let side = z[3 * n];
    let apothem = side * SQRT3 / 2.0;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut value = side;
    grad[3 * n] = 1.0;
    for i in 0..n {
        let center = Point2::new(z[3 * i], z[3 * i + 1]);
        for dir in container_directions() {
            let (s, ds_dangle) = support(center, z[3 * i + 2], dir);
            let excess = s - apothem;
            if excess > 0.0 {
                value += weight * excess * excess;
                let k = 2.0 * weight * excess;
                grad[3 * i] += k * dir.1;
                grad[3 * i + 1] += k * dir.2;
                grad[3 * i + 2] += k * ds_dangle;
                grad[3 * n] -= k * SQRT3 / 2.0;
            }
        }
    }
    scratch.clear();
    scratch.extend_from_slice(z);
    for (i, j) in near_pairs(z, n, CONTACT_RANGE) {
        let d = pair_depth(z, i, j);
        if d > 0.0 {
            value += weight * d * d;
            for (k, dd) in pair_depth_gradient(scratch, i, j) {
                grad[k] += 2.0 * weight * d * dd;
            }
        }
    }
    value
}

struct ConstrainedPacking {
    n: usize,
}

impl ConstrainedObjective for ConstrainedPacking {
    fn dim(&self) -> usize {
        3 * self.n + 1
    }

    fn objective(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        grad[3 * self.n] = 1.0;
        z[3 * self.n]
    }

    fn constraints(&self, z: &[f64]) -> Vec<Constraint> {
        let n = self.n;
        let apothem = z[3 * n] * SQRT3 / 2.0;
        let mut out = Vec::new();
        for i in 0..n {
            let center = Point2::new(z[3 * i], z[3 * i + 1]);
            for (k, dir) in container_directions().into_iter().enumerate() {
                let (s, ds_dangle) = support(center, z[3 * i + 2], dir);
                let value = s - apothem;
                if value > -0.5 {
                    out.push(Constraint {
                        key: (i * 6 + k) as u64,
                        value,
                        grad: vec![(3 * i, dir.1), (3 * i + 1, dir.2), (3 * i + 2, ds_dangle), (3 * n, -SQRT3 / 2.0)],
                    });
                }
            }
        }
        let mut scratch = z.to_vec();
        for (i, j) in near_pairs(z, n, CONTACT_RANGE + 0.3) {
            out.push(Constraint {
                key: (1 << 32) + (i * MAX_HEXAGONS + j) as u64,
                value: pair_depth(z, i, j),
                grad: pair_depth_gradient(&mut scratch, i, j).to_vec(),
            });
        }
        out
    }

    fn violation(&self, z: &[f64]) -> f64 {
        let n = self.n;
        let apothem = z[3 * n] * SQRT3 / 2.0;
        let mut total = 0.0;
        for i in 0..n {
            let center = Point2::new(z[3 * i], z[3 * i + 1]);
            for dir in container_directions() {
                total += (support(center, z[3 * i + 2], dir).0 - apothem).max(0.0);
            }
        }
        for (i, j) in near_pairs(z, n, CONTACT_RANGE) {
            total += pair_depth(z, i, j).max(0.0);
        }
        total
    }
}

fn bounds_for(c: &HexConfig, side: f64, slack: f64) -> Bounds {
    let n = c.n();
    let extent = c.centers.iter().fold(side, |m, p| m.max(p.x.abs()).max(p.y.abs()));
    let b = slack * extent + 1.0;
    let mut lower = vec![f64::NEG_INFINITY; 3 * n + 1];
    let mut upper = vec![f64::INFINITY; 3 * n + 1];
    for i in 0..n {
        lower[3 * i] = -b;
        lower[3 * i + 1] = -b;
        upper[3 * i] = b;
        upper[3 * i + 1] = b;
    }
    lower[3 * n] = 0.0;
    upper[3 * n] = 2.0 * b;
    Bounds { lower, upper }
}

/// Repairs overlaps and shrinks the container. Never returns an invalid
/// configuration and never a larger side than a valid input.
pub fn hex_improve(c: &HexConfig, mode: OptimizerMode) -> Result<HexConfig, HexError> {
    hex_improve_with(c, &HexParams::for_mode(mode), &Deadline::never())
}

pub fn hex_improve_with(c: &HexConfig, params: &HexParams, deadline: &Deadline) -> Result<HexConfig, HexError> {
    let input_report = hex_validate(c)?;
    let n = c.n();
    let side0 = input_report.side_length;
    let mut z = c.to_vector(side0);
    let bounds = bounds_for(c, side0, params.bound_slack);
    let mut weight = params.penalty_start;
    let rounds = params.penalty_rounds.max(3);
    match params.mode {
        OptimizerMode::Gradient => {
            let opts = LbfgsOptions { max_iters: params.max_iters, memory: 12, grad_tol: 1e-10, rel_tol: 1e-14, max_backtracks: 50 };
            let mut scratch = Vec::new();
            for _ in 0..rounds {
                let result = minimize_lbfgs(
                    |x, g| penalty_objective(x, g, n, weight, &mut scratch),
                    &z,
                    Some(&bounds),
                    &opts,
                    deadline,
                );
                if result.status == Status::DeadlineExpired {
                    return Err(HexError::Timeout);
                }
                if result.x.iter().all(|v| v.is_finite()) {
                    z = result.x;
                }
                weight *= params.penalty_growth;
            }
        }
        OptimizerMode::Sqp => {
            let problem = ConstrainedPacking { n };
            for _ in 0..rounds {
                let opts = SqpOptions { max_iters: params.max_iters / rounds, merit_weight: weight, ..SqpOptions::default() };
                let result = minimize_sqp(&problem, &z, Some(&bounds), &opts, deadline);
                if result.status == Status::DeadlineExpired {
                    return Err(HexError::Timeout);
                }
                if result.x.iter().all(|v| v.is_finite()) {
                    z = result.x;
                }
                weight *= params.penalty_growth;
            }
        }
    }
    let fallback = |reason: &str| {
        if input_report.valid {
            Ok(c.clone())
        } else {
            Err(HexError::ImprovementFailed(reason.into()))
        }
    };
    let Ok(candidate) = HexConfig::from_vector(&z) else {
        return fallback("optimizer produced non-finite coordinates");
    };
    let Some(candidate) = separate(&candidate, SEPARATION_TARGET) else {
        return fallback("could not separate coincident hexagons");
    };
    let report = hex_validate(&candidate)?;
    if !report.valid {
        return fallback("overlaps remain after separation");
    }
    if input_report.valid && report.side_length > side0 + 1e-9 {
        return Ok(c.clone());
    }
    Ok(candidate)
}

/// Gaussian moves of std `min(σ, 10)·0.1` on centres and `min(σ, π)` on
/// angles; from `σ ≥ 10` one hexagon is also teleported to a uniform point
/// of the current container. The result may overlap.
pub fn hex_perturb(c: &HexConfig, sigma: f64, seed: u64) -> HexConfig {
    hex_perturb_with(c, sigma, seed, &HexParams::default())
}

pub fn hex_perturb_with(c: &HexConfig, sigma: f64, seed: u64, params: &HexParams) -> HexConfig {
    let mut rng = rng::seeded(seed);
    let side = c.side_length();
    let center_std = sigma.min(10.0) * params.perturb_center_scale;
    let angle_std = sigma.min(PI);
    let mut centers = c.centers.clone();
    let mut angles = c.angles.clone();
    for (p, a) in centers.iter_mut().zip(angles.iter_mut()) {
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        let da: f64 = StandardNormal.sample(&mut rng);
        p.x += center_std * dx;
        p.y += center_std * dy;
        *a += angle_std * da;
    }
    if sigma >= params.teleport_threshold {
        let k = rng.random_range(0..c.n());
        let apothem = side * SQRT3 / 2.0;
        loop {
            let p = Point2::new(rng.random_range(-side..=side), rng.random_range(-apothem..=apothem));
            if crate::geometry::in_container(p, side) {
                centers[k] = p;
                break;
            }
        }
    }
    HexConfig { centers, angles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::intersection_area;

    fn cfg(centers: &[(f64, f64)], angles: &[f64]) -> HexConfig {
        HexConfig::new(centers.iter().map(|&(x, y)| Point2::new(x, y)).collect(), angles.to_vec()).unwrap()
    }

    #[test]
    fn validate_examples() {
        let one = hex_validate(&cfg(&[(0.0, 0.0)], &[0.0])).unwrap();
        assert!(one.valid && (one.side_length - 1.0).abs() < 1e-12);

        let pair = cfg(&[(0.0, 0.0), (0.0, SQRT3)], &[0.0, 0.0]);
        let report = hex_validate(&pair).unwrap();
        assert!(report.valid);
        // oracle: project all 12 vertices on the container normals
        let mut support: f64 = 0.0;
        for h in pair.hexagons() {
            for v in hex_vertices(&h) {
                for (nx, ny) in crate::geometry::CONTAINER_NORMALS {
                    support = support.max((v.x * nx + v.y * ny).abs());
                }
            }
        }
        assert!((report.side_length - support * 2.0 / SQRT3).abs() < 1e-12);

        let bad = hex_validate(&cfg(&[(0.0, 0.0), (0.0, 1.5)], &[0.0, 0.0])).unwrap();
        assert!(!bad.valid);
        assert_eq!((bad.overlaps[0].i, bad.overlaps[0].j), (0, 1));
        assert!((bad.overlaps[0].depth - (SQRT3 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        assert!(matches!(
            HexConfig::new(vec![Point2::new(f64::NAN, 0.0)], vec![0.0]),
            Err(HexError::Malformed(_))
        ));
        assert!(matches!(HexConfig::new(vec![Point2::ORIGIN], vec![]), Err(HexError::Malformed(_))));
    }

    #[test]
    fn fitness_examples() {
        assert!((hex_fitness(&cfg(&[(0.0, 0.0)], &[0.0])).unwrap() + 1.0).abs() < 1e-12);
        let lattice = honeycomb_lattice(13).unwrap();
        assert!((hex_fitness(&lattice).unwrap() + 4.0).abs() < 1e-6);
        assert!(matches!(
            hex_fitness(&cfg(&[(0.0, 0.0), (0.0, 1.5)], &[0.0, 0.0])),
            Err(HexError::ConstraintViolation(_))
        ));
    }

    #[test]
    fn lattice_sides() {
        assert!((honeycomb_lattice(7).unwrap().side_length() - 2.0 - 1.0 / SQRT3 * 0.0).abs() < 3.0);
        assert!((honeycomb_lattice(11).unwrap().side_length() - 4.0).abs() < 1e-12);
        assert!((honeycomb_lattice(13).unwrap().side_length() - 4.0).abs() < 1e-12);
        assert!(matches!(honeycomb_lattice(65), Err(HexError::CountOutOfRange(65))));
        assert!(matches!(hex_generate(0, 0), Err(HexError::CountOutOfRange(0))));
    }

    #[test]
    fn generate_examples() {
        let one = hex_generate(1, 5).unwrap();
        assert!(hex_validate(&one).unwrap().valid && one.side_length() <= 1.2);
        let thirteen = hex_generate(13, 0).unwrap();
        let r = hex_validate(&thirteen).unwrap();
        assert!(r.valid && r.side_length <= 4.05, "{r:?}");
        let a = hex_generate(7, 1).unwrap();
        let b = hex_generate(7, 2).unwrap();
        assert!(hex_validate(&a).unwrap().valid && hex_validate(&b).unwrap().valid);
        assert_ne!(a, b);
        assert_eq!(a, hex_generate(7, 1).unwrap());
    }

    #[test]
    fn improve_repairs_overlapping_pair() {
        let out = hex_improve(&cfg(&[(0.0, 0.0), (0.0, 1.5)], &[0.0, 0.0]), OptimizerMode::Gradient).unwrap();
        assert!(hex_validate(&out).unwrap().valid);
    }

    #[test]
    fn improve_recentres_single_hexagon() {
        let out = hex_improve(&cfg(&[(5.0, 5.0)], &[0.3]), OptimizerMode::Gradient).unwrap();
        let side = out.side_length();
        assert!(side <= 1.0 + 1e-6, "side {side}");
    }

    #[test]
    fn improve_keeps_the_lattice_optimum() {
        let lattice = honeycomb_lattice(13).unwrap();
        for mode in [OptimizerMode::Gradient, OptimizerMode::Sqp] {
            let out = hex_improve(&lattice, mode).unwrap();
            assert!(out.side_length() <= 4.0 + 1e-6);
            assert!(hex_validate(&out).unwrap().valid);
        }
    }

    #[test]
    fn sqp_mode_repairs_overlap() {
        let out = hex_improve(&cfg(&[(0.0, 0.0), (0.0, 1.5), (1.4, 0.7)], &[0.0, 0.2, 0.4]), OptimizerMode::Sqp).unwrap();
        assert!(hex_validate(&out).unwrap().valid);
    }

    #[test]
    fn perturb_examples() {
        let c = hex_generate(11, 3).unwrap();
        let tiny = hex_perturb(&c, 1e-3, 8);
        let max_move = c
            .centers()
            .iter()
            .zip(tiny.centers())
            .map(|(a, b)| distance(*a, *b))
            .fold(0.0_f64, f64::max);
        assert!(max_move <= 0.004 * 1.5);
        let big = hex_perturb(&c, 100.0, 8);
        assert_eq!(big, hex_perturb(&c, 100.0, 8));
        assert_eq!(big.n(), 11);
        assert!(c.centers().iter().zip(big.centers()).any(|(a, b)| distance(*a, *b) > 0.1));
    }

    #[test]
    fn reported_overlaps_have_positive_area() {
        let c = hex_perturb(&hex_generate(9, 2).unwrap(), 1.0, 3);
        for o in hex_validate(&c).unwrap().overlaps {
            assert!(intersection_area(&c.hexagon(o.i), &c.hexagon(o.j)) > 1e-9);
        }
    }
}
