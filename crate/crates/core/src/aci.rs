//! Second autocorrelation inequality: maximize
//! `C(f) = ‖f⋆f‖₂² / (‖f⋆f‖₁ · ‖f⋆f‖∞)` over non-negative step functions.
//!
//! Norms are taken on the discrete linear autoconvolution with no grid
//! spacing factors; they cancel in the ratio, so `C` is invariant under
//! rescaling `f` and under refining the grid of a fixed shape.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::deadline::Deadline;
use crate::fft;
use crate::math::{exp, floor, ln, sigmoid, softplus, softplus_inv};
use crate::optim::{minimize_lbfgs, LbfgsOptions, Status};
use crate::rng;

/// Shortest length accepted for a reported solution.
pub const MIN_FINAL_RESOLUTION: usize = 1024;
/// Shortest length `aci_generate` produces.
pub const MIN_GENERATE_RESOLUTION: usize = 16;
/// Resolution cap for the extended grid mode.
pub const DEFAULT_EXTENDED_CAP: usize = 65_536;
/// Hard ceiling for a configured extended cap.
pub const MAX_EXTENDED_CAP: usize = 1 << 21;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AciError {
    #[error("empty function")]
    Empty,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("negative sample at index {0}")]
    Negative(usize),
    #[error("function is identically zero")]
    AllZero,
    #[error("resolution {0} is below the minimum of {MIN_GENERATE_RESOLUTION}")]
    ResolutionTooSmall(usize),
    #[error("improvement failed: {0}")]
    ImprovementFailed(String),
    #[error("deadline expired")]
    Timeout,
}

/// Non-negative samples on a uniform grid, at least one positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StepFunction {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for StepFunction {
    type Error = AciError;

    fn try_from(values: Vec<f64>) -> Result<Self, AciError> {
        Self::new(values)
    }
}

impl From<StepFunction> for Vec<f64> {
    fn from(f: StepFunction) -> Self {
        f.values
    }
}

impl StepFunction {
    pub fn new(values: Vec<f64>) -> Result<Self, AciError> {
        if values.is_empty() {
            return Err(AciError::Empty);
        }
        let mut positive = false;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(AciError::NonFinite(i));
            }
            if *v < 0.0 {
                return Err(AciError::Negative(i));
            }
            positive |= *v > 0.0;
        }
        if !positive {
            return Err(AciError::AllZero);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AciReport {
    pub c_value: f64,
    pub l1: f64,
    pub l2_sq: f64,
    pub linf: f64,
}

/// `g[k] = Σ_{i+j=k} f[i]·f[j]`, length `2N − 1`.
pub fn autoconvolve(f: &StepFunction) -> Vec<f64> {
    let v = f.values();
    fft::convolve(v, v).into_iter().map(|x| x.max(0.0)).collect()
}

fn report_from_conv(g: &[f64]) -> AciReport {
    let mut l1 = 0.0;
    let mut l2_sq = 0.0;
    let mut linf: f64 = 0.0;
    for &x in g {
        l1 += x;
        l2_sq += x * x;
        linf = linf.max(x);
    }
    AciReport { c_value: l2_sq / (l1 * linf), l1, l2_sq, linf }
}

pub fn aci_fitness(f: &StepFunction) -> AciReport {
    report_from_conv(&autoconvolve(f))
}

/// Validates raw samples and evaluates them.
pub fn aci_fitness_values(values: &[f64]) -> Result<AciReport, AciError> {
    StepFunction::new(values.to_vec()).map(|f| aci_fitness(&f))
}

/// Resamples onto `len` cells: linear interpolation between cell midpoints
/// when refining, cell averaging when coarsening.
pub fn resample(values: &[f64], len: usize) -> Vec<f64> {
    let n = values.len();
    if len == n || n == 0 {
        return values.to_vec();
    }
    if len > n {
        let ratio = n as f64 / len as f64;
        (0..len)
            .map(|j| {
                let s = ((j as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n - 1) as f64);
                let i = floor(s) as usize;
                let t = s - i as f64;
                if i + 1 < n {
                    values[i] * (1.0 - t) + values[i + 1] * t
                } else {
                    values[n - 1]
                }
            })
            .collect()
    } else {
        let width = n as f64 / len as f64;
        (0..len)
            .map(|j| {
                let lo = j as f64 * width;
                let hi = lo + width;
                let mut acc = 0.0;
                let mut i = floor(lo) as usize;
                while (i as f64) < hi && i < n {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    acc += overlap * values[i];
                    i += 1;
                }
                acc / width
            })
            .collect()
    }
}

/// Multigrid ladder used by [`aci_improve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `[min(N, 1024), 2048, 4096, 8192]`.
    Default,
    /// Start at the input resolution and double up to `cap`.
    Extended { cap: usize },
}

impl GridMode {
    pub fn extended() -> Self {
        GridMode::Extended { cap: DEFAULT_EXTENDED_CAP }
    }

    pub fn ladder(&self, n: usize) -> Vec<usize> {
        match *self {
            GridMode::Default => {
                let mut rungs = vec![n.min(1024)];
                for r in [2048, 4096, 8192] {
                    if r > rungs[rungs.len() - 1] {
                        rungs.push(r);
                    }
                }
                rungs
            }
            GridMode::Extended { cap } => {
                let cap = cap.min(MAX_EXTENDED_CAP);
                let mut rungs = vec![n];
                let mut r = n;
                while r * 2 <= cap {
                    r *= 2;
                    rungs.push(r);
                }
                rungs
            }
        }
    }
}

/// Tunables for the reference ACI operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AciParams {
    pub grid: GridMode,
    /// Log-sum-exp sharpness of the first stage on each rung.
    pub beta_start: f64,
    /// Sharpness of the last stage.
    pub beta_end: f64,
    /// Stages per rung; sharpness grows geometrically between the ends.
    pub beta_stages: usize,
    /// L-BFGS iterations per stage.
    pub iters_per_stage: usize,
    pub lbfgs_memory: usize,
    /// Cap on the log-normal noise spread above the fine band.
    pub coarse_noise_cap: f64,
}

impl Default for AciParams {
    fn default() -> Self {
        Self {
            grid: GridMode::Default,
            beta_start: 1e2,
            beta_end: 1e4,
            beta_stages: 3,
            iters_per_stage: 400,
            lbfgs_memory: 12,
            coarse_noise_cap: 1.0,
        }
    }
}

impl AciParams {
    pub fn for_mode(grid: GridMode) -> Self {
        match grid {
            GridMode::Default => Self::default(),
            GridMode::Extended { .. } => Self { grid, iters_per_stage: 1200, ..Self::default() },
        }
    }

    fn betas(&self) -> Vec<f64> {
        let stages = self.beta_stages.max(1);
        if stages == 1 {
            return vec![self.beta_end];
        }
        let ratio = self.beta_end / self.beta_start;
        (0..stages)
            .map(|k| self.beta_start * crate::math::powf(ratio, k as f64 / (stages - 1) as f64))
            .collect()
    }
}

/// Smoothed objective `−ln C_β(softplus(u))` with its gradient in `grad`.
///
/// The sup-norm is replaced by `mean(g)·LSE_β(g / mean(g))`, which keeps the
/// objective scale invariant and approaches the maximum as `β` grows.
pub fn smooth_objective(u: &[f64], beta: f64, grad: &mut [f64]) -> f64 {
    let f: Vec<f64> = u.iter().map(|&x| softplus(x)).collect();
    let g = fft::convolve(&f, &f);
    let len = g.len() as f64;
    let s1: f64 = g.iter().sum();
    let s2: f64 = g.iter().map(|x| x * x).sum();
    let mean = s1 / len;
    let z_max = g.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x / mean));
    let weights: Vec<f64> = g.iter().map(|&x| exp(beta * (x / mean - z_max))).collect();
    let wsum: f64 = weights.iter().sum();
    let lse = z_max + ln(wsum) / beta;
    let smooth_max = mean * lse;
    let wz: f64 = weights.iter().zip(&g).map(|(w, x)| w * x / mean).sum::<f64>() / wsum;

    // d(objective)/d(g_k)
    let h: Vec<f64> = g
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| {
            let dmax = lse / len + w / wsum - wz / len;
            1.0 / s1 + dmax / smooth_max - 2.0 * x / s2
        })
        .collect();
    let df = fft::correlate(&h, &f);
    for ((gi, dfi), ui) in grad.iter_mut().zip(&df).zip(u) {
        *gi = 2.0 * dfi * sigmoid(*ui);
    }
    ln(s1) + ln(smooth_max) - ln(s2)
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    if max > 0.0 && max.is_finite() {
        values.iter().map(|v| v / max).collect()
    } else {
        values.to_vec()
    }
}

/// Generates a seeded mixture of 2–5 rectangular bumps.
pub fn aci_generate(resolution: usize, seed: u64) -> Result<StepFunction, AciError> {
    if resolution < MIN_GENERATE_RESOLUTION {
        return Err(AciError::ResolutionTooSmall(resolution));
    }
    let mut rng = rng::seeded(seed);
    let bumps = rng.random_range(2..=5);
    let mut values = vec![0.0; resolution];
    for _ in 0..bumps {
        let height = rng.random_range(0.1..=1.0);
        let width = rng.random_range(resolution / 10..=resolution / 2).max(1);
        let start = rng.random_range(0..=resolution - width);
        for v in &mut values[start..start + width] {
            *v += height;
        }
    }
    StepFunction::new(normalized(&values))
}

/// Multigrid quasi-Newton ascent of `C`. Never returns something worse than
/// the input.
pub fn aci_improve(f: &StepFunction, mode: GridMode) -> Result<StepFunction, AciError> {
    aci_improve_with(f, &AciParams::for_mode(mode), &Deadline::never())
}

pub fn aci_improve_with(f: &StepFunction, params: &AciParams, deadline: &Deadline) -> Result<StepFunction, AciError> {
    let input_c = aci_fitness(f).c_value;
    let mut best = f.clone();
    let mut best_c = input_c;
    let mut current = f.values().to_vec();
    let opts = LbfgsOptions {
        memory: params.lbfgs_memory,
        max_iters: params.iters_per_stage,
        grad_tol: 1e-12,
        rel_tol: 1e-15,
        max_backtracks: 40,
    };
    let betas = params.betas();

    for rung in params.grid.ladder(f.len()) {
        let start = normalized(&resample(&current, rung));
        let mut u: Vec<f64> = start.iter().map(|&v| softplus_inv(v.max(1e-12))).collect();
        for &beta in &betas {
            let result = minimize_lbfgs(|x, g| smooth_objective(x, beta, g), &u, None, &opts, deadline);
            if result.status == Status::DeadlineExpired {
                return Err(AciError::Timeout);
            }
            if result.x.iter().any(|v| !v.is_finite()) {
                return Ok(best);
            }
            u = result.x;
        }
        current = u.iter().map(|&x| softplus(x)).collect();
        match StepFunction::new(normalized(&current)) {
            Ok(candidate) => {
                let c = aci_fitness(&candidate).c_value;
                if c.is_finite() && c > best_c {
                    best_c = c;
                    best = candidate;
                }
            }
            Err(_) => return Ok(best),
        }
    }
    Ok(best)
}

/// Randomized modification whose strength grows with `intensity`:
///
/// * below 0.1: log-normal noise with log-std `intensity` on every sample;
/// * below 10: noise, plus one block of 5–20 % of the samples rescaled by a
///   factor in `[0.5, 2]`;
/// * otherwise: all of the above, then resampling to a length in
///   `[N/2, 2N]` and a permutation of up to three contiguous blocks.
pub fn aci_perturb(f: &StepFunction, intensity: f64, seed: u64) -> StepFunction {
    aci_perturb_with(f, intensity, seed, &AciParams::default())
}

pub fn aci_perturb_with(f: &StepFunction, intensity: f64, seed: u64, params: &AciParams) -> StepFunction {
    let mut rng = rng::seeded(seed);
    let mut values = f.values().to_vec();
    let n = values.len();
    let spread = if intensity < 0.1 { intensity } else { intensity.min(params.coarse_noise_cap) };
    for v in values.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v *= exp(spread * z);
    }
    if intensity >= 0.1 {
        let lo = (n / 20).max(1);
        let hi = (n / 5).max(lo);
        let width = rng.random_range(lo..=hi).min(n);
        let start = rng.random_range(0..=n - width);
        let factor = rng.random_range(0.5..=2.0);
        for v in &mut values[start..start + width] {
            *v *= factor;
        }
    }
    if intensity >= 10.0 {
        let target = rng.random_range((n / 2).max(1)..=2 * n);
        values = resample(&values, target);
        let len = values.len();
        let pieces = rng.random_range(2..=3usize).min(len);
        if pieces >= 2 {
            let mut cuts: Vec<usize> = (0..pieces - 1).map(|_| rng.random_range(1..len)).collect();
            cuts.sort_unstable();
            cuts.dedup();
            let mut bounds = vec![0];
            bounds.extend(cuts);
            bounds.push(len);
            let mut blocks: Vec<&[f64]> = bounds.windows(2).map(|w| &values[w[0]..w[1]]).collect();
            // Fisher-Yates
            for i in (1..blocks.len()).rev() {
                let j = rng.random_range(0..=i);
                blocks.swap(i, j);
            }
            values = blocks.concat();
        }
    }
    let values = normalized(&values);
    StepFunction::new(values).unwrap_or_else(|_| f.clone())
}

/// Upsamples to [`MIN_FINAL_RESOLUTION`] when shorter; otherwise identity.
pub fn aci_finalize(f: &StepFunction) -> StepFunction {
    if f.len() >= MIN_FINAL_RESOLUTION {
        return f.clone();
    }
    StepFunction::new(resample(f.values(), MIN_FINAL_RESOLUTION)).unwrap_or_else(|_| f.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_autoconv(f: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 2 * f.len() - 1];
        for i in 0..f.len() {
            for j in 0..f.len() {
                g[i + j] += f[i] * f[j];
            }
        }
        g
    }

    fn uniform_closed_form(n: usize) -> f64 {
        let n = n as f64;
        (2.0 * (n - 1.0) * n * (2.0 * n - 1.0) / 6.0 + n * n) / (n * n * n)
    }

    fn sf(v: &[f64]) -> StepFunction {
        StepFunction::new(v.to_vec()).unwrap()
    }

    #[test]
    fn autoconvolve_examples() {
        assert_eq!(autoconvolve(&sf(&[1.0])), vec![1.0]);
        assert_eq!(autoconvolve(&sf(&[1.0, 1.0])), vec![1.0, 2.0, 1.0]);
        assert_eq!(autoconvolve(&sf(&[0.0, 2.0, 0.0])), vec![0.0, 0.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn fitness_examples() {
        assert_eq!(aci_fitness(&sf(&[1.0])).c_value, 1.0);
        let r = aci_fitness(&sf(&[1.0, 1.0]));
        assert_eq!((r.c_value, r.l1, r.l2_sq, r.linf), (0.75, 4.0, 6.0, 2.0));
        for n in [2, 3, 4, 64] {
            let ones = vec![1.0; n];
            let g = brute_autoconv(&ones);
            let oracle = g.iter().map(|x| x * x).sum::<f64>()
                / (g.iter().sum::<f64>() * g.iter().fold(0.0_f64, |m, v| m.max(*v)));
            assert!((oracle - uniform_closed_form(n)).abs() < 1e-14);
            assert!((aci_fitness(&sf(&ones)).c_value - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_functions_are_rejected() {
        assert_eq!(StepFunction::new(vec![0.0, 0.0]), Err(AciError::AllZero));
        assert_eq!(StepFunction::new(vec![1.0, -0.5]), Err(AciError::Negative(1)));
        assert_eq!(StepFunction::new(vec![f64::NAN]), Err(AciError::NonFinite(0)));
        assert_eq!(StepFunction::new(vec![]), Err(AciError::Empty));
        assert!(aci_fitness_values(&[0.0]).is_err());
    }

    #[test]
    fn generate_examples() {
        let f = aci_generate(1024, 0).unwrap();
        assert_eq!(f.len(), 1024);
        assert!(aci_fitness(&f).c_value >= 0.5);
        assert_eq!(aci_generate(1024, 0).unwrap(), f);
        assert!(aci_generate(16, 7).is_ok());
        assert_eq!(aci_generate(15, 0), Err(AciError::ResolutionTooSmall(15)));
    }

    #[test]
    fn ladders() {
        assert_eq!(GridMode::Default.ladder(1024), vec![1024, 2048, 4096, 8192]);
        assert_eq!(GridMode::Default.ladder(600), vec![600, 2048, 4096, 8192]);
        assert_eq!(GridMode::Default.ladder(50_000), vec![1024, 2048, 4096, 8192]);
        assert_eq!(GridMode::Extended { cap: 8000 }.ladder(1000), vec![1000, 2000, 4000, 8000]);
        assert_eq!(GridMode::Extended { cap: 100 }.ladder(1000), vec![1000]);
    }

    #[test]
    fn resample_preserves_constants() {
        let ones = vec![3.0; 100];
        assert!(resample(&ones, 1024).iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert!(resample(&ones, 37).iter().all(|v| (v - 3.0).abs() < 1e-12));
        let ramp: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(resample(&ramp, 4), vec![0.5, 2.5, 4.5, 6.5]);
    }

    #[test]
    fn finalize_examples() {
        let f = aci_generate(1024, 3).unwrap();
        assert_eq!(aci_finalize(&f), f);
        let short = aci_generate(512, 3).unwrap();
        assert_eq!(aci_finalize(&short).len(), 1024);
        let uniform = sf(&vec![1.0; 100]);
        let up = aci_finalize(&uniform);
        assert_eq!(up.len(), 1024);
        assert!((aci_fitness(&up).c_value - uniform_closed_form(100)).abs() < 0.01);
    }

    #[test]
    fn perturb_bands() {
        let f = aci_generate(256, 1).unwrap();
        let c0 = aci_fitness(&f).c_value;
        let small = aci_perturb(&f, 1e-3, 4);
        assert_eq!(small, aci_perturb(&f, 1e-3, 4));
        assert_eq!(small.len(), f.len());
        assert!((aci_fitness(&small).c_value - c0).abs() < 0.01);
        let lengths: Vec<usize> = (0..10).map(|s| aci_perturb(&f, 100.0, s).len()).collect();
        assert!(lengths.iter().any(|&l| l != f.len()));
        assert!(lengths.iter().all(|&l| (128..=512).contains(&l)));
        let huge = aci_perturb(&f, 1e3, 9);
        assert!(huge.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let mut r = rng::seeded(42);
        for trial in 0..10 {
            let u: Vec<f64> = (0..64).map(|_| r.random_range(-2.0..2.0)).collect();
            let beta = [1e2, 1e3][trial % 2];
            let mut grad = vec![0.0; 64];
            smooth_objective(&u, beta, &mut grad);
            let mut scratch = vec![0.0; 64];
            for i in 0..64 {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                let fd = (smooth_objective(&up, beta, &mut scratch) - smooth_objective(&dn, beta, &mut scratch)) / 2e-6;
                let tol = 1e-4 * fd.abs().max(grad[i].abs()).max(1e-3);
                assert!((fd - grad[i]).abs() <= tol, "trial {trial} i {i}: fd {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn improve_is_monotone_on_small_inputs() {
        let f = aci_generate(64, 5).unwrap();
        let params = AciParams { grid: GridMode::Extended { cap: 128 }, iters_per_stage: 50, ..AciParams::default() };
        let out = aci_improve_with(&f, &params, &Deadline::never()).unwrap();
        assert!(aci_fitness(&out).c_value >= aci_fitness(&f).c_value - 1e-12);
    }
}
