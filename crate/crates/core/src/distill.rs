//! Score distillation for motion sequences: the diffusion noise schedule,
//! motion corruption, the pluggable denoiser interface, and the Monte-Carlo
//! distillation gradient, plus synthetic oracle denoisers for testing.
//!
//! Sign convention: the returned gradient is `E[w(t) (X - X_hat_0)]`, i.e.
//! the descent direction's negation, so a plain update `X <- X - lr * g`
//! moves the motion toward the denoiser's prediction.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistillError {
    #[error("denoiser output length {got} does not match motion length {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("diffusion step {step} out of range; schedule has {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("external denoiser failed: {0}")]
    External(String),
}

/// Shape of a flattened motion tensor: `frames x (3 + 6 + 3 joints)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionShape {
    pub frames: usize,
    pub joints: usize,
}

impl MotionShape {
    pub fn frame_dim(&self) -> usize {
        3 + 6 + 3 * self.joints
    }

    pub fn len(&self) -> usize {
        self.frames * self.frame_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cumulative noise-retention schedule alpha_bar(t), non-increasing in t.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<Real>,
}

impl NoiseSchedule {
    /// Standard linear-beta schedule: beta ramps linearly from `beta_start`
    /// to `beta_end` over `steps`, and alpha_bar is the running product of
    /// (1 - beta).
    pub fn linear_beta(steps: usize, beta_start: Real, beta_end: Real) -> Self {
        assert!(steps >= 1);
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut product = 1.0;
        for i in 0..steps {
            let frac = if steps == 1 { 0.0 } else { i as Real / (steps - 1) as Real };
            let beta = beta_start + (beta_end - beta_start) * frac;
            product *= 1.0 - beta;
            alpha_bar.push(product);
        }
        Self { alpha_bar }
    }

    /// Builds a schedule from explicit alpha_bar values (used by tests to
    /// pin corner cases like alpha_bar = 1 or 0).
    pub fn from_alpha_bar(alpha_bar: Vec<Real>) -> Self {
        assert!(!alpha_bar.is_empty());
        Self { alpha_bar }
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, step: usize) -> Real {
        self.alpha_bar[step]
    }

    /// Distillation weight w(t) = 1 - alpha_bar(t).
    pub fn weight(&self, step: usize) -> Real {
        1.0 - self.alpha_bar[step]
    }

    /// Schedule sanity: alpha_bar non-increasing and close to 1 at step 0.
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha_bar[0] < 0.99 {
            return Err(format!("alpha_bar[0] = {} should be >= 0.99", self.alpha_bar[0]));
        }
        for (i, pair) in self.alpha_bar.windows(2).enumerate() {
            if pair[1] > pair[0] {
                return Err(format!("alpha_bar increases at step {}", i + 1));
            }
        }
        Ok(())
    }
}

/// Everything a denoiser may condition on besides the noised motion.
#[derive(Debug, Clone)]
pub struct DenoiseContext<'a> {
    pub step: usize,
    pub alpha_bar: Real,
    pub prompt: &'a str,
    /// Classifier-free guidance scale, passed through. Oracle denoisers
    /// ignore it.
    pub guidance_scale: Real,
    pub shape: MotionShape,
}

/// Predicts the clean motion from a noised one at a diffusion step. The
/// output must have the same shape as the input.
pub trait Denoiser {
    fn predict_clean(&self, noised: &[Real], ctx: &DenoiseContext<'_>) -> Result<Vec<Real>, DistillError>;
}

/// Corrupts a flattened motion at diffusion step `t`:
/// `X_t = sqrt(alpha_bar) X + sqrt(1 - alpha_bar) eps` with standard normal
/// noise from the given generator. Returns `(X_t, eps)`.
pub fn corrupt<R: Rng + ?Sized>(
    motion: &[Real],
    step: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(Vec<Real>, Vec<Real>), DistillError> {
    if step >= schedule.steps() {
        return Err(DistillError::StepOutOfRange {
            step,
            steps: schedule.steps(),
        });
    }
    let a = schedule.alpha_bar(step);
    let signal = a.sqrt();
    let noise_scale = (1.0 - a).sqrt();
    let eps: Vec<Real> = (0..motion.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noised = motion
        .iter()
        .zip(&eps)
        .map(|(&x, &e)| signal * x + noise_scale * e)
        .collect();
    Ok((noised, eps))
}

/// Monte-Carlo distillation gradient plus a scalar surrogate recorded in
/// loss curves (mean of `w(t) ||X_hat_0 - X||^2 / len`).
#[derive(Debug, Clone, PartialEq)]
pub struct HmsdGradient {
    pub gradient: Vec<Real>,
    pub surrogate_loss: Real,
}

/// Averages `w(t) (X - X_hat_0)` over `samples` draws of a uniform step in
/// `[t_min, t_max]` and fresh noise. Descending along the returned gradient
/// pulls the motion toward the denoiser's predictions.
#[allow(clippy::too_many_arguments)]
pub fn hmsd_gradient<R: Rng + ?Sized>(
    motion: &[Real],
    shape: MotionShape,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    t_min: usize,
    t_max: usize,
    prompt: &str,
    guidance_scale: Real,
    samples: usize,
    rng: &mut R,
) -> Result<HmsdGradient, DistillError> {
    assert!(samples >= 1);
    assert!(t_min <= t_max);
    assert_eq!(motion.len(), shape.len(), "motion length must match its shape");
    if t_max >= schedule.steps() {
        return Err(DistillError::StepOutOfRange {
            step: t_max,
            steps: schedule.steps(),
        });
    }
    let mut gradient = vec![0.0; motion.len()];
    let mut surrogate = 0.0;
    for _ in 0..samples {
        let step = rng.gen_range(t_min..=t_max);
        let (noised, _) = corrupt(motion, step, schedule, rng)?;
        let ctx = DenoiseContext {
            step,
            alpha_bar: schedule.alpha_bar(step),
            prompt,
            guidance_scale,
            shape,
        };
        let predicted = denoiser.predict_clean(&noised, &ctx)?;
        if predicted.len() != motion.len() {
            return Err(DistillError::ShapeMismatch {
                got: predicted.len(),
                expected: motion.len(),
            });
        }
        let w = schedule.weight(step);
        let mut residual_sq = 0.0;
        for ((g, &x), &x0) in gradient.iter_mut().zip(motion).zip(&predicted) {
            let r = x0 - x;
            residual_sq += r * r;
            *g += w * (x - x0);
        }
        surrogate += w * residual_sq / motion.len() as Real;
    }
    let inv = 1.0 / samples as Real;
    for g in &mut gradient {
        *g *= inv;
    }
    Ok(HmsdGradient {
        gradient,
        surrogate_loss: surrogate * inv,
    })
}

/// Oracle denoiser: ignores the input entirely and returns a fixed
/// reference motion. Descent contracts toward the reference.
pub struct ProjectionDenoiser {
    pub reference: Vec<Real>,
}

impl Denoiser for ProjectionDenoiser {
    fn predict_clean(&self, noised: &[Real], _ctx: &DenoiseContext<'_>) -> Result<Vec<Real>, DistillError> {
        if self.reference.len() != noised.len() {
            return Err(DistillError::ShapeMismatch {
                got: self.reference.len(),
                expected: noised.len(),
            });
        }
        Ok(self.reference.clone())
    }
}

/// De-scales the input by sqrt(alpha_bar); the zero-information baseline.
pub struct IdentityDenoiser;

fn descale(noised: &[Real], alpha_bar: Real) -> Vec<Real> {
    let inv = 1.0 / alpha_bar.sqrt().max(1e-12);
    noised.iter().map(|&x| x * inv).collect()
}

impl Denoiser for IdentityDenoiser {
    fn predict_clean(&self, noised: &[Real], ctx: &DenoiseContext<'_>) -> Result<Vec<Real>, DistillError> {
        Ok(descale(noised, ctx.alpha_bar))
    }
}

/// De-scales the input, then box-averages each coordinate over a temporal
/// window of `2 * half_width + 1` frames (clamped at the sequence ends).
pub struct SmoothingDenoiser {
    pub half_width: usize,
}

impl Denoiser for SmoothingDenoiser {
    fn predict_clean(&self, noised: &[Real], ctx: &DenoiseContext<'_>) -> Result<Vec<Real>, DistillError> {
        let d = ctx.shape.frame_dim();
        let t = ctx.shape.frames;
        if noised.len() != ctx.shape.len() {
            return Err(DistillError::ShapeMismatch {
                got: noised.len(),
                expected: ctx.shape.len(),
            });
        }
        let clean = descale(noised, ctx.alpha_bar);
        let mut out = vec![0.0; clean.len()];
        for f in 0..t {
            let lo = f.saturating_sub(self.half_width);
            let hi = (f + self.half_width).min(t - 1);
            let count = (hi - lo + 1) as Real;
            for i in 0..d {
                let mut acc = 0.0;
                for g in lo..=hi {
                    acc += clean[g * d + i];
                }
                out[f * d + i] = acc / count;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SHAPE: MotionShape = MotionShape { frames: 4, joints: 2 };

    fn ramp(len: usize) -> Vec<Real> {
        (0..len).map(|i| (i as Real * 0.37).sin()).collect()
    }

    #[test]
    fn linear_schedule_is_sane() {
        let schedule = NoiseSchedule::linear_beta(1000, 1e-4, 0.02);
        schedule.validate().unwrap();
        assert!(schedule.alpha_bar(0) >= 0.99);
        assert!(schedule.alpha_bar(999) < 0.01);
        // Over the low-step sampling range the weight stays small.
        let w100 = schedule.weight(100);
        assert!(w100 > 0.05 && w100 < 0.2, "w(100) = {w100}");
    }

    #[test]
    fn corrupt_keeps_signal_at_alpha_one() {
        let schedule = NoiseSchedule::from_alpha_bar(vec![1.0]);
        let x = ramp(SHAPE.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (noised, _) = corrupt(&x, 0, &schedule, &mut rng).unwrap();
        assert_eq!(noised, x);
    }

    #[test]
    fn corrupt_is_pure_noise_at_alpha_zero() {
        let schedule = NoiseSchedule::from_alpha_bar(vec![1.0, 0.0]);
        let x = ramp(SHAPE.len());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (noised, eps) = corrupt(&x, 1, &schedule, &mut rng).unwrap();
        assert_eq!(noised, eps);
    }

    #[test]
    fn corrupt_is_reproducible() {
        let schedule = NoiseSchedule::linear_beta(100, 1e-4, 0.02);
        let x = ramp(SHAPE.len());
        let a = corrupt(&x, 50, &schedule, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = corrupt(&x, 50, &schedule, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_rejects_out_of_range_step() {
        let schedule = NoiseSchedule::linear_beta(10, 1e-4, 0.02);
        let x = ramp(SHAPE.len());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            corrupt(&x, 10, &schedule, &mut rng),
            Err(DistillError::StepOutOfRange { step: 10, steps: 10 })
        ));
    }

    #[test]
    fn corrupt_sample_statistics() {
        // E[X_t] = sqrt(a) X and per-coordinate variance = 1 - a, within
        // three standard errors over 10^4 draws.
        let a: Real = 0.64;
        let schedule = NoiseSchedule::from_alpha_bar(vec![a]);
        let x = vec![1.25; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 10_000;
        let mut sum = vec![0.0; 16];
        let mut sum_sq = vec![0.0; 16];
        for _ in 0..draws {
            let (noised, _) = corrupt(&x, 0, &schedule, &mut rng).unwrap();
            for (i, v) in noised.iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        let n = draws as Real;
        for i in 0..16 {
            let mean = sum[i] / n;
            let var = sum_sq[i] / n - mean * mean;
            let se_mean = ((1.0 - a) / n).sqrt();
            assert!((mean - a.sqrt() * 1.25).abs() < 3.0 * se_mean, "mean[{i}] = {mean}");
            let se_var = (1.0 - a) * (2.0 / n).sqrt();
            assert!((var - (1.0 - a)).abs() < 3.0 * se_var, "var[{i}] = {var}");
        }
    }

    #[test]
    fn identity_denoiser_with_full_signal_gives_zero_gradient() {
        let schedule = NoiseSchedule::from_alpha_bar(vec![1.0]);
        let x = ramp(SHAPE.len());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = hmsd_gradient(&x, SHAPE, &IdentityDenoiser, &schedule, 0, 0, "", 1.0, 4, &mut rng).unwrap();
        assert!(g.gradient.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_denoiser_gradient_is_zero_mean() {
        let schedule = NoiseSchedule::linear_beta(200, 1e-4, 0.02);
        let x = ramp(SHAPE.len());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let draws = 10_000;
        let mut mean = vec![0.0; x.len()];
        for _ in 0..draws {
            let g = hmsd_gradient(&x, SHAPE, &IdentityDenoiser, &schedule, 0, 100, "", 1.0, 1, &mut rng)
                .unwrap();
            for (m, v) in mean.iter_mut().zip(&g.gradient) {
                *m += v;
            }
        }
        // Per-coordinate |E[g]| under 3 standard errors; per-draw scale is
        // bounded by the largest w sqrt((1-a)/a) over the sampled range.
        let w_max: Real = schedule.weight(100);
        let scale = w_max * (w_max / (1.0 - w_max)).sqrt();
        let tol = 3.0 * scale / (draws as Real).sqrt();
        for (i, m) in mean.iter().enumerate() {
            let avg = m / draws as Real;
            assert!(avg.abs() < tol, "coordinate {i}: mean gradient {avg} vs tol {tol}");
        }
    }

    #[test]
    fn projection_gradient_points_from_reference() {
        // In expectation the gradient is E[w] (X - X_ref).
        let schedule = NoiseSchedule::linear_beta(1000, 1e-4, 0.02);
        let x = ramp(SHAPE.len());
        let reference = vec![0.0; SHAPE.len()];
        let denoiser = ProjectionDenoiser { reference };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 4000;
        let mut mean = vec![0.0; x.len()];
        for _ in 0..draws {
            let g = hmsd_gradient(&x, SHAPE, &denoiser, &schedule, 0, 100, "", 1.0, 1, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(&g.gradient) {
                *m += v;
            }
        }
        let e_w: Real = (0..=100).map(|t| schedule.weight(t)).sum::<Real>() / 101.0;
        for (i, m) in mean.iter().enumerate() {
            let avg = m / draws as Real;
            let expected = e_w * x[i];
            assert!(
                (avg - expected).abs() < 0.05 * e_w * (1.0 + x[i].abs()),
                "coordinate {i}: {avg} vs {expected}"
            );
        }
    }

    #[test]
    fn projection_descent_contracts_monotonically() {
        let schedule = NoiseSchedule::linear_beta(1000, 1e-4, 0.02);
        let reference = ramp(SHAPE.len());
        let denoiser = ProjectionDenoiser {
            reference: reference.clone(),
        };
        let mut x = vec![0.0; SHAPE.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut last = Real::MAX;
        for step in 0..500 {
            let g = hmsd_gradient(&x, SHAPE, &denoiser, &schedule, 0, 100, "", 1.0, 1, &mut rng).unwrap();
            for (xi, gi) in x.iter_mut().zip(&g.gradient) {
                *xi -= 0.5 * gi;
            }
            let dist: Real = x
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<Real>()
                .sqrt();
            assert!(dist <= last + 1e-12, "distance grew at step {step}");
            last = dist;
        }
        assert!(last < 0.1, "did not approach the reference: {last}");
    }

    #[test]
    fn tiny_weight_bounds_gradient_norm() {
        let schedule = NoiseSchedule::from_alpha_bar(vec![0.9999]);
        let x = ramp(SHAPE.len());
        let reference = vec![2.0; SHAPE.len()];
        let denoiser = ProjectionDenoiser {
            reference: reference.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = hmsd_gradient(&x, SHAPE, &denoiser, &schedule, 0, 0, "", 1.0, 1, &mut rng).unwrap();
        let gnorm: Real = g.gradient.iter().map(|v| v * v).sum::<Real>().sqrt();
        let rnorm: Real = x
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<Real>()
            .sqrt();
        assert!(gnorm <= 1e-4 * rnorm + 1e-15);
    }

    #[test]
    fn smoothing_is_identity_on_constant_motion() {
        let x = vec![0.75; SHAPE.len()];
        let ctx = DenoiseContext {
            step: 0,
            alpha_bar: 1.0,
            prompt: "",
            guidance_scale: 1.0,
            shape: SHAPE,
        };
        let out = SmoothingDenoiser { half_width: 2 }.predict_clean(&x, &ctx).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let schedule = NoiseSchedule::linear_beta(10, 1e-4, 0.02);
        let x = ramp(SHAPE.len());
        let denoiser = ProjectionDenoiser {
            reference: vec![0.0; 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(matches!(
            hmsd_gradient(&x, SHAPE, &denoiser, &schedule, 0, 5, "", 1.0, 1, &mut rng),
            Err(DistillError::ShapeMismatch { .. })
        ));
    }
}
