//! Sample-quality metrics and evaluation procedures: the Gaussian Fréchet
//! proxy distance over raw low-dimensional samples, mode coverage,
//! truncation curves, evaluation-time latent-step sweeps, and the
//! moving-window normalisation used for diagnostic series.

use crate::data::DataDistribution;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::expr::Expr;
use crate::latent::{refine_latent_numeric, LatentOptConfig};
use crate::linalg::{jacobi_eigh, sqrt_psd, Matrix};
use crate::models::GanModel;
use crate::rng::Rng;
use crate::tensor::Tensor;

const PSD_CLAMP: f64 = 1e-10;

/// Default window for [`moving_normalise`]; results are robust to the
/// choice, anything from 10 to 50 gives visually similar series.
pub const DEFAULT_NORMALISATION_WINDOW: usize = 20;

/// First two moments of a sample set, the carrier for the Fréchet distance.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    mean: Vec<f64>,
    cov: Matrix,
    count: usize,
}

impl GaussianSummary {
    /// Fit mean and covariance ((n−1) denominator) to samples.
    pub fn from_samples(samples: &[Tensor]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let dim = samples[0].len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch("ragged sample set".into()));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.data()) {
                *m += v / n;
            }
        }
        let mut cov = Matrix::zeros(dim, dim);
        if samples.len() > 1 {
            for s in samples {
                for i in 0..dim {
                    for j in 0..dim {
                        let v = cov.get(i, j)
                            + (s.data()[i] - mean[i]) * (s.data()[j] - mean[j]) / (n - 1.0);
                        cov.set(i, j, v);
                    }
                }
            }
        }
        Ok(GaussianSummary {
            mean,
            cov,
            count: samples.len(),
        })
    }

    /// Wrap externally computed moments (e.g. the analytic mixture moments).
    pub fn from_moments(mean: Vec<f64>, cov: Matrix, count: usize) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean of dim {} with {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        for i in 0..cov.rows() {
            for j in 0..cov.cols() {
                if (cov.get(i, j) - cov.get(j, i)).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(
                        "covariance must be symmetric within 1e-12".into(),
                    ));
                }
            }
        }
        Ok(GaussianSummary { mean, cov, count })
    }

    pub fn of_distribution(data: &DataDistribution) -> Result<Self> {
        let (mean, cov) = data.analytic_moments();
        GaussianSummary::from_moments(mean, cov, 0)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn trace_sqrt_product(a: &Matrix, b: &Matrix) -> Result<f64> {
    // tr((AB)^{1/2}) via the symmetrised product A^{1/2} B A^{1/2}, which
    // shares its eigenvalues with AB but is symmetric PSD.
    let root = sqrt_psd(a, PSD_CLAMP)?;
    let sym = root.matmul(b)?.matmul(&root)?;
    let (vals, _) = jacobi_eigh(&sym)?;
    let mut total = 0.0;
    for v in vals {
        if v < -PSD_CLAMP * (1.0 + a.max_abs() * b.max_abs()) {
            return Err(Error::InvalidConfig(format!(
                "product of covariances has negative eigenvalue {v:.3e}"
            )));
        }
        total += v.max(0.0).sqrt();
    }
    Ok(total)
}

/// Squared Fréchet distance between two Gaussian summaries:
/// ‖μ_p − μ_q‖² + tr(Σ_p + Σ_q − 2(Σ_p Σ_q)^{1/2}).
pub fn gaussian_frechet(p: &GaussianSummary, q: &GaussianSummary) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "summaries of dim {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let mean_term: f64 = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let tr_sqrt = trace_sqrt_product(&p.cov, &q.cov)?;
    let d2 = mean_term + p.cov.trace() + q.cov.trace() - 2.0 * tr_sqrt;
    // exact-zero distances can land a hair below zero numerically
    Ok(d2.max(0.0))
}

/// Independent route for the same quantity: symmetrise around Σ_q instead
/// of Σ_p, and for 2×2 problems cross-check the trace of the square root
/// against the closed-form eigenvalues of the (non-symmetric) product.
pub fn gaussian_frechet_oracle(p: &GaussianSummary, q: &GaussianSummary) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "summaries of dim {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let mean_term: f64 = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let tr_sqrt = trace_sqrt_product(&q.cov, &p.cov)?;
    if p.dim() == 2 {
        let prod = p.cov.matmul(&q.cov)?;
        let tr = prod.trace();
        let det = prod.get(0, 0) * prod.get(1, 1) - prod.get(0, 1) * prod.get(1, 0);
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let l1 = ((tr + disc) / 2.0).max(0.0);
        let l2 = ((tr - disc) / 2.0).max(0.0);
        let closed = l1.sqrt() + l2.sqrt();
        if (closed - tr_sqrt).abs() > 1e-6 * (1.0 + closed.abs()) {
            return Err(Error::InvalidConfig(format!(
                "2x2 closed-form trace {closed} disagrees with eigenroute {tr_sqrt}"
            )));
        }
    }
    Ok((mean_term + p.cov.trace() + q.cov.trace() - 2.0 * tr_sqrt).max(0.0))
}

/// Count modes with at least one sample within `radius`, and the fraction
/// of samples within `radius` of any mode.
pub fn mode_coverage(
    samples: &[Tensor],
    centers: &[Vec<f64>],
    radius: f64,
) -> Result<(usize, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "coverage radius must be positive, got {radius}"
        )));
    }
    let mut hit = vec![false; centers.len()];
    let mut near_any = 0usize;
    for s in samples {
        let mut close = false;
        for (k, c) in centers.iter().enumerate() {
            let d2: f64 = s.data().iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() <= radius {
                hit[k] = true;
                close = true;
            }
        }
        if close {
            near_any += 1;
        }
    }
    let modes = hit.iter().filter(|h| **h).count();
    Ok((modes, near_any as f64 / samples.len() as f64))
}

/// Moving-window normalisation of a diagnostic series: x̄_t = x_t / σ_t with
/// σ_t the (N−1)-denominator standard deviation over [t, t+N−1]. The output
/// is invariant under positive rescaling of the input; a zero-σ (constant)
/// window yields a flagged `None` entry.
pub fn moving_normalise(series: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window < 2 {
        return Err(Error::InvalidConfig(format!(
            "window must be at least 2, got {window}"
        )));
    }
    if series.len() < window {
        return Err(Error::WindowTooLong {
            window,
            len: series.len(),
        });
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    for t in 0..=(series.len() - window) {
        let chunk = &series[t..t + window];
        let mean = chunk.iter().sum::<f64>() / window as f64;
        let var =
            chunk.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (window as f64 - 1.0);
        let sigma = var.sqrt();
        if sigma == 0.0 {
            out.push(None);
        } else {
            out.push(Some(series[t] / sigma));
        }
    }
    Ok(out)
}

/// One point of a truncation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationCurvePoint {
    pub s: f64,
    pub proxy_fid: f64,
    pub modes_hit: usize,
    pub hq_fraction: f64,
}

/// One point of an evaluation-time latent-step sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStepsPoint {
    pub steps: u32,
    pub proxy_fid: f64,
    pub modes_hit: usize,
    pub hq_fraction: f64,
    /// Share of samples whose critic value did not decrease over the
    /// refinement (1.0 when every step ascended).
    pub ascent_fraction: f64,
}

/// Draw latents z ~ U(−1,1)^dim, scale by `s`, refine `steps` times with
/// the eval config, and generate. Deterministic per seed; `steps = 0` and
/// `s = 1` reduce bit-exactly to plain sampling.
pub fn generate_samples(
    model: &GanModel,
    n: usize,
    s: f64,
    steps: u32,
    latent_cfg: &LatentOptConfig,
    seed: u64,
) -> Result<Vec<Tensor>> {
    let (samples, _) = generate_samples_traced(model, n, s, steps, latent_cfg, seed)?;
    Ok(samples)
}

/// As [`generate_samples`], also reporting the fraction of samples whose
/// critic value weakly increased over refinement.
pub fn generate_samples_traced(
    model: &GanModel,
    n: usize,
    s: f64,
    steps: u32,
    latent_cfg: &LatentOptConfig,
    seed: u64,
) -> Result<(Vec<Tensor>, f64)> {
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let mut rng = Rng::seed_from(seed);
    let dim = model.latent_dim();
    let z_leaf = Expr::input("z", &[dim]);
    let x_expr = model.generate(&z_leaf)?;
    let critic = model.critic_value(&z_leaf)?;
    let mut env = model.env();
    let mut out = Vec::with_capacity(n);
    let mut ascents = 0usize;
    for _ in 0..n {
        let mut z = vec![0.0; dim];
        rng.fill_uniform_in(&mut z, -1.0, 1.0);
        let mut z = Tensor::new(vec![dim], z)?;
        if s != 1.0 {
            z = z.scale(s);
        }
        if steps > 0 {
            env.bind("z", z.clone());
            let f0 = evaluate(&critic, &env)?.item()?;
            let refined = refine_latent_numeric(&critic, "z", &z, latent_cfg, steps, &env)?;
            z = refined.z_refined;
            env.bind("z", z.clone());
            let f1 = evaluate(&critic, &env)?.item()?;
            if f1 >= f0 - 1e-12 {
                ascents += 1;
            }
        } else {
            ascents += 1;
        }
        env.bind("z", z);
        out.push(evaluate(&x_expr, &env)?);
    }
    Ok((out, ascents as f64 / n as f64))
}

fn point_metrics(
    samples: &[Tensor],
    reference: &GaussianSummary,
    centers: &[Vec<f64>],
    radius: f64,
) -> Result<(f64, usize, f64)> {
    let summary = GaussianSummary::from_samples(samples)?;
    let fid = gaussian_frechet(&summary, reference)?;
    let (modes, hq) = mode_coverage(samples, centers, radius)?;
    Ok((fid, modes, hq))
}

/// Metrics across truncation scales s ∈ (0, 1], one derived seed per point.
pub fn truncation_sweep(
    model: &GanModel,
    data: &DataDistribution,
    s_values: &[f64],
    samples_per_point: usize,
    latent_cfg: &LatentOptConfig,
    mode_radius: f64,
    master_seed: u64,
) -> Result<Vec<TruncationCurvePoint>> {
    for &s in s_values {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "truncation scale must lie in (0, 1], got {s}"
            )));
        }
    }
    let reference = GaussianSummary::of_distribution(data)?;
    let centers = data.mode_centers();
    let mut out = Vec::with_capacity(s_values.len());
    for (idx, &s) in s_values.iter().enumerate() {
        let seed = Rng::derive(master_seed, idx as u64).next_u64();
        let samples = generate_samples(
            model,
            samples_per_point,
            s,
            latent_cfg.eval_steps,
            latent_cfg,
            seed,
        )?;
        let (proxy_fid, modes_hit, hq_fraction) =
            point_metrics(&samples, &reference, &centers, mode_radius)?;
        out.push(TruncationCurvePoint {
            s,
            proxy_fid,
            modes_hit,
            hq_fraction,
        });
    }
    Ok(out)
}

/// Metrics across refinement step counts at evaluation time.
pub fn eval_latent_steps_sweep(
    model: &GanModel,
    data: &DataDistribution,
    step_counts: &[u32],
    samples_per_point: usize,
    latent_cfg: &LatentOptConfig,
    mode_radius: f64,
    master_seed: u64,
) -> Result<Vec<EvalStepsPoint>> {
    let reference = GaussianSummary::of_distribution(data)?;
    let centers = data.mode_centers();
    let mut out = Vec::with_capacity(step_counts.len());
    for (idx, &k) in step_counts.iter().enumerate() {
        let seed = Rng::derive(master_seed, idx as u64).next_u64();
        let (samples, ascent_fraction) =
            generate_samples_traced(model, samples_per_point, 1.0, k, latent_cfg, seed)?;
        let (proxy_fid, modes_hit, hq_fraction) =
            point_metrics(&samples, &reference, &centers, mode_radius)?;
        out.push(EvalStepsPoint {
            steps: k,
            proxy_fid,
            modes_hit,
            hq_fraction,
            ascent_fraction,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_model, MlpSpec};

    fn summary(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> GaussianSummary {
        GaussianSummary::from_moments(mean, Matrix::from_rows(cov).unwrap(), 0).unwrap()
    }

    #[test]
    fn frechet_identity_of_indiscernibles() {
        let p = summary(vec![0.3, -0.2], vec![vec![1.5, 0.2], vec![0.2, 0.7]]);
        let d = gaussian_frechet(&p, &p).unwrap();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn frechet_mean_shift_only() {
        let p = summary(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let q = summary(vec![1.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let d = gaussian_frechet(&p, &q).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn frechet_commuting_covariances() {
        let p = summary(vec![0.0, 0.0], vec![vec![4.0, 0.0], vec![0.0, 4.0]]);
        let q = summary(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let d = gaussian_frechet(&p, &q).unwrap();
        assert!((d - 2.0).abs() < 1e-10);
    }

    #[test]
    fn frechet_symmetric_and_matches_oracle() {
        let mut rng = Rng::seed_from(23);
        for dim in [2usize, 8] {
            for _ in 0..20 {
                let mk = |rng: &mut Rng| {
                    let mut base = Matrix::zeros(dim, dim);
                    for i in 0..dim {
                        for j in 0..dim {
                            base.set(i, j, rng.uniform_in(-1.0, 1.0));
                        }
                    }
                    // A·Aᵀ + tiny ridge: symmetric PSD
                    let mut cov = base.matmul(&base.transpose()).unwrap();
                    for i in 0..dim {
                        cov.set(i, i, cov.get(i, i) + 1e-6);
                    }
                    let mean = (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
                    GaussianSummary::from_moments(mean, cov, 0).unwrap()
                };
                let p = mk(&mut rng);
                let q = mk(&mut rng);
                let d_pq = gaussian_frechet(&p, &q).unwrap();
                let d_qp = gaussian_frechet(&q, &p).unwrap();
                let oracle = gaussian_frechet_oracle(&p, &q).unwrap();
                assert!(d_pq >= 0.0);
                assert!((d_pq - d_qp).abs() < 1e-8, "{d_pq} vs {d_qp}");
                assert!((d_pq - oracle).abs() < 1e-8, "{d_pq} vs oracle {oracle}");
            }
        }
    }

    #[test]
    fn frechet_dimension_mismatch() {
        let p = summary(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let q = GaussianSummary::from_moments(vec![0.0], Matrix::identity(1), 0).unwrap();
        assert!(gaussian_frechet(&p, &q).is_err());
    }

    #[test]
    fn coverage_examples() {
        let centers: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 8.0;
                vec![2.0 * a.cos(), 2.0 * a.sin()]
            })
            .collect();
        // all samples at the first mode
        let at_first: Vec<Tensor> = (0..50)
            .map(|_| Tensor::vector(centers[0].clone()).unwrap())
            .collect();
        let (modes, hq) = mode_coverage(&at_first, &centers, 0.1).unwrap();
        assert_eq!(modes, 1);
        assert_eq!(hq, 1.0);
        // one sample exactly at each centre
        let one_each: Vec<Tensor> = centers
            .iter()
            .map(|c| Tensor::vector(c.clone()).unwrap())
            .collect();
        let (modes, hq) = mode_coverage(&one_each, &centers, 0.1).unwrap();
        assert_eq!(modes, 8);
        assert_eq!(hq, 1.0);
        // everything far away
        let far: Vec<Tensor> = (0..20)
            .map(|_| Tensor::vector(vec![50.0, 50.0]).unwrap())
            .collect();
        let (modes, hq) = mode_coverage(&far, &centers, 0.1).unwrap();
        assert_eq!(modes, 0);
        assert_eq!(hq, 0.0);
        assert!(mode_coverage(&[], &centers, 0.1).is_err());
    }

    #[test]
    fn coverage_monotone_in_radius() {
        let centers = vec![vec![0.0, 0.0], vec![3.0, 0.0]];
        let samples: Vec<Tensor> = vec![
            Tensor::vector(vec![0.4, 0.0]).unwrap(),
            Tensor::vector(vec![2.0, 0.0]).unwrap(),
        ];
        let mut prev = (0usize, 0.0f64);
        for radius in [0.1, 0.5, 1.5, 4.0] {
            let got = mode_coverage(&samples, &centers, radius).unwrap();
            assert!(got.0 >= prev.0);
            assert!(got.1 >= prev.1 - 1e-12);
            prev = got;
        }
    }

    #[test]
    fn moving_normalise_default_window_on_long_series() {
        let mut rng = Rng::seed_from(6);
        let series: Vec<f64> = (0..200).map(|_| rng.uniform_in(-1.0, 3.0)).collect();
        let out = moving_normalise(&series, DEFAULT_NORMALISATION_WINDOW).unwrap();
        assert_eq!(out.len(), series.len() - DEFAULT_NORMALISATION_WINDOW + 1);
        assert!(out.iter().all(|v| v.is_some()));
    }

    #[test]
    fn moving_normalise_hand_case() {
        // alternating ±1 with window 2: σ_t = √2 everywhere
        let series: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let out = moving_normalise(&series, 2).unwrap();
        assert_eq!(out.len(), 9);
        for (i, v) in out.iter().enumerate() {
            let want = series[i] / 2f64.sqrt();
            assert!((v.unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_normalise_scale_invariance() {
        let series = vec![0.4, 1.9, -0.3, 0.8, 2.2, -1.5, 0.1, 0.9];
        let base = moving_normalise(&series, 3).unwrap();
        // power-of-two rescaling is exact in floating point
        let scaled: Vec<f64> = series.iter().map(|v| v * 8.0).collect();
        let got = moving_normalise(&scaled, 3).unwrap();
        for (a, b) in base.iter().zip(&got) {
            assert_eq!(a.unwrap().to_bits(), b.unwrap().to_bits());
        }
        // arbitrary positive factors agree to rounding
        let scaled: Vec<f64> = series.iter().map(|v| v * 3.7).collect();
        let got = moving_normalise(&scaled, 3).unwrap();
        for (a, b) in base.iter().zip(&got) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_normalise_flags_and_errors() {
        let constant = vec![2.0; 6];
        let out = moving_normalise(&constant, 3).unwrap();
        assert!(out.iter().all(Option::is_none));
        assert!(moving_normalise(&[1.0, 2.0], 3).is_err());
        assert!(moving_normalise(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn zero_steps_is_plain_sampling_bit_exact() {
        let m = init_model(
            MlpSpec::new(vec![4, 8, 2], 0.2).unwrap(),
            MlpSpec::new(vec![2, 8, 1], 0.2).unwrap(),
            4,
            2,
            9,
        )
        .unwrap();
        let cfg = LatentOptConfig::small_profile();
        let a = generate_samples(&m, 32, 1.0, 0, &cfg, 123).unwrap();
        let b = generate_samples(&m, 32, 1.0, 0, &cfg, 123).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn truncation_at_one_reproduces_plain_metrics() {
        let m = init_model(
            MlpSpec::new(vec![4, 8, 2], 0.2).unwrap(),
            MlpSpec::new(vec![2, 8, 1], 0.2).unwrap(),
            4,
            2,
            9,
        )
        .unwrap();
        let data = DataDistribution::GaussianRing {
            modes: 8,
            radius: 2.0,
            std: 0.02,
        };
        let cfg = LatentOptConfig {
            eval_steps: 0,
            ..LatentOptConfig::small_profile()
        };
        let curve = truncation_sweep(&m, &data, &[1.0], 64, &cfg, 0.4, 7).unwrap();
        assert_eq!(curve.len(), 1);
        let seed = Rng::derive(7, 0).next_u64();
        let plain = generate_samples(&m, 64, 1.0, 0, &cfg, seed).unwrap();
        let reference = GaussianSummary::of_distribution(&data).unwrap();
        let summary = GaussianSummary::from_samples(&plain).unwrap();
        let fid = gaussian_frechet(&summary, &reference).unwrap();
        assert_eq!(curve[0].proxy_fid.to_bits(), fid.to_bits());
    }

    #[test]
    fn small_alpha_eval_steps_ascend_per_sample() {
        let m = init_model(
            MlpSpec::new(vec![4, 8, 2], 0.2).unwrap(),
            MlpSpec::new(vec![2, 8, 1], 0.2).unwrap(),
            4,
            2,
            31,
        )
        .unwrap();
        let data = DataDistribution::GaussianRing {
            modes: 8,
            radius: 2.0,
            std: 0.02,
        };
        let cfg = LatentOptConfig {
            method: crate::latent::LatentMethod::Gd,
            alpha: 1e-3,
            beta: 1.0,
            w_r: 0.0,
            c: 1.0,
            steps: 1,
            eval_steps: 0,
        };
        let points = eval_latent_steps_sweep(&m, &data, &[1, 5], 64, &cfg, 0.4, 3).unwrap();
        for p in &points {
            assert_eq!(p.ascent_fraction, 1.0, "steps {}", p.steps);
        }
    }

    #[test]
    fn eval_step_direction_reported_not_asserted() {
        // multi-seed comparison of proxy-FID at k = 5 vs k = 0; the
        // direction is informational (printed), never asserted
        let data = DataDistribution::GaussianRing {
            modes: 8,
            radius: 2.0,
            std: 0.02,
        };
        let cfg = LatentOptConfig {
            eval_steps: 0,
            ..LatentOptConfig::small_profile()
        };
        let mut diffs = Vec::new();
        for seed in 0..3u64 {
            let m = init_model(
                MlpSpec::new(vec![8, 12, 2], 0.2).unwrap(),
                MlpSpec::new(vec![2, 12, 1], 0.2).unwrap(),
                8,
                2,
                seed,
            )
            .unwrap();
            let pts = eval_latent_steps_sweep(&m, &data, &[0, 5], 128, &cfg, 0.4, seed).unwrap();
            diffs.push(pts[1].proxy_fid - pts[0].proxy_fid);
        }
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        let half_width = 1.96 * (var / n).sqrt();
        println!(
            "proxy-FID change from 5 eval steps: {mean:.4} ± {half_width:.4} over {} seeds",
            diffs.len()
        );
        assert!(diffs.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn truncation_rejects_bad_scales() {
        let m = init_model(
            MlpSpec::new(vec![4, 8, 2], 0.2).unwrap(),
            MlpSpec::new(vec![2, 8, 1], 0.2).unwrap(),
            4,
            2,
            9,
        )
        .unwrap();
        let data = DataDistribution::GaussianRing {
            modes: 8,
            radius: 2.0,
            std: 0.02,
        };
        let cfg = LatentOptConfig::small_profile();
        assert!(truncation_sweep(&m, &data, &[0.0], 8, &cfg, 0.4, 7).is_err());
        assert!(truncation_sweep(&m, &data, &[1.1], 8, &cfg, 0.4, 7).is_err());
    }
}
