//! Ground-truth data generation for quadratic random ODEs.
//!
//! Samples parameter triples `(a, b, c)` from a configurable Gaussian,
//! integrates the quadratic system with classical fourth-order Runge-Kutta
//! from uniformly drawn initial points, and injects proportional Gaussian
//! noise into the stored trajectories. Datasets keep both the clean and the
//! noisy copies plus the parameters that generated them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::PolynomialExpr;
use crate::rng::{named_stream, GENERATOR_NAME};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("covariance is not positive semi-definite: {0}")]
    NotPsd(String),
    #[error("state blew up at step {step} (|x| > {threshold})")]
    BlowUp { step: usize, threshold: f64 },
    #[error(
        "instance {instance}: initial point resampling budget ({retries}) exhausted, \
         eta = {eta:?}"
    )]
    RetriesExhausted {
        instance: usize,
        retries: usize,
        eta: [f64; 3],
    },
}

/// Distribution of the random parameter triple `(a, b, c)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum RodeSpec {
    /// Independent Gaussians: means (2, -1, 1), stds (1, 2, 1) by default.
    Independent { mean: [f64; 3], std: [f64; 3] },
    /// Jointly Gaussian with the rank-one covariance `v v^T`, `v = (1, -2, 1)`:
    /// sampled exactly as `eta = mean + t v` with scalar `t ~ N(0, 1)`.
    Dependent { mean: [f64; 3] },
    /// Jointly Gaussian with an arbitrary symmetric PSD covariance.
    Custom { mean: [f64; 3], cov: [[f64; 3]; 3] },
}

impl RodeSpec {
    pub fn independent() -> Self {
        RodeSpec::Independent {
            mean: [2.0, -1.0, 1.0],
            std: [1.0, 2.0, 1.0],
        }
    }

    pub fn dependent() -> Self {
        RodeSpec::Dependent {
            mean: [2.0, -1.0, 1.0],
        }
    }

    /// The covariance matrix this spec samples from.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        match self {
            RodeSpec::Independent { std, .. } => {
                let mut c = [[0.0; 3]; 3];
                for i in 0..3 {
                    c[i][i] = std[i] * std[i];
                }
                c
            }
            RodeSpec::Dependent { .. } => {
                let v = [1.0, -2.0, 1.0];
                let mut c = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        c[i][j] = v[i] * v[j];
                    }
                }
                c
            }
            RodeSpec::Custom { cov, .. } => *cov,
        }
    }
}

/// LDL^T factorization of a symmetric PSD 3x3 matrix, tolerating zero pivots
/// (a PSD matrix with a zero diagonal entry has that whole row zero).
/// Returns `B` with `B B^T = A`, suitable for sampling `mean + B z`.
fn psd_factor(a: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3], SimError> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, &x| m.max(x.abs()))
        .max(1.0);
    let tol = 1e-12 * scale;
    for i in 0..3 {
        for j in (i + 1)..3 {
            if (a[i][j] - a[j][i]).abs() > tol {
                return Err(SimError::NotPsd("matrix is not symmetric".into()));
            }
        }
    }
    let mut l = [[0.0; 3]; 3];
    let mut d = [0.0; 3];
    let mut work = *a;
    for i in 0..3 {
        d[i] = work[i][i];
        if d[i] < -tol {
            return Err(SimError::NotPsd(format!("negative pivot {} at {}", d[i], i)));
        }
        if d[i] <= tol {
            // Zero pivot: the remaining column must vanish, else not PSD.
            for j in (i + 1)..3 {
                if work[j][i].abs() > tol.sqrt() * scale.sqrt() {
                    return Err(SimError::NotPsd(format!(
                        "zero pivot at {} with nonzero off-diagonal",
                        i
                    )));
                }
            }
            d[i] = 0.0;
            l[i][i] = 1.0;
            continue;
        }
        l[i][i] = 1.0;
        for j in (i + 1)..3 {
            l[j][i] = work[j][i] / d[i];
            for k in (i + 1)..3 {
                work[j][k] -= l[j][i] * d[i] * l[k][i];
            }
        }
    }
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            b[i][j] = l[i][j] * d[j].sqrt();
        }
    }
    Ok(b)
}

/// Draw `m` parameter triples from the spec's Gaussian.
pub fn sample_parameters(
    spec: &RodeSpec,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[f64; 3]>, SimError> {
    let mut out = Vec::with_capacity(m);
    match spec {
        RodeSpec::Independent { mean, std } => {
            for _ in 0..m {
                let mut eta = [0.0; 3];
                for i in 0..3 {
                    let z: f64 = rng.sample(StandardNormal);
                    eta[i] = mean[i] + std[i] * z;
                }
                out.push(eta);
            }
        }
        RodeSpec::Dependent { mean } => {
            for _ in 0..m {
                let t: f64 = rng.sample(StandardNormal);
                out.push([mean[0] + t, mean[1] - 2.0 * t, mean[2] + t]);
            }
        }
        RodeSpec::Custom { mean, cov } => {
            let b = psd_factor(cov)?;
            for _ in 0..m {
                let z: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let mut eta = *mean;
                for i in 0..3 {
                    for j in 0..3 {
                        eta[i] += b[i][j] * z[j];
                    }
                }
                out.push(eta);
            }
        }
    }
    Ok(out)
}

/// Right-hand side of the quadratic three-parameter system:
/// `(a (x2 - x1), x1 (b - x3) - x2, x1 x2 - c x3)`.
pub fn lorenz_rhs(eta: [f64; 3], x: &[f64; 3]) -> [f64; 3] {
    let [a, b, c] = eta;
    [
        a * (x[1] - x[0]),
        x[0] * (b - x[2]) - x[1],
        x[0] * x[1] - c * x[2],
    ]
}

/// The same system as per-component polynomials, for symbolic comparisons.
pub fn lorenz_polynomials(eta: [f64; 3]) -> [PolynomialExpr; 3] {
    let [a, b, c] = eta;
    let x1 = PolynomialExpr::variable(3, 0);
    let x2 = PolynomialExpr::variable(3, 1);
    let x3 = PolynomialExpr::variable(3, 2);
    let first = x2.sub(&x1).scale(a);
    let second = x1.scale(b).sub(&x1.mul(&x3)).sub(&x2);
    let third = x1.mul(&x2).sub(&x3.scale(c));
    [first, second, third]
}

/// Default magnitude above which a trajectory is treated as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// One classical RK4 step with weights 1/6, 1/3, 1/3, 1/6.
pub fn rk4_step<F>(rhs: F, x: &[f64; 3], dt: f64) -> Result<[f64; 3], SimError>
where
    F: Fn(&[f64; 3]) -> [f64; 3],
{
    assert!(dt > 0.0, "rk4_step: dt must be positive");
    let k1 = rhs(x);
    let x2 = add_scaled(x, &k1, dt / 2.0);
    let k2 = rhs(&x2);
    let x3 = add_scaled(x, &k2, dt / 2.0);
    let k3 = rhs(&x3);
    let x4 = add_scaled(x, &k3, dt);
    let k4 = rhs(&x4);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !out[i].is_finite() || out[i].abs() > BLOWUP_THRESHOLD {
            return Err(SimError::BlowUp {
                step: 0,
                threshold: BLOWUP_THRESHOLD,
            });
        }
    }
    Ok(out)
}

fn add_scaled(x: &[f64; 3], k: &[f64; 3], s: f64) -> [f64; 3] {
    [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]]
}

/// Integrate `steps` RK4 steps; the result has `steps + 1` rows.
pub fn integrate(
    eta: [f64; 3],
    x0: [f64; 3],
    steps: usize,
    dt: f64,
) -> Result<Vec<[f64; 3]>, SimError> {
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0);
    let mut x = x0;
    for step in 0..steps {
        x = rk4_step(|s| lorenz_rhs(eta, s), &x, dt).map_err(|e| match e {
            SimError::BlowUp { threshold, .. } => SimError::BlowUp { step, threshold },
            other => other,
        })?;
        traj.push(x);
    }
    Ok(traj)
}

/// Add proportional Gaussian noise: each sample of component `j` is perturbed
/// by `n_r * sd_j * w`, `w ~ N(0,1)`, where `sd_j` is that component's
/// standard deviation over the trajectory's own time samples.
pub fn inject_noise(traj: &[[f64; 3]], n_r: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    assert!(n_r >= 0.0, "noise level must be non-negative");
    if n_r == 0.0 || traj.is_empty() {
        return traj.to_vec();
    }
    let n = traj.len() as f64;
    let mut sd = [0.0; 3];
    for j in 0..3 {
        let mean: f64 = traj.iter().map(|x| x[j]).sum::<f64>() / n;
        let var: f64 = traj.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
        sd[j] = var.sqrt();
    }
    traj.iter()
        .map(|x| {
            let mut y = *x;
            for j in 0..3 {
                if sd[j] > 0.0 {
                    let w: f64 = rng.sample(StandardNormal);
                    y[j] += n_r * sd[j] * w;
                }
            }
            y
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub x0: [f64; 3],
    pub clean: Vec<[f64; 3]>,
    pub noisy: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Instance {
    pub eta: [f64; 3],
    pub trajectories: Vec<Trajectory>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: RodeSpec,
    pub m_instances: usize,
    pub n_inits: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub noise_level: f64,
    pub init_halfwidth: f64,
    pub seed: u64,
    pub generator: String,
    /// Initial points resampled due to integration blow-ups.
    pub blowup_retries: usize,
    /// Noise scale convention: per-component std over each trajectory's own
    /// time samples.
    pub noise_variance_convention: String,
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn state_sample_count(&self) -> usize {
        self.instances
            .iter()
            .flat_map(|i| i.trajectories.iter())
            .map(|t| t.noisy.len())
            .sum()
    }
}

/// Settings for [`generate_dataset`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: RodeSpec,
    pub m_instances: usize,
    pub n_inits: usize,
    pub n_steps: usize,
    pub dt: f64,
    /// Initial points are uniform on `[-h, h]^3`.
    pub init_halfwidth: f64,
    pub noise_level: f64,
    pub max_retries: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            spec: RodeSpec::independent(),
            m_instances: 500,
            n_inits: 5,
            n_steps: 50,
            dt: 0.05,
            init_halfwidth: 10.0,
            noise_level: 0.0,
            max_retries: 20,
        }
    }
}

/// Sample parameters and initial points, integrate, and inject noise.
/// Deterministic for a given seed; every instance draws from its own derived
/// stream, so generation order does not matter.
pub fn generate_dataset(cfg: &SimConfig, seed: u64) -> Result<Dataset, SimError> {
    assert!(cfg.m_instances >= 1 && cfg.n_inits >= 1 && cfg.n_steps >= 1);
    let mut param_rng = named_stream(seed, "sim-params", 0);
    let etas = sample_parameters(&cfg.spec, cfg.m_instances, &mut param_rng)?;

    let mut instances = Vec::with_capacity(cfg.m_instances);
    let mut total_retries = 0usize;
    for (i, &eta) in etas.iter().enumerate() {
        let mut rng = named_stream(seed, "sim-instance", i as u64);
        let mut trajectories = Vec::with_capacity(cfg.n_inits);
        for _ in 0..cfg.n_inits {
            let mut attempt = 0;
            let clean = loop {
                let x0 = [
                    rng.random_range(-cfg.init_halfwidth..=cfg.init_halfwidth),
                    rng.random_range(-cfg.init_halfwidth..=cfg.init_halfwidth),
                    rng.random_range(-cfg.init_halfwidth..=cfg.init_halfwidth),
                ];
                match integrate(eta, x0, cfg.n_steps, cfg.dt) {
                    Ok(t) => break t,
                    Err(_) if attempt < cfg.max_retries => {
                        attempt += 1;
                        total_retries += 1;
                    }
                    Err(_) => {
                        return Err(SimError::RetriesExhausted {
                            instance: i,
                            retries: cfg.max_retries,
                            eta,
                        })
                    }
                }
            };
            let noisy = inject_noise(&clean, cfg.noise_level, &mut rng);
            trajectories.push(Trajectory {
                x0: clean[0],
                clean,
                noisy,
            });
        }
        instances.push(Instance { eta, trajectories });
    }

    Ok(Dataset {
        meta: DatasetMeta {
            spec: cfg.spec.clone(),
            m_instances: cfg.m_instances,
            n_inits: cfg.n_inits,
            n_steps: cfg.n_steps,
            dt: cfg.dt,
            noise_level: cfg.noise_level,
            init_halfwidth: cfg.init_halfwidth,
            seed,
            generator: GENERATOR_NAME.to_string(),
            blowup_retries: total_retries,
            noise_variance_convention: "per-component std over trajectory time samples".into(),
            config_hash: None,
        },
        instances,
    })
}
