//! Draws from the stationary law of the Gaussian diffusion: Dirichlet marginal
//! frequencies and, given them, Gaussian linkage disequilibrium.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Locus, ModelParams};

pub const DEFAULT_REJECTION_CAP: usize = 100_000;

/// Eigenvalues of the per-locus covariance below this are set to zero.
const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    /// Return the Gaussian draw as is; haplotype frequencies may leave [0, 1].
    Raw,
    /// Redraw until every haplotype frequency lies in [0, 1].
    Reject { cap: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDraw {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    /// Number of rejected draws before this one (always 0 in raw mode).
    pub rejections: usize,
}

impl GaussianDraw {
    pub fn in_unit_box(&self) -> bool {
        self.h.iter().flatten().all(|v| (0.0..=1.0).contains(v))
    }
}

/// `Dirichlet(theta * w)`, with zero weights giving zero coordinates and
/// `theta = 0` giving a vertex chosen with probabilities `w`.
///
/// Gamma variates with small shape are drawn in log space
/// (`G_a = G_{a+1} U^{1/a}`) so that they never underflow to zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(theta: f64, w: &[f64], rng: &mut R) -> Vec<f64> {
    let k = w.len();
    if theta == 0.0 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut out = vec![0.0; k];
        let mut chosen = k - 1;
        for (i, &wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                chosen = i;
                break;
            }
        }
        out[chosen] = 1.0;
        return out;
    }
    let logs: Vec<f64> = w
        .iter()
        .map(|&wi| {
            let shape = theta * wi;
            if shape <= 0.0 {
                f64::NEG_INFINITY
            } else if shape < 1.0 {
                let g: f64 = Gamma::new(shape + 1.0, 1.0)
                    .expect("positive shape")
                    .sample(rng);
                let u: f64 = rng.random::<f64>();
                g.ln() + (1.0 - u).ln() / shape
            } else {
                let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
                g.ln()
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|&v| (v - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|v| v / total).collect()
}

/// Square root `S` (with `S S' = diag(x) - x x'`) from a symmetric eigendecomposition.
fn multinomial_root(x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let sigma = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            x[i] - x[i] * x[j]
        } else {
            -x[i] * x[j]
        }
    });
    let eig = SymmetricEigen::new(sigma);
    let mut root = eig.eigenvectors.clone();
    for (col, &val) in eig.eigenvalues.iter().enumerate() {
        let scale = if val < EIGEN_FLOOR { 0.0 } else { val.sqrt() };
        root.column_mut(col).scale_mut(scale);
    }
    root
}

/// Sampler of `D` given fixed marginal frequencies, with the square roots
/// of the per-locus covariances precomputed.
pub struct ConditionalSampler {
    x: Vec<f64>,
    y: Vec<f64>,
    root_a: DMatrix<f64>,
    root_b: DMatrix<f64>,
    scale: f64,
}

impl ConditionalSampler {
    pub fn new(x: &[f64], y: &[f64], rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::NonPositiveRate {
                name: "rho",
                value: rho,
            });
        }
        Ok(ConditionalSampler {
            x: x.to_vec(),
            y: y.to_vec(),
            root_a: multinomial_root(x),
            root_b: multinomial_root(y),
            scale: rho.powf(-0.5),
        })
    }

    /// `D = rho^{-1/2} S_A Z S_B'` with `Z` a matrix of standard normals, so
    /// that `Cov(vec D) = (Sigma_A kron Sigma_B) / rho`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let (k, l) = (self.x.len(), self.y.len());
        let z = DMatrix::from_fn(k, l, |_, _| StandardNormal.sample(rng));
        let d = &self.root_a * z * self.root_b.transpose() * self.scale;
        (0..k)
            .map(|i| (0..l).map(|j| d[(i, j)]).collect())
            .collect()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// One draw of `D` given `X = x`, `Y = y`.
pub fn sample_d_given<R: Rng + ?Sized>(
    x: &[f64],
    y: &[f64],
    rho: f64,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    Ok(ConditionalSampler::new(x, y, rho)?.sample(rng))
}

/// `E[D_ij D_kl | X = x, Y = y] = x_i y_j (delta_ik - x_k)(delta_jl - y_l) / rho`.
pub fn conditional_covariance(
    x: &[f64],
    y: &[f64],
    rho: f64,
    (i, j): (usize, usize),
    (k, l): (usize, usize),
) -> f64 {
    let da = if i == k { 1.0 } else { 0.0 };
    let db = if j == l { 1.0 } else { 0.0 };
    x[i] * y[j] * (da - x[k]) * (db - y[l]) / rho
}

fn assemble(x: Vec<f64>, y: Vec<f64>, d: Vec<Vec<f64>>, rejections: usize) -> GaussianDraw {
    let h = d
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &dij)| dij + x[i] * y[j])
                .collect()
        })
        .collect();
    GaussianDraw {
        x,
        y,
        d,
        h,
        rejections,
    }
}

/// One draw from the stationary Gaussian approximation.
pub fn sample_stationary<R: Rng + ?Sized>(
    p: &ModelParams,
    mode: SamplerMode,
    rng: &mut R,
) -> Result<GaussianDraw> {
    let wa = p.pim_weights(Locus::A)?.to_vec();
    let wb = p.pim_weights(Locus::B)?.to_vec();
    if !(p.rho > 0.0) {
        return Err(Error::NonPositiveRate {
            name: "rho",
            value: p.rho,
        });
    }
    let mut rejections = 0;
    loop {
        let x = sample_dirichlet(p.theta_a, &wa, rng);
        let y = sample_dirichlet(p.theta_b, &wb, rng);
        let d = sample_d_given(&x, &y, p.rho, rng)?;
        let draw = assemble(x, y, d, rejections);
        match mode {
            SamplerMode::Raw => return Ok(draw),
            SamplerMode::Reject { cap } => {
                if draw.in_unit_box() {
                    return Ok(draw);
                }
                rejections += 1;
                if rejections > cap {
                    return Err(Error::RejectionCap { cap });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zero_sum_and_unit_total() {
        let p = ModelParams::pim(&[0.2, 0.3, 0.5], &[0.6, 0.4], 1.0, 2.0, 10.0);
        let mut rng = stream_rng(1, 0);
        for _ in 0..2000 {
            let draw = sample_stationary(&p, SamplerMode::Raw, &mut rng).unwrap();
            for row in &draw.d {
                assert!(row.iter().sum::<f64>().abs() < 1e-10);
            }
            for j in 0..2 {
                assert!(draw.d.iter().map(|r| r[j]).sum::<f64>().abs() < 1e-10);
            }
            assert!((draw.h.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mut rng = stream_rng(2, 0);
        let v = sample_dirichlet(0.0, &[0.25, 0.75], &mut rng);
        assert!(v == vec![1.0, 0.0] || v == vec![0.0, 1.0]);
        let v = sample_dirichlet(1.0, &[0.0, 1.0], &mut rng);
        assert_eq!(v, vec![0.0, 1.0]);
        for _ in 0..1000 {
            let v = sample_dirichlet(0.001, &[0.5, 0.5], &mut rng);
            assert!(v.iter().all(|x| x.is_finite()));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_means() {
        let p = ModelParams::pim(&[0.2, 0.8], &[0.5, 0.5], 1.0, 1.0, 50.0);
        let mut rng = stream_rng(3, 0);
        let reps = 100_000;
        let (mut mx, mut md) = (0.0, 0.0);
        for _ in 0..reps {
            let draw = sample_stationary(&p, SamplerMode::Raw, &mut rng).unwrap();
            mx += draw.x[0];
            md += draw.d[0][0];
        }
        // Var(X_1) = 0.2 * 0.8 / 2 under Dirichlet(0.2, 0.8).
        let se_x = (0.08f64 / reps as f64).sqrt();
        assert!((mx / reps as f64 - 0.2).abs() < 4.0 * se_x);
        assert!((md / reps as f64).abs() < 4.0 * (0.0625f64 / 50.0 / reps as f64).sqrt());
    }

    #[test]
    fn reject_mode_stays_in_box() {
        let p = ModelParams::symmetric(2, 2, 1.0, 5.0);
        let mut rng = stream_rng(4, 0);
        for _ in 0..200 {
            let draw = sample_stationary(
                &p,
                SamplerMode::Reject {
                    cap: DEFAULT_REJECTION_CAP,
                },
                &mut rng,
            )
            .unwrap();
            assert!(draw.in_unit_box());
        }
        let tiny = ModelParams::symmetric(2, 2, 1.0, 1e-6);
        let r = sample_stationary(&tiny, SamplerMode::Reject { cap: 10 }, &mut rng);
        assert!(matches!(r, Err(Error::RejectionCap { cap: 10 })));
    }
}
