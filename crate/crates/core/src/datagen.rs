//! Seeded generators for null blocks and relevant-subspace simulations.
//!
//! The relevant-subspace model works in latent coordinates first. X has
//! independent components `z_j` with variances `λ_j = exp(−γ(j−1))`; Y has
//! components `w_a` with variances `κ_a = exp(−η(a−1))`. Cross-block
//! component `k` ties the X components in `relpos[k]` to the first Y component
//! in `ypos[k]`. Observed variables are block rotations of the latent ones: X
//! over `q_per_component[k]` predictor slots, Y within each `ypos[k]`.
//! All positions are 1-based.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub p: usize,
    pub q_per_component: Vec<usize>,
    pub relpos: Vec<Vec<usize>>,
    pub gamma: f64,
    pub m: usize,
    pub ypos: Vec<Vec<usize>>,
    pub eta: f64,
    pub r2: Vec<f64>,
    pub seed: u64,
}

impl SimulationSpec {
    /// Two cross-block components over 50 predictors and 4 responses.
    pub fn two_component(n: usize, seed: u64) -> Self {
        SimulationSpec {
            n,
            p: 50,
            q_per_component: vec![15, 10],
            relpos: vec![vec![1, 2], vec![3, 4, 6]],
            gamma: 0.6,
            m: 4,
            ypos: vec![vec![1, 3], vec![2, 4]],
            eta: 0.0,
            r2: vec![0.2, 0.1],
            seed,
        }
    }

    pub fn components(&self) -> usize {
        self.r2.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n < 2 || self.p == 0 || self.m == 0 {
            return bad(format!("need n ≥ 2 and non-empty blocks (n = {}, p = {}, m = {})", self.n, self.p, self.m));
        }
        let c = self.components();
        if self.relpos.len() != c || self.ypos.len() != c || self.q_per_component.len() != c {
            return bad(format!(
                "component lists disagree in length: r2 {}, relpos {}, ypos {}, q {}",
                c,
                self.relpos.len(),
                self.ypos.len(),
                self.q_per_component.len()
            ));
        }
        if !(self.gamma >= 0.0 && self.eta >= 0.0 && self.gamma.is_finite() && self.eta.is_finite()) {
            return bad(format!("decay rates must be finite and ≥ 0 (gamma = {}, eta = {})", self.gamma, self.eta));
        }
        disjoint_positions(&self.relpos, self.p, "relpos")?;
        disjoint_positions(&self.ypos, self.m, "ypos")?;
        for (k, (&q, rel)) in self.q_per_component.iter().zip(&self.relpos).enumerate() {
            if q < rel.len() || q > self.p {
                return bad(format!(
                    "component {}: q = {q} must lie between |relpos| = {} and p = {}",
                    k + 1,
                    rel.len(),
                    self.p
                ));
            }
            if self.ypos[k].is_empty() {
                return bad(format!("component {}: ypos is empty", k + 1));
            }
        }
        if self.q_per_component.iter().sum::<usize>() > self.p {
            return bad(format!(
                "predictor slots {:?} exceed p = {}",
                self.q_per_component, self.p
            ));
        }
        for (k, &r2) in self.r2.iter().enumerate() {
            if !(0.0..1.0).contains(&r2) {
                return Err(Error::InfeasibleR2 {
                    component: k + 1,
                    r2,
                    detail: "population R² must lie in [0, 1)".into(),
                });
            }
            if r2 > 0.0 && self.relpos[k].is_empty() {
                return Err(Error::InfeasibleR2 {
                    component: k + 1,
                    r2,
                    detail: "no relevant X components to carry the signal".into(),
                });
            }
        }
        Ok(())
    }
}

fn disjoint_positions(lists: &[Vec<usize>], bound: usize, name: &str) -> Result<()> {
    let mut seen = vec![false; bound];
    for list in lists {
        for &j in list {
            if j == 0 || j > bound {
                return Err(Error::InvalidArgument(format!("{name} position {j} outside 1..={bound}")));
            }
            if std::mem::replace(&mut seen[j - 1], true) {
                return Err(Error::InvalidArgument(format!("{name} position {j} listed twice")));
            }
        }
    }
    Ok(())
}

/// Population parameters behind a generated dataset.
#[derive(Debug, Clone)]
pub struct Truth {
    pub spec: Option<SimulationSpec>,
    /// Latent X variances.
    pub lambda: DVector<f64>,
    /// Latent Y variances.
    pub kappa: DVector<f64>,
    /// Latent cross covariance, `p × m`.
    pub latent_cross: DMatrix<f64>,
    /// Observed `x = R z`.
    pub x_rotation: DMatrix<f64>,
    /// Observed `y = Q w`.
    pub y_rotation: DMatrix<f64>,
    /// Observed population covariance blocks.
    pub sigma_xx: DMatrix<f64>,
    pub sigma_yy: DMatrix<f64>,
    pub sigma_xy: DMatrix<f64>,
}

impl Truth {
    /// `[[Σxx, Σxy], [Σyx, Σyy]]`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let (p, m) = (self.sigma_xx.nrows(), self.sigma_yy.nrows());
        let mut joint = DMatrix::zeros(p + m, p + m);
        joint.view_mut((0, 0), (p, p)).copy_from(&self.sigma_xx);
        joint.view_mut((p, p), (m, m)).copy_from(&self.sigma_yy);
        joint.view_mut((0, p), (p, m)).copy_from(&self.sigma_xy);
        joint.view_mut((p, 0), (m, p)).copy_from(&self.sigma_xy.transpose());
        joint
    }

    /// Population R² of each cross-block component, recomputed from the
    /// observed covariance by undoing the rotations.
    pub fn population_r2(&self) -> Vec<f64> {
        let Some(spec) = &self.spec else {
            return Vec::new();
        };
        let lam = self.x_rotation.transpose() * &self.sigma_xx * &self.x_rotation;
        let kap = self.y_rotation.transpose() * &self.sigma_yy * &self.y_rotation;
        let cross = self.x_rotation.transpose() * &self.sigma_xy * &self.y_rotation;
        spec.relpos
            .iter()
            .zip(&spec.ypos)
            .map(|(rel, ypos)| {
                let a = ypos[0] - 1;
                rel.iter()
                    .map(|&j| cross[(j - 1, a)].powi(2) / lam[(j - 1, j - 1)])
                    .sum::<f64>()
                    / kap[(a, a)]
            })
            .collect()
    }

    /// Population canonical correlations, non-increasing (`min(p, m)` values).
    pub fn canonical_correlations(&self) -> Vec<f64> {
        let omega = DMatrix::from_fn(self.lambda.len(), self.kappa.len(), |j, a| {
            self.latent_cross[(j, a)] / (self.lambda[j] * self.kappa[a]).sqrt()
        });
        linalg::singular_values_desc(&omega)
    }

    /// Cholesky factorization of the joint covariance succeeds.
    pub fn is_positive_definite(&self) -> bool {
        self.joint_covariance().cholesky().is_some()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub x: DataBlock,
    pub y: DataBlock,
    pub truth: Truth,
}

/// Independent standard-normal blocks.
pub fn generate_null(n: usize, p: usize, q: usize, seed: u64) -> Result<GeneratedDataset> {
    if n < 2 || p == 0 || q == 0 {
        return Err(Error::InvalidArgument(format!("need n ≥ 2, p ≥ 1, q ≥ 1 (got {n}, {p}, {q})")));
    }
    let mut rng = rng::stream(seed, Purpose::GenerateNull, &[]);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DMatrix::zeros(n, q);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
        for j in 0..q {
            y[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    Ok(GeneratedDataset {
        x: DataBlock::with_prefix(x, "x")?,
        y: DataBlock::with_prefix(y, "y")?,
        truth: Truth {
            spec: None,
            lambda: DVector::from_element(p, 1.0),
            kappa: DVector::from_element(q, 1.0),
            latent_cross: DMatrix::zeros(p, q),
            x_rotation: DMatrix::identity(p, p),
            y_rotation: DMatrix::identity(q, q),
            sigma_xx: DMatrix::identity(p, p),
            sigma_yy: DMatrix::identity(q, q),
            sigma_xy: DMatrix::zeros(p, q),
        },
    })
}

/// X predictor slots per component: `relpos[k]` plus the lowest-numbered
/// components not relevant to any cross-block component (0-based).
pub fn predictor_slots(spec: &SimulationSpec) -> Vec<Vec<usize>> {
    let relevant: Vec<bool> = (1..=spec.p).map(|j| spec.relpos.iter().any(|r| r.contains(&j))).collect();
    let mut spare = (0..spec.p).filter(|&j| !relevant[j]);
    spec.relpos
        .iter()
        .zip(&spec.q_per_component)
        .map(|(rel, &q)| {
            let mut slots: Vec<usize> = rel.iter().map(|&j| j - 1).collect();
            slots.extend(spare.by_ref().take(q - rel.len()));
            slots.sort_unstable();
            slots
        })
        .collect()
}

fn block_rotation<R: Rng>(dim: usize, groups: &[Vec<usize>], rng: &mut R) -> DMatrix<f64> {
    let mut rot = DMatrix::identity(dim, dim);
    for g in groups {
        let local = linalg::random_orthogonal(g.len(), rng);
        for (a, &i) in g.iter().enumerate() {
            for (b, &j) in g.iter().enumerate() {
                rot[(i, j)] = local[(a, b)];
            }
        }
    }
    rot
}

/// Multivariate-normal blocks whose cross-block association lives in a
/// designated subspace.
pub fn generate_relevant_subspace(spec: &SimulationSpec) -> Result<GeneratedDataset> {
    spec.validate()?;
    let (p, m) = (spec.p, spec.m);
    let lambda = DVector::from_fn(p, |j, _| (-spec.gamma * j as f64).exp());
    let kappa = DVector::from_fn(m, |a, _| (-spec.eta * a as f64).exp());

    let mut rng = rng::stream(spec.seed, Purpose::GenerateSubspace, &[0]);
    let mut latent_cross = DMatrix::zeros(p, m);
    for (k, rel) in spec.relpos.iter().enumerate() {
        if spec.r2[k] == 0.0 {
            continue;
        }
        let a = spec.ypos[k][0] - 1;
        let raw: Vec<f64> = rel
            .iter()
            .map(|_| {
                let mag: f64 = rng.random_range(0.25..1.0);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let explained: f64 = rel.iter().zip(&raw).map(|(&j, s)| s * s / lambda[j - 1]).sum();
        let c = (spec.r2[k] * kappa[a] / explained).sqrt();
        for (&j, s) in rel.iter().zip(&raw) {
            latent_cross[(j - 1, a)] = c * s;
        }
    }

    // conditional variance of each Y component given the X components
    let mut residual_sd = DVector::zeros(m);
    for a in 0..m {
        let explained: f64 = (0..p).map(|j| latent_cross[(j, a)].powi(2) / lambda[j]).sum();
        let var = kappa[a] - explained;
        if var <= 0.0 {
            return Err(Error::InfeasibleR2 {
                component: a + 1,
                r2: explained / kappa[a],
                detail: "residual Y variance is not positive".into(),
            });
        }
        residual_sd[a] = var.sqrt();
    }

    let mut rot_rng = rng::stream(spec.seed, Purpose::GenerateSubspace, &[1]);
    let x_rotation = block_rotation(p, &predictor_slots(spec), &mut rot_rng);
    let y_groups: Vec<Vec<usize>> = spec.ypos.iter().map(|g| g.iter().map(|&a| a - 1).collect()).collect();
    let y_rotation = block_rotation(m, &y_groups, &mut rot_rng);

    // w = Cᵗ Λ⁻¹ z + e
    let beta = DMatrix::from_fn(p, m, |j, a| latent_cross[(j, a)] / lambda[j]);
    let sqrt_lambda = lambda.map(f64::sqrt);
    let mut sample_rng = rng::stream(spec.seed, Purpose::GenerateSubspace, &[2]);
    let mut z = DMatrix::zeros(spec.n, p);
    let mut e = DMatrix::zeros(spec.n, m);
    for i in 0..spec.n {
        for j in 0..p {
            let g: f64 = StandardNormal.sample(&mut sample_rng);
            z[(i, j)] = sqrt_lambda[j] * g;
        }
        for a in 0..m {
            let g: f64 = StandardNormal.sample(&mut sample_rng);
            e[(i, a)] = residual_sd[a] * g;
        }
    }
    let w = &z * &beta + e;
    let x = z * x_rotation.transpose();
    let y = w * y_rotation.transpose();

    let sigma_xx = &x_rotation * DMatrix::from_diagonal(&lambda) * x_rotation.transpose();
    let sigma_yy = &y_rotation * DMatrix::from_diagonal(&kappa) * y_rotation.transpose();
    let sigma_xy = &x_rotation * &latent_cross * y_rotation.transpose();
    Ok(GeneratedDataset {
        x: DataBlock::with_prefix(x, "x")?,
        y: DataBlock::with_prefix(y, "y")?,
        truth: Truth {
            spec: Some(spec.clone()),
            lambda,
            kappa,
            latent_cross,
            x_rotation,
            y_rotation,
            sigma_xx,
            sigma_yy,
            sigma_xy,
        },
    })
}
