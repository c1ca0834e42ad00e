//! The linear latent-state model `z1 = A1 u`, `z2 = A2 u + ε`, whose
//! population-optimal alignment map is `A2 A1⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::align::{choose_inverse, AlignmentMap, Method};
use crate::error::{Error, Result};
use crate::latentio::{pair_by_state, LatentSet, PairedDataset};
use crate::linalg::{random_orthogonal, singular_values};
use crate::seed::{derive_seed, stream_rng};

/// Smallest singular value accepted for a mixing matrix.
pub const MIN_MIX_SINGULAR_VALUE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateDistribution {
    #[default]
    Normal,
    /// Uniform on `[-√3, √3]^d`, unit variance per coordinate.
    UniformCube,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorldSpec {
    pub state_dim: usize,
    pub mix1: DMatrix<f64>,
    pub mix2: DMatrix<f64>,
    pub noise_sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub state_distribution: StateDistribution,
    pub train_fraction: f64,
    /// State `n` is named `s{id_offset + n}`.
    pub id_offset: usize,
}

impl SyntheticWorldSpec {
    pub fn new(mix1: DMatrix<f64>, mix2: DMatrix<f64>, noise_sigma: f64, n_samples: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            state_dim: mix1.nrows(),
            mix1,
            mix2,
            noise_sigma,
            n_samples,
            seed,
            state_distribution: StateDistribution::Normal,
            train_fraction: 0.8,
            id_offset: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim;
        if d == 0 {
            return Err(Error::InvalidArgument("state_dim must be at least 1".into()));
        }
        for (name, m) in [("mix1", &self.mix1), ("mix2", &self.mix2)] {
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            crate::latentio::check_finite(m)?;
            let smin = singular_values(m).last().copied().unwrap_or(0.0);
            if smin < MIN_MIX_SINGULAR_VALUE {
                return Err(Error::NearSingular(smin));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument("n_samples must be at least 2".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn state_ids(&self) -> Vec<String> {
        (0..self.n_samples).map(|n| format!("s{}", self.id_offset + n)).collect()
    }
}

/// Compact world description for config files; mixing matrices are drawn
/// with `random_invertible` at the requested condition numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub distribution: StateDistribution,
    pub train_fraction: f64,
    pub id_offset: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            d: 16,
            n: 1000,
            sigma: 0.0,
            seed: 0,
            kappa1: 2.0,
            kappa2: 2.0,
            distribution: StateDistribution::Normal,
            train_fraction: 0.8,
            id_offset: 0,
        }
    }
}

impl WorldConfig {
    pub fn build(&self) -> Result<SyntheticWorldSpec> {
        let mix1 = random_invertible(self.d, self.kappa1, derive_seed(self.seed, "mix1"))?;
        let mix2 = random_invertible(self.d, self.kappa2, derive_seed(self.seed, "mix2"))?;
        let spec = SyntheticWorldSpec {
            state_dim: self.d,
            mix1,
            mix2,
            noise_sigma: self.sigma,
            n_samples: self.n,
            seed: self.seed,
            state_distribution: self.distribution,
            train_fraction: self.train_fraction,
            id_offset: self.id_offset,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `d x N` states drawn i.i.d. from the spec's distribution.
pub fn sample_states(spec: &SyntheticWorldSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, "states");
    let half_width = 3f64.sqrt();
    let (d, n) = (spec.state_dim, spec.n_samples);
    Ok(match spec.state_distribution {
        StateDistribution::Normal => DMatrix::from_fn(d, n, |_, _| rng.sample(StandardNormal)),
        StateDistribution::UniformCube => DMatrix::from_fn(d, n, |_, _| rng.random_range(-half_width..half_width)),
    })
}

/// The two views of the world before pairing: `(states, z1, z2)`.
pub fn generate_views(spec: &SyntheticWorldSpec) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let u = sample_states(spec)?;
    let z1 = &spec.mix1 * &u;
    let mut z2 = &spec.mix2 * &u;
    if spec.noise_sigma > 0.0 {
        let mut rng = stream_rng(spec.seed, "noise");
        for v in z2.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += spec.noise_sigma * e;
        }
    }
    Ok((u, z1, z2))
}

pub fn generate(spec: &SyntheticWorldSpec) -> Result<PairedDataset> {
    let (_, z1, z2) = generate_views(spec)?;
    let ids = spec.state_ids();
    let view1 = LatentSet::new(z1, ids.clone(), "view1")?;
    let view2 = LatentSet::new(z2, ids, "view2")?;
    pair_by_state(view1, view2, spec.train_fraction, spec.seed)
}

/// `W* = A2 A1⁻¹` with its inverse chosen as for fitted maps.
pub fn oracle_map(spec: &SyntheticWorldSpec) -> Result<AlignmentMap> {
    spec.validate()?;
    let a1_inv = spec
        .mix1
        .clone()
        .try_inverse()
        .ok_or(Error::NearSingular(0.0))?;
    let w = &spec.mix2 * a1_inv;
    Ok(choose_inverse(&AlignmentMap::from_matrix(w, Method::Oracle, 0.0)?))
}

/// `U diag(s) Vᵀ` with Haar-random orthogonal `U`, `V` and singular values on
/// a geometric ladder from 1 down to `1 / target_kappa`.
pub fn random_invertible(d: usize, target_kappa: f64, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(target_kappa >= 1.0 && target_kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target condition number must be finite and >= 1, got {target_kappa}"
        )));
    }
    if d == 1 && target_kappa != 1.0 {
        return Err(Error::InvalidArgument(
            "a 1x1 matrix always has condition number 1".into(),
        ));
    }
    let mut rng = stream_rng(seed, "random-invertible");
    let u = random_orthogonal(d, &mut rng);
    let v = random_orthogonal(d, &mut rng);
    let s = DVector::from_fn(d, |i, _| {
        if d == 1 {
            1.0
        } else {
            target_kappa.powf(-(i as f64) / (d - 1) as f64)
        }
    });
    Ok(u * DMatrix::from_diagonal(&s) * v.transpose())
}

/// Labels `1` where `h·u > 0` and `0` otherwise, for a unit hyperplane normal
/// `h` drawn from `seed`.
pub fn hyperplane_labels(states: &DMatrix<f64>, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, "hyperplane");
    let h = DVector::from_fn(states.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    states
        .column_iter()
        .map(|u| usize::from(h.dot(&u) > 0.0))
        .collect()
}
