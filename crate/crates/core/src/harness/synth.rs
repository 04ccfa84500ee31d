//! Synthetic two-class domains under covariate shift.
//!
//! Every domain shares the class geometry: labels are equiprobable and class
//! `y` is drawn from `N(±(sep/2)·u, I)` for a fixed unit direction `u`. A
//! domain then applies its own rotation (in a random plane) and offset,
//! both proportional to the shift magnitude.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::DomainDataset;
use crate::error::{Error, Result};
use crate::model::LabeledBatch;
use crate::numerics::{dot, norm, Mat};

/// Largest rotation angle, in radians, at unit shift magnitude.
const MAX_ROTATION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub unlabeled: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 600,
            valid: 100,
            test: 200,
            unlabeled: 600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_domains: usize,
    pub dim: usize,
    pub sizes: SplitSizes,
    pub shift: f64,
    /// Distance between the two class means.
    pub class_sep: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_domains: 5,
            dim: 16,
            sizes: SplitSizes::default(),
            shift: 1.0,
            class_sep: 3.0,
            seed: 0,
        }
    }
}

/// Per-domain affine map `x ↦ R x + offset`, with `R` a rotation by `angle`
/// in the plane spanned by orthonormal `a`, `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainShift {
    pub offset: Vec<f64>,
    pub plane: (Vec<f64>, Vec<f64>),
    pub angle: f64,
}

impl DomainShift {
    pub fn identity(dim: usize) -> Self {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = 1.0;
        b[1 % dim] = 1.0;
        Self {
            offset: vec![0.0; dim],
            plane: (a, b),
            angle: 0.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, magnitude: f64, rng: &mut R) -> Self {
        let offset = gaussian(dim, rng).into_iter().map(|v| v * magnitude).collect();
        let a = unit(gaussian(dim, rng));
        let mut b = gaussian(dim, rng);
        let p = dot(&a, &b);
        b.iter_mut().zip(&a).for_each(|(bi, ai)| *bi -= p * ai);
        let b = unit(b);
        let angle = magnitude * rng.random_range(-MAX_ROTATION..=MAX_ROTATION);
        Self {
            offset,
            plane: (a, b),
            angle,
        }
    }

    /// This shift followed by a small random perturbation of the given size.
    pub fn perturbed<R: Rng + ?Sized>(&self, magnitude: f64, rng: &mut R) -> Self {
        let jitter = gaussian(self.offset.len(), rng);
        Self {
            offset: self.offset.iter().zip(jitter).map(|(o, j)| o + magnitude * j).collect(),
            plane: self.plane.clone(),
            angle: self.angle + magnitude * rng.random_range(-MAX_ROTATION..=MAX_ROTATION),
        }
    }

    pub fn apply(&self, x: &mut [f64]) {
        let (a, b) = &self.plane;
        let (xa, xb) = (dot(x, a), dot(x, b));
        let (s, c) = self.angle.sin_cos();
        let da = c * xa - s * xb - xa;
        let db = s * xa + c * xb - xb;
        for i in 0..x.len() {
            x[i] += da * a[i] + db * b[i] + self.offset[i];
        }
    }
}

fn gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Shared class geometry from which individual domains are sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    dim: usize,
    direction: Vec<f64>,
    class_sep: f64,
}

impl SyntheticWorld {
    pub fn new<R: Rng + ?Sized>(dim: usize, class_sep: f64, rng: &mut R) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("synthetic data needs dim >= 2, got {dim}")));
        }
        if !(class_sep >= 0.0 && class_sep.is_finite()) {
            return Err(Error::Config(format!("class separation must be nonnegative, got {class_sep}")));
        }
        Ok(Self {
            dim,
            direction: unit(gaussian(dim, rng)),
            class_sep,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// A world with the same separation whose class direction is orthogonal
    /// to this one, so its labels carry no information about ours.
    pub fn orthogonal<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut v = gaussian(self.dim, rng);
        let p = dot(&v, &self.direction);
        v.iter_mut().zip(&self.direction).for_each(|(vi, ui)| *vi -= p * ui);
        Self {
            dim: self.dim,
            direction: unit(v),
            class_sep: self.class_sep,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, shift: &DomainShift, rng: &mut R) -> (Mat, Vec<usize>) {
        let mut data = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let y = rng.random_bool(0.5) as usize;
            let sign = if y == 1 { 0.5 } else { -0.5 };
            let mut x: Vec<f64> = self
                .direction
                .iter()
                .map(|u| sign * self.class_sep * u + rng.sample::<f64, _>(StandardNormal))
                .collect();
            shift.apply(&mut x);
            data.extend(x);
            labels.push(y);
        }
        (Mat::from_vec(n, self.dim, data).expect("shape"), labels)
    }

    /// Samples every split of one domain. `flip_labels` swaps the two classes
    /// in the labeled splits, giving a domain whose labeling disagrees with
    /// every other.
    pub fn sample_domain<R: Rng + ?Sized>(
        &self,
        domain_id: impl Into<String>,
        shift: &DomainShift,
        sizes: &SplitSizes,
        flip_labels: bool,
        rng: &mut R,
    ) -> Result<DomainDataset> {
        let mut labeled = |n: usize| {
            let (x, mut y) = self.draw(n, shift, rng);
            if flip_labels {
                y.iter_mut().for_each(|l| *l = 1 - *l);
            }
            LabeledBatch::new(x, y, 2)
        };
        let train = labeled(sizes.train)?;
        let valid = labeled(sizes.valid)?;
        let test = labeled(sizes.test)?;
        let (unlabeled, _) = self.draw(sizes.unlabeled, shift, rng);
        Ok(DomainDataset {
            domain_id: domain_id.into(),
            train,
            valid,
            test,
            unlabeled,
        })
    }
}

/// `num_domains` domains named `d0, d1, ...`, each with an independent
/// random shift of the configured magnitude.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<DomainDataset>> {
    if cfg.num_domains < 2 {
        return Err(Error::Config(format!("need at least 2 domains, got {}", cfg.num_domains)));
    }
    if !(cfg.shift >= 0.0 && cfg.shift.is_finite()) {
        return Err(Error::Config(format!("shift magnitude must be nonnegative, got {}", cfg.shift)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = SyntheticWorld::new(cfg.dim, cfg.class_sep, &mut rng)?;
    (0..cfg.num_domains)
        .map(|k| {
            let shift = DomainShift::random(cfg.dim, cfg.shift, &mut rng);
            world.sample_domain(format!("d{k}"), &shift, &cfg.sizes, false, &mut rng)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub dim: usize,
    pub sizes: SplitSizes,
    /// Shift of the target.
    pub shift: f64,
    /// Perturbation separating each neutral source from the target.
    pub neutral_shift: f64,
    /// Perturbation separating the near-copy source from the target.
    pub near_shift: f64,
    /// Perturbation separating the flipped-label source from the target.
    pub adversarial_shift: f64,
    pub class_sep: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            sizes: SplitSizes::default(),
            shift: 1.0,
            neutral_shift: 0.5,
            near_shift: 0.1,
            adversarial_shift: 1.0,
            class_sep: 3.0,
            seed: 0,
        }
    }
}

/// Four sources of differing usefulness for one target, all placed around
/// the target's shift: `adversarial` (flipped labels), `neutral1` and
/// `neutral2` (labels follow a class direction orthogonal to the target's)
/// and `near` (a slight perturbation, same labeling).
///
/// `near` comes last: every scheduler visits arms in index order before it
/// has rewards, and a helpful first arm would hand all of them the same
/// early checkpoint.
pub fn gen_multi_source(cfg: &ScenarioConfig) -> Result<(Vec<DomainDataset>, DomainDataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = SyntheticWorld::new(cfg.dim, cfg.class_sep, &mut rng)?;
    let target_shift = DomainShift::random(cfg.dim, cfg.shift, &mut rng);
    let near = target_shift.perturbed(cfg.near_shift, &mut rng);
    let adversarial = target_shift.perturbed(cfg.adversarial_shift, &mut rng);
    let mut sources = vec![world.sample_domain("adversarial", &adversarial, &cfg.sizes, true, &mut rng)?];
    for name in ["neutral1", "neutral2"] {
        let shift = target_shift.perturbed(cfg.neutral_shift, &mut rng);
        let other = world.orthogonal(&mut rng);
        sources.push(other.sample_domain(name, &shift, &cfg.sizes, false, &mut rng)?);
    }
    sources.push(world.sample_domain("near", &near, &cfg.sizes, false, &mut rng)?);
    let target = world.sample_domain("target", &target_shift, &cfg.sizes, false, &mut rng)?;
    Ok((sources, target))
}
