use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Isotropic Gaussian classes with unit within-class standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixtureSpec {
    pub n_classes: usize,
    pub dim: usize,
    /// Radius of the sphere the class centers lie on.
    pub separation: f64,
    pub per_class_n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GaussianMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.dim < 1 || self.per_class_n < 1 {
            return Err(Error::InvalidConfig(format!(
                "gaussian mixture needs n_classes >= 2, dim >= 1, per_class_n >= 1 (got {}, {}, {})",
                self.n_classes, self.dim, self.per_class_n
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gaussian mixture separation must be finite and >= 0, got {}",
                self.separation
            )));
        }
        Ok(())
    }

    /// Class centers on the sphere of radius `separation`: random directions
    /// pushed apart by a fixed number of repulsion steps, so no two classes
    /// start out nearly on top of each other.
    pub fn centers(&self) -> Array2<f64> {
        let mut rng = seed::rng(self.seed);
        self.draw_centers(&mut rng)
    }

    fn draw_centers(&self, rng: &mut impl Rng) -> Array2<f64> {
        let mut units = Array2::zeros((self.n_classes, self.dim));
        for mut row in units.rows_mut() {
            loop {
                row.iter_mut().for_each(|v: &mut f64| *v = rng.sample(StandardNormal));
                let norm = row.dot(&row).sqrt();
                if norm > 1e-12 {
                    row.mapv_inplace(|v| v / norm);
                    break;
                }
            }
        }
        if self.dim == 1 {
            // the 0-sphere has two points; alternate between them
            let first = units[[0, 0]];
            for (i, v) in units.column_mut(0).iter_mut().enumerate() {
                *v = if i % 2 == 0 { first } else { -first };
            }
        } else {
            spread(&mut units);
        }
        units * self.separation
    }
}

const SPREAD_STEPS: usize = 300;
const MAX_STEP: f64 = 0.05;

/// Coulomb repulsion between unit vectors, projected onto the sphere.
fn spread(units: &mut Array2<f64>) {
    let (n, d) = units.dim();
    if n < 2 {
        return;
    }
    for _ in 0..SPREAD_STEPS {
        let mut forces = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let diff = &units.row(i) - &units.row(j);
                let r2 = diff.dot(&diff).max(1e-12);
                forces.row_mut(i).scaled_add(1.0 / (r2 * r2.sqrt()), &diff);
            }
        }
        for (mut u, mut f) in units.rows_mut().into_iter().zip(forces.rows_mut()) {
            let radial = f.dot(&u);
            f.scaled_add(-radial, &u);
            let norm = f.dot(&f).sqrt();
            if norm > MAX_STEP {
                f.mapv_inplace(|v| v * MAX_STEP / norm);
            }
            u += &f;
            let len = u.dot(&u).sqrt();
            u.mapv_inplace(|v| v / len);
        }
    }
}

/// Samples `per_class_n` points per class, class-major order.
pub fn synth_gaussian(spec: &GaussianMixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let centers = spec.draw_centers(&mut rng);
    let n = spec.n_classes * spec.per_class_n;
    let mut features = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let class = i / spec.per_class_n;
        for (v, c) in row.iter_mut().zip(centers.row(class)) {
            let noise: f64 = rng.sample(StandardNormal);
            *v = c + noise;
        }
        labels.push(class);
    }
    Dataset::new(features, labels)
}
