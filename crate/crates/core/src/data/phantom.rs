//! Random head-like phantoms: a bright elliptical shell around a dim interior
//! with a handful of rotated ellipses inside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RandomSource, RealImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub size: usize,
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    /// Additive intensity of each inner ellipse is drawn from this range.
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            min_ellipses: 4,
            max_ellipses: 8,
            intensity_min: 0.1,
            intensity_max: 0.5,
        }
    }
}

const SHELL_VALUE: f64 = 1.0;
const INTERIOR_VALUE: f64 = 0.15;
const SHELL_THICKNESS: f64 = 0.08;

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 16 {
            return Err(Error::invalid("size", format!("{} is below 16", self.size)));
        }
        if self.min_ellipses > self.max_ellipses {
            return Err(Error::invalid("ellipses", "min exceeds max"));
        }
        if !(self.intensity_min.is_finite()
            && self.intensity_max.is_finite()
            && self.intensity_min <= self.intensity_max)
        {
            return Err(Error::invalid("intensity", "need finite min <= max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (du, dv) = (u - self.cx, v - self.cy);
        let x = c * du + s * dv;
        let y = -s * du + c * dv;
        (x / self.a).powi(2) + (y / self.b).powi(2) <= 1.0
    }
}

/// Draws one phantom in `[0, 1]` on normalized coordinates `[-1, 1]^2`.
pub fn gen_phantom(spec: &PhantomSpec, rng: &mut RandomSource) -> Result<RealImage> {
    spec.validate()?;
    let outer = Ellipse {
        cx: 0.0,
        cy: 0.0,
        a: 0.72 * rng.uniform_range(0.95, 1.05),
        b: 0.9 * rng.uniform_range(0.95, 1.05),
        angle: rng.uniform_range(-0.1, 0.1),
    };
    let inner = Ellipse {
        a: outer.a - SHELL_THICKNESS,
        b: outer.b - SHELL_THICKNESS,
        ..outer
    };
    let count = spec.min_ellipses + rng.below(spec.max_ellipses - spec.min_ellipses + 1);
    let blobs: Vec<(Ellipse, f64)> = (0..count)
        .map(|_| {
            let ellipse = Ellipse {
                cx: rng.uniform_range(-0.45, 0.45) * inner.a,
                cy: rng.uniform_range(-0.45, 0.45) * inner.b,
                a: rng.uniform_range(0.06, 0.3),
                b: rng.uniform_range(0.06, 0.3),
                angle: rng.uniform_range(0.0, std::f64::consts::PI),
            };
            let value = rng.uniform_range(spec.intensity_min, spec.intensity_max);
            (ellipse, value)
        })
        .collect();
    let n = spec.size as f64;
    Ok(RealImage::from_fn(spec.size, spec.size, |r, c| {
        let u = (2.0 * c as f64 + 1.0) / n - 1.0;
        let v = (2.0 * r as f64 + 1.0) / n - 1.0;
        if !outer.contains(u, v) {
            return 0.0;
        }
        if !inner.contains(u, v) {
            return SHELL_VALUE;
        }
        let mut value = INTERIOR_VALUE;
        for (e, w) in &blobs {
            if e.contains(u, v) {
                value += w;
            }
        }
        value.clamp(0.0, 1.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let spec = PhantomSpec::default();
        let a = gen_phantom(&spec, &mut RandomSource::new(3)).unwrap();
        let b = gen_phantom(&spec, &mut RandomSource::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (64, 64));
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = gen_phantom(&spec, &mut RandomSource::new(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ring_only_when_no_ellipses() {
        let spec = PhantomSpec {
            min_ellipses: 0,
            max_ellipses: 0,
            ..PhantomSpec::default()
        };
        let img = gen_phantom(&spec, &mut RandomSource::new(1)).unwrap();
        let mut values: Vec<f64> = img.data().to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert_eq!(values, vec![0.0, INTERIOR_VALUE, SHELL_VALUE]);
        // Corners lie outside the head, the center inside the interior.
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(32, 32), INTERIOR_VALUE);
    }

    #[test]
    fn extreme_intensities_are_clipped() {
        let spec = PhantomSpec {
            intensity_min: 2.0,
            intensity_max: 3.0,
            ..PhantomSpec::default()
        };
        let img = gen_phantom(&spec, &mut RandomSource::new(9)).unwrap();
        assert_eq!(img.min_max(), (0.0, 1.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut rng = RandomSource::new(0);
        for spec in [
            PhantomSpec {
                size: 8,
                ..PhantomSpec::default()
            },
            PhantomSpec {
                min_ellipses: 5,
                max_ellipses: 2,
                ..PhantomSpec::default()
            },
            PhantomSpec {
                intensity_min: 1.0,
                intensity_max: 0.0,
                ..PhantomSpec::default()
            },
        ] {
            assert!(gen_phantom(&spec, &mut rng).is_err());
        }
    }
}
