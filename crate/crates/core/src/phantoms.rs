//! Conductivity phantoms and relative error metrics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Analytic conductivity on the unit disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phantom {
    /// Constant background with circular inclusions of a common amplitude.
    PairedCircles {
        circles: Vec<Circle>,
        amplitude: f64,
        background: f64,
    },
    /// Radial step profile: `value` on `inner ≤ r < outer` for each step,
    /// background elsewhere.
    RotSym { steps: Vec<RadialStep>, background: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialStep {
    pub inner: f64,
    pub outer: f64,
    pub value: f64,
}

/// Inclusions must keep this distance from the boundary so that σ equals
/// the background in an annulus next to the circle.
pub const BOUNDARY_MARGIN: f64 = 1e-3;

impl Phantom {
    pub fn unit() -> Self {
        Phantom::PairedCircles {
            circles: vec![],
            amplitude: 1.0,
            background: 1.0,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Phantom::PairedCircles {
                circles,
                amplitude,
                background,
            } => {
                let inside = circles
                    .iter()
                    .any(|c| (x - c.center[0]).hypot(y - c.center[1]) < c.radius);
                if inside {
                    *amplitude
                } else {
                    *background
                }
            }
            Phantom::RotSym { steps, background } => {
                let r = x.hypot(y);
                steps
                    .iter()
                    .find(|s| r >= s.inner && r < s.outer)
                    .map_or(*background, |s| s.value)
            }
        }
    }

    /// Largest radius at which σ differs from the background.
    pub fn support_radius(&self) -> f64 {
        match self {
            Phantom::PairedCircles { circles, .. } => circles
                .iter()
                .map(|c| c.center[0].hypot(c.center[1]) + c.radius)
                .fold(0.0, f64::max),
            Phantom::RotSym { steps, .. } => steps.iter().map(|s| s.outer).fold(0.0, f64::max),
        }
    }

    pub fn is_rotationally_symmetric(&self) -> bool {
        match self {
            Phantom::RotSym { .. } => true,
            Phantom::PairedCircles {
                circles,
                amplitude,
                background,
            } => circles.is_empty() || amplitude == background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = match self {
            Phantom::PairedCircles {
                amplitude, background, ..
            } => *amplitude > 0.0 && *background > 0.0,
            Phantom::RotSym { steps, background } => *background > 0.0 && steps.iter().all(|s| s.value > 0.0),
        };
        if !positive {
            return Err(Error::InvalidArgument("conductivity must be positive".into()));
        }
        if self.support_radius() > 1.0 - BOUNDARY_MARGIN {
            return Err(Error::InvalidArgument("inclusion reaches the boundary".into()));
        }
        if let Phantom::RotSym { steps, .. } = self {
            if steps.iter().any(|s| !(s.inner >= 0.0 && s.outer > s.inner)) {
                return Err(Error::InvalidArgument("invalid radial step".into()));
            }
        }
        Ok(())
    }
}

/// Circles of conductivity `amplitude` in a unit background.
pub fn paired_circles(circles: Vec<Circle>, amplitude: f64) -> Result<Phantom> {
    let p = Phantom::PairedCircles {
        circles,
        amplitude,
        background: 1.0,
    };
    p.validate()?;
    Ok(p)
}

/// Two circles of radius 0.25 at distance 0.65 from the origin, one at
/// angle π and one at 1 rad, overlapping the edge of a quarter-circle gap
/// centred at θ = 0.
pub fn default_paired_circles(amplitude: f64) -> Phantom {
    let at = |angle: f64| Circle {
        center: [0.65 * angle.cos(), 0.65 * angle.sin()],
        radius: 0.25,
    };
    paired_circles(vec![at(std::f64::consts::PI), at(1.0)], amplitude).expect("default circles are inside the disk")
}

/// Radial step profile in a unit background.
pub fn rotsym(steps: Vec<RadialStep>) -> Result<Phantom> {
    let p = Phantom::RotSym { steps, background: 1.0 };
    p.validate()?;
    Ok(p)
}

/// `‖a − b‖₂ / ‖b‖₂` (Frobenius norm for matrices stored flat).
pub fn relative_l2_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let base: f64 = b.iter().map(|y| y * y).sum();
    if base == 0.0 {
        return Err(Error::InvalidArgument("reference has zero norm".into()));
    }
    Ok((diff / base).sqrt())
}

/// `‖a − b‖₂`.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paired_circle_values() {
        let p = default_paired_circles(2.0);
        assert_eq!(p.value(-0.65, 0.0), 2.0);
        assert_eq!(p.value(0.65 * 1f64.cos(), 0.65 * 1f64.sin()), 2.0);
        assert_eq!(p.value(0.0, 0.0), 1.0);
        assert_eq!(p.value(0.0, 0.99), 1.0);
        assert!(!p.is_rotationally_symmetric());
        let flat = default_paired_circles(1.0);
        assert_eq!(flat.value(-0.65, 0.0), 1.0);
    }

    #[test]
    fn circle_crossing_boundary_rejected() {
        let c = Circle {
            center: [0.8, 0.0],
            radius: 0.25,
        };
        assert!(paired_circles(vec![c], 2.0).is_err());
        assert!(paired_circles(vec![], -1.0).is_err());
    }

    #[test]
    fn rotsym_profile() {
        let p = rotsym(vec![RadialStep {
            inner: 0.2,
            outer: 0.5,
            value: 2.0,
        }])
        .unwrap();
        assert_eq!(p.value(0.1, 0.0), 1.0);
        assert_eq!(p.value(0.0, 0.3), 2.0);
        assert_eq!(p.value(0.4, 0.4), 1.0);
        assert!(p.is_rotationally_symmetric());
        assert!(rotsym(vec![RadialStep {
            inner: 0.5,
            outer: 1.0,
            value: 2.0
        }])
        .is_err());
    }

    #[test]
    fn error_edge_cases() {
        assert_eq!(relative_l2_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_l2_error(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert!(relative_l2_error(&[0.0], &[1.0, 2.0]).is_err());
        assert!(relative_l2_error(&[1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn relative_error_is_scale_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 8),
            b in proptest::collection::vec(0.5f64..5.0, 8),
            c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        ) {
            let e = relative_l2_error(&a, &b).unwrap();
            let ca: Vec<f64> = a.iter().map(|v| c * v).collect();
            let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
            let ec = relative_l2_error(&ca, &cb).unwrap();
            prop_assert!((e - ec).abs() <= 1e-12 * (1.0 + e));
        }
    }
}
