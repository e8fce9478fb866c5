//! Geometry of the support regions: the density region, its epsilon
//! neighbourhood, and the star-shaped outer domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Ball, PeriodicBox};

/// Outer domain: a ball of radius `radius`, star-shaped with respect to the
/// concentric ball of radius `star_radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarDomain {
    pub center: [f64; 3],
    pub radius: f64,
    pub star_radius: f64,
}

impl StarDomain {
    pub fn ball(center: [f64; 3], radius: f64) -> Self {
        Self {
            center,
            radius,
            star_radius: 0.5 * radius,
        }
    }

    pub fn as_ball(&self) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius,
        }
    }

    pub fn star_ball(&self) -> Ball {
        Ball {
            center: self.center,
            radius: self.star_radius,
        }
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        self.as_ball().contains(x)
    }
}

/// The nested regions `omega` (where the density varies), its
/// `epsilon`-neighbourhood, and the outer domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub omega: Ball,
    pub epsilon: f64,
    pub outer: StarDomain,
}

impl Domain {
    /// Disc of radius 0.5 inside a disc of radius 0.8, with epsilon 0.1.
    pub fn default_2d() -> Self {
        Self {
            omega: Ball::centered(0.5),
            epsilon: 0.1,
            outer: StarDomain::ball([0.0; 3], 0.8),
        }
    }

    pub fn omega_eps(&self) -> Ball {
        self.omega.grown(self.epsilon)
    }

    /// Checks the nesting `omega^eps` compactly inside the outer domain, the
    /// star ball inside the outer domain, and the outer domain inside the box
    /// with margin `2 epsilon`.
    pub fn validate(&self, bbox: &PeriodicBox) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.omega.radius > 0.0) {
            return Err(Error::Domain("radii and epsilon must be positive".into()));
        }
        let oe = self.omega_eps();
        let gap = self.outer.radius - (oe.distance_sq(&self.outer.center).sqrt() + oe.radius);
        if !(gap > 0.0) {
            return Err(Error::Domain(format!(
                "omega^eps (radius {}) is not compactly inside the outer domain (radius {})",
                oe.radius, self.outer.radius
            )));
        }
        if !(self.outer.star_radius > 0.0 && self.outer.star_radius < self.outer.radius) {
            return Err(Error::Domain("star radius must lie in (0, radius)".into()));
        }
        if !bbox.contains_ball(&self.outer.center, self.outer.radius, 2.0 * self.epsilon) {
            return Err(Error::Domain(format!(
                "box does not contain the outer domain with margin {}",
                2.0 * self.epsilon
            )));
        }
        Ok(())
    }
}
