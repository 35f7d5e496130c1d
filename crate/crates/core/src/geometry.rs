//! Stereographic charts of the unit sphere and region geometry.
//!
//! The North chart sends `z` to `(2 Re z, 2 Im z, 1 - |z|^2) / (1 + |z|^2)`; the
//! South chart sends `w` to `(2 Re w, -2 Im w, |w|^2 - 1) / (1 + |w|^2)`. The two
//! agree on the overlap through the holomorphic transition `w = 1/z`, so both
//! charts induce the same complex structure and every chart-local formula
//! (energy split, tension) can be evaluated in either chart.
//!
//! Region radii are stereographic radii: `D_r(x)` is the image of the disk of
//! radius `r` in the chart centered at `x`, i.e. the geodesic ball of radius
//! `2 arctan r`.

use crate::error::{HmError, Result};
use crate::vec3::Vec3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Distance to a chart's excluded pole below which inversion is refused.
pub const POLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartId {
    North,
    South,
}

impl ChartId {
    pub fn other(self) -> ChartId {
        match self {
            ChartId::North => ChartId::South,
            ChartId::South => ChartId::North,
        }
    }

    /// The point of the sphere that the chart cannot reach.
    pub fn excluded_pole(self) -> Vec3 {
        match self {
            ChartId::North => Vec3::new(0.0, 0.0, -1.0),
            ChartId::South => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// A point of the unit sphere in R^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpherePoint {
    pub const NORTH_POLE: SpherePoint = SpherePoint { x: 0.0, y: 0.0, z: 1.0 };
    pub const SOUTH_POLE: SpherePoint = SpherePoint { x: 0.0, y: 0.0, z: -1.0 };

    /// Radially projects `(x, y, z)` onto the sphere.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(HmError::InvalidParams(format!(
                "cannot project ({x}, {y}, {z}) onto the sphere"
            )));
        }
        Ok(Self::from_vec(v * (1.0 / n)))
    }

    #[inline]
    pub fn from_vec(v: Vec3) -> Self {
        SpherePoint { x: v.x, y: v.y, z: v.z }
    }

    #[inline]
    pub fn vec(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Geodesic distance on the unit sphere.
    pub fn angle_to(self, other: SpherePoint) -> f64 {
        let a = self.vec();
        let b = other.vec();
        // atan2 form stays accurate for nearly equal and nearly antipodal points.
        a.cross(b).norm().atan2(a.dot(b))
    }

    /// Stereographic radius of `p` in the chart centered at `self`, i.e. `tan(angle / 2)`.
    pub fn stereo_radius_to(self, p: SpherePoint) -> f64 {
        let c = self.vec();
        let q = p.vec();
        let minus = (q - c).norm();
        let plus = (q + c).norm();
        if plus == 0.0 {
            f64::INFINITY
        } else {
            minus / plus
        }
    }
}

impl From<SpherePoint> for Vec3 {
    fn from(p: SpherePoint) -> Vec3 {
        p.vec()
    }
}

/// Image of a chart coordinate on the sphere, as a raw vector.
#[inline]
pub fn stereo_to_vec(z: Complex64, chart: ChartId) -> Vec3 {
    let r2 = z.norm_sqr();
    let d = 1.0 / (1.0 + r2);
    match chart {
        ChartId::North => Vec3::new(2.0 * z.re * d, 2.0 * z.im * d, (1.0 - r2) * d),
        ChartId::South => Vec3::new(2.0 * z.re * d, -2.0 * z.im * d, (r2 - 1.0) * d),
    }
}

pub fn stereo_to_sphere(z: Complex64, chart: ChartId) -> SpherePoint {
    SpherePoint::from_vec(stereo_to_vec(z, chart))
}

pub fn sphere_to_stereo(p: SpherePoint, chart: ChartId) -> Result<Complex64> {
    let v = p.vec();
    if (v - chart.excluded_pole()).norm() <= POLE_TOLERANCE {
        return Err(HmError::PoleSingular(chart));
    }
    Ok(match chart {
        ChartId::North => Complex64::new(v.x, v.y) / (1.0 + v.z),
        ChartId::South => Complex64::new(v.x, -v.y) / (1.0 - v.z),
    })
}

/// `sigma(z) = 2 / (1 + |z|^2)`, the conformal factor of either chart.
#[inline]
pub fn conformal_factor(z: Complex64) -> f64 {
    2.0 / (1.0 + z.norm_sqr())
}

/// Coordinate of the same sphere point in the other chart: `w = 1/z`.
pub fn chart_transition(z: Complex64, from: ChartId) -> Result<Complex64> {
    if z.norm() <= POLE_TOLERANCE {
        return Err(HmError::PoleSingular(from.other()));
    }
    Ok(z.inv())
}

/// Geodesic radius of the disk with stereographic radius `r`.
pub fn stereo_to_geodesic_radius(r: f64) -> f64 {
    2.0 * r.atan()
}

pub fn geodesic_to_stereo_radius(theta: f64) -> f64 {
    (0.5 * theta).tan()
}

/// Sphere area of `D_r(x)`.
pub fn disk_area(r: f64) -> f64 {
    let r2 = r * r;
    4.0 * std::f64::consts::PI * r2 / (1.0 + r2)
}

/// Regions of the sphere. All radii are stereographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    WholeSphere,
    Disk {
        center: SpherePoint,
        radius: f64,
    },
    /// Closed annulus `inner <= r <= outer`.
    Annulus {
        center: SpherePoint,
        inner_radius: f64,
        outer_radius: f64,
    },
    /// Complement of a union of closed disks.
    DiskComplement { disks: Vec<(SpherePoint, f64)> },
}

impl Region {
    pub fn disk(center: SpherePoint, radius: f64) -> Result<Region> {
        let r = Region::Disk { center, radius };
        r.validate()?;
        Ok(r)
    }

    pub fn annulus(center: SpherePoint, inner_radius: f64, outer_radius: f64) -> Result<Region> {
        let r = Region::Annulus {
            center,
            inner_radius,
            outer_radius,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |r: f64| r.is_finite() && r > 0.0;
        match self {
            Region::WholeSphere => Ok(()),
            Region::Disk { radius, .. } => {
                if positive(*radius) {
                    Ok(())
                } else {
                    Err(HmError::InvalidRegion(format!("disk radius {radius} must be > 0")))
                }
            }
            Region::Annulus {
                inner_radius,
                outer_radius,
                ..
            } => {
                if !positive(*inner_radius) || !positive(*outer_radius) {
                    return Err(HmError::InvalidRegion("annulus radii must be > 0".into()));
                }
                if inner_radius >= outer_radius {
                    return Err(HmError::InvalidRegion(format!(
                        "annulus needs inner < outer, got {inner_radius} >= {outer_radius}"
                    )));
                }
                Ok(())
            }
            Region::DiskComplement { disks } => {
                if let Some((_, r)) = disks.iter().find(|(_, r)| !positive(*r)) {
                    return Err(HmError::InvalidRegion(format!("disk radius {r} must be > 0")));
                }
                for w in self.overlap_warnings() {
                    log::warn!("{w}");
                }
                Ok(())
            }
        }
    }

    /// Pairs of complement disks whose doubled disks intersect.
    pub fn overlap_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Region::DiskComplement { disks } = self {
            for (a, (ca, ra)) in disks.iter().enumerate() {
                for (cb, rb) in disks.iter().skip(a + 1) {
                    let reach =
                        stereo_to_geodesic_radius(2.0 * ra) + stereo_to_geodesic_radius(2.0 * rb);
                    if ca.angle_to(*cb) < reach {
                        out.push(format!(
                            "doubled disks around {ca:?} and {cb:?} intersect"
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn contains(&self, p: SpherePoint) -> bool {
        match self {
            Region::WholeSphere => true,
            Region::Disk { center, radius } => center.stereo_radius_to(p) <= *radius,
            Region::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                let r = center.stereo_radius_to(p);
                r >= *inner_radius && r <= *outer_radius
            }
            Region::DiskComplement { disks } => disks
                .iter()
                .all(|(c, r)| c.stereo_radius_to(p) > *r),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Region::WholeSphere => "whole".to_string(),
            Region::Disk { center, radius } => format!(
                "disk({:.6},{:.6},{:.6};{radius})",
                center.x, center.y, center.z
            ),
            Region::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => format!(
                "annulus({:.6},{:.6},{:.6};{inner_radius},{outer_radius})",
                center.x, center.y, center.z
            ),
            Region::DiskComplement { disks } => format!("complement({} disks)", disks.len()),
        }
    }
}

/// Region membership helper with the exported name used by the CLI layer.
pub fn region_contains(region: &Region, p: SpherePoint) -> bool {
    region.contains(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn chart_images_of_origin_are_poles() {
        assert_eq!(stereo_to_sphere(c(0.0, 0.0), ChartId::North), SpherePoint::NORTH_POLE);
        assert_eq!(stereo_to_sphere(c(0.0, 0.0), ChartId::South), SpherePoint::SOUTH_POLE);
        let e = stereo_to_sphere(c(1.0, 0.0), ChartId::North);
        assert_abs_diff_eq!(e.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_chart() {
        let z = sphere_to_stereo(SpherePoint::NORTH_POLE, ChartId::North).unwrap();
        assert_eq!(z, c(0.0, 0.0));
        let z = sphere_to_stereo(SpherePoint::new(1.0, 0.0, 0.0).unwrap(), ChartId::North).unwrap();
        assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
        assert!(matches!(
            sphere_to_stereo(SpherePoint::SOUTH_POLE, ChartId::North),
            Err(HmError::PoleSingular(ChartId::North))
        ));
        assert!(sphere_to_stereo(SpherePoint::NORTH_POLE, ChartId::South).is_err());
    }

    #[test]
    fn conformal_factor_values() {
        assert_eq!(conformal_factor(c(0.0, 0.0)), 2.0);
        assert_eq!(conformal_factor(c(1.0, 0.0)), 1.0);
        let mut prev = 2.0;
        for k in 1..40 {
            let s = conformal_factor(c(1.5f64.powi(k), 0.0));
            assert!(s < prev && s > 0.0);
            prev = s;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn transition_values() {
        let one = chart_transition(c(1.0, 0.0), ChartId::North).unwrap();
        assert_abs_diff_eq!(one.re, 1.0, epsilon = 1e-15);
        let half = chart_transition(c(2.0, 0.0), ChartId::North).unwrap();
        assert_abs_diff_eq!(half.re, 0.5, epsilon = 1e-15);
        assert!(matches!(
            chart_transition(c(0.0, 0.0), ChartId::North),
            Err(HmError::PoleSingular(_))
        ));
    }

    #[test]
    fn region_membership() {
        let np = SpherePoint::NORTH_POLE;
        let disk = Region::disk(np, 1.0).unwrap();
        assert!(disk.contains(np));
        assert!(!disk.contains(SpherePoint::SOUTH_POLE));
        let ann = Region::annulus(np, 1.0, 2.0).unwrap();
        let equator = SpherePoint::new(0.0, 1.0, 0.0).unwrap();
        assert!(ann.contains(equator));
        assert!(!ann.contains(np));
        let comp = Region::DiskComplement {
            disks: vec![(np, 1.0)],
        };
        assert!(!comp.contains(equator), "boundary excluded from complement");
        assert!(comp.contains(SpherePoint::SOUTH_POLE));
        assert!(Region::annulus(np, 2.0, 1.0).is_err());
        assert!(Region::disk(np, 0.0).is_err());
    }

    #[test]
    fn complement_overlap_warning() {
        let a = SpherePoint::NORTH_POLE;
        let b = stereo_to_sphere(c(0.3, 0.0), ChartId::North);
        let close = Region::DiskComplement {
            disks: vec![(a, 0.1), (b, 0.1)],
        };
        assert_eq!(close.overlap_warnings().len(), 1);
        let far = Region::DiskComplement {
            disks: vec![(a, 0.01), (b, 0.01)],
        };
        assert!(far.overlap_warnings().is_empty());
    }

    #[test]
    fn round_trip_many_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let v = loop {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let n = v.norm();
                if n > 0.1 && n < 1.0 {
                    break v * (1.0 / n);
                }
            };
            let p = SpherePoint::from_vec(v);
            for chart in [ChartId::North, ChartId::South] {
                if (v - chart.excluded_pole()).norm() < 1e-6 {
                    continue;
                }
                let z = sphere_to_stereo(p, chart).unwrap();
                // Points close to the excluded pole have large |z|; compare on the sphere.
                let back = stereo_to_vec(z, chart);
                worst = worst.max((back - v).norm());
            }
        }
        assert!(worst <= 1e-12, "worst round-trip error {worst:e}");
    }

    proptest! {
        #[test]
        fn transition_is_involution(re in -50.0f64..50.0, im in -50.0f64..50.0) {
            let z = c(re, im);
            prop_assume!(z.norm() > 1e-3);
            let w = chart_transition(z, ChartId::North).unwrap();
            let back = chart_transition(w, ChartId::South).unwrap();
            prop_assert!((back - z).norm() <= 1e-13 * z.norm().max(1.0));
            let a = stereo_to_vec(z, ChartId::North);
            let b = stereo_to_vec(w, ChartId::South);
            prop_assert!((a - b).norm() <= 1e-12);
        }

        #[test]
        fn metric_pullback_is_conformal_factor(
            re in -3.0f64..3.0, im in -3.0f64..3.0, dir in 0.0f64..std::f64::consts::TAU
        ) {
            let z = c(re, im);
            let hdir = Complex64::from_polar(1.0, dir);
            let eps = 1e-6;
            // central difference to remove the O(eps) term
            let a = stereo_to_vec(z + hdir * eps, ChartId::North);
            let b = stereo_to_vec(z - hdir * eps, ChartId::North);
            let stretch = (a - b).norm() / (2.0 * eps);
            let s = conformal_factor(z);
            prop_assert!((stretch - s).abs() / s < 1e-6);
        }
    }
}
