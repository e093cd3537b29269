//! Geometry of the unit sphere: coordinates, distances, rotations, uniform
//! sampling and the Hammer equal-area projection.
//!
//! Coordinates follow the physics convention: colatitude `theta` measured from
//! the north pole `(0, 0, 1)` and longitude `phi` measured from the x axis.

use std::f64::consts::{PI, SQRT_2};
use std::ops::Mul;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Below this value of `sin(theta)` a point is treated as a pole and `phi = 0`.
pub const POLE_EPS: f64 = 1e-14;

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVector {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVector {
    pub const NORTH: UnitVector = UnitVector {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    /// Normalizes `(x, y, z)` onto the sphere. Fails for the zero vector or
    /// non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::Domain(format!(
                "cannot normalize ({x}, {y}, {z}) onto the unit sphere"
            )));
        }
        Ok(Self::normalized(x / n, y / n, z / n))
    }

    /// Renormalizes an almost-unit vector. Two passes bring the norm to
    /// within a couple of ulps of one.
    fn normalized(mut x: f64, mut y: f64, mut z: f64) -> Self {
        for _ in 0..2 {
            let n = (x * x + y * y + z * z).sqrt();
            x /= n;
            y /= n;
            z /= n;
        }
        UnitVector { x, y, z }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn neg(&self) -> UnitVector {
        UnitVector {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// `sin(theta)` computed without trigonometry.
    pub fn sin_theta(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn to_spherical(&self) -> SphericalCoord {
        let theta = self.z.clamp(-1.0, 1.0).acos();
        let phi = if self.sin_theta() < POLE_EPS {
            0.0
        } else {
            self.y.atan2(self.x).rem_euclid(TWO_PI)
        };
        // rem_euclid can round up to exactly 2π
        let phi = if phi >= TWO_PI { 0.0 } else { phi };
        SphericalCoord { theta, phi }
    }
}

/// Colatitude/longitude pair, `theta` in `[0, π]`, `phi` in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    theta: f64,
    phi: f64,
}

impl SphericalCoord {
    /// `theta` must lie in `[0, π]`; `phi` is wrapped into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::Domain(format!(
                "spherical coordinate out of range: theta = {theta}, phi = {phi}"
            )));
        }
        let mut phi = phi.rem_euclid(TWO_PI);
        if phi >= TWO_PI {
            phi = 0.0;
        }
        Ok(SphericalCoord { theta, phi })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

pub fn from_spherical(c: SphericalCoord) -> UnitVector {
    let (st, ct) = c.theta.sin_cos();
    let (sp, cp) = c.phi.sin_cos();
    UnitVector::normalized(cp * st, sp * st, ct)
}

/// Great-circle distance in radians, in `[0, π]`.
pub fn spherical_distance(a: &UnitVector, b: &UnitVector) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Exactly uniform point: a normalized vector of three independent standard normals.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> UnitVector {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let n2 = x * x + y * y + z * z;
        if n2 > 1e-300 {
            let n = n2.sqrt();
            return UnitVector::normalized(x / n, y / n, z / n);
        }
    }
}

/// An element of SO(3), stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Validates orthogonality and orientation to 1e-10.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        let r = Rotation { m };
        let rtr = r.transpose() * r;
        let mut err = 0.0f64;
        for (i, row) in rtr.m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((v - target).abs());
            }
        }
        if err > 1e-10 || (r.det() - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "matrix is not a rotation (orthogonality error {err:e}, det {})",
                r.det()
            )));
        }
        Ok(r)
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: &UnitVector, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let (x, y, z) = (axis.x, axis.y, axis.z);
        Rotation {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn transpose(&self) -> Rotation {
        let m = &self.m;
        Rotation {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// The inverse rotation (the transpose).
    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Rotation angle in `[0, π]`, recovered from the trace.
    pub fn angle(&self) -> f64 {
        let tr = self.m[0][0] + self.m[1][1] + self.m[2][2];
        ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        Rotation { m: out }
    }
}

/// Applies `r` to `x`, renormalizing the result.
pub fn rotate(r: &Rotation, x: &UnitVector) -> UnitVector {
    let m = &r.m;
    let v = [
        m[0][0] * x.x + m[0][1] * x.y + m[0][2] * x.z,
        m[1][0] * x.x + m[1][1] * x.y + m[1][2] * x.z,
        m[2][0] * x.x + m[2][1] * x.y + m[2][2] * x.z,
    ];
    UnitVector::normalized(v[0], v[1], v[2])
}

/// Hammer equal-area projection centred on `phi = π` at the equator.
///
/// Output spans the ellipse `u²/8 + v²/2 ≤ 1`, whose area equals the sphere's.
pub fn hammer_project(c: SphericalCoord) -> (f64, f64) {
    let lat = PI / 2.0 - c.theta;
    let lon = c.phi - PI;
    let (sl, cl) = lat.sin_cos();
    let half = lon / 2.0;
    let denom = (1.0 + cl * half.cos()).sqrt();
    if denom == 0.0 {
        // the antipode of the centre is the ellipse boundary at v = 0
        return (-2.0 * SQRT_2, 0.0);
    }
    (2.0 * SQRT_2 * cl * half.sin() / denom, SQRT_2 * sl / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::legendre_poly;
    use crate::rng::{substream, Purpose};
    use proptest::prelude::*;

    fn sc(theta: f64, phi: f64) -> SphericalCoord {
        SphericalCoord::new(theta, phi).unwrap()
    }

    fn close(a: &UnitVector, b: [f64; 3], tol: f64) -> bool {
        (a.x - b[0]).abs() < tol && (a.y - b[1]).abs() < tol && (a.z - b[2]).abs() < tol
    }

    #[test]
    fn from_spherical_reference_points() {
        assert!(close(&from_spherical(sc(0.0, 0.0)), [0.0, 0.0, 1.0], 1e-15));
        assert!(close(&from_spherical(sc(PI / 2.0, 0.0)), [1.0, 0.0, 0.0], 1e-15));
        assert!(close(&from_spherical(sc(PI / 2.0, PI / 2.0)), [0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn spherical_coord_range_checked() {
        assert!(SphericalCoord::new(-0.1, 0.0).is_err());
        assert!(SphericalCoord::new(3.2, 0.0).is_err());
        assert!(SphericalCoord::new(1.0, f64::NAN).is_err());
        let c = sc(1.0, -PI / 2.0);
        assert!((c.phi() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(UnitVector::new(0.0, 0.0, 0.0).is_err());
        assert!(UnitVector::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn pole_has_zero_longitude() {
        let c = UnitVector::new(0.0, 0.0, -2.0).unwrap().to_spherical();
        assert_eq!(c.phi(), 0.0);
        assert!((c.theta() - PI).abs() < 1e-15);
    }

    #[test]
    fn distance_reference_values() {
        let a = UnitVector::new(0.3, -0.2, 0.9).unwrap();
        assert_eq!(spherical_distance(&a, &a), 0.0);
        assert!((spherical_distance(&a, &a.neg()) - PI).abs() < 1e-7);
        let n = UnitVector::NORTH;
        let e = UnitVector::new(1.0, 0.0, 0.0).unwrap();
        assert!((spherical_distance(&n, &e) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rotate_reference_cases() {
        let x = UnitVector::new(0.2, 0.5, -0.3).unwrap();
        assert!(close(&rotate(&Rotation::IDENTITY, &x), x.to_array(), 1e-15));
        let rz = Rotation::from_axis_angle(&UnitVector::NORTH, PI);
        let e = UnitVector::new(1.0, 0.0, 0.0).unwrap();
        assert!(close(&rotate(&rz, &e), [-1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn rotation_validation() {
        let r = Rotation::from_axis_angle(&UnitVector::new(1.0, 2.0, 3.0).unwrap(), 0.7);
        assert!(Rotation::from_matrix(*r.matrix()).is_ok());
        let mut bad = *r.matrix();
        bad[0][0] *= -1.0;
        assert!(Rotation::from_matrix(bad).is_err());
        assert!((r.angle() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn uniform_sampler_moments() {
        let mut rng = substream(11, Purpose::Null, 0);
        let n = 1_000_000;
        let (mut sz, mut sp2, mut upper) = (0.0, 0.0, 0usize);
        for _ in 0..n {
            let x = sample_uniform(&mut rng);
            sz += x.z();
            sp2 += legendre_poly(2, x.z());
            if x.z() > 0.0 {
                upper += 1;
            }
        }
        let nf = n as f64;
        assert!((sz / nf).abs() < 0.003);
        assert!((sp2 / nf).abs() < 0.003);
        assert!((upper as f64 / nf - 0.5).abs() < 0.002);
    }

    #[test]
    fn uniform_sampler_legendre_moments() {
        let e = UnitVector::new(0.3, -0.4, 0.5).unwrap();
        let mut rng = substream(12, Purpose::Null, 0);
        let n = 100_000;
        let pts: Vec<_> = (0..n).map(|_| sample_uniform(&mut rng)).collect();
        for l in 1..=6 {
            let mean: f64 = pts.iter().map(|p| legendre_poly(l, p.dot(&e))).sum::<f64>() / n as f64;
            assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "l = {l}: {mean}");
        }
    }

    #[test]
    fn hammer_center_and_symmetry() {
        let (u, v) = hammer_project(sc(PI / 2.0, PI));
        assert!(u.abs() < 1e-15 && v.abs() < 1e-15);
        let (u0, v0) = hammer_project(sc(PI / 2.0, 0.0));
        let (u1, v1) = hammer_project(sc(PI / 2.0, 2.0 * PI - 1e-9));
        assert!((u0 + u1).abs() < 1e-8 && (v0 - v1).abs() < 1e-8);
        assert!((u0 + 2.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn hammer_preserves_area() {
        // independent oracle: a disk of radius r in the plane has area πr²,
        // and the sphere maps onto an ellipse of total area 4π
        let mut rng = substream(13, Purpose::Null, 0);
        let n = 100_000;
        let proj: Vec<_> = (0..n)
            .map(|_| hammer_project(sample_uniform(&mut rng).to_spherical()))
            .collect();
        for &(cu, cv, r) in &[(0.0, 0.0, 0.8), (1.2, 0.4, 0.5), (-1.5, -0.6, 0.6)] {
            let inside = proj
                .iter()
                .filter(|(u, v)| (u - cu).powi(2) + (v - cv).powi(2) < r * r)
                .count() as f64
                / n as f64;
            let expect = PI * r * r / (4.0 * PI);
            assert!((inside - expect).abs() < 0.01 * expect.max(0.1), "{inside} vs {expect}");
        }
    }

    fn arb_unit() -> impl Strategy<Value = UnitVector> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-6)
            .prop_map(|(x, y, z)| UnitVector::new(x, y, z).unwrap())
    }

    proptest! {
        #[test]
        fn construction_and_rotation_keep_unit_norm(x in arb_unit(), axis in arb_unit(), a in 0.0f64..PI) {
            prop_assert!((x.norm() - 1.0).abs() < 1e-12);
            let r = Rotation::from_axis_angle(&axis, a);
            prop_assert!((rotate(&r, &x).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_composition_is_group_action(x in arb_unit(), a1 in arb_unit(), a2 in arb_unit(), t1 in 0.0f64..PI, t2 in 0.0f64..PI) {
            let r1 = Rotation::from_axis_angle(&a1, t1);
            let r2 = Rotation::from_axis_angle(&a2, t2);
            let lhs = rotate(&r2, &rotate(&r1, &x));
            let rhs = rotate(&(r2 * r1), &x);
            prop_assert!(close(&lhs, rhs.to_array(), 1e-10));
            prop_assert!(Rotation::from_matrix(*(r2 * r1).matrix()).is_ok());
        }

        #[test]
        fn distance_is_a_metric(a in arb_unit(), b in arb_unit(), c in arb_unit()) {
            let ab = spherical_distance(&a, &b);
            prop_assert!((ab - spherical_distance(&b, &a)).abs() < 1e-15);
            prop_assert!((0.0..=PI).contains(&ab));
            prop_assert!(spherical_distance(&a, &c) <= ab + spherical_distance(&b, &c) + 1e-10);
        }

        #[test]
        fn spherical_round_trip_away_from_poles(theta in 0.01f64..(PI - 0.01), phi in 0.0f64..(2.0 * PI)) {
            let c = sc(theta, phi);
            let back = from_spherical(c).to_spherical();
            prop_assert!((back.theta() - theta).abs() < 1e-10);
            let dphi = (back.phi() - c.phi()).abs();
            prop_assert!(dphi < 1e-10 || (dphi - 2.0 * PI).abs() < 1e-10);
        }
    }
}
