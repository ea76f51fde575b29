use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Analytic shapes inside the unit cube. Distances are negative inside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    /// Ring in the plane `z = center.z`.
    Torus { center: [f64; 3], major: f64, minor: f64 },
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = norm(v);
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

impl Shape {
    pub fn unit_sphere() -> Self {
        Shape::Sphere {
            center: [0.5; 3],
            radius: 0.25,
        }
    }

    pub fn unit_torus() -> Self {
        Shape::Torus {
            center: [0.5; 3],
            major: 0.25,
            minor: 0.1,
        }
    }

    pub fn distance(&self, p: [f64; 3]) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => norm(sub(p, center)) - radius,
            Shape::Box { center, half_extents } => {
                let q: [f64; 3] = std::array::from_fn(|i| (p[i] - center[i]).abs() - half_extents[i]);
                let outside = norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
                outside + q[0].max(q[1]).max(q[2]).min(0.0)
            }
            Shape::Torus { center, major, minor } => {
                let d = sub(p, center);
                let ring = (d[0] * d[0] + d[1] * d[1]).sqrt() - major;
                (ring * ring + d[2] * d[2]).sqrt() - minor
            }
        }
    }

    /// Uniformly distributed surface point and its outward normal.
    pub fn sample_surface(&self, rng: &mut impl Rng) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Sphere { center, radius } => {
                let n = unit_vector(rng);
                (std::array::from_fn(|i| center[i] + radius * n[i]), n)
            }
            Shape::Box { center, half_extents: h } => {
                // Faces picked in proportion to their area.
                let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut axis = 2;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = i;
                        break;
                    }
                    pick -= a;
                }
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                let mut n = [0.0; 3];
                for i in 0..3 {
                    p[i] = if i == axis {
                        center[i] + side * h[i]
                    } else {
                        center[i] + h[i] * rng.random_range(-1.0..1.0)
                    };
                }
                n[axis] = side;
                (p, n)
            }
            Shape::Torus { center, major, minor } => {
                // The area element is proportional to `major + minor cos(phi)`.
                let phi = loop {
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    if rng.random::<f64>() * (major + minor) <= major + minor * phi.cos() {
                        break phi;
                    }
                };
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let n = [phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin()];
                let ring = major + minor * phi.cos();
                let p = [
                    center[0] + ring * theta.cos(),
                    center[1] + ring * theta.sin(),
                    center[2] + minor * phi.sin(),
                ];
                (p, n)
            }
        }
    }
}

pub fn sdf_reference(shape: &Shape, pos: [f64; 3]) -> f64 {
    shape.distance(pos)
}
