//! Quadrature grids on the unit sphere. Weights always sum to `4pi`.

use std::f64::consts::PI;

use super::Direction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    directions: Vec<Direction>,
    weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(directions: Vec<Direction>, weights: Vec<f64>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if directions.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} directions but {} weights",
                directions.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument("grid weights must be positive".into()));
        }
        Ok(Self { directions, weights })
    }

    /// Equal weights `4pi / N`, exact for t-designs.
    pub fn equal_weights(directions: Vec<Direction>) -> Result<Self> {
        let w = 4.0 * PI / directions.len().max(1) as f64;
        let n = directions.len();
        Self::new(directions, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_j w_j f(dir_j)`.
    pub fn integrate(&self, f: impl Fn(Direction) -> f64) -> f64 {
        self.directions.iter().zip(&self.weights).map(|(d, w)| w * f(*d)).sum()
    }

    /// 26-point Lebedev rule, exact for polynomials up to degree 7.
    pub fn lebedev26() -> Self {
        let mut points = Vec::with_capacity(26);
        let mut weights = Vec::with_capacity(26);
        let a1 = 1.0 / 21.0;
        let a2 = 4.0 / 105.0;
        let a3 = 9.0 / 280.0;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut p = [0.0; 3];
                p[axis] = sign;
                points.push(p);
                weights.push(a1);
            }
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for si in [1.0, -1.0] {
                for sj in [1.0, -1.0] {
                    let mut p = [0.0; 3];
                    p[i] = si * h;
                    p[j] = sj * h;
                    points.push(p);
                    weights.push(a2);
                }
            }
        }
        let c = 1.0 / 3f64.sqrt();
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    points.push([sx * c, sy * c, sz * c]);
                    weights.push(a3);
                }
            }
        }
        Self {
            directions: points.into_iter().map(Direction::from_cartesian).collect(),
            weights: weights.into_iter().map(|w| 4.0 * PI * w).collect(),
        }
    }

    /// 24-point spherical 7-design: one generic orbit of the rotation group
    /// of the cube.
    ///
    /// A point `(x, y, z)` yields a 7-design exactly when `x^4 + y^4 + z^4 = 3/5`
    /// and `x^2 y^2 z^2 = 1/105`, i.e. when `(x^2, y^2, z^2)` are the roots of
    /// `t^3 - t^2 + t/5 - 1/105`.
    pub fn t_design24() -> Self {
        let roots = cubic_roots_in_unit_interval(-1.0, 0.2, -1.0 / 105.0);
        let seed = [roots[0].sqrt(), roots[1].sqrt(), roots[2].sqrt()];
        let points: Vec<[f64; 3]> = cube_rotations()
            .iter()
            .map(|r| {
                let mut p = [0.0; 3];
                for (i, row) in r.iter().enumerate() {
                    p[i] = row.iter().zip(&seed).map(|(a, b)| a * b).sum();
                }
                p
            })
            .collect();
        Self::equal_weights(points.into_iter().map(Direction::from_cartesian).collect()).expect("non-empty grid")
    }

    /// Gauss-Legendre nodes in `sin(elevation)` times equally spaced azimuths.
    ///
    /// Exact for spherical harmonics of degree below `min(2 * n_elevation, n_azimuth)`.
    pub fn gauss_legendre(n_elevation: usize, n_azimuth: usize) -> Self {
        let (nodes, gl_weights) = gauss_legendre_nodes(n_elevation);
        let mut directions = Vec::with_capacity(n_elevation * n_azimuth);
        let mut weights = Vec::with_capacity(n_elevation * n_azimuth);
        for (x, w) in nodes.iter().zip(&gl_weights) {
            for k in 0..n_azimuth {
                let az = 2.0 * PI * k as f64 / n_azimuth as f64;
                directions.push(Direction::new(x.asin(), az).expect("valid node"));
                weights.push(w * 2.0 * PI / n_azimuth as f64);
            }
        }
        Self { directions, weights }
    }
}

/// The 24 proper rotations among signed permutation matrices.
fn cube_rotations() -> Vec<[[f64; 3]; 3]> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for perm in PERMS {
        for signs in 0..8u8 {
            let mut m = [[0.0; 3]; 3];
            for (row, &col) in perm.iter().enumerate() {
                m[row][col] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if det3(&m) > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Real roots of `t^3 + a t^2 + b t + c` in (0, 1), found by bracketing sign
/// changes and bisecting; assumes three simple roots there.
fn cubic_roots_in_unit_interval(a: f64, b: f64, c: f64) -> [f64; 3] {
    let f = |t: f64| ((t + a) * t + b) * t + c;
    let steps = 10_000;
    let mut roots = Vec::with_capacity(3);
    for i in 0..steps {
        let (mut lo, mut hi) = (i as f64 / steps as f64, (i + 1) as f64 / steps as f64);
        if f(lo).signum() == f(hi).signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid).signum() == f(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    assert_eq!(roots.len(), 3, "expected three roots in (0, 1)");
    [roots[0], roots[1], roots[2]]
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}
