//! Real spherical harmonics in ACN channel order.
//!
//! ACN index `i` maps to degree `n` and order `m` through `i = n^2 + n + m`.
//! The Condon-Shortley phase is not applied (ambiX convention), so
//! `Y = cos(el) sin(az)`, `Z = sin(el)` and `X = cos(el) cos(az)` at first
//! order under SN3D.

use serde::{Deserialize, Serialize};

use super::Direction;

/// Spherical-harmonic normalization.
///
/// `Sn3d` gives the omnidirectional term the value 1 (ambiX). `N3d` scales
/// degree `n` by `sqrt(2n + 1)` relative to SN3D and is orthonormal with
/// respect to the sphere average `(1 / 4pi) * integral dOmega`. `Orthonormal`
/// further divides by `sqrt(4pi)` and is orthonormal under the plain
/// integral `integral dOmega`; the rendering baselines use it internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Sn3d,
    N3d,
    Orthonormal,
}

impl Normalization {
    /// Multiplier taking an SN3D basis function of degree `n` to this normalization.
    pub fn factor_from_sn3d(self, degree: usize) -> f64 {
        let n = degree as f64;
        match self {
            Normalization::Sn3d => 1.0,
            Normalization::N3d => (2.0 * n + 1.0).sqrt(),
            Normalization::Orthonormal => ((2.0 * n + 1.0) / (4.0 * std::f64::consts::PI)).sqrt(),
        }
    }
}

/// `(degree, order)` of an ACN index.
pub fn acn_to_degree_order(acn: usize) -> (usize, isize) {
    let mut n = (acn as f64).sqrt() as usize;
    while n * n > acn {
        n -= 1;
    }
    while (n + 1) * (n + 1) <= acn {
        n += 1;
    }
    let m = acn as isize - (n * n + n) as isize;
    (n, m)
}

pub fn degree_order_to_acn(degree: usize, order: isize) -> usize {
    ((degree * degree + degree) as isize + order) as usize
}

/// Channel count of an order-`order` ambisonic signal.
pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Order whose channel count equals `channels`, if any.
pub fn order_for_channels(channels: usize) -> Option<usize> {
    let n = (channels as f64).sqrt().round() as usize;
    (n >= 1 && n * n == channels).then(|| n - 1)
}

/// Associated Legendre function `P_n^m(x)` without the Condon-Shortley phase, `m >= 0`.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> f64 {
    if m > n {
        return 0.0;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= (2 * k + 1) as f64 * s;
    }
    if n == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for l in m + 2..=n {
        let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

fn sn3d_norm(n: usize, m: usize) -> f64 {
    // (n - m)! / (n + m)!
    let ratio: f64 = ((n - m + 1)..=(n + m)).map(|k| 1.0 / k as f64).product();
    let delta = if m == 0 { 1.0 } else { 2.0 };
    (delta * ratio).sqrt()
}

/// Real spherical harmonic `y_acn(dir)` under `normalization`.
pub fn sh_real(acn: usize, dir: Direction, normalization: Normalization) -> f64 {
    let (n, m) = acn_to_degree_order(acn);
    let am = m.unsigned_abs();
    let legendre = assoc_legendre(n, am, dir.elevation.sin());
    let azimuthal = if m >= 0 {
        (m as f64 * dir.azimuth).cos()
    } else {
        (am as f64 * dir.azimuth).sin()
    };
    sn3d_norm(n, am) * legendre * azimuthal * normalization.factor_from_sn3d(n)
}

/// All `(order + 1)^2` harmonics at `dir`.
pub fn sh_vector(order: usize, dir: Direction, normalization: Normalization) -> Vec<f64> {
    (0..channel_count(order))
        .map(|i| sh_real(i, dir, normalization))
        .collect()
}
