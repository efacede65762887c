//! Per-pair geometric feature encoders.
//!
//! Each encoder maps a (center, neighbor) point pair to a short geometric
//! vector plus the neighbor's reflectance. Five variants are supported:
//!
//! * `relative`  — componentwise coordinate differences (translation-invariant,
//!   rotation-equivariant),
//! * `absolute`  — componentwise absolute differences,
//! * `euclidean` — componentwise squared differences,
//! * `angle`     — three angles between the origin rays of the two points and
//!   their difference direction (rotation-invariant),
//! * `angle_relative` — concatenation of `angle` and `relative`.
//!
//! The angle variant treats the unit ray from the sensor origin to a point as
//! a normal proxy; no surface-normal estimation is involved. Ingestion drops
//! returns closer than [`MIN_POSITION_NORM`] to the origin so these rays are
//! always defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{dot3, norm3, sub3};

/// Points closer to the sensor origin than this have no usable direction and
/// are dropped at ingestion.
pub const MIN_POSITION_NORM: f64 = 1e-6;

const DEG_PER_RAD: f64 = 180.0 / std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Euclidean,
    Absolute,
    Relative,
    Angle,
    AngleRelative,
}

impl EncoderKind {
    /// Fixed reporting order used by the benchmark table.
    pub const ALL: [EncoderKind; 5] = [
        EncoderKind::Euclidean,
        EncoderKind::Absolute,
        EncoderKind::Relative,
        EncoderKind::Angle,
        EncoderKind::AngleRelative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Euclidean => "euclidean",
            EncoderKind::Absolute => "absolute",
            EncoderKind::Relative => "relative",
            EncoderKind::Angle => "angle",
            EncoderKind::AngleRelative => "angle_relative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownEncoder(s.to_string()))
    }

    /// Length of the geometric block (3, or 6 for `angle_relative`).
    pub fn geo_len(self) -> usize {
        match self {
            EncoderKind::AngleRelative => 6,
            _ => 3,
        }
    }

    /// Full encoded width d_enc = geometric block + reflectance channel.
    pub fn feature_len(self) -> usize {
        self.geo_len() + 1
    }

}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An encoder choice plus the angle-normalization flag. Normalization divides
/// each angle entry by 180 so all channels are O(1); it changes learned
/// weights, not semantics, and is recorded in run metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encoder {
    pub kind: EncoderKind,
    pub normalize_angles: bool,
}

impl Encoder {
    pub fn new(kind: EncoderKind, normalize_angles: bool) -> Self {
        Encoder { kind, normalize_angles }
    }

    pub fn geo_len(&self) -> usize {
        self.kind.geo_len()
    }

    pub fn feature_len(&self) -> usize {
        self.kind.feature_len()
    }
}

/// Encoded feature for one point pair: geometric block plus reflectance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedFeature {
    geo: [f64; 6],
    len: u8,
    pub reflectance: f64,
}

impl EncodedFeature {
    pub fn geo(&self) -> &[f64] {
        &self.geo[..self.len as usize]
    }

    /// d_enc: geometric entries plus the reflectance channel.
    pub fn len(&self) -> usize {
        self.len as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Write the full feature (geo then reflectance) into `out`.
    pub fn write_to(&self, out: &mut [f64]) {
        let n = self.len as usize;
        out[..n].copy_from_slice(&self.geo[..n]);
        out[n] = self.reflectance;
    }
}

/// Unit vector from the origin towards `p`.
pub fn unit_direction(p: [f64; 3]) -> Result<[f64; 3]> {
    let n = norm3(p);
    if n < MIN_POSITION_NORM {
        return Err(Error::DegenerateVector);
    }
    Ok([p[0] / n, p[1] / n, p[2] / n])
}

/// Angle between two unit vectors in degrees, in [0, 180]. The dot product is
/// clamped to [-1, 1] before arccos, so the result is total (never NaN).
pub fn angle_between_deg(u: [f64; 3], v: [f64; 3]) -> f64 {
    dot3(u, v).clamp(-1.0, 1.0).acos() * DEG_PER_RAD
}

impl Encoder {
    /// Encode a (center, neighbor) pair. `refl` is the neighbor's reflectance.
    pub fn encode(&self, center: [f64; 3], neighbor: [f64; 3], refl: f64) -> Result<EncodedFeature> {
        let mut geo = [0.0; 6];
        let len = self.geo_into(center, neighbor, &mut geo)?;
        Ok(EncodedFeature { geo, len: len as u8, reflectance: refl })
    }

    /// Compute just the geometric block into `out[..geo_len]`; returns the length.
    pub fn geo_into(&self, center: [f64; 3], neighbor: [f64; 3], out: &mut [f64; 6]) -> Result<usize> {
        let d = sub3(center, neighbor);
        match self.kind {
            EncoderKind::Relative => {
                out[..3].copy_from_slice(&d);
                Ok(3)
            }
            EncoderKind::Absolute => {
                for k in 0..3 {
                    out[k] = d[k].abs();
                }
                Ok(3)
            }
            EncoderKind::Euclidean => {
                for k in 0..3 {
                    out[k] = d[k] * d[k];
                }
                Ok(3)
            }
            EncoderKind::Angle => {
                let a = self.angles(center, neighbor)?;
                out[..3].copy_from_slice(&a);
                Ok(3)
            }
            EncoderKind::AngleRelative => {
                let a = self.angles(center, neighbor)?;
                out[..3].copy_from_slice(&a);
                out[3..6].copy_from_slice(&d);
                Ok(6)
            }
        }
    }

    /// The three angle measures (optionally normalized by 180):
    /// a1 between the two origin rays, a2 between the difference direction and
    /// the neighbor ray, a3 = 180 - (a1 + a2), applied literally (it can be
    /// negative). Coincident points return (0, 0, 180).
    fn angles(&self, center: [f64; 3], neighbor: [f64; 3], ) -> Result<[f64; 3]> {
        let n_i = unit_direction(center)?;
        let n_j = unit_direction(neighbor)?;
        let scale = if self.normalize_angles { 1.0 / 180.0 } else { 1.0 };
        if center == neighbor {
            return Ok([0.0, 0.0, 180.0 * scale]);
        }
        let r_ij = normalize_diff(center, neighbor);
        let a1 = angle_between_deg(n_i, n_j);
        let a2 = angle_between_deg(r_ij, n_j);
        let a3 = 180.0 - (a1 + a2);
        Ok([a1 * scale, a2 * scale, a3 * scale])
    }

    /// Chain-rule gradient of `geo` with respect to the center position:
    /// returns J^T * grad_geo. Needed because the GNN feeds an offset-corrected
    /// center into the encoder. The neighbor position is constant in every
    /// call site, so no neighbor gradient is exposed.
    pub fn backward_center(
        &self,
        center: [f64; 3],
        neighbor: [f64; 3],
        grad_geo: &[f64],
    ) -> Result<[f64; 3]> {
        debug_assert_eq!(grad_geo.len(), self.geo_len());
        let d = sub3(center, neighbor);
        let mut grad = [0.0; 3];
        match self.kind {
            EncoderKind::Relative => {
                grad.copy_from_slice(&grad_geo[..3]);
            }
            EncoderKind::Absolute => {
                for k in 0..3 {
                    // subgradient 0 at d = 0
                    grad[k] = grad_geo[k] * sign0(d[k]);
                }
            }
            EncoderKind::Euclidean => {
                for k in 0..3 {
                    grad[k] = grad_geo[k] * 2.0 * d[k];
                }
            }
            EncoderKind::Angle => {
                grad = self.angles_backward(center, neighbor, &grad_geo[..3])?;
            }
            EncoderKind::AngleRelative => {
                grad = self.angles_backward(center, neighbor, &grad_geo[..3])?;
                for k in 0..3 {
                    grad[k] += grad_geo[3 + k];
                }
            }
        }
        Ok(grad)
    }

    fn angles_backward(
        &self,
        center: [f64; 3],
        neighbor: [f64; 3],
        g: &[f64],
    ) -> Result<[f64; 3]> {
        let n_i = unit_direction(center)?;
        let n_j = unit_direction(neighbor)?;
        if center == neighbor {
            return Ok([0.0, 0.0, 0.0]); // constant branch
        }
        let scale = if self.normalize_angles { 1.0 / 180.0 } else { 1.0 };
        // a3 = 180 - a1 - a2, so upstream gradients combine as g1 - g3, g2 - g3.
        let g1 = (g[0] - g[2]) * scale;
        let g2 = (g[1] - g[2]) * scale;

        let mut grad = [0.0; 3];
        let c1 = dot3(n_i, n_j);
        if c1.abs() < 1.0 {
            // d a1 / d center = deg * (-1/sqrt(1-c^2)) * (n_j - c n_i) / |center|
            let f = -DEG_PER_RAD / (1.0 - c1 * c1).sqrt() / norm3(center);
            for k in 0..3 {
                grad[k] += g1 * f * (n_j[k] - c1 * n_i[k]);
            }
        }
        let diff = sub3(center, neighbor);
        let dn = norm3(diff);
        let r = [diff[0] / dn, diff[1] / dn, diff[2] / dn];
        let c2 = dot3(r, n_j);
        if c2.abs() < 1.0 {
            let f = -DEG_PER_RAD / (1.0 - c2 * c2).sqrt() / dn;
            for k in 0..3 {
                grad[k] += g2 * f * (n_j[k] - c2 * r[k]);
            }
        }
        Ok(grad)
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn normalize_diff(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let d = sub3(a, b);
    let n = norm3(d);
    [d[0] / n, d[1] / n, d[2] / n]
}
