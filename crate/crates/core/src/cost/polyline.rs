//! Exact point-to-polyline distance with case analysis for derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// A lane centerline given as an ordered list of 2-D points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
}

/// Where the closest point landed, which determines the curvature of the
/// distance function.
#[derive(Debug, Clone, Copy)]
pub enum ClosestKind {
    /// Interior of a segment: distance is affine in the normal direction.
    SegmentInterior {
        /// Unit normal from the segment towards the query point.
        normal: [f64; 2],
    },
    /// Terminal endpoint of the polyline: distance is a point distance.
    Endpoint { vertex: [f64; 2] },
}

#[derive(Debug, Clone, Copy)]
pub struct ClosestPoint {
    pub distance: f64,
    pub point: [f64; 2],
    pub kind: ClosestKind,
}

const COLLINEAR_TOL: f64 = 1e-9;

impl Polyline {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(GameError::InvalidArgument(
                "polyline needs at least 2 points".into(),
            ));
        }
        for w in points.windows(2) {
            let dx = w[1][0] - w[0][0];
            let dy = w[1][1] - w[0][1];
            if dx.hypot(dy) <= 0.0 {
                return Err(GameError::InvalidArgument(
                    "polyline has a zero-length segment".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    /// Closest point on the polyline to `p`. Projections landing exactly on an
    /// interior vertex with a genuine kink raise `DegenerateGeometry`: the
    /// distance field has no well-defined curvature there.
    pub fn closest(&self, p: [f64; 2]) -> Result<ClosestPoint> {
        let mut best_d2 = f64::INFINITY;
        // (segment index, clamped parameter in [0,1])
        let mut best: (usize, f64) = (0, 0.0);
        for (k, w) in self.points.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let s = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
            let c = [a[0] + s * ab[0], a[1] + s * ab[1]];
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = (k, s);
            }
        }
        let (k, s) = best;
        let last_seg = self.points.len() - 2;
        let at_start_vertex = s == 0.0;
        let at_end_vertex = s == 1.0;

        if (at_start_vertex && k > 0) || (at_end_vertex && k < last_seg) {
            // Closest point is an interior vertex. Collinear joints are fine,
            // actual kinks are not.
            let j = if at_start_vertex { k } else { k + 1 };
            let t_prev = self.tangent(j - 1);
            let t_next = self.tangent(j);
            let cross = t_prev[0] * t_next[1] - t_prev[1] * t_next[0];
            let dot = t_prev[0] * t_next[0] + t_prev[1] * t_next[1];
            if cross.abs() > COLLINEAR_TOL || dot < 0.0 {
                return Err(GameError::DegenerateGeometry(format!(
                    "closest lane point is the kink at vertex {j}"
                )));
            }
        }

        let a = self.points[k];
        let b = self.points[k + 1];
        let c = [
            a[0] + s * (b[0] - a[0]),
            a[1] + s * (b[1] - a[1]),
        ];
        let distance = best_d2.sqrt();

        let kind = if (at_start_vertex && k == 0) || (at_end_vertex && k == last_seg) {
            ClosestKind::Endpoint { vertex: c }
        } else {
            let t = self.tangent(k);
            // Normal pointing from the segment towards p; undefined on the
            // segment itself, where the caller only needs n n^T (sign-free).
            let n = if distance > 0.0 {
                [(p[0] - c[0]) / distance, (p[1] - c[1]) / distance]
            } else {
                [-t[1], t[0]]
            };
            ClosestKind::SegmentInterior { normal: n }
        };
        Ok(ClosestPoint {
            distance,
            point: c,
            kind,
        })
    }

    fn tangent(&self, seg: usize) -> [f64; 2] {
        let a = self.points[seg];
        let b = self.points[seg + 1];
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let len = dx.hypot(dy);
        [dx / len, dy / len]
    }
}
