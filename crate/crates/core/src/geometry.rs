//! Homography estimation and application in normalized image coordinates.

use nalgebra::{DMatrix, Matrix3};

use crate::coords::Pt2;
use crate::error::{Error, Result};

/// Minimum |det| for a usable homography.
const MIN_DET: f64 = 1e-12;
/// Homogeneous scale below which a mapped point is treated as being at infinity.
const MIN_W: f64 = 1e-12;
/// Twice the triangle area (in Hartley-normalized units) below which three
/// points count as collinear.
const COLLINEAR_TOL: f64 = 1e-4;

/// A reference point and the source point it corresponds to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub reference: Pt2,
    pub source: Pt2,
}

impl Correspondence {
    pub fn new(reference: Pt2, source: Pt2) -> Self {
        Self { reference, source }
    }
}

/// 3x3 projective map taking reference points to source points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Wraps a matrix, rescaling so the bottom-right entry is 1 when it is nonzero.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate);
        }
        let mut m = m;
        let s = m[(2, 2)];
        if s.abs() > f64::EPSILON {
            m /= s;
        }
        if m.determinant().abs() <= MIN_DET {
            return Err(Error::Degenerate);
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.m.try_inverse().ok_or(Error::Degenerate)?;
        Self::from_matrix(inv)
    }

    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(self.m * other.m)
    }

    /// Maps `p` and dehomogenizes.
    pub fn apply(&self, p: Pt2) -> Result<Pt2> {
        apply_raw(&self.m, p).ok_or(Error::PointAtInfinity)
    }
}

#[inline]
fn apply_raw(m: &Matrix3<f64>, p: Pt2) -> Option<Pt2> {
    let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
    if w.abs() < MIN_W || !w.is_finite() {
        return None;
    }
    let x = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
    let y = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
    Some(Pt2::new(x, y))
}

/// Hartley normalization: zero centroid, mean distance sqrt(2).
fn normalization(points: impl Iterator<Item = Pt2> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !mean_dist.is_finite() || mean_dist < 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

#[inline]
fn transform(t: &Matrix3<f64>, p: Pt2) -> Pt2 {
    Pt2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

fn has_collinear_triple(pts: &[Pt2]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if cross.abs() < COLLINEAR_TOL {
                    return true;
                }
            }
        }
    }
    false
}

fn all_collinear(pts: &[Pt2]) -> bool {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let min_eig = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
    min_eig < COLLINEAR_TOL * COLLINEAR_TOL
}

/// Direct linear transform with Hartley normalization; least squares when more
/// than four pairs are given. Degenerate configurations return [`Error::Degenerate`].
pub fn fit_homography(pairs: &[Correspondence]) -> Result<Homography> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::NotEnoughMatches { needed: 4, got: n });
    }
    let t_ref = normalization(pairs.iter().map(|c| c.reference)).ok_or(Error::Degenerate)?;
    let t_src = normalization(pairs.iter().map(|c| c.source)).ok_or(Error::Degenerate)?;
    let r: Vec<Pt2> = pairs.iter().map(|c| transform(&t_ref, c.reference)).collect();
    let s: Vec<Pt2> = pairs.iter().map(|c| transform(&t_src, c.source)).collect();

    if n == 4 {
        if has_collinear_triple(&r) || has_collinear_triple(&s) {
            return Err(Error::Degenerate);
        }
    } else if all_collinear(&r) || all_collinear(&s) {
        return Err(Error::Degenerate);
    }

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in r.iter().zip(&s).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r0 = 2 * i;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        let r1 = r0 + 1;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Degenerate)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    let second_smallest = sv[order[7]];
    if !(largest > 0.0) || second_smallest <= 1e-10 * largest {
        return Err(Error::Degenerate);
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_src_inv = t_src.try_inverse().ok_or(Error::Degenerate)?;
    Homography::from_matrix(t_src_inv * hn * t_ref)
}

/// Precomputed forward and inverse maps for transfer-error evaluation.
#[derive(Debug, Clone, Copy)]
pub struct TransferError {
    fwd: Matrix3<f64>,
    bwd: Matrix3<f64>,
}

impl TransferError {
    pub fn new(h: &Homography) -> Result<Self> {
        Ok(Self {
            fwd: h.m,
            bwd: h.inverse()?.m,
        })
    }

    /// RMS of the forward and backward transfer distances; `None` if either
    /// mapping goes to infinity.
    #[inline]
    pub fn eval(&self, c: &Correspondence) -> Option<f64> {
        let f = apply_raw(&self.fwd, c.reference)?;
        let b = apply_raw(&self.bwd, c.source)?;
        let df = (f.x - c.source.x).powi(2) + (f.y - c.source.y).powi(2);
        let db = (b.x - c.reference.x).powi(2) + (b.y - c.reference.y).powi(2);
        Some(((df + db) * 0.5).sqrt())
    }
}

/// Symmetric transfer error of one correspondence.
pub fn symmetric_transfer_error(h: &Homography, c: &Correspondence) -> Result<f64> {
    TransferError::new(h)?.eval(c).ok_or(Error::PointAtInfinity)
}

/// Indices of the correspondences whose symmetric transfer error is below `eps`.
pub fn inliers(h: &Homography, pairs: &[Correspondence], eps: f64) -> Vec<usize> {
    let Ok(te) = TransferError::new(h) else {
        return Vec::new();
    };
    pairs
        .iter()
        .enumerate()
        .filter(|(_, c)| te.eval(c).is_some_and(|e| e < eps))
        .map(|(i, _)| i)
        .collect()
}
