use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("correspondences do not determine a unique homography")]
    DegenerateConfiguration,
    #[error("homography is singular")]
    SingularHomography,
    #[error("non-finite coordinate in correspondence {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }
}

/// Projective map `dst ~ H * src`, stored row-major with `h[2][2] = 1`
/// whenever that entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let scale = if m[(2, 2)].abs() > 1e-12 * m.norm() {
            m[(2, 2)]
        } else {
            m.norm()
        };
        if !scale.is_finite() || scale == 0.0 {
            return Err(GeometryError::SingularHomography);
        }
        let n = m / scale;
        let out = Homography {
            h: [
                [n[(0, 0)], n[(0, 1)], n[(0, 2)]],
                [n[(1, 0)], n[(1, 1)], n[(1, 2)]],
                [n[(2, 0)], n[(2, 1)], n[(2, 2)]],
            ],
        };
        if out.h.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::SingularHomography);
        }
        Ok(out)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.h[r][c])
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            h: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let m = self.matrix();
        let det = m.determinant();
        if !det.is_finite() || det.abs() < 1e-12 * m.norm().powi(3) {
            return Err(GeometryError::SingularHomography);
        }
        let inv = m.try_inverse().ok_or(GeometryError::SingularHomography)?;
        Homography::from_matrix(&inv)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let h = &self.h;
        let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
        Point2 {
            x: (h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
            y: (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w,
        }
    }

    pub fn compose(&self, inner: &Homography) -> Result<Homography, GeometryError> {
        Homography::from_matrix(&(self.matrix() * inner.matrix()))
    }

    /// Largest absolute entry difference after both sides are scaled to unit
    /// Frobenius norm with matching sign.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        let normalize = |m: Matrix3<f64>| {
            let n = m / m.norm();
            let pivot = n
                .iter()
                .copied()
                .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if pivot < 0.0 {
                -n
            } else {
                n
            }
        };
        let a = normalize(self.matrix());
        let b = normalize(other.matrix());
        (a - b).iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance from it to sqrt(2).
fn normalizing_transform(pts: &[Point2]) -> Result<Matrix3<f64>, GeometryError> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist.is_nan() || mean_dist <= 1e-12 {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * cx,
        0.0,
        s,
        -s * cy,
        0.0,
        0.0,
        1.0,
    ))
}

fn transform(t: &Matrix3<f64>, p: Point2) -> (f64, f64) {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    (v[0] / v[2], v[1] / v[2])
}

/// Ratio below which the second-smallest singular value counts as zero.
const NULLSPACE_GAP: f64 = 1e-9;

/// Direct linear transform with isotropic normalization of both point sets.
///
/// The null vector of the `2n x 9` design matrix is taken from a full SVD
/// (Householder bidiagonalization followed by implicit QR, as implemented by
/// nalgebra). For four points the matrix is padded with a zero row so the SVD
/// still exposes all nine right singular vectors. A second near-zero singular
/// value means the correspondences admit a family of solutions, which is
/// reported as a degenerate configuration.
pub fn estimate_homography(pairs: &[(Point2, Point2)]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::TooFewPoints(pairs.len()));
    }
    if let Some(i) = pairs
        .iter()
        .position(|(s, d)| ![s.x, s.y, d.x, d.y].iter().all(|v| v.is_finite()))
    {
        return Err(GeometryError::NonFinite(i));
    }
    let src: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let ts = normalizing_transform(&src)?;
    let td = normalizing_transform(&dst)?;

    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (s, d)) in src.iter().zip(&dst).enumerate() {
        let (x, y) = transform(&ts, *s);
        let (u, v) = transform(&td, *d);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[order.len() - 1]];
    let second = svd.singular_values[order[1]];
    if second.is_nan() || second <= NULLSPACE_GAP * largest {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let null = v_t.row(order[0]);
    let hn = Matrix3::from_fn(|r, c| null[3 * r + c]);

    let td_inv = td
        .try_inverse()
        .ok_or(GeometryError::DegenerateConfiguration)?;
    let h = td_inv * hn * ts;
    if h.determinant().abs() < 1e-12 * h.norm().powi(3) {
        return Err(GeometryError::DegenerateConfiguration);
    }
    Homography::from_matrix(&h)
}

/// Mean Euclidean distance between `H * src` and `dst`.
pub fn reprojection_error(h: &Homography, pairs: &[(Point2, Point2)]) -> f64 {
    pairs
        .iter()
        .map(|(s, d)| {
            let p = h.apply(*s);
            ((p.x - d.x).powi(2) + (p.y - d.y).powi(2)).sqrt()
        })
        .sum::<f64>()
        / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(100.0, 0.0),
            Point2::new(100.0, 80.0),
            Point2::new(0.0, 80.0),
        ]
    }

    #[test]
    fn identity_from_four_points() {
        let pairs: Vec<_> = square().into_iter().map(|p| (p, p)).collect();
        let h = estimate_homography(&pairs).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((h.h[r][c] - want).abs() < 1e-12, "{h:?}");
            }
        }
    }

    #[test]
    fn translation() {
        let pairs: Vec<_> = square()
            .into_iter()
            .map(|p| (p, Point2::new(p.x + 10.0, p.y - 5.0)))
            .collect();
        let h = estimate_homography(&pairs).unwrap();
        let want = Homography::translation(10.0, -5.0);
        for r in 0..3 {
            for c in 0..3 {
                assert!((h.h[r][c] - want.h[r][c]).abs() < 1e-10, "{h:?}");
            }
        }
    }

    #[test]
    fn grid_with_collinear_rows_is_fine() {
        let h_true = Homography {
            h: [[1.1, 0.05, 3.0], [-0.02, 0.95, -4.0], [1e-4, -2e-4, 1.0]],
        };
        let mut pairs = Vec::new();
        for i in 0..5 {
            for j in 0..4 {
                let p = Point2::new(20.0 * i as f64, 30.0 * j as f64);
                pairs.push((p, h_true.apply(p)));
            }
        }
        let h = estimate_homography(&pairs).unwrap();
        assert!(h.max_abs_diff(&h_true) < 1e-9);
        assert!(reprojection_error(&h, &pairs) < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let s = square();
        assert_eq!(
            estimate_homography(&[(s[0], s[0]); 3]),
            Err(GeometryError::TooFewPoints(3))
        );
        // Three collinear source points among four.
        let collinear = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 5.0),
        ];
        let pairs: Vec<_> = collinear.iter().zip(&s).map(|(a, b)| (*a, *b)).collect();
        assert_eq!(
            estimate_homography(&pairs),
            Err(GeometryError::DegenerateConfiguration)
        );
        let same = [(s[0], s[1]); 5];
        assert_eq!(
            estimate_homography(&same),
            Err(GeometryError::DegenerateConfiguration)
        );
    }

    #[test]
    fn inverse_round_trip() {
        let h = Homography {
            h: [[0.9, 0.1, 5.0], [0.0, 1.2, -3.0], [1e-4, 0.0, 1.0]],
        };
        let p = Point2::new(40.0, 70.0);
        let q = h.inverse().unwrap().apply(h.apply(p));
        assert!((q.x - p.x).abs() < 1e-9 && (q.y - p.y).abs() < 1e-9);
        let singular = Homography {
            h: [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]],
        };
        assert_eq!(singular.inverse(), Err(GeometryError::SingularHomography));
    }
}
