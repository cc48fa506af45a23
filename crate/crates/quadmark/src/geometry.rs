//! Fixed-size vector/matrix math and the triangle-frame pose machinery.
//!
//! A marker pose is recovered by building an orthonormal [`Frame`] on a
//! reference triangle and on the measured triangle, both anchored the same
//! way, and reading the rigid transform off the two frames. The rotation part
//! can be packed together with the translation into the 4x4 twist-style
//! [`Theta`] matrix used by the serialization layer.

use thiserror::Error;

/// Orthonormality / determinant tolerance for rotation validity checks.
pub const ROTATION_TOL: f64 = 1e-9;
/// Cross-product norm below which a triangle counts as degenerate.
pub const DEGENERACY_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate triangle: {0}")]
    DegenerateTriangle(&'static str),
    #[error("singular matrix (|det| = {det:.3e})")]
    SingularMatrix { det: f64 },
    #[error("not a rotation matrix: {0}")]
    NotARotation(&'static str),
    #[error("malformed theta matrix: {0}")]
    MalformedTheta(&'static str),
    #[error("invalid anchor: {0}")]
    InvalidAnchor(&'static str),
}

/// 3-vector of finite doubles. Positions are in meters, directions unitless.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` when shorter than `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        if n <= eps {
            None
        } else {
            Some(self / n)
        }
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// 3x3 matrix, row-major: `m[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3 {
            m: [[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]],
        }
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3::from_rows(
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        )
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// General inverse via the adjugate. Fails when `|det| < 1e-12`.
    ///
    /// Frame orientation matrices are orthonormal and invert by transpose;
    /// this path exists for arbitrary callers and reports singularity
    /// explicitly instead of returning garbage.
    pub fn inverse(&self) -> Result<Mat3, GeometryError> {
        let det = self.det();
        if det.abs() < 1e-12 {
            return Err(GeometryError::SingularMatrix { det });
        }
        let m = &self.m;
        let inv_det = 1.0 / det;
        Ok(Mat3::from_rows(
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
            ],
        ))
    }

    /// Largest absolute deviation of `R^T R` from identity, plus det error.
    pub fn rotation_defect(&self) -> f64 {
        let g = self.transpose() * *self;
        let mut worst: f64 = (self.det() - 1.0).abs();
        for r in 0..3 {
            for c in 0..3 {
                let id = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((g.m[r][c] - id).abs());
            }
        }
        worst
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        self.rotation_defect() <= tol
    }

    /// Closest rotation in the Frobenius norm, via the symmetric
    /// eigendecomposition of `M^T M`. Input must be well conditioned.
    pub fn nearest_rotation(&self) -> Mat3 {
        let s = self.transpose() * *self;
        let (mut v, mut d) = jacobi_eigen_symmetric(&s);
        for e in d.iter_mut() {
            *e = e.max(0.0);
        }
        if self.det() < 0.0 {
            // Flip the column paired with the smallest singular value so the
            // result lands on det +1.
            let mut k = 0;
            for j in 1..3 {
                if d[j] < d[k] {
                    k = j;
                }
            }
            for r in 0..3 {
                v.m[r][k] = -v.m[r][k];
            }
        }
        // R = M * V * diag(1/sqrt(d)) * V^T
        let mut inv_sqrt = Mat3 { m: [[0.0; 3]; 3] };
        for (j, dj) in d.iter().enumerate() {
            inv_sqrt.m[j][j] = 1.0 / dj.sqrt().max(1e-300);
        }
        *self * (v * inv_sqrt * v.transpose())
    }
}

impl std::ops::Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell =
                    self.m[r][0] * o.m[0][c] + self.m[r][1] * o.m[1][c] + self.m[r][2] * o.m[2][c];
            }
        }
        Mat3 { m: out }
    }
}

impl std::ops::Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
/// Returns `(V, d)` with `S = V diag(d) V^T`, `V` orthonormal.
fn jacobi_eigen_symmetric(s: &Mat3) -> (Mat3, [f64; 3]) {
    let mut a = *s;
    let mut v = Mat3::IDENTITY;
    for _ in 0..50 {
        // largest off-diagonal element
        let (mut p, mut q, mut max) = (0usize, 1usize, 0.0f64);
        for i in 0..3 {
            for j in (i + 1)..3 {
                if a.m[i][j].abs() > max {
                    max = a.m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if max < 1e-15 {
            break;
        }
        let theta = 0.5 * f64::atan2(2.0 * a.m[p][q], a.m[p][p] - a.m[q][q]);
        let (sin, cos) = theta.sin_cos();
        let mut rot = Mat3::IDENTITY;
        rot.m[p][p] = cos;
        rot.m[q][q] = cos;
        rot.m[p][q] = -sin;
        rot.m[q][p] = sin;
        a = rot.transpose() * a * rot;
        v = v * rot;
    }
    (v, [a.m[0][0], a.m[1][1], a.m[2][2]])
}

/// Triangle in 3-space. Degeneracy is checked where the triangle is consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub p0: Vec3,
    pub p1: Vec3,
    pub p2: Vec3,
}

impl Triangle {
    pub fn new(p0: Vec3, p1: Vec3, p2: Vec3) -> Self {
        Triangle { p0, p1, p2 }
    }

    pub fn vertex(&self, i: usize) -> Vec3 {
        match i {
            0 => self.p0,
            1 => self.p1,
            _ => self.p2,
        }
    }

    /// Unnormalized plane normal `(p1 - p0) x (p2 - p0)`.
    pub fn normal_raw(&self) -> Vec3 {
        (self.p1 - self.p0).cross(self.p2 - self.p0)
    }

    pub fn centroid(&self) -> Vec3 {
        (self.p0 + self.p1 + self.p2) / 3.0
    }
}

/// Which characteristic point of a triangle seeds the frame origin, and which
/// vertex the first axis points at.
///
/// Edge `i` connects vertices `i` and `(i + 1) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AnchorChoice {
    /// Origin at vertex `i`, first axis toward vertex `j` (`i != j`).
    Vertex(usize, usize),
    /// Origin at the centroid, first axis toward vertex `j`.
    Centroid(usize),
    /// Origin at the midpoint of edge `i`, first axis toward vertex `j`.
    EdgeMidpoint(usize, usize),
}

impl AnchorChoice {
    fn validate(&self) -> Result<(), GeometryError> {
        match *self {
            AnchorChoice::Vertex(i, j) => {
                if i > 2 || j > 2 {
                    Err(GeometryError::InvalidAnchor("vertex index out of range"))
                } else if i == j {
                    Err(GeometryError::InvalidAnchor(
                        "origin and target vertex coincide",
                    ))
                } else {
                    Ok(())
                }
            }
            AnchorChoice::Centroid(j) => {
                if j > 2 {
                    Err(GeometryError::InvalidAnchor("vertex index out of range"))
                } else {
                    Ok(())
                }
            }
            AnchorChoice::EdgeMidpoint(i, j) => {
                if i > 2 || j > 2 {
                    Err(GeometryError::InvalidAnchor("index out of range"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn target_vertex(&self) -> usize {
        match *self {
            AnchorChoice::Vertex(_, j) => j,
            AnchorChoice::Centroid(j) => j,
            AnchorChoice::EdgeMidpoint(_, j) => j,
        }
    }
}

impl Default for AnchorChoice {
    fn default() -> Self {
        AnchorChoice::Vertex(0, 1)
    }
}

/// Origin plus three orthonormal, right-handed axes.
///
/// `axis1` lies in the triangle plane, `axis2` is the plane normal and
/// `axis3 = axis1 x axis2`, so `det[axis1 axis2 axis3] = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec3,
    pub axis1: Vec3,
    pub axis2: Vec3,
    pub axis3: Vec3,
}

impl Frame {
    /// Orientation matrix with the axes as columns.
    pub fn orientation_matrix(&self) -> Mat3 {
        Mat3::from_cols(self.axis1, self.axis2, self.axis3)
    }

    /// Worst deviation from unit length / orthogonality / right-handedness.
    pub fn orthonormality_defect(&self) -> f64 {
        self.orientation_matrix().rotation_defect()
    }
}

/// Build the coordinate frame of a triangle for a given anchor choice.
///
/// The origin sits on the chosen characteristic point, `axis1` points at the
/// chosen target vertex, `axis2` is the unit triangle normal and `axis3`
/// completes a right-handed basis.
pub fn build_frame(tri: &Triangle, anchor: AnchorChoice) -> Result<Frame, GeometryError> {
    anchor.validate()?;
    let normal_raw = tri.normal_raw();
    let axis2 = normal_raw
        .normalized(DEGENERACY_EPS)
        .ok_or(GeometryError::DegenerateTriangle(
            "triangle area below threshold",
        ))?;
    let origin = match anchor {
        AnchorChoice::Vertex(i, _) => tri.vertex(i),
        AnchorChoice::Centroid(_) => tri.centroid(),
        AnchorChoice::EdgeMidpoint(i, _) => (tri.vertex(i) + tri.vertex((i + 1) % 3)) / 2.0,
    };
    let target = tri.vertex(anchor.target_vertex());
    let axis1 = (target - origin)
        .normalized(1e-12)
        .ok_or(GeometryError::DegenerateTriangle(
            "first axis has zero length",
        ))?;
    let axis3 = axis1.cross(axis2);
    Ok(Frame {
        origin,
        axis1,
        axis2,
        axis3,
    })
}

/// Rotation carrying frame `a` onto frame `b`: the product of b's orientation
/// matrix with the inverse of a's.
///
/// Frame orientation matrices are orthonormal, so the inverse is taken as the
/// transpose here; [`Mat3::inverse`] covers general matrices.
pub fn frame_rotation(a: &Frame, b: &Frame) -> Mat3 {
    b.orientation_matrix() * a.orientation_matrix().transpose()
}

/// Rotation by angle `|r_vec|` around axis `r_vec / |r_vec|`.
/// Inputs shorter than 1e-9 return the identity.
pub fn rodrigues(r_vec: Vec3) -> Mat3 {
    let angle = r_vec.norm();
    if angle < 1e-9 {
        return Mat3::IDENTITY;
    }
    let a = r_vec / angle;
    let k = skew(a);
    let k2 = k * k;
    let (sin, cos) = angle.sin_cos();
    let mut out = Mat3::IDENTITY;
    for r in 0..3 {
        for c in 0..3 {
            out.m[r][c] += sin * k.m[r][c] + (1.0 - cos) * k2.m[r][c];
        }
    }
    out
}

/// Skew-symmetric cross-product matrix of `v`.
pub fn skew(v: Vec3) -> Mat3 {
    Mat3::from_rows([0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0])
}

/// Recover `(unit axis, angle in [0, pi])` from a rotation matrix.
///
/// Zero rotation reports the conventional axis `(0, 0, 1)`. Angles at or near
/// pi go through the symmetrized `(R + I) / 2` branch, picking the largest
/// diagonal element to seed the axis.
pub fn axis_angle_from_rotation(r: &Mat3) -> Result<(Vec3, f64), GeometryError> {
    if !r.is_rotation(1e-6) {
        return Err(GeometryError::NotARotation(
            "input fails orthonormality or determinant check",
        ));
    }
    let w = Vec3::new(
        r.m[2][1] - r.m[1][2],
        r.m[0][2] - r.m[2][0],
        r.m[1][0] - r.m[0][1],
    );
    let sin = w.norm() / 2.0;
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = sin.atan2(cos);
    if angle < 1e-12 {
        return Ok((Vec3::new(0.0, 0.0, 1.0), 0.0));
    }
    if angle > std::f64::consts::PI - 1e-4 {
        // (R + I) / 2 equals axis*axis^T at angle pi; symmetrizing cancels the
        // residual skew part for angles slightly below pi.
        let mut b = [[0.0; 3]; 3];
        for (i, row) in b.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let id = if i == j { 1.0 } else { 0.0 };
                *cell = ((r.m[i][j] + r.m[j][i]) / 2.0 + id) / 2.0;
            }
        }
        let mut k = 0;
        for j in 1..3 {
            if b[j][j] > b[k][k] {
                k = j;
            }
        }
        let ak = b[k][k].max(0.0).sqrt();
        let mut axis = [0.0; 3];
        axis[k] = ak;
        for j in 0..3 {
            if j != k && ak > 0.0 {
                axis[j] = b[k][j] / ak;
            }
        }
        let mut axis = Vec3::new(axis[0], axis[1], axis[2])
            .normalized(1e-300)
            .expect("axis from pi-branch cannot vanish");
        if w.norm() > 1e-12 {
            if axis.dot(w) < 0.0 {
                axis = -axis;
            }
        } else {
            // Exactly pi: axis sign is arbitrary, fix the largest component
            // positive for determinism.
            let comps = [axis.x, axis.y, axis.z];
            let mut big = 0;
            for j in 1..3 {
                if comps[j].abs() > comps[big].abs() {
                    big = j;
                }
            }
            if comps[big] < 0.0 {
                axis = -axis;
            }
        }
        return Ok((axis, angle));
    }
    Ok((w / (2.0 * sin), angle))
}

/// Rigid transform mapping marker-frame points into camera-frame points:
/// `p_camera = rotation * p_marker + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

/// 4x4 pose packing: skew-symmetric rotation-vector block plus a translation
/// column, bottom row all zero.
///
/// Layout, for rotation vector `(r_x, r_y, r_z)` (unit axis times angle in
/// radians) and translation `(t_x, t_y, t_z)`:
///
/// ```text
/// [    0  -r_z   r_y   t_x ]
/// [  r_z     0  -r_x   t_y ]
/// [ -r_y   r_x     0   t_z ]
/// [    0     0     0     0 ]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub m: [[f64; 4]; 4],
}

impl Theta {
    pub fn from_parts(r_vec: Vec3, t: Vec3) -> Self {
        Theta {
            m: [
                [0.0, -r_vec.z, r_vec.y, t.x],
                [r_vec.z, 0.0, -r_vec.x, t.y],
                [-r_vec.y, r_vec.x, 0.0, t.z],
                [0.0, 0.0, 0.0, 0.0],
            ],
        }
    }

    /// Row-major 16-element view, as serialized.
    pub fn to_flat(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.m[r][c];
            }
        }
        out
    }

    pub fn from_flat(v: &[f64; 16]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = v[r * 4 + c];
            }
        }
        Theta { m }
    }

    #[allow(clippy::needless_range_loop)]
    fn validate(&self) -> Result<(), GeometryError> {
        let m = &self.m;
        for i in 0..3 {
            if m[i][i].abs() > 1e-9 {
                return Err(GeometryError::MalformedTheta(
                    "nonzero diagonal in skew block",
                ));
            }
            for j in (i + 1)..3 {
                if (m[i][j] + m[j][i]).abs() > 1e-9 {
                    return Err(GeometryError::MalformedTheta("skew symmetry violated"));
                }
            }
        }
        if m[3].iter().any(|v| v.abs() > 1e-9) {
            return Err(GeometryError::MalformedTheta("bottom row not zero"));
        }
        Ok(())
    }

    pub fn rotation_vector(&self) -> Vec3 {
        Vec3::new(self.m[2][1], self.m[0][2], self.m[1][0])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.m[0][3], self.m[1][3], self.m[2][3])
    }
}

/// Pack a pose into its [`Theta`] form.
pub fn theta_from_pose(p: &Pose) -> Result<Theta, GeometryError> {
    let (axis, angle) = axis_angle_from_rotation(&p.rotation)?;
    Ok(Theta::from_parts(axis * angle, p.translation))
}

/// Expand a [`Theta`] back into a pose. Rejects matrices whose skew block or
/// bottom row deviate beyond 1e-9.
pub fn pose_from_theta(t: &Theta) -> Result<Pose, GeometryError> {
    t.validate()?;
    Ok(Pose::new(rodrigues(t.rotation_vector()), t.translation()))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn approx_vec(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() <= tol, "{a:?} != {b:?}");
    }

    fn approx_mat(a: &Mat3, b: &Mat3, tol: f64) {
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (a.m[r][c] - b.m[r][c]).abs() <= tol,
                    "mismatch at [{r}][{c}]: {a:?} vs {b:?}"
                );
            }
        }
    }

    fn rot_z(angle: f64) -> Mat3 {
        rodrigues(Vec3::new(0.0, 0.0, angle))
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            if let Some(u) = v.normalized(1e-3) {
                return u;
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        rodrigues(random_unit(rng) * (rng.random::<f64>() * PI))
    }

    #[test]
    fn build_frame_vertex_anchor_axes() {
        let tri = Triangle::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        let f = build_frame(&tri, AnchorChoice::Vertex(0, 1)).unwrap();
        approx_vec(f.origin, Vec3::ZERO, 0.0);
        approx_vec(f.axis1, Vec3::new(1.0, 0.0, 0.0), 1e-15);
        approx_vec(f.axis2, Vec3::new(0.0, 0.0, 1.0), 1e-15);
        approx_vec(f.axis3, Vec3::new(0.0, -1.0, 0.0), 1e-15);
        assert!(f.orthonormality_defect() <= 1e-9);
    }

    #[test]
    fn build_frame_rejects_collinear() {
        let tri = Triangle::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        );
        for anchor in [
            AnchorChoice::Vertex(0, 1),
            AnchorChoice::Centroid(0),
            AnchorChoice::EdgeMidpoint(0, 2),
        ] {
            assert!(matches!(
                build_frame(&tri, anchor),
                Err(GeometryError::DegenerateTriangle(_))
            ));
        }
    }

    #[test]
    fn build_frame_centroid_anchor() {
        // Centroid of ((0,0,0),(2,0,0),(0,2,0)) is (2/3, 2/3, 0); the first
        // axis toward vertex 0 normalizes to (-sqrt(2)/2, -sqrt(2)/2, 0).
        let tri = Triangle::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
        );
        let f = build_frame(&tri, AnchorChoice::Centroid(0)).unwrap();
        approx_vec(f.origin, Vec3::new(2.0 / 3.0, 2.0 / 3.0, 0.0), 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        approx_vec(f.axis1, Vec3::new(-s, -s, 0.0), 1e-15);
    }

    #[test]
    fn build_frame_rejects_bad_anchor() {
        let tri = Triangle::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        assert!(matches!(
            build_frame(&tri, AnchorChoice::Vertex(1, 1)),
            Err(GeometryError::InvalidAnchor(_))
        ));
        assert!(matches!(
            build_frame(&tri, AnchorChoice::Centroid(5)),
            Err(GeometryError::InvalidAnchor(_))
        ));
    }

    #[test]
    fn frame_rotation_identity_when_frames_match() {
        let tri = Triangle::new(
            Vec3::new(0.1, -0.4, 2.0),
            Vec3::new(1.3, 0.2, 1.7),
            Vec3::new(-0.3, 1.1, 2.4),
        );
        let f = build_frame(&tri, AnchorChoice::Vertex(0, 2)).unwrap();
        approx_mat(&frame_rotation(&f, &f), &Mat3::IDENTITY, 1e-12);
    }

    #[test]
    fn frame_rotation_quarter_turn() {
        let tri = Triangle::new(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        let a = build_frame(&tri, AnchorChoice::Vertex(0, 1)).unwrap();
        let rz = rot_z(FRAC_PI_2);
        let b = Frame {
            origin: a.origin,
            axis1: rz * a.axis1,
            axis2: rz * a.axis2,
            axis3: rz * a.axis3,
        };
        let r = frame_rotation(&a, &b);
        approx_mat(
            &r,
            &Mat3::from_rows([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            1e-12,
        );
        // B = R * A restated as a product check.
        approx_mat(&(r * a.orientation_matrix()), &b.orientation_matrix(), 1e-9);
    }

    #[test]
    fn general_inverse_matches_transpose_on_frames_and_rejects_singular() {
        let tri = Triangle::new(
            Vec3::new(0.3, 0.1, -0.2),
            Vec3::new(1.1, 0.4, 0.3),
            Vec3::new(0.2, 1.5, 0.1),
        );
        let f = build_frame(&tri, AnchorChoice::EdgeMidpoint(1, 0)).unwrap();
        let m = f.orientation_matrix();
        approx_mat(&m.inverse().unwrap(), &m.transpose(), 1e-12);

        let zero = Mat3 { m: [[0.0; 3]; 3] };
        assert!(matches!(
            zero.inverse(),
            Err(GeometryError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn rodrigues_zero_and_quarter_turn() {
        approx_mat(&rodrigues(Vec3::ZERO), &Mat3::IDENTITY, 0.0);
        approx_mat(
            &rodrigues(Vec3::new(0.0, 0.0, FRAC_PI_2)),
            &Mat3::from_rows([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            1e-12,
        );
    }

    #[test]
    fn rodrigues_always_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r = rodrigues(random_unit(&mut rng) * (rng.random::<f64>() * 10.0 - 5.0));
            assert!(r.rotation_defect() <= 1e-12);
        }
    }

    #[test]
    fn axis_angle_identity_convention() {
        let (axis, angle) = axis_angle_from_rotation(&Mat3::IDENTITY).unwrap();
        approx_vec(axis, Vec3::new(0.0, 0.0, 1.0), 0.0);
        assert_eq!(angle, 0.0);
    }

    #[test]
    fn axis_angle_quarter_turn() {
        let r = rot_z(FRAC_PI_2);
        let (axis, angle) = axis_angle_from_rotation(&r).unwrap();
        approx_vec(axis, Vec3::new(0.0, 0.0, 1.0), 1e-12);
        assert!((angle - FRAC_PI_2).abs() <= 1e-12);
    }

    #[test]
    fn axis_angle_pi_branch() {
        let r = Mat3::from_rows([1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]);
        let (axis, angle) = axis_angle_from_rotation(&r).unwrap();
        approx_vec(axis, Vec3::new(1.0, 0.0, 0.0), 1e-12);
        assert!((angle - PI).abs() <= 1e-12);
    }

    #[test]
    fn axis_angle_rejects_non_rotation() {
        let m = Mat3::from_rows([1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        assert!(matches!(
            axis_angle_from_rotation(&m),
            Err(GeometryError::NotARotation(_))
        ));
    }

    #[test]
    fn axis_angle_roundtrip_including_near_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..500 {
            let axis = random_unit(&mut rng);
            // Bias a fifth of the samples into the near-pi region.
            let angle = if i % 5 == 0 {
                PI - rng.random::<f64>() * 1e-3
            } else {
                rng.random::<f64>() * PI
            };
            let r = rodrigues(axis * angle);
            let (axis2, angle2) = axis_angle_from_rotation(&r).unwrap();
            let r2 = rodrigues(axis2 * angle2);
            approx_mat(&r2, &r, 1e-6);
        }
    }

    #[test]
    fn theta_zero_pose() {
        let t = theta_from_pose(&Pose::IDENTITY).unwrap();
        assert_eq!(t.to_flat(), [0.0; 16]);
    }

    #[test]
    fn theta_layout_quarter_turn_example() {
        let pose = Pose::new(rot_z(FRAC_PI_2), Vec3::new(1.0, 2.0, 3.0));
        let t = theta_from_pose(&pose).unwrap();
        let expected = [
            [0.0, -FRAC_PI_2, 0.0, 1.0],
            [FRAC_PI_2, 0.0, 0.0, 2.0],
            [0.0, 0.0, 0.0, 3.0],
            [0.0, 0.0, 0.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert!(
                    (t.m[r][c] - expected[r][c]).abs() <= 1e-12,
                    "theta[{r}][{c}] = {}",
                    t.m[r][c]
                );
            }
        }
    }

    #[test]
    fn theta_roundtrip_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let pose = Pose::new(
                random_rotation(&mut rng),
                Vec3::new(
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() * 4.0 - 2.0,
                ),
            );
            let back = pose_from_theta(&theta_from_pose(&pose).unwrap()).unwrap();
            approx_mat(&back.rotation, &pose.rotation, 1e-9);
            approx_vec(back.translation, pose.translation, 1e-9);
        }
    }

    #[test]
    fn theta_rejects_broken_skew() {
        let mut t = Theta::from_parts(Vec3::new(0.1, 0.2, 0.3), Vec3::ZERO);
        t.m[0][1] += 1e-6;
        assert!(matches!(
            pose_from_theta(&t),
            Err(GeometryError::MalformedTheta(_))
        ));
        let mut t2 = Theta::from_parts(Vec3::ZERO, Vec3::ZERO);
        t2.m[3][3] = 1.0;
        assert!(matches!(
            pose_from_theta(&t2),
            Err(GeometryError::MalformedTheta(_))
        ));
    }

    #[test]
    fn nearest_rotation_projects_perturbed_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let mut noisy = r;
            for row in noisy.m.iter_mut() {
                for v in row.iter_mut() {
                    *v += (rng.random::<f64>() - 0.5) * 1e-4;
                }
            }
            let fixed = noisy.nearest_rotation();
            assert!(fixed.rotation_defect() <= 1e-12);
            approx_mat(&fixed, &r, 1e-3);
        }
    }

    proptest::proptest! {
        #[test]
        fn rodrigues_axis_angle_roundtrip_prop(
            ax in -1.0f64..1.0,
            ay in -1.0f64..1.0,
            az in -1.0f64..1.0,
            angle in 0.0f64..std::f64::consts::PI,
        ) {
            proptest::prop_assume!(Vec3::new(ax, ay, az).norm() > 1e-3);
            let axis = Vec3::new(ax, ay, az).normalized(1e-3).unwrap();
            let r = rodrigues(axis * angle);
            let (axis2, angle2) = axis_angle_from_rotation(&r).unwrap();
            let r2 = rodrigues(axis2 * angle2);
            for i in 0..3 {
                for j in 0..3 {
                    proptest::prop_assert!((r.m[i][j] - r2.m[i][j]).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn frame_rotation_is_always_a_rotation_prop(
            coords in proptest::collection::vec(-1.0f64..1.0, 18),
        ) {
            let v = |i: usize| Vec3::new(coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]);
            let t1 = Triangle::new(v(0), v(1), v(2));
            let t2 = Triangle::new(v(3), v(4), v(5));
            let anchor = AnchorChoice::Vertex(0, 1);
            if let (Ok(a), Ok(b)) = (build_frame(&t1, anchor), build_frame(&t2, anchor)) {
                let r = frame_rotation(&a, &b);
                proptest::prop_assert!(r.rotation_defect() <= 1e-9);
                // B = R * A restated
                let prod = r * a.orientation_matrix();
                let bm = b.orientation_matrix();
                for i in 0..3 {
                    for j in 0..3 {
                        proptest::prop_assert!((prod.m[i][j] - bm.m[i][j]).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn frame_axes_invariant_under_scaling_about_origin() {
        let tri = Triangle::new(
            Vec3::new(0.2, 0.0, 1.0),
            Vec3::new(1.0, 0.3, 0.9),
            Vec3::new(0.1, 1.2, 1.4),
        );
        for anchor in [
            AnchorChoice::Vertex(0, 1),
            AnchorChoice::Centroid(2),
            AnchorChoice::EdgeMidpoint(2, 1),
        ] {
            let f = build_frame(&tri, anchor).unwrap();
            for scale in [0.25, 4.0] {
                let scaled = Triangle::new(
                    f.origin + (tri.p0 - f.origin) * scale,
                    f.origin + (tri.p1 - f.origin) * scale,
                    f.origin + (tri.p2 - f.origin) * scale,
                );
                let g = build_frame(&scaled, anchor).unwrap();
                approx_vec(g.axis1, f.axis1, 1e-12);
                approx_vec(g.axis2, f.axis2, 1e-12);
                approx_vec(g.axis3, f.axis3, 1e-12);
                approx_vec(g.origin, f.origin, 1e-12);
            }
        }
    }
}
