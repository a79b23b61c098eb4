//! Rotation constructions and their analytic derivatives: the 6D rotation
//! representation (Gram-Schmidt of two column triples) and axis-angle via
//! Rodrigues, both with closed-form Jacobians and series fallbacks near the
//! small-angle limit.

use crate::{Mat3, Real, Vec3};

use super::KinematicsError;

/// Norm below which the first triple of a 6D rotation input is degenerate.
const DEGENERATE_EPS: Real = 1e-8;

/// Angle below which Rodrigues coefficients switch to their Taylor series.
const SMALL_ANGLE: Real = 1e-4;

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Builds a rotation matrix from the 6D representation by Gram-Schmidt:
/// the first column is the normalized first triple, the second column the
/// normalized rejection of the second triple, the third their cross
/// product. Scale-invariant and continuous away from degeneracy.
pub fn rot6d_to_matrix(six: &[Real; 6]) -> Result<Mat3, KinematicsError> {
    let a = Vec3::new(six[0], six[1], six[2]);
    let b = Vec3::new(six[3], six[4], six[5]);
    let na = a.norm();
    if na < DEGENERATE_EPS {
        return Err(KinematicsError::DegenerateRotation(
            "first column triple is near zero".into(),
        ));
    }
    let c1 = a / na;
    let d = b - c1 * c1.dot(&b);
    let nd = d.norm();
    if nd < DEGENERATE_EPS * b.norm().max(1.0) {
        return Err(KinematicsError::DegenerateRotation(
            "second column triple is parallel to the first".into(),
        ));
    }
    let c2 = d / nd;
    let c3 = c1.cross(&c2);
    Ok(Mat3::from_columns(&[c1, c2, c3]))
}

/// `rot6d_to_matrix` together with the partial derivatives of the matrix
/// with respect to each of the six inputs.
pub fn rot6d_with_jacobian(six: &[Real; 6]) -> Result<(Mat3, [Mat3; 6]), KinematicsError> {
    let a = Vec3::new(six[0], six[1], six[2]);
    let b = Vec3::new(six[3], six[4], six[5]);
    let na = a.norm();
    if na < DEGENERATE_EPS {
        return Err(KinematicsError::DegenerateRotation(
            "first column triple is near zero".into(),
        ));
    }
    let c1 = a / na;
    let s = c1.dot(&b);
    let d = b - c1 * s;
    let nd = d.norm();
    if nd < DEGENERATE_EPS * b.norm().max(1.0) {
        return Err(KinematicsError::DegenerateRotation(
            "second column triple is parallel to the first".into(),
        ));
    }
    let c2 = d / nd;
    let c3 = c1.cross(&c2);

    // dc1/da, and the projector that normalizing d introduces.
    let p1 = (Mat3::identity() - c1 * c1.transpose()) / na;
    let p2 = (Mat3::identity() - c2 * c2.transpose()) / nd;
    // d = b - (c1.b) c1 so dd/da = -c1 (b^T p1) - s p1, dd/db = I - c1 c1^T.
    let dd_da = -(c1 * (b.transpose() * p1)) - p1 * s;
    let dd_db = Mat3::identity() - c1 * c1.transpose();
    let dc2_da = p2 * dd_da;
    let dc2_db = p2 * dd_db;

    let k1 = skew(&c1);
    let k2 = skew(&c2);

    let mut jac = [Mat3::zeros(); 6];
    for i in 0..3 {
        let dc1: Vec3 = p1.column(i).into();
        let dc2: Vec3 = dc2_da.column(i).into();
        let dc3 = -k2 * dc1 + k1 * dc2;
        jac[i].set_column(0, &dc1);
        jac[i].set_column(1, &dc2);
        jac[i].set_column(2, &dc3);
    }
    for i in 0..3 {
        let dc2: Vec3 = dc2_db.column(i).into();
        let dc3 = k1 * dc2;
        jac[3 + i].set_column(1, &dc2);
        jac[3 + i].set_column(2, &dc3);
    }
    Ok((Mat3::from_columns(&[c1, c2, c3]), jac))
}

/// Rodrigues coefficients f1 = sin(t)/t and f2 = (1-cos(t))/t^2 with series
/// fallbacks, plus g1 = f1'/t and g2 = f2'/t used by the derivative.
fn rodrigues_coefficients(angle: Real) -> (Real, Real, Real, Real) {
    if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        let f1 = 1.0 - a2 / 6.0 + a2 * a2 / 120.0;
        let f2 = 0.5 - a2 / 24.0 + a2 * a2 / 720.0;
        let g1 = -1.0 / 3.0 + a2 / 30.0 - a2 * a2 / 840.0;
        let g2 = -1.0 / 12.0 + a2 / 180.0 - a2 * a2 / 6720.0;
        (f1, f2, g1, g2)
    } else {
        let (sin, cos) = angle.sin_cos();
        let f1 = sin / angle;
        let f2 = (1.0 - cos) / (angle * angle);
        let g1 = (angle * cos - sin) / (angle * angle * angle);
        let g2 = (angle * sin - 2.0 * (1.0 - cos)) / (angle * angle * angle * angle);
        (f1, f2, g1, g2)
    }
}

/// Axis-angle to rotation matrix (Rodrigues).
pub fn axis_angle_to_matrix(theta: &Vec3) -> Mat3 {
    let angle = theta.norm();
    let (f1, f2, _, _) = rodrigues_coefficients(angle);
    let k = skew(theta);
    Mat3::identity() + k * f1 + k * k * f2
}

/// Rotation matrix plus its partial derivative with respect to each
/// axis-angle component.
pub fn axis_angle_with_jacobian(theta: &Vec3) -> (Mat3, [Mat3; 3]) {
    let angle = theta.norm();
    let (f1, f2, g1, g2) = rodrigues_coefficients(angle);
    let k = skew(theta);
    let k2 = k * k;
    let r = Mat3::identity() + k * f1 + k2 * f2;
    let mut jac = [Mat3::zeros(); 3];
    for a in 0..3 {
        let mut e = Vec3::zeros();
        e[a] = 1.0;
        let ka = skew(&e);
        jac[a] = k * (g1 * theta[a]) + ka * f1 + k2 * (g2 * theta[a]) + (ka * k + k * ka) * f2;
    }
    (r, jac)
}
