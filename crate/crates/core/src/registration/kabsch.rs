use nalgebra::Matrix3;

use crate::geometry::{RigidTransform, Vec3};

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (SVD of the
/// cross-covariance, reflection-corrected). Returns `None` for fewer than 3
/// pairs or a degenerate (collinear) configuration.
pub fn best_fit_transform(src: &[Vec3], dst: &[Vec3]) -> Option<RigidTransform> {
    let n = src.len().min(dst.len());
    if n < 3 {
        return None;
    }
    let src_mean = src[..n].iter().sum::<Vec3>() / n as f64;
    let dst_mean = dst[..n].iter().sum::<Vec3>() / n as f64;
    let mut h = Matrix3::zeros();
    for (s, d) in src[..n].iter().zip(&dst[..n]) {
        h += (s - src_mean) * (d - dst_mean).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return None;
    }
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let r = v * correction * u.transpose();
    let t = dst_mean - r * src_mean;
    Some(RigidTransform::from_matrix(&r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    #[test]
    fn recovers_known_motion() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(0.3, 0.1, 0.7),
        ];
        let truth = RigidTransform::new(UnitQuaternion::from_euler_angles(0.4, -1.2, 2.0), Vec3::new(0.5, -1.0, 3.0));
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = best_fit_transform(&src, &dst).unwrap();
        assert!(est.rotation_angle_to(&truth) < 1e-9);
        assert!(est.translation_distance(&truth) < 1e-9);
        let r = est.rotation_matrix();
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn planar_points_stay_proper() {
        // four coplanar points mapped by a rotation: must not return a reflection
        let src = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)];
        let truth = RigidTransform::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 2.5);
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = best_fit_transform(&src, &dst).unwrap();
        assert!(est.rotation_angle_to(&truth) < 1e-9);
    }

    #[test]
    fn collinear_is_rejected() {
        let src = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(best_fit_transform(&src, &src).is_none());
    }
}
