//! Parallel-plane needle guide kinematics and image Jacobians.
//!
//! Two x-y stages sit in parallel planes. Each carries a ball joint; the
//! needle guide passes through both balls, so the pair of stage positions
//! fixes the needle line (4 DOF). Stage coordinates are millimetres in the
//! stage's own frame; `Isometry3` transforms map stage frames into the base
//! frame.

use nalgebra::{Isometry3, Matrix2, Point3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::detect::{self, CircleEstimate};
use crate::error::{Error, Result};
use crate::image::Image;

/// Below this |det| (px²/mm²) a Jacobian is treated as singular.
pub const MIN_JACOBIAN_DET: f64 = 1e-6;
/// Smallest |direction.z| for which a line is considered to cross a stage plane.
pub const MIN_PLANE_CROSSING: f64 = 1e-9;
pub const MIN_FIDUCIAL_SEPARATION: f64 = 1e-6;
pub const DEFAULT_TRAVEL_LIMIT_MM: f64 = 20.0;
/// Stage displacement used for each Jacobian probe move.
pub const DEFAULT_JACOBIAN_STEP_MM: f64 = 15.0;

/// Maps a stage displacement (mm) to an image displacement (px).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2x2(pub Matrix2<f64>);

impl Jacobian2x2 {
    pub fn new(m: Matrix2<f64>) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Self {
        Self(Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    /// `scale · R(angle)`: an axis-aligned camera rotated by `angle_rad`.
    pub fn scaled_rotation(scale: f64, angle_rad: f64) -> Self {
        let (s, c) = angle_rad.sin_cos();
        Self(Matrix2::new(c, -s, s, c) * scale)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0 * k)
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Ratio of singular values; infinite for a rank-deficient matrix.
    pub fn condition_number(&self) -> f64 {
        let sv = self.0.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_invertible(&self) -> Result<()> {
        let det = self.determinant();
        if !self.is_finite() || det.abs() <= MIN_JACOBIAN_DET {
            return Err(Error::SingularJacobian {
                determinant: det,
                condition: self.condition_number(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let r = self.0 * Vector2::new(v[0], v[1]);
        [r.x, r.y]
    }

    /// Solves `J · x = v`.
    pub fn solve(&self, v: [f64; 2]) -> Result<[f64; 2]> {
        self.check_invertible()?;
        let m = &self.0;
        let det = self.determinant();
        // closed-form 2x2 inverse
        Ok([
            (m[(1, 1)] * v[0] - m[(0, 1)] * v[1]) / det,
            (m[(0, 0)] * v[1] - m[(1, 0)] * v[0]) / det,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// Top ball in the top-stage frame (mm).
    pub top_ball: [f64; 2],
    /// Bottom ball in the bottom-stage frame (mm).
    pub bottom_ball: [f64; 2],
    pub top_frame: Isometry3<f64>,
    pub bottom_frame: Isometry3<f64>,
    pub travel_limit_mm: f64,
}

impl RobotState {
    /// Stages whose x-y planes are parallel to the base x-y plane at the
    /// given heights, with balls at the stage origins.
    pub fn stacked(z_top: f64, z_bottom: f64) -> Result<Self> {
        Self::new(
            Isometry3::translation(0.0, 0.0, z_top),
            Isometry3::translation(0.0, 0.0, z_bottom),
        )
    }

    pub fn new(top_frame: Isometry3<f64>, bottom_frame: Isometry3<f64>) -> Result<Self> {
        let state = Self {
            top_ball: [0.0, 0.0],
            bottom_ball: [0.0, 0.0],
            top_frame,
            bottom_frame,
            travel_limit_mm: DEFAULT_TRAVEL_LIMIT_MM,
        };
        state.check_geometry()?;
        Ok(state)
    }

    pub fn with_balls(mut self, top: [f64; 2], bottom: [f64; 2]) -> Self {
        self.top_ball = top;
        self.bottom_ball = bottom;
        self
    }

    fn plane_normal(frame: &Isometry3<f64>) -> Vector3<f64> {
        frame.rotation * Vector3::z()
    }

    /// Planes must be parallel and separated.
    pub fn check_geometry(&self) -> Result<()> {
        let nt = Self::plane_normal(&self.top_frame);
        let nb = Self::plane_normal(&self.bottom_frame);
        if nt.cross(&nb).norm() > 1e-9 {
            return Err(Error::DegenerateGeometry(
                "stage planes are not parallel".into(),
            ));
        }
        let separation =
            nt.dot(&(self.top_frame.translation.vector - self.bottom_frame.translation.vector));
        if separation.abs() <= 0.0 {
            return Err(Error::DegenerateGeometry("stage planes coincide".into()));
        }
        Ok(())
    }

    pub fn within_travel(&self) -> bool {
        self.top_ball
            .iter()
            .chain(&self.bottom_ball)
            .all(|v| v.abs() <= self.travel_limit_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleLine {
    pub point: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl NeedleLine {
    pub fn at(&self, t: f64) -> Point3<f64> {
        self.point + self.direction.into_inner() * t
    }
}

fn stage_point(frame: &Isometry3<f64>, p: [f64; 2]) -> Point3<f64> {
    frame * Point3::new(p[0], p[1], 0.0)
}

/// Ball positions in the base frame: `(top, bottom)`.
pub fn forward_ball_positions(state: &RobotState) -> (Point3<f64>, Point3<f64>) {
    (
        stage_point(&state.top_frame, state.top_ball),
        stage_point(&state.bottom_frame, state.bottom_ball),
    )
}

/// Line through two fiducials, oriented toward decreasing z.
pub fn needle_line(upper: Point3<f64>, lower: Point3<f64>) -> Result<NeedleLine> {
    let d = lower - upper;
    let len = d.norm();
    if !(len > MIN_FIDUCIAL_SEPARATION) {
        return Err(Error::DegenerateGeometry(format!(
            "fiducials {upper} and {lower} are {len:.3e} mm apart"
        )));
    }
    let d = if d.z > 0.0 { -d } else { d };
    Ok(NeedleLine {
        point: upper,
        direction: Unit::new_normalize(d),
    })
}

/// `(x, y)` where the line crosses the base-frame plane `z = plane_z`.
pub fn intersect_line_plane(line: &NeedleLine, plane_z: f64) -> Result<[f64; 2]> {
    let d = line.direction.into_inner();
    if d.z.abs() <= MIN_PLANE_CROSSING {
        return Err(Error::NoIntersection { plane_z });
    }
    let t = (plane_z - line.point.z) / d.z;
    let p = line.at(t);
    Ok([p.x, p.y])
}

/// Crossing of the line with a stage plane, in that stage's coordinates.
pub fn intersect_line_stage(line: &NeedleLine, frame: &Isometry3<f64>) -> Result<[f64; 2]> {
    let p = frame.inverse_transform_point(&line.point);
    let d = frame.inverse_transform_vector(&line.direction.into_inner());
    if d.z.abs() <= MIN_PLANE_CROSSING {
        return Err(Error::NoIntersection {
            plane_z: frame.translation.vector.z,
        });
    }
    let t = -p.z / d.z;
    Ok([p.x + t * d.x, p.y + t * d.y])
}

/// Stage coordinates of both balls for a desired needle line: each stage is
/// solved on its own.
pub fn inverse_ball_positions(
    line: &NeedleLine,
    state: &RobotState,
) -> Result<([f64; 2], [f64; 2])> {
    Ok((
        intersect_line_stage(line, &state.top_frame)?,
        intersect_line_stage(line, &state.bottom_frame)?,
    ))
}

/// Forward-difference Jacobian from marker centers observed at the origin
/// pose and after `step_mm` moves along each stage axis.
pub fn jacobian_from_centers(
    origin: [f64; 2],
    plus_x: [f64; 2],
    plus_y: [f64; 2],
    step_mm: f64,
) -> Result<Jacobian2x2> {
    if !(step_mm > 0.0) {
        return Err(Error::invalid("step_mm", format!("{step_mm} is not > 0")));
    }
    let col_x = [
        (plus_x[0] - origin[0]) / step_mm,
        (plus_x[1] - origin[1]) / step_mm,
    ];
    let col_y = [
        (plus_y[0] - origin[0]) / step_mm,
        (plus_y[1] - origin[1]) / step_mm,
    ];
    Ok(Jacobian2x2(Matrix2::new(
        col_x[0], col_y[0], col_x[1], col_y[1],
    )))
}

pub fn estimate_image_jacobian(
    center_img: &Image,
    plus_x_img: &Image,
    plus_y_img: &Image,
    step_mm: f64,
    radius_range: [f64; 2],
) -> Result<Jacobian2x2> {
    let find = |img: &Image, pose: &str| -> Result<CircleEstimate> {
        detect::detect_circles(img, radius_range, 1)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::DetectionFailed { pose: pose.into() })
    };
    let c0 = find(center_img, "origin pose")?;
    let cx = find(plus_x_img, "+x pose")?;
    let cy = find(plus_y_img, "+y pose")?;
    jacobian_from_centers(c0.center, cx.center, cy.center, step_mm)
}

/// Stage command (mm) that cancels `error_px` under the linear model.
pub fn command_from_pixel_error(error_px: [f64; 2], jac: &Jacobian2x2) -> Result<[f64; 2]> {
    jac.solve(error_px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Translation3, UnitQuaternion};
    use std::f64::consts::FRAC_PI_6;

    #[test]
    fn identity_embedding() {
        let s = RobotState::stacked(0.0, -50.0)
            .unwrap()
            .with_balls([3.0, 4.0], [1.0, 2.0]);
        let (t, b) = forward_ball_positions(&s);
        assert_eq!(t, Point3::new(3.0, 4.0, 0.0));
        assert_eq!(b, Point3::new(1.0, 2.0, -50.0));
    }

    #[test]
    fn matches_homogeneous_matrix_product() {
        let top = Isometry3::from_parts(
            Translation3::new(1.5, -2.0, 30.0),
            UnitQuaternion::from_euler_angles(0.0, 0.0, 0.7),
        );
        let bottom = Isometry3::from_parts(
            Translation3::new(-0.5, 4.0, -10.0),
            UnitQuaternion::from_euler_angles(0.0, 0.0, -1.1),
        );
        let s = RobotState::new(top, bottom)
            .unwrap()
            .with_balls([2.0, -3.0], [-1.0, 5.5]);
        let (pt, pb) = forward_ball_positions(&s);
        let hom = |m: Matrix4<f64>, p: [f64; 2]| {
            let v = m * nalgebra::Vector4::new(p[0], p[1], 0.0, 1.0);
            Point3::new(v.x, v.y, v.z)
        };
        assert!((pt - hom(top.to_homogeneous(), s.top_ball)).norm() < 1e-12);
        assert!((pb - hom(bottom.to_homogeneous(), s.bottom_ball)).norm() < 1e-12);
    }

    #[test]
    fn non_parallel_planes_rejected() {
        let tilted = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, 10.0),
            UnitQuaternion::from_euler_angles(0.2, 0.0, 0.0),
        );
        assert!(RobotState::new(tilted, Isometry3::identity()).is_err());
        assert!(RobotState::stacked(5.0, 5.0).is_err());
    }

    #[test]
    fn vertical_needle() {
        let l = needle_line(Point3::new(0.0, 0.0, 10.0), Point3::origin()).unwrap();
        assert_eq!(l.direction.into_inner(), Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn slanted_needle_direction() {
        let l = needle_line(Point3::new(1.0, 0.0, 10.0), Point3::origin()).unwrap();
        let expect = Vector3::new(-1.0, 0.0, -10.0).normalize();
        assert!((l.direction.into_inner() - expect).norm() < 1e-15);
        // orientation does not depend on argument order
        let l2 = needle_line(Point3::origin(), Point3::new(1.0, 0.0, 10.0)).unwrap();
        assert!((l2.direction.into_inner() - expect).norm() < 1e-15);
    }

    #[test]
    fn coincident_fiducials_rejected() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            needle_line(p, p),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn vertical_line_hits_every_plane_at_same_xy() {
        let l = needle_line(Point3::new(2.0, 3.0, 5.0), Point3::new(2.0, 3.0, -5.0)).unwrap();
        for z in [-100.0, -1.0, 0.0, 7.5] {
            assert_eq!(intersect_line_plane(&l, z).unwrap(), [2.0, 3.0]);
        }
    }

    #[test]
    fn diagonal_line_matches_parametric_substitution() {
        let l = needle_line(Point3::origin(), Point3::new(1.0, 0.5, -1.0)).unwrap();
        let got = intersect_line_plane(&l, -10.0).unwrap();
        // x = z · dx/dz along the line through the origin
        assert!((got[0] - 10.0).abs() < 1e-12);
        assert!((got[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_line_has_no_intersection() {
        let l = NeedleLine {
            point: Point3::origin(),
            direction: Unit::new_normalize(Vector3::new(1.0, 0.0, 0.0)),
        };
        assert!(matches!(
            intersect_line_plane(&l, -10.0),
            Err(Error::NoIntersection { .. })
        ));
    }

    #[test]
    fn jacobian_inverse_consistency() {
        let j = Jacobian2x2::scaled_rotation(2.0, FRAC_PI_6);
        let err = [3.0, -2.0];
        let cmd = command_from_pixel_error(err, &j).unwrap();
        let back = j.apply(cmd);
        assert!((back[0] - err[0]).abs() < 1e-12 && (back[1] - err[1]).abs() < 1e-12);
        assert_eq!(
            command_from_pixel_error([0.0, 0.0], &j).unwrap(),
            [0.0, 0.0]
        );
        assert_eq!(
            command_from_pixel_error(err, &Jacobian2x2::identity()).unwrap(),
            err
        );
    }

    #[test]
    fn singular_jacobian_reports_condition() {
        let j = Jacobian2x2::from_rows([[1.0, 2.0], [2.0, 4.0]]);
        match command_from_pixel_error([1.0, 0.0], &j) {
            Err(Error::SingularJacobian { condition, .. }) => assert!(condition > 1e12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jacobian_from_analytic_affine_camera_is_exact() {
        let truth = Jacobian2x2::scaled_rotation(1.3, 0.4);
        let project = |p: [f64; 2]| {
            let v = truth.apply(p);
            [v[0] + 64.0, v[1] + 60.0]
        };
        let j = jacobian_from_centers(
            project([0.0, 0.0]),
            project([15.0, 0.0]),
            project([0.0, 15.0]),
            15.0,
        )
        .unwrap();
        assert!((j.0 - truth.0).abs().max() < 1e-9);
    }

    #[test]
    fn travel_limits() {
        let s = RobotState::stacked(0.0, -40.0).unwrap();
        assert!(s
            .clone()
            .with_balls([19.0, -20.0], [0.0, 0.0])
            .within_travel());
        assert!(!s.with_balls([20.5, 0.0], [0.0, 0.0]).within_travel());
    }
}
