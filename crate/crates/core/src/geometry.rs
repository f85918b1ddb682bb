//! Closed-form eyeball model.
//!
//! Coordinates are image-plane pixels with x to the right, y down and the
//! origin at the top-left. The matching 3D frame keeps x and y and points z
//! away from the camera, so a gaze looking back at the camera has `z < 0`:
//!
//! ```text
//! g = (sin(phi) cos(theta), sin(theta), -cos(theta) cos(phi))
//! ```
//!
//! Projection is weak-perspective: a point on the eyeball sphere lands at
//! `center + radius * (g.x, g.y)` in the image.

use serde::{Deserialize, Serialize};

use crate::error::{HgnError, Result};
use crate::scalar::Real;

/// Number of landmarks per eye: iris center, eyeball center, 8 iris rim points.
pub const NUM_LANDMARKS: usize = 10;
pub const IRIS_CENTER: usize = 0;
pub const EYEBALL_CENTER: usize = 1;
pub const RIM_START: usize = 2;
pub const NUM_RIM: usize = 8;

/// Arcsin arguments are kept this far inside `[-1, 1]`.
pub const ARCSIN_MARGIN: f64 = 1e-7;

/// Pitch (`theta`) and yaw (`phi`) of the optical axis, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GazeAngles<T> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> GazeAngles<T> {
    /// Validated constructor; both angles must lie in the open interval (-pi/2, pi/2).
    pub fn new(theta: T, phi: T) -> Result<Self> {
        let half_pi = T::FRAC_PI_2();
        let ok = |a: T| a.is_finite() && a.abs() < half_pi;
        if !ok(theta) || !ok(phi) {
            return Err(HgnError::Domain(format!(
                "gaze angles ({theta}, {phi}) outside (-pi/2, pi/2)"
            )));
        }
        Ok(Self { theta, phi })
    }

    pub fn zero() -> Self {
        Self { theta: T::zero(), phi: T::zero() }
    }

    pub fn as_array(&self) -> [T; 2] {
        [self.theta, self.phi]
    }

    pub fn cast<U: Real>(&self) -> GazeAngles<U> {
        GazeAngles { theta: U::lit(self.theta.as_f64()), phi: U::lit(self.phi.as_f64()) }
    }
}

/// Unit gaze direction in the y-down camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> GazeVector<T> {
    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

/// The geometric latent of one eye.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeballState<T> {
    pub center_x: T,
    pub center_y: T,
    /// Eyeball radius in pixels.
    pub radius: T,
    /// Angular radius of the iris disk on the sphere, radians.
    pub iris_angular_radius: T,
}

impl<T: Real> EyeballState<T> {
    pub fn new(center_x: T, center_y: T, radius: T, iris_angular_radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(HgnError::Domain(format!("eyeball radius {radius} must be > 0")));
        }
        if !(iris_angular_radius > T::zero() && iris_angular_radius < T::FRAC_PI_2()) {
            return Err(HgnError::Domain(format!(
                "iris angular radius {iris_angular_radius} outside (0, pi/2)"
            )));
        }
        if !center_x.is_finite() || !center_y.is_finite() {
            return Err(HgnError::Domain("non-finite eyeball center".into()));
        }
        Ok(Self { center_x, center_y, radius, iris_angular_radius })
    }

    pub fn center(&self) -> [T; 2] {
        [self.center_x, self.center_y]
    }
}

/// Ten ordered landmarks: 0 iris center, 1 eyeball center, 2..=9 iris rim
/// counter-clockwise (as seen in the image) starting from the rightmost point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSet<T> {
    pub points: [[T; 2]; NUM_LANDMARKS],
}

impl<T: Real> LandmarkSet<T> {
    pub fn iris_center(&self) -> [T; 2] {
        self.points[IRIS_CENTER]
    }

    pub fn eyeball_center(&self) -> [T; 2] {
        self.points[EYEBALL_CENTER]
    }

    pub fn rim(&self) -> &[[T; 2]] {
        &self.points[RIM_START..]
    }
}

pub fn angles_to_vector<T: Real>(g: GazeAngles<T>) -> GazeVector<T> {
    let (st, ct) = g.theta.sin_cos();
    let (sp, cp) = g.phi.sin_cos();
    GazeVector { x: sp * ct, y: st, z: -ct * cp }
}

pub fn vector_to_angles<T: Real>(v: GazeVector<T>) -> Result<GazeAngles<T>> {
    let tol = T::lit(T::GEOM_TOL);
    if !((v.norm() - T::one()).abs() <= tol) {
        return Err(HgnError::Domain(format!("gaze vector norm {} is not 1", v.norm())));
    }
    if !(v.z < T::zero()) {
        return Err(HgnError::Domain(format!("gaze vector z = {} must be negative", v.z)));
    }
    let theta = v.y.max(-T::one()).min(T::one()).asin();
    let phi = v.x.atan2(-v.z);
    Ok(GazeAngles { theta, phi })
}

/// In-plane (x, y) direction of a gaze, i.e. the displacement of the iris
/// center from the eyeball center per unit radius.
pub fn in_plane_direction<T: Real>(g: GazeAngles<T>) -> [T; 2] {
    let v = angles_to_vector(g);
    [v.x, v.y]
}

/// Projects the ten landmarks of an eye looking in direction `g`.
pub fn project_landmarks<T: Real>(eye: &EyeballState<T>, g: GazeAngles<T>) -> LandmarkSet<T> {
    let r = eye.radius;
    let (st, ct) = g.theta.sin_cos();
    let (sp, cp) = g.phi.sin_cos();
    let axis = [sp * ct, st, -ct * cp];
    // Tangent basis around the gaze axis: `u` follows increasing yaw,
    // `v` increasing pitch (image-down at frontal gaze).
    let u = [cp, T::zero(), sp];
    let v = [-sp * st, ct, st * cp];
    let (s_psi, c_psi) = eye.iris_angular_radius.sin_cos();

    let mut points = [[T::zero(); 2]; NUM_LANDMARKS];
    points[IRIS_CENTER] = [eye.center_x + r * axis[0], eye.center_y + r * axis[1]];
    points[EYEBALL_CENTER] = [eye.center_x, eye.center_y];
    let step = T::FRAC_PI_4();
    for k in 0..NUM_RIM {
        let (sa, ca) = (step * T::lit(k as f64)).sin_cos();
        // minus on `v` so that increasing azimuth turns counter-clockwise on screen
        let d = |i: usize| c_psi * axis[i] + s_psi * (ca * u[i] - sa * v[i]);
        points[RIM_START + k] = [eye.center_x + r * d(0), eye.center_y + r * d(1)];
    }
    LandmarkSet { points }
}

/// Result of inverting the projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction<T> {
    pub angles: GazeAngles<T>,
    /// An arcsin argument had to be clamped; gradients through it are zero.
    pub theta_clamped: bool,
    pub phi_clamped: bool,
}

impl<T> Reconstruction<T> {
    pub fn degenerate(&self) -> bool {
        self.theta_clamped || self.phi_clamped
    }
}

fn clamp_arg<T: Real>(a: T) -> (T, bool) {
    let lim = T::one() - T::lit(ARCSIN_MARGIN);
    if a > lim {
        (lim, true)
    } else if a < -lim {
        (-lim, true)
    } else {
        (a, false)
    }
}

/// Recovers gaze from the iris center, eyeball center and radius:
/// `theta = asin(dy / R)`, `phi = asin(dx / (R cos theta))`.
pub fn reconstruct_gaze<T: Real>(
    iris_center: [T; 2],
    eyeball_center: [T; 2],
    radius: T,
) -> Result<Reconstruction<T>> {
    if !(radius > T::zero()) {
        return Err(HgnError::Domain(format!("radius {radius} must be > 0")));
    }
    let dx = iris_center[0] - eyeball_center[0];
    let dy = iris_center[1] - eyeball_center[1];
    if !dx.is_finite() || !dy.is_finite() || !radius.is_finite() {
        return Err(HgnError::Domain("non-finite reconstruction input".into()));
    }
    let (a, theta_clamped) = clamp_arg(dy / radius);
    let theta = a.asin();
    let cos_theta = (T::one() - a * a).sqrt();
    let (b, phi_clamped) = clamp_arg(dx / (radius * cos_theta));
    Ok(Reconstruction {
        angles: GazeAngles { theta, phi: b.asin() },
        theta_clamped,
        phi_clamped,
    })
}

/// Partials of `(theta, phi)` with respect to `(x_ic, y_ic, x_ec, y_ec, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconJacobian<T> {
    pub rows: [[T; 5]; 2],
    /// True if either arcsin argument sat on the clamp boundary.
    pub saturated: bool,
}

/// Analytic Jacobian of [`reconstruct_gaze`], consistent with its clamping:
/// a clamped arcsin passes zero gradient.
pub fn recon_jacobian<T: Real>(
    iris_center: [T; 2],
    eyeball_center: [T; 2],
    radius: T,
) -> Result<ReconJacobian<T>> {
    if !(radius > T::zero()) {
        return Err(HgnError::Domain(format!("radius {radius} must be > 0")));
    }
    let one = T::one();
    let zero = T::zero();
    let r = radius;
    let dx = iris_center[0] - eyeball_center[0];
    let dy = iris_center[1] - eyeball_center[1];

    let (a, a_clamped) = clamp_arg(dy / r);
    let c = (one - a * a).sqrt();
    let (b, b_clamped) = clamp_arg(dx / (r * c));

    // theta = asin(a), a = dy / R
    let dtheta_da = if a_clamped { zero } else { one / c };
    let da_ddy = one / r;
    let da_dr = -dy / (r * r);
    // phi = asin(b), b = dx / (R c), c = sqrt(1 - a^2)
    let dphi_db = if b_clamped { zero } else { one / (one - b * b).sqrt() };
    let db_ddx = one / (r * c);
    let db_dr_direct = -dx / (r * r * c);
    let db_dc = -dx / (r * c * c);
    let dc_da = if a_clamped { zero } else { -a / c };

    let dtheta_ddy = dtheta_da * da_ddy;
    let dtheta_dr = dtheta_da * da_dr;
    let dphi_ddx = dphi_db * db_ddx;
    let dphi_ddy = dphi_db * db_dc * dc_da * da_ddy;
    let dphi_dr = dphi_db * (db_dr_direct + db_dc * dc_da * da_dr);

    Ok(ReconJacobian {
        rows: [
            [zero, dtheta_ddy, zero, -dtheta_ddy, dtheta_dr],
            [dphi_ddx, dphi_ddy, -dphi_ddx, -dphi_ddy, dphi_dr],
        ],
        saturated: a_clamped || b_clamped,
    })
}

/// 3x3 row-major rotation.
pub type Rotation3<T> = [[T; 3]; 3];

fn cross<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized<T: Real>(a: [T; 3]) -> [T; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Rotation that brings the eye-center direction onto the optical axis
/// `(0, 0, 1)`, keeping the camera x axis as the horizontal reference.
pub fn normalization_rotation<T: Real>(eye_center_3d: [T; 3]) -> Result<Rotation3<T>> {
    let [x, y, z] = eye_center_3d;
    let n = (x * x + y * y + z * z).sqrt();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(HgnError::Domain("eye center must be a non-zero finite vector".into()));
    }
    let forward = [x / n, y / n, z / n];
    let one = T::one();
    let zero = T::zero();
    let mut down = cross(forward, [one, zero, zero]);
    let down_norm = (down[0] * down[0] + down[1] * down[1] + down[2] * down[2]).sqrt();
    if down_norm < T::lit(1e-6) {
        // forward is (anti)parallel to the x axis
        let right = normalized(cross([zero, one, zero], forward));
        down = cross(forward, right);
    } else {
        down = normalized(down);
    }
    let right = cross(down, forward);
    Ok([right, down, forward])
}

pub fn rotate<T: Real>(rot: &Rotation3<T>, v: [T; 3]) -> [T; 3] {
    let row = |r: &[T; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
    [row(&rot[0]), row(&rot[1]), row(&rot[2])]
}

/// Angle between two gaze directions, in degrees.
pub fn angular_error<T: Real>(a: GazeAngles<T>, b: GazeAngles<T>) -> T {
    let va = angles_to_vector(a);
    let vb = angles_to_vector(b);
    let d = va.dot(&vb).max(-T::one()).min(T::one());
    d.acos().to_degrees()
}
