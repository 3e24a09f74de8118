//! Virtual color-tracking camera.
//!
//! The camera sits at the follower's reference point and looks along its
//! heading. Projection is planar: only the horizontal image coordinate and
//! the box size depend on geometry, `y_px` is pinned to the image center.

use crate::world::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub image_width: u32,
    pub image_height: u32,
    pub horizontal_fov: f64,
    pub frame_rate: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            image_width: 320,
            image_height: 200,
            horizontal_fov: 75f64.to_radians(),
            frame_rate: 50.0,
            min_range: 0.3,
            max_range: 20.0,
        }
    }
}

impl CameraIntrinsics {
    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        (self.image_width as f64 / 2.0) / (self.horizontal_fov / 2.0).tan()
    }

    pub fn center_x(&self) -> f64 {
        self.image_width as f64 / 2.0
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.image_width == 0 || !self.image_width.is_multiple_of(2) {
            return Err("camera.image_width must be a positive even integer".into());
        }
        if self.image_height == 0 {
            return Err("camera.image_height must be positive".into());
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < std::f64::consts::PI) {
            return Err("camera.horizontal_fov must lie in (0, pi)".into());
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err("camera.frame_rate must be positive".into());
        }
        if !(self.min_range >= 0.0 && self.max_range > self.min_range && self.max_range.is_finite()) {
            return Err("camera ranges must satisfy 0 <= min_range < max_range".into());
        }
        let f = self.focal_px();
        if !(f.is_finite() && f > 0.0) {
            return Err("camera focal length is degenerate".into());
        }
        Ok(())
    }
}

/// Flat colored panel on the back of the leader. Its normal points along the
/// leader's negative heading, toward a follower that is behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPanel {
    pub width: f64,
    pub height: f64,
    /// Distance from the leader's reference point back to the panel, meters.
    pub rear_offset: f64,
}

impl Default for TargetPanel {
    /// A letter-size sheet (8.5" x 11") mounted at the leader's rear axle.
    fn default() -> Self {
        TargetPanel { width: 0.2159, height: 0.2794, rear_offset: 0.0 }
    }
}

impl TargetPanel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err("panel width and height must be positive".into());
        }
        if !self.rear_offset.is_finite() {
            return Err("panel.rear_offset must be finite".into());
        }
        Ok(())
    }

    /// Panel center in world coordinates for a given leader pose.
    pub fn center(&self, leader: &VehicleState) -> (f64, f64) {
        let (c, s) = leader.forward();
        (leader.x - self.rear_offset * c, leader.y - self.rear_offset * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub x_px: f64,
    pub y_px: f64,
    pub width_px: f64,
    pub height_px: f64,
    pub area_px2: f64,
    pub t: f64,
}

/// Projects the leader's panel into the follower's camera.
///
/// Returns `None` when the panel center is behind the camera, outside the
/// horizontal field of view, outside `[min_range, max_range]`, or seen from
/// behind. The width shrinks with `cos(aspect)`, where `aspect` is the angle
/// between the line of sight and the panel normal.
pub fn observe(
    camera: &CameraIntrinsics,
    follower: &VehicleState,
    leader: &VehicleState,
    panel: &TargetPanel,
    t: f64,
) -> Option<SensorReading> {
    let (px, py) = panel.center(leader);
    let (dx, dy) = (px - follower.x, py - follower.y);
    let range = dx.hypot(dy);
    if !range.is_finite() || range < camera.min_range || range > camera.max_range {
        return None;
    }
    let (fc, fs) = follower.forward();
    let ahead = dx * fc + dy * fs;
    let leftward = -dx * fs + dy * fc;
    if ahead <= 0.0 {
        return None;
    }
    let f = camera.focal_px();
    let width = camera.image_width as f64;
    let height = camera.image_height as f64;

    // Image x grows to the right, i.e. opposite to the vehicle's left axis.
    let x_px = camera.center_x() - f * leftward / ahead;
    if !(0.0..=width).contains(&x_px) {
        return None;
    }

    // Panel normal is -leader heading; the line of sight back to the camera
    // is -(dx, dy)/range.
    let (lc, ls) = leader.forward();
    let cos_aspect = (dx * lc + dy * ls) / range;
    if cos_aspect <= 0.0 {
        return None;
    }
    let width_px = (f * panel.width * cos_aspect / range).min(width);
    let height_px = (f * panel.height / range).min(height);
    Some(SensorReading {
        x_px,
        y_px: height / 2.0,
        width_px,
        height_px,
        area_px2: width_px * height_px,
        t,
    })
}

/// Bounding-box area of a head-on panel at `range`, matching what
/// [`observe`] reports for a leader dead ahead.
pub fn area_at_range(camera: &CameraIntrinsics, panel: &TargetPanel, range: f64) -> f64 {
    let f = camera.focal_px();
    let width_px = (f * panel.width * 1.0 / range).min(camera.image_width as f64);
    let height_px = (f * panel.height / range).min(camera.image_height as f64);
    width_px * height_px
}

/// Horizontal offset of the target from the image center; positive when the
/// target is right of center.
pub fn pixel_error_x(reading: &SensorReading, camera: &CameraIntrinsics) -> f64 {
    reading.x_px - camera.center_x()
}

/// `setpoint_area - area`; positive when the target looks too small, i.e.
/// the follower should close the distance.
pub fn area_error(reading: &SensorReading, setpoint_area: f64) -> f64 {
    setpoint_area - reading.area_px2
}
