//! Pinhole cameras and a small painter's-algorithm rasterizer.
//!
//! Camera frames follow the usual vision convention: +z looks forward, +x is
//! image right and +y is image down.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::scene::{ObjectClass, WorldState};
use crate::arm::ArmSpec;
use crate::error::Result;
use crate::image::RgbImage;
use crate::kinematics::{backbone_points, tool_transform};
use crate::pose::{Pose, RigidTransform};

pub const IMAGE_WIDTH: u32 = 640;
pub const IMAGE_HEIGHT: u32 = 480;

/// Points closer than this to the image plane are culled.
const NEAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraAttachment {
    WorldFixed,
    /// Extrinsic pose is relative to the gripper frame.
    WristMounted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub intrinsics: Intrinsics,
    pub extrinsic: Pose,
    pub attachment: CameraAttachment,
}

impl CameraSpec {
    /// World-fixed camera at `eye` looking at `target`, with world +z as up.
    pub fn look_at(intrinsics: Intrinsics, eye: Vector3<f64>, target: Vector3<f64>) -> Self {
        Self {
            intrinsics,
            extrinsic: RigidTransform {
                rotation: look_rotation(&(target - eye), &Vector3::z()),
                translation: eye,
            }
            .to_pose(),
            attachment: CameraAttachment::WorldFixed,
        }
    }

    /// Third-person view of the desk scene from behind and above the arm base.
    pub fn default_third_person() -> Self {
        Self::look_at(
            Intrinsics::default_640(),
            Vector3::new(0.0, 0.25, 0.75),
            Vector3::new(0.0, 0.9, 0.0),
        )
    }

    /// Wrist camera just above the gripper point, looking along the tool axis
    /// and tilted slightly toward the fingers.
    pub fn default_wrist() -> Self {
        Self {
            intrinsics: Intrinsics::default_640(),
            extrinsic: Pose::from_xyz_rpy([0.0, -0.04, -0.01], [-0.35, 0.0, 0.0]),
            attachment: CameraAttachment::WristMounted,
        }
    }

    /// Camera-to-world transform for the arm state in `world`.
    pub fn world_transform(&self, world: &WorldState, spec: &ArmSpec) -> Result<RigidTransform> {
        let local = self.extrinsic.to_transform();
        Ok(match self.attachment {
            CameraAttachment::WorldFixed => local,
            CameraAttachment::WristMounted => tool_transform(spec, &world.arm_config)?.compose(&local),
        })
    }
}

impl Intrinsics {
    pub fn default_640() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

/// Rotation whose columns are camera x (right), y (down), z (forward).
fn look_rotation(forward: &Vector3<f64>, up: &Vector3<f64>) -> Matrix3<f64> {
    let z = forward.normalize();
    let mut x = z.cross(up);
    if x.norm() < 1e-9 {
        x = z.cross(&Vector3::x());
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStyle {
    pub background: [u8; 3],
    pub table_color: Option<[u8; 3]>,
    /// Table extent in world x and y, meters.
    pub table_min: [f64; 2],
    pub table_max: [f64; 2],
    pub draw_arm: bool,
    pub arm_color: [u8; 3],
    /// Backbone half-width in meters.
    pub arm_radius: f64,
    pub ring_width_px: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            background: [40, 44, 52],
            table_color: Some([150, 120, 90]),
            table_min: [-0.7, -0.2],
            table_max: [0.7, 1.3],
            draw_arm: true,
            arm_color: [70, 200, 120],
            arm_radius: 0.02,
            ring_width_px: 3.0,
        }
    }
}

impl RenderStyle {
    /// Background only: no table, no arm.
    pub fn bare() -> Self {
        Self {
            table_color: None,
            draw_arm: false,
            ..Self::default()
        }
    }
}

struct Projector {
    world_to_cam: RigidTransform,
    k: Intrinsics,
}

impl Projector {
    /// Pixel coordinates and depth; `None` behind the image plane.
    fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.world_to_cam.transform_point(p);
        if c.z <= NEAR {
            return None;
        }
        Some((self.k.fx * c.x / c.z + self.k.cx, self.k.fy * c.y / c.z + self.k.cy, c.z))
    }
}

enum Primitive {
    Disc { u: f64, v: f64, r: f64, color: [u8; 3] },
    Segment { a: (f64, f64), b: (f64, f64), half_width: f64, color: [u8; 3] },
}

/// Renders a 640x480 view: table, fixtures as rings, objects as discs, the
/// backbone as a thick polyline and a gripper marker, drawn far to near.
pub fn render_view(world: &WorldState, spec: &ArmSpec, camera: &CameraSpec) -> Result<RgbImage> {
    render_view_styled(world, spec, camera, &RenderStyle::default())
}

pub fn render_view_styled(
    world: &WorldState,
    spec: &ArmSpec,
    camera: &CameraSpec,
    style: &RenderStyle,
) -> Result<RgbImage> {
    let cam_to_world = camera.world_transform(world, spec)?;
    let background = render_background(&cam_to_world, &camera.intrinsics, style);
    render_view_over(background, world, spec, camera, style)
}

/// Background color plus the table plane, for a camera at `cam_to_world`.
/// Depends only on the camera pose, so world-fixed cameras can reuse it.
pub fn render_background(cam_to_world: &RigidTransform, intrinsics: &Intrinsics, style: &RenderStyle) -> RgbImage {
    let mut img = RgbImage::filled(IMAGE_WIDTH, IMAGE_HEIGHT, style.background);
    if let Some(color) = style.table_color {
        draw_table(&mut img, cam_to_world, intrinsics, style, color);
    }
    img
}

/// Draws rings, objects, the arm and the gripper over `background`.
pub fn render_view_over(
    mut img: RgbImage,
    world: &WorldState,
    spec: &ArmSpec,
    camera: &CameraSpec,
    style: &RenderStyle,
) -> Result<RgbImage> {
    let cam_to_world = camera.world_transform(world, spec)?;
    let proj = Projector {
        world_to_cam: cam_to_world.inverse(),
        k: camera.intrinsics,
    };

    let mut items: Vec<(f64, Primitive)> = Vec::new();
    for o in &world.objects {
        let ring = matches!(o.class_label, ObjectClass::Plate | ObjectClass::MouthZone);
        if ring {
            push_ring(&mut items, &proj, &o.position, o.radius, style.ring_width_px * 0.5, o.color);
        } else if let Some((u, v, d)) = proj.project(&o.position) {
            let r = camera.intrinsics.fx * o.radius / d;
            items.push((d, Primitive::Disc { u, v, r, color: o.color }));
        }
    }

    if style.draw_arm && camera.attachment == CameraAttachment::WorldFixed {
        let pts = backbone_points(spec, &world.arm_config)?;
        for w in pts.windows(2) {
            if let (Some(a), Some(b)) = (proj.project(&w[0]), proj.project(&w[1])) {
                let depth = 0.5 * (a.2 + b.2);
                let half_width = (camera.intrinsics.fx * style.arm_radius / depth).max(1.0);
                items.push((
                    depth,
                    Primitive::Segment {
                        a: (a.0, a.1),
                        b: (b.0, b.1),
                        half_width,
                        color: style.arm_color,
                    },
                ));
            }
        }
    }
    if style.draw_arm {
        push_gripper(&mut items, &proj, world, spec, &camera.intrinsics)?;
    }

    // far to near; stable so equal depths keep insertion order
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, prim) in &items {
        match *prim {
            Primitive::Disc { u, v, r, color } => fill_disc(&mut img, u, v, r, color),
            Primitive::Segment { a, b, half_width, color } => fill_segment(&mut img, a, b, half_width, color),
        }
    }
    Ok(img)
}

fn draw_table(img: &mut RgbImage, cam_to_world: &RigidTransform, k: &Intrinsics, style: &RenderStyle, color: [u8; 3]) {
    let origin = cam_to_world.translation;
    if origin.z <= 0.0 {
        return;
    }
    let shade = |f: f64| color.map(|c| (c as f64 * f).round().clamp(0.0, 255.0) as u8);
    let (light, dark) = (shade(1.0), shade(0.9));
    let r = &cam_to_world.rotation;
    let (cx, cy, cz) = (r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned());
    let step_x = cx / k.fx;
    for py in 0..img.height() {
        let v = (py as f64 + 0.5 - k.cy) / k.fy;
        let row_start = cz + cy * v + cx * ((0.5 - k.cx) / k.fx);
        let row = img.row_mut(py);
        for (px, pixel) in row.chunks_exact_mut(3).enumerate() {
            let ray = row_start + step_x * px as f64;
            if ray.z >= -1e-12 {
                continue;
            }
            let t = -origin.z / ray.z;
            let hx = origin.x + ray.x * t;
            let hy = origin.y + ray.y * t;
            if hx < style.table_min[0] || hx > style.table_max[0] || hy < style.table_min[1] || hy > style.table_max[1] {
                continue;
            }
            // 10 cm checker keeps depth cues without texture
            let checker = ((hx * 10.0).floor() as i64 + (hy * 10.0).floor() as i64) & 1 == 0;
            pixel.copy_from_slice(if checker { &light } else { &dark });
        }
    }
}

fn push_ring(
    items: &mut Vec<(f64, Primitive)>,
    proj: &Projector,
    center: &Vector3<f64>,
    radius: f64,
    half_width: f64,
    color: [u8; 3],
) {
    const N: usize = 48;
    let pts: Vec<Option<(f64, f64, f64)>> = (0..=N)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / N as f64;
            proj.project(&(center + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)))
        })
        .collect();
    for w in pts.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            items.push((
                0.5 * (a.2 + b.2),
                Primitive::Segment {
                    a: (a.0, a.1),
                    b: (b.0, b.1),
                    half_width,
                    color,
                },
            ));
        }
    }
}

/// Open gripper: two ticks splayed across the tool tip. Closed: one tick.
fn push_gripper(
    items: &mut Vec<(f64, Primitive)>,
    proj: &Projector,
    world: &WorldState,
    spec: &ArmSpec,
    k: &Intrinsics,
) -> Result<()> {
    let tool = tool_transform(spec, &world.arm_config)?;
    let finger = 0.03;
    let offsets: &[f64] = if world.gripper_open { &[-0.02, 0.02] } else { &[0.0] };
    for &dx in offsets {
        let a = tool.transform_point(&Vector3::new(dx, 0.0, 0.0));
        let b = tool.transform_point(&Vector3::new(dx * 1.5, 0.0, finger));
        if let (Some(pa), Some(pb)) = (proj.project(&a), proj.project(&b)) {
            let depth = 0.5 * (pa.2 + pb.2);
            items.push((
                depth - 1e-6,
                Primitive::Segment {
                    a: (pa.0, pa.1),
                    b: (pb.0, pb.1),
                    half_width: (k.fx * 0.003 / depth).max(1.0),
                    color: [230, 230, 60],
                },
            ));
        }
    }
    Ok(())
}

fn pixel_bounds(lo: f64, hi: f64, size: u32) -> Option<(u32, u32)> {
    let lo = lo.floor().max(0.0);
    let hi = hi.ceil().min(size as f64 - 1.0);
    if hi < lo || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    Some((lo as u32, hi as u32))
}

/// Fills pixels whose centers lie within `r` of `(u, v)`.
fn fill_disc(img: &mut RgbImage, u: f64, v: f64, r: f64, color: [u8; 3]) {
    let (Some((x0, x1)), Some((y0, y1))) = (
        pixel_bounds(u - r, u + r, img.width()),
        pixel_bounds(v - r, v + r, img.height()),
    ) else {
        return;
    };
    let r2 = r * r;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - u;
            let dy = y as f64 + 0.5 - v;
            if dx * dx + dy * dy <= r2 {
                img.put(x, y, color);
            }
        }
    }
}

fn fill_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), hw: f64, color: [u8; 3]) {
    let (Some((x0, x1)), Some((y0, y1))) = (
        pixel_bounds(a.0.min(b.0) - hw, a.0.max(b.0) + hw, img.width()),
        pixel_bounds(a.1.min(b.1) - hw, a.1.max(b.1) + hw, img.height()),
    ) else {
        return;
    };
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let len2 = ex * ex + ey * ey;
    let hw2 = hw * hw;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let px = x as f64 + 0.5 - a.0;
            let py = y as f64 + 0.5 - a.1;
            let t = if len2 > 0.0 { ((px * ex + py * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let dx = px - t * ex;
            let dy = py - t * ey;
            if dx * dx + dy * dy <= hw2 {
                img.put(x, y, color);
            }
        }
    }
}
