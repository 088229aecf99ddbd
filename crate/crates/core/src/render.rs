//! Deterministic software rasterizer for grayscale mesh renders.
//!
//! A single `rasterize` call is pure and single-threaded: identical inputs
//! produce bit-identical pixel buffers. Visibility is resolved by a z-buffer
//! (backface culling stays off — cavity interiors are concave). Surface
//! appearance is a Lambertian term modulated by a procedural model-space
//! texture, so renders carry pose-discriminative cues without photorealism.
//!
//! Pixel centers sample at (x + 0.5, y + 0.5); shared triangle edges are
//! tie-broken with a top-left fill rule. Edge functions and interpolation
//! use only +, −, ×, ÷ in f64, which keeps results reproducible across
//! platforms.

use crate::geometry::{project_point, Intrinsics, Pose};
use crate::mesh::TriMesh;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Points closer than this (mm) are clipped before projection.
const NEAR_PLANE_MM: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("size mismatch: base is {base_w}x{base_h} but intrinsics expect {expected}")]
    SizeMismatch {
        base_w: u32,
        base_h: u32,
        expected: String,
    },
    #[error("image i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png error: {0}")]
    Png(#[from] image::ImageError),
    #[error("depth map format error: {0}")]
    DepthFormat(String),
}

/// H×W grayscale image with intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn constant(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    /// Quantize to 8-bit grayscale, the on-disk representation.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(width: u32, height: u32, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            pixels: bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        }
    }
}

/// H×W depth buffer in millimetres; background is +∞.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depths: Vec<f64>,
}

impl DepthMap {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            depths: vec![f64::INFINITY; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.depths[y as usize * self.width as usize + x as usize]
    }

    /// Fraction of pixels covered by the surface.
    pub fn coverage(&self) -> f64 {
        let covered = self.depths.iter().filter(|d| d.is_finite()).count();
        covered as f64 / self.depths.len() as f64
    }

    /// Bounding box (x0, y0, x1, y1) of covered pixels, inclusive.
    pub fn coverage_bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y).is_finite() {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }
}

/// Procedural model-space texture: a 3D checker component plus value noise,
/// both seeded, glued to the surface so appearance rotates with the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureConfig {
    pub seed: u64,
    /// Checker cell edge in mm.
    pub checker_period_mm: f64,
    /// Intensity offset of the checker component.
    pub checker_amplitude: f64,
    /// Value-noise lattice spacing in mm.
    pub noise_period_mm: f64,
    /// Intensity amplitude of the noise component.
    pub noise_amplitude: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            seed: 0x6d65_7368,
            checker_period_mm: 9.0,
            checker_amplitude: 0.16,
            noise_period_mm: 14.0,
            noise_amplitude: 0.22,
        }
    }
}

/// Lighting and background for the synthetic frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadingConfig {
    /// Direction from surface toward the light, camera space (normalized
    /// internally).
    pub light_dir: [f64; 3],
    pub ambient: f64,
    pub diffuse: f64,
    pub background: f64,
    pub texture: TextureConfig,
}

impl Default for ShadingConfig {
    fn default() -> Self {
        Self {
            light_dir: [0.35, -0.25, -1.0],
            ambient: 0.25,
            diffuse: 0.75,
            background: 0.5,
            texture: TextureConfig::default(),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a lattice corner to [0, 1).
fn lattice_value(seed: u64, ix: i64, iy: i64, iz: i64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64(ix as u64 ^ splitmix64(iy as u64 ^ splitmix64(iz as u64))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise over a seeded lattice, in [0, 1].
fn value_noise(seed: u64, p: Vector3<f64>) -> f64 {
    let fx = p.x.floor();
    let fy = p.y.floor();
    let fz = p.z.floor();
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (tx, ty, tz) = (smoothstep(p.x - fx), smoothstep(p.y - fy), smoothstep(p.z - fz));
    let mut acc = 0.0;
    for dz in 0..2i64 {
        for dy in 0..2i64 {
            for dx in 0..2i64 {
                let w = (if dx == 0 { 1.0 - tx } else { tx })
                    * (if dy == 0 { 1.0 - ty } else { ty })
                    * (if dz == 0 { 1.0 - tz } else { tz });
                acc += w * lattice_value(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

fn texture_at(cfg: &TextureConfig, model_point: Vector3<f64>) -> f64 {
    let cell = model_point / cfg.checker_period_mm;
    let parity =
        (cell.x.floor() as i64 + cell.y.floor() as i64 + cell.z.floor() as i64).rem_euclid(2);
    let checker = if parity == 0 { 1.0 } else { -1.0 };
    let noise = value_noise(cfg.seed, model_point / cfg.noise_period_mm);
    (0.72 + cfg.checker_amplitude * checker + cfg.noise_amplitude * (2.0 * noise - 1.0))
        .clamp(0.1, 1.0)
}

/// One clipped polygon vertex: camera-space position plus the model-space
/// position it interpolates from.
#[derive(Clone, Copy)]
struct ClipVertex {
    cam: Vector3<f64>,
    model: Vector3<f64>,
}

/// Sutherland–Hodgman clip of a triangle against the near plane z ≥ NEAR.
fn clip_near(tri: [ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.cam.z >= NEAR_PLANE_MM;
        let b_in = b.cam.z >= NEAR_PLANE_MM;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE_MM - a.cam.z) / (b.cam.z - a.cam.z);
            out.push(ClipVertex {
                cam: a.cam + (b.cam - a.cam) * t,
                model: a.model + (b.model - a.model) * t,
            });
        }
    }
    out
}

#[inline]
fn orient2d(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> f64 {
    (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
}

/// Top-left fill rule for an edge vector in y-down screen coordinates.
#[inline]
fn is_top_left(ex: f64, ey: f64) -> bool {
    (ey == 0.0 && ex > 0.0) || ey < 0.0
}

/// Render the mesh under `pose` and `intrinsics` into an `(image, depth)`
/// pair of the requested `(height, width)`. An entirely off-screen mesh
/// yields a background-only image; query [`DepthMap::coverage`] to flag it.
pub fn rasterize(
    mesh: &TriMesh,
    pose: &Pose,
    intrinsics: &Intrinsics,
    size: (u32, u32),
    shading: &ShadingConfig,
) -> (Image, DepthMap) {
    let (height, width) = size;
    let mut image = Image::constant(width, height, shading.background as f32);
    let mut depth = DepthMap::empty(width, height);

    let cam_verts: Vec<Vector3<f64>> = mesh
        .vertices
        .iter()
        .map(|v| pose.transform_point(*v))
        .collect();

    let light = Vector3::new(
        shading.light_dir[0],
        shading.light_dir[1],
        shading.light_dir[2],
    )
    .normalize();

    for face in &mesh.faces {
        let tri = [
            ClipVertex {
                cam: cam_verts[face[0] as usize],
                model: mesh.vertices[face[0] as usize],
            },
            ClipVertex {
                cam: cam_verts[face[1] as usize],
                model: mesh.vertices[face[1] as usize],
            },
            ClipVertex {
                cam: cam_verts[face[2] as usize],
                model: mesh.vertices[face[2] as usize],
            },
        ];

        // Flat shading from the camera-space face normal; |n·l| lights
        // concave interiors the same as convex fronts.
        let normal = (tri[1].cam - tri[0].cam).cross(&(tri[2].cam - tri[0].cam));
        let n_norm = normal.norm();
        if n_norm == 0.0 {
            continue;
        }
        let lambert = (normal / n_norm).dot(&light).abs();
        let shade = (shading.ambient + shading.diffuse * lambert).clamp(0.0, 1.0);

        let poly = clip_near(tri);
        if poly.len() < 3 {
            continue;
        }
        for k in 1..poly.len() - 1 {
            raster_triangle(
                &[poly[0], poly[k], poly[k + 1]],
                intrinsics,
                shade,
                &shading.texture,
                &mut image,
                &mut depth,
            );
        }
    }
    (image, depth)
}

fn raster_triangle(
    tri: &[ClipVertex; 3],
    k: &Intrinsics,
    shade: f64,
    texture: &TextureConfig,
    image: &mut Image,
    depth: &mut DepthMap,
) {
    // Project. All z are ≥ NEAR_PLANE after clipping.
    let mut pts = [[0.0f64; 2]; 3];
    let mut inv_z = [0.0f64; 3];
    for (i, v) in tri.iter().enumerate() {
        pts[i] = [
            k.fx * v.cam.x / v.cam.z + k.cx,
            k.fy * v.cam.y / v.cam.z + k.cy,
        ];
        inv_z[i] = 1.0 / v.cam.z;
    }
    let mut model_over_z = [tri[0].model * inv_z[0], tri[1].model * inv_z[1], tri[2].model * inv_z[2]];

    // Normalize orientation so the edge functions are non-negative inside
    // (backface culling stays off).
    let area = orient2d(pts[0][0], pts[0][1], pts[1][0], pts[1][1], pts[2][0], pts[2][1]);
    if area == 0.0 {
        return;
    }
    if area < 0.0 {
        pts.swap(1, 2);
        inv_z.swap(1, 2);
        model_over_z.swap(1, 2);
    }

    let min_x = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);

    let x0 = (min_x - 0.5).floor().max(0.0) as i64;
    let x1 = (max_x - 0.5).ceil().min(f64::from(image.width - 1)) as i64;
    let y0 = (min_y - 0.5).floor().max(0.0) as i64;
    let y1 = (max_y - 0.5).ceil().min(f64::from(image.height - 1)) as i64;
    if x0 > x1 || y0 > y1 {
        return;
    }

    // Edge i runs opposite vertex i; tie pixels go to top/left edges only.
    let edges = [
        (pts[1], pts[2]),
        (pts[2], pts[0]),
        (pts[0], pts[1]),
    ];
    let accept_zero: Vec<bool> = edges
        .iter()
        .map(|(a, b)| is_top_left(b[0] - a[0], b[1] - a[1]))
        .collect();

    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let w = [
                orient2d(edges[0].0[0], edges[0].0[1], edges[0].1[0], edges[0].1[1], px, py),
                orient2d(edges[1].0[0], edges[1].0[1], edges[1].1[0], edges[1].1[1], px, py),
                orient2d(edges[2].0[0], edges[2].0[1], edges[2].1[0], edges[2].1[1], px, py),
            ];
            let inside = (0..3).all(|i| w[i] > 0.0 || (w[i] == 0.0 && accept_zero[i]));
            if !inside {
                continue;
            }
            let wsum = w[0] + w[1] + w[2];
            let l = [w[0] / wsum, w[1] / wsum, w[2] / wsum];
            // Perspective-correct: interpolate 1/z and model/z linearly in
            // screen space, exact for planar triangles.
            let inv_depth = l[0] * inv_z[0] + l[1] * inv_z[1] + l[2] * inv_z[2];
            let z = 1.0 / inv_depth;
            let idx = y as usize * image.width as usize + x as usize;
            if z < depth.depths[idx] {
                depth.depths[idx] = z;
                let model_p =
                    (model_over_z[0] * l[0] + model_over_z[1] * l[1] + model_over_z[2] * l[2]) * z;
                let intensity = (shade * texture_at(texture, model_p)).clamp(0.0, 1.0);
                image.pixels[idx] = intensity as f32;
            }
        }
    }
}

/// RGB image used only for qualitative overlays.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 3]>,
}

impl ColorImage {
    pub fn from_gray(img: &Image) -> Self {
        Self {
            width: img.width,
            height: img.height,
            pixels: img.pixels.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    #[inline]
    fn set(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        self.pixels[y as usize * self.width as usize + x as usize] = rgb;
    }

    /// 1-pixel rectangle outline, clipped to the image.
    pub fn draw_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, rgb: [f32; 3]) {
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        for x in x0.max(0)..=x1.min(w - 1) {
            if (0..h).contains(&y0) {
                self.set(x as u32, y0 as u32, rgb);
            }
            if (0..h).contains(&y1) {
                self.set(x as u32, y1 as u32, rgb);
            }
        }
        for y in y0.max(0)..=y1.min(h - 1) {
            if (0..w).contains(&x0) {
                self.set(x0 as u32, y as u32, rgb);
            }
            if (0..w).contains(&x1) {
                self.set(x1 as u32, y as u32, rgb);
            }
        }
    }
}

/// Overlay appearance: blended silhouette plus per-pose bounding boxes
/// (ground truth conventionally green, predictions cyan).
#[derive(Debug, Clone)]
pub struct OverlayConfig {
    /// Blend factor of the rendered silhouette over the base image.
    pub alpha: f32,
    /// Tint of the blended silhouette.
    pub fill_rgb: [f32; 3],
    /// Poses whose projected-vertex bounding boxes are outlined.
    pub boxes: Vec<(Pose, [f32; 3])>,
    pub shading: ShadingConfig,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            fill_rgb: [1.0, 0.85, 0.1],
            boxes: Vec::new(),
            shading: ShadingConfig::default(),
        }
    }
}

pub const OVERLAY_GREEN: [f32; 3] = [0.0, 1.0, 0.0];
pub const OVERLAY_CYAN: [f32; 3] = [0.0, 1.0, 1.0];

/// Bounding box of the projected vertices, `(x0, y0, x1, y1)` in pixels, or
/// `None` when every vertex is behind the camera.
pub fn projected_bbox(mesh: &TriMesh, pose: &Pose, k: &Intrinsics) -> Option<(f64, f64, f64, f64)> {
    let mut bbox: Option<(f64, f64, f64, f64)> = None;
    for v in &mesh.vertices {
        if let Ok((x, y)) = project_point(k, pose, *v) {
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    bbox
}

/// Alpha-blend a silhouette render of `mesh` at `pose` over `base`, then
/// outline the configured bounding boxes.
pub fn render_overlay(
    base: &Image,
    mesh: &TriMesh,
    pose: &Pose,
    k: &Intrinsics,
    cfg: &OverlayConfig,
) -> Result<ColorImage, RenderError> {
    if k.validate(base.width, base.height).is_err() {
        return Err(RenderError::SizeMismatch {
            base_w: base.width,
            base_h: base.height,
            expected: format!("principal point ({}, {})", k.cx, k.cy),
        });
    }
    let (render, depth_map) = rasterize(mesh, pose, k, (base.height, base.width), &cfg.shading);
    let mut out = ColorImage::from_gray(base);
    if cfg.alpha > 0.0 {
        for (i, d) in depth_map.depths.iter().enumerate() {
            if d.is_finite() {
                let v = render.pixels[i];
                let dst = &mut out.pixels[i];
                for c in 0..3 {
                    dst[c] = (1.0 - cfg.alpha) * dst[c] + cfg.alpha * v * cfg.fill_rgb[c];
                }
            }
        }
    }
    for (box_pose, rgb) in &cfg.boxes {
        if let Some((x0, y0, x1, y1)) = projected_bbox(mesh, box_pose, k) {
            out.draw_rect(
                x0.floor() as i64,
                y0.floor() as i64,
                x1.ceil() as i64,
                y1.ceil() as i64,
                *rgb,
            );
        }
    }
    Ok(out)
}

/// Write an 8-bit grayscale PNG.
pub fn write_png(img: &Image, path: impl AsRef<Path>) -> Result<(), RenderError> {
    let buf: image::GrayImage =
        image::ImageBuffer::from_raw(img.width, img.height, img.to_u8())
            .expect("buffer size matches dimensions");
    buf.save(path.as_ref())?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Image, RenderError> {
    let img = image::open(path.as_ref())?.to_luma8();
    Ok(Image::from_u8(img.width(), img.height(), img.as_raw()))
}

pub fn write_color_png(img: &ColorImage, path: impl AsRef<Path>) -> Result<(), RenderError> {
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .flat_map(|rgb| rgb.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    let buf: image::RgbImage = image::ImageBuffer::from_raw(img.width, img.height, bytes)
        .expect("buffer size matches dimensions");
    buf.save(path.as_ref())?;
    Ok(())
}

/// Depth map file: magic `PFDM`, u32 width, u32 height (little-endian),
/// then row-major little-endian f32 depths with +∞ for background.
pub fn write_pfdm(depth: &DepthMap, path: impl AsRef<Path>) -> Result<(), RenderError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    f.write_all(b"PFDM")?;
    f.write_all(&depth.width.to_le_bytes())?;
    f.write_all(&depth.height.to_le_bytes())?;
    for d in &depth.depths {
        f.write_all(&(*d as f32).to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_pfdm(path: impl AsRef<Path>) -> Result<DepthMap, RenderError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != b"PFDM" {
        return Err(RenderError::DepthFormat("bad magic".into()));
    }
    let mut u32_buf = [0u8; 4];
    f.read_exact(&mut u32_buf)?;
    let width = u32::from_le_bytes(u32_buf);
    f.read_exact(&mut u32_buf)?;
    let height = u32::from_le_bytes(u32_buf);
    let n = width as usize * height as usize;
    let mut depths = Vec::with_capacity(n);
    for _ in 0..n {
        f.read_exact(&mut u32_buf)?;
        depths.push(f64::from(f32::from_le_bytes(u32_buf)));
    }
    Ok(DepthMap {
        width,
        height,
        depths,
    })
}
