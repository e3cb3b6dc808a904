//! Orthographic top-down rasterizer used by the raw-pixel baseline.
//!
//! Cubes are squares, spheres are circles and cylinders are upward
//! triangles, all sized by object radius. Objects are painted back to front
//! (descending `y`, then insertion order), rubber is drawn darker than metal.

use std::io::BufWriter;
use std::path::Path;

use crate::scene::{ObjectSpec, Scene};

pub const BACKGROUND: [f32; 3] = [0.9, 0.9, 0.9];

/// CLEVR color palette, indexed like [`crate::scene::COLORS`].
pub const PALETTE: [[u8; 3]; 8] = [
    [87, 87, 87],
    [173, 35, 35],
    [42, 75, 215],
    [29, 105, 20],
    [129, 74, 25],
    [129, 38, 192],
    [41, 208, 208],
    [255, 238, 51],
];

/// Brightness multiplier per material (rubber, metal).
pub const MATERIAL_BRIGHTNESS: [f32; 2] = [0.7, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    /// `H x W x 3` values in [0, 1].
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let o = (row * self.width + col) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut encoder =
            png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let mut writer = encoder.write_header().map_err(std::io::Error::other)?;
        writer
            .write_image_data(&bytes)
            .map_err(std::io::Error::other)?;
        Ok(())
    }
}

/// Whether scene-space point `(x, y)` lies inside the object's top-down footprint.
pub fn covers(object: &ObjectSpec, x: f64, y: f64) -> bool {
    let r = object.radius();
    let dx = x - object.position[0];
    let dy = y - object.position[1];
    match object.shape {
        0 => dx.abs() <= r && dy.abs() <= r,
        1 => dx * dx + dy * dy <= r * r,
        _ => {
            // apex at +y, base at -y
            if dy < -r || dy > r {
                return false;
            }
            let half_width = r * (r - dy) / (2.0 * r);
            dx.abs() <= half_width
        }
    }
}

/// Scene coordinates of the center of pixel `(row, col)`. Row 0 is the far
/// (`+y`) edge of the scene box.
pub fn pixel_center(scene: &Scene, height: usize, width: usize, row: usize, col: usize) -> (f64, f64) {
    let b = &scene.bounds;
    let x = b.x[0] + (col as f64 + 0.5) / width as f64 * (b.x[1] - b.x[0]);
    let y = b.y[1] - (row as f64 + 0.5) / height as f64 * (b.y[1] - b.y[0]);
    (x, y)
}

pub fn object_color(object: &ObjectSpec) -> [f32; 3] {
    let rgb = PALETTE[object.color as usize];
    let k = MATERIAL_BRIGHTNESS[object.material as usize];
    [
        rgb[0] as f32 / 255.0 * k,
        rgb[1] as f32 / 255.0 * k,
        rgb[2] as f32 / 255.0 * k,
    ]
}

pub fn rasterize_scene(scene: &Scene, height: usize, width: usize) -> Image {
    assert!(height >= 32 && width >= 32, "raster must be at least 32x32");
    let mut pixels = Vec::with_capacity(height * width * 3);
    for _ in 0..height * width {
        pixels.extend_from_slice(&BACKGROUND);
    }
    let mut order: Vec<usize> = (0..scene.objects.len()).collect();
    order.sort_by(|&a, &b| {
        scene.objects[b].position[1]
            .total_cmp(&scene.objects[a].position[1])
            .then(a.cmp(&b))
    });
    for index in order {
        let object = &scene.objects[index];
        let color = object_color(object);
        for row in 0..height {
            for col in 0..width {
                let (x, y) = pixel_center(scene, height, width, row, col);
                if covers(object, x, y) {
                    let o = (row * width + col) * 3;
                    pixels[o..o + 3].copy_from_slice(&color);
                }
            }
        }
    }
    Image {
        height,
        width,
        pixels,
    }
}
