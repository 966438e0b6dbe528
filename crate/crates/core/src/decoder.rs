//! Iterative reconstruction from a [`FractalCode`].
//!
//! Every pass reads only the previous iterate (Jacobi style), so the result
//! does not depend on the order in which records are applied.

use crate::encoder::{FractalCode, TransformRecord};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pixmap::{decimated_window, GrayImage};

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeSettings {
    pub iterations: usize,
    pub initial_gray: u8,
    /// Stop once the largest per-pixel change falls below this.
    pub convergence_epsilon: f64,
    pub execution: Execution,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            iterations: 12,
            initial_gray: 128,
            convergence_epsilon: 0.5,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub image: GrayImage,
    pub iterations_used: usize,
    /// Largest per-pixel change in the last pass.
    pub final_delta: f64,
    /// Largest per-pixel change of every pass, in order.
    pub deltas: Vec<f64>,
}

/// A record with its map dequantized.
struct Map {
    record: TransformRecord,
    s: f64,
    o: f64,
}

fn prepare(code: &FractalCode) -> Result<Vec<Map>> {
    code.records
        .iter()
        .map(|r| {
            let b = r.range_size;
            let inside = r.range_x + b <= code.width
                && r.range_y + b <= code.height
                && r.domain_x + 2 * b <= code.width
                && r.domain_y + 2 * b <= code.height;
            if !inside || b == 0 {
                return Err(Error::CorruptCode(format!(
                    "record at ({},{}) size {b} reads or writes outside {}x{}",
                    r.range_x, r.range_y, code.width, code.height
                )));
            }
            if r.s_index as usize >= code.codebook(b).len() {
                return Err(Error::CorruptCode(format!(
                    "s code {} out of range",
                    r.s_index
                )));
            }
            Ok(Map {
                record: *r,
                s: code.s_value(r),
                o: code.o_value(r),
            })
        })
        .collect()
}

fn apply(maps: &[Map], prev: &GrayImage, exec: Execution) -> GrayImage {
    let blocks = exec.map(maps, |m| {
        let r = &m.record;
        let d = decimated_window(prev, r.domain_x, r.domain_y, r.range_size);
        r.isometry
            .transform(r.range_size, &d)
            .into_iter()
            .map(|v| (m.s * v + m.o).round().clamp(0.0, 255.0) as u8)
            .collect::<Vec<u8>>()
    });
    let mut out = prev.clone();
    let width = out.width();
    let data = out.data_mut();
    for (m, block) in maps.iter().zip(blocks) {
        let r = &m.record;
        for (i, row) in block.chunks_exact(r.range_size).enumerate() {
            let start = (r.range_y + i) * width + r.range_x;
            data[start..start + r.range_size].copy_from_slice(row);
        }
    }
    out
}

fn max_delta(a: &GrayImage, b: &GrayImage) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x.abs_diff(y))
        .max()
        .map_or(0.0, f64::from)
}

/// One application of the code's operator to `image`.
pub fn iterate_once(image: &GrayImage, code: &FractalCode) -> Result<GrayImage> {
    iterate_once_with(image, code, Execution::default())
}

pub fn iterate_once_with(
    image: &GrayImage,
    code: &FractalCode,
    exec: Execution,
) -> Result<GrayImage> {
    if image.width() != code.width || image.height() != code.height {
        return Err(Error::CorruptCode(format!(
            "image {}x{} does not match code {}x{}",
            image.width(),
            image.height(),
            code.width,
            code.height
        )));
    }
    Ok(apply(&prepare(code)?, image, exec))
}

pub fn decode(code: &FractalCode, settings: &DecodeSettings) -> Result<Decoded> {
    if settings.iterations == 0 {
        return Err(Error::Config("decode needs at least one iteration".into()));
    }
    let maps = prepare(code)?;
    let mut image = GrayImage::filled(code.width, code.height, settings.initial_gray)?;
    let mut deltas = Vec::with_capacity(settings.iterations);
    for _ in 0..settings.iterations {
        let next = apply(&maps, &image, settings.execution);
        let delta = max_delta(&image, &next);
        image = next;
        deltas.push(delta);
        if delta < settings.convergence_epsilon {
            break;
        }
    }
    Ok(Decoded {
        image,
        iterations_used: deltas.len(),
        final_delta: *deltas.last().expect("at least one pass"),
        deltas,
    })
}
