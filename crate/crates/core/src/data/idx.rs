//! IDX container ingestion (the MNIST distribution format) and conversion of
//! grayscale rasters to point layouts.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::error::{Error, Result};
use crate::layout::{ClassSchema, Element, Geometry, Layout};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Row-major grayscale image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RasterSet {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: header truncated")))
}

/// Parses in-memory IDX image and label files.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<RasterSet> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic {magic:#010x}")));
    }
    let count = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let body = &images[16..];
    let per = rows * cols;
    if body.len() != count * per {
        return Err(Error::Format(format!(
            "images: expected {} payload bytes for {count} {rows}x{cols} images, found {}",
            count * per,
            body.len()
        )));
    }

    let magic = be_u32(labels, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {magic:#010x}")));
    }
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    let label_body = &labels[8..];
    if label_body.len() != n_labels {
        return Err(Error::Format(format!("labels: expected {n_labels} payload bytes, found {}", label_body.len())));
    }
    if n_labels != count {
        return Err(Error::Format(format!("{count} images but {n_labels} labels")));
    }

    let images = body
        .chunks_exact(per.max(1))
        .take(count)
        .map(|c| GrayImage { width: cols, height: rows, pixels: c.iter().map(|&v| v as f64 / 255.0).collect() })
        .collect();
    Ok(RasterSet { images, labels: label_body.to_vec() })
}

pub fn load_idx_images(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RasterSet> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    parse_idx(&read(images_path.as_ref())?, &read(labels_path.as_ref())?)
}

/// Samples foreground pixels (value `> threshold`) as a single-class point
/// layout; with replacement only when there are fewer than `n_points`.
pub fn points_from_raster<R: Rng + ?Sized>(
    img: &GrayImage,
    n_points: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<Layout> {
    let fg: Vec<(usize, usize)> = (0..img.height)
        .flat_map(|y| (0..img.width).map(move |x| (x, y)))
        .filter(|&(x, y)| img.at(x, y) > threshold)
        .collect();
    if fg.is_empty() {
        return Err(Error::EmptyForeground { threshold });
    }
    let picks: Vec<usize> = if fg.len() >= n_points {
        sample_indices(rng, fg.len(), n_points).into_vec()
    } else {
        (0..n_points).map(|_| rng.random_range(0..fg.len())).collect()
    };
    let sx = (img.width.max(2) - 1) as f64;
    let sy = (img.height.max(2) - 1) as f64;
    let elements = picks
        .into_iter()
        .map(|i| {
            let (x, y) = fg[i];
            Element::one_hot(0, 1, Geometry::Point { x: x as f64 / sx, y: y as f64 / sy })
        })
        .collect();
    Layout::new(ClassSchema::points(), elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn images_file(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [0x803, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(payload);
        v
    }

    fn labels_file(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&0x801u32.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn two_image_fixture() {
        let payload: Vec<u8> = (0..2 * 3 * 4).map(|i| i as u8 * 10).collect();
        let set = parse_idx(&images_file(2, 3, 4, &payload), &labels_file(&[7, 1])).unwrap();
        assert_eq!(set.images.len(), 2);
        assert_eq!((set.images[0].width, set.images[0].height), (4, 3));
        assert_eq!(set.labels, vec![7, 1]);
        assert_eq!(set.images[1].at(1, 0), 130.0 / 255.0);
    }

    #[test]
    fn format_errors() {
        let payload = vec![0u8; 12];
        let good = images_file(1, 3, 4, &payload);
        let mut bad = good.clone();
        bad[..4].copy_from_slice(&0u32.to_be_bytes());
        assert!(matches!(parse_idx(&bad, &labels_file(&[1])), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&good[..20], &labels_file(&[1])), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&good, &labels_file(&[1, 2])), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&good, &labels_file(&[1])[..6]), Err(Error::Format(_))));
    }

    #[test]
    fn exhaustive_sampling_takes_every_pixel_once() {
        let mut px = vec![0.0; 16 * 16];
        for v in px.iter_mut().take(128) {
            *v = 1.0;
        }
        let img = GrayImage::new(16, 16, px).unwrap();
        let l = points_from_raster(&img, 128, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut seen: Vec<(i64, i64)> = l
            .elements()
            .iter()
            .map(|e| match e.geom {
                Geometry::Point { x, y } => ((x * 15.0).round() as i64, (y * 15.0).round() as i64),
                _ => unreachable!(),
            })
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 128);
        for (x, y) in seen {
            assert!(img.at(x as usize, y as usize) > 0.5);
        }
    }

    #[test]
    fn sparse_foreground_and_empty() {
        let mut px = vec![0.0; 25];
        px[7] = 0.9;
        px[13] = 0.6;
        let img = GrayImage::new(5, 5, px).unwrap();
        let l = points_from_raster(&img, 10, 0.5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(l.len(), 10);
        for e in l.elements() {
            let Geometry::Point { x, y } = e.geom else { unreachable!() };
            assert!(img.at((x * 4.0).round() as usize, (y * 4.0).round() as usize) > 0.5);
        }
        let black = GrayImage::new(5, 5, vec![0.0; 25]).unwrap();
        let res = points_from_raster(&black, 4, 0.5, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(res, Err(Error::EmptyForeground { .. })));
    }
}
