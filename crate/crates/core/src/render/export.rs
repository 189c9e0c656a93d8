//! PNG rasters of rendered layouts and SVG outlines of layouts.

use std::fmt::Write as _;
use std::path::Path;

use super::RenderedLayout;
use crate::data::placed_polygon;
use crate::error::{Error, Result};
use crate::layout::{Geometry, Layout};

/// `m` evenly spaced hues at full saturation.
pub fn default_palette(m: usize) -> Vec<[u8; 3]> {
    (0..m)
        .map(|c| {
            let h = c as f64 / m.max(1) as f64 * 6.0;
            let x = 1.0 - ((h % 2.0) - 1.0).abs();
            let (r, g, b) = match h as usize {
                0 => (1.0, x, 0.0),
                1 => (x, 1.0, 0.0),
                2 => (0.0, 1.0, x),
                3 => (0.0, x, 1.0),
                4 => (x, 0.0, 1.0),
                _ => (1.0, 0.0, x),
            };
            [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
        })
        .collect()
}

fn check_palette(palette: &[[u8; 3]], m: usize) -> Result<()> {
    if palette.len() != m {
        return Err(Error::Config(format!("palette has {} colors for {m} classes", palette.len())));
    }
    Ok(())
}

/// RGB bytes: each pixel takes the color of its strongest channel (lowest
/// channel on ties), scaled by that activation.
pub fn png_bytes(r: &RenderedLayout, palette: &[[u8; 3]]) -> Result<Vec<u8>> {
    check_palette(palette, r.channels)?;
    let mut rgb = Vec::with_capacity(r.width * r.height * 3);
    for y in 0..r.height {
        for x in 0..r.width {
            let mut best = (0, 0.0);
            for c in 0..r.channels {
                let v = r.at(x, y, c);
                if v > best.1 {
                    best = (c, v);
                }
            }
            for ch in palette[best.0] {
                rgb.push((ch as f64 * best.1.clamp(0.0, 1.0)).round() as u8);
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, r.width as u32, r.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Format(format!("png header: {e}")))?;
        w.write_image_data(&rgb).map_err(|e| Error::Format(format!("png data: {e}")))?;
    }
    Ok(out)
}

pub fn export_png(r: &RenderedLayout, palette: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, png_bytes(r, palette)?).map_err(|e| Error::io(path, e))
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Element outlines on a `size × size` canvas; elements draw in the color of
/// their most likely class with opacity equal to its probability.
pub fn layout_svg(layout: &Layout, palette: &[[u8; 3]], size: f64) -> Result<String> {
    check_palette(palette, layout.schema().len())?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="black"/>"#);
    let poly = |s: &mut String, pts: &[[f64; 2]], style: &str| {
        let p: Vec<String> = pts.iter().map(|v| format!("{:.3},{:.3}", v[0] * size, v[1] * size)).collect();
        let _ = writeln!(s, r#"<polygon points="{}" {style}/>"#, p.join(" "));
    };
    for e in layout.elements() {
        let c = e.argmax_class();
        let style =
            format!(r#"fill="none" stroke="{}" stroke-opacity="{:.3}" stroke-width="1.5""#, hex(palette[c]), e.p[c]);
        match e.geom {
            Geometry::Point { x, y } => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.3}" cy="{:.3}" r="2" fill="{}" fill-opacity="{:.3}"/>"#,
                    x * size,
                    y * size,
                    hex(palette[c]),
                    e.p[c]
                );
            }
            Geometry::Box { .. } | Geometry::CenterBox { .. } => {
                let [l, t, r, b] = e.geom.as_box().expect("box geometry");
                poly(&mut s, &[[l, t], [r, t], [r, b], [l, b]], &style);
            }
            Geometry::Triangle { v } => poly(&mut s, &[[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]], &style),
            Geometry::PosedPiece { x, y, pose, piece } => {
                poly(&mut s, &placed_polygon(piece as usize, pose as usize, x, y), &style)
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn export_svg(layout: &Layout, palette: &[[u8; 3]], size: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, layout_svg(layout, palette, size)?).map_err(|e| Error::io(path, e))
}
