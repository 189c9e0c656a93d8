// Rasterizes a small mixed layout, checks the fast path against the
// per-pixel reference and writes PNG and SVG files.

use wirelayout::render::{compose, default_palette, export_png, export_svg, reference_rasterize, RenderConfig};
use wirelayout::{ClassSchema, Element, Geometry, Layout, Result};

pub struct RenderSummary {
    pub max_diff: f64,
    pub lit_pixels: Vec<usize>,
    pub files: Vec<std::path::PathBuf>,
}

fn page() -> Result<Layout> {
    let schema = ClassSchema::new(["title", "body", "figure"])?;
    Layout::new(
        schema,
        vec![
            Element::one_hot(0, 3, Geometry::Box { xl: 0.1, yt: 0.08, xr: 0.9, yb: 0.2 }),
            Element::one_hot(1, 3, Geometry::Box { xl: 0.1, yt: 0.28, xr: 0.55, yb: 0.9 }),
            Element::new(vec![0.0, 0.3, 0.9], Geometry::Box { xl: 0.62, yt: 0.28, xr: 0.9, yb: 0.6 }),
        ],
    )
}

pub fn run_example() -> Result<RenderSummary> {
    let layout = page()?;
    let cfg = RenderConfig::square(48)?;
    let fast = compose(&layout, &cfg)?;
    let slow = reference_rasterize(&layout, &cfg)?;
    let max_diff = fast.max_abs_diff(&slow);
    let lit_pixels =
        (0..layout.schema().len()).map(|c| fast.channel(c).iter().filter(|&&v| v > 0.0).count()).collect::<Vec<_>>();

    let dir = std::env::temp_dir().join(format!("wirelayout-render-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| wirelayout::Error::io(&dir, e))?;
    let palette = default_palette(layout.schema().len());
    let png = dir.join("page.png");
    let svg = dir.join("page.svg");
    export_png(&fast, &palette, &png)?;
    export_svg(&layout, &palette, 256.0, &svg)?;

    println!("fast vs reference max |diff| = {max_diff:.3e}");
    for (name, n) in layout.schema().names().iter().zip(&lit_pixels) {
        println!("{name:>7}: {n} lit pixels");
    }
    println!("wrote {} and {}", png.display(), svg.display());
    Ok(RenderSummary { max_diff, lit_pixels, files: vec![png, svg] })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
