use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::GradCheck;
use crate::layout::{ClassSchema, Element, Geometry};

fn cfg(w: usize, h: usize) -> RenderConfig {
    RenderConfig::new(w, h).unwrap()
}

fn single(geom: Geometry, cfg: &RenderConfig) -> RenderedLayout {
    let l = Layout::new(ClassSchema::points(), vec![Element::one_hot(0, 1, geom)]).unwrap();
    compose(&l, cfg).unwrap()
}

fn lit(r: &RenderedLayout) -> Vec<(usize, usize, f64)> {
    let mut v = Vec::new();
    for y in 0..r.height {
        for x in 0..r.width {
            if r.at(x, y, 0) != 0.0 {
                v.push((x, y, r.at(x, y, 0)));
            }
        }
    }
    v
}

#[test]
fn point_on_a_pixel_center() {
    let c = cfg(9, 9);
    let r = single(Geometry::Point { x: 0.25, y: 0.375 }, &c);
    assert_eq!(lit(&r), vec![(2, 3, 1.0)]);
}

#[test]
fn point_between_pixels() {
    let c = cfg(9, 9);
    let r = single(Geometry::Point { x: 2.5 / 8.0, y: 0.375 }, &c);
    assert_eq!(lit(&r), vec![(2, 3, 0.5), (3, 3, 0.5)]);
}

#[test]
fn point_partition_of_unity() {
    let c = cfg(16, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let r = single(Geometry::Point { x, y }, &c);
        let px = lit(&r);
        assert!(px.len() <= 4);
        let s: f64 = px.iter().map(|p| p.2).sum();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }
}

#[test]
fn point_translates_by_whole_pixels() {
    let c = cfg(10, 10);
    let base = single(Geometry::Point { x: 0.31, y: 0.47 }, &c);
    let moved = single(Geometry::Point { x: 0.31 + 2.0 / 9.0, y: 0.47 + 1.0 / 9.0 }, &c);
    for (x, y, v) in lit(&base) {
        assert!((moved.at(x + 2, y + 1, 0) - v).abs() < 1e-12);
    }
    assert_eq!(lit(&base).len(), lit(&moved).len());
}

#[test]
fn off_canvas_point_is_blank() {
    let r = single(Geometry::Point { x: 3.0, y: -2.0 }, &cfg(8, 8));
    assert!(lit(&r).is_empty());
}

#[test]
fn box_on_pixel_corners() {
    // (1,1)-(4,3) on a 6x6 grid. Each edge term multiplies clamp gates that
    // are zero at the box's own corners, so corners render 0.
    let c = cfg(6, 6);
    let r = single(Geometry::Box { xl: 0.2, yt: 0.2, xr: 0.8, yb: 0.6 }, &c);
    let mut want = Vec::new();
    for y in 0..6 {
        for x in 0..6 {
            let on_v = (x == 1 || x == 4) && (2..=2).contains(&y);
            let on_h = (y == 1 || y == 3) && (2..=3).contains(&x);
            if on_v || on_h {
                want.push((x, y, 1.0));
            }
        }
    }
    assert_eq!(lit(&r), want);
    let oracle = reference_rasterize(
        &Layout::new(
            ClassSchema::points(),
            vec![Element::one_hot(0, 1, Geometry::Box { xl: 0.2, yt: 0.2, xr: 0.8, yb: 0.6 })],
        )
        .unwrap(),
        &c,
    )
    .unwrap();
    assert_eq!(r, oracle);
}

#[test]
fn swapped_corners_render_the_canonical_box() {
    let c = cfg(9, 9);
    let canon = single(Geometry::Box { xl: 0.2, yt: 0.3, xr: 0.7, yb: 0.55 }, &c);
    assert!(!lit(&canon).is_empty());
    for g in [
        Geometry::Box { xl: 0.7, yt: 0.3, xr: 0.2, yb: 0.55 },
        Geometry::Box { xl: 0.2, yt: 0.55, xr: 0.7, yb: 0.3 },
        Geometry::Box { xl: 0.7, yt: 0.55, xr: 0.2, yb: 0.3 },
    ] {
        assert_eq!(single(g, &c), canon);
    }
}

#[test]
fn zero_area_shapes_render_blank() {
    let c = cfg(8, 8);
    let r = single(Geometry::Box { xl: 0.4, yt: 0.4, xr: 0.4, yb: 0.4 }, &c);
    assert!(lit(&r).is_empty());
    let r = single(Geometry::Triangle { v: [0.3, 0.6, 0.3, 0.6, 0.3, 0.6] }, &c);
    assert!(lit(&r).is_empty());
}

#[test]
fn right_triangle_edges() {
    let c = cfg(7, 7);
    let s = 6.0;
    let r = single(Geometry::Triangle { v: [1.0 / s, 1.0 / s, 5.0 / s, 1.0 / s, 1.0 / s, 4.0 / s] }, &c);
    for x in 2..=4 {
        assert_eq!(r.at(x, 1, 0), 1.0, "top edge at {x}");
    }
    for y in 2..=3 {
        assert_eq!(r.at(1, y, 0), 1.0, "vertical edge at {y}");
    }
    // Hypotenuse y = 1 + 3(5 - x)/4 crosses pixel column 3 at y = 2.5.
    assert_eq!(r.at(3, 2, 0), 0.5);
    assert_eq!(r.at(3, 3, 0), 0.5);
    assert_eq!(r.at(5, 5, 0), 0.0);
}

#[test]
fn compose_channel_semantics() {
    let c = cfg(8, 8);
    let s = ClassSchema::new(["a", "b"]).unwrap();
    let g = Geometry::Box { xl: 0.1, yt: 0.2, xr: 0.7, yb: 0.9 };
    let one = Layout::new(s.clone(), vec![Element::one_hot(1, 2, g)]).unwrap();
    let r = compose(&one, &c).unwrap();
    assert!(r.channel(0).iter().all(|&v| v == 0.0));
    let f = single(g, &c);
    assert_eq!(r.channel(1), f.channel(0));

    let two = Layout::new(s, vec![Element::new(vec![0.0, 0.3], g), Element::new(vec![0.0, 0.8], g)]).unwrap();
    let r = compose(&two, &c).unwrap();
    for (a, b) in r.channel(1).iter().zip(f.channel(0)) {
        assert_eq!(*a, 0.8 * b);
    }
}

fn random_layout(rng: &mut ChaCha8Rng, kind: GeomKind, n: usize, m: usize) -> Layout {
    let schema = ClassSchema::new((0..m).map(|i| format!("c{i}"))).unwrap();
    let elements = (0..n)
        .map(|_| {
            let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let geom = match kind {
                GeomKind::Point => Geometry::Point { x: rng.random_range(0.0..1.0), y: rng.random_range(0.0..1.0) },
                GeomKind::Box => {
                    let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                    let (c, d) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                    Geometry::Box { xl: f64::min(a, b), yt: f64::min(c, d), xr: f64::max(a, b), yb: f64::max(c, d) }
                }
                _ => {
                    let mut v = [0.0; 6];
                    for x in &mut v {
                        *x = rng.random_range(0.0..1.0);
                    }
                    Geometry::Triangle { v }
                }
            };
            Element::new(p, geom)
        })
        .collect();
    Layout::new(schema, elements).unwrap()
}

#[test]
fn compose_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in [GeomKind::Point, GeomKind::Box, GeomKind::Triangle] {
        for _ in 0..10 {
            let l = random_layout(&mut rng, kind, 4, 3);
            let c = cfg(rng.random_range(2..20), rng.random_range(2..20));
            let d = compose(&l, &c).unwrap().max_abs_diff(&reference_rasterize(&l, &c).unwrap());
            assert!(d < 1e-9, "{kind:?} {d}");
        }
    }
}

#[test]
fn vertical_and_tangram_edges_match_reference() {
    let c = cfg(16, 16);
    let tri = Geometry::Triangle { v: [0.3, 0.1, 0.3, 0.8, 0.9, 0.5] };
    let l = Layout::new(ClassSchema::points(), vec![Element::one_hot(0, 1, tri)]).unwrap();
    let r = compose(&l, &c).unwrap();
    assert!(r.max_abs_diff(&reference_rasterize(&l, &c).unwrap()) < 1e-12);
    // x = 0.3 maps to pixel 4.5: the vertical edge lights columns 4 and 5.
    assert_eq!(r.at(4, 6, 0), 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for l in crate::data::synth_tangram_layouts(&mut rng, 3).unwrap() {
        let c = cfg(32, 32);
        let d = compose(&l, &c).unwrap().max_abs_diff(&reference_rasterize(&l, &c).unwrap());
        assert!(d < 1e-9);
    }
}

#[test]
fn values_bounded_by_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = random_layout(&mut rng, GeomKind::Box, 5, 3);
    let r = compose(&l, &cfg(12, 12)).unwrap();
    for c in 0..3 {
        let pmax = l.elements().iter().map(|e| e.p[c]).fold(0.0, f64::max);
        assert!(r.channel(c).iter().all(|&v| (0.0..=pmax).contains(&v)));
    }
}

#[test]
fn raising_a_probability_never_darkens() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = random_layout(&mut rng, GeomKind::Triangle, 4, 2);
    let before = compose(&l, &cfg(12, 12)).unwrap();
    let mut els = l.elements().to_vec();
    els[2].p[1] = (els[2].p[1] * 2.0).min(1.0);
    let after = compose(&Layout::new(l.schema().clone(), els).unwrap(), &cfg(12, 12)).unwrap();
    for (a, b) in after.channel(1).iter().zip(before.channel(1)) {
        assert!(a >= b);
    }
}

#[test]
fn permuting_elements_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let l = random_layout(&mut rng, GeomKind::Box, 6, 3);
    let base = compose(&l, &cfg(14, 10)).unwrap();
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..6).collect();
        for i in (1..6).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        assert_eq!(compose(&l.permuted(&perm), &cfg(14, 10)).unwrap(), base);
    }
}

fn check_single(kind: GeomKind, seed: u64) {
    let c = cfg(8, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..c.pixels()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let wt = Tensor::new(vec![c.height, c.width], weights).unwrap();
    let f = |g: &mut Graph, theta: NodeId| {
        let img = render_element(g, theta, kind, None, &c)?;
        let w = g.input(wt.clone());
        let prod = g.mul(img, w)?;
        Ok(g.sum_all(prod))
    };
    let n = kind.param_count();
    for _ in 0..5 {
        let err = GradCheck::default()
            .sampled(f, |r| Tensor::vector((0..n).map(|_| r.random_range(0.05..0.95)).collect()), &mut rng)
            .unwrap();
        assert!(err < 1e-4, "{kind:?} {err}");
    }
}

#[test]
fn element_gradients_match_finite_differences() {
    check_single(GeomKind::Point, 1);
    check_single(GeomKind::Box, 2);
    check_single(GeomKind::Triangle, 3);
    check_single(GeomKind::CenterBox, 4);
}

#[test]
fn compose_gradients_match_finite_differences() {
    let c = cfg(7, 6);
    let (b, n, m) = (2, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in [GeomKind::Point, GeomKind::Box, GeomKind::Triangle] {
        let gcount = kind.param_count();
        let w: Vec<f64> = (0..b * m * c.pixels()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wt = Tensor::new(vec![b, m, c.height, c.width], w).unwrap();
        let np = b * n * m;
        let f = |g: &mut Graph, x: NodeId| {
            let len = g.value(x).len();
            let pe = slice_node(g, x, 0, np, vec![b, n, m])?;
            let ge = slice_node(g, x, np, len, vec![b, n, gcount])?;
            let img = compose_nodes(g, pe, ge, &ElementKinds::uniform(kind), &c)?;
            let wn = g.input(wt.clone());
            let prod = g.mul(img, wn)?;
            Ok(g.sum_all(prod))
        };
        let total = np + b * n * gcount;
        let err = GradCheck::default()
            .sampled(f, |r| Tensor::vector((0..total).map(|_| r.random_range(0.05..0.95)).collect()), &mut rng)
            .unwrap();
        assert!(err < 1e-4, "{kind:?} {err}");
    }
}

/// `x[start..end]` reshaped, as a differentiable selection matrix product.
fn slice_node(g: &mut Graph, x: NodeId, start: usize, end: usize, shape: Vec<usize>) -> crate::Result<NodeId> {
    let len = g.value(x).len();
    let mut sel = vec![0.0; len * (end - start)];
    for k in start..end {
        sel[k * (end - start) + (k - start)] = 1.0;
    }
    let s = g.input(Tensor::new(vec![len, end - start], sel)?);
    let row = g.reshape(x, vec![1, len])?;
    let y = g.linear(row, s, None)?;
    g.reshape(y, shape)
}

#[test]
fn png_export() {
    let c = cfg(10, 8);
    let zero = RenderedLayout { width: 10, height: 8, channels: 2, image: Tensor::zeros(vec![2, 8, 10]) };
    let bytes = png_bytes(&zero, &default_palette(2)).unwrap();
    let dec = png::Decoder::new(std::io::Cursor::new(bytes.clone()));
    let mut reader = dec.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    reader.next_frame(&mut buf).unwrap();
    assert!(buf.iter().all(|&v| v == 0));
    assert_eq!(bytes, png_bytes(&zero, &default_palette(2)).unwrap());

    let r = single(Geometry::Box { xl: 2.0 / 9.0, yt: 2.0 / 7.0, xr: 6.0 / 9.0, yb: 5.0 / 7.0 }, &c);
    let bytes = png_bytes(&r, &[[255, 0, 0]]).unwrap();
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    reader.next_frame(&mut buf).unwrap();
    let red = |x: usize, y: usize| buf[(y * 10 + x) * 3];
    assert_eq!(red(2, 3), 255);
    assert_eq!(red(4, 2), 255);
    assert_eq!(red(4, 3), 0);
    assert!(buf.chunks(3).all(|p| p[1] == 0 && p[2] == 0));
    assert!(png_bytes(&r, &default_palette(3)).is_err());
}

#[test]
fn svg_outline() {
    let l = Layout::new(
        ClassSchema::documents(),
        vec![Element::one_hot(2, 6, Geometry::Box { xl: 0.1, yt: 0.1, xr: 0.5, yb: 0.3 })],
    )
    .unwrap();
    let s = layout_svg(&l, &default_palette(6), 100.0).unwrap();
    assert!(s.contains("<polygon points=\"10.000,10.000 50.000,10.000 50.000,30.000 10.000,30.000\""));
    assert_eq!(s, layout_svg(&l, &default_palette(6), 100.0).unwrap());
}
