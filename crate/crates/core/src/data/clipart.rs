//! Clipart-scene layouts: people with attached glasses and hats, a sun in the
//! sky band, trees on the ground band.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layout::{ClassSchema, Element, Geometry, Layout};

pub const BOY: usize = 0;
pub const GIRL: usize = 1;
pub const GLASSES: usize = 2;
pub const HAT: usize = 3;
pub const SUN: usize = 4;
pub const TREE: usize = 5;

/// Glasses width relative to the wearer's height.
pub const GLASSES_SCALE: f64 = 0.25;

fn cbox(class: usize, x: f64, y: f64, w: f64, h: f64, flip: f64) -> Element {
    Element::one_hot(class, 6, Geometry::CenterBox { x, y, w, h, flip })
}

pub fn clipart_scene<R: Rng + ?Sized>(rng: &mut R) -> Result<Layout> {
    let mut elements = Vec::new();
    let people = rng.random_range(1..=2usize);
    // Persons occupy disjoint horizontal slots.
    let slot = 1.0 / people as f64;
    for k in 0..people {
        let w = rng.random_range(0.12..=0.2);
        let h = 2.2 * w;
        let x = slot * (k as f64 + 0.5) + rng.random_range(-0.1..=0.1) * slot;
        let y = rng.random_range(0.78..=0.92) - h / 2.0;
        let flip = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let class = if rng.random_bool(0.5) { BOY } else { GIRL };
        elements.push(cbox(class, x, y, w, h, flip));
        let top = y - h / 2.0;
        if rng.random_bool(0.6) {
            let gw = GLASSES_SCALE * h;
            elements.push(cbox(GLASSES, x, top + h / 6.0, gw, gw / 3.0, flip));
        }
        if rng.random_bool(0.5) {
            let hw = 0.7 * w;
            let hh = 0.45 * hw;
            elements.push(cbox(HAT, x, top - hh / 2.0, hw, hh, flip));
        }
    }
    if rng.random_bool(0.7) {
        let s = rng.random_range(0.08..=0.14);
        elements.push(cbox(SUN, rng.random_range(0.1..=0.9), rng.random_range(0.06..=0.18), s, s, 0.0));
    }
    if rng.random_bool(0.7) {
        let w = rng.random_range(0.12..=0.25);
        let h = 1.6 * w;
        let bottom = rng.random_range(0.88..=0.98);
        let flip = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        elements.push(cbox(TREE, rng.random_range(0.1..=0.9), bottom - h / 2.0, w, h, flip));
    }
    Layout::new(ClassSchema::clipart(), elements)
}

pub fn synth_clipart_layouts<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Result<Vec<Layout>> {
    if count == 0 {
        return Err(Error::InvalidDataset("count must be at least 1".into()));
    }
    (0..count).map(|_| clipart_scene(rng)).collect()
}
