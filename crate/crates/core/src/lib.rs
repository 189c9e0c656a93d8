//! Differentiable wireframe rendering and adversarial synthesis of graphic layouts.
//!
//! A layout is a set of elements, each carrying per-class probabilities and
//! geometric parameters. A permutation-equivariant generator refines random
//! element sets with stacked relation modules; two discriminators judge the
//! result, one directly on the element set and one on a differentiable
//! wireframe rasterization of it.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod gradsuite;
pub mod layout;
pub mod metrics;
pub mod relation;
pub mod render;
pub mod trainer;

pub use error::{Error, Result};
pub use layout::{canonicalize_box, ClassSchema, Element, GeomKind, Geometry, Layout};
