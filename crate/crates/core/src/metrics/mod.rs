//! Layout quality measures: overlap and alignment indices, a classifier-based
//! inception score, discriminator loss landscapes and nearest-real retrieval.

mod classifier;
mod landscape;
mod retrieval;
mod spatial;

pub use classifier::{
    classifier_features, inception_score, inception_score_from_probs, train_classifier, Classifier, ClassifierConfig,
};
pub use landscape::{export_landscape_svg, landscape_svg, loss_landscape, real_loss, spearman, total_variation};
pub use retrieval::{chamfer_distance, retrieve_nearest, Neighbor};
pub use spatial::{alignment_index, layout_alignment, layout_overlap, overlap_index};

use crate::layout::Layout;

/// Mean distance between element centers of paired layouts, element by element.
pub fn mean_displacement(a: &[Layout], b: &[Layout]) -> crate::Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(crate::Error::InvalidDataset(format!("{} vs {} layouts", a.len(), b.len())));
    }
    let (mut total, mut count) = (0.0, 0usize);
    for (la, lb) in a.iter().zip(b) {
        if la.len() != lb.len() {
            return Err(crate::Error::Schema("paired layouts differ in size".into()));
        }
        for (ea, eb) in la.elements().iter().zip(lb.elements()) {
            let ((xa, ya), (xb, yb)) = (ea.geom.center(), eb.geom.center());
            total += ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
            count += 1;
        }
    }
    Ok(total / count as f64)
}
