use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discriminator::{DiscInput, DiscriminatorConfig, RelationDiscConfig, WireframeDiscConfig};
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::layout::{ClassSchema, GeomKind};
use crate::render::RenderConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Points,
    Docbox,
    Clipart,
    Tangram,
}

impl Experiment {
    pub fn kind(self) -> GeomKind {
        match self {
            Experiment::Points => GeomKind::Point,
            Experiment::Docbox => GeomKind::Box,
            Experiment::Clipart => GeomKind::CenterBox,
            Experiment::Tangram => GeomKind::PosedPiece,
        }
    }

    pub fn schema(self) -> ClassSchema {
        match self {
            Experiment::Points => ClassSchema::points(),
            Experiment::Docbox => ClassSchema::documents(),
            Experiment::Clipart => ClassSchema::clipart(),
            Experiment::Tangram => ClassSchema::tangram(),
        }
    }

    fn default_elements(self) -> usize {
        match self {
            Experiment::Points => 32,
            Experiment::Docbox => 9,
            Experiment::Clipart => 8,
            Experiment::Tangram => 7,
        }
    }

    fn default_canvas(self) -> usize {
        match self {
            Experiment::Points => 32,
            _ => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Points => "points",
            Experiment::Docbox => "docbox",
            Experiment::Clipart => "clipart",
            Experiment::Tangram => "tangram",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DiscKind {
    Relation,
    Wireframe,
}

/// Every knob of a training run. Zero-valued `n_elements`, `classes`,
/// `width` and `height` take the experiment's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub experiment: Experiment,
    pub discriminator: DiscKind,
    pub n_elements: usize,
    pub classes: usize,
    pub width: usize,
    pub height: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Iterations between checkpoints; `0` disables them.
    pub checkpoint_every: usize,
    /// Iterations between metric-log rows.
    pub log_every: usize,
    /// Generated layouts per evaluation.
    pub eval_samples: usize,
    /// Minimum class probability for a generated element to count as present.
    pub presence_threshold: f64,
    /// Synthetic corpus size when no data is supplied.
    pub dataset_size: usize,
    /// Digit classes for the points experiment.
    pub digits: Vec<u8>,
    /// Location noise of the tangram recovery regime.
    pub noise_std: f64,
    pub out_dir: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub relation_disc: RelationDiscConfig,
    pub wireframe_disc: WireframeDiscConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            experiment: Experiment::Docbox,
            discriminator: DiscKind::Wireframe,
            n_elements: 0,
            classes: 0,
            width: 0,
            height: 0,
            batch_size: 32,
            iterations: 1000,
            lr: 0.00002,
            beta1: 0.5,
            beta2: 0.999,
            init_std: 0.02,
            seed: 0,
            checkpoint_every: 500,
            log_every: 10,
            eval_samples: 64,
            presence_threshold: 0.5,
            dataset_size: 2000,
            digits: (0..10).collect(),
            noise_std: 0.1,
            out_dir: None,
            generator: GeneratorConfig::default(),
            relation_disc: RelationDiscConfig::default(),
            wireframe_disc: WireframeDiscConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_experiment(experiment: Experiment, discriminator: DiscKind) -> Self {
        TrainConfig { experiment, discriminator, ..Default::default() }.resolved().expect("defaults are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills experiment defaults and checks every invariant.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let e = c.experiment;
        let m = e.schema().len();
        if c.n_elements == 0 {
            c.n_elements = e.default_elements();
        }
        if c.classes == 0 {
            c.classes = m;
        }
        if c.width == 0 {
            c.width = e.default_canvas();
        }
        if c.height == 0 {
            c.height = e.default_canvas();
        }
        let bad = |msg: String| Err(Error::Config(msg));
        if c.classes != m {
            return bad(format!("{} layouts have {m} classes, config says {}", e.name(), c.classes));
        }
        if e == Experiment::Tangram && c.n_elements != crate::data::PIECES {
            return bad("tangram layouts have exactly 7 pieces".into());
        }
        if !(c.lr > 0.0) || !(c.init_std >= 0.0) || !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) {
            return bad("lr must be positive, init_std non-negative and betas in [0, 1)".into());
        }
        if c.batch_size == 0 || c.log_every == 0 || c.eval_samples == 0 {
            return bad("batch_size, log_every and eval_samples must be at least 1".into());
        }
        if !(c.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        if e == Experiment::Points && (c.digits.is_empty() || c.digits.iter().any(|&d| d > 9)) {
            return bad("digits must be a nonempty subset of 0..=9".into());
        }
        c.generator.classes = c.classes;
        c.generator.geom_dim = e.kind().param_count();
        c.generator.n_elements = c.n_elements;
        c.generator.validate()?;
        self.render()?;
        Ok(c)
    }

    pub fn render(&self) -> Result<RenderConfig> {
        let e = self.experiment.default_canvas();
        RenderConfig::new(if self.width == 0 { e } else { self.width }, if self.height == 0 { e } else { self.height })
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        match self.discriminator {
            DiscKind::Relation => DiscriminatorConfig::Relation(self.relation_disc.clone()),
            DiscKind::Wireframe => DiscriminatorConfig::Wireframe(self.wireframe_disc.clone()),
        }
    }

    pub fn disc_input(&self) -> Result<DiscInput> {
        Ok(DiscInput {
            classes: self.experiment.schema().len(),
            geom_dim: self.experiment.kind().param_count(),
            render: self.render()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = TrainConfig::for_experiment(Experiment::Points, DiscKind::Relation);
        assert_eq!((c.n_elements, c.classes, c.width), (32, 1, 32));
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = TrainConfig::from_toml("experiment = \"tangram\"\nseed = 3\n").unwrap().resolved().unwrap();
        assert_eq!((partial.n_elements, partial.classes, partial.seed), (7, 56, 3));
        assert_eq!(partial.lr, 0.00002);
        assert_eq!(partial.init_std, 0.02);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["lr = 0.0", "batch_size = 0", "classes = 3", "bogus = 1", "experiment = \"nope\""] {
            let r = TrainConfig::from_toml(text).and_then(|c| c.resolved());
            assert!(matches!(r, Err(Error::Config(_))), "{text}");
        }
    }
}
