//! Experiment configuration (TOML).
//!
//! The file is hashed byte-for-byte (sha256) and copied verbatim into the
//! output directory; every output embeds the hash. A `--seed-override` is
//! folded into the hash so overridden runs never share provenance with the
//! file's own seeds.

use std::path::{Path, PathBuf};

use readinfo::bayes_channel::{JitterRange, LikelihoodMap, LikelihoodMode};
use readinfo::effect_model::Predictor;
use readinfo::glyphs::{Condition, FontId, RenderSpec};
use readinfo::lexicon::{Bundled, Lexicon};
use readinfo::reading_sim::{SimMode, TimeLink, DEFAULT_MAX_K};
use readinfo::ssim::SsimParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// TSV path, or `bundled:en` / `bundled:zh`.
    pub lexicon: String,
    #[serde(default)]
    pub min_count: f64,
    /// Keep only the most probable `top_n` words.
    pub top_n: Option<usize>,
    pub conditions: Vec<Condition>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub likelihood: LikelihoodConfig,
    #[serde(default)]
    pub ssim: SsimParams,
    #[serde(default)]
    pub estimate: EstimateConfig,
    pub seeds: Seeds,
    pub simulator: Option<SimulatorConfig>,
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub font: FontId,
    pub glyph_height: u32,
    pub padding: u32,
    pub noise_sigma: f64,
    pub reference_variants: usize,
    pub test_variants: usize,
    pub reference_jitter: JitterRange,
    pub test_jitter: JitterRange,
}

impl Default for RenderConfig {
    fn default() -> Self {
        let spec = RenderSpec::default();
        Self {
            font: spec.font_id,
            glyph_height: spec.glyph_height,
            padding: spec.padding,
            noise_sigma: spec.noise_sigma,
            reference_variants: 2,
            test_variants: 2,
            reference_jitter: JitterRange { dx: 0, dy: 0 },
            test_jitter: JitterRange { dx: 0, dy: 0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodConfig {
    pub mode: LikelihoodMode,
    pub epsilon: f64,
    pub tau: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        let m = LikelihoodMap::default();
        Self {
            mode: m.mode,
            epsilon: m.epsilon,
            tau: m.tau,
        }
    }
}

impl LikelihoodConfig {
    pub fn map(&self) -> LikelihoodMap {
        LikelihoodMap {
            mode: self.mode,
            epsilon: self.epsilon,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Compare test images only with each other (no rendered references).
    pub testset_only: bool,
    /// Render test images with the reference seeds and stream. Off by default
    /// so accuracy measures generalization to unseen noise and jitter.
    pub test_uses_reference_seeds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub render: u64,
    pub noise: u64,
    pub sim: u64,
    pub bootstrap: u64,
}

impl Seeds {
    pub fn from_override(s: u64) -> Self {
        Self {
            render: s,
            noise: s.wrapping_add(1),
            sim: s.wrapping_add(2),
            bootstrap: s.wrapping_add(3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Symmetric,
    FromEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordDraw {
    /// True words drawn from the lexicon prior.
    Prior,
    /// Every word equally often, cycling through the lexicon.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub channel: ChannelKind,
    /// Symmetric channel: probability of emitting the true word's symbol.
    pub fidelity: Option<f64>,
    /// FromEstimate: which condition's estimate supplies the confusions.
    pub estimate_condition: Option<Condition>,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    /// Stopping threshold in nats; exactly one of `phi` and `phi_fraction`.
    pub phi: Option<f64>,
    /// Stopping threshold as a fraction of H(W).
    pub phi_fraction: Option<f64>,
    pub mode: SimMode,
    #[serde(default = "default_alpha")]
    pub alpha_ms: f64,
    #[serde(default = "default_intercept")]
    pub intercept_ms: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd_ms: f64,
    pub runs: usize,
    #[serde(default = "default_max_k")]
    pub max_k: usize,
    /// Simulation lexicon size (defaults to the experiment lexicon).
    pub top_n: Option<usize>,
    #[serde(default = "default_word_draw")]
    pub words: WordDraw,
    /// Condition label written to the synthetic records.
    #[serde(default = "default_condition")]
    pub condition: Condition,
}

fn default_smoothing() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    TimeLink::default().alpha_ms_per_sample
}
fn default_intercept() -> f64 {
    TimeLink::default().intercept_ms
}
fn default_noise_sd() -> f64 {
    TimeLink::default().noise_sd_ms
}
fn default_max_k() -> usize {
    DEFAULT_MAX_K
}
fn default_word_draw() -> WordDraw {
    WordDraw::Prior
}
fn default_condition() -> Condition {
    Condition::Full
}

impl SimulatorConfig {
    pub fn link(&self) -> TimeLink {
        TimeLink {
            alpha_ms_per_sample: self.alpha_ms,
            intercept_ms: self.intercept_ms,
            noise_sd_ms: self.noise_sd_ms,
        }
    }

    pub fn phi(&self, h_w: f64) -> f64 {
        match (self.phi, self.phi_fraction) {
            (Some(p), _) => p,
            (None, Some(f)) => f * h_w,
            (None, None) => unreachable!("validated at load"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Records CSV; defaults to the simulate output.
    pub records: Option<PathBuf>,
    pub predictors: Vec<String>,
    pub smooth: bool,
    pub bandwidth: f64,
    pub resamples: usize,
    pub grid_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            records: None,
            predictors: vec!["ig".into(), "log_freq".into(), "length".into()],
            smooth: true,
            bandwidth: 0.3,
            resamples: 200,
            grid_points: readinfo::effect_model::DEFAULT_GRID_POINTS,
        }
    }
}

pub fn parse_predictors(names: &[String]) -> Result<Vec<Predictor>, CliError> {
    names
        .iter()
        .map(|n| n.trim().parse::<Predictor>().map_err(CliError::Config))
        .collect()
}

/// A loaded config plus its provenance.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub raw: String,
    pub path: PathBuf,
    pub sha256: String,
    pub seed_override: Option<u64>,
}

impl Loaded {
    pub fn from_path(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&raw, path, seed_override)
    }

    pub fn from_str(raw: &str, path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let mut config: ExperimentConfig =
            toml::from_str(raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(raw.as_bytes());
        if let Some(s) = seed_override {
            config.seeds = Seeds::from_override(s);
            hasher.update(format!("\n# seed-override: {s}\n").as_bytes());
        }
        let base = path.parent().unwrap_or(Path::new("."));
        config.validate(base)?;
        Ok(Self {
            config,
            raw: raw.to_string(),
            path: path.to_path_buf(),
            sha256: hex::encode(hasher.finalize()),
            seed_override,
        })
    }
}

impl ExperimentConfig {
    fn validate(&mut self, base: &Path) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if Bundled::from_name(&self.lexicon).is_none() {
            let p = resolve(base, Path::new(&self.lexicon));
            if !p.is_file() {
                return bad(format!("lexicon file {} does not exist", p.display()));
            }
            self.lexicon = p.to_string_lossy().into_owned();
        }
        if self.conditions.is_empty() {
            return bad("conditions must list at least one of Full, UpperVisible, LowerVisible".into());
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if self.conditions[..i].contains(c) {
                return bad(format!("condition {c} listed twice"));
            }
        }
        if self.top_n == Some(0) {
            return bad("top_n must be >= 1".into());
        }
        self.render_spec(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.render.reference_variants == 0 || self.render.test_variants == 0 {
            return bad("reference_variants and test_variants must be >= 1".into());
        }
        self.likelihood.map().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ssim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(sim) = &self.simulator {
            match sim.channel {
                ChannelKind::Symmetric if sim.fidelity.is_none() => {
                    return bad("simulator.channel = \"symmetric\" needs simulator.fidelity".into())
                }
                ChannelKind::FromEstimate if sim.estimate_condition.is_none() => {
                    return bad("simulator.channel = \"from_estimate\" needs simulator.estimate_condition".into())
                }
                _ => {}
            }
            if sim.phi.is_some() == sim.phi_fraction.is_some() {
                return bad("set exactly one of simulator.phi and simulator.phi_fraction".into());
            }
            if sim.runs == 0 || sim.max_k == 0 {
                return bad("simulator.runs and simulator.max_k must be >= 1".into());
            }
            if sim.top_n == Some(0) {
                return bad("simulator.top_n must be >= 1".into());
            }
        }
        if let Some(fit) = &mut self.fit {
            parse_predictors(&fit.predictors)?;
            if let Some(r) = &fit.records {
                let p = resolve(base, r);
                if !p.is_file() {
                    return bad(format!("fit.records file {} does not exist", p.display()));
                }
                fit.records = Some(p);
            }
        }
        Ok(())
    }

    /// Base render spec with the given seed.
    pub fn render_spec(&self, seed: u64) -> RenderSpec {
        RenderSpec {
            font_id: self.render.font,
            glyph_height: self.render.glyph_height,
            padding: self.render.padding,
            noise_sigma: self.render.noise_sigma,
            seed,
            ..RenderSpec::default()
        }
    }

    pub fn load_lexicon(&self) -> Result<Lexicon, CliError> {
        let lex = Lexicon::load(&self.lexicon, self.min_count)
            .map_err(|e| CliError::Config(format!("{}: {e}", self.lexicon)))?
            .map_err(|e| CliError::Data(format!("{}: {e}", self.lexicon)))?;
        Ok(match self.top_n {
            Some(n) => lex.top_n(n),
            None => lex,
        })
    }

    pub fn fit_config(&self) -> FitConfig {
        self.fit.clone().unwrap_or_default()
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
