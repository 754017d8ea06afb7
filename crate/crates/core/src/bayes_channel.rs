//! Bayesian baseline estimator of H(W | O), I(W; O) and per-item information gain.
//!
//! Priors come from the lexicon; the likelihood of an observation under a word
//! is derived from the best SSIM between the observation and that word's
//! reference renders. Posteriors are prior × likelihood normalized over the
//! whole candidate set.
//!
//! Width policy: SSIM needs equal shapes, so an observation is only compared
//! with references whose width is within `width_tolerance` pixels of its own
//! (the narrower image is right-padded with background). Words with no
//! reference in that bucket get likelihood `epsilon`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glyphs::{self, Condition, GlyphBitmap, GlyphError, Jitter, RenderSpec};
use crate::info;
use crate::lexicon::{Lexicon, LexiconError};
use crate::seeds::{self, Stream};
use crate::ssim::{self, SsimError, SsimParams};

use rand::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("word {0:?} is not in the channel's lexicon")]
    UnknownWord(String),
    #[error("observation {obs_w}x{obs_h} cannot be compared with reference {ref_w}x{ref_h} of {word:?}")]
    Geometry {
        word: String,
        obs_w: u32,
        obs_h: u32,
        ref_w: u32,
        ref_h: u32,
    },
    #[error("reference condition {found} does not match channel condition {expected}")]
    ConditionMismatch { expected: Condition, found: Condition },
    #[error("reference keys do not match the lexicon: {0}")]
    ReferenceKeys(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("posterior of length {len} does not sum to 1 (sum = {sum})")]
    InvalidPosterior { len: usize, sum: f64 },
    #[error("likelihood vector has length {got}, lexicon has {expected}")]
    LikelihoodLength { expected: usize, got: usize },
    #[error("likelihood for {0:?} is not strictly positive")]
    NonPositiveLikelihood(String),
    #[error("invalid likelihood map: {0}")]
    LikelihoodMap(String),
    #[error("variants must be >= 1")]
    NoVariants,
    #[error(transparent)]
    Render(#[from] GlyphError),
    #[error(transparent)]
    Ssim(#[from] SsimError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LikelihoodMode {
    /// `max(ssim, epsilon)`.
    Floor,
    /// `exp(ssim / tau)`.
    Tempered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodMap {
    pub mode: LikelihoodMode,
    pub epsilon: f64,
    pub tau: f64,
}

impl Default for LikelihoodMap {
    fn default() -> Self {
        Self {
            mode: LikelihoodMode::Floor,
            epsilon: 1e-6,
            tau: 0.1,
        }
    }
}

impl LikelihoodMap {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.epsilon > 0.0 && self.tau > 0.0) {
            return Err(ChannelError::LikelihoodMap(format!(
                "epsilon and tau must be > 0 (epsilon = {}, tau = {})",
                self.epsilon, self.tau
            )));
        }
        Ok(())
    }

    /// Maps a best-match similarity score to a strictly positive likelihood.
    pub fn apply(&self, similarity: f64) -> f64 {
        match self.mode {
            LikelihoodMode::Floor => similarity.max(self.epsilon),
            LikelihoodMode::Tempered => (similarity / self.tau).exp().max(f64::MIN_POSITIVE),
        }
    }
}

/// Random placement offsets applied when generating render variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JitterRange {
    pub dx: u32,
    pub dy: u32,
}

/// Render spec for variant `variant` of the word at `word_index`.
///
/// Variants cycle through the fonts of the base font's script, then through
/// regular/bold weights. Offsets are drawn uniformly from `range` using the
/// item seed `base.seed ⊕ (word_index · 2^16 + variant)` on `stream`.
pub fn variant_spec(base: &RenderSpec, word_index: usize, variant: usize, range: JitterRange, stream: Stream) -> RenderSpec {
    let family = base.font_id.family();
    let font = family[variant % family.len()];
    let weight = ((variant / family.len()) % 2) as u8;
    let seed = seeds::item_seed(base.seed, ((word_index as u64) << 16) | variant as u64);
    let mut rng = seeds::rng(seed, stream);
    let dx = if range.dx > 0 { rng.random_range(-(range.dx as i32)..=range.dx as i32) } else { 0 };
    let dy = if range.dy > 0 { rng.random_range(-(range.dy as i32)..=range.dy as i32) } else { 0 };
    RenderSpec {
        font_id: font,
        jitter: Jitter {
            dx,
            dy,
            weight_variant: base.jitter.weight_variant + weight,
        },
        seed,
        ..*base
    }
}

/// Renders and occludes one variant, noise-free.
pub fn render_variant(
    word: &str,
    base: &RenderSpec,
    word_index: usize,
    variant: usize,
    range: JitterRange,
    stream: Stream,
    condition: Condition,
) -> Result<GlyphBitmap, GlyphError> {
    let spec = variant_spec(base, word_index, variant, range, stream);
    let img = glyphs::render(word, &spec)?;
    match condition {
        Condition::Full => Ok(img),
        c => glyphs::occlude(&img, c),
    }
}

/// A held-out observation: a variant drawn on `stream`, occluded, then given
/// pixel noise (`base.noise_sigma`) seeded by the variant's item seed.
pub fn render_observation(
    word: &str,
    base: &RenderSpec,
    word_index: usize,
    variant: usize,
    range: JitterRange,
    stream: Stream,
    condition: Condition,
) -> Result<GlyphBitmap, GlyphError> {
    let spec = variant_spec(base, word_index, variant, range, stream);
    let img = render_variant(word, base, word_index, variant, range, stream, condition)?;
    glyphs::add_noise(&img, base.noise_sigma, spec.seed)
}

/// Prior + reference renders + similarity-to-likelihood mapping for one condition.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    lexicon: Lexicon,
    condition: Condition,
    /// Indexed like the lexicon.
    references: Vec<Vec<GlyphBitmap>>,
    likelihood_map: LikelihoodMap,
    ssim_params: SsimParams,
    width_tolerance: u32,
}

impl ChannelModel {
    pub fn from_references(
        lexicon: Lexicon,
        condition: Condition,
        references: Vec<Vec<GlyphBitmap>>,
        width_tolerance: u32,
    ) -> Result<Self, ChannelError> {
        if references.len() != lexicon.len() {
            return Err(ChannelError::ReferenceKeys(format!(
                "{} reference groups for {} words",
                references.len(),
                lexicon.len()
            )));
        }
        for (i, group) in references.iter().enumerate() {
            for r in group {
                if r.word() != lexicon.word(i) {
                    return Err(ChannelError::ReferenceKeys(format!(
                        "reference for {:?} filed under {:?}",
                        r.word(),
                        lexicon.word(i)
                    )));
                }
                if r.condition() != condition {
                    return Err(ChannelError::ConditionMismatch {
                        expected: condition,
                        found: r.condition(),
                    });
                }
            }
        }
        Ok(Self {
            lexicon,
            condition,
            references,
            likelihood_map: LikelihoodMap::default(),
            ssim_params: SsimParams::default(),
            width_tolerance,
        })
    }

    pub fn with_likelihood_map(mut self, map: LikelihoodMap) -> Result<Self, ChannelError> {
        map.validate()?;
        self.likelihood_map = map;
        Ok(self)
    }

    pub fn with_ssim_params(mut self, params: SsimParams) -> Result<Self, ChannelError> {
        params.validate()?;
        self.ssim_params = params;
        Ok(self)
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn references(&self, word: &str) -> Result<&[GlyphBitmap], ChannelError> {
        let i = self.word_index(word)?;
        Ok(&self.references[i])
    }

    pub fn reference_count(&self) -> usize {
        self.references.iter().map(Vec::len).sum()
    }

    pub fn likelihood_map(&self) -> LikelihoodMap {
        self.likelihood_map
    }

    pub fn ssim_params(&self) -> SsimParams {
        self.ssim_params
    }

    fn word_index(&self, word: &str) -> Result<usize, ChannelError> {
        self.lexicon
            .index_of(word)
            .ok_or_else(|| ChannelError::UnknownWord(word.to_string()))
    }

    /// Best SSIM against the word's references inside the width bucket, or
    /// `None` when no reference is in the bucket.
    fn best_similarity(&self, o: &GlyphBitmap, word_idx: usize, exclude: Option<usize>) -> Result<Option<f64>, ChannelError> {
        let mut best: Option<f64> = None;
        for (v, r) in self.references[word_idx].iter().enumerate() {
            if Some(v) == exclude {
                continue;
            }
            if r.height() != o.height() {
                return Err(ChannelError::Geometry {
                    word: r.word().to_string(),
                    obs_w: o.width(),
                    obs_h: o.height(),
                    ref_w: r.width(),
                    ref_h: r.height(),
                });
            }
            if r.width().abs_diff(o.width()) > self.width_tolerance {
                continue;
            }
            let s = if r.width() == o.width() {
                ssim::ssim(o, r, &self.ssim_params)?
            } else {
                let w = r.width().max(o.width());
                ssim::ssim(&o.padded_to_width(w), &r.padded_to_width(w), &self.ssim_params)?
            };
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
        Ok(best)
    }

    /// p(o | w), strictly positive.
    pub fn likelihood(&self, o: &GlyphBitmap, word: &str) -> Result<f64, ChannelError> {
        let i = self.word_index(word)?;
        self.likelihood_at(o, i, None)
    }

    fn likelihood_at(&self, o: &GlyphBitmap, i: usize, exclude: Option<usize>) -> Result<f64, ChannelError> {
        Ok(match self.best_similarity(o, i, exclude)? {
            Some(s) => self.likelihood_map.apply(s),
            None => self.likelihood_map.epsilon,
        })
    }

    fn likelihoods_excluding(&self, o: &GlyphBitmap, exclude: Option<(usize, usize)>) -> Result<Vec<f64>, ChannelError> {
        (0..self.lexicon.len())
            .map(|i| {
                let ex = exclude.and_then(|(w, v)| (w == i).then_some(v));
                self.likelihood_at(o, i, ex)
            })
            .collect()
    }

    pub fn likelihoods(&self, o: &GlyphBitmap) -> Result<Vec<f64>, ChannelError> {
        self.likelihoods_excluding(o, None)
    }

    /// p(w | o) over the whole lexicon.
    pub fn posterior(&self, o: &GlyphBitmap) -> Result<Posterior, ChannelError> {
        let lik = self.likelihoods(o)?;
        Posterior::from_prior_and_likelihood(&self.lexicon, &lik)
    }

    /// Estimates H(W), H(W|O), I(W;O) and per-item IG on a held-out test set.
    pub fn estimate(&self, test: &[(String, GlyphBitmap)]) -> Result<InfoEstimate, ChannelError> {
        let items: Vec<(String, &GlyphBitmap, f64)> = test.iter().map(|(w, o)| (w.clone(), o, 1.0)).collect();
        estimate_weighted(&self.lexicon, self.condition, &items, |o| self.likelihoods(o))
    }
}

/// Builds the reference set: `variants` noise-free renders per word, occluded
/// to `condition`, with distinct per-item seeds on the reference stream.
pub fn build_channel(
    lex: &Lexicon,
    spec: &RenderSpec,
    condition: Condition,
    variants: usize,
    jitter: JitterRange,
) -> Result<ChannelModel, ChannelError> {
    if variants == 0 {
        return Err(ChannelError::NoVariants);
    }
    spec.validate()?;
    let references = lex
        .words()
        .enumerate()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, w)| {
            (0..variants)
                .map(|v| render_variant(w, spec, i, v, jitter, Stream::ReferenceJitter, condition))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    ChannelModel::from_references(lex.clone(), condition, references, spec.padding)
}

/// A distribution over a lexicon's words.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    lexicon_id: u64,
    probs: Vec<f64>,
}

impl Posterior {
    pub fn new(lex: &Lexicon, probs: Vec<f64>) -> Result<Self, ChannelError> {
        let sum: f64 = probs.iter().sum();
        if probs.len() != lex.len() || (sum - 1.0).abs() > 1e-9 || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ChannelError::InvalidPosterior { len: probs.len(), sum });
        }
        Ok(Self {
            lexicon_id: lex.id(),
            probs,
        })
    }

    pub fn prior(lex: &Lexicon) -> Self {
        Self {
            lexicon_id: lex.id(),
            probs: lex.probs(),
        }
    }

    pub fn from_prior_and_likelihood(lex: &Lexicon, likelihood: &[f64]) -> Result<Self, ChannelError> {
        if likelihood.len() != lex.len() {
            return Err(ChannelError::LikelihoodLength {
                expected: lex.len(),
                got: likelihood.len(),
            });
        }
        if let Some(i) = likelihood.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ChannelError::NonPositiveLikelihood(lex.word(i).to_string()));
        }
        let mut probs: Vec<f64> = lex.items().iter().zip(likelihood).map(|((_, p), l)| p * l).collect();
        info::normalize(&mut probs);
        Ok(Self {
            lexicon_id: lex.id(),
            probs,
        })
    }

    /// Builds from an already-normalized vector without re-checking the sum.
    pub(crate) fn from_raw(lexicon_id: u64, probs: Vec<f64>) -> Self {
        Self { lexicon_id, probs }
    }

    pub fn lexicon_id(&self) -> u64 {
        self.lexicon_id
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy(&self) -> f64 {
        info::entropy(&self.probs)
    }

    /// Most probable word; ties go to the lexicographically smallest word.
    pub fn top1<'a>(&self, lex: &'a Lexicon) -> &'a str {
        let mut best = 0usize;
        for i in 1..self.probs.len() {
            let (p, b) = (self.probs[i], self.probs[best]);
            if p > b || (p == b && lex.word(i) < lex.word(best)) {
                best = i;
            }
        }
        lex.word(best)
    }
}

/// H(W | O = o) = Σ q(w) · (−ln q(w)), with 0 · ln 0 = 0.
pub fn pointwise_conditional_entropy(q: &Posterior) -> f64 {
    q.entropy()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemEstimate {
    pub word: String,
    pub condition: Condition,
    pub pointwise_h: f64,
    pub ig: f64,
    pub top1: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoEstimate {
    pub h_w: f64,
    pub h_w_given_o: f64,
    pub mi: f64,
    pub accuracy: f64,
    pub per_item: Vec<ItemEstimate>,
}

impl InfoEstimate {
    pub fn mean_ig(&self) -> f64 {
        self.per_item.iter().map(|i| i.ig).sum::<f64>() / self.per_item.len() as f64
    }
}

/// Core estimator shared by the glyph channel and toy channels.
///
/// `items` are `(true word, observation, weight)`; H(W|O) is the weighted mean
/// of pointwise entropies (uniform weights give the plain 1/N average).
/// Per-item IG is not clamped and may be negative.
pub fn estimate_weighted<O, F>(
    lex: &Lexicon,
    condition: Condition,
    items: &[(String, O, f64)],
    likelihoods: F,
) -> Result<InfoEstimate, ChannelError>
where
    O: Sync,
    F: Fn(&O) -> Result<Vec<f64>, ChannelError> + Sync,
{
    if items.is_empty() {
        return Err(ChannelError::EmptyTestSet);
    }
    for (w, _, _) in items {
        if !lex.contains(w) {
            return Err(ChannelError::UnknownWord(w.clone()));
        }
    }
    let h_w = lex.entropy();
    let per_item = items
        .par_iter()
        .map(|(w, o, _)| {
            let q = Posterior::from_prior_and_likelihood(lex, &likelihoods(o)?)?;
            let pointwise_h = pointwise_conditional_entropy(&q);
            let top1 = q.top1(lex).to_string();
            Ok(ItemEstimate {
                word: w.clone(),
                condition,
                pointwise_h,
                ig: h_w - pointwise_h,
                correct: &top1 == w,
                top1,
            })
        })
        .collect::<Result<Vec<_>, ChannelError>>()?;
    let total_weight: f64 = items.iter().map(|(_, _, wt)| wt).sum();
    let h_w_given_o = per_item
        .iter()
        .zip(items)
        .map(|(it, (_, _, wt))| wt * it.pointwise_h)
        .sum::<f64>()
        / total_weight;
    let accuracy = per_item
        .iter()
        .zip(items)
        .filter(|(it, _)| it.correct)
        .map(|(_, (_, _, wt))| wt)
        .sum::<f64>()
        / total_weight;
    Ok(InfoEstimate {
        h_w,
        h_w_given_o,
        mi: h_w - h_w_given_o,
        accuracy,
        per_item,
    })
}

/// Compatibility protocol: candidates are only the words present in the test
/// set, each test image is compared with every *other* test image, and the
/// prior is the lexicon restricted to the test words.
pub fn estimate_testset_only(
    lex: &Lexicon,
    condition: Condition,
    test: &[(String, GlyphBitmap)],
    map: LikelihoodMap,
    params: SsimParams,
    width_tolerance: u32,
) -> Result<InfoEstimate, ChannelError> {
    if test.is_empty() {
        return Err(ChannelError::EmptyTestSet);
    }
    let mut words: Vec<&str> = Vec::new();
    for (w, _) in test {
        if !lex.contains(w) {
            return Err(ChannelError::UnknownWord(w.clone()));
        }
        if !words.contains(&w.as_str()) {
            words.push(w);
        }
    }
    let sub = lex.restrict(words.iter().copied())?;
    let mut groups: Vec<Vec<GlyphBitmap>> = vec![Vec::new(); sub.len()];
    let mut slot = Vec::with_capacity(test.len());
    for (w, o) in test {
        let i = sub.index_of(w).expect("restricted lexicon holds every test word");
        slot.push((i, groups[i].len()));
        groups[i].push(o.clone());
    }
    let model = ChannelModel::from_references(sub.clone(), condition, groups, width_tolerance)?
        .with_likelihood_map(map)?
        .with_ssim_params(params)?;
    let items: Vec<(String, usize, f64)> = test.iter().enumerate().map(|(k, (w, _))| (w.clone(), k, 1.0)).collect();
    estimate_weighted(&sub, condition, &items, |&k| model.likelihoods_excluding(&test[k].1, Some(slot[k])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyphs::FontId;

    fn lex(recs: &[(&str, f64)]) -> Lexicon {
        Lexicon::from_counts(recs.iter().map(|&(w, c)| (w, c)), 0.0, "en", "test").unwrap()
    }

    const NO_JITTER: JitterRange = JitterRange { dx: 0, dy: 0 };

    fn spec() -> RenderSpec {
        RenderSpec {
            noise_sigma: 0.0,
            ..RenderSpec::default()
        }
    }

    #[test]
    fn build_counts_and_determinism() {
        let l = lex(&[("ant", 1.0), ("bee", 1.0), ("cat", 1.0), ("dog", 1.0)]);
        let m = build_channel(&l, &spec(), Condition::Full, 1, NO_JITTER).unwrap();
        assert_eq!(m.reference_count(), 4);
        let again = build_channel(&l, &spec(), Condition::Full, 1, NO_JITTER).unwrap();
        for w in l.words() {
            assert_eq!(m.references(w).unwrap(), again.references(w).unwrap());
        }
        assert!(matches!(build_channel(&l, &spec(), Condition::Full, 0, NO_JITTER), Err(ChannelError::NoVariants)));
    }

    #[test]
    fn hundred_words_three_variants() {
        let en = crate::lexicon::Lexicon::bundled(crate::lexicon::Bundled::English).top_n(100);
        let m = build_channel(&en, &spec(), Condition::UpperVisible, 3, JitterRange { dx: 1, dy: 1 }).unwrap();
        assert_eq!(m.reference_count(), 300);
        for w in en.words() {
            let refs = m.references(w).unwrap();
            assert_eq!(refs.len(), 3);
            assert!(refs.iter().all(|r| r.word() == w && r.condition() == Condition::UpperVisible));
            let seeds: std::collections::HashSet<u64> = refs.iter().map(|r| r.render_seed()).collect();
            assert_eq!(seeds.len(), 3);
        }
    }

    #[test]
    fn variants_cycle_fonts_then_weights() {
        let s = spec();
        let fonts: Vec<FontId> = (0..4).map(|v| variant_spec(&s, 0, v, NO_JITTER, Stream::ReferenceJitter).font_id).collect();
        assert_eq!(fonts, vec![FontId::LatinSans, FontId::LatinSerif, FontId::LatinSans, FontId::LatinSerif]);
        assert_eq!(variant_spec(&s, 0, 2, NO_JITTER, Stream::ReferenceJitter).jitter.weight_variant, 1);
        let r = variant_spec(&s, 5, 1, NO_JITTER, Stream::ReferenceJitter);
        let t = variant_spec(&s, 5, 1, NO_JITTER, Stream::TestJitter);
        assert_eq!(r.seed, t.seed);
        let jr = JitterRange { dx: 3, dy: 3 };
        let offsets: Vec<(i32, i32)> = (0..20)
            .map(|i| {
                let v = variant_spec(&s, i, 0, jr, Stream::TestJitter);
                (v.jitter.dx, v.jitter.dy)
            })
            .collect();
        assert!(offsets.iter().all(|&(x, y)| x.abs() <= 3 && y.abs() <= 3));
        assert!(offsets.iter().any(|&o| o != offsets[0]));
    }

    #[test]
    fn likelihood_examples() {
        let l = lex(&[("ant", 1.0), ("bee", 1.0)]);
        let m = build_channel(&l, &spec(), Condition::Full, 1, NO_JITTER).unwrap();
        let o = m.references("ant").unwrap()[0].clone();
        assert!((m.likelihood(&o, "ant").unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(m.likelihood(&o, "cow"), Err(ChannelError::UnknownWord(_))));

        let floor = LikelihoodMap::default();
        assert_eq!(floor.apply(-0.3), 1e-6);
        let tempered = LikelihoodMap {
            mode: LikelihoodMode::Tempered,
            ..floor
        };
        assert!((tempered.apply(0.5) - 148.4131591025766).abs() < 1e-9);
        assert!(LikelihoodMap { tau: 0.0, ..floor }.validate().is_err());
    }

    #[test]
    fn geometry_mismatch_and_width_buckets() {
        let l = lex(&[("i", 1.0), ("mmmmmmmm", 1.0)]);
        let m = build_channel(&l, &spec(), Condition::Full, 1, NO_JITTER).unwrap();
        let narrow = m.references("i").unwrap()[0].clone();
        // far outside the width bucket: epsilon, not an error
        assert_eq!(m.likelihood(&narrow, "mmmmmmmm").unwrap(), 1e-6);
        let short = GlyphBitmap::filled(narrow.width(), narrow.height() - 1, 1.0).unwrap();
        assert!(matches!(m.likelihood(&short, "i"), Err(ChannelError::Geometry { .. })));
        // within the bucket the narrower image is padded
        let wider = narrow.padded_to_width(narrow.width() + 1);
        let v = m.likelihood(&wider, "i").unwrap();
        assert!(v > 0.9 && v <= 1.0, "{v}");
    }

    #[test]
    fn reference_keys_are_checked() {
        let l = lex(&[("a", 1.0), ("b", 1.0)]);
        let img = glyphs::render("a", &spec()).unwrap();
        assert!(matches!(
            ChannelModel::from_references(l.clone(), Condition::Full, vec![vec![img.clone()]], 2),
            Err(ChannelError::ReferenceKeys(_))
        ));
        assert!(matches!(
            ChannelModel::from_references(l.clone(), Condition::Full, vec![vec![], vec![img.clone()]], 2),
            Err(ChannelError::ReferenceKeys(_))
        ));
        let occ = glyphs::occlude(&img, Condition::LowerVisible).unwrap();
        assert!(matches!(
            ChannelModel::from_references(l, Condition::Full, vec![vec![occ], vec![]], 2),
            Err(ChannelError::ConditionMismatch { .. })
        ));
    }

    #[test]
    fn posterior_examples() {
        let two = lex(&[("a", 3.0), ("b", 1.0)]);
        let q = Posterior::from_prior_and_likelihood(&two, &[0.2, 0.6]).unwrap();
        assert!((q.probs()[0] - 0.5).abs() < 1e-15 && (q.probs()[1] - 0.5).abs() < 1e-15);
        assert!((pointwise_conditional_entropy(&q) - 0.693147).abs() < 1e-6);

        let four = lex(&[("a", 1.0), ("b", 1.0), ("c", 1.0), ("d", 1.0)]);
        let same = Posterior::from_prior_and_likelihood(&four, &[0.3; 4]).unwrap();
        assert_eq!(same.probs(), four.probs().as_slice());
        assert!((pointwise_conditional_entropy(&same) - 4f64.ln()).abs() < 1e-15);

        let sharp = Posterior::from_prior_and_likelihood(&four, &[1.0, 1e-300, 1e-300, 1e-300]).unwrap();
        assert!((sharp.probs()[0] - 1.0).abs() < 1e-12);
        let onehot = Posterior::new(&four, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(pointwise_conditional_entropy(&onehot), 0.0);
        assert_eq!(onehot.top1(&four), "b");

        assert!(Posterior::from_prior_and_likelihood(&four, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(Posterior::new(&four, vec![0.5, 0.4, 0.0, 0.0]).is_err());
    }

    #[test]
    fn top1_ties_are_lexicographic() {
        let l = lex(&[("zeta", 2.0), ("alpha", 1.0), ("beta", 1.0)]);
        let q = Posterior::from_prior_and_likelihood(&l, &[1.0, 2.0, 2.0]).unwrap();
        // all three tie at 2/6
        assert_eq!(q.top1(&l), "alpha");
    }

    #[test]
    fn noiseless_channel_recovers_every_word() {
        let l = lex(&[("ant", 4.0), ("bee", 3.0), ("cow", 2.0), ("dog", 1.0)]);
        let m = build_channel(&l, &spec(), Condition::Full, 1, NO_JITTER)
            .unwrap()
            .with_likelihood_map(LikelihoodMap {
                mode: LikelihoodMode::Tempered,
                tau: 0.01,
                epsilon: 1e-6,
            })
            .unwrap();
        let test: Vec<(String, GlyphBitmap)> = l
            .words()
            .map(|w| (w.to_string(), m.references(w).unwrap()[0].clone()))
            .collect();
        let est = m.estimate(&test).unwrap();
        assert_eq!(est.accuracy, 1.0);
        assert!(est.per_item.iter().all(|i| i.pointwise_h < 1e-3), "{:?}", est.per_item);
        assert!((est.mi - est.h_w).abs() < 1e-3);
        assert!((est.mi - (est.h_w - est.h_w_given_o)).abs() < 1e-12);
    }

    #[test]
    fn constant_likelihood_gives_zero_information() {
        let l = lex(&[("a", 5.0), ("b", 3.0), ("c", 2.0)]);
        let items: Vec<(String, (), f64)> = l.words().map(|w| (w.to_string(), (), 1.0)).collect();
        let est = estimate_weighted(&l, Condition::Full, &items, |_| Ok(vec![0.4; 3])).unwrap();
        assert!(est.mi.abs() < 1e-15);
        assert!(est.per_item.iter().all(|i| i.ig.abs() < 1e-15));
    }

    #[test]
    fn empty_and_unknown_test_items() {
        let l = lex(&[("a", 1.0), ("b", 1.0)]);
        let m = build_channel(&l, &spec(), Condition::Full, 1, NO_JITTER).unwrap();
        assert_eq!(m.estimate(&[]).unwrap_err(), ChannelError::EmptyTestSet);
        let o = m.references("a").unwrap()[0].clone();
        assert!(matches!(m.estimate(&[("zz".into(), o)]), Err(ChannelError::UnknownWord(_))));
    }

    #[test]
    fn pointwise_ig_can_be_negative() {
        // a rare-word observation on a peaked prior raises entropy
        let l = lex(&[("a", 98.0), ("b", 1.0), ("c", 1.0)]);
        let items = vec![("b".to_string(), (), 1.0)];
        let est = estimate_weighted(&l, Condition::Full, &items, |_| Ok(vec![0.01, 1.0, 1.0])).unwrap();
        assert!(est.per_item[0].ig < 0.0);
        assert!(est.mi < 0.0);
    }

    #[test]
    fn testset_only_protocol_excludes_self_matches() {
        let l = lex(&[("ant", 3.0), ("bee", 2.0), ("cat", 1.0), ("owl", 1.0)]);
        let s = spec();
        let mut test = Vec::new();
        for (i, w) in ["ant", "bee", "cat"].iter().enumerate() {
            for v in 0..2 {
                let o = render_variant(w, &s, i, v, NO_JITTER, Stream::TestJitter, Condition::Full).unwrap();
                test.push((w.to_string(), o));
            }
        }
        let est = estimate_testset_only(&l, Condition::Full, &test, LikelihoodMap::default(), SsimParams::default(), 2).unwrap();
        assert_eq!(est.per_item.len(), 6);
        // prior restricted to the three test words
        let sub = l.restrict(["ant", "bee", "cat"]).unwrap();
        assert!((est.h_w - sub.entropy()).abs() < 1e-12);
        // the two variants differ in font, so no item scores a perfect self-match
        assert!(est.per_item.iter().all(|i| i.pointwise_h > 0.0));
    }
}
