//! # readinfo
//!
//! Measures how much a (possibly occluded) visual word form tells a reader
//! about word identity, and simulates reading as sequential Bayesian updating
//! that stops once posterior entropy drops below a threshold.
//!
//! All information quantities are in nats.
//!
//! | Module | Role |
//! |--------|------|
//! | [`lexicon`] | unigram prior, entropy, surprisal |
//! | [`glyphs`] | bitmap rendering, half occlusion, background noise |
//! | [`ssim`] | structural similarity between equally sized bitmaps |
//! | [`bayes_channel`] | prior × SSIM likelihood posteriors, H(W\|O), MI, IG |
//! | [`reading_sim`] | discrete channels, entropy-threshold stopping, sample-count prediction |
//! | [`effect_model`] | OLS with sliding contrasts, local-linear smoother with bootstrap bands |

pub mod bayes_channel;
pub mod effect_model;
pub mod glyphs;
pub mod info;
pub mod lexicon;
pub mod reading_sim;
pub mod seeds;
pub mod ssim;

pub use bayes_channel::{ChannelModel, InfoEstimate, LikelihoodMap, LikelihoodMode, Posterior};
pub use glyphs::{Condition, FontId, GlyphBitmap, Jitter, RenderSpec};
pub use lexicon::Lexicon;
pub use ssim::SsimParams;
