//! Word rendering, half occlusion and background noise.
//!
//! Bitmaps are grayscale in `[0, 1]` with `1.0` as the white background.
//! The occlusion boundary is row `height / 2`; that row and everything below
//! it form the lower half.

mod font;
mod io;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{self, Stream};

pub use io::{CacheError, CACHE_MAGIC};

pub const BACKGROUND: f32 = 1.0;
pub const INK: f32 = 0.0;

#[derive(Debug, Error, PartialEq)]
pub enum GlyphError {
    #[error("code point U+{cp:04X} ({0:?}) is not in glyph set {1}", cp = *.0 as u32)]
    UnrenderableCodepoint(char, FontId),
    #[error("cannot render an empty word")]
    EmptyWord,
    #[error("image is already occluded ({0})")]
    AlreadyOccluded(Condition),
    #[error("occlusion target must be UpperVisible or LowerVisible, got {0}")]
    InvalidOcclusion(Condition),
    #[error("invalid render spec: {0}")]
    InvalidSpec(String),
    #[error("invalid bitmap: {0}")]
    InvalidBitmap(String),
    #[error("noise sigma must be finite and >= 0, got {0}")]
    InvalidSigma(f64),
}

/// Visibility condition of a rendered word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Full,
    /// Lower half masked white.
    UpperVisible,
    /// Upper half masked white.
    LowerVisible,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Full, Condition::UpperVisible, Condition::LowerVisible];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Full => "Full",
            Condition::UpperVisible => "UpperVisible",
            Condition::LowerVisible => "LowerVisible",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Condition::Full => 0,
            Condition::UpperVisible => 1,
            Condition::LowerVisible => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Full" | "full" => Ok(Condition::Full),
            "UpperVisible" | "upper" | "Upper" => Ok(Condition::UpperVisible),
            "LowerVisible" | "lower" | "Lower" => Ok(Condition::LowerVisible),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    Latin,
    Cjk,
}

/// Identifier of a bundled glyph set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FontId {
    LatinSans,
    LatinSerif,
    CjkSans,
    CjkSerif,
}

impl FontId {
    pub const ALL: [FontId; 4] = [FontId::LatinSans, FontId::LatinSerif, FontId::CjkSans, FontId::CjkSerif];

    pub fn as_str(self) -> &'static str {
        match self {
            FontId::LatinSans => "latin-sans",
            FontId::LatinSerif => "latin-serif",
            FontId::CjkSans => "cjk-sans",
            FontId::CjkSerif => "cjk-serif",
        }
    }

    pub fn script(self) -> Script {
        match self {
            FontId::LatinSans | FontId::LatinSerif => Script::Latin,
            FontId::CjkSans | FontId::CjkSerif => Script::Cjk,
        }
    }

    /// The glyph sets of this font's script, starting with `self`.
    pub fn family(self) -> [FontId; 2] {
        match self {
            FontId::LatinSans => [FontId::LatinSans, FontId::LatinSerif],
            FontId::LatinSerif => [FontId::LatinSerif, FontId::LatinSans],
            FontId::CjkSans => [FontId::CjkSans, FontId::CjkSerif],
            FontId::CjkSerif => [FontId::CjkSerif, FontId::CjkSans],
        }
    }

    /// Human-readable name of the underlying typeface.
    pub fn typeface(self) -> &'static str {
        &font::glyph_set(self).name
    }

    pub fn has_glyph(self, ch: char) -> bool {
        font::glyph_set(self).get(ch).is_some()
    }
}

impl fmt::Display for FontId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FontId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown font id {s:?}"))
    }
}

impl From<FontId> for String {
    fn from(f: FontId) -> String {
        f.as_str().to_string()
    }
}

impl TryFrom<String> for FontId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Per-render placement offset and stroke thickening.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jitter {
    pub dx: i32,
    pub dy: i32,
    /// Extra ink columns added to every stroke (0 = regular weight).
    pub weight_variant: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub font_id: FontId,
    pub glyph_height: u32,
    pub padding: u32,
    pub noise_sigma: f64,
    pub jitter: Jitter,
    pub seed: u64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            font_id: FontId::LatinSans,
            glyph_height: 32,
            padding: 2,
            noise_sigma: 0.05,
            jitter: Jitter::default(),
            seed: 0,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), GlyphError> {
        if self.glyph_height < 8 {
            return Err(GlyphError::InvalidSpec(format!(
                "glyph_height must be >= 8, got {}",
                self.glyph_height
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma < 0.5) {
            return Err(GlyphError::InvalidSpec(format!(
                "noise_sigma must be in [0, 0.5), got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn with_font(mut self, font_id: FontId) -> Self {
        self.font_id = font_id;
        self
    }

    pub fn with_jitter(mut self, jitter: Jitter) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Grayscale raster of a rendered word.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphBitmap {
    width: u32,
    height: u32,
    pixels: Vec<f32>,
    condition: Condition,
    word: String,
    render_seed: u64,
}

impl GlyphBitmap {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<f32>,
        condition: Condition,
        word: impl Into<String>,
        render_seed: u64,
    ) -> Result<Self, GlyphError> {
        if width < 1 || height < 2 {
            return Err(GlyphError::InvalidBitmap(format!(
                "need width >= 1 and height >= 2, got {width}x{height}"
            )));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(GlyphError::InvalidBitmap(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(GlyphError::InvalidBitmap(format!("intensity {p} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            condition,
            word: word.into(),
            render_seed,
        })
    }

    /// A uniform image filled with `value`.
    pub fn filled(width: u32, height: u32, value: f32) -> Result<Self, GlyphError> {
        Self::new(
            width,
            height,
            vec![value; (width * height) as usize],
            Condition::Full,
            "",
            0,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn render_seed(&self) -> u64 {
        self.render_seed
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn row(&self, y: u32) -> &[f32] {
        let w = self.width as usize;
        &self.pixels[y as usize * w..(y as usize + 1) * w]
    }

    /// Index of the first lower-half row.
    pub fn boundary(&self) -> u32 {
        self.height / 2
    }

    /// Number of pixels darker than mid-gray in rows `rows`.
    pub fn ink_count(&self, rows: std::ops::Range<u32>) -> usize {
        rows.map(|y| self.row(y).iter().filter(|&&p| p < 0.5).count())
            .sum()
    }

    /// Pads on the right with background to `width` (no-op if already that wide).
    pub fn padded_to_width(&self, width: u32) -> GlyphBitmap {
        if width <= self.width {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity((width * self.height) as usize);
        for y in 0..self.height {
            pixels.extend_from_slice(self.row(y));
            pixels.extend(std::iter::repeat_n(BACKGROUND, (width - self.width) as usize));
        }
        GlyphBitmap {
            width,
            pixels,
            ..self.clone()
        }
    }
}

/// Renders `word` with the glyph set and jitter of `spec`. Always noise-free and
/// `Condition::Full`; a pure function of `(word, spec)`.
pub fn render(word: &str, spec: &RenderSpec) -> Result<GlyphBitmap, GlyphError> {
    spec.validate()?;
    if word.is_empty() {
        return Err(GlyphError::EmptyWord);
    }
    let set = font::glyph_set(spec.font_id);
    let glyphs = word
        .chars()
        .map(|c| set.get(c).ok_or(GlyphError::UnrenderableCodepoint(c, spec.font_id)))
        .collect::<Result<Vec<_>, _>>()?;

    let src_h = set.line_height;
    let dst_h = spec.glyph_height;
    let scaled_w = |w: u32| ((w as u64 * dst_h as u64 + src_h as u64 / 2) / src_h as u64).max(1) as u32;
    let text_w: u32 = glyphs.iter().map(|g| scaled_w(g.width)).sum();
    let width = text_w + 2 * spec.padding;
    let height = dst_h + 2 * spec.padding;

    let mut ink = vec![false; (width * height) as usize];
    let x0 = spec.padding as i64 + spec.jitter.dx as i64;
    let y0 = spec.padding as i64 + spec.jitter.dy as i64;
    let mut pen = 0i64;
    for g in &glyphs {
        let gw = scaled_w(g.width);
        for dy in 0..dst_h {
            let sy = (dy as u64 * src_h as u64 / dst_h as u64) as u32;
            let y = y0 + dy as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            for dx in 0..gw {
                let sx = (dx as u64 * g.width as u64 / gw as u64) as u32;
                if !g.ink[(sy * g.width + sx) as usize] {
                    continue;
                }
                let x = x0 + pen + dx as i64;
                for t in 0..=spec.jitter.weight_variant as i64 {
                    let xx = x + t;
                    if xx >= 0 && xx < width as i64 {
                        ink[(y as u32 * width + xx as u32) as usize] = true;
                    }
                }
            }
        }
        pen += gw as i64;
    }

    let pixels = ink
        .into_iter()
        .map(|i| if i { INK } else { BACKGROUND })
        .collect();
    Ok(GlyphBitmap {
        width,
        height,
        pixels,
        condition: Condition::Full,
        word: word.to_string(),
        render_seed: spec.seed,
    })
}

/// Masks one half of a `Full` image with background.
pub fn occlude(img: &GlyphBitmap, condition: Condition) -> Result<GlyphBitmap, GlyphError> {
    if img.condition != Condition::Full {
        return Err(GlyphError::AlreadyOccluded(img.condition));
    }
    let boundary = img.boundary() as usize;
    let w = img.width as usize;
    let masked = match condition {
        Condition::UpperVisible => boundary * w..img.pixels.len(),
        Condition::LowerVisible => 0..boundary * w,
        Condition::Full => return Err(GlyphError::InvalidOcclusion(condition)),
    };
    let mut out = img.clone();
    out.pixels[masked].fill(BACKGROUND);
    out.condition = condition;
    Ok(out)
}

/// Adds i.i.d. Gaussian(0, sigma) noise to every pixel and clamps to `[0, 1]`.
/// `sigma == 0` returns the input unchanged.
pub fn add_noise(img: &GlyphBitmap, sigma: f64, seed: u64) -> Result<GlyphBitmap, GlyphError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(GlyphError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked above");
    let mut rng = seeds::rng(seed, Stream::Noise);
    let mut out = img.clone();
    for p in out.pixels.iter_mut() {
        let v = *p as f64 + normal.sample(&mut rng);
        *p = v.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(seed: u64) -> RenderSpec {
        RenderSpec::default().with_seed(seed)
    }

    #[test]
    fn render_is_deterministic() {
        let a = render("a", &spec(7)).unwrap();
        let b = render("a", &spec(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.condition(), Condition::Full);
        assert!(a.pixels().iter().all(|&p| p == BACKGROUND || p <= 0.5));
        assert!(a.ink_count(0..a.height()) > 0);
    }

    #[test]
    fn width_grows_with_word_length() {
        let s = spec(1);
        let widths: Vec<u32> = ["h", "he", "hea", "hear"]
            .iter()
            .map(|w| render(w, &s).unwrap().width())
            .collect();
        assert!(widths.windows(2).all(|p| p[0] < p[1]), "{widths:?}");
        assert_eq!(render("hear", &s).unwrap().height(), 32 + 2 * s.padding);
    }

    #[test]
    fn cjk_glyph_has_ink_in_both_halves() {
        for font in [FontId::CjkSans, FontId::CjkSerif] {
            let img = render("美", &spec(0).with_font(font)).unwrap();
            let b = img.boundary();
            assert!(img.ink_count(0..b) > 0);
            assert!(img.ink_count(b..img.height()) > 0);
        }
    }

    #[test]
    fn missing_glyph_names_the_code_point() {
        let err = render("a美", &spec(0)).unwrap_err();
        assert_eq!(err, GlyphError::UnrenderableCodepoint('美', FontId::LatinSans));
        assert!(err.to_string().contains("U+7F8E"));
        assert_eq!(render("", &spec(0)).unwrap_err(), GlyphError::EmptyWord);
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(0);
        s.glyph_height = 7;
        assert!(matches!(render("a", &s), Err(GlyphError::InvalidSpec(_))));
        let mut s = spec(0);
        s.noise_sigma = 0.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn glyph_height_scales_the_canvas() {
        let mut s = spec(0);
        s.glyph_height = 16;
        s.padding = 0;
        let small = render("word", &s).unwrap();
        s.glyph_height = 32;
        let big = render("word", &s).unwrap();
        assert_eq!(small.height(), 16);
        assert!(small.width() * 2 >= big.width() - 4 && small.width() * 2 <= big.width() + 4);
    }

    #[test]
    fn jitter_and_weight_change_the_bitmap() {
        let base = render("word", &spec(0)).unwrap();
        let shifted = render("word", &spec(0).with_jitter(Jitter { dx: 1, dy: 0, weight_variant: 0 })).unwrap();
        let bold = render("word", &spec(0).with_jitter(Jitter { dx: 0, dy: 0, weight_variant: 1 })).unwrap();
        assert_ne!(base.pixels(), shifted.pixels());
        assert!(bold.ink_count(0..bold.height()) > base.ink_count(0..base.height()));
    }

    #[test]
    fn occluding_white_is_a_no_op() {
        let white = GlyphBitmap::filled(10, 32, 1.0).unwrap();
        for c in [Condition::UpperVisible, Condition::LowerVisible] {
            assert_eq!(occlude(&white, c).unwrap().pixels(), white.pixels());
        }
    }

    #[test]
    fn lower_visible_masks_rows_above_the_boundary() {
        let pixels: Vec<f32> = (0..32 * 5).map(|i| (i % 7) as f32 / 10.0).collect();
        let img = GlyphBitmap::new(5, 32, pixels, Condition::Full, "x", 0).unwrap();
        let lower = occlude(&img, Condition::LowerVisible).unwrap();
        for y in 0..16 {
            assert!(lower.row(y).iter().all(|&p| p == 1.0));
        }
        for y in 16..32 {
            assert_eq!(lower.row(y), img.row(y));
        }
        let upper = occlude(&img, Condition::UpperVisible).unwrap();
        let lower_sum: f32 = (16..32).flat_map(|y| upper.row(y).iter().copied()).sum();
        assert_eq!(lower_sum, 5.0 * 16.0);
    }

    #[test]
    fn double_occlusion_is_a_state_error() {
        let img = render("ab", &spec(0)).unwrap();
        let once = occlude(&img, Condition::UpperVisible).unwrap();
        assert_eq!(
            occlude(&once, Condition::LowerVisible).unwrap_err(),
            GlyphError::AlreadyOccluded(Condition::UpperVisible)
        );
        assert_eq!(
            occlude(&img, Condition::Full).unwrap_err(),
            GlyphError::InvalidOcclusion(Condition::Full)
        );
    }

    #[test]
    fn noise_examples() {
        let img = render("noise", &spec(3)).unwrap();
        assert_eq!(add_noise(&img, 0.0, 9).unwrap(), img);
        let a = add_noise(&img, 0.05, 1).unwrap();
        let b = add_noise(&img, 0.05, 2).unwrap();
        assert_eq!(a, add_noise(&img, 0.05, 1).unwrap());
        assert_ne!(a.pixels(), b.pixels());
        let mad: f64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (x - y).abs() as f64)
            .sum::<f64>()
            / a.pixels().len() as f64;
        assert!(mad < 0.2, "{mad}");
        assert!(add_noise(&img, -0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn halves_partition_the_rows(h in 2u32..60, w in 1u32..20, seed in any::<u64>()) {
            let pixels: Vec<f32> = (0..w * h).map(|i| ((i as u64 ^ seed) % 11) as f32 / 10.0).collect();
            let img = GlyphBitmap::new(w, h, pixels, Condition::Full, "p", 0).unwrap();
            let up = occlude(&img, Condition::UpperVisible).unwrap();
            let lo = occlude(&img, Condition::LowerVisible).unwrap();
            for y in 0..h {
                let in_upper = y < img.boundary();
                // a row is visible in exactly one of the two images
                prop_assert_eq!(up.row(y) == img.row(y) || !in_upper, true);
                prop_assert_eq!(lo.row(y) == img.row(y) || in_upper, true);
                if in_upper {
                    prop_assert!(lo.row(y).iter().all(|&p| p == 1.0));
                } else {
                    prop_assert!(up.row(y).iter().all(|&p| p == 1.0));
                }
            }
        }

        #[test]
        fn noise_stays_clamped(sigma in 0.0f64..0.49, seed in any::<u64>()) {
            let img = render("clamp", &spec(0)).unwrap();
            let n = add_noise(&img, sigma, seed).unwrap();
            prop_assert!(n.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
