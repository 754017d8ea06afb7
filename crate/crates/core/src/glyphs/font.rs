//! Bundled 1-bit glyph sets.
//!
//! Binary layout (little-endian):
//! `"GSET" 0x01 0x00`, `u16` name length, name bytes, `u16` line height,
//! `u32` glyph count, then per glyph `u32` code point, `u16` advance width and
//! `line_height` rows of MSB-first packed bits (1 = ink).
//!
//! The sets are rasterized offline from DejaVu Sans/Serif (Latin) and
//! Noto Sans SC / Noto Serif SC (CJK) by `tools/gen_assets.py`.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::FontId;

pub(crate) struct Glyph {
    pub width: u32,
    /// Row-major, `true` = ink.
    pub ink: Vec<bool>,
}

pub(crate) struct GlyphSet {
    pub name: String,
    pub line_height: u32,
    glyphs: HashMap<char, Glyph>,
}

impl GlyphSet {
    fn parse(bytes: &[u8]) -> GlyphSet {
        let mut pos = 0usize;
        let mut take = |n: usize| {
            let s = &bytes[pos..pos + n];
            pos += n;
            s
        };
        assert_eq!(take(6), b"GSET\x01\x00", "bad glyph set magic");
        let name_len = u16::from_le_bytes(take(2).try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len).to_vec()).expect("utf-8 font name");
        let line_height = u16::from_le_bytes(take(2).try_into().unwrap()) as u32;
        let count = u32::from_le_bytes(take(4).try_into().unwrap()) as usize;
        let mut glyphs = HashMap::with_capacity(count);
        for _ in 0..count {
            let cp = u32::from_le_bytes(take(4).try_into().unwrap());
            let width = u16::from_le_bytes(take(2).try_into().unwrap()) as u32;
            let row_bytes = (width as usize).div_ceil(8);
            let mut ink = Vec::with_capacity((width * line_height) as usize);
            for _ in 0..line_height {
                let row = take(row_bytes);
                for x in 0..width as usize {
                    ink.push(row[x / 8] >> (7 - x % 8) & 1 == 1);
                }
            }
            let ch = char::from_u32(cp).expect("valid code point");
            glyphs.insert(ch, Glyph { width, ink });
        }
        GlyphSet {
            name,
            line_height,
            glyphs,
        }
    }

    pub fn get(&self, ch: char) -> Option<&Glyph> {
        self.glyphs.get(&ch)
    }
}

static LATIN_SANS: OnceLock<GlyphSet> = OnceLock::new();
static LATIN_SERIF: OnceLock<GlyphSet> = OnceLock::new();
static CJK_SANS: OnceLock<GlyphSet> = OnceLock::new();
static CJK_SERIF: OnceLock<GlyphSet> = OnceLock::new();

pub(crate) fn glyph_set(font: FontId) -> &'static GlyphSet {
    match font {
        FontId::LatinSans => LATIN_SANS
            .get_or_init(|| GlyphSet::parse(include_bytes!("../../assets/glyphs/latin-sans.gset"))),
        FontId::LatinSerif => LATIN_SERIF
            .get_or_init(|| GlyphSet::parse(include_bytes!("../../assets/glyphs/latin-serif.gset"))),
        FontId::CjkSans => {
            CJK_SANS.get_or_init(|| GlyphSet::parse(include_bytes!("../../assets/glyphs/cjk-sans.gset")))
        }
        FontId::CjkSerif => CJK_SERIF
            .get_or_init(|| GlyphSet::parse(include_bytes!("../../assets/glyphs/cjk-serif.gset"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_sets_load() {
        for f in FontId::ALL {
            let set = glyph_set(f);
            assert_eq!(set.line_height, 32, "{}", set.name);
        }
        assert!(glyph_set(FontId::LatinSans).get('a').is_some());
        assert!(glyph_set(FontId::LatinSerif).get(' ').is_some());
        assert!(glyph_set(FontId::CjkSans).get('美').is_some());
        assert!(glyph_set(FontId::CjkSerif).get('a').is_none());
    }
}
