//! PGM (P5, maxval 255) export/import and the binary bitmap cache.
//!
//! Cache layout, little-endian: magic `GLB1`, `u32` width, `u32` height,
//! `u8` condition tag (0 Full, 1 UpperVisible, 2 LowerVisible), then
//! `width * height` `f32` pixels row-major. Word and seed live in the
//! manifest that accompanies the cache files.

use thiserror::Error;

use super::{Condition, GlyphBitmap, GlyphError};

pub const CACHE_MAGIC: &[u8; 4] = b"GLB1";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("not a bitmap cache (bad magic)")]
    BadMagic,
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unknown condition tag {0}")]
    BadCondition(u8),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Bitmap(#[from] GlyphError),
}

impl GlyphBitmap {
    pub fn to_cache_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.pixels.len() * 4);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.condition.tag());
        for p in &self.pixels {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_cache_bytes(bytes: &[u8], word: &str, render_seed: u64) -> Result<Self, CacheError> {
        if bytes.len() < 13 {
            return Err(CacheError::Truncated {
                expected: 13,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != CACHE_MAGIC {
            return Err(CacheError::BadMagic);
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let condition = Condition::from_tag(bytes[12]).ok_or(CacheError::BadCondition(bytes[12]))?;
        let expected = 13 + width as usize * height as usize * 4;
        if bytes.len() != expected {
            return Err(CacheError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let pixels = bytes[13..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(GlyphBitmap::new(width, height, pixels, condition, word, render_seed)?)
    }

    /// Binary PGM; intensities are quantized to 8 bits.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n# {} {}\n{} {}\n255\n", self.word, self.condition, self.width, self.height)
            .into_bytes();
        out.extend(self.pixels.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
        out
    }

    pub fn from_pgm(bytes: &[u8], word: &str, condition: Condition) -> Result<Self, CacheError> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(CacheError::Pgm("unexpected end of header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(CacheError::Pgm(format!("magic {:?} is not P5", fields[0])));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| CacheError::Pgm(format!("bad number {s:?}")));
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(CacheError::Pgm(format!("maxval {maxval} unsupported")));
        }
        let n = width as usize * height as usize;
        let raster = bytes.get(pos..pos + n).ok_or(CacheError::Truncated {
            expected: pos + n,
            found: bytes.len(),
        })?;
        let pixels = raster.iter().map(|&b| b as f32 / 255.0).collect();
        Ok(GlyphBitmap::new(width, height, pixels, condition, word, 0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyphs::{add_noise, occlude, render, RenderSpec};

    #[test]
    fn cache_round_trip_is_exact() {
        let img = render("cache", &RenderSpec::default()).unwrap();
        let img = add_noise(&occlude(&img, Condition::LowerVisible).unwrap(), 0.05, 4).unwrap();
        let bytes = img.to_cache_bytes();
        assert_eq!(&bytes[..4], CACHE_MAGIC);
        assert_eq!(bytes[12], 2);
        let back = GlyphBitmap::from_cache_bytes(&bytes, "cache", 0).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn cache_rejects_garbage() {
        assert!(matches!(GlyphBitmap::from_cache_bytes(b"nope", "x", 0), Err(CacheError::Truncated { .. })));
        assert!(matches!(
            GlyphBitmap::from_cache_bytes(b"XXXX\x01\0\0\0\x02\0\0\0\0abcdefgh", "x", 0),
            Err(CacheError::BadMagic)
        ));
        let mut bytes = GlyphBitmap::filled(2, 2, 1.0).unwrap().to_cache_bytes();
        bytes[12] = 9;
        assert!(matches!(GlyphBitmap::from_cache_bytes(&bytes, "x", 0), Err(CacheError::BadCondition(9))));
    }

    #[test]
    fn pgm_round_trip_on_binary_images() {
        let img = render("pgm", &RenderSpec::default()).unwrap();
        let back = GlyphBitmap::from_pgm(&img.to_pgm(), "pgm", Condition::Full).unwrap();
        assert_eq!(back.pixels(), img.pixels());
        assert!(GlyphBitmap::from_pgm(b"P2\n1 1\n255\n0", "x", Condition::Full).is_err());
    }
}
