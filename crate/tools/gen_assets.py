#!/usr/bin/env python3
"""Regenerates the bundled lexicons and 1-bit glyph sets under crates/core/assets.

Requires: wordfreq, Pillow, fontTools, the DejaVu TTFs (system fonts) and the
@fontsource/noto-sans-sc + @fontsource/noto-serif-sc npm packages unpacked at
the paths given on the command line.

    python3 tools/gen_assets.py --noto-sans <dir>/files --noto-serif <dir>/files
"""
import argparse
import math
import os
import re
import struct

import wordfreq
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

LINE = 32
ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "assets")
EN_WORDS = 6000
ZH_CHARS = 3500
SCALE = 1e9


def english_lexicon():
    words = [w for w in wordfreq.top_n_list("en", 30000) if re.fullmatch("[a-z]+", w)]
    words = words[:EN_WORDS]
    return [(w, wordfreq.word_frequency(w, "en")) for w in words]


def chinese_lexicon():
    freqs = wordfreq.get_frequency_dict("zh")
    chars = [(w, f) for w, f in freqs.items() if len(w) == 1 and "一" <= w <= "鿿"]
    chars.sort(key=lambda t: (-t[1], t[0]))
    return chars[:ZH_CHARS]


def write_lexicon(path, items, lang, source):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# language: {lang}\n")
        f.write(f"# source: {source}\n")
        f.write("# count = frequency per 1e9 tokens, rounded\n")
        for w, freq in items:
            f.write(f"{w}\t{max(1, round(freq * SCALE))}\n")


def pack_rows(img):
    w, h = img.size
    px = img.load()
    out = bytearray()
    for y in range(h):
        byte = 0
        nbits = 0
        for x in range(w):
            byte = (byte << 1) | (1 if px[x, y] < 128 else 0)
            nbits += 1
            if nbits == 8:
                out.append(byte)
                byte = 0
                nbits = 0
        if nbits:
            out.append(byte << (8 - nbits))
    return bytes(out)


def write_glyph_set(path, name, glyphs):
    with open(path, "wb") as f:
        f.write(b"GSET\x01\x00")
        nb = name.encode()
        f.write(struct.pack("<H", len(nb)))
        f.write(nb)
        f.write(struct.pack("<HI", LINE, len(glyphs)))
        for cp, width, bits in sorted(glyphs):
            f.write(struct.pack("<IH", cp, width))
            f.write(bits)


def latin_glyphs(ttf, size):
    font = ImageFont.truetype(ttf, size)
    ascent, descent = font.getmetrics()
    baseline = (LINE - (ascent + descent)) // 2 + ascent
    glyphs = []
    for cp in range(0x20, 0x7F):
        ch = chr(cp)
        adv = max(1, round(font.getlength(ch)))
        img = Image.new("L", (adv, LINE), 255)
        ImageDraw.Draw(img).text((0, baseline), ch, font=font, fill=0, anchor="ls")
        glyphs.append((cp, adv, pack_rows(img)))
    return glyphs


def cjk_glyphs(files_dir, family, chars, size=28, width=30):
    cmaps = []
    for fn in sorted(os.listdir(files_dir)):
        if fn.startswith(family) and fn.endswith("-400-normal.woff"):
            path = os.path.join(files_dir, fn)
            cmaps.append((set(TTFont(path).getBestCmap().keys()), path))
    fonts = {}
    probe = None
    glyphs = []
    for ch in chars:
        cp = ord(ch)
        path = next((p for cm, p in cmaps if cp in cm), None)
        if path is None:
            raise SystemExit(f"no glyph for {ch!r} in {family}")
        font = fonts.setdefault(path, ImageFont.truetype(path, size))
        if probe is None:
            box = font.getbbox("国", anchor="ls")
            probe = (LINE - (box[3] - box[1])) // 2 - box[1]
        img = Image.new("L", (width, LINE), 255)
        ImageDraw.Draw(img).text(((width - size) // 2, probe), ch, font=font, fill=0, anchor="ls")
        glyphs.append((cp, width, pack_rows(img)))
    return glyphs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--noto-sans", required=True)
    ap.add_argument("--noto-serif", required=True)
    ap.add_argument("--dejavu", default="/usr/share/fonts/truetype/dejavu")
    args = ap.parse_args()

    lex_dir = os.path.join(ROOT, "lexicons")
    glyph_dir = os.path.join(ROOT, "glyphs")
    os.makedirs(lex_dir, exist_ok=True)
    os.makedirs(glyph_dir, exist_ok=True)

    en = english_lexicon()
    zh = chinese_lexicon()
    write_lexicon(os.path.join(lex_dir, "en_words.tsv"), en, "en", f"wordfreq 3.1, top {EN_WORDS} [a-z]+ words")
    write_lexicon(os.path.join(lex_dir, "zh_chars.tsv"), zh, "zh", f"wordfreq 3.1, top {ZH_CHARS} single CJK characters")

    write_glyph_set(os.path.join(glyph_dir, "latin-sans.gset"), "DejaVu Sans",
                    latin_glyphs(os.path.join(args.dejavu, "DejaVuSans.ttf"), 24))
    write_glyph_set(os.path.join(glyph_dir, "latin-serif.gset"), "DejaVu Serif",
                    latin_glyphs(os.path.join(args.dejavu, "DejaVuSerif.ttf"), 24))
    chars = [w for w, _ in zh]
    write_glyph_set(os.path.join(glyph_dir, "cjk-sans.gset"), "Noto Sans SC",
                    cjk_glyphs(args.noto_sans, "noto-sans-sc-", chars))
    write_glyph_set(os.path.join(glyph_dir, "cjk-serif.gset"), "Noto Serif SC",
                    cjk_glyphs(args.noto_serif, "noto-serif-sc-", chars))


if __name__ == "__main__":
    main()
