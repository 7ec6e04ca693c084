#!/usr/bin/env python3
"""Render the embedded glyph atlas (crates/core/assets/glyphs.bin).

Layout (all integers unsigned bytes):
    b"GLYF", version=1, glyph count, cell height,
    then per glyph: ASCII code, width, width*height coverage bytes (row-major,
    0 = background, 255 = full ink).

All glyphs share one cell height so the baseline lines up between symbols.
"""
import string
import sys

from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans-Bold.ttf"
SIZE = 30

letters = [c for c in string.ascii_lowercase if c not in "ilo"]
symbols = list(string.digits) + letters + [c.upper() for c in letters]

font = ImageFont.truetype(FONT, SIZE)
canvas_h = SIZE * 2
cells = []
top, bottom = canvas_h, 0
for ch in symbols:
    img = Image.new("L", (SIZE * 2, canvas_h), 0)
    ImageDraw.Draw(img).text((SIZE // 2, SIZE // 4), ch, fill=255, font=font)
    x0, y0, x1, y1 = img.getbbox()
    top, bottom = min(top, y0), max(bottom, y1)
    cells.append((ch, img, x0, x1))

height = bottom - top
out = bytearray(b"GLYF")
out += bytes([1, len(cells), height])
for ch, img, x0, x1 in cells:
    crop = img.crop((x0, top, x1, bottom))
    out += bytes([ord(ch), crop.width])
    out += crop.tobytes()

path = sys.argv[1] if len(sys.argv) > 1 else "crates/core/assets/glyphs.bin"
with open(path, "wb") as f:
    f.write(out)
print(f"{len(cells)} glyphs, cell height {height}, {len(out)} bytes -> {path}")
