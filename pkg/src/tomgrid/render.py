"""Dual grid representations: bit-exact ASCII tables and deterministic
raster images, each with a parser back to the board.

The ASCII format is the one embedded in text prompts: `+----+` border
rows, width-4 cells (` A0 `), trailing newline. Images are RGB PNGs
written by a tiny built-in encoder (fixed zlib settings, filter 0) so the
byte stream is a pure function of (grid, style). Agents are filled discs
in a fixed palette with their label drawn on top.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .geometry import Grid, GridError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# Fixed per-agent palette (disc fill), background, and lattice colors.
AGENT_COLORS: dict[int, tuple[int, int, int]] = {
    0: (214, 40, 40),    # red
    1: (56, 166, 80),    # green
    2: (40, 90, 214),    # blue
    3: (150, 70, 200),   # violet
}
BACKGROUND = (255, 255, 255)
GRIDLINE = (40, 40, 40)
LABEL = (255, 255, 255)

# 5x7 bitmaps for the only glyphs a label needs.
_GLYPHS = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("01110", "10001", "00001", "00110", "00001", "10001", "01110"),
}


class RenderError(Exception):
    pass


class MalformedGrid(RenderError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"col {col}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.row = row
        self.col = col


class EncodeError(RenderError):
    pass


class DecodeError(RenderError):
    pass


@dataclass(frozen=True)
class ImageStyle:
    """Raster layout knobs; defaults are the documented dataset settings."""

    cell_px: int = 64
    margin_px: int = 16
    line_px: int = 2
    label_scale: int = 2

    def image_size(self, side: int) -> int:
        return 2 * self.margin_px + side * self.cell_px + (side + 1) * self.line_px

    def cell_origin(self, row: int, col: int) -> tuple[int, int]:
        y = self.margin_px + self.line_px + row * (self.cell_px + self.line_px)
        x = self.margin_px + self.line_px + col * (self.cell_px + self.line_px)
        return y, x


DEFAULT_STYLE = ImageStyle()


# --------------------------------------------------------------------------
# ASCII
# --------------------------------------------------------------------------

def render_ascii(grid: Grid) -> str:
    """Board as the prompt-embedded table, rows top to bottom."""
    border = "+" + "+".join(["----"] * grid.side) + "+"
    by_cell = {cell: agent for agent, cell in grid.placements.items()}
    lines = [border]
    for r in range(grid.side):
        cells = []
        for c in range(grid.side):
            agent = by_cell.get((r, c))
            cells.append("    " if agent is None else f" A{agent} ")
        lines.append("|" + "|".join(cells) + "|")
        lines.append(border)
    return "\n".join(lines) + "\n"


def parse_ascii(text: str) -> Grid:
    """Inverse of render_ascii on its image; diagnostics carry row/col."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if len(lines) < 3 or len(lines) % 2 == 0:
        raise MalformedGrid(f"expected an odd number of lines >= 3, got {len(lines)}")
    side = len(lines) // 2
    border = "+" + "+".join(["----"] * side) + "+"
    if any(len(line) != len(border) for line in lines):
        bad = next(i for i, line in enumerate(lines) if len(line) != len(border))
        raise MalformedGrid("line width inconsistent with a square board", row=bad)

    placements: dict[int, tuple[int, int]] = {}
    for i, line in enumerate(lines):
        if i % 2 == 0:
            if line != border:
                raise MalformedGrid("bad border line", row=i)
            continue
        r = i // 2
        for c in range(side):
            cell = line[1 + 5 * c : 5 + 5 * c]
            sep = line[5 * c]
            if sep != "|" or line[-1] != "|":
                raise MalformedGrid("missing cell separator", row=i, col=c)
            if cell == "    ":
                continue
            if len(cell) == 4 and cell[0] == " " and cell[1] == "A" and cell[2].isdigit() and cell[3] == " ":
                agent = int(cell[2])
                if agent in placements:
                    raise MalformedGrid(f"agent A{agent} appears twice", row=i, col=c)
                placements[agent] = (r, c)
            else:
                raise MalformedGrid(f"unrecognized cell {cell!r}", row=i, col=c)
    grid = Grid(side, placements)
    try:
        grid.validate()
    except GridError as exc:
        raise MalformedGrid(str(exc)) from exc
    return grid


# --------------------------------------------------------------------------
# PNG
# --------------------------------------------------------------------------

def _chunk(kind: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(kind + payload)
    return struct.pack(">I", len(payload)) + kind + payload + struct.pack(">I", crc)


def _draw_disc(rows: list[bytearray], cy: int, cx: int, radius: int, color: bytes) -> None:
    for dy in range(-radius, radius + 1):
        half = int((radius * radius - dy * dy) ** 0.5)
        x0, x1 = cx - half, cx + half + 1
        rows[cy + dy][3 * x0 : 3 * x1] = color * (x1 - x0)


def _draw_label(rows: list[bytearray], cy: int, cx: int, text: str, scale: int, color: bytes) -> None:
    width = len(text) * 5 * scale + (len(text) - 1) * scale
    height = 7 * scale
    y0 = cy - height // 2
    x = cx - width // 2
    for ch in text:
        bitmap = _GLYPHS[ch]
        for gy, row_bits in enumerate(bitmap):
            for gx, bit in enumerate(row_bits):
                if bit != "1":
                    continue
                for sy in range(scale):
                    py = y0 + gy * scale + sy
                    px = x + gx * scale
                    rows[py][3 * px : 3 * (px + scale)] = color * scale
        x += 6 * scale


def render_image(grid: Grid, style: ImageStyle = DEFAULT_STYLE) -> bytes:
    """Board as PNG bytes; deterministic for fixed (grid, style)."""
    try:
        grid.validate()
    except GridError as exc:
        raise EncodeError(f"cannot render invalid grid: {exc}") from exc
    if any(a not in AGENT_COLORS for a in grid.placements):
        raise EncodeError("agent id outside the fixed palette")

    size = style.image_size(grid.side)
    bg = bytes(BACKGROUND)
    dark = bytes(GRIDLINE)
    lattice_0 = style.margin_px
    lattice_1 = size - style.margin_px

    white_row = bytearray(bg * size)
    line_row = bytearray(white_row)
    line_row[3 * lattice_0 : 3 * lattice_1] = dark * (lattice_1 - lattice_0)
    cell_row = bytearray(white_row)
    for k in range(grid.side + 1):
        x = style.margin_px + k * (style.cell_px + style.line_px)
        cell_row[3 * x : 3 * (x + style.line_px)] = dark * style.line_px

    rows: list[bytearray] = []
    for _ in range(style.margin_px):
        rows.append(bytearray(white_row))
    for r in range(grid.side):
        for _ in range(style.line_px):
            rows.append(bytearray(line_row))
        for _ in range(style.cell_px):
            rows.append(bytearray(cell_row))
    for _ in range(style.line_px):
        rows.append(bytearray(line_row))
    for _ in range(style.margin_px):
        rows.append(bytearray(white_row))

    radius = (style.cell_px * 3) // 8
    for agent in sorted(grid.placements):
        r, c = grid.placements[agent]
        y0, x0 = style.cell_origin(r, c)
        cy, cx = y0 + style.cell_px // 2, x0 + style.cell_px // 2
        _draw_disc(rows, cy, cx, radius, bytes(AGENT_COLORS[agent]))
        _draw_label(rows, cy, cx, f"A{agent}", style.label_scale, bytes(LABEL))

    raw = bytearray()
    for row in rows:
        raw.append(0)  # filter type 0
        raw += row
    ihdr = struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0)
    idat = zlib.compress(bytes(raw), 6)
    return PNG_SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")


def _find_aligned(row: bytes, pattern: bytes, start: int = 0) -> int:
    i = row.find(pattern, start)
    while i != -1 and i % 3 != 0:
        i = row.find(pattern, i + 1)
    return i


def decode_image(png: bytes, style: ImageStyle = DEFAULT_STYLE) -> Grid:
    """Recover the board from an image written by render_image.

    Locates each agent disc by color centroid (chord midpoints) and maps
    the centroid back to its lattice cell; label pixels punch holes in the
    disc but do not move the chord midline.
    """
    if not png.startswith(PNG_SIGNATURE):
        raise DecodeError("not a PNG stream")
    pos = len(PNG_SIGNATURE)
    width = height = None
    idat = bytearray()
    while pos < len(png):
        if pos + 8 > len(png):
            raise DecodeError("truncated chunk header")
        (length,) = struct.unpack(">I", png[pos : pos + 4])
        kind = png[pos + 4 : pos + 8]
        payload = png[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if kind == b"IHDR":
            width, height, depth, color_type = struct.unpack(">IIBB", payload[:10])
            if depth != 8 or color_type != 2:
                raise DecodeError("unsupported PNG layout")
        elif kind == b"IDAT":
            idat += payload
        elif kind == b"IEND":
            break
    if width is None or width != height:
        raise DecodeError("missing or non-square IHDR")

    raw = zlib.decompress(bytes(idat))
    stride = 1 + 3 * width
    if len(raw) != stride * height:
        raise DecodeError("pixel payload size mismatch")

    side = (width - 2 * style.margin_px - style.line_px) // (style.cell_px + style.line_px)
    if style.image_size(side) != width:
        raise DecodeError(f"image size {width} does not fit the style lattice")

    sums: dict[int, list[int]] = {a: [0, 0, 0] for a in AGENT_COLORS}  # [sum_x, sum_y, count]
    for y in range(height):
        off = y * stride
        if raw[off] != 0:
            raise DecodeError(f"unexpected filter type {raw[off]} in row {y}")
        row = raw[off + 1 : off + stride]
        for agent, rgb in AGENT_COLORS.items():
            pattern = bytes(rgb)
            first = _find_aligned(row, pattern)
            if first == -1:
                continue
            last = first
            nxt = _find_aligned(row, pattern, last + 3)
            while nxt != -1:
                last = nxt
                nxt = _find_aligned(row, pattern, last + 3)
            mid2 = (first + last) // 3  # 2*x midpoint in pixels
            sums[agent][0] += mid2
            sums[agent][1] += 2 * y
            sums[agent][2] += 1

    placements: dict[int, tuple[int, int]] = {}
    span = style.cell_px + style.line_px
    for agent, (sx, sy, n) in sums.items():
        if n == 0:
            continue
        cx = sx / (2 * n)
        cy = sy / (2 * n)
        col = int(cx - style.margin_px - style.line_px) // span
        row_ix = int(cy - style.margin_px - style.line_px) // span
        if not (0 <= row_ix < side and 0 <= col < side):
            raise DecodeError(f"agent {agent} centroid outside the lattice")
        placements[agent] = (row_ix, col)
    return Grid(side, placements)
