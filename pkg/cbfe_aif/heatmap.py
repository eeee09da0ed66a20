# SPDX-License-Identifier: MIT-0
"""Minimal self-contained SVG heatmaps.

Every cell carries its exact value in a ``data-value`` attribute so the
picture and the CSV describe the same matrix.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr

import numpy as np

CELL = 56
MARGIN_LEFT = 90
MARGIN_TOP = 70
LOW_COLOUR = np.array([253, 231, 37])
HIGH_COLOUR = np.array([68, 1, 84])
MISSING_COLOUR = "#bdbdbd"


def _colour(value: float, low: float, high: float) -> str:
    if not math.isfinite(value):
        return MISSING_COLOUR
    weight = 0.5 if high == low else (value - low) / (high - low)
    r, g, b = np.rint(LOW_COLOUR + weight * (HIGH_COLOUR - LOW_COLOUR)).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_heatmap(
    values: np.ndarray,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    title: str,
    marked: Iterable[Tuple[int, int]] = (),
    row_title: str = "",
    col_title: str = "",
    fmt: str = "{:.3f}",
    footnote: Optional[str] = None,
) -> str:
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    marked = set(marked)
    finite = values[np.isfinite(values)]
    low, high = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 0.0)
    width = MARGIN_LEFT + cols * CELL + 20
    height = MARGIN_TOP + rows * CELL + (50 if footnote else 30)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'data-rows="{rows}" data-cols="{cols}" font-family="sans-serif" font-size="12">',
        f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{MARGIN_LEFT + cols * CELL / 2}" y="{MARGIN_TOP - 30}" text-anchor="middle">{escape(col_title)}</text>',
        f'<text x="14" y="{MARGIN_TOP + rows * CELL / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {MARGIN_TOP + rows * CELL / 2})">{escape(row_title)}</text>',
    ]
    for j, label in enumerate(col_labels):
        parts.append(
            f'<text x="{MARGIN_LEFT + j * CELL + CELL / 2}" y="{MARGIN_TOP - 8}" text-anchor="middle">{escape(label)}</text>'
        )
    for i, label in enumerate(row_labels):
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{MARGIN_TOP + i * CELL + CELL / 2 + 4}" text-anchor="end">{escape(label)}</text>'
        )
    for i in range(rows):
        for j in range(cols):
            value = float(values[i, j])
            x, y = MARGIN_LEFT + j * CELL, MARGIN_TOP + i * CELL
            stroke = ' stroke="#e41a1c" stroke-width="3"' if (i, j) in marked else ' stroke="#ffffff"'
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{_colour(value, low, high)}"{stroke} '
                f'data-row="{i}" data-col="{j}" data-value={quoteattr(repr(value))}'
                f'{" data-marked=" + quoteattr("true") if (i, j) in marked else ""}/>'
            )
            text = fmt.format(value) if math.isfinite(value) else "inf"
            parts.append(
                f'<text x="{x + CELL / 2}" y="{y + CELL / 2 + 4}" text-anchor="middle" font-size="10">{escape(text)}</text>'
            )
    if footnote:
        parts.append(f'<text x="10" y="{height - 12}" font-size="10">{escape(footnote)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
