"""Hand-written SVG heatmaps of conditional maps, time along x and Rabi frequency along y."""
import html

import numpy as np

from fluoro.weak import CLASSICAL_BOUND

CELL = 3
MARGIN = 48
MISSING_COLOR = '#808080'


def value_to_color(value, limit):
    """Diverging blue-white-red scale over [-limit, limit]."""
    if np.isnan(value):
        return MISSING_COLOR
    fraction = float(np.clip(value / limit, -1.0, 1.0))
    fade = int(round(255 * (1 - abs(fraction))))
    if fraction >= 0:
        return f'#ff{fade:02x}{fade:02x}'
    return f'#{fade:02x}{fade:02x}ff'


def _crossing(a, b):
    return a / (a - b)


def contour_segments(field, level):
    """Marching-squares segments of ``field == level`` in cell-index coordinates (row, column)."""
    shifted = np.nan_to_num(np.asarray(field, dtype=float) - level, nan=-1.0)
    segments = []
    rows, cols = shifted.shape
    for i in range(rows - 1):
        for j in range(cols - 1):
            corners = (shifted[i, j], shifted[i, j + 1], shifted[i + 1, j + 1], shifted[i + 1, j])
            points = []
            edges = ((0, 1, (i, j), (0, 1)), (1, 2, (i, j + 1), (1, 0)),
                     (3, 2, (i + 1, j), (0, 1)), (0, 3, (i, j), (1, 0)))
            for first, second, origin, direction in edges:
                a, b = corners[first], corners[second]
                if (a > 0) != (b > 0):
                    fraction = _crossing(a, b)
                    points.append((origin[0] + direction[0] * fraction, origin[1] + direction[1] * fraction))
            for start in range(0, len(points) - 1, 2):
                segments.append((points[start], points[start + 1]))
    return segments


def render_heatmap(conditional_map, title='', real_part=True):
    values = conditional_map.values.real if real_part else conditional_map.values.imag
    n_times, n_freqs = values.shape
    finite = values[~np.isnan(values)]
    limit = max(CLASSICAL_BOUND, float(np.max(np.abs(finite))) if finite.size else CLASSICAL_BOUND)
    width, height = n_times * CELL, n_freqs * CELL

    def x_of(time_index):
        return (time_index + 0.5) * CELL

    def y_of(freq_index):
        return height - (freq_index + 0.5) * CELL

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{-MARGIN} {-MARGIN} '
             f'{width + 2 * MARGIN} {height + 2 * MARGIN}">',
             f'  <title>{html.escape(title)}</title>',
             '  <g shape-rendering="crispEdges">']
    for i in range(n_times):
        for j in range(n_freqs):
            lines.append(f'    <rect x="{i * CELL}" y="{height - (j + 1) * CELL}" width="{CELL}" height="{CELL}" '
                         f'fill="{value_to_color(values[i, j], limit)}"/>')
    lines.append('  </g>')
    path = []
    for (row_a, col_a), (row_b, col_b) in contour_segments(np.abs(values), CLASSICAL_BOUND):
        path.append(f'M{x_of(row_a):.2f} {y_of(col_a):.2f}L{x_of(row_b):.2f} {y_of(col_b):.2f}')
    if path:
        lines.append(f'  <path d="{"".join(path)}" fill="none" stroke="black" stroke-width="0.8"/>')
    times, freqs = conditional_map.times, conditional_map.rabi_freqs
    lines.append(f'  <text x="0" y="{height + 20}" font-size="12" font-family="sans-serif">'
                 f't = {times[0]:.3g} .. {times[-1]:.3g} us</text>')
    lines.append(f'  <text x="{-MARGIN + 4}" y="-12" font-size="12" font-family="sans-serif">'
                 f'nu_R = {freqs[0]:.3g} .. {freqs[-1]:.3g} MHz, color limit +/-{limit:.3g}</text>')
    lines.append('</svg>')
    return '\n'.join(lines) + '\n'


def write_heatmap(path, conditional_map, title=''):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_heatmap(conditional_map, title), encoding='utf-8')
    return path
