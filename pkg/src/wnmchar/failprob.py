"""Write-failure probability from fitted normal margin statistics.

A low-side failure happens when the V_writeL of an instance lies below the
input shift ``dv``; a high-side failure when V_writeH lies above
``vdd - dv``. Both are normal tail integrals.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

_SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    """Standard normal CDF.

    Uses ``0.5 * erfc(-x / sqrt(2))``; the C library erfc is accurate to a few
    ulp in relative terms, so both tails keep full relative precision and the
    absolute error is far below 1e-10.
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("normal_cdf of NaN")
    return 0.5 * math.erfc(-x / _SQRT2)


def _check_sigma(sigma: float, allow_step: bool):
    if not sigma > 0 and not (allow_step and sigma == 0):
        raise ValueError(f"sigma must be > 0 (got {sigma}); pass allow_step=True for a "
                         "zero-variance step function")


def p_fail_low(mu: float, sigma: float, delta_v: float, *, allow_step: bool = False) -> float:
    """Probability that V_writeL is below ``delta_v``."""
    _check_sigma(sigma, allow_step)
    if delta_v < 0:
        raise ValueError("delta_v must be >= 0")
    if sigma == 0:
        return 1.0 if delta_v > mu else 0.0
    return normal_cdf((delta_v - mu) / sigma)


def p_fail_high(mu: float, sigma: float, delta_v: float, vdd: float, *,
                allow_step: bool = False) -> float:
    """Probability that V_writeH is above ``vdd - delta_v``."""
    _check_sigma(sigma, allow_step)
    if not 0 <= delta_v <= vdd:
        raise ValueError("delta_v must lie in [0, vdd]")
    edge = vdd - delta_v
    if sigma == 0:
        return 1.0 if mu > edge else 0.0
    # 1 - Phi((edge - mu)/sigma) evaluated as the mirrored lower tail
    return normal_cdf((mu - edge) / sigma)


def default_grid(vdd: float, step: float = 1e-3) -> np.ndarray:
    n = int(round(vdd / step))
    g = np.arange(n + 1) * step
    g[-1] = min(g[-1], vdd)
    return g


@dataclass(frozen=True)
class FailureCurve:
    delta_v: np.ndarray
    p_fail_low: np.ndarray
    p_fail_high: np.ndarray
    source: tuple = ()

    def __post_init__(self):
        for arr in (self.p_fail_low, self.p_fail_high):
            if np.any((arr < 0) | (arr > 1)):
                raise ValueError("probabilities outside [0, 1]")
            if np.any(np.diff(arr) < 0):
                raise ValueError("failure probability decreases along the grid")


def build_curve(summary_low, summary_high, vdd: float, grid=None, *, allow_step: bool = False,
                source: tuple = ()) -> FailureCurve:
    """Evaluate both failure branches on an ascending ``grid`` in [0, vdd]."""
    g = default_grid(vdd) if grid is None else np.asarray(grid, float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly ascending")
    if g[0] < 0 or g[-1] > vdd:
        raise ValueError("grid must lie within [0, vdd]")
    lo = np.array([p_fail_low(summary_low.mean, summary_low.std, v, allow_step=allow_step)
                   for v in g])
    hi = np.array([p_fail_high(summary_high.mean, summary_high.std, v, vdd,
                               allow_step=allow_step) for v in g])
    return FailureCurve(g, lo, hi, tuple(source))


def empirical_fraction_below(samples, delta_v) -> np.ndarray:
    x = np.sort(np.asarray(samples, float))
    return np.searchsorted(x, np.asarray(delta_v, float), side="left") / x.size


@dataclass(frozen=True)
class AgreementPoint:
    delta_v: float
    empirical: float
    model: float
    half_width: float

    @property
    def ok(self) -> bool:
        return abs(self.empirical - self.model) <= self.half_width


def empirical_agreement(samples, points) -> list[AgreementPoint]:
    """Compare the fitted-normal p_fail_low with the sample fraction below each point.

    The band is three binomial standard errors at the model probability.
    """
    x = np.asarray(samples, float)
    n = x.size
    mu, sd = float(x.mean()), float(x.std(ddof=1))
    emp = empirical_fraction_below(x, points)
    out = []
    for dv, e in zip(points, emp):
        p = p_fail_low(mu, sd, float(dv))
        out.append(AgreementPoint(float(dv), float(e), p, 3.0 * math.sqrt(p * (1 - p) / n)))
    return out


CURVE_FIELDS = ("ff_kind", "tech", "age", "mode", "delta_v", "p_fail_low", "p_fail_high")


def write_curves_csv(path, curves: dict) -> None:
    """``curves`` maps ``(kind, tech, age, mode)`` to a :class:`FailureCurve`."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for (kind, tech, age, mode), c in curves.items():
            for dv, lo, hi in zip(c.delta_v, c.p_fail_low, c.p_fail_high):
                w.writerow([kind, tech, repr(float(age)), mode, repr(float(dv)),
                            repr(float(lo)), repr(float(hi))])


def read_curves_csv(path) -> dict:
    rows: dict = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            key = (r["ff_kind"], r["tech"], float(r["age"]), r["mode"])
            rows.setdefault(key, []).append((float(r["delta_v"]), float(r["p_fail_low"]),
                                             float(r["p_fail_high"])))
    return {k: FailureCurve(*map(np.array, zip(*v))) for k, v in rows.items()}


_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def curves_svg(curves: dict, title: str = "", p_floor: float = 1e-6) -> str:
    """Grid of panels, one per flip-flop kind, each age drawn as one series.

    Solid lines are the low branch, dashed lines the high branch; the y axis is
    log10(p) clipped at ``p_floor``.
    """
    kinds = sorted({k[0] for k in curves})
    ages = sorted({k[2] for k in curves})
    pw, ph, pad, cols = 260, 200, 40, 4
    rows = max(1, math.ceil(len(kinds) / cols))
    width = cols * (pw + pad) + pad
    height = rows * (ph + pad) + pad + 40
    ymin = math.log10(p_floor)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{pad}" y="20" font-size="14">{escape(title)}</text>']
    for i, kind in enumerate(kinds):
        x0 = pad + (i % cols) * (pw + pad)
        y0 = 40 + pad / 2 + (i // cols) * (ph + pad)
        out.append(f'<g class="panel" data-kind="{escape(kind)}">')
        out.append(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" '
                   f'stroke="#444"/>')
        out.append(f'<text x="{x0 + 4}" y="{y0 + 14}">FF {escape(kind)}</text>')
        panel = {k: c for k, c in curves.items() if k[0] == kind}
        vmax = max(float(c.delta_v[-1]) for c in panel.values())
        for key in sorted(panel, key=lambda k: k[2]):
            c = panel[key]
            color = _COLORS[ages.index(key[2]) % len(_COLORS)]
            out.append(f'<g class="series" data-age="{key[2]:g}" stroke="{color}" '
                       f'fill="none">')
            for arr, dash in ((c.p_fail_low, ""), (c.p_fail_high, ' stroke-dasharray="4 3"')):
                pts = []
                for dv, p in zip(c.delta_v, arr):
                    y = max(math.log10(p) if p > 0 else ymin, ymin)
                    px = x0 + pw * float(dv) / vmax
                    py = y0 + ph * (y / ymin)
                    pts.append(f"{px:.2f},{py:.2f}")
                out.append(f'<polyline points="{" ".join(pts)}"{dash}/>')
            out.append("</g>")
        out.append(f'<text x="{x0 + pw / 2 - 20}" y="{y0 + ph + 14}">dv (V)</text>')
        out.append("</g>")
    lx = pad
    for j, age in enumerate(ages):
        color = _COLORS[j % len(_COLORS)]
        out.append(f'<text x="{lx + 90 * j}" y="34" fill="{color}">{age:g} y</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
