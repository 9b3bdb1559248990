"""Exponent region theta_k <= sum_{l<=k} eta_l(R_l) and the lossless rate bound."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..probcore import JointPmf, conditional_entropy
from ..validation import check_pmf, check_rate
from .eta import EtaCurve, eta_curve


@dataclass(frozen=True)
class ExponentRegion:
    K: int
    rates: tuple
    etas: tuple
    bounds: tuple

    def contains(self, thetas, tol=0.0) -> bool:
        return all(t <= b + tol for t, b in zip(thetas, self.bounds))


def exponent_region(spec, curves) -> ExponentRegion:
    """Per-center bounds from per-hop curves; ``spec`` needs ``rates`` (one per hop).

    Curves are interpolated linearly between grid rates, which concavity makes
    an achievable value.
    """
    rates = tuple(check_rate(r, f"R_{l + 1}") for l, r in enumerate(spec.rates))
    if len(curves) != len(rates):
        raise ValueError(f"need {len(rates)} curves, got {len(curves)}")
    etas = tuple(float(c(r)) for c, r in zip(curves, rates))
    return ExponentRegion(len(rates), rates, etas, tuple(np.cumsum(etas).tolist()))


def hop_pairs(p_joint: JointPmf):
    """Pair pmfs (Y_{l-1}, Y_l) for l = 1..K."""
    p = check_pmf(p_joint)
    return [p.marginal([l - 1, l]) for l in range(1, p.ndim)]


def region_curves(p_joint, rates, aux_card=None, n_restarts=16, random_state=0):
    """One :class:`EtaCurve` per hop, each solved at its own rate."""
    return [eta_curve(pair, [R], aux_card, n_restarts, random_state, hop_index=l)
            for l, (pair, R) in enumerate(zip(hop_pairs(p_joint), rates), start=1)]


@dataclass(frozen=True)
class _Rates:
    rates: tuple


def region_from_pmf(p_joint, rates, aux_card=None, n_restarts=16, random_state=0):
    """Return ``(region, curves)`` for a chain pmf over Y_0..Y_K."""
    p = check_pmf(p_joint)
    rates = tuple(rates)
    if len(rates) != p.ndim - 1:
        raise ValueError(f"pmf with {p.ndim} axes needs {p.ndim - 1} rates, got {len(rates)}")
    curves = region_curves(p, rates, aux_card, n_restarts, random_state)
    return exponent_region(_Rates(rates), curves), curves


def lossless_bound(p_xy) -> float:
    """H(X|Y) for a pmf whose axis 0 is the source and axis 1 the side information."""
    p = check_pmf(p_xy, ndim=2, name="p_xy")
    return conditional_entropy(p, 0, 1)


def _fmt(x):
    return "%.12g" % x


def curves_csv(curves) -> str:
    """CSV with columns R, eta, hop (one row per grid rate)."""
    out = io.StringIO()
    out.write("R,eta,hop\n")
    for c in curves:
        for r, v in zip(c.rate_grid, c.values):
            out.write(f"{_fmt(r)},{_fmt(v)},{c.hop_index}\n")
    return out.getvalue()


def region_csv(region: ExponentRegion) -> str:
    out = io.StringIO()
    out.write("k,rate,eta,theta_max\n")
    for k in range(region.K):
        out.write(f"{k + 1},{_fmt(region.rates[k])},{_fmt(region.etas[k])},{_fmt(region.bounds[k])}\n")
    return out.getvalue()


def curve_report(curves) -> str:
    """Plain-text report listing every grid point with its optimising channel."""
    lines = []
    for c in curves:
        lines.append(f"hop {c.hop_index}: |U| = {c.aux_cardinality}, I(Y;Y') = {_fmt(c.info_cap)}")
        for r, v, ch in zip(c.rate_grid, c.values, c.channels):
            rows = "; ".join(" ".join(_fmt(x) for x in row) for row in ch.matrix)
            lines.append(f"  R={_fmt(r)} eta={_fmt(v)} P(u|y)=[{rows}]")
    return "\n".join(lines) + "\n"
