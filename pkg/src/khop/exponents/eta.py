"""Per-hop exponent curves eta(R) = max { I(U;Y') : P_{U|Y}, I(U;Y) <= R }.

The optimisation variable is a test channel P_{U|Y} with U - Y - Y' Markov by
construction. Points on the concave curve are traced with the
information-bottleneck fixed point for the Lagrangian I(U;Y') - lam*I(U;Y);
a rate-constrained SLSQP polish makes the returned channel exactly feasible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..probcore import ConditionalPmf, JointPmf, entropy, mutual_information
from ._grid import grid_columns, scan
from ..validation import check_pmf, check_positive_int, check_rate, check_rng

LN2 = math.log(2.0)
FEAS_TOL = 1e-6
_TIE = 1e-9
_LOG_FLOOR = 1e-300


class EtaSolution(NamedTuple):
    value: float
    channel: ConditionalPmf
    rate: float


def _pair(p_pair):
    p = check_pmf(p_pair, ndim=2, name="p_pair")
    P = p.mass
    return p, P, P.sum(axis=1), P.sum(axis=0)


def _xlogx_ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num > 0, num * np.log2(np.where(num > 0, num, 1.0) / np.where(den > 0, den, 1.0)), 0.0)
    return r


def channel_informations(Q, P):
    """(I(U;Y), I(U;Y')) in bits for channel(s) ``Q`` of shape (..., |Y|, |U|)."""
    Q = np.asarray(Q, dtype=float)
    p0, p1 = P.sum(axis=1), P.sum(axis=0)
    pu = np.einsum("a,...am->...m", p0, Q)
    joint0 = p0[:, None] * Q
    i0 = _xlogx_ratio(joint0, np.expand_dims(p0, -1) * pu[..., None, :]).sum(axis=(-2, -1))
    pub = np.einsum("...am,ab->...mb", Q, P)
    i1 = _xlogx_ratio(pub, pu[..., :, None] * p1).sum(axis=(-2, -1))
    return np.maximum(i0, 0.0), np.maximum(i1, 0.0)


def _grad_informations(Q, P):
    p0 = P.sum(axis=1)
    pu = p0 @ Q
    lq = np.log(np.maximum(Q, _LOG_FLOOR))
    lpu = np.log(np.maximum(pu, _LOG_FLOOR))
    g0 = p0[:, None] * (lq - lpu[None, :])
    pub = Q.T @ P
    lpub = np.log(np.maximum(pub, _LOG_FLOOR))
    g1 = P @ lpub.T - p0[:, None] * lpu[None, :]
    return g0 / LN2, g1 / LN2


def constant_channel(a, m) -> np.ndarray:
    Q = np.zeros((a, m))
    Q[:, 0] = 1.0
    return Q


def identity_channel(a, m) -> np.ndarray:
    Q = np.zeros((a, m))
    Q[np.arange(a), np.arange(a)] = 1.0
    return Q


def _dirichlet_channels(rng, r, a, m):
    Q = rng.gamma(1.0, size=(r, a, m))
    return Q / Q.sum(axis=-1, keepdims=True)


def ib_iterate(P, lam, Q0, tol=1e-9, max_iter=5000):
    """Information-bottleneck fixed point for max I(U;Y') - lam*I(U;Y), batched over restarts.

    Returns the final channels and their (I(U;Y), I(U;Y')).
    """
    beta = 1.0 / lam
    p0 = P.sum(axis=1)
    cond = P / np.where(p0 > 0, p0, 1.0)[:, None]
    Q = np.array(Q0, dtype=float)
    prev = None
    check_every = 8  # the objective is evaluated on a stride to keep iterations cheap
    for it in range(max_iter):
        pu = np.einsum("a,ram->rm", p0, Q)
        pub = np.einsum("ram,ab->rmb", Q, P)
        with np.errstate(divide="ignore", invalid="ignore"):
            post = np.where(pu[..., None] > 0, pub / pu[..., None], 1.0 / P.shape[1])
        # KL(P(.|y) || P(.|u)) up to a per-y constant, which normalisation removes
        cross = -np.einsum("ab,rmb->ram", cond, np.log(np.maximum(post, _LOG_FLOOR)))
        logits = np.log(np.maximum(pu, _LOG_FLOOR))[:, None, :] - beta * cross
        logits = np.where(pu[:, None, :] > 0, logits, -np.inf)
        logits -= logits.max(axis=-1, keepdims=True)
        Q = np.exp(logits)
        Q /= Q.sum(axis=-1, keepdims=True)
        if it % check_every:
            continue
        i0, i1 = channel_informations(Q, P)
        obj = i1 - lam * i0
        if prev is not None and np.max(np.abs(obj - prev)) < tol * check_every:
            break
        prev = obj
    i0, i1 = channel_informations(Q, P)
    return Q, i0, i1


def _best(Qs, i0, i1, score):
    order = sorted(range(len(score)), key=lambda r: (-round(score[r] / _TIE), i0[r]))
    r = order[0]
    return Qs[r], float(i0[r]), float(i1[r])


def _polish(P, R, Q_start, maxiter=500):
    a, m = Q_start.shape

    def f(x):
        Q = x.reshape(a, m)
        _, i1 = channel_informations(Q, P)
        _, g1 = _grad_informations(Q, P)
        return -float(i1), -g1.ravel()

    def con(x):
        i0, _ = channel_informations(x.reshape(a, m), P)
        return float(R - i0)

    def con_jac(x):
        g0, _ = _grad_informations(x.reshape(a, m), P)
        return -g0.ravel()

    A_eq = np.kron(np.eye(a), np.ones((1, m)))
    res = minimize(
        f, Q_start.ravel(), jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * (a * m),
        constraints=[{"type": "ineq", "fun": con, "jac": con_jac},
                     {"type": "eq", "fun": lambda x: A_eq @ x - 1.0, "jac": lambda x: A_eq}],
        options={"maxiter": maxiter, "ftol": 1e-13},
    )
    Q = np.clip(res.x.reshape(a, m), 0.0, None)
    Q /= Q.sum(axis=1, keepdims=True)
    return Q


def eta(p_pair, R, aux_card=None, n_restarts=16, random_state=0, tol=1e-9, max_iter=5000) -> EtaSolution:
    """Solve eta(R) for the pair pmf of (Y_{l-1}, Y_l).

    Parameters
    ----------
    p_pair : JointPmf
        Two-axis pmf; axis 0 is the encoder's observation.
    R : float
        Rate budget in bits; the returned channel satisfies I(U;Y_{l-1}) <= R + 1e-6.
    aux_card : int, optional
        |U|. Defaults to |Y_{l-1}| + 1 and may not exceed |Y_{l-1}||Y_l| + 2.

    Returns
    -------
    EtaSolution
        ``(value, channel, rate)``: the attained I(U;Y_l), the test channel, and its I(U;Y_{l-1}).
    """
    p, P, p0, _ = _pair(p_pair)
    R = check_rate(R)
    a, b = P.shape
    m = _aux_card(aux_card, a, b)
    rng = check_rng(random_state)
    n_restarts = check_positive_int(n_restarts, "n_restarts")

    def solution(Q):
        i0, i1 = channel_informations(Q, P)
        return EtaSolution(float(i1), _as_channel(Q, p), float(i0))

    if R == 0:
        return solution(constant_channel(a, m))
    if m >= a and R >= entropy(p.marginal([0])) - 1e-12:
        return solution(identity_channel(a, m))

    cands = [constant_channel(a, m)]
    if m >= a:
        cands.append(identity_channel(a, m))
    lo, hi = 0.0, 1.0
    warm = None
    for _ in range(40):
        lam = 0.5 * (lo + hi)
        Q0 = _dirichlet_channels(rng, n_restarts, a, m)
        if warm is not None:
            Q0[0] = warm
        Qs, i0, i1 = ib_iterate(P, lam, Q0, tol, max_iter)
        Qb, r0, _ = _best(Qs, i0, i1, i1 - lam * i0)
        cands.extend(Qs[k] for k in range(len(Qs)))
        warm = Qb
        if abs(r0 - R) < 1e-3 or hi - lo < 1e-4:
            break
        if r0 > R:
            lo = lam
        else:
            hi = lam

    cands = np.array(cands)
    i0, i1 = channel_informations(cands, P)
    feasible = i0 <= R + 1e-12
    starts = []
    if feasible.any():
        starts.append(cands[np.flatnonzero(feasible)[np.argmax(i1[feasible])]])
    over = np.flatnonzero(~feasible)
    if over.size:
        starts.append(cands[over[np.argmin(i0[over])]])
    final = [cands[k] for k in np.flatnonzero(feasible)]
    for Q in starts:
        Qp = _polish(P, R, Q)
        r0, _ = channel_informations(Qp, P)
        if r0 <= R + 1e-9:
            final.append(Qp)
    final = np.array(final)
    f0, f1 = channel_informations(final, P)
    Qb, _, _ = _best(final, f0, f1, f1)
    return solution(Qb)


def _aux_card(aux_card, a, b):
    if aux_card is None:
        return a + 1
    m = check_positive_int(aux_card, "aux_card")
    if m > a * b + 2:
        raise ValueError(f"aux_card {m} exceeds the cardinality bound |Y|*|Y'|+2 = {a * b + 2}")
    return m


def _as_channel(Q, p: JointPmf) -> ConditionalPmf:
    Q = np.clip(Q, 0.0, None)
    Q = Q / Q.sum(axis=1, keepdims=True)
    return ConditionalPmf(Q, [p.axes[0]], None, atol=1e-9)


def eta_oracle(p_pair, R, grid_steps=200, aux_card=None) -> float:
    """Exhaustive grid search for eta(R) over channels with entries k/grid_steps.

    ``R`` may be a sequence, in which case an array of values is returned
    (one grid pass serves every rate).

    Independent of :func:`eta`: both information terms are sums of per-column
    contributions, tabulated once over the grid of columns. Grids refine
    monotonically when ``grid_steps`` is multiplied by an integer.
    """
    p, P, p0, p1 = _pair(p_pair)
    scalar = np.ndim(R) == 0
    Rs = np.array([check_rate(float(r)) for r in np.atleast_1d(R)])
    a, b = P.shape
    m = a + 1 if aux_card is None else check_positive_int(aux_card, "aux_card")
    if a > 3 or m > 4:
        raise ValueError(f"alphabet too large for the oracle (|Y|={a}, |U|={m}; limits 3 and 4)")
    G = check_positive_int(grid_steps, "grid_steps")

    cols = grid_columns(G, a)
    pu = cols @ p0
    with np.errstate(divide="ignore", invalid="ignore"):
        phi0 = np.sum(np.where(cols > 0, p0 * cols * np.log2(cols / pu[:, None]), 0.0), axis=1)
        pub = cols @ P
        phi1 = np.sum(np.where(pub > 0, pub * np.log2(pub / (pu[:, None] * p1[None, :])), 0.0), axis=1)
    phi0 = np.where(pu > 0, phi0, 0.0)
    phi1 = np.where(pu > 0, phi1, 0.0)

    best = np.zeros(len(Rs))
    for r, v in scan(phi0, phi1, a, m, G):
        for i, R in enumerate(Rs):
            ok = r <= R + 1e-12
            if ok.any():
                best[i] = max(best[i], v[ok].max())
    return float(best[0]) if scalar else best


@dataclass
class EtaCurve:
    """Sampled concave curve R -> eta(R) with the optimising channel at each grid rate."""

    hop_index: int
    rate_grid: np.ndarray
    values: np.ndarray
    channels: list
    aux_cardinality: int
    info_cap: float
    points: list = field(default_factory=list, repr=False)

    def __call__(self, R):
        R = np.asarray(R, dtype=float)
        if np.any(R < 0):
            raise ValueError("rates must be nonnegative")
        top = self.rate_grid[-1]
        if np.any(R > top + 1e-12) and self.values[-1] < self.info_cap - 1e-9:
            raise ValueError(f"rate {float(np.max(R))} outside curve range [0, {top}]")
        return np.interp(R, self.rate_grid, self.values)

    def check(self, tol=FEAS_TOL):
        """Raise AssertionError if the curve violates its invariants."""
        r, v = self.rate_grid, self.values
        assert np.all(np.diff(r) > 0), "rate grid must increase"
        assert abs(r[0]) < 1e-12 and abs(v[0]) < tol, "curve must start at (0, 0)"
        assert np.all(np.diff(v) >= -tol), "values must be nondecreasing"
        if len(r) > 2:
            slopes = np.diff(v) / np.diff(r)
            assert np.all(np.diff(slopes) <= tol / np.diff(r)[1:].clip(min=1e-3) + tol), "values must be concave"
        assert np.all(v <= np.minimum(r, self.info_cap) + tol), "values exceed min(R, I(Y;Y'))"
        assert np.all(v >= -tol)

    def channel_at(self, R) -> ConditionalPmf:
        """Channel of the largest grid rate not exceeding ``R``."""
        i = int(np.searchsorted(self.rate_grid, R + 1e-12, side="right")) - 1
        return self.channels[max(i, 0)]


def upper_concave_envelope(rates, values):
    """Indices of the upper concave hull vertices, from (0,0) to the first maximum."""
    order = np.lexsort((-np.asarray(values), np.asarray(rates)))
    hull = []
    for i in order:
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            cross = ((rates[i2] - rates[i1]) * (values[i] - values[i1])
                     - (values[i2] - values[i1]) * (rates[i] - rates[i1]))
            if cross >= -1e-15:
                hull.pop()
            else:
                break
        if hull and rates[i] - rates[hull[-1]] < 1e-12:
            continue
        hull.append(i)
    vmax = max(values[i] for i in hull)
    out = []
    for i in hull:
        out.append(i)
        if values[i] >= vmax - 1e-15:
            break
    return out


DEFAULT_LAMBDAS = tuple(np.round(np.linspace(1.0, 0.0, 51), 10))


def lagrangian_sweep(p_pair, lambdas=DEFAULT_LAMBDAS, aux_card=None, n_restarts=16,
                     random_state=0, hop_index=1, tol=1e-9, max_iter=5000) -> EtaCurve:
    """Trace eta by maximising I(U;Y') - lam*I(U;Y) for each lam (descending)."""
    p, P, p0, _ = _pair(p_pair)
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("lambdas must be nonempty")
    if any(x < 0 for x in lambdas) or any(x < y for x, y in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be nonnegative and sorted descending")
    a, b = P.shape
    m = _aux_card(aux_card, a, b)
    rng = check_rng(random_state)
    Imax = mutual_information(p, 0, 1)

    points = [(math.inf, 0.0, 0.0, constant_channel(a, m))]
    warm = None
    for lam in lambdas:
        if lam >= 1.0:
            Q = constant_channel(a, m)
        elif lam == 0.0 and m >= a:
            Q = identity_channel(a, m)
        else:
            lam_eff = max(lam, 1e-6)
            Q0 = _dirichlet_channels(rng, n_restarts, a, m)
            if warm is not None:
                Q0[0] = warm
            Qs, i0, i1 = ib_iterate(P, lam_eff, Q0, tol, max_iter)
            Q, _, _ = _best(Qs, i0, i1, i1 - lam_eff * i0)
            warm = Q
        i0, i1 = channel_informations(Q, P)
        points.append((lam, float(i0), float(i1), Q))

    rates = np.array([pt[1] for pt in points])
    vals = np.array([pt[2] for pt in points])
    keep = upper_concave_envelope(rates, vals)
    return EtaCurve(
        hop_index=hop_index,
        rate_grid=rates[keep],
        values=vals[keep],
        channels=[_as_channel(points[i][3], p) for i in keep],
        aux_cardinality=m,
        info_cap=Imax,
        points=[(pt[0], pt[1], pt[2]) for pt in points],
    )


def eta_curve(p_pair, rates, aux_card=None, n_restarts=16, random_state=0, hop_index=1) -> EtaCurve:
    """Curve sampled by solving :func:`eta` at each requested rate (0 is always included)."""
    p, P, _, _ = _pair(p_pair)
    rates = sorted(set([0.0] + [check_rate(r) for r in rates]))
    sols = [eta(p, r, aux_card, n_restarts, random_state) for r in rates]
    return EtaCurve(
        hop_index=hop_index,
        rate_grid=np.array(rates),
        values=np.array([s.value for s in sols]),
        channels=[s.channel for s in sols],
        aux_cardinality=sols[0].channel.kernel.shape[1],
        info_cap=mutual_information(p, 0, 1),
    )


class EtaCurveEstimator(BaseEstimator):
    """Fit an eta curve to a pair pmf; ``predict`` interpolates eta at given rates.

    Parameters
    ----------
    lambdas : sequence of float, optional
        Descending Lagrange multipliers for the sweep.
    aux_card : int, optional
    n_restarts : int
    random_state : int or Generator
    """

    def __init__(self, lambdas=None, aux_card=None, n_restarts=16, random_state=0):
        self.lambdas = lambdas
        self.aux_card = aux_card
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, p_pair, y=None):
        lambdas = DEFAULT_LAMBDAS if self.lambdas is None else self.lambdas
        self.curve_ = lagrangian_sweep(p_pair, lambdas, self.aux_card, self.n_restarts, self.random_state)
        return self

    def predict(self, rates):
        check_is_fitted(self, "curve_")
        return self.curve_(np.asarray(rates, dtype=float))
