"""Wyner-Ziv rate R_min(D) = min I(X;S|Y) subject to E d(X, g(S,Y)) <= D, with S - X - Y."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InfeasibleError
from ..probcore import ConditionalPmf
from ..validation import check_pmf, check_positive_int, check_rate, check_rng
from ._grid import grid_columns, scan

LN2 = math.log(2.0)
MAX_MAPS = 10**6
_FLOOR = 1e-300


@dataclass(frozen=True)
class DistortionSpec:
    """Per-letter distortion table d[x, z] and the allowed average D."""

    d: np.ndarray
    D: float

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 2 or not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distortion table must be a finite nonnegative matrix")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "D", check_rate(self.D, "D"))

    @classmethod
    def hamming(cls, size, D):
        return cls(1.0 - np.eye(size), D)


@dataclass(frozen=True)
class WynerZivSolution:
    rate: float
    test_channel: ConditionalPmf
    reconstruction: np.ndarray  # g[s, y] -> z index
    achieved_distortion: float


def conditional_rate(W, P):
    """I(X;S|Y) in bits for test channel W[x, s] and source P[x, y]."""
    q = np.einsum("xy,xs->ys", P, W)
    py = P.sum(axis=0)
    qsy = q / np.where(py > 0, py, 1.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(W[:, None, :] > 0,
                     P[:, :, None] * W[:, None, :] * np.log2(np.maximum(W, _FLOOR)[:, None, :]
                                                            / np.maximum(qsy, _FLOOR)[None, :, :]),
                     0.0)
    return max(float(t.sum()), 0.0)


def _rate_grad(W, P):
    q = np.einsum("xy,xs->ys", P, W)
    py = P.sum(axis=0)
    qsy = q / np.where(py > 0, py, 1.0)[:, None]
    px = P.sum(axis=1)
    return (px[:, None] * np.log(np.maximum(W, _FLOOR)) - P @ np.log(np.maximum(qsy, _FLOOR))) / LN2


def map_cost(P, d, g):
    """c[x, s] = sum_y P(y|x) d(x, g(s,y)): expected distortion of emitting s from x."""
    px = P.sum(axis=1)
    cond = P / np.where(px > 0, px, 1.0)[:, None]
    # d[x, g[s, y]] has shape (x, s, y)
    return np.einsum("xy,xsy->xs", cond, d[:, g])


def _distortion(W, P, d, g):
    px = P.sum(axis=1)
    return float(np.sum(px[:, None] * W * map_cost(P, d, g)))


def _ba(P, c, slope, W0, tol=1e-10, max_iter=2000):
    """Minimise I(X;S|Y) + slope * E c by alternating over W and q(s|y)."""
    py = P.sum(axis=0)
    px = P.sum(axis=1)
    cond = P / np.where(px > 0, px, 1.0)[:, None]
    W = W0.copy()
    prev = math.inf
    for it in range(max_iter):
        q = np.einsum("xy,xs->ys", P, W) / np.where(py > 0, py, 1.0)[:, None]
        logits = cond @ np.log(np.maximum(q, _FLOOR)) - slope * c
        logits -= logits.max(axis=1, keepdims=True)
        W = np.exp(logits)
        W /= W.sum(axis=1, keepdims=True)
        if it % 8 == 0:
            obj = conditional_rate(W, P) + slope * float(np.sum(px[:, None] * W * c)) / LN2
            if abs(prev - obj) < tol:
                break
            prev = obj
    return W


def _min_cost_channel(c):
    W = np.zeros_like(c)
    W[np.arange(c.shape[0]), np.argmin(c, axis=1)] = 1.0
    return W


def _polish(P, c, D, W):
    a, m = W.shape
    px = P.sum(axis=1)
    lin = (px[:, None] * c).ravel()
    A_eq = np.kron(np.eye(a), np.ones((1, m)))
    res = minimize(
        lambda x: (conditional_rate(x.reshape(a, m), P), _rate_grad(x.reshape(a, m), P).ravel()),
        W.ravel(), jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * (a * m),
        constraints=[{"type": "ineq", "fun": lambda x: D - lin @ x, "jac": lambda x: -lin},
                     {"type": "eq", "fun": lambda x: A_eq @ x - 1.0, "jac": lambda x: A_eq}],
        options={"maxiter": 300, "ftol": 1e-14},
    )
    Wp = np.clip(res.x.reshape(a, m), 0.0, None)
    return Wp / Wp.sum(axis=1, keepdims=True)


def _solve_for_map(P, d, D, g, rng, n_restarts):
    """Best test channel for a fixed reconstruction map; None when the map cannot meet D."""
    px = P.sum(axis=1)
    c = map_cost(P, d, g)
    W_min = _min_cost_channel(c)
    dmin = float(np.sum(px[:, None] * W_min * c))
    if dmin > D + 1e-12:
        return None
    a, m = c.shape
    cands = []
    for r in range(n_restarts):
        W0 = rng.dirichlet(np.ones(m), size=a) if r else np.full((a, m), 1.0 / m)
        lo, hi = 0.0, 1.0
        while hi < 1e4:
            W = _ba(P, c, hi, W0)
            if np.sum(px[:, None] * W * c) <= D:
                break
            hi *= 2
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            W = _ba(P, c, mid, W)
            if np.sum(px[:, None] * W * c) <= D:
                hi = mid
            else:
                lo = mid
        W = _ba(P, c, hi, W0)
        # mixing towards the minimum-cost channel meets D exactly; the rate is convex in W
        e = float(np.sum(px[:, None] * W * c))
        if e > D:
            t = (e - D) / (e - dmin) if e > dmin else 1.0
            W = (1 - t) * W + t * W_min
        cands.append(W)
        Wp = _polish(P, c, D, W)
        if float(np.sum(px[:, None] * Wp * c)) <= D + 1e-10:
            cands.append(Wp)
    rates = [conditional_rate(W, P) for W in cands]
    i = int(np.argmin(rates))
    return rates[i], cands[i]


def _canonical_maps(s_card, y_card, z_card):
    """Reconstruction maps up to relabelling S: sorted sets of rows g[s, :].

    Two labels sharing a row can be merged without changing the distortion or
    raising I(X;S|Y), so repeated rows are only needed when there are fewer
    distinct rows than labels.
    """
    rows = list(itertools.product(range(z_card), repeat=y_card))
    pick = itertools.combinations if len(rows) >= s_card else itertools.combinations_with_replacement
    for combo in pick(range(len(rows)), s_card):
        yield np.array([rows[i] for i in combo], dtype=np.int64)


def _zero_rate(P, d):
    """Distortion attainable with no description: z chosen from y alone."""
    e = np.einsum("xy,xz->yz", P, d)
    return float(e.min(axis=1).sum()), e.argmin(axis=1)


def _greedy_maps(P, d, D, s_card, rng, n_restarts):
    """Alternate between the best map for the posterior and the best channel for the map."""
    a, b = P.shape
    for _ in range(n_restarts):
        W = rng.dirichlet(np.ones(s_card), size=a)
        g = None
        for _ in range(50):
            post = P[:, :, None] * W[:, None, :]  # (x, y, s)
            g_new = np.einsum("xys,xz->syz", post, d).argmin(axis=-1)
            if g is not None and np.array_equal(g, g_new):
                break
            g = g_new
            got = _solve_for_map(P, d, D, g, rng, 1)
            if got is None:
                break
            W = got[1]
        if g is not None:
            yield g


def wyner_ziv_rmin(p_xy, dist: DistortionSpec, s_card=None, n_restarts=2, random_state=0,
                   max_maps=MAX_MAPS) -> WynerZivSolution:
    """Minimum rate for reconstructing X within average distortion D given decoder side information Y.

    Parameters
    ----------
    p_xy : JointPmf
        Axis 0 is the source X, axis 1 the side information Y.
    dist : DistortionSpec
        Table over X x Z and the target D.
    s_card : int, optional
        |S|, default |X| + 1.

    Reconstruction maps g: S x Y -> Z are enumerated exhaustively (up to
    relabelling S) when there are at most ``max_maps`` of them; for each map the
    rate is convex in the test channel and is minimised by alternating updates
    with a distortion multiplier, then polished against the exact constraint.
    """
    p = check_pmf(p_xy, ndim=2, name="p_xy")
    P = p.mass
    a, b = P.shape
    d = dist.d
    if d.shape[0] != a:
        raise ValueError(f"distortion table has {d.shape[0]} rows, source alphabet has {a}")
    z_card = d.shape[1]
    m = a + 1 if s_card is None else check_positive_int(s_card, "s_card")
    rng = check_rng(random_state)
    D = dist.D

    floor = float(np.sum(P * d.min(axis=1)[:, None]))
    if D < floor - 1e-12:
        raise InfeasibleError(f"distortion {D} below the minimum attainable {floor:.12g}")
    e0, z0 = _zero_rate(P, d)
    if D >= e0:
        W = np.zeros((a, m))
        W[:, 0] = 1.0
        g = np.tile(z0, (m, 1))
        return WynerZivSolution(0.0, ConditionalPmf(W, [p.axes[0]]), g, e0)

    if z_card ** (m * b) <= max_maps:
        maps = _canonical_maps(m, b, z_card)
    else:
        maps = _greedy_maps(P, d, D, m, rng, n_restarts)
    best = None
    for g in maps:
        got = _solve_for_map(P, d, D, g, rng, n_restarts)
        if got is not None and (best is None or got[0] < best[0] - 1e-12):
            best = (got[0], got[1], g)
    if best is None:
        raise InfeasibleError(f"no reconstruction map meets distortion {D} with |S| = {m}")
    rate, W, g = best
    return WynerZivSolution(rate, ConditionalPmf(W, [p.axes[0]], atol=1e-9), g, _distortion(W, P, d, g))


def wyner_ziv_grid_oracle(p_xy, dist: DistortionSpec, grid_steps=100, s_card=3) -> float:
    """Exhaustive grid search over test channels with entries k/grid_steps.

    For a fixed channel the best map picks, for every (s, y), the z minimising
    sum_x P(x,y) W(s|x) d(x,z); with that choice both the rate and the
    distortion are sums over S-columns, so columns are tabulated once.
    """
    p = check_pmf(p_xy, ndim=2, name="p_xy")
    P = p.mass
    a, b = P.shape
    m = check_positive_int(s_card, "s_card")
    if a > 3 or m > 4:
        raise ValueError(f"alphabet too large for the oracle (|X|={a}, |S|={m}; limits 3 and 4)")
    G = check_positive_int(grid_steps, "grid_steps")
    d = dist.d
    py = P.sum(axis=0)

    cols = grid_columns(G, a)  # (C, x): W(s|x) for one s
    joint = cols[:, :, None] * P[None, :, :]  # (C, x, y)
    qy = joint.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = cols[:, :, None] * py[None, None, :] / qy[:, None, :]
        rate = np.where(joint > 0, joint * np.log2(np.where(joint > 0, ratio, 1.0)), 0.0).sum(axis=(1, 2))
    dist_col = np.einsum("cxy,xz->cyz", joint, d).min(axis=2).sum(axis=1)

    best = math.inf
    for e, r in scan(dist_col, rate, a, m, G):
        ok = e <= dist.D + 1e-12
        if ok.any():
            best = min(best, float(r[ok].min()))
    if not math.isfinite(best):
        raise InfeasibleError(f"no grid channel meets distortion {dist.D}")
    return max(best, 0.0)


def dsbs_hamming_rate(p, D):
    """Closed-form Wyner-Ziv rate for DSBS(p) under Hamming distortion.

    Lower convex envelope of h(p*D) - h(D) on [0, p) joined with the point (p, 0).
    """
    from scipy.optimize import minimize_scalar

    from ..sources import binary_convolution, binary_entropy

    if D >= p:
        return 0.0

    def f(t):
        return float(binary_entropy(binary_convolution(p, t)) - binary_entropy(t))

    # time sharing between (t, f(t)) and (p, 0): value at D is f(t) (p - D) / (p - t)
    res = minimize_scalar(lambda t: f(t) * (p - D) / (p - t), bounds=(0.0, D), method="bounded",
                          options={"xatol": 1e-12})
    return float(min(res.fun, f(D)))


class WynerZivEstimator(BaseEstimator):
    """``fit(p_xy)`` solves R_min at ``D``; ``predict(D_values)`` re-solves at other distortions."""

    def __init__(self, distortion=None, D=0.0, s_card=None, n_restarts=2, random_state=0):
        self.distortion = distortion
        self.D = D
        self.s_card = s_card
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _table(self, p):
        if self.distortion is None:
            return 1.0 - np.eye(p.shape[0])
        return np.asarray(self.distortion, dtype=float)

    def fit(self, p_xy, y=None):
        p = check_pmf(p_xy, ndim=2, name="p_xy")
        self.p_ = p
        self.solution_ = wyner_ziv_rmin(p, DistortionSpec(self._table(p), self.D), self.s_card,
                                        self.n_restarts, self.random_state)
        return self

    def predict(self, D_values):
        check_is_fitted(self, "solution_")
        return np.array([wyner_ziv_rmin(self.p_, DistortionSpec(self._table(self.p_), float(D)),
                                        self.s_card, self.n_restarts, self.random_state).rate
                         for D in np.atleast_1d(D_values)])
