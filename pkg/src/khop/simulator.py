"""Monte Carlo estimation of type-I/II errors, exponent fits and the epsilon sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import TuningError, UnresolvableExponentError
from .schemes import HopNetworkSpec, QuantizeForwardTester, TrialStats, sample_sources
from .validation import check_positive_int

CHUNK = 10_000
TUNE_TOL = 0.02
MAX_BISECT = 40


@dataclass
class ExperimentSpec:
    """Monte Carlo configuration.

    ``trials`` is per (hypothesis, n). ``mu`` of None means n^(-1/3) at every n.
    ``burn_in`` smallest blocklengths are dropped from exponent fits, and a
    point is used only if its Clopper-Pearson interval spans at most
    ``ci_cap`` bits on the -log2 scale.
    """

    network: HopNetworkSpec
    channels: list
    blocklengths: tuple
    trials: int = 10_000
    seed: int = 0
    epsilon_sweep: tuple = ()
    mu: float | None = None
    decision_scale: float = 1.0
    backend: str = "auto"
    burn_in: int = 1
    ci_cap: float = 3.0

    def __post_init__(self):
        self.trials = check_positive_int(self.trials, "trials")
        ns = tuple(check_positive_int(n, "blocklength") for n in self.blocklengths)
        if not ns or any(a >= b for a, b in zip(ns, ns[1:])):
            raise ValueError("blocklengths must be nonempty and strictly increasing")
        self.blocklengths = ns
        if len(self.channels) != self.network.K:
            raise ValueError(f"need {self.network.K} channels, got {len(self.channels)}")
        eps = tuple(float(e) for e in self.epsilon_sweep)
        if any(not 0 <= e < 1 for e in eps):
            raise ValueError("epsilon targets must lie in [0, 1)")
        self.epsilon_sweep = tuple(sorted(eps))


@dataclass(frozen=True)
class ErrorEstimate:
    """Error frequency at center k: type-I (hypothesis 0) or type-II (hypothesis 1)."""

    k: int
    n: int
    hypothesis: int
    trials: int
    errors: int
    ci_lo: float
    ci_hi: float

    @property
    def rate(self) -> float:
        return self.errors / self.trials

    @property
    def alpha_hat(self):
        return self.rate if self.hypothesis == 0 else None

    @property
    def beta_hat(self):
        return self.rate if self.hypothesis == 1 else None


def clopper_pearson(errors, trials, level=0.95):
    """Exact binomial interval."""
    a = 1 - level
    lo = 0.0 if errors == 0 else float(stats.beta.ppf(a / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(stats.beta.ppf(1 - a / 2, errors + 1, trials - errors))
    return lo, hi


def estimate(k, n, hypothesis, decisions) -> ErrorEstimate:
    """Error count of one center from a vector of guesses."""
    bad = int(np.sum(decisions != hypothesis))
    T = len(decisions)
    return ErrorEstimate(k, n, hypothesis, T, bad, *clopper_pearson(bad, T))


@dataclass
class _Run:
    """Trial statistics and tie-breaking draws for one (n, hypothesis)."""

    stats: TrialStats
    tie: np.ndarray
    mu: float


def _tester(spec: ExperimentSpec, n):
    return QuantizeForwardTester(n=n, mu=spec.mu, decision_scale=spec.decision_scale,
                                 random_state=spec.seed, backend=spec.backend).fit(spec.network, spec.channels)


def collect(spec: ExperimentSpec, n, hypothesis, tester=None) -> _Run:
    """Simulate all trials at blocklength n; chunk c uses the stream (seed, n, hypothesis, c)."""
    tester = tester or _tester(spec, n)
    parts, ties = [], []
    for c, lo in enumerate(range(0, spec.trials, CHUNK)):
        T = min(CHUNK, spec.trials - lo)
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(n, hypothesis, c)))
        Y = sample_sources(spec.network, n, T, hypothesis, rng)
        parts.append(tester.trial_stats(Y, rng))
        ties.append(rng.random((T, spec.network.K)))
    st = TrialStats(np.concatenate([p.enc_ok for p in parts]), np.concatenate([p.slack for p in parts]),
                    parts[0].zero_bit)
    return _Run(st, np.concatenate(ties), tester.mu_)


def run_trials(spec: ExperimentSpec, hypothesis) -> list:
    """Error estimates per (k, n) at the configured decision scale."""
    if hypothesis not in (0, 1):
        raise ValueError("hypothesis must be 0 or 1")
    out = []
    for n in spec.blocklengths:
        run = collect(spec, n, hypothesis)
        scale = np.broadcast_to(np.asarray(spec.decision_scale, dtype=float), (spec.network.K,))
        dec = run.stats.decisions(run.mu * scale)
        out.extend(estimate(k + 1, n, hypothesis, dec[:, k]) for k in range(spec.network.K))
    return sorted(out, key=lambda e: (e.k, e.n))


@dataclass
class ExponentFit:
    k: int
    points: list  # (n, -(1/n) log2 beta_hat) for every estimate with beta_hat > 0
    used: list  # blocklengths entering the fit
    slope: float
    intercept: float
    slope_ci: tuple

    @property
    def ci_halfwidth(self) -> float:
        return 0.5 * (self.slope_ci[1] - self.slope_ci[0])


def fit_exponent(estimates, k, burn_in=1, ci_cap=3.0, level=0.95) -> ExponentFit:
    """Least-squares slope of -log2 beta_hat against n for center k.

    The ``burn_in`` smallest blocklengths are dropped; points need beta_hat > 0
    and a Clopper-Pearson interval no wider than ``ci_cap`` bits on the log
    scale. The slope interval is the t-interval of the regression.
    """
    ests = sorted((e for e in estimates if e.k == k and e.hypothesis == 1), key=lambda e: e.n)
    points = [(e.n, -math.log2(e.rate) / e.n) for e in ests if e.errors > 0]
    usable = [e for e in ests[burn_in:]
              if e.errors > 0 and e.ci_lo > 0 and math.log2(e.ci_hi / e.ci_lo) <= ci_cap]
    if len(usable) < 3:
        raise UnresolvableExponentError(
            f"center {k}: {len(usable)} usable blocklengths (need 3); beta is unresolved at this trial budget")
    x = np.array([e.n for e in usable], dtype=float)
    y = np.array([-math.log2(e.rate) for e in usable])
    res = stats.linregress(x, y)
    t = stats.t.ppf(0.5 + level / 2, len(x) - 2)
    half = t * res.stderr
    return ExponentFit(k, points, [e.n for e in usable], float(res.slope), float(res.intercept),
                       (float(res.slope - half), float(res.slope + half)))


@dataclass
class SweepRow:
    k: int
    epsilon: float
    exponent: float
    slope_ci: tuple
    fit: ExponentFit = field(repr=False)
    alpha_hat: dict = field(default_factory=dict)  # n -> realised type-I error
    factor: dict = field(default_factory=dict)  # n -> slack multiplier at center k


def _accept_fraction(run: _Run, thresholds, k, gamma=None):
    if gamma is None:
        return run.stats.decisions(thresholds)[:, k]
    g = [1.0] * len(thresholds)
    g[k] = gamma
    dec = run.stats.decisions(thresholds, run.tie, g)
    return dec[:, k]


def tune_center(run: _Run, k, epsilon, base, tol=TUNE_TOL, c_range=(1e-3, 1e3)):
    """Slack factor c and tie probability gamma at center k giving type-I error epsilon.

    Upstream centers keep the thresholds ``base``. Bisection on log c finds the
    smallest factor with alpha <= epsilon; randomising at that slack atom then
    matches epsilon to within one trial.
    """
    T = len(run.tie)

    def thresholds(c):
        t = list(base)
        t[k] = c * run.mu
        return t

    def alpha(c):
        return float(np.mean(_accept_fraction(run, thresholds(c), k) != 0))

    lo, hi = math.log(c_range[0]), math.log(c_range[1])
    if alpha(math.exp(hi)) > epsilon + tol:
        raise TuningError(f"center {k + 1}: type-I error {alpha(math.exp(hi)):.4f} exceeds target "
                          f"{epsilon} even with a vacuous threshold")
    if alpha(math.exp(lo)) <= epsilon:
        hi = lo
    for _ in range(MAX_BISECT):
        if hi - lo < 1e-9:
            break
        mid = 0.5 * (lo + hi)
        if alpha(math.exp(mid)) <= epsilon:
            hi = mid
        else:
            lo = mid
    c = math.exp(hi)
    # snap to the slack atom at or below c*mu so the tie set is the atom itself
    thr = thresholds(c)
    alive = _accept_fraction(run, [t if i != k else np.inf for i, t in enumerate(thr)], k) == 0
    s = run.stats.slack[:, k]
    cand = s[alive & (s <= thr[k] + 1e-12)]
    if cand.size:
        c = float(cand.max()) / run.mu if run.mu > 0 else c
        thr = thresholds(c)
    strict = int(np.sum(alive & (s < thr[k] - 1e-12)))
    at = int(np.sum(alive & (np.abs(s - thr[k]) <= 1e-12)))
    gamma = 1.0 if at == 0 else min(1.0, max(0.0, ((1 - epsilon) * T - strict) / at))
    a = float(np.mean(_accept_fraction(run, thr, k, gamma) != 0))
    if abs(a - epsilon) > tol:
        raise TuningError(f"center {k + 1}: reached type-I error {a:.4f}, target {epsilon}")
    return c, gamma, a


def strong_converse_sweep(spec: ExperimentSpec, progress=None) -> list:
    """Fitted type-II exponent per (center, epsilon target).

    For each target the threshold of the center being measured is tuned so
    that its type-I error is epsilon; upstream centers stay at the baseline
    scale. Epsilon 0 is the untuned baseline. Rows are sorted by epsilon.
    """
    if not spec.epsilon_sweep:
        raise ValueError("epsilon_sweep must be nonempty")
    K = spec.network.K
    scale = np.broadcast_to(np.asarray(spec.decision_scale, dtype=float), (K,))
    per = {}  # (k, eps) -> list of ErrorEstimate under H=1
    info = {}
    for n in spec.blocklengths:
        tester = _tester(spec, n)
        r0 = collect(spec, n, 0, tester)
        r1 = collect(spec, n, 1, tester)
        base = list(r0.mu * scale)
        for eps in spec.epsilon_sweep:
            for k in range(K):
                if eps == 0:
                    c, gamma = float(scale[k]), 1.0
                    a = float(np.mean(r0.stats.decisions(base)[:, k] != 0))
                else:
                    c, gamma, a = tune_center(r0, k, eps, base)
                thr = list(base)
                thr[k] = c * r0.mu
                g = [1.0] * k + [gamma] + [1.0] * (K - k - 1)
                dec1 = r1.stats.decisions(thr, r1.tie, g)[:, k]
                per.setdefault((k + 1, eps), []).append(estimate(k + 1, n, 1, dec1))
                info.setdefault((k + 1, eps), {})[n] = (a, c)
        if progress:
            progress(n)
    rows = []
    for eps in spec.epsilon_sweep:
        for k in range(1, K + 1):
            fit = fit_exponent(per[(k, eps)], k, spec.burn_in, spec.ci_cap)
            d = info[(k, eps)]
            rows.append(SweepRow(k, eps, fit.slope, fit.slope_ci, fit,
                                 {n: v[0] for n, v in d.items()}, {n: v[1] for n, v in d.items()}))
    return rows
