"""Quantize-and-forward K-hop testing against independence.

Hop l holds a random codebook drawn i.i.d. from P_{U_l}. Terminal l-1 sends
the index of the first codeword jointly typical with its observation (a
reserved REJECT index when none is, or when it already decided H=1), and
center l declares H=0 iff the received codeword is jointly typical with y_l
under P_{U_l Y_l}.

Two backends realise the codebooks:

* ``explicit`` materialises seeded codewords (small ``2^(L-1) * n``).
* ``ensemble`` samples, per trial, the encoder output of a fresh random
  codebook: whether any codeword is typical (probability ``1-(1-p)^N``) and,
  if so, a codeword drawn from P_U^n conditioned on typicality with y. This
  is the codebook-ensemble average and is used for large n.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .probcore import TYPICALITY_EPS, ConditionalPmf, JointPmf, default_mu, mutual_information
from .validation import check_pmf, check_positive_int, check_rate, check_rng

EXPLICIT_MAX_ENTRIES = 2**22  # codeword symbols held in memory per hop
TABULATE_MAX = 2**16  # tabulate encoders over all sequences up to this many
RATE_MARGIN = 0.01


@dataclass(frozen=True)
class HopNetworkSpec:
    """K-hop network: joint pmf of Y_0..Y_K under H=0, per-hop rates and type-I targets."""

    p_joint: JointPmf
    rates: tuple
    epsilons: tuple = None

    def __post_init__(self):
        p = check_pmf(self.p_joint, name="p_joint")
        if p.ndim < 2:
            raise ValueError("need at least two terminals (K >= 1)")
        rates = tuple(check_rate(r, f"R_{l + 1}") for l, r in enumerate(self.rates))
        if len(rates) != p.ndim - 1:
            raise ValueError(f"need {p.ndim - 1} rates, got {len(rates)}")
        eps = (0.0,) * len(rates) if self.epsilons is None else tuple(float(e) for e in self.epsilons)
        if len(eps) != len(rates) or any(not 0 <= e < 1 for e in eps):
            raise ValueError("epsilons must be K values in [0, 1)")
        object.__setattr__(self, "p_joint", p)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "epsilons", eps)

    @property
    def K(self) -> int:
        return self.p_joint.ndim - 1

    @property
    def alphabets(self):
        return self.p_joint.axes

    @property
    def sizes(self):
        return self.p_joint.shape

    def pair(self, l) -> JointPmf:
        """Pmf of (Y_{l-1}, Y_l)."""
        return self.p_joint.marginal([l - 1, l])

    def digest(self) -> str:
        desc = {
            "sizes": list(self.sizes),
            "mass": ["%.17g" % x for x in self.p_joint.flat()],
            "rates": ["%.17g" % r for r in self.rates],
            "epsilons": ["%.17g" % e for e in self.epsilons],
        }
        return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()


def message_bits(n, R) -> int:
    """Message length ceil(nR), guarding against nR landing a hair above an integer."""
    return max(0, math.ceil(n * R - 1e-9))


def codebook_size(L) -> int:
    """Codewords per hop: 2^(L-1), leaving index 2^(L-1) for REJECT; a zero-bit message carries one."""
    return 2 ** (L - 1) if L >= 1 else 1


@dataclass(frozen=True)
class HopMessage:
    index: int | None  # None is the reserved REJECT index
    n_bits: int
    size: int

    @classmethod
    def reject(cls, codebook):
        if codebook.n_bits == 0:
            raise ValueError("a zero-bit message cannot carry REJECT")
        return cls(None, codebook.n_bits, codebook.size)

    @property
    def is_reject(self) -> bool:
        return self.index is None

    @property
    def bits(self) -> str:
        if self.n_bits == 0:
            return ""
        v = self.size if self.index is None else self.index
        return format(v, f"0{self.n_bits}b")


@dataclass
class Codebook:
    """Random codebook of hop l; entries are regenerated from the descriptor on demand."""

    hop: int
    n: int
    n_bits: int
    seed: int
    marginal: np.ndarray  # P_{U_l}
    joint_in: np.ndarray  # P_{U_l Y_{l-1}}, shape (|U|, |Y_{l-1}|)
    joint_out: np.ndarray  # P_{U_l Y_l}, shape (|U|, |Y_l|)
    spec_digest: str = ""
    _entries: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return codebook_size(self.n_bits)

    @property
    def aux_card(self) -> int:
        return len(self.marginal)

    @property
    def descriptor(self) -> dict:
        return {"spec": self.spec_digest, "hop": self.hop, "n": self.n, "seed": self.seed}

    @property
    def materializable(self) -> bool:
        return self.size * self.n <= EXPLICIT_MAX_ENTRIES

    @property
    def entries(self) -> np.ndarray:
        if self._entries is None:
            if not self.materializable:
                raise MemoryError(f"codebook of {self.size} x {self.n} symbols is too large to hold")
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.hop, self.n)))
            e = rng.choice(self.aux_card, size=(self.size, self.n), p=self.marginal).astype(np.uint8)
            e.setflags(write=False)
            self._entries = e
        return self._entries


@dataclass(frozen=True)
class DecisionRule:
    hop: int
    mu: float
    reference: np.ndarray  # P_{U_k Y_k}

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")


def hop_joints(pair: JointPmf, channel):
    """(P_U, P_{U Y_{l-1}}, P_{U Y_l}) for a test channel P_{U|Y_{l-1}}."""
    Q = channel.matrix if isinstance(channel, ConditionalPmf) else np.asarray(channel, dtype=float)
    P = pair.mass
    if Q.shape[0] != P.shape[0]:
        raise ValueError(f"channel has {Q.shape[0]} input rows, hop alphabet has {P.shape[0]}")
    j_in = (P.sum(axis=1)[:, None] * Q).T
    j_out = Q.T @ P
    return j_in.sum(axis=1), j_in, j_out


def build_codebooks(spec: HopNetworkSpec, channels, n, seed=0) -> list:
    """One seeded codebook per hop, drawn from the U marginal induced by each channel."""
    n = check_positive_int(n, "n")
    if len(channels) != spec.K:
        raise ValueError(f"need {spec.K} channels, got {len(channels)}")
    books = []
    for l, ch in enumerate(channels, start=1):
        pair = spec.pair(l)
        pu, j_in, j_out = hop_joints(pair, ch)
        R = spec.rates[l - 1]
        used = mutual_information(JointPmf(j_in, atol=1e-9), 0, 1)
        if R > 0 and used >= R:
            warnings.warn(f"hop {l}: I(U;Y) = {used:.4f} >= R = {R}; encoding failures will not vanish",
                          RuntimeWarning, stacklevel=2)
        books.append(Codebook(l, n, message_bits(n, R), int(seed), pu, j_in, j_out, spec.digest()))
    return books


def _pair_slack(u, y, joint):
    """Typicality slack of (u, y) rows under ``joint`` (|U| x |Y|); u, y shaped (..., n)."""
    m, a = joint.shape
    n = u.shape[-1]
    code = u.astype(np.int64) * a + y.astype(np.int64)
    counts = np.stack([(code == c).sum(axis=-1) for c in range(m * a)], axis=-1)
    pflat = joint.ravel()
    dev = np.abs(counts / n - pflat)
    dev = np.where((pflat == 0) & (counts > 0), np.inf, dev)
    return dev.max(axis=-1)


def _check_seq(y, size):
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("sequence must be one-dimensional and nonempty")
    if y.dtype.kind not in "iu" or y.min() < 0 or y.max() >= size:
        raise ValueError(f"sequence symbols must be indices in [0, {size})")
    return y


def encode_hop(y, incoming, codebook: Codebook, mu) -> HopMessage:
    """Index of the first codeword jointly ``mu``-typical with ``y`` under P_{U Y}; REJECT if none.

    ``incoming`` is the message received by this terminal (None at the source).
    A zero-bit message has no REJECT: it is always index 0.
    """
    y = _check_seq(y, codebook.joint_in.shape[1])
    if len(y) != codebook.n:
        raise ValueError(f"sequence length {len(y)} != blocklength {codebook.n}")
    if codebook.n_bits == 0:
        return HopMessage(0, 0, 1)
    if incoming is not None and incoming.is_reject:
        return HopMessage.reject(codebook)
    slack = _pair_slack(codebook.entries, y[None, :], codebook.joint_in)
    hit = np.flatnonzero(slack <= mu + TYPICALITY_EPS)
    if hit.size == 0:
        return HopMessage.reject(codebook)
    return HopMessage(int(hit[0]), codebook.n_bits, codebook.size)


def decide_hop(y, incoming: HopMessage, codebook: Codebook, rule: DecisionRule) -> int:
    """Guess 0 iff the received codeword is jointly typical with ``y`` under P_{U_k Y_k}."""
    y = _check_seq(y, codebook.joint_out.shape[1])
    if incoming.is_reject:
        return 1
    u = codebook.entries[incoming.index]
    return int(_pair_slack(u, y, rule.reference) > rule.mu + TYPICALITY_EPS)


# --- batched realisations -------------------------------------------------

def _first_typical(entries, Y, joint, mu, chunk=4096):
    """First typical codeword index per row of Y, -1 when none (rows of Y are sequences)."""
    m, a = joint.shape
    n = Y.shape[1]
    pflat = joint.ravel()
    onehot_u = [(entries == u).astype(np.float32) for u in range(m)]
    out = np.empty(len(Y), dtype=np.int64)
    for lo in range(0, len(Y), chunk):
        Yc = Y[lo:lo + chunk]
        slack = np.zeros((len(Yc), len(entries)))
        for y in range(a):
            oy = (Yc == y).astype(np.float32)
            for u in range(m):
                c = np.rint(oy @ onehot_u[u].T)
                dev = np.abs(c / n - pflat[u * a + y])
                if pflat[u * a + y] == 0:
                    dev[c > 0] = np.inf
                np.maximum(slack, dev, out=slack)
        ok = slack <= mu + TYPICALITY_EPS
        first = ok.argmax(axis=1)
        out[lo:lo + chunk] = np.where(ok.any(axis=1), first, -1)
    return out


def all_sequences(size, n) -> np.ndarray:
    """Every length-n sequence over ``size`` symbols, lexicographic (first symbol most significant)."""
    return np.array(list(itertools.product(range(size), repeat=n)), dtype=np.uint8).reshape(-1, n)


def sequence_index(Y, size) -> np.ndarray:
    n = Y.shape[-1]
    w = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return Y.astype(np.int64) @ w


class _ExplicitHop:
    """Fixed codebook; encoder tabulated over every input sequence when small."""

    def __init__(self, book: Codebook, mu_enc):
        self.book = book
        self.mu = mu_enc
        self.a = book.joint_in.shape[1]
        self.table = None
        if book.n_bits > 0 and self.a**book.n <= TABULATE_MAX:
            self.table = _first_typical(book.entries, all_sequences(self.a, book.n), book.joint_in, mu_enc)

    def encode(self, Y, rng=None):
        """Codeword per row (or -1 on failure)."""
        if self.book.n_bits == 0:
            return np.zeros(len(Y), dtype=np.int64)
        if self.table is not None:
            return self.table[sequence_index(Y, self.a)]
        return _first_typical(self.book.entries, Y, self.book.joint_in, self.mu)

    def codewords(self, idx):
        return self.book.entries[np.maximum(idx, 0)]


class _EnsembleHop:
    """Encoder output of a fresh random codebook per trial (codebook-ensemble average)."""

    def __init__(self, book: Codebook, mu_enc):
        self.book = book
        self.mu = mu_enc
        self.n = book.n
        self.m, self.a = book.joint_in.shape
        self.logpu = np.log(np.where(book.marginal > 0, book.marginal, 1.0))
        self.logpu[book.marginal == 0] = -np.inf
        self._tables = {}

    def _table(self, b, nb):
        """Compositions of nb letters at positions where y = b that keep every pair count typical."""
        key = (b, nb)
        if key not in self._tables:
            n, mu = self.n, self.mu
            ref = self.book.joint_in[:, b]
            lo = np.maximum(0, np.ceil(n * (ref - mu) - 1e-7)).astype(int)
            hi = np.minimum(nb, np.floor(n * (ref + mu) + 1e-7)).astype(int)
            hi = np.where(ref == 0, 0, hi)
            comps = []
            if np.all(lo <= hi):
                for head in itertools.product(*[range(lo[u], hi[u] + 1) for u in range(self.m - 1)]):
                    last = nb - sum(head)
                    if lo[-1] <= last <= hi[-1]:
                        comps.append(head + (last,))
            comps = np.array(comps, dtype=np.int64).reshape(-1, self.m)
            if len(comps):
                dev = np.abs(comps / n - ref)
                comps = comps[np.all(dev <= mu + TYPICALITY_EPS, axis=1)]
            if len(comps):
                with np.errstate(invalid="ignore"):
                    terms = np.where(comps > 0, comps * self.logpu, 0.0)
                logp = gammaln(nb + 1) - gammaln(comps + 1).sum(axis=1) + terms.sum(axis=1)
                keep = np.isfinite(logp)
                comps, logp = comps[keep], logp[keep]
            if len(comps):
                total = logsumexp(logp)
                cdf = np.cumsum(np.exp(logp - total))
                cdf[-1] = 1.0
                self._tables[key] = (float(total), comps, cdf)
            else:
                self._tables[key] = (-np.inf, comps, None)
        return self._tables[key]

    def _raw(self, T, rng):
        return rng.choice(self.m, size=(T, self.n), p=self.book.marginal).astype(np.uint8)

    def encode(self, Y, rng):
        """Codeword per row plus a success flag."""
        T = len(Y)
        if self.book.n_bits == 0:
            return self._raw(T, rng), np.ones(T, dtype=bool)
        counts = np.stack([(Y == b).sum(axis=1) for b in range(self.a)], axis=1)
        logp = np.zeros(T)
        for b in range(self.a):
            for nb in np.unique(counts[:, b]):
                logp[counts[:, b] == nb] += self._table(b, int(nb))[0]
        p_typ = np.exp(logp)
        # P(no typical codeword among N) = (1 - p)^N, evaluated in logs for huge N
        with np.errstate(divide="ignore"):
            log_fail = float(self.book.size) * np.log1p(-np.minimum(p_typ, 1.0))
        ok = rng.random(T) >= np.exp(log_fail)
        comp = np.zeros((T, self.a, self.m), dtype=np.int64)
        for b in range(self.a):
            for nb in np.unique(counts[ok, b]):
                rows = np.flatnonzero(ok & (counts[:, b] == nb))
                _, comps, cdf = self._table(b, int(nb))
                pick = np.searchsorted(cdf, rng.random(len(rows)), side="right")
                comp[rows, b] = comps[np.minimum(pick, len(comps) - 1)]
        U = self._arrange(Y, comp, rng)
        return U, ok

    def _arrange(self, Y, comp, rng):
        """Place each composition uniformly at random on the positions where y = b."""
        T, n = Y.shape
        order = np.argsort(Y + rng.random((T, n)), axis=1, kind="stable")
        nb = comp.sum(axis=2)  # (T, a)
        start = np.concatenate([np.zeros((T, 1), dtype=np.int64), np.cumsum(nb, axis=1)[:, :-1]], axis=1)
        ranks = np.arange(n)[None, :]
        grp = np.minimum((ranks[:, :, None] >= np.cumsum(nb, axis=1)[:, None, :]).sum(axis=2), self.a - 1)
        off = ranks - np.take_along_axis(start, grp, axis=1)
        cum = np.cumsum(comp, axis=2)  # (T, a, m)
        cum_g = np.take_along_axis(cum, grp[:, :, None].repeat(self.m, axis=2), axis=1)
        letters = (off[:, :, None] >= cum_g).sum(axis=2)
        U = np.empty((T, n), dtype=np.uint8)
        np.put_along_axis(U, order, np.minimum(letters, self.m - 1).astype(np.uint8), axis=1)
        return U


@dataclass
class TrialStats:
    """Per-trial encoder outcomes and decision slacks, enough to replay any decision threshold."""

    enc_ok: np.ndarray  # (T, K) bool
    slack: np.ndarray  # (T, K): slack of (U_k, Y_k) under P_{U_k Y_k}; inf when encoder k failed
    zero_bit: tuple  # hops whose message carries no REJECT

    def decisions(self, thresholds, tie=None, gamma=None):
        """Guesses (T, K) for per-center slack thresholds.

        A trial whose slack equals threshold k exactly is accepted only when
        ``tie[:, k] < gamma[k]`` (randomised test at the atom); defaults accept.
        """
        T, K = self.slack.shape
        out = np.ones((T, K), dtype=np.int8)
        alive = np.ones(T, dtype=bool)
        for k in range(K):
            if k in self.zero_bit:
                alive = np.ones(T, dtype=bool)
            else:
                alive = alive & self.enc_ok[:, k]
            s = self.slack[:, k]
            thr = thresholds[k]
            acc = s < thr - TYPICALITY_EPS
            with np.errstate(invalid="ignore"):  # inf slack against an inf threshold
                at = np.abs(s - thr) <= TYPICALITY_EPS
            if tie is None or gamma is None:
                acc |= at
            else:
                acc |= at & (tie[:, k] < gamma[k])
            dec0 = alive & acc
            out[:, k] = np.where(dec0, 0, 1)
            alive = dec0  # a relay that decides H=1 forwards REJECT
        return out


class QuantizeForwardTester(BaseEstimator):
    """K-hop quantize-and-forward tester.

    Parameters
    ----------
    n : int
        Blocklength.
    mu : float, optional
        Typicality slack for encoders and deciders; default n^(-1/3).
    decision_scale : float or sequence of float
        Multiplies ``mu`` at the decision centers.
    random_state : int
        Codebook seed.
    backend : {"auto", "explicit", "ensemble"}
    """

    def __init__(self, n=20, mu=None, decision_scale=1.0, random_state=0, backend="auto"):
        self.n = n
        self.mu = mu
        self.decision_scale = decision_scale
        self.random_state = random_state
        self.backend = backend

    def fit(self, spec: HopNetworkSpec, channels=None):
        n = check_positive_int(self.n, "n")
        self.spec_ = spec
        self.mu_ = default_mu(n) if self.mu is None else float(self.mu)
        if not self.mu_ > 0:
            raise ValueError("mu must be positive")
        self.codebooks_ = build_codebooks(spec, channels, n, self.random_state)
        backend = self.backend
        if backend == "auto":
            backend = "explicit" if all(b.materializable for b in self.codebooks_) else "ensemble"
        if backend not in ("explicit", "ensemble"):
            raise ValueError(f"unknown backend {self.backend!r}")
        self.backend_ = backend
        hop_cls = _ExplicitHop if backend == "explicit" else _EnsembleHop
        self.hops_ = [hop_cls(b, self.mu_) for b in self.codebooks_]
        return self

    def decision_rules(self):
        check_is_fitted(self, "hops_")
        scale = np.broadcast_to(np.asarray(self.decision_scale, dtype=float), (self.spec_.K,))
        return [DecisionRule(b.hop, self.mu_ * s, b.joint_out) for b, s in zip(self.codebooks_, scale)]

    def trial_stats(self, Y, rng=None) -> TrialStats:
        """Run every encoder and decision statistic on samples Y of shape (T, K+1, n)."""
        check_is_fitted(self, "hops_")
        rng = check_rng(rng)
        Y = np.asarray(Y)
        T, K1, n = Y.shape
        if K1 != self.spec_.K + 1 or n != self.n:
            raise ValueError(f"samples must have shape (T, {self.spec_.K + 1}, {self.n})")
        K = self.spec_.K
        enc_ok = np.ones((T, K), dtype=bool)
        slack = np.full((T, K), np.inf)
        for k, hop in enumerate(self.hops_):
            if self.backend_ == "explicit":
                idx = hop.encode(Y[:, k])
                ok = idx >= 0
                U = hop.codewords(idx)
            else:
                U, ok = hop.encode(Y[:, k], rng)
            enc_ok[:, k] = ok
            s = _pair_slack(U, Y[:, k + 1], hop.book.joint_out)
            slack[:, k] = np.where(ok, s, np.inf)
        zero = tuple(k for k, b in enumerate(self.codebooks_) if b.n_bits == 0)
        return TrialStats(enc_ok, slack, zero)

    def predict(self, Y, rng=None) -> np.ndarray:
        """Guesses (T, K) in {0, 1}."""
        stats = self.trial_stats(Y, rng)
        thr = [r.mu for r in self.decision_rules()]
        return stats.decisions(thr)


def sample_sources(spec: HopNetworkSpec, n, T, hypothesis, rng) -> np.ndarray:
    """T draws of (Y_0^n, ..., Y_K^n), shape (T, K+1, n): joint i.i.d. under H=0, independent under H=1."""
    rng = check_rng(rng)
    p = spec.p_joint
    if hypothesis == 0:
        flat = rng.choice(p.flat().size, size=(T, n), p=p.flat())
        Y = np.stack(np.unravel_index(flat, p.shape), axis=1)
    elif hypothesis == 1:
        Y = np.stack([rng.choice(p.shape[j], size=(T, n), p=p.marginal([j]).mass)
                      for j in range(p.ndim)], axis=1)
    else:
        raise ValueError("hypothesis must be 0 or 1")
    return Y.astype(np.uint8)
