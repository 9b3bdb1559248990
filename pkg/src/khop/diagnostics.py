"""Exact small-blocklength checks of the change-of-measure converse.

Everything here enumerates the joint sequence space of (Y_0^n, ..., Y_k^n) in
the position-major order of :class:`~khop.probcore.Enumeration`: decision
regions, the typical intersection D_k and its mass Delta_k, the restricted
measure, and the time-sharing single-letterization
U_l = (M_l, Y_0^{T-1}, ..., Y_k^{T-1}, T).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import entr

from .exceptions import EnumerationCapError
from .probcore import (
    DEFAULT_ENUMERATION_CAP,
    TYPICALITY_EPS,
    Enumeration,
    JointPmf,
    default_mu,
    entropy,
    kl_divergence,
    typical_mass_lower_bound,
)
from .schemes import _first_typical, _pair_slack, all_sequences, message_bits

LN2 = math.log(2.0)
ATOL = 1e-9


def _bits(x) -> float:
    return float(entr(x).sum() / LN2)


@lru_cache(maxsize=8)
def _structure(shape, n) -> Enumeration:
    """Enumeration of the sequence space; weight-independent arrays are cached per (shape, n)."""
    return Enumeration(JointPmf(np.full(shape, 1.0 / math.prod(shape))), n)


# --- protocols -------------------------------------------------------------

@dataclass
class Protocol:
    """A K-hop protocol at blocklength n as lookup tables.

    ``enc[0]`` has shape (1, |Y_0|^n); ``enc[l]`` for l >= 1 has shape
    (M_l + 1, |Y_l|^n) and maps (incoming message, y_l) to the message sent to
    center l+1, the last row standing for an incoming REJECT. ``dec[k-1]`` has
    shape (M_k + 1, |Y_k|^n) with entries in {0, 1}. Messages are indices in
    [0, M_l) or -1 for REJECT; sequences are indexed lexicographically.
    """

    n: int
    sizes: tuple
    msg_counts: tuple
    n_bits: tuple
    enc: list
    dec: list

    @property
    def K(self) -> int:
        return len(self.msg_counts)

    @classmethod
    def from_tester(cls, tester, cap=DEFAULT_ENUMERATION_CAP) -> "Protocol":
        """Tables of a fitted explicit-backend :class:`~khop.schemes.QuantizeForwardTester`."""
        if tester.backend_ != "explicit":
            raise ValueError("exact diagnostics need materialised codebooks (explicit backend)")
        n = tester.n
        sizes = tuple(tester.spec_.sizes)
        for l, book in enumerate(tester.codebooks_):
            cells = book.size * max(sizes[l], sizes[l + 1]) ** n
            if cells > cap:
                raise EnumerationCapError(cells, cap)
        rules = tester.decision_rules()
        books = tester.codebooks_
        enc, dec = [], []
        for l, book in enumerate(books):
            seqs = all_sequences(sizes[l], n)
            if book.n_bits == 0:
                first = np.zeros(len(seqs), dtype=np.int64)
            else:
                first = _first_typical(book.entries, seqs, book.joint_in, tester.mu_)
            if l == 0:
                enc.append(first[None, :])
            else:
                prev = dec[l - 1]
                tab = np.where(prev == 1, -1, first[None, :])
                if book.n_bits == 0:
                    tab = np.zeros_like(tab)
                enc.append(tab)
            yk = all_sequences(sizes[l + 1], n)
            slack = _pair_slack(book.entries[:, None, :], yk[None, :, :], book.joint_out)
            d = (slack > rules[l].mu + TYPICALITY_EPS).astype(np.int8)
            dec.append(np.vstack([d, np.ones((1, len(yk)), dtype=np.int8)]))
        return cls(n, sizes, tuple(b.size for b in books), tuple(b.n_bits for b in books), enc, dec)

    @classmethod
    def constant(cls, sizes, n, accept=True) -> "Protocol":
        """Every terminal sends message 0; deciders always guess 0 (``accept``) or always 1."""
        K = len(sizes) - 1
        enc = [np.zeros((1, sizes[0] ** n), dtype=np.int64)]
        enc += [np.zeros((2, sizes[l] ** n), dtype=np.int64) for l in range(1, K)]
        g = 0 if accept else 1
        dec = [np.full((2, sizes[l + 1] ** n), g, dtype=np.int8) for l in range(K)]
        return cls(n, tuple(sizes), (1,) * K, (0,) * K, enc, dec)

    @classmethod
    def identity(cls, sizes, n) -> "Protocol":
        """Each terminal forwards its whole sequence; deciders accept everything."""
        K = len(sizes) - 1
        counts = tuple(sizes[l] ** n for l in range(K))
        enc = [np.arange(counts[0])[None, :]]
        enc += [np.tile(np.arange(counts[l]), (counts[l - 1] + 1, 1)) for l in range(1, K)]
        dec = [np.zeros((counts[l] + 1, sizes[l + 1] ** n), dtype=np.int8) for l in range(K)]
        bits = tuple(math.ceil(n * math.log2(sizes[l])) for l in range(K))
        return cls(n, tuple(sizes), counts, bits, enc, dec)

    def with_deciders(self, value) -> "Protocol":
        """Same encoders, deciders replaced by the constant ``value``."""
        return dataclasses.replace(self, dec=[np.full_like(d, value) for d in self.dec])

    def messages(self, enum: Enumeration, k) -> list:
        """Message received by each center l <= k for every enumerated tuple."""
        msgs = []
        m = self.enc[0][0][enum.component(0)]
        msgs.append(m)
        for l in range(1, k):
            m = self.enc[l][m, enum.component(l)]
            msgs.append(m)
        return msgs

    def accepted(self, enum: Enumeration, k, msgs=None) -> np.ndarray:
        msgs = self.messages(enum, k) if msgs is None else msgs
        return self.dec[k - 1][msgs[k - 1], enum.component(k)] == 0


# --- regions and restricted measures ----------------------------------------

def _center_pmf(p_joint: JointPmf, k) -> JointPmf:
    return p_joint.marginal(list(range(k + 1)))


def _enumeration(p_joint, n, k, cap):
    shape = tuple(p_joint.shape[: k + 1])
    size = math.prod(shape) ** n
    if size > cap:
        raise EnumerationCapError(size, cap)
    return _structure(shape, n)


@dataclass
class AcceptanceRegion:
    """Tuples (y_0^n, ..., y_k^n) on which center k guesses H=0."""

    k: int
    n: int
    mask: np.ndarray
    enumeration: Enumeration = field(repr=False)
    p: JointPmf = field(repr=False)
    protocol: Protocol = field(repr=False)
    messages: list = field(repr=False)

    @property
    def cardinality(self) -> int:
        return int(self.mask.sum())

    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def contains(self, seqs) -> bool:
        """Membership of one tuple of index sequences."""
        seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
        shape = self.p.shape
        code = 0
        for t in range(self.n):
            code = code * math.prod(shape) + int(np.ravel_multi_index(tuple(s[t] for s in seqs), shape))
        return bool(self.mask[code])


def enumerate_region(protocol: Protocol, p_joint: JointPmf, k, cap=DEFAULT_ENUMERATION_CAP) -> AcceptanceRegion:
    if not 1 <= k <= protocol.K:
        raise ValueError(f"center k must be in 1..{protocol.K}")
    enum = _enumeration(p_joint, protocol.n, k, cap)
    msgs = protocol.messages(enum, k)
    mask = protocol.accepted(enum, k, msgs)
    return AcceptanceRegion(k, protocol.n, mask, enum, _center_pmf(p_joint, k), protocol, msgs)


@dataclass
class DeltaResult:
    D: np.ndarray
    delta: float
    alpha: float
    bound: float
    mu: float
    base: np.ndarray = field(repr=False)


def delta_k(region: AcceptanceRegion, mu=None) -> DeltaResult:
    """Mass of D_k = A_k intersected with the strongly typical set; checks the Chebyshev-type lower bound.

    Raises ValueError when Delta_k = 0 and AssertionError when
    Delta_k < 1 - alpha - |Y_0|...|Y_k| / (4 mu^2 n).
    """
    n = region.n
    mu = default_mu(n) if mu is None else float(mu)
    enum = region.enumeration
    pflat = region.p.flat()
    w = enum.product_weights(pflat)
    alpha = max(0.0, 1.0 - float(w[region.mask].sum()))
    D = region.mask & (enum.slack(pflat) <= mu + TYPICALITY_EPS)
    delta = float(w[D].sum())
    if delta <= 0:
        raise ValueError("Delta_k = 0: the scheme rejects all typical mass, restriction undefined")
    bound = typical_mass_lower_bound(enum.A, mu, n) - alpha
    if delta < bound - 1e-12:
        raise AssertionError(f"Delta_k = {delta} below its lower bound {bound}")
    return DeltaResult(D, delta, alpha, bound, mu, w)


@dataclass
class RestrictedMeasure:
    """base * 1{D} / Delta over the enumerated space."""

    weights: np.ndarray
    base: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    delta: float
    region: AcceptanceRegion | None = field(default=None, repr=False)
    mu: float = math.nan

    @property
    def n(self) -> int:
        return self.region.n

    def kl_to_base(self) -> float:
        """D(restricted || base) in bits by direct summation."""
        return kl_divergence(self.weights, self.base)


def restricted_measure(base, D, delta, region=None, mu=math.nan) -> RestrictedMeasure:
    if not delta > 0:
        raise ValueError("restriction needs positive mass")
    w = np.where(D, base, 0.0) / delta
    total = w.sum()
    if abs(total - 1.0) > 1e-12:
        raise AssertionError(f"restricted measure sums to {total}")
    return RestrictedMeasure(w, base, D, float(delta), region, float(mu))


def restrict(protocol, p_joint, k, mu=None, cap=DEFAULT_ENUMERATION_CAP):
    """Region, Delta and restricted measure for center k in one call."""
    region = enumerate_region(protocol, p_joint, k, cap)
    d = delta_k(region, mu)
    return region, d, restricted_measure(d.base, d.D, d.delta, region, d.mu)


# --- single-letter quantities ------------------------------------------------

def single_letter_pmf(rm: RestrictedMeasure) -> JointPmf:
    """Law of the tuple at a uniformly chosen position T."""
    enum = rm.region.enumeration
    m = enum.position_marginals(rm.weights).mean(axis=0)
    return JointPmf(m.reshape(rm.region.p.shape), rm.region.p.axes, atol=1e-9)


@dataclass
class EntropyGap:
    n: int
    mu: float
    normalized_entropy: float  # (1/n) H(restricted)
    target: float  # H(P)
    gap: float
    cross_entropy: float  # sum_a P_single(a) log 1/P(a)
    log_delta_term: float  # (1/n) log2 Delta
    max_deviation: float  # max |P_single - P|


def entropy_gap(rm: RestrictedMeasure) -> EntropyGap:
    n = rm.n
    p = rm.region.p
    H = _bits(rm.weights) / n
    single = single_letter_pmf(rm).flat()
    pf = p.flat()
    ce = float(-np.sum(single[single > 0] * np.log2(pf[single > 0])))
    mu = rm.mu if math.isfinite(rm.mu) else delta_mu(rm)
    return EntropyGap(n, mu, H, entropy(p), abs(H - entropy(p)), ce, math.log2(rm.delta) / n,
                      float(np.max(np.abs(single - pf))))


def entropy_convergence(series, check_trend=True) -> list:
    """Gap |(1/n) H(restricted) - H(P)| per blocklength, with its exact decomposition.

    (1/n) H = cross_entropy + (1/n) log2 Delta holds identically. Asserts the
    single-letter deviation bound (every tuple in D_k is typical, so the
    time-averaged marginal is within mu of P) and, with ``check_trend``, that
    the gap is nonincreasing from the second blocklength on.
    """
    series = sorted(series, key=lambda r: r.n)
    if len(series) < 3:
        raise ValueError("need at least three blocklengths")
    rows = [entropy_gap(r) for r in series]
    for r in rows:
        if r.max_deviation > r.mu + 1e-12:
            raise AssertionError(f"n={r.n}: single-letter deviation {r.max_deviation} exceeds mu {r.mu}")
        if abs(r.normalized_entropy - (r.cross_entropy + r.log_delta_term)) > 1e-9:
            raise AssertionError(f"n={r.n}: entropy decomposition off")
    if check_trend:
        gaps = [r.gap for r in rows[1:]]
        if any(b > a + 1e-12 for a, b in zip(gaps, gaps[1:])):
            raise AssertionError(f"entropy gaps not nonincreasing: {gaps}")
    return rows


def delta_mu(rm: RestrictedMeasure) -> float:
    """Largest typicality slack inside D (a certificate that D sits in the typical set)."""
    enum = rm.region.enumeration
    s = enum.slack(rm.region.p.flat())
    return float(s[rm.D].max())


@dataclass
class SingleLetterization:
    """Entropies of (U_l, single-letter components) for every l <= k.

    ``joint_entropy[l][S]`` is H(U_l, Y_{S,T}) in bits for a component subset S
    (T is part of U_l, so this includes log2 n).
    """

    n: int
    k: int
    single: JointPmf
    joint_entropy: dict
    message_entropy: dict

    def _h_single(self, S) -> float:
        if not S:
            return 0.0
        return entropy(self.single.marginal(sorted(S)))

    def _h_joint(self, ell, S) -> float:
        key = frozenset(S)
        table = self.joint_entropy[ell]
        if key not in table:
            raise KeyError(f"subset {sorted(S)} was not computed for l={ell}")
        return table[key]

    def mutual_information(self, ell, B) -> float:
        """I(U_l; Y_B)."""
        B = frozenset(B)
        v = self._h_joint(ell, ()) + self._h_single(B) - self._h_joint(ell, B)
        return max(v, 0.0)

    def conditional_mutual_information(self, ell, B, C) -> float:
        """I(U_l; Y_B | Y_C)."""
        B, C = frozenset(B), frozenset(C)
        v = self._h_joint(ell, C) + self._h_single(B | C) - self._h_joint(ell, B | C) - self._h_single(C)
        return max(v, 0.0)


def _subsets(ell, k):
    full = frozenset(range(k + 1))
    return {frozenset(), frozenset({ell - 1}), frozenset({ell}), frozenset({ell - 1, ell}), full}


def single_letterize(rm: RestrictedMeasure, ells=None) -> SingleLetterization:
    """Entropies of U_l = (M_l, Y_0^{T-1}, ..., Y_k^{T-1}, T) jointly with single letters.

    Tuples are sorted by message once; within a message codes ascend, so the
    groups (m, prefix_t, y_t) are contiguous at every t and each level is a
    ``reduceat`` of the one below. Component subsets of y_t are bincounts
    over the groups.
    """
    region = rm.region
    k, n, A = region.k, region.n, region.enumeration.A
    sizes = tuple(region.p.shape)
    digits = np.array(np.unravel_index(np.arange(A), sizes))  # (k+1, A)
    ells = range(1, k + 1) if ells is None else ells
    w = rm.weights
    sup = np.flatnonzero(w > 0)
    joint, msg_h = {}, {}
    for ell in ells:
        subsets = _subsets(ell, k)
        lookup = {}
        for S in subsets:
            comps = sorted(S)
            if comps:
                dims = tuple(sizes[j] for j in comps)
                lookup[S] = (np.ravel_multi_index(tuple(digits[j] for j in comps), dims), math.prod(dims))
            else:
                lookup[S] = (np.zeros(A, dtype=np.int64), 1)
        msg = region.messages[ell - 1][sup]
        M = int(msg.max()) + 2
        order = np.argsort(msg.astype(np.int32 if M > 2**15 else np.int16), kind="stable")
        gm, gb, gw = msg[order], sup[order], w[sup][order]
        msg_h[ell] = _bits(np.bincount(gm + 1, weights=gw, minlength=M))
        acc = {S: 0.0 for S in subsets}
        for t in range(n - 1, -1, -1):
            prefix, digit = np.divmod(gb, A)
            new = np.ones(len(gb), dtype=bool)
            new[1:] = (gm[1:] != gm[:-1]) | (prefix[1:] != prefix[:-1])
            sid = np.cumsum(new) - 1
            nsup = int(sid[-1]) + 1
            for S in subsets:
                idx, size = lookup[S]
                acc[S] += _bits(np.bincount(sid * size + idx[digit], weights=gw, minlength=nsup * size))
            starts = np.flatnonzero(new)
            gw = np.add.reduceat(gw, starts)
            gm, gb = gm[starts], prefix[starts]
        joint[ell] = {S: math.log2(n) + v / n for S, v in acc.items()}
    return SingleLetterization(n, k, single_letter_pmf(rm), joint, msg_h)


def single_letter_joint(rm: RestrictedMeasure, ell, max_size=2**20) -> JointPmf:
    """Materialised law of (U_l, Y_0,T, ..., Y_k,T) with U_l over its realised support.

    Built by scattering every tuple's weight onto (message, prefix, t) keys;
    an independent route to the quantities of :func:`single_letterize`.
    """
    region = rm.region
    enum = region.enumeration
    n, A = region.n, enum.A
    codes = np.flatnonzero(rm.weights > 0)
    w = rm.weights[codes]
    msg = region.messages[ell - 1][codes]
    keys, cells = {}, []
    for t in range(n):
        prefix = codes // A ** (n - t)
        sym = (codes // A ** (n - 1 - t)) % A
        for m, pre, a, x in zip(msg.tolist(), prefix.tolist(), sym.tolist(), w.tolist()):
            u = keys.setdefault((m, pre, t), len(keys))
            cells.append((u, a, x / n))
    if len(keys) * A > max_size:
        raise EnumerationCapError(len(keys) * A, max_size)
    table = np.zeros((len(keys), A))
    for u, a, x in cells:
        table[u, a] += x
    table = table.reshape((len(keys),) + tuple(region.p.shape))
    return JointPmf(table, None, atol=1e-9)


def markov_gap(single: SingleLetterization, ell) -> float:
    """I(U_l; Y_l | Y_{l-1}) under the restricted measure."""
    return single.conditional_mutual_information(ell, {ell}, {ell - 1})


def chain_gap(rm: RestrictedMeasure, ell):
    """(I(Y_0..Y_{l-2}; Y_l | Y_{l-1}), D(P_single || P)) for the single-letter law; the first never exceeds the second for a Markov source."""
    from .probcore import conditional_mutual_information

    single = single_letter_pmf(rm)
    cmi = conditional_mutual_information(single, list(range(ell - 1)), [ell], [ell - 1]) if ell >= 2 else 0.0
    return cmi, kl_divergence(single, rm.region.p)


# --- Lemma certificate -------------------------------------------------------

def _seq_marginal(rm, j):
    """Law of Y_j^n under the measure, indexed lexicographically."""
    enum = rm.region.enumeration
    return np.bincount(enum.component(j), weights=rm.weights, minlength=rm.region.p.shape[j] ** rm.n)


def _message_law(protocol, k, marginals):
    """Law of M_k when Y_0^n, ..., Y_{k-1}^n are independent with the given sequence laws.

    Returned vector has REJECT in its last slot.
    """
    def pushforward(tab_row_law, tab, size):
        joint = tab_row_law[:, None] * marginals_j[None, :]
        idx = np.where(tab < 0, size, tab)
        return np.bincount(idx.ravel(), weights=joint.ravel(), minlength=size + 1)

    marginals_j = marginals[0]
    q = pushforward(np.ones(1), protocol.enc[0], protocol.msg_counts[0])
    for l in range(1, k):
        marginals_j = marginals[l]
        q = pushforward(q, protocol.enc[l], protocol.msg_counts[l])
    return q


def type2_error(protocol: Protocol, p_joint: JointPmf, k) -> float:
    """beta_k = P(center k guesses 0) with independent terminals, by message-law propagation."""
    n = protocol.n
    marg = []
    for j in range(k + 1):
        pj = p_joint.marginal([j]).mass
        w = np.ones(1)
        for _ in range(n):
            w = np.multiply.outer(w, pj).ravel()
        marg.append(w)
    q = _message_law(protocol, k, marg)
    acc = protocol.dec[k - 1] == 0
    return float(q @ acc @ marg[k])


@dataclass
class HopCertificate:
    ell: int
    message_entropy: float  # H(M_l)
    rate_budget: float  # n R_l
    info_lower: float  # n I(U_l; Y_{l-1}) + log2 Delta
    residual: float  # H(M_l) - info_lower
    divergence_slack: float  # n D(P_single || P) <= residual
    markov_gap: float
    ok_rate: bool
    ok_info: bool


@dataclass
class Lemma1Report:
    k: int
    n: int
    delta: float
    hops: list
    beta: float
    exponent: float  # -(1/n) log2 beta
    changed_measure: float  # -(1/n) log2 Q~(A_k) - ((k+1)/n) log2 Delta
    divergence_bound: float  # (1/n) D(P_{M_k Y_k^n} || Q_{M_k} P_{Y_k^n}) + delta'
    info_bound: float  # sum_l I(U_l; Y_l) + delta'
    delta_prime: float
    conditional_exponent: float  # -(1/n) log2 P(guess 0 | H=1, D_k)
    ok_exponent: bool

    @property
    def ok(self) -> bool:
        return self.ok_exponent and all(h.ok_rate and h.ok_info for h in self.hops)


def lemma1_certificate(rm: RestrictedMeasure, rates, single: SingleLetterization | None = None,
                       p_joint: JointPmf | None = None) -> Lemma1Report:
    """Exact finite-n check of the rate, information and exponent inequalities.

    (i)   H(M_l) <= n R_l;
    (ii)  H(M_l) >= n I(U_l; Y_{l-1}) + log2 Delta_k, residual reported;
    (iii) -(1/n) log2 beta_k <= -(1/n) log2 Q~(A_k) - ((k+1)/n) log2 Delta_k
              <= (1/n) D(P_{M_k Y_k^n} || Q_{M_k} P_{Y_k^n}) + delta'
              <= sum_l I(U_l; Y_l) + delta',  delta' = -((k+1)/n) log2 Delta_k + 1/n,
          where Q_{M_k} is the message law under independent restricted marginals.
    The conditional form -(1/n) log2 P(guess 0 | H=1, D_k) is also reported; it
    is 0 because D_k lies inside the acceptance region.
    """
    region = rm.region
    k, n = region.k, region.n
    protocol = region.protocol
    single = single or single_letterize(rm)
    log_delta = math.log2(rm.delta)
    single_pmf = single.single
    dsingle = kl_divergence(single_pmf, region.p)

    hops = []
    for ell in range(1, k + 1):
        H = single.message_entropy[ell]
        budget = n * float(rates[ell - 1])
        lower = n * single.mutual_information(ell, {ell - 1}) + log_delta
        hops.append(HopCertificate(ell, H, budget, lower, H - lower, n * dsingle, markov_gap(single, ell),
                                   H <= budget + ATOL, H >= lower - ATOL))

    enum = region.enumeration
    pflat = region.p.flat()
    qflat = np.ones(())
    for j in range(k + 1):
        qflat = np.multiply.outer(qflat, region.p.marginal([j]).mass)
    qw = enum.product_weights(qflat.ravel())
    beta = float(qw[region.mask].sum())
    q_in_D = float(qw[rm.D].sum())
    cond = -math.log2(float(qw[rm.D & region.mask].sum()) / q_in_D) / n if q_in_D > 0 else math.nan

    marg = [_seq_marginal(rm, j) for j in range(k + 1)]
    qm = _message_law(protocol, k, marg)
    acc = (protocol.dec[k - 1] == 0).astype(float)
    q_tilde_A = float(qm @ acc @ marg[k])
    mk = region.messages[k - 1]
    Mk = protocol.msg_counts[k - 1]
    idx = np.where(mk < 0, Mk, mk).astype(np.int64) * len(marg[k]) + enum.component(k).astype(np.int64)
    pj = np.bincount(idx, weights=rm.weights, minlength=(Mk + 1) * len(marg[k]))
    div = kl_divergence(pj, np.outer(qm, marg[k]).ravel())
    dprime = -(k + 1) / n * log_delta + 1.0 / n
    exponent = -math.log2(beta) / n if beta > 0 else math.inf
    changed = -math.log2(q_tilde_A) / n - (k + 1) / n * log_delta if q_tilde_A > 0 else math.inf
    div_bound = div / n + dprime
    info_bound = sum(single.mutual_information(ell, {ell}) for ell in range(1, k + 1)) + dprime
    ok = exponent <= changed + ATOL and changed <= div_bound + ATOL and div_bound <= info_bound + ATOL
    return Lemma1Report(k, n, rm.delta, hops, beta, exponent, changed, div_bound, info_bound, dprime, cond, ok)


# --- lossless source coding with side information ---------------------------

@dataclass
class SourceCodingReport:
    n: int
    rate: float
    delta: float
    normalized_joint_entropy: float  # (1/n) H(X~^n Y~^n)
    normalized_side_entropy: float  # (1/n) H(Y~^n)
    normalized_conditional_entropy: float  # (1/n) H(X~^n | Y~^n)
    targets: tuple  # H(XY), H(Y), H(X|Y)
    message_entropy: float
    leakage: float  # I(M~; Y~^n | X~^n)
    decodable: bool  # X~^n is a function of (M~, Y~^n) on the restricted support


def source_coding_restriction(p_xy: JointPmf, n, rate, seed=0, mu=None, cap=DEFAULT_ENUMERATION_CAP):
    """Random-binning code for X with side information Y, restricted to correct decoding and typicality.

    The encoder hashes x^n into 2^ceil(nR) bins; the decoder returns the
    first x^n in the received bin that is jointly typical with y^n.
    """
    mu = default_mu(n) if mu is None else float(mu)
    a, b = p_xy.shape
    enum = _enumeration(p_xy, n, 1, cap)
    L = message_bits(n, rate)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
    bins = rng.integers(0, 2**L, size=a**n)
    xs, ys = all_sequences(a, n), all_sequences(b, n)
    slack = _pair_slack(xs[:, None, :], ys[None, :, :], p_xy.mass)  # (x, y)
    typ = slack <= mu + TYPICALITY_EPS
    decoded = np.full((2**L, b**n), -1, dtype=np.int64)
    for x in range(a**n - 1, -1, -1):  # the smallest typical x wins
        decoded[bins[x], typ[x]] = x
    cx, cy = enum.component(0).astype(np.int64), enum.component(1).astype(np.int64)
    m = bins[cx]
    correct = decoded[m, cy] == cx
    pflat = p_xy.flat()
    w = enum.product_weights(pflat)
    D = correct & (enum.slack(pflat) <= mu + TYPICALITY_EPS)
    delta = float(w[D].sum())
    if delta <= 0:
        raise ValueError("Delta = 0: no correctly decoded typical pair")
    wt = np.where(D, w, 0.0) / delta
    H_xy = _bits(wt)
    py = np.bincount(cy, weights=wt, minlength=b**n)
    H_y = _bits(py)
    pm = np.bincount(m, weights=wt, minlength=2**L)
    # I(M;Y|X) = H(M,X) + H(X,Y) - H(M,X,Y) - H(X); M is a function of X
    pxm = np.bincount(cx * 2**L + m, weights=wt)
    px = np.bincount(cx, weights=wt)
    pxym = np.bincount((cx * b**n + cy) * 2**L + m, weights=wt)
    leak = max(_bits(pxm) + H_xy - _bits(pxym) - _bits(px), 0.0)
    sup = wt > 0
    key = m[sup] * b**n + cy[sup]
    order = np.argsort(key, kind="stable")
    ks, xs_sorted = key[order], cx[sup][order]
    same = ks[1:] == ks[:-1]
    decodable = bool(np.all(xs_sorted[1:][same] == xs_sorted[:-1][same]))
    from .probcore import conditional_entropy

    targets = (entropy(p_xy), entropy(p_xy.marginal([1])), conditional_entropy(p_xy, 0, 1))
    return SourceCodingReport(n, rate, delta, H_xy / n, H_y / n, (H_xy - H_y) / n, targets, _bits(pm), leak,
                              decodable)


# --- fixtures ------------------------------------------------------------------

def fixture_record(spec, seed, n, region: AcceptanceRegion, d: DeltaResult, single: SingleLetterization,
                   gap: EntropyGap, report: Lemma1Report) -> dict:
    """Regression record for one enumerated instance."""
    return {
        "spec_sha256": spec.digest(),
        "seed": int(seed),
        "n": int(n),
        "k": int(region.k),
        "region_cardinality": region.cardinality,
        "delta": d.delta,
        "alpha": d.alpha,
        "markov_gaps": {str(h.ell): h.markov_gap for h in report.hops},
        "entropy_gap": gap.gap,
        "beta": report.beta,
        "slacks": {
            "delta_bound": d.delta - d.bound,
            "exponent": report.info_bound - report.exponent,
            "rate": {str(h.ell): h.rate_budget - h.message_entropy for h in report.hops},
            "info": {str(h.ell): h.residual for h in report.hops},
        },
    }


def fixture_digest(record) -> str:
    return hashlib.sha256(json.dumps(record, sort_keys=True).encode()).hexdigest()
