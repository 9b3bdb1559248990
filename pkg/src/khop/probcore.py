"""Finite-alphabet probability kernel.

Dense pmfs over products of finite alphabets, information measures in bits,
strong typicality, and blocklength-n i.i.d. extensions that are evaluated
pointwise or by exact enumeration (never stored as tensors unless enumerated).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import AxisError, EnumerationCapError, InvalidPmfError

PMF_ATOL = 1e-12
DEFAULT_ENUMERATION_CAP = 2**24


@dataclass(frozen=True)
class Alphabet:
    symbols: Sequence
    name: str = ""

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise InvalidPmfError("alphabet must contain at least one symbol")
        if not isinstance(self.symbols, range):
            object.__setattr__(self, "symbols", tuple(self.symbols))
            if len(set(self.symbols)) != len(self.symbols):
                raise InvalidPmfError(f"alphabet {self.name!r} has duplicate labels")

    @property
    def size(self) -> int:
        return len(self.symbols)

    @classmethod
    def range(cls, size: int, name: str = "") -> "Alphabet":
        return cls(range(int(size)), name)

    def index(self, symbol) -> int:
        return self.symbols.index(symbol)

    def __len__(self):
        return self.size


def _check_mass(mass, atol=PMF_ATOL):
    if not np.all(np.isfinite(mass)):
        raise InvalidPmfError("pmf contains non-finite entries")
    if np.any(mass < 0):
        raise InvalidPmfError("pmf contains negative entries")
    total = mass.sum()
    if abs(total - 1.0) > atol:
        raise InvalidPmfError(f"pmf sums to {total!r}, not 1 within {atol}")


class JointPmf:
    """Probability tensor with one axis per alphabet.

    Inputs are validated, never renormalized: entries must be nonnegative and
    sum to one within ``atol``.
    """

    def __init__(self, mass, axes: Sequence[Alphabet] | None = None, atol: float = PMF_ATOL):
        mass = np.array(mass, dtype=float)
        if mass.ndim == 0:
            raise InvalidPmfError("pmf needs at least one axis")
        if axes is None:
            axes = [Alphabet.range(s) for s in mass.shape]
        axes = tuple(axes)
        if tuple(a.size for a in axes) != mass.shape:
            raise InvalidPmfError(
                f"tensor shape {mass.shape} does not match alphabet sizes {[a.size for a in axes]}"
            )
        _check_mass(mass, atol)
        mass.setflags(write=False)
        self.mass = mass
        self.axes = axes

    @classmethod
    def from_probs(cls, alphabets, probs, names=None, atol=PMF_ATOL) -> "JointPmf":
        """Build from label lists and a flat row-major probability list."""
        names = names or [f"Y{i}" for i in range(len(alphabets))]
        axes = [Alphabet(tuple(s), nm) for s, nm in zip(alphabets, names)]
        shape = tuple(a.size for a in axes)
        probs = np.asarray(probs, dtype=float)
        if probs.size != math.prod(shape):
            raise InvalidPmfError(f"expected {math.prod(shape)} probabilities, got {probs.size}")
        return cls(probs.reshape(shape), axes, atol)

    @property
    def ndim(self) -> int:
        return self.mass.ndim

    @property
    def shape(self):
        return self.mass.shape

    @property
    def names(self):
        return [a.name for a in self.axes]

    def axis_index(self, axis) -> int:
        if isinstance(axis, (int, np.integer)):
            i = int(axis)
            if i < 0:
                i += self.ndim
            if not 0 <= i < self.ndim:
                raise AxisError(f"axis {axis} out of range for {self.ndim}-axis pmf")
            return i
        names = self.names
        if axis in names:
            return names.index(axis)
        raise AxisError(f"unknown axis {axis!r}")

    def normalize_axes(self, axes) -> tuple:
        if axes is None:
            return ()
        if isinstance(axes, (int, np.integer, str)):
            axes = [axes]
        out = tuple(self.axis_index(a) for a in axes)
        if len(set(out)) != len(out):
            raise AxisError(f"repeated axis in {axes!r}")
        return out

    def marginal(self, keep) -> "JointPmf":
        return marginalize(self, keep)

    def flat(self) -> np.ndarray:
        return self.mass.ravel()

    def __repr__(self):
        return f"JointPmf(shape={self.shape}, names={self.names})"


def _as_mass(p):
    return p.mass if isinstance(p, JointPmf) else np.asarray(p, dtype=float)


def marginalize(p: JointPmf, keep) -> JointPmf:
    keep = p.normalize_axes(keep)
    if not keep:
        raise AxisError("keep must be nonempty")
    keep = tuple(sorted(keep))
    drop = tuple(i for i in range(p.ndim) if i not in keep)
    mass = p.mass.sum(axis=drop) if drop else p.mass
    # summation can drift by a few ulps
    return JointPmf(mass, [p.axes[i] for i in keep], atol=1e-9)


def _entropy_of(mass) -> float:
    m = np.asarray(mass, dtype=float).ravel()
    m = m[m > 0]
    return float(-np.sum(m * np.log2(m)))


def entropy(p) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    return max(_entropy_of(_as_mass(p)), 0.0)


def _joint_entropy(p: JointPmf, axes) -> float:
    axes = tuple(sorted(set(axes)))
    if not axes:
        return 0.0
    drop = tuple(i for i in range(p.ndim) if i not in axes)
    return _entropy_of(p.mass.sum(axis=drop) if drop else p.mass)


def _disjoint(p, *groups):
    groups = [p.normalize_axes(g) for g in groups]
    seen = set()
    for g in groups:
        if seen & set(g):
            raise AxisError("axis sets must be disjoint")
        seen |= set(g)
    return groups


def conditional_entropy(p: JointPmf, target, given) -> float:
    t, g = _disjoint(p, target, given)
    return max(_joint_entropy(p, t + g) - _joint_entropy(p, g), 0.0)


def mutual_information(p: JointPmf, a, b) -> float:
    a, b = _disjoint(p, a, b)
    v = _joint_entropy(p, a) + _joint_entropy(p, b) - _joint_entropy(p, a + b)
    return max(v, 0.0)


def conditional_mutual_information(p: JointPmf, a, b, c=()) -> float:
    a, b, c = _disjoint(p, a, b, c)
    v = (_joint_entropy(p, a + c) + _joint_entropy(p, b + c)
         - _joint_entropy(p, a + b + c) - _joint_entropy(p, c))
    return max(v, 0.0)


def kl_divergence(p, q) -> float:
    """D(p||q) in bits; +inf when p puts mass where q has none."""
    pm, qm = _as_mass(p), _as_mass(q)
    if pm.shape != qm.shape:
        raise ValueError(f"shape mismatch {pm.shape} vs {qm.shape}")
    pm, qm = pm.ravel(), qm.ravel()
    s = pm > 0
    if np.any(qm[s] <= 0):
        return math.inf
    return max(float(np.sum(pm[s] * np.log2(pm[s] / qm[s]))), 0.0)


class ConditionalPmf:
    """Row-stochastic kernel: one distribution over ``to_axes`` per ``from_axes`` tuple."""

    def __init__(self, kernel, from_axes: Sequence[Alphabet] | None = None,
                 to_axes: Sequence[Alphabet] | None = None, atol: float = PMF_ATOL):
        kernel = np.array(kernel, dtype=float)
        if from_axes is None:
            from_axes = [Alphabet.range(kernel.shape[0])]
        if to_axes is None:
            to_axes = [Alphabet.range(s) for s in kernel.shape[len(from_axes):]]
        from_axes, to_axes = tuple(from_axes), tuple(to_axes)
        shape = tuple(a.size for a in from_axes + to_axes)
        if kernel.shape != shape:
            raise InvalidPmfError(f"kernel shape {kernel.shape} does not match alphabets {shape}")
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise InvalidPmfError("kernel has negative or non-finite entries")
        rows = kernel.reshape(math.prod(a.size for a in from_axes), -1).sum(axis=1)
        if np.any(np.abs(rows - 1.0) > atol):
            raise InvalidPmfError(f"kernel rows do not sum to 1 (worst {np.max(np.abs(rows - 1))})")
        kernel.setflags(write=False)
        self.kernel = kernel
        self.from_axes = from_axes
        self.to_axes = to_axes

    @property
    def matrix(self) -> np.ndarray:
        """Kernel flattened to (from tuples, to tuples)."""
        return self.kernel.reshape(math.prod(a.size for a in self.from_axes), -1)

    def joint(self, p_from: JointPmf) -> JointPmf:
        """Joint pmf of (from, to) when the input is distributed as ``p_from``."""
        m = p_from.mass.reshape(-1, 1) * self.matrix
        return JointPmf(m.reshape(p_from.shape + self.kernel.shape[len(self.from_axes):]),
                        tuple(p_from.axes) + self.to_axes, atol=1e-9)

    def __repr__(self):
        return f"ConditionalPmf(shape={self.kernel.shape})"


@dataclass(frozen=True)
class EmpiricalType:
    axes: tuple
    counts: np.ndarray
    n: int

    @classmethod
    def of(cls, seqs, sizes) -> "EmpiricalType":
        seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
        n = _common_length(seqs)
        flat = np.ravel_multi_index(tuple(seqs), tuple(sizes))
        counts = np.bincount(flat, minlength=math.prod(sizes)).reshape(tuple(sizes))
        return cls(tuple(sizes), counts, n)

    @property
    def freq(self) -> np.ndarray:
        return self.counts / self.n


def _common_length(seqs):
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise ValueError(f"sequences have unequal lengths {sorted(lengths)}")
    n = lengths.pop()
    if n < 1:
        raise ValueError("sequences must be nonempty")
    return n


def _encode_symbols(seqs, p: JointPmf):
    out = []
    for s, ax in zip(seqs, p.axes):
        arr = np.asarray(s)
        if arr.dtype.kind in "iu" and isinstance(ax.symbols, range):
            out.append(arr.astype(np.int64))
        else:
            out.append(np.array([ax.index(v) for v in arr.tolist()], dtype=np.int64))
    return out


def typicality_slack(seqs, p: JointPmf) -> float:
    """Smallest mu for which ``seqs`` is strongly mu-typical for ``p`` (inf on support violation)."""
    if len(seqs) != p.ndim:
        raise ValueError(f"need {p.ndim} sequences, got {len(seqs)}")
    idx = _encode_symbols(seqs, p)
    t = EmpiricalType.of(idx, p.shape)
    return slack_from_counts(t.counts.ravel(), p.flat(), t.n)


def slack_from_counts(counts, pflat, n):
    """Vectorised typicality slack; ``counts`` has the joint alphabet on its last axis."""
    counts = np.asarray(counts)
    freq = counts / n
    dev = np.abs(freq - pflat)
    bad = (pflat == 0) & (counts > 0)
    dev = np.where(bad, np.inf, dev)
    return dev.max(axis=-1)


TYPICALITY_EPS = 1e-12


def is_strongly_typical(seqs, p: JointPmf, mu: float) -> bool:
    """Strong typicality: every joint frequency within ``mu`` of ``p`` and no zero-probability tuple used."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return bool(typicality_slack(seqs, p) <= mu + TYPICALITY_EPS)


def default_mu(n: int) -> float:
    return float(n) ** (-1.0 / 3.0)


def typical_mass_lower_bound(alphabet_size: int, mu: float, n: int) -> float:
    """Chebyshev-type bound 1 - |A| / (4 mu^2 n) on the mass of the strongly typical set."""
    return 1.0 - alphabet_size / (4.0 * mu * mu * n)


def _smallest_uint(maxval):
    for dt in (np.uint8, np.uint16, np.uint32, np.uint64):
        if maxval <= np.iinfo(dt).max:
            return dt
    raise OverflowError(maxval)


class Enumeration:
    """All symbol-tuple sequences of an i.i.d. extension in position-major order.

    Code ``c`` has digit ``a_t`` (joint symbol at position t, row-major over
    the axes) with weight ``A**(n-1-t)``; prefixes of length t are therefore
    contiguous blocks of ``A**(n-t)`` codes.
    """

    def __init__(self, p: JointPmf, n: int):
        self.p = p
        self.n = int(n)
        self.A = int(np.prod(p.shape))
        self.size = self.A ** self.n
        self._weights = None
        self._components = {}
        self._counts = None
        self._types = None

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            self._weights = self.product_weights(self.p.flat())
        return self._weights

    def product_weights(self, pflat) -> np.ndarray:
        w = np.ones(1)
        for _ in range(self.n):
            w = np.multiply.outer(w, pflat).ravel()
        return w

    def component(self, j: int) -> np.ndarray:
        """Sequence index of axis ``j`` (first symbol most significant) for every code."""
        if j not in self._components:
            size = self.p.shape[j]
            digit = np.unravel_index(np.arange(self.A), self.p.shape)[j]
            dt = _smallest_uint(size**self.n)
            s = np.zeros(1, dtype=dt)
            digit = digit.astype(dt)
            for _ in range(self.n):
                s = (s[:, None] * dt(size) + digit[None, :]).ravel()
            self._components[j] = s
        return self._components[j]

    def counts(self) -> np.ndarray:
        """Joint type counts, shape (A, size)."""
        if self._counts is None:
            dt = _smallest_uint(self.n)
            out = np.empty((self.A, self.size), dtype=dt)
            for a in range(self.A):
                ind = (np.arange(self.A) == a).astype(dt)
                c = np.zeros(1, dtype=dt)
                for _ in range(self.n):
                    c = (c[:, None] + ind[None, :]).ravel()
                out[a] = c
            self._counts = out
        return self._counts

    def type_index(self):
        """(type id per code, joint type counts per id); the slack depends on a code only through its type."""
        if self._types is None:
            base = self.n + 1
            if base ** self.A < 2**62:
                v = base ** np.arange(self.A, dtype=np.int64)
                key = np.zeros(1, dtype=np.int64)
                for _ in range(self.n):
                    key = (key[:, None] + v[None, :]).ravel()
                uniq, inv = np.unique(key, return_inverse=True)
                tc = (uniq[:, None] // v[None, :]) % base
            else:
                tc, inv = np.unique(self.counts().T, axis=0, return_inverse=True)
            self._types = (inv.astype(np.int32).ravel(), tc)
        return self._types

    def slack(self, pflat=None) -> np.ndarray:
        pflat = self.p.flat() if pflat is None else pflat
        inv, tc = self.type_index()
        return slack_from_counts(tc, pflat, self.n)[inv]

    def typical_mask(self, mu: float) -> np.ndarray:
        return self.slack() <= mu + TYPICALITY_EPS

    def position_marginals(self, weights) -> np.ndarray:
        """Per-position joint-symbol marginals of a measure on codes, shape (n, A)."""
        out = np.empty((self.n, self.A))
        for t in range(self.n):
            out[t] = weights.reshape(self.A**t, self.A, self.A ** (self.n - 1 - t)).sum(axis=(0, 2))
        return out


@dataclass
class IIDExtension:
    """Blocklength-n i.i.d. extension of ``base``, optionally restricted by a predicate on codes."""

    base: JointPmf
    n: int
    restriction: Callable | None = None
    cap: int = DEFAULT_ENUMERATION_CAP
    _enum: Enumeration | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("blocklength must be >= 1")

    @property
    def space_size(self) -> int:
        return int(np.prod(self.base.shape)) ** self.n

    def prob(self, seqs) -> float:
        """Unrestricted probability of a tuple of length-n sequences."""
        idx = _encode_symbols(seqs, self.base)
        if _common_length(idx) != self.n:
            raise ValueError(f"sequences must have length {self.n}")
        return float(np.prod(self.base.mass[tuple(idx)]))

    def enumerate(self) -> Enumeration:
        if self.space_size > self.cap:
            raise EnumerationCapError(self.space_size, self.cap)
        if self._enum is None:
            self._enum = Enumeration(self.base, self.n)
        return self._enum

    def weights(self) -> np.ndarray:
        e = self.enumerate()
        w = e.weights
        if self.restriction is not None:
            w = np.where(self.restriction(e), w, 0.0)
        return w


def iid_extend(p: JointPmf, n: int, restriction=None, cap: int = DEFAULT_ENUMERATION_CAP) -> IIDExtension:
    return IIDExtension(p, n, restriction, cap)


def product_of_marginals(p: JointPmf) -> JointPmf:
    m = np.ones(())
    for i in range(p.ndim):
        m = np.multiply.outer(m, marginalize(p, [i]).mass)
    return JointPmf(m, p.axes, atol=1e-9)
