"""Closed-form binary quantities and standard test sources."""
import numpy as np

from .probcore import Alphabet, ConditionalPmf, JointPmf


def binary_entropy(q):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -q * np.log2(q) - (1 - q) * np.log2(1 - q)
    return np.where((q <= 0) | (q >= 1), 0.0, h)


def binary_convolution(a, b):
    """Crossover of two cascaded BSCs: a*(1-b) + (1-a)*b."""
    return a * (1 - b) + (1 - a) * b


def bsc(q) -> ConditionalPmf:
    return ConditionalPmf([[1 - q, q], [q, 1 - q]])


def dsbs(p: float, names=("X", "Y")) -> JointPmf:
    """Doubly symmetric binary source: uniform X, Y = X xor Bernoulli(p)."""
    m = 0.5 * np.array([[1 - p, p], [p, 1 - p]])
    return JointPmf(m, [Alphabet((0, 1), names[0]), Alphabet((0, 1), names[1])])


def dsbs_chain(crossovers, names=None) -> JointPmf:
    """Markov chain Y0 - Y1 - ... - YK of uniform bits with BSC links."""
    crossovers = list(crossovers)
    names = names or [f"Y{i}" for i in range(len(crossovers) + 1)]
    m = np.array([0.5, 0.5])
    for p in crossovers:
        link = np.array([[1 - p, p], [p, 1 - p]])
        m = m[..., None] * link.reshape((1,) * (m.ndim - 1) + (2, 2))
    return JointPmf(m, [Alphabet((0, 1), nm) for nm in names])
