"""Input checks shared by the estimators, in the spirit of ``sklearn.utils.validation``."""
import numbers

import numpy as np

from .probcore import JointPmf


def check_pmf(p, ndim=None, name="pmf") -> JointPmf:
    if not isinstance(p, JointPmf):
        p = JointPmf(p)
    if ndim is not None and p.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} axes, got {p.ndim}")
    return p


def check_rate(R, name="R") -> float:
    if not isinstance(R, numbers.Real) or not np.isfinite(R):
        raise ValueError(f"{name} must be a finite real number, got {R!r}")
    if R < 0:
        raise ValueError(f"{name} must be nonnegative, got {R}")
    return float(R)


def check_positive_int(v, name, minimum=1) -> int:
    if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {v!r}")
    return int(v)


def check_rng(random_state) -> np.random.Generator:
    """Turn a seed, SeedSequence or Generator into a ``numpy.random.Generator``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)
