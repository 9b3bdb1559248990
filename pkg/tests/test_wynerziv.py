import numpy as np
import pytest

from khop.exceptions import InfeasibleError
from khop.exponents import (
    DistortionSpec,
    WynerZivEstimator,
    dsbs_hamming_rate,
    lossless_bound,
    wyner_ziv_grid_oracle,
    wyner_ziv_rmin,
)
from khop.exponents.wynerziv import conditional_rate
from khop.probcore import JointPmf
from khop.sources import dsbs


@pytest.mark.parametrize("D", [0.0, 0.02, 0.05, 0.08])
def test_dsbs_hamming_closed_form(D):
    sol = wyner_ziv_rmin(dsbs(0.1), DistortionSpec.hamming(2, D))
    assert sol.rate == pytest.approx(dsbs_hamming_rate(0.1, D), abs=1e-3)
    assert sol.achieved_distortion <= D + 1e-6


def test_zero_distortion_is_lossless():
    p = dsbs(0.1)
    assert wyner_ziv_rmin(p, DistortionSpec.hamming(2, 0.0)).rate == pytest.approx(lossless_bound(p), abs=1e-3)


def test_large_distortion_needs_no_rate():
    # the decoder can guess from Y alone with distortion 0.1
    assert wyner_ziv_rmin(dsbs(0.1), DistortionSpec.hamming(2, 0.1)).rate == pytest.approx(0.0, abs=1e-9)
    assert wyner_ziv_rmin(dsbs(0.1), DistortionSpec.hamming(2, 0.3)).rate == 0.0


def test_infeasible_distortion():
    d = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InfeasibleError):
        wyner_ziv_rmin(dsbs(0.1), DistortionSpec(d, 0.5))


def test_solution_is_consistent():
    p = dsbs(0.2)
    sol = wyner_ziv_rmin(p, DistortionSpec.hamming(2, 0.05))
    W = sol.test_channel.matrix
    assert conditional_rate(W, p.mass) == pytest.approx(sol.rate, abs=1e-9)
    # recompute distortion from (W, g)
    g = sol.reconstruction
    d = 1.0 - np.eye(2)
    dist = sum(p.mass[x, y] * W[x, s] * d[x, g[s, y]] for x in range(2) for y in range(2) for s in range(W.shape[1]))
    assert dist == pytest.approx(sol.achieved_distortion, abs=1e-9)


def test_grid_oracle_upper_bounds_solver():
    p = dsbs(0.1)
    for D in (0.02, 0.05):
        spec = DistortionSpec.hamming(2, D)
        r = wyner_ziv_rmin(p, spec).rate
        o = wyner_ziv_grid_oracle(p, spec, grid_steps=60)
        assert r <= o + 1e-6
        assert o - r < 0.02


def test_ternary_source_monotone_in_D():
    p = JointPmf([[0.25, 0.05, 0.03], [0.04, 0.22, 0.05], [0.03, 0.05, 0.28]])
    rates = [wyner_ziv_rmin(p, DistortionSpec.hamming(3, D), s_card=3).rate for D in (0.0, 0.06, 0.12, 0.35)]
    assert all(b <= a + 1e-6 for a, b in zip(rates, rates[1:]))
    assert rates[0] == pytest.approx(lossless_bound(p), abs=2e-3)
    assert rates[-1] == 0.0  # Y alone already meets D


def test_distortion_spec_validation():
    with pytest.raises(ValueError):
        DistortionSpec([[0, -1], [1, 0]], 0.1)
    with pytest.raises(ValueError):
        DistortionSpec.hamming(2, -0.1)


def test_estimator():
    est = WynerZivEstimator(D=0.05).fit(dsbs(0.1))
    assert est.solution_.rate == pytest.approx(dsbs_hamming_rate(0.1, 0.05), abs=1e-3)
    r = est.predict([0.0, 0.1])
    assert r[0] == pytest.approx(lossless_bound(dsbs(0.1)), abs=1e-3)
    assert r[1] == pytest.approx(0.0, abs=1e-9)
