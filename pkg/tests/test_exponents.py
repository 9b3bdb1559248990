import numpy as np
import pytest
from scipy.optimize import brentq

from khop.exponents import (
    EtaCurveEstimator,
    ExponentRegion,
    curves_csv,
    eta,
    eta_curve,
    eta_oracle,
    exponent_region,
    lagrangian_sweep,
    lossless_bound,
    region_csv,
    region_from_pmf,
)
from khop.exponents.eta import channel_informations, ib_iterate
from khop.probcore import JointPmf, mutual_information
from khop.sources import binary_convolution, binary_entropy, dsbs, dsbs_chain


def eta_dsbs(p, R):
    """Closed form for the DSBS: 1 - h(p * h^{-1}(1 - R))."""
    if R >= 1:
        return 1 - float(binary_entropy(p))
    if R <= 0:
        return 0.0
    q = brentq(lambda t: float(binary_entropy(t)) - (1 - R), 0.0, 0.5)
    return 1 - float(binary_entropy(binary_convolution(p, q)))


@pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
@pytest.mark.parametrize("R", [0.1, 0.5, 0.9])
def test_eta_matches_closed_form(p, R):
    sol = eta(dsbs(p), R)
    assert sol.value == pytest.approx(eta_dsbs(p, R), abs=1e-4)
    assert sol.rate <= R + 1e-6
    i0, i1 = channel_informations(sol.channel.matrix, dsbs(p).mass)
    assert i1 == pytest.approx(sol.value, abs=1e-9)


def test_eta_dsbs_half_rate_anchor():
    assert eta(dsbs(0.1), 0.5).value == pytest.approx(0.30268, abs=1e-4)


def test_eta_trivial_ends():
    p = dsbs(0.1)
    assert eta(p, 0.0).value == 0.0
    assert eta(p, 1.0).value == pytest.approx(mutual_information(p, 0, 1), abs=1e-12)
    assert eta(p, 5.0).value == pytest.approx(mutual_information(p, 0, 1), abs=1e-12)


def test_eta_independent_pair_is_zero():
    p = JointPmf(np.outer([0.3, 0.7], [0.4, 0.6]))
    assert eta(p, 0.5).value == pytest.approx(0.0, abs=1e-9)


def test_eta_nonbinary_bounds():
    p = JointPmf([[0.3, 0.05, 0.0], [0.05, 0.2, 0.05], [0.0, 0.05, 0.3]])
    for R in (0.2, 0.8):
        v = eta(p, R).value
        assert 0 <= v <= min(R, mutual_information(p, 0, 1)) + 1e-9
        assert v >= eta_oracle(p, R, grid_steps=12, aux_card=3) - 1e-6


def test_aux_card_bound():
    with pytest.raises(ValueError, match="cardinality"):
        eta(dsbs(0.1), 0.5, aux_card=7)
    assert eta(dsbs(0.1), 0.5, aux_card=6).value == pytest.approx(0.30268, abs=1e-3)


def test_oracle_is_lower_and_refines():
    p = dsbs(0.1)
    coarse, fine = eta_oracle(p, [0.3, 0.5], grid_steps=20), eta_oracle(p, [0.3, 0.5], grid_steps=40)
    exact = [eta_dsbs(0.1, 0.3), eta_dsbs(0.1, 0.5)]
    assert np.all(coarse <= fine + 1e-12)
    assert np.all(fine <= np.array(exact) + 1e-9)


def test_oracle_size_limit():
    with pytest.raises(ValueError):
        eta_oracle(JointPmf(np.full((4, 2), 1 / 8)), 0.5, grid_steps=10)


def test_ib_iterate_fixed_point_improves():
    P = dsbs(0.1).mass
    rng = np.random.default_rng(0)
    Q0 = rng.dirichlet(np.ones(3), size=(4, 2))
    lam = 0.6
    a0, a1 = channel_informations(Q0, P)
    Q, i0, i1 = ib_iterate(P, lam, Q0)
    assert np.all(i1 - lam * i0 >= a1 - lam * a0 - 1e-9)
    np.testing.assert_allclose(Q.sum(axis=-1), 1.0)


class TestCurves:
    def test_lagrangian_sweep_invariants(self):
        c = lagrangian_sweep(dsbs(0.1))
        c.check()
        for R in (0.2, 0.5, 0.8):
            # interpolated hull stays below the true concave curve
            assert c(R) <= eta_dsbs(0.1, R) + 1e-6
            assert c(R) >= eta_dsbs(0.1, R) - 0.01

    def test_sweep_argument_checks(self):
        with pytest.raises(ValueError):
            lagrangian_sweep(dsbs(0.1), [])
        with pytest.raises(ValueError):
            lagrangian_sweep(dsbs(0.1), [0.2, 0.5])

    def test_eta_curve_and_channel_lookup(self):
        c = eta_curve(dsbs(0.1), [0.25, 0.5])
        c.check()
        assert list(c.rate_grid) == [0.0, 0.25, 0.5]
        assert c.channel_at(0.3) is c.channels[1]
        with pytest.raises(ValueError):
            c(0.9)

    def test_estimator(self):
        est = EtaCurveEstimator(lambdas=np.linspace(1, 0, 11)).fit(dsbs(0.2))
        v = est.predict([0.0, 0.5])
        assert v[0] == pytest.approx(0.0)
        assert 0 < v[1] <= eta_dsbs(0.2, 0.5) + 1e-6
        assert est.get_params()["n_restarts"] == 16


class TestRegion:
    def test_region_dsbs_chain(self):
        region, curves = region_from_pmf(dsbs_chain([0.1, 0.1]), (0.5, 0.5))
        assert region.K == 2
        assert region.bounds[0] == pytest.approx(0.30268, abs=1e-4)
        assert region.bounds[1] == pytest.approx(2 * 0.30268, abs=2e-4)
        assert region.contains([0.3, 0.6])
        assert not region.contains([0.31, 0.6])

    def test_region_needs_matching_rates(self):
        with pytest.raises(ValueError):
            region_from_pmf(dsbs_chain([0.1, 0.1]), (0.5,))

    def test_zero_rate_hops(self):
        region, _ = region_from_pmf(dsbs_chain([0.1, 0.2]), (0.0, 0.4))
        assert region.bounds[0] == 0.0
        assert region.bounds[1] == pytest.approx(eta_dsbs(0.2, 0.4), abs=1e-4)

    def test_csv(self):
        region = ExponentRegion(2, (0.5, 0.5), (0.3, 0.3), (0.3, 0.6))
        assert region_csv(region).splitlines() == ["k,rate,eta,theta_max", "1,0.5,0.3,0.3", "2,0.5,0.3,0.6"]
        text = curves_csv([eta_curve(dsbs(0.1), [0.5])])
        assert text.splitlines()[0] == "R,eta,hop"
        assert len(text.splitlines()) == 3

    def test_exponent_region_duck_typing(self):
        class S:
            rates = (0.5,)

        c = eta_curve(dsbs(0.1), [0.5])
        assert exponent_region(S(), [c]).etas[0] == pytest.approx(0.30268, abs=1e-4)

    def test_lossless_bound(self):
        assert lossless_bound(dsbs(0.1)) == pytest.approx(0.4690, abs=1e-4)
