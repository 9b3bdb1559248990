import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from khop.exceptions import AxisError, EnumerationCapError, InvalidPmfError
from khop.probcore import (
    Alphabet,
    ConditionalPmf,
    Enumeration,
    JointPmf,
    conditional_entropy,
    conditional_mutual_information,
    default_mu,
    entropy,
    iid_extend,
    is_strongly_typical,
    kl_divergence,
    mutual_information,
    product_of_marginals,
    typicality_slack,
)
from khop.sources import binary_entropy, dsbs, dsbs_chain


def pmfs(shape):
    size = int(np.prod(shape))
    return st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 1.0)), min_size=size, max_size=size).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: JointPmf(np.array(v).reshape(shape) / sum(v), atol=1e-9))


class TestJointPmf:
    def test_validation(self):
        with pytest.raises(InvalidPmfError):
            JointPmf([0.5, 0.6])
        with pytest.raises(InvalidPmfError):
            JointPmf([1.2, -0.2])
        with pytest.raises(InvalidPmfError):
            JointPmf([[0.5, 0.5]], [Alphabet((0, 1))])
        with pytest.raises(InvalidPmfError):
            Alphabet((0, 0))

    def test_no_silent_renormalisation(self):
        with pytest.raises(InvalidPmfError):
            JointPmf([0.5, 0.5 + 1e-6])

    def test_from_probs_and_names(self):
        p = JointPmf.from_probs([["a", "b"], [0, 1, 2]], [0.1, 0.2, 0.1, 0.2, 0.3, 0.1], names=["X", "Y"])
        assert p.shape == (2, 3)
        assert p.axis_index("Y") == 1
        np.testing.assert_allclose(p.marginal("X").mass, [0.4, 0.6])
        with pytest.raises(AxisError):
            p.marginal("Z")
        with pytest.raises(AxisError):
            p.marginal([0, 0])

    def test_marginal_order_is_sorted(self):
        p = dsbs_chain([0.1, 0.2])
        assert p.marginal([2, 0]).names == ["Y0", "Y2"]


class TestInformation:
    def test_dsbs_closed_forms(self):
        p = dsbs(0.1)
        h = float(binary_entropy(0.1))
        assert entropy(p) == pytest.approx(1 + h, abs=1e-12)
        assert conditional_entropy(p, 0, 1) == pytest.approx(h, abs=1e-12)
        assert mutual_information(p, 0, 1) == pytest.approx(1 - h, abs=1e-12)

    def test_point_mass_and_uniform(self):
        assert entropy(JointPmf([1.0, 0.0, 0.0])) == 0.0
        assert entropy(JointPmf(np.full(8, 1 / 8))) == pytest.approx(3.0)

    def test_markov_chain_cmi_zero(self):
        p = dsbs_chain([0.1, 0.3])
        assert conditional_mutual_information(p, [0], [2], [1]) == pytest.approx(0.0, abs=1e-12)
        assert conditional_mutual_information(p, [0], [2]) > 0

    def test_disjoint_axes_required(self):
        with pytest.raises(AxisError):
            mutual_information(dsbs(0.1), 0, 0)

    def test_kl(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf

    @settings(max_examples=50, deadline=None)
    @given(pmfs((2, 3, 2)))
    def test_chain_rule_and_nonnegativity(self, p):
        i_full = mutual_information(p, [0], [1, 2])
        i_chain = mutual_information(p, [0], [1]) + conditional_mutual_information(p, [0], [2], [1])
        assert i_full == pytest.approx(i_chain, abs=1e-9)
        assert i_full >= 0
        assert entropy(p) <= math.log2(12) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(pmfs((3, 2)))
    def test_kl_to_product_is_mutual_information(self, p):
        assert kl_divergence(p, product_of_marginals(p)) == pytest.approx(mutual_information(p, 0, 1), abs=1e-9)


class TestConditionalPmf:
    def test_joint(self):
        ch = ConditionalPmf([[0.9, 0.1], [0.2, 0.8]])
        j = ch.joint(JointPmf([0.5, 0.5]))
        np.testing.assert_allclose(j.mass, [[0.45, 0.05], [0.1, 0.4]])

    def test_rows_must_sum_to_one(self):
        with pytest.raises(InvalidPmfError):
            ConditionalPmf([[0.9, 0.2], [0.5, 0.5]])


class TestTypicality:
    def test_slack(self):
        p = dsbs(0.25)
        x = [0, 0, 1, 1]
        y = [0, 1, 1, 0]
        # joint frequencies (1/4 each) vs (3/8, 1/8, 1/8, 3/8)
        assert typicality_slack([x, y], p) == pytest.approx(0.125)
        assert is_strongly_typical([x, y], p, 0.125)
        assert not is_strongly_typical([x, y], p, 0.1)

    def test_support_violation(self):
        p = JointPmf([[0.5, 0.0], [0.0, 0.5]])
        assert typicality_slack([[0, 1], [1, 1]], p) == math.inf
        assert not is_strongly_typical([[0, 1], [1, 1]], p, 10.0)

    def test_labels(self):
        p = JointPmf.from_probs([["a", "b"]], [0.5, 0.5])
        assert is_strongly_typical([["a", "b"]], p, 1e-9)

    def test_example_membership_is_inclusive(self):
        # n=10 with type (0.5, 0.5) against Bernoulli(0.45): deviation 0.05 <= mu
        p = JointPmf([0.55, 0.45])
        assert is_strongly_typical([[0] * 5 + [1] * 5], p, 0.05)
        assert not is_strongly_typical([[0] * 7 + [1] * 3], p, 0.05)

    def test_default_mu(self):
        assert default_mu(8) == pytest.approx(0.5)


class TestEnumeration:
    def test_weights_sum_and_components(self):
        p = dsbs(0.2)
        e = Enumeration(p, 3)
        assert e.size == 64
        assert e.weights.sum() == pytest.approx(1.0)
        # code of (x, y) = ((0,1,1), (1,1,0)): digits x_t*2 + y_t = 1, 3, 2
        code = (1 * 4 + 3) * 4 + 2
        assert e.component(0)[code] == 0b011
        assert e.component(1)[code] == 0b110
        assert e.weights[code] == pytest.approx(0.1 * 0.4 * 0.1)

    def test_counts_and_slack_match_pointwise(self, rng):
        p = dsbs_chain([0.2, 0.3])
        e = Enumeration(p, 4)
        slack = e.slack()
        for code in rng.integers(0, e.size, size=20):
            seqs = []
            for j in range(3):
                s = int(e.component(j)[code])
                seqs.append([(s >> (3 - t)) & 1 for t in range(4)])
            assert slack[code] == pytest.approx(typicality_slack(seqs, p))
        assert np.all(e.counts().sum(axis=0) == 4)

    def test_position_marginals_of_iid_are_p(self):
        p = dsbs(0.3)
        e = Enumeration(p, 4)
        pm = e.position_marginals(e.weights)
        np.testing.assert_allclose(pm, np.tile(p.flat(), (4, 1)), atol=1e-12)

    def test_iid_extension(self):
        p = dsbs(0.1)
        ext = iid_extend(p, 2)
        assert ext.prob([[0, 1], [0, 0]]) == pytest.approx(0.45 * 0.05)
        assert ext.weights().sum() == pytest.approx(1.0)
        typ = iid_extend(p, 2, restriction=lambda e: e.typical_mask(0.3))
        assert typ.weights().sum() < 1.0

    def test_cap(self):
        with pytest.raises(EnumerationCapError, match="cap"):
            iid_extend(dsbs(0.1), 20, cap=2**20).enumerate()
