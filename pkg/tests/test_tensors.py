from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igeo.divergences import DivergenceSpec
from igeo.errors import InvalidOrder, NotPositiveDefinite
from igeo.geometry import MetricTensor
from igeo.models import builtin
from igeo.tensors import (
    GeometryLabel,
    amari_chentsov,
    analytic_snapshot,
    christoffel_from_metric,
    connection,
    e_connection,
    fisher,
    label_metric,
    labels_for,
    raise_index,
    second_kind,
    sqrt_rho_chart_check,
)
from igeo.verify import GRIDS

P = 0.3
GAMMA_E = -1 / P**2 + 1 / (1 - P) ** 2
C_P = 1 / P**2 - 1 / (1 - P) ** 2


class TestFisher:
    def test_bernoulli_mean(self):
        np.testing.assert_allclose(fisher(builtin("bernoulli-mean"), [P]).g, [[4.761904761904762]], rtol=1e-12)

    def test_gaussian_loc(self):
        np.testing.assert_allclose(fisher(builtin("gaussian-loc", sigma=2.0), [0.7]).g, [[0.25]], rtol=1e-10)

    def test_categorical_uniform(self):
        g = fisher(builtin("categorical-3"), [1 / 3, 1 / 3]).g
        np.testing.assert_allclose(g, np.diag([3.0, 3.0]) + 3.0, rtol=1e-12)
        assert np.linalg.det(g) > 0

    def test_gaussian_loc_scale(self):
        s = 0.7
        np.testing.assert_allclose(fisher(builtin("gaussian-loc-scale"), [0.5, s]).g, np.diag([1 / s**2, 2 / s**2]), rtol=1e-10, atol=1e-12)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            MetricTensor(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))


class TestConnectionTensors:
    def test_e_connection_natural_is_flat(self):
        for theta in (-2.0, 0.0, 1.3):
            assert abs(e_connection(builtin("bernoulli-natural"), [theta]).gamma[0, 0, 0]) <= 1e-8

    def test_e_connection_mean(self):
        np.testing.assert_allclose(e_connection(builtin("bernoulli-mean"), [P]).gamma[0, 0, 0], GAMMA_E, rtol=1e-12)
        np.testing.assert_allclose(GAMMA_E, -9.070294, atol=1e-6)

    def test_gaussian_odd_moments(self):
        fam = builtin("gaussian-loc")
        assert abs(e_connection(fam, [0.4]).gamma[0, 0, 0]) <= 1e-12
        assert abs(amari_chentsov(fam, [0.4])[0, 0, 0]) <= 1e-12

    def test_amari_chentsov(self):
        fam = builtin("bernoulli-mean")
        np.testing.assert_allclose(amari_chentsov(fam, [P])[0, 0, 0], C_P, rtol=1e-12)
        assert abs(amari_chentsov(fam, [0.5])[0, 0, 0]) <= 1e-12

    def test_rho_one_is_m(self):
        fam = builtin("bernoulli-mean")
        for p in (0.2, 0.5, 0.8):
            assert abs(connection(GeometryLabel("rho", 1.0), fam, [p]).gamma[0, 0, 0]) <= 1e-8

    @pytest.mark.parametrize("name", tuple(GRIDS))
    def test_c_totally_symmetric(self, name):
        c = amari_chentsov(builtin(name), GRIDS[name][1])
        for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
            np.testing.assert_allclose(c, c.transpose(perm), atol=1e-12)


class TestSecondKind:
    def test_rho_raising(self):
        fam = builtin("bernoulli-mean")
        g2 = second_kind(GeometryLabel("rho", 0.4), fam, [P]).gamma
        np.testing.assert_allclose(g2[0, 0, 0], P * (1 - P) * (GAMMA_E + 0.4 * C_P), rtol=1e-12)
        np.testing.assert_allclose(g2[0, 0, 0], -1.142857142857, rtol=1e-8)

    @pytest.mark.parametrize("rho", [0.25, 0.7, 2.0])
    def test_rho_second_kind_forms(self, rho):
        fam = builtin("gaussian-loc-scale")
        theta = [0.5, 0.7]
        ge, c, F = e_connection(fam, theta).gamma, amari_chentsov(fam, theta), fisher(fam, theta).g
        np.testing.assert_allclose(second_kind(GeometryLabel("rho", rho), fam, theta).gamma, raise_index(ge + rho * c, F), atol=1e-10)
        np.testing.assert_allclose(second_kind(GeometryLabel("rho-dual", rho), fam, theta).gamma, raise_index(ge + (1 - rho) * c, F), atol=1e-10)

    def test_lc_matches_metric_christoffel(self):
        fam = builtin("gaussian-loc-scale")
        theta = [0.3, 0.8]
        lc = connection(GeometryLabel("lc"), fam, theta).gamma
        np.testing.assert_allclose(lc, christoffel_from_metric(GeometryLabel("lc"), fam, theta), atol=1e-5)

    @pytest.mark.parametrize("name", tuple(GRIDS))
    def test_rho_pair_average_is_lc(self, name):
        fam = builtin(name)
        theta = GRIDS[name][2]
        avg = 0.5 * (second_kind(GeometryLabel("rho", 0.3), fam, theta).gamma + second_kind(GeometryLabel("rho-dual", 0.3), fam, theta).gamma)
        lc = christoffel_from_metric(GeometryLabel("rho", 0.3), fam, theta)
        np.testing.assert_allclose(avg, raise_index(lc, label_metric(GeometryLabel("rho", 0.3), fam, theta).g), atol=1e-5)

    def test_alpha_zero_is_lc(self):
        fam = builtin("categorical-3")
        theta = [0.2, 0.3]
        np.testing.assert_allclose(connection(GeometryLabel("alpha", 0.0), fam, theta).gamma, connection(GeometryLabel("lc"), fam, theta).gamma, atol=1e-14)


class TestLabels:
    def test_labels_for(self):
        assert labels_for(DivergenceSpec.kl()) == (GeometryLabel("m"), GeometryLabel("e"))
        assert labels_for(DivergenceSpec.renyi(0.3)) == (GeometryLabel("rho", 0.3), GeometryLabel("rho-dual", 0.3))
        assert labels_for(DivergenceSpec.bhattacharyya())[0] == GeometryLabel("bhattacharyya")

    @pytest.mark.parametrize("tag,param", [("rho", 0.0), ("rho", -1.0), ("alpha", None), ("e", 0.5), ("sigma", None)])
    def test_invalid(self, tag, param):
        with pytest.raises(InvalidOrder):
            GeometryLabel(tag, param)

    def test_dual_involution(self):
        for label in (GeometryLabel("e"), GeometryLabel("alpha", 0.3), GeometryLabel("rho-dual", 2.0), GeometryLabel("bhattacharyya")):
            assert label.dual.dual == label

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 5.0), st.floats(0.05, 0.95))
    def test_compatibility_holds_analytically(self, rho, p):
        snap = analytic_snapshot(GeometryLabel("rho", rho), builtin("bernoulli-mean"), [p])
        scale = max(1.0, float(np.max(np.abs(snap.gamma.gamma))), float(np.max(np.abs(snap.gamma_dual.gamma))))
        assert snap.diagnostics["compatibility_residual"] <= 1e-5 * scale


class TestSqrtRhoChart:
    def test_half_is_self_dual(self):
        rep = sqrt_rho_chart_check(builtin("bernoulli-mean"), [P], 0.5)
        assert rep.metric_residual <= 1e-6
        assert rep.self_duality_residual <= 1e-6
        assert rep.lc_residual <= 1e-6

    def test_quarter_mismatch(self):
        rep = sqrt_rho_chart_check(builtin("bernoulli-mean"), [P], 0.25)
        assert rep.alpha_mismatch > 1e-3
        assert rep.alpha_form_residual > 1e-3
        assert rep.scaling_residual <= 1e-8
        assert rep.direct_form_residual <= 1e-8

    def test_rho_one_is_identity(self):
        rep = sqrt_rho_chart_check(builtin("gaussian-loc"), [0.4], 1.0)
        assert rep.metric_residual <= 1e-12
