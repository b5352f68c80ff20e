from __future__ import annotations

import numpy as np
import pytest

from igeo.divergences import DivergenceSpec
from igeo.eguchi import induced_connection, induced_dual_connection, induced_metric, snapshot, torsion_witness
from igeo.errors import StepTooLarge
from igeo.models import builtin
from igeo.tensors import GeometryLabel, amari_chentsov, e_connection, fisher

P = 0.3
F_P = 1 / (P * (1 - P))


def assert_metric_close(actual, desired, rel=1e-5):
    assert np.max(np.abs(actual - desired)) <= rel * np.max(np.abs(desired))


class TestMetric:
    def test_renyi_half_bernoulli(self):
        g = induced_metric(DivergenceSpec.renyi(0.5), builtin("bernoulli-mean"), [P]).g
        np.testing.assert_allclose(g, [[0.5 * F_P]], rtol=1e-5)

    def test_kl_gaussian(self):
        for mu in (-1.0, 0.0, 2.0):
            g = induced_metric(DivergenceSpec.kl(), builtin("gaussian-loc"), [mu]).g
            np.testing.assert_allclose(g, [[1.0]], atol=1e-6)

    @pytest.mark.parametrize("name,theta", [("bernoulli-natural", [0.4]), ("categorical-3", [0.2, 0.3]), ("gaussian-loc-scale", [0.5, 0.7])])
    def test_bhattacharyya_half_fisher(self, name, theta):
        fam = builtin(name)
        g = induced_metric(DivergenceSpec.bhattacharyya(), fam, theta).g
        assert_metric_close(g, 0.5 * fisher(fam, theta).g)

    def test_asymmetry_small(self):
        m = induced_metric(DivergenceSpec.alpha(0.3), builtin("categorical-3"), [0.25, 0.45])
        assert m.asymmetry <= 1e-6


class TestConnections:
    def test_kl_bernoulli_mean_m_flat(self):
        gamma = induced_connection(DivergenceSpec.kl(), builtin("bernoulli-mean"), [P]).gamma
        assert abs(gamma[0, 0, 0]) <= 2e-3

    def test_kl_bernoulli_natural_dual_e_flat(self):
        gamma = induced_dual_connection(DivergenceSpec.kl(), builtin("bernoulli-natural"), [0.7]).gamma
        assert abs(gamma[0, 0, 0]) <= 2e-3

    def test_kl_dual_is_e_connection(self):
        fam = builtin("bernoulli-mean")
        dual = induced_dual_connection(DivergenceSpec.kl(), fam, [P]).gamma
        np.testing.assert_allclose(dual, e_connection(fam, [P]).gamma, atol=2e-3)
        np.testing.assert_allclose(dual[0, 0, 0], -1 / P**2 + 1 / (1 - P) ** 2, atol=2e-3)

    def test_bhattacharyya_self_dual(self):
        fam = builtin("gaussian-loc-scale")
        spec = DivergenceSpec.bhattacharyya()
        a = induced_connection(spec, fam, [0.3, 0.8]).gamma
        b = induced_dual_connection(spec, fam, [0.3, 0.8]).gamma
        np.testing.assert_allclose(a, b, atol=2e-3)

    def test_alpha_zero_self_dual(self):
        fam = builtin("bernoulli-mean")
        spec = DivergenceSpec.alpha(0.0)
        np.testing.assert_allclose(induced_connection(spec, fam, [P]).gamma, induced_dual_connection(spec, fam, [P]).gamma, atol=2e-3)

    @pytest.mark.parametrize("rho", [0.25, 0.7, 2.0])
    def test_renyi_dual_minus_primal(self, rho):
        fam = builtin("bernoulli-mean")
        spec = DivergenceSpec.renyi(rho)
        diff = induced_dual_connection(spec, fam, [P]).gamma - induced_connection(spec, fam, [P]).gamma
        np.testing.assert_allclose(diff, rho * (1 - 2 * rho) * amari_chentsov(fam, [P]), atol=5e-3)

    def test_torsion_free(self):
        assert torsion_witness(DivergenceSpec.renyi(0.7), builtin("gaussian-loc-scale"), [0.5, 0.7]) <= 2e-3

    def test_renyi_limit_approaches_kl(self):
        fam = builtin("bernoulli-mean")
        theta = [0.35]
        m_conn = np.zeros((1, 1, 1))
        errors = [np.max(np.abs(induced_connection(DivergenceSpec.renyi(1 + e), fam, theta).gamma - m_conn)) for e in (0.1, 0.01)]
        assert errors[1] < errors[0]


class TestSnapshot:
    def test_compatibility_gaussian(self):
        snap = snapshot(DivergenceSpec.renyi(0.7), builtin("gaussian-loc"), [0.4])
        assert snap.diagnostics["compatibility_residual"] <= 5e-3
        assert snap.source.startswith("eguchi")

    def test_kl_bernoulli_fair(self):
        snap = snapshot(DivergenceSpec.kl(), builtin("bernoulli-mean"), [0.5])
        np.testing.assert_allclose(snap.metric.g, [[4.0]], rtol=1e-5)

    def test_deterministic(self):
        fam = builtin("poisson-natural")
        a = snapshot(DivergenceSpec.alpha(0.3), fam, [0.2]).to_dict()
        b = snapshot(DivergenceSpec.alpha(0.3), fam, [0.2]).to_dict()
        assert a == b

    def test_rejects_boundary_point(self):
        with pytest.raises(StepTooLarge):
            induced_metric(DivergenceSpec.kl(), builtin("bernoulli-mean"), [1e-5])

    def test_label_pair(self):
        assert GeometryLabel("rho", 0.7).dual == GeometryLabel("rho-dual", 0.7)
