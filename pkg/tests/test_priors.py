from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igeo.errors import NonClosedField, PathExitsDomain, StructureMismatch
from igeo.models import FlatStructure, builtin
from igeo.priors import (
    CovolumeField,
    HartiganLabel,
    closed_form_covolume,
    conformal_log_prefactor,
    covolume_exponent,
    duality_and_reparam_report,
    hartigan_log_derivative,
    log_derivative_from_connection,
    log_det_fisher,
    parallelity_residual,
    reconstruct_log_prior,
)
from igeo.tensors import GeometryLabel
from igeo.verify import GRIDS

EXP, MIX = FlatStructure.EXPONENTIAL, FlatStructure.MIXTURE
LC = GeometryLabel("lc")


def rho(x):
    return GeometryLabel("rho", x)


def rho_dual(x):
    return GeometryLabel("rho-dual", x)


class TestExponents:
    @pytest.mark.parametrize(
        "label,e_exp",
        [
            (rho(0.3), 0.3),
            (rho_dual(0.3), 0.7),
            (GeometryLabel("alpha", 0.4), 0.3),
            (GeometryLabel("alpha-dual", 0.4), 0.7),
            (LC, 0.5),
            (GeometryLabel("bhattacharyya"), 0.5),
            (GeometryLabel("m"), 1.0),
            (GeometryLabel("e"), 0.0),
        ],
    )
    def test_exponent_table(self, label, e_exp):
        assert covolume_exponent(label, EXP) == pytest.approx(e_exp, abs=1e-15)
        assert covolume_exponent(label, MIX) == pytest.approx(1 - e_exp, abs=1e-15)

    def test_generic_structure(self):
        with pytest.raises(StructureMismatch):
            covolume_exponent(LC, FlatStructure.NONE)

    def test_conformal_prefactor(self):
        assert conformal_log_prefactor(rho(0.25), 2) == pytest.approx(math.log(0.25))
        assert conformal_log_prefactor(LC, 3) == 0.0


class TestClosedForm:
    def test_jeffreys_bernoulli_mean(self):
        value = closed_form_covolume(LC, MIX, builtin("bernoulli-mean"), [0.3], [0.5])
        np.testing.assert_allclose(value, 0.5 * math.log(1 / 0.21) - 0.5 * math.log(4.0), rtol=1e-12)
        np.testing.assert_allclose(value, 0.0871767, atol=1e-7)

    def test_rho_half_is_jeffreys(self):
        fam = builtin("bernoulli-natural")
        for t in GRIDS["bernoulli-natural"]:
            assert closed_form_covolume(rho(0.5), EXP, fam, t) == pytest.approx(closed_form_covolume(LC, EXP, fam, t), abs=1e-14)

    def test_rho_dual_one_uniform(self):
        fam = builtin("poisson-natural")
        for t in GRIDS["poisson-natural"]:
            assert closed_form_covolume(rho_dual(1.0), EXP, fam, t) == 0.0

    def test_structure_mismatch(self):
        with pytest.raises(StructureMismatch):
            closed_form_covolume(LC, EXP, builtin("bernoulli-mean"), [0.3])
        with pytest.raises(StructureMismatch):
            closed_form_covolume(LC, FlatStructure.NONE, builtin("gaussian-loc-scale"), [0.0, 1.0])


class TestLogDerivative:
    def test_rho_bernoulli_mean(self):
        value = log_derivative_from_connection(rho(0.4), builtin("bernoulli-mean"), [0.3])
        np.testing.assert_allclose(value, [0.21 * (-0.6) * (1 / 0.09 - 1 / 0.49)], rtol=1e-12)
        np.testing.assert_allclose(value, [-1.142857], atol=1e-6)

    @pytest.mark.parametrize("name", tuple(GRIDS))
    def test_lc_is_jacobi(self, name):
        fam = builtin(name)
        t = np.array(GRIDS[name][1])
        h = 1e-5
        fd = [(log_det_fisher(fam, t + h * e) - log_det_fisher(fam, t - h * e)) / (4 * h) for e in np.eye(fam.dim)]
        np.testing.assert_allclose(log_derivative_from_connection(LC, fam, t), fd, atol=1e-5)

    def test_rho_one_on_mixture_chart(self):
        fam = builtin("bernoulli-mean")
        for t in GRIDS["bernoulli-mean"]:
            assert abs(log_derivative_from_connection(rho(1.0), fam, t)[0]) <= 1e-8


class TestHartigan:
    def test_alpha_one_vanishes_on_mean_chart(self):
        fam = builtin("bernoulli-mean")
        for p in (0.1, 0.3, 0.5, 0.77):
            assert abs(hartigan_log_derivative(fam, 1.0, [p])[0]) <= 1e-8

    def test_hand_formula(self):
        fam = builtin("bernoulli-mean")
        for a in (-0.5, 0.0, 2.0):
            p = 0.3
            np.testing.assert_allclose(hartigan_log_derivative(fam, a, [p]), [p * (1 - p) * (a - 1) * (1 / p**2 - 1 / (1 - p) ** 2)], rtol=1e-12)

    def test_alpha_zero_gaussian(self):
        assert abs(hartigan_log_derivative(builtin("gaussian-loc"), 0.0, [0.6])[0]) <= 1e-12

    @pytest.mark.parametrize("name", tuple(GRIDS))
    def test_equals_rho_contraction(self, name):
        fam = builtin(name)
        for t in GRIDS[name]:
            for r in (0.25, 0.5, 0.9):
                np.testing.assert_allclose(hartigan_log_derivative(fam, r, t), log_derivative_from_connection(rho(r), fam, t), atol=1e-8)

    def test_label_tags(self):
        assert HartiganLabel(0.5).renyi_interpretable
        assert HartiganLabel(-1.0).tag == "outside Renyi interpretation"
        assert not HartiganLabel(1.0).renyi_interpretable


class TestReconstruction:
    def test_rho_bernoulli_natural(self):
        fam = builtin("bernoulli-natural")
        field = lambda t: log_derivative_from_connection(rho(0.7), fam, t)
        value = reconstruct_log_prior(field, fam, [1.4], [-0.5])
        expected = 0.7 * (log_det_fisher(fam, [1.4]) - log_det_fisher(fam, [-0.5]))
        assert abs(value - expected) <= 1e-6

    def test_refinement_stable(self):
        fam = builtin("poisson-natural")
        field = lambda t: log_derivative_from_connection(rho_dual(0.3), fam, t)
        a = reconstruct_log_prior(field, fam, [1.2], [-0.8], path_steps=256)
        b = reconstruct_log_prior(field, fam, [1.2], [-0.8], path_steps=512)
        assert abs(a - b) < 1e-8

    def test_zero_field(self):
        fam = builtin("gaussian-loc-scale")
        assert reconstruct_log_prior(lambda t: np.zeros(2), fam, [1.0, 2.0], [0.0, 1.0]) == 0.0

    def test_hartigan_half_is_jeffreys(self):
        fam = builtin("bernoulli-mean")
        cov = CovolumeField.of(HartiganLabel(0.5), fam, [0.5])
        assert abs(cov.log_value([0.2]) - closed_form_covolume(LC, MIX, fam, [0.2], [0.5])) <= 1e-6

    def test_path_exits_domain(self):
        fam = builtin("categorical-3")
        with pytest.raises(PathExitsDomain):
            reconstruct_log_prior(lambda t: np.zeros(2), fam, [0.1, 0.1], [0.95, 0.1])

    def test_non_closed(self):
        fam = builtin("gaussian-loc-scale")
        with pytest.raises(NonClosedField):
            reconstruct_log_prior(lambda t: np.array([t[1], -t[0]]), fam, [1.0, 2.0], [0.0, 1.0])

    @pytest.mark.parametrize("r", [0.3, 0.7, 2.0])
    def test_generic_family(self, r):
        # N(mu, sigma): the Fisher-raised C contraction is 6/sigma and the
        # rho = 1/2 (Levi-Civita) contraction is -2/sigma, so the Rho field is
        # (6 rho - 5)/sigma along sigma and zero along mu.
        fam = builtin("gaussian-loc-scale")
        cov = CovolumeField.of(rho(r), fam)
        assert cov.family_structure is FlatStructure.NONE
        np.testing.assert_allclose(cov.log_derivative([0.2, 0.5]), [0.0, (6 * r - 5) / 0.5], atol=1e-10)
        assert abs(cov.log_value([0.5, 2.0]) - (6 * r - 5) * math.log(2.0)) <= 1e-6


class TestParallelity:
    @pytest.mark.parametrize("name", ["bernoulli-natural", "gaussian-loc", "poisson-natural"])
    @pytest.mark.parametrize("label", [rho(0.7), rho_dual(0.7), LC])
    def test_exponential_charts(self, name, label):
        fam = builtin(name)
        for t in GRIDS[name]:
            assert parallelity_residual(label, fam, t) <= 1e-5

    @pytest.mark.parametrize("label", [rho(0.3), rho_dual(0.3), GeometryLabel("alpha", 0.2)])
    def test_mixture_chart(self, label):
        fam = builtin("bernoulli-mean")
        for t in GRIDS["bernoulli-mean"]:
            assert parallelity_residual(label, fam, t) <= 1e-5


class TestDualityReport:
    @pytest.mark.parametrize("r,exp", [(0.5, 0.5), (1.0, 1.0), (0.25, 0.25)])
    def test_exponents(self, r, exp):
        rep = duality_and_reparam_report((builtin("bernoulli-natural"), builtin("bernoulli-mean")), r)
        assert rep["exponents"]["cov_e_rho"] == exp
        assert rep["exponents"]["cov_e_alpha"] == exp
        assert rep["alpha"] == 1 - 2 * r
        assert all(rep["symbolic"].get(k) for k in ("rho_equals_alpha", "rho_dual_equals_alpha_dual", "dual_e_equals_m", "e_equals_dual_m"))
        assert rep["chart_consistency"]["residual"] <= 1e-10

    def test_prefactor_separate(self):
        rep = duality_and_reparam_report((builtin("bernoulli-natural"), builtin("bernoulli-mean")), 0.3)
        assert rep["conformal_prefactor"]["value"] == pytest.approx(0.3**0.5)

    def test_wrong_pair(self):
        with pytest.raises(StructureMismatch):
            duality_and_reparam_report((builtin("bernoulli-mean"), builtin("bernoulli-natural")), 0.3)

    @settings(max_examples=30, deadline=None)
    @given(st.fractions(min_value=Fraction(1, 50), max_value=5, max_denominator=50))
    def test_map_exact_for_rationals(self, r):
        rep = duality_and_reparam_report((builtin("bernoulli-natural"), builtin("bernoulli-mean")), float(r), probes=[[0.1]])
        assert rep["symbolic"]["rho_equals_alpha"]
