"""Infinite-width baseline: fixed points, chi crossing, quadrature stability."""

import math

import numpy as np
import pytest

from edgescout.meanfield import (
    chi_multiplier,
    correlation_depth,
    critical_sigma_w,
    export_meanfield_csv,
    gauss_expectation,
    meanfield_point,
    variance_fixed_point,
    variance_map,
)


class TestQuadrature:
    def test_known_gaussian_moments(self):
        assert gauss_expectation(lambda u: u**2, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert gauss_expectation(lambda u: u**2, 2.5) == pytest.approx(2.5, abs=1e-12)
        assert gauss_expectation(lambda u: u**4, 1.0) == pytest.approx(3.0, abs=1e-10)
        assert gauss_expectation(lambda u: np.ones_like(u), 7.0) == pytest.approx(1.0)


class TestFixedPoint:
    def test_zero_weight_variance(self):
        assert variance_fixed_point(0.0, 0.05) == pytest.approx(0.05, abs=1e-12)
        assert variance_fixed_point(0.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_residual_below_1e9_everywhere(self):
        for w2 in np.arange(0.1, 4.01, 0.3):
            q = variance_fixed_point(w2, 0.05)
            assert abs(q - variance_map(q, w2, 0.05)) < 1e-9

    def test_quadrature_doubling_stable(self):
        # doubling the default order must leave q* and chi below 1e-8;
        # tanh moments at large variance need a few hundred nodes for that
        from edgescout.meanfield import QUADRATURE_ORDER

        n = QUADRATURE_ORDER
        for w2 in (0.2, 1.0, 1.76, 3.5):
            q1 = variance_fixed_point(w2, 0.05, order=n)
            q2 = variance_fixed_point(w2, 0.05, order=2 * n)
            assert abs(q1 - q2) < 1e-8
            c1 = chi_multiplier(w2, q1, order=n)
            c2 = chi_multiplier(w2, q2, order=2 * n)
            assert abs(c1 - c2) < 1e-8

    def test_nodes_match_reference_implementation(self):
        from edgescout.meanfield import _gh_nodes

        ours_x, ours_w = _gh_nodes(64)
        ref_x, ref_w = np.polynomial.hermite.hermgauss(64)
        assert np.allclose(ours_x, ref_x * np.sqrt(2.0), atol=1e-12)
        assert np.allclose(ours_w, ref_w / np.sqrt(np.pi), atol=1e-14)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            variance_fixed_point(-1.0, 0.05)


class TestCriticality:
    def test_chi_equals_one_near_published_point(self):
        crit = critical_sigma_w(0.05)
        assert crit == pytest.approx(1.76, abs=0.05)

    def test_chi_is_one_at_crossing(self):
        crit = critical_sigma_w(0.05)
        q = variance_fixed_point(crit, 0.05)
        assert chi_multiplier(crit, q) == pytest.approx(1.0, abs=0.02)

    def test_chi_monotone_in_weight_variance(self):
        chis = []
        for w2 in np.arange(0.1, 4.01, 0.1):
            chis.append(chi_multiplier(w2, variance_fixed_point(w2, 0.05)))
        assert all(b > a for a, b in zip(chis, chis[1:]))


class TestCorrelationDepth:
    def test_deep_ordered_is_short(self):
        assert correlation_depth(0.1, 0.05) <= 5.0

    def test_infinite_at_criticality(self):
        crit = critical_sigma_w(0.05, tol=1e-9)
        assert math.isinf(correlation_depth(crit, 0.05))

    def test_positive_on_both_sides(self):
        assert correlation_depth(0.5, 0.05) > 0
        assert correlation_depth(3.5, 0.05) > 0

    def test_point_bundle(self):
        pt = meanfield_point(0.5, 0.05)
        assert pt.q_star == pytest.approx(variance_fixed_point(0.5, 0.05))
        assert pt.xi_c == pytest.approx(correlation_depth(0.5, 0.05))


class TestExport:
    def test_csv_schema_and_values(self, tmp_path):
        points = [meanfield_point(w2, 0.05) for w2 in (0.5, 1.0)]
        path = tmp_path / "mf.csv"
        export_meanfield_csv(points, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == (
            "sigma_w_sq,sigma_b_sq,seed,layer,xi_c,cutoff,accuracy,wall_time_s"
        )
        first = lines[1].split(",")
        assert float(first[0]) == 0.5
        assert float(first[4]) == pytest.approx(points[0].xi_c)

    def test_scale_flag(self, tmp_path):
        points = [meanfield_point(0.5, 0.05)]
        path = tmp_path / "mf.csv"
        export_meanfield_csv(points, path, scale=6.0)
        value = float(path.read_text().strip().splitlines()[1].split(",")[4])
        assert value == pytest.approx(points[0].xi_c * 6.0)
