"""Preprocessing tests: pooling, the six family mappings, analytic parameter
gradients vs finite differences, the short-range-fraction (PoS) machinery,
and the two theorem-style properties (fraction enlargement and short-range
magnification) on random valid parameters."""

import math

import zlib

import numpy as np
import pytest

from ipnav.gridworld import LidarFrame
from ipnav.lidar_prep import (
    PARAMETRIC_FAMILIES,
    IpFamily,
    IpParams,
    PooledScan,
    build_pos_report,
    check_conditions,
    family_map_fn,
    ip_forward,
    ip_param_grad,
    min_pool,
    pos_ratio,
)


def make_scan(values, y_min=0.2, y_max=30.0):
    values = np.asarray(values, dtype=float)
    return PooledScan(values, np.full_like(values, y_min), np.full_like(values, y_max), 1)


def random_case(rng):
    """Random bounds plus a threshold strictly between them."""
    y_min = rng.uniform(0.05, 1.0)
    y_max = y_min + rng.uniform(1.0, 40.0)
    y_t = y_min + rng.uniform(0.02, 0.98) * (y_max - y_min)
    return y_min, y_t, y_max


def random_params(rng, family, y_min, y_max, m=1):
    """Valid constrained parameters drawn directly, then inverted to raw."""
    from ipnav.lidar_prep import REPARAM_EPS, SOFTPLUS_SHIFT

    p = IpParams.create(family, np.full(m, y_min), np.full(m, y_max), shared=(m == 1))
    if family is IpFamily.IPAP_EXP:
        lam = rng.uniform(0.02, 0.98)
        s = (lam - REPARAM_EPS) / (1.0 - 2.0 * REPARAM_EPS)
        p.raw[:] = math.log(s / (1.0 - s))  # squash inverse
    else:
        gap = 10.0 ** rng.uniform(-3, 1)  # y_min - (eta or beta)
        sp = gap - REPARAM_EPS  # softplus inverse, minus the shift
        p.raw[:] = (math.log(math.expm1(sp)) if sp < 30 else sp) - SOFTPLUS_SHIFT
    return p


# ---------------------------------------------------------------------------


class TestMinPool:
    def test_direct_example(self):
        frame = LidarFrame(np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0]), np.full(6, 0.2), 30.0)
        assert min_pool(frame, 2).values.tolist() == [1.0, 1.0, 5.0]

    def test_k1_identity(self):
        frame = LidarFrame(np.array([2.0, 7.0, 0.5]), np.full(3, 0.2), 30.0)
        np.testing.assert_array_equal(min_pool(frame, 1).values, frame.distances)

    def test_bounds_pool_by_min(self):
        d_min = np.array([0.2, 0.3, 0.25, 0.5])
        frame = LidarFrame(np.array([1.0, 2.0, 3.0, 4.0]), d_min, 30.0)
        pooled = min_pool(frame, 2)
        np.testing.assert_array_equal(pooled.y_min, [0.2, 0.25])
        np.testing.assert_array_equal(pooled.y_max, [30.0, 30.0])

    def test_mismatch_raises(self):
        frame = LidarFrame(np.ones(6), np.full(6, 0.2), 30.0)
        with pytest.raises(ValueError, match="pool window mismatch"):
            min_pool(frame, 4)

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_matches_brute_force(self, k):
        rng = np.random.default_rng(k)
        for _ in range(50):
            n = k * rng.integers(2, 20)
            vals = rng.uniform(0.2, 30.0, n)
            frame = LidarFrame(vals, np.full(n, 0.2), 30.0)
            got = min_pool(frame, k).values
            expected = [min(vals[i * k : (i + 1) * k]) for i in range(n // k)]
            np.testing.assert_array_equal(got, expected)


class TestIpForward:
    def test_reciprocal_beta_zero(self):
        p = IpParams.create("ipaprec", np.array([0.2]), np.array([30.0]))
        assert ip_forward(make_scan([2.0]), p)[0] == pytest.approx(0.5)

    def test_normalized_reciprocal_at_floor(self):
        p = IpParams.create("ipaprecn", np.array([0.2]), np.array([30.0]))
        assert ip_forward(make_scan([0.2]), p)[0] == pytest.approx(1.0)

    def test_lnorm(self):
        p = IpParams.create("lnorm", np.array([0.2]), np.array([30.0]))
        assert ip_forward(make_scan([15.0]), p)[0] == pytest.approx(0.5)

    def test_exp_lambda_half(self):
        p = IpParams.create("ipapexp", np.array([0.2]), np.array([30.0]))
        assert p.constrained()[0] == pytest.approx(0.5)
        assert ip_forward(make_scan([3.0]), p)[0] == pytest.approx(0.125)

    def test_raw_identity(self):
        p = IpParams.create("raw", np.array([0.2]), np.array([30.0]))
        np.testing.assert_array_equal(ip_forward(make_scan([4.2]), p), [4.2])

    def test_constrained_domains_hold_for_any_raw(self):
        rng = np.random.default_rng(8)
        for fam in PARAMETRIC_FAMILIES:
            for _ in range(100):
                m = 5
                p = IpParams.create(fam, np.full(m, 0.3), np.full(m, 20.0), shared=False)
                p.raw[:] = rng.uniform(-50, 50, m)
                c = p.constrained()
                if fam is IpFamily.IPAP_EXP:
                    assert np.all((c > 0) & (c < 1))
                else:
                    assert np.all(c < 0.3)


class TestIpParamGrad:
    def test_reciprocal_hand_value(self):
        """At beta=0 and y=2 the derivative wrt beta is 1/(y-beta)^2 = 0.25,
        composed with d beta/d raw."""
        p = IpParams.create("ipaprec", np.array([0.2]), np.array([30.0]))
        from ipnav.lidar_prep import SOFTPLUS_SHIFT, sigmoid

        assert p.constrained()[0] == pytest.approx(0.0, abs=1e-12)
        dbeta_draw = -sigmoid(np.array([0.0 + SOFTPLUS_SHIFT]))[0]
        got = ip_param_grad(make_scan([2.0]), p)[0]
        assert got == pytest.approx(0.25 * dbeta_draw, rel=1e-9)

    def test_no_parameter_families_raise(self):
        for fam in ("raw", "lnorm"):
            p = IpParams.create(fam, np.array([0.2]), np.array([30.0]))
            with pytest.raises(ValueError, match="no trainable parameter"):
                ip_param_grad(make_scan([2.0]), p)

    @pytest.mark.parametrize("family", PARAMETRIC_FAMILIES)
    def test_matches_finite_differences(self, family):
        """100 random draws per family, rel err < 1e-5 at h = 1e-6."""
        rng = np.random.default_rng(zlib.crc32(family.value.encode()))
        h = 1e-6
        for _ in range(100):
            y_min, _, y_max = random_case(rng)
            m = rng.integers(1, 6)
            p = random_params(rng, family, y_min, y_max, m=m)
            scan = PooledScan(
                rng.uniform(y_min, y_max, m), np.full(m, y_min), np.full(m, y_max), 1
            )
            analytic = ip_param_grad(scan, p)
            raw0 = p.raw.copy()
            if p.shared:
                p.raw[:] = raw0 + h
                hi = ip_forward(scan, p)
                p.raw[:] = raw0 - h
                lo = ip_forward(scan, p)
            else:
                hi = np.empty(m)
                lo = np.empty(m)
                for i in range(m):
                    p.raw[i] = raw0[i] + h
                    hi[i] = ip_forward(scan, p)[i]
                    p.raw[i] = raw0[i] - h
                    lo[i] = ip_forward(scan, p)[i]
                    p.raw[i] = raw0[i]
            p.raw[:] = raw0
            fd = (hi - lo) / (2 * h)
            denom = np.maximum(np.abs(fd), 1e-8)
            assert np.max(np.abs(analytic - fd) / denom) < 1e-5

    def test_exp_gradient_finite_near_one(self):
        """lambda squashed close to 1 must not overflow the gradient."""
        p = IpParams.create("ipapexp", np.array([0.2]), np.array([30.0]))
        p.raw[:] = 40.0  # sigmoid -> 1 - 4e-18
        g = ip_param_grad(make_scan([25.0]), p)
        assert np.all(np.isfinite(g))


class TestPosRatio:
    def test_identity_map(self):
        assert pos_ratio(lambda y: y, 0.2, 1.0, 30.0) == pytest.approx(0.8 / 29.8)

    def test_reciprocal_beta_zero(self):
        got = pos_ratio(lambda y: 1.0 / y, 0.2, 1.0, 30.0)
        assert got == pytest.approx(0.8053691275167785, rel=1e-12)

    def test_linear_map_equals_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            y_min, y_t, y_max = random_case(rng)
            a, b = rng.uniform(0.1, 5.0), rng.uniform(-3, 3)
            lin = pos_ratio(lambda y: a * y + b, y_min, y_t, y_max)
            ident = pos_ratio(lambda y: y, y_min, y_t, y_max)
            assert lin == pytest.approx(ident, rel=1e-9)

    def test_degenerate_raises(self):
        with pytest.raises(ValueError, match="degenerate mapping"):
            pos_ratio(lambda y: 1.0, 0.2, 1.0, 30.0)

    def test_bad_threshold_raises(self):
        with pytest.raises(ValueError):
            pos_ratio(lambda y: y, 1.0, 0.5, 30.0)


class TestCheckConditions:
    def test_reciprocal_true(self):
        assert check_conditions(lambda y: 1.0 / y, 0.2, 30.0)

    def test_identity_false(self):
        assert not check_conditions(lambda y: y, 0.2, 30.0)

    def test_log_true(self):
        assert check_conditions(lambda y: math.log(y), 0.2, 30.0)

    def test_exp_true(self):
        assert check_conditions(lambda y: 0.5**y, 0.2, 30.0)

    def test_wrong_curvature_false(self):
        # increasing and convex: magnifies long distances instead
        assert not check_conditions(lambda y: y * y, 0.2, 30.0)


class TestTheorems:
    @pytest.mark.parametrize("family", PARAMETRIC_FAMILIES)
    def test_fraction_enlargement(self, family):
        """Each parametric family strictly enlarges the short-range fraction
        relative to the identity/linear representation."""
        rng = np.random.default_rng(zlib.crc32(("pos" + family.value).encode()))
        for _ in range(500):
            y_min, y_t, y_max = random_case(rng)
            p = random_params(rng, family, y_min, y_max)
            f = family_map_fn(p, 0)
            assert pos_ratio(f, y_min, y_t, y_max) > pos_ratio(lambda y: y, y_min, y_t, y_max)

    @pytest.mark.parametrize("family", PARAMETRIC_FAMILIES)
    def test_short_range_magnification(self, family):
        """|f(y1 + dy) - f(y1)| > |f(y2 + dy) - f(y2)| for y1 < y2."""
        rng = np.random.default_rng(zlib.crc32(("mag" + family.value).encode()))
        for _ in range(500):
            y_min, _, y_max = random_case(rng)
            p = random_params(rng, family, y_min, y_max)
            f = family_map_fn(p, 0)
            y1 = rng.uniform(y_min, y_max - 2e-3)
            y2 = rng.uniform(y1 + 1e-3, y_max - 1e-3)
            dy = rng.uniform(1e-3, y_max - y2)
            assert abs(f(y1 + dy) - f(y1)) > abs(f(y2 + dy) - f(y2))

    @pytest.mark.parametrize("family", PARAMETRIC_FAMILIES)
    def test_strict_monotonicity(self, family):
        """Applying the mapping to a sorted scan keeps it sorted (possibly
        reversed)."""
        rng = np.random.default_rng(zlib.crc32(("mono" + family.value).encode()))
        for _ in range(100):
            y_min, _, y_max = random_case(rng)
            m = 16
            p = random_params(rng, family, y_min, y_max, m=m)
            ys = np.sort(rng.uniform(y_min, y_max, m))
            scan = PooledScan(ys, np.full(m, y_min), np.full(m, y_max), 1)
            out = ip_forward(scan, p)
            diffs = np.diff(out)
            assert np.all(diffs > 0) or np.all(diffs < 0)

    def test_normalized_reciprocal_range(self):
        """Output lies in (0, 1] whenever beta < y_min <= y <= y_max."""
        rng = np.random.default_rng(123)
        for _ in range(200):
            y_min, _, y_max = random_case(rng)
            p = random_params(rng, IpFamily.IPAP_REC_N, y_min, y_max)
            ys = rng.uniform(y_min, y_max, 32)
            ys[0] = y_min
            ys[-1] = y_max
            out = ip_forward(PooledScan(ys, np.full(32, y_min), np.full(32, y_max), 1), p)
            assert np.all((out > 0) & (out <= 1.0 + 1e-12))


class TestPosReport:
    def test_raw_family_identity(self):
        p = IpParams.create("raw", np.full(4, 0.2), np.full(4, 30.0))
        rep = build_pos_report(p)
        np.testing.assert_allclose(rep.rho_mapped, rep.rho_linear)
        assert not rep.conditions_ok.any()

    def test_reciprocal_report_values(self):
        p = IpParams.create("ipaprec", np.full(3, 0.2), np.full(3, 30.0))
        rep = build_pos_report(p, y_t=np.full(3, 1.0))
        np.testing.assert_allclose(rep.rho_linear, 0.8 / 29.8, rtol=1e-9)
        np.testing.assert_allclose(rep.rho_mapped, 0.8053691275167785, rtol=1e-9)
        assert rep.conditions_ok.all()

    def test_csv_export(self, tmp_path):
        p = IpParams.create("ipaprec", np.full(2, 0.2), np.full(2, 30.0))
        out = tmp_path / "pos.csv"
        build_pos_report(p).to_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "beam,y_min,y_max,y_t,rho_linear,rho_mapped,conditions_ok"
        assert len(lines) == 3
