import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import lsq_linear

from dipper import fixtures
from dipper.errors import InfeasibleError, RankDeficientError
from dipper.inversion import (
    LossSystem,
    SensitivityAssumptions,
    bounded_lstsq,
    covariance,
    design_covariance,
    polynomial_sensitivity,
    sensitivity_ci,
    sensitivity_map,
    solve,
)
from dipper.participation import (
    DEFAULT_OMEGA_REF,
    LossFactors,
    ParticipationRow,
    ParticipationTable,
    PolynomialBasis,
    predict_table,
)


def joint(rng=None, n=30):
    data = [fixtures.position_sweep(s, n, rng=rng) for s in fixtures.SAMPLES]
    return LossSystem(*zip(*data))


def test_columns_and_design_layout():
    sys_ = joint(n=5)
    assert sys_.columns == ["q_cond", "q_MA", "q_sub[efg_100um]", "q_sub[efg_460um]",
                            "q_sub[hemex_440um]"]
    p, y, s = sys_.design()
    assert p.shape == (15, 5)
    t0 = sys_.tables[0]
    assert np.allclose(p[:5, 0], t0.p_cond * sys_.omega_ref / t0.omega)
    assert np.all(p[:5, 3:] == 0)


def test_unshared_columns():
    data = [fixtures.position_sweep(s, 6) for s in fixtures.SAMPLES[:2]]
    sys_ = LossSystem(*zip(*data), share_MA=False)
    assert "q_MA[efg_100um]" in sys_.columns and "q_MA" not in sys_.columns


def test_noiseless_inversion_is_exact():
    sol = solve(joint())
    assert sol.value("q_cond") == pytest.approx(fixtures.Q_COND, rel=1e-10)
    assert sol.value("q_MA") == pytest.approx(fixtures.Q_MA, rel=1e-10)
    for spec in fixtures.SAMPLES:
        assert sol.q_sub(spec.sample_id) == pytest.approx(spec.q_sub, rel=1e-10)
    assert sol.active_bounds == {}
    assert sol.chi2 < 1e-15


def test_noisy_inversion_within_errors():
    sol = solve(joint(np.random.default_rng(0)))
    for spec in fixtures.SAMPLES:
        assert abs(sol.q_sub(spec.sample_id) - spec.q_sub) < 3 * sol.stderr(
            f"q_sub[{spec.sample_id}]")


def test_covariance_matches_normal_equations():
    sys_ = joint(n=12)
    p, _, s = sys_.design()
    a = p / s[:, None]
    direct = np.linalg.inv(a.T @ a)
    assert np.allclose(covariance(sys_), direct, rtol=1e-8)
    assert np.allclose(design_covariance(p, s), direct, rtol=1e-8)


def test_bounds_pin_parameters_and_zero_their_covariance():
    data = [fixtures.position_sweep(s, 30) for s in fixtures.SAMPLES]
    sys_ = LossSystem(*zip(*data), bounds={"q_MA": (0.0, 0.02)})
    sol = solve(sys_)
    assert sol.value("q_MA") == pytest.approx(0.02)
    assert sol.active_bounds == {"q_MA": "upper"}
    k = sol.columns.index("q_MA")
    assert np.all(sol.covariance[k] == 0) and np.all(sol.covariance[:, k] == 0)


def test_equal_bounds_fix_a_parameter():
    data = [fixtures.position_sweep(s, 30) for s in fixtures.SAMPLES]
    sol = solve(LossSystem(*zip(*data), bounds={"q_cond": (2e-5, 2e-5)}))
    assert sol.value("q_cond") == 2e-5
    assert sol.q_sub("efg_100um") == pytest.approx(170e-9, rel=1e-9)


def test_infeasible_and_unknown_bounds():
    data = [fixtures.position_sweep(fixtures.SAMPLES[0], 8)]
    with pytest.raises(InfeasibleError):
        solve(LossSystem(*zip(*data), bounds={"q_MA": (1.0, 0.0)}))
    with pytest.raises(ValueError, match="unknown"):
        LossSystem(*zip(*data), bounds={"q_XY": (0, 1)})


def test_rank_deficiency_names_columns():
    row = ParticipationRow(DEFAULT_OMEGA_REF, 4e-5, 2.5e-7, 0.01, 0.0)
    table = ParticipationTable.from_rows([row] * 6, sample_id="flat")
    sys_ = LossSystem([table], [np.full(6, 1e-6)], [np.full(6, 1e-8)])
    with pytest.raises(RankDeficientError) as info:
        solve(sys_)
    assert len(info.value.columns) >= 2


def test_bad_sigma_rejected():
    table, q, s = fixtures.position_sweep(fixtures.SAMPLES[0], 8)
    s = s.copy()
    s[2] = 0.0
    with pytest.raises(ValueError, match="sigma"):
        solve(LossSystem([table], [q], [s]))


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_bounded_lstsq_matches_scipy(m_extra, n, seed):
    rng = np.random.default_rng(seed)
    m = n + m_extra
    a = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    lo = rng.uniform(-1.0, 0.2, n)
    hi = lo + rng.uniform(0.0, 1.0, n)
    x, state = bounded_lstsq(a, b, lo, hi)
    ref = lsq_linear(a, b, bounds=(lo, hi), method="bvls", tol=1e-14)
    cost = np.sum((a @ x - b) ** 2)
    assert cost <= np.sum((a @ ref.x - b) ** 2) * (1 + 1e-9) + 1e-15
    assert np.all(x >= lo) and np.all(x <= hi)
    assert np.all((state == 0) | (x == np.where(state < 0, lo, hi)))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e-4), st.floats(1e-3, 1e-1), st.floats(1e-9, 1e-6))
def test_noiseless_round_trip_property(q_cond, q_ma, q_sub):
    table = fixtures.profile(fixtures.SAMPLES[1], 20)
    y = predict_table(table, LossFactors(q_cond, q_ma, q_sub))
    sol = solve(LossSystem([table], [y], [0.01 * y]))
    assert sol.q == pytest.approx([q_cond, q_ma, q_sub], rel=1e-7)


def test_sensitivity_ci_scales_with_fractional_error():
    table = fixtures.profile(fixtures.SAMPLES[1])
    a = sensitivity_ci(table, 1e-7, 1e-3, SensitivityAssumptions(fractional_error=0.01))
    b = sensitivity_ci(table, 1e-7, 1e-3, SensitivityAssumptions(fractional_error=0.02))
    assert b == pytest.approx(2 * a, rel=1e-9)


def test_sensitivity_map_shapes_and_contours():
    table = fixtures.profile(fixtures.SAMPLES[1])
    smap = sensitivity_map(table, q_bulk=np.logspace(-9, -6, 9), q_SA=np.logspace(-5, -2, 7))
    assert smap.ci.shape == (7, 9)
    assert np.all(smap.ci > 0)
    assert smap.sa_ratio == pytest.approx(fixtures.SAMPLES[1].sa_ratio)
    q_sub = smap.q_bulk[None, :] + smap.sa_ratio * smap.q_SA[:, None]
    assert np.allclose(smap.frac_err, smap.ci / q_sub)
    assert set(smap.contours) == {0.03, 0.10, 1.0}
    assert len(list(smap.records())) == 63
    zero = sensitivity_map(table, SensitivityAssumptions(fractional_error=0.0),
                           q_bulk=[1e-8, 1e-7], q_SA=[1e-4, 1e-3])
    assert np.all(zero.ci == 0)


def test_polynomial_sensitivity_terms():
    basis = PolynomialBasis(np.array([1e-9, 3e-6, 0.0]), np.zeros(3), np.array([0, -3e-7, 0]),
                            errors={"y": np.array([0, 1e-9, 0]), "x_MA": np.array([0, 2e-8, 0])})
    ps = polynomial_sensitivity(basis, 0.033, 9e-3)
    assert ps.q_sub == pytest.approx(3e-6 + 3e-7 * 0.033)
    assert (ps.term_y1, ps.term_q_MA, ps.term_x1_MA) == pytest.approx((1e-9, 2.7e-9, 6.6e-10))
    assert ps.sigma == pytest.approx(1e-9 + 2.7e-9 + 6.6e-10)
    with pytest.raises(ValueError):
        polynomial_sensitivity(basis, -1.0, 0.0)
