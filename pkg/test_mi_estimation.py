"""
LeakBound - MI Estimation Tests
Likelihood kernels against naive sums, and statistical behavior of the Monte-Carlo estimator.

Set LEAKBOUND_FULL_TESTS=1 to also run the large-N homothety and convergence checks.
"""

import math
import os
import unittest

import numpy as np
from scipy.special import logsumexp

from leakage_core import SeededRng, make_config, sample_draw
from mi_estimation import (
    I_UYT,
    I_XYT,
    QGrid,
    class_log_kernels,
    convergence_sweep,
    estimate_mi_curves,
    log_p_y_given_t_masked,
    log_p_y_given_t_unmasked,
    log_p_y_given_u_masked,
    log_p_y_given_u_unmasked,
    log_p_y_given_x,
    noise_entropy,
)


FULL_TESTS = os.getenv("LEAKBOUND_FULL_TESTS") == "1"


def _require_full_tests():
    if not FULL_TESTS:
        raise unittest.SkipTest("set LEAKBOUND_FULL_TESTS=1")


def _raises(func, *args, **kwargs) -> bool:
    try:
        func(*args, **kwargs)
    except ValueError:
        return True
    return False


def _phi(d, sigma2):
    return np.exp(-d * d / (2 * sigma2)) / math.sqrt(2 * math.pi * sigma2)


def _naive_trace_density(y_i, u_i, config):
    """p(y_i | u_i) summed over every mask explicitly."""
    hw = config.field.hw_table
    if not config.masked:
        return _phi(y_i - hw[u_i], config.sigma2)
    masks = np.arange(config.field.order)
    return np.mean(_phi(y_i - hw[u_i ^ masks] - hw[masks], config.sigma2))


def _naive_log2_p_y_given_t(t, y, config):
    total = 0.0
    for k in range(config.field.order):
        u = config.sbox.table[t ^ k]
        total += np.prod([_naive_trace_density(y[i], u[i], config) for i in range(len(y))])
    return math.log2(total / config.field.order)


def _close(a, b, rel=1e-10):
    return abs(a - b) <= rel * max(1.0, abs(b))


def test_noise_entropy():
    assert abs(noise_entropy(1.0, 1) - 0.5 * math.log2(2 * math.pi * math.e)) < 1e-12
    assert abs(noise_entropy(1.0, 1) - 2.0471) < 1e-4
    assert noise_entropy(3.0, 0) == 0.0
    assert abs(noise_entropy(2.0, 10) - 10 * noise_entropy(2.0, 1)) < 1e-12
    assert _raises(noise_entropy, 0.0, 1)


def test_q_grid_validation():
    assert QGrid((1, 2, 5)).q_max == 5
    assert QGrid((0, 3)).points == (0, 3)
    assert _raises(QGrid, ())
    assert _raises(QGrid, (3, 2))
    assert _raises(QGrid, (2, 2))
    assert _raises(QGrid, (-1, 4))
    assert _raises(QGrid, (0,))
    grid = QGrid.linspace(10, 100, 10)
    assert grid.points[0] == 10 and grid.points[-1] == 100 and len(grid) == 10


def test_masked_likelihood_matches_naive_mask_sum():
    for sbox in ("identity", "seeded-random-bijection"):
        config = make_config(3, True, 0.7, sbox, sbox_seed=3)
        draw = sample_draw(config, 4, SeededRng(11), 0)
        fast = log_p_y_given_t_masked(draw.t, draw.y, config)
        assert _close(fast, _naive_log2_p_y_given_t(draw.t, draw.y, config))

        naive_u = sum(math.log2(_naive_trace_density(draw.y[i], draw.u[i], config))
                      for i in range(4))
        assert _close(log_p_y_given_u_masked(draw.u, draw.y, config), naive_u)


def test_unmasked_likelihood_matches_naive_key_sum():
    config = make_config(3, False, 0.4)
    draw = sample_draw(config, 4, SeededRng(12), 0)
    fast = log_p_y_given_t_unmasked(draw.t, draw.y, config)
    assert _close(fast, _naive_log2_p_y_given_t(draw.t, draw.y, config))


def test_prefix_values_match_truncated_traces():
    config = make_config(3, True, 1.0)
    draw = sample_draw(config, 9, SeededRng(13), 2)
    prefixes = [0, 1, 4, 9]
    values = log_p_y_given_t_masked(draw.t, draw.y, config, prefixes=prefixes)
    assert values[0] == 0.0
    for p, value in zip(prefixes[1:], values[1:]):
        direct = log_p_y_given_t_masked(draw.t[:p], draw.y[:p], config)
        assert _close(value, direct)

    u_values = log_p_y_given_u_masked(draw.u, draw.y, config, prefixes=prefixes)
    assert _close(u_values[2], log_p_y_given_u_masked(draw.u[:4], draw.y[:4], config))


def test_unmasked_u_and_x_likelihoods_coincide():
    config = make_config(8, False, 2.0, "aes-subbytes")
    for j in range(5):
        draw = sample_draw(config, 30, SeededRng(14), j)
        assert _close(log_p_y_given_u_unmasked(draw.u, draw.y, config),
                      log_p_y_given_x(draw.x, draw.y, config.sigma2))


def test_log_sum_exp_kernel_matches_naive_summation():
    config = make_config(3, True, 2.0)
    y = np.linspace(-2.0, 8.0, 41)
    kernels = class_log_kernels(y, config)
    levels = np.arange(7)
    for h in range(4):
        naive = np.log(np.sum(config.mask_counts[h] * np.exp(-(y[:, None] - levels) ** 2 / 4.0),
                              axis=1))
        assert np.allclose(kernels[:, h], naive, rtol=1e-10, atol=1e-12)


def test_kernels_reject_wrong_mode():
    masked = make_config(2, True, 1.0)
    unmasked = make_config(2, False, 1.0)
    t = np.array([0, 1])
    y = np.array([1.0, 2.0])
    assert _raises(log_p_y_given_t_unmasked, t, y, masked)
    assert _raises(log_p_y_given_t_masked, t, y, unmasked)
    assert _raises(log_p_y_given_u_masked, t, y, unmasked)
    assert _raises(log_p_y_given_u_unmasked, t, y, masked)
    assert _raises(log_p_y_given_t_masked, t, y, masked, prefixes=[3])


def test_zero_traces_carry_no_information():
    config = make_config(4, True, 1.0)
    xyt, uyt = estimate_mi_curves(config, QGrid((0, 1, 3)), 300, SeededRng(1))
    assert xyt.values[0] == 0.0 and uyt.values[0] == 0.0
    assert xyt.std_errors[0] == 0.0
    assert xyt.kind == I_XYT and uyt.kind == I_UYT
    assert xyt.n_draws == 300


def test_estimates_do_not_depend_on_thread_count():
    config = make_config(4, True, 1.0)
    grid = QGrid((1, 2, 6))
    one = estimate_mi_curves(config, grid, 600, SeededRng(2), threads=1)
    two = estimate_mi_curves(config, grid, 600, SeededRng(2), threads=2)
    for a, b in zip(one, two):
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.std_errors, b.std_errors)


def test_masked_curves_ordering_and_saturation():
    config = make_config(2, True, 0.5)
    grid = QGrid((1, 5, 20, 100))
    xyt, uyt = estimate_mi_curves(config, grid, 2000, SeededRng(3))
    slack = 3 * (xyt.std_errors + uyt.std_errors)
    assert np.all(uyt.values <= xyt.values + slack)
    assert np.all(uyt.values <= 2 + 3 * uyt.std_errors)
    assert uyt.values[-1] > 1.8
    assert np.all(np.diff(uyt.values) > -3 * uyt.std_errors[1:])
    assert np.all(uyt.clamped() <= 2) and np.all(uyt.clamped() >= 0)


def test_unmasked_u_and_x_informations_agree():
    config = make_config(4, False, 3.0)
    xyt, uyt = estimate_mi_curves(config, QGrid((1, 4, 10)), 3000, SeededRng(4))
    assert np.all(np.abs(xyt.values - uyt.values) <= 4 * (xyt.std_errors + uyt.std_errors))


def test_single_letter_accessor():
    config = make_config(3, False, 1.0)
    xyt, _ = estimate_mi_curves(config, QGrid((1, 2)), 200, SeededRng(5))
    assert xyt.single_letter() == xyt.values[0]
    assert xyt.value_at(7) is None
    _, no_one = estimate_mi_curves(config, QGrid((2, 3)), 200, SeededRng(5))
    assert no_one.single_letter() is None


def test_rejects_single_draw():
    assert _raises(estimate_mi_curves, make_config(2, False, 1.0), QGrid((1,)), 1, SeededRng(0))


def test_homothety_in_q_over_sigma2():
    qs = tuple(range(1, 11))
    a, _ = estimate_mi_curves(make_config(8, False, 5.0), QGrid(qs), 2000, SeededRng(6))
    b, _ = estimate_mi_curves(make_config(8, False, 10.0), QGrid(tuple(2 * q for q in qs)),
                              2000, SeededRng(7))
    combined = np.sqrt(a.std_errors ** 2 + b.std_errors ** 2)
    # the relation is only approximate at low noise, hence the relative allowance
    assert np.all(np.abs(a.values - b.values) <= 3 * combined + 0.15 * np.abs(a.values))


def test_homothety_at_large_draw_counts():
    _require_full_tests()
    qs = tuple(range(4, 41, 4))
    a, _ = estimate_mi_curves(make_config(8, False, 5.0), QGrid(qs), 100_000, SeededRng(6),
                              threads=4)
    b, _ = estimate_mi_curves(make_config(8, False, 10.0), QGrid(tuple(2 * q for q in qs)),
                              100_000, SeededRng(7), threads=4)
    combined = np.sqrt(a.std_errors ** 2 + b.std_errors ** 2)
    assert np.all(np.abs(a.values - b.values) <= 3 * combined + 0.05 * np.abs(a.values))


def test_convergence_sweep_shrinks_errors():
    config = make_config(8, False, 10.0)
    sweep = convergence_sweep(config, 5, [500, 50_000], SeededRng(8))
    assert [p.n_draws for p in sweep] == [500, 50_000]
    ratio = sweep[0].i_xyt.std_error / sweep[1].i_xyt.std_error
    assert 7.0 <= ratio <= 13.0
    combined = math.hypot(sweep[0].i_xyt.std_error, sweep[1].i_xyt.std_error)
    assert abs(sweep[0].i_xyt.value - sweep[1].i_xyt.value) <= 3 * combined

    single = convergence_sweep(config, 5, [100], SeededRng(8))
    assert len(single) == 1 and single[0].q == 5


def test_convergence_at_large_draw_counts():
    _require_full_tests()
    config = make_config(8, False, 10.0)
    sweep = convergence_sweep(config, 40, [1_000, 100_000, 1_000_000], SeededRng(9), threads=4)
    ratio = sweep[0].i_xyt.std_error / sweep[1].i_xyt.std_error
    assert 7.0 <= ratio <= 13.0
    combined = math.hypot(sweep[1].i_xyt.std_error, sweep[2].i_xyt.std_error)
    assert abs(sweep[1].i_xyt.value - sweep[2].i_xyt.value) <= 3 * combined


def test_log_sum_exp_handles_wide_dynamic_range():
    config = make_config(4, False, 0.01)
    draw = sample_draw(config, 200, SeededRng(10), 0)
    value = log_p_y_given_t_unmasked(draw.t, draw.y, config)
    assert np.isfinite(value)
    # with tiny noise the true key dominates the key sum
    hw = config.field.hw_table
    per_key = np.array([np.sum(-(draw.y - hw[config.sbox.table[draw.t ^ k]]) ** 2 / 0.02)
                        for k in range(16)])
    assert np.argmax(per_key) == draw.k
    expected = (logsumexp(per_key) - math.log(16)
                - 100 * math.log(2 * math.pi * 0.01)) / math.log(2)
    assert _close(value, expected)


def main():
    """Run all tests."""
    print("🧪 MI Estimation Test Suite")
    print("=" * 50)

    tests = [
        ("Noise entropy", test_noise_entropy),
        ("Q grid", test_q_grid_validation),
        ("Masked kernel vs naive", test_masked_likelihood_matches_naive_mask_sum),
        ("Unmasked kernel vs naive", test_unmasked_likelihood_matches_naive_key_sum),
        ("Prefix evaluation", test_prefix_values_match_truncated_traces),
        ("p(y|u) = p(y|x) unmasked", test_unmasked_u_and_x_likelihoods_coincide),
        ("Log-sum-exp kernel", test_log_sum_exp_kernel_matches_naive_summation),
        ("Kernel mode checks", test_kernels_reject_wrong_mode),
        ("Zero traces", test_zero_traces_carry_no_information),
        ("Thread invariance", test_estimates_do_not_depend_on_thread_count),
        ("Masked ordering and saturation", test_masked_curves_ordering_and_saturation),
        ("Unmasked U vs X", test_unmasked_u_and_x_informations_agree),
        ("Single-letter accessor", test_single_letter_accessor),
        ("Single draw rejected", test_rejects_single_draw),
        ("Homothety", test_homothety_in_q_over_sigma2),
        ("Large-N homothety", test_homothety_at_large_draw_counts),
        ("Convergence sweep", test_convergence_sweep_shrinks_errors),
        ("Large-N convergence", test_convergence_at_large_draw_counts),
        ("Wide dynamic range", test_log_sum_exp_handles_wide_dynamic_range),
    ]

    passed = skipped = 0
    for test_name, test_func in tests:
        try:
            test_func()
            print(f"✅ {test_name}")
            passed += 1
        except unittest.SkipTest:
            print(f"⏭️  {test_name} skipped (set LEAKBOUND_FULL_TESTS=1)")
            skipped += 1
        except Exception as e:
            print(f"❌ {test_name}: {e!r}")

    ran = len(tests) - skipped
    print(f"\nOverall: {passed}/{ran} tests passed, {skipped} skipped")
    return passed == ran


if __name__ == "__main__":
    main()
