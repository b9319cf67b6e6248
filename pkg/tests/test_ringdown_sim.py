import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dipper.ringdown import (
    CavityModel,
    JitterSpectrum,
    Pulse,
    apply_detector_bandwidth,
    boxcar_weights,
    load_ensemble,
    ring_power_at_pulse_end,
    save_ensemble,
    simulate_ensemble,
    simulate_shot,
)

W0 = 2 * math.pi * 4.55e9
K = 2 * math.pi * 100.0


def quiet(kext_frac=0.5):
    return CavityModel(W0, K, kext_frac * K)


def test_resonant_pulse_matches_closed_form():
    cav = quiet(0.3)
    pulse = Pulse(1e3, 5e-4)
    dt = 1e-5
    out = simulate_shot(cav, pulse, dt, 5e-3, seed=1)
    t = np.arange(out.size) * dt
    k_p = int(round(pulse.t_p / dt))
    # during the pulse a = -(2 sqrt(k_ext) a0 / k) (1 - e^{-k t/2})
    a = -2 * math.sqrt(cav.kappa_ext) * pulse.a0 / K * (1 - np.exp(-0.5 * K * t[:k_p + 1]))
    assert np.allclose(out[:k_p], math.sqrt(cav.kappa_ext) * a[:k_p] + pulse.a0, rtol=1e-12)
    after = out[k_p:]
    expected = math.sqrt(cav.kappa_ext) * a[k_p] * np.exp(-0.5 * K * (t[k_p:] - t[k_p]))
    assert np.allclose(after, expected, rtol=1e-12, atol=0)
    assert abs(out[k_p]) ** 2 == pytest.approx(
        ring_power_at_pulse_end(cav.kappa_ext, K, pulse.a0, pulse.t_p), rel=1e-12)


def test_first_sample_is_the_drive():
    out = simulate_shot(quiet(), Pulse(7.0, 1e-4), 1e-5, 1e-3, seed=0)
    assert out[0] == 7.0


def test_detuned_pulse_matches_closed_form():
    cav = quiet()
    delta = 5 * K
    out = simulate_shot(cav, Pulse(1e3, 1e-3, detuning=delta), 1e-5, 2e-3, seed=0)
    lam = 1j * delta - K / 2
    a_end = math.sqrt(cav.kappa_ext) * 1e3 * (1 - np.exp(lam * 1e-3)) / lam
    assert abs(out[100]) == pytest.approx(math.sqrt(cav.kappa_ext) * abs(a_end), rel=1e-10)


def test_jitter_preserves_power_but_scrambles_phase():
    jit = JitterSpectrum("lines", lines=[(50.0, 1.0)]).with_rms_linewidths(30, W0, K)
    cav = CavityModel(W0, K, K / 2, jit)
    base = simulate_shot(quiet(), Pulse(1e3, 5e-5), 1e-5, 3e-3, seed=0)
    shot = simulate_shot(cav, Pulse(1e3, 5e-5), 1e-5, 3e-3, seed=0)
    t = np.arange(shot.size - 5) * 1e-5
    # after the pulse jitter only rotates the field
    assert np.allclose(np.abs(shot[5:]) / abs(shot[5]), np.exp(-K * t / 2), rtol=1e-12)
    assert not np.allclose(shot[5:] / shot[5], base[5:] / base[5], rtol=1e-2)


def test_rms_linewidth_rescaling():
    jit = JitterSpectrum("lorentzian", 1.0, 100.0, f_min_Hz=1.0, f_max_Hz=2000.0, n_tones=64)
    scaled = jit.with_rms_linewidths(100, W0, K)
    assert scaled.rms_linewidths(W0, K) == pytest.approx(100, rel=1e-6)
    f, amp = scaled.tones()
    # tones carry the spectrum's variance up to the trapezoid rule
    assert np.sum(amp**2 / 2) == pytest.approx(scaled.variance(), rel=1e-3)


def test_ensemble_deterministic_and_worker_independent():
    jit = JitterSpectrum("lorentzian", 1.0, 100.0, f_min_Hz=1.0, f_max_Hz=2000.0,
                         n_tones=16).with_rms_linewidths(5, W0, K)
    cav = CavityModel(W0, K, K / 2, jit)
    args = (cav, Pulse(1e3, 5e-5), 1e-5, 2e-3)
    a = simulate_ensemble(*args, n_shots=6, seed=3, noise_std=10.0)
    b = simulate_ensemble(*args, n_shots=6, seed=3, noise_std=10.0, workers=3)
    c = simulate_ensemble(*args, n_shots=6, seed=4, noise_std=10.0)
    assert np.array_equal(a.shots, b.shots)
    assert not np.array_equal(a.shots, c.shots)


def test_step_checks():
    with pytest.raises(ValueError, match="unstable"):
        simulate_shot(quiet(), Pulse(1, 1e-3), 1e-3, 1e-2, seed=0)
    jit = JitterSpectrum("lines", lines=[(5e4, 1e-20)])
    with pytest.raises(ValueError, match="jitter"):
        simulate_shot(CavityModel(W0, K, K / 2, jit), Pulse(1, 1e-4), 1e-5, 1e-3, seed=0)
    with pytest.raises(ValueError, match="shorter than one step"):
        simulate_shot(quiet(), Pulse(1, 4e-6), 1e-5, 1e-3, seed=0)


def test_noise_power_matches_filtered_noise():
    ens = simulate_ensemble(quiet(), Pulse(0.0, 1e-5), 1e-5, 2e-2, n_shots=50, seed=9,
                            t_m=5e-5, noise_std=2.0)
    interior = ens.shots[:, 10:-10]
    assert np.mean(np.abs(interior) ** 2) == pytest.approx(ens.noise_power, rel=0.05)


@pytest.mark.parametrize("t_m,dt", [(1e-5, 1e-5), (5e-5, 1e-5), (4e-5, 1e-5), (2.5e-5, 1e-5)])
def test_boxcar_weights_sum_to_width(t_m, dt):
    w = boxcar_weights(t_m, dt)
    assert w.sum() == pytest.approx(t_m / dt)
    assert np.allclose(w, w[::-1])


def test_bandwidth_on_power_and_field_exponentials():
    """A boxcar of width t_m scales a decaying exponential by sinh(x)/x, x = rate t_m / 2."""
    dt = 1e-6
    t = np.arange(20001) * dt
    for kt in (0.1, 0.5, 1.0, 2.0):
        t_m = kt / K
        n_w = int(round(t_m / dt))
        t_m = n_w * dt if n_w % 2 else (n_w + 1) * dt
        x_pow = K * t_m / 2
        power = apply_detector_bandwidth(np.exp(-K * t), t_m, dt)
        mid = slice(5000, 6000)
        assert np.allclose(power[mid] / np.exp(-K * t[mid]), math.sinh(x_pow) / x_pow, rtol=1e-4)
        field = apply_detector_bandwidth(np.exp(-K * t / 2), t_m, dt)
        x_f = K * t_m / 4
        assert np.allclose(field[mid] / np.exp(-K * t[mid] / 2), math.sinh(x_f) / x_f, rtol=1e-4)


def test_bandwidth_edges_use_symmetric_windows():
    x = np.arange(10.0)
    y = apply_detector_bandwidth(x, 5.0, 1.0)
    # linear input is reproduced by any symmetric average
    assert np.allclose(y, x)


def test_save_load_round_trip(tmp_path):
    ens = simulate_ensemble(quiet(), Pulse(1e3, 5e-5), 1e-5, 1e-3, n_shots=3, seed=2,
                            noise_std=1.0, t_m=3e-5)
    save_ensemble(ens, tmp_path / "ring")
    back = load_ensemble(tmp_path / "ring")
    assert np.array_equal(back.shots, ens.shots)
    assert (back.dt, back.t_m, back.t_p, back.seed, back.noise_power) == (
        ens.dt, ens.t_m, ens.t_p, ens.seed, ens.noise_power)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(1.0, 1e4), st.integers(2, 50))
def test_linear_in_drive_amplitude(kext_frac, a0, n_p):
    cav = quiet(kext_frac)
    dt = 1e-5
    one = simulate_shot(cav, Pulse(1.0, n_p * dt), dt, 1e-3, seed=0)
    many = simulate_shot(cav, Pulse(a0, n_p * dt), dt, 1e-3, seed=0)
    assert np.allclose(many, a0 * one, rtol=1e-12, atol=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9).map(lambda k: 2 * k + 1), st.lists(st.floats(-1e3, 1e3), min_size=30,
                                                            max_size=60))
def test_bandwidth_preserves_mean_of_constant_and_is_linear(width, values):
    x = np.asarray(values)
    assert np.allclose(apply_detector_bandwidth(np.full(x.size, 3.0), width, 1.0), 3.0)
    y1 = apply_detector_bandwidth(x, width, 1.0)
    y2 = apply_detector_bandwidth(2 * x, width, 1.0)
    assert np.allclose(y2, 2 * y1, atol=1e-9)
