"""Pure numpy implementations of the ringdown kernels."""
import numpy as np


def jitter_phase(omegas, coeffs, phases, dt, n_points):
    """Accumulated phase of a sum-of-sinusoids frequency jitter.

    ``theta[s, k] = sum_j coeffs[j] * (sin(omegas[j] k dt + phases[s, j]) - sin(phases[s, j]))``

    With ``coeffs = omega0 * amplitude / omegas`` this is
    ``omega0 * integral_0^t eps(t') dt'`` for ``eps = sum_j amplitude_j cos(...)``.
    """
    omegas = np.asarray(omegas, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    t = np.arange(n_points) * dt
    theta = np.zeros((phases.shape[0], n_points))
    if omegas.size == 0:
        return theta
    arg = np.outer(t, omegas)
    for s, phi in enumerate(phases):
        theta[s] = (np.sin(arg + phi) - np.sin(phi)) @ coeffs
    return theta


def integrate_field(theta, a_in, dt, detuning, kappa_tot, sqrt_kext):
    """Exponential-Euler integration of the driven cavity in the drive frame.

    Per step the linear decay and the accumulated jitter phase are applied
    exactly; the drive contributes ``-sqrt(k_ext) a_in (g - 1) / lambda``
    which is exact for piecewise-constant input. Returns the output field
    ``sqrt(k_ext) a + a_in`` at every grid point, shape ``theta.shape``.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    a_in = np.asarray(a_in, dtype=complex)
    n_shots, n = theta.shape
    phi = detuning * dt + np.diff(theta, axis=1)
    g = np.exp(-0.5 * kappa_tot * dt) * np.exp(1j * phi)
    lam = -0.5 * kappa_tot + 1j * phi / dt
    drive = a_in[:-1] != 0
    a_out = np.empty((n_shots, n), dtype=complex)
    a = np.zeros(n_shots, dtype=complex)
    for k in range(n):
        a_out[:, k] = sqrt_kext * a + a_in[k]
        if k == n - 1:
            break
        a = a * g[:, k]
        if drive[k]:
            a = a - sqrt_kext * a_in[k] * (g[:, k] - 1.0) / lam[:, k]
    return a_out
