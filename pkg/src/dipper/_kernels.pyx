# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for ringdown simulation.

Same contracts as :mod:`dipper._fallback`; see there for documentation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp

cnp.import_array()


def jitter_phase(const double[::1] omegas, const double[::1] coeffs,
                 const double[:, ::1] phases, double dt, Py_ssize_t n_points):
    cdef Py_ssize_t n_shots = phases.shape[0]
    cdef Py_ssize_t n_tones = omegas.shape[0]
    out = np.zeros((n_shots, n_points), dtype=np.float64)
    cdef double[:, ::1] theta = out
    cdef Py_ssize_t s, j, k
    cdef double zr, zi, rr, ri, tmp, c, s0
    with nogil:
        for s in range(n_shots):
            for j in range(n_tones):
                c = coeffs[j]
                if c == 0.0:
                    continue
                # phasor recurrence z_k = exp(i (w k dt + phi))
                zr = cos(phases[s, j])
                zi = sin(phases[s, j])
                s0 = zi
                rr = cos(omegas[j] * dt)
                ri = sin(omegas[j] * dt)
                for k in range(n_points):
                    theta[s, k] += c * (zi - s0)
                    tmp = zr * rr - zi * ri
                    zi = zr * ri + zi * rr
                    zr = tmp
                    if (k & 1023) == 1023:
                        # resynchronize to stop round-off drift of the recurrence
                        zr = cos(omegas[j] * (k + 1) * dt + phases[s, j])
                        zi = sin(omegas[j] * (k + 1) * dt + phases[s, j])
    return out


def integrate_field(const double[:, ::1] theta, const double complex[::1] a_in,
                    double dt, double detuning, double kappa_tot, double sqrt_kext):
    cdef Py_ssize_t n_shots = theta.shape[0]
    cdef Py_ssize_t n = theta.shape[1]
    out = np.empty((n_shots, n), dtype=np.complex128)
    cdef double complex[:, ::1] a_out = out
    cdef Py_ssize_t s, k
    cdef double decay = exp(-0.5 * kappa_tot * dt)
    cdef double phi, gr, gi, lr, li, den, er, ei, ar, ai, br, bi, inr, ini, tmp
    with nogil:
        for s in range(n_shots):
            ar = 0.0
            ai = 0.0
            for k in range(n):
                a_out[s, k] = sqrt_kext * (ar + 1j * ai) + a_in[k]
                if k == n - 1:
                    break
                phi = detuning * dt + theta[s, k + 1] - theta[s, k]
                gr = decay * cos(phi)
                gi = decay * sin(phi)
                inr = a_in[k].real
                ini = a_in[k].imag
                tmp = ar * gr - ai * gi
                ai = ar * gi + ai * gr
                ar = tmp
                if inr != 0.0 or ini != 0.0:
                    # exact drive for piecewise-constant input: -sqrt(k_ext) a_in (g - 1) / lambda
                    lr = -0.5 * kappa_tot
                    li = phi / dt
                    den = lr * lr + li * li
                    er = gr - 1.0
                    ei = gi
                    br = (er * lr + ei * li) / den
                    bi = (ei * lr - er * li) / den
                    ar = ar - sqrt_kext * (inr * br - ini * bi)
                    ai = ai - sqrt_kext * (inr * bi + ini * br)
    return out
