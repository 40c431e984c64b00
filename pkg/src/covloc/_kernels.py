"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active backend is chosen at import time: numba when importable and the
environment variable ``COVLOC_DISABLE_NUMBA`` is unset (or not ``"1"``),
pure numpy otherwise.  Both paths produce the same values to float64
round-off; ``benchmarks/bench_kernels.py`` compares their speed.

Column layout used throughout: a stacked column for candidate ``p`` holds
one block of ``L*L`` entries per observing instant, and within a block the
entry for (row ``l``, column ``k``) of the de-vectorized covariance sits at
flat index ``k*L + l`` (column-major vectorization).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("COVLOC_DISABLE_NUMBA", "0") != "1"
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------
def _distances(antennas, positions):
    # antennas (M, L, 3), positions (P, 3) -> (M, L, P)
    diff = antennas[:, :, None, :] - positions[None, None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def atom_matrix_numpy(antennas, positions, wavenumber):
    """Stacked covariance-domain columns for every candidate position.

    Parameters
    ----------
    antennas : ndarray, shape (M, L, 3)
        Antenna positions per observing instant [m].
    positions : ndarray, shape (P, 3)
        Candidate emitter positions [m].
    wavenumber : float
        2*pi*f/c [rad/m].

    Returns
    -------
    ndarray, shape (M*L*L, P), complex128
    """
    m_count, l_count, _ = antennas.shape
    dist = _distances(antennas, positions)  # (M, L, P)
    rel = dist - dist[:, :1, :]
    steer = np.exp(-1j * wavenumber * rel)  # (M, L, P)
    # blocks[m, k, l, p] = conj(alpha_k) * alpha_l; C-order reshape keeps
    # l fastest inside each block, matching column-major vec.
    blocks = steer.conj()[:, :, None, :] * steer[:, None, :, :]
    return np.ascontiguousarray(
        blocks.reshape(m_count * l_count * l_count, positions.shape[0])
    )


def atom_derivative_matrix_numpy(antennas, positions, wavenumber, axis):
    """Derivative of :func:`atom_matrix_numpy` columns along one coordinate.

    Entry for (row ``l``, col ``k``) of instant ``m`` is
    ``-1j*wavenumber * exp(-1j*wavenumber*(d_l - d_k)) * (g_l - g_k)`` with
    ``g_l = (pos[axis] - antenna_l[axis]) / d_l``.
    """
    m_count, l_count, _ = antennas.shape
    dist = _distances(antennas, positions)  # (M, L, P)
    rel = dist - dist[:, :1, :]
    steer = np.exp(-1j * wavenumber * rel)
    grad = (positions[None, None, :, axis] - antennas[:, :, None, axis]) / dist
    phase = steer.conj()[:, :, None, :] * steer[:, None, :, :]  # (M, k, l, P)
    slope = grad[:, None, :, :] - grad[:, :, None, :]  # g_l - g_k at [m,k,l,p]
    blocks = (-1j * wavenumber) * phase * slope
    return np.ascontiguousarray(
        blocks.reshape(m_count * l_count * l_count, positions.shape[0])
    )


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------
if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _atom_matrix_nb(antennas, positions, wavenumber):
        m_count, l_count, _ = antennas.shape
        p_count = positions.shape[0]
        out = np.empty((m_count * l_count * l_count, p_count), dtype=np.complex128)
        dist = np.empty(l_count)
        for p in range(p_count):
            px, py, pz = positions[p, 0], positions[p, 1], positions[p, 2]
            for m in range(m_count):
                for l in range(l_count):
                    dx = antennas[m, l, 0] - px
                    dy = antennas[m, l, 1] - py
                    dz = antennas[m, l, 2] - pz
                    dist[l] = np.sqrt(dx * dx + dy * dy + dz * dz)
                base = m * l_count * l_count
                for k in range(l_count):
                    for l in range(l_count):
                        ph = -wavenumber * (dist[l] - dist[k])
                        out[base + k * l_count + l, p] = complex(np.cos(ph), np.sin(ph))
        return out

    @numba.njit(cache=True)
    def _atom_derivative_matrix_nb(antennas, positions, wavenumber, axis):
        m_count, l_count, _ = antennas.shape
        p_count = positions.shape[0]
        out = np.empty((m_count * l_count * l_count, p_count), dtype=np.complex128)
        dist = np.empty(l_count)
        grad = np.empty(l_count)
        for p in range(p_count):
            px, py, pz = positions[p, 0], positions[p, 1], positions[p, 2]
            for m in range(m_count):
                for l in range(l_count):
                    dx = antennas[m, l, 0] - px
                    dy = antennas[m, l, 1] - py
                    dz = antennas[m, l, 2] - pz
                    dist[l] = np.sqrt(dx * dx + dy * dy + dz * dz)
                    grad[l] = (positions[p, axis] - antennas[m, l, axis]) / dist[l]
                base = m * l_count * l_count
                for k in range(l_count):
                    for l in range(l_count):
                        ph = -wavenumber * (dist[l] - dist[k])
                        phasor = complex(np.cos(ph), np.sin(ph))
                        out[base + k * l_count + l, p] = (
                            -1j * wavenumber * phasor * (grad[l] - grad[k])
                        )
        return out

    def atom_matrix_numba(antennas, positions, wavenumber):
        return _atom_matrix_nb(
            np.ascontiguousarray(antennas, dtype=np.float64),
            np.ascontiguousarray(positions, dtype=np.float64),
            float(wavenumber),
        )

    def atom_derivative_matrix_numba(antennas, positions, wavenumber, axis):
        return _atom_derivative_matrix_nb(
            np.ascontiguousarray(antennas, dtype=np.float64),
            np.ascontiguousarray(positions, dtype=np.float64),
            float(wavenumber),
            int(axis),
        )

else:  # pragma: no cover
    atom_matrix_numba = None
    atom_derivative_matrix_numba = None


if USE_NUMBA:
    atom_matrix = atom_matrix_numba
    atom_derivative_matrix = atom_derivative_matrix_numba
else:
    atom_matrix = atom_matrix_numpy
    atom_derivative_matrix = atom_derivative_matrix_numpy
