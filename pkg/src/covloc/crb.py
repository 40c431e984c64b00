"""Deterministic lower bound on position-estimate covariance.

Works on the stacked snapshot model: the per-instant steering matrices sit
in a block-diagonal mixing matrix, the drawn emitter samples act as known
nuisance amplitudes, and the bound is

    (sigma_n^2 / 2) * [ sum_n Re(S_n^H D^H P_perp D S_n) ]^{-1}

with ``P_perp`` the projector onto the orthogonal complement of the mixing
matrix columns and ``D`` holding the steering derivatives for every target
coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundUndefinedError, RankDeficiencyError
from .scene import steering_matrix

_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class CrbResult:
    """Position-parameter bound and its per-target RMSE floor.

    ``matrix`` is the d*K x d*K symmetric bound with parameters ordered
    per target: (x_1, y_1[, z_1], x_2, ...).  ``per_target_rmse_bound[k]``
    is the square root of the summed coordinate variances of target k.
    """

    matrix: np.ndarray
    per_target_rmse_bound: np.ndarray
    coords_per_target: int

    @property
    def num_targets(self):
        return self.per_target_rmse_bound.shape[0]

    def combined_rmse_bound(self):
        """RMS of the per-target bounds, comparable to the trial RMSE."""
        return float(np.sqrt(np.mean(self.per_target_rmse_bound**2)))


def _steering_derivative(antennas, position, axis, wavenumber):
    # d/d(axis) of the reference-normalized steering vector; the reference
    # distance term does not cancel here.
    dist = np.sqrt(np.sum((antennas - position[None, :]) ** 2, axis=1))
    rel = dist - dist[0]
    grad = (position[axis] - antennas[:, axis]) / dist
    return -1j * wavenumber * np.exp(-1j * wavenumber * rel) * (grad - grad[0])


def compute_crb(scenario, signal_draws, coords_per_target=2):
    """Bound on unbiased position estimation for realized signal draws.

    Parameters
    ----------
    scenario : Scenario
    signal_draws : ndarray, shape (M, K, N)
        The emitter samples actually used (e.g. ``SnapshotBlock.signals``).
    coords_per_target : int
        2 for planar scenes, 3 to include z.

    Returns
    -------
    CrbResult

    Raises
    ------
    BoundUndefinedError
        If there are more emitters than antennas (projector undefined).
    RankDeficiencyError
        If the information matrix is numerically singular; the error
        carries the deficient parameter directions.
    """
    traj = scenario.trajectory
    m_count = traj.num_instants
    l_count = traj.num_antennas
    k_count = scenario.num_emitters
    if k_count > l_count:
        raise BoundUndefinedError(
            f"bound undefined for K={k_count} emitters > L={l_count} antennas"
        )
    if coords_per_target not in (2, 3):
        raise ValueError("coords_per_target must be 2 or 3")
    draws = np.asarray(signal_draws, dtype=complex)
    if draws.shape[:2] != (m_count, k_count):
        raise ValueError(
            f"signal draws must be (M, K, N) = ({m_count}, {k_count}, N), "
            f"got {draws.shape}"
        )
    n_snap = draws.shape[2]
    wavenumber = scenario.wavenumber
    n_params = coords_per_target * k_count

    if scenario.noise_variance == 0.0:
        return CrbResult(
            matrix=np.zeros((n_params, n_params)),
            per_target_rmse_bound=np.zeros(k_count),
            coords_per_target=coords_per_target,
        )

    mixing = np.zeros((m_count * l_count, m_count * k_count), dtype=complex)
    for m in range(m_count):
        mixing[
            m * l_count : (m + 1) * l_count, m * k_count : (m + 1) * k_count
        ] = steering_matrix(
            traj.antenna_positions_m[m],
            scenario.emitter_positions_m,
            scenario.carrier_frequency_hz,
            scenario.propagation_speed_mps,
        )

    gram = mixing.conj().T @ mixing
    projector = np.eye(m_count * l_count, dtype=complex) - mixing @ np.linalg.solve(
        gram, mixing.conj().T
    )

    derivs = np.zeros((m_count * l_count, n_params, m_count * k_count), dtype=complex)
    for k in range(k_count):
        for axis in range(coords_per_target):
            j = k * coords_per_target + axis
            for m in range(m_count):
                col = _steering_derivative(
                    traj.antenna_positions_m[m],
                    scenario.emitter_positions_m[k],
                    axis,
                    wavenumber,
                )
                derivs[m * l_count : (m + 1) * l_count, j, m * k_count + k] = col

    # With S_n = I kron s_n, summing over snapshots reduces to traces
    # against the sample correlation of the stacked draws.
    stacked = draws.reshape(m_count * k_count, n_snap)
    corr = stacked @ stacked.conj().T  # (MK, MK)

    flat = derivs.reshape(m_count * l_count, n_params * m_count * k_count)
    weighted = projector @ flat
    blocks = (
        flat.conj().T @ weighted
    ).reshape(n_params, m_count * k_count, n_params, m_count * k_count)
    core = np.real(np.einsum("ajbk,kj->ab", blocks, corr))

    eigvals, eigvecs = np.linalg.eigh(0.5 * (core + core.T))
    top = float(np.max(eigvals)) if eigvals.size else 0.0
    bad = eigvals <= top / _CONDITION_LIMIT
    if top <= 0.0 or np.any(bad):
        raise RankDeficiencyError(
            f"information matrix condition exceeds {_CONDITION_LIMIT:g}; "
            f"{int(np.sum(bad))} deficient direction(s)",
            directions=eigvecs[:, bad].T.copy(),
        )
    inv_core = (eigvecs / eigvals) @ eigvecs.T
    matrix = 0.5 * scenario.noise_variance * inv_core
    matrix = 0.5 * (matrix + matrix.T)

    diag = np.diag(matrix)
    bounds = np.sqrt(
        diag.reshape(k_count, coords_per_target).sum(axis=1)
    )
    return CrbResult(
        matrix=matrix,
        per_target_rmse_bound=bounds,
        coords_per_target=coords_per_target,
    )
