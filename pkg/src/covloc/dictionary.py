"""Candidate dictionary: stacked covariance-domain atoms and their derivatives.

One column per candidate position.  The column block for instant ``m`` is
the Kronecker product ``conj(alpha) kron alpha`` of the instant's steering
vector with itself, so it equals the column-major vectorization of the
noise-free rank-one covariance ``alpha alpha^H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import GeometryError
from .scene import as_position

# Candidates closer than this make the Gram matrix numerically singular.
MIN_SEPARATION_M = 1e-6

_AXES = {"x": 0, "y": 1, "z": 2}


def _axis_index(axis):
    if isinstance(axis, str):
        try:
            return _AXES[axis.lower()]
        except KeyError:
            raise ValueError(f"axis must be one of x, y, z, got {axis!r}") from None
    axis = int(axis)
    if axis not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {axis}")
    return axis


def _as_candidates(positions):
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if pos.shape[1] == 2:
        pos = np.hstack([pos, np.zeros((pos.shape[0], 1))])
    if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
        raise ValueError(f"candidate positions must be (P, 3), got {pos.shape}")
    return pos


def check_separation(positions, min_separation_m=MIN_SEPARATION_M):
    """Raise if any two candidates are closer than ``min_separation_m``."""
    pos = _as_candidates(positions)
    if pos.shape[0] < 2:
        return
    tree = cKDTree(pos)
    dist, _ = tree.query(pos, k=2)
    nearest = float(np.min(dist[:, 1]))
    if nearest < min_separation_m:
        raise ValueError(
            f"candidate positions too close: min separation {nearest:.3g} m "
            f"< {min_separation_m:.3g} m"
        )


@dataclass(frozen=True)
class CandidateSet:
    """Ordered set of candidate emitter positions, pairwise separated."""

    positions_m: np.ndarray  # (P, 3)

    def __post_init__(self):
        pos = _as_candidates(self.positions_m)
        check_separation(pos)
        pos = np.ascontiguousarray(pos)
        pos.flags.writeable = False
        object.__setattr__(self, "positions_m", pos)

    def __len__(self):
        return self.positions_m.shape[0]


@dataclass(frozen=True)
class DictionaryMatrix:
    """Atoms of a candidate set stacked as columns, with provenance."""

    columns: np.ndarray  # (M*L*L, P) complex
    candidates: CandidateSet
    trajectory: object

    @property
    def num_candidates(self):
        return self.columns.shape[1]


def _check_geometry(trajectory, positions):
    ant = trajectory.antenna_positions_m
    diff = ant[:, :, None, :] - positions[None, None, :, :]
    dist2 = np.sum(diff * diff, axis=-1)
    if np.min(dist2) <= 0.0:
        raise GeometryError("candidate position coincides with an antenna")


def atom_columns(trajectory, positions, carrier_frequency_hz, propagation_speed_mps):
    """Raw (M*L*L, P) atom matrix for an array of candidate positions."""
    pos = _as_candidates(positions)
    _check_geometry(trajectory, pos)
    wavenumber = 2.0 * np.pi * carrier_frequency_hz / propagation_speed_mps
    return _kernels.atom_matrix(trajectory.antenna_positions_m, pos, wavenumber)


def atom(trajectory, position_m, carrier_frequency_hz, propagation_speed_mps):
    """Stacked covariance-domain column of a single candidate position.

    Returns a complex vector of length ``M * L * L`` whose instant-``m``
    block is the column-major vectorization of the unit-power covariance
    contributed by an emitter at ``position_m``.
    """
    pos = as_position(position_m)[None, :]
    return atom_columns(
        trajectory, pos, carrier_frequency_hz, propagation_speed_mps
    )[:, 0]


def build(trajectory, candidates, carrier_frequency_hz, propagation_speed_mps):
    """Build the dictionary matrix of a candidate set.

    Column ``p`` is :func:`atom` of the ``p``-th candidate; column order
    follows the candidate order.
    """
    if not isinstance(candidates, CandidateSet):
        candidates = CandidateSet(positions_m=_as_candidates(candidates))
    cols = atom_columns(
        trajectory, candidates.positions_m, carrier_frequency_hz, propagation_speed_mps
    )
    return DictionaryMatrix(columns=cols, candidates=candidates, trajectory=trajectory)


def atom_derivative_columns(
    trajectory, positions, axis, carrier_frequency_hz, propagation_speed_mps
):
    """(M*L*L, P) matrix of atom derivatives along one coordinate axis."""
    pos = _as_candidates(positions)
    _check_geometry(trajectory, pos)
    wavenumber = 2.0 * np.pi * carrier_frequency_hz / propagation_speed_mps
    return _kernels.atom_derivative_matrix(
        trajectory.antenna_positions_m, pos, wavenumber, _axis_index(axis)
    )


def atom_derivative(
    trajectory, position_m, axis, carrier_frequency_hz, propagation_speed_mps
):
    """Derivative of :func:`atom` with respect to one emitter coordinate.

    ``axis`` is ``"x"``/``"y"``/``"z"`` or 0/1/2.  The entry for
    de-vectorized indices (row l, col k) of instant m is

        -j * (2 pi f / c) * exp(-j*(2 pi f / c)*(d_l - d_k))
            * ((p[axis] - a_l[axis]) / d_l - (p[axis] - a_k[axis]) / d_k)

    with ``d_l`` the distance from antenna ``l`` to the candidate, placed
    at flat index ``k*L + l`` within the block (column-major convention,
    locked by a finite-difference unit test).
    """
    pos = as_position(position_m)[None, :]
    return atom_derivative_columns(
        trajectory, pos, axis, carrier_frequency_hz, propagation_speed_mps
    )[:, 0]
