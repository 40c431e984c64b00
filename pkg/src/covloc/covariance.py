"""Per-instant covariance estimation and the stacked measurement vector.

The measurement domain of the whole method: sample covariance matrices at
each observing instant, vectorized column-major, concatenated over
instants, with the known noise floor subtracted from the diagonals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def vec(matrix):
    """Column-major vectorization (stack the columns)."""
    return np.asarray(matrix).flatten(order="F")


def estimate_covariance(block):
    """Sample covariance ``(1/N) * sum_n x_n x_n^H`` of one L x N block.

    The output is explicitly symmetrized so it is Hermitian to round-off.
    """
    block = np.asarray(block)
    if block.ndim != 2 or block.shape[1] < 1:
        raise ValueError(f"need an L x N block with N >= 1, got shape {block.shape}")
    n_snap = block.shape[1]
    cov = block @ block.conj().T / n_snap
    return 0.5 * (cov + cov.conj().T)


@dataclass(frozen=True)
class CovarianceMeasurement:
    """Stacked, noise-floor-subtracted covariance measurement.

    Attributes
    ----------
    per_instant : ndarray, shape (M, L, L)
        Estimated covariance matrix of each observing instant.
    stacked : ndarray, shape (M*L*L,)
        Concatenated column-major vectorizations minus
        ``noise_variance_used * vec(I_L)`` per instant.
    noise_variance_used : float
        The noise floor that was subtracted.
    """

    per_instant: np.ndarray
    stacked: np.ndarray
    noise_variance_used: float

    @property
    def num_instants(self):
        return self.per_instant.shape[0]

    @property
    def num_antennas(self):
        return self.per_instant.shape[1]

    def to_json_dict(self):
        return {
            "noise_variance_used": self.noise_variance_used,
            "per_instant_re": self.per_instant.real.tolist(),
            "per_instant_im": self.per_instant.imag.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc):
        try:
            per_instant = np.asarray(doc["per_instant_re"], dtype=float) + 1j * np.asarray(
                doc["per_instant_im"], dtype=float
            )
            noise = float(doc["noise_variance_used"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad covariance dump: {exc}", field="measurement") from exc
        return stack_measurement(per_instant, noise)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def stack_measurement(per_instant, noise_variance):
    """Stack per-instant covariance estimates into one measurement vector.

    Parameters
    ----------
    per_instant : sequence of (L, L) arrays or ndarray (M, L, L)
    noise_variance : float
        Noise floor subtracted from each diagonal (>= 0).
    """
    mats = np.asarray(per_instant, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None, :, :]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError(f"per-instant covariances must be square, got {mats.shape}")
    if noise_variance < 0.0:
        raise ValueError("noise_variance must be nonnegative")
    l_count = mats.shape[1]
    eye = noise_variance * vec(np.eye(l_count))
    stacked = np.concatenate([vec(mat) - eye for mat in mats])
    return CovarianceMeasurement(
        per_instant=mats, stacked=stacked, noise_variance_used=float(noise_variance)
    )


def measure_snapshots(block, noise_variance):
    """Estimate per-instant covariances of a snapshot block and stack them."""
    mats = np.stack([estimate_covariance(block.received[m])
                     for m in range(block.received.shape[0])])
    return stack_measurement(mats, noise_variance)


@dataclass(frozen=True)
class NoiseCovariance:
    """Block-diagonal covariance of the stacked estimation error.

    ``blocks[m] = (1/N) * R(t_m)^T kron R(t_m)``, each L^2 x L^2.
    """

    blocks: np.ndarray  # (M, L*L, L*L)


def noise_covariance(per_instant, num_snapshots):
    """Theoretical covariance blocks of the stacked measurement error."""
    if num_snapshots < 1:
        raise ValueError("num_snapshots must be at least 1")
    mats = np.asarray(per_instant, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None, :, :]
    blocks = np.stack([np.kron(mat.T, mat) / num_snapshots for mat in mats])
    return NoiseCovariance(blocks=blocks)


def estimate_noise_floor(covariance_matrix, k_max):
    """Mean of the ``L - k_max`` smallest eigenvalues of a covariance estimate.

    Usable when the noise variance is not known a priori; requires
    ``k_max < L`` signal-subspace dimensions.
    """
    mat = np.asarray(covariance_matrix)
    l_count = mat.shape[0]
    if not 0 <= k_max < l_count:
        raise ValueError(f"k_max must satisfy 0 <= k_max < {l_count}, got {k_max}")
    eigvals = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))
    return float(np.mean(eigvals[: l_count - k_max]))
