"""Observation geometry and snapshot synthesis for a moving antenna array.

A scene consists of a platform trajectory (antenna positions at a handful
of slow-time observing instants), a set of stationary narrowband emitters,
and noise/sampling parameters.  :func:`synthesize` draws the complex
baseband snapshots received at every instant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GeometryError

SPEED_OF_LIGHT_MPS = 299792458.0


def as_position(value):
    """Coerce ``value`` to a finite (3,) float position, padding z with 0."""
    pos = np.asarray(value, dtype=float).ravel()
    if pos.size == 2:
        pos = np.concatenate([pos, [0.0]])
    if pos.size != 3:
        raise ValueError(f"position must have 2 or 3 coordinates, got {pos.size}")
    if not np.all(np.isfinite(pos)):
        raise ValueError(f"position coordinates must be finite, got {pos}")
    return pos


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ArrayTrajectory:
    """Antenna positions of the moving array at each observing instant.

    Attributes
    ----------
    antenna_positions_m : ndarray, shape (M, L, 3)
        Position of antenna ``l`` at instant ``m`` [m].  Antenna 0 is the
        phase reference.
    instants_s : ndarray, shape (M,)
        Slow-time labels of the observing instants.
    """

    antenna_positions_m: np.ndarray
    instants_s: np.ndarray = None

    def __post_init__(self):
        ant = np.asarray(self.antenna_positions_m, dtype=float)
        if ant.ndim != 3 or ant.shape[2] != 3:
            raise ValueError(
                f"antenna_positions_m must have shape (M, L, 3), got {ant.shape}"
            )
        m_count, l_count, _ = ant.shape
        if m_count < 1 or l_count < 1:
            raise ValueError("need at least one instant and one antenna")
        if not np.all(np.isfinite(ant)):
            raise ValueError("antenna positions must be finite")
        for m in range(m_count):
            diff = ant[m, :, None, :] - ant[m, None, :, :]
            dist = np.sqrt(np.sum(diff**2, axis=-1))
            np.fill_diagonal(dist, np.inf)
            if np.min(dist) <= 0.0:
                raise ValueError(f"instant {m}: antenna positions must be distinct")
        instants = self.instants_s
        if instants is None:
            instants = np.arange(m_count, dtype=float)
        instants = np.asarray(instants, dtype=float)
        if instants.shape != (m_count,):
            raise ValueError(
                f"instants_s must have shape ({m_count},), got {instants.shape}"
            )
        object.__setattr__(self, "antenna_positions_m", _readonly(ant))
        object.__setattr__(self, "instants_s", _readonly(instants))

    @property
    def num_instants(self):
        return self.antenna_positions_m.shape[0]

    @property
    def num_antennas(self):
        return self.antenna_positions_m.shape[1]


@dataclass(frozen=True)
class Scenario:
    """Complete simulation truth for one localization problem.

    ``emitter_powers`` are linear signal powers; ``noise_variance`` is the
    total variance of the circular complex noise per antenna and snapshot.
    """

    trajectory: ArrayTrajectory
    emitter_positions_m: np.ndarray  # (K, 3)
    emitter_powers: np.ndarray  # (K,)
    carrier_frequency_hz: float
    noise_variance: float
    snapshots_per_instant: int
    rng_seed: int = 0
    propagation_speed_mps: float = SPEED_OF_LIGHT_MPS

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.emitter_positions_m, dtype=float))
        if pos.shape[1] == 2:
            pos = np.hstack([pos, np.zeros((pos.shape[0], 1))])
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"emitter_positions_m must be (K, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("emitter positions must be finite")
        powers = np.atleast_1d(np.asarray(self.emitter_powers, dtype=float))
        if powers.shape != (pos.shape[0],):
            raise ValueError("one power per emitter required")
        if np.any(powers <= 0.0):
            raise ValueError("emitter powers must be positive")
        if self.carrier_frequency_hz <= 0.0:
            raise ValueError("carrier_frequency_hz must be positive")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be nonnegative")
        if self.snapshots_per_instant < 1:
            raise ValueError("snapshots_per_instant must be at least 1")
        if self.propagation_speed_mps <= 0.0:
            raise ValueError("propagation_speed_mps must be positive")
        object.__setattr__(self, "emitter_positions_m", _readonly(pos))
        object.__setattr__(self, "emitter_powers", _readonly(powers))

    @property
    def num_emitters(self):
        return self.emitter_positions_m.shape[0]

    @property
    def wavenumber(self):
        return 2.0 * np.pi * self.carrier_frequency_hz / self.propagation_speed_mps


@dataclass(frozen=True)
class SnapshotBlock:
    """Synthesized snapshots: ``received[m]`` is the L x N block at instant m.

    ``signals`` keeps the emitter sample draws used (K x N per instant);
    they are required for the conditional lower-bound computation.
    """

    received: np.ndarray  # (M, L, N)
    signals: np.ndarray  # (M, K, N)

    def __post_init__(self):
        object.__setattr__(self, "received", _readonly(self.received))
        object.__setattr__(self, "signals", _readonly(self.signals))


def steering_vector(
    antenna_positions_m, emitter_position_m, carrier_frequency_hz, propagation_speed_mps
):
    """Array response of one instant to a point emitter, referenced to antenna 0.

    Entry ``l`` is ``exp(-j*2*pi*f*(||a_l - p|| - ||a_0 - p||)/c)``; entry 0 is
    exactly 1 and every entry has unit modulus.

    Parameters
    ----------
    antenna_positions_m : ndarray, shape (L, 3)
    emitter_position_m : array_like, shape (3,)
    carrier_frequency_hz, propagation_speed_mps : float

    Returns
    -------
    ndarray, shape (L,), complex128

    Raises
    ------
    GeometryError
        If the emitter coincides with an antenna.
    """
    ant = np.atleast_2d(np.asarray(antenna_positions_m, dtype=float))
    pos = as_position(emitter_position_m)
    dist = np.sqrt(np.sum((ant - pos[None, :]) ** 2, axis=1))
    if np.any(dist <= 0.0):
        raise GeometryError("emitter coincides with an antenna")
    wavenumber = 2.0 * np.pi * carrier_frequency_hz / propagation_speed_mps
    rel = dist - dist[0]
    vec = np.exp(-1j * wavenumber * rel)
    vec[0] = 1.0
    return vec


def steering_matrix(antenna_positions_m, emitter_positions_m, f_hz, c_mps):
    """Stack steering vectors of several emitters as columns, shape (L, K)."""
    emitters = np.atleast_2d(np.asarray(emitter_positions_m, dtype=float))
    cols = [steering_vector(antenna_positions_m, p, f_hz, c_mps) for p in emitters]
    return np.stack(cols, axis=1)


def synthesize(scenario):
    """Draw the received snapshot blocks for a scenario.

    Emitter samples are unit-variance circular complex Gaussian draws
    scaled by the square root of each emitter power, independent across
    snapshots and observing instants; circular complex noise of total
    variance ``noise_variance`` is added per antenna.  The result is a
    deterministic function of ``scenario.rng_seed``.
    """
    traj = scenario.trajectory
    m_count = traj.num_instants
    l_count = traj.num_antennas
    k_count = scenario.num_emitters
    n_snap = scenario.snapshots_per_instant

    rng = np.random.default_rng(scenario.rng_seed)
    unit_sig = (
        rng.standard_normal((m_count, k_count, n_snap))
        + 1j * rng.standard_normal((m_count, k_count, n_snap))
    ) / np.sqrt(2.0)
    unit_noise = (
        rng.standard_normal((m_count, l_count, n_snap))
        + 1j * rng.standard_normal((m_count, l_count, n_snap))
    ) / np.sqrt(2.0)

    signals = np.sqrt(scenario.emitter_powers)[None, :, None] * unit_sig
    noise_amp = np.sqrt(scenario.noise_variance)
    received = np.empty((m_count, l_count, n_snap), dtype=complex)
    for m in range(m_count):
        steer = steering_matrix(
            traj.antenna_positions_m[m],
            scenario.emitter_positions_m,
            scenario.carrier_frequency_hz,
            scenario.propagation_speed_mps,
        )
        received[m] = steer @ signals[m] + noise_amp * unit_noise[m]
    return SnapshotBlock(received=received, signals=signals)


def random_linear_trajectory(
    num_antennas,
    array_aperture_m,
    observing_points,
    virtual_aperture_m,
    layout_seed=0,
    standoff_m=(0.0, 0.0, 0.0),
):
    """Observing positions on a line with a random linear sub-array.

    The platform reference antenna visits ``observing_points`` positions
    uniformly spaced along the x axis over a span of ``virtual_aperture_m``,
    centered on ``standoff_m``.  The remaining antennas sit at random x
    offsets drawn uniformly in (0, array_aperture_m], fixed for all
    instants (rigid array).
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be at least 1")
    if observing_points < 1:
        raise ValueError("observing_points must be at least 1")
    rng = np.random.default_rng(layout_seed)
    offsets = np.zeros(num_antennas)
    if num_antennas > 1:
        draws = rng.uniform(0.0, array_aperture_m, size=num_antennas - 1)
        while np.unique(np.concatenate([[0.0], draws])).size < num_antennas:
            draws = rng.uniform(0.0, array_aperture_m, size=num_antennas - 1)
        offsets[1:] = np.sort(draws)
    center = as_position(standoff_m)
    if observing_points == 1:
        ref_x = np.array([0.0])
    else:
        ref_x = np.linspace(-virtual_aperture_m / 2.0, virtual_aperture_m / 2.0,
                            observing_points)
    ant = np.zeros((observing_points, num_antennas, 3))
    ant[:, :, 0] = center[0] + ref_x[:, None] + offsets[None, :]
    ant[:, :, 1] = center[1]
    ant[:, :, 2] = center[2]
    return ArrayTrajectory(antenna_positions_m=ant)


# ---------------------------------------------------------------------------
# JSON loading
# ---------------------------------------------------------------------------
def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError("missing required field", field=f"{where}.{key}")
    return mapping[key]


def trajectory_from_dict(cfg, where="scenario.trajectory"):
    """Build an :class:`ArrayTrajectory` from its JSON description.

    Either ``antenna_positions_m`` (explicit M x L x 3 nested lists) or a
    ``generator`` mapping describing a random linear array is accepted.
    """
    if "antenna_positions_m" in cfg:
        ant = np.asarray(cfg["antenna_positions_m"], dtype=float)
        instants = cfg.get("instants_s")
        try:
            return ArrayTrajectory(
                antenna_positions_m=ant,
                instants_s=None if instants is None else np.asarray(instants, float),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), field=f"{where}.antenna_positions_m") from exc
    gen = _require(cfg, "generator", where)
    kind = gen.get("kind", "random_linear_array")
    if kind != "random_linear_array":
        raise ConfigError(
            f"unknown trajectory generator {kind!r}", field=f"{where}.generator.kind"
        )
    gwhere = f"{where}.generator"
    try:
        return random_linear_trajectory(
            num_antennas=int(_require(gen, "num_antennas", gwhere)),
            array_aperture_m=float(_require(gen, "array_aperture_m", gwhere)),
            observing_points=int(_require(gen, "observing_points", gwhere)),
            virtual_aperture_m=float(_require(gen, "virtual_aperture_m", gwhere)),
            layout_seed=int(gen.get("layout_seed", 0)),
            standoff_m=gen.get("standoff_m", (0.0, 0.0, 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field=gwhere) from exc


def scenario_from_dict(cfg, where="scenario"):
    """Build a :class:`Scenario` from the ``scenario`` section of a config."""
    if not isinstance(cfg, dict):
        raise ConfigError("scenario section must be a mapping", field=where)
    trajectory = trajectory_from_dict(_require(cfg, "trajectory", where), f"{where}.trajectory")
    emitters = _require(cfg, "emitters", where)
    if not emitters:
        raise ConfigError("at least one emitter required", field=f"{where}.emitters")
    positions, powers = [], []
    for i, entry in enumerate(emitters):
        ewhere = f"{where}.emitters[{i}]"
        try:
            positions.append(as_position(_require(entry, "position_m", ewhere)))
        except ValueError as exc:
            raise ConfigError(str(exc), field=f"{ewhere}.position_m") from exc
        powers.append(float(entry.get("power", 1.0)))
    try:
        return Scenario(
            trajectory=trajectory,
            emitter_positions_m=np.asarray(positions),
            emitter_powers=np.asarray(powers),
            carrier_frequency_hz=float(_require(cfg, "carrier_frequency_hz", where)),
            noise_variance=float(_require(cfg, "noise_variance", where)),
            snapshots_per_instant=int(_require(cfg, "snapshots_per_instant", where)),
            rng_seed=int(cfg.get("rng_seed", 0)),
            propagation_speed_mps=float(
                cfg.get("propagation_speed_mps", SPEED_OF_LIGHT_MPS)
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field=where) from exc


def scenario_from_json(path):
    """Load a scenario from a JSON file holding a ``scenario`` section."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = doc.get("scenario", doc)
    return scenario_from_dict(cfg)
