"""Sparse recovery of emitter positions from the stacked covariance vector.

Two solvers are provided: a fixed-grid nonnegative l1 baseline
(:func:`solve_on_grid`) and the continuous-domain iteratively reweighted
solver (:func:`solve_off_grid`) that alternates explicit power updates,
gradient-based position refinement, weight updates and pruning.  A
brute-force support-enumeration oracle (:func:`l0_oracle`) backs the
equivalence tests on small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import dictionary
from .errors import ConfigError, GeometryError, NumericalError
from .scene import SPEED_OF_LIGHT_MPS

# Trial positions closer than this to another candidate are rejected during
# refinement; near-duplicate columns make the normal equations useless.
MIN_TRIAL_SEPARATION_M = 1e-3

_DESCENT_SLACK = 1e-12


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GridSpec:
    """Uniform coarse initialization grid in the x-y plane at height z."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    spacing_m: float
    z_m: float = 0.0

    def __post_init__(self):
        if self.spacing_m <= 0.0:
            raise ValueError("grid spacing must be positive")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("grid bounds must be ordered")

    @staticmethod
    def _centers(lo, hi, step):
        span = hi - lo
        count = max(1, int(np.floor(span / step + 1e-9)))
        start = lo + 0.5 * (span - (count - 1) * step)
        return start + step * np.arange(count)

    def candidate_positions(self):
        xs = self._centers(self.x_min, self.x_max, self.spacing_m)
        ys = self._centers(self.y_min, self.y_max, self.spacing_m)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pos = np.column_stack(
            [gx.ravel(), gy.ravel(), np.full(gx.size, self.z_m)]
        )
        return pos

    @classmethod
    def from_dict(cls, cfg, where="solver.grid"):
        try:
            return cls(
                x_min=float(cfg["x_min"]),
                x_max=float(cfg["x_max"]),
                y_min=float(cfg["y_min"]),
                y_max=float(cfg["y_max"]),
                spacing_m=float(cfg["spacing_m"]),
                z_m=float(cfg.get("z_m", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid spec: {exc}", field=where) from exc


@dataclass(frozen=True)
class LineSearchSpec:
    """Backtracking parameters for the per-candidate position update."""

    initial_step_m: float = None  # None: one coarse-grid spacing
    shrink: float = 0.5
    max_halvings: int = 20

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must be in (0, 1)")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be nonnegative")
        if self.initial_step_m is not None and self.initial_step_m <= 0.0:
            raise ValueError("initial_step_m must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs of the sparse solvers.

    ``None`` fields are resolved from the data at solve time: ``lam``
    becomes ``0.1 * ||r||^2 / P``, ``delta`` becomes ``1e-3 * max(rho)``
    after the first power update, ``prune_threshold`` becomes
    ``1e-2 * max(rho)`` and ``epsilon_stop`` becomes ``1e-5 * ||rho||``.
    """

    lam: float = None
    delta: float = None
    epsilon_stop: float = None
    max_iterations: int = 60
    prune_threshold: float = None
    rho_floor: float = 1e-12
    line_search: LineSearchSpec = field(default_factory=LineSearchSpec)
    grid: GridSpec = None

    def __post_init__(self):
        for name in ("lam", "delta", "epsilon_stop", "prune_threshold"):
            value = getattr(self, name)
            if value is not None and value <= 0.0:
                raise ValueError(f"{name} must be positive when given")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.rho_floor <= 0.0:
            raise ValueError("rho_floor must be positive")

    @classmethod
    def from_dict(cls, cfg, where="solver"):
        if cfg is None:
            return cls()
        ls_cfg = cfg.get("line_search", {})
        try:
            line_search = LineSearchSpec(
                initial_step_m=ls_cfg.get("initial_step_m"),
                shrink=float(ls_cfg.get("shrink", 0.5)),
                max_halvings=int(ls_cfg.get("max_halvings", 20)),
            )
            grid = None
            if cfg.get("grid") is not None:
                grid = GridSpec.from_dict(cfg["grid"], where=f"{where}.grid")
            return cls(
                lam=cfg.get("lambda"),
                delta=cfg.get("delta"),
                epsilon_stop=cfg.get("epsilon_stop"),
                max_iterations=int(cfg.get("max_iterations", 60)),
                prune_threshold=cfg.get("prune_threshold"),
                rho_floor=float(cfg.get("rho_floor", 1e-12)),
                line_search=line_search,
                grid=grid,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver config: {exc}", field=where) from exc


@dataclass(frozen=True)
class SolverState:
    """Snapshot of the iterative solver between steps."""

    positions_m: np.ndarray  # (P, 3)
    rho: np.ndarray  # (P,) nonnegative powers
    b_diag: np.ndarray  # (P,) positive surrogate diagonal
    objective_history: tuple = ()
    iteration: int = 0
    candidate_ids: np.ndarray = None

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        b_diag = np.asarray(self.b_diag, dtype=float)
        if np.any(rho < 0.0):
            raise ValueError("rho entries must be nonnegative")
        if np.any(b_diag <= 0.0):
            raise ValueError("b_diag entries must be positive")
        ids = self.candidate_ids
        if ids is None:
            ids = np.arange(rho.size)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "b_diag", b_diag)
        object.__setattr__(self, "candidate_ids", np.asarray(ids, dtype=int))
        object.__setattr__(
            self, "positions_m", np.asarray(self.positions_m, dtype=float)
        )


@dataclass(frozen=True)
class LocalizationResult:
    """Recovered emitter positions and powers, with solve diagnostics."""

    positions_m: np.ndarray  # (K, 3)
    powers: np.ndarray  # (K,)
    iterations: int
    final_objective: float
    converged: bool
    objective_history: tuple = ()

    @property
    def num_targets(self):
        return self.positions_m.shape[0]

    def to_json_dict(self, include_history=False):
        doc = {
            "positions_m": np.asarray(self.positions_m).tolist(),
            "powers": np.asarray(self.powers).tolist(),
            "iterations": int(self.iterations),
            "final_objective": float(self.final_objective),
            "converged": bool(self.converged),
            "num_targets": int(self.num_targets),
        }
        if include_history:
            doc["objective_history"] = [float(v) for v in self.objective_history]
        return doc


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------
def objective(r_hat, psi, rho, lam, delta):
    """Penalized residual: ``lam * sum(atan(|rho|/delta)) + ||r - Psi rho||^2``."""
    rho = np.asarray(rho, dtype=float)
    resid = r_hat - psi @ rho
    penalty = lam * float(np.sum(np.arctan(np.abs(rho) / delta)))
    return penalty + float(np.real(np.vdot(resid, resid)))


def surrogate_weights(rho, delta, rho_floor=1e-12):
    """Reweighting coefficients ``delta / (|rho| * (delta^2 + rho^2))``.

    ``|rho|`` is floored at ``rho_floor`` so exactly-zero entries get a
    large finite weight instead of dividing by zero.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    rho = np.asarray(rho, dtype=float)
    mag = np.maximum(np.abs(rho), rho_floor)
    return delta / (mag * (delta**2 + rho**2))


def update_rho(r_hat, psi, b_diag, lam):
    """Explicit minimizer of the quadratic surrogate, clamped to >= 0.

    Solves ``(Re(Psi^H Psi) + lam * diag(b)) rho = Re(Psi^H r)`` and zeroes
    any negative entries (powers are nonnegative).
    """
    b_diag = np.asarray(b_diag, dtype=float)
    gram = (psi.conj().T @ psi).real
    h = gram + lam * np.diag(b_diag)
    t = (psi.conj().T @ r_hat).real
    rho = _solve_spd(h, t)
    return np.maximum(rho, 0.0)


def _solve_spd(h, t):
    try:
        factor = scipy.linalg.cho_factor(h, check_finite=False)
        return scipy.linalg.cho_solve(factor, t, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    try:
        return np.linalg.solve(h, t)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal equations are singular: {exc}") from exc


def _nonneg_quadratic_descent(h, t, start, sweeps=60, tol=1e-14):
    """Cyclic coordinate descent on ``x^T H x - 2 t^T x`` over ``x >= 0``.

    Monotone in the objective from any starting point; used as a fallback
    when the clamped explicit solve would not decrease the surrogate.
    """
    x = np.maximum(np.asarray(start, dtype=float).copy(), 0.0)
    diag = np.diag(h)
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    for _ in range(sweeps):
        biggest = 0.0
        for p in range(x.size):
            if diag[p] <= 0.0:
                continue
            new = max(0.0, (t[p] - h[p] @ x + diag[p] * x[p]) / diag[p])
            biggest = max(biggest, abs(new - x[p]))
            x[p] = new
        if biggest <= tol * max(scale, 1.0):
            break
    return x


def prune(state, threshold):
    """Drop candidates whose power fell below the hard threshold.

    Positions, powers and surrogate weights shrink jointly; an empty
    result signals that the caller should report a zero-target model.
    """
    keep = state.rho >= threshold
    return replace(
        state,
        positions_m=state.positions_m[keep],
        rho=state.rho[keep],
        b_diag=state.b_diag[keep],
        candidate_ids=state.candidate_ids[keep],
    )


# ---------------------------------------------------------------------------
# working model of the concentrated objective
# ---------------------------------------------------------------------------
class _Model:
    """Dictionary, Gram matrix and correlations for the current candidates."""

    def __init__(self, trajectory, f_hz, c_mps, r_hat, positions, ids=None):
        self.trajectory = trajectory
        self.f_hz = f_hz
        self.c_mps = c_mps
        self.r = np.asarray(r_hat, dtype=complex)
        self.positions = np.array(positions, dtype=float)
        self.ids = np.arange(len(self.positions)) if ids is None else np.asarray(ids)
        self.psi = dictionary.atom_columns(trajectory, self.positions, f_hz, c_mps)
        self.gram = self.psi.conj().T @ self.psi
        self.t = (self.psi.conj().T @ self.r).real

    @property
    def size(self):
        return self.positions.shape[0]

    def h_matrix(self, b_diag, lam):
        return self.gram.real + lam * np.diag(b_diag)

    def solve_w(self, b_diag, lam):
        return _solve_spd(self.h_matrix(b_diag, lam), self.t)

    def concentrated_value(self, w):
        # Eq-38-scaled concentrated objective -u^T V^{-1} u = -2 t^T w.
        return -2.0 * float(self.t @ w)

    def surrogate_core(self, b_diag, lam, rho):
        h = self.h_matrix(b_diag, lam)
        return float(rho @ (h @ rho) - 2.0 * (self.t @ rho))

    def atom_at(self, position):
        return dictionary.atom(position_m=position, trajectory=self.trajectory,
                               carrier_frequency_hz=self.f_hz,
                               propagation_speed_mps=self.c_mps)

    def derivative_at(self, position, axis):
        return dictionary.atom_derivative(
            trajectory=self.trajectory, position_m=position, axis=axis,
            carrier_frequency_hz=self.f_hz, propagation_speed_mps=self.c_mps)

    def snapshot(self):
        return (
            self.positions.copy(),
            self.psi.copy(),
            self.gram.copy(),
            self.t.copy(),
        )

    def restore(self, snap):
        self.positions, self.psi, self.gram, self.t = (
            snap[0].copy(),
            snap[1].copy(),
            snap[2].copy(),
            snap[3].copy(),
        )

    def column_backup(self, p):
        return (
            self.positions[p].copy(),
            self.psi[:, p].copy(),
            self.gram[:, p].copy(),
            self.t[p],
        )

    def restore_column(self, p, backup):
        pos, col, gram_col, t_p = backup
        self.positions[p] = pos
        self.psi[:, p] = col
        self.gram[:, p] = gram_col
        self.gram[p, :] = gram_col.conj()
        self.gram[p, p] = gram_col[p].real
        self.t[p] = t_p

    def replace_position(self, p, new_position):
        col = self.atom_at(new_position)
        self.positions[p] = new_position
        self.psi[:, p] = col
        gram_col = self.psi.conj().T @ col
        self.gram[:, p] = gram_col
        self.gram[p, :] = gram_col.conj()
        self.gram[p, p] = gram_col[p].real
        self.t[p] = float(np.vdot(col, self.r).real)

    def subset(self, keep):
        sub = _Model.__new__(_Model)
        sub.trajectory = self.trajectory
        sub.f_hz = self.f_hz
        sub.c_mps = self.c_mps
        sub.r = self.r
        sub.positions = self.positions[keep].copy()
        sub.ids = self.ids[keep].copy()
        sub.psi = np.ascontiguousarray(self.psi[:, keep])
        sub.gram = np.ascontiguousarray(self.gram[np.ix_(keep, keep)])
        sub.t = self.t[keep].copy()
        return sub


def _candidate_gradient(model, w, resid, p):
    grad = np.zeros(3)
    for axis in range(3):
        dcol = model.derivative_at(model.positions[p], axis)
        grad[axis] = -4.0 * w[p] * float(np.vdot(resid, dcol).real)
    return grad


def _too_close(positions, p, trial):
    others = np.delete(positions, p, axis=0)
    if others.size == 0:
        return False
    dist = np.sqrt(np.sum((others - trial[None, :]) ** 2, axis=1))
    return bool(np.min(dist) < MIN_TRIAL_SEPARATION_M)


def _refine_sweep(model, b_diag, lam, line_search, step_hints, min_power=0.0):
    """One sequential pass of per-candidate backtracking position updates.

    Each candidate is moved along its negative gradient with a step that is
    halved until the concentrated objective does not increase; candidates
    with no accepting step (or negligible power) stay put.  Returns True if
    any candidate moved.
    """
    try:
        w = model.solve_w(b_diag, lam)
    except NumericalError:
        return False
    resid = model.r - model.psi @ w
    current = model.concentrated_value(w)
    moved = False
    for p in range(model.size):
        if w[p] < min_power:
            continue
        grad = _candidate_gradient(model, w, resid, p)
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(gnorm) or gnorm <= 0.0:
            continue
        direction = -grad / gnorm
        step = float(step_hints[p])
        backup = model.column_backup(p)
        accepted = False
        trial_value = current
        trial_w = w
        for _ in range(line_search.max_halvings + 1):
            trial = backup[0] + step * direction
            if _too_close(model.positions, p, trial):
                step *= line_search.shrink
                continue
            try:
                model.replace_position(p, trial)
                trial_w = model.solve_w(b_diag, lam)
            except (GeometryError, NumericalError):
                model.restore_column(p, backup)
                step *= line_search.shrink
                continue
            trial_value = model.concentrated_value(trial_w)
            if trial_value <= current:
                accepted = True
                break
            model.restore_column(p, backup)
            step *= line_search.shrink
        if accepted:
            current = trial_value
            w = trial_w
            resid = model.r - model.psi @ w
            step_hints[p] = min(2.0 * step, step_hints.initial)
            moved = True
    return moved


class _StepHints:
    """Per-candidate warm-start step lengths for the backtracking search."""

    def __init__(self, initial, count):
        self.initial = float(initial)
        self._steps = np.full(count, float(initial))

    def __getitem__(self, p):
        return self._steps[p]

    def __setitem__(self, p, value):
        self._steps[p] = value

    def subset(self, keep):
        out = _StepHints(self.initial, 0)
        out._steps = self._steps[keep].copy()
        return out


# ---------------------------------------------------------------------------
# public gradient / refinement wrappers
# ---------------------------------------------------------------------------
def position_gradient(
    trajectory,
    carrier_frequency_hz,
    positions,
    r_hat,
    b_diag,
    lam,
    p_index,
    propagation_speed_mps=SPEED_OF_LIGHT_MPS,
    psi=None,
):
    """Gradient of the concentrated objective w.r.t. one candidate position.

    Implements the analytic expression built from ``u = 2 Re(Psi^H r)``,
    ``V = 2 (Re(Psi^H Psi) + lam B)`` and the single nonzero dictionary
    column derivative; equals the central finite difference of the
    concentrated objective to first order.

    Returns
    -------
    ndarray, shape (3,)
        (d/dx, d/dy, d/dz) of the concentrated objective at candidate
        ``p_index``.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if psi is None:
        psi = dictionary.atom_columns(
            trajectory, positions, carrier_frequency_hz, propagation_speed_mps
        )
    b_diag = np.asarray(b_diag, dtype=float)
    gram = (psi.conj().T @ psi).real
    h = gram + lam * np.diag(b_diag)
    t = (psi.conj().T @ r_hat).real
    w = _solve_spd(h, t)
    resid = r_hat - psi @ w
    grad = np.zeros(3)
    for axis in range(3):
        dcol = dictionary.atom_derivative(
            trajectory, positions[p_index], axis,
            carrier_frequency_hz, propagation_speed_mps,
        )
        grad[axis] = -4.0 * w[p_index] * float(np.vdot(resid, dcol).real)
    return grad


def concentrated_objective(
    trajectory,
    carrier_frequency_hz,
    positions,
    r_hat,
    b_diag,
    lam,
    propagation_speed_mps=SPEED_OF_LIGHT_MPS,
):
    """Value of the position-only cost ``-u^T V^{-1} u`` for a candidate set."""
    model = _Model(
        trajectory, carrier_frequency_hz, propagation_speed_mps, r_hat,
        np.atleast_2d(np.asarray(positions, dtype=float)),
    )
    w = model.solve_w(np.asarray(b_diag, dtype=float), lam)
    return model.concentrated_value(w)


def refine_positions(
    state,
    r_hat,
    cfg,
    trajectory,
    carrier_frequency_hz,
    propagation_speed_mps=SPEED_OF_LIGHT_MPS,
):
    """One refinement pass over every candidate of a solver state.

    Returns the refined candidate positions as an (P, 3) array; the
    concentrated objective of the returned set never exceeds that of the
    input set.
    """
    if cfg.lam is None:
        raise ValueError("cfg.lam must be resolved before refining positions")
    model = _Model(
        trajectory, carrier_frequency_hz, propagation_speed_mps, r_hat,
        state.positions_m, ids=state.candidate_ids,
    )
    initial = cfg.line_search.initial_step_m
    if initial is None:
        initial = cfg.grid.spacing_m if cfg.grid is not None else 1.0
    hints = _StepHints(initial, model.size)
    _refine_sweep(model, state.b_diag, cfg.lam, cfg.line_search, hints)
    return model.positions.copy()


# ---------------------------------------------------------------------------
# off-grid solver
# ---------------------------------------------------------------------------
def solve_off_grid(
    measurement,
    trajectory,
    cfg,
    carrier_frequency_hz,
    propagation_speed_mps=SPEED_OF_LIGHT_MPS,
    initial_positions=None,
):
    """Iteratively reweighted continuous-domain localization.

    Starting from the coarse grid of ``cfg.grid`` (or ``initial_positions``),
    each iteration updates the powers by the explicit surrogate minimizer,
    refines every retained candidate position by a backtracking gradient
    step, recomputes the reweighting diagonal and prunes low-power
    candidates.  The recorded objective history is non-increasing; pruning
    is deferred to a later iteration in the rare case where dropping
    sub-threshold power would raise the objective.

    Returns
    -------
    LocalizationResult
        Surviving positions/powers; ``converged`` reflects the power-change
        stopping rule on the candidates common to consecutive iterations.
    """
    r_hat = np.asarray(measurement.stacked, dtype=complex)
    if initial_positions is None:
        if cfg.grid is None:
            raise ConfigError("solver grid is required", field="solver.grid")
        initial_positions = cfg.grid.candidate_positions()
    positions = np.atleast_2d(np.asarray(initial_positions, dtype=float))
    model = _Model(trajectory, carrier_frequency_hz, propagation_speed_mps,
                   r_hat, positions)

    lam = cfg.lam
    if lam is None:
        lam = 0.1 * float(np.real(np.vdot(r_hat, r_hat))) / model.size
    delta = cfg.delta
    tau = cfg.prune_threshold
    eps_stop = cfg.epsilon_stop
    initial_step = cfg.line_search.initial_step_m
    if initial_step is None:
        initial_step = cfg.grid.spacing_m if cfg.grid is not None else 1.0
    hints = _StepHints(initial_step, model.size)

    b_diag = np.ones(model.size)
    anchor_rho = None
    prev_rho = None
    prev_ids = None
    history = []
    converged = False
    iterations = 0

    for iteration in range(cfg.max_iterations):
        iterations = iteration + 1
        # Step 1: explicit power update on the current support.
        rho = np.maximum(model.solve_w(b_diag, lam), 0.0)
        if anchor_rho is not None and (
            model.surrogate_core(b_diag, lam, rho)
            > model.surrogate_core(b_diag, lam, anchor_rho) + _DESCENT_SLACK
        ):
            rho = _nonneg_quadratic_descent(
                model.h_matrix(b_diag, lam), model.t, anchor_rho
            )
        scale = float(np.max(rho)) if rho.size else 0.0
        if delta is None:
            delta = 1e-3 * scale if scale > 0.0 else 1e-3
        if tau is None:
            tau = 1e-2 * scale if scale > 0.0 else 1e-2
        if eps_stop is None:
            norm = float(np.linalg.norm(rho))
            eps_stop = 1e-5 * norm if norm > 0.0 else 1e-8

        # Step 2: per-candidate position refinement (skip sub-threshold
        # powers: they are pruned this iteration regardless).
        pre_core = model.surrogate_core(b_diag, lam, rho)
        core_slack = _DESCENT_SLACK + abs(pre_core) * 1e-12
        before = model.snapshot()
        moved = _refine_sweep(model, b_diag, lam, cfg.line_search, hints,
                              min_power=tau)
        if moved:
            refined = np.maximum(model.solve_w(b_diag, lam), 0.0)
            if model.surrogate_core(b_diag, lam, refined) > pre_core + core_slack:
                refined = _nonneg_quadratic_descent(
                    model.h_matrix(b_diag, lam), model.t, refined
                )
            if model.surrogate_core(b_diag, lam, refined) > pre_core + core_slack:
                # Nonnegative powers cannot realize the unconstrained
                # improvement at the moved positions: undo this sweep.
                model.restore(before)
                refined = rho
            rho = refined

        current = objective(r_hat, model.psi, rho, lam, delta)
        history.append(current)

        # Step 3: reweighting anchored at the recorded powers.
        b_diag = 0.5 * surrogate_weights(rho, delta, cfg.rho_floor)
        anchor_rho = rho

        # Step 4: hard-threshold pruning, deferred if it would raise the
        # objective beyond round-off (keeps the recorded history monotone).
        keep = rho >= tau
        if not np.all(keep):
            if not np.any(keep):
                return LocalizationResult(
                    positions_m=np.zeros((0, 3)),
                    powers=np.zeros(0),
                    iterations=iterations,
                    final_objective=current,
                    converged=False,
                    objective_history=tuple(history),
                )
            pruned_model = model.subset(keep)
            pruned_rho = rho[keep]
            pruned_value = objective(r_hat, pruned_model.psi, pruned_rho, lam, delta)
            if pruned_value <= current * (1.0 + 1e-12) + _DESCENT_SLACK:
                model = pruned_model
                rho = pruned_rho
                b_diag = b_diag[keep]
                anchor_rho = rho
                hints = hints.subset(keep)

        # Step 5: stop once the power vector settles on the common support.
        if prev_rho is not None:
            common_prev = np.isin(prev_ids, model.ids)
            common_now = np.isin(model.ids, prev_ids)
            diff = float(
                np.linalg.norm(rho[common_now] - prev_rho[common_prev])
            )
            if diff <= eps_stop:
                converged = True
                break
        prev_rho = rho.copy()
        prev_ids = model.ids.copy()

    final_keep = rho >= tau
    return LocalizationResult(
        positions_m=model.positions[final_keep].copy(),
        powers=rho[final_keep].copy(),
        iterations=iterations,
        final_objective=history[-1] if history else float("nan"),
        converged=converged,
        objective_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# fixed-grid baseline
# ---------------------------------------------------------------------------
def _spectral_norm_sq(psi, iterations=40, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(psi.shape[1])
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(iterations):
        u = psi @ v
        v = (psi.conj().T @ u).real
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0
        value = norm
        v /= norm
    return float(value)


def solve_on_grid(
    measurement,
    trajectory,
    grid,
    cfg,
    carrier_frequency_hz,
    propagation_speed_mps=SPEED_OF_LIGHT_MPS,
    max_iterations=500,
    tol=1e-9,
):
    """Nonnegative l1 recovery on a fixed candidate grid.

    Minimizes ``lam * ||rho||_1 + ||r - Psi rho||^2`` over ``rho >= 0`` by
    accelerated proximal gradient with nonnegative soft thresholding.
    Positions are the grid points whose power clears the prune threshold.
    """
    if not isinstance(grid, dictionary.CandidateSet):
        grid = dictionary.CandidateSet(positions_m=grid)
    psi = dictionary.build(
        trajectory, grid, carrier_frequency_hz, propagation_speed_mps
    ).columns
    r_hat = np.asarray(measurement.stacked, dtype=complex)
    t = (psi.conj().T @ r_hat).real
    lam = cfg.lam
    if lam is None:
        lam = 0.2 * float(np.max(np.abs(t))) if t.size else 1.0

    lipschitz = 2.0 * _spectral_norm_sq(psi)
    if lipschitz <= 0.0:
        lipschitz = 1.0
    step = 1.0 / lipschitz

    rho = np.zeros(psi.shape[1])
    momentum = rho.copy()
    t_accel = 1.0
    last_value = np.inf
    converged = False
    iterations = 0
    for iteration in range(max_iterations):
        iterations = iteration + 1
        grad = 2.0 * (psi.conj().T @ (psi @ momentum - r_hat)).real
        new = np.maximum(momentum - step * grad - step * lam, 0.0)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_accel**2))
        momentum = new + ((t_accel - 1.0) / t_next) * (new - rho)
        rho = new
        t_accel = t_next
        resid = r_hat - psi @ rho
        value = lam * float(np.sum(rho)) + float(np.real(np.vdot(resid, resid)))
        if abs(last_value - value) <= tol * max(1.0, abs(value)):
            converged = True
            break
        last_value = value

    tau = cfg.prune_threshold
    if tau is None:
        peak = float(np.max(rho)) if rho.size else 0.0
        tau = 1e-2 * peak if peak > 0.0 else np.inf
    keep = rho >= tau
    resid = r_hat - psi @ rho
    final = lam * float(np.sum(rho)) + float(np.real(np.vdot(resid, resid)))
    return LocalizationResult(
        positions_m=grid.positions_m[keep].copy(),
        powers=rho[keep].copy(),
        iterations=iterations,
        final_objective=final,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# fixed-dictionary reweighted solve and the enumeration oracle
# ---------------------------------------------------------------------------
def reweighted_rho(
    r_hat, psi, lam, delta, max_iterations=200, tol=1e-10, rho_floor=1e-12
):
    """Iteratively reweighted power estimate on a fixed dictionary.

    The position-refinement step is skipped, so this is the pure
    reweighting loop: explicit clamped solve, then weight update, until
    the power vector settles.
    """
    b_diag = np.ones(psi.shape[1])
    rho = None
    for _ in range(max_iterations):
        new = update_rho(r_hat, psi, b_diag, lam)
        if rho is not None and float(np.linalg.norm(new - rho)) <= tol * max(
            1.0, float(np.linalg.norm(rho))
        ):
            rho = new
            break
        rho = new
        b_diag = 0.5 * surrogate_weights(rho, delta, rho_floor)
    return rho


def support_of(rho, rel_threshold=1e-3):
    """Indices with power above ``rel_threshold`` times the peak power."""
    rho = np.asarray(rho, dtype=float)
    peak = float(np.max(np.abs(rho))) if rho.size else 0.0
    if peak <= 0.0:
        return ()
    return tuple(np.flatnonzero(np.abs(rho) >= rel_threshold * peak))


def l0_oracle(r_hat, psi, lam, k_max):
    """Exhaustive support search for ``lam * ||x||_0 + ||Psi x - r||^2``.

    Enumerates every support of size at most ``k_max`` (guarded to
    ``P <= 12`` and ``k_max <= 4``), solves the unregularized real least
    squares on each, and returns the globally best
    ``(support, coefficients, objective)``.  Ties favor the smaller, then
    lexicographically first, support.
    """
    p_count = psi.shape[1]
    if p_count > 12 or k_max > 4:
        raise ValueError(
            f"combinatorial guard: need P <= 12 and k_max <= 4, "
            f"got P={p_count}, k_max={k_max}"
        )
    r_hat = np.asarray(r_hat, dtype=complex)
    base = float(np.real(np.vdot(r_hat, r_hat)))
    best_support = ()
    best_rho = np.zeros(p_count)
    best_objective = base
    for size in range(1, k_max + 1):
        for support in itertools.combinations(range(p_count), size):
            cols = psi[:, support]
            h = (cols.conj().T @ cols).real
            t = (cols.conj().T @ r_hat).real
            try:
                coef = np.linalg.solve(h, t)
            except np.linalg.LinAlgError:
                coef, *_ = np.linalg.lstsq(h, t, rcond=None)
            resid = r_hat - cols @ coef
            value = lam * size + float(np.real(np.vdot(resid, resid)))
            if value < best_objective:
                best_objective = value
                best_support = support
                best_rho = np.zeros(p_count)
                best_rho[list(support)] = coef
    return best_support, best_rho, best_objective
