"""Nonlinear integrator: unitary split steps, elementwise gain, trace renormalization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Final, Literal

import numpy as np

from ._core import (
    DensityMatrix,
    DiagnosticsRecord,
    RealArray,
    StateAnnihilatedError,
    diagnostics,
    to_momentum,
    to_position,
)
from .influence import RateField, rate
from .propagator import PotentialSpec, vonneumann_step

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ._contract import InfluenceModel

logger = logging.getLogger(__name__)

Splitting = Literal["strang", "gain-first", "unitary-first"]
SPLITTINGS: Final = frozenset({"strang", "gain-first", "unitary-first"})


@dataclass(frozen=True, slots=True)
class EvolveConfig:
    """Time stepping parameters.

    ``normalize_every=None`` renormalizes only once, after the last step.
    """

    dt: float
    steps: int
    normalize_every: int | None = 1
    record_every: int = 1
    splitting: Splitting = "strang"

    def __post_init__(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            msg = f"dt must be positive and finite, got {self.dt}"
            raise ValueError(msg)
        if self.steps < 1:
            msg = f"steps must be >= 1, got {self.steps}"
            raise ValueError(msg)
        if self.normalize_every is not None and self.normalize_every < 1:
            msg = f"normalize_every must be >= 1, got {self.normalize_every}"
            raise ValueError(msg)
        if self.record_every < 1:
            msg = f"record_every must be >= 1, got {self.record_every}"
            raise ValueError(msg)
        if self.splitting not in SPLITTINGS:
            msg = f"unknown splitting {self.splitting!r}, expected one of {sorted(SPLITTINGS)}"
            raise ValueError(msg)

    @property
    def duration(self) -> float:
        return self.dt * self.steps


@dataclass(frozen=True, slots=True)
class FluxEntry:
    t: float
    trace_before: float
    log_gain: float


@dataclass(slots=True)
class NormFluxLog:
    """Pre-normalization traces, one entry per renormalization.

    ``log_gain`` sums ``ln(Tr after / Tr before)`` over the gain applications
    since the previous renormalization, so it is exactly zero while the rate
    vanishes.
    """

    entries: list[FluxEntry] = field(default_factory=list[FluxEntry])

    def append(self, t: float, trace_before: float, log_gain: float) -> None:
        if not trace_before > 0:
            msg = f"non-positive pre-normalization trace {trace_before} at t={t}"
            raise StateAnnihilatedError(msg)
        self.entries.append(FluxEntry(t, trace_before, log_gain))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_log_gain(self) -> float:
        return math.fsum(e.log_gain for e in self.entries)


@dataclass(frozen=True, slots=True, eq=False)
class RunResult:
    final: DensityMatrix
    series: list[DiagnosticsRecord]
    flux: NormFluxLog
    snapshots: dict[int, DensityMatrix]


# ---------------------------------------------------------------------------
# Elementary steps
# ---------------------------------------------------------------------------


def _apply_rate(rho: DensityMatrix, field_: RateField, dt: float) -> DensityMatrix:
    factor = np.exp(field_.values * dt)
    if field_.representation == "position":
        return rho.with_rho(rho.rho * factor)
    momentum = to_momentum(rho)
    return to_position(momentum.with_rho(momentum.rho * factor))


def gain_step(
    rho: DensityMatrix, model: InfluenceModel, t: float, dt: float
) -> DensityMatrix:
    """Multiply ``rho`` elementwise by ``exp(Lambda dt)``.

    Momentum-space rates are applied in the momentum representation. The trace
    is not preserved.
    """
    if not dt > 0:
        msg = f"dt must be positive, got {dt}"
        raise ValueError(msg)
    field_ = rate(model, rho.grid, t)
    if field_.is_zero:
        return rho
    return _apply_rate(rho, field_, dt)


def normalize(rho: DensityMatrix) -> tuple[DensityMatrix, float]:
    """Divide by the trace; return the new state and the trace it had."""
    trace = rho.trace()
    if not (trace > 0 and math.isfinite(trace)):
        msg = "state annihilated or diverged; reduce dt·G"
        raise StateAnnihilatedError(msg)
    return rho.with_rho(rho.rho / trace), trace


def register(
    rho: DensityMatrix, model: InfluenceModel, t: float, duration: float
) -> DensityMatrix:
    """Apply the gain of ``model`` at ``t`` for ``duration`` with the motion frozen.

    This is the instantaneous-registration limit, the reduced counterpart of
    an amplitude gain on the partner particle.
    """
    return normalize(gain_step(rho, model, t, duration))[0]


def _advance(
    rho: DensityMatrix,
    model: InfluenceModel,
    U: PotentialSpec,
    m: float,
    t: float,
    dt: float,
    splitting: Splitting,
) -> tuple[DensityMatrix, float]:
    """One unnormalized step; returns the state and the log trace change of the gain."""

    def gained(state: DensityMatrix, at: float) -> tuple[DensityMatrix, float]:
        out = gain_step(state, model, at, dt)
        if out is state:
            return state, 0.0
        return out, math.log(out.trace() / state.trace())

    if splitting == "strang":
        half = vonneumann_step(rho, 0.5 * dt, U, m)
        half, log_gain = gained(half, t + 0.5 * dt)
        return vonneumann_step(half, 0.5 * dt, U, m), log_gain
    if splitting == "gain-first":
        out, log_gain = gained(rho, t)
        return vonneumann_step(out, dt, U, m), log_gain
    out = vonneumann_step(rho, dt, U, m)
    return gained(out, t + dt)


def step(
    rho: DensityMatrix,
    model: InfluenceModel,
    U: PotentialSpec,
    m: float,
    t: float,
    dt: float,
    splitting: Splitting = "strang",
) -> tuple[DensityMatrix, DiagnosticsRecord]:
    """Half unitary step, gain, half unitary step, renormalize."""
    out, _ = _advance(rho, model, U, m, t, dt, splitting)
    out, trace_before = normalize(out)
    return out, diagnostics(out, t=t + dt, trace_pre_norm=trace_before)


# ---------------------------------------------------------------------------
# Continuity equation
# ---------------------------------------------------------------------------


def _spectral_derivative(values: np.ndarray, dx: float, axis: int) -> np.ndarray:
    n = values.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    shape = [1] * values.ndim
    shape[axis] = n
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis)


def flux_divergence(rho: DensityMatrix, m: float = 1.0) -> RealArray:
    """Divergence of the probability current on the diagonal.

    ``(i hbar / 2m) d/dx [d_y rho - d_x rho](x, y = x)`` for ``rho[i, j] = rho(x_i, y_j)``.
    """
    grid = rho.grid
    d_x = _spectral_derivative(rho.rho, grid.dx, axis=0)
    d_y = _spectral_derivative(rho.rho, grid.dx, axis=1)
    g = np.diag(d_y - d_x)
    div = 1j * grid.hbar / (2.0 * m) * _spectral_derivative(g, grid.dx, axis=0)
    return np.real(div)


def density_flux(rho: DensityMatrix, m: float = 1.0) -> RealArray:
    """Probability current ``j(x) = (hbar / m) Im d_x rho(x, y)|_{y=x}``."""
    grid = rho.grid
    d_x = _spectral_derivative(rho.rho, grid.dx, axis=0)
    return grid.hbar / m * np.imag(np.diag(d_x))


def source_density(rho: DensityMatrix, field_: RateField) -> RealArray:
    """Diagonal of the source term ``Lambda * rho`` in the position representation."""
    if field_.is_zero:
        return np.zeros(rho.grid.n)
    if field_.representation == "position":
        return np.real(np.diag(field_.values * rho.rho))
    momentum = to_momentum(rho)
    return to_position(momentum.with_rho(momentum.rho * field_.values)).diagonal()


@dataclass(slots=True)
class _ContinuityTrace:
    """Per-step ingredients of the continuity residual."""

    diagonals: list[RealArray] = field(default_factory=list[RealArray])
    balance: list[RealArray] = field(default_factory=list[RealArray])
    log_scales: list[float] = field(default_factory=list[float])

    def push(
        self,
        rho: DensityMatrix,
        field_: RateField,
        m: float,
        log_scale: float,
    ) -> None:
        self.diagonals.append(rho.diagonal())
        self.balance.append(flux_divergence(rho, m) - source_density(rho, field_))
        self.log_scales.append(log_scale)

    def residual(self, dt: float) -> RealArray:
        if len(self.diagonals) < 3:
            msg = "continuity residual needs at least 3 consecutive states"
            raise ValueError(msg)
        rows: list[RealArray] = []
        for k in range(1, len(self.diagonals) - 1):
            ahead = math.exp(self.log_scales[k + 1] - self.log_scales[k])
            behind = math.exp(self.log_scales[k - 1] - self.log_scales[k])
            d_t = (ahead * self.diagonals[k + 1] - behind * self.diagonals[k - 1]) / (2.0 * dt)
            rows.append(d_t + self.balance[k])
        return np.array(rows)


def continuity_residual(
    states: Sequence[DensityMatrix],
    model: InfluenceModel,
    dt: float,
    *,
    m: float = 1.0,
    t0: float = 0.0,
    log_scales: Sequence[float] | None = None,
) -> RealArray:
    """Discrete defect of ``d_t rho(x,x) + div j - Lambda rho(x,x)``.

    ``states`` are consecutive, ``dt`` apart, starting at ``t0``. When they were
    renormalized along the way pass the cumulative ``ln`` of the pre-normalization
    traces as ``log_scales`` so increments are taken before normalization.
    Returns one row per interior state.
    """
    if log_scales is not None and len(log_scales) != len(states):
        msg = "log_scales must match states one to one"
        raise ValueError(msg)
    scales = list(log_scales) if log_scales is not None else [0.0] * len(states)
    tracker = _ContinuityTrace()
    for k, rho in enumerate(states):
        tracker.push(rho, rate(model, rho.grid, t0 + k * dt), m, scales[k])
    return tracker.residual(dt)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def run(
    initial: DensityMatrix,
    model: InfluenceModel,
    U: PotentialSpec,
    m: float,
    config: EvolveConfig,
    *,
    t0: float = 0.0,
    snapshot_steps: Sequence[int] = (),
    track_continuity: bool | None = None,
) -> RunResult:
    """Integrate from ``initial`` for ``config.steps`` steps.

    Records diagnostics at step 0, every ``record_every`` steps and at the end.
    The continuity residual is filled in when every step is recorded, unless
    ``track_continuity`` says otherwise.
    """
    if track_continuity is None:
        track_continuity = config.record_every == 1
    dt = config.dt
    flux = NormFluxLog()
    series: list[DiagnosticsRecord] = [diagnostics(initial, t=t0)]
    wanted = set(snapshot_steps)
    snapshots: dict[int, DensityMatrix] = {0: initial} if 0 in wanted else {}
    tracker = _ContinuityTrace()
    recorded_steps = [0]

    rho = initial
    log_scale = 0.0
    pending_gain = 0.0
    if track_continuity:
        tracker.push(rho, rate(model, rho.grid, t0), m, log_scale)

    for k in range(1, config.steps + 1):
        t = t0 + (k - 1) * dt
        rho, log_gain = _advance(rho, model, U, m, t, dt, config.splitting)
        pending_gain += log_gain
        trace_before = rho.trace()
        last = k == config.steps
        every = config.normalize_every
        if last or (every is not None and k % every == 0):
            rho, trace_before = normalize(rho)
            flux.append(t + dt, trace_before, pending_gain)
            log_scale += math.log(trace_before)
            pending_gain = 0.0
            logger.debug("step %d trace before normalization %.6g", k, trace_before)
        if track_continuity:
            tracker.push(rho, rate(model, rho.grid, t + dt), m, log_scale)
        if last or k % config.record_every == 0:
            series.append(diagnostics(rho, t=t + dt, trace_pre_norm=trace_before))
            recorded_steps.append(k)
        if k in wanted:
            snapshots[k] = rho

    if track_continuity and config.steps >= 2:
        residual = tracker.residual(dt)
        peaks = np.max(np.abs(residual), axis=1)
        by_step = {k + 1: float(v) for k, v in enumerate(peaks)}
        series = [
            replace(rec, continuity_residual_max=by_step[s]) if s in by_step else rec
            for rec, s in zip(series, recorded_steps, strict=True)
        ]

    logger.info(
        "%s run: %d steps, final purity %.6f, total log gain %.4g",
        model.kind,
        config.steps,
        series[-1].purity,
        flux.total_log_gain,
    )
    return RunResult(rho, series, flux, snapshots)
