"""Closed two-particle oracle: exact linear evolution of ``Psi(x1, x2)``.

The reduced dynamics of particle S is checked against this by preparing a
collision-correlated pair, letting it fly, emulating a registration on the
second particle R and tracing R out.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Literal

import numpy as np
import numpy.typing as npt

from ._core import (
    ComplexArray,
    DegenerateStateError,
    DensityMatrix,
    ParticleIndex,
    RealArray,
    SpatialGrid,
    StateAnnihilatedError,
    TwoParticleState,
    WaveFunction,
    fourier,
    inverse_fourier,
    partial_trace,
)
from .influence import check_dominance, epr_target_position, flat_top
from .propagator import PotentialSpec

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

InteractionKind = Literal["none", "contact", "tabulated"]
INTERACTION_KINDS: Final = frozenset({"none", "contact", "tabulated"})


@dataclass(frozen=True, slots=True, eq=False)
class InteractionSpec:
    """Pair interaction ``V(x1, x2)``.

    ``contact`` is a Gaussian of the separation with the given ``strength`` and
    ``range``.
    """

    kind: InteractionKind = "none"
    strength: float = 0.0
    range: float = 1.0
    values: npt.NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.kind not in INTERACTION_KINDS:
            msg = f"unknown interaction kind {self.kind!r}"
            raise ValueError(msg)
        if not (math.isfinite(self.strength) and self.range > 0):
            msg = "interaction strength must be finite and range positive"
            raise ValueError(msg)
        if self.kind == "tabulated":
            if self.values is None or not np.all(np.isfinite(self.values)):
                msg = "tabulated interaction needs finite values"
                raise ValueError(msg)

    @classmethod
    def none(cls) -> InteractionSpec:
        return cls()

    @classmethod
    def contact(cls, strength: float, range_: float) -> InteractionSpec:
        return cls(kind="contact", strength=strength, range=range_)

    def on_grid(self, grid1: SpatialGrid, grid2: SpatialGrid) -> RealArray:
        if self.kind == "none":
            return np.zeros((grid1.n, grid2.n))
        if self.kind == "contact":
            if self.range < 2.0 * max(grid1.dx, grid2.dx):
                msg = f"contact range {self.range} is below two grid spacings"
                raise ValueError(msg)
            sep = grid1.x[:, None] - grid2.x[None, :]
            return self.strength * np.exp(-(sep**2) / (2.0 * self.range**2))
        assert self.values is not None
        if self.values.shape != (grid1.n, grid2.n):
            msg = f"tabulated interaction shape {self.values.shape} does not match the grids"
            raise ValueError(msg)
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True, slots=True)
class EprPreparation:
    """Post-collision correlated pair, regularized from coincident positions.

    ``sigma_rel`` sets the spread of ``x1 - x2``, ``sigma_cm`` the spread of the
    mass-weighted center around ``x0``. ``p_scale`` is an optional mean momentum
    given to particle 1, with the opposite momentum on particle 2.
    """

    x0: float
    sigma_rel: float
    sigma_cm: float
    m1: float = 1.0
    m2: float = 1.0
    p_scale: float = 0.0
    t_collision: float = 0.0


@dataclass(frozen=True, slots=True)
class PositionMeasurement:
    x2m: float
    width: float


@dataclass(frozen=True, slots=True)
class MomentumMeasurement:
    p2m: float
    band: float


Observable = PositionMeasurement | MomentumMeasurement


@dataclass(frozen=True, slots=True)
class WidthSweepRow:
    width: float
    target: float
    peak: float
    error: float


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


def evolve_composite(
    state: TwoParticleState,
    dt: float,
    U1: PotentialSpec,
    U2: PotentialSpec,
    V: InteractionSpec,
) -> TwoParticleState:
    """One Strang split step of the two-particle Schrodinger equation."""
    if not dt > 0:
        msg = f"dt must be positive, got {dt}"
        raise ValueError(msg)
    g1, g2 = state.grid1, state.grid2
    hbar = g1.hbar
    potential = (
        U1.on_grid(g1, state.m1)[:, None]
        + U2.on_grid(g2, state.m2)[None, :]
        + V.on_grid(g1, g2)
    )
    half = np.exp(-0.5j * dt * potential / hbar)
    kinetic = np.exp(
        -1j
        * dt
        / hbar
        * (
            g1.p_fft[:, None] ** 2 / (2.0 * state.m1)
            + g2.p_fft[None, :] ** 2 / (2.0 * state.m2)
        )
    )
    amp = half * state.amp
    amp = np.fft.ifft2(kinetic * np.fft.fft2(amp))
    return state.with_amp(half * amp)


def evolve_composite_for(
    state: TwoParticleState,
    dt: float,
    steps: int,
    U1: PotentialSpec,
    U2: PotentialSpec,
    V: InteractionSpec,
) -> TwoParticleState:
    for _ in range(steps):
        state = evolve_composite(state, dt, U1, U2, V)
    return state


def prepare_epr(prep: EprPreparation, grid: SpatialGrid) -> TwoParticleState:
    """Regularized collision state on ``grid`` for both particles.

    ``Psi ~ exp(-r^2 / 4 sigma_rel^2) exp(-(X - x0)^2 / 4 sigma_cm^2)`` with
    ``r = x1 - x2`` and ``X`` the mass-weighted center, both taken as minimum
    images on the periodic grid. Total momentum is then narrow around zero
    while the relative momentum is broad.
    """
    floor = 2.0 * grid.dx
    if prep.sigma_rel < floor or prep.sigma_cm < floor:
        msg = (
            f"widths sigma_rel={prep.sigma_rel}, sigma_cm={prep.sigma_cm} "
            f"must be at least 2*dx = {floor}"
        )
        raise ValueError(msg)
    x1 = grid.x[:, None]
    x2 = grid.x[None, :]
    sep = grid.minimum_image(x1 - x2)
    offset = grid.minimum_image(x2 + prep.m1 / (prep.m1 + prep.m2) * sep - prep.x0)
    amp = np.exp(
        -(sep**2) / (4.0 * prep.sigma_rel**2)
        - offset**2 / (4.0 * prep.sigma_cm**2)
        + 1j * prep.p_scale * sep / grid.hbar
    )
    return TwoParticleState(grid, grid, amp, prep.m1, prep.m2).normalized()


def product_state(
    psi1: ComplexArray,
    psi2: ComplexArray,
    grid: SpatialGrid,
    m1: float = 1.0,
    m2: float = 1.0,
) -> TwoParticleState:
    """Uncorrelated pair ``psi1(x1) psi2(x2)`` on a shared grid."""
    return TwoParticleState(grid, grid, np.outer(psi1, psi2), m1, m2).normalized()


def pointer_state(
    psi: WaveFunction, m1: float = 1.0, m2: float = 1.0
) -> TwoParticleState:
    """Ideal position record: R sits exactly where S is, ``Psi = diag(psi)``."""
    amp = np.diag(psi.amp).astype(np.complex128)
    return TwoParticleState(psi.grid, psi.grid, amp, m1, m2).normalized()


# ---------------------------------------------------------------------------
# Registration on R
# ---------------------------------------------------------------------------


def measure_R(
    state: TwoParticleState,
    observable: Observable,
    gain: float,
    duration: float,
) -> TwoParticleState:
    """Amplify ``Psi`` where particle R shows ``observable``, then renormalize.

    Applies ``exp(gain * duration * b)`` along the ``x2`` index, with ``b`` the
    position window or, for momentum, the band in the ``p2`` representation.
    """
    if gain == 0:
        return state
    check_dominance(gain, duration)
    grid = state.grid2
    if isinstance(observable, PositionMeasurement):
        if observable.width < 2.0 * grid.dx:
            msg = f"measurement width {observable.width} is below 2*dx"
            raise ValueError(msg)
        b = flat_top(grid.periodic_offset(observable.x2m), observable.width, grid.dx)
        values = state.amp
    else:
        if observable.band < grid.dp * (1.0 - 1e-9):
            msg = f"band {observable.band} is below one momentum spacing {grid.dp}"
            raise ValueError(msg)
        b = flat_top(grid.p - observable.p2m, 2.0 * observable.band, grid.dp, taper=False)
        values = fourier(state.amp, grid, axis=1)

    if not np.any(np.abs(values) ** 2 * b[None, :] > 0):
        msg = "state annihilated: no amplitude inside the measurement window"
        raise StateAnnihilatedError(msg)
    values = values * np.exp(gain * duration * b)[None, :]
    if isinstance(observable, MomentumMeasurement):
        values = inverse_fourier(values, grid, axis=1)
    try:
        return state.with_amp(values).normalized()
    except DegenerateStateError as exc:
        msg = "state annihilated or diverged; reduce gain*duration"
        raise StateAnnihilatedError(msg) from exc


def reduced(state: TwoParticleState, keep: ParticleIndex) -> DensityMatrix:
    """Reduced density matrix of one particle."""
    return partial_trace(state, keep)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def entanglement_run(
    state: TwoParticleState,
    dt: float,
    steps: int,
    U1: PotentialSpec,
    U2: PotentialSpec,
    V: InteractionSpec,
) -> tuple[TwoParticleState, list[float]]:
    """Evolve and report the purity of particle 1 after every step."""
    purities = [reduced(state, 1).purity()]
    for _ in range(steps):
        state = evolve_composite(state, dt, U1, U2, V)
        purities.append(reduced(state, 1).purity())
    logger.info("entanglement run: purity %.4f -> %.4f", purities[0], purities[-1])
    return state, purities


def peak_position(rho: DensityMatrix) -> float:
    return float(rho.grid.x[int(np.argmax(rho.diagonal()))])


def width_sweep(
    prep: EprPreparation,
    grid: SpatialGrid,
    x2m: float,
    widths: Sequence[float],
    gain: float,
    duration: float,
    *,
    flight_time: float,
    dt: float,
) -> list[WidthSweepRow]:
    """Localization error of S against the measurement window width on R."""
    free = PotentialSpec.free()
    steps = max(1, round(flight_time / dt))
    flown = evolve_composite_for(
        prepare_epr(prep, grid), dt, steps, free, free, InteractionSpec.none()
    )
    target = epr_target_position(prep.x0, prep.m1, prep.m2, x2m)
    rows: list[WidthSweepRow] = []
    for width in widths:
        measured = measure_R(flown, PositionMeasurement(x2m, width), gain, duration)
        peak = peak_position(reduced(measured, 1))
        rows.append(WidthSweepRow(width, target, peak, abs(peak - target)))
        logger.debug("width %.3g: peak %.4g, target %.4g", width, peak, target)
    return rows
