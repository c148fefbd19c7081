"""Grids, states and representation changes shared by every other module."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Final, Literal

import numpy as np
import numpy.typing as npt
from scipy import linalg

logger = logging.getLogger(__name__)

ComplexArray = npt.NDArray[np.complex128]
RealArray = npt.NDArray[np.float64]

Representation = Literal["position", "momentum"]
ParticleIndex = Literal[1, 2]

MIN_POINTS: Final = 8
# Negative eigenvalues above this are reported as roundoff, not as a defect.
EIGENVALUE_TOLERANCE: Final = 1e-8


class SimulationError(RuntimeError):
    """A numerical breakdown during propagation, gain or normalization."""


class StateAnnihilatedError(SimulationError):
    """The trace of a state vanished or stopped being finite."""


class DegenerateStateError(SimulationError):
    """A state carries no usable probability mass."""


def _frozen(values: npt.ArrayLike, dtype: type[np.generic]) -> npt.NDArray[np.generic]:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, slots=True)
class SpatialGrid:
    """Uniform periodic grid on ``[x_min, x_max)`` with its momentum lattice.

    Parameters
    ----------
    n
        Number of points, even and at least 8.
    x_min, x_max
        Domain edges; ``x_max`` is identified with ``x_min``.
    hbar
        Reduced Planck constant fixing the momentum scale ``p = hbar k``.
    """

    n: int
    x_min: float
    x_max: float
    hbar: float = 1.0

    def __post_init__(self) -> None:
        if self.n < MIN_POINTS or self.n % 2:
            msg = f"grid needs an even number of points >= {MIN_POINTS}, got {self.n}"
            raise ValueError(msg)
        if not self.x_max > self.x_min:
            msg = f"x_max must exceed x_min, got [{self.x_min}, {self.x_max})"
            raise ValueError(msg)
        if not self.hbar > 0:
            msg = f"hbar must be positive, got {self.hbar}"
            raise ValueError(msg)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dp(self) -> float:
        """Spacing of the momentum lattice."""
        return 2.0 * math.pi * self.hbar / self.length

    @property
    def x(self) -> RealArray:
        return self.x_min + self.dx * np.arange(self.n, dtype=np.float64)

    @property
    def p(self) -> RealArray:
        """Momentum lattice in ascending (centered) order, ``k = -n/2 .. n/2 - 1``."""
        k = np.arange(-self.n // 2, self.n // 2, dtype=np.float64)
        return self.dp * k

    @property
    def p_fft(self) -> RealArray:
        """Momentum lattice in the native FFT ordering."""
        return 2.0 * math.pi * self.hbar * np.fft.fftfreq(self.n, d=self.dx)

    def index_of(self, x: float) -> int:
        """Nearest grid index to ``x``, wrapped onto the periodic domain."""
        return round((x - self.x_min) / self.dx) % self.n

    def minimum_image(self, d: npt.ArrayLike) -> RealArray:
        """Wrap separations onto ``[-length / 2, length / 2]``."""
        sep = np.asarray(d, dtype=np.float64)
        return sep - self.length * np.round(sep / self.length)

    def periodic_offset(self, x: float) -> RealArray:
        """Signed minimum-image distance from ``x`` to every grid point."""
        return self.minimum_image(self.x - x)


@dataclass(frozen=True, slots=True, eq=False)
class WaveFunction:
    """Complex amplitudes sampled on a grid."""

    grid: SpatialGrid
    amp: ComplexArray = field(repr=False)

    def __post_init__(self) -> None:
        amp = _frozen(self.amp, np.complex128)
        if amp.shape != (self.grid.n,):
            msg = f"amplitude shape {amp.shape} does not match grid size {self.grid.n}"
            raise ValueError(msg)
        object.__setattr__(self, "amp", amp)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2) * self.grid.dx)

    def normalized(self) -> WaveFunction:
        norm = self.norm()
        if not (norm > 0 and math.isfinite(norm)):
            msg = "degenerate state"
            raise DegenerateStateError(msg)
        return WaveFunction(self.grid, self.amp / math.sqrt(norm))


@dataclass(frozen=True, slots=True, eq=False)
class DensityMatrix:
    """Dense reduced density matrix ``rho[i, j] ~ rho(x_i, y_j)``.

    In the momentum representation the indices run over ``grid.p`` and the
    integration weight is ``grid.dp`` instead of ``grid.dx``.
    """

    grid: SpatialGrid
    rho: ComplexArray = field(repr=False)
    representation: Representation = "position"

    def __post_init__(self) -> None:
        rho = _frozen(self.rho, np.complex128)
        if rho.shape != (self.grid.n, self.grid.n):
            msg = f"matrix shape {rho.shape} does not match grid size {self.grid.n}"
            raise ValueError(msg)
        object.__setattr__(self, "rho", rho)

    @property
    def weight(self) -> float:
        return self.grid.dx if self.representation == "position" else self.grid.dp

    @property
    def coordinates(self) -> RealArray:
        return self.grid.x if self.representation == "position" else self.grid.p

    def diagonal(self) -> RealArray:
        """Real part of the diagonal, the probability density."""
        return np.real(np.diag(self.rho)).copy()

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)) * self.weight)

    def purity(self) -> float:
        return float(np.sum(np.abs(self.rho) ** 2) * self.weight**2)

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def with_rho(self, rho: npt.ArrayLike) -> DensityMatrix:
        return DensityMatrix(self.grid, np.asarray(rho), self.representation)


@dataclass(frozen=True, slots=True, eq=False)
class TwoParticleState:
    """Closed two-particle amplitude ``amp[i, j] ~ Psi(x1_i, x2_j)``."""

    grid1: SpatialGrid
    grid2: SpatialGrid
    amp: ComplexArray = field(repr=False)
    m1: float = 1.0
    m2: float = 1.0

    def __post_init__(self) -> None:
        amp = _frozen(self.amp, np.complex128)
        if amp.shape != (self.grid1.n, self.grid2.n):
            msg = (
                f"mismatched grids: amplitude shape {amp.shape} vs "
                f"({self.grid1.n}, {self.grid2.n})"
            )
            raise ValueError(msg)
        if self.grid1.hbar != self.grid2.hbar:
            msg = "mismatched grids: both particles must share hbar"
            raise ValueError(msg)
        if not (self.m1 > 0 and self.m2 > 0):
            msg = f"masses must be positive, got m1={self.m1}, m2={self.m2}"
            raise ValueError(msg)
        object.__setattr__(self, "amp", amp)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2) * self.grid1.dx * self.grid2.dx)

    def with_amp(self, amp: npt.ArrayLike) -> TwoParticleState:
        return TwoParticleState(
            self.grid1, self.grid2, np.asarray(amp), self.m1, self.m2
        )

    def normalized(self) -> TwoParticleState:
        norm = self.norm()
        if not (norm > 0 and math.isfinite(norm)):
            msg = "degenerate state"
            raise DegenerateStateError(msg)
        return self.with_amp(self.amp / math.sqrt(norm))


@dataclass(frozen=True, slots=True)
class DiagnosticsRecord:
    """Per-step scalars, in the column order of ``series.csv``."""

    t: float
    trace_pre_norm: float
    purity: float
    hermiticity_residual: float
    min_eig: float
    mean_x: float
    mean_p: float
    var_x: float
    continuity_residual_max: float = math.nan


SERIES_COLUMNS: Final = (
    "t",
    "trace_pre_norm",
    "purity",
    "hermiticity_residual",
    "min_eig",
    "mean_x",
    "mean_p",
    "var_x",
    "continuity_residual_max",
)


# ---------------------------------------------------------------------------
# State construction
# ---------------------------------------------------------------------------


def gaussian(
    grid: SpatialGrid, center: float, sigma: float, momentum: float = 0.0
) -> WaveFunction:
    """Normalized Gaussian packet with position spread ``sigma``.

    The packet is built on the minimum-image distance so it wraps smoothly
    across the periodic boundary.
    """
    if not sigma > 0:
        msg = f"sigma must be positive, got {sigma}"
        raise ValueError(msg)
    d = grid.periodic_offset(center)
    amp = np.exp(-(d**2) / (4.0 * sigma**2) + 1j * momentum * d / grid.hbar)
    return WaveFunction(grid, amp).normalized()


def pure_density(psi: WaveFunction) -> DensityMatrix:
    """Outer product ``psi(x) conj(psi(y))`` of a wave function."""
    norm = psi.norm()
    if not (norm > 0 and math.isfinite(norm)):
        msg = "degenerate state"
        raise DegenerateStateError(msg)
    return DensityMatrix(psi.grid, np.outer(psi.amp, psi.amp.conj()))


def fully_mixed(grid: SpatialGrid) -> DensityMatrix:
    """Maximally mixed state: a flat diagonal of unit trace."""
    return DensityMatrix(grid, np.eye(grid.n) / grid.length)


def mixture(states: list[DensityMatrix], weights: list[float]) -> DensityMatrix:
    """Convex combination of density matrices on one grid."""
    if len(states) != len(weights) or not states:
        msg = "mixture needs one weight per state and at least one state"
        raise ValueError(msg)
    grid = states[0].grid
    if any(s.grid != grid for s in states):
        msg = "mismatched grids in mixture"
        raise ValueError(msg)
    total = sum(weights)
    rho = sum((w / total) * s.rho for s, w in zip(states, weights, strict=True))
    return DensityMatrix(grid, np.asarray(rho))


def partial_trace(state: TwoParticleState, keep: ParticleIndex) -> DensityMatrix:
    """Reduce the two-particle state to the density matrix of particle ``keep``.

    ``keep=1`` returns ``sum_q Psi(x, q) conj(Psi(y, q)) dq``; ``keep=2`` traces
    over the first coordinate instead.
    """
    amp = state.amp
    if keep == 1:
        return DensityMatrix(state.grid1, amp @ amp.conj().T * state.grid2.dx)
    if keep == 2:
        return DensityMatrix(state.grid2, amp.T @ amp.conj() * state.grid1.dx)
    msg = f"keep must be 1 or 2, got {keep!r}"
    raise ValueError(msg)


# ---------------------------------------------------------------------------
# Representation changes
# ---------------------------------------------------------------------------


def _axis_shape(ndim: int, axis: int, n: int) -> tuple[int, ...]:
    shape = [1] * ndim
    shape[axis] = n
    return tuple(shape)


def fourier(values: npt.ArrayLike, grid: SpatialGrid, axis: int = 0) -> ComplexArray:
    """Continuum-normalized Fourier transform along ``axis``.

    Evaluates ``dx / sqrt(2 pi hbar) * sum_j f(x_j) exp(-i p x_j / hbar)`` on the
    centered lattice ``grid.p`` so that ``sum |f~|^2 dp == sum |f|^2 dx``.
    """
    a = np.asarray(values, dtype=np.complex128)
    scale = grid.dx / math.sqrt(2.0 * math.pi * grid.hbar)
    phase = np.exp(-1j * grid.p * grid.x_min / grid.hbar)
    out = np.fft.fftshift(np.fft.fft(a, axis=axis), axes=axis)
    return out * (scale * phase).reshape(_axis_shape(a.ndim, axis, grid.n))


def inverse_fourier(
    values: npt.ArrayLike, grid: SpatialGrid, axis: int = 0
) -> ComplexArray:
    """Exact inverse of :func:`fourier`."""
    a = np.asarray(values, dtype=np.complex128)
    scale = grid.dx / math.sqrt(2.0 * math.pi * grid.hbar)
    phase = np.exp(-1j * grid.p * grid.x_min / grid.hbar)
    a = a * (phase.conj() / scale).reshape(_axis_shape(a.ndim, axis, grid.n))
    return np.fft.ifft(np.fft.ifftshift(a, axes=axis), axis=axis)


def to_momentum(rho: DensityMatrix) -> DensityMatrix:
    """Transform ``rho(x, y)`` to ``rho~(p, q)`` on the centered momentum lattice."""
    if rho.representation != "position":
        msg = "to_momentum expects a position-representation density matrix"
        raise ValueError(msg)
    grid = rho.grid
    half = np.conj(fourier(np.conj(rho.rho), grid, axis=1))
    return DensityMatrix(grid, fourier(half, grid, axis=0), "momentum")


def to_position(rho: DensityMatrix) -> DensityMatrix:
    """Inverse of :func:`to_momentum`."""
    if rho.representation != "momentum":
        msg = "to_position expects a momentum-representation density matrix"
        raise ValueError(msg)
    grid = rho.grid
    half = np.conj(inverse_fourier(np.conj(rho.rho), grid, axis=1))
    return DensityMatrix(grid, inverse_fourier(half, grid, axis=0), "position")


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def min_eigenvalue(rho: DensityMatrix) -> float:
    """Smallest eigenvalue of the density operator ``rho * weight``."""
    hermitian = 0.5 * (rho.rho + rho.rho.conj().T) * rho.weight
    return float(linalg.eigvalsh(hermitian, subset_by_index=[0, 0])[0])


def diagnostics(
    rho: DensityMatrix,
    *,
    t: float = 0.0,
    trace_pre_norm: float | None = None,
    continuity_residual_max: float = math.nan,
) -> DiagnosticsRecord:
    """Summarize a density matrix.

    Moments are normalized by the current trace, so they stay meaningful for a
    state that has not been renormalized yet.
    """
    position = rho if rho.representation == "position" else to_position(rho)
    momentum = to_momentum(rho) if rho.representation == "position" else rho
    grid = rho.grid
    trace = position.trace()

    density_x = position.diagonal() * grid.dx
    density_p = momentum.diagonal() * grid.dp
    mean_x = float(np.sum(grid.x * density_x) / trace)
    var_x = float(np.sum(grid.x**2 * density_x) / trace - mean_x**2)
    mean_p = float(np.sum(grid.p * density_p) / np.sum(density_p))

    min_eig = min_eigenvalue(position)
    if min_eig < -EIGENVALUE_TOLERANCE * max(trace, 1.0):
        logger.warning("density matrix lost positivity: min eigenvalue %.3e", min_eig)

    return DiagnosticsRecord(
        t=t,
        trace_pre_norm=trace if trace_pre_norm is None else trace_pre_norm,
        purity=position.purity(),
        hermiticity_residual=position.hermiticity_residual(),
        min_eig=min_eig,
        mean_x=mean_x,
        mean_p=mean_p,
        var_x=var_x,
        continuity_residual_max=continuity_residual_max,
    )
