"""Linear propagation: analytic kernels, the time-sliced oracle and split-step stepping."""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Literal

import numpy as np
import numpy.typing as npt
from scipy import signal

from ._core import ComplexArray, DensityMatrix, RealArray, SpatialGrid, WaveFunction

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

PotentialKind = Literal["free", "harmonic", "barrier", "tabulated"]
POTENTIAL_KINDS: Final = frozenset({"free", "harmonic", "barrier", "tabulated"})


@dataclass(frozen=True, slots=True)
class PotentialSpec:
    """External potential ``U(x)``.

    Use the ``free``/``harmonic``/``barrier``/``tabulated`` constructors rather
    than filling fields by hand.
    """

    kind: PotentialKind = "free"
    omega: float = 0.0
    center: float = 0.0
    height: float = 0.0
    left: float = 0.0
    right: float = 0.0
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in POTENTIAL_KINDS:
            msg = f"unknown potential kind {self.kind!r}, expected one of {sorted(POTENTIAL_KINDS)}"
            raise ValueError(msg)
        if self.kind == "harmonic" and not self.omega > 0:
            msg = f"harmonic potential needs omega > 0, got {self.omega}"
            raise ValueError(msg)
        if self.kind == "barrier" and not self.right > self.left:
            msg = f"barrier needs left < right, got [{self.left}, {self.right}]"
            raise ValueError(msg)
        if self.kind == "tabulated":
            if not self.values:
                msg = "tabulated potential needs values"
                raise ValueError(msg)
            if not all(math.isfinite(v) for v in self.values):
                msg = "tabulated potential values must be finite"
                raise ValueError(msg)

    @classmethod
    def free(cls) -> PotentialSpec:
        return cls()

    @classmethod
    def harmonic(cls, omega: float, center: float = 0.0) -> PotentialSpec:
        return cls(kind="harmonic", omega=omega, center=center)

    @classmethod
    def barrier(cls, height: float, left: float, right: float) -> PotentialSpec:
        return cls(kind="barrier", height=height, left=left, right=right)

    @classmethod
    def tabulated(cls, values: Sequence[float]) -> PotentialSpec:
        return cls(kind="tabulated", values=tuple(float(v) for v in values))

    def on_grid(self, grid: SpatialGrid, m: float = 1.0) -> RealArray:
        """Evaluate ``U`` at every grid point."""
        if self.kind == "tabulated":
            if len(self.values) != grid.n:
                msg = f"tabulated potential has {len(self.values)} values, grid has {grid.n} points"
                raise ValueError(msg)
            return np.array(self.values, dtype=np.float64)
        return self.at(grid.x, m)

    def at(
        self, x: npt.ArrayLike, m: float = 1.0, grid: SpatialGrid | None = None
    ) -> RealArray:
        """Evaluate ``U`` at arbitrary points; tabulated values interpolate on ``grid``."""
        pts = np.asarray(x, dtype=np.float64)
        if self.kind == "free":
            return np.zeros_like(pts)
        if self.kind == "harmonic":
            return 0.5 * m * self.omega**2 * (pts - self.center) ** 2
        if self.kind == "barrier":
            inside = (pts >= self.left) & (pts < self.right)
            return np.where(inside, self.height, 0.0)
        if grid is None:
            msg = "tabulated potential needs its grid to interpolate off-grid points"
            raise ValueError(msg)
        return np.interp(
            pts, grid.x, np.array(self.values), period=grid.length
        ).astype(np.float64)


@dataclass(frozen=True, slots=True)
class KernelSample:
    """One value of a transition amplitude ``K(x, x0; t)``."""

    x: float
    x0: float
    t: float
    value: complex


@dataclass(frozen=True, slots=True)
class ConvergenceRow:
    """Time-sliced kernel error for one slice count."""

    slices: int
    relative_error: float
    sample: KernelSample


# ---------------------------------------------------------------------------
# Analytic kernels
# ---------------------------------------------------------------------------


def _smeared(
    prefactor: complex,
    quad: float,
    lin: npt.NDArray[np.float64],
    const: npt.NDArray[np.float64],
    x0: npt.NDArray[np.float64],
    width: float,
) -> ComplexArray:
    """``prefactor * exp(i (quad z^2 + lin z + const))`` averaged over a Gaussian in ``z``.

    The source is ``exp(-(z - x0)^2 / 2 width^2) / (sqrt(2 pi) width)``; with
    ``width == 0`` the kernel is evaluated at ``z = x0``.
    """
    phase = quad * x0**2 + lin * x0 + const
    if width == 0:
        return prefactor * np.exp(1j * phase)
    alpha = 1.0 / (2.0 * width**2) - 1j * quad
    beta = 1j * (2.0 * quad * x0 + lin)
    spread = np.sqrt(2.0 * width**2 * alpha)
    return prefactor / spread * np.exp(beta**2 / (4.0 * alpha) + 1j * phase)


def _check_width(width: float) -> None:
    if not (math.isfinite(width) and width >= 0):
        msg = f"source width must be finite and non-negative, got {width}"
        raise ValueError(msg)


def free_kernel(
    x: npt.ArrayLike,
    x0: npt.ArrayLike,
    t: float,
    m: float = 1.0,
    hbar: float = 1.0,
    *,
    width: float = 0.0,
) -> ComplexArray:
    """Free-particle propagator ``sqrt(m / 2 pi i hbar t) exp(i m (x - x0)^2 / 2 hbar t)``.

    The square root takes the principal branch. A positive ``width`` returns the
    kernel applied to a normalized Gaussian of that width centered on ``x0``,
    ``1 / sqrt(2 pi (width^2 + i hbar t / m))`` times the spread Gaussian.
    """
    if not t > 0:
        msg = "kernel requires positive time"
        raise ValueError(msg)
    _check_width(width)
    a = m / (2.0 * hbar * t)
    xa = np.asarray(x, dtype=np.float64)
    return _smeared(
        cmath.sqrt(m / (2j * math.pi * hbar * t)),
        a,
        -2.0 * a * xa,
        a * xa**2,
        np.asarray(x0, dtype=np.float64),
        width,
    )


def harmonic_kernel(
    x: npt.ArrayLike,
    x0: npt.ArrayLike,
    t: float,
    m: float = 1.0,
    omega: float = 1.0,
    hbar: float = 1.0,
    center: float = 0.0,
    *,
    width: float = 0.0,
) -> ComplexArray:
    """Mehler kernel of the oscillator ``U = m omega^2 (x - center)^2 / 2``.

    Valid for ``0 < omega t < pi``, before the first focal point. ``width``
    smears the source point as in :func:`free_kernel`.
    """
    if not t > 0:
        msg = "kernel requires positive time"
        raise ValueError(msg)
    s = math.sin(omega * t)
    if not 0 < omega * t < math.pi:
        msg = f"Mehler kernel needs 0 < omega*t < pi, got {omega * t}"
        raise ValueError(msg)
    _check_width(width)
    c = math.cos(omega * t)
    a = m * omega / (2.0 * hbar * s)
    xa = np.asarray(x, dtype=np.float64) - center
    return _smeared(
        cmath.sqrt(m * omega / (2j * math.pi * hbar * s)),
        a * c,
        -2.0 * a * xa,
        a * c * xa**2,
        np.asarray(x0, dtype=np.float64) - center,
        width,
    )


def apply_kernel(
    kernel: Callable[[RealArray, RealArray], ComplexArray], psi: WaveFunction
) -> WaveFunction:
    """Propagate ``psi`` by direct quadrature ``sum_j K(x_i, x_j) psi_j dx``."""
    x = psi.grid.x
    matrix = kernel(x[:, None], x[None, :])
    return WaveFunction(psi.grid, matrix @ psi.amp * psi.grid.dx)


# ---------------------------------------------------------------------------
# Time-sliced path integral
# ---------------------------------------------------------------------------

# Damping time of the convergence factor, in units of the total time.
DAMPING_TIME_FACTOR: Final = 20.0


def _check_slicing(t: float, slices: int) -> None:
    if not t > 0:
        msg = "kernel requires positive time"
        raise ValueError(msg)
    if slices < 1:
        msg = f"slices must be >= 1, got {slices}"
        raise ValueError(msg)


def _short_time_kernel(
    eta: npt.NDArray[np.float64], eps: complex, m: float, hbar: float
) -> ComplexArray:
    """``sqrt(m / 2 pi i hbar eps) exp(i m eta^2 / 2 hbar eps)`` for a complex slice time."""
    return cmath.sqrt(m / (2j * math.pi * hbar * eps)) * np.exp(
        1j * m * eta**2 / (2.0 * hbar * eps)
    )


@dataclass(frozen=True, slots=True)
class _Slicing:
    """Refined real-space quadrature for one slice count.

    ``points`` subdivide every grid cell ``refine`` times so the short-time
    chirp is sampled below its Nyquist rate across the whole box.
    """

    points: RealArray
    h: float
    eps: float
    eps_c: complex
    half: ComplexArray
    kernel: ComplexArray
    m: float
    hbar: float

    @classmethod
    def build(
        cls,
        grid: SpatialGrid,
        t: float,
        slices: int,
        U: PotentialSpec,
        m: float,
        damping_time: float | None,
    ) -> _Slicing:
        hbar = grid.hbar
        eps = t / slices
        tau = DAMPING_TIME_FACTOR * t if damping_time is None else damping_time
        if not tau > 0:
            msg = f"damping_time must be positive, got {tau}"
            raise ValueError(msg)
        eps_c = complex(eps, -(eps**2) / tau) if math.isfinite(tau) else complex(eps)
        h_max = math.pi * hbar * eps / (m * grid.length)
        refine = max(1, math.ceil(grid.dx / h_max))
        h = grid.dx / refine
        points = grid.x_min + h * np.arange(grid.n * refine)
        offsets = h * np.arange(-(points.size - 1), points.size)
        logger.debug(
            "time slicing: %d slices, %d quadrature points (refine %d)",
            slices,
            points.size,
            refine,
        )
        return cls(
            points=points,
            h=h,
            eps=eps,
            eps_c=eps_c,
            half=np.exp(-0.5j * eps * U.at(points, m, grid) / hbar),
            kernel=_short_time_kernel(offsets, eps_c, m, hbar),
            m=m,
            hbar=hbar,
        )

    def step(self, amp: ComplexArray) -> ComplexArray:
        """One slice ``int K_eps(x - z) e^{-i eps (U(x) + U(z)) / 2 hbar} amp(z) dz``."""
        conv = signal.fftconvolve(self.kernel, self.half * amp, mode="valid")
        return self.half * conv * self.h

    def finish(
        self, x: float, amp: ComplexArray, U: PotentialSpec, grid: SpatialGrid
    ) -> complex:
        """Last slice evaluated at the single end point ``x``."""
        end = np.exp(-0.5j * self.eps * float(U.at(x, self.m, grid)) / self.hbar)
        k = _short_time_kernel(x - self.points, self.eps_c, self.m, self.hbar)
        return complex(end * np.sum(k * self.half * amp) * self.h)


def timesliced_kernel(
    x: float,
    x0: float,
    t: float,
    slices: int,
    U: PotentialSpec,
    grid: SpatialGrid,
    m: float = 1.0,
    *,
    width: float = 0.0,
    damping_time: float | None = None,
) -> complex:
    """Broken-line path integral from ``x0`` to ``x``.

    Each slice contributes ``sqrt(m / 2 pi i hbar eps) exp(i/hbar [m eta^2 / 2 eps
    - eps (U(a) + U(b)) / 2])`` and every intermediate coordinate is integrated
    by quadrature on a refinement of ``grid`` fine enough to resolve the chirp.
    The slice time carries the convergence factor ``eps - i eps^2 / damping_time``
    (``damping_time`` defaults to ``20 t``; ``math.inf`` switches it off), whose
    effect vanishes as ``1 / slices``.

    A point source (``width == 0``) is only integrable over one slice, which
    returns the analytic short-time kernel. For more slices the source is a
    normalized Gaussian of ``width`` around ``x0``; compare against
    ``free_kernel(..., width=width)``.

    Raises
    ------
    ValueError
        For nonpositive ``t`` or ``slices``, or a point source with several slices.
    """
    _check_slicing(t, slices)
    _check_width(width)
    hbar = grid.hbar
    if width == 0:
        if slices > 1:
            msg = "a point source needs a positive width beyond one slice"
            raise ValueError(msg)
        pot = float(U.at(x, m, grid)) + float(U.at(x0, m, grid))
        return complex(free_kernel(x, x0, t, m, hbar)) * cmath.exp(-0.5j * t * pot / hbar)

    slicing = _Slicing.build(grid, t, slices, U, m, damping_time)
    z = slicing.points
    amp = np.exp(-((z - x0) ** 2) / (2.0 * width**2)) / (math.sqrt(2.0 * math.pi) * width)
    amp = amp.astype(np.complex128)
    for _ in range(slices - 1):
        amp = slicing.step(amp)
    return slicing.finish(x, amp, U, grid)


def kernel_convergence(
    grid: SpatialGrid,
    t: float,
    slices_list: Sequence[int],
    U: PotentialSpec,
    m: float = 1.0,
    *,
    center: float = 0.0,
    width: float = 1.0,
    damping_time: float | None = None,
) -> list[ConvergenceRow]:
    """Time-sliced kernel of a Gaussian source against its analytic value.

    Both sides are evaluated at the packet center. The oracle is
    :func:`free_kernel` for a free ``U`` and :func:`harmonic_kernel` for a
    harmonic one, smeared over the same source.
    """
    hbar = grid.hbar
    if U.kind == "free":
        reference = complex(free_kernel(center, center, t, m, hbar, width=width))
    elif U.kind == "harmonic":
        reference = complex(
            harmonic_kernel(center, center, t, m, U.omega, hbar, U.center, width=width)
        )
    else:
        msg = f"no analytic kernel for a {U.kind} potential"
        raise ValueError(msg)

    rows: list[ConvergenceRow] = []
    for slices in slices_list:
        value = timesliced_kernel(
            center, center, t, slices, U, grid, m, width=width, damping_time=damping_time
        )
        error = abs(value - reference) / abs(reference)
        logger.debug("slices=%d relative error %.3e", slices, error)
        sample = KernelSample(x=center, x0=center, t=t, value=value)
        rows.append(ConvergenceRow(slices, error, sample))
    return rows



# ---------------------------------------------------------------------------
# Split-step stepping
# ---------------------------------------------------------------------------


def _split_factors(
    grid: SpatialGrid, dt: float, U: PotentialSpec, m: float
) -> tuple[ComplexArray, ComplexArray]:
    if not dt > 0:
        msg = f"dt must be positive, got {dt}"
        raise ValueError(msg)
    hbar = grid.hbar
    half = np.exp(-0.5j * U.on_grid(grid, m) * dt / hbar)
    kinetic = np.exp(-1j * grid.p_fft**2 * dt / (2.0 * m * hbar))
    return half, kinetic


def _apply_split(
    values: ComplexArray, half: ComplexArray, kinetic: ComplexArray
) -> ComplexArray:
    """Strang step along axis 0 of ``values``."""
    if values.ndim == 2:
        half = half[:, None]
        kinetic = kinetic[:, None]
    out = half * values
    out = np.fft.ifft(kinetic * np.fft.fft(out, axis=0), axis=0)
    return half * out


def schrodinger_step(
    psi: WaveFunction, dt: float, U: PotentialSpec, m: float = 1.0
) -> WaveFunction:
    """One Strang split step ``e^{-iU dt/2} F^-1 e^{-i p^2 dt/2m} F e^{-iU dt/2}``."""
    half, kinetic = _split_factors(psi.grid, dt, U, m)
    return WaveFunction(psi.grid, _apply_split(psi.amp, half, kinetic))


def vonneumann_step(
    rho: DensityMatrix, dt: float, U: PotentialSpec, m: float = 1.0
) -> DensityMatrix:
    """Advance ``rho`` by conjugation with the one-step split unitary, ``S rho S^dagger``."""
    if rho.representation != "position":
        msg = "vonneumann_step expects a position-representation density matrix"
        raise ValueError(msg)
    half, kinetic = _split_factors(rho.grid, dt, U, m)
    left = _apply_split(rho.rho, half, kinetic)
    both = _apply_split(left.conj().T, half, kinetic).conj().T
    return rho.with_rho(both)
