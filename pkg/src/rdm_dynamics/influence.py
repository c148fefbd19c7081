"""Rate models ``Lambda(x, y, t)`` for the environment term of the reduced dynamics.

Every model yields a real, symmetric field. Position-space models act on
``rho(x, y)`` directly; :class:`EprMomentumGain` acts on ``rho~(p, q)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, ClassVar, Final, Literal

import numpy as np

from ._core import RealArray, Representation, SpatialGrid

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ._contract import InfluenceModel

logger = logging.getLogger(__name__)

# Finite stand-in for an "infinitely large" registration rate: G*T >= 30
# amplifies the selected region by at least e^30 relative to the rest.
DOMINANCE_THRESHOLD: Final = 30.0

ModelKind = Literal["zero", "detector", "epr-position", "epr-momentum", "dephased"]


@dataclass(frozen=True, slots=True, eq=False)
class RateField:
    """Rate values on the grid square, tagged with their representation."""

    values: RealArray
    representation: Representation = "position"
    is_zero: bool = False

    @classmethod
    def zero(cls, grid: SpatialGrid) -> RateField:
        return cls(np.zeros((grid.n, grid.n)), "position", is_zero=True)

    def diagonal(self) -> RealArray:
        return np.diag(self.values).copy()


def flat_top(
    offset: RealArray, width: float, spacing: float, *, taper: bool = True
) -> RealArray:
    """Indicator bump of full ``width`` with peak value 1.

    With ``taper`` the outer edge rolls off as ``cos^2`` over at most two grid
    spacings, which keeps the bump smooth enough for spectral stepping.
    """
    half = 0.5 * width
    d = np.abs(offset)
    if not taper:
        return np.where(d <= half + 1e-9 * spacing, 1.0, 0.0)
    roll = min(2.0 * spacing, 0.5 * half)
    core = half - roll
    edge = np.cos(0.5 * np.pi * (d - core) / roll) ** 2
    return np.where(d <= core, 1.0, np.where(d < half, edge, 0.0))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ZeroModel:
    """Closed-system limit: no environment term."""

    kind: ClassVar[str] = "zero"

    def field(self, grid: SpatialGrid, t: float) -> RateField:  # noqa: ARG002
        return RateField.zero(grid)


@dataclass(frozen=True, slots=True)
class Element:
    """One detector element with mass-center ``center`` and registration rate ``gain``."""

    center: float
    width: float
    gain: float
    fired: bool = False
    t_r: float | None = None

    def __post_init__(self) -> None:
        if not self.width > 0:
            msg = f"element width must be positive, got {self.width}"
            raise ValueError(msg)
        if not (self.gain >= 0 and math.isfinite(self.gain)):
            msg = f"element gain must be finite and >= 0, got {self.gain}"
            raise ValueError(msg)

    def bump(self, grid: SpatialGrid) -> RealArray:
        return flat_top(grid.periodic_offset(self.center), self.width, grid.dx)

    def support(self, grid: SpatialGrid) -> RealArray:
        """Boolean mask of grid points belonging to the element."""
        return np.abs(grid.periodic_offset(self.center)) < 0.5 * self.width


@dataclass(frozen=True, slots=True)
class DetectorArray:
    """Array of detector elements, of which at most one registers per run."""

    elements: tuple[Element, ...]

    kind: ClassVar[str] = "detector"

    def __post_init__(self) -> None:
        if not self.elements:
            msg = "detector array needs at least one element"
            raise ValueError(msg)

    @classmethod
    def uniform(
        cls, centers: Sequence[float], width: float, gain: float
    ) -> DetectorArray:
        return cls(tuple(Element(float(c), width, gain) for c in centers))

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def fired_index(self) -> int | None:
        for k, element in enumerate(self.elements):
            if element.fired:
                return k
        return None

    def check(self, grid: SpatialGrid) -> None:
        """Raise if elements are narrower than two cells or overlap on ``grid``."""
        claimed = np.zeros(grid.n, dtype=bool)
        for k, element in enumerate(self.elements):
            if element.width < 2.0 * grid.dx:
                msg = f"element {k} width {element.width} is below 2*dx = {2.0 * grid.dx}"
                raise ValueError(msg)
            mask = element.support(grid)
            if np.any(claimed & mask):
                msg = f"element {k} overlaps another element on the grid"
                raise ValueError(msg)
            claimed |= mask

    def field(self, grid: SpatialGrid, t: float) -> RateField:
        values = np.zeros((grid.n, grid.n))
        active = False
        for k, element in enumerate(self.elements):
            if not element.fired:
                continue
            if element.t_r is None:
                msg = f"element {k} is fired but has no registration time t_r"
                raise ValueError(msg)
            if t >= element.t_r and element.gain > 0:
                b = element.bump(grid)
                values += element.gain * np.outer(b, b)
                active = True
        if not active:
            return RateField.zero(grid)
        return RateField(values)


def fire_element(array: DetectorArray, k: int, t_r: float) -> DetectorArray:
    """Return a copy of ``array`` with element ``k`` registering from ``t_r`` on."""
    if not 0 <= k < len(array):
        msg = f"element index {k} out of range for {len(array)} elements"
        raise ValueError(msg)
    if array.fired_index is not None:
        msg = f"element {array.fired_index} already fired; one registration per run"
        raise ValueError(msg)
    elements = list(array.elements)
    elements[k] = replace(elements[k], fired=True, t_r=t_r)
    return DetectorArray(tuple(elements))


def epr_target_position(x0: float, m1: float, m2: float, x2m: float) -> float:
    """Position of S implied by measuring R at ``x2m`` after a collision at ``x0``.

    Follows from opposite momenta and a common origin:
    ``x1m = x0 - (m2 / m1) * (x2m - x0)``.
    """
    if not m1 > 0:
        msg = f"m1 must be positive, got {m1}"
        raise ValueError(msg)
    return x0 - (m2 / m1) * (x2m - x0)


@dataclass(frozen=True, slots=True)
class PairStatistics:
    """Gaussian position statistics of a collision pair at registration.

    ``mean1``/``mean2`` and ``var1``/``var2`` describe each particle, ``cov``
    their correlation. Build them with :meth:`after_flight`.
    """

    mean1: float
    mean2: float
    var1: float
    var2: float
    cov: float

    def __post_init__(self) -> None:
        if not (self.var1 > 0 and self.var2 > 0):
            msg = f"variances must be positive, got {self.var1}, {self.var2}"
            raise ValueError(msg)
        if self.cov**2 >= self.var1 * self.var2:
            msg = "covariance leaves no conditional spread"
            raise ValueError(msg)

    @classmethod
    def after_flight(
        cls,
        x0: float,
        sigma_rel: float,
        sigma_cm: float,
        m1: float,
        m2: float,
        elapsed: float,
        *,
        p_scale: float = 0.0,
        hbar: float = 1.0,
    ) -> PairStatistics:
        """Statistics of the prepared pair after ``elapsed`` of free flight.

        The center of mass and the relative coordinate spread independently,
        ``sigma(t)^2 = sigma^2 + (hbar t / 2 M sigma)^2`` with the total mass for
        the center and the reduced mass for the separation.
        """
        if not (m1 > 0 and m2 > 0):
            msg = f"masses must be positive, got m1={m1}, m2={m2}"
            raise ValueError(msg)
        if elapsed < 0:
            msg = f"elapsed time must be >= 0, got {elapsed}"
            raise ValueError(msg)
        total = m1 + m2
        reduced = m1 * m2 / total
        var_cm = sigma_cm**2 + (hbar * elapsed / (2.0 * total * sigma_cm)) ** 2
        var_rel = sigma_rel**2 + (hbar * elapsed / (2.0 * reduced * sigma_rel)) ** 2
        drift = p_scale * elapsed / reduced
        w1, w2 = m2 / total, m1 / total
        return cls(
            mean1=x0 + w1 * drift,
            mean2=x0 - w2 * drift,
            var1=var_cm + w1**2 * var_rel,
            var2=var_cm + w2**2 * var_rel,
            cov=var_cm - w1 * w2 * var_rel,
        )

    def registration_bump(
        self, grid: SpatialGrid, x2m: float, width: float, strength: float
    ) -> RealArray:
        """Bump on S whose gain reproduces a window registration on R.

        ``exp(strength * b(x)^2)`` is proportional to the probability that R
        sits in the window, weighted by ``exp(2 strength (window - 1))`` as the
        amplitude gain ``exp(strength * window)`` weights it, given S at ``x``.
        ``strength`` is the gain times its duration.
        """
        if not strength > 0:
            msg = f"registration strength must be positive, got {strength}"
            raise ValueError(msg)
        window = flat_top(grid.periodic_offset(x2m), width, grid.dx)
        weight = np.exp(2.0 * strength * (window - 1.0))
        partner = self.mean2 + self.cov / self.var1 * (grid.x - self.mean1)
        spread = self.var2 - self.cov**2 / self.var1
        offsets = grid.x[None, :] - partner[:, None]
        likelihood = np.exp(-(offsets**2) / (2.0 * spread)) @ weight
        peak = float(np.max(likelihood))
        if not peak > 0:
            msg = "registration window lies outside the partner's reach"
            raise ValueError(msg)
        with np.errstate(divide="ignore"):
            log_ratio = np.log(likelihood / peak)
        return np.sqrt(np.clip(1.0 + log_ratio / strength, 0.0, None))


@dataclass(frozen=True, slots=True)
class EprPositionGain:
    """Localizing gain on S at the position fixed by an R measurement.

    Without ``statistics`` the bump is a window of ``width`` at the kinematic
    :attr:`target`. With the pair statistics at registration and the gain
    ``duration`` the bump follows the conditional distribution of S instead,
    which reproduces a finite-width registration on R.
    """

    x0: float
    m1: float
    m2: float
    x2m: float
    t_r: float
    gain: float
    width: float
    t_collision: float = 0.0
    statistics: PairStatistics | None = None
    duration: float | None = None

    kind: ClassVar[str] = "epr-position"

    def __post_init__(self) -> None:
        if not (self.m1 > 0 and self.m2 > 0):
            msg = f"masses must be positive, got m1={self.m1}, m2={self.m2}"
            raise ValueError(msg)
        if not self.width > 0:
            msg = f"width must be positive, got {self.width}"
            raise ValueError(msg)
        if self.t_r < self.t_collision:
            msg = "registration time precedes the collision"
            raise ValueError(msg)
        if self.statistics is not None and not (
            self.duration is not None and self.duration > 0
        ):
            msg = "pair statistics need a positive gain duration"
            raise ValueError(msg)

    @property
    def target(self) -> float:
        return epr_target_position(self.x0, self.m1, self.m2, self.x2m)

    def bump(self, grid: SpatialGrid) -> RealArray:
        if self.width < 2.0 * grid.dx:
            msg = f"width {self.width} is below 2*dx = {2.0 * grid.dx}"
            raise ValueError(msg)
        if self.statistics is None:
            return flat_top(grid.periodic_offset(self.target), self.width, grid.dx)
        assert self.duration is not None
        return self.statistics.registration_bump(
            grid, self.x2m, self.width, self.gain * self.duration
        )

    def field(self, grid: SpatialGrid, t: float) -> RateField:
        if t < self.t_r or self.gain == 0:
            return RateField.zero(grid)
        b = self.bump(grid)
        return RateField(self.gain * np.outer(b, b))


@dataclass(frozen=True, slots=True)
class EprMomentumGain:
    """Momentum-band gain on S around ``-p2m`` after R registers momentum ``p2m``.

    ``band`` is the half-width of the band. Momenta off the band receive the
    constant rate :attr:`off_band_rate`. It is zero: the off-band branch
    ``hbar / (t - t_r)`` is singular at registration and microscopic afterwards.
    """

    p2m: float
    band: float
    t_r: float
    gain: float

    kind: ClassVar[str] = "epr-momentum"
    off_band_rate: ClassVar[float] = 0.0

    def bump(self, grid: SpatialGrid) -> RealArray:
        if self.band < grid.dp * (1.0 - 1e-9):
            msg = f"band {self.band} is below one momentum spacing {grid.dp}"
            raise ValueError(msg)
        return flat_top(grid.p + self.p2m, 2.0 * self.band, grid.dp, taper=False)

    def field(self, grid: SpatialGrid, t: float) -> RateField:
        b = self.bump(grid)
        if t < self.t_r:
            return RateField(np.zeros((grid.n, grid.n)), "momentum", is_zero=True)
        inside = np.outer(b, b)
        values = self.gain * inside + self.off_band_rate * (1.0 - inside)
        return RateField(values, "momentum")


@dataclass(frozen=True, slots=True)
class Dephased:
    """Position-space model plus a uniform dephasing loss ``-rate d(x, y)^2 / length^2``.

    ``d`` is the minimum-image separation on the periodic grid.
    """

    base: InfluenceModel
    rate: float = 0.0
    length: float = 1.0

    kind: ClassVar[str] = "dephased"

    def __post_init__(self) -> None:
        if self.rate < 0 or not self.length > 0:
            msg = f"dephasing needs rate >= 0 and length > 0, got {self.rate}, {self.length}"
            raise ValueError(msg)

    def field(self, grid: SpatialGrid, t: float) -> RateField:
        base = self.base.field(grid, t)
        if base.representation != "position":
            msg = "dephasing only combines with position-space models"
            raise ValueError(msg)
        if self.rate == 0:
            return base
        x = grid.x
        sep = grid.minimum_image(x[:, None] - x[None, :])
        loss = -self.rate * sep**2 / self.length**2
        return RateField(base.values + loss)


def rate(model: InfluenceModel, grid: SpatialGrid, t: float) -> RateField:
    """Rate field of ``model`` at time ``t``; non-finite values raise."""
    result = model.field(grid, t)
    if not result.is_zero and not np.all(np.isfinite(result.values)):
        msg = f"{model.kind} model produced a non-finite rate at t={t}"
        raise ValueError(msg)
    return result


def check_dominance(gain: float, duration: float) -> bool:
    """Whether ``gain * duration`` clears the dominance threshold; warns if not."""
    ok = gain * duration >= DOMINANCE_THRESHOLD
    if not ok:
        logger.warning(
            "gain*duration = %.3g is below the dominance threshold %.0f",
            gain * duration,
            DOMINANCE_THRESHOLD,
        )
    return ok
