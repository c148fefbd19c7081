"""Structural contract for the influence models consumed by the integrator.

Defines :class:`InfluenceModel` and statically asserts that every concrete
model satisfies it. Dropping ``kind`` or changing the ``field`` signature on a
model fails ``pyright src/`` at the matching ``_check_*`` line.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

if TYPE_CHECKING:
    from ._core import SpatialGrid
    from .influence import RateField


@runtime_checkable
class InfluenceModel(Protocol):
    """Anything that can supply the rate field ``Lambda`` at a time ``t``."""

    # Read-only so the ClassVar string constants on the models satisfy it.
    @property
    def kind(self) -> str: ...

    def field(self, grid: SpatialGrid, t: float) -> RateField: ...


if TYPE_CHECKING:
    from .influence import (
        Dephased,
        DetectorArray,
        EprMomentumGain,
        EprPositionGain,
        ZeroModel,
    )

    def _check_zero(m: ZeroModel) -> InfluenceModel:
        return m

    def _check_detector(m: DetectorArray) -> InfluenceModel:
        return m

    def _check_epr_position(m: EprPositionGain) -> InfluenceModel:
        return m

    def _check_epr_momentum(m: EprMomentumGain) -> InfluenceModel:
        return m

    def _check_dephased(m: Dephased) -> InfluenceModel:
        return m
