from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
import pytest
from conftest import eight_elements

from rdm_dynamics import (
    Dephased,
    DetectorArray,
    Element,
    EprMomentumGain,
    EprPositionGain,
    PairStatistics,
    RateField,
    SpatialGrid,
    ZeroModel,
    check_dominance,
    epr_target_position,
    fire_element,
    rate,
)
from rdm_dynamics.influence import DOMINANCE_THRESHOLD, flat_top


class _Broken:
    kind = "broken"

    def field(self, grid: SpatialGrid, t: float) -> RateField:  # noqa: ARG002
        return RateField(np.full((grid.n, grid.n), np.nan))


# ---------------------------------------------------------------------------
# Bumps
# ---------------------------------------------------------------------------


def test_flat_top_shape(detector_grid: SpatialGrid) -> None:
    b = flat_top(detector_grid.periodic_offset(0.0), 3.0, detector_grid.dx)
    assert b.max() == 1.0
    assert b.min() == 0.0
    assert b[detector_grid.index_of(0.0)] == 1.0
    assert b[detector_grid.index_of(1.25)] == pytest.approx(0.5)
    assert b[detector_grid.index_of(1.5)] == 0.0
    assert np.array_equal(b[1:], b[1:][::-1])


def test_crisp_flat_top_is_an_indicator() -> None:
    offsets = np.arange(-5.0, 6.0)
    b = flat_top(offsets, 6.0, 1.0, taper=False)
    assert b.tolist() == [0, 0, 1, 1, 1, 1, 1, 1, 1, 0, 0]


# ---------------------------------------------------------------------------
# Detector arrays
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("width", "gain", "match"),
    [(0.0, 1.0, "width must be positive"), (1.0, -1.0, "gain must be finite")],
)
def test_element_rejects_invalid(width: float, gain: float, match: str) -> None:
    with pytest.raises(ValueError, match=match):
        Element(0.0, width, gain)


def test_detector_check(detector_grid: SpatialGrid) -> None:
    eight_elements(100.0).check(detector_grid)
    with pytest.raises(ValueError, match="below 2\\*dx"):
        DetectorArray.uniform([0.0], width=0.3, gain=1.0).check(detector_grid)
    with pytest.raises(ValueError, match="overlaps"):
        DetectorArray.uniform([0.0, 1.0], width=3.0, gain=1.0).check(detector_grid)


def test_unfired_detector_has_zero_rate(detector_grid: SpatialGrid) -> None:
    field = eight_elements(100.0).field(detector_grid, 1.0)
    assert field.is_zero
    assert not np.any(field.values)


def test_fired_element_rate(detector_grid: SpatialGrid) -> None:
    detector = fire_element(eight_elements(100.0), 5, t_r=0.5)
    assert detector.fired_index == 5
    assert rate(detector, detector_grid, 0.25).is_zero

    field = rate(detector, detector_grid, 0.5)
    assert not field.is_zero
    assert np.array_equal(field.values, field.values.T)
    i = detector_grid.index_of(4.5)
    assert field.values[i, i] == 100.0
    assert field.diagonal()[detector_grid.index_of(-4.5)] == 0.0


def test_one_registration_per_run() -> None:
    detector = fire_element(eight_elements(1.0), 0, t_r=0.0)
    with pytest.raises(ValueError, match="already fired"):
        fire_element(detector, 1, t_r=0.0)
    with pytest.raises(ValueError, match="out of range"):
        fire_element(eight_elements(1.0), 8, t_r=0.0)


def test_fired_element_needs_registration_time(detector_grid: SpatialGrid) -> None:
    detector = DetectorArray((Element(0.0, 3.0, 1.0, fired=True),))
    with pytest.raises(ValueError, match="no registration time"):
        detector.field(detector_grid, 0.0)


def test_detector_rate_ignores_element_order(detector_grid: SpatialGrid) -> None:
    elements = tuple(
        replace(e, gain=50.0 * (k + 1), fired=True, t_r=0.0)
        for k, e in enumerate(eight_elements(1.0).elements)
    )
    forward = DetectorArray(elements).field(detector_grid, 0.0)
    shuffled = DetectorArray(elements[::-1]).field(detector_grid, 0.0)
    assert np.array_equal(forward.values, shuffled.values)


# ---------------------------------------------------------------------------
# EPR models
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("x0", "m1", "m2", "x2m", "expected"),
    [
        (0.0, 1.0, 1.0, 3.0, -3.0),
        (0.0, 1.0, 2.0, 3.0, -6.0),
        (1.0, 1.0, 0.5, 3.0, 0.0),
    ],
)
def test_epr_target_position(
    x0: float, m1: float, m2: float, x2m: float, expected: float
) -> None:
    assert epr_target_position(x0, m1, m2, x2m) == pytest.approx(expected)


def test_epr_position_gain(detector_grid: SpatialGrid) -> None:
    model = EprPositionGain(
        x0=0.0, m1=1.0, m2=2.0, x2m=1.5, t_r=0.2, gain=50.0, width=1.0
    )
    assert model.target == pytest.approx(-3.0)
    assert model.field(detector_grid, 0.1).is_zero
    diag = model.field(detector_grid, 0.3).diagonal()
    assert detector_grid.x[int(np.argmax(diag))] == pytest.approx(-3.0, abs=0.5)
    assert diag.max() == 50.0


def test_epr_position_gain_rejects_invalid(detector_grid: SpatialGrid) -> None:
    with pytest.raises(ValueError, match="precedes the collision"):
        EprPositionGain(
            0.0, 1.0, 1.0, 1.0, t_r=0.0, gain=1.0, width=1.0, t_collision=1.0
        )
    with pytest.raises(ValueError, match="masses must be positive"):
        EprPositionGain(0.0, 0.0, 1.0, 1.0, t_r=0.0, gain=1.0, width=1.0)
    narrow = EprPositionGain(0.0, 1.0, 1.0, 1.0, t_r=0.0, gain=1.0, width=0.1)
    with pytest.raises(ValueError, match="below 2\\*dx"):
        narrow.field(detector_grid, 0.0)


def test_pair_statistics_after_flight() -> None:
    at_collision = PairStatistics.after_flight(0.5, 0.2, 1.0, 1.0, 1.0, 0.0)
    assert at_collision.mean1 == at_collision.mean2 == 0.5
    assert at_collision.var1 == pytest.approx(1.0 + 0.01)
    assert at_collision.cov == pytest.approx(1.0 - 0.01)

    flown = PairStatistics.after_flight(
        0.0, 0.2, 1.0, 1.0, 3.0, 2.0, p_scale=0.5, hbar=1.0
    )
    # Reduced mass 3/4, so the separation drifts by 0.5 * 2 / 0.75.
    assert flown.mean1 - flown.mean2 == pytest.approx(4.0 / 3.0)
    assert flown.mean1 == pytest.approx(0.75 * 4.0 / 3.0)
    assert flown.cov < 0.0
    with pytest.raises(ValueError, match="elapsed time"):
        PairStatistics.after_flight(0.0, 0.2, 1.0, 1.0, 1.0, -1.0)
    with pytest.raises(ValueError, match="no conditional spread"):
        PairStatistics(0.0, 0.0, 1.0, 1.0, 1.0)


def test_registration_bump_follows_the_partner(detector_grid: SpatialGrid) -> None:
    statistics = PairStatistics(0.0, 0.0, 1.0, 1.0, -0.8)
    bump = statistics.registration_bump(detector_grid, 1.5, 1.0, 30.0)
    assert bump.max() == 1.0
    assert np.all(bump >= 0.0)
    peak = detector_grid.x[int(np.argmax(bump))]
    assert peak == pytest.approx(-1.5 / 0.8, abs=detector_grid.dx)
    with pytest.raises(ValueError, match="strength must be positive"):
        statistics.registration_bump(detector_grid, 1.5, 1.0, 0.0)


def test_epr_position_gain_with_statistics(detector_grid: SpatialGrid) -> None:
    statistics = PairStatistics.after_flight(0.0, 0.5, 1.0, 1.0, 1.0, 0.6)
    with pytest.raises(ValueError, match="positive gain duration"):
        EprPositionGain(
            0.0, 1.0, 1.0, 1.5, t_r=0.6, gain=300.0, width=1.0, statistics=statistics
        )
    model = EprPositionGain(
        0.0,
        1.0,
        1.0,
        1.5,
        t_r=0.6,
        gain=300.0,
        width=1.0,
        statistics=statistics,
        duration=0.1,
    )
    diag = model.field(detector_grid, 0.6).diagonal()
    assert diag.max() == pytest.approx(300.0)
    assert np.allclose(diag, 300.0 * model.bump(detector_grid) ** 2)
    assert replace(model, gain=0.0).field(detector_grid, 0.6).is_zero


def test_epr_momentum_gain(detector_grid: SpatialGrid) -> None:
    dp = detector_grid.dp
    model = EprMomentumGain(p2m=4 * dp, band=3 * dp, t_r=0.0, gain=300.0)
    field = model.field(detector_grid, 0.0)
    assert field.representation == "momentum"
    inside = detector_grid.p[field.diagonal() > 0]
    assert len(inside) == 7
    assert inside.mean() == pytest.approx(-4 * dp)
    assert EprMomentumGain.off_band_rate == 0.0


def test_epr_momentum_band_needs_one_spacing(detector_grid: SpatialGrid) -> None:
    model = EprMomentumGain(p2m=0.0, band=0.5 * detector_grid.dp, t_r=0.0, gain=1.0)
    with pytest.raises(ValueError, match="below one momentum spacing"):
        model.field(detector_grid, 0.0)


# ---------------------------------------------------------------------------
# Dephasing and validation
# ---------------------------------------------------------------------------


def test_dephasing_suppresses_coherences(grid: SpatialGrid) -> None:
    field = Dephased(ZeroModel(), rate=2.0, length=0.5).field(grid, 0.0)
    assert not field.is_zero
    assert np.all(field.diagonal() == 0.0)
    assert field.values[0, 1] == pytest.approx(-2.0 * grid.dx**2 / 0.25)
    assert np.array_equal(field.values, field.values.T)


def test_dephasing_wraps_around_the_grid(grid: SpatialGrid) -> None:
    field = Dephased(ZeroModel(), rate=2.0, length=0.5).field(grid, 0.0)
    assert field.values[0, -1] == pytest.approx(field.values[0, 1])
    assert field.values.min() >= -2.0 * (0.5 * grid.length) ** 2 / 0.25 - 1e-9


def test_zero_dephasing_passes_base_through(grid: SpatialGrid) -> None:
    assert Dephased(ZeroModel()).field(grid, 0.0).is_zero


def test_dephasing_rejects_momentum_models(grid: SpatialGrid) -> None:
    base = EprMomentumGain(p2m=0.0, band=grid.dp, t_r=0.0, gain=1.0)
    with pytest.raises(ValueError, match="position-space"):
        Dephased(base, rate=1.0).field(grid, 0.0)
    with pytest.raises(ValueError, match="rate >= 0"):
        Dephased(ZeroModel(), rate=-1.0)


def test_rate_rejects_non_finite(grid: SpatialGrid) -> None:
    with pytest.raises(ValueError, match="non-finite rate"):
        rate(_Broken(), grid, 0.0)


def test_dominance_criterion(caplog: pytest.LogCaptureFixture) -> None:
    assert DOMINANCE_THRESHOLD == 30.0
    assert check_dominance(3000.0, 0.01)
    with caplog.at_level(logging.WARNING, logger="rdm_dynamics.influence"):
        assert not check_dominance(100.0, 0.1)
    assert "below the dominance threshold" in caplog.text
