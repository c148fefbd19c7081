from __future__ import annotations

import numpy as np
import pytest
from conftest import max_abs

from rdm_dynamics import (
    EprPositionGain,
    EprPreparation,
    EvolveConfig,
    InteractionSpec,
    MomentumMeasurement,
    PairStatistics,
    PositionMeasurement,
    PotentialSpec,
    SpatialGrid,
    StateAnnihilatedError,
    TwoParticleState,
    entanglement_run,
    evolve_composite,
    gaussian,
    measure_R,
    prepare_epr,
    product_state,
    pure_density,
    reduced,
    register,
    run,
    to_momentum,
    vonneumann_step,
    width_sweep,
)
from rdm_dynamics.composite import evolve_composite_for, peak_position
from rdm_dynamics.measurement import total_variation

FREE = PotentialSpec.free()


@pytest.fixture
def epr_grid() -> SpatialGrid:
    return SpatialGrid(512, -12.8, 12.8)


def _flown(grid: SpatialGrid, m2: float, flight: float = 0.6) -> TwoParticleState:
    prep = EprPreparation(x0=0.0, sigma_rel=0.1, sigma_cm=1.0, m1=1.0, m2=m2)
    steps = round(flight / 0.01)
    return evolve_composite_for(
        prepare_epr(prep, grid), 0.01, steps, FREE, FREE, InteractionSpec.none()
    )


# ---------------------------------------------------------------------------
# Interactions and preparation
# ---------------------------------------------------------------------------


def test_contact_interaction_needs_resolved_range() -> None:
    grid = SpatialGrid(64, -16.0, 16.0)
    with pytest.raises(ValueError, match="below two grid spacings"):
        InteractionSpec.contact(1.0, 0.5).on_grid(grid, grid)
    v = InteractionSpec.contact(2.0, 1.0).on_grid(grid, grid)
    assert v[10, 10] == 2.0
    assert np.array_equal(v, v.T)


def test_interaction_rejects_invalid() -> None:
    with pytest.raises(ValueError, match="unknown interaction kind"):
        InteractionSpec(kind="yukawa")  # type: ignore[arg-type]
    with pytest.raises(ValueError, match="needs finite values"):
        InteractionSpec(kind="tabulated")
    grid = SpatialGrid(16, -1.0, 1.0)
    table = InteractionSpec(kind="tabulated", values=np.zeros((8, 8)))
    with pytest.raises(ValueError, match="does not match the grids"):
        table.on_grid(grid, grid)


def test_prepare_epr_enforces_width_floor(epr_grid: SpatialGrid) -> None:
    prep = EprPreparation(x0=0.0, sigma_rel=0.05, sigma_cm=1.0)
    with pytest.raises(ValueError, match="must be at least 2\\*dx"):
        prepare_epr(prep, epr_grid)


def test_prepared_pair_is_correlated(epr_grid: SpatialGrid) -> None:
    prep = EprPreparation(x0=0.0, sigma_rel=0.1, sigma_cm=1.0)
    state = prepare_epr(prep, epr_grid)
    assert state.norm() == pytest.approx(1.0)
    rho1 = reduced(state, 1)
    assert rho1.trace() == pytest.approx(1.0)
    assert rho1.purity() < 0.2


def test_purity_grows_as_relative_spread_approaches_center_spread(
    epr_grid: SpatialGrid,
) -> None:
    # Equal masses factorize at sigma_rel = 2 sigma_cm.
    purities = [
        reduced(prepare_epr(EprPreparation(0.0, s, 1.0), epr_grid), 1).purity()
        for s in (0.1, 0.25, 0.5, 1.0, 2.0)
    ]
    assert all(a < b for a, b in zip(purities, purities[1:], strict=False))
    assert purities[-1] == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


def test_composite_step_preserves_norm() -> None:
    grid = SpatialGrid(64, -16.0, 16.0)
    state = product_state(
        gaussian(grid, -4.0, 1.0, 2.0).amp, gaussian(grid, 4.0, 1.0, -2.0).amp, grid
    )
    contact = InteractionSpec.contact(3.0, 1.0)
    for _ in range(20):
        state = evolve_composite(state, 0.01, FREE, FREE, contact)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="dt must be positive"):
        evolve_composite(state, 0.0, FREE, FREE, contact)


def test_uncoupled_pair_matches_single_particle_dynamics() -> None:
    grid = SpatialGrid(64, -16.0, 16.0)
    harmonic = PotentialSpec.harmonic(0.5)
    psi1 = gaussian(grid, -2.0, 1.0, 1.0)
    state = product_state(psi1.amp, gaussian(grid, 3.0, 1.5).amp, grid)
    rho = pure_density(psi1)
    for _ in range(30):
        state = evolve_composite(state, 0.02, harmonic, FREE, InteractionSpec.none())
        rho = vonneumann_step(rho, 0.02, harmonic)
    assert max_abs(reduced(state, 1).rho, rho.rho) <= 1e-10


def test_equal_mass_evolution_keeps_exchange_symmetry() -> None:
    grid = SpatialGrid(64, -16.0, 16.0)
    a = gaussian(grid, -3.0, 1.0, 2.0).amp
    b = gaussian(grid, 3.0, 1.5, -1.0).amp
    state = TwoParticleState(grid, grid, np.outer(a, b) + np.outer(b, a)).normalized()
    harmonic = PotentialSpec.harmonic(0.5)
    contact = InteractionSpec.contact(4.0, 1.0)
    for _ in range(50):
        state = evolve_composite(state, 0.01, harmonic, harmonic, contact)
    assert max_abs(state.amp, state.amp.T) <= 1e-10


def test_contact_interaction_entangles() -> None:
    grid = SpatialGrid(64, -16.0, 16.0)
    psi1 = gaussian(grid, -4.0, 1.0, 3.0).amp
    psi2 = gaussian(grid, 4.0, 1.0, -3.0).amp
    state = product_state(psi1, psi2, grid)

    _, free = entanglement_run(state, 0.01, 250, FREE, FREE, InteractionSpec.none())
    assert min(free) >= 1.0 - 1e-10

    _, coupled = entanglement_run(
        state, 0.01, 250, FREE, FREE, InteractionSpec.contact(9.0, 1.0)
    )
    assert len(coupled) == 251
    assert coupled[0] == pytest.approx(1.0)
    assert coupled[-1] < 0.95


# ---------------------------------------------------------------------------
# Registration on R
# ---------------------------------------------------------------------------


def test_zero_gain_leaves_state_unchanged(epr_grid: SpatialGrid) -> None:
    state = prepare_epr(EprPreparation(0.0, 0.1, 1.0), epr_grid)
    assert measure_R(state, PositionMeasurement(1.0, 1.0), 0.0, 0.1) is state


def test_measurement_windows_must_be_resolved(epr_grid: SpatialGrid) -> None:
    state = prepare_epr(EprPreparation(0.0, 0.1, 1.0), epr_grid)
    with pytest.raises(ValueError, match="below 2\\*dx"):
        measure_R(state, PositionMeasurement(1.0, 0.05), 300.0, 0.1)
    with pytest.raises(ValueError, match="below one momentum spacing"):
        measure_R(state, MomentumMeasurement(0.0, 0.5 * epr_grid.dp), 300.0, 0.1)


def test_empty_window_annihilates() -> None:
    grid = SpatialGrid(64, -16.0, 16.0)
    psi2 = np.where(grid.x <= 0.0, 1.0, 0.0).astype(np.complex128)
    state = product_state(gaussian(grid, 0.0, 2.0).amp, psi2, grid)
    with pytest.raises(StateAnnihilatedError, match="no amplitude"):
        measure_R(state, PositionMeasurement(8.0, 2.0), 300.0, 0.1)


def test_registration_on_an_uncorrelated_partner_leaves_s_alone(
    epr_grid: SpatialGrid,
) -> None:
    psi1 = gaussian(epr_grid, -2.0, 1.0, 1.5).amp
    psi2 = gaussian(epr_grid, 2.0, 1.5).amp
    state = product_state(psi1, psi2, epr_grid)
    measured = measure_R(state, PositionMeasurement(2.5, 1.0), 300.0, 0.1)
    assert max_abs(reduced(measured, 1).rho, reduced(state, 1).rho) <= 1e-8


@pytest.mark.parametrize("m2", [0.5, 1.0, 2.0])
def test_position_registration_localizes_partner(
    epr_grid: SpatialGrid, m2: float
) -> None:
    flown = _flown(epr_grid, m2)
    measured = measure_R(flown, PositionMeasurement(1.5, 1.0), 300.0, 0.1)
    rho1 = reduced(measured, 1)
    target = -(m2 / 1.0) * 1.5
    assert abs(peak_position(rho1) - target) <= 2.0 * max(0.1, 1.0)
    assert rho1.trace() == pytest.approx(1.0)


@pytest.mark.parametrize("m2", [0.5, 1.0, 2.0])
def test_registration_model_matches_composite(
    epr_grid: SpatialGrid, m2: float
) -> None:
    prep = EprPreparation(x0=0.0, sigma_rel=0.5, sigma_cm=1.0, m1=1.0, m2=m2)
    flown = evolve_composite_for(
        prepare_epr(prep, epr_grid), 0.01, 60, FREE, FREE, InteractionSpec.none()
    )
    composite = reduced(
        measure_R(flown, PositionMeasurement(1.5, 1.0), 300.0, 0.1), 1
    )
    statistics = PairStatistics.after_flight(0.0, 0.5, 1.0, 1.0, m2, 0.6)
    model = EprPositionGain(
        x0=0.0,
        m1=1.0,
        m2=m2,
        x2m=1.5,
        t_r=0.6,
        gain=300.0,
        width=1.0,
        statistics=statistics,
        duration=0.1,
    )
    registered = register(reduced(flown, 1), model, 0.6, 0.1)
    assert registered.trace() == pytest.approx(1.0)
    p_composite = composite.diagonal() / composite.diagonal().sum()
    p_model = registered.diagonal() / registered.diagonal().sum()
    assert total_variation(p_composite, p_model) <= 0.05


def test_box_model_misses_the_conditional_spread(epr_grid: SpatialGrid) -> None:
    flown = _flown(epr_grid, 1.0)
    composite = reduced(
        measure_R(flown, PositionMeasurement(1.5, 1.0), 300.0, 0.1), 1
    )
    box = EprPositionGain(
        x0=0.0, m1=1.0, m2=1.0, x2m=1.5, t_r=0.6, gain=300.0, width=1.0
    )
    result = run(
        reduced(flown, 1),
        box,
        FREE,
        1.0,
        EvolveConfig(dt=0.01, steps=10),
        t0=0.6,
    )
    assert abs(peak_position(result.final) - box.target) <= 0.5 + epr_grid.dx
    p_composite = composite.diagonal() / composite.diagonal().sum()
    p_box = result.final.diagonal() / result.final.diagonal().sum()
    assert total_variation(p_composite, p_box) > 0.05


def test_momentum_registration_fixes_partner_momentum() -> None:
    grid = SpatialGrid(256, -12.8, 12.8)
    dp = grid.dp
    prep = EprPreparation(x0=0.0, sigma_rel=0.25, sigma_cm=256.0)
    measured = measure_R(
        prepare_epr(prep, grid), MomentumMeasurement(4 * dp, 3 * dp), 300.0, 0.1
    )
    momentum = to_momentum(reduced(measured, 1))
    band = np.abs(grid.p + 4 * dp) <= 3 * dp * (1.0 + 1e-9)
    assert float(np.sum(momentum.diagonal()[band])) * dp >= 0.99


def test_width_sweep_rows() -> None:
    grid = SpatialGrid(256, -12.8, 12.8)
    prep = EprPreparation(x0=0.0, sigma_rel=0.25, sigma_cm=1.0)
    rows = width_sweep(
        prep, grid, 1.5, [1.0, 2.0], 300.0, 0.1, flight_time=0.6, dt=0.01
    )
    assert [r.width for r in rows] == [1.0, 2.0]
    for row in rows:
        assert row.target == pytest.approx(-1.5)
        assert row.error == pytest.approx(abs(row.peak - row.target))
        assert row.error <= 2.0 * max(0.25, row.width)
