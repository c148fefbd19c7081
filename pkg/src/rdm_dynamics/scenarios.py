"""Named scenarios: build the objects a configuration describes, run them, write artifacts.

Every artifact is a CSV file with a header row and 17 significant digits, so
identical configurations produce byte-identical output.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Final, NamedTuple

import numpy as np

from ._core import (
    SERIES_COLUMNS,
    DensityMatrix,
    SpatialGrid,
    TwoParticleState,
    WaveFunction,
    gaussian,
    pure_density,
    to_momentum,
)
from ._version import version as package_version
from .composite import (
    EprPreparation,
    InteractionSpec,
    MomentumMeasurement,
    PositionMeasurement,
    entanglement_run,
    evolve_composite_for,
    measure_R,
    peak_position,
    prepare_epr,
    product_state,
    reduced,
    width_sweep,
)
from .config import ScenarioConfig, ScenarioName, render_config
from .evolve import EvolveConfig, RunResult, density_flux, register, run
from .influence import (
    DetectorArray,
    Dephased,
    EprMomentumGain,
    EprPositionGain,
    PairStatistics,
    ZeroModel,
    epr_target_position,
    fire_element,
)
from .measurement import (
    EnsembleConfig,
    detector_comparison,
    element_weights,
    ensemble_report,
    sample_element,
    total_variation,
)
from .propagator import PotentialSpec, kernel_convergence, schrodinger_step

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

    from ._contract import InfluenceModel
    from .config import PhysicsSection

logger = logging.getLogger(__name__)

# Full matrices above this size are dumped as binary rather than CSV.
RAW_DUMP_MIN_N: Final = 256

# Largest acceptable total-variation gap between a reduced model and its oracle.
ORACLE_TV_TOLERANCE: Final = 0.05


def _fmt(value: object) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


@dataclass(slots=True)
class _Artifacts:
    """Writes the files of one scenario run and remembers their names."""

    out_dir: Path
    formats: frozenset[str]
    written: list[str] = field(default_factory=list[str])
    notes: list[str] = field(default_factory=list[str])

    def table(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[object]]
    ) -> None:
        path = self.out_dir / name
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows([_fmt(v) for v in row] for row in rows)
        self.written.append(name)
        logger.debug("wrote %s", path)

    def series(self, result: RunResult) -> None:
        self.table(
            "series.csv",
            SERIES_COLUMNS,
            ([getattr(rec, c) for c in SERIES_COLUMNS] for rec in result.series),
        )

    def snapshot(self, step: int, rho: DensityMatrix, m: float) -> None:
        x = rho.grid.x
        self.table(f"rho_diag_{step}.csv", ("x", "rho"), zip(x, rho.diagonal(), strict=True))
        if "abs" in self.formats:
            path = self.out_dir / f"rho_abs_{step}.csv"
            with path.open("w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow([f"col_{j}" for j in range(rho.grid.n)])
                writer.writerows([_fmt(v) for v in row] for row in np.abs(rho.rho))
            self.written.append(path.name)
        if "flux" in self.formats:
            j = density_flux(rho, m)
            self.table(f"flux_{step}.csv", ("x", "j"), zip(x, j, strict=True))
        if "raw" in self.formats and rho.grid.n > RAW_DUMP_MIN_N:
            name = f"rho_raw_{step}.bin"
            np.asarray(rho.rho, dtype="<c16").tofile(self.out_dir / name)
            self.written.append(name)
            self.notes.append(f"{name} = complex128 little-endian {rho.grid.n}x{rho.grid.n}")

    def run_result(self, result: RunResult, m: float) -> None:
        self.series(result)
        for step in sorted(result.snapshots):
            self.snapshot(step, result.snapshots[step], m)

    def manifest(self, config: ScenarioConfig) -> None:
        lines = [
            f"# rdm-dynamics {package_version}",
            render_config(config).rstrip("\n"),
            "",
            "[artifacts]",
            f"version = {package_version}",
            f"files = {', '.join(self.written)}",
            *self.notes,
        ]
        (self.out_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_grid(config: ScenarioConfig, n: int | None = None) -> SpatialGrid:
    g = config.grid
    return SpatialGrid(n or g.n, g.x_min, g.x_max, hbar=config.physics.hbar)


def build_potential(physics: PhysicsSection) -> PotentialSpec:
    if physics.potential == "harmonic":
        return PotentialSpec.harmonic(physics.omega, physics.center)
    if physics.potential == "barrier":
        return PotentialSpec.barrier(
            physics.barrier_height, physics.barrier_left, physics.barrier_right
        )
    return PotentialSpec.free()


def build_evolve(config: ScenarioConfig, steps: int | None = None) -> EvolveConfig:
    e = config.evolve
    every = None if e.normalize_every == "end" else e.normalize_every
    return EvolveConfig(
        dt=e.dt,
        steps=steps or e.steps,
        normalize_every=every,
        record_every=e.record_every,
        splitting=e.splitting,
    )


def build_packet(config: ScenarioConfig, grid: SpatialGrid) -> WaveFunction:
    s = config.state
    return gaussian(grid, s.center, s.sigma, s.momentum)


def _dephased(model: InfluenceModel, physics: PhysicsSection) -> InfluenceModel:
    if physics.dephasing_rate == 0:
        return model
    return Dephased(model, physics.dephasing_rate, physics.dephasing_length)


def _snapshot_steps(config: ScenarioConfig, steps: int) -> tuple[int, ...]:
    chosen = config.output.snapshots
    if chosen is None:
        return (0, steps)
    return tuple(s for s in chosen if s <= steps)


def _epr_preparation(config: ScenarioConfig) -> EprPreparation:
    e = config.epr
    return EprPreparation(
        x0=e.x0,
        sigma_rel=e.sigma_rel,
        sigma_cm=e.sigma_cm,
        m1=config.physics.mass,
        m2=config.physics.mass2,
        p_scale=e.p_scale,
    )


def _flight(config: ScenarioConfig, grid: SpatialGrid) -> tuple[TwoParticleState, int]:
    free = PotentialSpec.free()
    steps = round(config.epr.flight_time / config.evolve.dt)
    state = prepare_epr(_epr_preparation(config), grid)
    flown = evolve_composite_for(
        state, config.evolve.dt, steps, free, free, InteractionSpec.none()
    )
    return flown, steps


def _measurement_evolve(config: ScenarioConfig) -> EvolveConfig:
    return build_evolve(config, steps=max(1, round(config.epr.duration / config.evolve.dt)))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def _closed(config: ScenarioConfig, out: _Artifacts) -> None:
    grid = build_grid(config)
    evolve = build_evolve(config)
    model = _dephased(ZeroModel(), config.physics)
    result = run(
        pure_density(build_packet(config, grid)),
        model,
        build_potential(config.physics),
        config.physics.mass,
        evolve,
        snapshot_steps=_snapshot_steps(config, evolve.steps),
    )
    out.run_result(result, config.physics.mass)


def _position_measurement(config: ScenarioConfig, out: _Artifacts) -> None:
    grid = build_grid(config)
    d = config.detector
    assert d.centers is not None
    detector = DetectorArray.uniform(d.centers, d.width, d.gain)
    detector.check(grid)
    initial = pure_density(build_packet(config, grid))
    potential = build_potential(config.physics)
    evolve = build_evolve(config)
    m = config.physics.mass

    if d.fire is None:
        ensemble = EnsembleConfig(
            n_runs=config.ensemble.n_runs,
            seed=config.ensemble.seed,
            detector=detector,
            initial=initial,
            evolve=evolve,
            potential=potential,
            mass=m,
            t_r=d.t_r,
            rule=config.ensemble.rule,
            weights=tuple(d.weights) if d.weights is not None else None,
        )
        report = ensemble_report(ensemble, workers=config.ensemble.workers)
        out.table(
            "ensemble.csv",
            (
                "element",
                "center",
                "born_weight",
                "firing_weight",
                "frequency",
                "count",
                "mean_mass",
            ),
            zip(
                range(len(detector)),
                d.centers,
                report.born_weights,
                report.firing_weights,
                report.frequencies,
                report.counts,
                report.mean_element_masses,
                strict=True,
            ),
        )
        out.notes.append(f"tv_distance = {_fmt(report.tv_distance)}")
        fired = sample_element(ensemble, 0)
    else:
        fired = d.fire

    out.notes.append(f"fired_element = {fired}")
    model = _dephased(fire_element(detector, fired, d.t_r), config.physics)
    result = run(
        initial,
        model,
        potential,
        m,
        evolve,
        snapshot_steps=_snapshot_steps(config, evolve.steps),
    )
    out.run_result(result, m)


def _epr_position(config: ScenarioConfig, out: _Artifacts) -> None:
    e = config.epr
    assert e.x2m is not None
    grid = build_grid(config, e.grid_n)
    flown, flight_steps = _flight(config, grid)
    t_r = flight_steps * config.evolve.dt
    m1, m2 = config.physics.mass, config.physics.mass2

    measured = measure_R(flown, PositionMeasurement(e.x2m, e.width), e.gain, e.duration)
    oracle = reduced(measured, 1)

    statistics = PairStatistics.after_flight(
        e.x0,
        e.sigma_rel,
        e.sigma_cm,
        m1,
        m2,
        t_r,
        p_scale=e.p_scale,
        hbar=config.physics.hbar,
    )
    model = EprPositionGain(
        e.x0,
        m1,
        m2,
        e.x2m,
        t_r=t_r,
        gain=e.gain,
        width=e.width,
        statistics=statistics,
        duration=e.duration,
    )
    registered = register(reduced(flown, 1), model, t_r, e.duration)

    evolve = _measurement_evolve(config)
    result = run(
        reduced(flown, 1),
        model,
        PotentialSpec.free(),
        m1,
        evolve,
        t0=t_r,
        snapshot_steps=(0, evolve.steps),
    )
    out.run_result(result, m1)

    target = epr_target_position(e.x0, m1, m2, e.x2m)
    p_oracle = oracle.diagonal() * grid.dx
    p_model = registered.diagonal() * grid.dx
    tv = total_variation(p_oracle / p_oracle.sum(), p_model / p_model.sum())
    if tv > ORACLE_TV_TOLERANCE:
        logger.warning(
            "registration model is %.3g from the composite oracle in total variation",
            tv,
        )
    out.table(
        "epr.csv",
        ("x", "composite_rho1", "influence_rho1"),
        zip(grid.x, oracle.diagonal(), registered.diagonal(), strict=True),
    )
    out.table(
        "epr_summary.csv",
        ("target", "composite_peak", "influence_peak", "tv_distance"),
        [(target, peak_position(oracle), peak_position(registered), tv)],
    )
    out.notes.append("influence_rho1 = gain applied at t_r with the motion frozen")
    out.notes.append("series, snapshots = gain run over the registration duration")
    if e.sweep_widths:
        rows = width_sweep(
            _epr_preparation(config),
            grid,
            e.x2m,
            e.sweep_widths,
            e.gain,
            e.duration,
            flight_time=e.flight_time,
            dt=config.evolve.dt,
        )
        out.table(
            "width_sweep.csv",
            ("width", "target", "peak", "error"),
            ((r.width, r.target, r.peak, r.error) for r in rows),
        )


def _band_mass(rho: DensityMatrix, center: float, band: float) -> float:
    grid = rho.grid
    marginal = to_momentum(rho).diagonal() * grid.dp
    inside = np.abs(grid.p - center) <= band + 1e-9 * grid.dp
    return float(marginal[inside].sum() / marginal.sum())


def _epr_momentum(config: ScenarioConfig, out: _Artifacts) -> None:
    e = config.epr
    assert e.p2m is not None
    grid = build_grid(config, e.grid_n)
    flown, flight_steps = _flight(config, grid)
    t_r = flight_steps * config.evolve.dt
    band = e.band_spacings * grid.dp

    measured = measure_R(flown, MomentumMeasurement(e.p2m, band), e.gain, e.duration)
    oracle = reduced(measured, 1)

    evolve = _measurement_evolve(config)
    result = run(
        reduced(flown, 1),
        EprMomentumGain(e.p2m, band, t_r=t_r, gain=e.gain),
        PotentialSpec.free(),
        config.physics.mass,
        evolve,
        t0=t_r,
        snapshot_steps=(0, evolve.steps),
    )
    out.run_result(result, config.physics.mass)

    out.table(
        "momentum.csv",
        ("p", "composite_rho1", "influence_rho1"),
        zip(
            grid.p,
            np.real(to_momentum(oracle).diagonal()),
            np.real(to_momentum(result.final).diagonal()),
            strict=True,
        ),
    )
    out.table(
        "epr_summary.csv",
        ("target", "band", "composite_band_mass", "influence_band_mass"),
        [
            (
                -e.p2m,
                band,
                _band_mass(oracle, -e.p2m, band),
                _band_mass(result.final, -e.p2m, band),
            )
        ],
    )


def _kernel_validation(config: ScenarioConfig, out: _Artifacts) -> None:
    grid = build_grid(config)
    k = config.kernel
    rows = kernel_convergence(
        grid,
        k.t,
        k.slices,
        build_potential(config.physics),
        config.physics.mass,
        center=k.center,
        width=k.sigma,
        damping_time=k.damping_time,
    )
    out.table(
        "kernel_convergence.csv",
        ("slices", "relative_error", "x", "x0", "t", "value_re", "value_im"),
        (
            (
                r.slices,
                r.relative_error,
                r.sample.x,
                r.sample.x0,
                r.sample.t,
                r.sample.value.real,
                r.sample.value.imag,
            )
            for r in rows
        ),
    )


def _oracle_comparison(config: ScenarioConfig, out: _Artifacts) -> None:
    grid = build_grid(config)
    evolve = build_evolve(config)
    potential = build_potential(config.physics)
    m = config.physics.mass
    psi = build_packet(config, grid)
    recorded = sorted({*range(0, evolve.steps + 1, evolve.record_every), evolve.steps})
    result = run(pure_density(psi), ZeroModel(), potential, m, evolve, snapshot_steps=recorded)
    out.run_result(result, m)

    rows: list[tuple[float, float]] = []
    amp = psi.amp
    for k in range(evolve.steps + 1):
        if k > 0:
            amp = schrodinger_step(WaveFunction(grid, amp), evolve.dt, potential, m).amp
        if k in result.snapshots:
            exact = np.outer(amp, amp.conj())
            diff = float(np.max(np.abs(result.snapshots[k].rho - exact)))
            rows.append((k * evolve.dt, diff))
    out.table("oracle.csv", ("t", "max_abs_difference"), rows)

    d = config.detector
    if d.centers is not None:
        detector = DetectorArray.uniform(d.centers, d.width, d.gain)
        detector.check(grid)
        if d.fire is None:
            fired = int(np.argmax(element_weights(pure_density(psi), detector)))
        else:
            fired = d.fire
        comparison = detector_comparison(psi, detector, fired, d.duration, d.t_r)
        out.table(
            "detector_oracle.csv",
            (
                "element",
                "center",
                "born_weight",
                "pointer_weight",
                "influence_mass",
                "composite_mass",
            ),
            zip(
                range(len(detector)),
                d.centers,
                comparison.born_weights,
                comparison.pointer_weights,
                comparison.influence_masses,
                comparison.composite_masses,
                strict=True,
            ),
        )
        out.notes.append(f"detector_fired_element = {fired}")
        out.notes.append(f"detector_tv_distance = {_fmt(comparison.tv_distance)}")
        if comparison.tv_distance > ORACLE_TV_TOLERANCE:
            logger.warning(
                "detector registration is %.3g from the pointer oracle in total variation",
                comparison.tv_distance,
            )

    c = config.composite
    cgrid = build_grid(config, c.grid_n)
    half = 0.5 * c.separation
    pair = product_state(
        gaussian(cgrid, -half, c.sigma, c.momentum).amp,
        gaussian(cgrid, half, c.sigma, -c.momentum).amp,
        cgrid,
        config.physics.mass,
        config.physics.mass2,
    )
    interaction = (
        InteractionSpec.contact(c.strength, c.range)
        if c.interaction == "contact"
        else InteractionSpec.none()
    )
    free = PotentialSpec.free()
    _, purities = entanglement_run(pair, evolve.dt, c.steps, free, free, interaction)
    out.table(
        "entanglement.csv",
        ("t", "purity"),
        ((k * evolve.dt, p) for k, p in enumerate(purities)),
    )


class _Scenario(NamedTuple):
    description: str
    execute: Callable[[ScenarioConfig, _Artifacts], None]


_REGISTRY: Final[dict[ScenarioName, _Scenario]] = {
    "closed": _Scenario("closed-system evolution, no environment term", _closed),
    "position-measurement": _Scenario(
        "detector registration and Born ensemble", _position_measurement
    ),
    "epr-position": _Scenario("EPR position correlation", _epr_position),
    "epr-momentum": _Scenario("EPR momentum correlation", _epr_momentum),
    "kernel-validation": _Scenario("time-sliced kernel convergence", _kernel_validation),
    "oracle-comparison": _Scenario(
        "reduced dynamics against the pure-state oracle", _oracle_comparison
    ),
}


def scenario_names() -> list[ScenarioName]:
    return list(_REGISTRY)


def run_scenario(config: ScenarioConfig) -> list[Path]:
    """Execute ``config.scenario`` and write its artifacts to ``config.output.out_dir``.

    Returns
    -------
    list[Path]
        Every file written, ``manifest.txt`` last.
    """
    try:
        scenario = _REGISTRY[config.scenario]
    except KeyError:
        msg = f"unknown scenario {config.scenario!r}, expected one of {scenario_names()}"
        raise ValueError(msg) from None

    out_dir = Path(config.output.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = _Artifacts(out_dir, frozenset(config.output.formats))
    logger.info("running %s: %s", config.scenario, scenario.description)
    scenario.execute(config, out)
    out.manifest(config)
    logger.info("wrote %d files to %s", len(out.written) + 1, out_dir)
    return [out_dir / name for name in [*out.written, "manifest.txt"]]
