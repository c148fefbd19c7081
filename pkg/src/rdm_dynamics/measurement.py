"""Which detector element registers, and how often.

Draws use a counter-based generator keyed by ``(seed, run_index)`` so any
subset of runs can be replayed or executed in parallel without changing a
single outcome.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Final, Literal

import numpy as np

from ._core import (
    DegenerateStateError,
    DensityMatrix,
    RealArray,
    WaveFunction,
    pure_density,
)
from .composite import PositionMeasurement, measure_R, pointer_state, reduced
from .evolve import EvolveConfig, register, run
from .influence import DetectorArray, check_dominance, fire_element

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .propagator import PotentialSpec

logger = logging.getLogger(__name__)

FiringRule = Literal["born", "custom"]
# Keeps the Philox counters of neighbouring runs 2**128 blocks apart.
_COUNTER_SHIFT: Final = 128


@dataclass(frozen=True, slots=True, eq=False)
class EnsembleConfig:
    """Everything needed to replay one detector ensemble."""

    n_runs: int
    seed: int
    detector: DetectorArray
    initial: DensityMatrix
    evolve: EvolveConfig
    potential: PotentialSpec
    mass: float = 1.0
    t_r: float = 0.0
    rule: FiringRule = "born"
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            msg = f"n_runs must be >= 1, got {self.n_runs}"
            raise ValueError(msg)
        if not 0 <= self.seed < 2**64:
            msg = f"seed must be an unsigned 64-bit integer, got {self.seed}"
            raise ValueError(msg)
        self.detector.check(self.initial.grid)
        if self.rule == "custom":
            if self.weights is None or len(self.weights) != len(self.detector):
                msg = "custom rule needs one weight per detector element"
                raise ValueError(msg)
            if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
                msg = "weights must be nonnegative and not all zero"
                raise ValueError(msg)


@dataclass(frozen=True, slots=True)
class EnsembleReport:
    """Aggregate of an ensemble, indexed by detector element.

    ``tv_distance`` compares the empirical frequencies with the firing weights,
    which equal the Born weights under the default rule.
    """

    born_weights: tuple[float, ...]
    firing_weights: tuple[float, ...]
    frequencies: tuple[float, ...]
    counts: tuple[int, ...]
    tv_distance: float
    mean_element_masses: tuple[float, ...]
    purity_min: float
    purity_mean: float
    purity_max: float


def element_masses(rho: DensityMatrix, detector: DetectorArray) -> RealArray:
    """Probability ``int_element rho(x, x) dx`` inside each element."""
    grid = rho.grid
    diag = rho.diagonal()
    return np.array(
        [float(np.sum(diag[e.support(grid)]) * grid.dx) for e in detector.elements]
    )


def element_weights(
    rho: DensityMatrix,
    detector: DetectorArray,
    weights: Sequence[float] | None = None,
) -> RealArray:
    """Registration probabilities ``w_k M_k / sum_j w_j M_j`` for element masses ``M``.

    Uniform ``weights`` give the Born weights of the elements.
    """
    masses = element_masses(rho, detector)
    if weights is not None:
        masses = masses * np.asarray(weights, dtype=np.float64)
    total = float(np.sum(masses))
    if not total > 0:
        msg = "state misses detector"
        raise DegenerateStateError(msg)
    return masses / total


def generator(seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for run ``run_index`` of ensemble ``seed``."""
    return np.random.Generator(
        np.random.Philox(key=seed, counter=run_index << _COUNTER_SHIFT)
    )


def _firing_weights(config: EnsembleConfig) -> RealArray:
    weights = config.weights if config.rule == "custom" else None
    return element_weights(config.initial, config.detector, weights)


def sample_element(config: EnsembleConfig, run_index: int) -> int:
    """Draw the registering element for one run."""
    p = _firing_weights(config)
    return int(generator(config.seed, run_index).choice(len(p), p=p))


def collapse(config: EnsembleConfig, k: int) -> DensityMatrix:
    """Fire element ``k`` at ``t_r`` and integrate to the end of the run."""
    gain = config.detector.elements[k].gain
    check_dominance(gain, config.evolve.duration - config.t_r)
    fired = fire_element(config.detector, k, config.t_r)
    return run(config.initial, fired, config.potential, config.mass, config.evolve).final


def sample_and_collapse(
    config: EnsembleConfig, run_index: int
) -> tuple[int, DensityMatrix]:
    """Draw an element and return it with the collapsed final state."""
    k = sample_element(config, run_index)
    return k, collapse(config, k)


def total_variation(
    p: Sequence[float] | RealArray, q: Sequence[float] | RealArray
) -> float:
    """Total-variation distance between two probability vectors."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def ensemble_report(config: EnsembleConfig, workers: int = 1) -> EnsembleReport:
    """Sample ``n_runs`` registrations and summarize them.

    The collapsed state depends only on the fired element, so each distinct
    element is integrated once and shared by every run that selected it.
    """
    p = _firing_weights(config)
    fired = [
        int(generator(config.seed, i).choice(len(p), p=p)) for i in range(config.n_runs)
    ]
    distinct = sorted(set(fired))
    if workers > 1 and len(distinct) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(lambda k: collapse(config, k), distinct)
            finals = dict(zip(distinct, results, strict=True))
    else:
        finals = {k: collapse(config, k) for k in distinct}

    n = len(config.detector)
    counts = np.bincount(np.array(fired), minlength=n)
    frequencies = counts / config.n_runs
    born = element_weights(config.initial, config.detector)
    masses = {k: element_masses(rho, config.detector) for k, rho in finals.items()}
    mean_masses = sum(counts[k] * masses[k] for k in distinct) / config.n_runs
    purities = [finals[k].purity() for k in fired]

    report = EnsembleReport(
        born_weights=tuple(float(v) for v in born),
        firing_weights=tuple(float(v) for v in p),
        frequencies=tuple(float(v) for v in frequencies),
        counts=tuple(int(c) for c in counts),
        tv_distance=total_variation(frequencies, p),
        mean_element_masses=tuple(float(v) for v in np.asarray(mean_masses)),
        purity_min=min(purities),
        purity_mean=math.fsum(purities) / len(purities),
        purity_max=max(purities),
    )
    logger.info(
        "ensemble of %d runs: TV distance %.4f, min purity %.6f",
        config.n_runs,
        report.tv_distance,
        report.purity_min,
    )
    return report


@dataclass(frozen=True, slots=True)
class DetectorComparison:
    """Element masses after a registration, reduced model against the pointer oracle.

    ``pointer_weights`` are read off the pointer particle before it is
    amplified and must equal ``born_weights``. ``tv_distance`` compares the
    normalized element masses of both descriptions.
    """

    fired: int
    born_weights: tuple[float, ...]
    pointer_weights: tuple[float, ...]
    influence_masses: tuple[float, ...]
    composite_masses: tuple[float, ...]
    tv_distance: float


def detector_comparison(
    psi: WaveFunction,
    detector: DetectorArray,
    k: int,
    duration: float,
    t_r: float = 0.0,
) -> DetectorComparison:
    """Fire element ``k`` on ``psi`` in the reduced model and on an ideal pointer.

    The pointer oracle copies the position of S onto R and amplifies R inside
    element ``k``. Both registrations act for ``duration`` with the motion
    frozen.
    """
    if not 0 <= k < len(detector):
        msg = f"element index {k} out of range for {len(detector)} elements"
        raise ValueError(msg)
    element = detector.elements[k]
    pointer = pointer_state(psi)
    pointer_weights = element_weights(reduced(pointer, 2), detector)
    measured = measure_R(
        pointer, PositionMeasurement(element.center, element.width), element.gain, duration
    )
    composite = element_masses(reduced(measured, 1), detector)

    initial = pure_density(psi)
    registered = register(initial, fire_element(detector, k, t_r), t_r, duration)
    influence = element_masses(registered, detector)

    tv = total_variation(influence / influence.sum(), composite / composite.sum())
    logger.info("element %d: reduced model vs pointer oracle TV %.3g", k, tv)
    return DetectorComparison(
        fired=k,
        born_weights=tuple(float(v) for v in element_weights(initial, detector)),
        pointer_weights=tuple(float(v) for v in pointer_weights),
        influence_masses=tuple(float(v) for v in influence),
        composite_masses=tuple(float(v) for v in composite),
        tv_distance=tv,
    )
