"""Genetic optimization of pixel-antenna pairs for achievable DoF.

A configuration is one bit vector phi = [phi_T ; phi_R] over the transmit
and receive pixel grids (spine pixels are always metal and sit outside the
encoding, so every configuration keeps all its ports). Each evaluation runs
the full physics pipeline

    mesh -> impedance -> characteristic modes -> port excitation/patterns
         -> transmit/receive maps -> free-space channel -> H

and scores the equivalent channel by the negated standard deviation of its
singular values: flat spectra score 0 (the maximum), lopsided spectra score
negative, so maximizing the score pushes toward more usable subchannels.

The evolutionary loop is a plain binary GA: tournament-2 selection with
replacement, uniform crossover over consecutive parent pairs, independent
per-bit mutation (default rate 1/bit_length), and elitist truncation of the
merged parent and child pool, which makes the best-so-far fitness exactly
non-decreasing. All randomness flows from one seeded generator owned by the
evolution loop; evaluations are deterministic and cached by configuration
bytes, and may run in a process pool without touching the random stream.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C0

from .channel import assemble_channel
from .cma import (SIGNIFICANCE_FLOOR, ModeBasis, excitation_matrix,
                  mode_patterns, solve_modes)
from .dofcore import (DofReport, EquivalentChannel, build_report,
                      equivalent_channel, gamma_decomposition, receiver_map,
                      transmitter_map)
from .efie import assemble_impedance, delta_gap_excitation
from .errors import (DegenerateStructureError, GeometryError, NumericalError,
                     RankDeficiencyError)
from .mesh import (PlateSpec, TriMesh, RwgBasis, build_plate_mesh,
                   extract_rwg, face_sampling_operator, locate_port_edges)

__all__ = [
    "NEG_INF",
    "PixelProblem",
    "PlateAnalysis",
    "Individual",
    "GaRun",
    "analyze_plate",
    "evaluate",
    "fitness",
    "select_parents",
    "crossover_mutate",
    "run_ga",
    "phi_to_hex",
    "phi_from_hex",
]

logger = logging.getLogger(__name__)

#: fitness sentinel for configurations the pipeline cannot analyze
NEG_INF = float("-inf")

CHECKPOINT_FORMAT = "cmadof-ga-checkpoint-v1"


@dataclass
class PlateAnalysis:
    """Everything one plate contributes to the link model."""

    mesh: TriMesh
    basis: RwgBasis
    modes: ModeBasis
    excitation: np.ndarray  # modal excitation V, (n_modes, L)
    patterns: np.ndarray    # sampled mode currents, (3 n_faces, n_modes)


def analyze_plate(
    spec: PlateSpec,
    bits,
    frequency: float,
    n_keep: int = 20,
    floor: float = SIGNIFICANCE_FLOOR,
) -> PlateAnalysis:
    """Run mesh -> impedance -> modes -> (V, patterns) for one plate.

    Modes are truncated to |m| >= floor before any map is built. Raises
    DegenerateStructureError when nothing significant radiates.
    """
    mesh = build_plate_mesh(spec, bits)
    basis = extract_rwg(mesh)
    op = assemble_impedance(basis, frequency)
    modes = solve_modes(op, n_keep=n_keep).significant(floor)
    if modes.n_kept == 0:
        raise DegenerateStructureError(
            "no mode reaches the significance floor "
            f"{floor:g} on this configuration"
        )
    exc = delta_gap_excitation(basis, locate_port_edges(spec, mesh))
    v = excitation_matrix(modes, exc)
    patterns = mode_patterns(modes, face_sampling_operator(basis))
    return PlateAnalysis(mesh=mesh, basis=basis, modes=modes,
                         excitation=modes.excitation, patterns=patterns)


@dataclass
class PixelProblem:
    """One transmit/receive pixel-antenna link to optimize.

    The receive plate sits broadside to the transmit plate, displaced by
    `separation` along +z, so any positive separation keeps the apertures
    disjoint. The configuration bit vector concatenates the transmit grid
    (row-major) followed by the receive grid.
    """

    tx_spec: PlateSpec
    rx_spec: PlateSpec
    frequency: float
    separation: float
    gamma: float = 0.5
    n_keep: int = 20
    significance_floor: float = SIGNIFICANCE_FLOOR
    cache: dict = field(default_factory=dict, repr=False, compare=False)
    cache_hits: int = field(default=0, repr=False, compare=False)
    evaluations: int = field(default=0, repr=False, compare=False)

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.separation <= 0:
            raise GeometryError(
                "separation must be positive so the apertures are disjoint"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def bit_length(self) -> int:
        return self.tx_spec.n_bits + self.rx_spec.n_bits

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi * self.frequency / C0

    def split(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        phi = np.asarray(phi)
        return phi[: self.tx_spec.n_bits], phi[self.tx_spec.n_bits:]

    def config(self) -> dict:
        """The picklable definition fields (no cache state)."""
        return {
            "tx_spec": self.tx_spec,
            "rx_spec": self.rx_spec,
            "frequency": self.frequency,
            "separation": self.separation,
            "gamma": self.gamma,
            "n_keep": self.n_keep,
            "significance_floor": self.significance_floor,
        }


def phi_to_hex(phi: np.ndarray) -> str:
    """Bit vector -> hex string (bits packed MSB-first, zero padded)."""
    return np.packbits(np.asarray(phi, dtype=np.uint8)).tobytes().hex()


def phi_from_hex(text: str, n_bits: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.size < n_bits:
        raise ValueError(f"hex string holds {bits.size} bits, need {n_bits}")
    return bits[:n_bits].copy()


def fitness(ch: EquivalentChannel) -> float:
    """Negated standard deviation of the leading min(L_T, L_R) singular
    values; 0 is the best possible score (perfectly flat spectrum)."""
    l_m = min(ch.matrix.shape)
    sing = ch.singulars[:l_m]
    return float(-np.sqrt(np.mean((sing - sing.mean()) ** 2)))


def _evaluate_uncached(problem: PixelProblem, phi: np.ndarray):
    phi_t, phi_r = problem.split(phi)
    tx = analyze_plate(problem.tx_spec, phi_t, problem.frequency,
                       problem.n_keep, problem.significance_floor)
    rx = analyze_plate(problem.rx_spec, phi_r, problem.frequency,
                       problem.n_keep, problem.significance_floor)
    u_t = transmitter_map(tx.patterns, tx.modes.significances, tx.excitation)
    u_r = receiver_map(rx.excitation, rx.modes.significances, rx.patterns)
    rx_mesh = rx.mesh.translated((0.0, 0.0, problem.separation))
    g = assemble_channel(tx.mesh, rx_mesh, problem.wavenumber)
    ch = equivalent_channel(u_r, g, u_t)
    gm = gamma_decomposition(g, rx.patterns, tx.patterns)
    report = build_report(ch, g.singulars, rx.excitation, tx.excitation,
                          gm.gamma, problem.gamma)
    return ch, report, fitness(ch)


def evaluate(problem: PixelProblem, phi):
    """(EquivalentChannel, DofReport, fitness) for one configuration.

    Results are cached on the problem by configuration bytes; degenerate
    configurations (nothing radiates, or the receive ports cannot be
    separated) get (None, None, -inf) and are logged.
    """
    phi = np.asarray(phi, dtype=np.uint8).ravel()
    if phi.size != problem.bit_length:
        raise ValueError(
            f"configuration has {phi.size} bits, problem wants "
            f"{problem.bit_length}"
        )
    if np.any(phi > 1):
        raise ValueError("configuration bits must be 0 or 1")
    key = np.packbits(phi).tobytes()
    hit = problem.cache.get(key)
    if hit is not None:
        problem.cache_hits += 1
        return hit
    problem.evaluations += 1
    try:
        result = _evaluate_uncached(problem, phi)
    except (DegenerateStructureError, RankDeficiencyError, NumericalError) as exc:
        logger.warning("degenerate configuration %s: %s", phi_to_hex(phi), exc)
        result = (None, None, NEG_INF)
    problem.cache[key] = result
    return result


def _pool_evaluate(config: dict, phi_list: list[int]):
    problem = PixelProblem(**config)
    return evaluate(problem, np.asarray(phi_list, dtype=np.uint8))


def _ensure_evaluated(problem: PixelProblem, phis, executor) -> None:
    """Fill the problem cache for every configuration in `phis`."""
    if executor is None:
        for phi in phis:
            evaluate(problem, phi)
        return
    pending = {}
    for phi in phis:
        key = np.packbits(np.asarray(phi, dtype=np.uint8)).tobytes()
        if key not in problem.cache and key not in pending:
            pending[key] = (phi, executor.submit(
                _pool_evaluate, problem.config(),
                [int(b) for b in np.asarray(phi).ravel()]))
    for key, (phi, fut) in pending.items():
        problem.cache[key] = fut.result()
        problem.evaluations += 1


@dataclass
class Individual:
    phi: np.ndarray
    fitness: float
    report: DofReport | None


@dataclass
class GaRun:
    """State and history of one GA run.

    pop_size, n_parents, and k_max are the population size, parents drawn
    per generation, and generation budget; best_history[g] is the best
    fitness after generation g (index 0 is the initial population) and is
    non-decreasing because replacement is elitist.
    """

    population: list[Individual]
    generation: int
    k_max: int
    pop_size: int
    n_parents: int
    mutation_rate: float
    rng_seed: int
    best_history: list[float] = field(default_factory=list)

    @property
    def best(self) -> Individual:
        return max(self.population, key=lambda ind: ind.fitness)


def select_parents(run: GaRun, rng: np.random.Generator) -> list[np.ndarray]:
    """n_parents configurations by size-2 tournament with replacement.

    Each tournament draws two population indices and keeps the fitter
    individual; on ties the first-drawn wins. Returns copies.
    """
    if not run.population:
        raise ValueError("population is empty")
    fits = [ind.fitness for ind in run.population]
    out = []
    for _ in range(run.n_parents):
        i, j = rng.integers(0, len(fits), size=2)
        winner = int(i) if fits[int(i)] >= fits[int(j)] else int(j)
        out.append(run.population[winner].phi.copy())
    return out


def crossover_mutate(
    parents: list[np.ndarray],
    mutation_rate: float,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Uniform crossover over consecutive pairs, then per-bit mutation.

    Parents (p0, p1) produce two complementary children: each bit comes
    from p0 in one child and p1 in the other, chosen by a fair coin per
    position. Every child bit then flips independently with probability
    mutation_rate. len(children) == len(parents).
    """
    if len(parents) % 2:
        raise ValueError("need an even number of parents")
    if not 0.0 <= mutation_rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    children = []
    for a, b in zip(parents[0::2], parents[1::2]):
        mask = rng.integers(0, 2, size=a.size).astype(bool)
        c1 = np.where(mask, a, b).astype(np.uint8)
        c2 = np.where(mask, b, a).astype(np.uint8)
        for child in (c1, c2):
            flips = rng.random(child.size) < mutation_rate
            child[flips] ^= 1
            children.append(child)
    return children


def _make_individual(problem: PixelProblem, phi: np.ndarray) -> Individual:
    _, report, fit = evaluate(problem, phi)
    return Individual(phi=np.asarray(phi, dtype=np.uint8).copy(),
                      fitness=fit, report=report)


def _json_float(x: float):
    return None if not np.isfinite(x) else float(x)


def _log_record(run: GaRun) -> dict:
    fits = np.array([ind.fitness for ind in run.population])
    finite = fits[np.isfinite(fits)]
    best = run.best
    return {
        "generation": run.generation,
        "best_fitness": _json_float(best.fitness),
        "mean_fitness": _json_float(float(finite.mean())) if finite.size else None,
        "best_dof_h": None if best.report is None else best.report.dof_h,
        "best_phi_hex": phi_to_hex(best.phi),
    }


def _write_checkpoint(path, run: GaRun, rng: np.random.Generator) -> None:
    state = {
        "format": CHECKPOINT_FORMAT,
        "generation": run.generation,
        "k_max": run.k_max,
        "pop_size": run.pop_size,
        "n_parents": run.n_parents,
        "mutation_rate": run.mutation_rate,
        "rng_seed": run.rng_seed,
        "best_history": [_json_float(f) for f in run.best_history],
        "rng_state": rng.bit_generator.state,
        "population": [
            {
                "phi_hex": phi_to_hex(ind.phi),
                "n_bits": int(ind.phi.size),
                "fitness": _json_float(ind.fitness),
                "report": None if ind.report is None else ind.report.to_json(),
            }
            for ind in run.population
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state, fh)


def _load_checkpoint(path) -> tuple[GaRun, np.random.Generator]:
    with open(path, encoding="utf-8") as fh:
        state = json.load(fh)
    if state.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a GA checkpoint: {path}")
    population = [
        Individual(
            phi=phi_from_hex(rec["phi_hex"], rec["n_bits"]),
            fitness=NEG_INF if rec["fitness"] is None else float(rec["fitness"]),
            report=None if rec["report"] is None
            else DofReport.from_json(rec["report"]),
        )
        for rec in state["population"]
    ]
    run = GaRun(
        population=population,
        generation=int(state["generation"]),
        k_max=int(state["k_max"]),
        pop_size=int(state["pop_size"]),
        n_parents=int(state["n_parents"]),
        mutation_rate=float(state["mutation_rate"]),
        rng_seed=int(state["rng_seed"]),
        best_history=[NEG_INF if f is None else float(f)
                      for f in state["best_history"]],
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = state["rng_state"]
    return run, rng


def run_ga(
    problem: PixelProblem,
    k_max: int,
    pop_size: int,
    n_parents: int,
    mutation_rate: float | None = None,
    seed: int = 0,
    jobs: int = 1,
    log_path=None,
    checkpoint_path=None,
    resume_from=None,
) -> GaRun:
    """Evolve configurations for k_max generations and return the run.

    Each generation draws n_parents by tournament, produces n_parents
    children by crossover and mutation, evaluates them, then keeps the
    best pop_size individuals of the merged old population and children
    (ties keep incumbents). k_max = 0 just evaluates and ranks the random
    initial population. The same (problem, k_max, pop_size, n_parents,
    mutation_rate, seed) always produces the same run, independent of
    `jobs`. With resume_from, the run continues from that checkpoint
    toward this call's k_max and the other GA parameters must match.
    """
    if pop_size < 2:
        raise ValueError("population size must be at least 2")
    if n_parents < 2 or n_parents % 2:
        raise ValueError("parent count must be even and at least 2")
    if k_max < 0:
        raise ValueError("generation budget must be non-negative")
    rate = 1.0 / problem.bit_length if mutation_rate is None else float(mutation_rate)
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")

    executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None

    def emit(run: GaRun) -> None:
        if log_fh is not None:
            log_fh.write(json.dumps(_log_record(run)) + "\n")
            log_fh.flush()
        if checkpoint_path is not None:
            _write_checkpoint(checkpoint_path, run, rng)

    try:
        if resume_from is not None:
            run, rng = _load_checkpoint(resume_from)
            if (run.pop_size, run.n_parents) != (pop_size, n_parents) or \
                    abs(run.mutation_rate - rate) > 1e-15:
                raise ValueError(
                    "checkpoint GA parameters do not match this call"
                )
            run.k_max = k_max
        else:
            rng = np.random.default_rng(seed)
            phis = rng.integers(0, 2, size=(pop_size, problem.bit_length),
                                dtype=np.uint8)
            _ensure_evaluated(problem, list(phis), executor)
            population = [_make_individual(problem, phi) for phi in phis]
            run = GaRun(
                population=population,
                generation=0,
                k_max=k_max,
                pop_size=pop_size,
                n_parents=n_parents,
                mutation_rate=rate,
                rng_seed=seed,
                best_history=[max(ind.fitness for ind in population)],
            )
            logger.info("generation 0: best fitness %.6g", run.best_history[-1])
            emit(run)

        while run.generation < run.k_max:
            parents = select_parents(run, rng)
            child_phis = crossover_mutate(parents, run.mutation_rate, rng)
            _ensure_evaluated(problem, child_phis, executor)
            children = [_make_individual(problem, phi) for phi in child_phis]
            merged = run.population + children
            merged.sort(key=lambda ind: ind.fitness, reverse=True)
            run.population = merged[: run.pop_size]
            run.generation += 1
            run.best_history.append(run.population[0].fitness)
            logger.info("generation %d: best fitness %.6g",
                        run.generation, run.best_history[-1])
            emit(run)
        return run
    finally:
        if executor is not None:
            executor.shutdown()
        if log_fh is not None:
            log_fh.close()
