"""Tests for the genetic optimizer: operators, caching, evolution loop."""

import json

import numpy as np
import pytest
from scipy.constants import c as c0
from scipy.stats import chisquare

from cmadof.dofcore import EquivalentChannel, matrix_rank
from cmadof.channel import effective_rank
from cmadof.errors import GeometryError
from cmadof.ga import (
    GaRun,
    Individual,
    NEG_INF,
    PixelProblem,
    crossover_mutate,
    evaluate,
    fitness,
    phi_from_hex,
    phi_to_hex,
    run_ga,
    select_parents,
)
from cmadof.mesh import PlateSpec

FREQ = 27e9
LAM = c0 / FREQ
PIX = 0.24 * LAM


def tiny_spec():
    return PlateSpec(
        width=2 * PIX, height=2 * PIX, pixel_rows=2, pixel_cols=2, ports=2
    )


def tiny_problem(**kwargs):
    args = dict(
        tx_spec=tiny_spec(),
        rx_spec=tiny_spec(),
        frequency=FREQ,
        separation=3.0 * LAM,
    )
    args.update(kwargs)
    return PixelProblem(**args)


class TestFitness:
    def test_flat_spectrum_scores_zero(self):
        ch = EquivalentChannel(matrix=2.0 * np.eye(3))
        assert fitness(ch) == 0.0

    def test_two_value_spectrum_scores_minus_one(self):
        ch = EquivalentChannel(matrix=np.diag([3.0, 1.0]))
        assert fitness(ch) == -1.0

    def test_rectangular_channel_uses_port_count(self):
        # only the leading min(L_T, L_R) singular values enter the score
        m = np.zeros((2, 4))
        m[0, 0] = 3.0
        m[1, 1] = 1.0
        ch = EquivalentChannel(matrix=m)
        assert fitness(ch) == -1.0

    def test_score_is_scale_dependent(self):
        a = EquivalentChannel(matrix=np.diag([3.0, 1.0]))
        b = EquivalentChannel(matrix=np.diag([30.0, 10.0]))
        assert fitness(b) == pytest.approx(10.0 * fitness(a), rel=1e-12)

    def test_correlates_with_achievable_dof(self):
        # frozen corpus: flatter spectra should usually mean more usable
        # subchannels, checked as pairwise order agreement
        rng = np.random.default_rng(0)
        items = []
        for _ in range(50):
            h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            ch = EquivalentChannel(matrix=h)
            items.append((fitness(ch), effective_rank(ch.singulars, 0.5)))
        agree = total = 0
        for fi, di in items:
            for fj, dj in items:
                if fi > fj:
                    total += 1
                    agree += di >= dj
        assert agree / total >= 0.70


class TestPhiHex:
    def test_roundtrip(self):
        rng = np.random.default_rng(5)
        for n_bits in (1, 7, 8, 13, 32, 64):
            phi = rng.integers(0, 2, n_bits).astype(np.uint8)
            assert np.array_equal(phi_from_hex(phi_to_hex(phi), n_bits), phi)

    def test_too_short_rejected(self):
        phi = np.ones(8, dtype=np.uint8)
        with pytest.raises(ValueError, match="bits"):
            phi_from_hex(phi_to_hex(phi), 9)


class TestPixelProblem:
    def test_validation(self):
        with pytest.raises(GeometryError, match="separation"):
            tiny_problem(separation=0.0)
        with pytest.raises(ValueError, match="frequency"):
            PixelProblem(
                tx_spec=tiny_spec(),
                rx_spec=tiny_spec(),
                frequency=0.0,
                separation=0.01,
            )
        with pytest.raises(ValueError, match="gamma"):
            tiny_problem(gamma=1.0)

    def test_bit_layout(self):
        p = tiny_problem()
        assert p.bit_length == 8
        phi = np.arange(8)
        t, r = p.split(phi)
        np.testing.assert_array_equal(t, [0, 1, 2, 3])
        np.testing.assert_array_equal(r, [4, 5, 6, 7])
        assert p.wavenumber == pytest.approx(2.0 * np.pi * FREQ / c0, rel=1e-15)

    def test_config_excludes_cache_state(self):
        p = tiny_problem()
        cfg = p.config()
        assert "cache" not in cfg
        assert cfg["frequency"] == FREQ
        # config round-trips into an equivalent problem
        q = PixelProblem(**cfg)
        assert q.bit_length == p.bit_length


class TestEvaluate:
    def test_wrong_length_rejected(self):
        p = tiny_problem()
        with pytest.raises(ValueError, match="bits"):
            evaluate(p, np.ones(5, dtype=np.uint8))

    def test_non_binary_rejected(self):
        p = tiny_problem()
        with pytest.raises(ValueError, match="0 or 1"):
            evaluate(p, np.full(8, 2, dtype=np.uint8))

    def test_result_is_cached(self):
        p = tiny_problem()
        phi = np.array([1, 0, 1, 1, 0, 1, 1, 0], dtype=np.uint8)
        first = evaluate(p, phi)
        assert p.evaluations == 1 and p.cache_hits == 0
        second = evaluate(p, phi)
        assert p.evaluations == 1 and p.cache_hits == 1
        assert second is first

    def test_full_pipeline_produces_report(self):
        p = tiny_problem()
        ch, report, fit = evaluate(p, np.ones(8, dtype=np.uint8))
        assert ch.matrix.shape == (2, 2)
        assert report.dof_h >= 1
        assert report.dof_h <= report.port_mode_upper
        assert matrix_rank(ch.matrix) <= report.g_strict_rank
        assert fit == fitness(ch)
        assert np.isfinite(fit)

    def test_unreachable_floor_is_degenerate(self, caplog):
        p = tiny_problem(significance_floor=1.01)
        with caplog.at_level("WARNING", logger="cmadof.ga"):
            ch, report, fit = evaluate(p, np.ones(8, dtype=np.uint8))
        assert (ch, report, fit) == (None, None, NEG_INF)
        assert "degenerate configuration" in caplog.text
        # the failure is cached like any other result
        evaluate(p, np.ones(8, dtype=np.uint8))
        assert p.cache_hits == 1


class TestSelectParents:
    def test_tournament_distribution(self):
        # winner probabilities for 3 distinct fitnesses under size-2
        # tournaments with replacement are (5, 3, 1)/9
        pop = [
            Individual(phi=np.array([i], dtype=np.uint8), fitness=-float(i), report=None)
            for i in range(3)
        ]
        run = GaRun(
            population=pop, generation=0, k_max=0, pop_size=3,
            n_parents=900, mutation_rate=0.0, rng_seed=0,
        )
        parents = select_parents(run, np.random.default_rng(123))
        counts = np.bincount([int(p[0]) for p in parents], minlength=3)
        expected = 900.0 * np.array([5.0, 3.0, 1.0]) / 9.0
        result = chisquare(counts, expected)
        assert result.pvalue > 0.01

    def test_tie_keeps_first_drawn(self):
        pop = [
            Individual(phi=np.array([0], dtype=np.uint8), fitness=1.0, report=None),
            Individual(phi=np.array([1], dtype=np.uint8), fitness=1.0, report=None),
        ]
        run = GaRun(
            population=pop, generation=0, k_max=0, pop_size=2,
            n_parents=40, mutation_rate=0.0, rng_seed=0,
        )
        seed = 77
        parents = select_parents(run, np.random.default_rng(seed))
        replay = np.random.default_rng(seed)
        for p in parents:
            i, _ = replay.integers(0, 2, size=2)
            assert p[0] == i

    def test_empty_population_rejected(self):
        run = GaRun(
            population=[], generation=0, k_max=0, pop_size=0,
            n_parents=2, mutation_rate=0.0, rng_seed=0,
        )
        with pytest.raises(ValueError, match="empty"):
            select_parents(run, np.random.default_rng(0))

    def test_returns_copies(self):
        pop = [Individual(phi=np.zeros(3, dtype=np.uint8), fitness=0.0, report=None)]
        run = GaRun(
            population=pop, generation=0, k_max=0, pop_size=1,
            n_parents=2, mutation_rate=0.0, rng_seed=0,
        )
        parents = select_parents(run, np.random.default_rng(0))
        parents[0][0] = 1
        assert pop[0].phi[0] == 0


class TestCrossoverMutate:
    def test_children_partition_parent_bits(self):
        rng = np.random.default_rng(9)
        p0 = rng.integers(0, 2, 64).astype(np.uint8)
        p1 = rng.integers(0, 2, 64).astype(np.uint8)
        kids = crossover_mutate([p0, p1], 0.0, rng)
        assert len(kids) == 2
        np.testing.assert_array_equal(kids[0] + kids[1], p0 + p1)
        # at a typical position both assignments occur across 64 bits
        assert not np.array_equal(kids[0], p0)
        assert not np.array_equal(kids[0], p1)

    def test_rate_zero_only_recombines(self):
        rng = np.random.default_rng(10)
        p = np.zeros(100, dtype=np.uint8)
        kids = crossover_mutate([p, p.copy()], 0.0, rng)
        assert all((k == 0).all() for k in kids)

    def test_rate_one_flips_everything(self):
        rng = np.random.default_rng(11)
        p = np.zeros(100, dtype=np.uint8)
        kids = crossover_mutate([p, p.copy()], 1.0, rng)
        assert all((k == 1).all() for k in kids)

    def test_flip_fraction_matches_rate(self):
        rng = np.random.default_rng(12)
        parents = [np.zeros(10000, dtype=np.uint8) for _ in range(2)]
        kids = crossover_mutate(parents, 0.07, rng)
        frac = np.mean([k.mean() for k in kids])
        sigma = np.sqrt(0.07 * 0.93 / 20000)
        assert abs(frac - 0.07) < 4.0 * sigma

    def test_odd_parent_count_rejected(self):
        with pytest.raises(ValueError, match="even"):
            crossover_mutate([np.zeros(4, dtype=np.uint8)], 0.0, np.random.default_rng(0))

    def test_bad_rate_rejected(self):
        parents = [np.zeros(4, dtype=np.uint8)] * 2
        with pytest.raises(ValueError, match="rate"):
            crossover_mutate(parents, 1.5, np.random.default_rng(0))


class TestRunGa:
    def test_parameter_validation(self):
        p = tiny_problem()
        with pytest.raises(ValueError, match="population"):
            run_ga(p, k_max=1, pop_size=1, n_parents=2)
        with pytest.raises(ValueError, match="parent"):
            run_ga(p, k_max=1, pop_size=4, n_parents=3)
        with pytest.raises(ValueError, match="budget"):
            run_ga(p, k_max=-1, pop_size=4, n_parents=2)
        with pytest.raises(ValueError, match="mutation"):
            run_ga(p, k_max=1, pop_size=4, n_parents=2, mutation_rate=2.0)

    def test_deterministic_and_monotone(self):
        r1 = run_ga(tiny_problem(), k_max=3, pop_size=6, n_parents=4, seed=11)
        r2 = run_ga(tiny_problem(), k_max=3, pop_size=6, n_parents=4, seed=11)
        assert r1.best_history == r2.best_history
        for a, b in zip(r1.population, r2.population):
            assert np.array_equal(a.phi, b.phi)
            assert a.fitness == b.fitness
        assert len(r1.best_history) == 4
        assert all(
            b >= a for a, b in zip(r1.best_history, r1.best_history[1:])
        )
        assert r1.best.fitness == r1.best_history[-1]

    def test_zero_generations_ranks_initial_population(self):
        p = tiny_problem()
        run = run_ga(p, k_max=0, pop_size=4, n_parents=2, seed=3)
        assert run.generation == 0
        assert len(run.best_history) == 1
        assert len(run.population) == 4
        assert run.best.fitness == max(ind.fitness for ind in run.population)

    def test_jobs_do_not_change_the_run(self):
        r1 = run_ga(tiny_problem(), k_max=2, pop_size=4, n_parents=2, seed=5, jobs=1)
        r2 = run_ga(tiny_problem(), k_max=2, pop_size=4, n_parents=2, seed=5, jobs=2)
        assert r1.best_history == r2.best_history
        for a, b in zip(r1.population, r2.population):
            assert np.array_equal(a.phi, b.phi)
            assert a.fitness == b.fitness

    def test_log_schema(self, tmp_path):
        log = tmp_path / "run.jsonl"
        run_ga(tiny_problem(), k_max=2, pop_size=4, n_parents=2, seed=7,
               log_path=log)
        records = [json.loads(line) for line in log.read_text().splitlines()]
        assert len(records) == 3
        for g, rec in enumerate(records):
            assert set(rec) == {
                "generation", "best_fitness", "mean_fitness",
                "best_dof_h", "best_phi_hex",
            }
            assert rec["generation"] == g
            phi = phi_from_hex(rec["best_phi_hex"], 8)
            assert phi.shape == (8,)
        bests = [rec["best_fitness"] for rec in records]
        assert all(b >= a for a, b in zip(bests, bests[1:]))

    def test_resume_matches_straight_run(self, tmp_path):
        ck = tmp_path / "ck.json"
        straight = run_ga(tiny_problem(), k_max=4, pop_size=6, n_parents=4, seed=11)
        p = tiny_problem()
        run_ga(p, k_max=2, pop_size=6, n_parents=4, seed=11, checkpoint_path=ck)
        resumed = run_ga(p, k_max=4, pop_size=6, n_parents=4, seed=11,
                         resume_from=ck)
        assert resumed.best_history == straight.best_history
        for a, b in zip(resumed.population, straight.population):
            assert np.array_equal(a.phi, b.phi)
            assert a.fitness == b.fitness

    def test_checkpoint_roundtrips_reports(self, tmp_path):
        ck = tmp_path / "ck.json"
        first = run_ga(tiny_problem(), k_max=1, pop_size=4, n_parents=2,
                       seed=2, checkpoint_path=ck)
        # resuming at the same budget returns the loaded state unchanged
        loaded = run_ga(tiny_problem(), k_max=1, pop_size=4, n_parents=2,
                        seed=2, resume_from=ck)
        assert loaded.generation == first.generation
        assert loaded.best_history == first.best_history
        for a, b in zip(loaded.population, first.population):
            assert np.array_equal(a.phi, b.phi)
            assert a.fitness == b.fitness
            assert (a.report is None) == (b.report is None)
            if a.report is not None:
                assert a.report.dof_h == b.report.dof_h
                np.testing.assert_allclose(
                    a.report.h_singulars, b.report.h_singulars, rtol=0
                )

    def test_resume_parameter_mismatch_rejected(self, tmp_path):
        ck = tmp_path / "ck.json"
        run_ga(tiny_problem(), k_max=1, pop_size=4, n_parents=2, seed=2,
               checkpoint_path=ck)
        with pytest.raises(ValueError, match="do not match"):
            run_ga(tiny_problem(), k_max=2, pop_size=6, n_parents=2, seed=2,
                   resume_from=ck)

    def test_foreign_checkpoint_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(ValueError, match="checkpoint"):
            run_ga(tiny_problem(), k_max=1, pop_size=4, n_parents=2,
                   resume_from=bad)
