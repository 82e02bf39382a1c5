"""BO driver: initial design, acquisition maximization, the full loop."""

import numpy as np
import pytest

import composite_bo.loop as loop_module
from composite_bo.acquisition import CompositionFn
from composite_bo.loop import (
    BoSettings,
    Domain,
    EvaluationRecord,
    OptimizerSettings,
    initial_design,
    maximize_acquisition,
    run_bo,
)
from composite_bo.objectives import CompositeObjective, get_task


def quadratic_task(center=0.5):
    """1-d single-constituent toy: maximize -(x - center)^2 on [0, 1]."""
    def member(points):
        return -((points[:, 0] - center) ** 2)

    return CompositeObjective(
        name="toy-quadratic",
        domain=Domain(np.zeros(1), np.ones(1)),
        arity=1,
        constituents=(member,),
        composition=CompositionFn(arity=1, eval=lambda v: v[..., 0]),
        g_star=0.0,
    )


class TestDomain:
    def test_validation(self):
        with pytest.raises(ValueError):
            Domain(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            Domain(np.array([0.0]), np.array([0.0, 1.0]))

    def test_contains_and_clip(self):
        dom = Domain(np.array([0.0, -1.0]), np.array([1.0, 1.0]))
        assert dom.contains(np.array([[0.5, 0.0]]))
        assert not dom.contains(np.array([[1.5, 0.0]]))
        np.testing.assert_allclose(dom.clip(np.array([[2.0, -3.0]])), [[1.0, -1.0]])


class TestInitialDesign:
    def test_containment(self):
        dom = Domain(np.zeros(2), np.ones(2))
        pts = initial_design(dom, 10, seed=0)
        assert pts.shape == (10, 2)
        assert dom.contains(pts)

    def test_deterministic(self):
        dom = Domain(np.array([-3.0]), np.array([7.0]))
        np.testing.assert_array_equal(initial_design(dom, 25, 42), initial_design(dom, 25, 42))

    def test_law_of_large_numbers(self):
        dom = Domain(np.zeros(1), np.ones(1))
        pts = initial_design(dom, 10_000, seed=1)
        assert abs(pts.mean() - 0.5) < 0.02


class TestMaximizeAcquisition:
    def test_interior_quadratic_peak(self):
        dom = Domain(np.zeros(2), np.ones(2))
        center = np.array([0.3, 0.7])

        def score(points):
            return -np.sum((points - center) ** 2, axis=1)

        found = maximize_acquisition(score, dom, seed=0)
        assert np.all(np.abs(found - center) < 1e-2)

    def test_constant_surface_returns_in_domain_point(self):
        dom = Domain(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        found = maximize_acquisition(lambda p: np.zeros(len(p)), dom, seed=3)
        assert dom.contains(found[None])

    def test_boundary_maximizer(self):
        dom = Domain(np.zeros(2), np.ones(2))
        found = maximize_acquisition(lambda p: p[:, 0], dom, seed=1)
        assert found[0] >= 0.99

    def test_beats_best_raw_candidate(self):
        dom = Domain(np.zeros(3), np.ones(3))
        rng = np.random.default_rng(9)
        center = rng.uniform(size=3)

        def score(points):
            return -np.sum(np.abs(points - center), axis=1)

        settings = OptimizerSettings(num_candidates=64, num_restarts=4)
        found = maximize_acquisition(score, dom, settings, seed=5)
        raw = dom.sample(np.random.default_rng(5), 64)
        assert score(found[None])[0] >= score(raw).max()

    def test_anchor_candidates_join_the_pool(self):
        dom = Domain(np.zeros(2), np.ones(2))
        needle = np.array([0.123456, 0.654321])

        def score(points):
            return -np.sum((points - needle) ** 2, axis=1) * 1e6

        found = maximize_acquisition(
            score, dom, OptimizerSettings(num_candidates=16), seed=2,
            extra_candidates=needle[None],
        )
        assert np.all(np.abs(found - needle) < 1e-3)


class TestRunBo:
    def test_record_count_and_shapes(self):
        task = quadratic_task()
        result = run_bo(task, "vanilla-ei", num_iterations=1, num_init=2, seed=0)
        assert len(result.records) == 3
        assert len(result.wall_time_per_iteration) == 1
        assert result.num_init == 2
        rec = result.records[-1]
        assert isinstance(rec, EvaluationRecord)
        assert rec.g_value == pytest.approx(task.g_value(rec.x))

    def test_every_point_in_domain(self):
        task = get_task("langermann")
        result = run_bo(task, "c-ucb", num_iterations=3, num_init=4, seed=1)
        for rec in result.records:
            assert task.domain.contains(rec.x[None])

    def test_member_values_recomputable(self):
        task = get_task("langermann")
        result = run_bo(task, "c-ei", num_iterations=2, num_init=3, seed=2)
        for rec in result.records:
            np.testing.assert_allclose(rec.member_values, task.member_values(rec.x))
            assert rec.g_value == pytest.approx(
                float(task.compose_batch(rec.member_values[None], rec.x[None])[0])
            )

    def test_deterministic_end_to_end(self):
        task = quadratic_task()
        a = run_bo(task, "c-ei", num_iterations=4, num_init=3, seed=7)
        b = run_bo(task, "c-ei", num_iterations=4, num_init=3, seed=7)
        for ra, rb in zip(a.records, b.records):
            np.testing.assert_array_equal(ra.x, rb.x)
            assert ra.g_value == rb.g_value

    def test_running_best_nondecreasing_regret_nonincreasing(self):
        task = quadratic_task()
        result = run_bo(task, "vanilla-ucb", num_iterations=10, num_init=3, seed=3)
        best = np.maximum.accumulate(result.g_values)
        assert np.all(np.diff(best) >= 0)

    def test_one_dim_quadratic_solved_by_c_ucb(self):
        task = quadratic_task(center=0.5)
        result = run_bo(task, "c-ucb", num_iterations=30, num_init=5, seed=4)
        assert result.best_g >= -1e-3

    def test_fit_counts_per_iteration(self, monkeypatch):
        calls = []
        real_fit = loop_module.fit

        def counting_fit(points, targets, config):
            calls.append(len(points))
            return real_fit(points, targets, config)

        monkeypatch.setattr(loop_module, "fit", counting_fit)
        task = get_task("langermann")  # 5 constituents
        run_bo(task, "c-ucb", num_iterations=3, num_init=4, seed=5)
        assert len(calls) == 15  # M fits per iteration
        calls.clear()
        run_bo(task, "vanilla-ei", num_iterations=3, num_init=4, seed=5)
        assert len(calls) == 3  # one fit per iteration

    def test_parallel_constituent_fits_match_sequential(self):
        task = get_task("langermann")
        seq = run_bo(task, "c-ucb", num_iterations=2, num_init=4, seed=6)
        par = run_bo(
            task, "c-ucb", num_iterations=2, num_init=4,
            settings=BoSettings(fit_workers=3), seed=6,
        )
        for ra, rb in zip(seq.records, par.records):
            np.testing.assert_array_equal(ra.x, rb.x)

    def test_validation(self):
        task = quadratic_task()
        with pytest.raises(ValueError):
            run_bo(task, "nonsense", 1, 2)
        with pytest.raises(ValueError):
            run_bo(task, "c-ei", 0, 2)
        with pytest.raises(ValueError):
            run_bo(task, "c-ei", 1, 1)
