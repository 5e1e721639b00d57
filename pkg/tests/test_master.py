import pytest

from daclear.cuts import Cut, CutPool, no_good_cut
from daclear.master import solve_master
from daclear.relaxation import solve_relaxation

from helpers import appendix_a, make_instance, block, flexbid, random_instance


class TestApppendixA:
    def test_cut_free_optimum_takes_all_four(self):
        inst = appendix_a()
        res = solve_master(inst)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(3.0, abs=1e-9)
        assert res.solution.selection.blocks == {"a": 1, "b": 1, "c": 1, "d": 1}

    def test_respects_no_good_cut(self):
        inst = appendix_a()
        pool = CutPool()
        full = res = solve_master(inst).solution.selection
        pool.add(no_good_cut(inst, full, kind="no-good"))
        res = solve_master(inst, cuts=pool)
        assert res.objective == pytest.approx(2.0, abs=1e-9)
        assert set(res.solution.selection.executed_blocks()) == {"c", "d"}

    def test_bound_dominates_objective(self):
        inst = appendix_a()
        res = solve_master(inst)
        assert res.bound >= res.objective - 1e-9


class TestBranching:
    def test_links_enforced(self):
        inst = make_instance(
            {("X", 0): [[0, 10], [50, 10], [50, -10], [100, -10]]},
            blocks=[block("p", "X", 80, [6]), block("q", "X", 10, [6])],
            links=[("q", "p")],
        )
        res = solve_master(inst)
        sel = res.solution.selection
        assert sel.link_consistent(inst.links)

    def test_flex_single_hour(self):
        inst = make_instance(
            {("X", 0): [[0, 10], [50, 10], [50, -10], [100, -10]],
             ("X", 1): [[0, 10], [60, 10], [60, -10], [100, -10]]},
            hours=2,
            flex=[flexbid("f", "X", 90, 5)],
        )
        res = solve_master(inst)
        hours = res.solution.selection.executed_flex()
        assert len(hours) <= 1
        # the cheaper-supply hour wins
        assert res.solution.selection.flex.get("f") == 0

    def test_incumbent_warm_start_matches(self):
        inst = appendix_a()
        cold = solve_master(inst)
        warm = solve_master(inst, incumbent=cold.solution.selection)
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)

    def test_matches_relaxation_enumeration(self):
        from daclear.errors import InfeasibleSelection
        from daclear.verify import _all_selections

        for seed in range(8):
            inst = random_instance(seed)
            best = None
            for sel in _all_selections(inst):
                try:
                    out = solve_relaxation(inst, sel)
                except InfeasibleSelection:
                    continue
                if best is None or out.objective > best:
                    best = out.objective
            res = solve_master(inst)
            if best is None:
                assert res.status == "infeasible"
            else:
                assert res.objective == pytest.approx(best, abs=1e-6)


class TestPresolve:
    def test_always_loss_block_fixed_out(self):
        # flat zero curve, pure demand block priced below any feasible price
        inst = make_instance(
            {("X", 0): [[0, 20], [50, 20], [50, -20], [100, -20]]},
            blocks=[block("junk", "X", 1.0, [5])],
        )
        with_p = solve_master(inst, presolve=True)
        without = solve_master(inst, presolve=False)
        assert with_p.objective == pytest.approx(without.objective, abs=1e-9)
        assert with_p.solution.selection.blocks["junk"] == 0

    def test_presolve_never_changes_clearing_welfare(self):
        from daclear.driver import ClearOptions, clear_exact

        for seed in range(10):
            inst = random_instance(seed)
            a = clear_exact(inst)
            b = clear_exact(inst, ClearOptions(presolve=False))
            assert a.status == b.status
            if a.status == "optimal":
                assert a.welfare == pytest.approx(b.welfare, abs=1e-7)

    def test_presolve_only_tightens_master(self):
        for seed in range(10):
            inst = random_instance(seed)
            a = solve_master(inst, presolve=True)
            b = solve_master(inst, presolve=False)
            if a.status == b.status == "optimal":
                assert a.objective <= b.objective + 1e-7


class TestLimits:
    def test_time_limit_returns_limit_status(self):
        inst = random_instance(3)
        res = solve_master(inst, time_limit=0.0)
        assert res.status in ("limit", "optimal")
        if res.status == "limit":
            assert res.bound is not None
