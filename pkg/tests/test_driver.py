import pytest

from daclear.core import welfare_of
from daclear.driver import ClearOptions, clear_exact, clear_heuristic
from daclear.verify import (
    check_bid_prices,
    check_filling,
    check_flow_price,
    oracle_clear,
)

from helpers import (
    appendix_a,
    f2,
    f3,
    make_instance,
    block,
    diamond,
    ramp_fixture,
    random_instance,
)


class TestExact:
    def test_appendix_a(self):
        inst = appendix_a()
        res = clear_exact(inst)
        assert res.status == "optimal"
        assert res.mode == "exact"
        assert res.welfare == pytest.approx(2.0, abs=1e-9)
        assert res.bound == pytest.approx(2.0, abs=1e-9)
        assert res.gap == pytest.approx(0.0, abs=1e-9)
        assert res.prices["X", 0] == pytest.approx(3.0, abs=1e-6)
        assert res.prbs == (("block", "a"),)
        assert len(res.iterations) == 2

    def test_f3_values(self):
        inst = f3()
        res = clear_exact(inst)
        assert res.solution.flows["c1", 0] == pytest.approx(20.0, abs=1e-6)
        assert res.prices["R", 0] == pytest.approx(10.0, abs=1e-6)
        assert res.prices["S", 0] == pytest.approx(40.0, abs=1e-6)

    def test_infeasible(self):
        # demand-only curve with nothing to supply it and mandatory volume
        inst = make_instance(
            {("X", 0): [[0, 5], [100, 5]]},
        )
        res = clear_exact(inst)
        # full curtailment keeps it feasible: all demand shed
        assert res.status == "optimal"
        assert res.welfare == pytest.approx(0.0, abs=1e-9)

    def test_solution_checks_pass(self):
        for inst in (appendix_a(), f2(), f3(), ramp_fixture(), diamond()):
            res = clear_exact(inst)
            assert res.status == "optimal"
            assert check_filling(inst, res.solution.delta, res.prices).passed
            assert check_flow_price(inst, res.solution.flows, res.prices).passed
            assert check_bid_prices(inst, res.solution.selection, res.prices).passed


class TestHeuristic:
    def test_appendix_a_agrees_with_exact(self):
        inst = appendix_a()
        res = clear_heuristic(inst)
        assert res.mode == "heuristic"
        assert res.welfare == pytest.approx(2.0, abs=1e-9)
        # dual bound is the cut-free master optimum
        assert res.bound == pytest.approx(3.0, abs=1e-9)
        assert res.gap > 0

    def test_first_iteration_log(self):
        inst = appendix_a()
        res = clear_heuristic(inst)
        first = res.iterations[0]
        assert first.master_objective == pytest.approx(3.0, abs=1e-9)
        assert first.cuts_added >= 1
        assert first.loss_blocks

    def test_never_beats_exact(self):
        losses = 0
        for seed in range(20):
            inst = random_instance(seed)
            h = clear_heuristic(inst)
            e = clear_exact(inst)
            assert h.welfare <= e.welfare + 1e-7
            if h.welfare < e.welfare - 1e-7:
                losses += 1
        # agreement is typical on small instances
        assert losses <= 10

    def test_welfare_matches_solution(self):
        for seed in range(10):
            inst = random_instance(seed)
            res = clear_heuristic(inst)
            if res.solution is not None:
                assert res.welfare == pytest.approx(
                    welfare_of(inst, res.solution), abs=1e-9
                )


class TestAgainstOracle:
    def test_exact_matches_oracle(self):
        for seed in range(20, 35):
            inst = random_instance(seed)
            o = oracle_clear(inst)
            e = clear_exact(inst)
            assert e.welfare == pytest.approx(o.welfare, abs=1e-7)


class TestLimits:
    def test_time_limit_zero(self):
        inst = random_instance(7)
        res = clear_exact(inst, ClearOptions(time_limit=0.0))
        assert res.status in ("limit", "optimal")
        if res.status == "limit":
            assert res.bound >= res.welfare - 1e-9
