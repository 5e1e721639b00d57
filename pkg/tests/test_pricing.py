import pytest

from daclear.core import clearing_residuals, welfare_of
from daclear.errors import PriceInfeasible
from daclear.pricing import clamp_prices, solve_fixflow, solve_qpprice
from daclear.relaxation import solve_relaxation
from daclear.master import solve_master

from helpers import (
    appendix_a,
    f2,
    f3,
    make_instance,
    price_indifferent,
    ramp_fixture,
    random_instance,
)


def _master_solution(inst):
    res = solve_master(inst)
    assert res.status == "optimal"
    return res.solution


class TestFixFlow:
    def test_idempotent(self):
        for inst in (f2(), f3(), ramp_fixture()):
            sol = _master_solution(inst)
            once = solve_fixflow(inst, sol)
            twice = solve_fixflow(inst, once)
            for k in once.flows:
                assert twice.flows[k] == pytest.approx(once.flows[k], abs=1e-9)
            for k in once.delta:
                assert twice.delta[k] == pytest.approx(once.delta[k], abs=1e-9)

    def test_preserves_welfare_and_clearing(self):
        for seed in range(12):
            inst = random_instance(seed)
            sol = _master_solution(inst)
            fixed = solve_fixflow(inst, sol)
            assert welfare_of(inst, fixed) == pytest.approx(
                welfare_of(inst, sol), abs=1e-6
            )
            res = clearing_residuals(inst, fixed)
            assert max(abs(r) for r in res.values()) <= 1e-6

    def test_ramp_fixture_flows(self):
        inst = ramp_fixture()
        fixed = solve_fixflow(inst, _master_solution(inst))
        assert fixed.flows["c1", 0] == pytest.approx(21.0, abs=1e-6)
        assert fixed.flows["c1", 1] == pytest.approx(27.0, abs=1e-6)


class TestQpPrice:
    def test_appendix_a_strict_price(self):
        inst = appendix_a()
        # optimal selection {a,b,c,d} has no uniform supporting price
        full = _master_solution(inst)
        with pytest.raises(PriceInfeasible):
            solve_qpprice(inst, solve_fixflow(inst, full))

    def test_appendix_a_second_best(self):
        from daclear.driver import clear_exact

        inst = appendix_a()
        res = clear_exact(inst)
        out = solve_qpprice(inst, res.solution)
        assert out.prices["X", 0] == pytest.approx(3.0, abs=1e-6)
        assert out.total_loss == pytest.approx(0.0, abs=1e-9)

    def test_relaxed_losses_nonnegative(self):
        inst = appendix_a()
        full = solve_fixflow(inst, _master_solution(inst))
        out = solve_qpprice(inst, full, relax_losses=True)
        assert out.total_loss > 0
        assert all(v >= -1e-9 for v in out.losses.values())

    def test_f3_congested_prices(self):
        inst = f3()
        out = solve_qpprice(inst, solve_fixflow(inst, _master_solution(inst)))
        assert out.prices["R", 0] == pytest.approx(10.0, abs=1e-6)
        assert out.prices["S", 0] == pytest.approx(40.0, abs=1e-6)

    def test_ramp_price_reflection(self):
        inst = ramp_fixture()
        out = solve_qpprice(inst, solve_fixflow(inst, _master_solution(inst)))
        d0 = out.prices["S", 0] - out.prices["R", 0]
        d1 = out.prices["S", 1] - out.prices["R", 1]
        assert d0 + d1 == pytest.approx(0.0, abs=1e-6)
        assert abs(d0) > 1.0

    def test_price_indifference_minimizes_norm(self):
        inst = price_indifferent()
        out = solve_qpprice(inst, solve_fixflow(inst, _master_solution(inst)))
        # any price in [0, 7] supports the execution; tie broken at 0
        assert out.prices["X", 0] == pytest.approx(0.0, abs=1e-6)

    def test_resolve_gives_same_prices(self):
        for seed in range(8):
            inst = random_instance(seed)
            sol = solve_fixflow(inst, _master_solution(inst))
            try:
                a = solve_qpprice(inst, sol)
                b = solve_qpprice(inst, sol)
            except PriceInfeasible:
                continue
            for k in a.prices.pi:
                assert b.prices[k] == pytest.approx(a.prices[k], abs=1e-7)


class TestClampPrices:
    def test_inside_interval_untouched(self):
        inst = f3()
        out = solve_qpprice(inst, solve_fixflow(inst, _master_solution(inst)))
        clamped, warnings = clamp_prices(out.prices, inst)
        assert warnings == []
        assert clamped["R", 0] == out.prices["R", 0]

    def test_area_interval_clamps_and_warns(self):
        # flat zero curve: every price supports it; min-norm picks 0,
        # below the area floor of 20
        inst = make_instance(
            {("X", 0): [[20, 0], [50, 0]]},
            area_intervals={"X": {"lower": 20, "upper": 50}},
        )
        sol = solve_fixflow(inst, _master_solution(inst))
        out = solve_qpprice(inst, sol)
        assert out.prices["X", 0] == pytest.approx(0.0, abs=1e-6)
        clamped, warnings = clamp_prices(out.prices, inst)
        assert clamped["X", 0] == pytest.approx(20.0, abs=1e-12)
        assert warnings
