from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from cwopt.emissions import pollution_index
from cwopt.model import (
    FeeError,
    FeeSchedule,
    FlowSolution,
    assemble_hpr,
    assemble_lower,
    assemble_m1,
    assemble_m4_lower,
    carrier_profit,
    government_cost,
    read_lp,
    write_lp,
)
from cwopt.scenario import EconParams, chengdu_like, generate_scenario
from cwopt.solver import SolveConfig, solve

from fixtures import random_fees, rerouting_scenario, tiny_scenario, twin_scenario, with_supplies

EXACT = SolveConfig(gap_target=0.0)


def small() -> "Scenario":  # noqa: F821
    sc = generate_scenario(4, {"P": 2, "S": 2, "D": 1}, horizon=8)
    return with_supplies(sc, {k: 15.5 for k in sc.production}, {k: 15.5 for k in sc.backfill})


def test_uniform_fees_reduce_to_m1():
    sc = small()
    fee = sc.econ.market_fee
    a = assemble_m1(sc)
    b = assemble_lower(sc, FeeSchedule.constant(sc, fee))
    assert np.array_equal(a.c, b.c)
    assert (a.A != b.A).nnz == 0 and np.array_equal(a.rhs, b.rhs)


def test_fee_equal_to_price_zeroes_sp_revenue():
    sc = small()
    price = sc.econ.transport_price
    sc = replace(sc, econ=replace(sc.econ, fee_upper=price))
    inst = assemble_lower(sc, FeeSchedule.constant(sc, price))
    lay = inst.layout
    sp_arcs = lay.leg == "SP"
    travel = np.array([f.travel_cost for f in sc.fleets])[lay.fleet] * lay.duration
    assert np.array_equal(inst.c[sp_arcs], travel[sp_arcs])


def test_fee_change_is_local():
    sc = small()
    base = FeeSchedule.constant(sc, 5.0)
    vals = base.values.copy()
    vals[0, 0] = 1.0  # first facility, electric fleet
    a = assemble_lower(sc, base)
    b = assemble_lower(sc, FeeSchedule(vals))
    lay = a.layout
    changed = np.flatnonzero(a.c != b.c)
    assert changed.size
    assert np.all(lay.leg[changed] == "SP")
    assert np.all(lay.dest[changed] == sc.processing[0])
    assert np.all(lay.fleet[changed] == 0)
    assert np.allclose(a.c[changed] - b.c[changed], 4.0 * lay.load_tonnes[changed])


def test_fee_out_of_bounds_rejected():
    sc = small()
    with pytest.raises(FeeError):
        assemble_lower(sc, FeeSchedule.constant(sc, sc.econ.fee_upper + 1.0))
    with pytest.raises(FeeError):
        assemble_lower(sc, FeeSchedule(np.zeros((1, 1))))


def test_every_variable_is_constrained():
    for seed in range(6):
        inst = assemble_m1(tiny_scenario(seed))
        per_col = np.diff(inst.A.tocsc().indptr)
        assert (per_col >= 1).all()
        assert (inst.lb == 0).all() and (inst.ub >= 0).all()


def test_hpr_shares_the_feasible_region():
    sc = small()
    a, h = assemble_m1(sc), assemble_hpr(sc)
    assert (a.A != h.A).nnz == 0 and np.array_equal(a.senses, h.senses) and np.array_equal(a.rhs, h.rhs)
    assert (h.c >= 0).all()


def test_windows_in_kilograms():
    sc = with_supplies(rerouting_scenario(), {2: 15.5}, {3: 15.5})
    inst = assemble_m1(sc)
    names = list(inst.row_names)
    lo = inst.rhs[names.index("supply_lo[2]")]
    hi = inst.rhs[names.index("supply_hi[2]")]
    assert lo == 15500.0
    # strictly below 1.05 * 15.5 t = 16,275 kg
    assert hi == 16274.0


def test_single_type_matches_untyped():
    sc = replace(small(), waste_types=("empty", "inert"))
    fees = random_fees(sc, 3)
    a = assemble_lower(sc, FeeSchedule(fees))
    b = assemble_m4_lower(sc, FeeSchedule(fees[..., None]))
    ka = {a.layout.key(k)[:4]: a.c[k] for k in range(a.n_vars)}
    kb = {b.layout.key(k)[:4]: b.c[k] for k in range(b.n_vars)}
    assert ka == kb
    assert a.n_rows == b.n_rows


def test_two_types_priced_by_carried_type():
    sc = replace(small(), waste_types=("empty", "inert", "mixed"))
    vals = np.zeros((len(sc.processing), len(sc.fleets), 2))
    vals[..., 0], vals[..., 1] = -3.0, 7.0
    inst = assemble_m4_lower(sc, FeeSchedule(vals))
    lay = inst.layout
    sp_arcs = lay.leg == "SP"
    inert = inst.c[sp_arcs & (lay.wtype == 1)]
    mixed = inst.c[sp_arcs & (lay.wtype == 2)]
    assert inert.size == mixed.size and np.allclose(mixed - inert, 10.0 * lay.load_tonnes[sp_arcs & (lay.wtype == 1)])
    # empty running is never typed
    assert (lay.wtype[~lay.loaded] == 0).all()


def test_missing_type_declaration_rejected():
    sc = small()
    with pytest.raises(FeeError):
        assemble_m4_lower(sc, FeeSchedule(np.zeros((len(sc.processing), len(sc.fleets), 1))))


def test_lp_text_round_trip(tmp_path):
    sc = small()
    inst = assemble_lower(sc, FeeSchedule(random_fees(sc, 9)))
    path = tmp_path / "m.lp"
    write_lp(inst, path)
    doc = read_lp(path)
    c = np.zeros(inst.n_vars)
    for k, v in doc["objective"].items():
        c[k] = v
    assert np.allclose(c, inst.c, rtol=1e-9, atol=0)
    A = inst.A.tocsr()
    assert len(doc["rows"]) == inst.n_rows
    op = {"<=": "<", ">=": ">", "=": "="}
    for r, (terms, sense, b) in enumerate(doc["rows"]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        assert terms == dict(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist()))
        assert op[sense] == inst.senses[r] and b == pytest.approx(inst.rhs[r], rel=1e-9)
    assert all(doc["bounds"][k] == (inst.lb[k], inst.ub[k]) for k in range(inst.n_vars))


def test_profit_sign_and_zero_dispatch():
    for seed in range(8):
        sc = tiny_scenario(seed)
        fees = random_fees(sc, seed)
        inst = assemble_lower(sc, FeeSchedule(fees))
        sol, _ = solve(inst, EXACT)
        if not sol.feasible:
            continue
        assert carrier_profit(sol, sc, fees) == pytest.approx(-sol.objective_value, abs=1e-9)
        zero = FlowSolution(inst, np.zeros(inst.n_vars, dtype=np.int64), 0.0, "manual")
        assert carrier_profit(zero, sc, fees) == 0.0 and government_cost(zero, sc, fees) == 0.0


def test_no_processing_flow_means_no_facility_term():
    # a single demand load next to an equal supply: the direct haul beats
    # routing through the facility, so the facility never sees waste
    sc = with_supplies(twin_scenario(), {3: 0.0}, {4: 0.0})
    sol, _ = solve(assemble_hpr(sc), EXACT)
    assert sol.objective_value == 0.0 and pollution_index(sol).facility_term == 0.0


def test_chengdu_dimensions_near_reference():
    inst = assemble_m1(chengdu_like(42))
    assert abs(inst.n_vars - 77556) <= 0.2 * 77556
    assert abs(inst.n_rows - 5548) <= 0.2 * 5548


def test_econ_defaults():
    e = EconParams()
    assert (e.transport_price, e.market_fee, e.fee_lower, e.fee_upper, e.slack) == (25.0, 5.0, -3.0, 7.0, 0.05)
