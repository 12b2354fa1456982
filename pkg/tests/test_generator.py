from __future__ import annotations

import pytest

from stallsim import DepthVector, expand_loops, validate_trace
from stallsim.generator import (
    GenParams,
    big_design,
    chain_loop_design,
    cross_design,
    backpressure_design,
    gen_design,
)
from tests.conftest import run_both


def test_seed_determinism():
    a = gen_design(GenParams(seed=123))
    b = gen_design(GenParams(seed=123))
    assert a.schedule_text == b.schedule_text
    assert a.trace_text == b.trace_text
    assert a.tokens == b.tokens
    c = gen_design(GenParams(seed=124))
    assert (c.schedule_text, c.trace_text) != (a.schedule_text, a.trace_text)


def test_params_validation():
    with pytest.raises(ValueError):
        GenParams(seed=0, modules=(5, 2))
    with pytest.raises(ValueError):
        GenParams(seed=0, topology="ring")
    with pytest.raises(ValueError):
        GenParams(seed=0, fifos=(0, 0))
    with pytest.raises(ValueError):
        GenParams(seed=0, pipelined_prob=1.5)


@pytest.mark.parametrize("topology", ["chain", "tree", "random-dag"])
def test_generated_designs_validate_cleanly(topology):
    for seed in range(40):
        design = gen_design(GenParams(seed=seed, topology=topology))
        assert validate_trace(design.trace, design.schedule) == []
        # Expanded form also validates.
        assert validate_trace(expand_loops(design.trace), design.schedule) == []


def test_generated_designs_terminate_at_max_depths():
    for seed in range(60):
        design = gen_design(GenParams(seed=seed))
        res, oracle_res = run_both(design, design.max_depths())
        assert not res.is_deadlock
        assert not oracle_res.is_deadlock


def test_respects_size_limits():
    params = GenParams(seed=5, modules=(2, 4), fifos=(1, 5), axi_interfaces=(0, 2))
    for seed in range(30):
        design = gen_design(GenParams(seed=seed, modules=(2, 4), fifos=(1, 5),
                                      axi_interfaces=(0, 2)))
        assert len(design.schedule.functions) - 1 <= 4  # excluding top
        assert len(design.schedule.fifos) <= 5
        assert len(design.schedule.axis) <= 2


def test_presets():
    backpressure = backpressure_design()
    assert backpressure.tokens == {"f0": 4}
    cross = cross_design()
    assert set(cross.tokens) == {"fx", "fy"}
    chain = chain_loop_design(100)
    assert validate_trace(chain.trace, chain.schedule) == []
    big = big_design(modules=3, tripcount=50)
    assert validate_trace(big.trace, big.schedule) == []
    res, oracle_res = run_both(big, big.max_depths())
    assert res.cycles == oracle_res.cycles and not res.is_deadlock
