import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zexplore.likelihood import (Family, SchemaError, UnitObservations, cohort_kernels,
                                 log_kernel, mle, pooled_mle)
from zexplore import paperdata

BIN = Family.binomial()


def test_mle_table1_reader():
    u = UnitObservations("r", successes=8, trials=92)
    assert round(100 * mle(u, BIN)[0], 1) == 8.7


def test_mle_boundary_and_multinomial():
    assert mle(UnitObservations("r", successes=0, trials=10), BIN)[0] == 0.0
    fam = Family.multinomial(["a", "b", "c"])
    np.testing.assert_allclose(mle(UnitObservations("m", counts=(2, 3, 5)), fam), [0.2, 0.3, 0.5])


def test_family_mismatch_is_schema_error():
    with pytest.raises(SchemaError):
        mle(UnitObservations("m", counts=(1, 2)), BIN)
    with pytest.raises(SchemaError):
        mle(UnitObservations("b", successes=1, trials=2), Family.multinomial(["a", "b"]))
    with pytest.raises(SchemaError):
        mle(UnitObservations("m", counts=(1, 2)), Family.multinomial(["a", "b", "c"]))


@pytest.mark.parametrize("kwargs", [
    dict(successes=3, trials=2), dict(successes=-1, trials=2), dict(successes=0, trials=0),
    dict(counts=(0, 0)), dict(counts=(1, -1)), dict(counts=(3,)),
])
def test_invalid_units(kwargs):
    with pytest.raises(SchemaError):
        UnitObservations("x", **kwargs)


def test_log_kernel_examples():
    u = UnitObservations("r", successes=1, trials=2)
    assert log_kernel(u, [0.5], BIN) == pytest.approx(math.log(0.5) + math.log(0.5))
    assert log_kernel(UnitObservations("r", successes=2, trials=2), [1.0], BIN) == 0.0
    assert log_kernel(u, [1.0], BIN) == -math.inf


def test_log_kernel_rejects_bad_params():
    u = UnitObservations("r", successes=1, trials=2)
    with pytest.raises(SchemaError):
        log_kernel(u, [1.2], BIN)
    with pytest.raises(SchemaError):
        log_kernel(UnitObservations("m", counts=(1, 1)), [0.3, 0.3], Family.multinomial("ab"))


def test_pooled_mle_paper_cohorts():
    t1 = paperdata.load("dual_first_detection")
    assert pooled_mle(t1, BIN)[0] == pytest.approx(199 / 28204)
    assert round(pooled_mle(t1, BIN)[0], 4) == 0.0071
    t2 = paperdata.load("cad_recall")
    assert round(pooled_mle(t2, BIN)[0], 4) == 0.0389


def test_pooled_mle_identical_units_and_empty():
    units = [UnitObservations(f"u{i}", successes=3, trials=7) for i in range(2)]
    assert pooled_mle(units, BIN)[0] == mle(units[0], BIN)[0]
    with pytest.raises(SchemaError):
        pooled_mle([], BIN)


def test_sequence_and_sufficient_statistic_agree():
    seq = [1, 0, 0, 1, 1, 0, 0]
    a = UnitObservations.from_sequence("s", seq)
    b = UnitObservations("s", successes=3, trials=7)
    assert (a.successes, a.trials) == (b.successes, b.trials)
    direct = sum(math.log(0.3) if v else math.log(0.7) for v in seq)
    assert log_kernel(a, [0.3], BIN) == pytest.approx(direct, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 200), data=st.data())
def test_mle_maximises_binomial_kernel(n, data):
    y = data.draw(st.integers(0, n))
    u = UnitObservations("r", successes=y, trials=n)
    best = log_kernel(u, mle(u, BIN), BIN)
    rng = np.random.default_rng(n * 1000 + y)
    for v in rng.uniform(0, 1, 1000):
        assert log_kernel(u, [v], BIN) <= best + 1e-12


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(0, 30), min_size=2, max_size=5).filter(lambda c: sum(c) > 0))
def test_mle_maximises_multinomial_kernel(counts):
    fam = Family.multinomial([f"c{i}" for i in range(len(counts))])
    u = UnitObservations("m", counts=tuple(counts))
    est = mle(u, fam)
    assert abs(est.sum() - 1.0) <= 1e-12
    best = log_kernel(u, est, fam)
    rng = np.random.default_rng(sum(counts))
    for v in rng.dirichlet(np.ones(len(counts)), 1000):
        v = v / v.sum()
        assert float(np.sum(np.asarray(counts) * np.log(v))) <= best + 1e-9


def test_cohort_kernels_shape():
    units = [UnitObservations("a", successes=1, trials=2), UnitObservations("b", successes=2, trials=2)]
    L = cohort_kernels(units, BIN, [[0.5], [1.0]])
    assert L.shape == (2, 2)
    assert L[0, 1] == -math.inf and L[1, 1] == 0.0
