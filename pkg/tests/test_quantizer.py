import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dcsrd.quantizer import (
    CountTable,
    QuantizerSpec,
    SymbolStream,
    conditional_entropy_from_tables,
    dequantize,
    empirical_conditional_entropy,
    empirical_entropy,
    joint_keys,
    quantize,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_midtread_examples():
    assert quantize(np.array([0.4]), 1.0).symbols[0] == 0
    assert quantize(np.array([0.5]), 1.0).symbols[0] == 1
    assert quantize(np.array([-0.5]), 1.0).symbols[0] == -1
    assert quantize(np.array([2.49, -2.51]), 1.0).symbols.tolist() == [2, -3]


def test_step_validation():
    with pytest.raises(ValueError):
        QuantizerSpec(0.0)
    with pytest.raises(ValueError):
        QuantizerSpec(1.0, "midrise")


def test_fine_step_noise_power(rng):
    y = rng.normal(0.0, 1.0, 1_000_000)
    step = 0.05
    err = dequantize(quantize(y, step)) - y
    assert np.mean(err**2) == pytest.approx(step**2 / 12, rel=0.02)


@settings(max_examples=200)
@given(hnp.arrays(np.float64, st.integers(1, 50), elements=finite), st.floats(1e-3, 1e3))
def test_midtread_error_bound(y, step):
    s = quantize(y, step)
    assert np.all(np.abs(y - dequantize(s)) <= step / 2 * (1 + 1e-12))


@given(hnp.arrays(np.int64, st.integers(1, 50), elements=st.integers(-10**6, 10**6)),
       st.floats(1e-3, 1e3))
def test_round_trip_symbols(symbols, step):
    s = SymbolStream(symbols, step)
    assert np.array_equal(quantize(dequantize(s), step).symbols, symbols)


def test_zero_stream():
    assert not dequantize(SymbolStream(np.zeros(5, np.int64), 0.3)).any()


# -- entropy ---------------------------------------------------------------------------


def test_entropy_examples(rng):
    assert empirical_entropy(np.zeros(100, np.int64)) == 0.0
    coin = rng.integers(0, 2, 1_000_000)
    assert empirical_entropy(coin) == pytest.approx(1.0, abs=0.01)
    with pytest.raises(ValueError):
        empirical_entropy(np.zeros(0, np.int64))


def test_high_rate_entropy(rng):
    var, step = 0.063125, 0.004
    s = quantize(rng.normal(0.0, math.sqrt(var), 1_000_000), step)
    expect = 0.5 * math.log2(2 * math.pi * math.e * var) - math.log2(step)
    assert empirical_entropy(s) == pytest.approx(expect, abs=0.02)


def test_conditional_entropy_independent_side(rng):
    y1 = rng.normal(size=1_000_000)
    y2 = rng.normal(size=1_000_000)
    s1 = quantize(y1, 0.5)
    h = empirical_entropy(s1)
    assert empirical_conditional_entropy(s1, y2, side_step=0.5) == pytest.approx(h, abs=0.02)


def test_conditional_entropy_deterministic_side(rng):
    s1 = quantize(rng.normal(size=10_000), 0.1)
    assert empirical_conditional_entropy(s1, dequantize(s1), side_step=0.1) == 0.0


def test_conditional_entropy_length_mismatch(rng):
    with pytest.raises(ValueError):
        empirical_conditional_entropy(quantize(np.zeros(4), 1.0), np.zeros(5))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 400), st.floats(0.0, 0.999), st.floats(0.05, 2.0), st.integers(0, 2**32 - 1),
       st.sampled_from(["none", "miller-madow"]))
def test_conditional_entropy_bounds(n, rho, step, seed, corr):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(2, n))
    y1 = z[0]
    y2 = rho * z[0] + math.sqrt(1 - rho * rho) * z[1]
    s1 = quantize(y1, step)
    h = empirical_entropy(s1, corr)
    hc = empirical_conditional_entropy(s1, y2, correction=corr)
    assert 0.0 <= hc <= h + 1e-12


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.int64, st.integers(1, 300), elements=st.integers(-20, 20)),
       st.lists(st.integers(0, 300), max_size=4))
def test_count_table_merge_is_partition_invariant(keys, cuts):
    whole = CountTable.from_keys(keys)
    edges = sorted({0, keys.size, *[min(c, keys.size) for c in cuts]})
    parts = [CountTable.from_keys(keys[a:b]) for a, b in zip(edges, edges[1:]) if b > a]
    merged = CountTable.empty()
    for p in reversed(parts):
        merged = p.merge(merged)
    assert np.array_equal(merged.keys, whole.keys)
    assert np.array_equal(merged.counts, whole.counts)
    assert merged.entropy() == whole.entropy()


def test_miller_madow_correction():
    t = CountTable.from_keys(np.array([0, 0, 1, 2]))
    plug = t.entropy()
    assert t.entropy("miller-madow") == pytest.approx(plug + 2 / (8 * math.log(2)))
    with pytest.raises(ValueError):
        t.entropy("jackknife")


def test_joint_keys_unique_and_guarded():
    s = np.array([-3, -3, 0, 5])
    b = np.array([7, -7, 0, 7])
    k = joint_keys(s, b)
    assert len(set(k.tolist())) == 4
    with pytest.raises(OverflowError):
        joint_keys(np.array([0]), np.array([2**31]))


def test_conditional_from_tables_matches_direct(rng):
    y1 = rng.normal(size=5000)
    y2 = 0.9 * y1 + 0.1 * rng.normal(size=5000)
    s1 = quantize(y1, 0.2)
    from dcsrd.quantizer import side_bins

    b2 = side_bins(y2, 0.05)
    hc = conditional_entropy_from_tables(CountTable.from_keys(joint_keys(s1.symbols, b2)),
                                         CountTable.from_keys(b2))
    assert hc == pytest.approx(empirical_conditional_entropy(s1, y2), abs=1e-12)


# -- estimator convergence on real measurement data -------------------------------------


@pytest.fixture(scope="module")
def pooled_sparse_innovation():
    from dcsrd.experiments import SweepConfig, pooled_measurements
    from dcsrd.model import PairSpec

    spec = PairSpec(512, 8, 8, 8, var_c=1.0, var_i1=0.01, var_i2=0.01)
    cfg = SweepConfig(spec, 128, (0.01,), trials=15_625, master_seed=5)
    y1, y2 = pooled_measurements(cfg)
    return spec, y1, y2


def _step_for_conditional_rate(spec, rate):
    from dcsrd.experiments import delta_grid_for

    return delta_grid_for(spec, 128, [rate])[0]


@pytest.mark.slow
def test_rate_gain_at_four_bits(pooled_sparse_innovation):
    spec, y1, y2 = pooled_sparse_innovation
    step = _step_for_conditional_rate(spec, 4.0)
    s = quantize(y1[:1_000_000], step)
    gap = empirical_entropy(s, "miller-madow") - empirical_conditional_entropy(
        s, y2[:1_000_000], correction="miller-madow")
    assert gap == pytest.approx(2.83, abs=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("rate", [3.0, 4.0])
def test_side_step_refinement(pooled_sparse_innovation, rate):
    spec, y1, y2 = pooled_sparse_innovation
    step = _step_for_conditional_rate(spec, rate)
    s = quantize(y1[:1_000_000], step)
    h4 = empirical_conditional_entropy(s, y2[:1_000_000], step / 4, "miller-madow")
    h8 = empirical_conditional_entropy(s, y2[:1_000_000], step / 8, "miller-madow")
    assert abs(h4 - h8) < 0.01


@pytest.mark.slow
@pytest.mark.parametrize("rate", [3.0, 4.0])
def test_sample_doubling_convergence(pooled_sparse_innovation, rate):
    spec, y1, y2 = pooled_sparse_innovation
    step = _step_for_conditional_rate(spec, rate)
    h = {}
    for n in (1_000_000, 2_000_000):
        s = quantize(y1[:n], step)
        h[n] = (empirical_entropy(s, "miller-madow"),
                empirical_conditional_entropy(s, y2[:n], correction="miller-madow"))
    assert abs(h[1_000_000][0] - h[2_000_000][0]) < 0.01
    assert abs(h[1_000_000][1] - h[2_000_000][1]) < 0.01
