import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from fednerf.channel import ChannelReport, default_links, round_reports, selected_rate_ratio
from fednerf.errors import ContractError
from fednerf.selector import (RateMode, SelectionConfig, initial_queues, normalized_rate, scores, select,
                              update_queues)

TABLE_III = (217.48, 197.18, 270.43, 305.81)


def reports(rates=TABLE_III, rssi=(50, 41, 66, 73)):
    from fednerf.channel import rssi_to_quality
    return [ChannelReport(i + 1, rssi[i % len(rssi)], rssi_to_quality(rssi[i % len(rssi)]), r)
            for i, r in enumerate(rates)]


def brute_force(score_map, k):
    """Best subset by exact score sum; ties go to the lexicographically smallest id tuple."""
    best, best_sum = None, None
    for subset in itertools.combinations(sorted(score_map), k):
        total = sum(Fraction(score_map[i]) for i in subset)
        if best_sum is None or total > best_sum:
            best, best_sum = subset, total
    return best


def test_normalized_rates():
    reps = reports()
    cfg = SelectionConfig(2)
    got = [normalized_rate(r, reps, cfg) for r in reps]
    assert got == pytest.approx([0.71116, 0.64478, 0.88430, 1.0], abs=1e-4)
    qcfg = SelectionConfig(2, rate_mode=RateMode.QUALITY_LEVEL)
    assert [normalized_rate(r, reps, qcfg) for r in reps] == [0.25, 0.25, 0.75, 1.0]
    same = reports((5.0,) * 4)
    assert [normalized_rate(r, same, cfg) for r in same] == [1.0] * 4


def test_select_examples():
    reps = reports()
    zero = initial_queues([1, 2, 3, 4])
    assert select(reps, zero, SelectionConfig(2, 0.0)) == (1, 2)
    assert select(reps, zero, SelectionConfig(2, 1000.0)) == (3, 4)
    assert brute_force(scores(reps, zero, SelectionConfig(2, 1000.0)), 2) == (3, 4)
    assert select(reps, {1: 0, 2: 0, 3: 1, 4: 1}, SelectionConfig(2, 0.0)) == (3, 4)


def test_select_needs_enough_clients():
    with pytest.raises(ContractError):
        select(reports()[:1], {1: 0}, SelectionConfig(2))


def test_update_queue_examples():
    assert update_queues({1: 0, 2: 0, 3: 1, 4: 1}, {3, 4}) == {1: 1, 2: 1, 3: 0, 4: 0}
    assert update_queues({1: 4, 2: 2}, {1, 2}) == {1: 0, 2: 0}


def test_q_zero_alternates():
    reps, queues, seen = reports(), initial_queues([1, 2, 3, 4]), []
    for _ in range(4):
        s = select(reps, queues, SelectionConfig(2, 0.0))
        queues = update_queues(queues, s)
        seen.append(s)
    assert seen == [(1, 2), (3, 4), (1, 2), (3, 4)]


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, n),
    st.lists(st.floats(0.5, 500), min_size=n, max_size=n),
    st.lists(st.integers(0, 5), min_size=n, max_size=n),
    st.sampled_from([0.0, 0.5, 1.0, 3.0, 100.0]),
)))
def test_select_equals_subset_oracle(case):
    n, k, rates, qs, q = case
    reps = reports(rates)
    queues = {i + 1: qs[i] for i in range(n)}
    cfg = SelectionConfig(k, q)
    assert select(reps, queues, cfg) == brute_force(scores(reps, queues, cfg), k)


@pytest.mark.parametrize("n,k", [(4, 2), (6, 3), (6, 2), (5, 5), (4, 1)])
def test_round_robin_at_q_zero(n, k):
    reps = reports(tuple(range(10, 10 + n)))
    queues = initial_queues(range(1, n + 1))
    rounds = 6 * (n // math.gcd(n, k))  # whole number of round-robin cycles
    counts = dict.fromkeys(range(1, n + 1), 0)
    for _ in range(rounds):
        s = select(reps, queues, SelectionConfig(k, 0.0))
        assert len(s) == k
        queues = update_queues(queues, s)
        for i in s:
            counts[i] += 1
    assert set(counts.values()) == {k * rounds // n}


@pytest.mark.parametrize("q", [0.0, 1.0, 10.0, 100.0, 1000.0])
def test_starvation_bound(q):
    reps = reports()
    cfg = SelectionConfig(2, q)
    r_hat = [normalized_rate(r, reps, cfg) for r in reps]
    bound = math.ceil(q * (max(r_hat) - min(r_hat))) + len(reps)
    queues = initial_queues([1, 2, 3, 4])
    for _ in range(3000):
        queues = update_queues(queues, select(reps, queues, cfg))
        assert max(queues.values()) <= bound


def test_trade_off_monotone_in_q():
    links = default_links(4, jitter=False)
    means = []
    for q in (0, 1, 10, 100, 1000):
        cfg, queues, ratios = SelectionConfig(2, float(q)), initial_queues([1, 2, 3, 4]), []
        for t in range(1, 401):
            reps = round_reports(links, t, 0)
            s = select(reps, queues, cfg)
            queues = update_queues(queues, s)
            ratios.append(selected_rate_ratio(s, reps))
        means.append(math.fsum(ratios) / len(ratios))
    assert means == sorted(means)


@given(st.floats(1e-3, 1e3), st.lists(st.integers(0, 6), min_size=4, max_size=4), st.floats(0, 50))
def test_rate_scale_invariance(scale, qs, q):
    queues = {i + 1: qs[i] for i in range(4)}
    cfg = SelectionConfig(2, q)
    base = [1.0, 2.0, 4.0, 8.0]  # power-of-two ratios keep max-normalization exact
    a = select(reports(base), queues, cfg)
    b = select(reports([r * scale for r in base]), queues, cfg)
    assert a == b
