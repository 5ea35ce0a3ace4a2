import queue
import threading
import time

import numpy as np
import pytest

from core.distributions import Instance, PointMass, Triangle
from core.errors import InvalidDistributionError, InvalidPermutationError
from core.revenue import ap_revenue, ar_revenue
from services import sim_worker
from services.sim_worker import SimulationWorker, block_rng, run_blocks, split_blocks
from services.simulator import sample_bids, simulate_ap, simulate_ar, simulate_spm


def test_split_blocks():
    assert split_blocks(25, 10) == [10, 10, 5]
    assert split_blocks(20, 10) == [10, 10]
    assert split_blocks(3, 10) == [3]


def test_block_streams_are_reproducible_and_distinct():
    a = block_rng(7, 0).random(5)
    np.testing.assert_array_equal(a, block_rng(7, 0).random(5))
    assert not np.array_equal(a, block_rng(7, 1).random(5))
    assert not np.array_equal(a, block_rng(8, 0).random(5))


def test_run_blocks_preserves_block_order():
    def block(rng, size):
        return np.full(size, float(size))

    out = run_blocks(block, 25, seed=1, threads=3, block_size=10)
    np.testing.assert_array_equal(out, [10.0] * 20 + [5.0] * 5)


def test_run_blocks_reraises_worker_errors():
    def block(rng, size):
        raise InvalidDistributionError("坏块")

    with pytest.raises(InvalidDistributionError):
        run_blocks(block, 30, seed=1, threads=2, block_size=10)


class _OverlapDict(dict):
    """写入时若另一线程正在写入则记一次重叠。"""

    def __init__(self):
        super().__init__()
        self.busy = False
        self.overlaps = 0

    def __setitem__(self, key, value):
        if self.busy:
            self.overlaps += 1
        self.busy = True
        time.sleep(0.001)
        super().__setitem__(key, value)
        self.busy = False


def test_workers_sharing_a_lock_never_write_concurrently():
    tasks = queue.Queue()
    for index in range(40):
        tasks.put((index, 3))
    results = _OverlapDict()
    lock = threading.Lock()
    workers = [SimulationWorker(tasks, results, lambda rng, size: rng.random(size), 5, lock) for _ in range(4)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    assert sorted(results) == list(range(40))
    assert results.overlaps == 0


def test_run_blocks_hands_one_lock_to_all_workers(monkeypatch):
    locks = []

    class Recording(SimulationWorker):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, **kwargs)
            locks.append(self._lock)

    monkeypatch.setattr(sim_worker, "SimulationWorker", Recording)
    out = run_blocks(lambda rng, size: np.ones(size), 50, seed=3, threads=4, block_size=10)
    assert out.size == 50
    assert len(locks) == 4
    assert all(lock is locks[0] for lock in locks)


def test_sampled_bids_follow_groups():
    inst = Instance((PointMass(1.5), Triangle.of(2.0, 0.5)), k=1, counts=(2, 3))
    bids = sample_bids(inst, block_rng(0, 0), 1000)
    assert bids.shape == (1000, 5)
    assert np.all(bids[:, :2] == 1.5)
    assert np.all((bids[:, 2:] >= 0.0) & (bids[:, 2:] <= 2.0))


def test_deterministic_bids():
    inst = Instance.iid(PointMass(1.0), 3, 2)
    ap = simulate_ap(inst, 1.0, trials=500, seed=3)
    assert ap.mean == pytest.approx(2.0)
    assert ap.stderr == 0.0
    ar = simulate_ar(inst, 0.5, trials=500, seed=3)
    # 0.5·2 + 2·(1 - 0.5)
    assert ar.mean == pytest.approx(2.0)


def test_results_do_not_depend_on_thread_count():
    inst = Instance.iid(Triangle.of(2.0, 0.4), 4, 2)
    one = simulate_ar(inst, 0.5, trials=25_000, seed=11, threads=1, block_size=4000)
    four = simulate_ar(inst, 0.5, trials=25_000, seed=11, threads=4, block_size=4000)
    assert one.mean == four.mean
    assert one.stderr == four.stderr
    other = simulate_ar(inst, 0.5, trials=25_000, seed=12, threads=1, block_size=4000)
    assert other.mean != one.mean


@pytest.mark.parametrize("price", [0.5, 1.0, 1.8])
def test_simulation_agrees_with_formulas(price):
    inst = Instance((Triangle.of(2.0, 0.5), Triangle.of(1.5, 0.3), PointMass(0.9)), k=1)
    ap = simulate_ap(inst, price, trials=40_000, seed=5)
    assert abs(ap.mean - ap_revenue(inst, price)) <= 5.0 * ap.stderr + 1e-9
    ar = simulate_ar(inst, price, trials=40_000, seed=6)
    assert abs(ar.mean - ar_revenue(inst, price)) <= 5.0 * ar.stderr + 1e-6


def test_spm_stops_when_stock_runs_out():
    inst = Instance.iid(PointMass(1.0), 4, 2)
    result = simulate_spm(inst, [0.5] * 4, [3, 2, 1, 0], trials=100, seed=1)
    assert result.mean == pytest.approx(1.0)


def test_spm_skips_buyers_below_price():
    inst = Instance((PointMass(1.0), PointMass(3.0)), k=1)
    result = simulate_spm(inst, [2.0, 2.5], [0, 1], trials=100, seed=1)
    assert result.mean == pytest.approx(2.5)


def test_spm_rejects_bad_order():
    inst = Instance.iid(PointMass(1.0), 3, 1)
    with pytest.raises(InvalidPermutationError):
        simulate_spm(inst, [1.0] * 3, [0, 0, 1], trials=10, seed=1)
    with pytest.raises(InvalidPermutationError):
        simulate_spm(inst, [1.0] * 2, [0, 1, 2], trials=10, seed=1)


def test_trials_must_be_positive():
    inst = Instance.iid(PointMass(1.0), 2, 1)
    with pytest.raises(InvalidDistributionError):
        simulate_ap(inst, 1.0, trials=0, seed=1)
