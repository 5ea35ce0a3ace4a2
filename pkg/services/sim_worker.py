import logging
import queue
import threading
from typing import Callable, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

# block_fn(rng, size) -> 每次试验的收益数组
BlockFn = Callable[[np.random.Generator, int], np.ndarray]


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """试验块 block_index 的独立子流：Philox 计数器生成器，由 (seed, 块号) 派生。"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block_index)])))


def split_blocks(trials: int, block_size: int) -> List[int]:
    """把 trials 次试验切成固定大小的块（最后一块可能更小）。"""
    sizes = [block_size] * (trials // block_size)
    if trials % block_size:
        sizes.append(trials % block_size)
    return sizes


class SimulationWorker(threading.Thread):
    """
    蒙特卡洛工作线程：
    - 从共享队列中取出 (块号, 块大小)，用该块自己的子流模拟
    - 结果按块号写入共享字典，汇总时按块号拼接，因此与线程数无关
    - 第一个异常会被记录下来，由调用方在 join 之后重新抛出
    """

    def __init__(
        self,
        tasks: "queue.Queue",
        results: Dict[int, np.ndarray],
        block_fn: BlockFn,
        seed: int,
        lock: Optional[threading.Lock] = None,
    ):
        super().__init__(daemon=True)
        self.tasks = tasks
        self.results = results
        self.block_fn = block_fn
        self.seed = seed
        self.error: Optional[BaseException] = None

        self._stop_event = threading.Event()
        # 同一批工作线程共用一把锁保护 results
        self._lock = lock if lock is not None else threading.Lock()

    def stop(self):
        """请求线程在当前块结束后退出。"""
        self._stop_event.set()

    def run(self):
        while not self._stop_event.is_set():
            try:
                index, size = self.tasks.get_nowait()
            except queue.Empty:
                return
            try:
                values = np.asarray(self.block_fn(block_rng(self.seed, index), size), dtype=float)
                with self._lock:
                    self.results[index] = values
            except Exception as e:
                self.error = e
                logger.debug("模拟块 %d 失败: %s", index, e)
                return
            finally:
                self.tasks.task_done()


def run_blocks(block_fn: BlockFn, trials: int, seed: int, threads: int = 1, block_size: int = 10_000) -> np.ndarray:
    """在 threads 个 SimulationWorker 上跑完所有块，按块号顺序返回全部试验结果。"""
    sizes = split_blocks(trials, max(1, int(block_size)))
    tasks: "queue.Queue" = queue.Queue()
    for index, size in enumerate(sizes):
        tasks.put((index, size))
    results: Dict[int, np.ndarray] = {}
    lock = threading.Lock()
    count = max(1, min(threads, len(sizes)))
    workers = [SimulationWorker(tasks, results, block_fn, seed, lock) for _ in range(count)]
    for w in workers:
        w.start()
    try:
        for w in workers:
            w.join()
    finally:
        for w in workers:
            w.stop()
    for w in workers:
        if w.error is not None:
            raise w.error
    return np.concatenate([results[i] for i in range(len(sizes))])
