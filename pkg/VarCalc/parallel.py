"""
确定性并行映射
按连续块切分条目，线程池计算后按原顺序拼接，结果与调度无关
"""

import concurrent.futures
import logging
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

from .config import LOGGING_CONFIG, get_thread_count

logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

T = TypeVar("T")


def chunk_bounds(total: int, threads: int, min_chunk: int = 64) -> List[tuple]:
    """把 [0, total) 切成至多 threads 个连续块"""
    if total <= 0:
        return []
    pieces = max(1, min(threads, total // max(min_chunk, 1) or 1))
    edges = np.linspace(0, total, pieces + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_chunks(fn: Callable[[int, int], np.ndarray], total: int,
               threads: Optional[int] = None, min_chunk: int = 64) -> np.ndarray:
    """
    对 [0, total) 的连续块调用 fn(start, stop)，按块顺序沿第 0 轴拼接

    Args:
        fn: 处理一个块的函数，返回第 0 轴长度为 stop - start 的数组
        total: 条目总数
        threads: 线程数，None 时读取 VARCALC_THREADS
        min_chunk: 每块最少条目数

    Returns:
        拼接后的数组
    """
    threads = get_thread_count() if threads is None else threads
    bounds = chunk_bounds(total, threads, min_chunk)
    if len(bounds) <= 1:
        return fn(0, total)
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        parts = list(executor.map(lambda ab: fn(*ab), bounds))
    return np.concatenate(parts, axis=0)


def map_items(fn: Callable[[T], object], items: Sequence[T], threads: Optional[int] = None) -> list:
    """逐条映射，结果顺序与输入一致"""
    threads = get_thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))
