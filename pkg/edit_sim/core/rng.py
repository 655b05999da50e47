"""
确定性随机数生成器

基于 numpy 的 PCG64 + SeedSequence。(seed, stream) 相同的生成器在任何平台上
产出相同序列；不同 stream 通过 SeedSequence 的 spawn_key 派生，统计独立。
"""

from typing import Tuple

import numpy as np


class Rng:
    """带子流标签的种子随机数生成器"""

    def __init__(self, seed: int, stream: Tuple[int, ...] = (0,)):
        if isinstance(stream, int):
            stream = (stream,)
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def substream(self, *keys: int) -> "Rng":
        """派生子流，不消耗当前流的状态"""
        return Rng(self.seed, self.stream + tuple(int(k) for k in keys))

    def reset(self) -> "Rng":
        """返回状态归零的同一条流"""
        return Rng(self.seed, self.stream)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, mean: float = 0.0, std: float = 1.0, size=None):
        return self._gen.normal(mean, std, size)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def clipped_normal(self, std: float, clip_abs: float, size) -> np.ndarray:
        """零均值高斯，逐元素截断到 [-clip_abs, clip_abs]"""
        draws = self._gen.normal(0.0, 1.0, size) * std
        return np.clip(draws, -clip_abs, clip_abs)

    def __repr__(self) -> str:
        return f"<Rng seed={self.seed} stream={self.stream}>"


def normal_sample(rng: Rng, mean: float, std: float, clip_abs: float) -> float:
    """
    截断高斯采样

    零均值部分先截断再加 mean，因此 |result - mean| <= clip_abs。
    std == 0 时仍消耗一次抽样，保证流的位置与 std 无关。
    """
    z = float(rng.normal(0.0, 1.0)) * std
    if z > clip_abs:
        z = clip_abs
    elif z < -clip_abs:
        z = -clip_abs
    return mean + z
