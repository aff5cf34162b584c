"""Reconstruction quality on normalized pixels (peak value 1)."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(value, peak=1.0):
    if value < 0:
        raise ValueError("mse must be non-negative")
    if value == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / value)


def psnr(a, b, peak=1.0):
    return psnr_from_mse(mse(a, b), peak)


@dataclass
class Metrics:
    mse: float
    psnr: float
    wall_time: Optional[float] = None

    def to_dict(self):
        # JSON has no infinity; keep it as a string
        out = {"mse": self.mse, "psnr": "inf" if math.isinf(self.psnr) else self.psnr}
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def compare(original, reconstructed, wall_time=None):
    value = mse(original, reconstructed)
    return Metrics(value, psnr_from_mse(value), wall_time)
