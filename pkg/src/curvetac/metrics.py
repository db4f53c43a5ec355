"""Similarity metrics between real and simulated tactile images.

MAE is reported as a percentage of full scale, SSIM as the canonical
single-scale index (Gaussian 11x11 window, sigma 1.5, K1=0.01, K2=0.03,
L=255) on the channel-averaged image, PSNR in decibels with identical
images flagged as infinite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .render import read_png

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"image dimension mismatch: {a.shape} vs {b.shape}")


def mae_percent(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute error over all pixels and channels, percent of 255."""
    _check_pair(a, b)
    diff = np.abs(a.astype(np.float64) - b.astype(np.float64))
    return float(diff.mean() / 255.0 * 100.0)


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    w = np.outer(g, g)
    return w / w.sum()


def _valid_windows(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    h, wd = img.shape
    k = SSIM_WINDOW
    out = np.zeros((h - k + 1, wd - k + 1))
    for i in range(k):
        for j in range(k):
            out += w[i, j] * img[i:i + h - k + 1, j:j + wd - k + 1]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM on the channel-averaged image, mean over all valid
    (fully inside) window positions."""
    _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}px per side for SSIM")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if x.ndim == 3:
        x = x.mean(axis=2)
        y = y.mean(axis=2)
    w = _gaussian_window()
    mu_x = _valid_windows(x, w)
    mu_y = _valid_windows(y, w)
    xx = _valid_windows(x * x, w) - mu_x * mu_x
    yy = _valid_windows(y * y, w) - mu_y * mu_y
    xy = _valid_windows(x * y, w) - mu_x * mu_y
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio, 10*log10(255^2 / MSE); inf when identical."""
    _check_pair(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


@dataclass
class PairMetrics:
    name: str
    mae_percent: float
    ssim: float
    psnr_db: float

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "mae_percent": _sig6(self.mae_percent),
            "ssim": _sig6(self.ssim),
            "psnr_db": None if math.isinf(self.psnr_db) else _sig6(self.psnr_db),
            "psnr_infinite": bool(math.isinf(self.psnr_db)),
        }


@dataclass
class MetricsReport:
    pairs: list[PairMetrics]
    unmatched_real: list[str] = field(default_factory=list)
    unmatched_sim: list[str] = field(default_factory=list)

    def aggregate(self) -> dict:
        finite_psnr = [p.psnr_db for p in self.pairs if not math.isinf(p.psnr_db)]
        return {
            "mae_percent": _sig6(float(np.mean([p.mae_percent for p in self.pairs]))),
            "ssim": _sig6(float(np.mean([p.ssim for p in self.pairs]))),
            "psnr_db": _sig6(float(np.mean(finite_psnr))) if finite_psnr else None,
            "psnr_infinite_pairs": sum(math.isinf(p.psnr_db) for p in self.pairs),
            "pair_count": len(self.pairs),
        }

    def as_dict(self) -> dict:
        out = {
            "pairs": [p.as_dict() for p in self.pairs],
            "aggregate": self.aggregate(),
        }
        if self.unmatched_real:
            out["unmatched_real"] = sorted(self.unmatched_real)
        if self.unmatched_sim:
            out["unmatched_sim"] = sorted(self.unmatched_sim)
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


def dataset_compare(real_dir, sim_dir) -> MetricsReport:
    """Pair PNGs by filename across two directories and score each pair.

    Unmatched files are listed in the report; an empty intersection is an
    error. Pairs are processed and reported in filename order.
    """
    real_dir, sim_dir = Path(real_dir), Path(sim_dir)
    real = {p.name for p in real_dir.glob("*.png")}
    sim = {p.name for p in sim_dir.glob("*.png")}
    common = sorted(real & sim)
    if not common:
        raise FormatError(f"no matching PNG filenames between {real_dir} and {sim_dir}")
    pairs = []
    for name in common:
        a = read_png(real_dir / name)
        b = read_png(sim_dir / name)
        pairs.append(PairMetrics(name, mae_percent(a, b), ssim(a, b), psnr(a, b)))
    return MetricsReport(pairs, sorted(real - sim), sorted(sim - real))
