"""Image quality (RMSE/PSNR), FLOP cost model and run reports."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

SIG_DIGITS = 12


class Status(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    MAX_ITER = "max_iter"


def _pixels(img) -> np.ndarray:
    return np.asarray(getattr(img, "pixels", img), dtype=float)


def rmse(reference, candidate) -> float:
    p, q = _pixels(reference), _pixels(candidate)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return math.sqrt(float(np.sum((p - q) ** 2)) / p.size)


def psnr_from_rmse(err: float) -> float:
    if err == 0:
        return math.inf
    return 20.0 * math.log10(255.0 / err)


def psnr(reference, candidate) -> float:
    """Peak signal-to-noise ratio in dB with peak 255; ``inf`` if identical."""
    return psnr_from_rmse(rmse(reference, candidate))


def flop_inv_gauss(n: int) -> float:
    """Leading-order Gaussian-elimination cost ``(2/3) n^3``."""
    return 2.0 * n**3 / 3.0


def flops_estimate(extent: tuple[int, int], iterations: int,
                   flop_inv: Callable[[int], float] = flop_inv_gauss) -> float:
    """FLOPs per inpainted pixel: ``iterations * flop_inv(max(N, M)) / (N M)``."""
    n_rows, n_cols = extent
    return iterations * flop_inv(max(n_rows, n_cols)) / (n_rows * n_cols)


def round_sig(x: Optional[float], digits: int = SIG_DIGITS):
    """Round to ``digits`` significant digits; ``inf``/``nan`` become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    if x == 0:
        return 0.0
    return float(f"{x:.{digits - 1}e}")


@dataclass
class RunReport:
    status: Status
    iterations: int
    residual_history: list = field(default_factory=list)
    flops_per_pixel: float = 0.0
    psnr_db: Optional[float] = None
    rmse: Optional[float] = None
    wall_time_s: Optional[float] = None
    region_extent: tuple = (0, 0)
    image_shape: tuple = (0, 0)
    flop_model: str = "gauss-2/3n^3"
    params: dict = field(default_factory=dict)

    @property
    def residual_final(self) -> Optional[float]:
        return self.residual_history[-1] if self.residual_history else None

    def to_dict(self, timing: bool = False) -> dict:
        d = {
            "status": Status(self.status).value,
            "iterations": self.iterations,
            "residual_final": round_sig(self.residual_final),
            "flops_per_pixel": round_sig(self.flops_per_pixel),
            "flop_model": self.flop_model,
            "psnr": round_sig(self.psnr_db),
            "rmse": round_sig(self.rmse),
            "wall_time_s": round_sig(self.wall_time_s) if timing else None,
            "region_extent": list(self.region_extent),
            "image_shape": list(self.image_shape),
        }
        d.update({k: (round_sig(v) if isinstance(v, float) else v) for k, v in self.params.items()})
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=False)

    def csv_row(self) -> dict:
        return {
            "alpha": round_sig(self.params.get("alpha")),
            "dt": round_sig(self.params.get("dt")),
            "nu": round_sig(self.params.get("nu")),
            "status": Status(self.status).value,
            "iterations": self.iterations,
            "flops_per_pixel": round_sig(self.flops_per_pixel),
            "psnr_db": "" if self.psnr_db is None else round_sig(self.psnr_db),
        }


SWEEP_COLUMNS = ["alpha", "dt", "nu", "status", "iterations", "flops_per_pixel", "psnr_db"]


def summarize_sweep(reports: Iterable[RunReport]) -> str:
    """CSV of a sweep, one row per run, sorted by (dt, alpha) and then nu."""
    reports = list(reports)
    shapes = {(tuple(r.region_extent), tuple(r.image_shape)) for r in reports}
    if len(shapes) > 1:
        raise ValueError("inhomogeneous sweep: reports cover different image or region sizes")
    reports.sort(key=lambda r: (r.params.get("dt", 0.0), r.params.get("alpha", 0.0), r.params.get("nu", 0.0)))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()
