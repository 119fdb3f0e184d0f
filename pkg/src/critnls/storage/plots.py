"""SVG line charts rebuilt from a diagnostics CSV alone."""
import logging
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .results import PathLike, read_diagnostics  # noqa: E402

logger = logging.getLogger(__name__)

CHARTS = {
    "K.svg": ("K", "K(t)"),
    "E.svg": ("E", "E(t)"),
    "V.svg": ("V", "V(t)"),
    "Rloc.svg": ("R_loc", "localized virial R(t)"),
}


def _save(fig, path: Path) -> Path:
    # no timestamp so re-rendering the same CSV gives the same file
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def render_diagnostics(csv_path: PathLike, out_dir: PathLike) -> List[Path]:
    records = read_diagnostics(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = np.array([rec.t for rec in records])
    written: List[Path] = []

    for name, (attr, title) in CHARTS.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(t, [getattr(rec, attr) for rec in records], lw=1.5)
        ax.set_xlabel("t")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        written.append(_save(fig, out_dir / name))

    K = np.array([rec.K for rec in records])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t**2, K, "o", ms=3, label="K")
    positive = t > 0
    if np.count_nonzero(positive) >= 2:
        slope, intercept = np.polyfit(t[positive] ** 2, K[positive], 1)
        ax.plot(t**2, slope * t**2 + intercept, "--", label=f"fit slope {slope:.4g}")
    ax.set_xlabel("t^2")
    ax.set_ylabel("K")
    ax.legend()
    ax.grid(True, alpha=0.3)
    written.append(_save(fig, out_dir / "K_vs_t2.svg"))

    logger.info(f"Rendered {len(written)} charts into {out_dir}")
    return written
