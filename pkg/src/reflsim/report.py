"""Previews, delimited summaries and matplotlib figures for generated datasets."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.image as mpimg  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import SimulationConfig  # noqa: E402
from .image_core import LinearImage, to_preview_srgb  # noqa: E402

SUMMARY_FIELDS = ("seed", "i", "j", "a", "b", "decision", "mean_ssim", "std_ssim", "e_prime",
                  "white_x_awb", "white_y_awb", "azimuth_deg", "vfov_deg", "refractive_index",
                  "double_pane")


def save_preview(img: LinearImage, path) -> None:
    """Write the 8-bit sRGB rendering of a linear-sRGB image as PNG."""
    mpimg.imsave(Path(path), to_preview_srgb(img), format="png",
                 metadata={"Software": None})


def summary_rows(records) -> list[dict]:
    rows = []
    for rec in records:
        stats = rec.get("stats") or {}
        white = stats.get("white_xy_awb") or [None, None]
        sc = rec.get("scenario") or {}
        rows.append({
            "seed": rec["seed"], "i": rec["i"], "j": rec["j"], "a": rec["a"], "b": rec["b"],
            "decision": rec["decision"], "mean_ssim": stats.get("mean_ssim"),
            "std_ssim": stats.get("std_ssim"), "e_prime": stats.get("e_prime"),
            "white_x_awb": white[0], "white_y_awb": white[1],
            "azimuth_deg": sc.get("azimuth_deg"), "vfov_deg": sc.get("vfov_deg"),
            "refractive_index": sc.get("refractive_index"), "double_pane": sc.get("double_pane"),
        })
    return rows


def write_summary(records, path, delimiter: str = "\t") -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, delimiter=delimiter)
        writer.writeheader()
        for row in summary_rows(records):
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return path


def plot_cull_reasons(histogram: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = list(histogram)
    ax.bar(range(len(names)), [histogram[n] for n in names], color="0.4")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("attempts")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_ssim(records, path, config: SimulationConfig | None = None) -> Path:
    config = config or SimulationConfig()
    fig, ax = plt.subplots(figsize=(5, 4))
    pts = [(r["stats"]["mean_ssim"], r["stats"]["std_ssim"], r["decision"] == "Keep")
           for r in records if r.get("stats", {}).get("mean_ssim") is not None]
    if pts:
        arr = np.array(pts, dtype=float)
        kept = arr[:, 2] > 0
        ax.scatter(arr[~kept, 0], arr[~kept, 1], s=8, c="0.65", label="culled")
        ax.scatter(arr[kept, 0], arr[kept, 1], s=10, c="C0", label="kept")
        ax.legend(loc="upper left", frameon=False)
    lo, hi = config.ssim_range
    ax.axvline(lo, color="k", lw=0.8, ls="--")
    ax.axvline(hi, color="k", lw=0.8, ls="--")
    ax.axhline(config.ssim_std_min, color="k", lw=0.8, ls=":")
    ax.set_xlabel("mean SSIM(m, t)")
    ax.set_ylabel("std SSIM(m, t)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_exposure(records, path) -> Path:
    values = [r["stats"]["e_prime"] for r in records
              if (r.get("stats") or {}).get("e_prime") is not None]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if values:
        ax.hist(np.log2(values), bins=30, color="0.4")
    ax.set_xlabel("log2 e'")
    ax.set_ylabel("attempts")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(manifest, out_dir, config: SimulationConfig | None = None) -> dict[str, Path]:
    """Write summary.tsv and the three figures for a dataset manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = list(manifest)
    return {
        "summary": write_summary(records, out_dir / "summary.tsv"),
        "cull_reasons": plot_cull_reasons(manifest.histogram(), out_dir / "cull_reasons.png"),
        "ssim": plot_ssim(records, out_dir / "ssim_scatter.png", config),
        "exposure": plot_exposure(records, out_dir / "exposure_hist.png"),
    }
