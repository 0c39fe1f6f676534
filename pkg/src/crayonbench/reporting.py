"""Metrics reports: canonical JSON, delimited CSV tables, and figures.

Success rates are exact rational counts (never floating accumulation) stored
as [numerator, denominator] pairs with a float convenience value. Reports
regenerate byte-identically from the stored raw rows. Figures render through
the Agg backend with pinned metadata so repeated runs produce identical
files.
"""
from __future__ import annotations

import csv
from fractions import Fraction
from io import StringIO
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .records import canonical_dumps, write_text

_FIG_METADATA = {"Software": "crayonbench"}
_DPI = 120


def rate(successes: int, trials: int) -> dict:
    """Exact success-rate record: raw counts plus the float value.

    The value comes from exact integer division (Fraction), never floating
    accumulation.
    """
    if trials <= 0:
        return {"num": 0, "den": 0, "value": None}
    return {"num": int(successes), "den": int(trials), "value": float(Fraction(successes, trials))}


def rate_value(r: dict) -> float | None:
    return r.get("value")


def write_report(out_dir: Path, name: str, payload: dict) -> Path:
    path = Path(out_dir) / f"{name}.json"
    write_text(path, canonical_dumps({"record": "report", "name": name, **payload}) + "\n")
    return path


def write_csv(out_dir: Path, name: str, header: list[str], rows: list[list]) -> Path:
    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    path = Path(out_dir) / f"{name}.csv"
    write_text(path, buf.getvalue())
    return path


def _save(fig, out_dir: Path, name: str) -> Path:
    path = Path(out_dir) / f"{name}.png"
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, metadata=_FIG_METADATA)
    plt.close(fig)
    return path


def figure_line(out_dir: Path, name: str, xs, ys, xlabel: str, ylabel: str, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(xs, ys, marker="o", color="#2060c0")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_dir, name)


def figure_bars(out_dir: Path, name: str, labels, values, ylabel: str, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.bar(range(len(labels)), values, color="#3f9c61", width=0.6)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_dir, name)


def figure_loss_curves(out_dir: Path, name: str, curves: dict[str, list[float]], title: str) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for label, values in sorted(curves.items()):
        ax.plot(range(1, len(values) + 1), values, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_dir, name)
