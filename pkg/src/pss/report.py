"""Error reports: rate fitting, CSV output with metadata and gnuplot scripts."""

from __future__ import annotations

import csv
import io
import math
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = ["RateFit", "fit_rate", "write_csv", "write_gnuplot", "git_revision", "ERROR_COLUMNS"]

# shared by taylor, interp and rb so their outputs can be overlaid
ERROR_COLUMNS = ["step", "card_Lambda", "sigma_hat", "sup_error_MC", "l2_error_MC", "lebesgue_probe", "solves", "wall_ms"]

_MIN_POINTS = 5
_FLOOR = 1e-12


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log(error) = c - s log(n).

    ``slope`` is the decay rate s; ``ci`` the 95% half-width. ``fitted`` is
    False (slope nan) when fewer than five usable points remain.
    """

    slope: float
    ci: float
    r2: float
    points: int
    window: tuple[int, int] | None = None

    @property
    def fitted(self) -> bool:
        return not math.isnan(self.slope)

    @property
    def poor(self) -> bool:
        return not self.fitted or self.r2 < 0.98

    def describe(self) -> str:
        if not self.fitted:
            return f"no-fit (only {self.points} usable points)"
        return f"s={self.slope:.4f} +/- {self.ci:.4f} (95%), R^2={self.r2:.4f}, points={self.points}" + (
            " [poor algebraic fit]" if self.poor else "")


def fit_rate(ns: Sequence[float], errors: Sequence[float], window: tuple[int, int] | None = None) -> RateFit:
    """Fit an algebraic rate to errors over n, using points inside ``window`` with error > 1e-12."""
    n = np.asarray(ns, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = np.isfinite(e) & (e > _FLOOR) & (n > 0)
    if window is not None:
        keep &= (n >= window[0]) & (n <= window[1])
    n, e = n[keep], e[keep]
    if n.size < _MIN_POINTS or np.unique(n).size < 2:
        return RateFit(math.nan, math.nan, math.nan, int(n.size), window)
    res = stats.linregress(np.log(n), np.log(e))
    tcrit = stats.t.ppf(0.975, n.size - 2)
    return RateFit(float(-res.slope), float(tcrit * res.stderr), float(res.rvalue ** 2), int(n.size), window)


def git_revision(cwd: str | Path | None = None) -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=cwd, capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _cell(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict], meta: dict) -> None:
    """UTF-8 CSV preceded by '# key: value' metadata lines."""
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_gnuplot(path: Path, csv_name: str, x: str, ys: Sequence[str], logx: bool = True, logy: bool = True,
                  title: str = "") -> None:
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
    ]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    lines += [f"set xlabel '{x}'", f"set title '{title}'"]
    plots = [f"'{csv_name}' using (column('{x}')):(column('{y}')) with linespoints title '{y}'" for y in ys]
    lines.append("plot " + ", \\\n     ".join(plots))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
