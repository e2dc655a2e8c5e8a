# tdlab/services/reporting.py
"""
Reporting

CSV / manifest output of a run, parsing a summary back, and log-log rate
fits over a checkpoint window.

Output files in the run directory:
    traces.csv      trial,step,error,diverged
    summary.csv     step,mean,lo95,hi95
    divergence.csv  step,diverged,trials
    manifest.txt    key = value lines
"""

import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import stats

from tdlab.core.exceptions import RateFitError
from tdlab.schemas.experiment import ExperimentConfig, ExperimentSummary, SummaryRow, TrialTrace
from tdlab.schemas.reports import RateFit
from tdlab.services.config_file import config_items

logger = logging.getLogger(__name__)

TRACE_HEADER = ["trial", "step", "error", "diverged"]
SUMMARY_HEADER = ["step", "mean", "lo95", "hi95"]
DIVERGENCE_HEADER = ["step", "diverged", "trials"]


def _fmt(x: float) -> str:
    return repr(float(x))


def emit(
    traces: List[TrialTrace],
    summary: ExperimentSummary,
    config: ExperimentConfig,
    path: Union[str, Path],
    manifest: Optional[Dict[str, str]] = None,
) -> Dict[str, Path]:
    """
    Write traces, summary, divergence counts and the manifest under ``path``.

    Raises:
        OSError: filesystem errors, unchanged
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "traces": out / "traces.csv",
        "summary": out / "summary.csv",
        "divergence": out / "divergence.csv",
        "manifest": out / "manifest.txt",
    }

    with open(files["traces"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for trace in traces:
            for step, error in zip(trace.steps, trace.errors):
                diverged = trace.diverged_at is not None and trace.diverged_at <= step
                writer.writerow([trace.trial, step, _fmt(error), int(diverged)])

    with open(files["summary"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for row in summary.rows:
            writer.writerow([row.step, _fmt(row.mean), _fmt(row.lo95), _fmt(row.hi95)])

    with open(files["divergence"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIVERGENCE_HEADER)
        for row in summary.rows:
            writer.writerow([row.step, row.diverged, summary.n_trials])

    entries = manifest if manifest is not None else {f"config.{k}": v for k, v in config_items(config)}
    with open(files["manifest"], "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")

    logger.info(f"Wrote {len(traces)} trace(s) and {len(summary.rows)} summary row(s) to {out}")
    return files


def load_summary(path: Union[str, Path]) -> ExperimentSummary:
    """
    Parse a summary CSV; divergence counts are read from the sibling
    divergence.csv when it exists.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SUMMARY_HEADER:
            raise ValueError(f"{path} does not have the summary header {','.join(SUMMARY_HEADER)}")
        rows = [
            SummaryRow(step=int(r["step"]), mean=float(r["mean"]), lo95=float(r["lo95"]), hi95=float(r["hi95"]))
            for r in reader
        ]
    n_trials = 0
    divergence = path.with_name("divergence.csv")
    if divergence.is_file():
        with open(divergence, newline="") as fh:
            counts = {int(r["step"]): (int(r["diverged"]), int(r["trials"])) for r in csv.DictReader(fh)}
        for row in rows:
            row.diverged, n_trials = counts.get(row.step, (0, n_trials))
    return ExperimentSummary(n_trials=n_trials, rows=rows)


def parse_window(text: str) -> Tuple[int, int]:
    """'a:b' -> (a, b)."""
    try:
        lo, hi = (int(float(part)) for part in text.split(":"))
    except ValueError:
        raise ValueError(f"Window must look like a:b, got {text!r}") from None
    if lo > hi:
        raise ValueError(f"Empty window {text!r}")
    return lo, hi


def fit_rate(summary: ExperimentSummary, window: Tuple[int, int]) -> RateFit:
    """
    Least-squares line through (log t, log mean error) for checkpoints in ``window``.

    Checkpoints whose mean is not finite and positive are dropped.

    Raises:
        RateFitError: fewer than five usable checkpoints
    """
    lo, hi = window
    steps, means = summary.steps, summary.means
    in_window = (steps >= lo) & (steps <= hi)
    usable = in_window & np.isfinite(means) & (means > 0)
    if not np.any(usable) and np.any(in_window):
        raise RateFitError(f"Every checkpoint in window {lo}:{hi} diverged")
    if usable.sum() < 5:
        raise RateFitError(f"Need at least 5 finite checkpoints in window {lo}:{hi}, found {int(usable.sum())}")
    x, y = np.log(steps[usable].astype(float)), np.log(means[usable])
    result = stats.linregress(x, y)
    r2 = float(result.rvalue) ** 2 if math.isfinite(result.rvalue) else 0.0
    return RateFit(slope=float(result.slope), intercept=float(result.intercept), r2=r2, n_points=int(usable.sum()))
