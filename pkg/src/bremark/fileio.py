"""File formats.

* history file: one individual per line, ``T`` characters over ``{0, 1}``;
  blank lines and lines starting with ``#`` are ignored.
* counts file: CSV with header ``history,count``, one row per observed
  history in canonical order.
* samples file: CSV with columns ``iteration, phi_1..phi_{T-1}, p_2..p_T,
  alpha, errors, log_joint``.
* config file: ``key = value`` lines with dotted keys, ``#`` comments.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .histories import HistoryUniverse, format_history


class DataError(ValueError):
    """Malformed or inconsistent data file."""


class ConfigError(ValueError):
    """Invalid configuration."""


# ---------------------------------------------------------------------------
# histories


def parse_histories(text: str, T: int | None = None):
    """Parse a history file.

    Returns ``(histories, T, dropped)`` where ``dropped`` counts individuals
    first recorded on the final occasion (they carry no recapture
    information and are removed).
    """
    out = []
    dropped = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if any(ch not in "01" for ch in line):
            raise DataError(f"line {lineno}: history {line!r} must contain only 0 and 1")
        if T is None:
            T = len(line)
        if len(line) != T:
            raise DataError(f"line {lineno}: expected {T} occasions, found {len(line)}")
        events = tuple(int(ch) for ch in line)
        if not any(events):
            raise DataError(f"line {lineno}: individual is never recorded")
        if events.index(1) == T - 1:
            dropped += 1
            continue
        out.append(events)
    if T is None:
        raise DataError("history file holds no individuals and no occasion count was given")
    if T < 2:
        raise DataError("histories need at least 2 occasions")
    return out, T, dropped


def format_histories(histories) -> str:
    return "".join(format_history(h) + "\n" for h in histories)


def histories_to_counts(histories, T: int) -> np.ndarray:
    uni = HistoryUniverse(T)
    n = np.zeros(uni.I, dtype=np.int64)
    for h in histories:
        n[uni.index_of_observed(h)] += 1
    return n


def format_counts(n, T: int) -> str:
    uni = HistoryUniverse(T)
    buf = io.StringIO()
    buf.write("history,count\n")
    for i in range(uni.I):
        buf.write(f"{format_history(uni.observed_at(i))},{int(n[i])}\n")
    return buf.getvalue()


def parse_counts(text: str, T: int | None = None):
    """Parse a counts CSV; returns ``(n, T)``."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows or [c.strip() for c in rows[0]] != ["history", "count"]:
        raise DataError("counts file must start with the header 'history,count'")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataError(f"row {lineno}: expected two fields")
        h, c = row[0].strip(), row[1].strip()
        if not h or any(ch not in "01" for ch in h):
            raise DataError(f"row {lineno}: history {h!r} must contain only 0 and 1")
        try:
            count = int(c)
        except ValueError:
            raise DataError(f"row {lineno}: count {c!r} is not an integer") from None
        if count < 0:
            raise DataError(f"row {lineno}: negative count")
        if T is None:
            T = len(h)
        if len(h) != T:
            raise DataError(f"row {lineno}: expected {T} occasions, found {len(h)}")
        entries.append((lineno, tuple(int(ch) for ch in h), count))
    if T is None:
        raise DataError("counts file has no rows")
    uni = HistoryUniverse(T)
    n = np.zeros(uni.I, dtype=np.int64)
    for lineno, h, count in entries:
        try:
            n[uni.index_of_observed(h)] += count
        except ValueError:
            if count:
                raise DataError(f"row {lineno}: history {format_history(h)} is not released "
                                "before the final occasion") from None
    return n, T


# ---------------------------------------------------------------------------
# outputs


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_samples(result) -> str:
    """Per-draw CSV of a sampler run."""
    buf = io.StringIO()
    buf.write(",".join(["iteration", *result.names, "errors", "log_joint"]) + "\n")
    for k in range(len(result.iterations)):
        fields = [_num(result.iterations[k])]
        fields += [_num(v) for v in result.theta[k]]
        fields += [_num(result.errors[k]), _num(result.log_joint[k])]
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def format_study_rows(rows) -> str:
    cols = ["model", "alpha", "parameter", "truth", "bias", "bias_se", "width", "coverage",
            "replicates", "boundary"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        out = []
        for c in cols:
            v = r[c]
            if isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, str):
                out.append(v)
            else:
                out.append(_num(v))
        buf.write(",".join(out) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# config


def parse_config_text(text: str) -> dict[str, str]:
    """Raw ``key = value`` pairs; later keys override earlier ones."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = value
    return out
