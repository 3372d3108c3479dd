"""Channel recording and CSV output.

CSV format: comma separated, ``\\n`` line ends, header ``time,<channel>,...``.
Time is written with 6 decimals, channel values in ``%.9e``.  Run metadata
goes to ``<name>.meta.txt`` next to the CSV as ``key: value`` lines.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNITS = {
    "P_MW": "MW", "Q_Mvar": "Mvar", "V_poi": "pu", "V": "pu", "wind": "m/s", "Vdc": "pu",
    "speed": "pu", "omega": "pu", "beta": "deg", "P_chopper": "pu", "dc_residual": "pu",
    "P_gsc": "pu", "Pe": "pu", "efd": "pu", "pm": "pu", "P": "pu", "Q": "pu", "freq": "Hz",
    "dp": "pu", "va": "pu", "P_inst": "MW", "Q_inst": "Mvar",
}


def channel_unit(name):
    return UNITS.get(name.rsplit(".", 1)[-1], "")


@dataclass
class Recording:
    channels: list
    sample_period: float
    time: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    def __post_init__(self):
        for ch in self.channels:
            self.columns.setdefault(ch, [])

    def append(self, t, values):
        self.time.append(t)
        for ch, val in zip(self.channels, values):
            self.columns[ch].append(val)

    def __len__(self):
        return len(self.time)

    def array(self, channel):
        if channel == "time":
            return np.asarray(self.time)
        return np.asarray(self.columns[channel])

    def units(self):
        return {ch: channel_unit(ch) for ch in self.channels}

    def check(self):
        """Raise if the invariants (equal lengths, monotone time, finite values) fail."""
        n = len(self.time)
        for ch in self.channels:
            if len(self.columns[ch]) != n:
                raise ValueError(f"channel {ch} has {len(self.columns[ch])} samples, expected {n}")
            if not all(math.isfinite(x) for x in self.columns[ch]):
                raise ValueError(f"channel {ch} holds non-finite values")
        if any(b <= a for a, b in zip(self.time, self.time[1:])):
            raise ValueError("time column is not increasing")


def write_csv(rec: Recording, path):
    """Write the CSV and its metadata sidecar; returns the two paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *rec.channels])
        cols = [rec.columns[ch] for ch in rec.channels]
        for k, t in enumerate(rec.time):
            w.writerow([f"{t:.6f}", *(f"{c[k]:.9e}" for c in cols)])
    meta = path.with_suffix(".meta.txt")
    lines = [f"sample_period: {rec.sample_period!r}", f"samples: {len(rec)}"]
    lines += [f"unit.{ch}: {u}" for ch, u in rec.units().items()]
    lines += [f"{k}: {v}" for k, v in rec.metadata.items()]
    meta.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path, meta


def read_csv(path):
    """Load a CSV written by :func:`write_csv` into ``{column: ndarray}``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


class RmsMeter:
    """Sliding one-cycle RMS of a three-phase quantity.

    Returns the rms of the phase values scaled so a balanced set of peak 1
    reads 1.0.  The running sum is rebuilt once per window to stop drift.
    """

    def __init__(self, window):
        self.n = max(int(window), 1)
        self.buf = deque([0.0] * self.n, maxlen=self.n)
        self.total = 0.0
        self.count = 0

    def update(self, a, b, c):
        sq = (2.0 / 3.0) * (a * a + b * b + c * c)
        self.total += sq - self.buf[0]
        self.buf.append(sq)
        self.count += 1
        if self.count % self.n == 0:
            self.total = math.fsum(self.buf)
        return math.sqrt(max(self.total, 0.0) / self.n)

    def prime(self, value):
        """Fill the window as if ``value`` had been measured for a full cycle."""
        sq = value * value
        self.buf = deque([sq] * self.n, maxlen=self.n)
        self.total = sq * self.n


class MeanMeter:
    """Sliding one-cycle mean of a scalar, as a power meter reports it."""

    def __init__(self, window):
        self.n = max(int(window), 1)
        self.buf = deque([0.0] * self.n, maxlen=self.n)
        self.total = 0.0
        self.count = 0

    def update(self, x):
        self.total += x - self.buf[0]
        self.buf.append(x)
        self.count += 1
        if self.count % self.n == 0:
            self.total = math.fsum(self.buf)
        return self.total / self.n

    def prime(self, value):
        self.buf = deque([value] * self.n, maxlen=self.n)
        self.total = value * self.n
