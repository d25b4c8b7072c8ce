"""SINR-to-throughput metrics: modcod tables, availability, dispersion.

Modcod ladders are loaded from table files (one "name,threshold_dB,
efficiency" line per modcod, '#' comments); thresholds and efficiencies
must both be strictly increasing. A user is available when its SINR
reaches the lowest threshold; its throughput is the efficiency of the
best modcod whose threshold it meets (boundary inclusive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linkproc import LinkResult


class MetricsError(ValueError):
    """Invalid modcod table or metric input."""


class AllOutageError(MetricsError):
    """Every user is in outage; the dispersion index is undefined."""


@dataclass(frozen=True)
class ModcodEntry:
    name: str
    threshold_db: float
    efficiency: float  # bits/symbol


@dataclass(frozen=True)
class ModcodTable:
    """Ordered SINR-threshold to spectral-efficiency ladder for one link."""

    direction: str  # "return" | "forward"
    entries: tuple[ModcodEntry, ...]

    def __post_init__(self) -> None:
        if self.direction not in ("return", "forward"):
            raise MetricsError(f"unknown direction {self.direction!r}")
        if not self.entries:
            raise MetricsError("modcod table is empty")
        thresholds = [e.threshold_db for e in self.entries]
        efficiencies = [e.efficiency for e in self.entries]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise MetricsError("modcod thresholds must be strictly increasing")
        if any(b <= a for a, b in zip(efficiencies, efficiencies[1:])):
            raise MetricsError("modcod efficiencies must be strictly increasing")
        if efficiencies[0] <= 0:
            raise MetricsError("modcod efficiencies must be positive")

    @property
    def outage_floor(self) -> float:
        return self.entries[0].threshold_db

    def thresholds(self) -> np.ndarray:
        return np.asarray([e.threshold_db for e in self.entries])

    def efficiencies(self) -> np.ndarray:
        return np.asarray([e.efficiency for e in self.entries])


@dataclass(frozen=True)
class MetricsSummary:
    """Aggregated link metrics over users and channel drops."""

    mean_throughput: float  # bits/symbol
    availability: float  # fraction in [0, 1]
    dispersion_index: float  # variance / mean of user throughputs
    shannon_mean: float  # bits/symbol


def load_modcod_table(path, direction: str) -> ModcodTable:
    """Parse a modcod table file, rejecting non-monotone ladders.

    Errors carry the 1-based line number of the offending row.
    """
    entries: list[ModcodEntry] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise MetricsError(f"{path}:{lineno}: expected name,threshold_dB,efficiency")
            try:
                entry = ModcodEntry(name=parts[0], threshold_db=float(parts[1]),
                                    efficiency=float(parts[2]))
            except ValueError as exc:
                raise MetricsError(f"{path}:{lineno}: {exc}") from None
            if entries:
                if entry.threshold_db <= entries[-1].threshold_db:
                    raise MetricsError(
                        f"{path}:{lineno}: threshold not strictly increasing")
                if entry.efficiency <= entries[-1].efficiency:
                    raise MetricsError(
                        f"{path}:{lineno}: efficiency not strictly increasing")
            entries.append(entry)
    if not entries:
        raise MetricsError(f"{path}: no modcod entries")
    return ModcodTable(direction=direction, entries=tuple(entries))


def shannon(sinr: float | np.ndarray) -> float | np.ndarray:
    """log2(1 + sinr) in bits/symbol for nonnegative linear SINR."""
    arr = np.asarray(sinr, dtype=float)
    if np.any(arr < 0):
        raise MetricsError("SINR must be nonnegative")
    out = np.log2(1.0 + arr)
    return float(out) if np.isscalar(sinr) or arr.ndim == 0 else out


def sinr_to_db(sinr: np.ndarray) -> np.ndarray:
    """Linear SINR to dB; zeros map to -inf (always in outage)."""
    arr = np.asarray(sinr, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(arr)


def modcod_lookup(sinr_db: float | np.ndarray, table: ModcodTable) -> float | np.ndarray:
    """Efficiency of the best modcod whose threshold is met; 0 below the floor."""
    thresholds = table.thresholds()
    efficiencies = np.concatenate([[0.0], table.efficiencies()])
    idx = np.searchsorted(thresholds, np.asarray(sinr_db, dtype=float), side="right")
    out = efficiencies[idx]
    return float(out) if np.ndim(sinr_db) == 0 else out


def availability(sinr_db: float | np.ndarray, table: ModcodTable) -> int | np.ndarray:
    """1 when the SINR clears the lowest modcod threshold, else 0."""
    ok = np.asarray(sinr_db, dtype=float) >= table.outage_floor
    return int(ok) if np.ndim(sinr_db) == 0 else ok.astype(int)


def dispersion_index(throughputs) -> float:
    """Population variance over mean of the user throughputs.

    Raises AllOutageError when the mean is zero, which is an all-outage
    condition rather than a numeric result.
    """
    arr = np.asarray(throughputs, dtype=float)
    if arr.size == 0:
        raise MetricsError("dispersion index needs a nonempty vector")
    mean = float(arr.mean())
    if mean == 0.0:
        raise AllOutageError("zero mean throughput (all users in outage)")
    return float(arr.var()) / mean


def margin_report(table: ModcodTable) -> list[tuple[str, float]]:
    """Shannon efficiency at each threshold minus the tabulated efficiency.

    Real ladders include implementation margins, so the sign is reported,
    not asserted.
    """
    report = []
    for entry in table.entries:
        cap = math.log2(1.0 + 10.0 ** (entry.threshold_db / 10.0))
        report.append((entry.name, cap - entry.efficiency))
    return report


def summarize(results: list[LinkResult], table: ModcodTable) -> MetricsSummary:
    """Aggregate per-drop link results into the headline metrics.

    Throughputs are modcod lookups of the per-user SINRs pooled over all
    drops; availability is the cleared-floor fraction; the dispersion
    index is taken over the pooled user throughputs (0 when everything is
    in outage).
    """
    if not results:
        raise MetricsError("summarize needs at least one link result")
    directions = {r.direction for r in results}
    if len(directions) > 1:
        raise MetricsError("mixed link directions in one summary")
    if directions != {table.direction}:
        raise MetricsError("modcod table direction does not match the results")
    sinr = np.concatenate([np.asarray(r.sinr, dtype=float) for r in results])
    sinr_db = sinr_to_db(sinr)
    throughputs = modcod_lookup(sinr_db, table)
    avail = float(np.mean(sinr_db >= table.outage_floor))
    mean_tp = float(np.mean(throughputs))
    try:
        disp = dispersion_index(throughputs)
    except AllOutageError:
        disp = 0.0
    return MetricsSummary(mean_throughput=mean_tp, availability=avail,
                          dispersion_index=disp,
                          shannon_mean=float(np.mean(shannon(sinr))))
