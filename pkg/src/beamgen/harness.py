"""Monte Carlo harness: calibration, design evaluation, parameter sweeps.

Every random draw comes from a counter-based Philox stream addressed by
(seed, purpose, indices...), so results do not depend on execution order
and a scenario with the same seed reproduces byte-identical outputs.
Within one sweep point all designs see the same channel realizations
(common random numbers); the on-ground baseline is always evaluated
alongside. Alpha sweeps reuse one unit-ball draw per drop index across the
whole grid, scaled by the grid radius, which couples the grid points.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import design as bd
from . import linkproc as lp
from .channel import (Channel, GainMatrix, NominalChannel, assemble_channel,
                      build_gain_matrix, estimate_nominal, normalize_gain,
                      sample_delta_ball, sample_fading, sample_user_drop)
from .metrics import MetricsSummary, ModcodTable, load_modcod_table, summarize
from .scenario import Scenario, packaged_scenario_path

# stream purposes; part of the on-disk reproducibility contract
_STREAM_CAL = 0
_STREAM_EVAL = 1
_STREAM_BALL = 2

ONGROUND = "onground"


class HarnessError(RuntimeError):
    """Run-level failures (infeasible grids, inconsistent requests)."""


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent deterministic generator for one (purpose, index...) task."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ChannelSampler:
    """Channel generator with frozen gain-normalization statistics."""

    scenario: Scenario
    variances: np.ndarray  # per-entry gain variance over the calibration set

    def raw_gain(self, rng: np.random.Generator) -> GainMatrix:
        drop = sample_user_drop(self.scenario.geometry, rng)
        return build_gain_matrix(self.scenario.geometry, drop, self.scenario.rf)

    def sample(self, rng: np.random.Generator) -> Channel:
        """Fresh drop + fading with the calibrated normalization."""
        gain = normalize_gain(self.raw_gain(rng), self.variances)
        fading = sample_fading(self.scenario.geometry.num_beams,
                               self.scenario.fading, rng)
        return assemble_channel(gain, fading)


@dataclass(frozen=True)
class Calibration:
    """Everything the designs need: sampler, ensemble, nominal estimate."""

    sampler: ChannelSampler
    ensemble: tuple[Channel, ...]
    nominal: NominalChannel


@dataclass(frozen=True)
class RunRecord:
    """One summarized evaluation: a design at one sweep point and direction."""

    scenario_hash: str
    design: str
    sweep_param: str
    sweep_value: float
    direction: str
    summary: MetricsSummary
    wall_time: float
    alpha_clamped: bool
    seed: int


def calibrate(scenario: Scenario) -> Calibration:
    """Estimate normalization statistics and the nominal channel.

    Draws n_calibration independent user drops, fits the per-entry gain
    variance over the raw ensemble, then forms the normalized and faded
    channels whose mean and spread define the nominal estimate.
    """
    raws = []
    for i in range(scenario.n_calibration):
        rng = substream(scenario.seed, _STREAM_CAL, i)
        raws.append(_raw_and_fading(scenario, rng))
    gains = np.stack([g.values for g, _ in raws])
    variances = gains.var(axis=0)
    if np.any(variances <= 0.0):
        raise HarnessError("degenerate calibration: some gain entries do not vary")
    sampler = ChannelSampler(scenario=scenario, variances=variances)
    ensemble = tuple(
        assemble_channel(normalize_gain(g, variances), fad) for g, fad in raws)
    nominal = estimate_nominal(list(ensemble),
                               alpha_mode=scenario.nominal.alpha_mode,
                               quantile=scenario.nominal.quantile)
    return Calibration(sampler=sampler, ensemble=ensemble, nominal=nominal)


def _raw_and_fading(scenario: Scenario, rng: np.random.Generator):
    drop = sample_user_drop(scenario.geometry, rng)
    gain = build_gain_matrix(scenario.geometry, drop, scenario.rf)
    fading = sample_fading(scenario.geometry.num_beams, scenario.fading, rng)
    return gain, fading


def load_tables(scenario: Scenario) -> dict[str, ModcodTable]:
    """Modcod tables for both directions, packaged defaults unless overridden."""
    paths = {
        "return": scenario.return_table or packaged_scenario_path("modcod_return.csv"),
        "forward": scenario.forward_table or packaged_scenario_path("modcod_forward.csv"),
    }
    return {d: load_modcod_table(p, d) for d, p in paths.items()}


def _directions(scenario: Scenario) -> tuple[str, ...]:
    if scenario.direction == "both":
        return ("return", "forward")
    return (scenario.direction,)


def build_designs(scenario: Scenario, calibration: Calibration,
                  nominal: NominalChannel | None = None) -> dict[str, bd.BeamMatrix | None]:
    """Instantiate the scenario's designs; None marks the per-drop adaptive.

    A design that is infeasible for this nominal is reported with a warning
    and dropped, without aborting the others.
    """
    nom = nominal if nominal is not None else calibration.nominal
    out: dict[str, bd.BeamMatrix | None] = {}
    for kind in scenario.designs:
        try:
            if kind == "reference":
                out[kind] = bd.design_reference(scenario.geometry)
            elif kind == "robust":
                out[kind] = bd.design_robust(nom)
            elif kind == "perturbation_aware":
                out[kind] = bd.design_perturbation_aware(
                    nom, "empirical", calibration.ensemble)
            elif kind == "adaptive":
                out[kind] = None  # recomputed per channel draw
        except bd.DesignError as exc:
            warnings.warn(f"design {kind!r} infeasible: {exc}", RuntimeWarning,
                          stacklevel=2)
    return out


def evaluate_point(designs: dict[str, bd.BeamMatrix | None],
                   channels: list[Channel], beta: float, p_fl: float,
                   directions: tuple[str, ...]) -> dict[tuple[str, str], list[lp.LinkResult]]:
    """Link processing of every design (plus baseline) over shared channels."""
    rl = lp.ReturnLinkParams(beta=beta)
    fl = lp.ForwardLinkParams(p_fl=p_fl)
    names = list(designs) + [ONGROUND]
    results: dict[tuple[str, str], list[lp.LinkResult]] = {
        (name, d): [] for name in names for d in directions}
    for ch in channels:
        per_drop: dict[str, bd.BeamMatrix | None] = dict(designs)
        for name, b in per_drop.items():
            if b is None:
                b = bd.design_adaptive(ch.values)
            for d in directions:
                if d == "return":
                    results[(name, d)].append(lp.return_mse(b, ch.values, rl))
                else:
                    results[(name, d)].append(lp.forward_mse(b, ch.values, fl))
        for d in directions:
            if d == "return":
                results[(ONGROUND, d)].append(lp.onground_return(ch.values, rl))
            else:
                results[(ONGROUND, d)].append(lp.onground_forward(ch.values, fl))
    return results


def evaluate_point_mismatched(designs: dict[str, bd.BeamMatrix | None],
                              nominal_values, channels: list[Channel],
                              beta: float, p_fl: float,
                              directions: tuple[str, ...]) -> dict[tuple[str, str], list[lp.LinkResult]]:
    """Like evaluate_point, but the gateway processing is matched to the
    nominal channel while the drawn channels deviate from it (the channel-
    mismatch semantics of the uncertainty sweep)."""
    rl = lp.ReturnLinkParams(beta=beta)
    fl = lp.ForwardLinkParams(p_fl=p_fl)
    names = list(designs) + [ONGROUND]
    results: dict[tuple[str, str], list[lp.LinkResult]] = {
        (name, d): [] for name in names for d in directions}
    for ch in channels:
        for name, b in designs.items():
            if b is None:
                b = bd.design_adaptive(nominal_values)
            for d in directions:
                if d == "return":
                    results[(name, d)].append(lp.return_mse_mismatched(
                        b, nominal_values, ch.values, rl))
                else:
                    results[(name, d)].append(lp.forward_mse_mismatched(
                        b, nominal_values, ch.values, fl))
        for d in directions:
            if d == "return":
                results[(ONGROUND, d)].append(lp.onground_return_mismatched(
                    nominal_values, ch.values, rl))
            else:
                results[(ONGROUND, d)].append(lp.onground_forward_mismatched(
                    nominal_values, ch.values, fl))
    return results


def evaluate(scenario: Scenario, calibration: Calibration) -> list[RunRecord]:
    """Monte Carlo sweep over beta or p_fl with physical channel draws.

    Every sweep point draws n_eval fresh channels shared by all designs
    and the on-ground baseline (common random numbers).
    """
    if scenario.sweep.param == "alpha":
        raise HarnessError("alpha sweeps are served by sweep_alpha")
    tables = load_tables(scenario)
    directions = _directions(scenario)
    designs = build_designs(scenario, calibration)
    try:
        surrogate = bd.robust_surrogate(calibration.nominal)
        clamped = surrogate.alpha_clamped
    except bd.DesignError:
        clamped = False
    scen_hash = scenario.digest()
    records: list[RunRecord] = []
    for sweep_idx, value in enumerate(scenario.sweep.values):
        beta = value if scenario.sweep.param == "beta" else scenario.beta
        p_fl = value if scenario.sweep.param == "p_fl" else scenario.p_fl
        channels = [
            calibration.sampler.sample(substream(scenario.seed, _STREAM_EVAL,
                                                 sweep_idx, j))
            for j in range(scenario.n_eval)
        ]
        start = time.perf_counter()
        point = evaluate_point(designs, channels, beta, p_fl, directions)
        elapsed = time.perf_counter() - start
        for name in list(designs) + [ONGROUND]:
            for d in directions:
                records.append(RunRecord(
                    scenario_hash=scen_hash,
                    design=name,
                    sweep_param=scenario.sweep.param,
                    sweep_value=float(value),
                    direction=d,
                    summary=summarize(point[(name, d)], tables[d]),
                    wall_time=elapsed,
                    alpha_clamped=clamped if name in ("robust", "perturbation_aware") else False,
                    seed=scenario.seed,
                ))
    return records


def sweep_alpha(scenario: Scenario, calibration: Calibration) -> list[RunRecord]:
    """Throughput versus uncertainty radius for the robust-family designs.

    Evaluation channels are mean + delta with delta uniform in the
    Frobenius ball of the grid radius; one unit-ball draw per drop index
    is shared across the grid. The gateway processing stays matched to the
    nominal channel, so larger radii degrade throughput through channel
    mismatch. Designs use the (possibly clamped) radius; the clamp is
    recorded per grid point.
    """
    if scenario.sweep.param != "alpha":
        raise HarnessError("sweep_alpha needs sweep.param = alpha")
    tables = load_tables(scenario)
    directions = _directions(scenario)
    nominal = calibration.nominal
    if scenario.sweep.alpha_relative:
        grid = [v * nominal.alpha for v in scenario.sweep.values]
    else:
        grid = list(scenario.sweep.values)
    shape = nominal.mean.shape
    unit_balls = [
        sample_delta_ball(shape, 1.0, substream(scenario.seed, _STREAM_BALL, j)).delta
        for j in range(scenario.n_eval)
    ]
    scen_hash = scenario.digest()
    records: list[RunRecord] = []
    for alpha in grid:
        nominal_a = replace(nominal, alpha=float(alpha))
        try:
            surrogate = bd.robust_surrogate(nominal_a)
            designs: dict[str, bd.BeamMatrix | None] = {
                "robust": bd.design_robust(nominal_a),
                "perturbation_aware": bd.design_perturbation_aware(
                    nominal_a, "empirical", calibration.ensemble),
            }
        except bd.DesignError as exc:
            warnings.warn(f"alpha={alpha:g} infeasible: {exc}", RuntimeWarning,
                          stacklevel=2)
            continue
        channels = [Channel(nominal.mean + alpha * ball) for ball in unit_balls]
        start = time.perf_counter()
        point = evaluate_point_mismatched(designs, nominal.mean, channels,
                                          scenario.beta, scenario.p_fl,
                                          directions)
        elapsed = time.perf_counter() - start
        for name in list(designs) + [ONGROUND]:
            for d in directions:
                records.append(RunRecord(
                    scenario_hash=scen_hash,
                    design=name,
                    sweep_param="alpha",
                    sweep_value=float(alpha),
                    direction=d,
                    summary=summarize(point[(name, d)], tables[d]),
                    wall_time=elapsed,
                    alpha_clamped=surrogate.alpha_clamped if name != ONGROUND else False,
                    seed=scenario.seed,
                ))
    if not records:
        raise HarnessError("every alpha grid point was infeasible")
    return records


CSV_COLUMNS = ("design", "direction", "sweep_param", "sweep_value",
               "mean_throughput", "availability", "dispersion_index",
               "shannon_mean", "alpha_clamped", "seed")


def write_records_csv(path, records: list[RunRecord]) -> None:
    """Write run records with locale-independent, round-trippable numbers."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([
                rec.design,
                rec.direction,
                rec.sweep_param,
                repr(float(rec.sweep_value)),
                repr(float(rec.summary.mean_throughput)),
                repr(float(rec.summary.availability)),
                repr(float(rec.summary.dispersion_index)),
                repr(float(rec.summary.shannon_mean)),
                "true" if rec.alpha_clamped else "false",
                str(rec.seed),
            ])


def write_manifest(path, scenario: Scenario) -> None:
    """Persist the fully resolved scenario; written before any result file."""
    payload = {"scenario": scenario.to_dict(), "scenario_hash": scenario.digest(),
               "seed": scenario.seed}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
