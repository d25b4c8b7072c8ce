"""Scenario configuration: INI parsing, overrides, canonical hashing.

A scenario file has sections [geometry], [rf], [fading], [nominal], [run],
[sweep] and optionally [metrics]; values are SI units with dot decimals.
Unknown sections or keys are hard errors, both in files and in
"section.key=value" overrides.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

from .channel import BeamGeometry, FadingParams, RfParams, make_hex_geometry

KNOWN_KEYS: dict[str, dict[str, str]] = {
    "geometry": {
        "num_feeds": "int", "num_beams": "int", "beam_spacing": "float",
        "beam_radius": "float", "feed_pattern_width": "float",
        "orbit_altitude": "float", "feed_spacing": "float",
    },
    "rf": {
        "carrier_freq": "float", "bandwidth": "float",
        "rx_antenna_gain": "float", "rx_noise_temp": "float",
        "boltzmann": "float", "fl_scale": "float", "use_phase": "bool",
    },
    "fading": {"mean_db": "float", "std_db": "float", "rain_prob": "float"},
    "nominal": {"alpha_mode": "str", "quantile": "float"},
    "run": {
        "seed": "int", "n_calibration": "int", "n_eval": "int",
        "designs": "str", "direction": "str", "beta": "float", "p_fl": "float",
    },
    "sweep": {"param": "str", "values": "str", "alpha_relative": "bool"},
    "metrics": {"return_table": "str", "forward_table": "str"},
}

VALID_DESIGNS = ("reference", "adaptive", "robust", "perturbation_aware")
VALID_DIRECTIONS = ("return", "forward", "both")
VALID_SWEEP_PARAMS = ("beta", "p_fl", "alpha")


class ScenarioError(ValueError):
    """Malformed scenario file or override."""


@dataclass(frozen=True)
class NominalConfig:
    alpha_mode: str = "max"
    quantile: float = 0.9

    def __post_init__(self) -> None:
        if self.alpha_mode not in ("max", "quantile"):
            raise ScenarioError(f"unknown alpha_mode {self.alpha_mode!r}")
        if not 0.0 < self.quantile <= 1.0:
            raise ScenarioError("quantile must lie in (0, 1]")


@dataclass(frozen=True)
class SweepConfig:
    param: str
    values: tuple[float, ...]
    alpha_relative: bool = True

    def __post_init__(self) -> None:
        if self.param not in VALID_SWEEP_PARAMS:
            raise ScenarioError(f"unknown sweep parameter {self.param!r}")
        if not self.values:
            raise ScenarioError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ScenarioError("sweep values must be strictly increasing")
        lower_ok = self.values[0] >= 0 if self.param == "alpha" else self.values[0] > 0
        if not lower_ok:
            raise ScenarioError("sweep values must be positive "
                                "(alpha sweeps may start at zero)")


@dataclass(frozen=True)
class Scenario:
    """Fully resolved run description; immutable and hashable to a digest."""

    geometry: BeamGeometry
    rf: RfParams
    fading: FadingParams
    nominal: NominalConfig
    seed: int
    n_calibration: int
    n_eval: int
    designs: tuple[str, ...]
    direction: str
    beta: float
    p_fl: float
    sweep: SweepConfig
    return_table: str | None = None
    forward_table: str | None = None
    geometry_params: dict | None = None  # raw keys, kept for the manifest

    def __post_init__(self) -> None:
        if self.seed < 0 or self.seed > 2 ** 64 - 1:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        if self.n_calibration < 1 or self.n_eval < 1:
            raise ScenarioError("calibration and evaluation counts must be >= 1")
        if self.direction not in VALID_DIRECTIONS:
            raise ScenarioError(f"unknown direction {self.direction!r}")
        for design in self.designs:
            if design not in VALID_DESIGNS:
                raise ScenarioError(f"unknown design {design!r}")
        if not self.beta > 0 or not self.p_fl > 0:
            raise ScenarioError("beta and p_fl must be strictly positive")

    def to_dict(self) -> dict:
        """Canonical plain-data form used for the manifest and the hash."""
        return {
            "geometry": dict(self.geometry_params or {}),
            "rf": {
                "carrier_freq": self.rf.carrier_freq,
                "bandwidth": self.rf.bandwidth,
                "rx_antenna_gain": self.rf.rx_antenna_gain,
                "rx_noise_temp": self.rf.rx_noise_temp,
                "boltzmann": self.rf.boltzmann,
                "fl_scale": self.rf.fl_scale,
                "use_phase": self.rf.use_phase,
            },
            "fading": {
                "mean_db": self.fading.mean_db,
                "std_db": self.fading.std_db,
                "rain_prob": self.fading.rain_prob,
            },
            "nominal": {
                "alpha_mode": self.nominal.alpha_mode,
                "quantile": self.nominal.quantile,
            },
            "run": {
                "seed": self.seed,
                "n_calibration": self.n_calibration,
                "n_eval": self.n_eval,
                "designs": list(self.designs),
                "direction": self.direction,
                "beta": self.beta,
                "p_fl": self.p_fl,
            },
            "sweep": {
                "param": self.sweep.param,
                "values": list(self.sweep.values),
                "alpha_relative": self.sweep.alpha_relative,
            },
            "metrics": {
                "return_table": self.return_table,
                "forward_table": self.forward_table,
            },
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("ascii")).hexdigest()[:16]


def _parse_value(kind: str, raw: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.strip()
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _validate_key(section: str, key: str, where: str) -> str:
    if section not in KNOWN_KEYS:
        raise ScenarioError(f"{where}: unknown section [{section}]")
    if key not in KNOWN_KEYS[section]:
        raise ScenarioError(f"{where}: unknown key {section}.{key}")
    return KNOWN_KEYS[section][key]


def apply_overrides(raw: dict[str, dict], overrides: list[str]) -> dict[str, dict]:
    """Apply "section.key=value" overrides; unknown keys are hard errors."""
    out = {section: dict(values) for section, values in raw.items()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ScenarioError(f"override {item!r} is not section.key=value")
        dotted, _, value = item.partition("=")
        section, _, key = dotted.partition(".")
        kind = _validate_key(section, key, f"override {item!r}")
        out.setdefault(section, {})[key] = _parse_value(kind, value, f"override {item!r}")
    return out


def read_scenario_file(path) -> dict[str, dict]:
    """Read an INI scenario file into typed per-section dictionaries."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    raw: dict[str, dict] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            kind = _validate_key(section, key, f"{path} [{section}]")
            raw.setdefault(section, {})[key] = _parse_value(
                kind, value, f"{path} [{section}] {key}")
    return raw


def build_scenario(raw: dict[str, dict]) -> Scenario:
    """Assemble a Scenario from parsed per-section dictionaries."""

    def need(section: str, key: str):
        try:
            return raw[section][key]
        except KeyError:
            raise ScenarioError(f"missing required key {section}.{key}") from None

    def get(section: str, key: str, default):
        return raw.get(section, {}).get(key, default)

    geo_keys = dict(raw.get("geometry", {}))
    geometry = make_hex_geometry(
        num_feeds=need("geometry", "num_feeds"),
        num_beams=need("geometry", "num_beams"),
        beam_spacing=need("geometry", "beam_spacing"),
        beam_radius=need("geometry", "beam_radius"),
        feed_pattern_width=need("geometry", "feed_pattern_width"),
        orbit_altitude=need("geometry", "orbit_altitude"),
        feed_spacing=get("geometry", "feed_spacing", None),
    )
    rf = RfParams(
        carrier_freq=need("rf", "carrier_freq"),
        bandwidth=need("rf", "bandwidth"),
        rx_antenna_gain=need("rf", "rx_antenna_gain"),
        rx_noise_temp=need("rf", "rx_noise_temp"),
        boltzmann=get("rf", "boltzmann", 1.380649e-23),
        fl_scale=get("rf", "fl_scale", 1.0),
        use_phase=get("rf", "use_phase", False),
    )
    fading = FadingParams(
        mean_db=get("fading", "mean_db", 2.0),
        std_db=get("fading", "std_db", 1.0),
        rain_prob=get("fading", "rain_prob", 0.2),
    )
    nominal = NominalConfig(
        alpha_mode=get("nominal", "alpha_mode", "max"),
        quantile=get("nominal", "quantile", 0.9),
    )
    designs = tuple(
        d.strip() for d in str(get("run", "designs",
                                   "reference,robust,perturbation_aware")).split(",")
        if d.strip())
    values = tuple(
        float(v) for v in str(need("sweep", "values")).split(",") if v.strip())
    sweep = SweepConfig(
        param=need("sweep", "param"),
        values=values,
        alpha_relative=get("sweep", "alpha_relative", True),
    )
    return Scenario(
        geometry=geometry,
        rf=rf,
        fading=fading,
        nominal=nominal,
        seed=need("run", "seed"),
        n_calibration=need("run", "n_calibration"),
        n_eval=need("run", "n_eval"),
        designs=designs,
        direction=get("run", "direction", "both"),
        beta=get("run", "beta", 1.0),
        p_fl=get("run", "p_fl", float(geometry.num_beams)),
        sweep=sweep,
        return_table=get("metrics", "return_table", None),
        forward_table=get("metrics", "forward_table", None),
        geometry_params=geo_keys,
    )


def load_scenario(path, overrides: list[str] | None = None) -> Scenario:
    raw = read_scenario_file(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return build_scenario(raw)


def packaged_scenario_path(name: str):
    """Filesystem path of a scenario file shipped with the package."""
    return resources.files("beamgen.data").joinpath(name)


def load_packaged_scenario(name: str, overrides: list[str] | None = None) -> Scenario:
    with resources.as_file(packaged_scenario_path(name)) as path:
        return load_scenario(path, overrides)
