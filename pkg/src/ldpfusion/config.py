"""TOML run configuration: loading, schema validation, scenario construction.

Grammar (``config_version = 1``)::

    config_version = 1

    [scenario]                  # either a built-in scenario ...
    name = "oxygen"             # "oxygen" | "tracking"
    [scenario.overrides]        # any builtin parameter, e.g. Q_v2 = 0.6
    Q_v2 = 0.6

    [model]                     # ... or an inline model (exactly one of the two)
    A = [[1.0, 1.0], [0.0, 1.0]]
    B = [[0.5], [1.0]]
    Q_w = [[0.1]]
    [[model.sensors]]
    C = [[1.0, 0.0]]
    D = [[1.0]]
    Q_v = [[0.2]]

    [budget]       epsilon, delta, zeta_margin
    [mechanism]    q_a            (forces the injected noise level)
    [solver]       tol, max_iter
    [simulation]   runs, horizon, burn_in, seed, privacy_samples, x0
    [output]       dir

The formal schema lives next to this module in ``config_schema.json``.
"""

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import jsonschema

from .sim_harness import BUILTIN_SCENARIOS, RUN_DEFAULTS, build_custom_scenario, builtin_model, force_q_a
from .system_model import SensorModel, SystemModel


class ConfigError(ValueError):
    """The configuration cannot be parsed or violates the schema."""


def load_schema():
    text = resources.files("ldpfusion").joinpath("config_schema.json").read_text()
    return json.loads(text)


def validate_config(cfg):
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
            for sub in e.context or ():
                sub_where = "/".join(str(p) for p in sub.absolute_path) or where
                lines.append(f"  {sub_where}: {sub.message}")
        raise ConfigError("invalid configuration:\n" + "\n".join(lines))
    return cfg


def parse_config(text):
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    return validate_config(cfg)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def builtin_config(name):
    return validate_config({"config_version": 1, "scenario": {"name": name}})


def apply_overrides(cfg, seed=None, runs=None, horizon=None, epsilon=None, delta=None, q_a=None):
    """Return a copy of ``cfg`` with command-line overrides folded in."""
    cfg = copy.deepcopy(cfg)
    sim = cfg.setdefault("simulation", {})
    for key, val in (("seed", seed), ("runs", runs), ("horizon", horizon)):
        if val is not None:
            sim[key] = val
    if not sim:
        del cfg["simulation"]
    budget = cfg.setdefault("budget", {})
    if epsilon is not None:
        budget["epsilon"] = epsilon
    if delta is not None:
        budget["delta"] = delta
    if not budget:
        del cfg["budget"]
    if q_a is not None:
        cfg.setdefault("mechanism", {})["q_a"] = q_a
    return validate_config(cfg)


def config_hash(cfg):
    """SHA-256 of the canonical JSON form, ignoring the output section."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunConfig:
    raw: dict

    @property
    def seed(self):
        return self.raw.get("simulation", {}).get("seed", 42)

    @property
    def hash(self):
        return config_hash(self.raw)

    @property
    def scenario_name(self):
        if "scenario" in self.raw:
            return self.raw["scenario"]["name"]
        return self.raw["model"].get("name", "custom")

    def build_model(self):
        """The plant alone; no filter synthesis or calibration."""
        if "scenario" in self.raw:
            return builtin_model(self.raw["scenario"]["name"], **self.raw["scenario"].get("overrides", {}))
        m = self.raw["model"]
        sensors = [SensorModel(s["C"], s["D"], s["Q_v"]) for s in m["sensors"]]
        return SystemModel(m["A"], m["B"], m["Q_w"], sensors, m.get("known_input"))

    def _run_kwargs(self):
        kw = {}
        sim = self.raw.get("simulation", {})
        for src, dst in (("runs", "runs"), ("horizon", "horizon"), ("burn_in", "burn_in"),
                         ("seed", "master_seed"), ("privacy_samples", "privacy_samples"), ("x0", "x0")):
            if src in sim:
                kw[dst] = sim[src]
        if "horizon" in kw and "burn_in" not in kw:
            # default burn-in is a quarter of the horizon, capped at 50 steps
            kw["burn_in"] = min(RUN_DEFAULTS["burn_in"], kw["horizon"] // 4)
        if kw.get("burn_in", 0) >= kw.get("horizon", RUN_DEFAULTS["horizon"]):
            raise ConfigError("simulation.burn_in must be smaller than simulation.horizon")
        solver = self.raw.get("solver", {})
        kw.update({k: solver[k] for k in ("tol", "max_iter") if k in solver})
        if "zeta_margin" in self.raw.get("budget", {}):
            kw["zeta_margin"] = self.raw["budget"]["zeta_margin"]
        return kw

    def build_scenario(self):
        """Build and calibrate the scenario; honours a forced ``q_a``."""
        kw = self._run_kwargs()
        budget = self.raw.get("budget", {})
        if "scenario" in self.raw:
            name = self.raw["scenario"]["name"]
            overrides = dict(self.raw["scenario"].get("overrides", {}))
            overrides.update({k: budget[k] for k in ("epsilon", "delta") if k in budget})
            overrides.update(kw)
            scen = BUILTIN_SCENARIOS[name](**overrides)
        else:
            model = self.build_model()
            if "epsilon" not in budget or "delta" not in budget:
                raise ConfigError("inline models need budget.epsilon and budget.delta")
            scen = build_custom_scenario(model, budget["epsilon"], budget["delta"], name=self.scenario_name, **kw)
        q_a = self.raw.get("mechanism", {}).get("q_a")
        if q_a is not None:
            scen.plan = force_q_a(scen.plan, q_a)
        return scen
