"""Run configuration: one flat-sectioned key=value file drives every stage.

configparser INI syntax, strict schema: unknown sections or keys are
rejected so typos fail loudly. Every default below traces to either a
published airframe value or a ledgered decision.
"""

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

from quadfault.calibration import UnbalanceProfile
from quadfault.controller import ControllerGains
from quadfault.propeller import DegradationConfig, EfficiencyCurve, RegressorTrainConfig
from quadfault.classifier import ClassifierTrainConfig
from quadfault.datagen import MissionConfig, WAYPOINT_SETS
from quadfault.simcore import QuadParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    waypoint_set: str = "A"
    runs_per_label: int = 1
    window: int = 100
    hop: int = 1
    split_mode: str = "window"      # or "segment"
    split_ratio: float = 0.8

    def __post_init__(self):
        if self.waypoint_set not in WAYPOINT_SETS:
            raise ConfigError(f"unknown waypoint set {self.waypoint_set!r}")
        if self.split_mode not in ("window", "segment"):
            raise ConfigError(f"split_mode must be window or segment, got {self.split_mode!r}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must be in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    params: QuadParams = QuadParams()
    degradation: DegradationConfig = DegradationConfig()
    gains: ControllerGains = ControllerGains()
    profile: UnbalanceProfile = UnbalanceProfile()
    mission: MissionConfig = MissionConfig()
    dataset: DatasetConfig = DatasetConfig()
    regressor: RegressorTrainConfig = RegressorTrainConfig()
    classifier: ClassifierTrainConfig = ClassifierTrainConfig()
    prop_model: str = "regressor"   # mission propeller backend: regressor | analytic
    seed: int = 0


# section -> key -> (target dataclass attribute path, type)
_F, _I, _B, _S = float, int, bool, str

_SCHEMA = {
    "airframe": {
        "mass": _F, "arm_length": _F, "ixx": _F, "iyy": _F, "izz": _F,
        "k_f": _F, "k_tau": _F, "gravity": _F, "k_d": _F,
    },
    "degradation": {
        "k_f": _F, "k_tau": _F, "duration": _F, "period": _F,
        "sigma_thrust": _F, "sigma_torque": _F,
        "bent_thrust_offset": _F, "bent_thrust_slope": _F, "bent_thrust_power": _F,
        "bent_torque_offset": _F, "bent_torque_slope": _F, "bent_torque_power": _F,
        "cracked_thrust_offset": _F, "cracked_thrust_slope": _F, "cracked_thrust_power": _F,
        "cracked_torque_offset": _F, "cracked_torque_slope": _F, "cracked_torque_power": _F,
    },
    "controller": {
        "pos_p": _F, "vel_p": _F, "vel_max": _F, "acc_max": _F,
        "att_p": _F, "att_d": _F, "yaw_p": _F, "yaw_d": _F,
        "max_tilt_deg": _F, "motor_tau": _F, "rpm_min": _F, "rpm_max": _F,
    },
    "unbalance": {"u2": _F, "u3": _F, "u4": _F, "omega_max": _F},
    "mission": {
        "duration": _F, "control_dt": _F, "physics_dt": _F, "record_dt": _F,
        "accept_radius": _F, "start_z": _F,
    },
    "dataset": {
        "waypoint_set": _S, "runs_per_label": _I, "window": _I, "hop": _I,
        "split_mode": _S, "split_ratio": _F,
    },
    "regressor": {
        "window": _I, "hidden": _I, "dense_hidden": _I, "batch_size": _I,
        "learning_rate": _F, "max_epochs": _I, "patience": _I,
        "min_improvement": _F, "lr_patience": _I, "lr_decay": _F, "optimizer": _S,
    },
    "classifier": {
        "batch_size": _I, "learning_rate": _F, "optimizer": _S,
        "max_epochs": _I, "patience": _I, "val_fraction": _F,
    },
    "run": {"seed": _I, "prop_model": _S},
}


def _parse_values(parser):
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kind = schema[key]
            try:
                if kind is _B:
                    values[(section, key)] = parser.getboolean(section, key)
                else:
                    values[(section, key)] = kind(raw)
            except ValueError:
                raise ConfigError(
                    f"bad value for [{section}] {key}: {raw!r} (expected {kind.__name__})"
                ) from None
    return values


def _build_dataclass(cls, section, values, renames=None):
    renames = renames or {}
    kwargs = {}
    for (sec, key), val in values.items():
        if sec != section:
            continue
        kwargs[renames.get(key, key)] = val
    return cls(**kwargs)


def load_config(path=None, text=None, seed_override=None) -> RunConfig:
    """Parse a config file (or literal text); missing keys keep defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if text is not None:
        parser.read_string(text)
    elif path is not None:
        with open(path) as fh:
            parser.read_file(fh)
    values = _parse_values(parser)
    try:
        return _assemble(values, seed_override)
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _assemble(values, seed_override):
    params = _build_dataclass(QuadParams, "airframe", values)

    deg_kwargs = {}
    curves = {}
    for (sec, key), val in values.items():
        if sec != "degradation":
            continue
        parts = key.split("_")
        if parts[0] in ("bent", "cracked") and len(parts) == 3:
            curves.setdefault(f"{parts[0]}_{parts[1]}", {})[parts[2]] = val
        else:
            deg_kwargs[key] = val
    for name, pieces in curves.items():
        base = getattr(DegradationConfig(), name)
        deg_kwargs[name] = replace(base, **pieces)
    degradation = DegradationConfig(**deg_kwargs)

    gains_kwargs = {}
    for (sec, key), val in values.items():
        if sec != "controller":
            continue
        if key == "max_tilt_deg":
            gains_kwargs["max_tilt"] = math.radians(val)
        else:
            gains_kwargs[key] = val
    gains = ControllerGains(**gains_kwargs)

    u2 = values.get(("unbalance", "u2"), 1.0)
    u3 = values.get(("unbalance", "u3"), 1.0)
    u4 = values.get(("unbalance", "u4"), 1.0)
    omega_max = values.get(("unbalance", "omega_max"), 1.0)
    profile = UnbalanceProfile(u_ratio=(1.0, u2, u3, u4), omega_max=omega_max)

    mission_kwargs = {}
    start_z = values.pop(("mission", "start_z"), None)
    for (sec, key), val in values.items():
        if sec == "mission":
            mission_kwargs[key] = val
    if start_z is not None:
        mission_kwargs["start"] = (0.0, 0.0, start_z)
    mission = MissionConfig(**mission_kwargs)

    dataset = _build_dataclass(DatasetConfig, "dataset", values)
    regressor = _build_dataclass(RegressorTrainConfig, "regressor", values)
    classifier = _build_dataclass(ClassifierTrainConfig, "classifier", values)

    seed = values.get(("run", "seed"), 0)
    prop_model = values.get(("run", "prop_model"), "regressor")
    if prop_model not in ("regressor", "analytic"):
        raise ConfigError(f"prop_model must be regressor or analytic, got {prop_model!r}")
    if seed_override is not None:
        seed = int(seed_override)

    return RunConfig(
        params=params, degradation=degradation, gains=gains, profile=profile,
        mission=mission, dataset=dataset, regressor=regressor, classifier=classifier,
        prop_model=prop_model, seed=seed,
    )


def dump_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to the file format (all keys explicit)."""
    p, d, g, m = cfg.params, cfg.degradation, cfg.gains, cfg.mission
    ds, r, c = cfg.dataset, cfg.regressor, cfg.classifier
    out = io.StringIO()

    def section(name, pairs):
        out.write(f"[{name}]\n")
        for key, val in pairs:
            out.write(f"{key} = {val}\n")
        out.write("\n")

    section("airframe", [
        ("mass", p.mass), ("arm_length", p.arm_length), ("ixx", p.ixx), ("iyy", p.iyy),
        ("izz", p.izz), ("k_f", p.k_f), ("k_tau", p.k_tau), ("gravity", p.gravity),
        ("k_d", p.k_d),
    ])
    deg_rows = [("k_f", d.k_f), ("k_tau", d.k_tau), ("duration", d.duration),
                ("period", d.period), ("sigma_thrust", d.sigma_thrust),
                ("sigma_torque", d.sigma_torque)]
    for name in ("bent_thrust", "bent_torque", "cracked_thrust", "cracked_torque"):
        curve = getattr(d, name)
        deg_rows += [(f"{name}_offset", curve.offset), (f"{name}_slope", curve.slope),
                     (f"{name}_power", curve.power)]
    section("degradation", deg_rows)
    section("controller", [
        ("pos_p", g.pos_p), ("vel_p", g.vel_p), ("vel_max", g.vel_max),
        ("acc_max", g.acc_max), ("att_p", g.att_p), ("att_d", g.att_d),
        ("yaw_p", g.yaw_p), ("yaw_d", g.yaw_d),
        ("max_tilt_deg", math.degrees(g.max_tilt)), ("motor_tau", g.motor_tau),
        ("rpm_min", g.rpm_min), ("rpm_max", g.rpm_max),
    ])
    section("unbalance", [
        ("u2", cfg.profile.u_ratio[1]), ("u3", cfg.profile.u_ratio[2]),
        ("u4", cfg.profile.u_ratio[3]), ("omega_max", cfg.profile.omega_max),
    ])
    section("mission", [
        ("duration", m.duration), ("control_dt", m.control_dt),
        ("physics_dt", m.physics_dt), ("record_dt", m.record_dt),
        ("accept_radius", m.accept_radius), ("start_z", m.start[2]),
    ])
    section("dataset", [
        ("waypoint_set", ds.waypoint_set), ("runs_per_label", ds.runs_per_label),
        ("window", ds.window), ("hop", ds.hop), ("split_mode", ds.split_mode),
        ("split_ratio", ds.split_ratio),
    ])
    section("regressor", [
        ("window", r.window), ("hidden", r.hidden), ("dense_hidden", r.dense_hidden),
        ("batch_size", r.batch_size), ("learning_rate", r.learning_rate),
        ("max_epochs", r.max_epochs), ("patience", r.patience),
        ("min_improvement", r.min_improvement), ("lr_patience", r.lr_patience),
        ("lr_decay", r.lr_decay), ("optimizer", r.optimizer),
    ])
    section("classifier", [
        ("batch_size", c.batch_size), ("learning_rate", c.learning_rate),
        ("optimizer", c.optimizer), ("max_epochs", c.max_epochs),
        ("patience", c.patience), ("val_fraction", c.val_fraction),
    ])
    section("run", [("seed", cfg.seed), ("prop_model", cfg.prop_model)])
    return out.getvalue()
