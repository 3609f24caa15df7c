"""Labeled flight dataset generation.

Sixteen fault scenarios (which subset of the four propellers is degraded)
are each flown through a waypoint mission in closed loop; every
onboard-observable signal is recorded at the 0.05 s sampling period, then
sliced into overlapping 100-step windows for the classifier.
"""

import hashlib
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from quadfault.calibration import UnbalanceProfile
from quadfault.controller import (
    CascadedController,
    ControllerGains,
    body_wrench_from_motors,
)
from quadfault.propeller import DegradationConfig, PropellerCondition, esc_to_rpm
from quadfault.simcore import (
    QuadParams,
    QuadState,
    SimulationBlowup,
    hover_rpm,
    wrap_angle,
)
from quadfault.simcore import _check_state, _rk4  # array fast path shared with step_rk4

# fault bitmask per label, True = faulty, order (prop1, prop2, prop3, prop4);
# row order: all-normal, singles 1-4, the six pairs, the four triples, all-faulty
FAULT_MASKS = {
    1: (False, False, False, False),
    2: (True, False, False, False),
    3: (False, True, False, False),
    4: (False, False, True, False),
    5: (False, False, False, True),
    6: (True, True, False, False),
    7: (True, False, True, False),
    8: (True, False, False, True),
    9: (False, True, True, False),
    10: (False, True, False, True),
    11: (False, False, True, True),
    12: (True, True, True, False),
    13: (True, True, False, True),
    14: (True, False, True, True),
    15: (False, True, True, True),
    16: (True, True, True, True),
}
_MASK_TO_LABEL = {mask: label for label, mask in FAULT_MASKS.items()}

# named waypoint fixtures inside the arena box x,y in [-10,10], z in [2,10];
# large altitude swings keep the motors exercised well away from hover
WAYPOINT_SETS = {
    "A": ((4.0, 3.0, 2.5), (-5.0, 4.0, 8.5), (-3.0, -6.0, 3.0), (5.0, -4.0, 9.0), (0.0, 0.0, 4.5)),
    "B": ((-6.0, -3.0, 7.5), (6.0, 5.0, 3.5), (2.0, -7.0, 8.0), (-4.0, 6.0, 2.5), (3.0, 2.0, 6.0)),
    # all five targets at one point: produces the near-hover logs calibration needs
    "hover": ((0.0, 0.0, 3.0),) * 5,
}

ARENA_XY = 10.0
ARENA_Z = (2.0, 10.0)

CHANNEL_NAMES = (
    "omega1", "omega2", "omega3", "omega4",
    "roll", "pitch", "yaw", "roll_rate", "pitch_rate", "yaw_rate",
)

_CSV_COLUMNS = (
    "t,x,y,z,vx,vy,vz,roll,pitch,yaw,roll_rate,pitch_rate,yaw_rate,"
    "omega1,omega2,omega3,omega4,f1,f2,f3,f4,tau1,tau2,tau3,tau4,"
    "delta_x,delta_y,delta_z,esc1,esc2,esc3,esc4"
)


@dataclass(frozen=True)
class FaultScenario:
    """Condition assignment for the four propellers plus its label."""

    conditions: tuple

    def __post_init__(self):
        if len(self.conditions) != 4:
            raise ValueError("need exactly 4 propeller conditions")

    @property
    def mask(self):
        return tuple(c is not PropellerCondition.NORMAL for c in self.conditions)

    @property
    def label(self):
        return _MASK_TO_LABEL[self.mask]


def scenario_label(conditions) -> int:
    """Label 1..16 for a 4-tuple of propeller conditions."""
    return FaultScenario(tuple(conditions)).label


def make_scenario(label, rng) -> FaultScenario:
    """Scenario for a label; each faulty propeller draws Bent or Cracked evenly."""
    if label not in FAULT_MASKS:
        raise ValueError(f"label must be 1..16, got {label}")
    conditions = []
    for faulty in FAULT_MASKS[label]:
        if not faulty:
            conditions.append(PropellerCondition.NORMAL)
        else:
            conditions.append(
                PropellerCondition.BENT if rng.random() < 0.5 else PropellerCondition.CRACKED
            )
    return FaultScenario(tuple(conditions))


@dataclass
class FlightLog:
    """Time-indexed record of one mission, one row per 0.05 s tick."""

    t: np.ndarray
    position: np.ndarray      # (n, 3)
    velocity: np.ndarray      # (n, 3)
    attitude: np.ndarray      # (n, 3) roll, pitch, yaw
    rates: np.ndarray         # (n, 3) body rates
    omega: np.ndarray         # (n, 4) target RPM setpoints
    esc: np.ndarray           # (n, 4)
    thrust: np.ndarray        # (n, 4) applied per-motor thrust
    torque: np.ndarray        # (n, 4) applied per-motor drag torque
    delta: np.ndarray         # (n, 3) active waypoint minus position
    label: int
    seed: int
    params_hash: str
    period: float = 0.05
    waypoint_set: str = "A"
    conditions: tuple = (PropellerCondition.NORMAL,) * 4
    truncated: bool = False

    def __len__(self):
        return len(self.t)

    def channels(self):
        """(n, 10) classifier input channels in CHANNEL_NAMES order."""
        return np.hstack([self.omega, self.attitude, self.rates])

    def save(self, csv_path):
        """Write the CSV plus a .meta sidecar next to it."""
        rows = np.hstack(
            [
                self.t[:, None], self.position, self.velocity, self.attitude, self.rates,
                self.omega, self.thrust, self.torque, self.delta, self.esc,
            ]
        )
        with open(csv_path, "w") as fh:
            fh.write(_CSV_COLUMNS + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        meta = {
            "label": self.label,
            "seed": self.seed,
            "params_hash": self.params_hash,
            "period": repr(self.period),
            "waypoint_set": self.waypoint_set,
            "conditions": ",".join(c.value for c in self.conditions),
            "truncated": str(self.truncated).lower(),
        }
        with open(str(csv_path) + ".meta", "w") as fh:
            for key, val in meta.items():
                fh.write(f"{key}={val}\n")

    @classmethod
    def load(cls, csv_path):
        meta = {}
        with open(str(csv_path) + ".meta") as fh:
            for line in fh:
                key, _, val = line.strip().partition("=")
                meta[key] = val
        data = np.genfromtxt(csv_path, delimiter=",", skip_header=1)
        if data.ndim == 1:
            data = data[None, :]
        if data.shape[1] != 32:
            raise ValueError(f"{csv_path}: expected 32 columns, got {data.shape[1]}")
        return cls(
            t=data[:, 0],
            position=data[:, 1:4],
            velocity=data[:, 4:7],
            attitude=data[:, 7:10],
            rates=data[:, 10:13],
            omega=data[:, 13:17],
            thrust=data[:, 17:21],
            torque=data[:, 21:25],
            delta=data[:, 25:28],
            esc=data[:, 28:32],
            label=int(meta["label"]),
            seed=int(meta["seed"]),
            params_hash=meta["params_hash"],
            period=float(meta["period"]),
            waypoint_set=meta.get("waypoint_set", "?"),
            conditions=tuple(
                PropellerCondition.parse(c) for c in meta["conditions"].split(",")
            ),
            truncated=meta.get("truncated") == "true",
        )


class AnalyticPropeller:
    """Quadratic thrust/torque times the condition's efficiency curves.

    Satisfies the same predict_batch interface as PropellerRegressor so
    missions can run without trained checkpoints.
    """

    window = 1

    def __init__(self, condition, cfg: DegradationConfig):
        self.condition = condition
        self._cfg = cfg
        self._eta_f, self._eta_tau = cfg.curves_for(condition)

    def predict_batch(self, windows):
        rpm = np.asarray(windows, dtype=float)[:, -1]
        ratio = rpm / self._cfg.rpm_max
        f = self._cfg.k_f * rpm**2 * self._eta_f.eval(ratio)
        tau = self._cfg.k_tau * rpm**2 * self._eta_tau.eval(ratio)
        return np.stack([f, tau], axis=1)


def analytic_bank(cfg: DegradationConfig):
    """Condition -> AnalyticPropeller map for regressor-free missions."""
    return {cond: AnalyticPropeller(cond, cfg) for cond in PropellerCondition}


@dataclass(frozen=True)
class MissionConfig:
    duration: float = 80.0
    control_dt: float = 0.01
    physics_dt: float = 0.001
    record_dt: float = 0.05
    accept_radius: float = 0.5
    start: tuple = (0.0, 0.0, 2.0)


def params_fingerprint(params: QuadParams, profile: UnbalanceProfile, gains: ControllerGains):
    """Short stable hash of everything that shapes the dynamics."""
    text = repr((params, profile, gains))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_mission(
    scenario: FaultScenario,
    waypoints,
    duration,
    params: QuadParams,
    profile: UnbalanceProfile,
    seed,
    prop_models,
    gains: ControllerGains = None,
    mission: MissionConfig = None,
    waypoint_set_name="custom",
) -> FlightLog:
    """Closed-loop simulation of one scenario over a waypoint cycle.

    Per control tick: controller -> per-propeller model (selected by each
    propeller's condition) -> unbalance adjustment -> rigid-body dynamics,
    recording every record_dt. The mission cycles waypoints and repeats
    until the timer ends. A dynamics blow-up truncates the log and sets
    the flag instead of raising.
    """
    gains = gains or ControllerGains()
    mission = mission or MissionConfig(duration=duration)
    if mission.duration != duration:
        mission = replace(mission, duration=duration)
    waypoints = [np.asarray(w, dtype=float) for w in waypoints]
    for w in waypoints:
        if abs(w[0]) > ARENA_XY or abs(w[1]) > ARENA_XY or not ARENA_Z[0] <= w[2] <= ARENA_Z[1]:
            raise ValueError(f"waypoint {w} outside the arena box")
    if duration <= 0.0:
        raise ValueError("duration must be > 0")

    models = [prop_models[c] for c in scenario.conditions]
    win_len = max(m.window for m in models)
    n_ticks = int(round(mission.duration / mission.control_dt))
    record_every = int(round(mission.record_dt / mission.control_dt))
    substeps = int(round(mission.control_dt / mission.physics_dt))

    ctrl = CascadedController(gains, params)
    rpm0 = hover_rpm(params)
    ctrl.reset(rpm0)
    windows = np.full((4, win_len), rpm0)
    ratios = np.asarray(profile.u_ratio)

    y = QuadState(x=mission.start[0], y=mission.start[1], z=mission.start[2]).to_array()
    wp_idx = 0
    rows = {key: [] for key in ("t", "pos", "vel", "att", "rate", "omega", "esc",
                                "thrust", "torque", "delta")}
    truncated = False
    # group propellers sharing a model so each tick runs one forward per condition
    groups = {}
    for i, cond in enumerate(scenario.conditions):
        groups.setdefault(cond, []).append(i)
    groups = {cond: np.array(idx) for cond, idx in groups.items()}

    for tick in range(n_ticks):
        t = tick * mission.control_dt
        state = QuadState.from_array(y)
        target = waypoints[wp_idx % len(waypoints)]
        cmd = ctrl.tick(state, target, mission.control_dt)
        windows = np.roll(windows, -1, axis=1)
        windows[:, -1] = ctrl.rpm_actual

        f = np.empty(4)
        tau = np.empty(4)
        for cond, idx in groups.items():
            model = prop_models[cond]
            out = model.predict_batch(windows[idx][:, -model.window :])
            f[idx] = out[:, 0]
            tau[idx] = out[:, 1]
        factor = 1.0 + (ctrl.rpm_actual / profile.omega_max) * (ratios - 1.0)
        f = f / factor**2
        tau = tau / factor**2
        wrench = body_wrench_from_motors(f, tau, params)

        if tick % record_every == 0:
            rows["t"].append(t)
            rows["pos"].append(y[6:9].copy())
            rows["vel"].append(y[9:12].copy())
            rows["att"].append(y[0:3].copy())
            rows["rate"].append(y[3:6].copy())
            rows["omega"].append(cmd.rpm_setpoint.copy())
            rows["esc"].append(np.asarray(cmd.esc_signal, dtype=float).copy())
            rows["thrust"].append(f.copy())
            rows["torque"].append(tau.copy())
            rows["delta"].append(target - y[6:9])

        try:
            for _ in range(substeps):
                y = _rk4(y, wrench, params, mission.physics_dt)
            _check_state(y)
        except SimulationBlowup:
            truncated = True
            break
        y[0:3] = wrap_angle(y[0:3])

        if np.linalg.norm(target - y[6:9]) < mission.accept_radius:
            wp_idx += 1

    return FlightLog(
        t=np.array(rows["t"]),
        position=np.array(rows["pos"]),
        velocity=np.array(rows["vel"]),
        attitude=np.array(rows["att"]),
        rates=np.array(rows["rate"]),
        omega=np.array(rows["omega"]),
        esc=np.array(rows["esc"]),
        thrust=np.array(rows["thrust"]),
        torque=np.array(rows["torque"]),
        delta=np.array(rows["delta"]),
        label=scenario.label,
        seed=int(seed),
        params_hash=params_fingerprint(params, profile, gains),
        period=mission.record_dt,
        waypoint_set=waypoint_set_name,
        conditions=scenario.conditions,
        truncated=truncated,
    )


@dataclass
class WindowDataset:
    """Raw (unnormalized) window samples plus provenance."""

    x: np.ndarray          # (n, length, 10)
    y: np.ndarray          # (n,) labels 1..16
    log_index: np.ndarray  # (n,) which member log each window came from
    offset: np.ndarray     # (n,) start record of each window
    length: int
    record_counts: tuple = ()   # records per member log, for segment splits

    def __len__(self):
        return len(self.y)

    def subset(self, idx):
        idx = np.asarray(idx)
        return WindowDataset(
            x=self.x[idx], y=self.y[idx], log_index=self.log_index[idx],
            offset=self.offset[idx], length=self.length, record_counts=self.record_counts,
        )


def window_dataset(logs, length=100, hop=1) -> WindowDataset:
    """Slice each log into overlapping windows of the 10 input channels."""
    xs, ys, lidx, offs, counts = [], [], [], [], []
    for i, log in enumerate(logs):
        n = len(log)
        counts.append(n)
        if n < length:
            warnings.warn(f"log {i} (label {log.label}) has {n} < {length} records; skipped")
            continue
        chans = log.channels()
        starts = np.arange(0, n - length + 1, hop)
        view = np.lib.stride_tricks.sliding_window_view(chans, length, axis=0)
        xs.append(np.moveaxis(view[starts], 2, 1))
        ys.append(np.full(len(starts), log.label, dtype=np.intp))
        lidx.append(np.full(len(starts), i, dtype=np.intp))
        offs.append(starts)
    if not xs:
        raise ValueError("no log long enough to window")
    return WindowDataset(
        x=np.ascontiguousarray(np.concatenate(xs)),
        y=np.concatenate(ys),
        log_index=np.concatenate(lidx),
        offset=np.concatenate(offs),
        length=length,
        record_counts=tuple(counts),
    )


def split_windows(dataset: WindowDataset, ratio=0.8, mode="window", seed=0):
    """Deterministic train/test split.

    "window": seeded random split over windows (overlap makes it leaky but
    matches the headline protocol). "segment": each log is cut at
    ratio * records before windowing, so no test window shares a record
    with any train window.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if mode == "window":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(dataset))
        n_train = int(len(dataset) * ratio)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
    elif mode == "segment":
        train_mask = np.zeros(len(dataset), dtype=bool)
        test_mask = np.zeros(len(dataset), dtype=bool)
        for i, count in enumerate(dataset.record_counts):
            cut = int(count * ratio)
            mine = dataset.log_index == i
            train_mask |= mine & (dataset.offset + dataset.length <= cut)
            test_mask |= mine & (dataset.offset >= cut)
        train_idx = np.flatnonzero(train_mask)
        test_idx = np.flatnonzero(test_mask)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return dataset.subset(train_idx), dataset.subset(test_idx)


def normalization_stats(dataset: WindowDataset):
    """Per-channel mean and std over every timestep of every window."""
    flat = dataset.x.reshape(-1, dataset.x.shape[2])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    return mean, np.where(std > 1e-12, std, 1.0)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path, log_files, dataset_dir_meta, norm_mean, norm_std):
    """Dataset manifest: member logs with hashes, split recipe, normalization."""
    lines = ["format=quadfault-dataset-v1"]
    for key in sorted(dataset_dir_meta):
        lines.append(f"{key}={dataset_dir_meta[key]}")
    for name, sha, label, truncated in log_files:
        lines.append(f"log={name} sha256={sha} label={label} truncated={str(truncated).lower()}")
    lines.append("norm_mean=" + ",".join(repr(float(v)) for v in norm_mean))
    lines.append("norm_std=" + ",".join(repr(float(v)) for v in norm_std))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path):
    meta = {}
    logs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            if key == "log":
                fields = dict(part.split("=") for part in ("name=" + val).split(" "))
                logs.append(fields)
            elif key in ("norm_mean", "norm_std"):
                meta[key] = np.array([float(v) for v in val.split(",")])
            else:
                meta[key] = val
    return meta, logs
