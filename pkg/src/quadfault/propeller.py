"""Propeller thrust/torque generation under Normal/Bent/Cracked conditions.

Two interchangeable models live here: the analytic quadratic (thrust =
k_f * rpm^2, torque = k_tau * rpm^2) and a learned recurrent regressor
trained on bench traces. Because no physical loadcell rig is available,
``synth_loadcell_trace`` produces surrogate bench data with declared,
configurable degradation curves; real loadcell CSVs with the same columns
can be substituted unchanged.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from quadfault.nn import LSTM, Dense, Sequential, make_optimizer, mse
from quadfault.nn.checkpoint import load_checkpoint, save_checkpoint

# ESC command -> propeller RPM, fitted on the bench rig
ESC_MIN, ESC_MAX = 1000.0, 2000.0
_ESC_A, _ESC_B, _ESC_C = -0.0062, 29.37, -22992.0


class PropellerCondition(enum.Enum):
    NORMAL = "Normal"
    BENT = "Bent"
    CRACKED = "Cracked"

    @classmethod
    def parse(cls, text):
        for cond in cls:
            if cond.value.lower() == str(text).strip().lower():
                return cond
        raise ValueError(f"unknown propeller condition {text!r}")


class TrainingDiverged(RuntimeError):
    """Raised when a training loss goes non-finite."""


def esc_to_rpm(esc):
    """Evaluate the bench-fitted ESC->RPM quadratic; esc must lie in [1000, 2000]."""
    esc = np.asarray(esc, dtype=float)
    if np.any(esc < ESC_MIN) or np.any(esc > ESC_MAX):
        raise ValueError(f"esc outside [{ESC_MIN:.0f}, {ESC_MAX:.0f}]")
    rpm = _ESC_A * esc**2 + _ESC_B * esc + _ESC_C
    return float(rpm) if rpm.ndim == 0 else rpm


def rpm_to_esc(rpm):
    """Invert the ESC->RPM quadratic on its monotone branch, clamped to limits."""
    lo, hi = esc_to_rpm(ESC_MIN), esc_to_rpm(ESC_MAX)
    rpm = np.clip(np.asarray(rpm, dtype=float), lo, hi)
    disc = _ESC_B**2 - 4.0 * _ESC_A * (_ESC_C - rpm)
    esc = (-_ESC_B + np.sqrt(disc)) / (2.0 * _ESC_A)
    esc = np.clip(esc, ESC_MIN, ESC_MAX)
    return float(esc) if esc.ndim == 0 else esc


def analytic_thrust_torque(omega, k_f, k_tau):
    """Healthy-propeller thrust (N) and torque (N m) at omega RPM."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise ValueError("omega must be >= 0")
    w2 = omega**2
    if omega.ndim == 0:
        return float(k_f * w2), float(k_tau * w2)
    return k_f * w2, k_tau * w2


@dataclass(frozen=True)
class EfficiencyCurve:
    """Multiplicative efficiency 1 - offset - slope*(omega/omega_max)^power."""

    offset: float = 0.0
    slope: float = 0.0
    power: float = 1.0

    def eval(self, speed_ratio):
        eta = 1.0 - self.offset - self.slope * np.asarray(speed_ratio, dtype=float) ** self.power
        return np.clip(eta, 0.0, None)


@dataclass(frozen=True)
class DegradationConfig:
    """Loadcell surrogate settings: rig constants plus per-condition curves."""

    k_f: float = 1.076e-5
    k_tau: float = 1.632e-7
    duration: float = 300.0        # s, one triangular ESC ramp up and back
    period: float = 0.025          # s between samples
    sigma_thrust: float = 0.02     # N, additive Gaussian noise
    sigma_torque: float = 0.0004   # N m
    bent_thrust: EfficiencyCurve = EfficiencyCurve(slope=0.12, power=1.0)
    bent_torque: EfficiencyCurve = EfficiencyCurve(slope=0.06, power=1.0)
    cracked_thrust: EfficiencyCurve = EfficiencyCurve(slope=0.18, power=2.0)
    cracked_torque: EfficiencyCurve = EfficiencyCurve(slope=0.09, power=2.0)

    def curves_for(self, condition: PropellerCondition):
        if condition is PropellerCondition.NORMAL:
            return EfficiencyCurve(), EfficiencyCurve()
        if condition is PropellerCondition.BENT:
            return self.bent_thrust, self.bent_torque
        return self.cracked_thrust, self.cracked_torque

    @property
    def rpm_max(self):
        return esc_to_rpm(ESC_MAX)


@dataclass
class LoadcellTrace:
    """Bench recording of one propeller: time, command, speed, thrust, torque."""

    t: np.ndarray
    esc: np.ndarray
    rpm: np.ndarray
    thrust: np.ndarray
    torque: np.ndarray
    period: float
    condition: PropellerCondition

    def __post_init__(self):
        n = len(self.t)
        for name in ("esc", "rpm", "thrust", "torque"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length != t length")
        dt = np.diff(self.t)
        if n > 1 and not np.allclose(dt, self.period, rtol=0.0, atol=1e-9):
            raise ValueError("timestamps must increase by one constant period")
        if np.any(self.esc < ESC_MIN) or np.any(self.esc > ESC_MAX):
            raise ValueError("esc values outside [1000, 2000]")
        if np.any(self.thrust < 0.0) or np.any(self.torque < 0.0):
            raise ValueError("thrust and torque must be >= 0")

    def __len__(self):
        return len(self.t)

    def save_csv(self, path):
        # repr round-trips doubles exactly, so saved traces reload bit-equal
        with open(path, "w") as fh:
            fh.write("t,esc,rpm,thrust,torque\n")
            for row in zip(self.t, self.esc, self.rpm, self.thrust, self.torque):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load_csv(cls, path, condition, period=None):
        cols = {"t": [], "esc": [], "rpm": [], "thrust": [], "torque": []}
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "t,esc,rpm,thrust,torque":
                raise ValueError(f"{path}: unexpected header {header!r}")
            for lineno, line in enumerate(fh, start=2):
                parts = line.strip().split(",")
                if len(parts) != 5:
                    raise ValueError(f"{path}: row {lineno}: expected 5 fields, got {len(parts)}")
                try:
                    vals = [float(v) for v in parts]
                except ValueError as err:
                    raise ValueError(f"{path}: row {lineno}: {err}") from None
                for key, v in zip(cols, vals):
                    cols[key].append(v)
        arrays = {k: np.array(v) for k, v in cols.items()}
        if period is None:
            if len(arrays["t"]) < 2:
                raise ValueError(f"{path}: cannot infer period from fewer than 2 rows")
            period = float(arrays["t"][1] - arrays["t"][0])
        return cls(period=period, condition=condition, **arrays)


def synth_loadcell_trace(condition, cfg: DegradationConfig, seed) -> LoadcellTrace:
    """Surrogate bench run: triangular ESC ramp 1000 -> 2000 -> 1000.

    Thrust/torque follow the analytic quadratics scaled by the condition's
    efficiency curves, plus additive Gaussian noise with the configured
    sigmas. Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    n = int(round(cfg.duration / cfg.period))
    t = np.arange(n) * cfg.period
    frac = t / cfg.duration
    esc = ESC_MIN + (ESC_MAX - ESC_MIN) * (1.0 - np.abs(1.0 - 2.0 * frac))
    rpm = esc_to_rpm(esc)
    eta_f, eta_tau = cfg.curves_for(condition)
    ratio = rpm / cfg.rpm_max
    thrust = cfg.k_f * rpm**2 * eta_f.eval(ratio)
    torque = cfg.k_tau * rpm**2 * eta_tau.eval(ratio)
    if cfg.sigma_thrust > 0.0:
        thrust = thrust + rng.normal(0.0, cfg.sigma_thrust, size=n)
    if cfg.sigma_torque > 0.0:
        torque = torque + rng.normal(0.0, cfg.sigma_torque, size=n)
    return LoadcellTrace(
        t=t,
        esc=esc,
        rpm=rpm,
        thrust=np.clip(thrust, 0.0, None),
        torque=np.clip(torque, 0.0, None),
        period=cfg.period,
        condition=condition,
    )


def make_windows(inputs, targets, length):
    """Sliding-window reconstruction: the past L samples predict the next value.

    inputs: (N, d) or (N,); targets: (N, m) or (N,). Returns
    X of shape (N-L, L, d) and Y of shape (N-L, m).
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if targets.ndim == 1:
        targets = targets[:, None]
    n = inputs.shape[0]
    if targets.shape[0] != n:
        raise ValueError("inputs and targets must have equal length")
    if not 1 <= length < n:
        raise ValueError(f"need N > L >= 1, got N={n}, L={length}")
    x = np.lib.stride_tricks.sliding_window_view(inputs, length, axis=0)[:-1]
    # sliding view puts the window axis last; move it to (sample, time, feature)
    x = np.ascontiguousarray(np.moveaxis(x, 2, 1))
    y = targets[length:]
    return x, y


@dataclass(frozen=True)
class RegressorTrainConfig:
    window: int = 10
    hidden: int = 24
    dense_hidden: int = 16
    batch_size: int = 32
    learning_rate: float = 0.01
    max_epochs: int = 220
    patience: int = 20
    min_improvement: float = 1e-3  # relative: val must drop below best * (1 - this)
    lr_patience: int = 4           # decay the learning rate after this many stale epochs
    lr_decay: float = 0.7
    optimizer: str = "adam"
    train_fraction: float = 0.8    # leading fraction of the trace used to fit
    val_fraction: float = 0.1      # random fraction of fit windows held for plateau detection


class PropellerRegressor:
    """Stacked-LSTM thrust/torque predictor for one propeller condition.

    Network: LSTM -> LSTM -> dense -> dense(2), linear dense kernels. Inputs
    are min-max normalized with training-segment statistics. Targets are
    regressed in square-root space (then min-max normalized): the ESC sweep
    spans almost four decades of thrust, and sqrt both stabilizes that range
    and makes the rpm -> sqrt(thrust) map nearly linear. Predictions are
    de-normalized, squared back to physical units, and floored at zero.
    """

    def __init__(self, condition, window, net, rpm_range, s_min, s_max):
        self.condition = condition
        self.window = int(window)
        self.net = net
        self.rpm_range = (float(rpm_range[0]), float(rpm_range[1]))
        self.s_min = np.asarray(s_min, dtype=float)   # sqrt-space target minima
        self.s_max = np.asarray(s_max, dtype=float)

    def _normalize_input(self, windows):
        lo, hi = self.rpm_range
        margin = 0.1 * (hi - lo)
        if np.any(windows < lo - margin) or np.any(windows > hi + margin):
            raise ValueError("rpm outside training range +-10%")
        return (windows - lo) / (hi - lo)

    def predict_batch(self, windows):
        """windows: (batch, L) rpm values -> (batch, 2) thrust, torque."""
        windows = np.asarray(windows, dtype=float)
        if windows.ndim == 1:
            windows = windows[None, :]
        if windows.shape[1] != self.window:
            raise ValueError(f"window length {windows.shape[1]} != {self.window}")
        xn = self._normalize_input(windows)[:, :, None]
        yn = self.net.forward(xn)
        s = np.clip(self.s_min + yn * (self.s_max - self.s_min), 0.0, None)
        return s * s

    def predict(self, rpm_window):
        """Single window of L rpm values -> (thrust, torque)."""
        out = self.predict_batch(np.asarray(rpm_window, dtype=float)[None, :])
        return float(out[0, 0]), float(out[0, 1])

    def save(self, path):
        meta = {
            "condition": self.condition.value,
            "window": self.window,
            "rpm_range": list(self.rpm_range),
            "target_transform": "sqrt",
            "s_min": self.s_min.tolist(),
            "s_max": self.s_max.tolist(),
            "layers": [
                {"kind": type(layer).__name__, **_layer_meta(layer)} for layer in self.net.layers
            ],
        }
        save_checkpoint(path, self.net.params(), meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        if meta.get("target_transform") != "sqrt":
            raise ValueError(f"{path}: unsupported target transform")
        net = _build_net_from_meta(meta["layers"])
        net.set_params(arrays)
        return cls(
            condition=PropellerCondition.parse(meta["condition"]),
            window=meta["window"],
            net=net,
            rpm_range=meta["rpm_range"],
            s_min=np.array(meta["s_min"]),
            s_max=np.array(meta["s_max"]),
        )


def _layer_meta(layer):
    if isinstance(layer, LSTM):
        return {"d": layer.d, "k": layer.k, "seq": layer.return_sequences}
    if isinstance(layer, Dense):
        return {"n_in": layer.params["w"].shape[0], "n_out": layer.params["w"].shape[1],
                "relu": layer.relu}
    raise TypeError(f"unsupported layer {type(layer).__name__}")


def _build_net_from_meta(layer_meta):
    rng = np.random.default_rng(0)  # shapes only; weights are overwritten
    layers = []
    for spec in layer_meta:
        if spec["kind"] == "LSTM":
            layers.append(LSTM(spec["d"], spec["k"], rng, return_sequences=spec["seq"]))
        elif spec["kind"] == "Dense":
            layers.append(Dense(spec["n_in"], spec["n_out"], rng, relu=spec["relu"]))
        else:
            raise ValueError(f"unknown layer kind {spec['kind']!r}")
    return Sequential(layers)


def _regressor_net(cfg: RegressorTrainConfig, rng):
    return Sequential(
        [
            LSTM(1, cfg.hidden, rng, return_sequences=True),
            LSTM(cfg.hidden, cfg.hidden, rng, return_sequences=False),
            Dense(cfg.hidden, cfg.dense_hidden, rng),
            Dense(cfg.dense_hidden, 2, rng),
        ]
    )


def train_regressor(trace: LoadcellTrace, cfg: RegressorTrainConfig = None, seed=0):
    """Fit a PropellerRegressor on the leading 80% of a trace.

    Returns (regressor, history) where history holds per-epoch train and
    validation MSE. Training stops when validation MSE stops improving by
    cfg.min_improvement for cfg.patience consecutive epochs.
    """
    cfg = cfg or RegressorTrainConfig()
    n = len(trace)
    if n <= cfg.window + 1:
        raise ValueError("trace shorter than window")
    n_fit = int(n * cfg.train_fraction)

    rpm = trace.rpm[:n_fit]
    targets = np.sqrt(np.stack([trace.thrust[:n_fit], trace.torque[:n_fit]], axis=1))
    rpm_lo, rpm_hi = float(rpm.min()), float(rpm.max())
    s_min = targets.min(axis=0)
    s_max = targets.max(axis=0)
    span = np.where(s_max > s_min, s_max - s_min, 1.0)

    xw, yw = make_windows((rpm - rpm_lo) / (rpm_hi - rpm_lo), (targets - s_min) / span, cfg.window)
    rng = np.random.default_rng(seed)
    # random val sample so plateau detection sees every speed regime of the ramp
    n_val = max(1, int(len(xw) * cfg.val_fraction))
    shuffled = rng.permutation(len(xw))
    val_idx, train_idx = shuffled[:n_val], shuffled[n_val:]
    x_train, y_train = xw[train_idx], yw[train_idx]
    x_val, y_val = xw[val_idx], yw[val_idx]

    net = _regressor_net(cfg, rng)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)

    history = {"train_mse": [], "val_mse": []}
    best_val = np.inf
    best_params = None
    stall = 0
    lr_stall = 0
    n_train = len(x_train)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = net.forward(x_train[idx])
            loss, grad = mse(pred, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch offset {start} "
                    f"({trace.condition.value} regressor)"
                )
            net.backward(grad)
            opt.step(net.params(), net.grads())
            total += loss * len(idx)
        val_loss, _ = mse(net.forward(x_val), y_val)
        history["train_mse"].append(total / n_train)
        history["val_mse"].append(val_loss)
        if val_loss < best_val * (1.0 - cfg.min_improvement):
            best_val = val_loss
            best_params = {k: v.copy() for k, v in net.params().items()}
            stall = 0
            lr_stall = 0
        else:
            stall += 1
            lr_stall += 1
            if stall >= cfg.patience:
                break
            if lr_stall >= cfg.lr_patience:
                opt.lr *= cfg.lr_decay
                lr_stall = 0
    if best_params is not None:
        net.set_params(best_params)

    reg = PropellerRegressor(
        condition=trace.condition,
        window=cfg.window,
        net=net,
        rpm_range=(rpm_lo, rpm_hi),
        s_min=s_min,
        s_max=s_min + span,
    )
    return reg, history


def predict_ft(regressor: PropellerRegressor, rpm_window):
    """Thrust/torque prediction from the last L rpm samples."""
    return regressor.predict(rpm_window)


def eval_error(regressor: PropellerRegressor, trace: LoadcellTrace, train_fraction=0.8):
    """Mean absolute relative error (%) on the trailing held-out segment."""
    if trace.condition is not regressor.condition:
        raise ValueError(
            f"trace condition {trace.condition.value} != regressor {regressor.condition.value}"
        )
    n_fit = int(len(trace) * train_fraction)
    rpm = trace.rpm[n_fit:]
    truth = np.stack([trace.thrust[n_fit:], trace.torque[n_fit:]], axis=1)
    xw, yw = make_windows(rpm, truth, regressor.window)
    pred = regressor.predict_batch(xw[:, :, 0])
    rel = np.abs(pred - yw) / np.abs(yw)
    err = 100.0 * rel.mean(axis=0)
    return float(err[0]), float(err[1])
