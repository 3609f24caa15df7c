"""Command-line pipeline: loadcell surrogate -> propeller regressors ->
flight datasets -> classifier -> evaluation reports.

Every command is deterministic given (config, seed): rerunning produces
byte-identical traces, checkpoints, manifests and reports. Failures exit
nonzero with a one-line `error-class: message` on stderr.
"""

import argparse
import hashlib
import sys
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from quadfault import classifier as clf
from quadfault import datagen
from quadfault.calibration import UnbalanceProfile, estimate_unbalance, hover_segment
from quadfault.config import ConfigError, RunConfig, dump_config, load_config
from quadfault.datagen import (
    FlightLog,
    WAYPOINT_SETS,
    analytic_bank,
    make_scenario,
    normalization_stats,
    run_mission,
    split_windows,
    window_dataset,
    write_manifest,
    read_manifest,
    file_sha256,
)
from quadfault.propeller import (
    LoadcellTrace,
    PropellerCondition,
    PropellerRegressor,
    TrainingDiverged,
    eval_error,
    synth_loadcell_trace,
    train_regressor,
)

_CONDITION_FILES = {
    PropellerCondition.NORMAL: "normal",
    PropellerCondition.BENT: "bent",
    PropellerCondition.CRACKED: "cracked",
}


def derive_seed(master, *tags):
    """Stable sub-seed from the master seed and a tag tuple."""
    text = repr((int(master),) + tags)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") % (2**63)


def cmd_gen_loadcell(cfg: RunConfig, out: Path):
    """Emit the three surrogate bench traces (Normal/Bent/Cracked)."""
    trace_dir = out / "loadcell"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for cond, stem in _CONDITION_FILES.items():
        seed = derive_seed(cfg.seed, "loadcell", cond.value)
        trace = synth_loadcell_trace(cond, cfg.degradation, seed)
        path = trace_dir / f"{stem}.csv"
        trace.save_csv(path)
        with open(str(path) + ".meta", "w") as fh:
            fh.write(f"condition={cond.value}\nseed={seed}\nperiod={repr(trace.period)}\n")
        print(f"wrote {path} ({len(trace)} rows)")
    return 0


def _load_traces(cfg, out):
    traces = {}
    for cond, stem in _CONDITION_FILES.items():
        path = out / "loadcell" / f"{stem}.csv"
        if not path.exists():
            raise FileNotFoundError(
                f"{path} not found; run `quadfault gen-loadcell` first"
            )
        traces[cond] = LoadcellTrace.load_csv(path, cond, period=cfg.degradation.period)
    return traces


def cmd_train_prop(cfg: RunConfig, out: Path):
    """Train one regressor per condition; write checkpoints and error report."""
    traces = _load_traces(cfg, out)
    reg_dir = out / "regressors"
    reg_dir.mkdir(parents=True, exist_ok=True)
    report_lines = []
    for cond, stem in _CONDITION_FILES.items():
        seed = derive_seed(cfg.seed, "regressor", cond.value)
        reg, history = train_regressor(traces[cond], cfg.regressor, seed=seed)
        reg.save(reg_dir / f"{stem}.ckpt")
        thrust_err, torque_err = eval_error(reg, traces[cond], cfg.regressor.train_fraction)
        line = (
            f"{cond.value}: thrust_err={thrust_err:.3f}% torque_err={torque_err:.3f}% "
            f"epochs={len(history['val_mse'])}"
        )
        report_lines.append(line)
        print(line)
        with open(reg_dir / f"history_{stem}.csv", "w") as fh:
            fh.write("epoch,train_mse,val_mse\n")
            for i, (tr, va) in enumerate(zip(history["train_mse"], history["val_mse"])):
                fh.write(f"{i},{repr(float(tr))},{repr(float(va))}\n")
    with open(reg_dir / "report.txt", "w") as fh:
        fh.write("\n".join(report_lines) + "\n")
    return 0


def _load_regressors(out):
    bank = {}
    for cond, stem in _CONDITION_FILES.items():
        path = out / "regressors" / f"{stem}.ckpt"
        if not path.exists():
            raise FileNotFoundError(
                f"{path} not found; run `quadfault train-prop` first"
            )
        bank[cond] = PropellerRegressor.load(path)
    return bank


def _prop_bank(cfg, out):
    if cfg.prop_model == "analytic":
        return analytic_bank(cfg.degradation)
    return _load_regressors(out)


def cmd_gen_flights(cfg: RunConfig, out: Path, name=None, waypoint_set=None, mass=None,
                    labels=None):
    """Fly every scenario and persist the labeled dataset with its manifest."""
    ds = cfg.dataset
    if waypoint_set is not None:
        ds = replace(ds, waypoint_set=waypoint_set)
    params = cfg.params if mass is None else replace(cfg.params, mass=mass)
    name = name or ds.waypoint_set
    labels = labels or list(range(1, 17))

    bank = _prop_bank(cfg, out)
    data_dir = out / "datasets" / name
    data_dir.mkdir(parents=True, exist_ok=True)
    waypoints = WAYPOINT_SETS[ds.waypoint_set]

    logs = []
    log_files = []
    for label in labels:
        for run in range(ds.runs_per_label):
            seed = derive_seed(cfg.seed, "mission", name, label, run)
            scenario = make_scenario(label, np.random.default_rng(seed))
            log = run_mission(
                scenario, waypoints, cfg.mission.duration, params, cfg.profile,
                seed, bank, cfg.gains, cfg.mission, waypoint_set_name=ds.waypoint_set,
            )
            suffix = f"_{run}" if ds.runs_per_label > 1 else ""
            fname = f"label_{label:02d}{suffix}.csv"
            log.save(data_dir / fname)
            logs.append(log)
            log_files.append((fname, file_sha256(data_dir / fname), label, log.truncated))
            flag = " TRUNCATED" if log.truncated else ""
            print(f"label {label:2d}: {len(log)} records{flag}")

    windows = window_dataset(logs, ds.window, ds.hop)
    split_seed = derive_seed(cfg.seed, "split", name)
    train, _ = split_windows(windows, ds.split_ratio, ds.split_mode, split_seed)
    mean, std = normalization_stats(train)
    write_manifest(
        data_dir / "manifest.txt",
        log_files,
        {
            "name": name,
            "waypoint_set": ds.waypoint_set,
            "mass": repr(params.mass),
            "seed": cfg.seed,
            "split_seed": split_seed,
            "split_mode": ds.split_mode,
            "split_ratio": repr(ds.split_ratio),
            "window": ds.window,
            "hop": ds.hop,
            "n_windows": len(windows),
        },
        mean,
        std,
    )
    print(f"dataset {name}: {len(windows)} windows, manifest written")
    return 0


def _load_dataset(out, name):
    data_dir = out / "datasets" / name
    manifest = data_dir / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"{manifest} not found; run `quadfault gen-flights` first")
    meta, log_entries = read_manifest(manifest)
    logs = [FlightLog.load(data_dir / entry["name"]) for entry in log_entries]
    windows = window_dataset(logs, int(meta["window"]), int(meta["hop"]))
    return meta, windows


def _manifest_split(meta, windows):
    return split_windows(
        windows, float(meta["split_ratio"]), meta["split_mode"], int(meta["split_seed"])
    )


def cmd_train_clf(cfg: RunConfig, out: Path, dataset="A", resume=None, shuffle_labels=False):
    """Train the CNN on a dataset's training split; write checkpoint and curves."""
    meta, windows = _load_dataset(out, dataset)
    train, test = _manifest_split(meta, windows)
    mean, std = meta["norm_mean"], meta["norm_std"]

    if resume is not None:
        model = clf.CnnModel.load(resume)
    else:
        model = clf.build_cnn(
            input_shape=(windows.length, windows.x.shape[2]),
            seed=derive_seed(cfg.seed, "clf-init"),
            norm_mean=mean, norm_std=std,
        )
    y_train = train.y
    if shuffle_labels:
        rng = np.random.default_rng(derive_seed(cfg.seed, "label-shuffle"))
        y_train = y_train[rng.permutation(len(y_train))]

    history = clf.train_classifier(
        model, train.x, y_train, cfg.classifier, seed=derive_seed(cfg.seed, "clf-train")
    )
    clf_dir = out / "classifier"
    clf_dir.mkdir(parents=True, exist_ok=True)
    stem = "model_shuffled" if shuffle_labels else "model"
    model.save(clf_dir / f"{stem}.ckpt")
    with open(clf_dir / f"curves_{stem}.csv", "w") as fh:
        fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
        for i in range(len(history["val_acc"])):
            fh.write(
                f"{i},{repr(float(history['train_loss'][i]))},"
                f"{repr(float(history['train_acc'][i]))},"
                f"{repr(float(history['val_loss'][i]))},"
                f"{repr(float(history['val_acc'][i]))}\n"
            )
    final_val = history["val_acc"][-1] if history["val_acc"] else float("nan")
    report = clf.evaluate(model, test.x, test.y)
    print(f"classifier: {len(history['val_acc'])} epochs, final val acc "
          f"{100 * final_val:.2f}%, test split acc {report.accuracy:.2f}%")
    return 0


def cmd_eval(cfg: RunConfig, out: Path, model_path, dataset, split="all", tag=None):
    """Evaluate a checkpoint on a dataset; write report + confusion CSV."""
    model_path = Path(model_path)
    if not model_path.exists():
        raise FileNotFoundError(f"model checkpoint {model_path} not found")
    model = clf.CnnModel.load(model_path)
    meta, windows = _load_dataset(out, dataset)
    if windows.x.shape[1:] != (model.input_shape[0], model.input_shape[1]):
        raise ValueError(
            f"channel schema mismatch: dataset windows {windows.x.shape[1:]} "
            f"vs model input {model.input_shape}"
        )
    if split == "test":
        _, subset = _manifest_split(meta, windows)
    elif split == "train":
        subset, _ = _manifest_split(meta, windows)
    else:
        subset = windows
    report = clf.evaluate(model, subset.x, subset.y)
    eval_dir = out / "eval" / (tag or f"{dataset}_{split}")
    eval_dir.mkdir(parents=True, exist_ok=True)
    report.save(eval_dir / "report.txt", eval_dir / "confusion.csv", eval_dir / "per_label.csv")
    print(
        f"eval {dataset}/{split}: accuracy {report.accuracy:.2f}% "
        f"precision {report.binary_precision:.2f}% recall {report.binary_recall:.2f}% "
        f"({report.n_samples} windows)"
    )
    return 0


def cmd_calibrate(cfg: RunConfig, out: Path, hover_log):
    """Estimate the unbalance profile from a hover log; persist a calibrated config."""
    log_path = Path(hover_log)
    if not log_path.exists():
        raise FileNotFoundError(f"hover log {log_path} not found")
    log = FlightLog.load(log_path)
    start, stop = hover_segment(log)
    segment = SimpleNamespace(
        omega=log.omega[start:stop], velocity=log.velocity[start:stop], period=log.period
    )
    profile = estimate_unbalance(segment)
    cal_dir = out / "calibration"
    cal_dir.mkdir(parents=True, exist_ok=True)
    calibrated = replace(cfg, profile=profile)
    with open(cal_dir / "calibrated.cfg", "w") as fh:
        fh.write(dump_config(calibrated))
    ratios = ", ".join(f"{r:.4f}" for r in profile.u_ratio)
    print(f"unbalance ratios: [{ratios}], omega_max {profile.omega_max:.1f} RPM")
    print(f"calibrated config written to {cal_dir / 'calibrated.cfg'}")
    return 0


def cmd_pipeline(cfg: RunConfig, out: Path):
    """All stages end to end: traces, regressors, three datasets, training,
    and the three-way generalization evaluation."""
    cmd_gen_loadcell(cfg, out)
    cmd_train_prop(cfg, out)
    cmd_gen_flights(cfg, out, name="A")
    cmd_train_clf(cfg, out, dataset="A")
    cmd_gen_flights(cfg, out, name="B", waypoint_set="B")
    cmd_gen_flights(cfg, out, name="C", mass=cfg.params.mass * 1.3)
    model = out / "classifier" / "model.ckpt"
    cmd_eval(cfg, out, model, "A", split="test")
    cmd_eval(cfg, out, model, "B", split="all")
    cmd_eval(cfg, out, model, "C", split="all")

    summary = []
    for name, split in (("A", "test"), ("B", "all"), ("C", "all")):
        text = (out / "eval" / f"{name}_{split}" / "report.txt").read_text()
        acc = float(next(l for l in text.splitlines() if l.startswith("accuracy:"))
                    .split()[1].rstrip("%"))
        summary.append((name, acc))
    lines = [f"dataset_{name}_accuracy: {acc:.2f}%" for name, acc in summary]
    order = summary[0][1] > summary[1][1] > summary[2][1]
    lines.append(f"generalization_ordering_holds: {str(order).lower()}")
    (out / "pipeline_summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _die(err_class, message):
    print(f"{err_class}: {message}", file=sys.stderr)
    return 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quadfault",
        description="Quadrotor propeller fault diagnosis workbench",
    )
    parser.add_argument("--config", help="run configuration file (key=value sections)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", default="runs", help="output directory (default: runs)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-loadcell", help="generate the three surrogate bench traces")
    sub.add_parser("train-prop", help="train the three propeller regressors")

    p = sub.add_parser("gen-flights", help="simulate missions for all 16 fault labels")
    p.add_argument("--name", help="dataset name (default: waypoint set)")
    p.add_argument("--waypoint-set", choices=sorted(WAYPOINT_SETS), help="override waypoints")
    p.add_argument("--mass", type=float, help="override airframe mass, kg")
    p.add_argument("--labels", help="comma-separated label subset (default all 16)")

    p = sub.add_parser("train-clf", help="train the fault classifier")
    p.add_argument("--dataset", default="A", help="dataset name under <out>/datasets")
    p.add_argument("--resume", help="continue training from a checkpoint")
    p.add_argument("--shuffle-labels", action="store_true",
                   help="null control: permute training labels")

    p = sub.add_parser("eval", help="evaluate a classifier checkpoint on a dataset")
    p.add_argument("--model", required=True, help="classifier checkpoint path")
    p.add_argument("--dataset", required=True, help="dataset name under <out>/datasets")
    p.add_argument("--split", choices=("all", "test", "train"), default="all")
    p.add_argument("--tag", help="output subdirectory under <out>/eval")

    p = sub.add_parser("calibrate", help="estimate unbalance ratios from a hover log")
    p.add_argument("--hover-log", required=True, help="flight log CSV of a hover run")

    sub.add_parser("pipeline", help="run every stage end to end")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if args.command == "gen-loadcell":
            return cmd_gen_loadcell(cfg, out)
        if args.command == "train-prop":
            return cmd_train_prop(cfg, out)
        if args.command == "gen-flights":
            labels = None
            if args.labels:
                labels = [int(v) for v in args.labels.split(",")]
                if any(not 1 <= v <= 16 for v in labels):
                    raise ConfigError("labels must be in 1..16")
            return cmd_gen_flights(cfg, out, name=args.name, waypoint_set=args.waypoint_set,
                                   mass=args.mass, labels=labels)
        if args.command == "train-clf":
            return cmd_train_clf(cfg, out, dataset=args.dataset, resume=args.resume,
                                 shuffle_labels=args.shuffle_labels)
        if args.command == "eval":
            return cmd_eval(cfg, out, args.model, args.dataset, split=args.split,
                            tag=args.tag)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, out, args.hover_log)
        if args.command == "pipeline":
            return cmd_pipeline(cfg, out)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as err:
        return _die("config-error", err)
    except FileNotFoundError as err:
        return _die("io-error", err)
    except TrainingDiverged as err:
        return _die("train-error", err)
    except (ValueError, RuntimeError) as err:
        return _die("data-error", err)


if __name__ == "__main__":
    sys.exit(main())
