#!/usr/bin/env python3
"""Quantify the per-condition RPM fixed points the classifier learns from.

For each propeller condition, flies a short hover mission with that
condition on propeller 4 and reports the steady-state RPM excess of motor 4
over the healthy motors. Useful when tuning degradation curves: if the
excess drops under a few RPM the classification problem degenerates.

Usage: python3 scripts/fault_signature_study.py [config]
"""

import sys

import numpy as np

from quadfault.config import load_config
from quadfault.datagen import FaultScenario, WAYPOINT_SETS, analytic_bank, run_mission
from quadfault.propeller import PropellerCondition

N = PropellerCondition.NORMAL


def main():
    cfg = load_config(sys.argv[1] if len(sys.argv) > 1 else None)
    bank = analytic_bank(cfg.degradation)
    print(f"airframe mass {cfg.params.mass} kg, curves from "
          f"{'config' if len(sys.argv) > 1 else 'code defaults'}")
    baseline = None
    for cond in PropellerCondition:
        scenario = FaultScenario((N, N, N, cond))
        log = run_mission(
            scenario, WAYPOINT_SETS["hover"], 30.0, cfg.params, cfg.profile,
            0, bank, cfg.gains, waypoint_set_name="hover",
        )
        steady = log.omega[len(log) // 2 :]
        means = steady.mean(axis=0)
        excess = means[3] - means[:3].mean()
        if cond is N:
            baseline = means.mean()
        print(f"{cond.value:8s}: motor4 {means[3]:7.2f} RPM, excess over healthy "
              f"{excess:+6.2f} RPM ({100 * excess / baseline:+.2f}%)")


if __name__ == "__main__":
    main()
