"""Scan the smoothed-step time constant and compare controllers 1 and 2 with the
expected overshoot / 5 % settling time (13.15 %, 3.35 s) and (25.35 %, 4.45 s)."""

import numpy as np

from mfcforge.lateralplant import REFERENCE_VEHICLE, lateral_design_plant
from mfcforge.loopanalysis import step_metrics
from mfcforge.mfcsim import make_reference, simulate_tracking

from reference_controllers import CONTROLLERS, F, TS

EXPECTED = {1: (13.15, 3.35), 2: (25.35, 4.45)}


def metrics(ssd, g, ref):
    m = step_metrics(simulate_tracking(ssd, g, F, ref), 0.05, skip=5)
    return m.overshoot, m.settling_time


def main():
    ssd, _ = lateral_design_plant(REFERENCE_VEHICLE, TS)
    rows = []
    for tau in np.round(np.arange(0.05, 1.0001, 0.05), 2):
        ref = make_reference("smoothstep", 1200, TS, tau=tau)
        got = {i: metrics(ssd, CONTROLLERS[i], ref) for i in EXPECTED}
        err = max(abs(a - b) / b for i in EXPECTED for a, b in zip(got[i], EXPECTED[i]))
        rows.append((err, tau))
        print(f"tau={tau:4.2f}  #1 {got[1][0]:6.2f}% {got[1][1]:5.2f}s   "
              f"#2 {got[2][0]:6.2f}% {got[2][1]:5.2f}s   worst rel err {100 * err:5.1f}%")
    err, tau = min(rows)
    print(f"best tau {tau:.2f} (worst relative error {100 * err:.1f}%)")


if __name__ == "__main__":
    main()
