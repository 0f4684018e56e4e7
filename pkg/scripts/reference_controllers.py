"""Print PID images, margins and step metrics of the four reference iPD controllers."""

from mfcforge.lateralplant import REFERENCE_VEHICLE, lateral_design_plant
from mfcforge.loopanalysis import loop_tf, margins, step_metrics
from mfcforge.mfcbridge import FilterConfig, IpdGains, ipd2_to_pid
from mfcforge.mfcsim import make_reference, simulate_tracking

TS = 0.05
F = FilterConfig(4.0, TS)
CONTROLLERS = {
    1: IpdGains(0.00093, 0.043, 315.7),
    2: IpdGains(0.09078, 0.167, 161.9),
    3: IpdGains(0.0, 0.301, 116.1),
    4: IpdGains(0.0, 0.649, 792.6),
}


def main():
    ssd, G = lateral_design_plant(REFERENCE_VEHICLE, TS)
    ref = make_reference("step", 1200, TS)
    print(f"{'#':>2} {'K3':>9} {'K1':>9} {'K2':>9} {'GM dB':>7} {'PM deg':>7} {'OS %':>7} {'ST5 s':>6}")
    for i, g in CONTROLLERS.items():
        p = ipd2_to_pid(g, F)
        m = margins(loop_tf(g, G, F))
        s = step_metrics(simulate_tracking(ssd, g, F, ref), 0.05, skip=5)
        print(f"{i:>2} {p.K3:9.5f} {p.K1:9.4f} {p.K2:9.4f} {m.gain_margin_db:7.2f} "
              f"{m.phase_margin_deg:7.2f} {s.overshoot:7.2f} {s.settling_time:6.2f}")


if __name__ == "__main__":
    main()
