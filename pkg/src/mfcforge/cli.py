"""Command-line pipeline: plant -> stabset -> transform -> filter -> simulate / margins.

Exit codes: 0 success, 2 usage or input error, 3 simulation diverged.
Errors print one line ``error: <reason>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .lateralplant import (
    DiscreteTF,
    StateSpace,
    VehicleParams,
    augment_with_filter_poles,
    build_lateral_ss,
    ss_to_tf,
    zoh_discretize,
)
from .loopanalysis import PerformanceSpec, evaluate, loop_tf, margins, step_metrics
from .mfcbridge import (
    FilterConfig,
    IpdGains,
    TransformSingularity,
    map_set,
)
from .mfcsim import make_reference, simulate_tracking
from .polycore import DomainError, Poly
from .tchebset import Kind, StabilizingSet, StabRegionSlice, stabilizing_set

PLANT_FORMAT = "mfcforge.plant/1"
SET_FORMAT = "mfcforge.stabset/1"
CLOUD_HEADER = ("K3", "K1", "K2", "Kp", "Kd", "alpha")
PARAM_KEYS = ("m", "vx", "Iz", "Cf", "Cr", "lf", "lr")


class UsageError(Exception):
    """Bad input: reported with exit code 2."""


class Diverged(Exception):
    """Simulation blew up: exit code 3."""


# --- io helpers ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(obj, indent=1, sort_keys=False, allow_nan=True) + "\n"


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc.msg} (line {exc.lineno})")


def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


# --- plant files --------------------------------------------------------------

def _ss_to_json(ss: StateSpace) -> dict:
    d = {"A": _mat(ss.A), "B": _mat(ss.B), "C": _mat(ss.C), "D": _mat(ss.D)}
    if ss.Bw is not None:
        d["Bw"] = _mat(ss.Bw)
    return d


def _ss_from_json(d: dict, Ts=None) -> StateSpace:
    return StateSpace(np.array(d["A"]), np.array(d["B"]), np.array(d["C"]), np.array(d["D"]),
                      Ts, np.array(d["Bw"]) if "Bw" in d else None)


def params_from_json(d: dict) -> VehicleParams:
    missing = [k for k in PARAM_KEYS if k not in d]
    if missing:
        raise UsageError(f"missing vehicle parameter(s): {', '.join(missing)}")
    try:
        return VehicleParams(**{k: float(d[k]) for k in PARAM_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


def plant_document(params: VehicleParams, Ts: float) -> dict:
    ssc = build_lateral_ss(params)
    ssd = zoh_discretize(ssc, Ts)
    G = ss_to_tf(ssd)
    return {
        "format": PLANT_FORMAT,
        "params": {k: getattr(params, k) for k in PARAM_KEYS},
        "Ts": Ts,
        "continuous": _ss_to_json(ssc),
        "discrete": _ss_to_json(ssd),
        "tf": {"num": G.num.coeffs.tolist(), "den": G.den.coeffs.tolist()},
    }


def load_plant(path) -> tuple[StateSpace, DiscreteTF, float]:
    d = read_json(path)
    if d.get("format") != PLANT_FORMAT:
        raise UsageError(f"{path} is not a plant file")
    Ts = float(d["Ts"])
    G = DiscreteTF(Poly(d["tf"]["num"]), Poly(d["tf"]["den"]), Ts)
    return _ss_from_json(d["discrete"], Ts), G, Ts


# --- set files ----------------------------------------------------------------

def set_document(S: StabilizingSet, C: float, Ts: float) -> dict:
    slices = []
    for sl in S.slices:
        regs = []
        for s, r in zip(sl.strings, sl.regions):
            if S.kind is Kind.PID:
                regs.append({"string": list(s), "vertices": np.asarray(r).tolist()})
            else:
                regs.append({"string": list(s), "interval": [float(r[0]), float(r[1])]})
        slices.append({"gate": sl.gate, "zeros": list(sl.zeros), "regions": regs})
    return {
        "format": SET_FORMAT,
        "kind": S.kind.value,
        "gate": "K1" if S.kind is Kind.PI else "K3",
        "C": C,
        "Ts": Ts,
        "sigma": S.sigma,
        "sweep": {"lo": S.gate_range[0], "hi": S.gate_range[1], "steps": S.steps},
        "box": list(S.box),
        "empty": S.empty,
        "slices": slices,
    }


def load_set(path) -> tuple[StabilizingSet, float, float]:
    d = read_json(path)
    if d.get("format") != SET_FORMAT:
        raise UsageError(f"{path} is not a stabilizing-set file")
    kind = Kind(d["kind"])
    slices = []
    for s in d["slices"]:
        regs, strs = [], []
        for r in s["regions"]:
            strs.append(tuple(r["string"]))
            regs.append(np.array(r["vertices"], dtype=float) if kind is Kind.PID else tuple(r["interval"]))
        slices.append(StabRegionSlice(float(s["gate"]), regs, strs, tuple(s["zeros"])))
    sw = d["sweep"]
    S = StabilizingSet(kind, slices, (float(sw["lo"]), float(sw["hi"])), int(sw["steps"]),
                       tuple(d["box"]), int(d.get("sigma", 0)))
    return S, float(d["C"]), float(d["Ts"])


# --- clouds -------------------------------------------------------------------

def cloud_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLOUD_HEADER)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_cloud(path) -> list[tuple[float, ...]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}")
    if not rows or tuple(rows[0]) != CLOUD_HEADER:
        raise UsageError(f"{path}: expected CSV header {','.join(CLOUD_HEADER)}")
    try:
        return [tuple(float(v) for v in r) for r in rows[1:] if r]
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}")


def _cloud_rows(cloud) -> list[tuple[float, ...]]:
    return [(p.pid.K3, p.pid.K1, p.pid.K2, p.ipd.Kp, p.ipd.Kd, p.ipd.alpha) for p in cloud]


def controller_from_json(d: dict) -> tuple[IpdGains, FilterConfig]:
    missing = [k for k in ("Kp", "Kd", "alpha", "n", "C", "Ts") if k not in d]
    if missing:
        raise UsageError(f"controller file missing: {', '.join(missing)}")
    return (IpdGains(float(d["Kp"]), float(d["Kd"]), float(d["alpha"]), int(d["n"])),
            FilterConfig(float(d["C"]), float(d["Ts"])))


# --- subcommands --------------------------------------------------------------

def cmd_plant(args) -> int:
    params = params_from_json(read_json(args.params))
    if not args.ts > 0:
        raise UsageError("--ts must be positive")
    write_atomic(args.out, dump_json(plant_document(params, args.ts)))
    return 0


def cmd_stabset(args) -> int:
    _, G, Ts = load_plant(args.plant)
    if args.steps < 2:
        raise UsageError("--steps must be >= 2")
    if not args.gate_lo < args.gate_hi:
        raise UsageError("--gate-lo must be < --gate-hi")
    kind = Kind(args.kind)
    Gaug = augment_with_filter_poles(G, args.c, 1 if kind is Kind.PI else 2)
    S = stabilizing_set(Gaug, kind, args.gate_lo, args.gate_hi, args.steps, box=args.box)
    write_atomic(args.out, dump_json(set_document(S, args.c, Ts)))
    print(json.dumps({"slices": len(S.slices), "empty": S.empty, "sigma": S.sigma}))
    return 0


def cmd_transform(args) -> int:
    S, C, Ts = load_set(args.set)
    if S.kind is not Kind.PID:
        raise UsageError("transform needs a PID set (iPD2 mapping)")
    C = args.c if args.c is not None else C
    Ts = args.ts if args.ts is not None else Ts
    cloud, skipped = map_set(S, FilterConfig(C, Ts), args.grid, args.method, args.slice_stride)
    write_atomic(args.out, cloud_csv(_cloud_rows(cloud)))
    print(json.dumps({"points": len(cloud), "singular_skipped": skipped}))
    return 0


def _spec_from_args(args) -> PerformanceSpec:
    gm_db = None
    if args.gm_min is not None:
        gm_db = args.gm_min if args.gm_db else 20.0 * math.log10(args.gm_min)
    try:
        return PerformanceSpec(gm_min_db=gm_db, pm_min_deg=args.pm_min_deg, os_max_pct=args.os_max,
                               st_max_s=args.st_max, band=args.band)
    except DomainError:
        raise UsageError("filter needs at least one of --gm-min, --pm-min-deg, --os-max, --st-max")


def cmd_filter(args) -> int:
    spec = _spec_from_args(args)
    _, G, Ts = load_plant(args.plant)
    src = Path(args.input)
    if src.suffix == ".json":
        S, C, set_Ts = load_set(src)
        if S.kind is not Kind.PID:
            raise UsageError("filter works on PID sets / iPD2 clouds")
        f = FilterConfig(args.c if args.c is not None else C, Ts)
        cloud, _ = map_set(S, f, args.grid, slice_stride=args.slice_stride)
        rows = _cloud_rows(cloud)
    else:
        if args.c is None:
            raise UsageError("--c is required when filtering a cloud CSV")
        f = FilterConfig(args.c, Ts)
        rows = read_cloud(src)
    kept, report = [], []
    for row in rows:
        K3, K1, K2, Kp, Kd, alpha = row
        ev = evaluate(IpdGains(Kp, Kd, alpha, 2), G, f, spec)
        report.append({"K3": K3, "K1": K1, "K2": K2, "Kp": Kp, "Kd": Kd, "alpha": alpha, **ev.as_dict()})
        if ev.passed:
            kept.append(row)
    write_atomic(args.out, cloud_csv(kept))
    if args.report:
        write_atomic(args.report, dump_json({"spec": spec.__dict__, "candidates": len(rows),
                                             "kept": len(kept), "points": report}))
    print(json.dumps({"candidates": len(rows), "kept": len(kept)}))
    return 0


def cmd_simulate(args) -> int:
    ssd, G, Ts = load_plant(args.plant)
    gains, f = controller_from_json(read_json(args.controller))
    if not math.isclose(f.Ts, Ts, rel_tol=1e-12):
        raise UsageError(f"controller Ts={f.Ts} differs from plant Ts={Ts}")
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    try:
        ref = make_reference(args.ref, args.n, Ts, args.amplitude, 0.0, args.tau)
    except DomainError as exc:
        raise UsageError(str(exc))
    tr = simulate_tracking(ssd, gains, f, ref)
    tr.to_csv(args.out)
    metrics = {"band": args.band, "settled": False, "os_pct": None, "st_s": None,
               "diverged": tr.diverged, "samples": len(tr)}
    if not tr.diverged and args.amplitude != 0:
        try:
            # tracking metrics are defined relative to the reference amplitude
            m = step_metrics(type(tr)(tr.t, tr.ref, tr.y / args.amplitude, tr.e, tr.u, tr.Ts), args.band, skip=5)
            metrics.update(os_pct=m.overshoot, st_s=m.settling_time, settled=m.settled)
        except DomainError:
            pass
    if args.metrics:
        write_atomic(args.metrics, dump_json(metrics))
    print(json.dumps(metrics))
    if tr.diverged:
        raise Diverged(f"output exceeded divergence limit after {len(tr)} samples")
    return 0


def cmd_margins(args) -> int:
    _, G, Ts = load_plant(args.plant)
    gains, f = controller_from_json(read_json(args.controller))
    if not math.isclose(f.Ts, Ts, rel_tol=1e-12):
        raise UsageError(f"controller Ts={f.Ts} differs from plant Ts={Ts}")
    L = loop_tf(gains, G, f)
    m = margins(L)
    out = m.as_dict()
    out["gm_ratio"] = m.gain_margin
    text = dump_json(out)
    if args.out:
        write_atomic(args.out, text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfcforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plant", help="build and discretize the lateral plant")
    sp.add_argument("--params", required=True, help="JSON with m, vx, Iz, Cf, Cr, lf, lr")
    sp.add_argument("--ts", type=float, default=0.05)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plant)

    sp = sub.add_parser("stabset", help="stabilizing set on the filter-augmented plant")
    sp.add_argument("--plant", required=True)
    sp.add_argument("--kind", choices=["pi", "pid"], default="pid")
    sp.add_argument("--c", type=float, required=True, help="derivative filter constant C")
    sp.add_argument("--gate-lo", type=float, required=True)
    sp.add_argument("--gate-hi", type=float, required=True)
    sp.add_argument("--steps", type=int, default=400)
    sp.add_argument("--box", type=float, nargs=4, metavar=("K1LO", "K1HI", "K2LO", "K2HI"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_stabset)

    sp = sub.add_parser("transform", help="map a PID set to iPD2 gains (CSV cloud)")
    sp.add_argument("--set", required=True)
    sp.add_argument("--c", type=float)
    sp.add_argument("--ts", type=float)
    sp.add_argument("--method", choices=["nonlinear", "semilinear"], default="nonlinear")
    sp.add_argument("--grid", type=int, default=8, help="lattice subdivisions per triangle")
    sp.add_argument("--slice-stride", type=int, default=1, help="use every n-th gate slice")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("filter", help="keep candidates meeting margin/step bounds")
    sp.add_argument("--input", required=True, help="set JSON or cloud CSV")
    sp.add_argument("--plant", required=True)
    sp.add_argument("--c", type=float)
    sp.add_argument("--grid", type=int, default=8)
    sp.add_argument("--slice-stride", type=int, default=5)
    sp.add_argument("--gm-min", type=float, help="gain margin lower bound (ratio unless --gm-db)")
    sp.add_argument("--gm-db", action="store_true", help="read --gm-min in dB")
    sp.add_argument("--pm-min-deg", type=float)
    sp.add_argument("--os-max", type=float, help="overshoot upper bound, percent")
    sp.add_argument("--st-max", type=float, help="settling time upper bound, s")
    sp.add_argument("--band", type=float, default=0.02)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("simulate", help="time-domain iPD tracking run")
    sp.add_argument("--plant", required=True)
    sp.add_argument("--controller", required=True)
    sp.add_argument("--ref", choices=["step", "smoothstep"], default="step")
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=1200)
    sp.add_argument("--band", type=float, default=0.05)
    sp.add_argument("--out", required=True, help="trace CSV")
    sp.add_argument("--metrics")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("margins", help="gain/phase margins of the iPD loop")
    sp.add_argument("--plant", required=True)
    sp.add_argument("--controller", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_margins)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Diverged as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return 3
    except (UsageError, DomainError, TransformSingularity, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
