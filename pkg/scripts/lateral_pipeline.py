"""Run the full CLI pipeline on the reference vehicle into an output directory.

    python3 scripts/lateral_pipeline.py [outdir]
"""

import json
import sys
from dataclasses import asdict
from pathlib import Path

from mfcforge.cli import main
from mfcforge.lateralplant import REFERENCE_VEHICLE


def run(*argv):
    print("$ mfcforge", " ".join(argv))
    rc = main(list(argv))
    if rc:
        sys.exit(rc)


def pipeline(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    params = out / "params.json"
    params.write_text(json.dumps(asdict(REFERENCE_VEHICLE), indent=1))
    p = str(out / "plant.json")
    s = str(out / "set.json")
    run("plant", "--params", str(params), "--ts", "0.05", "--out", p)
    run("stabset", "--plant", p, "--c", "4", "--gate-lo", "-0.05", "--gate-hi", "0.35",
        "--steps", "400", "--out", s)
    run("transform", "--set", s, "--grid", "8", "--slice-stride", "5", "--out", str(out / "cloud.csv"))
    run("filter", "--input", s, "--plant", p, "--grid", "12", "--slice-stride", "2",
        "--gm-min", "1.5", "--pm-min-deg", "30", "--out", str(out / "subset1.csv"))
    run("filter", "--input", s, "--plant", p, "--grid", "12", "--slice-stride", "2",
        "--os-max", "40", "--st-max", "15", "--out", str(out / "subset2.csv"),
        "--report", str(out / "subset2_report.json"))
    ctl = out / "controller1.json"
    ctl.write_text(json.dumps({"Kp": 0.00093, "Kd": 0.043, "alpha": 315.7, "n": 2, "C": 4, "Ts": 0.05}))
    run("simulate", "--plant", p, "--controller", str(ctl), "--out", str(out / "trace1.csv"),
        "--metrics", str(out / "metrics1.json"))
    run("margins", "--plant", p, "--controller", str(ctl))


if __name__ == "__main__":
    pipeline(Path(sys.argv[1] if len(sys.argv) > 1 else "runs/lateral"))
