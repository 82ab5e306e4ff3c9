#!/usr/bin/env python3
"""Run both dataset analyses end to end and emit reports plus forest plots.

Expects data/uis.csv and data/jobs.csv (see scripts/fetch_data.py). The uis
outcome TIME is rescaled by 1/100 for numerical conditioning, matching the
published analysis; signs and conclusions are unaffected.
"""

import sys
from pathlib import Path

from semimediation.cli import main as cli_main

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
OUT_DIR = Path(__file__).resolve().parent.parent / "results"

APPLICATIONS = [
    {
        "name": "uis",
        "args": [
            "--data", str(DATA_DIR / "uis.csv"),
            "--treatment", "TREAT", "--mediator", "FRAC", "--outcome", "TIME",
            "--interaction", "--method", "both", "--scale-outcome", "0.01",
        ],
    },
    {
        "name": "jobs",
        "args": [
            "--data", str(DATA_DIR / "jobs.csv"),
            "--treatment", "treat", "--mediator", "job_seek", "--outcome", "depress2",
            "--covariates", "econ_hard,sex,age", "--interaction", "--method", "both",
        ],
    },
]


def main() -> int:
    OUT_DIR.mkdir(exist_ok=True)
    status = 0
    for app in APPLICATIONS:
        report = OUT_DIR / f"{app['name']}_report.json"
        plot = OUT_DIR / f"{app['name']}_forest.svg"
        code = cli_main(["mediate", *app["args"], "--out", str(report), "--plot", str(plot)])
        print(f"{app['name']}: exit {code} -> {report}, {plot}")
        status = max(status, code)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
