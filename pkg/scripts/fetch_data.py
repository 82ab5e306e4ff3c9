#!/usr/bin/env python3
"""Materialize the two public application datasets as CSV files under data/.

Neither dataset is bundled with this repository:

* uis  -- drug-treatment study (575 complete records). Distributed with the
  R package ``quantreg`` as ``data(uis)``. Required columns: TREAT (0/1
  randomized assignment), FRAC (compliance fraction), TIME (days to relapse).
* jobs -- job-search training study (899 records). Distributed with the R
  package ``mediation`` as ``data(jobs)``. Required columns: treat, job_seek,
  depress2, econ_hard, sex, age.

With R available this script exports both via Rscript. Without R, run the two
one-liners below on any machine with the packages installed and copy the CSVs
into ./data (or the directory named by SEMIMEDIATION_DATA):

    Rscript -e 'library(quantreg); data(uis); write.csv(uis, "data/uis.csv", row.names=FALSE)'
    Rscript -e 'library(mediation); data(jobs); write.csv(jobs, "data/jobs.csv", row.names=FALSE)'
"""

import shutil
import subprocess
import sys
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

R_SNIPPETS = {
    "uis.csv": 'library(quantreg); data(uis); write.csv(uis, "{path}", row.names=FALSE)',
    "jobs.csv": 'library(mediation); data(jobs); write.csv(jobs, "{path}", row.names=FALSE)',
}


def main() -> int:
    DATA_DIR.mkdir(exist_ok=True)
    rscript = shutil.which("Rscript")
    if rscript is None:
        print("Rscript not found on PATH.", file=sys.stderr)
        print(__doc__, file=sys.stderr)
        return 1
    status = 0
    for name, snippet in R_SNIPPETS.items():
        target = DATA_DIR / name
        if target.exists():
            print(f"{target} already present, skipping")
            continue
        code = snippet.format(path=target)
        print(f"exporting {name} ...")
        proc = subprocess.run([rscript, "-e", code], capture_output=True, text=True)
        if proc.returncode != 0 or not target.exists():
            print(f"failed to export {name}:\n{proc.stderr}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    raise SystemExit(main())
