"""The whole benchmark pipeline through the CLI, end to end in a temp dir.

Equivalent shell session:

    evcover generate Simple --nodes 12 --seed 4 --count 2 --out ds/
    evcover solve ds/manifest.json --method greedy-m   --out runs/
    evcover solve ds/manifest.json --method grasp-m    --out runs/
    evcover solve ds/manifest.json --method rh-even     --out runs/
    evcover report runs/rows.*.csv --out report.csv
    evcover export ds/instance_000.json --formulation mc --out mc.lp
"""

import os
import tempfile

from evcover.cli import main

with tempfile.TemporaryDirectory() as tmp:
    ds = os.path.join(tmp, "ds")
    runs = os.path.join(tmp, "runs")

    main(["generate", "Simple", "--nodes", "12", "--seed", "4",
          "--count", "2", "--out", ds])

    manifest = os.path.join(ds, "manifest.json")
    for method in ("greedy-m", "grasp-m", "rh-even"):
        main(["solve", manifest, "--method", method, "--out", runs,
              "--time-limit", "120"])

    print()
    main(["report",
          os.path.join(runs, "rows.greedy-m.csv"),
          os.path.join(runs, "rows.grasp-m.csv"),
          os.path.join(runs, "rows.rh-even.csv"),
          "--out", os.path.join(tmp, "report.csv")])

    print()
    main(["export", os.path.join(ds, "instance_000.json"),
          "--formulation", "mc", "--out", os.path.join(tmp, "mc.lp")])

    print("\nfiles produced:")
    for root, _, files in os.walk(tmp):
        for f in sorted(files):
            rel = os.path.relpath(os.path.join(root, f), tmp)
            print(f"  {rel}")
