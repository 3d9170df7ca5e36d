"""Gradient flow against the adjusted flow on the bounded quartic game.

Writes CSV and SVG files to ./demo_out/figure1 and prints where each run ends.
Run: python3 demos/toy2d_flows.py
"""

from lss.cli import run_preset

summary, code = run_preset("toy2d-figure1", "demo_out/figure1")
for cp in summary["critical_points"]:
    print(f"critical point {cp['z']}: {cp['classification']}")
for run in summary["runs"]:
    print(f"{run['label']:10s} from {[round(c, 2) for c in run['init']]} -> "
          f"{[round(c, 3) for c in run['terminal']]} ({run['classification']})")
print("expectations:", summary["expectations"])
