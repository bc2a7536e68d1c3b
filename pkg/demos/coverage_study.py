"""A reduced coverage study across the three simulation settings.

Run with ``python demos/coverage_study.py [reps]`` (default 200 replications
per cell). Set ``RANKEFFECT_THREADS`` to use several worker processes.
"""
import os
import sys

from rankeffect.simulation import SimulationSetting, run_cell, run_oracle_cell

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
threads = int(os.environ.get("RANKEFFECT_THREADS", "1"))

for setting in (1, 2, 3):
    for error in ("normal", "t1", "t3"):
        cell = SimulationSetting(setting, error=error, reps=reps)
        rep = run_cell(cell, threads=threads)
        print(f"setting {cell.label}  ({rep.wall_time:.1f}s)")
        for row in rep.rows:
            print(f"  {row['method']:<9} coverage {row['coverage']:.3f}  "
                  f"length {row['mean_length']:8.3f}  excluded {row['exclusions']}")
        if error != "t1":
            orc = run_oracle_cell(cell, threads=threads)
            for row in orc.rows:
                print(f"  {row['method']:<16} length {row['mean_length']:.3f}")
