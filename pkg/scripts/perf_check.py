#!/usr/bin/env python3
"""Time and peak memory of one full-length run.

    python scripts/perf_check.py case1_spr_ff
"""

import argparse
import resource
import time

from faas_sim.config import apply_overrides, find_scenario, load
from faas_sim.controller import Simulation


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario", nargs="?", default="case1_spr_ff")
    p.add_argument("--seed", type=int)
    p.add_argument("--profile", action="store_true", help="print the top cProfile entries")
    args = p.parse_args(argv)

    cfg = apply_overrides(load(find_scenario(args.scenario)), seed=args.seed)
    t0 = time.perf_counter()
    sim = Simulation(cfg)
    built = time.perf_counter() - t0
    if args.profile:
        import cProfile
        import pstats
        prof = cProfile.Profile()
        summary = prof.runcall(sim.run)
        pstats.Stats(prof).sort_stats("cumulative").print_stats(15)
    else:
        summary = sim.run()
    wall = time.perf_counter() - t0
    rss_mb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024
    print(f"{args.scenario}: {summary.arrived_count} requests, {sim.engine.dispatched} events, "
          f"setup {built:.1f}s, total {wall:.1f}s, peak RSS {rss_mb:.0f} MB")


if __name__ == "__main__":
    main()
