"""Peak clock-state population of the two-sideband scenario versus the
assumed pump linewidth and excited-state mixing rate."""
import argparse
from dataclasses import replace

import numpy as np

from groundpop.pumping import log_grid, scenario_experiment2, sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--linewidths", default="0,50e6,100e6,150e6,200e6,250e6")
    ap.add_argument("--mixing", default="0,1e8")
    ap.add_argument("--points", type=int, default=49)
    args = ap.parse_args(argv)

    grid = log_grid(1e-2, 1e4, args.points)
    print("linewidth_MHz  mixing_per_s  max_P|1,0>  at_uW/mm2")
    for lw in (float(x) for x in args.linewidths.split(",")):
        for kappa in (float(x) for x in args.mixing.split(",")):
            cfg, field = scenario_experiment2(laser_linewidth_hz=lw)
            c = sweep(replace(cfg, excited_mixing_rate=kappa), field, grid).column(2, 0)
            k = int(np.argmax(c))
            print(f"{lw / 1e6:13.0f}  {kappa:12.3g}  {c[k]:10.3f}  {grid[k]:9.3g}")


if __name__ == "__main__":
    main()
