"""Monte-Carlo F=1 reconstruction error versus relative spectral noise."""
import argparse
import csv
import warnings
from pathlib import Path

import numpy as np

from groundpop.forward import PopulationDistribution, ProbeConfig, add_noise, synthesize
from groundpop.lineshape import VoigtParams
from groundpop.reconstruction import InconsistentDataWarning, fit_xi, invert_f1
from groundpop.structure import rb87_d1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="0.001,0.003,0.01,0.03")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="noise_study.csv")
    args = ap.parse_args(argv)

    scheme = rb87_d1()
    axis = np.linspace(-5.5e9, 6.5e9, 2500)
    voigt = VoigtParams(103e6, 202e6)
    rng = np.random.default_rng(args.seed)
    rows = []
    for level in (float(x) for x in args.levels.split(",")):
        errs = []
        for _ in range(args.trials):
            P = PopulationDistribution(rng.dirichlet(np.ones(8)), scheme)
            spectra = [
                add_noise(synthesize(P, ProbeConfig(q, axis, 1e10, voigt)), level, seed=int(rng.integers(2**31)))
                for q in (1, -1)
            ]
            fit = fit_xi(spectra, scheme)
            xi = fit.xi()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", InconsistentDataWarning)
                f1 = invert_f1(xi[(2, 2, 1)], xi[(2, 4, 1)], xi[(2, 2, -1)])
            errs.append(np.abs(f1 - P.manifold(2)).max())
        med, p90 = float(np.median(errs)), float(np.percentile(errs, 90))
        rows.append([level, med, p90])
        print(f"noise {level:<6g} median {med:.4f}  90th pct {p90:.4f}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["relative_noise", "median_max_abs_f1_error", "p90_max_abs_f1_error"])
        w.writerows(rows)
    print(f"wrote {Path(args.out).resolve()}")


if __name__ == "__main__":
    main()
