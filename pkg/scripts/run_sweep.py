"""Average ILE against dataset size for the three learners, written as CSV.

    python3 scripts/run_sweep.py --out results/sweep.csv [--sizes 8 16 32 64] [--runs 5] [--jobs 1]

Prints the per-(method, size) means when done. The default settings take
roughly 40 minutes on one core, most of it in the Dirichlet-process sampler.
"""
import argparse
import sys

from mtirl.evaluation import ExperimentSpec, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/sweep.csv")
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--methods", nargs="+", default=["me-mtirl", "dpm-birl", "em-mlirl"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    spec = ExperimentSpec(dataset_sizes=tuple(args.sizes), runs_per_point=args.runs,
                          methods=tuple(args.methods), base_seed=args.seed)
    from pathlib import Path
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    rows = run_experiment(spec, args.out, jobs=args.jobs,
                          progress=lambda r: print(r["method"], r["size"], r["run"], r["status"],
                                                   file=sys.stderr))
    print(f"{'method':10s} {'N':>4s} {'ILE':>9s} {'std':>9s} {'clusters':>8s} {'acc':>5s}")
    for r in rows:
        if r["kind"] == "mean" and "ile" in r:
            print(f"{r['method']:10s} {r['size']:4d} {r['ile']:9.4f} {r['ile_std']:9.4f} "
                  f"{r['clusters']:8.2f} {r['accuracy']:5.2f}")


if __name__ == "__main__":
    main()
