"""Run the small-pool augmentation experiment (32x32, 50 real images per class,
Model1/2/3 over five seeds) and print the per-regime median F1.

    python3 scripts/run_augmentation.py --out runs/augmentation [--workers 1]

Equivalent to ``apkgan experiment --config scripts/augmentation.yaml``.
Cells already completed under --out are reused.
"""
import argparse
import time

from apkgan.harness import AUGMENTATION_PRESET, ExperimentConfig, median_f1, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/augmentation")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    t0 = time.perf_counter()
    summary = run_experiment(ExperimentConfig(out_dir=args.out, **AUGMENTATION_PRESET), workers=args.workers)
    print(f"{summary.ran} run, {summary.skipped} reused, {len(summary.failures)} failed "
          f"({time.perf_counter() - t0:.0f}s)")
    medians = {r: median_f1(summary.rows, r) for r in ("model1", "model2", "model3")}
    for regime, m in medians.items():
        print(f"{regime}: median F1 {m:.3f}" if m is not None else f"{regime}: no rows")
    m1, m2, m3 = medians.values()
    if None not in (m1, m2, m3):
        print(f"Model3 >= Model1 - 0.02: {m3 >= m1 - 0.02}; Model3 > Model2: {m3 > m2}")
    return 1 if summary.all_failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
