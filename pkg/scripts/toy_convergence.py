"""Train the 1-D toy GANs (target Normal(4, 0.5)) for a few seeds and report
the generated means and the critic score gap.

    python3 scripts/toy_convergence.py [--variants wgan-gp,dcgan] [--seeds 5]
"""
import argparse
import time

from apkgan.gan import critic_gap_fraction, run_toy, toy_config

STEPS = {"wgan-gp": 2000, "dcgan": 4000}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--variants", default="wgan-gp,dcgan")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=None, help="generator steps (default per variant)")
    args = ap.parse_args()

    for variant in args.variants.split(","):
        steps = args.steps or STEPS[variant]
        t0 = time.perf_counter()
        hits = 0
        for seed in range(args.seeds):
            _, log_, mean = run_toy(toy_config(variant, seed), steps)
            ok = abs(mean - 4.0) <= 0.5
            hits += ok
            print(f"{variant} seed {seed}: mean {mean:.3f} {'ok' if ok else 'off'}; "
                  f"D(real) > D(fake) in {critic_gap_fraction(log_):.2f} of epochs")
        print(f"{variant}: {hits}/{args.seeds} within 0.5 of 4.0 ({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
