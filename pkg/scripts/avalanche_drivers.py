"""Periodic against stochastic insertion in the delay-avalanche model.

Runs paired seeds for both drivers on one G(N, M) graph and reports mean
avalanche lengths, the one-sided paired t-test and the exponential tail fit.
``--p-trans`` accepts several values for a scan; ``--leak`` adds relaxation
between insertions.
"""
import argparse
import time

from railsync import avalanche as ava


def f(x, fmt=".4g"):
    return "" if x is None else format(x, fmt)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p-trans", type=float, nargs="+", default=[ava.DEFAULT_P_TRANS])
    ap.add_argument("--leak", type=float, nargs="+", default=[0.0])
    ap.add_argument("--period", type=float, default=17)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--steps", type=int, default=50_000)
    ap.add_argument("--graph-seed", type=int, default=0)
    ap.add_argument("--master-seed", type=int, default=8)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    g = ava.random_graph(70, 240, args.graph_seed)
    print("p_trans,leak,periodic_mean,stochastic_mean,p_value,tail_r2_per,tail_r2_sto,secs")
    for pt in args.p_trans:
        for leak in args.leak:
            t0 = time.perf_counter()
            params = ava.AvaParams(p_trans=pt, period=args.period, leak=leak)
            try:
                cmp = ava.compare_drivers(g, params, args.seeds, args.steps,
                                          master_seed=args.master_seed, workers=args.threads)
            except ava.SupercriticalError as exc:
                print(f"{pt},{leak},supercritical ({exc}),,,,,")
                continue
            per = ava.avalanche_stats(cmp.periodic_runs)
            sto = ava.avalanche_stats(cmp.stochastic_runs)
            r2 = [s.tail_goodness if s else None for s in (per, sto)]
            print(f"{pt},{leak},{f(cmp.periodic_mean, '.5f')},{f(cmp.stochastic_mean, '.5f')},"
                  f"{f(cmp.paired_test())},{f(r2[0], '.3f')},{f(r2[1], '.3f')},"
                  f"{time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
