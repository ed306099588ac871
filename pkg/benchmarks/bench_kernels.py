"""Time the compiled kernels against the numpy/Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is run on identical inputs by both backends; the script also
reports the largest output difference so a speed-up never hides a mismatch.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from dyvol import _fallback, rng

try:
    from dyvol import _kernels
except ImportError:
    _kernels = None

GAMMA, THETA, K = 5.0, 1e-4, 0.02


def euler_case(n_days=2000, substeps=100):
    g = rng.stream(1, 0)
    z1 = g.standard_normal(n_days * substeps)
    z2 = g.standard_normal(n_days * substeps)
    args = (THETA, n_days, substeps, GAMMA, THETA, K, 0.0, z1, z2)
    return "cir_euler_days 2000d x 100", args, lambda out: out[0]


def char_exp_case(n=20_000):
    p = np.linspace(0.0, 4000.0, n)
    return "char_exponent_array 20k", (p, 5.0, GAMMA, THETA, K, 0.0), lambda out: out


def invert_case(n_x=801, n_p=4096):
    p = np.linspace(0.0, 3000.0, n_p)
    w = np.full(n_p, p[1] - p[0])
    f = _fallback.char_exponent_array(p, 1.0, GAMMA, THETA, K, 0.0)
    phi = np.exp(f)
    x = np.linspace(-0.1, 0.1, n_x)
    return "fourier_invert 801x4096", (x, p, w, phi.real.copy(), phi.imag.copy()), lambda out: out


def uniform_case(n_x=801, n_p=4096):
    label, (x, p, w, re, im), pick = invert_case(n_x, n_p)
    args = (float(x[0]), float(x[1] - x[0]), n_x, p, w, re, im)
    return "fourier_invert_uniform 801x4096", args, pick


def bench(repeat):
    rows = []
    for make in (euler_case, char_exp_case, invert_case, uniform_case):
        label, args, pick = make()
        name = label.split()[0]
        fb = getattr(_fallback, name)
        t_py = min(timeit.repeat(lambda: fb(*args), number=1, repeat=repeat))
        row = {"kernel": label, "python_s": t_py}
        if _kernels is not None:
            cc = getattr(_kernels, name)
            t_c = min(timeit.repeat(lambda: cc(*args), number=1, repeat=repeat))
            a, b = np.asarray(pick(fb(*args))), np.asarray(pick(cc(*args)))
            row.update(compiled_s=t_c, speedup=t_py / t_c,
                       max_abs_diff=float(np.max(np.abs(a - b))), max_abs=float(np.max(np.abs(a))))
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    a = ap.parse_args(argv)
    rows = bench(a.repeat)
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':32s} {'python [s]':>11s} {'compiled [s]':>13s} {'speed-up':>9s} {'max |diff|':>11s}")
    for r in rows:
        print(f"{r['kernel']:32s} {r['python_s']:11.4f} {r.get('compiled_s', float('nan')):13.4f} "
              f"{r.get('speedup', float('nan')):9.1f} {r.get('max_abs_diff', float('nan')):11.2e}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
