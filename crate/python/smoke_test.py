#!/usr/bin/env python3
"""Smoke test for the driftlab_py extension module.

Builds a small cylinder, solves the double-well problem, checks the
spectral and splitting structure, a capacitor, the reduced profile, and
the logarithmic cut-off. Run after building the extension:

    cargo build -p driftlab-py --release
    python3 python/smoke_test.py
"""

import json
import math
import os
import shutil
import sys
import tempfile


def import_extension():
    here = os.path.dirname(os.path.abspath(__file__))
    root = os.path.dirname(here)
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libdriftlab_py.so", "driftlab_py.so", "libdriftlab_py.dylib")
    ]
    for candidate in candidates:
        if os.path.exists(candidate):
            stage = tempfile.mkdtemp(prefix="driftlab-py-")
            target = os.path.join(stage, "driftlab_py.so")
            shutil.copy(candidate, target)
            sys.path.insert(0, stage)
            import driftlab_py

            return driftlab_py
    raise SystemExit(
        "driftlab_py extension not found; run `cargo build -p driftlab-py --release` first"
    )


def check(label, ok, detail=""):
    status = "ok" if ok else "FAIL"
    print(f"  {label}: {status} {detail}")
    if not ok:
        raise SystemExit(f"smoke test failed at: {label}")


def main():
    dl = import_extension()
    print("driftlab_py smoke test")

    config = """
family = cylinder
n = 2
T = 6
h = 0.05
fiber_lengths = 0.8
density = zero
"""
    space = dl.Space(config)
    check("space nodes", space.num_nodes == 241 * 16, f"({space.num_nodes})")
    vol = space.weighted_volume()
    check("weighted volume", abs(vol - 12.0 * 0.8) < 0.05, f"({vol:.4f})")

    values, residual, iterations, converged = dl.solve(space, "allen-cahn", "tanh")
    check("solve converged", converged, f"(residual {residual:.2e}, {iterations} iters)")
    check("residual", dl.residual_max(space, values, "allen-cahn") < 1e-9)

    sup = 0.0
    for node in range(0, space.num_nodes, 7):
        t = space.coords(node)[0]
        sup = max(sup, abs(values[node] - math.tanh(t / math.sqrt(2.0))))
    check("matches heteroclinic", sup < 5e-4, f"(sup {sup:.2e})")

    lam, eigenfield, positivity, _stable = dl.stability(space, values, "allen-cahn")
    check("lambda_min near zero", abs(lam) < 1e-3, f"({lam:.2e})")
    check("ground state positive", positivity == "StrictlyPositive")
    check("eigenfield length", len(eigenfield) == space.num_nodes)

    report = json.loads(dl.split_report(space, values, "allen-cahn"))
    failures = [v["name"] for v in report["verdicts"] if not v["pass"]]
    check("splitting verdicts", not failures, f"(failed: {failures})" if failures else "")
    check("k estimate", abs(report["k_mean"]) < 1e-6, f"({report['k_mean']:.2e})")

    cap = dl.capacity(space, 1.0, 3.0)
    check("capacitor energy", 0.5 < cap < 1.5, f"({cap:.4f})")

    verdict = json.loads(dl.parabolicity_growth(space, 5.0))
    check("cylinder parabolic by growth", verdict["verdict"] == "Parabolic")

    t, y, yp, ode_residual, monotone = dl.profile(
        "allen-cahn", 0.0, -math.tanh(6 / math.sqrt(2)), math.tanh(6 / math.sqrt(2)), 6.0, 0.01
    )
    check("profile monotone", monotone, f"(residual {ode_residual:.2e})")
    check("profile nodes", len(t) == len(y) == len(yp) == 1201)

    check("cutoff inner knot", dl.log_cutoff(16.0, 4.0) == 1.0)
    check("cutoff outer knot", dl.log_cutoff(16.0, 16.0) == 0.0)
    mid = 16.0 ** 0.75
    want = 4.0 / (mid * mid * math.log(16.0) ** 2)
    check("cutoff gradient", abs(dl.log_cutoff_grad_sq(16.0, mid) - want) < 1e-15)

    fit = json.loads(dl.growth_fit([(2.0**k, 3.7) for k in range(1, 9)]))
    check("growth fit flags constants", fit["small_o_flag"])

    print("smoke test passed")


if __name__ == "__main__":
    main()
