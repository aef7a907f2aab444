"""Smoke test for the pyfraclab extension.

Build and stage the module next to this file, then run it:

    cargo build --release -p fraclab-py --features extension-module
    cp target/release/libpyfraclab.so python/pyfraclab.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyfraclab as fl


def main():
    square = fl.Domain("unit_square")
    assert square.name == "unit_square" and square.dim == 2
    assert math.isclose(square.john_constant, 2 * math.sqrt(2))
    assert square.inside([0.5, 0.5]) and not square.inside([1.5, 0.5])
    assert math.isclose(square.dist_boundary([0.25, 0.5]), 0.25)

    crit = fl.FracParams.critical(2, 0.5, 2.0, 0.5)
    assert crit.q == 4.0

    cells = 64
    xs = [(i + 0.5) / cells for i in range(cells)]
    values = [x for _ in range(cells) for x in xs]
    u = fl.GridFunction(square, cells, values)
    energy = fl.seminorm_full(u, crit)
    assert abs(energy / 1.4866047991236893 - 1) < 0.02, energy

    a, _ = fl.inf_shift(u, 2.0)
    assert abs(a - 0.5) < 1e-8

    ratios = []
    for fid, f in fl.GridFunction.fixtures(square, "random_smooth(4)", 32, seed=3, count=2):
        rep = fl.check("sobolev_poincare", f, crit, fid)
        assert rep["fixture"] == fid and rep["ratio"] > 0
        scaled = fl.check("sobolev_poincare", f.scaled(10.0), crit, fid)
        assert math.isclose(rep["ratio"], scaled["ratio"], rel_tol=1e-9)
        ratios.append(rep["ratio"])

    hardy = fl.FracParams.hardy(2, 0.5, 2.0)
    (fid, f), = fl.GridFunction.fixtures(square, "radial_bump", 32, localized=True)
    assert fl.check("hardy", f, hardy, fid)["ratio"] > 0

    w = fl.Whitney(fl.Domain("ball(1)"), 5)
    assert len(w) > 0
    assert all(diam_ok for diam_ok in (t >= math.sqrt(2) * 2.0 ** -lvl * (1 - 1e-12) for lvl, _, t in w.cubes()))
    assert w.chains(4.0)["rho"] <= 3

    cap = fl.capacity_disc(square, 16, [0.5, 0.5], 0.1, hardy, budget=500)
    assert cap["value_upper"] > 0

    seg = [[(i + 0.5) / 1e4, 0.0] for i in range(10_000)]
    upper, lower = fl.assouad_estimates(seg)
    assert 0.85 <= lower["value"] <= upper["value"] <= 1.15

    cond = fl.corollary_conditions(fl.Domain("plane_minus_segment"), fl.FracParams(0.3, 2.0))
    assert cond["a"] == "holds", cond["a"]

    try:
        fl.Domain("torus")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown domain accepted")

    print(f"pyfraclab ok: I(x1) = {energy:.4f}, sp ratios {[round(r, 4) for r in ratios]}, "
          f"segment dimension [{lower['value']:.3f}, {upper['value']:.3f}]")


if __name__ == "__main__":
    main()
