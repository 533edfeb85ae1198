"""Regenerate the shipped case bundles from the MATPOWER cases bundled with PYPOWER.

Not part of the library and not tested; needs ``pip install pypower``.

For each case:

* G, B are the real/imaginary parts of the bus admittance matrix (makeYbus),
  with every bus treated as a machine node.
* v*, delta* come from an AC optimal power flow (runopf).
* p_m is set to the electrical power p_e(v*, delta*) at every bus, i.e. the
  net injection (generation minus load) of the OPF solution. This makes the
  noise-free drift vanish at the equilibrium; load buses carry negative p_m.
* h and d are uniform per case (see CASE_DYNAMICS); MATPOWER has no dynamic
  data.
* Ratings are rateA/baseMVA where MATPOWER gives a finite rateA, with the
  values in MONITORED_RATINGS taking precedence for the monitored lines.

Usage::

    python tools/build_case_bundles.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from ropdf.case_model import EquilibriumPoint, LineId, PowerCase, write_case_bundle
from ropdf.stochastic_sim import electrical_power

# (h [s], d [p.u.], load scale) per case; h and d uniform over buses
CASE_DYNAMICS = {
    "case9": (0.7, 1.4, 1.0),
    "case30": (0.7, 1.4, 1.0),
    "case57": (0.7, 1.4, 1.0),
}

MONITORED_RATINGS = {
    "case9": {(4, 9): 1.0, (7, 8): 1.0},
    "case30": {(6, 7): 1.3, (6, 9): 0.65},
    "case57": {(35, 36): 16.33, (36, 40): 20.27},
}


def build(name, dynamics=None):
    from pypower import api
    from pypower.ext2int import ext2int
    from pypower.makeYbus import makeYbus

    h, d, load_scale = dynamics or CASE_DYNAMICS[name]
    ppc = getattr(api, name)()
    ppc["bus"][:, 2:4] *= load_scale
    res = api.runopf(ppc, api.ppoption(VERBOSE=0, OUT_ALL=0))
    if not res["success"]:
        raise RuntimeError(f"OPF failed for {name}")
    ri = ext2int(res)
    Y = makeYbus(ri["baseMVA"], ri["bus"], ri["branch"])[0].toarray()
    G, B = Y.real.copy(), Y.imag.copy()
    # makeYbus symmetry is exact up to summation order
    G, B = 0.5 * (G + G.T), 0.5 * (B + B.T)
    n = G.shape[0]
    v = ri["bus"][:, 7].copy()
    delta = np.deg2rad(ri["bus"][:, 8])
    delta -= delta[0]

    edges = sorted({LineId(i + 1, j + 1) for i, j in zip(*np.nonzero(np.triu(B != 0, 1)))})

    ratings = {}
    base = ri["baseMVA"]
    for br in ri["branch"]:
        if br[10] == 0:  # out of service
            continue
        rate = br[5]
        if 0 < rate < 9900:
            l = LineId(int(br[0]) + 1, int(br[1]) + 1)
            ratings[l] = ratings.get(l, 0.0) + rate / base
    for (i, j), r in MONITORED_RATINGS.get(name, {}).items():
        ratings[LineId(i, j)] = r

    p_m = electrical_power(v, delta, PowerCase(n, edges, G, B, np.ones(n), np.zeros(n), np.zeros(n)))[0]
    case = PowerCase(n, edges, G, B, np.full(n, h), np.full(n, d), p_m, 1.0, ratings, name)
    return case, EquilibriumPoint(v, delta)


def main(outdir):
    for name in CASE_DYNAMICS:
        case, eq = build(name)
        h, d, load_scale = CASE_DYNAMICS[name]
        header = (f"{name}: MATPOWER data via PYPOWER runopf/makeYbus; every bus is a machine.\n"
                  f"Loads scaled by {load_scale} before the OPF.\n"
                  f"p_m = p_e(v*, delta*) (OPF net injection); uniform h={h}, d={d}.\n"
                  "Regenerate with tools/build_case_bundles.py")
        write_case_bundle(case, eq, Path(outdir) / name, header)
        print(name, "n =", case.n, "edges =", len(case.edges), "ratings =", len(case.ratings))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src" / "ropdf" / "data")
