"""
Reduced energy of a two-spike cluster
======================================

At a saddle ``V = 1 + (x^2 - y^2)/2`` an opposite-sign pair sits on the
attracting axis and a same-sign pair on the repelling one.  Both balance
the confining potential term against the pair interaction; the critical
separation solves ``c2 d / 2 = -xi'(d / eps) / eps``.
"""
import warnings

import numpy as np

from spikecluster.errors import NotAdmissible
from spikecluster.potential import make_saddle
from spikecluster.profile import compute_constants, get_profile
from spikecluster.reduced import family_for, find_critical_point, generate, maxmin_report, r_eps

warnings.simplefilter("ignore", NotAdmissible)
pr = get_profile(2, 3.0, cache_dir="runs/demo_cache")
rc = compute_constants(pr)
pot = make_saddle([1.0, -1.0])
beta = 0.5

for eps in (0.1, 0.07, 0.05, 0.035):
    for name, fam, a, r in (("(+,-)", family_for(1, 1, pot), [0.0], [r_eps(eps)]),
                            ("(+,+)", family_for(2, 0, pot), np.zeros((2, 1)), None)):
        res = find_critical_point(generate(fam, a, r, eps, beta), pr, pot, rc)
        P = res.config.points
        d = np.linalg.norm(P[1] - P[0])
        print(f"eps={eps:<6} {name}  d={d:.6f}  d/eps={d / eps:.4f}  J={res.value:+.6e}  "
              f"signature={res.signature}  in Gamma={res.in_gamma}")

# max-min statistics: J on the boundary K0 against c4 eps^(2 beta) / 4
print("\n  eps    level        K0 min       K0 max       max rel dev")
fam = family_for(1, 1, pot)
for eps in (0.1, 0.07, 0.05, 0.035):
    rep = maxmin_report(fam, pr, rc, eps, beta=0.1, n_grid=41)
    print(f"{eps:6}  {rep.level:.5e}  {rep.K0_min:.5e}  {rep.K0_max:.5e}  {rep.K0_max_rel_dev:.4f}")
