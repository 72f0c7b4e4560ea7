"""Build a needlet frame on S^2 and look at what it does.

Run: python demos/frame_tour.py
"""

import numpy as np

from needlet_ustats.frame import build_frame, check_localization, kernel_lambda, psi_matrix
from needlet_ustats.harness import equatorial_center
from needlet_ustats.special import build_window

B = 2.0
b = build_window(B)

# squared dilates of the window add up to one on every multipole
ells = np.arange(1, 513)
print("max |sum_j b^2(l/B^j) - 1| over l <= 512:",
      np.max(np.abs(sum(b(ells / B**j) ** 2 for j in range(11)) - 1)))

rng = np.random.default_rng(0)
for j in (1, 2, 3, 4):
    fr = build_frame(B, j, 2)
    lo, hi = fr.multipole_range
    k = equatorial_center(fr)
    g = rng.standard_normal((2000, 3))
    g /= np.linalg.norm(g, axis=1)[:, None]
    # the frame reproduces its own kernel: sum_k psi_k(x) psi_k(y) = Lambda^(2)(x, y)
    lhs = np.sum(psi_matrix(fr, g[:1000]) * psi_matrix(fr, g[1000:]), axis=1)
    err = np.max(np.abs(lhs - kernel_lambda(fr, 2, g[:1000], g[1000:])))
    kappa = check_localization(fr, k, 3.0, g)
    print(f"j={j}: K={fr.K:5d} centres, band [{lo}, {hi}], reproduction error {err:.2e}, "
          f"localization constant (tau=3) {kappa:.1f}")
