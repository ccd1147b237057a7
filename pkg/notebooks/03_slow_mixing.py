# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Slow mixing of Glauber dynamics
#
# Exact class weights on small tori, exact gap and conductance on a 3x3
# box, and hitting times of the odd phase from the even checkerboard on
# the 8x8 torus.

# %%
from fractions import Fraction

import numpy as np

from hardcore_taxi.dynamics import class_weights, escape_time_median, simulate, spectral_gap_and_conductance
from hardcore_taxi.hardcore import Boundary, Region

for side in (4, 6):
    r = Region(side, side, Boundary.TORUS)
    for lam in (1, 2, 4, 8):
        w = class_weights(r, lam)
        print(side, lam, f"{float(w['FaultLine']):.4f}", f"{float(w['EvenCross']):.4f}")

# %% [markdown]
# ## Gap and conductance
#
# Both shrink as the activity grows, and the gap stays inside
# [phi^2/2, 2 phi].

# %%
for lam in (Fraction(1, 2), Fraction(3, 2), Fraction(4)):
    rep = spectral_gap_and_conductance(Region(3, 3), lam)
    print(float(lam), f"gap={rep.gap:.5f}", f"phi={rep.phi:.5f}", rep.sandwich_ok)

# %% [markdown]
# ## Escape from the even phase

# %%
r8 = Region(8, 8, Boundary.TORUS)
for lam in (0.5, 2.0, 4.0):
    s = escape_time_median(r8, lam, seeds=10, max_steps=10**7)
    print(lam, s.median, s.timeouts)

# %%
trace = simulate(r8, 8.0, 10**6, seed=0, record_every=10**4)
print(np.array(trace.even_minus_odd)[:20])
print("longest run in one class:", trace.longest_class_run())
