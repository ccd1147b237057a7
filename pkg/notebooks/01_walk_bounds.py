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
# # Taxi walk counts and the connective constant
#
# Exact counts up to length 40, the two upper bounds (c_n^{1/n} and the
# prefix/suffix matrix) and the bridge lower bound, then the activity
# thresholds they imply.

# %%
import numpy as np

from hardcore_taxi.bounds import alm_upper, bridge_lower, fekete_upper, lambda_box, lambda_torus, peierls_cutoff
from hardcore_taxi.walks import count_taxi_walks

table = count_taxi_walks(40)
for n in (10, 20, 30, 40):
    print(n, table.c[n], table.b[n])

# %% [markdown]
# Ratios c_{n+1}/c_n settle slowly; the parity of n still shows at length 40.

# %%
c = np.array(table.c[1:], dtype=float)
print(np.round(c[1:] / c[:-1], 4)[-10:])

# %%
up = [fekete_upper(table, n) for n in range(1, 41)]
low = [bridge_lower(table, n) for n in range(1, 41)]
print(f"{low[-1]:.5f} <= mu <= {min(up):.5f}")

alm = alm_upper(10, 30)
print(f"matrix bound A(10,30): {alm:.6f}  vs  c_30^(1/30) = {fekete_upper(table, 30):.6f}")

# %% [markdown]
# ## Thresholds
#
# Plug the best upper bound into the torus and box thresholds, and find
# the first contour length past which the Peierls sum is below 1/3.

# %%
for mu in (alm, 1.5883):
    print(f"mu={mu:.4f}  lambda_torus={lambda_torus(mu):.4f}  lambda_box={lambda_box(mu):.4f}")

for lam in (6.0, 8.0, 20.0, 100.0):
    print(lam, peierls_cutoff(lam, 1.5884), peierls_cutoff(lam, 1.5884, start="m/4"))
