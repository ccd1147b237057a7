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
# # Fault lines and crosses
#
# Every independent set of a box or torus has exactly one of: a fault
# line, an even cross, an odd cross.  Here we classify everything on small
# regions, look at a few witnesses and count the classes.

# %%
from collections import Counter

from hardcore_taxi.hardcore import Boundary, Configuration, Region, checkerboard, enumerate_configurations
from hardcore_taxi.topology import classify, find_first_fault, shift_across_fault, taxi_normalize_fault


def show(c):
    print(c.to_text())


# %%
for name in ("grid:3x3", "grid:4x4", "grid:5x5", "torus:4x4"):
    r = Region.parse(name)
    print(name, Counter(classify(c).kind.value for c in enumerate_configurations(r)))

# %% [markdown]
# ## A fault and its shift
#
# Three particles leave room for a vertical fault. Shifting the side away
# from vertex 0 by one step frees the sites listed at the end.

# %%
c = Configuration.from_text("""
o...
....
..o.
o...
""")
show(c)
w = find_first_fault(c)
print(w.to_json()["coords"], "length", w.length, "alternations", w.alternations)
print(taxi_normalize_fault(w).to_json()["coords"])
res = shift_across_fault(c, w)
show(res.configuration)
print("free between the sides:", sorted(res.addable))

# %%
t = Region(4, 4, Boundary.TORUS)
print(classify(checkerboard(t, 0)).to_json())
print(classify(checkerboard(t, 1)).kind)
