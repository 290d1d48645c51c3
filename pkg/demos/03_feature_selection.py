"""Mutual-information selectors on two duplicated features and one independent feature."""
import numpy as np

from fbtrca.featsel import METHODS, MiTable, rank_features

rng = np.random.default_rng(0)
y = np.repeat([0, 1], 200)
strong = y + 0.6 * rng.standard_normal(400)
weak = y + 1.2 * rng.standard_normal(400)
X = np.column_stack([strong, strong, weak])    # column 1 duplicates column 0

mi = MiTable(X, y)
print("relevance I(f; y):", mi.relevance.round(3))
print("redundancy I(f_i; f_j):\n", mi.redundancy.round(3))
for m in METHODS:
    r = rank_features(mi, m, 2)
    print(f"{m:7s} top-2 {r.order}")
print("MAXREL takes both copies; redundancy-aware methods swap the copy for the weak feature.")
