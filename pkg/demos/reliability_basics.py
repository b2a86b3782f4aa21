"""
Reliability around a handful of training points
================================================

A knowledge base is just the training rows, min-max normalized. The score of
a query decays with its weighted distance to the closest row, and the weight
of each feature comes from its extrapolation diameter: the width over which
the score falls to 20%.
"""
import numpy as np

from laddr import (DiameterVector, KnowledgeBase, Mode, ReliabilityConfig, Schema, build_index, generate_map,
                   reliability, solve_covariance)
from laddr.reliability import write_map_csv, write_map_image

# one training point at 0.5 and a diameter of 0.36
index = build_index(KnowledgeBase.from_normalized([[0.5]], Schema.from_names(["x"])), solve_covariance([0.36]))
for x in (0.5, 0.59, 0.68, 0.86):
    print(f"R({x:.2f}) = {reliability([x], index).value:.4f}")

# two features with different diameters: the contours stretch along the wider one
kb = KnowledgeBase.from_normalized([[0.3, 0.3], [0.7, 0.6]], Schema.from_names(["a", "b"]))
cfg = ReliabilityConfig(DiameterVector([0.1, 0.4]), mode=Mode.INPUT_ONLY)
rmap = generate_map(kb, cfg, (0, 1), resolution=81, value_range=(0.0, 1.0))
print("share of the unit square scoring >= 0.5:", np.mean(rmap.values >= 0.5).round(3))

write_map_csv(rmap, "reliability_map.csv")
write_map_image(rmap, "reliability_map.ppm")
print("wrote reliability_map.csv and reliability_map.ppm")
