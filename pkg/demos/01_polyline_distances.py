"""
Polyline distances for lane matching
====================================

Lanes are matched to ground truth by two distances. The discrete Fréchet
distance respects point order, so a lane drawn backwards is far from its
twin. The Chamfer distance only looks at nearest neighbours and ignores
direction.
"""

import numpy as np

from mapeval.geometry import chamfer, discrete_frechet, resample_polyline

# A straight 10 m centerline sampled with 11 points.
x = np.linspace(0, 10, 11)
lane = np.c_[x, np.zeros(11), np.zeros(11)]

# Shift it sideways by 1.5 m: both distances equal the offset.
offset = lane + [0, 1.5, 0]
print("offset 1.5 m   frechet %.3f  chamfer %.3f" % (discrete_frechet(lane, offset), chamfer(lane, offset).symmetric))

# Reverse the point order: Chamfer does not notice, Fréchet does.
backwards = lane[::-1]
print("reversed       frechet %.3f  chamfer %.3f" % (discrete_frechet(lane, backwards), chamfer(lane, backwards).symmetric))

# Area curves come with arbitrary vertex counts; resampling to a fixed
# number of points equally spaced in arc length makes them comparable.
square = np.array([[0, 0, 0], [4, 0, 0], [4, 4, 0], [0, 4, 0], [0, 0, 0]], float)
dense = resample_polyline(square, 17)
steps = np.linalg.norm(np.diff(dense, axis=0), axis=1)
print("resampled square: %d points, step %.3f m (min %.3f, max %.3f)" % (len(dense), steps.mean(), steps.min(), steps.max()))
