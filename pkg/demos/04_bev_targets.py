"""
Bird's-eye-view raster targets
==============================

The BEV window spans 100 m along x and 50 m along y on a 200 x 100 grid of
0.5 m cells. SD-map polylines are drawn as supercover lines, so every cell
a segment touches is marked and diagonal lines have no gaps. Lane segments
are filled as polygons between their two boundaries.
"""

import numpy as np

from mapeval.core import LaneSegment
from mapeval.raster import SdMap, lane_segment_mask, rasterize_sdmap, world_to_cell


def show(grid, rows, cols):
    for r in rows:
        print("".join("#" if grid[r, c] else "." for c in cols))
    print()


# A diagonal segment crossing grid corners marks the corner-sharing cells too.
diag = rasterize_sdmap(SdMap((([[0, 0, 0], [3, 2, 0]], 0),)))
r0, c0 = world_to_cell((0, 0, 0))
print("supercover of (0, 0) -> (3, 2): %d cells" % diag.count)
show(diag.grid, range(r0, r0 + 7), range(c0, c0 + 5))

# A 10 m x 3.5 m straight lane: 20 rows by 7 columns of cell centers.
x = np.linspace(0, 10, 11)
line = lambda y: np.c_[x, np.full(11, y), np.zeros(11)]
lane = LaneSegment("demo", line(0.0), line(1.75), line(-1.75))
mask = lane_segment_mask(lane)
print("lane mask: %d cells (degenerate polygon: %s)" % (mask.count, mask.degenerate))
show(mask.grid.T, range(c0 - 5, c0 + 5), range(r0 - 2, r0 + 22))
