"""
From dot annotations to a density-map training target
=====================================================

A counting model never sees "the answer is 7" directly.  Each annotated
object center is splatted as a small Gaussian bump into a density map
whose total mass equals the object count; the model regresses that map,
and integrating its output recovers the count.
"""

import numpy as np

from textcount.dataset import build_density_target
from textcount.overlay import save_overlay

# Invent a 256 x 256 scene with 7 object centers, two of them hugging the
# border where a naive Gaussian blur would leak mass off the canvas.
rng = np.random.default_rng(0)
points = np.array([
    [30.0, 40.0], [90.0, 60.0], [160.0, 50.0],
    [70.0, 150.0], [180.0, 190.0],
    [2.0, 128.0],          # 2 px from the left edge
    [253.5, 10.0],         # almost in the top-right corner
])

# Build the target at the same resolution as the (hypothetical) image.
# Each bump is renormalized over its in-bounds support, so border dots
# still contribute exactly 1 unit of mass each.
target = build_density_target(points, src_size=(256, 256), out_size=(256, 256))
print(f"dots placed:   {len(points)}")
print(f"density mass:  {target.data.sum():.10f}")   # == 7 to float precision
print(f"peak value:    {target.data.max():.4f}")

# During training the map is regressed at the model's output resolution,
# so the same call can re-grid the dots; mass is conserved either way.
small = build_density_target(points, src_size=(256, 256), out_size=(96, 96))
print(f"mass at 96x96: {small.data.sum():.10f}")

# Render the map over a flat gray canvas to eyeball where the mass sits.
canvas = np.full((256, 256, 3), 120, dtype=np.uint8)
save_overlay("density_target_demo.png", canvas, target)
print("wrote density_target_demo.png")
