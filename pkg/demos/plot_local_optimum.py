"""
Escaping a pixel-loss local optimum
===================================

A canvas is missing one red disc.  A new path starts as a red disc in the
wrong place.  Under the pixel loss alone, moving it costs more than
fading it out, so it vanishes.  Guiding it with the DPW loss toward the
known missing path lets it travel to the right place.
"""

# %%
from pathlib import Path

from supervec.experiments import local_optimum_experiment, local_optimum_scene
from supervec.raster import render, save_png

out = Path("demo_output")
out.mkdir(exist_ok=True)

canvas, missing, init = local_optimum_scene()
save_png(render(canvas + missing, 64, 64), out / "local_target.png")
save_png(render(canvas + init, 64, 64), out / "local_start.png")

# %%
# Run both branches from the same start.  Snapshots of the new path are
# saved every 100 steps.
snaps = []
rep = local_optimum_experiment(snapshot=lambda branch, step, paths: snaps.append((branch, step, paths)))
for branch, step, paths in snaps:
    if step % 100 == 0:
        save_png(render(canvas + paths, 64, 64), out / f"local_{branch}_{step:04d}.png")

# %%
# The pixel-only path no longer changes any pixel by more than 1/255, while
# the guided path overlaps the missing disc.
print(f"pixel-only visible area ratio {rep.area_ratio_l2:.3f}")
print(f"pixel-only IoU with target    {rep.iou_l2:.3f}")
print(f"guided IoU with target        {rep.iou_dpw:.3f}")
