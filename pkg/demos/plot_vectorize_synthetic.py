"""
Vectorizing a flat-colour image
===============================

The full pipeline splits the image into superpixels, fits a few paths to
each, adds paths where the residual is largest, then finetunes all paths
jointly.  A flat four-region image is exactly representable by filled
paths, so the result should be close to perfect.  Step counts are reduced
here so the demo runs in about half a minute.
"""

# %%
from pathlib import Path

from supervec.experiments import four_region_image
from supervec.metrics import evaluate
from supervec.optimize import PIPELINE_TAU, PipelineConfig, run_pipeline
from supervec.raster import RenderConfig, render, save_png
from supervec.svgio import to_svg

out = Path("demo_output")
out.mkdir(exist_ok=True)
image = four_region_image(64)
save_png(image, out / "four_regions.png")

# %%
# Run with a 32-path budget.  ``timings`` records the seconds spent per stage.
result = run_pipeline(image, 32, pipe=PipelineConfig(coarse_steps=500, refine_steps=100, finetune_steps=150))
print({k: round(v, 1) for k, v in result.timings.items()})
print(f"{len(result.paths.visible())} visible paths from {result.spmap.num_labels} superpixel(s)")

# %%
# Compare the rendering with the input and write the SVG.
rendered = render(result.paths, 64, 64, RenderConfig(smoothing_tau=PIPELINE_TAU))
save_png(rendered, out / "four_regions_vector.png")
print(evaluate(rendered, image).as_dict())
to_svg(result.paths, 64, 64).save(out / "four_regions.svg")
