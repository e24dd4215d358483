"""Superpixel-based raster-to-SVG vectorization."""
