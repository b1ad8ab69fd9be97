"""Regenerate the small images and instance files bundled in ``dsfm/data``.

Everything is derived from fixed seeds, so running this script again
reproduces the shipped files byte for byte.
"""

import json
from pathlib import Path

import numpy as np

from dsfm.core import DecomposableInstance, TablePotential
from dsfm.harness import ImageParams, image_to_instance, read_image, write_image, write_instance

DATA = Path(__file__).resolve().parents[1] / "src" / "dsfm" / "data"


def disc_image(H, W, seed, noise=0.25):
    """A bright disc on a dark background with Gaussian colour noise."""
    rng = np.random.default_rng(seed)
    rows, cols = np.mgrid[0:H, 0:W]
    inside = (rows - H / 2.0) ** 2 + (cols - W / 2.5) ** 2 < (min(H, W) / 3.0) ** 2
    fg, bg = np.array([0.9, 0.6, 0.2]), np.array([0.1, 0.3, 0.5])
    img = np.where(inside[:, :, None], fg, bg) + noise * rng.normal(size=(H, W, 3))
    return np.clip(img, 0.0, 1.0)


def main():
    DATA.mkdir(exist_ok=True)
    # every image goes through an 8-bit PPM round trip so the instance matches the file
    write_image(disc_image(12, 12, seed=1), DATA / "mincut_sample.ppm")
    img = read_image(DATA / "mincut_sample.ppm")
    write_instance(image_to_instance(img, ImageParams(lambda_pair=0.5)), DATA / "mincut_sample.dsfm")

    write_image(disc_image(8, 8, seed=2), DATA / "small_cliques.ppm")
    img = read_image(DATA / "small_cliques.ppm")
    params = ImageParams(lambda_pair=0.5, lambda_square=0.5)
    write_instance(image_to_instance(img, params), DATA / "small_cliques.dsfm")

    write_image(disc_image(10, 10, seed=3), DATA / "regions.ppm")
    img = read_image(DATA / "regions.ppm")
    params = ImageParams(lambda_pair=0.5, lambda_square=0.5, regions=3, region_size=(25, 40), unary_scale=20.0, seed=3)
    write_instance(image_to_instance(img, params), DATA / "regions.dsfm")

    write_image(disc_image(4, 4, seed=4, noise=0.15), DATA / "bench_tiny.ppm")
    img = read_image(DATA / "bench_tiny.ppm")
    write_instance(image_to_instance(img, ImageParams(lambda_pair=0.5, lambda_square=0.5, unary_scale=3.0)), DATA / "bench_tiny.dsfm")
    config = {"instance": "bench_tiny.dsfm", "solvers": ["ibfs", "ekd", "rcdm", "acdm", "ap"],
              "budgets": [5, 10, 100, 1000], "trials": 10, "seed": 0, "oracle": "specific"}
    (DATA / "bench_small.json").write_text(json.dumps(config, indent=2) + "\n")

    # f({0}) + f({1}) < f({}) + f({0, 1}): supermodular pair
    bad = TablePotential([0, 1], [0.0, 1.0, 1.0, 3.0])
    write_instance(DecomposableInstance(2, [bad]), DATA / "supermodular.dsfm")


if __name__ == "__main__":
    main()
