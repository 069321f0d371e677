"""Seeded MRI-like phantoms for dataset-free benchmark runs.

A phantom is a smooth Gaussian random field with a bright ellipsoid insert
and voxel-level noise. Each phantom also comes with a few soft
"segmentation" probability maps around the insert so that the
prediction-map scorers can be exercised without a network.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .synth import rng_for
from .volgrid import CANONICAL_SPACING, PreprocessConfig, Volume, save_volume

__all__ = ["Phantom", "make_phantom", "make_phantoms", "write_phantom_dataset"]


@dataclass(frozen=True, eq=False)
class Phantom:
    case_id: str
    image: Volume
    prob_maps: tuple


def _ellipsoid_radius(shape, rng):
    center = [rng.uniform(0.4, 0.6) * n for n in shape]
    axes = [rng.uniform(0.2, 0.26) * n for n in shape]
    grid = np.indices(shape, dtype=np.float64)
    r2 = sum(((grid[a] - center[a]) / axes[a]) ** 2 for a in range(3))
    return np.sqrt(r2)


def make_phantom(case_id: str, seed: int = 0, shape=(32, 32, 32),
                 spacing=CANONICAL_SPACING, n_maps: int = 3) -> Phantom:
    rng = rng_for(seed, case_id)
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=max(shape) / 8, mode="wrap")
    field /= field.std() or 1.0
    radius = _ellipsoid_radius(shape, rng)
    insert = 1.0 / (1.0 + np.exp((radius - 1.0) * 12.0))
    contrast = rng.uniform(75.0, 85.0)
    image = 100.0 + 8.0 * field + contrast * insert + rng.normal(0.0, 12.0, shape)
    maps = []
    for _ in range(n_maps):
        jitter = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=2.0)
        maps.append(Volume(1.0 / (1.0 + np.exp(-((1.0 - radius) * 8.0 + 0.5 * jitter))), spacing))
    return Phantom(case_id, Volume(image, spacing), tuple(maps))


def make_phantoms(n: int, seed: int = 0, prefix: str = "case", **kwargs) -> list:
    return [make_phantom(f"{prefix}{i:03d}", seed, **kwargs) for i in range(n)]


def write_phantom_dataset(out_dir, n_train: int = 40, n_test: int = 20, seed: int = 0,
                          shape=(32, 32, 32), n_maps: int = 3,
                          kinds=("kspace_spikes", "anisotropy", "ghosting"),
                          severities=(1, 2, 3, 4, 5), n_null: int = 0) -> Path:
    """Write phantoms as rvol files plus a challenge manifest; returns the manifest path.

    ``n_null > 0`` adds a real OOD set named ``"null"`` drawn from the same
    generator as the ID cases, so no detector should separate it.
    """
    out = Path(out_dir)
    (out / "volumes").mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(exist_ok=True)

    def write(phantoms):
        entries = []
        for ph in phantoms:
            save_volume(ph.image, out / "volumes" / f"{ph.case_id}.json")
            maps = []
            for j, pm in enumerate(ph.prob_maps):
                name = f"maps/{ph.case_id}_p{j}.json"
                save_volume(pm, out / name)
                maps.append(name)
            entry = {"case_id": ph.case_id, "path": f"volumes/{ph.case_id}.json"}
            if maps:
                entry["prob_maps"] = maps
            entries.append(entry)
        return entries

    train = write(make_phantoms(n_train, seed, prefix="train", shape=shape, n_maps=n_maps))
    test = write(make_phantoms(n_test, seed, prefix="test", shape=shape, n_maps=n_maps))
    sets = [{"name": kind, "synthetic": {"kind": kind, "severities": list(severities), "seed": seed}}
            for kind in kinds]
    if n_null:
        null = write(make_phantoms(n_null, seed, prefix="null", shape=shape, n_maps=n_maps))
        sets.append({"name": "null", "entries": null})
    manifest = {
        "name": "phantom",
        "modality": PreprocessConfig.mri().to_dict(),
        "groups": {"synthetic": list(kinds)},
        "id_train": train,
        "id_test": test,
        "ood_sets": sets,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path
