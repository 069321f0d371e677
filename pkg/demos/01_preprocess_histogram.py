"""
From a raw volume to an intensity histogram
===========================================

"""

import numpy as np

from ihfood import PreprocessConfig, Volume, histogram, preprocess

# a toy MRI-like volume at 0.8 x 0.8 x 3 mm spacing
rng = np.random.default_rng(0)
raw = Volume(rng.gamma(4.0, 50.0, size=(60, 60, 20)), spacing=(0.8, 0.8, 3.0))

# MRI preset: resample to 1 x 1 x 1.5 mm, clip to the [1, 99] percentile window, scale to [0, 1]
cfg = PreprocessConfig.mri()
vol = preprocess(raw, cfg)
print("shape", raw.shape, "->", vol.shape, "spacing", vol.spacing)
print("range", float(vol.data.min()), float(vol.data.max()))

# the embedding is the probability mass in m equal bins over [0, 1]
e = histogram(vol, 150)
print("bins", e.values.size, "mass", e.values.sum())

# spatial layout is discarded, so shuffling voxels gives the same vector
shuffled = vol.with_data(rng.permutation(vol.data.ravel()).reshape(vol.shape))
print("shuffle invariant:", np.array_equal(histogram(shuffled, 150).values, e.values))

# CT uses a fixed HU window instead
print(PreprocessConfig.ct().to_dict())
