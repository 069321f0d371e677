"""
Fitting and scoring an IHF detector
===================================

"""

import numpy as np

from ihfood import (
    CorruptionSpec,
    PreprocessConfig,
    corrupt,
    fit_ihf,
    preprocess,
    score_mahalanobis,
    score_nn,
)
from ihfood.phantoms import make_phantoms

cfg = PreprocessConfig.mri()
train = [p.image for p in make_phantoms(30, seed=1, prefix="train", shape=(24, 24, 24), n_maps=0)]
test = [p.image for p in make_phantoms(5, seed=1, prefix="test", shape=(24, 24, 24), n_maps=0)]

# histograms (m = 150), PCA keeping 99.99% of the variance, then mean and inverse covariance
det = fit_ihf(train, cfg, m=150, v=0.9999)
print("PCA components kept:", det.k)

# ID test cases, then the same cases with a k-space spike artifact
for vol in test[:3]:
    pre = preprocess(vol, cfg)
    bad = corrupt(pre, CorruptionSpec("kspace_spikes", 5, seed=3))
    print(f"clean  mah {score_mahalanobis(det, pre, preprocessed=True):8.2f}"
          f"  nn {score_nn(det, pre, preprocessed=True):.4f}")
    print(f"spiked mah {score_mahalanobis(det, bad, preprocessed=True):8.2f}"
          f"  nn {score_nn(det, bad, preprocessed=True):.4f}")

# a training member sits at NN distance zero
print("member nn:", score_nn(det, train[0]))

# detectors are plain JSON
payload = det.to_dict()
print(sorted(payload)[:5], np.asarray(payload["mu_hat"]).shape)
