"""
A phantom benchmark through the harness
=======================================

"""

import tempfile

from ihfood import DetectorSpec, correlate_methods, load_manifest, report, run_challenge
from ihfood.phantoms import write_phantom_dataset

# 40 training and 20 test phantoms, three synthetic OOD sets at five severities,
# plus a "null" set drawn from the training distribution
out = tempfile.mkdtemp(prefix="ihf_demo_")
path = write_phantom_dataset(out, n_train=40, n_test=20, seed=0, shape=(24, 24, 24), n_null=20)
manifest = load_manifest(path)
print("manifest:", path)

results = []
for method in ("ihf_mah", "ihf_nn"):
    results += run_challenge(manifest, DetectorSpec(method))

print(report(results, "markdown", groups=manifest.groups))

# sign-agreement of per-setup FPRs between the two distances
print(correlate_methods(results, "IHF-NN"))
