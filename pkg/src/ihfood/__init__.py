"""Out-of-distribution detection for 3D scalar volumes with intensity histogram features."""
from .detectors import (
    IhfDetector,
    ScoreTable,
    VolumePredictor,
    entropy_score,
    fit_ihf,
    fit_ihf_embeddings,
    fit_volume_predictor,
    load_detector,
    save_detector,
    score_mahalanobis,
    score_nn,
    uncertainty_score,
    volume_score,
)
from .embedding import Embedding, PcaModel, fit_pca, histogram, pca_transform
from .errors import DataError, DimensionError, FitError, FormatError, ManifestError
from .harness import (
    ChallengeManifest,
    DetectorSpec,
    correlate_methods,
    load_manifest,
    report,
    run_challenge,
    sweep_hyperparameters,
)
from .metrics import MetricResult, auroc, fechner_correlation, fpr_at_tpr
from .synth import KINDS, CorruptionSpec, SynthConfig, corrupt
from .volgrid import (
    FixedWindow,
    PercentileWindow,
    PreprocessConfig,
    Volume,
    load_volume,
    preprocess,
    resample,
    save_volume,
)

__version__ = "0.1.0"
