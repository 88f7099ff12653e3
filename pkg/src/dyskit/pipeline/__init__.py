"""Dataset handling, table transforms, cross-validation and synthetic corpora."""

from .cv import CvReport, loso_cv, loso_splits, metrics, weighted_f1
from .dataset import ManifestError, read_manifest, read_table, validate_manifest, write_table
from .synth import SynthSpec, SynthSpecError, synth_corpus, synth_feature_table
from .transform import (
    AssembledTable,
    AssemblyError,
    HealthyStats,
    ValidationRow,
    assemble,
    distance_transform,
    distance_value,
    healthy_stats,
    validate_features,
)
