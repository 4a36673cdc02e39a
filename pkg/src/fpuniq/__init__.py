"""Uniqueness of users from binary behavioral attributes (browser extensions, web logins)."""

from .catalog import AttributeCatalog, AttributeDescriptor, CatalogError, Detection, Kind, load_catalog
from .cleaning import CleaningConfig, CleaningReport, clean
from .dataset import (
    AttributeFilter,
    BinaryDataset,
    DatasetError,
    UserFilter,
    build_dataset,
    mask_attributes,
    project,
    select,
)
from .fingerprint import (
    FingerprintPattern,
    FingerprintTemplate,
    StopCriteria,
    apply_pattern,
    general_template,
    restrict_template,
    targeted_pattern,
    template_uniqueness_curve,
)
from .metrics import (
    AnonymityHistogram,
    EntropyResult,
    SubsampleEstimate,
    anonymity_histogram,
    combination_uniqueness,
    cosine_similarity,
    pearson_correlation,
    shannon_entropy,
    subsample_uniqueness,
    uniqueness_by_min_detected,
)
from .records import BrowserFamily, RawRecord, read_records, write_records

__version__ = "0.1.0"
