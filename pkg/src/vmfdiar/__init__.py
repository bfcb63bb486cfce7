"""Clustering-based speaker diarization on hyperspherical frame-wise
embeddings: vMF mixture modeling with EM, spherical k-Means, geodesic
overlap targets, activity post-processing, DER scoring, and a synthetic
meeting simulator."""

from .clustering import (
    KMeansResult,
    PosteriorMatrix,
    VmfMixtureParams,
    e_step,
    fit_vmfmm,
    fuse_components,
    init_mixture,
    kmeans_pp_init,
    m_step,
    spherical_kmeans,
)
from .errors import DataError, DegenerateAnchorsError, DegenerateMidpointError, NumericalError
from .geodesic import FrameKind, SpeakerAnchorPair, geodesic_loss, geodesic_target, optimal_alpha
from .geometry import (
    FrameEmbeddingTrack,
    VadMask,
    all_voiced_mask,
    normalize_track,
    read_fwe,
    write_fwe,
    write_fwe_text,
)
from .pipeline import (
    ActivityMatrix,
    DiarizeConfig,
    OverlapRegions,
    activity_to_annotation,
    diarize,
    energy_vad,
    labels_to_activity,
    morph_filter,
    refine_with_overlap,
    threshold_posteriors,
)
from .scoring import (
    DerReport,
    ReferenceAnnotation,
    compute_der,
    parse_rttm,
    reference_overlap_regions,
    write_rttm,
)
from .synthdata import MeetingConfig, SimulationTruth, simulate_meeting
from .vmf import (
    VmfComponent,
    estimate_kappa,
    log_norm_const,
    log_pdf,
    sample_uniform_sphere,
    sample_vmf,
)

__version__ = "0.1.0"
