"""Opcode-level three-tier signatures for Android app analysis."""

__version__ = "0.1.0"

from .analytics import (
    AssociationRecord,
    ClassSigSet,
    PermissionAnnotation,
    S,
    SimilarityReport,
    annotate_permissions,
    class_association,
    jaccard_similarity,
    top_similar,
)
from .apitable import ApiTable, PermissionMap, default_api_table, load_api_table, load_permission_map
from .callgraph import ReachabilitySet, compute_reachability
from .ingest import detect_file_type, load_app, parse_air_json, parse_smali_bundle
from .ir import AppIR, CallSite, ClassIR, MethodIR, PayloadFile
from .mutator import MutationSpec, mutate, variant_suite
from .signature import Signer, SignatureBundle, lev1_sign, lev2_sign, lev3_sign, payload_sign
from .store import SignatureStore
from .zeroday import ClusterRun, ZeroDayConfig, cluster, common_api_score, flag_suspicious
