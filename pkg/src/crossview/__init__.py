"""Scene-centric joint parsing of cross-view videos.

View-centric proposals (boxes, appearance, action and attribute scores) from
several calibrated cameras are fused into one scene-centric parse graph
hierarchy: an identity mapping links view tracklets to scene entities, found
by Metropolis-Hastings structure search, and each scene entity's actions and
attributes are inferred exactly by belief propagation over time.
"""
from .energy import EnergyWeights, log_posterior
from .evidence import Evidence, ProposalRecord, initial_view_graphs, load_evidence, make_evidence
from .geometry import CameraModel, Homography, load_calibration
from .graphs import Hierarchy, IdentityMapping, build_hierarchy, hierarchy_records
from .inference import ParseConfig, infer_values, joint_parse, joint_parse_full, project_missing
from .metrics import EvalReport, evaluate
from .ontology import OntologyGraph, default_ontology, load_ontology
from .prior import PriorModel, estimate_prior
from .sampler import SamplerConfig, run_sampler
from .simulator import NoiseModel, SceneConfig, brute_force_map, generate_scene, render_proposals

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "EnergyWeights", "EvalReport", "Evidence", "Hierarchy", "Homography",
    "IdentityMapping", "NoiseModel", "OntologyGraph", "ParseConfig", "PriorModel", "ProposalRecord",
    "SamplerConfig", "SceneConfig", "brute_force_map", "build_hierarchy", "default_ontology",
    "estimate_prior", "evaluate", "generate_scene", "hierarchy_records", "infer_values",
    "initial_view_graphs", "joint_parse", "joint_parse_full", "load_calibration", "load_evidence",
    "load_ontology", "log_posterior", "make_evidence", "project_missing", "render_proposals",
    "run_sampler",
]
