"""Network components: branches, fusion, graph refinement, full model."""

from .unet import UNetBranch
from .transformer import TransformerBranch
from .fusion import (
    ConcatFusion,
    MutualModulationFusion,
    extract_neighborhood,
    global_to_local_fuse,
    local_to_global_fuse,
    modulated_fuse,
    modulation_weight_map,
    modulation_weights,
)
from .graph import (
    LandmarkTopology,
    TopologicalRefiner,
    build_adjacency,
    build_node_features,
    classify_nodes,
    gcn_layer,
    normalize_adjacency,
    refine_heatmaps,
)
from .model import HeatmapHead, LandmarkNet, ModelOutput, build_model

__all__ = [
    "ConcatFusion",
    "HeatmapHead",
    "LandmarkNet",
    "LandmarkTopology",
    "ModelOutput",
    "MutualModulationFusion",
    "TopologicalRefiner",
    "TransformerBranch",
    "UNetBranch",
    "build_adjacency",
    "build_model",
    "build_node_features",
    "classify_nodes",
    "extract_neighborhood",
    "gcn_layer",
    "global_to_local_fuse",
    "local_to_global_fuse",
    "modulated_fuse",
    "modulation_weight_map",
    "modulation_weights",
    "normalize_adjacency",
    "refine_heatmaps",
]
