"""Unrolled graph-network reconstruction driven by the mfeit physics sessions."""

from .data import MeshGeometry, ToyDataset, load_geometry
from .graph import g_pool, g_unpool, gcn_layer, normalized_adjacency
from .model import GuNet, GuNetConfig, MfNet, PhysicsContext, UnrollConfig
from .train import TrainResult, ablation, evaluate_errors, train

__version__ = "0.1.0"
