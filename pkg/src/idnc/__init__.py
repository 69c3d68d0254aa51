"""Instantly decodable network coding over broadcast erasure channels."""
__version__ = "0.1.0"

from ._kernels import BACKEND
from .channels import GecParams, GilbertElliottChannel, MemorylessChannel, ScriptedChannel
from .feedback import RecoveryState, StateFeedbackMatrix, apply_slot, classify_packet, run_initial_phase
from .graph import Clique, IdncGraph, Vertex, build_graph, is_clique, is_maximal
from .selection import layered_select, mwvs_select, select_for_policy
from .simulator import ChannelSpec, ExperimentConfig, run_block, run_experiment
from .weights import Policy

__all__ = [
    "BACKEND", "GecParams", "GilbertElliottChannel", "MemorylessChannel", "ScriptedChannel",
    "RecoveryState", "StateFeedbackMatrix", "apply_slot", "classify_packet", "run_initial_phase",
    "Clique", "IdncGraph", "Vertex", "build_graph", "is_clique", "is_maximal",
    "layered_select", "mwvs_select", "select_for_policy",
    "ChannelSpec", "ExperimentConfig", "run_block", "run_experiment", "Policy",
]
