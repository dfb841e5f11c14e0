"""hiermotion: hierarchical semantic-graph conditioned motion generation.

Parse a motion description into a motion/action/specific graph, reason over it
with relational graph attention, generate motion latents with a three-level
coarse-to-fine diffusion stack, and refine results interactively through graph
edits.
"""

from .semgraph import (
    EditKind,
    EditOp,
    GraphEdge,
    GraphNode,
    Level,
    Relation,
    SemanticGraph,
    apply_edit,
    apply_edits,
    from_json,
    to_json,
    validate,
)
from .parser import NoVerbFound, parse_description
from .embed import HashedEncoder, NodeEmbeddings, encode_sentence, make_encoder, node_representations
from .graphreason import GraphReasoner, RelationalGATLayer, grad_check, reason
from .motionrep import (
    ActionSpec,
    FeatureLayout,
    MotionSequence,
    ToyMotionParams,
    describe_toy_motion,
    load_motion,
    make_dataset,
    save_motion,
    synthesize_toy_motion,
)
from .motionvae import LatentSeq, MotionVAE, VAEConfig, train_vae
from .diffusion import (
    NoiseSchedule,
    SamplerConfig,
    cfg_predict,
    ddim_step,
    q_sample,
    sample_hierarchical,
    schedule_linear,
    train_diffusion,
)
from .metrics import MetricReport, diversity, fid, mm_dist, mmodality, r_precision
from .evaluator import ContrastiveEvaluator, train_evaluator

__version__ = "0.1.0"
