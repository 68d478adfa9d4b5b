"""robustlab: a desk-scale laboratory for adversarial-training analysis.

Train small convolutional classifiers on a synthetic shape-vs-texture
dataset under standard, PGD-adversarial, and texture-randomized regimes,
then measure how the regimes differ: shape bias on cue-conflict images,
filter smoothness, noise blocking, concept dissection, diversity, and
channel-ablation importance.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, Tape, backward
from .dataset import (
    SHAPES, TEXTURES, COLORS, Sample, DatasetShard,
    gen_train, gen_cue_conflict, gen_texture_randomized,
)
from .shardio import write_shard, read_shard, export_png
from .models import Network, LayerSpec, build, save, load
from .training import TrainConfig, TrainLog, train
from .attack import AttackConfig, AttackResult, pgd, adv_accuracy
from .distortions import (
    DistortionConfig, EvalSubset, scramble, corrupt, binarize, silhouette,
    build_eval_subset,
)
from .analysis import (
    BiasReport, ChannelRef, ConceptProfile, AblationScore,
    shape_bias, filter_tv, match_filters, activation_tv, dissect,
    ablation_scores,
)

__all__ = [
    "Tensor", "Tape", "backward",
    "SHAPES", "TEXTURES", "COLORS", "Sample", "DatasetShard",
    "gen_train", "gen_cue_conflict", "gen_texture_randomized",
    "write_shard", "read_shard", "export_png",
    "Network", "LayerSpec", "build", "save", "load",
    "TrainConfig", "TrainLog", "train",
    "AttackConfig", "AttackResult", "pgd", "adv_accuracy",
    "DistortionConfig", "EvalSubset", "scramble", "corrupt", "binarize",
    "silhouette", "build_eval_subset",
    "BiasReport", "ChannelRef", "ConceptProfile", "AblationScore",
    "shape_bias", "filter_tv", "match_filters", "activation_tv", "dissect",
    "ablation_scores",
]
