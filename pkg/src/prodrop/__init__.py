"""Joint conversational discourse parsing and dropped pronoun recovery on numpy."""

from .config import TrainConfig
from .corpus import ConversationSnippet, Corpus, SyntheticSpec, generate_synthetic, load_corpus
from .metrics import cdp_metrics, dpr_metrics
from .model import JointModel
from .trainer import Checkpoint, interaction_sweep, train

__all__ = ["Checkpoint", "ConversationSnippet", "Corpus", "JointModel", "SyntheticSpec",
           "TrainConfig", "cdp_metrics", "dpr_metrics", "generate_synthetic",
           "interaction_sweep", "load_corpus", "train"]
__version__ = "0.1.0"
