"""Character spell correction with an n-gram masked attention layer and
dot-product gated multi-modal fusion."""

from .config import TrainConfig
from .data import ConfusionSet, SentencePair, generate_corpus, synth_vocab
from .evaluate import EvalReport, evaluate
from .fusion import ModalityResources
from .gradcheck import finite_difference_check
from .masking import NGramMode, build_mask_indices
from .model import SpellChecker, toggle_inference_masking
from .tensor import Tensor, backward, no_grad
from .train import AdamW, train
from .vocab import Vocab

__all__ = [
    "AdamW",
    "ConfusionSet",
    "EvalReport",
    "ModalityResources",
    "NGramMode",
    "SentencePair",
    "SpellChecker",
    "Tensor",
    "TrainConfig",
    "Vocab",
    "backward",
    "build_mask_indices",
    "evaluate",
    "finite_difference_check",
    "generate_corpus",
    "no_grad",
    "synth_vocab",
    "toggle_inference_masking",
    "train",
]
