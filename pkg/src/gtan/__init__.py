"""Answer ranking for community Q&A threads: a per-question word graph, a
gated GNN and three attention steps, trained with a small numpy autodiff
engine."""
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Answer, Question, Vocabulary, read_corpus, write_corpus
from .evaluation import MetricReport, evaluate, mrr, ndcg_at_k, p_at_1, rank_answers
from .model import AblationConfig, ModelConfig
from .ranker import GTAN
from .synthetic import generate_synthetic
from .trainer import TrainConfig, TrainReport, train

__version__ = "0.1.0"
