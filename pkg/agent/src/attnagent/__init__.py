"""CNN-attention LOB agent: pre-training and deep RL protocol clients."""

__version__ = "0.1.0"

from .attention import dump_attention
from .data import DatasetInfo, WindowDataset, read_split
from .dqn import DqnConfig, DuelingQNet, greedy_action, train_dqn
from .model import AttnLob, AttnLobConfig, FcLob, build_model, load_checkpoint, save_checkpoint
from .ppo import ActorCritic, PpoConfig, train_ppo
from .pretrain import PretrainConfig, class_report, evaluate, majority_class_report, pretrain
from .protocol import EnvClient, Outcome, Transcript, replay_transcript
