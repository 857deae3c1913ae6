"""Risk-targeted data poisoning and reputation-weighted federated averaging.

Simulation toolkit: SVM margin peeling assigns per-sample risk ranks, a
permutation-importance attacker flips labels and swaps features on the
riskiest samples of compromised nodes, and a linear softmax classifier is
trained with plain federated averaging or with reputation-based aggregation.
"""

from repfl.dataset import Dataset, SyntheticSpec, generate_synthetic, load_csv, partition, train_test_split
from repfl.model import LinearModel, SvmSeparator, TrainConfig, accuracy, mean_loss, predict, sgd_step
from repfl.risk import RiskAnnotatedDataset, SvmConfig, assess_risk
from repfl.xai import ImportanceReport, extreme_features, permutation_importance
from repfl.attack import AttackPlan, flip_label, poison_federation, poison_node, swap_features
from repfl.fedrep import FedConfig, NodeState, RoundRecord, run_rounds

__all__ = [
    "AttackPlan",
    "Dataset",
    "FedConfig",
    "ImportanceReport",
    "LinearModel",
    "NodeState",
    "RiskAnnotatedDataset",
    "RoundRecord",
    "SvmConfig",
    "SvmSeparator",
    "SyntheticSpec",
    "TrainConfig",
    "accuracy",
    "assess_risk",
    "extreme_features",
    "flip_label",
    "generate_synthetic",
    "load_csv",
    "mean_loss",
    "partition",
    "permutation_importance",
    "poison_federation",
    "poison_node",
    "predict",
    "run_rounds",
    "sgd_step",
    "swap_features",
    "train_test_split",
]
