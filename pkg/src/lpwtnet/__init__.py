"""Statistical channel fingerprints: synthesis, degradation and LPWTNet restoration."""

from .channel import ArrayGeometry, ClusterConfig, PowerAngularSpectrum
from .degradation import NONUNIFORM, REGION, UNIFORM, DegradationSpec, degrade, make_mask
from .evaluation import MetricsReport, evaluate, mse, nmse
from .network import LPWTNet, ModelConfig, build_model
from .scf import Dataset, GeneratorConfig, GridSpec, generate_dataset
from .training import TrainConfig, Trainer, lr_at, train

__version__ = "0.1.0"
