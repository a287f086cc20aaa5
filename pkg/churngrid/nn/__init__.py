from .layers import Conv2D, Dropout, Flatten, FullyConnected, Layer, MaxPool, PReLU, conv2d, conv2d_backward, dropout, fully_connected, maxpool, maxpool_backward, prelu, prelu_backward, softmax, softmax_cross_entropy
from .model import INPUT_SHAPE, LayerSpec, Network, WiseNet, WISENET_LAYERS, WISENET_SHAPES
from .optimizer import SGDMomentum, sgd_momentum_step
from .checkpoint import Checkpoint, CheckpointMetadata, load_checkpoint, save_checkpoint
from .train import EpochRecord, TrainConfig, TrainingResult, train
from .gradient import GradientReport, gradient_check
