from __future__ import annotations
import logging
import numpy as np

from dataclasses import dataclass
from typing import List, Optional
from config import train_config
from ..base import Options
from ..dataset import ImageSet, balance_training, iterate_batches, mean_image
from ..error import DatasetError, TrainingDivergenceError, TrainingError
from ..metrics import ScoredSet, log_loss
from .checkpoint import Checkpoint, CheckpointMetadata
from .layers import softmax_cross_entropy
from .model import INIT_SCHEMES, WiseNet
from .optimizer import SGDMomentum

log = logging.getLogger(__name__)

class TrainConfig(Options):
  defaults = train_config
  section = 'train'

  learning_rate: float
  momentum: float
  weight_decay: float
  batch_size: int
  epochs: int
  dropout_rate: float
  prelu_slope: float
  init_scheme: str
  unit_scale: bool
  seed: int

  def validate(self):
    self.require('learning_rate', self.learning_rate > 0, 'must be positive')
    self.require('momentum', 0 <= self.momentum < 1, 'must be in [0, 1)')
    self.require('weight_decay', self.weight_decay >= 0, 'must be non-negative')
    self.require('batch_size', self.batch_size >= 1, 'must be at least 1')
    self.require('epochs', self.epochs >= 0, 'must be non-negative')
    self.require('dropout_rate', 0 <= self.dropout_rate < 1, 'must be in [0, 1)')
    self.require('init_scheme', self.init_scheme in INIT_SCHEMES, f'must be one of {INIT_SCHEMES}')

@dataclass(frozen=True)
class EpochRecord:
  epoch: int
  train_loss: float
  val_log_loss: float

@dataclass
class TrainingResult:
  checkpoint: Checkpoint
  history: List[EpochRecord]

def epoch_seed(seed: int, epoch: int, stream: int) -> int:
  return int(np.random.SeedSequence(entropy=seed, spawn_key=(epoch, stream)).generate_state(1, dtype=np.uint64)[0])

def validation_log_loss(checkpoint: Checkpoint, images: ImageSet) -> float:
  probabilities, _ = checkpoint.predict(images=images)
  if not np.all(np.isfinite(probabilities)):
    return float('nan')
  return log_loss(scored=ScoredSet(probabilities=probabilities, labels=images.labels))

def train(train_set: ImageSet, val_set: ImageSet, config: Optional[TrainConfig]=None) -> TrainingResult:
  """
  Seeded mini-batch SGD on the balanced training split.

  After every epoch the network is scored on the validation split with dropout off; the returned
  checkpoint is the epoch with the lowest validation log-loss, the earliest one on ties.
  """
  config = config if config is not None else TrainConfig()
  if config.epochs < 1:
    raise TrainingError('at least one epoch is needed to produce a checkpoint')
  if not len(train_set) or not len(val_set):
    raise DatasetError(f'training needs non-empty sets, found {len(train_set)} train and {len(val_set)} val images')
  balanced = balance_training(images=train_set, seed=config.seed)
  mean = mean_image(images=balanced)
  network = WiseNet(dropout_rate=config.dropout_rate, prelu_slope=config.prelu_slope)
  network.initialize(seed=config.seed, scheme=config.init_scheme, prelu_slope=config.prelu_slope)
  optimizer = SGDMomentum(learning_rate=config.learning_rate, momentum=config.momentum, weight_decay=config.weight_decay)
  candidate = Checkpoint(network=network, mean=mean, metadata=CheckpointMetadata({'unit_scale': config.unit_scale, 'dropout_rate': config.dropout_rate}))
  best: Optional[CheckpointMetadata] = None
  best_parameters: List[np.ndarray] = []
  history = []
  for epoch in range(1, config.epochs + 1):
    network.seed_dropout(seed=epoch_seed(seed=config.seed, epoch=epoch, stream=1))
    losses = []
    sizes = []
    for batch_index, batch in enumerate(iterate_batches(
      images=balanced,
      mean=mean,
      batch_size=config.batch_size,
      epoch_seed=epoch_seed(seed=config.seed, epoch=epoch, stream=0),
      unit_scale=config.unit_scale
    )):
      logits = network.forward(inputs=batch.inputs, training=True)
      loss, _, gradient = softmax_cross_entropy(logits=logits, labels=batch.labels)
      if not np.isfinite(loss):
        raise TrainingDivergenceError(epoch=epoch, batch=batch_index, loss=loss)
      network.backward(logit_gradient=gradient)
      optimizer.step(network=network)
      losses.append(loss)
      sizes.append(len(batch))
    train_loss = float(np.average(losses, weights=sizes))
    val_loss = validation_log_loss(checkpoint=candidate, images=val_set)
    if not np.isfinite(val_loss):
      raise TrainingDivergenceError(epoch=epoch, batch=-1, loss=val_loss)
    history.append(EpochRecord(epoch=epoch, train_loss=train_loss, val_log_loss=val_loss))
    log.info('Epoch %d: train loss %.6f, val log-loss %.6f', epoch, train_loss, val_loss)
    if best is None or val_loss < best.val_log_loss:
      best_parameters = [array.copy() for _, _, array in network.parameters]
      best = candidate.metadata.replace(seed=config.seed, epoch=epoch, val_log_loss=val_loss)
  selected = WiseNet(dropout_rate=config.dropout_rate, prelu_slope=config.prelu_slope)
  selected.set_parameters(arrays=best_parameters)
  log.info('Selected epoch %d with val log-loss %.6f', best.epoch, best.val_log_loss)
  return TrainingResult(checkpoint=Checkpoint(network=selected, mean=mean, metadata=best), history=history)
