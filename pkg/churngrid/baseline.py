"""
Logistic-regression baseline over the flattened 1009-value feature vectors.

The objective is the mean negative log-likelihood plus l2_strength / (2 n) times the squared
weight norm (the intercept is not penalized), so l2_strength plays the role of an inverse C.
"""
from __future__ import annotations
import logging
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import List, Optional, Tuple
from scipy.special import expit, log_expit
from config import baseline_config
from .base import Options
from .encoder import FEATURE_COLUMNS
from .error import DatasetError, ShapeError, TrainingDivergenceError

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MIN_STEP = 1e-20

class BaselineConfig(Options):
  defaults = baseline_config
  section = 'baseline'

  l2_grid: List[float]
  tolerance: float
  max_iterations: int
  seed: int

  def validate(self):
    self.require('l2_grid', len(self.l2_grid) > 0 and all(v >= 0 for v in self.l2_grid), 'must be non-empty and non-negative')
    self.require('tolerance', self.tolerance > 0, 'must be positive')
    self.require('max_iterations', self.max_iterations >= 1, 'must be at least 1')

@dataclass(frozen=True)
class LinearModel:
  weights: np.ndarray
  intercept: float
  feature_mean: np.ndarray
  feature_scale: np.ndarray
  l2_strength: float = 0.0
  iterations: int = 0

  def standardize(self, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != len(self.weights):
      raise ShapeError(operation='LinearModel.standardize', expected=len(self.weights), found=features.shape)
    return (features - self.feature_mean) / self.feature_scale

  def folded(self) -> Tuple[np.ndarray, float]:
    """Weights and intercept acting on raw features."""
    weights = self.weights / self.feature_scale
    return weights, float(self.intercept - weights @ self.feature_mean)

def feature_arrays(frame: pd.DataFrame) -> Tuple[np.ndarray, np.ndarray]:
  """Features and labels from a flattened dataset frame."""
  if list(frame.columns) != FEATURE_COLUMNS + ['label']:
    raise ShapeError(operation='feature_arrays', expected=len(FEATURE_COLUMNS) + 1, found=len(frame.columns))
  return frame[FEATURE_COLUMNS].to_numpy(dtype=np.float64), frame['label'].to_numpy(dtype=np.int64)

def standardization(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  """Per-feature mean and scale; constant features get scale 1."""
  mean = features.mean(axis=0)
  scale = features.std(axis=0)
  return mean, np.where(scale > 0, scale, 1.0)

def objective(weights: np.ndarray, intercept: float, standardized: np.ndarray, labels: np.ndarray, l2_strength: float) -> Tuple[float, np.ndarray, float]:
  """Regularized loss and its gradients with respect to the weights and the intercept."""
  count = len(labels)
  scores = standardized @ weights + intercept
  loss = -np.mean(labels * log_expit(scores) + (1 - labels) * log_expit(-scores)) + l2_strength / (2 * count) * weights @ weights
  residual = expit(scores) - labels
  return float(loss), standardized.T @ residual / count + l2_strength / count * weights, float(residual.mean())

def train_logistic(features: np.ndarray, labels: np.ndarray, l2_strength: float, config: Optional[BaselineConfig]=None) -> LinearModel:
  """Gradient descent with Armijo backtracking until the gradient norm drops below the tolerance."""
  config = config if config is not None else BaselineConfig()
  features = np.asarray(features, dtype=np.float64)
  labels = np.asarray(labels, dtype=np.int64)
  if len(np.unique(labels)) != 2:
    raise DatasetError('logistic regression needs both classes')
  mean, scale = standardization(features=features)
  standardized = (features - mean) / scale
  weights = np.random.Generator(np.random.Philox(config.seed)).normal(0.0, 0.01, size=features.shape[1])
  intercept = 0.0
  loss, weight_gradient, intercept_gradient = objective(weights=weights, intercept=intercept, standardized=standardized, labels=labels, l2_strength=l2_strength)
  step = 1.0
  iteration = 0
  for iteration in range(1, config.max_iterations + 1):
    squared_norm = weight_gradient @ weight_gradient + intercept_gradient ** 2
    if np.sqrt(squared_norm) < config.tolerance:
      break
    step = min(step * 2, 1e6)
    while True:
      candidate_weights = weights - step * weight_gradient
      candidate_intercept = intercept - step * intercept_gradient
      candidate = objective(weights=candidate_weights, intercept=candidate_intercept, standardized=standardized, labels=labels, l2_strength=l2_strength)
      if np.isfinite(candidate[0]) and candidate[0] <= loss - ARMIJO * step * squared_norm:
        break
      step /= 2
      if step < MIN_STEP:
        break
    if not np.isfinite(candidate[0]):
      raise TrainingDivergenceError(epoch=0, batch=iteration, loss=candidate[0])
    if step < MIN_STEP:
      break
    weights, intercept = candidate_weights, candidate_intercept
    loss, weight_gradient, intercept_gradient = candidate
  log.debug('Logistic baseline (l2 %g): loss %.6f after %d iterations', l2_strength, loss, iteration)
  return LinearModel(
    weights=weights,
    intercept=intercept,
    feature_mean=mean,
    feature_scale=scale,
    l2_strength=l2_strength,
    iterations=iteration
  )

def predict_logistic(model: LinearModel, features: np.ndarray) -> np.ndarray:
  return expit(model.standardize(features=features) @ model.weights + model.intercept)

def validation_loss(model: LinearModel, features: np.ndarray, labels: np.ndarray) -> float:
  scores = model.standardize(features=features) @ model.weights + model.intercept
  return float(-np.mean(labels * log_expit(scores) + (1 - labels) * log_expit(-scores)))

def select_l2(train_features: np.ndarray, train_labels: np.ndarray, val_features: np.ndarray, val_labels: np.ndarray, config: Optional[BaselineConfig]=None) -> Tuple[LinearModel, List[float]]:
  """Trains one model per grid value; keeps the lowest validation log-loss, the earliest on ties."""
  config = config if config is not None else BaselineConfig()
  best = None
  losses = []
  for l2_strength in config.l2_grid:
    model = train_logistic(features=train_features, labels=train_labels, l2_strength=l2_strength, config=config)
    losses.append(validation_loss(model=model, features=val_features, labels=np.asarray(val_labels, dtype=np.int64)))
    log.info('Baseline l2 %g: validation log-loss %.6f', l2_strength, losses[-1])
    if best is None or losses[-1] < min(losses[:-1]):
      best = model
  log.info('Selected baseline l2 %g', best.l2_strength)
  return best, losses
