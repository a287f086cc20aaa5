from __future__ import annotations
import numpy as np

from typing import List, Optional
from ..error import ShapeError
from .model import Network

def sgd_momentum_step(parameter: np.ndarray, gradient: np.ndarray, velocity: np.ndarray, learning_rate: float, momentum: float, weight_decay: float=0.0):
  """In place: v <- momentum * v - learning_rate * (g + weight_decay * p); p <- p + v."""
  if parameter.shape != gradient.shape or parameter.shape != velocity.shape:
    raise ShapeError(operation='sgd_momentum_step', expected=parameter.shape, found=(gradient.shape, velocity.shape))
  velocity *= momentum
  velocity -= learning_rate * (gradient + weight_decay * parameter)
  parameter += velocity

class SGDMomentum:
  """Weight decay applies to weights only; biases and PReLU slopes are not decayed."""
  learning_rate: float
  momentum: float
  weight_decay: float
  velocities: Optional[List[np.ndarray]] = None

  def __init__(self, learning_rate: float, momentum: float, weight_decay: float=0.0):
    self.learning_rate = learning_rate
    self.momentum = momentum
    self.weight_decay = weight_decay

  def step(self, network: Network):
    parameters = network.parameters
    gradients = network.gradients
    if self.velocities is None:
      self.velocities = [np.zeros_like(array) for _, _, array in parameters]
    for (_, name, array), gradient, velocity in zip(parameters, gradients, self.velocities):
      sgd_momentum_step(
        parameter=array,
        gradient=gradient,
        velocity=velocity,
        learning_rate=self.learning_rate,
        momentum=self.momentum,
        weight_decay=self.weight_decay if name == 'weight' else 0.0
      )
