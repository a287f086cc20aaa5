from __future__ import annotations
import logging
import numpy as np

from dataclasses import dataclass
from typing import Dict, List, Tuple
from .layers import MaxPool, PReLU, softmax_cross_entropy
from .model import Network

log = logging.getLogger(__name__)

@dataclass(frozen=True)
class GradientReport:
  layer_errors: Dict[str, float]
  checked: int
  skipped: int = 0

  @property
  def max_relative_error(self) -> float:
    return max(self.layer_errors.values()) if self.layer_errors else 0.0

def relative_error(analytic: float, numeric: float) -> float:
  return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-5)

def kink_state(network: Network, start: int) -> List[np.ndarray]:
  """PReLU input signs and pooling argmaxes cached by the latest forward pass from `start`."""
  return [
    layer.inputs > 0 if isinstance(layer, PReLU) else layer.argmax.copy()
    for layer in network.layers[start:]
    if isinstance(layer, (PReLU, MaxPool))
  ]

def gradient_check(network: Network, inputs: np.ndarray, labels: np.ndarray, epsilon: float=1e-5, samples: int=200, seed: int=0) -> GradientReport:
  """
  Compares backpropagated gradients of the batch-mean loss with central differences.

  Up to `samples` entries of every parameter array are perturbed, with dropout off. Each
  perturbed forward pass restarts from the cached input of the perturbed layer. An entry whose
  two perturbed passes land on different sides of a PReLU kink or select different pooling maxima has no
  central difference to compare against; it is skipped and another entry is drawn.
  """
  labels = np.asarray(labels, dtype=np.int64)
  logits = network.forward(inputs=inputs, training=False)
  _, _, logit_gradient = softmax_cross_entropy(logits=logits, labels=labels)
  network.backward(logit_gradient=logit_gradient)
  analytic = [gradient.reshape(-1).copy() for gradient in network.gradients]
  layer_inputs = network.layer_inputs(inputs=inputs)
  generator = np.random.Generator(np.random.Philox(seed))

  def perturbed_loss(index: int) -> Tuple[float, List[np.ndarray]]:
    loss = softmax_cross_entropy(logits=network.forward(inputs=layer_inputs[index], training=False, start=index), labels=labels)[0]
    return loss, kink_state(network=network, start=index)

  layer_errors = {}
  checked = 0
  skipped = 0
  for (index, name, array), gradient in zip(network.parameters, analytic):
    flat = array.reshape(-1)
    worst = 0.0
    compared = 0
    for position in generator.permutation(flat.size):
      if compared == samples:
        break
      original = flat[position]
      flat[position] = original + epsilon
      plus, plus_kinks = perturbed_loss(index=index)
      flat[position] = original - epsilon
      minus, minus_kinks = perturbed_loss(index=index)
      flat[position] = original
      if not all(np.array_equal(p, m) for p, m in zip(plus_kinks, minus_kinks)):
        skipped += 1
        continue
      worst = max(worst, relative_error(analytic=gradient[position], numeric=(plus - minus) / (2 * epsilon)))
      compared += 1
    layer_errors[f'{index}:{network.specs[index].descriptor}:{name}'] = worst
    checked += compared
  report = GradientReport(layer_errors=layer_errors, checked=checked, skipped=skipped)
  log.debug('Gradient check over %d parameters (%d skipped at kinks): max relative error %.3g', checked, skipped, report.max_relative_error)
  return report
