"""
Batched layers in double precision.

Image tensors are (batch, channel, row, slice); vectors are (batch, unit). Each layer caches what
its backward pass needs from the latest forward call, and backward accumulates nothing: it
overwrites `grads`.
"""
from __future__ import annotations
import numpy as np

from typing import Dict, Optional, Tuple
from ..error import ShapeError, TrainingError

def window_count(length: int, kernel: int, stride: int, ceil_mode: bool=False) -> int:
  """In ceil mode a trailing partial window is kept only if it starts inside the input."""
  if kernel > length:
    return 0
  span = length - kernel
  if not ceil_mode:
    return span // stride + 1
  count = -(-span // stride) + 1
  return count - 1 if stride * (count - 1) >= length else count

def strided(extent: int, offset: int, stride: int) -> slice:
  return slice(offset, offset + stride * (extent - 1) + 1, stride)

def conv2d(inputs: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int=1) -> np.ndarray:
  """Valid-mode cross-correlation; kernels are (out, in, kernel_height, kernel_width)."""
  count, channels, height, width = inputs.shape
  outputs, kernel_channels, kernel_height, kernel_width = kernels.shape
  out_height = window_count(length=height, kernel=kernel_height, stride=stride)
  out_width = window_count(length=width, kernel=kernel_width, stride=stride)
  if kernel_channels != channels or bias.shape != (outputs,) or not out_height or not out_width:
    raise ShapeError(operation='conv2d', expected=(channels, f'>={kernel_height}', f'>={kernel_width}'), found=inputs.shape[1:])
  result = np.zeros((count, out_height, out_width, outputs), dtype=np.float64)
  for ky in range(kernel_height):
    for kx in range(kernel_width):
      patch = inputs[:, :, strided(out_height, ky, stride), strided(out_width, kx, stride)]
      result += np.tensordot(patch, kernels[:, :, ky, kx], axes=([1], [1]))
  result += bias
  return np.ascontiguousarray(result.transpose(0, 3, 1, 2))

def conv2d_backward(inputs: np.ndarray, kernels: np.ndarray, output_gradient: np.ndarray, stride: int=1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
  """Returns (input gradient, kernel gradient, bias gradient)."""
  _, _, kernel_height, kernel_width = kernels.shape
  _, _, out_height, out_width = output_gradient.shape
  gradient = output_gradient.transpose(0, 2, 3, 1)
  input_gradient = np.zeros_like(inputs, dtype=np.float64)
  kernel_gradient = np.zeros_like(kernels, dtype=np.float64)
  for ky in range(kernel_height):
    for kx in range(kernel_width):
      rows, columns = strided(out_height, ky, stride), strided(out_width, kx, stride)
      kernel_gradient[:, :, ky, kx] = np.tensordot(gradient, inputs[:, :, rows, columns], axes=([0, 1, 2], [0, 2, 3]))
      input_gradient[:, :, rows, columns] += np.tensordot(gradient, kernels[:, :, ky, kx], axes=([3], [0])).transpose(0, 3, 1, 2)
  return input_gradient, kernel_gradient, output_gradient.sum(axis=(0, 2, 3))

def maxpool(inputs: np.ndarray, kernel_height: int, kernel_width: int, stride: int=1, ceil_mode: bool=False) -> Tuple[np.ndarray, np.ndarray]:
  """
  Returns (outputs, argmax) where argmax is the flat in-window offset of each maximum.

  In ceil mode the last window may run past the input; it is truncated at the boundary.
  Ties go to the smallest offset.
  """
  count, channels, height, width = inputs.shape
  out_height = window_count(length=height, kernel=kernel_height, stride=stride, ceil_mode=ceil_mode)
  out_width = window_count(length=width, kernel=kernel_width, stride=stride, ceil_mode=ceil_mode)
  if not out_height or not out_width:
    raise ShapeError(operation='maxpool', expected=(f'>={kernel_height}', f'>={kernel_width}'), found=inputs.shape[2:])
  padded_height = stride * (out_height - 1) + kernel_height
  padded_width = stride * (out_width - 1) + kernel_width
  padded = np.full((count, channels, max(height, padded_height), max(width, padded_width)), -np.inf)
  padded[:, :, :height, :width] = inputs
  windows = np.stack([
    padded[:, :, strided(out_height, ky, stride), strided(out_width, kx, stride)]
    for ky in range(kernel_height)
    for kx in range(kernel_width)
  ])
  argmax = windows.argmax(axis=0)
  return np.take_along_axis(windows, argmax[np.newaxis], axis=0)[0], argmax

def maxpool_backward(input_shape: Tuple[int, ...], argmax: np.ndarray, output_gradient: np.ndarray, kernel_height: int, kernel_width: int, stride: int=1) -> np.ndarray:
  count, channels, height, width = input_shape
  _, _, out_height, out_width = output_gradient.shape
  padded = np.zeros((count, channels, max(height, stride * (out_height - 1) + kernel_height), max(width, stride * (out_width - 1) + kernel_width)))
  for offset in range(kernel_height * kernel_width):
    ky, kx = divmod(offset, kernel_width)
    padded[:, :, strided(out_height, ky, stride), strided(out_width, kx, stride)] += np.where(argmax == offset, output_gradient, 0.0)
  return padded[:, :, :height, :width]

def prelu(inputs: np.ndarray, slope: float) -> np.ndarray:
  return np.where(inputs > 0, inputs, slope * inputs)

def prelu_backward(inputs: np.ndarray, slope: float, output_gradient: np.ndarray) -> Tuple[np.ndarray, float]:
  positive = inputs > 0
  return np.where(positive, output_gradient, slope * output_gradient), float(np.sum(np.where(positive, 0.0, inputs) * output_gradient))

def fully_connected(inputs: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
  """weights are (out, in)."""
  if inputs.shape[-1] != weights.shape[1] or bias.shape != (weights.shape[0],):
    raise ShapeError(operation='fully_connected', expected=weights.shape[1], found=inputs.shape[-1])
  return inputs @ weights.T + bias

def dropout(inputs: np.ndarray, rate: float, training: bool, generator: Optional[np.random.Generator]=None) -> Tuple[np.ndarray, np.ndarray]:
  """Inverted dropout; returns (outputs, scale mask). Inference is the identity."""
  if not training or rate == 0:
    return inputs, np.ones_like(inputs)
  mask = (generator.random(inputs.shape) >= rate) / (1 - rate)
  return inputs * mask, mask

def softmax(logits: np.ndarray) -> np.ndarray:
  shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
  return shifted / shifted.sum(axis=-1, keepdims=True)

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
  """Batch-mean loss, probabilities, and the logit gradient (probs - onehot) / batch."""
  labels = np.asarray(labels, dtype=np.int64)
  shifted = logits - logits.max(axis=-1, keepdims=True)
  log_probabilities = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
  probabilities = np.exp(log_probabilities)
  rows = np.arange(len(labels))
  loss = -float(log_probabilities[rows, labels].mean())
  gradient = probabilities.copy()
  gradient[rows, labels] -= 1
  return loss, probabilities, gradient / len(labels)

class Layer:
  params: Dict[str, np.ndarray]
  grads: Dict[str, np.ndarray]

  def __init__(self):
    self.params = {}
    self.grads = {}

  @property
  def descriptor(self) -> str:
    raise NotImplementedError()

  def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    return input_shape

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    raise NotImplementedError()

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    raise NotImplementedError()

  def fan_in(self) -> int:
    return 0

class Conv2D(Layer):
  channels: int
  filters: int
  kernel_height: int
  kernel_width: int
  stride: int

  def __init__(self, channels: int, filters: int, kernel_height: int, kernel_width: int, stride: int=1):
    super().__init__()
    self.channels = channels
    self.filters = filters
    self.kernel_height = kernel_height
    self.kernel_width = kernel_width
    self.stride = stride
    self.params = {
      'weight': np.zeros((filters, channels, kernel_height, kernel_width)),
      'bias': np.zeros(filters),
    }

  @property
  def descriptor(self) -> str:
    return f'conv {self.filters} {self.kernel_height} {self.kernel_width} {self.stride}'

  def fan_in(self) -> int:
    return self.channels * self.kernel_height * self.kernel_width

  def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    channels, height, width = input_shape
    if channels != self.channels:
      raise ShapeError(operation=self.descriptor, expected=self.channels, found=channels)
    return (
      self.filters,
      window_count(length=height, kernel=self.kernel_height, stride=self.stride),
      window_count(length=width, kernel=self.kernel_width, stride=self.stride)
    )

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    self.inputs = inputs
    return conv2d(inputs=inputs, kernels=self.params['weight'], bias=self.params['bias'], stride=self.stride)

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    input_gradient, self.grads['weight'], self.grads['bias'] = conv2d_backward(
      inputs=self.inputs,
      kernels=self.params['weight'],
      output_gradient=output_gradient,
      stride=self.stride
    )
    return input_gradient

class PReLU(Layer):
  """One slope shared by every unit of the layer."""
  def __init__(self, slope: float=0.25):
    super().__init__()
    self.params = {'slope': np.array([slope], dtype=np.float64)}

  @property
  def descriptor(self) -> str:
    return 'prelu'

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    self.inputs = inputs
    return prelu(inputs=inputs, slope=self.params['slope'][0])

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    input_gradient, slope_gradient = prelu_backward(inputs=self.inputs, slope=self.params['slope'][0], output_gradient=output_gradient)
    self.grads['slope'] = np.array([slope_gradient])
    return input_gradient

class MaxPool(Layer):
  kernel_height: int
  kernel_width: int
  stride: int
  ceil_mode: bool

  def __init__(self, kernel_height: int, kernel_width: int, stride: int=1, ceil_mode: bool=False):
    super().__init__()
    self.kernel_height = kernel_height
    self.kernel_width = kernel_width
    self.stride = stride
    self.ceil_mode = ceil_mode

  @property
  def descriptor(self) -> str:
    return f'maxpool {self.kernel_height} {self.kernel_width} {self.stride} {"ceil" if self.ceil_mode else "floor"}'

  def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    channels, height, width = input_shape
    return (
      channels,
      window_count(length=height, kernel=self.kernel_height, stride=self.stride, ceil_mode=self.ceil_mode),
      window_count(length=width, kernel=self.kernel_width, stride=self.stride, ceil_mode=self.ceil_mode)
    )

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    self.input_shape = inputs.shape
    outputs, self.argmax = maxpool(inputs=inputs, kernel_height=self.kernel_height, kernel_width=self.kernel_width, stride=self.stride, ceil_mode=self.ceil_mode)
    return outputs

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    return maxpool_backward(
      input_shape=self.input_shape,
      argmax=self.argmax,
      output_gradient=output_gradient,
      kernel_height=self.kernel_height,
      kernel_width=self.kernel_width,
      stride=self.stride
    )

class Flatten(Layer):
  @property
  def descriptor(self) -> str:
    return 'flatten'

  def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    return (int(np.prod(input_shape)),)

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    self.input_shape = inputs.shape
    return inputs.reshape(len(inputs), -1)

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    return output_gradient.reshape(self.input_shape)

class FullyConnected(Layer):
  inputs_count: int
  units: int

  def __init__(self, inputs_count: int, units: int):
    super().__init__()
    self.inputs_count = inputs_count
    self.units = units
    self.params = {
      'weight': np.zeros((units, inputs_count)),
      'bias': np.zeros(units),
    }

  @property
  def descriptor(self) -> str:
    return f'fc {self.units}'

  def fan_in(self) -> int:
    return self.inputs_count

  def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    if input_shape != (self.inputs_count,):
      raise ShapeError(operation=self.descriptor, expected=(self.inputs_count,), found=input_shape)
    return (self.units,)

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    self.inputs = inputs
    return fully_connected(inputs=inputs, weights=self.params['weight'], bias=self.params['bias'])

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    self.grads['weight'] = output_gradient.T @ self.inputs
    self.grads['bias'] = output_gradient.sum(axis=0)
    return output_gradient @ self.params['weight']

class Dropout(Layer):
  rate: float
  generator: Optional[np.random.Generator] = None

  def __init__(self, rate: float=0.5):
    super().__init__()
    self.rate = rate

  @property
  def descriptor(self) -> str:
    return 'dropout'

  def forward(self, inputs: np.ndarray, training: bool=False) -> np.ndarray:
    if training and self.rate > 0 and self.generator is None:
      raise TrainingError('dropout has no seeded generator; call seed_dropout before a training pass')
    outputs, self.mask = dropout(inputs=inputs, rate=self.rate, training=training, generator=self.generator)
    return outputs

  def backward(self, output_gradient: np.ndarray) -> np.ndarray:
    return output_gradient * self.mask
