from __future__ import annotations
import numpy as np

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
from ..error import ArchitectureMismatchError, ConfigurationError, ShapeError
from ..events import ROW_COUNT, WINDOW_SLICES
from ..encoder import CHANNEL_COUNT
from .layers import Conv2D, Dropout, Flatten, FullyConnected, Layer, MaxPool, PReLU, softmax

INPUT_SHAPE = (CHANNEL_COUNT, ROW_COUNT, WINDOW_SLICES)
INIT_SCHEMES = ['he_gaussian', 'xavier_gaussian']

@dataclass(frozen=True)
class LayerSpec:
  kind: str
  units: int = 0
  kernel_height: int = 0
  kernel_width: int = 0
  stride: int = 1
  ceil_mode: bool = False

  @property
  def descriptor(self) -> str:
    if self.kind == 'conv':
      return f'conv {self.units} {self.kernel_height} {self.kernel_width} {self.stride}'
    if self.kind == 'maxpool':
      return f'maxpool {self.kernel_height} {self.kernel_width} {self.stride} {"ceil" if self.ceil_mode else "floor"}'
    if self.kind == 'fc':
      return f'fc {self.units}'
    return self.kind

  @classmethod
  def from_descriptor(cls, descriptor: str) -> LayerSpec:
    kind, *values = descriptor.split()
    try:
      if kind == 'conv':
        units, kernel_height, kernel_width, stride = (int(v) for v in values)
        return cls(kind=kind, units=units, kernel_height=kernel_height, kernel_width=kernel_width, stride=stride)
      if kind == 'maxpool':
        kernel_height, kernel_width, stride = (int(v) for v in values[:3])
        if values[3:] not in [['ceil'], ['floor']]:
          raise ValueError(f'pooling mode {values[3:]}')
        return cls(kind=kind, kernel_height=kernel_height, kernel_width=kernel_width, stride=stride, ceil_mode=values[3] == 'ceil')
      if kind == 'fc':
        units, = (int(v) for v in values)
        return cls(kind=kind, units=units)
      if kind in ['prelu', 'flatten', 'dropout'] and not values:
        return cls(kind=kind)
    except ValueError as e:
      raise ArchitectureMismatchError(expected='a layer descriptor', found=f'{descriptor!r} ({e})')
    raise ArchitectureMismatchError(expected='a layer descriptor', found=repr(descriptor))

# conv -> PReLU -> pool; kernels are height x width over the (row, slice) plane
WISENET_LAYERS: Tuple[LayerSpec, ...] = (
  LayerSpec(kind='conv', units=32, kernel_height=1, kernel_width=6),
  LayerSpec(kind='prelu'),
  LayerSpec(kind='maxpool', kernel_height=1, kernel_width=6, stride=1),
  LayerSpec(kind='conv', units=32, kernel_height=3, kernel_width=6),
  LayerSpec(kind='prelu'),
  LayerSpec(kind='maxpool', kernel_height=1, kernel_width=2, stride=2, ceil_mode=True),
  LayerSpec(kind='flatten'),
  LayerSpec(kind='fc', units=512),
  LayerSpec(kind='prelu'),
  LayerSpec(kind='dropout'),
  LayerSpec(kind='fc', units=512),
  LayerSpec(kind='prelu'),
  LayerSpec(kind='dropout'),
  LayerSpec(kind='fc', units=1024),
  LayerSpec(kind='prelu'),
  LayerSpec(kind='dropout'),
  LayerSpec(kind='fc', units=2),
)

# input, then the output of every conv, pool, flatten and fc layer
WISENET_SHAPES: Tuple[Tuple[int, ...], ...] = (
  (3, 3, 336),
  (32, 3, 331),
  (32, 3, 326),
  (32, 1, 321),
  (32, 1, 161),
  (5152,),
  (512,),
  (512,),
  (1024,),
  (2,),
)

def format_descriptor(specs: Sequence[LayerSpec], input_shape: Tuple[int, ...]) -> str:
  return '\n'.join([f'input {" ".join(str(d) for d in input_shape)}'] + [s.descriptor for s in specs])

def parse_descriptor(text: str) -> Tuple[Tuple[LayerSpec, ...], Tuple[int, ...]]:
  lines = [line for line in text.splitlines() if line.strip()]
  if not lines or not lines[0].startswith('input '):
    raise ArchitectureMismatchError(expected='an input shape line', found=lines[0] if lines else '')
  try:
    input_shape = tuple(int(d) for d in lines[0].split()[1:])
  except ValueError:
    raise ArchitectureMismatchError(expected='an input shape line', found=lines[0])
  return tuple(LayerSpec.from_descriptor(descriptor=line) for line in lines[1:]), input_shape

class Network:
  """A layer stack ending in two logits; class 1 is churn."""
  specs: Tuple[LayerSpec, ...]
  input_shape: Tuple[int, ...]
  layers: List[Layer]
  shapes: List[Tuple[int, ...]]
  capture_index: Optional[int]
  captured: Optional[np.ndarray] = None

  def __init__(self, specs: Sequence[LayerSpec], input_shape: Tuple[int, ...], dropout_rate: float=0.5, prelu_slope: float=0.25):
    self.specs = tuple(specs)
    self.input_shape = tuple(input_shape)
    self.layers = []
    self.shapes = [self.input_shape]
    shape = self.input_shape
    for spec in self.specs:
      layer = self.build_layer(spec=spec, input_shape=shape, dropout_rate=dropout_rate, prelu_slope=prelu_slope)
      shape = layer.output_shape(input_shape=shape)
      if 0 in shape:
        raise ShapeError(operation=spec.descriptor, expected='a non-empty output', found=shape)
      self.layers.append(layer)
      self.shapes.append(shape)
    if shape != (2,):
      raise ShapeError(operation='Network', expected=(2,), found=shape)
    activations = [i for i, s in enumerate(self.specs) if s.kind == 'prelu']
    self.capture_index = activations[-1] if activations else None

  @staticmethod
  def build_layer(spec: LayerSpec, input_shape: Tuple[int, ...], dropout_rate: float, prelu_slope: float) -> Layer:
    if spec.kind == 'conv':
      return Conv2D(channels=input_shape[0], filters=spec.units, kernel_height=spec.kernel_height, kernel_width=spec.kernel_width, stride=spec.stride)
    if spec.kind == 'maxpool':
      return MaxPool(kernel_height=spec.kernel_height, kernel_width=spec.kernel_width, stride=spec.stride, ceil_mode=spec.ceil_mode)
    if spec.kind == 'fc':
      if len(input_shape) != 1:
        raise ShapeError(operation=spec.descriptor, expected='a flat input', found=input_shape)
      return FullyConnected(inputs_count=input_shape[0], units=spec.units)
    if spec.kind == 'prelu':
      return PReLU(slope=prelu_slope)
    if spec.kind == 'flatten':
      return Flatten()
    if spec.kind == 'dropout':
      return Dropout(rate=dropout_rate)
    raise ArchitectureMismatchError(expected='a known layer kind', found=spec.kind)

  @property
  def descriptor(self) -> str:
    return format_descriptor(specs=self.specs, input_shape=self.input_shape)

  @property
  def shape_chain(self) -> Tuple[Tuple[int, ...], ...]:
    """Input shape followed by the output shapes of the conv, pool, flatten and fc layers."""
    return (self.input_shape,) + tuple(
      shape for spec, shape in zip(self.specs, self.shapes[1:])
      if spec.kind in ['conv', 'maxpool', 'flatten', 'fc']
    )

  @property
  def parameters(self) -> List[Tuple[int, str, np.ndarray]]:
    """(layer index, name, array) in layer order."""
    return [(i, name, array) for i, layer in enumerate(self.layers) for name, array in layer.params.items()]

  @property
  def gradients(self) -> List[np.ndarray]:
    return [self.layers[i].grads[name] for i, name, _ in self.parameters]

  @property
  def parameter_count(self) -> int:
    return sum(array.size for _, _, array in self.parameters)

  def initialize(self, seed: int, scheme: str='he_gaussian', prelu_slope: float=0.25):
    """Zero-mean Gaussian weights (variance 2/fan_in, or 1/fan_in for xavier), zero biases."""
    if scheme not in INIT_SCHEMES:
      raise ConfigurationError(key='init_scheme', value=scheme, reason=f'must be one of {INIT_SCHEMES}')
    generator = np.random.Generator(np.random.Philox(seed))
    gain = 2.0 if scheme == 'he_gaussian' else 1.0
    for layer in self.layers:
      for name, array in layer.params.items():
        if name == 'weight':
          array[...] = generator.normal(0.0, np.sqrt(gain / layer.fan_in()), size=array.shape)
        elif name == 'slope':
          array[...] = prelu_slope
        else:
          array[...] = 0.0

  def seed_dropout(self, seed: int):
    for index, layer in enumerate(self.layers):
      if isinstance(layer, Dropout):
        layer.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(index,))))

  def set_parameters(self, arrays: Sequence[np.ndarray]):
    parameters = self.parameters
    if len(arrays) != len(parameters):
      raise ArchitectureMismatchError(expected=len(parameters), found=len(arrays))
    for (_, name, target), array in zip(parameters, arrays):
      if target.shape != array.shape:
        raise ArchitectureMismatchError(expected=target.shape, found=array.shape)
      target[...] = array

  def check_input(self, inputs: np.ndarray):
    if inputs.shape[1:] != self.input_shape:
      raise ShapeError(operation='Network.forward', expected=self.input_shape, found=inputs.shape[1:])

  def forward(self, inputs: np.ndarray, training: bool=False, capture: bool=False, start: int=0) -> np.ndarray:
    """Logits; with start > 0 the inputs are those of layer `start`."""
    if start == 0:
      self.check_input(inputs=inputs)
    outputs = inputs
    for index in range(start, len(self.layers)):
      outputs = self.layers[index].forward(inputs=outputs, training=training)
      if capture and index == self.capture_index:
        self.captured = outputs.copy()
    return outputs

  def layer_inputs(self, inputs: np.ndarray) -> List[np.ndarray]:
    """The input of every layer under an inference-mode forward pass."""
    self.check_input(inputs=inputs)
    results = [inputs]
    for layer in self.layers[:-1]:
      results.append(layer.forward(inputs=results[-1], training=False))
    return results

  def backward(self, logit_gradient: np.ndarray) -> np.ndarray:
    gradient = logit_gradient
    for layer in reversed(self.layers):
      gradient = layer.backward(output_gradient=gradient)
    return gradient

  def infer(self, inputs: np.ndarray, capture: bool=False, batch_size: int=64) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Churn probabilities with dropout off, plus the captured activations when asked."""
    self.check_input(inputs=inputs)
    probabilities = []
    activations = []
    for start in range(0, len(inputs), batch_size):
      logits = self.forward(inputs=inputs[start:start + batch_size], training=False, capture=capture)
      probabilities.append(softmax(logits=logits)[:, 1])
      if capture:
        activations.append(self.captured)
    if not probabilities:
      return np.zeros(0), (np.zeros((0, self.shapes[self.capture_index + 1][0])) if capture else None)
    return np.concatenate(probabilities), (np.concatenate(activations) if capture else None)

class WiseNet(Network):
  """The fixed churn architecture over (channel, row, slice) activity images."""
  def __init__(self, dropout_rate: float=0.5, prelu_slope: float=0.25):
    super().__init__(specs=WISENET_LAYERS, input_shape=INPUT_SHAPE, dropout_rate=dropout_rate, prelu_slope=prelu_slope)
    if self.shape_chain != WISENET_SHAPES:
      raise ArchitectureMismatchError(expected=WISENET_SHAPES, found=self.shape_chain)

  @classmethod
  def from_descriptor(cls, text: str, dropout_rate: float=0.5) -> WiseNet:
    specs, input_shape = parse_descriptor(text=text)
    expected = format_descriptor(specs=WISENET_LAYERS, input_shape=INPUT_SHAPE)
    if specs != WISENET_LAYERS or input_shape != INPUT_SHAPE:
      raise ArchitectureMismatchError(expected=expected.replace('\n', '; '), found=format_descriptor(specs=specs, input_shape=input_shape).replace('\n', '; '))
    return cls(dropout_rate=dropout_rate)
