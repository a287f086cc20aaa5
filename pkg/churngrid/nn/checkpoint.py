"""
Checkpoint files.

Layout: the 8-byte magic `WISENET1`, then four length-prefixed parts (8-byte big-endian length,
then the bytes): the architecture descriptor, the training metadata as `key = value` lines,
every parameter as little-endian float64 in layer order, and the mean image as little-endian
float64.
"""
from __future__ import annotations
import logging
import numpy as np

from dataclasses import dataclass
from functools import reduce
from typing import List, Optional, Tuple
from ..base import Options
from ..dataset import ImageSet, MeanImage, prepare_inputs
from ..encoder import IMAGE_SHAPE
from ..error import ConfigurationError, CorruptCheckpointError
from ..locator import read_bytes, write_bytes
from .model import WiseNet

log = logging.getLogger(__name__)

MAGIC = b'WISENET1'
PART_COUNT = 4
LITTLE_FLOAT = np.dtype('<f8')

class CheckpointMetadata(Options):
  defaults = {
    'seed': 0,
    'epoch': 0,
    'val_log_loss': 0.0,
    'unit_scale': True,
    'dropout_rate': 0.5,
  }
  section = 'checkpoint'

  seed: int
  epoch: int
  val_log_loss: float
  unit_scale: bool
  dropout_rate: float

@dataclass
class Checkpoint:
  network: WiseNet
  mean: MeanImage
  metadata: CheckpointMetadata

  def inputs(self, images: ImageSet) -> np.ndarray:
    return prepare_inputs(pixels=images.pixels, mean=self.mean, unit_scale=self.metadata.unit_scale)

  def predict(self, images: ImageSet, capture: bool=False, batch_size: int=64) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Churn probabilities for an image set, with the last hidden activations when asked."""
    probabilities = []
    activations = []
    for start in range(0, len(images), batch_size):
      batch = images.subset(indices=np.arange(start, min(start + batch_size, len(images))))
      batch_probabilities, batch_activations = self.network.infer(inputs=self.inputs(images=batch), capture=capture, batch_size=batch_size)
      probabilities.append(batch_probabilities)
      activations.append(batch_activations)
    if not probabilities:
      return np.zeros(0), (np.zeros((0, 1024)) if capture else None)
    return np.concatenate(probabilities), (np.concatenate(activations) if capture else None)

def pack_parts(parts: List[bytes]) -> bytes:
  return reduce(lambda j, d: j + len(d).to_bytes(length=8, byteorder='big') + d, parts, b'')

def unpack_parts(data: bytes, count: int) -> List[bytes]:
  byte_index = 0
  parts = []
  for remaining_parts in reversed(range(count)):
    try:
      assert len(data) >= byte_index + 8, 'Not enough part length bytes'
      part_length = int.from_bytes(data[byte_index:byte_index + 8], byteorder='big')
      byte_index += 8
      assert len(data) >= byte_index + part_length, 'Not enough part bytes'
      parts.append(data[byte_index:byte_index + part_length])
      byte_index += part_length
      if not remaining_parts:
        assert len(data) == byte_index, 'Extra bytes after the last part'
    except (KeyboardInterrupt, SystemExit):
      raise
    except Exception as e:
      raise CorruptCheckpointError(reason=f'part {count - remaining_parts} of {count}', error=e)
  return parts

def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
  parameters = np.concatenate([array.reshape(-1) for _, _, array in checkpoint.network.parameters]).astype(LITTLE_FLOAT)
  return MAGIC + pack_parts(parts=[
    checkpoint.network.descriptor.encode('utf-8'),
    checkpoint.metadata.to_text().encode('utf-8'),
    parameters.tobytes(),
    checkpoint.mean.values.astype(LITTLE_FLOAT).tobytes(),
  ])

def parse_checkpoint(data: bytes) -> Checkpoint:
  if data[:len(MAGIC)] != MAGIC:
    raise CorruptCheckpointError(reason=f'bad magic {data[:len(MAGIC)]!r}')
  descriptor, metadata_text, parameter_bytes, mean_bytes = unpack_parts(data=data[len(MAGIC):], count=PART_COUNT)
  try:
    metadata = CheckpointMetadata.from_text(text=metadata_text.decode('utf-8'))
  except (UnicodeDecodeError, ConfigurationError) as e:
    raise CorruptCheckpointError(reason='metadata', error=e)
  try:
    descriptor_text = descriptor.decode('utf-8')
  except UnicodeDecodeError as e:
    raise CorruptCheckpointError(reason='descriptor', error=e)
  network = WiseNet.from_descriptor(text=descriptor_text, dropout_rate=metadata.dropout_rate)
  if len(parameter_bytes) != network.parameter_count * LITTLE_FLOAT.itemsize:
    raise CorruptCheckpointError(reason=f'{len(parameter_bytes)} parameter bytes for {network.parameter_count} parameters')
  if len(mean_bytes) != int(np.prod(IMAGE_SHAPE)) * LITTLE_FLOAT.itemsize:
    raise CorruptCheckpointError(reason=f'{len(mean_bytes)} mean image bytes')
  values = np.frombuffer(parameter_bytes, dtype=LITTLE_FLOAT).astype(np.float64)
  arrays = []
  offset = 0
  for _, _, array in network.parameters:
    arrays.append(values[offset:offset + array.size].reshape(array.shape))
    offset += array.size
  network.set_parameters(arrays=arrays)
  mean = MeanImage(values=np.frombuffer(mean_bytes, dtype=LITTLE_FLOAT).astype(np.float64).reshape(IMAGE_SHAPE))
  return Checkpoint(network=network, mean=mean, metadata=metadata)

def save_checkpoint(checkpoint: Checkpoint, path: str):
  write_bytes(path=path, resource=checkpoint_bytes(checkpoint=checkpoint))
  log.info('Saved checkpoint (epoch %d, val log-loss %.6f) to %s', checkpoint.metadata.epoch, checkpoint.metadata.val_log_loss, path)

def load_checkpoint(path: str) -> Checkpoint:
  return parse_checkpoint(data=read_bytes(path=path))
