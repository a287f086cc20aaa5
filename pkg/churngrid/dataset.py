from __future__ import annotations
import io
import logging
import os
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from config import split_config
from .base import Options
from .error import DatasetError, ManifestValidationError, ShapeError
from .events import CustomerTimeline, ObservationWindow, aggregate
from .encoder import EncoderConfig, IMAGE_SHAPE, compute_offset, encode_pixels, label_customer
from .ingest import DatasetManifest, ManifestEntry, SPLITS
from .locator import read_bytes, write_bytes
from .synth import Population

log = logging.getLogger(__name__)

INDEX_COLUMNS = ['customer_id', 'label', 'crop_offset']

class SplitSpec(Options):
  defaults = split_config
  section = 'split'

  train_fraction: float
  val_fraction: float
  test_fraction: float
  seed: int

  def validate(self):
    for key in ['train_fraction', 'val_fraction', 'test_fraction']:
      self.require(key, getattr(self, key) > 0, 'must be positive')
    total = self.train_fraction + self.val_fraction + self.test_fraction
    self.require('test_fraction', abs(total - 1) < 1e-9, f'fractions sum to {total!r}, not 1')

@dataclass(frozen=True)
class ImageSet:
  customer_ids: Tuple[str, ...]
  pixels: np.ndarray
  labels: np.ndarray
  crop_offsets: np.ndarray

  def __post_init__(self):
    object.__setattr__(self, 'customer_ids', tuple(self.customer_ids))
    object.__setattr__(self, 'labels', np.asarray(self.labels, dtype=np.int64))
    object.__setattr__(self, 'crop_offsets', np.asarray(self.crop_offsets, dtype=np.int64))
    count = len(self.customer_ids)
    if self.pixels.shape != (count, *IMAGE_SHAPE) or self.pixels.dtype != np.uint8:
      raise ShapeError(operation='ImageSet', expected=((count, *IMAGE_SHAPE), 'uint8'), found=(self.pixels.shape, str(self.pixels.dtype)))
    if self.labels.shape != (count,) or self.crop_offsets.shape != (count,):
      raise ShapeError(operation='ImageSet', expected=(count,), found=(self.labels.shape, self.crop_offsets.shape))

  def __len__(self) -> int:
    return len(self.customer_ids)

  @classmethod
  def empty(cls) -> ImageSet:
    return cls(customer_ids=(), pixels=np.zeros((0, *IMAGE_SHAPE), dtype=np.uint8), labels=np.zeros(0), crop_offsets=np.zeros(0))

  @property
  def class_counts(self) -> Tuple[int, int]:
    return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

  def subset(self, indices: Sequence[int]) -> ImageSet:
    indices = np.asarray(indices, dtype=np.int64)
    return ImageSet(
      customer_ids=tuple(self.customer_ids[i] for i in indices),
      pixels=self.pixels[indices],
      labels=self.labels[indices],
      crop_offsets=self.crop_offsets[indices]
    )

  @property
  def index_frame(self) -> pd.DataFrame:
    return pd.DataFrame({'customer_id': list(self.customer_ids), 'label': self.labels, 'crop_offset': self.crop_offsets}, columns=INDEX_COLUMNS)

  def save(self, directory: str, split: str):
    buffer = io.BytesIO()
    np.save(buffer, self.pixels, allow_pickle=False)
    write_bytes(path=os.path.join(directory, f'{split}.npy'), resource=buffer.getvalue())
    write_bytes(path=os.path.join(directory, f'{split}_index.csv'), resource=self.index_frame.to_csv(index=False, lineterminator='\n').encode('utf-8'))
    log.info('Saved %d %s images to %s', len(self), split, directory)

  @classmethod
  def load(cls, directory: str, split: str) -> ImageSet:
    try:
      pixels = np.load(io.BytesIO(read_bytes(path=os.path.join(directory, f'{split}.npy'))), allow_pickle=False)
    except ValueError as e:
      raise DatasetError(f'unreadable {split} tensor ({e})')
    index = pd.read_csv(io.BytesIO(read_bytes(path=os.path.join(directory, f'{split}_index.csv'))), dtype={'customer_id': str}, keep_default_na=False)
    if list(index.columns) != INDEX_COLUMNS:
      raise DatasetError(f'unexpected {split} index columns {list(index.columns)}')
    return cls(
      customer_ids=tuple(index.customer_id),
      pixels=pixels,
      labels=index.label.to_numpy(),
      crop_offsets=index.crop_offset.to_numpy()
    )

@dataclass(frozen=True)
class MeanImage:
  values: np.ndarray

  def __post_init__(self):
    values = np.array(self.values, dtype=np.float64)
    if values.shape != IMAGE_SHAPE:
      raise ShapeError(operation='MeanImage', expected=IMAGE_SHAPE, found=values.shape)
    if np.any(values < 0) or np.any(values > 255):
      raise DatasetError('mean image entries must lie in [0, 255]')
    values.setflags(write=False)
    object.__setattr__(self, 'values', values)

@dataclass(frozen=True)
class Batch:
  inputs: np.ndarray
  labels: np.ndarray
  indices: np.ndarray

  def __len__(self) -> int:
    return len(self.labels)

def generator_for(seed: int) -> np.random.Generator:
  return np.random.Generator(np.random.Philox(seed))

def split(customer_ids: Sequence[str], spec: Optional[SplitSpec]=None) -> Tuple[List[str], List[str], List[str]]:
  """Seeded partition; val and test take floor allocations, train takes the remainder."""
  spec = spec if spec is not None else SplitSpec()
  customer_ids = list(customer_ids)
  if len(customer_ids) < 3:
    raise DatasetError(f'cannot split {len(customer_ids)} customers three ways')
  if len(set(customer_ids)) != len(customer_ids):
    raise DatasetError('customer ids are not unique')
  count = len(customer_ids)
  val_count = int(np.floor(count * spec.val_fraction + 1e-9))
  test_count = int(np.floor(count * spec.test_fraction + 1e-9))
  order = generator_for(seed=spec.seed).permutation(count)
  assignment = np.empty(count, dtype=object)
  assignment[order[:val_count]] = 'val'
  assignment[order[val_count:val_count + test_count]] = 'test'
  assignment[order[val_count + test_count:]] = 'train'
  partition = tuple([c for c, a in zip(customer_ids, assignment) if a == s] for s in SPLITS)
  log.info('Split %d customers into %d/%d/%d', count, *(len(p) for p in partition))
  return partition

def build_manifest(population: Population, split_spec: Optional[SplitSpec]=None) -> DatasetManifest:
  config = population.config
  train_ids, val_ids, test_ids = split(customer_ids=[t.customer_id for t in population.timelines], spec=split_spec)
  assignment = {
    **{c: 'train' for c in train_ids},
    **{c: 'val' for c in val_ids},
    **{c: 'test' for c in test_ids},
  }
  entries = []
  for timeline, window_start in zip(population.timelines, population.window_starts):
    window = ObservationWindow(start=window_start, tz_offset=config.tz_offset)
    entries.append(ManifestEntry(
      customer_id=timeline.customer_id,
      window_start=window_start,
      split=assignment[timeline.customer_id],
      label=label_customer(topups=timeline.topups, window=window),
      crop_offset=compute_offset(window=window)
    ))
  manifest = DatasetManifest(market_id=config.market_id, tz_offset=config.tz_offset, entries=tuple(entries), generator_seed=config.seed)
  manifest.validate()
  return manifest

def encode_population(timelines: Dict[str, CustomerTimeline], manifest: DatasetManifest, config: Optional[EncoderConfig]=None, split: Optional[str]=None) -> ImageSet:
  """Images for the manifest's customers (optionally one split), in manifest order."""
  config = config if config is not None else EncoderConfig()
  entries = manifest.entries if split is None else manifest.entries_for_split(split=split)
  if not entries:
    return ImageSet.empty()
  pixels = np.zeros((len(entries), *IMAGE_SHAPE), dtype=np.uint8)
  for index, entry in enumerate(entries):
    timeline = timelines.get(entry.customer_id, CustomerTimeline(customer_id=entry.customer_id))
    window = ObservationWindow(start=entry.window_start, tz_offset=manifest.tz_offset)
    label = label_customer(topups=timeline.topups, window=window)
    if label != entry.label:
      raise ManifestValidationError(f'label {entry.label} for {entry.customer_id!r} disagrees with its top-ups ({label})')
    crop_offset = compute_offset(window=window)
    if crop_offset != entry.crop_offset:
      raise ManifestValidationError(f'crop_offset {entry.crop_offset} for {entry.customer_id!r} disagrees with its window ({crop_offset})')
    grid = aggregate(timeline=timeline, window=window, encoder_config=config)
    pixels[index] = encode_pixels(grid=grid, crop_offset=crop_offset, config=config)
  return ImageSet(
    customer_ids=tuple(e.customer_id for e in entries),
    pixels=pixels,
    labels=np.array([e.label for e in entries]),
    crop_offsets=np.array([e.crop_offset for e in entries])
  )

def balance_training(images: ImageSet, seed: int) -> ImageSet:
  """Undersamples the majority class; survivors keep their original order."""
  negatives = np.flatnonzero(images.labels == 0)
  positives = np.flatnonzero(images.labels == 1)
  if not len(negatives) or not len(positives):
    raise DatasetError(f'cannot balance with class counts {len(negatives)}/{len(positives)}')
  minority, majority = sorted([negatives, positives], key=len)
  kept = generator_for(seed=seed).choice(majority, size=len(minority), replace=False)
  balanced = images.subset(indices=np.sort(np.concatenate([minority, kept])))
  log.info('Balanced training set: %d negatives, %d positives (from %d/%d)', *balanced.class_counts, len(negatives), len(positives))
  return balanced

def mean_image(images: ImageSet) -> MeanImage:
  if not len(images):
    raise DatasetError('mean image of an empty set')
  return MeanImage(values=images.pixels.mean(axis=0, dtype=np.float64))

def prepare_inputs(pixels: np.ndarray, mean: MeanImage, unit_scale: bool=True) -> np.ndarray:
  """Mean-subtracted (N, channel, row, slice) tensors."""
  inputs = pixels.astype(np.float64) - mean.values
  if unit_scale:
    inputs /= 255
  return np.ascontiguousarray(inputs.transpose(0, 3, 1, 2))

def iterate_batches(images: ImageSet, mean: MeanImage, batch_size: int, epoch_seed: Optional[int]=None, unit_scale: bool=True) -> Iterable[Batch]:
  if batch_size < 1:
    raise DatasetError(f'batch_size {batch_size} must be at least 1')
  order = generator_for(seed=epoch_seed).permutation(len(images)) if epoch_seed is not None else np.arange(len(images))
  for start in range(0, len(images), batch_size):
    indices = order[start:start + batch_size]
    yield Batch(
      inputs=prepare_inputs(pixels=images.pixels[indices], mean=mean, unit_scale=unit_scale),
      labels=images.labels[indices],
      indices=indices
    )

def batches(images: ImageSet, mean: MeanImage, batch_size: int, epoch_seed: Optional[int]=None, unit_scale: bool=True) -> List[Batch]:
  """Shuffled by epoch_seed; unshuffled when it is None."""
  return list(iterate_batches(images=images, mean=mean, batch_size=batch_size, epoch_seed=epoch_seed, unit_scale=unit_scale))
