from __future__ import annotations
import io
import logging
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence
from PIL import Image
from config import encoder_config
from .base import Options
from .error import RecordError, ShapeError
from .events import ActivityGrid, ObservationWindow, Row, TopupRecord, SLICE_SECONDS, WEEK_SECONDS, WINDOW_SLICES, ROW_COUNT
from .locator import read_bytes, write_bytes

log = logging.getLogger(__name__)

CHANNEL_COUNT = 3
SLICES_PER_WEEK = WEEK_SECONDS // SLICE_SECONDS
PIXEL_COUNT = ROW_COUNT * WINDOW_SLICES
FEATURE_COUNT = PIXEL_COUNT + 1
IMAGE_SHAPE = (ROW_COUNT, WINDOW_SLICES, CHANNEL_COUNT)
# 1970-01-05 00:00 was a Monday
MONDAY_REFERENCE = 4 * 86400
FEATURE_COLUMNS = [f'f{i}' for i in range(PIXEL_COUNT)] + ['offset']

class EncoderConfig(Options):
  """Intensity exponent and saturation points. Rows map to channels MOC→red, MTC→green, TOPUP→blue."""
  defaults = encoder_config
  section = 'encoder'

  alpha: float
  call_saturation: float
  topup_saturation: float
  sms_equivalent_seconds: float

  def validate(self):
    self.require('alpha', 0 < self.alpha <= 1, 'must be in (0, 1]')
    self.require('call_saturation', self.call_saturation > 0, 'must be positive')
    self.require('topup_saturation', self.topup_saturation > 0, 'must be positive')
    self.require('sms_equivalent_seconds', self.sms_equivalent_seconds >= 0, 'must be non-negative')

@dataclass(frozen=True)
class EncodedImage:
  pixels: np.ndarray
  label: int
  crop_offset: int
  customer_id: str

  def __post_init__(self):
    if self.pixels.shape != IMAGE_SHAPE or self.pixels.dtype != np.uint8:
      raise ShapeError(operation='EncodedImage', expected=(IMAGE_SHAPE, 'uint8'), found=(self.pixels.shape, str(self.pixels.dtype)))
    if self.label not in [0, 1]:
      raise RecordError(f'invalid label {self.label!r}')
    if not 0 <= self.crop_offset < SLICES_PER_WEEK:
      raise RecordError(f'crop_offset {self.crop_offset} outside [0, {SLICES_PER_WEEK - 1}]')

  def __eq__(self, other: any) -> bool:
    return (
      isinstance(other, EncodedImage)
      and np.array_equal(self.pixels, other.pixels)
      and (self.label, self.crop_offset, self.customer_id) == (other.label, other.crop_offset, other.customer_id)
    )

@dataclass(frozen=True)
class FeatureVector:
  values: np.ndarray
  label: int

  def __post_init__(self):
    if self.values.shape != (FEATURE_COUNT,):
      raise ShapeError(operation='FeatureVector', expected=(FEATURE_COUNT,), found=self.values.shape)

def intensity_call(seconds: any, config: Optional[EncoderConfig]=None) -> any:
  config = config if config is not None else EncoderConfig()
  return (np.minimum(seconds, config.call_saturation) / config.call_saturation) ** config.alpha

def intensity_topup(amount: any, topup_saturation: float) -> any:
  return np.minimum(amount, topup_saturation) / topup_saturation

def quantize(intensity: any) -> any:
  """8-bit level, rounding half away from zero."""
  levels = np.floor(np.asarray(intensity, dtype=np.float64) * 255 + 0.5).astype(np.uint8)
  return int(levels) if levels.ndim == 0 else levels

def compute_offset(window: ObservationWindow) -> int:
  """Slices elapsed since the most recent market-local Monday 00:00."""
  local = window.start + window.tz_offset
  return int((local - MONDAY_REFERENCE) % WEEK_SECONDS // SLICE_SECONDS)

def mark_columns(crop_offset: int) -> np.ndarray:
  return np.arange((SLICES_PER_WEEK - crop_offset) % SLICES_PER_WEEK, WINDOW_SLICES, SLICES_PER_WEEK)

def encode_pixels(grid: ActivityGrid, crop_offset: int, config: EncoderConfig) -> np.ndarray:
  pixels = np.zeros(IMAGE_SHAPE, dtype=np.uint8)
  pixels[Row.MOC, :, 0] = quantize(intensity_call(seconds=grid.values[Row.MOC], config=config))
  pixels[Row.MTC, :, 1] = quantize(intensity_call(seconds=grid.values[Row.MTC], config=config))
  pixels[Row.TOPUP, :, 2] = quantize(intensity_topup(amount=grid.values[Row.TOPUP], topup_saturation=config.topup_saturation))
  pixels[:, mark_columns(crop_offset=crop_offset), :] = 255
  return pixels

def encode_image(grid: ActivityGrid, window: ObservationWindow, config: Optional[EncoderConfig]=None) -> np.ndarray:
  return encode_pixels(grid=grid, crop_offset=compute_offset(window=window), config=config if config is not None else EncoderConfig())

def label_customer(topups: Iterable[TopupRecord], window: ObservationWindow) -> int:
  return 0 if any(window.label_start <= r.timestamp < window.label_end for r in topups) else 1

def flatten_pixels(pixels: np.ndarray, crop_offset: int) -> np.ndarray:
  """Each pixel reduced to its row's own channel; mark columns are already 255 in every channel."""
  own_channel = pixels[np.arange(ROW_COUNT), :, np.arange(ROW_COUNT)]
  return np.concatenate([own_channel.reshape(-1).astype(np.int64), [crop_offset]])

def flatten_image(image: EncodedImage) -> FeatureVector:
  return FeatureVector(values=flatten_pixels(pixels=image.pixels, crop_offset=image.crop_offset), label=image.label)

def unflatten_features(values: Sequence[int]) -> np.ndarray:
  values = np.asarray(values, dtype=np.int64)
  if values.shape != (FEATURE_COUNT,):
    raise ShapeError(operation='unflatten_features', expected=(FEATURE_COUNT,), found=values.shape)
  crop_offset = int(values[-1])
  own_channel = values[:PIXEL_COUNT].reshape(ROW_COUNT, WINDOW_SLICES).astype(np.uint8)
  pixels = np.zeros(IMAGE_SHAPE, dtype=np.uint8)
  pixels[np.arange(ROW_COUNT), :, np.arange(ROW_COUNT)] = own_channel
  pixels[:, mark_columns(crop_offset=crop_offset), :] = 255
  return pixels

def features_frame(pixels: np.ndarray, crop_offsets: Sequence[int], labels: Sequence[int]) -> pd.DataFrame:
  """The flattened dataset, one row per customer: f0..f1007, offset, label."""
  rows = np.stack([flatten_pixels(pixels=p, crop_offset=int(o)) for p, o in zip(pixels, crop_offsets)]) if len(pixels) else np.zeros((0, FEATURE_COUNT), dtype=np.int64)
  frame = pd.DataFrame(rows, columns=FEATURE_COLUMNS)
  frame['label'] = np.asarray(labels, dtype=np.int64)
  return frame

def write_features_csv(frame: pd.DataFrame, path: str):
  write_bytes(path=path, resource=frame.to_csv(index=False, lineterminator='\n').encode('utf-8'))

def read_features_csv(path: str) -> pd.DataFrame:
  frame = pd.read_csv(io.BytesIO(read_bytes(path=path)), dtype=np.int64)
  if list(frame.columns) != FEATURE_COLUMNS + ['label']:
    raise ShapeError(operation='read_features_csv', expected=FEATURE_COUNT + 1, found=len(frame.columns))
  return frame

def png_bytes(pixels: np.ndarray) -> bytes:
  buffer = io.BytesIO()
  Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(buffer, format='PNG')
  return buffer.getvalue()

def export_png(image: EncodedImage, path: str):
  write_bytes(path=path, resource=png_bytes(pixels=image.pixels))

def read_png(path: str) -> np.ndarray:
  with Image.open(io.BytesIO(read_bytes(path=path))) as image:
    return np.asarray(image.convert('RGB'), dtype=np.uint8)
