from __future__ import annotations
import csv
import io
import logging
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import BinaryIO, List, Optional, Tuple, Union
from .base import Options
from .error import HeaderError, LineError, ManifestValidationError, ManifestVersionError
from .events import CdrRecord, Direction, Service, TopupRecord, SLICE_SECONDS
from .locator import read_bytes, write_bytes

log = logging.getLogger(__name__)

CDR_COLUMNS = ['customer_id', 'timestamp', 'direction', 'service', 'duration_s', 'cell_id', 'counterpart']
TOPUP_COLUMNS = ['customer_id', 'timestamp', 'amount']
MANIFEST_MAGIC = 'CHURNGRID-MANIFEST'
MANIFEST_SCHEMA_VERSION = 1
MANIFEST_COLUMNS = ['customer_id', 'window_start', 'split', 'label', 'crop_offset']
SPLITS = ['train', 'val', 'test']
MAX_CROP_OFFSET = 83

Stream = Union[bytes, str, BinaryIO]

def stream_text(stream: Stream) -> str:
  content = stream.read() if hasattr(stream, 'read') else stream
  return content.decode('utf-8-sig') if isinstance(content, bytes) else content

def read_rows(stream: Stream, columns: List[str]) -> Tuple[pd.DataFrame, List[LineError]]:
  """Splits a CSV stream into a string frame of well-formed rows (indexed by line number) and field-count errors."""
  lines = stream_text(stream=stream).splitlines()
  header = next(csv.reader(lines[:1]), [])
  if [h.strip() for h in header] != columns:
    raise HeaderError(expected=columns, found=header)
  rows = []
  line_numbers = []
  errors = []
  for line_number, (line, fields) in enumerate(zip(lines[1:], csv.reader(lines[1:])), start=2):
    if not line.strip():
      continue
    if len(fields) != len(columns):
      errors.append(LineError(line_number=line_number, reason=f'expected {len(columns)} fields, found {len(fields)}', raw_line=line))
      continue
    rows.append([f.strip() for f in fields])
    line_numbers.append(line_number)
  frame = pd.DataFrame(rows, columns=columns, index=pd.Index(line_numbers, dtype=np.int64), dtype=str)
  return frame, errors

def integer_column(values: pd.Series) -> Tuple[pd.Series, pd.Series]:
  valid = values.str.fullmatch(r'[+-]?\d{1,18}')
  parsed = pd.to_numeric(values.where(valid, '0'), errors='coerce').fillna(0).astype(np.int64)
  return parsed, valid

def decimal_column(values: pd.Series) -> Tuple[pd.Series, pd.Series]:
  """Correctly rounded: any amount written by format_topup_csv parses back to the same float."""
  well_formed = values.str.fullmatch(r'[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?')
  parsed = values.where(well_formed, '0').astype(np.float64)
  return parsed.where(np.isfinite(parsed), 0.0), well_formed & np.isfinite(parsed)

def first_reasons(frame: pd.DataFrame, checks: List[Tuple[pd.Series, str]]) -> pd.Series:
  """The first failing check's reason per row, empty where every check passes."""
  conditions = [~passed.to_numpy(dtype=bool) for passed, _ in checks]
  reasons = [reason for _, reason in checks]
  return pd.Series(np.select(conditions, reasons, default=''), index=frame.index)

def collect_errors(frame: pd.DataFrame, reasons: pd.Series, errors: List[LineError]) -> Tuple[pd.DataFrame, List[LineError]]:
  invalid = reasons != ''
  errors = errors + [
    LineError(line_number=int(line_number), reason=reason)
    for line_number, reason in reasons[invalid].items()
  ]
  errors.sort(key=lambda e: e.line_number)
  if errors:
    log.warning('%d malformed line(s) skipped; first: %s', len(errors), '; '.join(e.message for e in errors[:3]))
  return frame[~invalid], errors

def parse_cdr_csv(stream: Stream) -> Tuple[List[CdrRecord], List[LineError]]:
  frame, errors = read_rows(stream=stream, columns=CDR_COLUMNS)
  timestamps, timestamp_valid = integer_column(frame['timestamp'])
  durations, duration_valid = integer_column(frame['duration_s'])
  reasons = first_reasons(frame=frame, checks=[
    (frame['customer_id'] != '', 'missing customer_id'),
    (timestamp_valid, 'invalid timestamp'),
    (timestamps > 0, 'non-positive timestamp'),
    (frame['direction'].isin([d.value for d in Direction]), 'invalid direction'),
    (frame['service'].isin([s.value for s in Service]), 'invalid service'),
    (duration_valid, 'invalid duration'),
    (durations >= 0, 'negative duration'),
  ])
  frame, errors = collect_errors(frame=frame, reasons=reasons, errors=errors)
  records = [
    CdrRecord(
      customer_id=customer_id,
      timestamp=int(timestamp),
      direction=Direction(direction),
      service=Service(service),
      duration=int(duration),
      cell_id=cell_id if cell_id else None,
      counterpart=counterpart if counterpart else None
    )
    for customer_id, timestamp, direction, service, duration, cell_id, counterpart in zip(
      frame['customer_id'],
      timestamps.loc[frame.index],
      frame['direction'],
      frame['service'],
      durations.loc[frame.index],
      frame['cell_id'],
      frame['counterpart']
    )
  ]
  return records, errors

def parse_topup_csv(stream: Stream) -> Tuple[List[TopupRecord], List[LineError]]:
  frame, errors = read_rows(stream=stream, columns=TOPUP_COLUMNS)
  timestamps, timestamp_valid = integer_column(frame['timestamp'])
  amounts, amount_valid = decimal_column(frame['amount'])
  reasons = first_reasons(frame=frame, checks=[
    (frame['customer_id'] != '', 'missing customer_id'),
    (timestamp_valid, 'invalid timestamp'),
    (timestamps > 0, 'non-positive timestamp'),
    (amount_valid, 'invalid amount'),
    (amounts > 0, 'non-positive amount'),
  ])
  frame, errors = collect_errors(frame=frame, reasons=reasons, errors=errors)
  records = [
    TopupRecord(customer_id=customer_id, timestamp=int(timestamp), amount=float(amount))
    for customer_id, timestamp, amount in zip(frame['customer_id'], timestamps.loc[frame.index], amounts.loc[frame.index])
  ]
  return records, errors

def format_csv(frame: pd.DataFrame) -> bytes:
  return frame.to_csv(index=False, lineterminator='\n').encode('utf-8')

def format_cdr_csv(records: List[CdrRecord]) -> bytes:
  frame = pd.DataFrame({
    'customer_id': [r.customer_id for r in records],
    'timestamp': pd.array([r.timestamp for r in records], dtype=np.int64),
    'direction': [r.direction.value for r in records],
    'service': [r.service.value for r in records],
    'duration_s': pd.array([r.duration for r in records], dtype=np.int64),
    'cell_id': [r.cell_id for r in records],
    'counterpart': [r.counterpart for r in records],
  }, columns=CDR_COLUMNS)
  return format_csv(frame=frame)

def format_topup_csv(records: List[TopupRecord]) -> bytes:
  frame = pd.DataFrame({
    'customer_id': [r.customer_id for r in records],
    'timestamp': pd.array([r.timestamp for r in records], dtype=np.int64),
    'amount': pd.array([float(r.amount) for r in records], dtype=np.float64),
  }, columns=TOPUP_COLUMNS)
  return format_csv(frame=frame)

def write_cdr_csv(records: List[CdrRecord], path: str):
  write_bytes(path=path, resource=format_cdr_csv(records=records))

def write_topup_csv(records: List[TopupRecord], path: str):
  write_bytes(path=path, resource=format_topup_csv(records=records))

def read_cdr_csv(path: str) -> Tuple[List[CdrRecord], List[LineError]]:
  return parse_cdr_csv(stream=read_bytes(path=path))

def read_topup_csv(path: str) -> Tuple[List[TopupRecord], List[LineError]]:
  return parse_topup_csv(stream=read_bytes(path=path))

@dataclass(frozen=True)
class ManifestEntry:
  customer_id: str
  window_start: int
  split: str
  label: int
  crop_offset: int

@dataclass(frozen=True)
class DatasetManifest:
  market_id: str
  tz_offset: int
  entries: Tuple[ManifestEntry, ...] = ()
  generator_seed: Optional[int] = None
  schema_version: int = MANIFEST_SCHEMA_VERSION

  def __post_init__(self):
    object.__setattr__(self, 'entries', tuple(self.entries))

  def validate(self):
    if self.schema_version != MANIFEST_SCHEMA_VERSION:
      raise ManifestVersionError(found=str(self.schema_version), expected=str(MANIFEST_SCHEMA_VERSION))
    seen = set()
    for entry in self.entries:
      if entry.customer_id in seen:
        raise ManifestValidationError(f'duplicate customer_id {entry.customer_id!r}')
      seen.add(entry.customer_id)
      if not entry.customer_id or any(c in entry.customer_id for c in ',\n\r"'):
        raise ManifestValidationError(f'invalid customer_id {entry.customer_id!r}')
      if entry.split not in SPLITS:
        raise ManifestValidationError(f'invalid split {entry.split!r} for {entry.customer_id!r}')
      if entry.label not in [0, 1]:
        raise ManifestValidationError(f'invalid label {entry.label!r} for {entry.customer_id!r}')
      if not 0 <= entry.crop_offset <= MAX_CROP_OFFSET:
        raise ManifestValidationError(f'crop_offset {entry.crop_offset} outside [0, {MAX_CROP_OFFSET}] for {entry.customer_id!r}')
      if (entry.window_start + self.tz_offset) % SLICE_SECONDS != 0:
        raise ManifestValidationError(f'window_start {entry.window_start} not slice aligned for {entry.customer_id!r}')

  def entries_for_split(self, split: str) -> List[ManifestEntry]:
    return [e for e in self.entries if e.split == split]

  @property
  def frame(self) -> pd.DataFrame:
    return pd.DataFrame([
      [e.customer_id, e.window_start, e.split, e.label, e.crop_offset]
      for e in self.entries
    ], columns=MANIFEST_COLUMNS)

def format_manifest(manifest: DatasetManifest) -> str:
  manifest.validate()
  header = [
    f'{MANIFEST_MAGIC} v{manifest.schema_version}',
    f'schema_version = {manifest.schema_version}',
    f'market_id = {manifest.market_id}',
    f'tz_offset = {manifest.tz_offset}',
    f'generator_seed = {"" if manifest.generator_seed is None else manifest.generator_seed}',
  ]
  body = manifest.frame.to_csv(index=False, lineterminator='\n')
  return '\n'.join(header) + '\n' + body

def parse_manifest(text: str) -> DatasetManifest:
  lines = text.splitlines()
  expected_magic = f'{MANIFEST_MAGIC} v{MANIFEST_SCHEMA_VERSION}'
  if not lines or not lines[0].startswith(MANIFEST_MAGIC):
    raise ManifestValidationError('missing manifest header line')
  if lines[0].strip() != expected_magic:
    raise ManifestVersionError(found=lines[0].strip(), expected=expected_magic)
  try:
    body_index = next(i for i, line in enumerate(lines) if line.startswith(f'{MANIFEST_COLUMNS[0]},'))
  except StopIteration:
    raise ManifestValidationError('missing customer table header')
  header = Options.parse_text(text='\n'.join(lines[1:body_index]))
  try:
    schema_version = int(header['schema_version'])
    market_id = header['market_id']
    tz_offset = int(header['tz_offset'])
    generator_seed = int(header['generator_seed']) if header.get('generator_seed') else None
  except (KeyError, ValueError) as e:
    raise ManifestValidationError(f'malformed header ({e!r})')
  if schema_version != MANIFEST_SCHEMA_VERSION:
    raise ManifestVersionError(found=str(schema_version), expected=str(MANIFEST_SCHEMA_VERSION))
  frame = pd.read_csv(io.StringIO('\n'.join(lines[body_index:]) + '\n'), dtype=str, keep_default_na=False)
  if list(frame.columns) != MANIFEST_COLUMNS:
    raise ManifestValidationError(f'unexpected columns {list(frame.columns)}')
  try:
    entries = [
      ManifestEntry(
        customer_id=customer_id,
        window_start=int(window_start),
        split=split,
        label=int(label),
        crop_offset=int(crop_offset)
      )
      for customer_id, window_start, split, label, crop_offset in frame.itertuples(index=False, name=None)
    ]
  except ValueError as e:
    raise ManifestValidationError(f'malformed customer row ({e})')
  manifest = DatasetManifest(
    market_id=market_id,
    tz_offset=tz_offset,
    entries=tuple(entries),
    generator_seed=generator_seed,
    schema_version=schema_version
  )
  manifest.validate()
  return manifest

def write_manifest(manifest: DatasetManifest, path: str):
  write_bytes(path=path, resource=format_manifest(manifest=manifest).encode('utf-8'))
  log.info('Wrote manifest for %d customers to %s', len(manifest.entries), path)

def load_manifest(path: str) -> DatasetManifest:
  return parse_manifest(text=read_bytes(path=path).decode('utf-8'))
