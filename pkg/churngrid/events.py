from __future__ import annotations
import enum
import numpy as np

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, TYPE_CHECKING
from .error import RecordError

if TYPE_CHECKING:
  from .encoder import EncoderConfig

SLICE_SECONDS = 7200
SLICES_PER_DAY = 12
DAY_SECONDS = 86400
WEEK_SECONDS = 7 * DAY_SECONDS
WINDOW_DAYS = 28
WINDOW_SECONDS = WINDOW_DAYS * DAY_SECONDS
WINDOW_SLICES = WINDOW_DAYS * SLICES_PER_DAY
ROW_COUNT = 3

class Direction(str, enum.Enum):
  MOC = 'MOC'
  MTC = 'MTC'

class Service(str, enum.Enum):
  VOICE = 'VOICE'
  SMS = 'SMS'

class Row(enum.IntEnum):
  MOC = 0
  MTC = 1
  TOPUP = 2

def coerce_member(enum_type: type, value: any, field: str) -> enum.Enum:
  try:
    return enum_type(value)
  except ValueError:
    raise RecordError(f'invalid {field} {value!r}')

@dataclass(frozen=True, slots=True)
class CdrRecord:
  customer_id: str
  timestamp: int
  direction: Direction
  service: Service
  duration: int
  cell_id: Optional[str] = None
  counterpart: Optional[str] = None

  def __post_init__(self):
    object.__setattr__(self, 'direction', coerce_member(Direction, self.direction, 'direction'))
    object.__setattr__(self, 'service', coerce_member(Service, self.service, 'service'))
    if self.timestamp <= 0:
      raise RecordError(f'non-positive timestamp {self.timestamp}')
    if self.duration < 0:
      raise RecordError(f'negative duration {self.duration}')

@dataclass(frozen=True, slots=True)
class TopupRecord:
  customer_id: str
  timestamp: int
  amount: float

  def __post_init__(self):
    if self.timestamp <= 0:
      raise RecordError(f'non-positive timestamp {self.timestamp}')
    if not self.amount > 0:
      raise RecordError(f'non-positive amount {self.amount}')

@dataclass(frozen=True, slots=True)
class SliceCoord:
  column: int
  row: Row

  def __post_init__(self):
    object.__setattr__(self, 'row', coerce_member(Row, self.row, 'row'))
    if not 0 <= self.column < WINDOW_SLICES:
      raise RecordError(f'slice column {self.column} outside [0, {WINDOW_SLICES - 1}]')

@dataclass(frozen=True, slots=True)
class ObservationWindow:
  """A 28-day span starting on a 2-hour boundary of market-local time."""
  start: int
  tz_offset: int = 0

  def __post_init__(self):
    if (self.start + self.tz_offset) % SLICE_SECONDS != 0:
      raise RecordError(f'window start {self.start} is not aligned to a local {SLICE_SECONDS}s slice (tz_offset {self.tz_offset})')

  @property
  def end(self) -> int:
    return self.start + WINDOW_SECONDS

  @property
  def label_start(self) -> int:
    return self.end

  @property
  def label_end(self) -> int:
    return self.end + WINDOW_SECONDS

  @classmethod
  def aligned(cls, timestamp: int, tz_offset: int=0) -> ObservationWindow:
    """The window starting at the slice boundary at or before the timestamp."""
    local = timestamp + tz_offset
    return cls(start=local - local % SLICE_SECONDS - tz_offset, tz_offset=tz_offset)

@dataclass(frozen=True)
class CustomerTimeline:
  customer_id: str
  cdrs: Tuple[CdrRecord, ...] = ()
  topups: Tuple[TopupRecord, ...] = ()

@dataclass(frozen=True)
class ActivityGrid:
  """Raw per-slice quantities: call seconds in the MOC/MTC rows, currency in the TOPUP row."""
  values: np.ndarray

  def __post_init__(self):
    values = np.array(self.values, dtype=np.float64)
    if values.shape != (ROW_COUNT, WINDOW_SLICES):
      raise RecordError(f'activity grid shape {values.shape} != {(ROW_COUNT, WINDOW_SLICES)}')
    if not np.all(np.isfinite(values)) or np.any(values < 0):
      raise RecordError('activity grid entries must be finite and non-negative')
    values.setflags(write=False)
    object.__setattr__(self, 'values', values)

  @classmethod
  def zeros(cls) -> ActivityGrid:
    return cls(values=np.zeros((ROW_COUNT, WINDOW_SLICES)))

  def __eq__(self, other: any) -> bool:
    return isinstance(other, ActivityGrid) and np.array_equal(self.values, other.values)

  def __add__(self, other: ActivityGrid) -> ActivityGrid:
    return ActivityGrid(values=self.values + other.values)

def slice_index(timestamp: int, window: ObservationWindow) -> Optional[int]:
  column = (timestamp - window.start) // SLICE_SECONDS
  return int(column) if 0 <= column < WINDOW_SLICES else None

def build_timeline(cdrs: Iterable[CdrRecord], topups: Iterable[TopupRecord], customer_id: str) -> CustomerTimeline:
  return CustomerTimeline(
    customer_id=customer_id,
    cdrs=tuple(sorted((r for r in cdrs if r.customer_id == customer_id), key=lambda r: r.timestamp)),
    topups=tuple(sorted((r for r in topups if r.customer_id == customer_id), key=lambda r: r.timestamp))
  )

def build_timelines(cdrs: Iterable[CdrRecord], topups: Iterable[TopupRecord]) -> Dict[str, CustomerTimeline]:
  """Groups a whole population in one pass; customers appear in first-seen order."""
  grouped: Dict[str, Tuple[List[CdrRecord], List[TopupRecord]]] = {}
  for record in cdrs:
    grouped.setdefault(record.customer_id, ([], []))[0].append(record)
  for record in topups:
    grouped.setdefault(record.customer_id, ([], []))[1].append(record)
  return {
    customer_id: CustomerTimeline(
      customer_id=customer_id,
      cdrs=tuple(sorted(customer_cdrs, key=lambda r: r.timestamp)),
      topups=tuple(sorted(customer_topups, key=lambda r: r.timestamp))
    )
    for customer_id, (customer_cdrs, customer_topups) in grouped.items()
  }

def accumulate(row: np.ndarray, columns: np.ndarray, quantities: np.ndarray):
  # summing in (column, quantity) order makes the total independent of event order
  order = np.lexsort((quantities, columns))
  np.add.at(row, columns[order], quantities[order])

def aggregate(timeline: CustomerTimeline, window: ObservationWindow, encoder_config: EncoderConfig) -> ActivityGrid:
  values = np.zeros((ROW_COUNT, WINDOW_SLICES), dtype=np.float64)
  if timeline.cdrs:
    timestamps = np.fromiter((r.timestamp for r in timeline.cdrs), dtype=np.int64, count=len(timeline.cdrs))
    seconds = np.fromiter(
      (float(encoder_config.sms_equivalent_seconds) if r.service is Service.SMS else float(r.duration) for r in timeline.cdrs),
      dtype=np.float64,
      count=len(timeline.cdrs)
    )
    rows = np.fromiter((Row[r.direction.value] for r in timeline.cdrs), dtype=np.int64, count=len(timeline.cdrs))
    columns = (timestamps - window.start) // SLICE_SECONDS
    inside = (columns >= 0) & (columns < WINDOW_SLICES) & (seconds > 0)
    for row in [Row.MOC, Row.MTC]:
      selected = inside & (rows == row)
      accumulate(row=values[row], columns=columns[selected], quantities=seconds[selected])
  if timeline.topups:
    timestamps = np.fromiter((r.timestamp for r in timeline.topups), dtype=np.int64, count=len(timeline.topups))
    amounts = np.fromiter((r.amount for r in timeline.topups), dtype=np.float64, count=len(timeline.topups))
    columns = (timestamps - window.start) // SLICE_SECONDS
    inside = (columns >= 0) & (columns < WINDOW_SLICES)
    accumulate(row=values[Row.TOPUP], columns=columns[inside], quantities=amounts[inside])
  return ActivityGrid(values=values)
