from typing import Optional, List, Tuple

class ChurnGridError(Exception):
  pass

class ConfigurationError(ChurnGridError):
  key: str
  value: any
  reason: str

  def __init__(self, key: str, value: any, reason: str):
    self.key = key
    self.value = value
    self.reason = reason
    super().__init__(f'Configuration Error for {key}={value!r}: {reason}')

class RecordError(ChurnGridError):
  def __init__(self, reason: str):
    self.reason = reason
    super().__init__(f'Record Error: {reason}')

class IngestError(ChurnGridError):
  pass

class HeaderError(IngestError):
  expected: List[str]
  found: List[str]

  def __init__(self, expected: List[str], found: List[str]):
    self.expected = expected
    self.found = found
    super().__init__(f'Header Error: expected {",".join(expected)} but found {",".join(found) if found else "nothing"}')

class LineError(IngestError):
  line_number: int
  reason: str
  raw_line: Optional[str]

  def __init__(self, line_number: int, reason: str, raw_line: Optional[str]=None):
    self.line_number = line_number
    self.reason = reason
    self.raw_line = raw_line
    super().__init__(self.message)

  @property
  def message(self) -> str:
    message = f'Line error at line {self.line_number}'
    if self.raw_line is not None:
      message += f" for '{self.raw_line}'"
    return f'{message}: {self.reason}'

  def __eq__(self, other: any) -> bool:
    return isinstance(other, LineError) and (self.line_number, self.reason) == (other.line_number, other.reason)

  def __hash__(self) -> int:
    return hash((self.line_number, self.reason))

class ManifestError(IngestError):
  pass

class ManifestVersionError(ManifestError):
  found: str
  expected: str

  def __init__(self, found: str, expected: str):
    self.found = found
    self.expected = expected
    super().__init__(f'Manifest Version Error: found {found!r}, expected {expected!r}')

class ManifestValidationError(ManifestError):
  def __init__(self, reason: str):
    self.reason = reason
    super().__init__(f'Manifest Validation Error: {reason}')

class DatasetError(ChurnGridError):
  def __init__(self, reason: str):
    self.reason = reason
    super().__init__(f'Dataset Error: {reason}')

class ShapeError(ChurnGridError):
  operation: str
  expected: Tuple[int, ...]
  found: Tuple[int, ...]

  def __init__(self, operation: str, expected: any, found: any):
    self.operation = operation
    self.expected = expected
    self.found = found
    super().__init__(f'Shape Error in {operation}: expected {expected}, found {found}')

class ArchitectureMismatchError(ChurnGridError):
  def __init__(self, expected: any, found: any):
    self.expected = expected
    self.found = found
    super().__init__(f'Architecture Mismatch: expected {expected}, found {found}')

class CheckpointError(ChurnGridError):
  pass

class CorruptCheckpointError(CheckpointError):
  def __init__(self, reason: Optional[str]=None, error: Optional[Exception]=None):
    super().__init__(f'Corrupt Checkpoint{f" ({reason})" if reason else ""}{f": {repr(error)}" if error else ""}')

class TrainingError(ChurnGridError):
  pass

class TrainingDivergenceError(TrainingError):
  epoch: int
  batch: int
  loss: float

  def __init__(self, epoch: int, batch: int, loss: float):
    self.epoch = epoch
    self.batch = batch
    self.loss = loss
    super().__init__(f'Training diverged at epoch {epoch} batch {batch} with loss {loss}')

class MetricError(ChurnGridError):
  def __init__(self, metric: str, reason: str):
    self.metric = metric
    self.reason = reason
    super().__init__(f'Metric Error in {metric}: {reason}')

class ReportError(ChurnGridError):
  def __init__(self, reason: str):
    self.reason = reason
    super().__init__(f'Report Error: {reason}')

class LocationError(Exception):
  url: str

  def __init__(self, url: str, error: Optional[Exception]=None):
    self.url = url
    super().__init__(f'Location Error for URL {url}{f": {repr(error)}" if error else ""}')
