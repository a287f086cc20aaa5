from __future__ import annotations
import io
import logging
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple
from scipy.stats import rankdata
from .base import Options
from .error import ConfigurationError, MetricError, ReportError
from .locator import read_bytes, read_text, write_bytes, write_text

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-15
CALIBRATION_COLUMNS = ['bin', 'lower', 'upper', 'mean_predicted', 'observed_rate', 'count']
DENSITY_COLUMNS = ['bin', 'lower', 'upper', 'negatives', 'positives']
COMPARISON_COLUMNS = ['model', 'auc', 'log_loss', 'error_rate', 'tp5', 'brier', 'top_decile_lift']

@dataclass(frozen=True)
class ScoredSet:
  probabilities: np.ndarray
  labels: np.ndarray

  def __post_init__(self):
    probabilities = np.asarray(self.probabilities, dtype=np.float64).reshape(-1)
    labels = np.asarray(self.labels).reshape(-1)
    if len(probabilities) != len(labels) or not len(labels):
      raise MetricError(metric='ScoredSet', reason=f'needs equal non-zero lengths, found {len(probabilities)} and {len(labels)}')
    if not np.all(np.isfinite(probabilities)) or np.any(probabilities < 0) or np.any(probabilities > 1):
      raise MetricError(metric='ScoredSet', reason='probabilities must lie in [0, 1]')
    if not np.all(np.isin(labels, [0, 1])):
      raise MetricError(metric='ScoredSet', reason='labels must be 0 or 1')
    object.__setattr__(self, 'probabilities', probabilities)
    object.__setattr__(self, 'labels', labels.astype(np.int64))

  def __len__(self) -> int:
    return len(self.labels)

  @property
  def positives(self) -> int:
    return int(self.labels.sum())

  def ranked(self) -> np.ndarray:
    """Indices by descending probability, ties by original index."""
    return np.lexsort((np.arange(len(self)), -self.probabilities))

@dataclass(frozen=True)
class CalibrationBin:
  lower: float
  upper: float
  count: int
  mean_predicted: Optional[float] = None
  observed_rate: Optional[float] = None

  @property
  def defined(self) -> bool:
    return self.count > 0

@dataclass(frozen=True)
class DensityBin:
  lower: float
  upper: float
  negatives: int
  positives: int

@dataclass(frozen=True)
class EvalReport:
  auc: float
  log_loss: float
  error_rate: float
  tp5: float
  brier: float
  top_decile_lift: float
  count: int
  positives: int
  calibration: Tuple[CalibrationBin, ...]
  density: Tuple[DensityBin, ...]

  @property
  def summary(self) -> Dict[str, any]:
    return {
      'auc': self.auc,
      'log_loss': self.log_loss,
      'error_rate': self.error_rate,
      'tp5': self.tp5,
      'brier': self.brier,
      'top_decile_lift': self.top_decile_lift,
      'count': self.count,
      'positives': self.positives,
    }

class ReportSummary(Options):
  defaults = {
    'auc': 0.0,
    'log_loss': 0.0,
    'error_rate': 0.0,
    'tp5': 0.0,
    'brier': 0.0,
    'top_decile_lift': 0.0,
    'count': 0,
    'positives': 0,
  }
  section = 'report'

def auc(scored: ScoredSet) -> float:
  """Mann-Whitney statistic with ties counted as one half."""
  positives = scored.positives
  negatives = len(scored) - positives
  if not positives or not negatives:
    raise MetricError(metric='auc', reason='both classes must be present')
  ranks = rankdata(scored.probabilities, method='average')
  return float((ranks[scored.labels == 1].sum() - positives * (positives + 1) / 2) / (positives * negatives))

def log_loss(scored: ScoredSet, clamp_eps: float=CLAMP_EPS) -> float:
  p = np.clip(scored.probabilities, clamp_eps, 1 - clamp_eps)
  return float(-np.mean(np.where(scored.labels == 1, np.log(p), np.log1p(-p))))

def brier(scored: ScoredSet) -> float:
  return float(np.mean((scored.probabilities - scored.labels) ** 2))

def error_rate(scored: ScoredSet, cutoff: float=0.5) -> float:
  return float(np.mean((scored.probabilities >= cutoff).astype(np.int64) != scored.labels))

def accuracy(scored: ScoredSet, cutoff: float=0.5) -> float:
  return 1 - error_rate(scored=scored, cutoff=cutoff)

def top_fraction_rate(scored: ScoredSet, fraction: float) -> float:
  k = max(1, int(np.floor(fraction * len(scored))))
  return float(scored.labels[scored.ranked()[:k]].mean())

def tp5(scored: ScoredSet) -> float:
  """Share of positives among the top 5% most probable churners."""
  if len(scored) < 20:
    raise MetricError(metric='tp5', reason=f'needs at least 20 instances, found {len(scored)}')
  return top_fraction_rate(scored=scored, fraction=0.05)

def top_decile_lift(scored: ScoredSet) -> float:
  if len(scored) < 10:
    raise MetricError(metric='top_decile_lift', reason=f'needs at least 10 instances, found {len(scored)}')
  if not scored.positives:
    raise MetricError(metric='top_decile_lift', reason='no positive instances')
  return top_fraction_rate(scored=scored, fraction=0.10) / (scored.positives / len(scored))

def bin_indices(probabilities: np.ndarray, n_bins: int) -> np.ndarray:
  """Equal-width bins [i/n, (i+1)/n); the last bin is closed."""
  if n_bins < 2:
    raise MetricError(metric='bins', reason=f'n_bins {n_bins} must be at least 2')
  return np.minimum(np.floor(probabilities * n_bins).astype(np.int64), n_bins - 1)

def calibration_curve(scored: ScoredSet, n_bins: int=20) -> Tuple[CalibrationBin, ...]:
  indices = bin_indices(probabilities=scored.probabilities, n_bins=n_bins)
  bins = []
  for index in range(n_bins):
    selected = indices == index
    count = int(selected.sum())
    bins.append(CalibrationBin(
      lower=index / n_bins,
      upper=(index + 1) / n_bins,
      count=count,
      mean_predicted=float(scored.probabilities[selected].mean()) if count else None,
      observed_rate=float(scored.labels[selected].mean()) if count else None
    ))
  return tuple(bins)

def probability_density(scored: ScoredSet, n_bins: int=20) -> Tuple[DensityBin, ...]:
  """Unnormalized per-class histograms of predicted churn probability."""
  indices = bin_indices(probabilities=scored.probabilities, n_bins=n_bins)
  negatives = np.bincount(indices[scored.labels == 0], minlength=n_bins)
  positives = np.bincount(indices[scored.labels == 1], minlength=n_bins)
  return tuple(
    DensityBin(lower=i / n_bins, upper=(i + 1) / n_bins, negatives=int(negatives[i]), positives=int(positives[i]))
    for i in range(n_bins)
  )

def evaluate(scored: ScoredSet, n_bins: int=20) -> EvalReport:
  return EvalReport(
    auc=auc(scored=scored),
    log_loss=log_loss(scored=scored),
    error_rate=error_rate(scored=scored),
    tp5=tp5(scored=scored),
    brier=brier(scored=scored),
    top_decile_lift=top_decile_lift(scored=scored),
    count=len(scored),
    positives=scored.positives,
    calibration=calibration_curve(scored=scored, n_bins=n_bins),
    density=probability_density(scored=scored, n_bins=n_bins)
  )

def calibration_frame(report: EvalReport) -> pd.DataFrame:
  return pd.DataFrame([
    [i, b.lower, b.upper, b.mean_predicted, b.observed_rate, b.count]
    for i, b in enumerate(report.calibration)
  ], columns=CALIBRATION_COLUMNS)

def density_frame(report: EvalReport) -> pd.DataFrame:
  return pd.DataFrame([
    [i, b.lower, b.upper, b.negatives, b.positives]
    for i, b in enumerate(report.density)
  ], columns=DENSITY_COLUMNS)

def float_csv(frame: pd.DataFrame) -> bytes:
  return frame.to_csv(index=False, lineterminator='\n', float_format='%.17g').encode('utf-8')

def write_report(report: EvalReport, path: str):
  """`path` holds the summary; calibration and density bins go to sibling CSVs."""
  summary = ReportSummary(report.summary)
  write_text(path=path, text=summary.to_text())
  write_bytes(path=f'{path}.calibration.csv', resource=float_csv(frame=calibration_frame(report=report)))
  write_bytes(path=f'{path}.density.csv', resource=float_csv(frame=density_frame(report=report)))
  log.info('Wrote report to %s (auc %.4f, log-loss %.4f)', path, report.auc, report.log_loss)

def read_frame(path: str, columns: Sequence[str]) -> pd.DataFrame:
  frame = pd.read_csv(io.BytesIO(read_bytes(path=path)), float_precision='round_trip')
  if list(frame.columns) != list(columns):
    raise ReportError(f'unexpected columns {list(frame.columns)} in {path}')
  return frame

def optional_float(value: float) -> Optional[float]:
  return None if pd.isna(value) else float(value)

def load_report(path: str) -> EvalReport:
  try:
    summary = ReportSummary.from_text(text=read_text(path=path))
  except ConfigurationError as e:
    raise ReportError(f'{path}: {e}')
  calibration = read_frame(path=f'{path}.calibration.csv', columns=CALIBRATION_COLUMNS)
  density = read_frame(path=f'{path}.density.csv', columns=DENSITY_COLUMNS)
  return EvalReport(
    **summary.dictionary_representation,
    calibration=tuple(
      CalibrationBin(lower=float(r['lower']), upper=float(r['upper']), count=int(r['count']), mean_predicted=optional_float(r['mean_predicted']), observed_rate=optional_float(r['observed_rate']))
      for r in calibration.to_dict(orient='records')
    ),
    density=tuple(
      DensityBin(lower=float(r['lower']), upper=float(r['upper']), negatives=int(r['negatives']), positives=int(r['positives']))
      for r in density.to_dict(orient='records')
    )
  )

def compare_reports(reports: Dict[str, EvalReport]) -> pd.DataFrame:
  """One row per model, best AUC first; equal AUCs keep the given order."""
  if not reports:
    raise ReportError('nothing to compare')
  frame = pd.DataFrame([
    [name, r.auc, r.log_loss, r.error_rate, r.tp5, r.brier, r.top_decile_lift]
    for name, r in reports.items()
  ], columns=COMPARISON_COLUMNS)
  return frame.sort_values('auc', ascending=False, kind='stable').reset_index(drop=True)

def write_comparison(frame: pd.DataFrame, path: str):
  write_bytes(path=path, resource=float_csv(frame=frame))
