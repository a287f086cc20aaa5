"""
Synthetic prepaid market.

Every customer draws from an independent Philox (counter-based) stream keyed by
SeedSequence(entropy=seed, spawn_key=(customer_index,)), so a customer's events depend only
on the market seed and the customer's index, never on generation order.

Calls follow a Poisson process whose intensity is constant within each 2-hour local slice:
daily rate (lognormal across customers) x diurnal weight x weekday/weekend factor x churn
multiplier. Base rates are rescaled once per population (`rate_scale`) so that the expected
calls per customer-day inside the horizon equal `call_rate_mean`. Top-ups are a renewal
process with exponential gaps and coupon amounts. A latent churner stops topping up at its
decision time; over the preceding days its call intensity follows the decay profile, scaled by
the signal strength, and stays at the last profile value afterwards.
"""
from __future__ import annotations
import io
import logging
import re
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union
from config import market_config
from .base import Options
from .error import IngestError, HeaderError
from .events import CdrRecord, CustomerTimeline, Direction, ObservationWindow, Service, TopupRecord, DAY_SECONDS, SLICE_SECONDS, SLICES_PER_DAY, WINDOW_SECONDS
from .encoder import MONDAY_REFERENCE
from .ingest import Stream, stream_text, format_csv
from .locator import read_bytes, write_bytes

log = logging.getLogger(__name__)

GROUND_TRUTH_COLUMNS = ['customer_id', 'latent_churner', 'decision_time']

class MarketConfig(Options):
  defaults = market_config
  section = 'market'

  market_id: str
  n_customers: int
  horizon_days: int
  start_time: int
  tz_offset: int
  call_rate_mean: float
  call_rate_sigma: float
  diurnal_profile: List[float]
  weekend_multiplier: float
  incoming_share: float
  sms_share: float
  mean_call_duration: float
  topup_mean_gap_days: float
  topup_coupons: List[float]
  topup_coupon_weights: List[float]
  topup_max_coupon: float
  churn_fraction: float
  decay_profile: List[float]
  signal_strength: float
  decision_jitter_days: int
  seed: int

  def validate(self):
    self.require('market_id', bool(self.market_id) and ',' not in self.market_id, 'must be a non-empty token')
    self.require('n_customers', self.n_customers >= 1, 'must be at least 1')
    self.require('horizon_days', self.horizon_days >= 56, 'must cover an observation and a label window (56 days)')
    self.require('horizon_days', self.last_window_start >= self.first_window_start, 'leaves no aligned observation window')
    self.require('start_time', self.start_time > 0, 'must be positive')
    self.require('call_rate_mean', self.call_rate_mean > 0, 'must be positive')
    self.require('call_rate_sigma', self.call_rate_sigma >= 0, 'must be non-negative')
    self.require('diurnal_profile', len(self.diurnal_profile) == SLICES_PER_DAY, f'needs {SLICES_PER_DAY} weights')
    self.require('diurnal_profile', all(w >= 0 for w in self.diurnal_profile) and sum(self.diurnal_profile) > 0, 'weights must be non-negative with a positive sum')
    self.require('weekend_multiplier', self.weekend_multiplier > 0, 'must be positive')
    self.require('incoming_share', 0 <= self.incoming_share <= 1, 'must be in [0, 1]')
    self.require('sms_share', 0 <= self.sms_share <= 1, 'must be in [0, 1]')
    self.require('mean_call_duration', self.mean_call_duration > 0, 'must be positive')
    self.require('topup_mean_gap_days', self.topup_mean_gap_days > 0, 'must be positive')
    self.require('topup_coupons', len(self.topup_coupons) > 0 and all(c > 0 for c in self.topup_coupons), 'must be non-empty and positive')
    self.require('topup_coupon_weights', len(self.topup_coupon_weights) == len(self.topup_coupons) and all(w > 0 for w in self.topup_coupon_weights), 'needs one positive weight per coupon')
    self.require('topup_max_coupon', self.topup_max_coupon >= max(self.topup_coupons), 'must be at least the largest coupon')
    self.require('churn_fraction', 0 < self.churn_fraction < 1, 'must be in (0, 1)')
    self.require('decay_profile', len(self.decay_profile) > 0 and all(0 <= m <= 1 for m in self.decay_profile), 'must be non-empty with multipliers in [0, 1]')
    self.require('signal_strength', 0 <= self.signal_strength <= 1, 'must be in [0, 1]')
    self.require('decision_jitter_days', 0 <= self.decision_jitter_days <= 28, 'must be in [0, 28]')

  @property
  def horizon_end(self) -> int:
    return self.start_time + self.horizon_days * DAY_SECONDS

  @property
  def first_window_start(self) -> int:
    window = ObservationWindow.aligned(timestamp=self.start_time + SLICE_SECONDS - 1, tz_offset=self.tz_offset)
    return window.start

  @property
  def last_window_start(self) -> int:
    return self.horizon_end - 2 * WINDOW_SECONDS

  @property
  def weekday_factor(self) -> float:
    # keeps the weekly mean at 1
    return 7 / (5 + 2 * self.weekend_multiplier)

  @property
  def diurnal_weights(self) -> np.ndarray:
    profile = np.asarray(self.diurnal_profile, dtype=np.float64)
    return profile / profile.mean()

@dataclass(frozen=True)
class CustomerTruth:
  customer_id: str
  latent_churner: bool
  decision_time: Optional[int] = None

@dataclass(frozen=True)
class GroundTruth:
  customers: Tuple[CustomerTruth, ...]

  def __getitem__(self, customer_id: str) -> CustomerTruth:
    return self.by_id[customer_id]

  @property
  def by_id(self) -> Dict[str, CustomerTruth]:
    return {c.customer_id: c for c in self.customers}

  @property
  def churner_share(self) -> float:
    return sum(c.latent_churner for c in self.customers) / len(self.customers) if self.customers else 0.0

@dataclass(frozen=True)
class Population:
  config: MarketConfig
  timelines: Tuple[CustomerTimeline, ...]
  window_starts: Tuple[int, ...]
  ground_truth: GroundTruth

  @property
  def cdrs(self) -> List[CdrRecord]:
    return [r for t in self.timelines for r in t.cdrs]

  @property
  def topups(self) -> List[TopupRecord]:
    return [r for t in self.timelines for r in t.topups]

def customer_id_for(index: int) -> str:
  return f'c{index:06d}'

def customer_generator(seed: int, index: int) -> np.random.Generator:
  return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(index,))))

def slice_starts(config: MarketConfig) -> np.ndarray:
  """Local-aligned 2-hour slice starts overlapping the horizon."""
  first = ObservationWindow.aligned(timestamp=config.start_time, tz_offset=config.tz_offset).start
  return np.arange(first, config.horizon_end, SLICE_SECONDS, dtype=np.int64)

def churn_multipliers(config: MarketConfig, starts: np.ndarray, decision_time: Optional[Union[int, np.ndarray]]) -> np.ndarray:
  """Per-slice activity multipliers; an array of decision times gives one row per decision time."""
  if decision_time is None:
    return np.ones(len(starts), dtype=np.float64)
  profile = np.asarray(config.decay_profile, dtype=np.float64)
  days_before = (np.asarray(decision_time)[..., np.newaxis] - starts) / DAY_SECONDS
  indices = np.clip(len(profile) - np.ceil(days_before), 0, len(profile) - 1).astype(np.int64)
  multipliers = np.where(days_before > len(profile), 1.0, profile[indices])
  return 1 - config.signal_strength * (1 - multipliers)

def call_rates(config: MarketConfig, daily_rate: float, decision_time: Optional[int]=None, starts: Optional[np.ndarray]=None) -> np.ndarray:
  """Expected call count per slice."""
  starts = starts if starts is not None else slice_starts(config=config)
  local = starts + config.tz_offset
  day_slice = (local % DAY_SECONDS) // SLICE_SECONDS
  weekday = ((local - MONDAY_REFERENCE) // DAY_SECONDS) % 7
  week = np.where(weekday >= 5, config.weekend_multiplier, 1.0) * config.weekday_factor
  diurnal = config.diurnal_weights[day_slice]
  return daily_rate / SLICES_PER_DAY * diurnal * week * churn_multipliers(config=config, starts=starts, decision_time=decision_time)

def window_start_count(config: MarketConfig) -> int:
  return (config.last_window_start - config.first_window_start) // SLICE_SECONDS + 1

def rate_scale(config: MarketConfig) -> float:
  """
  Factor applied to every customer's base daily rate so that the population's expected calls per
  day inside the horizon equal `call_rate_mean`.

  The expectation runs over churn status, the observation window start and the decision jitter
  (on an hourly grid), and counts only the part of each slice inside the horizon.
  """
  starts = slice_starts(config=config)
  inside = np.clip(np.minimum(starts + SLICE_SECONDS, config.horizon_end) - np.maximum(starts, config.start_time), 0, None) / SLICE_SECONDS
  base = call_rates(config=config, daily_rate=1.0, starts=starts) * inside
  jitters = np.arange(0, config.decision_jitter_days * DAY_SECONDS + 1, 3600)
  window_starts = config.first_window_start + SLICE_SECONDS * np.arange(window_start_count(config=config))
  churner = np.mean([
    (churn_multipliers(config=config, starts=starts, decision_time=window_start + WINDOW_SECONDS - jitters) @ base).mean()
    for window_start in window_starts
  ])
  expected = (1 - config.churn_fraction) * base.sum() + config.churn_fraction * churner
  return config.horizon_days / expected

def generate_calls(config: MarketConfig, rng: np.random.Generator, customer_id: str, rates: np.ndarray, starts: np.ndarray) -> List[CdrRecord]:
  counts = rng.poisson(rates)
  total = int(counts.sum())
  timestamps = np.repeat(starts, counts) + rng.integers(0, SLICE_SECONDS, size=total)
  incoming = rng.random(total) < config.incoming_share
  sms = rng.random(total) < config.sms_share
  durations = np.maximum(1, np.rint(rng.exponential(config.mean_call_duration, size=total))).astype(np.int64)
  inside = (timestamps >= config.start_time) & (timestamps < config.horizon_end)
  order = np.argsort(timestamps, kind='stable')
  return [
    CdrRecord(
      customer_id=customer_id,
      timestamp=int(timestamps[i]),
      direction=Direction.MTC if incoming[i] else Direction.MOC,
      service=Service.SMS if sms[i] else Service.VOICE,
      duration=0 if sms[i] else int(durations[i])
    )
    for i in order if inside[i]
  ]

def generate_topups(config: MarketConfig, rng: np.random.Generator, customer_id: str, stop_time: int) -> List[TopupRecord]:
  gap = config.topup_mean_gap_days * DAY_SECONDS
  span = stop_time - config.start_time
  gaps = rng.exponential(gap, size=int(np.ceil(span / gap * 2)) + 8)
  while gaps.sum() < span:
    gaps = np.concatenate([gaps, rng.exponential(gap, size=len(gaps))])
  timestamps = config.start_time + np.floor(np.cumsum(gaps)).astype(np.int64)
  timestamps = timestamps[timestamps < stop_time]
  weights = np.asarray(config.topup_coupon_weights, dtype=np.float64)
  amounts = rng.choice(np.asarray(config.topup_coupons, dtype=np.float64), size=len(timestamps), p=weights / weights.sum())
  return [
    TopupRecord(customer_id=customer_id, timestamp=int(t), amount=float(a))
    for t, a in zip(timestamps, amounts)
  ]

def generate_customer(config: MarketConfig, index: int, scale: Optional[float]=None) -> Tuple[CustomerTimeline, int, CustomerTruth]:
  scale = scale if scale is not None else rate_scale(config=config)
  rng = customer_generator(seed=config.seed, index=index)
  customer_id = customer_id_for(index=index)
  window_start = config.first_window_start + int(rng.integers(window_start_count(config=config))) * SLICE_SECONDS
  latent_churner = bool(rng.random() < config.churn_fraction)
  decision_time = None
  if latent_churner:
    window_end = window_start + WINDOW_SECONDS
    decision_time = window_end - int(rng.integers(0, config.decision_jitter_days * DAY_SECONDS + 1))
  sigma = config.call_rate_sigma
  daily_rate = scale * float(rng.lognormal(mean=np.log(config.call_rate_mean) - sigma ** 2 / 2, sigma=sigma))
  starts = slice_starts(config=config)
  rates = call_rates(config=config, daily_rate=daily_rate, decision_time=decision_time, starts=starts)
  cdrs = generate_calls(config=config, rng=rng, customer_id=customer_id, rates=rates, starts=starts)
  topups = generate_topups(
    config=config,
    rng=rng,
    customer_id=customer_id,
    stop_time=decision_time if decision_time is not None else config.horizon_end
  )
  timeline = CustomerTimeline(customer_id=customer_id, cdrs=tuple(cdrs), topups=tuple(topups))
  truth = CustomerTruth(customer_id=customer_id, latent_churner=latent_churner, decision_time=decision_time)
  return timeline, window_start, truth

def generate_population(config: MarketConfig) -> Population:
  scale = rate_scale(config=config)
  customers = [generate_customer(config=config, index=i, scale=scale) for i in range(config.n_customers)]
  population = Population(
    config=config,
    timelines=tuple(c[0] for c in customers),
    window_starts=tuple(c[1] for c in customers),
    ground_truth=GroundTruth(customers=tuple(c[2] for c in customers))
  )
  log.info(
    'Generated %s: %d customers, %.3f latent churners, %d calls, %d top-ups',
    config.market_id,
    config.n_customers,
    population.ground_truth.churner_share,
    sum(len(t.cdrs) for t in population.timelines),
    sum(len(t.topups) for t in population.timelines)
  )
  return population

def next_market_id(market_id: str) -> str:
  match = re.fullmatch(r'(.*?)(\d+)', market_id)
  if match is None:
    return f'{market_id}-2'
  return f'{match[1]}{int(match[2]) + 1}'

def second_market(config: MarketConfig) -> MarketConfig:
  """A neighbouring market: busier, shorter calls, a later daily peak, pricier coupons, its own seed."""
  seed = int(np.random.SeedSequence(entropy=[config.seed, 2]).generate_state(1, dtype=np.uint32)[0])
  return config.replace(
    market_id=next_market_id(market_id=config.market_id),
    tz_offset=config.tz_offset + 3600,
    call_rate_mean=config.call_rate_mean * 1.2,
    mean_call_duration=config.mean_call_duration * 0.85,
    diurnal_profile=list(np.roll(config.diurnal_profile, 1)),
    weekend_multiplier=config.weekend_multiplier * 1.1,
    topup_mean_gap_days=config.topup_mean_gap_days * 0.9,
    topup_coupons=[c * 2 for c in config.topup_coupons],
    topup_max_coupon=config.topup_max_coupon * 2,
    seed=seed
  )

def format_ground_truth_csv(ground_truth: GroundTruth) -> bytes:
  frame = pd.DataFrame({
    'customer_id': [c.customer_id for c in ground_truth.customers],
    'latent_churner': [int(c.latent_churner) for c in ground_truth.customers],
    'decision_time': pd.array([c.decision_time for c in ground_truth.customers], dtype='Int64'),
  }, columns=GROUND_TRUTH_COLUMNS)
  return format_csv(frame=frame)

def write_ground_truth_csv(ground_truth: GroundTruth, path: str):
  write_bytes(path=path, resource=format_ground_truth_csv(ground_truth=ground_truth))

def parse_ground_truth_csv(stream: Stream) -> GroundTruth:
  frame = pd.read_csv(io.StringIO(stream_text(stream=stream)), dtype=str, keep_default_na=False)
  if list(frame.columns) != GROUND_TRUTH_COLUMNS:
    raise HeaderError(expected=GROUND_TRUTH_COLUMNS, found=list(frame.columns))
  try:
    customers = tuple(
      CustomerTruth(customer_id=customer_id, latent_churner=latent_churner == '1', decision_time=int(decision_time) if decision_time else None)
      for customer_id, latent_churner, decision_time in frame.itertuples(index=False, name=None)
    )
  except ValueError as e:
    raise IngestError(f'Malformed ground truth: {e}')
  return GroundTruth(customers=customers)

def read_ground_truth_csv(path: str) -> GroundTruth:
  return parse_ground_truth_csv(stream=read_bytes(path=path))
