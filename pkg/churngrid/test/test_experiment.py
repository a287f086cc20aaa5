import numpy as np
import pytest

from ..baseline import predict_logistic, select_l2
from ..dataset import build_manifest, encode_population
from ..encoder import EncoderConfig, flatten_pixels
from ..events import build_timelines
from ..metrics import ScoredSet, evaluate, log_loss
from ..nn.train import TrainConfig, train
from ..synth import MarketConfig, generate_population, second_market

def encode_market(config: MarketConfig):
  population = generate_population(config=config)
  manifest = build_manifest(population=population)
  timelines = build_timelines(cdrs=population.cdrs, topups=population.topups)
  encoder_config = EncoderConfig({'topup_saturation': config.topup_max_coupon})
  return {split: encode_population(timelines=timelines, manifest=manifest, config=encoder_config, split=split) for split in ['train', 'val', 'test']}

def features(images) -> np.ndarray:
  return np.array([flatten_pixels(pixels=p, crop_offset=o) for p, o in zip(images.pixels, images.crop_offsets)], dtype=np.float64)

@pytest.mark.slow
def test_default_market_experiment():
  config = MarketConfig()
  splits = encode_market(config=config)
  result = train(train_set=splits['train'], val_set=splits['val'], config=TrainConfig())
  probabilities, _ = result.checkpoint.predict(images=splits['test'])
  network_report = evaluate(scored=ScoredSet(probabilities=probabilities, labels=splits['test'].labels))
  assert network_report.auc >= 0.85
  assert network_report.log_loss <= 0.50

  model, _ = select_l2(
    train_features=features(images=splits['train']),
    train_labels=splits['train'].labels,
    val_features=features(images=splits['val']),
    val_labels=splits['val'].labels
  )
  baseline_report = evaluate(scored=ScoredSet(probabilities=predict_logistic(model=model, features=features(images=splits['test'])), labels=splits['test'].labels))
  assert network_report.auc >= baseline_report.auc

  losses = []
  for split in ['train', 'val', 'test']:
    probabilities, _ = result.checkpoint.predict(images=splits[split])
    losses.append(log_loss(scored=ScoredSet(probabilities=probabilities, labels=splits[split].labels)))
  assert max(losses) - min(losses) <= 0.08

  market2 = encode_market(config=second_market(config=config))
  probabilities, _ = result.checkpoint.predict(images=market2['test'])
  assert evaluate(scored=ScoredSet(probabilities=probabilities, labels=market2['test'].labels)).auc >= 0.75
