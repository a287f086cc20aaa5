import numpy as np
import pytest

from sklearn.linear_model import LogisticRegression

from ..baseline import BaselineConfig, LinearModel, feature_arrays, objective, predict_logistic, select_l2, standardization, train_logistic, validation_loss
from ..encoder import FEATURE_COUNT, features_frame
from ..error import ConfigurationError, DatasetError, ShapeError

def noisy_data(count: int, width: int, seed: int):
  generator = np.random.default_rng(seed)
  features = generator.normal(size=(count, width)) * generator.uniform(0.5, 3.0, size=width) + generator.normal(size=width)
  scores = features @ generator.normal(size=width) * 0.5
  labels = (generator.uniform(size=count) < 1 / (1 + np.exp(-scores))).astype(int)
  return features, labels

@pytest.fixture
def config() -> BaselineConfig:
  yield BaselineConfig({'max_iterations': 5000, 'tolerance': 1e-8})

def test_separable_toy_data():
  features = np.array([[-3.0], [-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0], [3.0]])
  labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
  model = train_logistic(features=features, labels=labels, l2_strength=1e-3)
  predictions = predict_logistic(model=model, features=features)
  assert np.array_equal((predictions >= 0.5).astype(int), labels)

def test_strong_regularization_tends_to_the_prior(config):
  features, labels = noisy_data(count=200, width=3, seed=1)
  norms = [np.linalg.norm(train_logistic(features=features, labels=labels, l2_strength=l2, config=config).weights) for l2 in [1.0, 100.0, 1e4]]
  assert norms[0] > norms[1] > norms[2]
  model = train_logistic(features=features, labels=labels, l2_strength=1e4, config=config)
  prior = labels.mean()
  assert norms[2] < 0.02
  assert np.abs(predict_logistic(model=model, features=features) - prior).max() < 0.02

def test_objective_gradient():
  generator = np.random.default_rng(2)
  standardized = generator.normal(size=(30, 4))
  labels = generator.integers(0, 2, size=30)
  weights = generator.normal(size=4)
  intercept = 0.3
  _, weight_gradient, intercept_gradient = objective(weights=weights, intercept=intercept, standardized=standardized, labels=labels, l2_strength=2.0)
  epsilon = 1e-6
  for position in range(4):
    step = np.zeros(4)
    step[position] = epsilon
    plus = objective(weights=weights + step, intercept=intercept, standardized=standardized, labels=labels, l2_strength=2.0)[0]
    minus = objective(weights=weights - step, intercept=intercept, standardized=standardized, labels=labels, l2_strength=2.0)[0]
    numeric = (plus - minus) / (2 * epsilon)
    assert abs(numeric - weight_gradient[position]) / max(abs(numeric), abs(weight_gradient[position]), 1e-5) < 1e-6
  plus = objective(weights=weights, intercept=intercept + epsilon, standardized=standardized, labels=labels, l2_strength=2.0)[0]
  minus = objective(weights=weights, intercept=intercept - epsilon, standardized=standardized, labels=labels, l2_strength=2.0)[0]
  numeric = (plus - minus) / (2 * epsilon)
  assert abs(numeric - intercept_gradient) / max(abs(numeric), abs(intercept_gradient), 1e-5) < 1e-6

def test_training_decreases_loss(config):
  features, labels = noisy_data(count=100, width=5, seed=3)
  mean, scale = standardization(features=features)
  model = train_logistic(features=features, labels=labels, l2_strength=1.0, config=config)
  initial = np.random.Generator(np.random.Philox(config.seed)).normal(0.0, 0.01, size=5)
  standardized = (features - mean) / scale
  assert objective(weights=model.weights, intercept=model.intercept, standardized=standardized, labels=labels, l2_strength=1.0)[0] < objective(weights=initial, intercept=0.0, standardized=standardized, labels=labels, l2_strength=1.0)[0]

def test_predict():
  model = LinearModel(weights=np.zeros(3), intercept=0.0, feature_mean=np.zeros(3), feature_scale=np.ones(3))
  assert predict_logistic(model=model, features=np.ones((2, 3))).tolist() == [0.5, 0.5]
  generator = np.random.default_rng(4)
  model = LinearModel(weights=generator.normal(size=3), intercept=-0.4, feature_mean=generator.normal(size=3), feature_scale=generator.uniform(0.5, 2, size=3))
  points = generator.normal(size=(10, 3)) * 3
  predictions = predict_logistic(model=model, features=points)
  for point, prediction in zip(points, predictions):
    score = sum(w * (x - m) / s for w, x, m, s in zip(model.weights, point, model.feature_mean, model.feature_scale)) + model.intercept
    assert abs(prediction - 1 / (1 + np.exp(-score))) < 1e-12
    assert 0 < prediction < 1
  with pytest.raises(ShapeError):
    predict_logistic(model=model, features=np.ones((2, 4)))

def test_folded_parameters(config):
  features, labels = noisy_data(count=120, width=4, seed=5)
  model = train_logistic(features=features, labels=labels, l2_strength=1.0, config=config)
  weights, intercept = model.folded()
  folded = 1 / (1 + np.exp(-(features @ weights + intercept)))
  assert np.abs(folded - predict_logistic(model=model, features=features)).max() < 1e-10

def test_matches_independent_solver(config):
  features, labels = noisy_data(count=200, width=5, seed=6)
  model = train_logistic(features=features, labels=labels, l2_strength=1.0, config=config)
  reference = LogisticRegression(C=1.0, tol=1e-12, max_iter=10000).fit(model.standardize(features=features), labels)
  assert np.allclose(model.weights, reference.coef_[0], atol=1e-4)
  assert model.intercept == pytest.approx(reference.intercept_[0], abs=1e-4)

def test_constant_features():
  features = np.column_stack([np.linspace(-1, 1, 20), np.full(20, 7.0)])
  labels = (features[:, 0] > 0).astype(int)
  mean, scale = standardization(features=features)
  assert scale[1] == 1.0
  model = train_logistic(features=features, labels=labels, l2_strength=1.0)
  assert np.all(np.isfinite(predict_logistic(model=model, features=features)))

def test_single_class_rejected():
  with pytest.raises(DatasetError):
    train_logistic(features=np.ones((4, 2)), labels=np.zeros(4), l2_strength=1.0)

def test_select_l2(config):
  features, labels = noisy_data(count=300, width=4, seed=7)
  grid = BaselineConfig({'l2_grid': [0.1, 10.0, 1e5], 'max_iterations': 5000, 'tolerance': 1e-8})
  model, losses = select_l2(train_features=features[:200], train_labels=labels[:200], val_features=features[200:], val_labels=labels[200:], config=grid)
  assert len(losses) == 3
  assert model.l2_strength == grid.l2_grid[int(np.argmin(losses))]
  assert losses[int(np.argmin(losses))] == validation_loss(model=model, features=features[200:], labels=labels[200:])

def test_select_l2_keeps_earliest_tie():
  features, labels = noisy_data(count=60, width=2, seed=8)
  grid = BaselineConfig({'l2_grid': [1.0, 1.0]})
  model, losses = select_l2(train_features=features, train_labels=labels, val_features=features, val_labels=labels, config=grid)
  assert losses[0] == losses[1]
  assert model.l2_strength == 1.0

def test_feature_arrays():
  pixels = np.zeros((2, 3, 336, 3), dtype=np.uint8)
  features, labels = feature_arrays(frame=features_frame(pixels=pixels, crop_offsets=[3, 4], labels=[1, 0]))
  assert features.shape == (2, FEATURE_COUNT)
  assert features[:, -1].tolist() == [3.0, 4.0]
  assert labels.tolist() == [1, 0]

def test_config_validation():
  with pytest.raises(ConfigurationError):
    BaselineConfig({'l2_grid': []})
  with pytest.raises(ConfigurationError):
    BaselineConfig({'tolerance': 0.0})
