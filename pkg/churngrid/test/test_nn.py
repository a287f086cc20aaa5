import numpy as np
import pytest

from ..dataset import ImageSet, MeanImage
from ..error import ArchitectureMismatchError, ConfigurationError, CorruptCheckpointError, DatasetError, ShapeError, TrainingError
from ..metrics import error_rate, ScoredSet
from ..nn.checkpoint import MAGIC, PART_COUNT, Checkpoint, CheckpointMetadata, checkpoint_bytes, load_checkpoint, pack_parts, parse_checkpoint, save_checkpoint, unpack_parts
from ..nn.gradient import gradient_check, relative_error
from ..nn.layers import Conv2D, conv2d, conv2d_backward, dropout, Dropout, fully_connected, maxpool, maxpool_backward, prelu, prelu_backward, softmax, softmax_cross_entropy, window_count
from ..nn.model import INPUT_SHAPE, LayerSpec, Network, WiseNet, WISENET_SHAPES, format_descriptor, parse_descriptor, WISENET_LAYERS
from ..nn.optimizer import SGDMomentum, sgd_momentum_step
from ..nn.train import TrainConfig, epoch_seed, train

def numeric_gradient(f, array: np.ndarray, epsilon: float=1e-5) -> np.ndarray:
  gradient = np.zeros_like(array)
  flat = array.reshape(-1)
  for position in range(flat.size):
    original = flat[position]
    flat[position] = original + epsilon
    plus = f()
    flat[position] = original - epsilon
    minus = f()
    flat[position] = original
    gradient.reshape(-1)[position] = (plus - minus) / (2 * epsilon)
  return gradient

def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
  return max(relative_error(analytic=a, numeric=n) for a, n in zip(analytic.reshape(-1), numeric.reshape(-1)))

@pytest.fixture
def generator() -> np.random.Generator:
  yield np.random.default_rng(42)

@pytest.fixture(scope='module')
def network() -> WiseNet:
  network = WiseNet()
  network.initialize(seed=3)
  yield network

def random_inputs(count: int, seed: int=0, scale: float=0.3) -> np.ndarray:
  return np.random.default_rng(seed).normal(0.0, scale, size=(count, *INPUT_SHAPE))

def test_conv2d_example():
  inputs = np.arange(1, 8, dtype=np.float64).reshape(1, 1, 1, 7)
  kernels = np.array([1, 0, 0, 0, 0, -1], dtype=np.float64).reshape(1, 1, 1, 6)
  assert conv2d(inputs=inputs, kernels=kernels, bias=np.zeros(1)).reshape(-1).tolist() == [-5.0, -5.0]

def test_conv2d_shapes():
  outputs = conv2d(inputs=np.zeros((2, 3, 3, 336)), kernels=np.zeros((32, 3, 1, 6)), bias=np.zeros(32))
  assert outputs.shape == (2, 32, 3, 331)
  with pytest.raises(ShapeError):
    conv2d(inputs=np.zeros((1, 2, 3, 336)), kernels=np.zeros((32, 3, 1, 6)), bias=np.zeros(32))

@pytest.mark.parametrize('stride', [1, 2])
def test_conv2d_backward(generator, stride):
  inputs = generator.normal(size=(2, 2, 5, 8))
  kernels = generator.normal(size=(3, 2, 2, 3))
  bias = generator.normal(size=3)
  weights = generator.normal(size=conv2d(inputs=inputs, kernels=kernels, bias=bias, stride=stride).shape)
  loss = lambda: float(np.sum(conv2d(inputs=inputs, kernels=kernels, bias=bias, stride=stride) * weights))
  input_gradient, kernel_gradient, bias_gradient = conv2d_backward(inputs=inputs, kernels=kernels, output_gradient=weights, stride=stride)
  assert max_relative_error(input_gradient, numeric_gradient(f=loss, array=inputs)) < 1e-6
  assert max_relative_error(kernel_gradient, numeric_gradient(f=loss, array=kernels)) < 1e-6
  assert max_relative_error(bias_gradient, numeric_gradient(f=loss, array=bias)) < 1e-6

def test_maxpool_examples():
  assert window_count(length=321, kernel=2, stride=2, ceil_mode=True) == 161
  assert window_count(length=321, kernel=2, stride=2) == 160
  assert window_count(length=331, kernel=6, stride=1) == 326
  outputs, argmax = maxpool(inputs=np.array([1.0, 3.0, 2.0]).reshape(1, 1, 1, 3), kernel_height=1, kernel_width=2, stride=2, ceil_mode=True)
  assert outputs.reshape(-1).tolist() == [3.0, 2.0]
  assert argmax.reshape(-1).tolist() == [1, 0]

def test_maxpool_backward_routes_to_argmax():
  inputs = np.array([1.0, 3.0, 2.0, 5.0, 4.0]).reshape(1, 1, 1, 5)
  outputs, argmax = maxpool(inputs=inputs, kernel_height=1, kernel_width=2, stride=2, ceil_mode=True)
  assert outputs.reshape(-1).tolist() == [3.0, 5.0, 4.0]
  gradient = maxpool_backward(input_shape=inputs.shape, argmax=argmax, output_gradient=np.array([10.0, 20.0, 30.0]).reshape(1, 1, 1, 3), kernel_height=1, kernel_width=2, stride=2)
  assert gradient.reshape(-1).tolist() == [0.0, 10.0, 0.0, 20.0, 30.0]

def test_ceil_pooling_drops_windows_starting_past_the_input(generator):
  assert window_count(length=5, kernel=1, stride=3, ceil_mode=True) == 2
  outputs, _ = maxpool(inputs=np.arange(5.0).reshape(1, 1, 1, 5), kernel_height=1, kernel_width=1, stride=3, ceil_mode=True)
  assert outputs.reshape(-1).tolist() == [0.0, 3.0]
  for length in range(1, 12):
    for kernel in range(1, length + 1):
      for stride in range(1, 5):
        inputs = generator.normal(size=(1, 1, 1, length))
        outputs, argmax = maxpool(inputs=inputs, kernel_height=1, kernel_width=kernel, stride=stride, ceil_mode=True)
        assert np.all(np.isfinite(outputs))
        assert stride * (outputs.shape[3] - 1) < length
        gradient = maxpool_backward(input_shape=inputs.shape, argmax=argmax, output_gradient=np.ones_like(outputs), kernel_height=1, kernel_width=kernel, stride=stride)
        assert gradient.shape == inputs.shape
        assert gradient.sum() == outputs.size

def test_overlapping_maxpool_backward(generator):
  inputs = generator.normal(size=(2, 3, 2, 9))
  weights = generator.normal(size=(2, 3, 2, 4))
  loss = lambda: float(np.sum(maxpool(inputs=inputs, kernel_height=1, kernel_width=6, stride=1)[0] * weights))
  _, argmax = maxpool(inputs=inputs, kernel_height=1, kernel_width=6, stride=1)
  gradient = maxpool_backward(input_shape=inputs.shape, argmax=argmax, output_gradient=weights, kernel_height=1, kernel_width=6, stride=1)
  assert max_relative_error(gradient, numeric_gradient(f=loss, array=inputs)) < 1e-6

def test_prelu():
  assert prelu(inputs=np.array(3.0), slope=0.25) == 3.0
  assert prelu(inputs=np.array(-2.0), slope=0.25) == -0.5

def test_prelu_backward(generator):
  inputs = generator.normal(size=(4, 7))
  weights = generator.normal(size=(4, 7))
  slope = np.array([0.25])
  loss = lambda: float(np.sum(prelu(inputs=inputs, slope=slope[0]) * weights))
  input_gradient, slope_gradient = prelu_backward(inputs=inputs, slope=slope[0], output_gradient=weights)
  assert max_relative_error(np.array([slope_gradient]), numeric_gradient(f=loss, array=slope)) < 1e-6
  assert max_relative_error(input_gradient, numeric_gradient(f=loss, array=inputs)) < 1e-6

def test_fully_connected(generator):
  inputs = generator.normal(size=(3, 5))
  assert np.array_equal(fully_connected(inputs=inputs, weights=np.eye(5), bias=np.zeros(5)), inputs)
  with pytest.raises(ShapeError):
    fully_connected(inputs=inputs, weights=np.eye(4), bias=np.zeros(4))

def test_dropout(generator):
  inputs = np.ones(100000)
  for training in [True, False]:
    outputs, _ = dropout(inputs=inputs, rate=0.0, training=training, generator=generator)
    assert np.array_equal(outputs, inputs)
  outputs, _ = dropout(inputs=inputs, rate=0.5, training=False, generator=generator)
  assert np.array_equal(outputs, inputs)
  outputs, mask = dropout(inputs=inputs, rate=0.5, training=True, generator=generator)
  assert abs(np.mean(outputs > 0) - 0.5) < 0.01
  assert set(np.unique(outputs).tolist()) == {0.0, 2.0}
  assert np.array_equal(outputs, mask)

def test_unseeded_dropout_refuses_training_passes():
  layer = Dropout(rate=0.5)
  inputs = np.ones((2, 8))
  with pytest.raises(TrainingError, match='seed_dropout'):
    layer.forward(inputs=inputs, training=True)
  assert np.array_equal(layer.forward(inputs=inputs, training=False), inputs)
  assert np.array_equal(Dropout(rate=0.0).forward(inputs=inputs, training=True), inputs)
  network = WiseNet()
  network.initialize(seed=0)
  with pytest.raises(TrainingError, match='seed_dropout'):
    network.forward(inputs=np.zeros((1, *INPUT_SHAPE)), training=True)
  network.seed_dropout(seed=1)
  assert network.forward(inputs=np.zeros((1, *INPUT_SHAPE)), training=True).shape[0] == 1

def test_softmax_cross_entropy():
  loss, probabilities, _ = softmax_cross_entropy(logits=np.array([[0.0, 0.0]]), labels=[1])
  assert probabilities.tolist() == [[0.5, 0.5]]
  assert loss == pytest.approx(np.log(2))
  loss, probabilities, _ = softmax_cross_entropy(logits=np.array([[1000.0, 0.0]]), labels=[0])
  assert np.all(np.isfinite(probabilities))
  assert probabilities[0, 0] == pytest.approx(1.0)
  assert probabilities[0, 1] == pytest.approx(0.0)
  assert loss == pytest.approx(0.0)

def test_softmax_cross_entropy_gradient(generator):
  logits = generator.normal(size=(4, 2))
  labels = np.array([0, 1, 1, 0])
  _, _, gradient = softmax_cross_entropy(logits=logits, labels=labels)
  assert max_relative_error(gradient, numeric_gradient(f=lambda: softmax_cross_entropy(logits=logits, labels=labels)[0], array=logits)) < 1e-6

def test_shape_chain(network):
  assert network.shape_chain == WISENET_SHAPES
  assert network.shapes[network.capture_index + 1] == (1024,)
  assert len(network.layers) == 17
  expected = (32 * 3 * 6 + 32) + (32 * 32 * 3 * 6 + 32) + (5152 * 512 + 512) + (512 * 512 + 512) + (512 * 1024 + 1024) + (1024 * 2 + 2) + 5
  assert network.parameter_count == expected

def test_descriptor_round_trip(network):
  assert network.descriptor.splitlines()[0] == 'input 3 3 336'
  assert 'maxpool 1 2 2 ceil' in network.descriptor.splitlines()
  assert parse_descriptor(text=network.descriptor) == (WISENET_LAYERS, INPUT_SHAPE)
  with pytest.raises(ArchitectureMismatchError):
    LayerSpec.from_descriptor(descriptor='conv 32 1')
  with pytest.raises(ArchitectureMismatchError):
    LayerSpec.from_descriptor(descriptor='maxpool 1 2 2 round')
  with pytest.raises(ArchitectureMismatchError):
    LayerSpec.from_descriptor(descriptor='batchnorm')

def test_forward(network):
  inputs = random_inputs(count=3)
  logits = network.forward(inputs=inputs)
  probabilities = softmax(logits=logits)
  assert np.all(np.abs(probabilities.sum(axis=1) - 1) < 1e-12)
  churn, activations = network.infer(inputs=inputs, capture=True)
  assert np.all((churn >= 0) & (churn <= 1))
  assert np.array_equal(churn, probabilities[:, 1])
  assert activations.shape == (3, 1024)
  again, _ = network.infer(inputs=inputs)
  assert np.array_equal(churn, again)
  with pytest.raises(ShapeError):
    network.forward(inputs=np.zeros((1, 3, 336, 3)))

def test_initialize():
  network = WiseNet()
  network.initialize(seed=9)
  weights = network.layers[7].params['weight']
  assert weights.std() == pytest.approx(np.sqrt(2 / 5152), rel=0.01)
  assert np.all(network.layers[7].params['bias'] == 0)
  assert network.layers[1].params['slope'].tolist() == [0.25]
  with pytest.raises(ConfigurationError):
    network.initialize(seed=9, scheme='uniform')

def test_prelu_commutes_with_pooling(generator):
  inputs = generator.normal(size=(2, 4, 3, 40))
  for slope in [0.25, 0.01, 1.0]:
    pooled_first = prelu(inputs=maxpool(inputs=inputs, kernel_height=1, kernel_width=6)[0], slope=slope)
    activated_first = maxpool(inputs=prelu(inputs=inputs, slope=slope), kernel_height=1, kernel_width=6)[0]
    assert np.array_equal(pooled_first, activated_first)

def test_optimizer_closed_forms():
  parameter = np.array([1.0, -2.0])
  velocity = np.zeros(2)
  sgd_momentum_step(parameter=parameter, gradient=np.array([0.5, 1.0]), velocity=velocity, learning_rate=0.1, momentum=0.0)
  assert parameter.tolist() == pytest.approx([0.95, -2.1])
  unchanged = np.array([1.0, -2.0])
  sgd_momentum_step(parameter=unchanged, gradient=np.zeros(2), velocity=np.zeros(2), learning_rate=0.1, momentum=0.9, weight_decay=0.0)
  assert unchanged.tolist() == [1.0, -2.0]
  parameter = np.zeros(1)
  velocity = np.zeros(1)
  for _ in range(2):
    sgd_momentum_step(parameter=parameter, gradient=np.array([1.0]), velocity=velocity, learning_rate=0.01, momentum=0.9)
  assert velocity[0] == pytest.approx(-0.01 * 1.9)
  assert parameter[0] == pytest.approx(-0.01 - 0.019)
  decayed = np.array([2.0])
  sgd_momentum_step(parameter=decayed, gradient=np.zeros(1), velocity=np.zeros(1), learning_rate=0.1, momentum=0.0, weight_decay=0.5)
  assert decayed[0] == pytest.approx(1.9)
  with pytest.raises(ShapeError):
    sgd_momentum_step(parameter=np.zeros(2), gradient=np.zeros(3), velocity=np.zeros(2), learning_rate=0.1, momentum=0.9)

def test_optimizer_decays_weights_only():
  network = Network(specs=[LayerSpec(kind='fc', units=2)], input_shape=(3,))
  layer = network.layers[0]
  layer.params['weight'][...] = 1.0
  layer.params['bias'][...] = 1.0
  layer.grads = {'weight': np.zeros((2, 3)), 'bias': np.zeros(2)}
  SGDMomentum(learning_rate=0.1, momentum=0.9, weight_decay=0.5).step(network=network)
  assert np.allclose(layer.params['weight'], 0.95)
  assert np.all(layer.params['bias'] == 1.0)

def test_gradient_check(network):
  report = gradient_check(network=network, inputs=random_inputs(count=2, seed=1), labels=[0, 1], samples=20)
  assert report.checked > 0
  assert report.max_relative_error < 1e-4

@pytest.mark.slow
@pytest.mark.parametrize('seed', range(5))
def test_gradient_check_fresh_models(seed):
  model = WiseNet()
  model.initialize(seed=seed)
  report = gradient_check(network=model, inputs=random_inputs(count=2, seed=seed), labels=[0, 1], seed=seed)
  assert report.checked >= 200 * 6
  assert report.max_relative_error < 1e-4

def test_gradient_check_fully_connected():
  model = Network(specs=[LayerSpec(kind='fc', units=6), LayerSpec(kind='fc', units=2)], input_shape=(5,))
  model.initialize(seed=4)
  inputs = np.random.default_rng(4).normal(size=(3, 5))
  report = gradient_check(network=model, inputs=inputs, labels=[0, 1, 1])
  assert report.checked == 6 * 5 + 6 + 2 * 6 + 2
  assert report.max_relative_error < 1e-6

def test_gradient_check_catches_corrupted_conv(network, monkeypatch):
  backward = Conv2D.backward

  def flipped(self, output_gradient):
    input_gradient = backward(self, output_gradient=output_gradient)
    self.grads['weight'] = -self.grads['weight']
    return input_gradient

  monkeypatch.setattr(Conv2D, 'backward', flipped)
  report = gradient_check(network=network, inputs=random_inputs(count=2, seed=2), labels=[1, 0], samples=10)
  assert report.max_relative_error > 0.1
  assert report.layer_errors['0:conv 32 1 6 1:weight'] > 0.1

def checkpoint_for(network: WiseNet) -> Checkpoint:
  mean = MeanImage(values=np.random.default_rng(5).uniform(0, 255, size=(3, 336, 3)))
  return Checkpoint(network=network, mean=mean, metadata=CheckpointMetadata({'seed': 3, 'epoch': 2, 'val_log_loss': 0.61}))

def image_set(count: int, seed: int=0) -> ImageSet:
  generator = np.random.default_rng(seed)
  return ImageSet(
    customer_ids=tuple(f'c{i}' for i in range(count)),
    pixels=generator.integers(0, 256, size=(count, 3, 336, 3), dtype=np.uint8),
    labels=np.arange(count) % 2,
    crop_offsets=np.zeros(count)
  )

def test_checkpoint_round_trip(tmp_path, network):
  checkpoint = checkpoint_for(network=network)
  path = str(tmp_path / 'model.ckpt')
  save_checkpoint(checkpoint=checkpoint, path=path)
  loaded = load_checkpoint(path=path)
  assert loaded.metadata == checkpoint.metadata
  assert np.array_equal(loaded.mean.values, checkpoint.mean.values)
  for (_, _, original), (_, _, restored) in zip(checkpoint.network.parameters, loaded.network.parameters):
    assert np.array_equal(original, restored)
  images = image_set(count=3)
  assert np.array_equal(loaded.predict(images=images)[0], checkpoint.predict(images=images)[0])
  assert checkpoint_bytes(checkpoint=loaded) == checkpoint_bytes(checkpoint=checkpoint)

def test_checkpoint_corruption(network):
  data = checkpoint_bytes(checkpoint=checkpoint_for(network=network))
  assert data.startswith(MAGIC)
  with pytest.raises(CorruptCheckpointError):
    parse_checkpoint(data=data[:-1])
  with pytest.raises(CorruptCheckpointError):
    parse_checkpoint(data=data[:len(data) // 2])
  with pytest.raises(CorruptCheckpointError):
    parse_checkpoint(data=b'WISENET2' + data[len(MAGIC):])
  with pytest.raises(CorruptCheckpointError):
    parse_checkpoint(data=data + b'\x00')

def test_checkpoint_architecture_mismatch(network):
  data = checkpoint_bytes(checkpoint=checkpoint_for(network=network))
  descriptor, metadata, parameters, mean = unpack_parts(data=data[len(MAGIC):], count=PART_COUNT)
  altered = descriptor.decode('utf-8').replace('fc 512', 'fc 513', 1).encode('utf-8')
  with pytest.raises(ArchitectureMismatchError):
    parse_checkpoint(data=MAGIC + pack_parts(parts=[altered, metadata, parameters, mean]))

def test_pack_parts():
  parts = [b'', b'abc', b'\x00' * 9]
  assert unpack_parts(data=pack_parts(parts=parts), count=3) == parts

def test_epoch_seed():
  assert epoch_seed(seed=1, epoch=1, stream=0) == epoch_seed(seed=1, epoch=1, stream=0)
  assert epoch_seed(seed=1, epoch=1, stream=0) != epoch_seed(seed=1, epoch=2, stream=0)
  assert epoch_seed(seed=1, epoch=1, stream=0) != epoch_seed(seed=1, epoch=1, stream=1)

def test_train_requires_epochs():
  with pytest.raises(TrainingError):
    train(train_set=image_set(count=4), val_set=image_set(count=2), config=TrainConfig({'epochs': 0}))
  with pytest.raises(DatasetError):
    train(train_set=image_set(count=4), val_set=ImageSet.empty(), config=TrainConfig({'epochs': 1}))
  with pytest.raises(ConfigurationError):
    TrainConfig({'init_scheme': 'orthogonal'})

def test_train_is_deterministic():
  config = TrainConfig({'epochs': 2, 'batch_size': 4, 'seed': 6})
  first = train(train_set=image_set(count=10), val_set=image_set(count=4, seed=1), config=config)
  second = train(train_set=image_set(count=10), val_set=image_set(count=4, seed=1), config=config)
  assert checkpoint_bytes(checkpoint=first.checkpoint) == checkpoint_bytes(checkpoint=second.checkpoint)
  assert [r.epoch for r in first.history] == [1, 2]
  best = min(first.history, key=lambda r: r.val_log_loss)
  assert first.checkpoint.metadata.epoch == best.epoch
  assert first.checkpoint.metadata.val_log_loss == best.val_log_loss
  assert first.checkpoint.metadata.seed == 6

def separable_set(count: int, seed: int) -> ImageSet:
  generator = np.random.default_rng(seed)
  labels = np.arange(count) % 2
  pixels = generator.integers(0, 40, size=(count, 3, 336, 3), dtype=np.uint8)
  pixels[labels == 0, 0, :, 0] += 200
  return ImageSet(customer_ids=tuple(f'c{i}' for i in range(count)), pixels=pixels, labels=labels, crop_offsets=np.zeros(count))

@pytest.mark.slow
def test_train_separates_toy_set():
  images = separable_set(count=200, seed=0)
  result = train(train_set=images, val_set=images, config=TrainConfig({'epochs': 20, 'seed': 2}))
  probabilities, _ = result.checkpoint.predict(images=images)
  assert error_rate(scored=ScoredSet(probabilities=probabilities, labels=images.labels)) == 0.0

def test_format_descriptor_mismatch():
  altered = list(WISENET_LAYERS)
  altered[-1] = LayerSpec(kind='fc', units=3)
  with pytest.raises(ArchitectureMismatchError):
    WiseNet.from_descriptor(text=format_descriptor(specs=altered, input_shape=INPUT_SHAPE))
