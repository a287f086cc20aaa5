import numpy as np
import pandas as pd
import pytest

from ..dataset import ImageSet, mean_image
from ..embed import ACTIVATIONS_FILE, SIDECAR_FILE, extract_activations, sample_indices, write_embedding
from ..error import DatasetError
from ..nn.checkpoint import Checkpoint, CheckpointMetadata
from ..nn.model import WiseNet

@pytest.fixture
def images() -> ImageSet:
  generator = np.random.default_rng(0)
  yield ImageSet(
    customer_ids=tuple(f'c{i}' for i in range(6)),
    pixels=generator.integers(0, 256, size=(6, 3, 336, 3), dtype=np.uint8),
    labels=np.array([0, 1, 0, 1, 1, 0]),
    crop_offsets=np.zeros(6, dtype=np.int64)
  )

@pytest.fixture
def checkpoint(images) -> Checkpoint:
  network = WiseNet()
  network.initialize(seed=2)
  yield Checkpoint(network=network, mean=mean_image(images=images), metadata=CheckpointMetadata())

def test_sample_indices():
  indices = sample_indices(count=10, sample_size=4, seed=1)
  assert len(set(indices.tolist())) == 4
  assert indices.tolist() == sorted(indices.tolist())
  assert np.array_equal(indices, sample_indices(count=10, sample_size=4, seed=1))
  assert sample_indices(count=5, sample_size=5, seed=9).tolist() == list(range(5))
  for size in [0, 11]:
    with pytest.raises(DatasetError):
      sample_indices(count=10, sample_size=size, seed=1)

def test_full_extraction_matches_inference(checkpoint, images):
  embedding = extract_activations(checkpoint=checkpoint, images=images)
  assert embedding.activations.shape == (6, 1024)
  assert embedding.sidecar.customer_id.tolist() == list(images.customer_ids)
  assert embedding.sidecar.label.tolist() == images.labels.tolist()
  probabilities, activations = checkpoint.network.infer(inputs=checkpoint.inputs(images=images), capture=True)
  assert np.allclose(embedding.activations, activations)
  assert np.allclose(embedding.sidecar.churn_probability, probabilities)
  assert np.all((embedding.sidecar.churn_probability >= 0) & (embedding.sidecar.churn_probability <= 1))

def test_subsample_is_seeded(checkpoint, images):
  first = extract_activations(checkpoint=checkpoint, images=images, sample_size=3, seed=4)
  second = extract_activations(checkpoint=checkpoint, images=images, sample_size=3, seed=4)
  assert len(first.sidecar) == 3
  assert first.sidecar.customer_id.tolist() == second.sidecar.customer_id.tolist()
  assert np.array_equal(first.activations, second.activations)
  with pytest.raises(DatasetError):
    extract_activations(checkpoint=checkpoint, images=images, sample_size=7)

def test_write_embedding(tmp_path, checkpoint, images):
  embedding = extract_activations(checkpoint=checkpoint, images=images, sample_size=4, seed=1)
  write_embedding(embedding=embedding, directory=str(tmp_path / 'first'))
  write_embedding(embedding=extract_activations(checkpoint=checkpoint, images=images, sample_size=4, seed=1), directory=str(tmp_path / 'second'))
  rows = (tmp_path / 'first' / ACTIVATIONS_FILE).read_text().splitlines()
  assert len(rows) == 4
  assert all(len(row.split('\t')) == 1024 for row in rows)
  assert np.array_equal(np.array([[float(v) for v in row.split('\t')] for row in rows]), embedding.activations)
  loaded = pd.read_csv(tmp_path / 'first' / ACTIVATIONS_FILE, sep='\t', header=None, float_precision='round_trip')
  assert np.array_equal(loaded.to_numpy(dtype=np.float64), embedding.activations)
  sidecar = (tmp_path / 'first' / SIDECAR_FILE).read_text().splitlines()
  assert sidecar[0] == 'customer_id,churn_probability,label'
  assert len(sidecar) == 5
  for name in [ACTIVATIONS_FILE, SIDECAR_FILE]:
    assert (tmp_path / 'first' / name).read_bytes() == (tmp_path / 'second' / name).read_bytes()
