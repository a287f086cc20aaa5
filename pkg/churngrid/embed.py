from __future__ import annotations
import logging
import os
import numpy as np
import pandas as pd

from dataclasses import dataclass
from typing import Optional
from .dataset import ImageSet
from .error import DatasetError
from .locator import write_bytes
from .nn.checkpoint import Checkpoint

log = logging.getLogger(__name__)

ACTIVATIONS_FILE = 'activations.tsv'
SIDECAR_FILE = 'activations_sidecar.csv'
SIDECAR_COLUMNS = ['customer_id', 'churn_probability', 'label']

@dataclass(frozen=True)
class Embedding:
  activations: np.ndarray
  sidecar: pd.DataFrame

def sample_indices(count: int, sample_size: int, seed: int) -> np.ndarray:
  """Uniform sample without replacement, returned in set order."""
  if not 0 < sample_size <= count:
    raise DatasetError(f'sample size {sample_size} must be in [1, {count}]')
  return np.sort(np.random.Generator(np.random.Philox(seed)).choice(count, size=sample_size, replace=False))

def extract_activations(checkpoint: Checkpoint, images: ImageSet, sample_size: Optional[int]=None, seed: int=0) -> Embedding:
  """Last hidden layer activations (post-PReLU) for a seeded subsample, with their colouring columns."""
  indices = sample_indices(count=len(images), sample_size=sample_size if sample_size is not None else len(images), seed=seed)
  sample = images.subset(indices=indices)
  probabilities, activations = checkpoint.predict(images=sample, capture=True)
  sidecar = pd.DataFrame({
    'customer_id': list(sample.customer_ids),
    'churn_probability': probabilities,
    'label': sample.labels,
  }, columns=SIDECAR_COLUMNS)
  return Embedding(activations=activations, sidecar=sidecar)

def write_embedding(embedding: Embedding, directory: str):
  activations = pd.DataFrame(embedding.activations).to_csv(sep='\t', header=False, index=False, lineterminator='\n', float_format='%.17g')
  write_bytes(path=os.path.join(directory, ACTIVATIONS_FILE), resource=activations.encode('utf-8'))
  write_bytes(
    path=os.path.join(directory, SIDECAR_FILE),
    resource=embedding.sidecar.to_csv(index=False, lineterminator='\n', float_format='%.17g').encode('utf-8')
  )
  log.info('Wrote %d x %d activations to %s', *embedding.activations.shape, directory)
