from . import nn
from .base import Options
from .error import ChurnGridError, ConfigurationError, RecordError, IngestError, HeaderError, LineError, ManifestError, ManifestVersionError, ManifestValidationError, DatasetError, ShapeError, ArchitectureMismatchError, CheckpointError, CorruptCheckpointError, TrainingError, TrainingDivergenceError, MetricError, ReportError, LocationError
from .events import CdrRecord, TopupRecord, Direction, Service, Row, SliceCoord, ObservationWindow, CustomerTimeline, ActivityGrid, build_timeline, build_timelines, aggregate
from .encoder import EncoderConfig, EncodedImage, FeatureVector, encode_image, flatten_image, unflatten_features, label_customer, compute_offset, export_png, read_png
from .ingest import DatasetManifest, ManifestEntry, parse_cdr_csv, parse_topup_csv, load_manifest, write_manifest
from .synth import MarketConfig, Population, GroundTruth, generate_population, second_market
from .dataset import SplitSpec, ImageSet, MeanImage, split, balance_training, mean_image, batches, build_manifest, encode_population
from .baseline import BaselineConfig, LinearModel, train_logistic, predict_logistic, select_l2
from .metrics import ScoredSet, EvalReport, evaluate, auc, log_loss, brier, error_rate, tp5, top_decile_lift, calibration_curve, probability_density, write_report, load_report, compare_reports
from .embed import extract_activations, write_embedding
from .locator import locator_factory, ResourceLocator
