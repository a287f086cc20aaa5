from __future__ import annotations
import argparse
import logging
import os
import sys
import pandas as pd

from typing import Dict, List, Optional
from .baseline import BaselineConfig, feature_arrays, predict_logistic, select_l2
from .dataset import ImageSet, SplitSpec, build_manifest, encode_population
from .embed import extract_activations, write_embedding
from .encoder import EncoderConfig, export_png, features_frame, read_features_csv, write_features_csv, EncodedImage
from .error import ChurnGridError, LocationError
from .events import build_timelines
from .ingest import SPLITS, load_manifest, read_cdr_csv, read_topup_csv, write_cdr_csv, write_manifest, write_topup_csv
from .locator import write_bytes
from .metrics import ScoredSet, compare_reports, evaluate, load_report, write_comparison, write_report
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.train import TrainConfig, train
from .synth import MarketConfig, generate_population, second_market, write_ground_truth_csv

log = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
SPLITS_COLUMNS = ['split', 'count', 'positives', 'error_rate', 'log_loss', 'auc']

def data_path(directory: str, name: str) -> str:
  return os.path.join(directory, name)

def options_file(path: Optional[str], options_type: type, options: Optional[Dict[str, any]]=None) -> any:
  if path is None:
    return options_type(options)
  return options_type.from_file(path=path, options=options)

def with_seed(config: any, seed: Optional[int]) -> any:
  return config if seed is None else config.replace(seed=seed)

def cmd_generate(args: argparse.Namespace):
  config = with_seed(config=options_file(path=args.config, options_type=MarketConfig), seed=args.seed)
  if args.market2:
    config = second_market(config=config)
  split_spec = options_file(path=args.split_config, options_type=SplitSpec)
  population = generate_population(config=config)
  write_cdr_csv(records=population.cdrs, path=data_path(args.out, 'cdrs.csv'))
  write_topup_csv(records=population.topups, path=data_path(args.out, 'topups.csv'))
  write_ground_truth_csv(ground_truth=population.ground_truth, path=data_path(args.out, 'ground_truth.csv'))
  write_manifest(manifest=build_manifest(population=population, split_spec=split_spec), path=data_path(args.out, 'manifest.txt'))
  config.write(path=data_path(args.out, 'market.cfg'))

def encoder_config_for(data: str, path: Optional[str]) -> EncoderConfig:
  """Top-up saturation defaults to the market's largest coupon when the market file is present."""
  options = {}
  market_path = data_path(data, 'market.cfg')
  if os.path.exists(market_path):
    options['topup_saturation'] = MarketConfig.from_file(path=market_path).topup_max_coupon
  return options_file(path=path, options_type=EncoderConfig, options=options)

def cmd_encode(args: argparse.Namespace):
  config = encoder_config_for(data=args.data, path=args.encoder_config)
  manifest = load_manifest(path=args.manifest if args.manifest else data_path(args.data, 'manifest.txt'))
  cdrs, cdr_errors = read_cdr_csv(path=data_path(args.data, 'cdrs.csv'))
  topups, topup_errors = read_topup_csv(path=data_path(args.data, 'topups.csv'))
  if cdr_errors or topup_errors:
    log.warning('Skipped %d call and %d top-up lines', len(cdr_errors), len(topup_errors))
  timelines = build_timelines(cdrs=cdrs, topups=topups)
  for split in SPLITS:
    images = encode_population(timelines=timelines, manifest=manifest, config=config, split=split)
    images.save(directory=args.out, split=split)
    write_features_csv(
      frame=features_frame(pixels=images.pixels, crop_offsets=images.crop_offsets, labels=images.labels),
      path=data_path(args.out, f'features_{split}.csv')
    )
    if split == 'test':
      for index in range(min(args.png_sample, len(images))):
        export_png(
          image=EncodedImage(
            pixels=images.pixels[index],
            label=int(images.labels[index]),
            crop_offset=int(images.crop_offsets[index]),
            customer_id=images.customer_ids[index]
          ),
          path=data_path(data_path(args.out, 'png'), f'{images.customer_ids[index]}.png')
        )

def cmd_train(args: argparse.Namespace):
  config = with_seed(config=options_file(path=args.train_config, options_type=TrainConfig), seed=args.seed)
  result = train(
    train_set=ImageSet.load(directory=args.data, split='train'),
    val_set=ImageSet.load(directory=args.data, split='val'),
    config=config
  )
  save_checkpoint(checkpoint=result.checkpoint, path=args.out)
  history = pd.DataFrame([[r.epoch, r.train_loss, r.val_log_loss] for r in result.history], columns=['epoch', 'train_loss', 'val_log_loss'])
  write_bytes(path=f'{args.out}.history.csv', resource=history.to_csv(index=False, lineterminator='\n', float_format='%.17g').encode('utf-8'))

def cmd_eval(args: argparse.Namespace):
  """With `--split all` the report covers the test split and a per-split summary is written beside it."""
  checkpoint = load_checkpoint(path=args.checkpoint)
  splits = SPLITS if args.split == 'all' else [args.split]
  rows = []
  reports = {}
  for split in splits:
    images = ImageSet.load(directory=args.data, split=split)
    probabilities, _ = checkpoint.predict(images=images)
    reports[split] = evaluate(scored=ScoredSet(probabilities=probabilities, labels=images.labels))
    report = reports[split]
    rows.append([split, report.count, report.positives, report.error_rate, report.log_loss, report.auc])
    log.info('%s: auc %.4f, log-loss %.4f, error %.4f', split, report.auc, report.log_loss, report.error_rate)
  write_report(report=reports['test' if args.split == 'all' else args.split], path=args.report)
  if args.split == 'all':
    frame = pd.DataFrame(rows, columns=SPLITS_COLUMNS)
    write_bytes(path=f'{args.report}.splits.csv', resource=frame.to_csv(index=False, lineterminator='\n', float_format='%.17g').encode('utf-8'))

def sibling(path: str, name: str) -> str:
  return os.path.join(os.path.dirname(path), name)

def cmd_baseline(args: argparse.Namespace):
  config = with_seed(config=options_file(path=args.config, options_type=BaselineConfig), seed=args.seed)
  train_features, train_labels = feature_arrays(frame=read_features_csv(path=args.csv))
  val_features, val_labels = feature_arrays(frame=read_features_csv(path=args.val_csv if args.val_csv else sibling(args.csv, 'features_val.csv')))
  test_features, test_labels = feature_arrays(frame=read_features_csv(path=args.test_csv if args.test_csv else sibling(args.csv, 'features_test.csv')))
  model, _ = select_l2(train_features=train_features, train_labels=train_labels, val_features=val_features, val_labels=val_labels, config=config)
  report = evaluate(scored=ScoredSet(probabilities=predict_logistic(model=model, features=test_features), labels=test_labels))
  write_report(report=report, path=args.report)

def cmd_embed(args: argparse.Namespace):
  images = ImageSet.load(directory=args.data, split=args.split)
  embedding = extract_activations(
    checkpoint=load_checkpoint(path=args.checkpoint),
    images=images,
    sample_size=args.sample if args.sample is not None else len(images),
    seed=args.seed
  )
  write_embedding(embedding=embedding, directory=args.out)

def named_path(value: str) -> List[str]:
  name, separator, path = value.partition('=')
  if not separator or not name or not path:
    raise argparse.ArgumentTypeError(f'expected name=path, found {value!r}')
  return [name, path]

def cmd_compare(args: argparse.Namespace):
  frame = compare_reports(reports={name: load_report(path=path) for name, path in args.report})
  write_comparison(frame=frame, path=args.out)
  log.info('Compared %d reports; best auc %s (%.4f)', len(frame), frame.model[0], frame.auc[0])

def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(prog='churngrid', description='Churn prediction from activity images.')
  parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level.')
  commands = parser.add_subparsers(dest='command', required=True)

  generate = commands.add_parser('generate', help='Generate a synthetic market.')
  generate.add_argument('--config', help='Market options file.')
  generate.add_argument('--split-config', help='Split options file.')
  generate.add_argument('--out', required=True, help='Output directory.')
  generate.add_argument('--market2', action='store_true', help='Generate the perturbed neighbouring market.')
  generate.add_argument('--seed', type=int, help='Overrides the market seed.')
  generate.set_defaults(run=cmd_generate)

  encode = commands.add_parser('encode', help='Encode customers into activity images.')
  encode.add_argument('--data', required=True, help='Directory written by generate.')
  encode.add_argument('--manifest', help='Manifest file; defaults to <data>/manifest.txt.')
  encode.add_argument('--encoder-config', help='Encoder options file.')
  encode.add_argument('--out', required=True, help='Output directory.')
  encode.add_argument('--png-sample', type=int, default=0, help='PNG exports from the test split.')
  encode.set_defaults(run=cmd_encode)

  train_command = commands.add_parser('train', help='Train the network and keep the best validation epoch.')
  train_command.add_argument('--data', required=True, help='Directory written by encode.')
  train_command.add_argument('--train-config', help='Training options file.')
  train_command.add_argument('--out', required=True, help='Checkpoint path.')
  train_command.add_argument('--seed', type=int, help='Overrides the training seed.')
  train_command.set_defaults(run=cmd_train)

  eval_command = commands.add_parser('eval', help='Evaluate a checkpoint.')
  eval_command.add_argument('--checkpoint', required=True)
  eval_command.add_argument('--data', required=True, help='Directory written by encode.')
  eval_command.add_argument('--split', choices=SPLITS + ['all'], default='test')
  eval_command.add_argument('--report', required=True, help='Report path.')
  eval_command.set_defaults(run=cmd_eval)

  baseline = commands.add_parser('baseline', help='Train and evaluate the logistic baseline.')
  baseline.add_argument('--csv', required=True, help='Flattened training features.')
  baseline.add_argument('--val-csv', help='Defaults to features_val.csv beside --csv.')
  baseline.add_argument('--test-csv', help='Defaults to features_test.csv beside --csv.')
  baseline.add_argument('--config', help='Baseline options file.')
  baseline.add_argument('--report', required=True, help='Report path.')
  baseline.add_argument('--seed', type=int, help='Overrides the baseline seed.')
  baseline.set_defaults(run=cmd_baseline)

  embed = commands.add_parser('embed', help='Export last hidden layer activations.')
  embed.add_argument('--checkpoint', required=True)
  embed.add_argument('--data', required=True, help='Directory written by encode.')
  embed.add_argument('--split', choices=SPLITS, default='test')
  embed.add_argument('--sample', type=int, help='Subsample size; defaults to the whole split.')
  embed.add_argument('--seed', type=int, default=0)
  embed.add_argument('--out', required=True, help='Output directory.')
  embed.set_defaults(run=cmd_embed)

  compare = commands.add_parser('compare', help='Rank reports by AUC.')
  compare.add_argument('--report', type=named_path, action='append', required=True, help='name=path, repeatable.')
  compare.add_argument('--out', required=True, help='Comparison CSV path.')
  compare.set_defaults(run=cmd_compare)
  return parser

def main(argv: Optional[List[str]]=None) -> int:
  args = build_parser().parse_args(argv)
  logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
  try:
    args.run(args)
  except (KeyboardInterrupt, SystemExit):
    raise
  except (ChurnGridError, LocationError) as e:
    print(f'churngrid {args.command}: {e}', file=sys.stderr)
    return 1
  return 0
