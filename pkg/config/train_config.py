train_config = {
  'learning_rate': 0.01,
  'momentum': 0.9,
  'weight_decay': 1e-4,
  'batch_size': 64,
  'epochs': 20,
  'dropout_rate': 0.5,
  'prelu_slope': 0.25,
  'init_scheme': 'he_gaussian',
  'unit_scale': True,
  'seed': 1,
}
