split_config = {
  'train_fraction': 0.65,
  'val_fraction': 0.11,
  'test_fraction': 0.24,
  'seed': 7,
}
