baseline_config = {
  'l2_grid': [0.01, 0.1, 1.0, 10.0, 100.0],
  'tolerance': 1e-6,
  'max_iterations': 500,
  'seed': 3,
}
