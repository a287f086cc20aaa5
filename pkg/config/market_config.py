market_config = {
  'market_id': 'market-1',
  'n_customers': 4000,
  'horizon_days': 63,
  # 2015-01-01 00:00 UTC
  'start_time': 1420070400,
  'tz_offset': 3600,
  'call_rate_mean': 3.0,
  'call_rate_sigma': 0.5,
  # local 2-hour slices 00-02 ... 22-24
  'diurnal_profile': [0.15, 0.05, 0.05, 0.4, 1.1, 1.4, 1.5, 1.5, 1.6, 1.7, 1.5, 1.05],
  'weekend_multiplier': 0.8,
  'incoming_share': 0.5,
  'sms_share': 0.2,
  'mean_call_duration': 150.0,
  'topup_mean_gap_days': 7.0,
  'topup_coupons': [5.0, 10.0, 20.0, 50.0],
  'topup_coupon_weights': [0.4, 0.3, 0.2, 0.1],
  'topup_max_coupon': 50.0,
  'churn_fraction': 0.3,
  # multiplier per day over the 14 days before the churn decision, oldest first
  'decay_profile': [1.0, 0.93, 0.86, 0.79, 0.72, 0.65, 0.58, 0.51, 0.44, 0.37, 0.3, 0.23, 0.16, 0.1],
  'signal_strength': 0.9,
  'decision_jitter_days': 14,
  'seed': 20150101,
}
