encoder_config = {
  'alpha': 1 / 7,
  'call_saturation': 7200.0,
  'topup_saturation': 50.0,
  'sms_equivalent_seconds': 60.0,
}
