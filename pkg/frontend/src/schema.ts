// Expected headers of the ftn-lab CSV tables this tool can draw.
// Kept in sync with docs/schemas.md of the generator; an input whose header
// differs from the documented version is refused.

export const SCHEMAS: Record<string, string[]> = {
  capacity: [
    'tau', 'beta', 'EsN0_dB', 'EbN0_dB', 'rate', 'rate_units', 'method',
  ],
  rates: [
    'tau', 'beta', 'constellation', 'EsN0_dB', 'EbN0_dB', 'rate',
    'rate_units', 'mc_std_err', 'n_symbols', 'n_trials', 'seed', 'method',
  ],
  mazo: [
    'kind', 'beta', 'span', 'max_len', 'tol', 'tau', 'd2min',
    'argmin_len', 'limit',
  ],
  ber_td: [
    'tau', 'beta', 'constellation', 'equalizer', 'max_taps', 'EsN0_dB',
    'EbN0_dB', 'n_frames', 'n_bits', 'n_errors', 'ber', 'seed',
  ],
  ber_fd: [
    'tau', 'beta', 'constellation', 'equalizer', 'n_block', 'cp_len',
    'EsN0_dB', 'EbN0_dB', 'n_frames', 'n_bits', 'n_errors', 'ber', 'seed',
  ],
  coded: [
    'tau', 'beta', 'constellation', 'equalizer', 'info_len', 'EsN0_dB',
    'EbN0_dB', 'iteration', 'n_frames', 'n_bits', 'n_errors', 'ber', 'seed',
  ],
  af_grid: [
    'tau', 'beta', 'n_symbols', 'trials', 'seed', 'delay', 'doppler',
    'value', 'stderr',
  ],
  af_peaks: [
    'tau', 'beta', 'n_symbols', 'trials', 'seed', 'exclusion_radius',
    'threshold_factor', 'doppler', 'value', 'ratio',
  ],
  sense_ml_runs: [
    'tau', 'beta', 'noise_psd', 'seed', 'run', 'est_doppler_1',
    'est_doppler_2', 'est_amp_1', 'est_amp_2', 'err_target_1',
    'err_target_2', 'ok_target_1', 'ok_target_2',
  ],
  sense_ml_summary: [
    'tau', 'beta', 'noise_psd', 'n_runs', 'seed', 'success_radius',
    'both_rate', 'weak_rate',
  ],
};
