#pragma once

#include "rtpower/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rtpower {

// Analyses of response-time variability. Every operation here drops error
// trials (correct == false) before doing anything else.

struct ParticipantHalves {
  std::string participant_id;
  double odd_mean = 0.0;
  double even_mean = 0.0;
};

struct ReliabilityResult {
  std::vector<ParticipantHalves> per_participant;
  double r = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Split-half reliability: per-participant means of odd vs even trials (by
// parity of trial_index), Pearson correlation over participants, Fisher-z
// 95% interval. Requires trial_index on every retained row, >= 4
// participants, and both parities for every participant.
ReliabilityResult split_half(const TrialTable& table);

struct CorrelationComparison {
  double z = 0.0;
  double p_two_sided = 0.0;
};

// Independent-samples comparison of two correlations via Fisher's z:
//   z = (atanh(r2) - atanh(r1)) / sqrt(1/(n1-3) + 1/(n2-3))
CorrelationComparison compare_correlations(double r1, long n1, double r2,
                                           long n2);

struct VarianceRatioResult {
  double f = 0.0;
  long df1 = 0;
  long df2 = 0;
  double p = 0.0; // one-sided upper tail, no reordering of the ratio
};

VarianceRatioResult variance_ratio_test(double sd_a, long n_a, double sd_b,
                                        long n_b);

struct LocationScaleResult {
  double mean_a = 0.0, mean_b = 0.0;
  double sd_a = 0.0, sd_b = 0.0; // MLE, divisor n
  double mean_diff = 0.0;        // mean_b - mean_a
  double mean_ci_low = 0.0, mean_ci_high = 0.0;
  double sd_diff = 0.0; // sd_b - sd_a
  double sd_ci_low = 0.0, sd_ci_high = 0.0;
  int n_boot = 0;
};

// Two-group Gaussian location-scale comparison with nonparametric bootstrap
// percentile intervals. Deterministic given the seed.
LocationScaleResult location_scale_fit(const TrialTable& table_a,
                                       const TrialTable& table_b, int n_boot,
                                       std::uint64_t seed);

struct SlopeSdResult {
  std::vector<std::string> participant_ids;
  std::vector<double> per_participant_diffs; // mean(related) - mean(unrelated), ms
  double grand_mean = 0.0;
  double sd = 0.0; // divisor n - 1
};

// Descriptive between-participant variability in the condition effect.
SlopeSdResult descriptive_slope_sd(const TrialTable& table);

} // namespace rtpower
