#include "rtpower/variability.hpp"

#include "rtpower/errors.hpp"
#include "rtpower/rng.hpp"
#include "rtpower/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace rtpower {

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw NumericalError("correlation undefined: a variable has zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct GroupMoments {
  double mean = 0.0;
  double sd = 0.0; // divisor n
};

GroupMoments moments(const std::vector<double>& values) {
  GroupMoments m;
  const auto n = static_cast<double>(values.size());
  for (double v : values) m.mean += v;
  m.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(ss / n);
  return m;
}

std::vector<double> rts_of(const TrialTable& table) {
  TrialTable clean = table.without_errors();
  std::vector<double> rts;
  rts.reserve(clean.size());
  for (const auto& row : clean.rows) rts.push_back(row.rt_ms);
  return rts;
}

} // namespace

ReliabilityResult split_half(const TrialTable& table) {
  const TrialTable clean = table.without_errors();

  struct Acc {
    double odd_sum = 0.0;
    long odd_n = 0;
    double even_sum = 0.0;
    long even_n = 0;
  };
  std::map<std::string, Acc> acc; // ordered for reproducible output
  for (const auto& row : clean.rows) {
    if (!row.trial_index.has_value()) {
      throw ValidationError("split_half: row for participant '" +
                            row.participant_id + "' has no trial_index");
    }
    Acc& a = acc[row.participant_id];
    if (*row.trial_index % 2 == 1) {
      a.odd_sum += row.rt_ms;
      ++a.odd_n;
    } else {
      a.even_sum += row.rt_ms;
      ++a.even_n;
    }
  }
  if (acc.size() < 4) {
    throw ValidationError("split_half: needs at least 4 participants, got " +
                          std::to_string(acc.size()));
  }

  ReliabilityResult result;
  std::vector<double> odd, even;
  for (const auto& [pid, a] : acc) {
    if (a.odd_n == 0 || a.even_n == 0) {
      throw ValidationError("split_half: participant '" + pid +
                            "' lacks trials in one parity half");
    }
    ParticipantHalves halves;
    halves.participant_id = pid;
    halves.odd_mean = a.odd_sum / a.odd_n;
    halves.even_mean = a.even_sum / a.even_n;
    odd.push_back(halves.odd_mean);
    even.push_back(halves.even_mean);
    result.per_participant.push_back(std::move(halves));
  }

  result.r = pearson(odd, even);
  const double n = static_cast<double>(odd.size());
  if (1.0 - std::abs(result.r) < 1e-15) {
    result.ci_low = result.ci_high = result.r;
  } else {
    const double z = std::atanh(result.r);
    const double half_width = 1.96 / std::sqrt(n - 3.0);
    result.ci_low = std::tanh(z - half_width);
    result.ci_high = std::tanh(z + half_width);
  }
  return result;
}

CorrelationComparison compare_correlations(double r1, long n1, double r2,
                                           long n2) {
  if (n1 < 4 || n2 < 4) {
    throw ValidationError("compare_correlations: both samples need n >= 4");
  }
  if (std::abs(r1) >= 1.0 || std::abs(r2) >= 1.0) {
    throw ValidationError(
        "compare_correlations: |r| = 1 gives an infinite Fisher z; "
        "comparison is undefined");
  }
  CorrelationComparison out;
  const double denom =
      std::sqrt(1.0 / (n1 - 3.0) + 1.0 / (n2 - 3.0));
  out.z = (std::atanh(r2) - std::atanh(r1)) / denom;
  out.p_two_sided = normal_two_sided_p(out.z);
  return out;
}

VarianceRatioResult variance_ratio_test(double sd_a, long n_a, double sd_b,
                                        long n_b) {
  if (!(sd_a > 0.0) || !(sd_b > 0.0)) {
    throw ValidationError("variance_ratio_test: standard deviations must be > 0");
  }
  if (n_a < 2 || n_b < 2) {
    throw ValidationError("variance_ratio_test: both groups need n >= 2");
  }
  VarianceRatioResult out;
  out.f = (sd_a * sd_a) / (sd_b * sd_b);
  out.df1 = n_a - 1;
  out.df2 = n_b - 1;
  out.p = f_upper_tail(out.f, static_cast<double>(out.df1),
                       static_cast<double>(out.df2));
  return out;
}

LocationScaleResult location_scale_fit(const TrialTable& table_a,
                                       const TrialTable& table_b, int n_boot,
                                       std::uint64_t seed) {
  if (n_boot < 200) {
    throw ValidationError("location_scale_fit: n_boot must be >= 200");
  }
  const std::vector<double> a = rts_of(table_a);
  const std::vector<double> b = rts_of(table_b);
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError(
        "location_scale_fit: each group needs at least 2 usable rows");
  }

  const GroupMoments ma = moments(a);
  const GroupMoments mb = moments(b);

  LocationScaleResult out;
  out.mean_a = ma.mean;
  out.mean_b = mb.mean;
  out.sd_a = ma.sd;
  out.sd_b = mb.sd;
  out.mean_diff = mb.mean - ma.mean;
  out.sd_diff = mb.sd - ma.sd;
  out.n_boot = n_boot;

  const RngStream master = RngStream(seed).substream(kStreamBootstrap);
  std::vector<double> mean_diffs(n_boot), sd_diffs(n_boot);
  std::vector<double> resample;
  for (int rep = 0; rep < n_boot; ++rep) {
    const RngStream stream = master.substream(static_cast<std::uint64_t>(rep));
    auto resample_moments = [&](const std::vector<double>& src,
                                std::uint64_t tag) {
      Xoshiro256 gen = stream.substream(tag).generator();
      resample.resize(src.size());
      for (auto& v : resample) {
        v = src[gen.next_u64() % src.size()];
      }
      return moments(resample);
    };
    const GroupMoments ra = resample_moments(a, 1);
    const GroupMoments rb = resample_moments(b, 2);
    mean_diffs[rep] = rb.mean - ra.mean;
    sd_diffs[rep] = rb.sd - ra.sd;
  }
  std::sort(mean_diffs.begin(), mean_diffs.end());
  std::sort(sd_diffs.begin(), sd_diffs.end());
  out.mean_ci_low = quantile_sorted(mean_diffs, 0.025);
  out.mean_ci_high = quantile_sorted(mean_diffs, 0.975);
  out.sd_ci_low = quantile_sorted(sd_diffs, 0.025);
  out.sd_ci_high = quantile_sorted(sd_diffs, 0.975);
  return out;
}

SlopeSdResult descriptive_slope_sd(const TrialTable& table) {
  const TrialTable clean = table.without_errors();

  struct Acc {
    double related_sum = 0.0;
    long related_n = 0;
    double unrelated_sum = 0.0;
    long unrelated_n = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& row : clean.rows) {
    Acc& a = acc[row.participant_id];
    if (row.condition == Condition::related) {
      a.related_sum += row.rt_ms;
      ++a.related_n;
    } else {
      a.unrelated_sum += row.rt_ms;
      ++a.unrelated_n;
    }
  }
  if (acc.size() < 2) {
    throw ValidationError(
        "descriptive_slope_sd: needs at least 2 participants");
  }

  SlopeSdResult out;
  for (const auto& [pid, a] : acc) {
    if (a.related_n == 0 || a.unrelated_n == 0) {
      throw ValidationError("descriptive_slope_sd: participant '" + pid +
                            "' is missing a condition");
    }
    out.participant_ids.push_back(pid);
    out.per_participant_diffs.push_back(a.related_sum / a.related_n -
                                        a.unrelated_sum / a.unrelated_n);
  }

  const auto n = static_cast<double>(out.per_participant_diffs.size());
  for (double d : out.per_participant_diffs) out.grand_mean += d;
  out.grand_mean /= n;
  double ss = 0.0;
  for (double d : out.per_participant_diffs) {
    ss += (d - out.grand_mean) * (d - out.grand_mean);
  }
  out.sd = std::sqrt(ss / (n - 1.0));
  return out;
}

} // namespace rtpower
