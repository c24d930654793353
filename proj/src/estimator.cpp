#include "satmetro/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "satmetro/fisher.hpp"
#include "satmetro/hashing.hpp"
#include "satmetro/parallel.hpp"

namespace satmetro {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Per-pixel histogram of outcomes over a set of frames, CSR layout with
/// ascending outcomes inside each pixel.
struct Tally {
  std::vector<std::size_t> offset;
  std::vector<int> outcome;
  std::vector<double> count;

  std::size_t pixels() const { return offset.size() - 1; }
  std::span<const int> outcomes(std::size_t j) const {
    return std::span<const int>(outcome).subspan(offset[j], offset[j + 1] - offset[j]);
  }
};

Tally tally(const FrameSet &set, std::span<const std::size_t> subset) {
  const std::size_t pixels = set.pixel_count();
  Tally t;
  t.offset.reserve(pixels + 1);
  t.offset.push_back(0);
  std::vector<int> scratch;
  scratch.reserve(subset.size());
  for (std::size_t j = 0; j < pixels; ++j) {
    scratch.clear();
    for (std::size_t f : subset)
      scratch.push_back(set.frames[f].electrons[j]);
    std::sort(scratch.begin(), scratch.end());
    for (std::size_t i = 0; i < scratch.size();) {
      std::size_t e = i;
      while (e < scratch.size() && scratch[e] == scratch[i])
        ++e;
      t.outcome.push_back(scratch[i]);
      t.count.push_back(static_cast<double>(e - i));
      i = e;
    }
    t.offset.push_back(t.outcome.size());
  }
  return t;
}

/// ln P for every tallied outcome at field B (−∞ below the floor).
std::vector<double> log_probabilities(const Tally &t, const ForwardModel &model, double field,
                                      unsigned threads) {
  const auto means = model.pixel_means(field);
  std::vector<double> logp(t.outcome.size());
  parallel_for(t.pixels(), threads, [&](std::size_t j) {
    const auto ks = t.outcomes(j);
    std::span<double> dst(logp.data() + t.offset[j], ks.size());
    model.response().outcome_probabilities(means[j], ks, dst);
    for (double &p : dst)
      p = p < kProbabilityFloor ? kNegInf : std::log(p);
  });
  return logp;
}

double evaluate(const Tally &t, const ForwardModel &model, double field, unsigned threads) {
  const auto logp = log_probabilities(t, model, field, threads);
  double sum = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    if (logp[i] == kNegInf)
      return kNegInf;
    sum += t.count[i] * logp[i];
  }
  return sum;
}

std::vector<double> prescan_grid(std::pair<double, double> bracket, int points) {
  if (!(bracket.second > bracket.first))
    throw std::invalid_argument("mle: bracket must satisfy lo < hi");
  if (points < 3)
    throw std::invalid_argument("mle: prescan needs at least three points");
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double span = bracket.second - bracket.first;
  for (int i = 0; i < points; ++i)
    grid[static_cast<std::size_t>(i)] = bracket.first + span * i / (points - 1);
  grid.back() = bracket.second;
  return grid;
}

/// Golden-section refinement between the prescan neighbours of the best point.
MleResult refine(const std::function<double(double)> &objective, std::vector<double> fields,
                 std::vector<double> values, const MleOptions &options) {
  const auto best = std::max_element(values.begin(), values.end());
  const double top = *best;
  const double bottom = *std::min_element(values.begin(), values.end());
  if (top == kNegInf)
    throw NoInteriorMaximum("likelihood vanishes across the whole bracket");
  if (top - bottom <= 1e-12 * (1.0 + std::abs(top)))
    throw NoInteriorMaximum("likelihood is flat across the bracket");
  const std::size_t i = static_cast<std::size_t>(best - values.begin());
  if (i == 0 || i + 1 == values.size())
    throw NoInteriorMaximum("prescan maximum lies on the bracket edge");

  MleResult result;
  result.estimate = fields[i];
  result.log_likelihood = top;
  auto consider = [&](double x, double fx) {
    if (fx > result.log_likelihood) {
      result.estimate = x;
      result.log_likelihood = fx;
    }
  };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double floor = 1e-3 * options.relative_tolerance * (fields.back() - fields.front());
  double a = fields[i - 1], b = fields[i + 1];
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = objective(c), fd = objective(d);
  consider(c, fc);
  consider(d, fd);
  for (int iter = 0; iter < 500; ++iter) {
    const double scale = std::max({std::abs(c), std::abs(d), floor});
    if (b - a <= options.relative_tolerance * scale)
      break;
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
      consider(d, fd);
    }
  }
  result.prescan_fields = std::move(fields);
  result.prescan_values = std::move(values);
  return result;
}

double sample_stddev(const std::vector<double> &xs) {
  if (xs.size() < 2)
    return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(xs.size());
  const double shift = xs.front();
  double sum = 0.0, sq = 0.0;
  for (double x : xs) {
    sum += x - shift;
    sq += (x - shift) * (x - shift);
  }
  return std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1)));
}

} // namespace

void FrameSet::validate() const {
  if (frames.empty())
    throw std::invalid_argument("frame set is empty");
  const std::size_t pixels = frames.front().electrons.size();
  for (const auto &f : frames)
    if (f.electrons.size() != pixels)
      throw std::invalid_argument("frame set mixes pixel counts");
}

FrameSet simulate_frames(const ForwardModel &model, double field_tesla, std::size_t count,
                         std::uint64_t seed) {
  const auto means = model.pixel_means(field_tesla);
  FrameSet set;
  set.provenance = {model.scheme(), model.photons(), field_tesla, seed,
                    model.response().detector().hash()};
  set.frames.reserve(count);
  for (std::size_t f = 0; f < count; ++f)
    set.frames.push_back(model.response().sample_frame(means, derive_seed(seed, f)));
  return set;
}

double log_likelihood(const FrameSet &frames, std::span<const std::size_t> subset,
                      double field_tesla, const ForwardModel &model, unsigned threads) {
  frames.validate();
  if (frames.pixel_count() != model.pixel_count())
    throw std::invalid_argument("log_likelihood: frames and model disagree on pixel count");
  for (std::size_t f : subset)
    if (f >= frames.frames.size())
      throw std::out_of_range("log_likelihood: frame index out of range");
  return evaluate(tally(frames, subset), model, field_tesla, threads);
}

double log_likelihood(const FrameSet &frames, double field_tesla, const ForwardModel &model,
                      unsigned threads) {
  std::vector<std::size_t> all(frames.frames.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return log_likelihood(frames, all, field_tesla, model, threads);
}

MleResult maximize_likelihood(const FrameSet &frames, std::span<const std::size_t> subset,
                              std::pair<double, double> bracket, const ForwardModel &model,
                              const MleOptions &options) {
  frames.validate();
  if (frames.pixel_count() != model.pixel_count())
    throw std::invalid_argument("mle: frames and model disagree on pixel count");
  const Tally t = tally(frames, subset);
  auto objective = [&](double b) { return evaluate(t, model, b, options.threads); };
  auto fields = prescan_grid(bracket, options.prescan_points);
  std::vector<double> values(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i)
    values[i] = objective(fields[i]);
  return refine(objective, std::move(fields), std::move(values), options);
}

double mle_estimate(const FrameSet &frames, std::pair<double, double> bracket,
                    const ForwardModel &model, const MleOptions &options) {
  std::vector<std::size_t> all(frames.frames.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return maximize_likelihood(frames, all, bracket, model, options).estimate;
}

PrecisionReport bootstrap_precision(const FrameSet &pool, const ForwardModel &model,
                                    const BootstrapOptions &options) {
  pool.validate();
  if (pool.pixel_count() != model.pixel_count())
    throw std::invalid_argument("bootstrap: pool and model disagree on pixel count");
  if (options.batch_size == 0 || options.batch_size > pool.frames.size())
    throw std::invalid_argument("bootstrap: batch size must be in [1, pool size]");
  if (options.repeats == 0)
    throw std::invalid_argument("bootstrap: need at least one repeat");

  std::vector<std::size_t> all(pool.frames.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> batches(options.repeats);
  for (std::size_t r = 0; r < options.repeats; ++r) {
    std::mt19937_64 rng(derive_seed(options.seed, r));
    batches[r].reserve(options.batch_size);
    std::sample(all.begin(), all.end(), std::back_inserter(batches[r]), options.batch_size, rng);
  }

  // The prescan grid is shared by every repeat: evaluate ln P once per grid
  // point over the pool-wide outcome set, then score each batch by lookup.
  const Tally pooled = tally(pool, all);
  std::vector<Tally> tallies;
  std::vector<std::vector<std::size_t>> slots(options.repeats);
  tallies.reserve(options.repeats);
  for (std::size_t r = 0; r < options.repeats; ++r) {
    tallies.push_back(tally(pool, batches[r]));
    const Tally &t = tallies.back();
    slots[r].resize(t.outcome.size());
    for (std::size_t j = 0; j < t.pixels(); ++j) {
      const auto ks = pooled.outcomes(j);
      for (std::size_t i = t.offset[j]; i < t.offset[j + 1]; ++i) {
        const auto it = std::lower_bound(ks.begin(), ks.end(), t.outcome[i]);
        slots[r][i] = pooled.offset[j] + static_cast<std::size_t>(it - ks.begin());
      }
    }
  }

  const auto fields = prescan_grid(options.bracket, options.mle.prescan_points);
  std::vector<std::vector<double>> values(options.repeats, std::vector<double>(fields.size()));
  for (std::size_t g = 0; g < fields.size(); ++g) {
    const auto logp = log_probabilities(pooled, model, fields[g], options.mle.threads);
    for (std::size_t r = 0; r < options.repeats; ++r) {
      double sum = 0.0;
      for (std::size_t i = 0; i < slots[r].size(); ++i) {
        const double lp = logp[slots[r][i]];
        if (lp == kNegInf) {
          sum = kNegInf;
          break;
        }
        sum += tallies[r].count[i] * lp;
      }
      values[r][g] = sum;
    }
  }

  // Repeats refine independently, one worker each; results land in
  // per-repeat slots and are gathered in repeat order.
  std::vector<double> estimates(options.repeats, 0.0);
  std::vector<std::string> errors(options.repeats);
  std::vector<char> failed(options.repeats, 0);
  parallel_for(options.repeats, options.mle.threads, [&](std::size_t r) {
    const Tally &t = tallies[r];
    auto objective = [&](double b) { return evaluate(t, model, b, 1); };
    try {
      estimates[r] = refine(objective, fields, values[r], options.mle).estimate;
    } catch (const NoInteriorMaximum &e) {
      failed[r] = 1;
      errors[r] = "repeat " + std::to_string(r) + ": " + e.what();
    }
  });

  PrecisionReport report;
  report.batch_size = options.batch_size;
  report.prescan_profiles = std::move(values);
  for (std::size_t r = 0; r < options.repeats; ++r) {
    if (failed[r]) {
      ++report.failed_repeats;
      report.failures.push_back(std::move(errors[r]));
    } else {
      report.estimates.push_back(estimates[r]);
    }
  }
  report.repeats = report.estimates.size();
  report.delta_b = sample_stddev(report.estimates);
  report.ok = static_cast<double>(report.failed_repeats) <=
              options.max_failure_fraction * static_cast<double>(options.repeats);
  return report;
}

} // namespace satmetro
