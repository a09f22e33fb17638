#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <new>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "convrec/bench/attention.hpp"
#include "convrec/error.hpp"
#include "convrec/log.hpp"
#include "convrec/model/cds.hpp"
#include "convrec/model/schedule.hpp"
#include "convrec/numerics/memory.hpp"
#include "convrec/numerics/ops.hpp"

namespace convrec::bench {

enum class Encoder { cds, attention };

inline std::string encoder_name(Encoder e) { return e == Encoder::cds ? "cds" : "attention"; }

struct ScalingSample {
  Encoder encoder = Encoder::cds;
  std::size_t length = 0;
  std::size_t batch_size = 0;
  double wall_seconds = 0.0;  // median over repetitions
  std::size_t peak_bytes = 0;
  std::uint64_t mac_count = 0;
  bool oom = false;
};

struct ScalingOptions {
  std::vector<std::size_t> lengths{128, 256, 512, 1024, 2048};
  std::vector<Encoder> encoders{Encoder::cds, Encoder::attention};
  std::size_t batch_size = 32;
  std::size_t d_v = 64;
  std::size_t heads = 4;
  std::size_t warmup = 2;
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
};

inline std::uint64_t cds_macs(std::size_t length, std::size_t d) {
  return model::count_flops(model::plan_schedule(length, model::schedule_family(length)), d);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

// Forward + backward of one batch; every example gets its own tape, as in
// training, so peak bytes are those of the largest single-example graph.
template <class Forward>
double run_batch(const std::vector<Tensor>& inputs, std::vector<Parameter*> params, Forward&& forward) {
  for (auto* p : params) p->zero_grad();
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& x : inputs) {
    Var z = numerics::leaf(x);
    numerics::sum(forward(z)).backward();
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class Forward>
ScalingSample measure(Encoder encoder, std::size_t length, const ScalingOptions& o, std::vector<Parameter*> params,
                      Forward&& forward, std::uint64_t macs, std::mt19937_64& rng) {
  ScalingSample s;
  s.encoder = encoder;
  s.length = length;
  s.batch_size = o.batch_size;
  s.mac_count = macs;
  try {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Tensor> inputs;
    for (std::size_t b = 0; b < o.batch_size; ++b) {
      Tensor t({length, o.d_v});
      for (auto& v : t.data()) v = normal(rng);
      inputs.push_back(std::move(t));
    }
    for (std::size_t r = 0; r < o.warmup; ++r) run_batch(inputs, params, forward);
    std::vector<double> times;
    std::size_t peak = 0;
    auto& tracker = numerics::MemoryTracker::instance();
    for (std::size_t r = 0; r < o.repetitions; ++r) {
      for (auto* p : params) p->zero_grad();
      const std::size_t baseline = tracker.current_bytes();
      tracker.reset_peak();
      times.push_back(run_batch(inputs, params, forward));
      peak = std::max(peak, tracker.peak_bytes() - baseline);
    }
    s.wall_seconds = median(times);
    s.peak_bytes = peak;
  } catch (const std::bad_alloc&) {
    s.oom = true;
    log_warn("bench: ", encoder_name(encoder), " at L=", length, " ran out of memory");
  }
  return s;
}

}  // namespace detail

inline std::vector<ScalingSample> measure_scaling(const ScalingOptions& o) {
  if (numerics::execution_threads() > 1) {
    throw ConfigError("bench requires single-threaded execution (threads = " +
                      std::to_string(numerics::execution_threads()) + ")");
  }
  if (o.repetitions < 5) throw ConfigError("bench needs at least 5 repetitions");
  if (o.warmup < 2) throw ConfigError("bench needs at least 2 warmup runs");
  if (o.batch_size == 0 || o.d_v == 0) throw ConfigError("bench batch size and width must be positive");
  if (o.lengths.empty() || !std::is_sorted(o.lengths.begin(), o.lengths.end())) {
    throw ConfigError("bench lengths must be a non-empty ascending list");
  }
  std::vector<ScalingSample> out;
  std::mt19937_64 rng(o.seed);
  for (Encoder e : o.encoders) {
    for (std::size_t L : o.lengths) {
      if (e == Encoder::cds) {
        const auto layers = model::schedule_family(L);
        const auto plan = model::plan_schedule(L, layers);
        std::vector<model::ConvBlockParams> blocks;
        for (std::size_t j = 0; j < layers.size(); ++j) blocks.emplace_back(j, o.d_v, layers[j].kernel, rng);
        std::vector<Parameter*> params;
        for (auto& b : blocks)
          for (auto* p : b.parameters()) params.push_back(p);
        std::mt19937_64 unused(0);
        auto forward = [&](const Var& z) { return model::cds_forward(blocks, plan, z, {}, unused); };
        out.push_back(detail::measure(e, L, o, params, forward, model::count_flops(plan, o.d_v), rng));
      } else {
        AttentionParams p(o.d_v, o.heads, rng);
        auto forward = [&](const Var& z) { return attention_encoder_forward(p, z); };
        out.push_back(detail::measure(e, L, o, p.parameters(), forward, attention_macs(L, o.d_v), rng));
      }
      const auto& s = out.back();
      log_info("bench ", encoder_name(e), " L=", L, ": ", s.wall_seconds, " s, ", s.peak_bytes, " bytes");
    }
  }
  return out;
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least-squares line through (log x, log y).
inline SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("fit_loglog_slope: x and y differ in length");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 4) {
    throw InsufficientData("fit_loglog_slope: need at least 4 valid samples, got " + std::to_string(lx.size()));
  }
  const auto [lo, hi] = std::minmax_element(lx.begin(), lx.end());
  if (*hi - *lo < std::log(8.0) - 1e-12) throw InsufficientData("fit_loglog_slope: samples must span at least 8x");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

enum class Metric { wall_seconds, peak_bytes, mac_count };

inline SlopeFit fit_samples(const std::vector<ScalingSample>& samples, Encoder encoder, Metric metric) {
  std::vector<double> x, y;
  for (const auto& s : samples) {
    if (s.encoder != encoder || s.oom) continue;
    x.push_back(static_cast<double>(s.length));
    y.push_back(metric == Metric::wall_seconds ? s.wall_seconds
                : metric == Metric::peak_bytes ? static_cast<double>(s.peak_bytes)
                                               : static_cast<double>(s.mac_count));
  }
  return fit_loglog_slope(x, y);
}

}  // namespace convrec::bench
