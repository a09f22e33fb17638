#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "convrec/data/examples.hpp"
#include "convrec/error.hpp"
#include "convrec/model/cds.hpp"
#include "convrec/model/item_encoder.hpp"
#include "convrec/model/schedule.hpp"
#include "convrec/numerics/checkpoint.hpp"
#include "convrec/numerics/ops.hpp"

namespace convrec::model {

using numerics::NamedTensor;

struct Ablation {
  bool no_intervals = false;
  bool no_residuals = false;
  bool single_conv = false;
  bool avgpool_only = false;

  void validate() const {
    if (single_conv && avgpool_only) {
      throw ConfigError("ablations single_conv and avgpool_only cannot be combined");
    }
  }
  bool any() const { return no_intervals || no_residuals || single_conv || avgpool_only; }
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct ModelConfig {
  ItemEncoderDims dims;
  std::vector<LayerSpec> schedule{{2, 2}, {5, 5}, {7, 7}};
  std::size_t sequence_length = 50;
  double dropout_rate = 0.0;
  Ablation ablation;

  std::vector<LayerSpec> effective_schedule() const {
    if (ablation.single_conv) return {{sequence_length, sequence_length}};
    return schedule;
  }

  void validate() const {
    ablation.validate();
    if (sequence_length == 0) throw ConfigError("sequence_length must be at least 1");
    if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (dims.d_v == 0 || dims.d_a == 0 || dims.d_c == 0 || dims.d_f == 0 || dims.d_i == 0) {
      throw ConfigError("embedding dimensions must be positive");
    }
    if (!ablation.avgpool_only) plan_schedule(sequence_length, effective_schedule());
  }
};

// Logits of every target row against the sequence vector: <targets_k, X>.
inline Var score(const Var& x, const Var& targets) {
  if (x.value().rank() != 2 || x.value().rows() != 1) {
    throw DimensionError("score: sequence vector must be 1 x d, got " + numerics::shape_string(x.shape()));
  }
  if (targets.value().cols() != x.value().cols()) {
    throw DimensionError("score: target width " + std::to_string(targets.value().cols()) +
                         " differs from sequence width " + std::to_string(x.value().cols()));
  }
  return numerics::reshape(numerics::matmul_nt(targets, x), {targets.value().rows()});
}

class ConvRecModel {
 public:
  ConvRecModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    encoder_ = ItemEncoderParams(config_.dims, rng);
    if (!config_.ablation.avgpool_only) {
      const auto layers = config_.effective_schedule();
      plan_ = plan_schedule(config_.sequence_length, layers);
      for (std::size_t j = 0; j < layers.size(); ++j) blocks_.emplace_back(j, config_.dims.d_v, layers[j].kernel, rng);
    }
    if (config_.ablation.no_residuals) {
      for (auto& b : blocks_) {
        b.alpha1.value().fill(0.0);
        b.alpha2.value().fill(0.0);
        b.alpha1.freeze();
        b.alpha2.freeze();
      }
    }
  }

  const ModelConfig& config() const { return config_; }
  const ConvSchedule& schedule() const { return plan_; }
  ItemEncoderParams& encoder() { return encoder_; }
  const ItemEncoderParams& encoder() const { return encoder_; }
  std::vector<ConvBlockParams>& blocks() { return blocks_; }
  const std::vector<ConvBlockParams>& blocks() const { return blocks_; }

  // Same weights, schedule re-planned for another input length.
  ConvSchedule schedule_for(std::size_t length) const {
    if (length == plan_.sequence_length || config_.ablation.avgpool_only) return plan_;
    return plan_schedule(length, config_.effective_schedule());
  }

  std::vector<Parameter*> parameters() {
    auto out = encoder_.parameters();
    for (auto& b : blocks_) {
      auto bp = b.parameters();
      out.insert(out.end(), bp.begin(), bp.end());
    }
    return out;
  }

  std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    for (auto* p : parameters())
      if (p->trainable) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }

  Var encode(const data::FixedLengthExample& ex, bool training, std::mt19937_64& rng) const {
    return encode_sequence(encoder_, ex, config_.dropout_rate, training, rng, !config_.ablation.no_intervals);
  }

  // Z -> X through the pyramid, or plain row averaging for avgpool_only.
  Var sequence_vector(const Var& z, bool training, std::mt19937_64& rng) const {
    if (config_.ablation.avgpool_only) return numerics::mean_rows(z);
    const ConvSchedule plan = schedule_for(z.value().rows());
    return cds_forward(blocks_, plan, z, {config_.dropout_rate, training}, rng);
  }

  Var logits(const data::FixedLengthExample& ex, bool training, std::mt19937_64& rng) const {
    Var x = sequence_vector(encode(ex, training, rng), training, rng);
    Var targets = encode_target_items(encoder_, ex.candidates, config_.dropout_rate, training, rng);
    return score(x, targets);
  }

  Var loss(const data::FixedLengthExample& ex, bool training, std::mt19937_64& rng) const {
    return numerics::bce_with_logits(logits(ex, training, rng));
  }

  // Inference scores, index 0 = positive.
  std::vector<double> score_candidates(const data::FixedLengthExample& ex) const {
    numerics::NoGradGuard guard;
    std::mt19937_64 unused(0);
    Var y = logits(ex, false, unused);
    return {y.value().data().begin(), y.value().data().end()};
  }

  std::vector<NamedTensor> state() const {
    std::vector<NamedTensor> out;
    const auto& d = config_.dims;
    out.push_back({"meta.dims", Tensor({9}, {double(d.attribute_dim), double(d.context_dim), double(d.id_rows),
                                             double(d.d_a), double(d.d_c), double(d.d_f), double(d.d_i),
                                             double(d.d_v), double(config_.sequence_length)})});
    Tensor sched({config_.schedule.size(), 2});
    for (std::size_t j = 0; j < config_.schedule.size(); ++j) {
      sched(j, 0) = double(config_.schedule[j].kernel);
      sched(j, 1) = double(config_.schedule[j].stride);
    }
    out.push_back({"meta.schedule", std::move(sched)});
    const auto& a = config_.ablation;
    out.push_back({"meta.ablation", Tensor({4}, {double(a.no_intervals), double(a.no_residuals),
                                                 double(a.single_conv), double(a.avgpool_only)})});
    auto* self = const_cast<ConvRecModel*>(this);
    for (auto* p : self->parameters()) out.push_back({p->name, p->value()});
    return out;
  }

  // Every parameter must be present with an identical shape; meta records are
  // ignored here.
  void load_state(const std::vector<NamedTensor>& records) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& r : records) by_name[r.name] = &r.tensor;
    for (auto* p : parameters()) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) throw CheckpointMismatch("checkpoint has no tensor named '" + p->name + "'");
      if (it->second->shape() != p->shape()) {
        throw CheckpointMismatch("checkpoint tensor '" + p->name + "' has shape " +
                                 numerics::shape_string(it->second->shape()) + ", model expects " +
                                 numerics::shape_string(p->shape()));
      }
      p->value() = *it->second;
    }
    std::size_t params = 0;
    for (const auto& r : records)
      if (r.name.rfind("meta.", 0) != 0) ++params;
    if (params != parameters().size()) {
      throw CheckpointMismatch("checkpoint holds " + std::to_string(params) + " parameter tensors, model has " +
                               std::to_string(parameters().size()));
    }
  }

 private:
  ModelConfig config_;
  ItemEncoderParams encoder_;
  std::vector<ConvBlockParams> blocks_;
  ConvSchedule plan_;
};

// Rebuilds the architecture recorded in a checkpoint's meta records.
inline ModelConfig config_from_state(const std::vector<NamedTensor>& records) {
  const Tensor* dims = nullptr;
  const Tensor* sched = nullptr;
  const Tensor* abl = nullptr;
  for (const auto& r : records) {
    if (r.name == "meta.dims") dims = &r.tensor;
    if (r.name == "meta.schedule") sched = &r.tensor;
    if (r.name == "meta.ablation") abl = &r.tensor;
  }
  if (!dims || !sched || !abl || dims->size() != 9 || abl->size() != 4 || sched->rank() != 2) {
    throw CheckpointMismatch("checkpoint lacks model metadata");
  }
  auto u = [](double v) { return static_cast<std::size_t>(v); };
  ModelConfig c;
  c.dims = {u((*dims)[0]), u((*dims)[1]), u((*dims)[2]), u((*dims)[3]), u((*dims)[4]),
            u((*dims)[5]), u((*dims)[6]), u((*dims)[7])};
  c.sequence_length = u((*dims)[8]);
  c.schedule.clear();
  for (std::size_t j = 0; j < sched->rows(); ++j) c.schedule.push_back({u((*sched)(j, 0)), u((*sched)(j, 1))});
  c.ablation = {(*abl)[0] != 0, (*abl)[1] != 0, (*abl)[2] != 0, (*abl)[3] != 0};
  return c;
}

}  // namespace convrec::model
