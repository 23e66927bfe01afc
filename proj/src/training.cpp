#include "slate/training.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "slate/errors.hpp"
#include "slate/sgcs.hpp"

namespace slate {

namespace {

// Backpropagation through a 10-step sequence allocates and frees the same
// large activation buffers every batch; keeping them in the heap instead of
// returning them to the kernel avoids re-faulting fresh pages each time.
void retain_heap_memory() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epoch count must be non-negative");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},       {"batch", c.batch}, {"epochs", c.epochs},
                     {"seed", c.seed},   {"eval_every", c.eval_every}};
  j["target_sgcs"] = c.target_sgcs ? nlohmann::json(*c.target_sgcs) : nlohmann::json(nullptr);
  j["max_steps"] = c.max_steps ? nlohmann::json(*c.max_steps) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  if (j.contains("target_sgcs") && !j["target_sgcs"].is_null()) c.target_sgcs = j["target_sgcs"].get<double>();
  if (j.contains("max_steps") && !j["max_steps"].is_null()) c.max_steps = j["max_steps"].get<std::uint64_t>();
}

template <typename T>
Adam<T>::Adam(std::vector<Var<T>> params, double lr, AdamConfig cfg)
    : params_(std::move(params)), lr_(lr), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(lr_ / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<T>& p = params_[i];
    T* m = m_[i].data();
    T* v = v_[i].data();
    T* w = p.mutable_value().data();
    const std::size_t n = p.size();
    const bool has_grad = !p.grad().empty();
    const T* g = has_grad ? p.grad().data() : nullptr;
    for (std::size_t k = 0; k < n; ++k) {
      const T gk = has_grad ? g[k] : T(0);
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
    }
  }
}

template <typename T>
std::vector<Tensor<T>> stack_sequences(std::span<const CsiSequence* const> batch) {
  if (batch.empty()) throw DimensionError("stack_sequences: empty batch");
  const int n_time = batch.front()->n_time();
  for (const CsiSequence* s : batch) {
    if (s->n_time() != n_time) throw DimensionError("stack_sequences: sequences differ in length");
  }
  std::vector<Tensor<T>> steps;
  steps.reserve(static_cast<std::size_t>(n_time));
  for (int n = 0; n < n_time; ++n) steps.push_back(stack_time_step<T>(batch, n));
  return steps;
}

template <typename T>
SequenceOutput<T> forward_sequence(const SlateModel<T>& model, const std::vector<Tensor<T>>& steps,
                                   const ForwardOptions& options, const LatentTransform<T>* transform) {
  if (steps.empty()) throw DimensionError("forward_sequence: no time steps");
  const std::size_t batch = steps.front().dim(0);
  const QuantizerConfig quantizer{model.config().b_bits};
  SequenceOutput<T> out;
  RecurrentState<T> enc = model.initial_encoder_state(batch);
  RecurrentState<T> dec = model.initial_decoder_state(batch);
  Var<T> total;
  for (std::size_t n = 0; n < steps.size(); ++n) {
    if (options.reset_state_each_step && n > 0) {
      enc = model.initial_encoder_state(batch);
      dec = model.initial_decoder_state(batch);
    }
    auto e = model.encode_step(Var<T>(steps[n]), enc);
    Var<T> zq;
    if (transform != nullptr) {
      zq = (*transform)(e.latent, static_cast<int>(n));
    } else if (options.mode == ForwardMode::SteTrain) {
      zq = ops::ste_quantize(e.latent, quantizer);
    } else {
      zq = Var<T>(quantize_dequantize(e.latent.value(), quantizer));
    }
    auto d = model.decode_step(zq, dec);
    enc = std::move(e.state);
    dec = std::move(d.state);
    Var<T> sgcs = ops::mean_sgcs(d.csi, steps[n]);
    total = total.defined() ? ops::add(total, sgcs) : sgcs;
    out.latents.push_back(e.latent);
    out.reconstructions.push_back(d.csi);
  }
  out.loss = ops::scale(total, static_cast<T>(-1.0 / static_cast<double>(steps.size())));
  return out;
}

std::string metrics_line(const EpochMetrics& m) {
  nlohmann::json j{{"epoch", m.epoch}, {"step", m.step}, {"trainLoss", m.train_loss}, {"wallclock", m.wallclock_s}};
  j["valSGCS"] = m.val_sgcs ? nlohmann::json(*m.val_sgcs) : nlohmann::json(nullptr);
  return j.dump();
}

template <typename T>
double mean_hard_sgcs(const SlateModel<T>& model, const Dataset& data, int batch) {
  if (data.samples.empty()) throw DimensionError("mean_hard_sgcs: empty dataset");
  NoGradGuard guard;
  double weighted = 0.0;
  std::size_t streams = 0;
  const ForwardOptions eval{ForwardMode::HardEval, false};
  for (std::size_t start = 0; start < data.samples.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(data.samples.size(), start + static_cast<std::size_t>(batch));
    std::vector<const CsiSequence*> group;
    for (std::size_t i = start; i < end; ++i) group.push_back(&data.samples[i]);
    const auto steps = stack_sequences<T>(group);
    const auto out = forward_sequence(model, steps, eval);
    const std::size_t b = steps.front().dim(0);
    weighted += -static_cast<double>(out.loss.value().item()) * static_cast<double>(b);
    streams += b;
  }
  return weighted / static_cast<double>(streams);
}

namespace {

void check_dims(const ModelConfig& m, const Dataset& d, const char* which) {
  if (d.config.n_tx != m.n_tx || d.config.n_sb != m.n_sb) {
    throw ConfigError(std::string(which) + " dataset has " + std::to_string(d.config.n_tx) + " antennas x " +
                      std::to_string(d.config.n_sb) + " subbands, model expects " + std::to_string(m.n_tx) + " x " +
                      std::to_string(m.n_sb));
  }
}

}  // namespace

template <typename T>
TrainResult train(SlateModel<T>& model, Adam<T>& optimizer, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks, int first_epoch) {
  cfg.validate();
  check_dims(model.config(), train_set, "training");
  if (val_set != nullptr) check_dims(model.config(), *val_set, "validation");
  if (train_set.samples.empty()) throw ConfigError("training dataset is empty");
  retain_heap_memory();
  optimizer.set_lr(cfg.lr);

  TrainResult result;
  result.epochs_completed = first_epoch;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t count = train_set.samples.size();
  const std::size_t per_batch = static_cast<std::size_t>(cfg.batch);
  std::vector<std::size_t> order(count);

  for (int epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps && optimizer.steps() >= *cfg.max_steps) break;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    int batch_index = 0;
    for (std::size_t b0 = 0; b0 < count; b0 += per_batch, ++batch_index) {
      if (cfg.max_steps && optimizer.steps() >= *cfg.max_steps) break;
      std::vector<const CsiSequence*> group;
      for (std::size_t i = b0; i < std::min(count, b0 + per_batch); ++i) group.push_back(&train_set.samples[order[i]]);
      const auto steps = stack_sequences<T>(group);
      const auto fail = [&](const std::string& what) {
        std::ostringstream msg;
        msg << what << " at epoch " << epoch + 1 << ", batch " << batch_index + 1 << " (lr " << cfg.lr << ")";
        throw NumericalError(msg.str());
      };
      model.parameters().zero_grad();
      SequenceOutput<T> out;
      try {
        out = forward_sequence(model, steps, ForwardOptions{ForwardMode::SteTrain, false});
      } catch (const NumericalError& e) {
        fail(e.what());
      }
      const double loss = static_cast<double>(out.loss.value().item());
      if (!std::isfinite(loss)) fail("training loss is " + std::to_string(loss));
      backward(out.loss);
      optimizer.step();
      loss_sum += loss * static_cast<double>(group.size());
      loss_count += group.size();
    }
    model.parameters().zero_grad();

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.step = optimizer.steps();
    m.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    const bool last = epoch + 1 == cfg.epochs || (cfg.max_steps && optimizer.steps() >= *cfg.max_steps);
    if (val_set != nullptr && !val_set->samples.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      m.val_sgcs = mean_hard_sgcs(model, *val_set, cfg.batch);
    }
    m.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(m);
    result.epochs_completed = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(m);
    if (cfg.target_sgcs && m.val_sgcs && *m.val_sgcs >= *cfg.target_sgcs) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

template <typename T>
Checkpoint make_training_checkpoint(const SlateModel<T>& model, const Adam<T>& optimizer, const TrainConfig& cfg,
                                    int epochs_completed) {
  Checkpoint c = make_checkpoint(model);
  c.step = optimizer.steps();
  c.meta = {{"train", cfg}, {"epoch", epochs_completed}};
  const auto& items = model.parameters().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    c.tensors.emplace_back("adam.m." + items[i].name, optimizer.first_moments()[i].template cast<float>());
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    c.tensors.emplace_back("adam.v." + items[i].name, optimizer.second_moments()[i].template cast<float>());
  }
  return c;
}

template <typename T>
int restore_training_checkpoint(const Checkpoint& c, SlateModel<T>& model, Adam<T>& optimizer) {
  load_parameters(model, c);
  const auto& items = model.parameters().items();
  bool have_moments = true;
  for (const auto& p : items) {
    have_moments = have_moments && c.find("adam.m." + p.name) != nullptr && c.find("adam.v." + p.name) != nullptr;
  }
  if (have_moments) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Tensor<float>* m = c.find("adam.m." + items[i].name);
      const Tensor<float>* v = c.find("adam.v." + items[i].name);
      if (m->shape() != items[i].var.shape() || v->shape() != items[i].var.shape()) {
        throw FormatError("optimizer moments for " + items[i].name + " have the wrong shape", 0);
      }
      optimizer.first_moments()[i] = m->template cast<T>();
      optimizer.second_moments()[i] = v->template cast<T>();
    }
  }
  optimizer.set_steps(c.step);
  return c.meta.value("epoch", 0);
}

#define SLATE_INSTANTIATE_TRAINING(T)                                                                        \
  template class Adam<T>;                                                                                   \
  template std::vector<Tensor<T>> stack_sequences(std::span<const CsiSequence* const>);                     \
  template SequenceOutput<T> forward_sequence(const SlateModel<T>&, const std::vector<Tensor<T>>&,          \
                                              const ForwardOptions&, const LatentTransform<T>*);            \
  template double mean_hard_sgcs(const SlateModel<T>&, const Dataset&, int);                                \
  template TrainResult train(SlateModel<T>&, Adam<T>&, const Dataset&, const Dataset*, const TrainConfig&,  \
                             const TrainHooks&, int);                                                       \
  template Checkpoint make_training_checkpoint(const SlateModel<T>&, const Adam<T>&, const TrainConfig&, int); \
  template int restore_training_checkpoint(const Checkpoint&, SlateModel<T>&, Adam<T>&);

SLATE_INSTANTIATE_TRAINING(float)
SLATE_INSTANTIATE_TRAINING(double)

}  // namespace slate
