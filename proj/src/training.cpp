#include "cameo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "cameo/errors.hpp"
#include "cameo/util.hpp"

namespace cameo {

ShotConfig TrainConfig::shots() const {
  ShotConfig s;
  s.n_short = static_cast<int>(std::lround(total_shots * short_term_ratio));
  s.n_long = total_shots - s.n_short;
  return s;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (total_shots < 0) fail("total_shots must be >= 0");
  if (!(short_term_ratio >= 0 && short_term_ratio <= 1)) fail("short_term_ratio must lie in [0, 1]");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (grad_clip < 0) fail("grad_clip must be >= 0");
  if (!(warmup_fraction >= 0 && warmup_fraction < 1)) fail("warmup_fraction must lie in [0, 1)");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (max_examples_per_epoch < 0) fail("max_examples_per_epoch must be >= 0");
  if (val_examples < 0) fail("val_examples must be >= 0");
  if (!(shot_jitter >= 0 && shot_jitter <= 1)) fail("shot_jitter must lie in [0, 1]");
  if (jobs < 1) fail("jobs must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"total_shots", c.total_shots},
       {"short_term_ratio", c.short_term_ratio},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"optimizer", c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
       {"grad_clip", c.grad_clip},
       {"warmup_fraction", c.warmup_fraction},
       {"weight_decay", c.weight_decay},
       {"max_examples_per_epoch", c.max_examples_per_epoch},
       {"val_examples", c.val_examples},
       {"shot_jitter", c.shot_jitter},
       {"jobs", c.jobs}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.total_shots = j.value("total_shots", d.total_shots);
  c.short_term_ratio = j.value("short_term_ratio", d.short_term_ratio);
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  const std::string opt = j.value("optimizer", std::string("adam"));
  if (opt == "adam") {
    c.optimizer = OptimizerKind::kAdam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::kSgd;
  } else {
    throw ConfigError("unknown optimizer '" + opt + "' (expected adam or sgd)");
  }
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.warmup_fraction = j.value("warmup_fraction", d.warmup_fraction);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.max_examples_per_epoch = j.value("max_examples_per_epoch", d.max_examples_per_epoch);
  c.val_examples = j.value("val_examples", d.val_examples);
  c.shot_jitter = j.value("shot_jitter", d.shot_jitter);
  c.jobs = j.value("jobs", d.jobs);
}

TrainingExample build_training_example(const Episode& episode, int n, std::vector<MemoryEntry> long_term, int n_short,
                                       int m_event) {
  if (n < 1 || n > static_cast<int>(episode.size())) {
    throw OutOfRange("event " + std::to_string(n) + " outside episode " + episode.id);
  }
  MemorySet mem;
  mem.long_term = std::move(long_term);
  const int first = std::max(0, n - 1 - n_short);
  for (int i = first; i < n - 1; ++i) {
    const auto& step = episode.steps[static_cast<std::size_t>(i)];
    update_short_term(mem.short_term, step.event, step.narration);
  }
  const auto& target_step = episode.steps[static_cast<std::size_t>(n - 1)];
  TrainingExample ex;
  ex.sequence = assemble_context(mem, target_step.event, m_event);
  ex.context_length = ex.sequence.size();
  ex.target = target_step.narration;
  for (TokenId id : ex.target.token_ids) ex.sequence.push_token(id, SegmentTag::kTarget);
  ex.sequence.push_token(Vocabulary::special(Special::kNarrationEnd), SegmentTag::kTarget);
  ex.loss_mask.assign(ex.sequence.size(), 0);
  for (std::size_t p = ex.context_length - 1; p + 1 < ex.sequence.size(); ++p) ex.loss_mask[p] = 1;
  return ex;
}

TrainingExample build_training_example(const Episode& episode, int n, const PersistentStore& store,
                                       const ShotConfig& shots, int m_event) {
  if (n < 1 || n > static_cast<int>(episode.size())) {
    throw OutOfRange("event " + std::to_string(n) + " outside episode " + episode.id);
  }
  auto lt = shots.n_long > 0
                ? store.retrieve_long_term(episode.steps[static_cast<std::size_t>(n - 1)].event, shots.n_long)
                : std::vector<MemoryEntry>{};
  return build_training_example(episode, n, std::move(lt), shots.n_short, m_event);
}

double example_loss(const Model& model, const TrainingExample& example) {
  const auto trace = model.forward(example.sequence);
  double total = 0;
  int count = 0;
  for (std::size_t p = 0; p + 1 < example.sequence.size(); ++p) {
    if (!example.loss_mask[p]) continue;
    const auto row = trace.logits.row(static_cast<Eigen::Index>(p)).template cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(example.sequence.items[p + 1].token);
    ++count;
  }
  return count > 0 ? total / count : 0.0;
}

Optimizer::Optimizer(const TrainConfig& config, std::size_t n_params)
    : kind_(config.optimizer), weight_decay_(config.weight_decay) {
  if (kind_ == OptimizerKind::kAdam) {
    m_.assign(n_params, 0.0f);
    v_.assign(n_params, 0.0f);
  }
}

void Optimizer::step(std::span<float> params, std::span<const float> grad, double lr) {
  if (params.size() != grad.size()) throw ShapeError("optimizer: parameter and gradient sizes differ");
  ++t_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= static_cast<float>(lr * grad[i]);
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = static_cast<float>(b1 * m_[i] + (1 - b1) * grad[i]);
    v_[i] = static_cast<float>(b2 * v_[i] + (1 - b2) * grad[i] * grad[i]);
    const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps) + weight_decay_ * params[i];
    params[i] -= static_cast<float>(lr * update);
  }
}

double learning_rate_at(const TrainConfig& config, std::uint64_t step, std::uint64_t total_steps) {
  const double total = static_cast<double>(std::max<std::uint64_t>(total_steps, 1));
  const double warmup = std::floor(config.warmup_fraction * total);
  const double s = static_cast<double>(step);
  if (s < warmup) return config.learning_rate * (s + 1) / warmup;
  const double progress = std::clamp((s - warmup) / std::max(total - warmup, 1.0), 0.0, 1.0);
  const double floor = 0.1;
  return config.learning_rate * (floor + (1 - floor) * 0.5 * (1 + std::cos(std::numbers::pi * progress)));
}

double train_batch(Model& model, Optimizer& optimizer, std::span<const TrainingExample* const> batch,
                   const TrainConfig& config, double lr, std::uint64_t step) {
  if (batch.empty()) throw ShapeError("empty training batch");
  const std::size_t n_params = model.parameters().size();
  const int workers = std::min<int>(config.jobs, static_cast<int>(batch.size()));
  std::vector<std::vector<float>> grads(static_cast<std::size_t>(workers), std::vector<float>(n_params, 0.0f));
  std::vector<double> losses(batch.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  // Static partition keeps the reduction order fixed for a given job count.
  util::parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t w) {
    for (std::size_t i = w; i < batch.size(); i += static_cast<std::size_t>(workers)) {
      std::mt19937_64* rng_ptr = nullptr;
      std::mt19937_64 rng;
      if (model.config().dropout > 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(step),
                          static_cast<std::uint32_t>(step >> 32), static_cast<std::uint32_t>(i)};
        rng.seed(seq);
        rng_ptr = &rng;
      }
      losses[i] = model.loss_and_gradient(batch[i]->sequence, batch[i]->loss_mask, grads[w], scale, rng_ptr);
    }
  });
  auto& grad = grads.front();
  for (std::size_t w = 1; w < grads.size(); ++w) {
    for (std::size_t k = 0; k < n_params; ++k) grad[k] += grads[w][k];
  }
  double mean_loss = 0;
  for (double l : losses) mean_loss += l;
  mean_loss *= scale;
  double norm2 = 0;
  for (float g : grad) norm2 += static_cast<double>(g) * g;
  if (!std::isfinite(mean_loss) || !std::isfinite(norm2)) {
    throw TrainingDiverged("non-finite loss or gradient at step " + std::to_string(step));
  }
  if (config.grad_clip > 0) {
    const double norm = std::sqrt(norm2);
    if (norm > config.grad_clip) {
      const auto f = static_cast<float>(config.grad_clip / norm);
      for (float& g : grad) g *= f;
    }
  }
  optimizer.step(model.parameters(), grad, lr);
  return mean_loss;
}

namespace {

struct ExampleRef {
  std::size_t episode;
  int n;  // 1-based
};

}  // namespace

TrainResult train(const Corpus& corpus, Model& model, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (corpus.train.empty()) throw ConfigError("corpus has no training episodes");
  if (static_cast<int>(corpus.vocab.size()) != model.config().vocab_size) {
    throw CheckpointMismatch("model vocabulary size differs from the corpus vocabulary");
  }
  const ShotConfig shots = config.shots();
  const int m_event = model.config().m_event;
  const auto store = PersistentStore::build(corpus.train);

  std::vector<ExampleRef> refs;
  for (std::size_t e = 0; e < corpus.train.size(); ++e) {
    for (int n = 1; n <= static_cast<int>(corpus.train[e].size()); ++n) refs.push_back({e, n});
  }
  // Long-term neighbours do not change across epochs.
  std::vector<std::vector<std::size_t>> lt_cache(refs.size());
  if (shots.n_long > 0) {
    util::parallel_for(refs.size(), config.jobs, [&](std::size_t i) {
      const auto& ev = corpus.train[refs[i].episode].steps[static_cast<std::size_t>(refs[i].n - 1)].event;
      lt_cache[i] = store.retrieve_indices(ev, shots.n_long);
    });
  }

  std::vector<TrainingExample> val;
  if (config.val_examples > 0) {
    for (const auto& ep : corpus.val) {
      for (int n = 1; n <= static_cast<int>(ep.size()) && static_cast<int>(val.size()) < config.val_examples; ++n) {
        val.push_back(build_training_example(ep, n, store, shots, m_event));
      }
    }
  }
  auto val_loss = [&]() -> std::optional<double> {
    if (val.empty()) return std::nullopt;
    std::vector<double> losses(val.size());
    util::parallel_for(val.size(), config.jobs, [&](std::size_t i) { losses[i] = example_loss(model, val[i]); });
    double s = 0;
    for (double l : losses) s += l;
    return s / static_cast<double>(losses.size());
  };

  const std::size_t per_epoch = config.max_examples_per_epoch > 0
                                    ? std::min<std::size_t>(refs.size(), static_cast<std::size_t>(config.max_examples_per_epoch))
                                    : refs.size();
  const std::size_t steps_per_epoch = (per_epoch + static_cast<std::size_t>(config.batch_size) - 1) /
                                      static_cast<std::size_t>(config.batch_size);
  const std::uint64_t total_steps = steps_per_epoch * static_cast<std::uint64_t>(config.epochs);

  TrainResult result;
  if (auto v = val_loss()) result.initial_val_loss = *v;
  Optimizer optimizer(config, model.parameters().size());
  std::mt19937_64 rng(config.seed);
  std::uint64_t step = 0;
  std::ofstream log;
  if (hooks.metrics_log) {
    if (hooks.metrics_log->has_parent_path()) std::filesystem::create_directories(hooks.metrics_log->parent_path());
    log.open(*hooks.metrics_log);
    if (!log) throw IoError("cannot write metrics log " + hooks.metrics_log->string());
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(refs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(per_epoch);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < per_epoch; b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(per_epoch, b + static_cast<std::size_t>(config.batch_size));
      std::vector<TrainingExample> examples;
      examples.reserve(end - b);
      for (std::size_t i = b; i < end; ++i) {
        const auto& ref = refs[order[i]];
        int n_long = shots.n_long;
        int n_short = shots.n_short;
        if (config.shot_jitter > 0 && unit(rng) < config.shot_jitter) {
          n_long = std::uniform_int_distribution<int>(0, shots.n_long)(rng);
          n_short = std::uniform_int_distribution<int>(0, shots.n_short)(rng);
        }
        std::vector<MemoryEntry> lt;
        const auto& idx = lt_cache[order[i]];
        for (int k = 0; k < n_long && k < static_cast<int>(idx.size()); ++k) lt.push_back(store.entry(idx[static_cast<std::size_t>(k)]));
        examples.push_back(build_training_example(corpus.train[ref.episode], ref.n, std::move(lt), n_short, m_event));
      }
      std::vector<const TrainingExample*> batch;
      for (const auto& ex : examples) batch.push_back(&ex);
      const double lr = learning_rate_at(config, step, total_steps);
      const double loss = train_batch(model, optimizer, batch, config, lr, step);
      loss_sum += loss * static_cast<double>(batch.size());
      loss_count += batch.size();
      ++step;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_count, 1));
    m.val_loss = val_loss();
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(m);
    if (log) {
      nlohmann::json rec = {{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"timestamp", util::utc_timestamp()}};
      rec["val_loss"] = m.val_loss ? nlohmann::json(*m.val_loss) : nlohmann::json(nullptr);
      log << rec.dump() << '\n';
      log.flush();
    }
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  return result;
}

}  // namespace cameo
