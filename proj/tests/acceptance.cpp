// End-to-end acceptance run: trains the default model on three seeds, streams
// the test split in every mode and checks the unit-level properties. Prints
// one PASS/FAIL line per criterion and exits non-zero if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cameo/checkpoint.hpp"
#include "cameo/util.hpp"
#include "cli.hpp"
#include "support.hpp"

namespace cameo {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Tolerances and thresholds.
constexpr double kOrderingMargin = 0.02;
constexpr double kCameoGain = 0.005;
constexpr double kCameoMaxLoss = 0.005;
constexpr double kEntropyTol = 1e-9;
constexpr double kNoOpTol = 1e-6;
constexpr double kMetricTol = 1e-6;
constexpr double kStsTol = 1e-9;
constexpr double kShotTol = 0.01;
constexpr double kGradTol = 1e-3;
constexpr int kSeeds = 3;
constexpr int kMinTrainEpisodes = 300;
constexpr std::size_t kMinTestEvents = 200;
const std::vector<int> kPlanCandidates = {4, 8, 16};
constexpr int kSelectionEpisodes = 12;  // validation episodes used to choose k

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void record(int id, std::string name, bool pass, std::string detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << detail << std::endl;
  verdicts.push_back({id, std::move(name), pass, std::move(detail)});
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void log(const std::string& msg, Clock::time_point start) {
  const double s = std::chrono::duration<double>(Clock::now() - start).count();
  std::cerr << "[" << fmt(s, 0) << "s] " << msg << std::endl;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  MetricRow none, gt, confab, cameo;
  std::size_t test_events = 0;
  ModificationPlan plan;
  std::vector<EpisodeRun> confab_runs;
  std::optional<Model> model;
};

MetricRow stream_mean(const Model& model, std::span<const Episode> episodes, const PersistentStore& store,
                      StreamMode mode, const StreamConfig& sc, const Corpus& corpus, const TfIdfStats& stats,
                      const ModificationPlan* plan, int jobs, std::vector<EpisodeRun>* keep = nullptr,
                      const std::filesystem::path& out = {}, const json& meta = nullptr) {
  auto runs = stream_episodes(model, episodes, store, mode, sc, corpus.vocab, plan, jobs);
  for (const auto& r : runs) {
    if (r.failed) throw std::runtime_error("episode " + r.episode_id + " failed: " + r.error);
  }
  const auto report = evaluate_run(runs, stats);
  if (!out.empty()) write_run(out, runs, report, meta);
  if (keep) *keep = std::move(runs);
  return report.mean;
}

SeedOutcome run_seed(std::uint64_t seed, const Corpus& corpus, const std::filesystem::path& dir, int jobs,
                     Clock::time_point start) {
  cli::ExperimentConfig cfg;
  cfg.model.seed = seed;
  cfg.train.seed = seed;
  cfg.train.jobs = jobs;
  cfg.stream.seed = seed;
  cfg.probe.seed = seed;
  SeedOutcome o;
  o.seed = seed;

  const auto ckpt = dir / ("seed" + std::to_string(seed) + ".ckpt");
  Model model = [&] {
    if (std::filesystem::exists(ckpt)) {
      auto loaded = load_checkpoint(ckpt, &corpus.vocab);
      if (loaded.metadata.value("train", json::object()) == json(cfg.train)) {
        log("seed " + std::to_string(seed) + ": reusing " + ckpt.string(), start);
        return std::move(loaded.model);
      }
    }
    Model m(cli::model_config_for(cfg, corpus));
    TrainHooks hooks;
    hooks.metrics_log = dir / ("seed" + std::to_string(seed) + ".metrics.jsonl");
    hooks.on_epoch = [&](const EpochMetrics& e) {
      log("seed " + std::to_string(seed) + " epoch " + std::to_string(e.epoch) + " train " + fmt(e.train_loss) +
              " val " + fmt(e.val_loss.value_or(NAN)),
          start);
    };
    train(corpus, m, cfg.train, hooks);
    save_checkpoint(ckpt, m, corpus.vocab, {{"train", cfg.train}});
    return m;
  }();

  const auto store = PersistentStore::build(corpus.train);
  const auto stats = TfIdfStats::build(corpus.train);
  const auto sc = cli::stream_config(cfg, cfg.stream.shots);
  const std::string tag = "seed" + std::to_string(seed);
  auto meta = [&](StreamMode m) {
    return json{{"mode", mode_name(m)},
                {"shots", {{"n_long", sc.shots.n_long}, {"n_short", sc.shots.n_short}, {"total", sc.shots.total()}}},
                {"split", "test"},
                {"corpus", corpus_fingerprint(corpus)},
                {"seed", seed}};
  };
  o.none = stream_mean(model, corpus.test, store, StreamMode::kNoMemory, sc, corpus, stats, nullptr, jobs, nullptr,
                       dir / (tag + ".no-memory.jsonl"), meta(StreamMode::kNoMemory));
  o.gt = stream_mean(model, corpus.test, store, StreamMode::kGtMemory, sc, corpus, stats, nullptr, jobs, nullptr,
                     dir / (tag + ".gt.jsonl"), meta(StreamMode::kGtMemory));
  o.confab = stream_mean(model, corpus.test, store, StreamMode::kConfabulated, sc, corpus, stats, nullptr, jobs,
                         &o.confab_runs, dir / (tag + ".confab.jsonl"), meta(StreamMode::kConfabulated));
  o.test_events = corpus.num_events(Split::kTest);
  log(tag + ": no-memory " + fmt(o.none.sts_proxy) + " gt " + fmt(o.gt.sts_proxy) + " confab " +
          fmt(o.confab.sts_proxy),
      start);

  // Probe on validation, then pick k among the candidates on a validation subset.
  const auto cases = make_probe_cases(corpus.val, store, cfg.stream.shots, model.config().m_event, cfg.probe.cases,
                                      cfg.probe.seed);
  const auto probe = probe_heads(model, cases, cfg.probe.aggregation, jobs);
  util::write_file(dir / (tag + ".heads.csv"), probe_matrix_csv(probe));
  const std::span<const Episode> selection(corpus.val.data(),
                                           std::min<std::size_t>(corpus.val.size(), kSelectionEpisodes));
  const double val_confab = [&] {
    const auto m = stream_mean(model, selection, store, StreamMode::kConfabulated, sc, corpus, stats, nullptr, jobs);
    return m.sts_proxy + m.rouge_l;
  }();
  double best = -1e9;
  json selection_log = json::array();
  for (int k : kPlanCandidates) {
    ModificationPlan plan;
    plan.heads = select_top_k(probe, k);
    plan.tau = cfg.probe.tau;
    plan.direction = cfg.probe.direction;
    plan.renormalize_rows = cfg.probe.renormalize_rows;
    const auto m = stream_mean(model, selection, store, StreamMode::kCameo, sc, corpus, stats, &plan, jobs);
    const double score = m.sts_proxy + m.rouge_l;
    selection_log.push_back({{"k", k}, {"val_sts_plus_rouge", score}, {"val_confab_sts_plus_rouge", val_confab}});
    log(tag + ": k=" + std::to_string(k) + " val gain " + fmt(score - val_confab), start);
    if (score > best) {
      best = score;
      o.plan = plan;
    }
  }
  save_plan(o.plan, dir / (tag + ".plan.json"));
  util::write_file(dir / (tag + ".selection.json"), selection_log.dump(2) + "\n");
  o.cameo = stream_mean(model, corpus.test, store, StreamMode::kCameo, sc, corpus, stats, &o.plan, jobs, nullptr,
                        dir / (tag + ".cameo.jsonl"), meta(StreamMode::kCameo));
  log(tag + ": cameo (k=" + std::to_string(o.plan.heads.size()) + ") " + fmt(o.cameo.sts_proxy), start);
  o.model.emplace(std::move(model));
  return o;
}

void criterion_ordering(const std::vector<SeedOutcome>& seeds) {
  int ok = 0;
  std::string detail;
  for (const auto& s : seeds) {
    const bool pass = s.none.sts_proxy + kOrderingMargin <= s.confab.sts_proxy &&
                      s.confab.sts_proxy + kOrderingMargin <= s.gt.sts_proxy &&
                      s.none.rouge_l + kOrderingMargin <= s.confab.rouge_l &&
                      s.confab.rouge_l + kOrderingMargin <= s.gt.rouge_l;
    ok += pass;
    detail += " seed" + std::to_string(s.seed) + "{sts " + fmt(s.none.sts_proxy) + "<" + fmt(s.confab.sts_proxy) + "<" +
              fmt(s.gt.sts_proxy) + ", rouge " + fmt(s.none.rouge_l) + "<" + fmt(s.confab.rouge_l) + "<" +
              fmt(s.gt.rouge_l) + "}";
  }
  record(1, "memory ordering (margin 0.02, >=2/3 seeds)", ok >= 2, std::to_string(ok) + "/3 seeds;" + detail);
}

void criterion_cameo(const std::vector<SeedOutcome>& seeds) {
  int gains = 0;
  bool degraded = false;
  std::string detail;
  for (const auto& s : seeds) {
    const double ds = s.cameo.sts_proxy - s.confab.sts_proxy;
    const double dr = s.cameo.rouge_l - s.confab.rouge_l;
    gains += ds >= kCameoGain && dr >= kCameoGain;
    degraded |= ds < -kCameoMaxLoss || dr < -kCameoMaxLoss;
    detail += " seed" + std::to_string(s.seed) + "{k=" + std::to_string(s.plan.heads.size()) + " dsts " + fmt(ds) +
              " drouge " + fmt(dr) + "}";
  }
  record(2, "CAMEO gain (>=0.005 on >=2/3 seeds, no loss >0.005)", gains >= 2 && !degraded,
         std::to_string(gains) + "/3 seeds gain;" + detail);
}

void criterion_entropy() {
  double worst = 0;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(2 + t % 6);
    double z = 0;
    for (auto& v : p) z += (v = u(rng));
    double oracle = 0;
    for (auto& v : p) {
      v /= z;
      oracle -= v * std::log(v);
    }
    worst = std::max(worst, std::abs(semantic_entropy(p) - oracle));
  }
  // Clusterings built from sampled narrations with known cluster sizes.
  const auto vocab = world_vocabulary();
  const std::vector<std::string> texts = {"c picks up the knife", "c washes the cup", "c opens the box",
                                          "c puts down the plate"};
  EntropyConfig cfg;
  cfg.equivalence = Equivalence::kExact;
  bool single = true, uniform = true;
  for (int k = 1; k <= 4; ++k) {
    std::vector<Narration> samples;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < k; ++c) samples.push_back(Narration::from_text(texts[static_cast<std::size_t>(c)], vocab));
    }
    const double h = semantic_entropy(cluster_semantic(samples, cfg));
    if (k == 1) single = h == 0.0;
    else uniform &= std::abs(h - std::log(static_cast<double>(k))) <= kEntropyTol;
  }
  std::vector<Narration> skew;
  for (int i = 0; i < 10; ++i) skew.push_back(Narration::from_text(texts[i < 6 ? 0 : i < 9 ? 1 : 2], vocab));
  const double skew_oracle = -(0.6 * std::log(0.6) + 0.3 * std::log(0.3) + 0.1 * std::log(0.1));
  worst = std::max(worst, std::abs(semantic_entropy(cluster_semantic(skew, cfg)) - skew_oracle));
  record(3, "semantic entropy exactness (1e-9)", worst <= kEntropyTol && single && uniform,
         "max err " + sci(worst) + ", single-cluster " + (single ? "0" : "non-zero") + ", uniform ln k " +
             (uniform ? "ok" : "off"));
}

void criterion_weights() {
  bool ok = true;
  for (double tau : {0.0, 0.6, 0.8}) {
    ok &= credibility_weight(0.0, tau, WeightDirection::kDownweight) == 1.0;
    ok &= credibility_weight(0.0, tau, WeightDirection::kUpweight) == 1.0;
  }
  bool monotone = true, reciprocal = true;
  for (double tau : {0.6, 0.8, 2.0}) {
    double prev = 2.0;
    for (int i = 0; i <= 300; ++i) {
      const double se = i * 0.01;
      const double w = credibility_weight(se, tau, WeightDirection::kDownweight);
      monotone &= se == 0 ? w <= prev : w < prev;
      prev = w;
      reciprocal &= std::abs(credibility_weight(se, tau, WeightDirection::kUpweight) * w - 1.0) <= 1e-12;
    }
  }
  record(4, "weight formula", ok && monotone && reciprocal,
         std::string("w(0)=1 ") + (ok ? "ok" : "off") + ", decreasing " + (monotone ? "ok" : "off") +
             ", upweight = reciprocal " + (reciprocal ? "ok" : "off"));
}

void criterion_noop(const SeedOutcome& s, const Corpus& corpus) {
  const Model& m = *s.model;
  const auto& cfg = m.config();
  std::vector<AttentionHeadId> all;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) all.push_back({l, h});
  }
  const auto store = PersistentStore::build(corpus.train);
  double worst_ones = 0, worst_tau = 0, worst_empty = 0;
  const auto& runs = s.confab_runs;
  for (std::size_t e = 0; e < std::min<std::size_t>(3, runs.size()); ++e) {
    const auto& ep = *std::find_if(corpus.test.begin(), corpus.test.end(),
                                   [&](const Episode& x) { return x.id == runs[e].episode_id; });
    for (std::size_t n = 2; n <= std::min<std::size_t>(ep.size(), 6); ++n) {
      MemorySet mem;
      mem.long_term = store.retrieve_long_term(ep.steps[n - 1].event, 8);
      std::vector<MemoryEntry> buffer;
      ModificationPlan plan;
      plan.heads = all;
      plan.tau = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        update_short_term(buffer, ep.steps[k].event, runs[e].steps[k].prediction, plan.weight_for(1.3));
      }
      mem.short_term = retrieve_short_term(buffer, 8);
      const auto ctx = assemble_context(mem, ep.steps[n - 1].event, cfg.m_event);
      const auto base = m.forward(ctx).logits;
      std::vector<Intervention> ones;
      for (const auto& h : all) ones.push_back(Intervention::reweight(h, std::vector<double>(ctx.size(), 1.0)));
      worst_ones = std::max(worst_ones, testing::max_abs_diff(m.forward(ctx, ones).logits, base));
      worst_tau = std::max(worst_tau, testing::max_abs_diff(apply_cameo(m, ctx, plan).logits, base));

      MemorySet no_st;
      no_st.long_term = mem.long_term;
      const auto c1 = assemble_context(no_st, ep.steps[n - 1].event, cfg.m_event);
      plan.tau = 0.6;
      worst_empty = std::max(worst_empty, testing::max_abs_diff(apply_cameo(m, c1, plan).logits, m.forward(c1).logits));
    }
  }
  record(5, "intervention no-ops (1e-6)", worst_ones <= kNoOpTol && worst_tau <= kNoOpTol && worst_empty <= kNoOpTol,
         "all-ones " + sci(worst_ones) + ", tau=0 " + sci(worst_tau) + ", empty short-term " +
             sci(worst_empty));
}

void criterion_planted() {
  const auto vocab = world_vocabulary();
  const Model model = testing::planted_copy_model(vocab);
  const auto episodes = testing::single_object_episodes(vocab, 12, 5, model.config().d_v);
  const auto store = PersistentStore::build(episodes);
  const auto cases = make_probe_cases(episodes, store, ShotConfig{0, 1}, model.config().m_event, 20, 2024);
  int hits = 0;
  for (const auto& c : cases) {
    const auto r = probe_heads(model, std::span<const ProbeCase>(&c, 1));
    hits += select_top_k(r, 1) == std::vector<AttentionHeadId>{{0, 1}};
  }
  record(6, "planted-head probing (k=1, 20 cases)", cases.size() == 20 && hits == 20,
         std::to_string(hits) + "/" + std::to_string(cases.size()) + " cases");
}

void criterion_metrics() {
  const auto fx = json::parse(util::read_file(CAMEO_TEST_DATA_DIR "/metric_fixture.json"));
  double worst_bleu = 0, worst_rouge = 0;
  for (const auto& row : fx.at("pairs")) {
    const auto c = row.at("candidate").get<std::string>();
    const auto r = row.at("reference").get<std::string>();
    worst_bleu = std::max(worst_bleu, std::abs(bleu(c, r) - row.at("bleu").get<double>()));
    worst_rouge = std::max(worst_rouge, std::abs(rouge_l(c, r) - row.at("rouge_l").get<double>()));
  }
  const std::vector<std::string> docs = {"c picks up the knife", "c cuts the bread with the knife", "c washes the cup"};
  const auto stats = TfIdfStats::build(docs);
  const double a = std::log(2.0) + 1.0, k = std::log(4.0 / 3.0) + 1.0;
  const double qq = 4 + k * k + a * a;
  const double hand[3] = {(2 + k * k) / std::sqrt(qq * (2 + 2 * a * a + k * k)),
                          (4 + k * k) / std::sqrt(qq * (5 + 3 * a * a + k * k)),
                          (2 + a * a) / std::sqrt(qq * (2 + 2 * a * a))};
  double worst_sts = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    worst_sts = std::max(worst_sts, std::abs(sts_proxy("the knife the cup", docs[i], stats) - hand[i]));
  }
  record(7, "metric oracle equivalence",
         fx.at("pairs").size() == 50 && worst_bleu <= kMetricTol && worst_rouge <= kMetricTol && worst_sts <= kStsTol,
         std::to_string(fx.at("pairs").size()) + " pairs, max err bleu " + sci(worst_bleu) + " rouge " +
             sci(worst_rouge) + ", sts " + sci(worst_sts));
}

void criterion_buffer(const SeedOutcome& s, int n_short) {
  std::size_t checked = 0, bad = 0;
  for (const auto& run : s.confab_runs) {
    for (std::size_t n = 1; n <= run.steps.size(); ++n) {
      std::vector<std::string> expected;
      const std::size_t first = n - 1 > static_cast<std::size_t>(n_short) ? n - 1 - static_cast<std::size_t>(n_short) : 0;
      for (std::size_t k = first; k + 1 < n; ++k) expected.push_back(run.steps[k].prediction.text);
      bad += run.steps[n - 1].short_term != expected;
      ++checked;
    }
  }
  record(8, "streaming buffer invariant", bad == 0 && checked == s.test_events,
         std::to_string(checked - bad) + "/" + std::to_string(checked) + " steps exact");
}

void criterion_shots(const SeedOutcome& s, const Corpus& corpus, int jobs) {
  cli::ExperimentConfig cfg;
  cfg.stream.seed = s.seed;
  const auto store = PersistentStore::build(corpus.train);
  const auto stats = TfIdfStats::build(corpus.train);
  std::vector<double> sts;
  std::string detail;
  for (int total : {0, 4, 8, 16}) {
    const auto shots = cli::split_shots(total, 0.5);
    double v;
    if (shots.n_long == cfg.stream.shots.n_long && shots.n_short == cfg.stream.shots.n_short) {
      v = s.gt.sts_proxy;
    } else {
      v = stream_mean(*s.model, corpus.test, store, StreamMode::kGtMemory, cli::stream_config(cfg, shots), corpus,
                      stats, nullptr, jobs)
              .sts_proxy;
    }
    sts.push_back(v);
    detail += (detail.empty() ? "" : ", ") + std::to_string(total) + ":" + fmt(v);
  }
  bool ok = true;
  for (std::size_t i = 1; i < sts.size(); ++i) ok &= sts[i] + kShotTol >= sts[i - 1];
  record(9, "gt shot monotonicity (0/4/8/16, tol 0.01)", ok, detail);
}

void criterion_gradients(const Corpus& corpus) {
  auto cfg = testing::tiny_model_config(corpus, 2, 2, 16);
  auto m = Transformer<double>(cfg);
  testing::randomize(m, 0.25, 17);
  const auto& ep = corpus.train[0];
  MemorySet mem;
  for (int i = 0; i < 3; ++i) update_short_term(mem.short_term, ep.steps[i].event, ep.steps[i].narration);
  auto seq = assemble_context(mem, ep.steps[3].event, cfg.m_event);
  const std::size_t prompt = seq.size();
  std::vector<std::uint8_t> mask(seq.size(), 0);
  mask.back() = 1;
  for (TokenId id : ep.steps[3].narration.token_ids) {
    seq.push_token(id, SegmentTag::kTarget);
    mask.push_back(1);
  }
  mask.back() = 0;
  std::vector<double> grad(m.parameters().size(), 0.0), dummy(grad.size());
  m.loss_and_gradient(seq, mask, grad);
  auto params = m.parameters();
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + 1e-4;
    const double up = m.loss_and_gradient(seq, mask, dummy);
    params[i] = keep - 1e-4;
    const double down = m.loss_and_gradient(seq, mask, dummy);
    params[i] = keep;
    const double numeric = (up - down) / 2e-4;
    worst = std::max(worst, std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-4}));
  }

  // Changing tokens after position p leaves logits up to p bit-identical.
  const auto base = m.forward(seq).logits;
  bool causal = true;
  for (std::size_t p : {prompt / 3, prompt - 1, seq.size() - 2}) {
    ContextSequence changed = seq;
    for (std::size_t i = p + 1; i < changed.size(); ++i) {
      auto& item = changed.items[i];
      if (item.kind == ContextItem::Kind::kToken) item.token = (item.token + 5) % cfg.vocab_size;
    }
    const auto out = m.forward(changed).logits;
    causal &= out.topRows(static_cast<Eigen::Index>(p + 1)) == base.topRows(static_cast<Eigen::Index>(p + 1));
    causal &= (out.bottomRows(1) - base.bottomRows(1)).cwiseAbs().maxCoeff() > 0;
  }
  record(10, "gradient and causality checks", worst <= kGradTol && causal,
         "max relative gradient error " + sci(worst) + " over " + std::to_string(params.size()) +
             " parameters, causal mask " + (causal ? "ok" : "violated"));
}

}  // namespace
}  // namespace cameo

int main(int argc, char** argv) {
  using namespace cameo;
  CLI::App app{"Acceptance run"};
  std::string workdir = "acceptance_out";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--workdir", workdir, "Checkpoints and run files")->capture_default_str();
  app.add_option("--jobs", jobs)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const auto start = Clock::now();
  const std::filesystem::path dir(workdir);
  std::filesystem::create_directories(dir);

  criterion_entropy();
  criterion_weights();
  criterion_planted();
  criterion_metrics();

  try {
    cli::ExperimentConfig cfg;
    const Corpus corpus = generate_corpus(cfg.data.world, cfg.data.n_train, cfg.data.n_val, cfg.data.n_test);
    criterion_gradients(corpus);
    log("corpus: " + std::to_string(corpus.train.size()) + " train episodes, " +
            std::to_string(corpus.num_events(Split::kTest)) + " test events",
        start);
    if (static_cast<int>(corpus.train.size()) < kMinTrainEpisodes || corpus.num_events(Split::kTest) < kMinTestEvents) {
      throw std::runtime_error("corpus is smaller than the acceptance minimum");
    }
    std::vector<SeedOutcome> seeds;
    for (int s = 0; s < kSeeds; ++s) seeds.push_back(run_seed(static_cast<std::uint64_t>(s), corpus, dir, jobs, start));
    criterion_ordering(seeds);
    criterion_cameo(seeds);
    criterion_noop(seeds.front(), corpus);
    criterion_buffer(seeds.front(), cfg.stream.shots.n_short);
    criterion_shots(seeds.front(), corpus, jobs);
  } catch (const std::exception& e) {
    std::cout << "FAIL  pipeline aborted: " << e.what() << std::endl;
    return 1;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  json summary = json::array();
  int failed = 0;
  for (const auto& v : verdicts) {
    summary.push_back({{"criterion", v.id}, {"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    failed += !v.pass;
  }
  util::write_file(dir / "acceptance.json", summary.dump(2) + "\n");
  log(std::to_string(verdicts.size() - static_cast<std::size_t>(failed)) + "/" + std::to_string(verdicts.size()) +
          " criteria passed",
      start);
  return failed == 0 ? 0 : 1;
}
