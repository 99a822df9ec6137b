#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cameo/checkpoint.hpp"
#include "cameo/errors.hpp"
#include "cameo/util.hpp"

namespace cameo::cli {

using nlohmann::json;

namespace {

const char* aggregation_name(Aggregation a) { return a == Aggregation::kMean ? "mean" : "median"; }

Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::kMean;
  if (s == "median") return Aggregation::kMedian;
  throw ConfigError("unknown aggregation '" + s + "' (expected mean or median)");
}

// Overlays `patch` on the serialized defaults so omitted keys keep them.
template <typename T>
T merged(const json& patch, const T& defaults) {
  json base = defaults;
  base.merge_patch(patch);
  return base.get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.n_train < 1 || data.n_val < 0 || data.n_test < 1) throw ConfigError("data split sizes must be positive");
  data.world.validate();
  train.validate();
  stream.entropy.validate();
  if (stream.shots.n_long < 0 || stream.shots.n_short < 0) throw ConfigError("shot counts must be >= 0");
  if (stream.max_len < 1) throw ConfigError("stream.max_len must be >= 1");
  if (probe.cases < 1) throw ConfigError("probe.cases must be >= 1");
  if (probe.top_k < 1) throw ConfigError("probe.top_k must be >= 1");
  if (!(probe.tau >= 0)) throw ConfigError("probe.tau must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

void to_json(json& j, const ExperimentConfig& c) {
  json model = c.model;
  model.erase("vocab_size");
  model.erase("d_v");
  j = {{"data", {{"n_train", c.data.n_train}, {"n_val", c.data.n_val}, {"n_test", c.data.n_test}, {"world", c.data.world}}},
       {"model", model},
       {"train", c.train},
       {"stream",
        {{"n_long", c.stream.shots.n_long},
         {"n_short", c.stream.shots.n_short},
         {"max_len", c.stream.max_len},
         {"split", c.stream.split},
         {"seed", c.stream.seed},
         {"entropy", c.stream.entropy}}},
       {"probe",
        {{"cases", c.probe.cases},
         {"top_k", c.probe.top_k},
         {"tau", c.probe.tau},
         {"direction", direction_name(c.probe.direction)},
         {"renormalize_rows", c.probe.renormalize_rows},
         {"aggregation", aggregation_name(c.probe.aggregation)},
         {"split", c.probe.split},
         {"seed", c.probe.seed}}},
       {"jobs", c.jobs}};
}

void from_json(const json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  if (j.contains("data")) {
    const auto& s = j.at("data");
    c.data.n_train = s.value("n_train", d.data.n_train);
    c.data.n_val = s.value("n_val", d.data.n_val);
    c.data.n_test = s.value("n_test", d.data.n_test);
    if (s.contains("world")) c.data.world = merged(s.at("world"), d.data.world);
  }
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) c.train = merged(j.at("train"), d.train);
  if (j.contains("stream")) {
    const auto& s = j.at("stream");
    c.stream.shots.n_long = s.value("n_long", d.stream.shots.n_long);
    c.stream.shots.n_short = s.value("n_short", d.stream.shots.n_short);
    c.stream.max_len = s.value("max_len", d.stream.max_len);
    c.stream.split = s.value("split", d.stream.split);
    c.stream.seed = s.value("seed", d.stream.seed);
    if (s.contains("entropy")) c.stream.entropy = s.at("entropy").get<EntropyConfig>();
  }
  if (j.contains("probe")) {
    const auto& s = j.at("probe");
    c.probe.cases = s.value("cases", d.probe.cases);
    c.probe.top_k = s.value("top_k", d.probe.top_k);
    c.probe.tau = s.value("tau", d.probe.tau);
    c.probe.direction = parse_direction(s.value("direction", std::string(direction_name(d.probe.direction))));
    c.probe.renormalize_rows = s.value("renormalize_rows", d.probe.renormalize_rows);
    c.probe.aggregation = parse_aggregation(s.value("aggregation", std::string("mean")));
    c.probe.split = s.value("split", d.probe.split);
    c.probe.seed = s.value("seed", d.probe.seed);
  }
  c.jobs = j.value("jobs", d.jobs);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = util::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig c;
  try {
    c = json::parse(text).get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void apply_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.data.world.seed = seed;
  c.model.seed = seed;
  c.train.seed = seed;
  c.stream.seed = seed;
  c.probe.seed = seed;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw UsageError("unknown split '" + s + "' (expected train, val or test)");
}

ModelConfig model_config_for(const ExperimentConfig& c, const Corpus& corpus) {
  ModelConfig m = c.model;
  m.vocab_size = static_cast<int>(corpus.vocab.size());
  m.d_v = corpus.world_config.frame_dim;
  m.validate();
  return m;
}

StreamConfig stream_config(const ExperimentConfig& c, ShotConfig shots) {
  StreamConfig s;
  s.shots = shots;
  s.max_len = c.stream.max_len;
  s.entropy = c.stream.entropy;
  s.seed = c.stream.seed;
  return s;
}

ShotConfig split_shots(int total, double short_term_ratio) {
  if (total < 0) throw UsageError("shot budget must be >= 0");
  if (!(short_term_ratio >= 0 && short_term_ratio <= 1)) throw UsageError("short-term ratio must be in [0, 1]");
  ShotConfig s;
  s.n_short = static_cast<int>(std::lround(total * short_term_ratio));
  s.n_long = total - s.n_short;
  return s;
}

ShotConfig parse_shots(const std::string& text) {
  const auto comma = text.find(',');
  ShotConfig s;
  try {
    if (comma == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    s.n_long = std::stoi(text.substr(0, comma), &used);
    if (used != comma) throw std::invalid_argument(text);
    const std::string rest = text.substr(comma + 1);
    s.n_short = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw UsageError("--shots expects N_l,N_s (got '" + text + "')");
  }
  if (s.n_long < 0 || s.n_short < 0) throw UsageError("shot counts must be >= 0");
  return s;
}

namespace {

int mode_rank(const std::string& mode) {
  static const std::vector<std::string> order = {"no-memory", "gt-memory", "confabulated", "confabulated+cameo"};
  const auto it = std::find(order.begin(), order.end(), mode);
  return static_cast<int>(it - order.begin());
}

json metric_delta(const json& a, const json& b) {
  json d;
  for (const char* k : {"sts_proxy", "rouge_l", "bleu"}) d[k] = a.at(k).get<double>() - b.at(k).get<double>();
  return d;
}

}  // namespace

json build_report(const std::vector<json>& summaries) {
  if (summaries.empty()) throw UsageError("report needs at least one run");
  const std::string corpus = summaries.front().value("corpus", "");
  std::vector<json> rows;
  for (const auto& s : summaries) {
    if (s.value("corpus", "") != corpus) {
      throw UsageError("runs come from different corpora (" + corpus + " vs " + s.value("corpus", "") + ")");
    }
    const auto& shots = s.at("shots");
    const int total = shots.at("total").get<int>();
    rows.push_back({{"mode", s.at("mode")},
                    {"n_long", shots.at("n_long")},
                    {"n_short", shots.at("n_short")},
                    {"total", total},
                    {"ratio", total > 0 ? shots.at("n_short").get<double>() / total : 0.0},
                    {"n_events", s.at("n_events")},
                    {"failed_episodes", s.value("failed_episodes", 0)},
                    {"metrics", s.at("metrics")}});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
    const auto key = [](const json& r) {
      return std::make_tuple(r.at("total").get<int>(), r.at("n_short").get<int>(), mode_rank(r.at("mode")));
    };
    return key(a) < key(b);
  });

  const json* no_memory = nullptr;
  for (const auto& r : rows) {
    if (r.at("mode") == "no-memory" && !no_memory) no_memory = &r;
  }
  // Comparison rows per memory configuration.
  std::map<std::pair<int, int>, std::map<std::string, const json*>> groups;
  for (const auto& r : rows) {
    if (r.at("mode") != "no-memory") groups[{r.at("n_long").get<int>(), r.at("n_short").get<int>()}][r.at("mode")] = &r;
  }
  json deltas = json::array();
  for (const auto& [key, modes] : groups) {
    auto add = [&, key = key](const char* name, const json* a, const json* b) {
      if (a && b) {
        deltas.push_back({{"delta", name}, {"n_long", key.first}, {"n_short", key.second},
                          {"metrics", metric_delta(a->at("metrics"), b->at("metrics"))}});
      }
    };
    auto find = [&modes = modes](const char* m) -> const json* {
      const auto it = modes.find(m);
      return it == modes.end() ? nullptr : it->second;
    };
    add("confabulated - no-memory", find("confabulated"), no_memory);
    add("gt-memory - confabulated", find("gt-memory"), find("confabulated"));
    add("confabulated+cameo - confabulated", find("confabulated+cameo"), find("confabulated"));
  }

  json shot_sweep = json::object();
  json ratio_sweep = json::object();
  for (const auto& r : rows) {
    const std::string mode = r.at("mode");
    if (mode == "no-memory") continue;
    shot_sweep[mode].push_back({{"total", r.at("total")}, {"n_short", r.at("n_short")}, {"metrics", r.at("metrics")}});
    ratio_sweep[mode + "@" + std::to_string(r.at("total").get<int>())].push_back(
        {{"ratio", r.at("ratio")}, {"n_short", r.at("n_short")}, {"metrics", r.at("metrics")}});
  }
  for (auto it = shot_sweep.begin(); it != shot_sweep.end();) {
    std::set<int> totals;
    for (const auto& p : *it) totals.insert(p.at("total").get<int>());
    it = totals.size() > 1 ? std::next(it) : shot_sweep.erase(it);
  }
  for (auto it = ratio_sweep.begin(); it != ratio_sweep.end();) {
    it = it->size() > 1 ? std::next(it) : ratio_sweep.erase(it);
  }
  return {{"corpus", corpus}, {"runs", rows}, {"deltas", deltas}, {"shot_sweep", shot_sweep}, {"ratio_sweep", ratio_sweep}};
}

std::string report_text(const json& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto metrics = [&](const json& m) {
    os << std::setw(11) << m.at("sts_proxy").get<double>() << std::setw(10) << m.at("rouge_l").get<double>()
       << std::setw(10) << m.at("bleu").get<double>() << "\n";
  };
  os << std::left << std::setw(22) << "mode" << std::right << std::setw(6) << "N_l" << std::setw(6) << "N_s"
     << std::setw(8) << "events" << std::setw(11) << "STS-proxy" << std::setw(10) << "ROUGE-L" << std::setw(10)
     << "BLEU" << "\n";
  for (const auto& r : report.at("runs")) {
    os << std::left << std::setw(22) << r.at("mode").get<std::string>() << std::right << std::setw(6)
       << r.at("n_long").get<int>() << std::setw(6) << r.at("n_short").get<int>() << std::setw(8)
       << r.at("n_events").get<int>();
    metrics(r.at("metrics"));
  }
  for (const auto& d : report.at("deltas")) {
    os << std::left << std::setw(34) << ("d " + d.at("delta").get<std::string>()) << std::right << std::setw(8)
       << (std::to_string(d.at("n_long").get<int>()) + "," + std::to_string(d.at("n_short").get<int>()));
    metrics(d.at("metrics"));
  }
  if (!report.at("shot_sweep").empty()) {
    os << "\nshot sweep\n";
    for (const auto& [mode, points] : report.at("shot_sweep").items()) {
      for (const auto& p : points) {
        os << std::left << std::setw(22) << mode << std::right << std::setw(6) << p.at("total").get<int>()
           << std::setw(14) << "";
        metrics(p.at("metrics"));
      }
    }
  }
  if (!report.at("ratio_sweep").empty()) {
    os << "\nshort-term ratio sweep\n";
    for (const auto& [key, points] : report.at("ratio_sweep").items()) {
      for (const auto& p : points) {
        os << std::left << std::setw(26) << key << std::right << std::setw(8) << p.at("ratio").get<double>()
           << std::setw(8) << "";
        metrics(p.at("metrics"));
      }
    }
  }
  return os.str();
}

namespace {

struct Globals {
  std::string config_path;
  bool print_config = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 0;
};

// Relative paths resolve against CAMEO_DATA_DIR when it is set.
std::filesystem::path resolve(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) {
    if (const char* dir = std::getenv("CAMEO_DATA_DIR"); dir && *dir) return std::filesystem::path(dir) / path;
  }
  return path;
}

std::filesystem::path existing(const std::string& p, const char* what) {
  auto path = resolve(p);
  if (!std::filesystem::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path.string());
  return path;
}

std::filesystem::path with_suffix(const std::filesystem::path& path, const std::string& suffix) {
  auto out = path;
  out.replace_extension();
  out += suffix;
  return out;
}

ExperimentConfig effective_config(const Globals& g) {
  ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : load_config(resolve(g.config_path));
  if (g.seed_given) apply_seed(c, g.seed);
  if (g.jobs > 0) c.jobs = g.jobs;
  c.train.jobs = c.jobs;
  c.validate();
  return c;
}

Model load_model(const std::string& path, const Corpus& corpus) {
  return load_checkpoint(existing(path, "checkpoint"), &corpus.vocab).model;
}

void print_metrics(std::ostream& out, const std::string& label, const MetricRow& m, std::size_t n) {
  out << label << "  events=" << n << std::fixed << std::setprecision(4) << "  sts_proxy=" << m.sts_proxy
      << "  rouge_l=" << m.rouge_l << "  bleu=" << m.bleu << "\n";
  out.unsetf(std::ios::fixed);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming event narration with episodic memory and confabulation-aware attention"};
  app.set_help_all_flag("--help-all");
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON); omitted keys use defaults");
  app.add_flag("--print-config", g.print_config, "Print the effective config and exit");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for every stochastic component");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  std::string gen_out;
  gen->add_option("--out,out", gen_out, "Corpus file")->required();

  auto* tr = app.add_subcommand("train", "Train a model on a corpus");
  std::string tr_corpus, tr_out, tr_resume, tr_log;
  tr->add_option("--corpus", tr_corpus)->required();
  tr->add_option("--out", tr_out, "Checkpoint file")->required();
  tr->add_option("--resume", tr_resume, "Start from this checkpoint");
  tr->add_option("--metrics-log", tr_log, "JSON-lines epoch log (default <out>.metrics.jsonl)");

  auto* ev = app.add_subcommand("eval-stream", "Streaming evaluation over a split");
  std::string ev_ckpt, ev_corpus, ev_mode = "confab", ev_shots, ev_plan, ev_out, ev_split, ev_sweep, ev_ratios;
  double ev_ratio = 0.5;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--corpus", ev_corpus)->required();
  ev->add_option("--mode", ev_mode, "no-memory, gt, confab or cameo")->capture_default_str();
  ev->add_option("--shots", ev_shots, "N_l,N_s (default from config)");
  ev->add_option("--cameo-plan", ev_plan, "Modification plan (cameo mode)");
  ev->add_option("--split", ev_split, "train, val or test (default from config)");
  ev->add_option("--sweep", ev_sweep, "Comma-separated total shot budgets, e.g. 0,4,8,16");
  ev->add_option("--ratio-sweep", ev_ratios, "Comma-separated short-term ratios at the --shots total");
  ev->add_option("--short-ratio", ev_ratio, "Short-term share of each --sweep budget")->capture_default_str();
  ev->add_option("--out", ev_out, "Per-event JSONL; the summary goes to <out>.summary.json")->required();

  auto* pr = app.add_subcommand("probe", "Rank attention heads by indirect effect and write a plan");
  std::string pr_ckpt, pr_corpus, pr_out, pr_split, pr_agg, pr_dir;
  int pr_cases = 0, pr_k = 0;
  double pr_tau = -1;
  bool pr_renorm = false;
  pr->add_option("--checkpoint", pr_ckpt)->required();
  pr->add_option("--corpus", pr_corpus)->required();
  pr->add_option("--cases", pr_cases, "Corruption cases (default from config)");
  pr->add_option("--top-k", pr_k, "Heads in the plan (default from config)");
  pr->add_option("--tau", pr_tau, "Plan temperature (default from config)");
  pr->add_option("--direction", pr_dir, "downweight or upweight");
  pr->add_flag("--renormalize", pr_renorm, "Renormalize modified attention rows");
  pr->add_option("--aggregation", pr_agg, "mean or median");
  pr->add_option("--split", pr_split, "Split the cases are drawn from (default from config)");
  pr->add_option("--out", pr_out, "Plan file; report and CSV are written next to it")->required();

  auto* rep = app.add_subcommand("report", "Aggregate run summaries into comparison tables");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  rep->add_option("runs", rep_runs, "Run files (.jsonl or .summary.json)")->required();
  rep->add_option("--out", rep_out, "Report stem; writes <out>.json and <out>.txt")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    ExperimentConfig cfg = effective_config(g);
    if (g.print_config) {
      out << json(cfg).dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return 2;
    }

    if (gen->parsed()) {
      const auto& d = cfg.data;
      const Corpus corpus = generate_corpus(d.world, d.n_train, d.n_val, d.n_test);
      save_corpus(corpus, resolve(gen_out));
      out << "train " << corpus.train.size() << " episodes / " << corpus.num_events(Split::kTrain) << " events\n"
          << "val " << corpus.val.size() << " episodes / " << corpus.num_events(Split::kVal) << " events\n"
          << "test " << corpus.test.size() << " episodes / " << corpus.num_events(Split::kTest) << " events\n"
          << "fingerprint " << corpus_fingerprint(corpus) << "\n";
      return 0;
    }

    if (tr->parsed()) {
      const Corpus corpus = load_corpus(existing(tr_corpus, "corpus"));
      Model model = tr_resume.empty() ? Model(model_config_for(cfg, corpus)) : load_model(tr_resume, corpus);
      const auto out_path = resolve(tr_out);
      TrainHooks hooks;
      hooks.metrics_log = tr_log.empty() ? with_suffix(out_path, ".metrics.jsonl") : resolve(tr_log);
      hooks.on_epoch = [&](const EpochMetrics& m) {
        out << "epoch " << m.epoch << " train_loss " << m.train_loss;
        if (m.val_loss) out << " val_loss " << *m.val_loss;
        out << "\n" << std::flush;
      };
      train(corpus, model, cfg.train, hooks);
      save_checkpoint(out_path, model, corpus.vocab,
                      {{"train", cfg.train}, {"corpus", corpus_fingerprint(corpus)}, {"resumed_from", tr_resume}});
      out << "wrote " << out_path.string() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      const Corpus corpus = load_corpus(existing(ev_corpus, "corpus"));
      const Model model = load_model(ev_ckpt, corpus);
      const StreamMode mode = parse_mode(ev_mode);
      std::optional<ModificationPlan> plan;
      if (!ev_plan.empty()) plan = load_plan(existing(ev_plan, "plan"));
      if (mode == StreamMode::kCameo && !plan) throw UsageError("--mode cameo needs --cameo-plan");
      if (mode != StreamMode::kCameo && plan) throw UsageError("--cameo-plan is only valid with --mode cameo");
      if (!ev_sweep.empty() && !ev_ratios.empty()) throw UsageError("--sweep and --ratio-sweep are exclusive");
      const Split split = parse_split(ev_split.empty() ? cfg.stream.split : ev_split);
      const ShotConfig base = ev_shots.empty() ? cfg.stream.shots : parse_shots(ev_shots);

      auto parse_list = [](const std::string& text, const char* flag) {
        std::vector<double> values;
        std::stringstream ss(text);
        for (std::string item; std::getline(ss, item, ',');) {
          try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
          } catch (const std::logic_error&) {
            throw UsageError(std::string(flag) + ": not a number: '" + item + "'");
          }
        }
        if (values.empty()) throw UsageError(std::string(flag) + " is empty");
        return values;
      };
      std::vector<std::pair<ShotConfig, std::string>> settings;
      const auto out_path = resolve(ev_out);
      if (!ev_sweep.empty()) {
        for (double t : parse_list(ev_sweep, "--sweep")) {
          if (t != std::floor(t)) throw UsageError("--sweep budgets must be integers");
          const int total = static_cast<int>(t);
          settings.emplace_back(split_shots(total, ev_ratio), ".shots" + std::to_string(total));
        }
      } else if (!ev_ratios.empty()) {
        for (double r : parse_list(ev_ratios, "--ratio-sweep")) {
          const auto shots = split_shots(base.total(), r);
          settings.emplace_back(shots, ".ratio" + std::to_string(shots.n_short) + "of" + std::to_string(base.total()));
        }
      } else {
        settings.emplace_back(base, "");
      }

      const auto store = PersistentStore::build(corpus.train);
      const auto stats = TfIdfStats::build(corpus.train);
      for (const auto& [shots, suffix] : settings) {
        const auto sc = stream_config(cfg, shots);
        const auto runs = stream_episodes(model, corpus.split(split), store, mode, sc, corpus.vocab,
                                          plan ? &*plan : nullptr, cfg.jobs);
        const auto report = evaluate_run(runs, stats);
        json meta = {{"mode", mode_name(mode)},
                     {"shots", {{"n_long", shots.n_long}, {"n_short", shots.n_short}, {"total", shots.total()}}},
                     {"split", split_name(split)},
                     {"corpus", corpus_fingerprint(corpus)},
                     {"seed", sc.seed},
                     {"max_len", sc.max_len},
                     {"plan", plan ? json(*plan) : json(nullptr)}};
        if (plan) meta["entropy"] = sc.entropy;
        auto path = out_path;
        if (!suffix.empty()) path = with_suffix(out_path, suffix + ".jsonl");
        write_run(path, runs, report, meta);
        std::size_t failed = 0;
        for (const auto& r : runs) failed += r.failed ? 1 : 0;
        print_metrics(out, std::string(mode_name(mode)) + " N_l=" + std::to_string(shots.n_long) +
                               " N_s=" + std::to_string(shots.n_short), report.mean, report.n);
        if (failed) err << failed << " episode(s) failed; see " << with_suffix(path, ".summary.json").string() << "\n";
      }
      return 0;
    }

    if (pr->parsed()) {
      const Corpus corpus = load_corpus(existing(pr_corpus, "corpus"));
      const Model model = load_model(pr_ckpt, corpus);
      auto p = cfg.probe;
      if (pr_cases > 0) p.cases = pr_cases;
      if (pr_k > 0) p.top_k = pr_k;
      if (pr_tau >= 0) p.tau = pr_tau;
      if (!pr_dir.empty()) p.direction = parse_direction(pr_dir);
      if (!pr_agg.empty()) p.aggregation = parse_aggregation(pr_agg);
      if (pr_renorm) p.renormalize_rows = true;
      if (!pr_split.empty()) p.split = pr_split;
      const int total_heads = model.config().num_heads_total();
      if (p.top_k > total_heads) {
        throw UsageError("--top-k " + std::to_string(p.top_k) + " exceeds the model's " + std::to_string(total_heads) +
                         " heads");
      }
      const auto store = PersistentStore::build(corpus.train);
      const auto cases = make_probe_cases(corpus.split(parse_split(p.split)), store, cfg.stream.shots,
                                          model.config().m_event, p.cases, p.seed);
      const auto result = probe_heads(model, cases, p.aggregation, cfg.jobs);
      ModificationPlan plan;
      plan.heads = select_top_k(result, p.top_k);
      plan.tau = p.tau;
      plan.direction = p.direction;
      plan.renormalize_rows = p.renormalize_rows;
      const auto plan_path = resolve(pr_out);
      save_plan(plan, plan_path);
      json probe_cfg = {{"cases", cases.size()},
                        {"top_k", p.top_k},
                        {"split", p.split},
                        {"seed", p.seed},
                        {"n_long", cfg.stream.shots.n_long},
                        {"n_short", cfg.stream.shots.n_short},
                        {"corpus", corpus_fingerprint(corpus)}};
      util::write_file(with_suffix(plan_path, ".probe.json"), probe_report(result, plan.heads, probe_cfg).dump(2) + "\n");
      util::write_file(with_suffix(plan_path, ".heads.csv"), probe_matrix_csv(result));
      out << "probed " << cases.size() << " cases; top heads:";
      for (const auto& h : plan.heads) out << " (" << h.layer << "," << h.head << ")=" << result.at(h);
      out << "\n";
      return 0;
    }

    if (rep->parsed()) {
      std::vector<json> summaries;
      for (const auto& r : rep_runs) {
        std::filesystem::path path = resolve(r);
        const std::string name = path.filename().string();
        if (name.size() < 13 || name.substr(name.size() - 13) != ".summary.json") path = with_suffix(path, ".summary.json");
        try {
          summaries.push_back(json::parse(util::read_file(existing(path.string(), "run summary"))));
        } catch (const json::parse_error& e) {
          throw UsageError(path.string() + ": " + e.what());
        }
      }
      const json report = build_report(summaries);
      const auto stem = resolve(rep_out);
      const std::string text = report_text(report);
      util::write_file(with_suffix(stem, ".json"), report.dump(2) + "\n");
      util::write_file(with_suffix(stem, ".txt"), text);
      out << text;
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace cameo::cli
