#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cameo/metrics.hpp"
#include "cameo/uncertainty.hpp"
#include "cameo/world.hpp"
#include "cli.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_cameo, m) {
  m.doc() = "Native core of the cameo package";

  m.def("bleu", &cameo::bleu, py::arg("candidate"), py::arg("reference"),
        "Sentence BLEU-4 with add-one smoothing for empty higher orders.");
  m.def("rouge_l", &cameo::rouge_l, py::arg("candidate"), py::arg("reference"), "LCS-based ROUGE-L F1.");
  m.def(
      "sts_proxy",
      [](const std::string& c, const std::string& r, const std::vector<std::string>& documents) {
        return cameo::sts_proxy(c, r, cameo::TfIdfStats::build(documents));
      },
      py::arg("candidate"), py::arg("reference"), py::arg("documents"),
      "TF-IDF cosine with document frequencies from `documents`.");
  m.def(
      "semantic_entropy", [](const std::vector<double>& p) { return cameo::semantic_entropy(p); },
      py::arg("cluster_probs"), "-sum p log p over cluster probabilities.");
  m.def(
      "credibility_weight",
      [](double se, double tau, const std::string& direction) {
        return cameo::credibility_weight(se, tau, cameo::parse_direction(direction));
      },
      py::arg("se"), py::arg("tau"), py::arg("direction") = "downweight");
  m.def(
      "generate_corpus",
      [](int n_train, int n_val, int n_test, std::uint64_t seed) {
        auto world = cameo::cli::default_world();
        world.seed = seed;
        return cameo::serialize_corpus(cameo::generate_corpus(world, n_train, n_val, n_test));
      },
      py::arg("n_train"), py::arg("n_val"), py::arg("n_test"), py::arg("seed") = 0,
      "Serialized corpus (JSON text) from the default world.");
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "cameo");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cameo::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit code, stdout, stderr).");
}
