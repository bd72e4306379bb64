#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "sfk/cli/cli.hpp"
#include "sfk/data/manifest.hpp"
#include "sfk/data/splits.hpp"
#include "sfk/error.hpp"
#include "sfk/eval/ensemble.hpp"
#include "sfk/eval/metrics.hpp"
#include "sfk/model/config.hpp"
#include "sfk/model/slowfast.hpp"
#include "sfk/triage/triage.hpp"

namespace py = pybind11;
using namespace sfk;

namespace {

py::dict config_dict(const model::SlowFastConfig& c) {
  const auto doc = c.to_kv();
  py::dict d;
  for (const auto& [k, v] : doc.entries()) d[py::str(k)] = v;
  return d;
}

model::SlowFastConfig config_from_dict(const std::map<std::string, std::string>& entries) {
  return model::config_from_entries({entries.begin(), entries.end()});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SlowFast video classification toolkit";

  static py::exception<Error> base(m, "SfkError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<DataError> data_error(m, "DataError", base.ptr());
  static py::exception<StructuralError> structural_error(m, "StructuralError", base.ptr());
  static py::exception<NotFoundError> not_found(m, "NotFoundError", base.ptr());
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const StructuralError& e) {
      py::set_error(structural_error, e.what());
    } catch (const NotFoundError& e) {
      py::set_error(not_found, e.what());
    } catch (const InvalidArgument& e) {
      py::set_error(invalid, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  // Model configuration and shapes.
  m.def("preset_names", &model::preset_names);
  m.def(
      "preset", [](const std::string& name, int classes) { return config_dict(model::preset(name, classes)); },
      py::arg("name"), py::arg("num_classes") = 12, "Preset configuration as a key/value dict.");
  m.def(
      "validate_config", [](const std::map<std::string, std::string>& entries) { return config_dict(config_from_dict(entries)); },
      py::arg("entries"), "Parses and validates a configuration; returns its normalized form.");
  m.def(
      "feature_shapes",
      [](const std::map<std::string, std::string>& entries, std::uint64_t seed) {
        const auto cfg = config_from_dict(entries);
        const auto net = model::build_slowfast(cfg, seed);
        const Tensor clips({1, 3, cfg.clip_len, cfg.crop_size, cfg.crop_size}, 0.0);
        const auto tr = net->trace(clips);
        py::dict d;
        d["slow_input"] = tr.slow_input;
        d["fast_input"] = tr.fast_input;
        d["slow_features"] = tr.slow_features.shape();
        d["fast_features"] = tr.fast_features.shape();
        return d;
      },
      py::arg("entries"), py::arg("seed") = 0, "Pathway input and final feature shapes for one zero clip.");

  // Metrics.
  py::class_<eval::PredictionRecord>(m, "PredictionRecord")
      .def(py::init<>())
      .def(py::init([](std::string id, int t, int p, std::vector<double> scores, int views) {
             return eval::PredictionRecord{std::move(id), t, p, std::move(scores), views};
           }),
           py::arg("video_id"), py::arg("true_label"), py::arg("predicted_label"), py::arg("scores") = std::vector<double>{},
           py::arg("views_used") = 1)
      .def_readwrite("video_id", &eval::PredictionRecord::video_id)
      .def_readwrite("true_label", &eval::PredictionRecord::true_label)
      .def_readwrite("predicted_label", &eval::PredictionRecord::predicted_label)
      .def_readwrite("scores", &eval::PredictionRecord::scores)
      .def_readwrite("views_used", &eval::PredictionRecord::views_used);

  m.def("accuracy", [](const std::vector<eval::PredictionRecord>& r) { return eval::accuracy(r); });
  m.def("error_rate", [](const std::vector<eval::PredictionRecord>& r) { return eval::error_rate(r); });
  m.def("argmax", [](const std::vector<double>& s) { return eval::argmax(s); });
  m.def(
      "combine_view_scores",
      [](const std::vector<std::vector<double>>& views, bool probability) {
        return eval::combine_view_scores(views,
                                         probability ? eval::ScoreDomain::kProbability : eval::ScoreDomain::kLogit);
      },
      py::arg("view_logits"), py::arg("probability") = true);
  m.def(
      "confusion_matrix",
      [](const std::vector<eval::PredictionRecord>& r, const std::vector<std::string>& names) {
        const auto cm = eval::confusion_matrix(r, names);
        std::vector<std::vector<std::int64_t>> out(names.size(), std::vector<std::int64_t>(names.size()));
        for (std::size_t t = 0; t < names.size(); ++t)
          for (std::size_t p = 0; p < names.size(); ++p) out[t][p] = cm.count(static_cast<int>(t), static_cast<int>(p));
        return out;
      },
      py::arg("records"), py::arg("class_names"));
  m.def("read_predictions", &eval::read_predictions);

  // Splits.
  m.def(
      "allocate_counts", [](int n, std::array<double, 3> r) { return data::allocate_counts(n, r); }, py::arg("n"),
      py::arg("ratios"));
  m.def(
      "make_splits",
      [](const std::filesystem::path& manifest, std::array<double, 3> ratios, std::uint64_t seed, bool by_player) {
        const auto m = data::load_manifest(manifest, {.allow_unprobed = true});
        const auto spec = data::make_splits(m, ratios, seed, {.group_by_player = by_player});
        std::map<std::string, std::string> out;
        for (const auto& [id, s] : spec.assignment) out[id] = data::to_string(s);
        return out;
      },
      py::arg("manifest"), py::arg("ratios") = std::array<double, 3>{0.7, 0.2, 0.1}, py::arg("seed") = 0,
      py::arg("group_by_player") = false, "Record id -> split name for a manifest file.");

  // Triage.
  py::class_<triage::TriageStore>(m, "TriageStore")
      .def(py::init<>())
      .def(py::init<std::filesystem::path>(), py::arg("log_path"))
      .def(
          "import_predictions",
          [](triage::TriageStore& s, const std::vector<eval::PredictionRecord>& recs,
             const std::vector<std::string>& names, const std::string& split) {
            return s.import_cases(triage::collect_errors(recs, names), split, static_cast<int>(recs.size())).added;
          },
          py::arg("records"), py::arg("class_names"), py::arg("source_split") = "test")
      .def("case_ids",
           [](const triage::TriageStore& s) {
             std::vector<std::string> ids;
             for (const auto& c : s.cases()) ids.push_back(c.video_id);
             return ids;
           })
      .def(
          "assign",
          [](triage::TriageStore& s, const std::string& id, const std::set<std::string>& cats, const std::string& comment,
             const std::string& reviewer, std::optional<std::int64_t> ts) { s.assign(id, cats, comment, reviewer, ts); },
          py::arg("video_id"), py::arg("categories"), py::arg("comment") = "", py::arg("reviewer") = "",
          py::arg("timestamp_ms") = py::none())
      .def("history_length", [](const triage::TriageStore& s, const std::string& id) { return s.history(id).size(); })
      .def("categories", &triage::TriageStore::categories)
      .def("report",
           [](const triage::TriageStore& s) {
             std::map<std::string, double> out;
             for (const auto& row : s.report().rows) out[row.category] = row.percent;
             return out;
           })
      .def("report_tsv", [](const triage::TriageStore& s) { return s.report().to_delimited(); })
      .def(
          "ranking",
          [](const triage::TriageStore& s, std::optional<std::map<std::string, std::string>> efforts) {
            std::optional<std::map<std::string, triage::Effort>> parsed;
            if (efforts) {
              parsed.emplace();
              for (const auto& [k, v] : *efforts) (*parsed)[k] = triage::parse_effort(v);
            }
            std::vector<std::pair<std::string, double>> out;
            for (const auto& r : triage::rank_categories(s.report(), parsed)) out.emplace_back(r.category, r.score);
            return out;
          },
          py::arg("efforts") = py::none());

  // Command line.
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs `sfkit <args>`; returns (exit code, stdout, stderr).");
}
