#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "prefminer/classifier.hpp"
#include "prefminer/error.hpp"
#include "prefminer/event.hpp"
#include "prefminer/pair_miner.hpp"
#include "prefminer/pca.hpp"
#include "prefminer/pipeline.hpp"
#include "prefminer/ranker.hpp"
#include "prefminer/sessionizer.hpp"
#include "prefminer/synth.hpp"

namespace py = pybind11;
using namespace prefminer;

namespace {

py::object json_to_python(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

FeatureMatrix to_features(const Eigen::MatrixXd& x) {
  FeatureMatrix f;
  f.matrix = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) f.item_ids.push_back(std::to_string(i));
  return f;
}

}  // namespace

PYBIND11_MODULE(prefminer, m) {
  m.doc() = "Clickstream preference mining: sessions, skip-click pairs, Bradley-Terry ranking, PCA and classifiers.";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<DataError>(m, "DataError", error);
  py::register_exception<NumericError>(m, "NumericError", error);

  py::enum_<EventKind>(m, "EventKind")
      .value("impression", EventKind::kImpression)
      .value("click", EventKind::kClick)
      .value("add_to_cart", EventKind::kAddToCart)
      .value("order", EventKind::kOrder);

  py::class_<Event>(m, "Event")
      .def(py::init<>())
      .def(py::init([](std::string user_id, std::int64_t ts, EventKind kind, std::string item_id,
                       std::string query_id, std::optional<std::int64_t> display_rank,
                       std::optional<std::int64_t> quantity, std::optional<double> revenue) {
             return Event{std::move(user_id), ts, kind, std::move(item_id), std::move(query_id), display_rank, quantity,
                          revenue};
           }),
           py::arg("user_id"), py::arg("timestamp_ms"), py::arg("kind"), py::arg("item_id"), py::arg("query_id") = "",
           py::arg("display_rank") = py::none(), py::arg("quantity") = py::none(), py::arg("revenue") = py::none())
      .def_readwrite("user_id", &Event::user_id)
      .def_readwrite("timestamp_ms", &Event::timestamp_ms)
      .def_readwrite("kind", &Event::kind)
      .def_readwrite("item_id", &Event::item_id)
      .def_readwrite("query_id", &Event::query_id)
      .def_readwrite("display_rank", &Event::display_rank)
      .def_readwrite("quantity", &Event::quantity)
      .def_readwrite("revenue", &Event::revenue)
      .def("__eq__", [](const Event& a, const Event& b) { return a == b; })
      .def("__repr__", [](const Event& e) { return "Event(" + event_to_json_line(e) + ")"; });

  py::class_<Session>(m, "Session")
      .def_readonly("user_id", &Session::user_id)
      .def_readonly("events", &Session::events)
      .def_readonly("start_ts", &Session::start_ts)
      .def_readonly("end_ts", &Session::end_ts)
      .def_property_readonly("key", &Session::key)
      .def("__len__", [](const Session& s) { return s.events.size(); });

  m.def(
      "read_events",
      [](const std::filesystem::path& path, double max_bad_line_fraction) {
        EventParseOptions opt;
        opt.format = guess_event_format(path);
        opt.max_bad_line_fraction = max_bad_line_fraction;
        return parse_events(path, opt).events;
      },
      py::arg("path"), py::arg("max_bad_line_fraction") = 0.01, "Parse a delimited or JSON-lines event log.");

  m.def(
      "sessionize",
      [](std::vector<Event> events, double gap_minutes, unsigned threads) {
        py::gil_scoped_release release;
        return sessionize(std::move(events), static_cast<std::int64_t>(gap_minutes * 60'000.0), threads);
      },
      py::arg("events"), py::arg("gap_minutes") = 30.0, py::arg("threads") = 1);

  py::class_<PreferencePair>(m, "PreferencePair")
      .def(py::init([](std::string s1, std::string s2, std::int64_t count) {
             return PreferencePair{std::move(s1), std::move(s2), count};
           }),
           py::arg("s1"), py::arg("s2"), py::arg("count"))
      .def_readonly("s1", &PreferencePair::s1)
      .def_readonly("s2", &PreferencePair::s2)
      .def_readonly("count", &PreferencePair::count)
      .def("__eq__", [](const PreferencePair& a, const PreferencePair& b) { return a == b; })
      .def("__repr__", [](const PreferencePair& p) {
        return "PreferencePair('" + p.s1 + "', '" + p.s2 + "', " + std::to_string(p.count) + ")";
      });

  m.def(
      "mine_pairs",
      [](const std::vector<Session>& sessions, const std::filesystem::path& catalog_path, bool merch_filter,
         std::int64_t min_count, unsigned shards, unsigned threads) {
        auto catalog = parse_catalog(catalog_path);
        MerchFilterConfig cfg;
        cfg.enabled = merch_filter;
        MiningResult mined;
        {
          py::gil_scoped_release release;
          mined = mine_pairs(sessions, catalog, cfg, min_count, shards, threads);
        }
        return py::make_tuple(mined.pairs, json_to_python(mining_report_json(mined.report, std::nullopt)));
      },
      py::arg("sessions"), py::arg("catalog"), py::arg("merch_filter") = true, py::arg("min_count") = 40,
      py::arg("shards") = 8, py::arg("threads") = 1,
      "Returns (pairs, report). Pairs with count <= min_count are dropped.");

  py::class_<RankedItem>(m, "RankedItem")
      .def_readonly("item_id", &RankedItem::item_id)
      .def_readonly("score", &RankedItem::score)
      .def_readonly("rank", &RankedItem::rank)
      .def_readonly("n_comparisons", &RankedItem::n_comparisons)
      .def_readonly("strength", &RankedItem::strength);

  m.def(
      "rank",
      [](const std::vector<PreferencePair>& pairs, const std::string& method, double prior_wins) {
        RankOptions opt;
        auto parsed = parse_rank_method(method);
        if (!parsed) throw ConfigError("unknown ranking method '" + method + "'");
        opt.method = *parsed;
        opt.prior_wins = prior_wins;
        return rank_items(pairs, opt).items;
      },
      py::arg("pairs"), py::arg("method") = "bradley-terry", py::arg("prior_wins") = 1.0);

  m.def(
      "label",
      [](const std::vector<RankedItem>& ranked, double top, double bottom) {
        py::dict out;
        for (const auto& l : label_quantiles(ranked, top, bottom)) out[py::str(l.item_id)] = l.label == Label::kPositive ? 1 : 0;
        return out;
      },
      py::arg("ranked"), py::arg("top") = 0.2, py::arg("bottom") = 0.2, "Maps item_id to 1 (positive) or 0 (negative).");

  py::class_<PcaModel>(m, "PcaModel")
      .def_readonly("mean", &PcaModel::mean)
      .def_readonly("components", &PcaModel::components)
      .def_readonly("explained_variance", &PcaModel::explained_variance)
      .def_readonly("explained_variance_ratio", &PcaModel::explained_variance_ratio)
      .def_readonly("whiten", &PcaModel::whiten)
      .def("transform", [](const PcaModel& model, const Eigen::MatrixXd& x) { return pca_transform(model, to_features(x)).matrix; })
      .def("inverse_transform", [](const PcaModel& model, const Eigen::MatrixXd& z) { return pca_reconstruct(model, z); })
      .def("save", [](const PcaModel& model, const std::filesystem::path& path) { save_pca(model, path); })
      .def_static("load", &load_pca);

  m.def(
      "pca_fit",
      [](const Eigen::MatrixXd& x, std::optional<std::size_t> k, std::optional<double> variance, bool whiten) {
        if (k.has_value() == variance.has_value()) throw ConfigError("give exactly one of k or variance");
        return pca_fit(to_features(x), k ? PcaTarget::k(*k) : PcaTarget::variance(*variance), whiten);
      },
      py::arg("x"), py::kw_only(), py::arg("k") = py::none(), py::arg("variance") = py::none(),
      py::arg("whiten") = false);

  py::class_<TrainedModel>(m, "Model")
      .def_property_readonly("kind", [](const TrainedModel& t) { return std::string(to_string(t.kind)); })
      .def("predict_proba", &TrainedModel::predict_proba)
      .def("save", [](const TrainedModel& t, const std::filesystem::path& path) { save_model(t, path); })
      .def_static("load", &load_model);

  m.def(
      "train",
      [](const std::string& kind, const Eigen::MatrixXd& x, const std::vector<int>& y, std::uint64_t seed,
         const std::string& hyperparameters) {
        auto parsed = parse_model_kind(kind);
        if (!parsed) throw ConfigError("unknown model kind '" + kind + "'");
        if (static_cast<std::size_t>(x.rows()) != y.size()) throw DataError("x and y have different lengths");
        LabeledData data;
        data.features = x;
        data.labels = y;
        data.item_ids.resize(y.size());
        py::gil_scoped_release release;
        return train(*parsed, data, hyperparameters_from_json(hyperparameters), seed);
      },
      py::arg("kind"), py::arg("x"), py::arg("y"), py::arg("seed") = 7, py::arg("hyperparameters") = "{}");

  m.def("auc", &auc_rank_statistic, py::arg("scores"), py::arg("labels"),
        "Mann-Whitney AUC with midranks for ties; None when a class is missing.");

  m.def(
      "split_sizes",
      [](std::size_t n, double train, double validation, double test) {
        auto s = split_sizes(n, {train, validation, test});
        return py::make_tuple(s.train, s.validation, s.test);
      },
      py::arg("n"), py::arg("train") = 0.75, py::arg("validation") = 0.125, py::arg("test") = 0.125);

  m.def("spearman", &spearman, py::arg("a"), py::arg("b"));

  m.def(
      "generate_world",
      [](const std::filesystem::path& out_dir, const std::string& config_json) {
        auto cfg = world_config_from_json(config_json);
        WorldFiles files;
        {
          py::gil_scoped_release release;
          files = write_world(generate_world(cfg), out_dir);
        }
        py::dict d;
        d["catalog"] = files.catalog;
        d["features"] = files.features;
        d["events"] = files.events;
        d["ground_truth"] = files.ground_truth;
        return d;
      },
      py::arg("out_dir"), py::arg("config_json") = "{}", "Writes a planted-utility world; returns the file paths.");

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config_path, std::optional<std::filesystem::path> output_dir, int threads) {
        auto cfg = load_pipeline_config(config_path);
        if (output_dir) cfg.output_dir = *output_dir;
        cfg.threads = threads;
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(cfg);
        }
        py::dict d;
        d["output_dir"] = r.output_dir;
        py::dict manifest;
        for (const auto& e : r.manifest) manifest[py::str(e.path)] = e.sha256;
        d["manifest"] = manifest;
        d["spearman"] = r.spearman;
        d["positives_in_top_half"] = r.positives_in_top_half;
        d["primary_test_auc"] = r.primary_test_auc;
        return d;
      },
      py::arg("config"), py::arg("output_dir") = py::none(), py::arg("threads") = 0);
}
