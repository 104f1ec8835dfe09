#include "prefminer/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <json.hpp>
#include <openssl/evp.h>

#include "prefminer/error.hpp"
#include "prefminer/event.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/sessionizer.hpp"
#include "prefminer/synth.hpp"
#include "prefminer/text_io.hpp"

namespace fs = std::filesystem;

namespace prefminer {

namespace {

using json = nlohmann::json;

fs::path resolve_path(const json& doc, const char* field, const fs::path& base, bool required) {
  auto it = doc.find(field);
  if (it == doc.end() || it->is_null()) {
    if (required) throw ConfigError(std::string("config field '") + field + "' is missing");
    return {};
  }
  if (!it->is_string() || it->get<std::string>().empty())
    throw ConfigError(std::string("config field '") + field + "' must be a non-empty path");
  fs::path p = it->get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

fs::path existing_path(const json& doc, const char* field, const fs::path& base, bool required = true) {
  auto p = resolve_path(doc, field, base, required);
  if (!p.empty() && !fs::is_regular_file(p))
    throw ConfigError(std::string("config field '") + field + "': file not found: " + p.string());
  return p;
}

template <typename T>
T field(const json& obj, const char* name, T fallback) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + name + "' has the wrong type");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

std::string to_hex(const unsigned char* bytes, std::size_t n) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (std::size_t i = 0; i < n; ++i) os << std::setw(2) << static_cast<int>(bytes[i]);
  return os.str();
}

[[noreturn]] void throw_stage_error(ExitCode code, const std::string& message) {
  switch (code) {
    case ExitCode::kConfig: throw ConfigError(message);
    case ExitCode::kNumeric: throw NumericError(message);
    default: throw DataError(message);
  }
}

void retire_outputs(const fs::path& dir, const std::string& stage, ExitCode code, const std::string& message) {
  const fs::path failed = dir / "failed";
  std::error_code ec;
  fs::remove_all(failed, ec);
  fs::create_directories(failed, ec);
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.path().filename() != "failed") entries.push_back(e.path());
  for (const auto& p : entries) fs::rename(p, failed / p.filename(), ec);
  nlohmann::ordered_json reason;
  reason["stage"] = stage;
  reason["exit_code"] = static_cast<int>(code);
  reason["message"] = message;
  std::ofstream(failed / "reason.json") << reason.dump(2) << '\n';
}

}  // namespace

PipelineConfig pipeline_config_from_json(std::string_view json_text, const fs::path& base_dir) {
  auto doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ConfigError("pipeline config must be a JSON object");

  PipelineConfig cfg;
  cfg.events = existing_path(doc, "events", base_dir);
  cfg.catalog = existing_path(doc, "catalog", base_dir);
  cfg.features = existing_path(doc, "features", base_dir);
  if (auto gt = existing_path(doc, "ground_truth", base_dir, false); !gt.empty()) cfg.ground_truth = gt;
  cfg.output_dir = resolve_path(doc, "output_dir", base_dir, true);

  cfg.seed = field<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.threads = field<int>(doc, "threads", cfg.threads);
  cfg.shards = field<unsigned>(doc, "shards", cfg.shards);
  if (cfg.shards < 1) throw ConfigError("config field 'shards' must be >= 1");

  if (auto it = doc.find("sessionizer"); it != doc.end())
    cfg.gap_minutes = field<double>(*it, "gap_minutes", cfg.gap_minutes);
  if (!(cfg.gap_minutes > 0.0)) throw ConfigError("config field 'gap_minutes' must be positive");

  if (auto it = doc.find("merch_filter"); it != doc.end()) cfg.merch_filter = merch_filter_from_json(it->dump());
  cfg.min_count = field<std::int64_t>(doc, "min_count", cfg.min_count);
  if (cfg.min_count < 1) throw ConfigError("config field 'min_count' must be >= 1");

  if (auto it = doc.find("ranking"); it != doc.end()) {
    auto method = field<std::string>(*it, "method", std::string(to_string(cfg.ranking.method)));
    auto parsed = parse_rank_method(method);
    if (!parsed) throw ConfigError("unknown ranking method '" + method + "'");
    cfg.ranking.method = *parsed;
    cfg.ranking.prior_wins = field<double>(*it, "prior_wins", cfg.ranking.prior_wins);
    cfg.ranking.tolerance = field<double>(*it, "tolerance", cfg.ranking.tolerance);
    cfg.ranking.max_iterations = field<int>(*it, "max_iterations", cfg.ranking.max_iterations);
  }
  if (auto it = doc.find("labels"); it != doc.end()) {
    cfg.label_top = field<double>(*it, "top", cfg.label_top);
    cfg.label_bottom = field<double>(*it, "bottom", cfg.label_bottom);
  }
  if (auto it = doc.find("pca"); it != doc.end()) {
    const bool has_k = it->contains("k"), has_v = it->contains("variance_fraction");
    if (has_k && has_v) throw ConfigError("pca: give either 'k' or 'variance_fraction', not both");
    if (has_k) cfg.pca = PcaTarget::k(field<std::size_t>(*it, "k", 0));
    if (has_v) cfg.pca = PcaTarget::variance(field<double>(*it, "variance_fraction", 0.0));
    cfg.pca_whiten = field<bool>(*it, "whiten", cfg.pca_whiten);
  }
  if (auto it = doc.find("classifiers"); it != doc.end()) {
    if (auto kinds = it->find("kinds"); kinds != it->end()) {
      if (!kinds->is_array() || kinds->empty()) throw ConfigError("classifiers.kinds must be a non-empty array");
      cfg.classifiers.clear();
      for (const auto& k : *kinds) {
        auto kind = k.is_string() ? parse_model_kind(k.get<std::string>()) : std::nullopt;
        if (!kind) throw ConfigError("unknown classifier kind " + k.dump());
        if (std::find(cfg.classifiers.begin(), cfg.classifiers.end(), *kind) == cfg.classifiers.end())
          cfg.classifiers.push_back(*kind);
      }
    }
    const bool default_listed =
        std::find(cfg.classifiers.begin(), cfg.classifiers.end(), cfg.primary) != cfg.classifiers.end();
    auto primary = field<std::string>(*it, "primary",
                                      std::string(to_string(default_listed ? cfg.primary : cfg.classifiers.front())));
    auto kind = parse_model_kind(primary);
    if (!kind || std::find(cfg.classifiers.begin(), cfg.classifiers.end(), *kind) == cfg.classifiers.end())
      throw ConfigError("classifiers.primary must name one of classifiers.kinds");
    cfg.primary = *kind;
    if (auto hp = it->find("hyperparameters"); hp != it->end()) cfg.hyperparameters = hyperparameters_from_json(hp->dump());
    if (auto sp = it->find("split"); sp != it->end()) {
      cfg.split.train = field<double>(*sp, "train", cfg.split.train);
      cfg.split.validation = field<double>(*sp, "validation", cfg.split.validation);
      cfg.split.test = field<double>(*sp, "test", cfg.split.test);
    }
  } else if (std::find(cfg.classifiers.begin(), cfg.classifiers.end(), cfg.primary) == cfg.classifiers.end()) {
    cfg.primary = cfg.classifiers.front();
  }
  split_sizes(10, cfg.split);  // validates the fractions

  cfg.snapshot = nlohmann::ordered_json::parse(json_text).dump(2);
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  auto in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return pipeline_config_from_json(buf.str(), path.parent_path());
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw NumericError("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  return to_hex(digest, len);
}

std::vector<ManifestEntry> build_manifest(const fs::path& dir) {
  std::vector<ManifestEntry> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    out.push_back({rel, e.file_size(), sha256_file(e.path())});
  }
  std::sort(out.begin(), out.end(), [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  if (fs::is_directory(dir) && !fs::is_empty(dir)) {
    // Only a directory left by an earlier run is cleared; anything else is refused.
    if (!fs::exists(dir / "config.json") && !fs::exists(dir / "failed" / "reason.json"))
      throw ConfigError("output_dir " + dir.string() + " is not empty and was not written by a previous run");
    for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path(), ec);
  }
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output_dir " + dir.string() + ": " + ec.message());

  const unsigned threads = resolve_threads(cfg.threads);
  PipelineResult result;
  result.output_dir = dir;

  std::string stage;
  auto run = [&](const char* name, const std::function<void()>& body) {
    stage = name;
    try {
      body();
    } catch (const Error& e) {
      const std::string message = "stage '" + stage + "' failed: " + e.what();
      retire_outputs(dir, stage, e.code(), message);
      throw_stage_error(e.code(), message);
    } catch (const std::exception& e) {
      const std::string message = "stage '" + stage + "' failed: " + e.what();
      retire_outputs(dir, stage, ExitCode::kData, message);
      throw_stage_error(ExitCode::kData, message);
    }
  };

  Catalog catalog;
  ItemActivity activity;
  std::vector<Session> sessions;
  MiningResult mined;
  RankingResult ranking;
  std::vector<LabeledExample> labels;
  FeatureMatrix reduced;
  Dataset dataset;
  std::vector<NamedReport> reports;

  run("config", [&] { write_text(dir / "config.json", cfg.snapshot); });

  run("ingest", [&] {
    catalog = parse_catalog(cfg.catalog);
    auto parsed = parse_events(cfg.events);
    activity = summarize_activity(parsed.events);
    sessions = sessionize(std::move(parsed.events),
                          static_cast<std::int64_t>(std::llround(cfg.gap_minutes * 60'000.0)), threads);
  });

  run("sessionize", [&] {
    auto out = open_output(dir / "sessions.jsonl");
    write_sessions(out, sessions);
  });

  run("mine-pairs", [&] {
    mined = mine_pairs(sessions, catalog, cfg.merch_filter, cfg.min_count, cfg.shards, threads);
    sessions.clear();
    sessions.shrink_to_fit();
    auto out = open_output(dir / "pairs.tsv");
    write_pairs(out, mined.pairs);
    write_text(dir / "mining_report.json",
               mining_report_json(mined.report, transaction_correlation(mined.pairs, activity)));
  });

  run("rank", [&] {
    ranking = rank_items(mined.pairs, cfg.ranking);
    auto out = open_output(dir / "ranked.tsv");
    write_ranked(out, ranking);
  });

  run("label", [&] {
    labels = label_quantiles(ranking.items, cfg.label_top, cfg.label_bottom);
    auto out = open_output(dir / "labels.tsv");
    write_labels(out, labels);
  });

  run("report", [&] { write_text(dir / "business.json", business_report_json(business_report(labels, activity))); });

  if (cfg.ground_truth) {
    run("recovery", [&] {
      auto truth = read_ground_truth(*cfg.ground_truth);
      std::unordered_map<std::string, const GroundTruth*> by_id;
      for (const auto& t : truth) by_id.emplace(t.item_id, &t);
      std::vector<double> recovered, planted;
      for (const auto& r : ranking.items) {
        auto it = by_id.find(r.item_id);
        if (it == by_id.end()) continue;
        recovered.push_back(r.score);
        planted.push_back(it->second->utility);
      }
      const auto half = static_cast<std::int64_t>(truth.size() / 2);
      std::size_t pos = 0, pos_top = 0;
      for (const auto& l : labels) {
        if (l.label != Label::kPositive) continue;
        ++pos;
        auto it = by_id.find(l.item_id);
        if (it != by_id.end() && it->second->planted_rank <= half) ++pos_top;
      }
      nlohmann::ordered_json j;
      j["ranked_items"] = recovered.size();
      j["ground_truth_items"] = truth.size();
      if (recovered.size() >= 2) {
        result.spearman = spearman(recovered, planted);
        j["spearman"] = *result.spearman;
      } else {
        j["spearman"] = nullptr;
      }
      if (pos > 0) {
        result.positives_in_top_half = static_cast<double>(pos_top) / static_cast<double>(pos);
        j["positives_in_planted_top_half"] = *result.positives_in_top_half;
      } else {
        j["positives_in_planted_top_half"] = nullptr;
      }
      write_text(dir / "recovery.json", j.dump(2));
    });
  }

  run("pca", [&] {
    auto features = read_features(cfg.features);
    auto model = pca_fit(features, cfg.pca, cfg.pca_whiten);
    save_pca(model, dir / "pca.bin");
    reduced = pca_transform(model, features, threads);
    auto out = open_output(dir / "reduced.tsv");
    write_features(out, reduced);
  });

  run("train", [&] {
    auto data = join_labels(labels, reduced);
    {
      auto out = open_output(dir / "labeled_features.tsv");
      write_labeled_features(out, data);
    }
    dataset = split_dataset(std::move(data), cfg.split, cfg.seed);
    const auto train_split = dataset.subset(Split::kTrain);
    for (auto kind : cfg.classifiers) {
      auto model = train(kind, train_split, cfg.hyperparameters, cfg.seed, threads);
      nlohmann::ordered_json snap;
      snap["data"] = "labeled_features.tsv";
      snap["split"] = {{"train", cfg.split.train}, {"validation", cfg.split.validation}, {"test", cfg.split.test}};
      snap["seed"] = cfg.seed;
      model.snapshot_json = snap.dump();
      save_model(model, dir / ("model_" + std::string(to_string(kind)) + ".bin"));
    }
  });

  run("evaluate", [&] {
    const auto test_split = dataset.subset(Split::kTest);
    nlohmann::ordered_json report;
    auto sizes = dataset.sizes();
    report["split_sizes"] = {{"train", sizes.train}, {"validation", sizes.validation}, {"test", sizes.test}};
    report["primary"] = to_string(cfg.primary);
    report["hyperparameters"] = nlohmann::ordered_json::parse(hyperparameters_json(cfg.hyperparameters));
    auto& models = report["models"] = nlohmann::ordered_json::object();
    for (auto kind : cfg.classifiers) {
      const std::string name(to_string(kind));
      auto model = load_model(dir / ("model_" + name + ".bin"));
      auto eval = evaluate(model, test_split);
      models[name] = nlohmann::ordered_json::parse(eval_report_json(eval));
      if (kind == cfg.primary) {
        result.primary_test_auc = eval.auc;
        auto out = open_output(dir / "roc.csv");
        write_roc_csv(out, eval.roc);
      }
      reports.push_back({name, std::move(eval)});
    }
    write_text(dir / "report.json", report.dump(2));
    write_text(dir / "comparison.tsv", compare_models(reports, dir));
  });

  run("manifest", [&] {
    result.manifest = build_manifest(dir);
    nlohmann::ordered_json j;
    auto& files = j["files"] = nlohmann::ordered_json::array();
    for (const auto& m : result.manifest) files.push_back({{"path", m.path}, {"bytes", m.bytes}, {"sha256", m.sha256}});
    write_text(dir / "manifest.json", j.dump(2));
  });
  return result;
}

}  // namespace prefminer
