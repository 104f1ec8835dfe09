#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefminer/classifier.hpp"
#include "prefminer/error.hpp"
#include "prefminer/event.hpp"
#include "prefminer/pair_miner.hpp"
#include "prefminer/parallel.hpp"
#include "prefminer/pca.hpp"
#include "prefminer/pipeline.hpp"
#include "prefminer/ranker.hpp"
#include "prefminer/sessionizer.hpp"
#include "prefminer/synth.hpp"
#include "prefminer/text_io.hpp"

namespace fs = std::filesystem;
using namespace prefminer;

namespace {

std::string slurp(const fs::path& path) {
  auto in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text << '\n';
}

EventParseResult load_events(const fs::path& path, double max_bad) {
  EventParseOptions opt;
  opt.format = guess_event_format(path);
  opt.max_bad_line_fraction = max_bad;
  auto parsed = parse_events(path, opt);
  if (parsed.rejected > 0)
    std::cerr << "warning: " << parsed.rejected << " of " << parsed.total() << " event lines rejected (first at line "
              << parsed.first_bad_line << ": " << parsed.first_bad_reason << ")\n";
  return parsed;
}

// Split fractions and data path travel inside the model snapshot so `evaluate` can rebuild the split.
struct TrainSnapshot {
  fs::path data;
  SplitFractions split;
  std::uint64_t seed = 0;
};

TrainSnapshot read_snapshot(const TrainedModel& model) {
  auto j = nlohmann::json::parse(model.snapshot_json, nullptr, false);
  TrainSnapshot s;
  s.seed = model.seed;
  if (j.is_object()) {
    s.data = j.value("data", std::string{});
    if (auto it = j.find("split"); it != j.end()) {
      s.split.train = it->value("train", s.split.train);
      s.split.validation = it->value("validation", s.split.validation);
      s.split.test = it->value("test", s.split.test);
    }
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefminer: implicit-feedback preference mining from clickstream logs"};
  app.require_subcommand(1);
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "Worker threads (default: PREFMINER_THREADS or all cores)");
  auto threads = [&] { return resolve_threads(threads_flag); };

  // sessionize
  auto* sess = app.add_subcommand("sessionize", "Group events into per-user sessions");
  fs::path s_events, s_out;
  double s_gap = 30.0, s_max_bad = 0.01;
  sess->add_option("--events", s_events)->required();
  sess->add_option("--gap-minutes", s_gap)->capture_default_str();
  sess->add_option("--max-bad-fraction", s_max_bad)->capture_default_str();
  sess->add_option("--out", s_out)->required();
  sess->callback([&] {
    auto parsed = load_events(s_events, s_max_bad);
    auto sessions = sessionize(std::move(parsed.events), std::llround(s_gap * 60'000.0), threads());
    auto out = open_output(s_out);
    write_sessions(out, sessions);
    std::cerr << sessions.size() << " sessions from " << parsed.accepted << " events\n";
  });

  // mine-pairs
  auto* mine = app.add_subcommand("mine-pairs", "Extract, filter and aggregate skip-click pairs");
  fs::path m_sessions, m_catalog, m_config, m_out, m_report, m_events;
  std::int64_t m_min_count = 40;
  unsigned m_shards = 8;
  bool m_no_filter = false;
  mine->add_option("--sessions", m_sessions)->required();
  mine->add_option("--catalog", m_catalog)->required();
  mine->add_option("--config", m_config, "JSON with a merch_filter object");
  mine->add_option("--min-count", m_min_count)->capture_default_str();
  mine->add_option("--shards", m_shards)->capture_default_str();
  mine->add_flag("--no-filter", m_no_filter, "Disable the merchandising filter");
  mine->add_option("--events", m_events, "Event log for the transaction-correlation check");
  mine->add_option("--out", m_out)->required();
  mine->add_option("--report", m_report);
  mine->callback([&] {
    MerchFilterConfig cfg;
    if (!m_config.empty()) cfg = merch_filter_from_json(slurp(m_config));
    if (m_no_filter) cfg.enabled = false;
    auto catalog = parse_catalog(m_catalog);
    auto sessions = read_sessions(m_sessions);
    auto mined = mine_pairs(sessions, catalog, cfg, m_min_count, m_shards, threads());
    auto out = open_output(m_out);
    write_pairs(out, mined.pairs);
    if (!m_report.empty()) {
      std::optional<CorrelationResult> corr;
      if (!m_events.empty()) corr = transaction_correlation(mined.pairs, load_events(m_events, 1.0).events);
      write_text(m_report, mining_report_json(mined.report, corr));
    }
    std::cerr << mined.pairs.size() << " pairs above min-count " << m_min_count << '\n';
  });

  // rank
  auto* rank = app.add_subcommand("rank", "Rank items from preference pairs");
  fs::path r_pairs, r_out;
  std::string r_method = "bradley-terry";
  RankOptions r_opt;
  rank->add_option("--pairs", r_pairs)->required();
  rank->add_option("--method", r_method)->check(CLI::IsMember({"bradley-terry", "win-rate"}))->capture_default_str();
  rank->add_option("--prior-wins", r_opt.prior_wins)->capture_default_str();
  rank->add_option("--out", r_out)->required();
  rank->callback([&] {
    r_opt.method = *parse_rank_method(r_method);
    auto ranking = rank_items(read_pairs(r_pairs), r_opt);
    auto out = open_output(r_out);
    write_ranked(out, ranking);
    if (!ranking.converged) std::cerr << "warning: Bradley-Terry did not converge\n";
  });

  // label
  auto* label = app.add_subcommand("label", "Label the top and bottom of a ranking");
  fs::path l_ranked, l_out;
  double l_top = 0.2, l_bottom = 0.2;
  label->add_option("--ranked", l_ranked)->required();
  label->add_option("--top", l_top)->capture_default_str();
  label->add_option("--bottom", l_bottom)->capture_default_str();
  label->add_option("--out", l_out)->required();
  label->callback([&] {
    auto labels = label_quantiles(read_ranked(l_ranked), l_top, l_bottom);
    auto out = open_output(l_out);
    write_labels(out, labels);
  });

  // report
  auto* report = app.add_subcommand("report", "Business metrics per label class");
  fs::path b_labels, b_events, b_out;
  report->add_option("--labels", b_labels)->required();
  report->add_option("--events", b_events)->required();
  report->add_option("--out", b_out)->required();
  report->callback([&] {
    auto labels = read_labels(b_labels);
    auto activity = summarize_activity(load_events(b_events, 0.01).events);
    write_text(b_out, business_report_json(business_report(labels, activity)));
  });

  // pca fit / transform
  auto* pca = app.add_subcommand("pca", "Principal component analysis of feature vectors");
  pca->require_subcommand(1);
  auto* pca_fit_cmd = pca->add_subcommand("fit", "Fit a PCA model");
  fs::path p_features, p_model, p_out;
  std::size_t p_k = 0;
  double p_variance = 0.0;
  bool p_whiten = false;
  auto* k_opt = pca_fit_cmd->add_option("--k", p_k, "Number of components");
  auto* v_opt = pca_fit_cmd->add_option("--variance", p_variance, "Smallest K reaching this explained-variance fraction");
  k_opt->excludes(v_opt);
  pca_fit_cmd->add_option("--features", p_features)->required();
  pca_fit_cmd->add_flag("--whiten", p_whiten);
  pca_fit_cmd->add_option("--model", p_model)->required();
  pca_fit_cmd->callback([&] {
    if (k_opt->count() == 0 && v_opt->count() == 0) throw ConfigError("pca fit needs --k or --variance");
    auto target = k_opt->count() ? PcaTarget::k(p_k) : PcaTarget::variance(p_variance);
    auto model = pca_fit(read_features(p_features), target, p_whiten);
    save_pca(model, p_model);
    std::cerr << "K=" << model.output_dim() << " explains " << format_double(model.cumulative_ratio())
              << " of the variance\n";
  });
  auto* pca_tr_cmd = pca->add_subcommand("transform", "Project features with a fitted model");
  pca_tr_cmd->add_option("--model", p_model)->required();
  pca_tr_cmd->add_option("--features", p_features)->required();
  pca_tr_cmd->add_option("--out", p_out)->required();
  pca_tr_cmd->callback([&] {
    auto reduced = pca_transform(load_pca(p_model), read_features(p_features), threads());
    auto out = open_output(p_out);
    write_features(out, reduced);
  });

  // train
  auto* trn = app.add_subcommand("train", "Train a classifier on the train split");
  std::string t_kind = "random-forest";
  fs::path t_data, t_model, t_hp;
  std::uint64_t t_seed = 7;
  SplitFractions t_split;
  trn->add_option("--kind", t_kind)->check(CLI::IsMember({"logreg", "random-forest", "mlp"}))->capture_default_str();
  trn->add_option("--data", t_data, "Labeled features (item_id label f_...)")->required();
  trn->add_option("--seed", t_seed)->capture_default_str();
  trn->add_option("--hyperparameters", t_hp, "JSON hyperparameter file");
  trn->add_option("--train-fraction", t_split.train)->capture_default_str();
  trn->add_option("--validation-fraction", t_split.validation)->capture_default_str();
  trn->add_option("--test-fraction", t_split.test)->capture_default_str();
  trn->add_option("--model", t_model)->required();
  trn->callback([&] {
    Hyperparameters hp;
    if (!t_hp.empty()) hp = hyperparameters_from_json(slurp(t_hp));
    auto ds = split_dataset(read_labeled_features(t_data), t_split, t_seed);
    auto model = train(*parse_model_kind(t_kind), ds.subset(Split::kTrain), hp, t_seed, threads());
    nlohmann::ordered_json snap;
    snap["data"] = fs::absolute(t_data).lexically_normal().string();
    snap["split"] = {{"train", t_split.train}, {"validation", t_split.validation}, {"test", t_split.test}};
    snap["seed"] = t_seed;
    model.snapshot_json = snap.dump();
    save_model(model, t_model);
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a model on one split");
  fs::path e_model, e_data, e_report, e_roc;
  std::string e_split = "test";
  ev->add_option("--model", e_model)->required();
  ev->add_option("--data", e_data, "Labeled features (default: the file the model was trained on)");
  ev->add_option("--split", e_split)->check(CLI::IsMember({"train", "validation", "test"}))->capture_default_str();
  ev->add_option("--report", e_report)->required();
  ev->add_option("--roc", e_roc);
  ev->callback([&] {
    auto model = load_model(e_model);
    auto snap = read_snapshot(model);
    fs::path data = e_data.empty() ? snap.data : e_data;
    if (data.empty()) throw ConfigError("model carries no data path; pass --data");
    if (data.is_relative() && e_data.empty()) data = e_model.parent_path() / data;
    auto ds = split_dataset(read_labeled_features(data), snap.split, snap.seed);
    auto result = evaluate(model, ds.subset(*parse_split(e_split)));
    write_text(e_report, eval_report_json(result));
    if (!e_roc.empty()) {
      auto out = open_output(e_roc);
      write_roc_csv(out, result.roc);
    }
  });

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic world with planted utilities");
  fs::path y_config, y_out;
  std::optional<std::uint64_t> y_seed;
  syn->add_option("--config", y_config, "JSON world config");
  syn->add_option("--seed", y_seed, "Overrides the config seed");
  syn->add_option("--out-dir", y_out)->required();
  syn->callback([&] {
    WorldConfig cfg;
    if (!y_config.empty()) cfg = world_config_from_json(slurp(y_config));
    if (y_seed) cfg.seed = *y_seed;
    auto world = generate_world(cfg, threads());
    write_world(world, y_out);
    write_text(y_out / "world.json", world_config_json(cfg));
    std::cerr << world.emitted_events << " events for " << world.catalog.size() << " items\n";
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage from one config file");
  fs::path q_config, q_out;
  std::optional<std::uint64_t> q_seed;
  std::optional<std::int64_t> q_min_count;
  pipe->add_option("--config", q_config)->required();
  pipe->add_option("--output-dir", q_out, "Overrides output_dir");
  pipe->add_option("--seed", q_seed, "Overrides seed");
  pipe->add_option("--min-count", q_min_count, "Overrides min_count");
  pipe->callback([&] {
    auto doc = nlohmann::ordered_json::parse(slurp(q_config), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError(q_config.string() + ": not a JSON object");
    if (!q_out.empty()) doc["output_dir"] = fs::absolute(q_out).string();
    if (q_seed) doc["seed"] = *q_seed;
    if (q_min_count) doc["min_count"] = *q_min_count;
    auto cfg = pipeline_config_from_json(doc.dump(), q_config.parent_path());
    if (threads_flag > 0) cfg.threads = threads_flag;
    auto result = run_pipeline(cfg);
    std::cout << result.output_dir.string() << '\n';
    if (result.spearman) std::cerr << "spearman vs planted utility: " << format_double(*result.spearman) << '\n';
    if (result.primary_test_auc) std::cerr << "primary test AUC: " << format_double(*result.primary_test_auc) << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
