#include "mtgr/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtgr/gradcheck_suite.hpp"
#include "mtgr/log.hpp"

namespace mtgr {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainCrossSalt = 0xC7055A17ULL;
constexpr std::uint64_t kTestCrossSalt = 0x7E57C7055ULL;

std::vector<AggregatedSample> load_split(const std::string& path, bool shuffle_cross, std::uint64_t seed) {
  auto samples = read_jsonl(path);
  if (shuffle_cross) shuffle_cross_features(samples, seed);
  return samples;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

FeatureSchema resolve_schema(const RunConfig& cfg, const std::vector<AggregatedSample>& samples) {
  const int d = cfg.model.hstu.d_model;
  const bool listed = !cfg.schema_profile.empty() || !cfg.schema_sequence.empty() || !cfg.schema_candidate.empty() ||
                      !cfg.schema_cross.empty();
  if (listed) {
    auto schema = FeatureSchema::make(cfg.schema_profile, cfg.schema_sequence, cfg.schema_candidate, cfg.schema_cross, d);
    schema.validate();
    return schema;
  }
  if (samples.empty()) throw SchemaError("no schema.* lists given and no samples to infer the schema from");
  return infer_schema(samples, d);
}

nlohmann::json cmd_gen_data(const RunConfig& cfg) {
  log::info("generating " + std::to_string(cfg.gen.num_users) + " users into " + cfg.data_dir);
  const auto data = generate_dataset(cfg.gen);
  write_dataset(cfg.data_dir, data);
  return {{"command", "gen-data"},
          {"ok", true},
          {"dir", cfg.data_dir},
          {"train_samples", data.train.size()},
          {"test_samples", data.test.size()},
          {"impressions", data.truth.size()},
          {"click_rate", data.manifest["click_rate"]},
          {"bayes_auc", data.manifest["bayes_auc"]}};
}

nlohmann::json cmd_train(const RunConfig& cfg) {
  const auto train_data = load_split(cfg.resolved_train_path(), cfg.shuffle_cross, cfg.train.seed ^ kTrainCrossSalt);
  std::vector<AggregatedSample> test_data;
  if (cfg.train.eval_every > 0 && fs::exists(cfg.resolved_test_path())) {
    test_data = load_split(cfg.resolved_test_path(), cfg.shuffle_cross, cfg.train.seed ^ kTestCrossSalt);
  }
  const auto schema = resolve_schema(cfg, train_data);
  RunConfig snap = cfg;
  snap.schema_profile = schema.user_profile_features();
  snap.schema_sequence = schema.sequence_item_features();
  snap.schema_candidate = schema.candidate_item_features();
  snap.schema_cross = schema.cross_features();

  const fs::path run_dir(cfg.run_dir);
  fs::create_directories(run_dir);
  const fs::path metrics_path = run_dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + metrics_path.string());

  Model<double> model(schema, cfg.model);
  Trainer<double> trainer(model, cfg.train);
  TrainHooks hooks;
  hooks.on_step = [&](const MetricRecord& r) {
    metrics << r.to_json().dump() << '\n';
    metrics.flush();
    if (r.step % 50 == 0 || r.auc) log::info("step " + std::to_string(r.step) + " loss " + std::to_string(r.loss));
  };
  hooks.on_numeric_error = [&](std::uint64_t step, const std::vector<const AggregatedSample*>& batch,
                               const std::string& what) {
    nlohmann::json dump = {{"step", step}, {"error", what}};
    for (const auto* s : batch) dump["user_ids"].push_back(s->user_id);
    write_json(run_dir / "nan_dump.json", dump);
    log::error("non-finite value at step " + std::to_string(step) + ": " + what + " (see nan_dump.json)");
  };
  const auto log_records = train(trainer, train_data, test_data, hooks);
  const fs::path ckpt = run_dir / "checkpoint";
  save_checkpoint(ckpt, model, trainer.dense_state(), snapshot(snap));

  nlohmann::json out = {{"command", "train"},       {"ok", true},
                        {"steps", log_records.size()}, {"metrics", metrics_path.string()},
                        {"checkpoint", ckpt.string()}};
  if (!log_records.empty()) {
    out["first_loss"] = log_records.front().loss;
    out["final_loss"] = log_records.back().loss;
    out["final_auc"] = optional_json(log_records.back().auc);
    out["final_gauc"] = optional_json(log_records.back().gauc);
  }
  return out;
}

nlohmann::json cmd_eval(const RunConfig& cfg) {
  const fs::path ckpt = cfg.checkpoint.empty() ? fs::path(cfg.run_dir) / "checkpoint" : fs::path(cfg.checkpoint);
  const RunConfig trained = build_run_config(ConfigFile::load(ckpt / "config.snapshot"));
  const auto test_data = load_split(cfg.resolved_test_path(), trained.shuffle_cross, trained.train.seed ^ kTestCrossSalt);
  const auto schema = resolve_schema(trained, {});
  Model<double> model(schema, trained.model);
  load_checkpoint(ckpt, model);
  const auto report = evaluate(model, test_data, cfg.train.gauc_weighting);
  const fs::path report_path = cfg.report.empty() ? fs::path(cfg.run_dir) / "eval.json" : fs::path(cfg.report);
  auto j = report.to_json();
  j["samples"] = test_data.size();
  j["checkpoint"] = ckpt.string();
  j["data"] = cfg.resolved_test_path();
  write_json(report_path, j);
  const bool ok = report.ctr_auc.has_value();
  return {{"command", "eval"},
          {"ok", ok},
          {"report", report_path.string()},
          {"ctr_auc", optional_json(report.ctr_auc)},
          {"ctr_gauc", optional_json(report.ctr_gauc)},
          {"ctcvr_auc", optional_json(report.ctcvr_auc)},
          {"ctcvr_gauc", optional_json(report.ctcvr_gauc)}};
}

nlohmann::json cmd_grad_check(const RunConfig& cfg) {
  const auto checks = run_gradient_checks(cfg.model.seed);
  nlohmann::json modules = nlohmann::json::object();
  nlohmann::json detail = nlohmann::json::array();
  double worst = 0.0;
  for (const auto& c : checks) {
    modules[c.module] = c.max_relative_error;
    detail.push_back({{"module", c.module}, {"max_relative_error", c.max_relative_error}, {"coordinates", c.coordinates}});
    worst = std::max(worst, c.max_relative_error);
  }
  const double tolerance = 1e-4;
  const fs::path path = fs::path(cfg.run_dir) / "grad_check.json";
  write_json(path, {{"tolerance", tolerance}, {"max_relative_error", worst}, {"checks", detail}});
  return {{"command", "grad-check"},
          {"ok", worst < tolerance},
          {"max_relative_error", worst},
          {"report", path.string()},
          {"modules", modules}};
}

nlohmann::json cmd_inspect_mask(const RunConfig& cfg) {
  std::vector<TokenGroup> tags;
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> labels;
  if (cfg.mask_source == "interleaved") {
    auto fx = interleaved_fixture();
    tags = std::move(fx.tags);
    timestamps = std::move(fx.timestamps);
    labels = std::move(fx.labels);
  } else {
    const auto samples = read_jsonl(cfg.mask_source);
    if (cfg.mask_index >= samples.size()) {
      throw DataError("mask.index " + std::to_string(cfg.mask_index) + " is out of range (" +
                      std::to_string(samples.size()) + " samples)");
    }
    const auto schema = resolve_schema(cfg, samples);
    const auto& sample = samples[cfg.mask_index];
    const auto layout = make_layout(sample, schema);
    tags = layout.tags;
    timestamps = layout.timestamps;
    for (const auto& name : schema.user_profile_features()) labels.push_back("U:" + name);
    for (std::size_t i = 0; i < layout.n_static; ++i) labels.push_back("S" + std::to_string(i + 1));
    for (std::size_t i = 0; i < layout.n_realtime; ++i) {
      labels.push_back("R" + std::to_string(i + 1) + "@" + std::to_string(sample.realtime_seq[i].ts));
    }
    for (std::size_t i = 0; i < layout.n_candidates; ++i) {
      labels.push_back("C" + std::to_string(i + 1) + "@" + std::to_string(sample.candidates[i].request_ts));
    }
  }
  const auto mask = build_mask(cfg.model.hstu.mask_mode, tags, timestamps);
  write_text(cfg.mask_out, mask.to_grid(labels));
  return {{"command", "inspect-mask"},
          {"ok", true},
          {"mode", to_string(cfg.model.hstu.mask_mode)},
          {"tokens", mask.size()},
          {"visible", static_cast<long long>(mask.visible.cast<long long>().sum())},
          {"out", cfg.mask_out}};
}

std::string flops_table(const RunConfig& cfg) {
  struct Row {
    std::string name;
    HstuConfig hstu;
  };
  std::vector<Row> rows = {{"small", HstuConfig::small()}, {"medium", HstuConfig::medium()}, {"large", HstuConfig::large()},
                           {"configured", cfg.model.hstu}};
  SequenceLengths lengths{cfg.flops.n_profile, cfg.flops.static_len, cfg.flops.realtime_len, cfg.flops.candidates};
  SequenceLengths single = lengths;
  single.n_candidates = 1;
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-11s %8s %8s %8s %16s %18s %20s\n", "model", "n_layer", "d_model", "n_heads",
                "GFLOPs/sample", "GFLOPs/candidate", "GFLOPs/1-cand req");
  out << line;
  for (const auto& r : rows) {
    const auto f = flops_estimate(r.hstu, lengths, r.hstu.d_model, r.hstu.d_model);
    const auto f1 = flops_estimate(r.hstu, single, r.hstu.d_model, r.hstu.d_model);
    std::snprintf(line, sizeof(line), "%-11s %8d %8d %8d %16.3f %18.3f %20.3f\n", r.name.c_str(), r.hstu.n_layer,
                  r.hstu.d_model, r.hstu.n_heads, f.total / 1e9, f.per_candidate / 1e9, f1.total / 1e9);
    out << line;
  }
  out << "lengths: profile=" << lengths.n_profile << " static=" << lengths.n_static
      << " realtime=" << lengths.n_realtime << " candidates=" << lengths.n_candidates
      << "; token widths = d_model; forward pass, 2mnk per matmul\n";
  return out.str();
}

nlohmann::json cmd_bench_flops(const RunConfig& cfg) {
  const std::string table = flops_table(cfg);
  const fs::path path = fs::path(cfg.run_dir) / "bench_flops.txt";
  write_text(path, table);
  SequenceLengths lengths{cfg.flops.n_profile, cfg.flops.static_len, cfg.flops.realtime_len, cfg.flops.candidates};
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [name, h] : {std::pair{"small", HstuConfig::small()}, std::pair{"medium", HstuConfig::medium()},
                                std::pair{"large", HstuConfig::large()}}) {
    rows[name] = flops_estimate(h, lengths, h.d_model, h.d_model).total / 1e9;
  }
  return {{"command", "bench-flops"},
          {"ok", true},
          {"report", path.string()},
          {"gflops_per_sample", rows},
          {"large_over_small", rows["large"].get<double>() / rows["small"].get<double>()}};
}

nlohmann::json cmd_dedup_stats(const RunConfig& cfg) {
  const auto samples = read_jsonl(cfg.resolved_train_path());
  if (samples.empty()) throw DataError("no samples in " + cfg.resolved_train_path());
  const auto schema = resolve_schema(cfg, samples);
  EmbeddingStore<double> store(merge_tables(schema, cfg.model.merge_tables), cfg.model.num_shards, cfg.model.table);
  EpochSampler sampler(samples.size(), cfg.train.batch_size, cfg.train.seed);
  TransferStats total;
  std::size_t steps = 0;
  for (std::size_t seen = 0; seen < samples.size(); ++steps) {
    const auto batch = sampler.next();
    seen += batch.size();
    std::vector<std::size_t> lengths;
    std::size_t tokens = 0;
    for (std::size_t i : batch) {
      lengths.push_back(samples[i].token_count(schema.user_profile_features().size()));
      tokens += lengths.back();
    }
    const auto plan =
        plan_dynamic_batches(lengths, cfg.train.num_workers, cfg.train.token_budget ? cfg.train.token_budget : tokens);
    std::vector<std::vector<EmbeddingKey>> ids(cfg.train.num_workers);
    for (std::size_t w = 0; w < plan.assignments.size(); ++w) {
      for (std::size_t i : plan.assignments[w]) {
        const auto keys = collect_keys(samples[batch[i]], schema);
        ids[w].insert(ids[w].end(), keys.begin(), keys.end());
      }
    }
    store.begin_step(steps + 1);
    total += two_stage_dedup_lookup(ids, store).stats;
  }
  const auto req = static_cast<double>(total.requested);
  const nlohmann::json report = {{"steps", steps},
                                 {"workers", cfg.train.num_workers},
                                 {"shards", cfg.model.num_shards},
                                 {"requested", total.requested},
                                 {"after_stage1", total.after_stage1},
                                 {"after_stage2", total.after_stage2},
                                 {"stage1_reduction", 1.0 - static_cast<double>(total.after_stage1) / req},
                                 {"stage2_reduction", 1.0 - static_cast<double>(total.after_stage2) / req},
                                 {"transfer_reduction", total.reduction()},
                                 {"id_bytes_naive", total.id_bytes_naive},
                                 {"id_bytes_sent", total.id_bytes_sent},
                                 {"vector_bytes_naive", total.vector_bytes_naive},
                                 {"vector_bytes_returned", total.vector_bytes_returned}};
  const fs::path path = fs::path(cfg.run_dir) / "dedup_stats.json";
  write_json(path, report);
  nlohmann::json out = report;
  out["command"] = "dedup-stats";
  out["ok"] = true;
  out["report"] = path.string();
  return out;
}

}  // namespace mtgr
