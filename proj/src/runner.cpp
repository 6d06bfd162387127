#include "appraisal/runner.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>
#include <span>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "appraisal/enbpi.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/gbt.hpp"
#include "appraisal/random.hpp"
#include "appraisal/shapley.hpp"
#include "appraisal/strategy.hpp"

namespace appraisal {
namespace fs = std::filesystem;
using nlohmann::json;

AddressLookup DatasetContext::address_lookup() const {
  auto cache = geocode;
  return [cache](const PropertyRecord& rec) -> std::string {
    if (rec.address && !rec.address->empty()) return *rec.address;
    if (!cache) return {};
    const auto hit = cache->lookup(GeoPoint{rec.lat, rec.lon});
    return hit ? hit->address : std::string{};
  };
}

PromptContext DatasetContext::prompt_context() const { return make_prompt_context(dataset, address_lookup()); }

std::unique_ptr<DatasetContext> load_context(const fs::path& dataset_toml, std::uint64_t seed, SplitOrdering ordering,
                                             std::shared_ptr<GeocodeCache> geocode) {
  auto ctx = std::make_unique<DatasetContext>();
  ctx->config = load_dataset_config(dataset_toml);
  auto ingested = ingest(ctx->config);
  ctx->dataset = std::move(ingested.dataset);
  ctx->accepted = ingested.accepted;
  ctx->rejections = std::move(ingested.rejections);
  if (ctx->dataset.records.size() < 10) {
    throw DataError(fmt::format("{}: only {} valid rows", ctx->config.name, ctx->dataset.records.size()));
  }
  ctx->split = split(ctx->dataset, seed, ordering);
  ctx->stats = train_stats(ctx->dataset, ctx->split);
  ctx->pool = std::make_unique<ComparablePool>(ctx->dataset, ctx->split.train, ctx->stats);
  ctx->geocode = std::move(geocode);
  spdlog::info("dataset {}: {} accepted, {} rejected, split {}/{}/{}", ctx->dataset.name, ctx->accepted,
               ctx->rejections.size(), ctx->split.train.size(), ctx->split.validation.size(), ctx->split.test.size());
  return ctx;
}

namespace {

// Work items are claimed from a shared counter; results land in their own slot.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

PredictionSet predict_llm(const DatasetContext& ctx, const PromptStrategy& strategy, ChatClient& client,
                          const std::vector<std::size_t>& instances, const LlmRunOptions& options, LlmRunStats* stats) {
  const auto& ds = ctx.dataset;
  const auto prompt_ctx = ctx.prompt_context();
  const auto vocabulary = ds.schema.variable_names();

  PredictionSet out{ds.name, client.endpoint().name, strategy.name, {}};
  out.rows.resize(instances.size());
  std::atomic<std::size_t> fallbacks{0}, selection_failures{0};
  std::atomic<bool> stop{false};
  std::mutex auth_mu;
  std::optional<std::string> auth_error;

  parallel_for(instances.size(), options.parallelism, [&](std::size_t i) {
    const PropertyRecord& rec = ds.records[instances[i]];
    Prediction& row = out.rows[i];
    row.id = rec.id;
    row.truth = rec.price;
    if (stop) {
      row.failed = true;
      return;
    }

    const PromptStrategy* effective = &strategy;
    std::optional<MarketReport> report;
    if (strategy.use_report) {
      if (options.reports != nullptr) report = select_report(*options.reports, rec.date, ds.report_scope);
      if (!report) {
        effective = &without_report(strategy);
        ++fallbacks;
      }
    }

    std::vector<const PropertyRecord*> examples;
    if (effective->examples) {
      auto spec = *effective->examples;
      spec.exclude_future = options.exclude_future;
      try {
        for (const auto& c : ctx.pool->select(rec, spec)) examples.push_back(&ds.records[c.record]);
      } catch (const SelectionError& e) {
        spdlog::warn("{}: {}", rec.id, e.what());
        ++selection_failures;
        row.failed = true;
        return;
      }
    }

    try {
      const auto conv = build_conversation(rec, *effective, examples, report ? &*report : nullptr, ctx.stats, prompt_ctx);
      const auto result = run_conversation(client, conv, ds.currency, vocabulary);
      row.point = result.price.value;
      row.interval = result.interval.bounds;
      row.interval_flagged = result.interval.valid() && (result.interval.swapped || result.interval_excludes_point);
      row.features = result.features.names;
      row.failed = result.failed;
      row.reprompts = result.price_reprompts + result.interval_reprompts;
      row.latency_ms = result.latency_ms;
    } catch (const AuthError& e) {
      row.failed = true;
      stop = true;
      std::lock_guard lock(auth_mu);
      if (!auth_error) auth_error = e.what();
    }
  });

  if (auth_error) throw AuthError(*auth_error);
  if (stats != nullptr) {
    stats->report_fallbacks += fallbacks;
    stats->selection_failures += selection_failures;
  }
  return out;
}

PredictionSet predict_knn(const DatasetContext& ctx, const KnnBaseline& baseline, const std::vector<std::size_t>& instances,
                          const std::string& model_label) {
  PredictionSet out{ctx.dataset.name, model_label, "", {}};
  for (const auto idx : instances) {
    const auto& rec = ctx.dataset.records[idx];
    Prediction row;
    row.id = rec.id;
    row.truth = rec.price;
    try {
      row.point = ctx.pool->knn_predict(rec, baseline.spec, baseline.aggregation);
    } catch (const SelectionError& e) {
      spdlog::warn("{}: {}", rec.id, e.what());
      row.failed = true;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

namespace {

const char* aggregation_name(KnnAggregation a) {
  switch (a) {
    case KnnAggregation::Mean: return "mean";
    case KnnAggregation::Median: return "median";
    case KnnAggregation::InverseDistance: return "inverse-distance";
  }
  return "?";
}

json base_metadata(const RunConfig& cfg, const DatasetContext& ctx, std::size_t instances) {
  return {{"run", cfg.name},
          {"seed", cfg.seed},
          {"split", to_string(ctx.split.ordering)},
          {"train_rows", ctx.split.train.size()},
          {"test_rows", ctx.split.test.size()},
          {"instances", instances},
          {"dataset_rows", ctx.accepted},
          {"rejected_rows", ctx.rejections.size()},
          {"train_stats_digest", ctx.stats.digest()},
          {"exclude_future", cfg.exclude_future}};
}

json prediction_json(const Prediction& p) {
  json j = {{"id", p.id}, {"truth", p.truth}, {"failed", p.failed}, {"reprompts", p.reprompts}};
  j["point"] = p.point ? json(*p.point) : json(nullptr);
  j["interval"] = p.interval ? json::array({p.interval->first, p.interval->second}) : json(nullptr);
  j["interval_flagged"] = p.interval_flagged;
  j["features"] = p.features ? json(*p.features) : json(nullptr);
  return j;
}

void write_predictions(const fs::path& dir, const PredictionSet& preds) {
  fs::create_directories(dir);
  const auto path = dir / fmt::format("{}__{}__{}.jsonl", slug(preds.dataset), slug(preds.model), slug(preds.strategy));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  for (const auto& row : preds.rows) out << prediction_json(row).dump() << '\n';
}

struct DatasetRun {
  std::vector<MetricsReport> reports;
  std::vector<std::string> reference_top5;
  json importance;
};

Prediction point_row(const PropertyRecord& rec, double point) {
  Prediction p;
  p.id = rec.id;
  p.truth = rec.price;
  p.point = point;
  return p;
}

std::vector<std::string> top_features(const PredictionSet& preds, const Schema& schema) {
  return tally_features(preds, schema.lat_name(), schema.lon_name()).top(5);
}

}  // namespace

GridResult run_grid(const RunConfig& cfg, const GridOptions& options) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  // Fail on an unwritable destination before spending any model calls.
  if (options.write_outputs) ensure_writable(cfg.output_dir);
  CallLimiter::global().set_limit(cfg.parallelism);

  std::shared_ptr<GeocodeCache> geocode;
  if (cfg.geocode_cache) geocode = std::make_shared<GeocodeCache>(*cfg.geocode_cache);
  ReportLibrary library;
  if (cfg.reports_dir) library = ReportLibrary::load(*cfg.reports_dir);
  auto cache = std::make_shared<ResponseCache>(cfg.cache_dir);

  std::vector<std::shared_ptr<ChatClient>> clients;
  for (const auto& e : cfg.endpoints) {
    std::shared_ptr<ChatTransport> transport = options.transport ? options.transport(e) : nullptr;
    clients.push_back(std::make_shared<ChatClient>(e, cache, transport, options.retry.value_or(RetryPolicy{})));
  }

  GridResult result;
  json dataset_logs = json::array();
  std::vector<bool> endpoint_dead(clients.size(), false);

  for (const auto& ds_path : cfg.datasets) {
    auto ctx = load_context(ds_path, cfg.seed, cfg.split, geocode);
    const auto& ds = ctx->dataset;
    const auto instances = sample_test(ctx->split, cfg.test_sample, cfg.seed);
    const json meta = base_metadata(cfg, *ctx, instances.size());
    std::vector<PredictionSet> sets;
    std::vector<MetricsReport> reports;
    json ds_log = {{"dataset", ds.name}, {"instances", instances.size()}};

    const auto add = [&](PredictionSet preds, json extra) {
      json m = meta;
      m.update(extra);
      auto report = summarize(preds, m);
      report.top_features = top_features(preds, ds.schema);
      reports.push_back(std::move(report));
      sets.push_back(std::move(preds));
    };

    // Baselines.
    for (const auto& kb : cfg.baselines.knn) {
      add(predict_knn(*ctx, kb, instances, kb.label),
          {{"selection", {{"mode", to_string(kb.spec.mode)}, {"count", kb.spec.count}}},
           {"aggregation", aggregation_name(kb.aggregation)}});
    }

    std::vector<std::string> reference_top5;
    const EncoderOptions enc_opts{true, cfg.baselines.min_category_count};
    if (cfg.baselines.gbt || cfg.baselines.shapley) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto model = GbtPriceModel::fit(ds, ctx->split.train, cfg.baselines.gbt_params, enc_opts, cfg.baselines.target);
      const json model_meta = {{"target", to_string(model.target())},
                               {"encoding", model.encoder().describe_encoding()},
                               {"n_trees", model.model().trees().size()},
                               {"coordinates", true}};
      if (cfg.baselines.gbt) {
        PredictionSet preds{ds.name, "GBT", "", {}};
        for (const auto idx : instances) {
          const auto& rec = ds.records[idx];
          preds.rows.push_back(point_row(rec, model.predict(rec)));
        }
        add(std::move(preds), model_meta);
      }
      if (cfg.baselines.shapley) {
        const auto& enc = model.encoder();
        // Background: a seeded sample of training rows; instances: the head of the test sample.
        std::vector<std::size_t> bg_rows = ctx->split.train;
        Rng rng(derive_seed(cfg.seed, seed_stream::kBackground));
        rng.shuffle(std::span<std::size_t>(bg_rows));
        bg_rows.resize(std::min(bg_rows.size(), cfg.baselines.shapley_background));
        std::vector<std::size_t> explain(instances.begin(),
                                         instances.begin() + static_cast<std::ptrdiff_t>(
                                                                 std::min(instances.size(), cfg.baselines.shapley_instances)));
        const Matrix bg = enc.encode_rows(ds, bg_rows);
        const Matrix xs = enc.encode_rows(ds, explain);
        ShapleyOptions so;
        so.permutations = cfg.baselines.shapley_permutations;
        so.seed = cfg.seed;
        const auto profile = shapley_importance([&](const double* row) { return model.predict_row(row); }, bg, xs,
                                                players_from_encoder(enc), so, ds.schema.lat_name(), ds.schema.lon_name());
        reference_top5 = profile.top(5);
        json ranking = json::array();
        for (const auto& e : profile.ranking) ranking.push_back({{"feature", e.name}, {"mean_abs", e.mean_abs}});
        double worst_gap = 0.0;
        for (const double g : profile.local_accuracy_gap) worst_gap = std::max(worst_gap, std::abs(g));
        ds_log["importance"] = {{"dataset", ds.name},
                                {"model", "GBT"},
                                {"permutations", so.permutations},
                                {"instances", explain.size()},
                                {"background", bg_rows.size()},
                                {"max_local_accuracy_gap", worst_gap},
                                {"ranking", ranking}};
        if (cfg.baselines.gbt && !reports.empty() && reports.back().model == "GBT") reports.back().top_features = reference_top5;
      }
      ds_log["gbt_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (cfg.baselines.gbt_without_xy) {
      const auto model = GbtPriceModel::fit(ds, ctx->split.train, cfg.baselines.gbt_params,
                                            EncoderOptions{false, cfg.baselines.min_category_count}, cfg.baselines.target);
      PredictionSet preds{ds.name, "GBT no-XY", "", {}};
      for (const auto idx : instances) {
        const auto& rec = ds.records[idx];
        preds.rows.push_back(point_row(rec, model.predict(rec)));
      }
      add(std::move(preds), {{"target", to_string(model.target())},
                             {"encoding", model.encoder().describe_encoding()},
                             {"coordinates", false}});
    }
    if (cfg.baselines.enbpi) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto enc = FeatureEncoder::fit(ds, ctx->split.train, enc_opts);
      // Chronological splits keep training order by date, so a residual window means "most recent".
      const Matrix x = enc.encode_rows(ds, ctx->split.train);
      std::vector<double> y;
      for (const auto idx : ctx->split.train) y.push_back(ds.records[idx].price);
      EnbpiParams ep;
      ep.members = cfg.baselines.enbpi_members;
      ep.alpha = cfg.baselines.enbpi_alpha;
      ep.seed = cfg.seed;
      const auto model = EnbpiModel::fit(x, y, gbt_learner(cfg.baselines.gbt_params, cfg.baselines.target), ep);
      std::optional<std::size_t> window;
      if (cfg.split == SplitOrdering::Chronological) window = cfg.baselines.enbpi_window;
      PredictionSet preds{ds.name, "GBT+EnbPI", "", {}};
      std::vector<double> row(enc.width());
      for (const auto idx : instances) {
        const auto& rec = ds.records[idx];
        enc.encode_into(rec, row.data());
        const auto iv = model.interval(row.data(), window);
        Prediction p = point_row(rec, iv.point);
        p.interval = std::make_pair(iv.lo, iv.hi);
        preds.rows.push_back(std::move(p));
      }
      add(std::move(preds), {{"members", ep.members},
                             {"alpha", ep.alpha},
                             {"residual_window", window ? json(*window) : json(nullptr)},
                             {"half_width", model.quantile(window)},
                             {"uncovered_rows", model.uncovered().size()},
                             {"redraws", model.redraws()},
                             {"target", to_string(cfg.baselines.target)}});
      ds_log["enbpi_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    // Model grid.
    LlmRunOptions lo{cfg.parallelism, cfg.exclude_future, library.empty() ? nullptr : &library};
    for (std::size_t e = 0; e < clients.size(); ++e) {
      auto& client = *clients[e];
      const auto& ep = client.endpoint();
      for (const auto& name : cfg.strategies) {
        const auto& strategy = find_strategy(name);
        if (endpoint_dead[e]) continue;
        LlmRunStats stats;
        try {
          auto preds = predict_llm(*ctx, strategy, client, instances, lo, &stats);
          json extra = {{"endpoint", {{"kind", to_string(ep.kind)},
                                      {"model", ep.model},
                                      {"temperature", ep.temperature},
                                      {"seed", ep.seed},
                                      {"max_tokens", ep.max_tokens},
                                      {"feature_max_tokens", ep.feature_max_tokens}}},
                        {"report_fallbacks", stats.report_fallbacks},
                        {"selection_failures", stats.selection_failures}};
          add(std::move(preds), extra);
          if (!reference_top5.empty()) {
            reports.back().top5_overlap =
                feature_overlap(reports.back().top_features, reference_top5, 5, ds.schema.lat_name(), ds.schema.lon_name());
          }
        } catch (const AuthError& err) {
          spdlog::error("{}", err.what());
          endpoint_dead[e] = true;
          result.auth_failures.push_back(err.what());
        }
      }
    }

    if (options.write_outputs) {
      for (const auto& s : sets) write_predictions(cfg.output_dir / "predictions", s);
      if (ds_log.contains("importance")) {
        std::ofstream out(cfg.output_dir / fmt::format("importance__{}.json", slug(ds.name)), std::ios::trunc);
        out << ds_log["importance"].dump(2) << '\n';
      }
    }
    dataset_logs.push_back(std::move(ds_log));
    for (auto& r : reports) result.reports.push_back(std::move(r));
  }

  json endpoints = json::array();
  for (const auto& c : clients) {
    const auto s = c->stats();
    endpoints.push_back({{"name", c->endpoint().name},
                         {"calls", s.calls},
                         {"cache_hits", s.cache_hits},
                         {"failures", s.failures},
                         {"attempts", s.attempts}});
  }
  result.log = {{"run", cfg.name},
                {"datasets", dataset_logs},
                {"endpoints", endpoints},
                {"auth_failures", result.auth_failures},
                {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};

  if (options.write_outputs && !result.reports.empty()) {
    result.written = emit(result.reports, cfg.output_dir);
    const auto log_path = cfg.output_dir / "run_log.json";
    std::ofstream out(log_path, std::ios::trunc);
    out << result.log.dump(2) << '\n';
    result.written.push_back(log_path);
  }
  return result;
}

}  // namespace appraisal
