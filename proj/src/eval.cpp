#include "appraisal/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "appraisal/errors.hpp"
#include "appraisal/shapley.hpp"

namespace appraisal {

using nlohmann::json;

PointMetrics mape(const PredictionSet& preds) {
  PointMetrics m;
  std::vector<double> pe;
  for (const auto& r : preds.rows) {
    if (!r.point || !(r.truth > 0.0) || !std::isfinite(*r.point)) continue;
    pe.push_back((*r.point - r.truth) / r.truth);
  }
  m.n_valid = pe.size();
  m.n_invalid = preds.rows.size() - pe.size();
  if (pe.empty()) throw DataError(fmt::format("{} / {}: no valid point predictions", preds.model, preds.strategy));
  double abs_sum = 0.0, sum = 0.0;
  for (const double e : pe) {
    abs_sum += std::abs(e);
    sum += e;
  }
  const double n = static_cast<double>(pe.size());
  m.mape = abs_sum / n;
  const double mean = sum / n;
  double ss = 0.0;
  for (const double e : pe) ss += (e - mean) * (e - mean);
  m.pe_std = std::sqrt(ss / n);
  return m;
}

IntervalMetrics interval_metrics(const PredictionSet& preds) {
  IntervalMetrics m;
  std::size_t covered = 0;
  double width = 0.0;
  for (const auto& r : preds.rows) {
    if (!r.interval) continue;
    const auto [lo, hi] = *r.interval;
    ++m.n_valid;
    if (lo <= r.truth && r.truth <= hi) ++covered;
    width += hi - lo;
    if (r.interval_flagged) ++m.n_flagged;
  }
  m.n_invalid = preds.rows.size() - m.n_valid;
  if (m.n_valid == 0) throw DataError(fmt::format("{} / {}: no valid intervals", preds.model, preds.strategy));
  m.coverage_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(m.n_valid);
  m.mpiw = width / static_cast<double>(m.n_valid);
  return m;
}

namespace {

std::string map_coordinate(const std::string& name, const std::string& lat, const std::string& lon) {
  if ((!lat.empty() && name == lat) || (!lon.empty() && name == lon)) return kCoordinateFeature;
  return name;
}

std::vector<std::string> normalized_top(const std::vector<std::string>& names, std::size_t k, const std::string& lat,
                                        const std::string& lon) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    const std::string m = map_coordinate(n, lat, lon);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    if (out.size() == k) break;
  }
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

OverlapResult feature_overlap(const std::vector<std::string>& llm, const std::vector<std::string>& reference,
                              std::size_t k, const std::string& lat_name, const std::string& lon_name) {
  const auto a = normalized_top(llm, k, lat_name, lon_name);
  const auto b = normalized_top(reference, k, lat_name, lon_name);
  OverlapResult r;
  for (const auto& n : a) (contains(b, n) ? r.shared : r.only_llm).push_back(n);
  for (const auto& n : b) {
    if (!contains(a, n)) r.only_reference.push_back(n);
  }
  return r;
}

std::vector<std::string> FeatureTally::top(std::size_t k) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < counts.size() && i < k; ++i) out.push_back(counts[i].first);
  return out;
}

FeatureTally tally_features(const PredictionSet& preds, const std::string& lat_name, const std::string& lon_name) {
  FeatureTally t;
  std::map<std::string, std::pair<std::size_t, double>> acc;  // mentions, position sum
  for (const auto& r : preds.rows) {
    if (!r.features || r.features->empty()) {
      ++t.n_skipped;
      continue;
    }
    ++t.n_valid;
    const auto names = normalized_top(*r.features, r.features->size(), lat_name, lon_name);
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto& [count, pos] = acc[names[i]];
      ++count;
      pos += static_cast<double>(i);
    }
  }
  std::vector<std::tuple<std::string, std::size_t, double>> rows;
  for (const auto& [name, v] : acc) rows.emplace_back(name, v.first, v.second / static_cast<double>(v.first));
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
    if (std::get<2>(a) != std::get<2>(b)) return std::get<2>(a) < std::get<2>(b);
    return std::get<0>(a) < std::get<0>(b);
  });
  for (const auto& [name, count, _] : rows) t.counts.emplace_back(name, count);
  return t;
}

// ---------------------------------------------------------------------------
// Reports

bool operator==(const MetricsReport& a, const MetricsReport& b) { return to_json(a) == to_json(b); }

MetricsReport summarize(const PredictionSet& preds, json metadata) {
  MetricsReport r;
  r.dataset = preds.dataset;
  r.model = preds.model;
  r.strategy = preds.strategy;
  r.n_total = preds.rows.size();
  r.metadata = std::move(metadata);
  for (const auto& row : preds.rows) {
    r.n_failed += row.failed ? 1 : 0;
    r.n_reprompts += static_cast<std::size_t>(row.reprompts);
  }
  const bool any_point = std::any_of(preds.rows.begin(), preds.rows.end(), [](const Prediction& p) { return p.point.has_value(); });
  if (any_point) {
    const auto m = mape(preds);
    r.mape = m.mape;
    r.pe_std = m.pe_std;
    r.n_valid_price = m.n_valid;
  }
  const bool any_interval =
      std::any_of(preds.rows.begin(), preds.rows.end(), [](const Prediction& p) { return p.interval.has_value(); });
  if (any_interval) {
    const auto m = interval_metrics(preds);
    r.coverage_pct = m.coverage_pct;
    r.mpiw = m.mpiw;
    r.n_valid_interval = m.n_valid;
    r.n_flagged_interval = m.n_flagged;
  }
  const auto tally = tally_features(preds);
  r.n_valid_features = tally.n_valid;
  r.top_features = tally.top(5);
  return r;
}

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> read_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

json to_json(const MetricsReport& r) {
  json overlap = nullptr;
  if (r.top5_overlap) {
    overlap = {{"only_llm", r.top5_overlap->only_llm},
               {"shared", r.top5_overlap->shared},
               {"only_reference", r.top5_overlap->only_reference}};
  }
  return {{"schema_version", r.schema_version},
          {"dataset", r.dataset},
          {"model", r.model},
          {"strategy", r.strategy},
          {"mape", opt(r.mape)},
          {"pe_std", opt(r.pe_std)},
          {"coverage_pct", opt(r.coverage_pct)},
          {"mpiw", opt(r.mpiw)},
          {"n_total", r.n_total},
          {"n_valid_price", r.n_valid_price},
          {"n_valid_interval", r.n_valid_interval},
          {"n_valid_features", r.n_valid_features},
          {"n_failed", r.n_failed},
          {"n_flagged_interval", r.n_flagged_interval},
          {"n_reprompts", r.n_reprompts},
          {"top_features", r.top_features},
          {"top5_overlap", overlap},
          {"metadata", r.metadata}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  try {
    r.schema_version = j.value("schema_version", 1);
    if (r.schema_version != 1) throw DataError(fmt::format("unsupported report schema version {}", r.schema_version));
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.strategy = j.value("strategy", "");
    r.mape = read_opt<double>(j, "mape");
    r.pe_std = read_opt<double>(j, "pe_std");
    r.coverage_pct = read_opt<double>(j, "coverage_pct");
    r.mpiw = read_opt<double>(j, "mpiw");
    r.n_total = j.value("n_total", std::size_t{0});
    r.n_valid_price = j.value("n_valid_price", std::size_t{0});
    r.n_valid_interval = j.value("n_valid_interval", std::size_t{0});
    r.n_valid_features = j.value("n_valid_features", std::size_t{0});
    r.n_failed = j.value("n_failed", std::size_t{0});
    r.n_flagged_interval = j.value("n_flagged_interval", std::size_t{0});
    r.n_reprompts = j.value("n_reprompts", std::size_t{0});
    r.top_features = j.value("top_features", std::vector<std::string>{});
    if (j.contains("top5_overlap") && !j.at("top5_overlap").is_null()) {
      const auto& o = j.at("top5_overlap");
      r.top5_overlap = OverlapResult{o.at("only_llm").get<std::vector<std::string>>(),
                                     o.at("shared").get<std::vector<std::string>>(),
                                     o.at("only_reference").get<std::vector<std::string>>()};
    }
    r.metadata = j.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed metrics report: {}", e.what()));
  }
  if (r.n_valid_price > r.n_total || r.n_valid_interval > r.n_total) {
    throw DataError(fmt::format("report {} / {}: valid counts exceed n_total", r.model, r.strategy));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ranking

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::vector<RankRow> rank(const std::vector<MetricsReport>& reports, RankGroup group, bool average_mapes) {
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsReport*>> blocks;
  std::vector<std::string> names;
  for (const auto& r : reports) {
    if (!r.mape) continue;
    const std::string& other = group == RankGroup::Strategy ? r.model : r.strategy;
    blocks[{r.dataset, other}].push_back(&r);
    const std::string& item = group == RankGroup::Strategy ? r.strategy : r.model;
    if (!contains(names, item)) names.push_back(item);
  }

  std::map<std::string, RankRow> rows;
  for (const auto& n : names) rows[n].name = n;
  for (const auto& [key, members] : blocks) {
    std::vector<double> mapes;
    for (const auto* r : members) mapes.push_back(*r->mape);
    const auto ranks = average_ranks(mapes);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const std::string& item = group == RankGroup::Strategy ? members[i]->strategy : members[i]->model;
      RankRow& row = rows[item];
      row.mean_rank += ranks[i];
      row.mean_mape += mapes[i];
      ++row.blocks;
    }
  }
  std::vector<RankRow> out;
  for (const auto& n : names) {
    RankRow row = rows[n];
    row.mean_rank /= static_cast<double>(row.blocks);
    row.mean_mape /= static_cast<double>(row.blocks);
    out.push_back(row);
  }
  if (average_mapes) {
    std::vector<double> means;
    for (const auto& r : out) means.push_back(r.mean_mape);
    const auto ranks = average_ranks(means);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].mean_rank = ranks[i];
  }
  std::stable_sort(out.begin(), out.end(), [](const RankRow& a, const RankRow& b) {
    if (a.mean_rank != b.mean_rank) return a.mean_rank < b.mean_rank;
    return a.name < b.name;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

std::string format_mape_cell(double mape, double pe_std) { return fmt::format("{:.4f} ± {:.4f}", mape, pe_std); }

std::string format_grouped(double value) {
  const long long v = std::llround(value);
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ' ';
    out += digits[i];
  }
  return v < 0 ? "-" + out : out;
}

namespace {

// Display width in code points (cells contain "±").
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (const unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width) { return s + std::string(width - std::min(width, display_width(s)), ' '); }

struct Grid {
  std::vector<std::string> datasets;
  std::vector<std::string> rows;
  std::map<std::pair<std::string, std::string>, const MetricsReport*> cells;  // (row, dataset)
};

Grid make_grid(const std::vector<MetricsReport>& reports) {
  std::map<std::string, std::set<std::string>> strategies_per_model;
  for (const auto& r : reports) strategies_per_model[r.model].insert(r.strategy);
  Grid g;
  for (const auto& r : reports) {
    const std::string label =
        r.strategy.empty() || strategies_per_model[r.model].size() == 1 ? r.model : fmt::format("{} ({})", r.model, r.strategy);
    if (!contains(g.rows, label)) g.rows.push_back(label);
    if (!contains(g.datasets, r.dataset)) g.datasets.push_back(r.dataset);
    g.cells[{label, r.dataset}] = &r;
  }
  return g;
}

std::string render(const std::vector<std::vector<std::string>>& header, const std::vector<std::vector<std::string>>& body) {
  std::size_t cols = 0;
  for (const auto& r : header) cols = std::max(cols, r.size());
  for (const auto& r : body) cols = std::max(cols, r.size());
  std::vector<std::size_t> width(cols, 0);
  for (const auto* part : {&header, &body}) {
    for (const auto& r : *part) {
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], display_width(r[c]));
    }
  }
  const auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < cols; ++c) {
      if (c > 0) s += " | ";
      s += pad(c < r.size() ? r[c] : std::string{}, width[c]);
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + '\n';
  };
  std::string out;
  for (const auto& r : header) out += line(r);
  std::size_t total = 0;
  for (const auto w : width) total += w;
  out += std::string(total + 3 * (cols - 1), '-') + '\n';
  for (const auto& r : body) out += line(r);
  return out;
}

}  // namespace

std::string render_table2(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw DataError("no reports to render");
  const Grid g = make_grid(reports);
  std::vector<std::string> head{""};
  head.insert(head.end(), g.datasets.begin(), g.datasets.end());
  std::vector<std::vector<std::string>> body;
  for (const auto& row : g.rows) {
    std::vector<std::string> line{row};
    for (const auto& d : g.datasets) {
      const auto it = g.cells.find({row, d});
      line.push_back(it != g.cells.end() && it->second->mape && it->second->pe_std
                         ? format_mape_cell(*it->second->mape, *it->second->pe_std)
                         : "n/a");
    }
    body.push_back(std::move(line));
  }
  return render({head}, body);
}

std::string render_table3(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw DataError("no reports to render");
  const Grid g = make_grid(reports);
  std::vector<std::string> groups{""}, head{""};
  for (const auto& d : g.datasets) {
    groups.push_back(d);
    groups.push_back("");
    head.push_back("Cov.");
    head.push_back("MPIW");
  }
  std::vector<std::vector<std::string>> body;
  for (const auto& row : g.rows) {
    std::vector<std::string> line{row};
    bool any = false;
    for (const auto& d : g.datasets) {
      const auto it = g.cells.find({row, d});
      const bool ok = it != g.cells.end() && it->second->coverage_pct && it->second->mpiw;
      any |= ok;
      line.push_back(ok ? fmt::format("{:.1f}", *it->second->coverage_pct) : "n/a");
      line.push_back(ok ? format_grouped(*it->second->mpiw) : "n/a");
    }
    if (any) body.push_back(std::move(line));  // point-only models have no row here
  }
  if (body.empty()) throw DataError("no report carries interval metrics");
  return render({groups, head}, body);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_num(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string{}; }

}  // namespace

std::string render_csv(const std::vector<MetricsReport>& reports) {
  std::string out =
      "dataset,model,strategy,mape,pe_std,coverage_pct,mpiw,n_total,n_valid_price,n_valid_interval,n_valid_features,"
      "n_failed,n_flagged_interval,n_reprompts,top_features\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.dataset), csv_field(r.model),
                       csv_field(r.strategy), csv_num(r.mape), csv_num(r.pe_std), csv_num(r.coverage_pct),
                       csv_num(r.mpiw), r.n_total, r.n_valid_price, r.n_valid_interval, r.n_valid_features, r.n_failed,
                       r.n_flagged_interval, r.n_reprompts, csv_field(fmt::format("{}", fmt::join(r.top_features, ";"))));
  }
  return out;
}

void ensure_writable(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("output directory {} cannot be created: {}", dir.string(), ec.message()));
  const auto probe = dir / ".write-probe";
  {
    std::ofstream out(probe, std::ios::trunc);
    if (!out || !(out << "ok")) throw Error(fmt::format("output directory {} is not writable", dir.string()));
  }
  std::filesystem::remove(probe, ec);
}

std::string slug(const std::string& s) {
  std::string out;
  for (const char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "none" : out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace

std::vector<std::filesystem::path> emit(const std::vector<MetricsReport>& reports, const std::filesystem::path& dir,
                                        const std::vector<EmitFormat>& formats) {
  if (reports.empty()) throw DataError("emit: no reports");
  ensure_writable(dir);
  std::vector<std::filesystem::path> written;
  const auto wants = [&](EmitFormat f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  if (wants(EmitFormat::Structured)) {
    json all = json::array();
    for (const auto& r : reports) {
      const auto path = dir / fmt::format("{}__{}__{}.json", slug(r.dataset), slug(r.model), slug(r.strategy));
      write_text(path, to_json(r).dump(2) + '\n');
      written.push_back(path);
      all.push_back(to_json(r));
    }
    write_text(dir / "reports.json", all.dump(2) + '\n');
    written.push_back(dir / "reports.json");
  }
  if (wants(EmitFormat::Delimited)) {
    write_text(dir / "summary.csv", render_csv(reports));
    written.push_back(dir / "summary.csv");
  }
  if (wants(EmitFormat::Human)) {
    write_text(dir / "table2.txt", render_table2(reports));
    written.push_back(dir / "table2.txt");
    if (std::any_of(reports.begin(), reports.end(), [](const MetricsReport& r) { return r.coverage_pct.has_value(); })) {
      write_text(dir / "table3.txt", render_table3(reports));
      written.push_back(dir / "table3.txt");
    }
  }
  return written;
}

std::vector<MetricsReport> load_reports(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read reports file {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  std::vector<MetricsReport> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(report_from_json(e));
  } else {
    out.push_back(report_from_json(j));
  }
  return out;
}

}  // namespace appraisal
