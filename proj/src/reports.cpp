#include "mmft/reports.hpp"

#include "mmft/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mmft {

using nlohmann::json;

TextTable::TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }

void TextTable::add_row(std::vector<std::string> row) {
  if (row.size() != rows_.front().size()) throw std::invalid_argument("table row width mismatch");
  rows_.push_back(std::move(row));
}

std::string TextTable::str() const {
  std::vector<std::size_t> width(rows_.front().size(), 0);
  for (const auto& r : rows_) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      if (c > 0) out << "  ";
      out << (c == 0 ? r[c] + pad : pad + r[c]);
    }
    out << '\n';
  };
  emit(rows_.front());
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (std::size_t i = 1; i < rows_.size(); ++i) emit(rows_[i]);
  return out.str();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(double fraction, int digits) { return fixed(100.0 * fraction, digits); }

namespace {

json cell_json(const Cell& c) { return {{"n", c.n}, {"correct", c.correct}, {"accuracy", c.accuracy()}}; }

json cells_json(const std::map<std::string, Cell>& cells) {
  json j = json::object();
  for (const auto& [k, c] : cells) j[k] = cell_json(c);
  return j;
}

json loss_json(const LossBundle& l) {
  return {{"q", l.q}, {"vid", l.vid}, {"sub", l.sub}, {"joint", l.joint}, {"total", l.total}};
}

json epoch_json(const EpochMetrics& e, bool with_time) {
  json j = {{"epoch", e.epoch},
            {"train_loss", e.train_loss},
            {"train_terms", loss_json(e.train_terms)},
            {"train_accuracy", e.train_accuracy},
            {"val_accuracy", e.val_accuracy},
            {"val_stream_accuracy", e.val_stream_accuracy}};
  if (with_time) j["seconds"] = e.seconds;
  return j;
}

}  // namespace

json EvalReport::to_json() const {
  return {{"accuracy", accuracy()},
          {"overall", cell_json(overall)},
          {"by_family", cells_json(by_family)},
          {"by_modality", cells_json(by_modality)},
          {"by_modality_clean", cells_json(by_modality_clean)},
          {"clean", cell_json(clean)},
          {"untagged", untagged},
          {"stream_heads", cells_json(stream_heads)},
          {"predictions", predictions}};
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "overall accuracy " << percent(accuracy()) << "% (" << overall.correct << "/" << overall.n << ")\n\n";
  TextTable fam({"family", "n", "acc %"});
  for (const auto& [k, c] : by_family) fam.add_row({k, std::to_string(c.n), percent(c.accuracy())});
  out << fam.str() << '\n';
  TextTable mod({"modality", "n", "acc %", "clean n", "clean acc %"});
  for (const auto& [k, c] : by_modality) {
    auto cl = by_modality_clean.find(k);
    const Cell clean_cell = cl == by_modality_clean.end() ? Cell{} : cl->second;
    mod.add_row({k, std::to_string(c.n), percent(c.accuracy()), std::to_string(clean_cell.n),
                 clean_cell.n ? percent(clean_cell.accuracy()) : "-"});
  }
  out << mod.str();
  if (!stream_heads.empty()) {
    out << '\n';
    TextTable heads({"head", "n", "acc %"});
    for (const auto& [k, c] : stream_heads) heads.add_row({k, std::to_string(c.n), percent(c.accuracy())});
    out << heads.str();
  }
  return out.str();
}

json RunManifest::metrics_json() const {
  json ep = json::array();
  for (const auto& e : epochs) ep.push_back(epoch_json(e, false));
  return {{"command", command},
          {"seed", seed},
          {"status", status},
          {"best_epoch", best_epoch},
          {"best_val_accuracy", best_val_accuracy},
          {"epochs", ep}};
}

json RunManifest::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs) ep.push_back(epoch_json(e, true));
  return {{"command", command},
          {"config", config},
          {"seed", seed},
          {"dataset_hashes", dataset_hashes},
          {"artifact_version", artifact_version},
          {"epochs", ep},
          {"best_epoch", best_epoch},
          {"best_val_accuracy", best_val_accuracy},
          {"status", status},
          {"message", message},
          {"wall_clock_seconds", wall_clock_seconds},
          {"extra", extra}};
}

json AblationTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    json row = {{"name", r.name}, {"overrides", r.overrides}, {"failed", r.failed}};
    if (r.failed) {
      row["error"] = r.error;
    } else {
      row["accuracies"] = r.accuracies;
      row["mean"] = r.mean;
      row["sd"] = r.sd;
    }
    rs.push_back(row);
  }
  return {{"seeds", seeds}, {"rows", rs}};
}

std::string AblationTable::to_table() const {
  std::vector<std::string> header{"model"};
  for (auto s : seeds) header.push_back("seed " + std::to_string(s));
  header.push_back("mean %");
  header.push_back("sd");
  TextTable t(header);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.name};
    for (std::size_t i = 0; i < seeds.size(); ++i) row.push_back(r.failed ? "failed" : percent(r.accuracies[i]));
    row.push_back(r.failed ? "-" : percent(r.mean));
    row.push_back(r.failed ? "-" : percent(r.sd));
    t.add_row(row);
  }
  std::string out = t.str();
  for (const auto& r : rows) {
    if (r.failed) out += r.name + ": " + r.error + "\n";
  }
  return out;
}

json ShuffleResult::to_json() const {
  return {{"original_accuracy", original_accuracy},
          {"shuffled_accuracy", shuffled_accuracy},
          {"gap", gap},
          {"zeroed_position_accuracy", zeroed_position_accuracy},
          {"zeroed_gap", zeroed_gap},
          {"permutation_seed", permutation_seed},
          {"v_uses_positional", v_uses_positional},
          {"changed_predictions", changed_predictions}};
}

json AttributionReport::to_json() const {
  json qs = json::array();
  for (const auto& q : questions) {
    qs.push_back({{"qid", q.qid},
                  {"required", std::string(to_string(q.required))},
                  {"clean", q.clean},
                  {"correct", q.correct},
                  {"fuse_row", q.fuse_row},
                  {"top_modality", q.top_modality}});
  }
  return {{"eligible", eligible},
          {"attributed", attributed},
          {"fraction", fraction()},
          {"by_modality", cells_json(by_modality)},
          {"exported", exported},
          {"questions", qs}};
}

json EnsembleReport::to_json() const {
  return {{"ensemble", ensemble.to_json()},
          {"member_accuracies", member_accuracies},
          {"best_member", best_member},
          {"mean_member", mean_member}};
}

json ModelGradcheckResult::to_json() const {
  json params = json::array();
  for (const auto& p : report.per_parameter) {
    params.push_back({{"name", p.name},
                      {"worst_element", p.worst_element},
                      {"analytic", p.analytic},
                      {"numeric", p.numeric},
                      {"max_rel_error", p.max_rel_error}});
  }
  return {{"max_rel_error", report.max_rel_error},
          {"worst_parameter", report.worst_parameter},
          {"elements_checked", report.elements_checked},
          {"loss", report.loss},
          {"vocab_size", vocab_size},
          {"qid", qid},
          {"config", config},
          {"parameters", params}};
}

}  // namespace mmft
