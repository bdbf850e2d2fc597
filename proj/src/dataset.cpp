#include "mmft/dataset.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace mmft {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double number_field(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

QAExample parse_example(const std::string& json_line) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw FormatError("record is not a JSON object");

  QAExample ex;
  const json& qid = require(obj, "qid");
  if (qid.is_string()) ex.qid = qid.get<std::string>();
  else if (qid.is_number_integer()) ex.qid = std::to_string(qid.get<long long>());
  else throw FormatError("field 'qid' must be a string or integer");

  ex.question = string_field(obj, "q");
  for (int j = 0; j < kNumAnswers; ++j) {
    const std::string key = "a" + std::to_string(j);
    ex.answers[static_cast<std::size_t>(j)] = string_field(obj, key.c_str());
  }
  const json& label = require(obj, "answer_idx");
  if (!label.is_number_integer()) throw FormatError("field 'answer_idx' must be an integer");
  ex.label = label.get<int>();

  const json& ts = require(obj, "ts");
  if (!ts.is_null()) {
    if (!ts.is_array() || ts.size() != 2 || !ts[0].is_number() || !ts[1].is_number()) {
      throw FormatError("field 'ts' must be [start, end] or null");
    }
    ex.ts = std::make_pair(ts[0].get<double>(), ts[1].get<double>());
  }

  const json& vcpt = require(obj, "vcpt");
  if (!vcpt.is_array()) throw FormatError("field 'vcpt' must be an array");
  std::vector<double> times;
  if (auto it = obj.find("vcpt_ts"); it != obj.end()) {
    if (!it->is_array() || it->size() != vcpt.size()) throw FormatError("field 'vcpt_ts' must parallel 'vcpt'");
    for (const auto& t : *it) {
      if (!t.is_number()) throw FormatError("field 'vcpt_ts' must hold numbers");
      times.push_back(t.get<double>());
    }
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < vcpt.size(); ++i) {
    if (!vcpt[i].is_string()) throw FormatError("field 'vcpt' must hold strings");
    auto c = vcpt[i].get<std::string>();
    if (!seen.insert(c).second) continue;
    ex.vcpt.push_back(std::move(c));
    if (!times.empty()) ex.vcpt_ts.push_back(times[i]);
  }

  const json& sub = require(obj, "sub");
  if (!sub.is_array()) throw FormatError("field 'sub' must be an array");
  for (const auto& u : sub) {
    if (!u.is_object()) throw FormatError("subtitle entries must be objects");
    ex.sub.push_back({string_field(u, "speaker"), string_field(u, "text"), number_field(u, "start"),
                      number_field(u, "end")});
  }
  ex.validate();
  return ex;
}

std::string emit_example(const QAExample& ex) {
  json obj;
  obj["qid"] = ex.qid;
  obj["q"] = ex.question;
  for (int j = 0; j < kNumAnswers; ++j) obj["a" + std::to_string(j)] = ex.answers[static_cast<std::size_t>(j)];
  obj["answer_idx"] = ex.label;
  obj["ts"] = ex.ts ? json::array({ex.ts->first, ex.ts->second}) : json(nullptr);
  obj["vcpt"] = ex.vcpt;
  if (!ex.vcpt_ts.empty()) obj["vcpt_ts"] = ex.vcpt_ts;
  json sub = json::array();
  for (const auto& u : ex.sub) {
    sub.push_back({{"speaker", u.speaker}, {"text", u.text}, {"start", u.start}, {"end", u.end}});
  }
  obj["sub"] = std::move(sub);
  return obj.dump();
}

IngestResult ingest_tvqa(std::istream& in, const IngestOptions& opts) {
  IngestResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.examples.push_back(parse_example(line));
    } catch (const std::exception& e) {
      if (opts.fail_fast) throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
      result.diagnostics.push_back({lineno, e.what()});
    }
  }
  return result;
}

IngestResult ingest_tvqa(const std::filesystem::path& path, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  return ingest_tvqa(in, opts);
}

void write_jsonl(std::ostream& out, const std::vector<QAExample>& examples) {
  for (const auto& ex : examples) out << emit_example(ex) << '\n';
}

void write_jsonl(const std::filesystem::path& path, const std::vector<QAExample>& examples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path.string());
  write_jsonl(out, examples);
}

}  // namespace mmft
