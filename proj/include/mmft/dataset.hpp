#pragma once

#include "mmft/textpipe.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmft {

/// Problem found on one line of a JSON-lines dataset.
struct LineDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestResult {
  std::vector<QAExample> examples;
  std::vector<LineDiagnostic> diagnostics;
};

struct IngestOptions {
  /// Throw FormatError on the first malformed line instead of skipping it.
  bool fail_fast = false;
};

/// Parses one dataset record:
///   {qid, q, a0..a4, answer_idx, ts: [start, end] | null, vcpt: [str],
///    sub: [{speaker, text, start, end}], vcpt_ts?: [num]}
/// Duplicate visual concepts collapse to their first occurrence.
QAExample parse_example(const std::string& json_line);
std::string emit_example(const QAExample& ex);

IngestResult ingest_tvqa(std::istream& in, const IngestOptions& opts = {});
IngestResult ingest_tvqa(const std::filesystem::path& path, const IngestOptions& opts = {});

void write_jsonl(std::ostream& out, const std::vector<QAExample>& examples);
void write_jsonl(const std::filesystem::path& path, const std::vector<QAExample>& examples);

}  // namespace mmft
