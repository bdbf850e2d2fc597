#include "mmft/harness.hpp"

#include "mmft/adam.hpp"
#include "mmft/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#ifndef MMFT_VERSION
#define MMFT_VERSION "0.0.0"
#endif
#ifndef MMFT_GIT_REV
#define MMFT_GIT_REV "unknown"
#endif

namespace mmft {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return "fnv1a64:" + hex64(h);
}

std::string hash_examples(const std::vector<QAExample>& examples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& ex : examples) {
    h = fnv1a64(emit_example(ex), h);
    h = fnv1a64("\n", h);
  }
  return "fnv1a64:" + hex64(h);
}

std::string artifact_version() { return std::string("mmft ") + MMFT_VERSION + "+" + MMFT_GIT_REV; }

// ---------------------------------------------------------------------------

Predictions predict_all(const MmftBert& model, const std::vector<QAExample>& examples) {
  Predictions out;
  out.joint.reserve(examples.size());
  for (const auto& ex : examples) {
    auto p = model.predict_example(ex);
    out.joint.push_back(p.joint);
    for (const auto& [s, j] : p.stream) out.streams[s].push_back(j);
  }
  return out;
}

EvalReport build_report(const std::vector<QAExample>& examples, const Predictions& preds,
                        const std::map<std::string, DiagnosticTag>& tags) {
  if (preds.joint.size() != examples.size()) throw std::invalid_argument("predictions and examples differ in count");
  EvalReport r;
  r.predictions = preds.joint;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const bool hit = preds.joint[i] == ex.label;
    r.overall.add(hit);
    r.by_family[question_family(ex.question)].add(hit);
    auto tag = tags.find(ex.qid);
    if (tag == tags.end()) {
      ++r.untagged;
      r.by_modality["untagged"].add(hit);
    } else {
      const std::string m(to_string(tag->second.required));
      r.by_modality[m].add(hit);
      if (tag->second.clean) {
        r.by_modality_clean[m].add(hit);
        r.clean.add(hit);
      }
    }
    for (const auto& [s, p] : preds.streams) r.stream_heads[std::string(to_string(s))].add(p[i] == ex.label);
  }
  return r;
}

EvalReport evaluate(const MmftBert& model, const std::vector<QAExample>& examples,
                    const std::map<std::string, DiagnosticTag>& tags) {
  return build_report(examples, predict_all(model, examples), tags);
}

double EvalReport::recombination_error(const std::map<std::string, Cell>& axis) const {
  if (overall.n == 0) return 0.0;
  double weighted = 0;
  for (const auto& [k, c] : axis) weighted += static_cast<double>(c.n) * c.accuracy();
  return std::abs(weighted / static_cast<double>(overall.n) - overall.accuracy());
}

// ---------------------------------------------------------------------------

Split split_corpus(const std::vector<QAExample>& corpus, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(corpus.size())));
  Split s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i + n_val < order.size() ? s.train : s.val).push_back(corpus[order[i]]);
  }
  return s;
}

LossBundle mean_loss(const MmftBert& model, const std::vector<QAExample>& examples) {
  LossBundle m;
  for (const auto& ex : examples) {
    Tape tape;
    tape.set_grad_enabled(false);
    const auto v = model.forward(tape, ex, true).loss->values;
    m.q += v.q;
    m.vid += v.vid;
    m.sub += v.sub;
    m.joint += v.joint;
    m.total += v.total;
  }
  const double n = examples.empty() ? 1.0 : static_cast<double>(examples.size());
  m.q /= n;
  m.vid /= n;
  m.sub /= n;
  m.joint /= n;
  m.total /= n;
  return m;
}

namespace {

bool all_finite(const ParameterStore& params) {
  for (const auto& p : params) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainResult train(const RunConfig& cfg, const std::vector<QAExample>& corpus, const TrainOptions& opts) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.split = split_corpus(corpus, cfg.train.val_fraction, cfg.seed);
  if (result.split.train.empty()) throw std::invalid_argument("train: the training split is empty");
  Vocabulary vocab = build_vocab(result.split.train, cfg.train.min_count, cfg.train.max_vocab);
  result.model = std::make_unique<MmftBert>(cfg.model, std::move(vocab), cfg.seed);
  MmftBert& model = *result.model;

  RunManifest& man = result.manifest;
  man.command = "train";
  man.config = to_json(cfg);
  man.config["model"] = to_json(model.config());
  man.seed = cfg.seed;
  man.dataset_hashes["corpus"] = hash_examples(corpus);
  man.dataset_hashes["train_split"] = hash_examples(result.split.train);
  man.dataset_hashes["val_split"] = hash_examples(result.split.val);
  man.artifact_version = artifact_version();
  man.extra["best_epoch_selection"] = "validation joint accuracy, ties to the earlier epoch";
  man.extra["weight_decay"] = "decoupled";
  man.extra["vocab_size"] = model.vocab().size();
  man.extra["train_examples"] = result.split.train.size();
  man.extra["val_examples"] = result.split.val.size();

  Adam adam(model.params(), cfg.train.adam);
  std::mt19937_64 order_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x14057b7ef767814fULL);
  std::mt19937_64 answer_rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);
  const ForwardContext ctx{true, &dropout_rng};

  std::vector<std::size_t> order(result.split.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> best = model.params().snapshot();
  double best_val = -1;
  const auto batch = static_cast<std::size_t>(cfg.train.batch_size);
  const std::size_t steps_per_epoch = (order.size() + batch - 1) / batch;
  const std::size_t total_steps = opts.max_steps > 0 ? std::min(opts.max_steps, steps_per_epoch * cfg.train.epochs)
                                                     : steps_per_epoch * static_cast<std::size_t>(cfg.train.epochs);
  bool stop = false;

  for (int epoch = 1; epoch <= cfg.train.epochs && !stop; ++epoch) {
    const auto te = std::chrono::steady_clock::now();
    if (cfg.train.shuffle) std::shuffle(order.begin(), order.end(), order_rng);
    EpochMetrics em;
    em.epoch = epoch;
    Cell train_acc;
    for (std::size_t b = 0; b < order.size() && !stop; b += batch) {
      const std::size_t end = std::min(order.size(), b + batch);
      try {
        Tape tape;
        std::vector<Var> losses;
        std::deque<QAExample> permuted;
        for (std::size_t i = b; i < end; ++i) {
          const QAExample& ex = cfg.train.permute_answers
                                    ? permuted.emplace_back(permute_answers(result.split.train[order[i]], answer_rng))
                                    : result.split.train[order[i]];
          ExampleForward f = model.forward(tape, ex, true, ctx);
          losses.push_back(f.loss->total);
          const auto& v = f.loss->values;
          em.train_terms.q += v.q;
          em.train_terms.vid += v.vid;
          em.train_terms.sub += v.sub;
          em.train_terms.joint += v.joint;
          em.train_terms.total += v.total;
          train_acc.add(predict(f.joint.logits.value()) == ex.label);
        }
        Var mean = scale(losses.size() == 1 ? losses.front() : add_n(losses), 1.0 / static_cast<double>(losses.size()));
        tape.backward(mean);
        tape.accumulate_parameter_grads(model.params());
        adam.set_lr(cfg.train.lr_at(result.steps, total_steps));
        adam.step(model.params());
        if (!all_finite(model.params())) throw NumericError("non-finite parameter after the optimizer step");
        result.step_losses.push_back(mean.scalar());
      } catch (const NumericError& e) {
        model.params().restore(best);
        model.params().zero_grad();
        man.status = "diverged";
        man.message = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                      std::to_string(result.steps + 1) + "); parameters restored to the last good state";
        man.wall_clock_seconds = seconds_since(t0);
        return result;
      }
      ++result.steps;
      if (opts.max_steps > 0 && result.steps >= opts.max_steps) stop = true;
    }
    const double n = static_cast<double>(std::max<std::size_t>(train_acc.n, 1));
    em.train_terms.q /= n;
    em.train_terms.vid /= n;
    em.train_terms.sub /= n;
    em.train_terms.joint /= n;
    em.train_terms.total /= n;
    em.train_loss = em.train_terms.total;
    em.train_accuracy = train_acc.accuracy();

    if (opts.validate && !result.split.val.empty()) {
      EvalReport r = evaluate(model, result.split.val);
      em.val_accuracy = r.accuracy();
      for (const auto& [k, c] : r.stream_heads) em.val_stream_accuracy[k] = c.accuracy();
      if (em.val_accuracy > best_val) {
        best_val = em.val_accuracy;
        best = model.params().snapshot();
        man.best_epoch = epoch;
        man.best_val_accuracy = em.val_accuracy;
      }
    } else {
      best = model.params().snapshot();
      man.best_epoch = epoch;
    }
    em.seconds = seconds_since(te);
    man.epochs.push_back(em);
    if (opts.on_epoch && !opts.on_epoch(em)) stop = true;
  }
  model.params().restore(best);
  man.extra["steps"] = result.steps;
  man.wall_clock_seconds = seconds_since(t0);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<AblationCell> default_ablation_grid() {
  return {
      {"MMFT-BERT single loss", {"model.objective.single_loss=true"}},
      {"MMFT-BERT full objective", {}},
      {"MMFT-BERT L=1 H=1", {"model.mmft.n_heads=1"}},
      {"MMFT-BERT L=2 H=4", {"model.mmft.n_layers=2"}},
      {"MMFT-BERT L=2 H=4 w/ skip", {"model.mmft.n_layers=2", "model.mmft.use_skip=true"}},
      {"SF", {"model.fusion=sf"}},
  };
}

const AblationRow* AblationTable::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

AblationTable ablate(const json& base_config, const std::vector<AblationCell>& grid,
                     const std::vector<QAExample>& corpus, const AblationOptions& opts) {
  if (grid.empty()) throw std::invalid_argument("ablate: empty grid");
  if (opts.seeds.empty()) throw std::invalid_argument("ablate: no seeds");
  AblationTable table;
  table.seeds = opts.seeds;
  for (const auto& cell : grid) {
    AblationRow row;
    row.name = cell.name;
    row.overrides = cell.overrides;
    row.accuracies.assign(opts.seeds.size(), 0.0);
    table.rows.push_back(row);
  }

  struct Job {
    std::size_t row, seed_index;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t s = 0; s < opts.seeds.size(); ++s) jobs.push_back({r, s});
  }
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      Job job;
      {
        std::lock_guard lock(mu);
        if (next >= jobs.size()) return;
        job = jobs[next++];
        if (table.rows[job.row].failed) continue;
      }
      const std::uint64_t seed = opts.seeds[job.seed_index];
      try {
        json cfg = base_config;
        for (const auto& o : grid[job.row].overrides) apply_override(cfg, o);
        cfg["seed"] = seed;
        RunConfig rc = run_config_from_json(cfg);
        if (rc.train.val_fraction <= 0) throw ConfigError("ablation needs a validation split");
        TrainResult res = train(rc, corpus);
        if (res.diverged()) throw NumericError(res.manifest.message);
        std::lock_guard lock(mu);
        table.rows[job.row].accuracies[job.seed_index] = res.manifest.best_val_accuracy;
        if (opts.on_run) opts.on_run(grid[job.row].name, seed, res);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        table.rows[job.row].failed = true;
        table.rows[job.row].error = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(opts.jobs, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& row : table.rows) {
    if (row.failed) continue;
    const double n = static_cast<double>(row.accuracies.size());
    row.mean = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
    double ss = 0;
    for (double a : row.accuracies) ss += (a - row.mean) * (a - row.mean);
    row.sd = row.accuracies.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  return table;
}

// ---------------------------------------------------------------------------

QAExample permute_answers(const QAExample& ex, std::mt19937_64& rng) {
  std::array<int, kNumAnswers> perm{};
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  QAExample out = ex;
  for (int j = 0; j < kNumAnswers; ++j) {
    out.answers[static_cast<std::size_t>(j)] = ex.answers[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    if (perm[static_cast<std::size_t>(j)] == ex.label) out.label = j;
  }
  return out;
}

QAExample permute_visual_tokens(const QAExample& ex, std::mt19937_64& rng) {
  QAExample out = ex;
  std::vector<std::string> tokens;
  std::vector<double> times;
  for (std::size_t i = 0; i < ex.vcpt.size(); ++i) {
    for (auto& t : tokenize(ex.vcpt[i])) {
      tokens.push_back(std::move(t));
      if (!ex.vcpt_ts.empty()) times.push_back(ex.vcpt_ts[i]);
    }
  }
  std::vector<std::size_t> perm(tokens.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  out.vcpt.clear();
  out.vcpt_ts.clear();
  for (std::size_t p : perm) {
    out.vcpt.push_back(tokens[p]);
    if (!times.empty()) out.vcpt_ts.push_back(times[p]);
  }
  return out;
}

namespace {

std::unique_ptr<MmftBert> clone(const MmftBert& model) {
  auto c = std::make_unique<MmftBert>(model.config(), model.vocab(), model.seed());
  c->params().restore(model.params().snapshot());
  return c;
}

}  // namespace

ShuffleResult shuffle_experiment(const MmftBert& model, const std::vector<QAExample>& examples,
                                 std::uint64_t permutation_seed) {
  if (!model.config().has_stream(Stream::V)) throw ConfigError("shuffle experiment needs a model with a V stream");
  ShuffleResult r;
  r.permutation_seed = permutation_seed;
  r.v_uses_positional = model.encoder(Stream::V).config().use_positional;

  std::mt19937_64 rng(permutation_seed);
  std::vector<QAExample> shuffled;
  shuffled.reserve(examples.size());
  for (const auto& ex : examples) shuffled.push_back(permute_visual_tokens(ex, rng));

  const auto original = predict_all(model, examples).joint;
  const auto permuted = predict_all(model, shuffled).joint;
  auto model_zero = clone(model);
  model_zero->params().at("encoder.v.emb.position").value.setZero();
  const auto zeroed = predict_all(*model_zero, examples).joint;

  Cell a, b, z;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    a.add(original[i] == examples[i].label);
    b.add(permuted[i] == examples[i].label);
    z.add(zeroed[i] == examples[i].label);
    r.changed_predictions += original[i] != permuted[i];
  }
  r.original_accuracy = a.accuracy();
  r.shuffled_accuracy = b.accuracy();
  r.gap = r.original_accuracy - r.shuffled_accuracy;
  r.zeroed_position_accuracy = z.accuracy();
  r.zeroed_gap = r.original_accuracy - r.zeroed_position_accuracy;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows == 0 ? Index{0} : static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j.at(static_cast<std::size_t>(i)).size()) != cols) throw FormatError("ragged matrix");
    for (Index c = 0; c < cols; ++c) m(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

}  // namespace

json to_json(const AttentionExport& e) {
  json per_head = json::array();
  for (const auto& h : e.per_head) per_head.push_back(matrix_json(h));
  return {{"qid", e.qid},       {"answer_index", e.answer_index},         {"layer", e.layer},
          {"labels", e.labels}, {"head_average", matrix_json(e.head_average)}, {"per_head", per_head}};
}

AttentionExport attention_export_from_json(const json& j) {
  AttentionExport e;
  e.qid = j.at("qid").get<std::string>();
  e.answer_index = j.at("answer_index").get<int>();
  e.layer = j.at("layer").get<int>();
  e.labels = j.at("labels").get<std::vector<std::string>>();
  e.head_average = matrix_from_json(j.at("head_average"));
  for (const auto& h : j.at("per_head")) e.per_head.push_back(matrix_from_json(h));
  return e;
}

void write_pgm(const std::filesystem::path& path, const Matrix& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << weights.cols() << " " << weights.rows() << "\n255\n";
  for (Index i = 0; i < weights.rows(); ++i) {
    for (Index j = 0; j < weights.cols(); ++j) {
      const double v = std::clamp(weights(i, j), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

Matrix read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 255 || w < 0 || h < 0) throw FormatError("not an 8-bit P5 image: " + path.string());
  in.get();
  Matrix m(h, w);
  for (Index i = 0; i < m.size(); ++i) {
    const int c = in.get();
    if (c == EOF) throw FormatError("truncated image: " + path.string());
    m.data()[i] = c / 255.0;
  }
  return m;
}

AttributionReport attention_report(const MmftBert& model, const std::vector<QAExample>& examples,
                                   const std::map<std::string, DiagnosticTag>& tags,
                                   const AttentionReportOptions& opts) {
  if (model.mmft() == nullptr) throw ConfigError("attention report needs a model with MMFT fusion");
  if (!opts.export_dir.empty()) std::filesystem::create_directories(opts.export_dir);
  AttributionReport report;
  for (const auto& ex : examples) {
    Tape tape;
    tape.set_grad_enabled(false);
    ExampleForward f = model.forward(tape, ex, false);
    const bool correct = predict(f.joint.logits.value()) == ex.label;
    const FusionAttentionRecord& rec = f.attention.at(static_cast<std::size_t>(ex.label));
    const Matrix& last = rec.head_average.back();

    QuestionAttribution q;
    q.qid = ex.qid;
    q.correct = correct;
    double best = -1;
    for (std::size_t c = 1; c < rec.labels.size(); ++c) {
      const double w = last(0, static_cast<Index>(c));
      q.fuse_row[rec.labels[c]] = w;
      if (w > best) {
        best = w;
        q.top_modality = rec.labels[c];
      }
    }
    auto tag = tags.find(ex.qid);
    if (tag != tags.end()) {
      q.required = tag->second.required;
      q.clean = tag->second.clean;
      if (correct && q.clean && q.required != RequiredModality::Both) {
        const std::string want(to_string(q.required));
        const bool hit = q.top_modality == want;
        ++report.eligible;
        report.attributed += hit ? 1 : 0;
        report.by_modality[want].add(hit);
      }
    }
    report.questions.push_back(q);

    if (!opts.export_dir.empty() && report.exported < opts.max_exports) {
      json records = json::array();
      for (const auto& r : f.attention) {
        for (std::size_t l = 0; l < r.head_average.size(); ++l) {
          records.push_back(to_json(AttentionExport{ex.qid, r.answer_index, static_cast<int>(l) + 1, r.labels,
                                                    r.head_average[l], r.per_head[l]}));
        }
        if (opts.pgm) {
          write_pgm(opts.export_dir / (safe_name(ex.qid) + "_a" + std::to_string(r.answer_index) + ".pgm"),
                    r.head_average.back());
        }
      }
      std::ofstream out(opts.export_dir / (safe_name(ex.qid) + ".json"));
      out << records.dump() << '\n';
      ++report.exported;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

EnsembleReport ensemble_eval(const std::vector<const MmftBert*>& members, const std::vector<QAExample>& examples,
                             const std::map<std::string, DiagnosticTag>& tags) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  const json shape = to_json(members.front()->config());
  for (const auto* m : members) {
    if (to_json(m->config()) != shape || !(m->vocab() == members.front()->vocab())) {
      throw ConfigError("ensemble members differ in configuration or vocabulary");
    }
  }
  EnsembleReport r;
  Predictions combined;
  std::vector<Cell> member_cells(members.size());
  for (const auto& ex : examples) {
    Matrix probs = Matrix::Zero(1, kNumAnswers);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const Matrix logits = members[k]->joint_logits(ex);
      member_cells[k].add(predict(logits) == ex.label);
      probs += softmax_rows(logits);
    }
    probs /= static_cast<double>(members.size());
    combined.joint.push_back(predict(probs));
  }
  r.ensemble = build_report(examples, combined, tags);
  for (const auto& c : member_cells) r.member_accuracies.push_back(c.accuracy());
  r.best_member = *std::max_element(r.member_accuracies.begin(), r.member_accuracies.end());
  r.mean_member = std::accumulate(r.member_accuracies.begin(), r.member_accuracies.end(), 0.0) /
                  static_cast<double>(r.member_accuracies.size());
  return r;
}

// ---------------------------------------------------------------------------

ModelGradcheckResult model_gradcheck(const ModelGradcheckOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.n_examples = 50;
  spec.seed = opts.seed;
  const SynthCorpus corpus = generate(spec);

  ModelConfig cfg = toy_model_config();
  cfg.encoder.d_model = cfg.mmft.d_model = opts.d_model;
  cfg.encoder.n_heads = opts.n_heads;
  cfg.encoder.n_layers = opts.n_layers;
  cfg.encoder.d_ff = opts.d_ff;
  cfg.encoder.max_seq_len = opts.max_seq_len;
  cfg.mmft.n_heads = opts.n_heads;
  cfg.mmft.n_layers = opts.mmft_layers;
  cfg.mmft.d_ff = opts.d_ff;
  cfg.fusion = opts.fusion;
  cfg.objective.single_loss = opts.single_loss;

  MmftBert model(cfg, build_vocab(corpus.examples, 1, opts.vocab), opts.seed);
  const QAExample& ex = corpus.examples.front();
  ModelGradcheckResult r;
  r.report = check_parameter_gradients(
      model.params(), [&](Tape& t) { return model.forward(t, ex).loss->total; }, opts.fd);
  r.config = mmft::to_json(model.config());
  r.vocab_size = model.vocab().size();
  r.qid = ex.qid;
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace mmft
