#include "mmft/checkpoint.hpp"
#include "mmft/config.hpp"
#include "mmft/dataset.hpp"
#include "mmft/errors.hpp"
#include "mmft/harness.hpp"
#include "mmft/synthdata.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace mmft;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what, std::string usage = "")
      : std::invalid_argument(what), usage_(std::move(usage)) {}
  const std::string& usage() const { return usage_; }

 private:
  std::string usage_;
};

// Options shared by the subcommands that resolve a run configuration.
struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string streams;
  std::string fusion;
  std::string localized;
  bool single_loss = false;
  std::string data;
  std::string tags;
};

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else {
      out.emplace_back(key, v.dump());
    }
  }
}

std::string config_key_footer() {
  std::vector<std::pair<std::string, std::string>> keys;
  flatten(to_json(default_run_config()), "", keys);
  std::ostringstream out;
  out << "Config keys (set with --key=value, --key value or --set key=value; order: defaults, --config file,\n"
         "overrides):\n";
  for (const auto& [k, v] : keys) out << "  --" << k << " [" << v << "]\n";
  return out.str();
}

void add_config_flags(CLI::App* app, CommonOptions& o) {
  const RunConfig d = default_run_config();
  app->add_option("--config", o.config, "JSON config file layered over the built-in defaults")->default_str("none");
  app->add_option("--set", o.sets, "Dotted override key=value, repeatable (e.g. model.mmft.n_layers=2)")
      ->default_str("none");
  app->add_option("--seed", o.seed, "Run seed")->default_str(std::to_string(d.seed));
  app->add_option("--streams", o.streams, "Active streams: comma list of q,v,s or 'single'")
      ->default_str(format_streams(d.model.streams));
  app->add_option("--fusion", o.fusion, "Fusion kind")
      ->check(CLI::IsMember({"sf", "mmft", "gated-i", "gated-ii", "gated-iii"}))
      ->default_str(std::string(to_string(d.model.fusion)));
  app->add_option("--localized", o.localized, "Timestamp-localized inputs")
      ->check(CLI::IsMember({"true", "false"}))
      ->default_str(d.model.localized ? "true" : "false");
  app->add_flag("--single-loss", o.single_loss, "Train with the joint loss term only");
  app->footer(config_key_footer());
  app->allow_extras();
}

void add_out_flag(CLI::App* app, CommonOptions& o) {
  app->add_option("--out", o.out, "Output root")->default_str("$MMFT_OUT_DIR, else ./runs");
}

/// Extras of the form --a.b.c=value or --a.b.c value become dotted overrides.
std::vector<std::string> extra_overrides(const CLI::App* app) {
  std::vector<std::string> out;
  const auto extras = app->remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& e = extras[i];
    if (e.rfind("--", 0) != 0 || e.find('.') == std::string::npos) throw UsageError("unrecognized argument '" + e + "'", app->help());
    const auto key = e.substr(2);
    if (key.find('=') != std::string::npos) {
      out.push_back(key);
    } else if (i + 1 < extras.size()) {
      out.push_back(key + "=" + extras[++i]);
    } else {
      throw UsageError("override " + e + " needs a value", app->help());
    }
  }
  return out;
}

RunConfig resolve(const CLI::App* app, const CommonOptions& o) {
  std::vector<std::string> overrides = o.sets;
  for (auto& e : extra_overrides(app)) overrides.push_back(std::move(e));
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  if (!o.streams.empty()) {
    json list = json::array();
    for (auto s : parse_streams(o.streams)) list.push_back(std::string(to_string(s)));
    overrides.push_back("model.streams=" + list.dump());
  }
  if (!o.fusion.empty()) overrides.push_back("model.fusion=\"" + o.fusion + "\"");
  if (!o.localized.empty()) overrides.push_back("model.localized=" + o.localized);
  if (o.single_loss) overrides.push_back("model.objective.single_loss=true");
  RunConfig cfg = resolve_config(o.config, overrides);
  cfg.validate();
  return cfg;
}

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MMFT_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

fs::path make_run_dir(const std::string& out, const std::string& command, std::uint64_t seed) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const fs::path root = output_root(out);
  const std::string base = std::string(stamp) + "-" + command + "-seed" + std::to_string(seed);
  fs::path dir = root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << s;
}

std::vector<QAExample> load_data(const std::string& path) {
  if (path.empty()) throw UsageError("--data is required");
  if (!fs::exists(path)) throw IoError("data file not found: " + path);
  IngestResult r = ingest_tvqa(fs::path(path));
  for (const auto& d : r.diagnostics) std::cerr << "warning: " << path << ":" << d.line << ": " << d.message << '\n';
  if (r.examples.empty()) throw FormatError("no valid examples in " + path);
  return std::move(r.examples);
}

std::map<std::string, DiagnosticTag> load_tags(const std::string& path, const std::vector<QAExample>& examples) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw IoError("tags file not found: " + path);
  auto tags = index_tags(read_tags(path));
  std::size_t missing = 0;
  for (const auto& ex : examples) missing += tags.count(ex.qid) == 0 ? 1 : 0;
  if (missing > 0) std::cerr << "warning: " << missing << " question(s) have no tag and count as untagged\n";
  return tags;
}

fs::path checkpoint_stem(const std::string& path) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  fs::path p(path);
  if (fs::is_directory(p)) p /= "model";
  const fs::path manifest = checkpoint_manifest_path(p);
  if (!fs::exists(manifest)) throw IoError("checkpoint not found: " + manifest.string());
  return p;
}

RunManifest base_manifest(const std::string& command, std::uint64_t seed, const json& config) {
  RunManifest m;
  m.command = command;
  m.seed = seed;
  m.config = config;
  m.artifact_version = artifact_version();
  return m;
}

void finish(RunManifest& m, const fs::path& dir, std::chrono::steady_clock::time_point t0) {
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(dir / "manifest.json", m.to_json());
  std::cout << "run directory: " << dir.string() << '\n';
}

int run_cli(int argc, char** argv) {
  CLI::App app{"MMFT-BERT desk-scale toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  app.get_formatter()->column_width(44);
  app.option_defaults()->always_capture_default();

  // synth-gen
  CommonOptions sg;
  auto* synth_cmd = app.add_subcommand("synth-gen", "Generate a synthetic corpus and its diagnostic tags");
  add_config_flags(synth_cmd, sg);
  add_out_flag(synth_cmd, sg);

  // train
  CommonOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model; keeps the best-by-validation checkpoint");
  add_config_flags(train_cmd, tr);
  add_out_flag(train_cmd, tr);
  train_cmd->add_option("--data", tr.data, "JSON-lines corpus")->default_str("generated from the synth config");
  train_cmd->add_option("--tags", tr.tags, "Diagnostic tags for the validation report")->default_str("none");

  // eval
  CommonOptions ev;
  std::string ev_ckpt;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with family and modality breakdowns");
  add_out_flag(eval_cmd, ev);
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint stem, .json, .bin or run directory")->required();
  eval_cmd->add_option("--data", ev.data, "JSON-lines corpus")->required();
  eval_cmd->add_option("--tags", ev.tags, "Diagnostic tags (JSON lines)")->default_str("none");

  // ablate
  CommonOptions ab;
  std::vector<std::uint64_t> ab_seeds{1, 2, 3};
  int ab_jobs = 1;
  std::string ab_grid;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train a grid of config deltas over shared seeds");
  add_config_flags(ablate_cmd, ab);
  add_out_flag(ablate_cmd, ab);
  ablate_cmd->add_option("--data", ab.data, "JSON-lines corpus")->default_str("generated from the synth config");
  ablate_cmd->add_option("--seeds", ab_seeds, "Seeds shared by every cell")->delimiter(',');
  ablate_cmd->add_option("--jobs", ab_jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--grid", ab_grid, "JSON file [{name, overrides:[key=value]}]")->default_str("built-in grid");

  // attn-export
  CommonOptions at;
  std::string at_ckpt;
  std::size_t at_max = 50;
  bool at_no_pgm = false;
  auto* attn_cmd = app.add_subcommand("attn-export", "Export fusion attention maps and modality attribution");
  add_out_flag(attn_cmd, at);
  attn_cmd->add_option("--checkpoint", at_ckpt, "Checkpoint of an MMFT-fusion model")->required();
  attn_cmd->add_option("--data", at.data, "JSON-lines corpus")->required();
  attn_cmd->add_option("--tags", at.tags, "Diagnostic tags (JSON lines)")->default_str("none");
  attn_cmd->add_option("--max-exports", at_max, "Questions written as per-question files");
  attn_cmd->add_flag("--no-pgm", at_no_pgm, "Skip the PGM heatmaps");

  // shuffle-test
  CommonOptions sh;
  std::string sh_ckpt;
  std::uint64_t sh_perm = 1;
  auto* shuffle_cmd = app.add_subcommand("shuffle-test", "Accuracy with original vs permuted visual tokens");
  add_out_flag(shuffle_cmd, sh);
  shuffle_cmd->add_option("--checkpoint", sh_ckpt, "Checkpoint of a model with a V stream")->required();
  shuffle_cmd->add_option("--data", sh.data, "JSON-lines corpus")->required();
  shuffle_cmd->add_option("--seed", sh_perm, "Permutation seed");

  // ensemble
  CommonOptions en;
  std::vector<std::string> en_ckpts;
  auto* ens_cmd = app.add_subcommand("ensemble", "Mean-softmax ensemble of checkpoints");
  add_out_flag(ens_cmd, en);
  ens_cmd->add_option("--checkpoint", en_ckpts, "Member checkpoints (repeat, at least two)")->required()->expected(1, -1)->default_str("");
  ens_cmd->add_option("--data", en.data, "JSON-lines corpus")->required();
  ens_cmd->add_option("--tags", en.tags, "Diagnostic tags (JSON lines)")->default_str("none");

  // gradcheck
  CommonOptions gc;
  ModelGradcheckOptions gco;
  double gc_tol = 1e-4;
  std::string gc_fusion = "mmft";
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  add_out_flag(grad_cmd, gc);
  grad_cmd->add_option("--d", gco.d_model, "Hidden size");
  grad_cmd->add_option("--heads", gco.n_heads, "Attention heads");
  grad_cmd->add_option("--layers", gco.n_layers, "Encoder layers");
  grad_cmd->add_option("--ff", gco.d_ff, "Feed-forward width");
  grad_cmd->add_option("--mmft-layers", gco.mmft_layers, "Fusion transformer layers");
  grad_cmd->add_option("--vocab", gco.vocab, "Vocabulary cap");
  grad_cmd->add_option("--seq", gco.max_seq_len, "Max sequence length");
  grad_cmd->add_option("--seed", gco.seed, "Init and corpus seed");
  grad_cmd->add_option("--fusion", gc_fusion, "Fusion kind")->check(CLI::IsMember({"sf", "mmft", "gated-i", "gated-ii", "gated-iii"}));
  grad_cmd->add_flag("--single-loss", gco.single_loss, "Joint loss term only");
  grad_cmd->add_option("--step", gco.fd.step, "Central-difference step");
  grad_cmd->add_option("--floor", gco.fd.floor, "Relative-error denominator floor");
  grad_cmd->add_option("--tol", gc_tol, "Pass threshold on the max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();

  if (*synth_cmd) {
    const RunConfig cfg = resolve(synth_cmd, sg);
    SynthSpec spec = cfg.synth;
    if (sg.seed) spec.seed = cfg.seed;
    const SynthCorpus corpus = generate(spec);
    const fs::path dir = make_run_dir(sg.out, "synth-gen", spec.seed);
    write_jsonl(dir / "data.jsonl", corpus.examples);
    write_tags(dir / "tags.jsonl", corpus.tags);
    RunManifest m = base_manifest("synth-gen", spec.seed, to_json(cfg));
    m.dataset_hashes["data.jsonl"] = hash_file(dir / "data.jsonl");
    m.dataset_hashes["tags.jsonl"] = hash_file(dir / "tags.jsonl");
    m.extra["examples"] = corpus.examples.size();
    std::cout << "wrote " << corpus.examples.size() << " examples to " << (dir / "data.jsonl").string() << '\n';
    finish(m, dir, t0);
    return 0;
  }

  if (*train_cmd) {
    const RunConfig cfg = resolve(train_cmd, tr);
    std::vector<QAExample> corpus;
    std::string source;
    if (tr.data.empty()) {
      SynthSpec spec = cfg.synth;
      spec.seed = cfg.seed;
      corpus = generate(spec).examples;
      source = "synthetic (synth config, run seed)";
    } else {
      corpus = load_data(tr.data);
      source = tr.data;
    }
    const fs::path dir = make_run_dir(tr.out, "train", cfg.seed);
    TrainOptions opts;
    opts.on_epoch = [](const EpochMetrics& e) {
      std::printf("epoch %2d  loss %.4f  train %.2f%%  val %.2f%%  (%.1fs)\n", e.epoch, e.train_loss,
                  100 * e.train_accuracy, 100 * e.val_accuracy, e.seconds);
      std::fflush(stdout);
      return true;
    };
    TrainResult r = train(cfg, corpus, opts);
    r.manifest.extra["data_source"] = source;
    if (!tr.data.empty()) r.manifest.dataset_hashes["data_file"] = hash_file(tr.data);
    save_checkpoint(dir / "model", *r.model,
                    {r.steps, r.manifest.best_epoch, {{"best_val_accuracy", r.manifest.best_val_accuracy}}});
    write_json(dir / "metrics.json", r.manifest.metrics_json());
    if (!r.split.val.empty()) {
      const auto tags = load_tags(tr.tags, r.split.val);
      const EvalReport rep = evaluate(*r.model, r.split.val, tags);
      write_json(dir / "val_report.json", rep.to_json());
      write_text(dir / "val_report.txt", rep.to_table());
    }
    finish(r.manifest, dir, t0);
    if (r.diverged()) {
      std::cerr << "numeric error: training diverged: " << r.manifest.message << '\n';
      return 6;
    }
    std::printf("best epoch %d, validation accuracy %.2f%%\n", r.manifest.best_epoch,
                100 * r.manifest.best_val_accuracy);
    return 0;
  }

  if (*eval_cmd) {
    const auto stem = checkpoint_stem(ev_ckpt);
    const auto examples = load_data(ev.data);
    const auto tags = load_tags(ev.tags, examples);
    const auto ck = load_checkpoint(stem);
    const EvalReport rep = evaluate(*ck.model, examples, tags);
    const fs::path dir = make_run_dir(ev.out, "eval", ck.model->seed());
    write_json(dir / "report.json", rep.to_json());
    write_text(dir / "report.txt", rep.to_table());
    RunManifest m = base_manifest("eval", ck.model->seed(), to_json(ck.model->config()));
    m.dataset_hashes["data"] = hash_file(ev.data);
    if (!ev.tags.empty()) m.dataset_hashes["tags"] = hash_file(ev.tags);
    m.extra["checkpoint"] = fs::absolute(stem).string();
    m.extra["accuracy"] = rep.accuracy();
    std::cout << rep.to_table();
    finish(m, dir, t0);
    return 0;
  }

  if (*ablate_cmd) {
    const RunConfig cfg = resolve(ablate_cmd, ab);
    std::vector<QAExample> corpus;
    if (ab.data.empty()) {
      SynthSpec spec = cfg.synth;
      spec.seed = cfg.seed;
      corpus = generate(spec).examples;
    } else {
      corpus = load_data(ab.data);
    }
    std::vector<AblationCell> grid = default_ablation_grid();
    if (!ab_grid.empty()) {
      std::ifstream in(ab_grid);
      if (!in) throw IoError("cannot open grid file: " + ab_grid);
      json g;
      try {
        g = json::parse(in);
      } catch (const json::exception& e) {
        throw FormatError("grid file " + ab_grid + ": " + e.what());
      }
      grid.clear();
      for (const auto& c : g) {
        grid.push_back({c.at("name").get<std::string>(), c.value("overrides", std::vector<std::string>{})});
      }
    }
    const fs::path dir = make_run_dir(ab.out, "ablate", cfg.seed);
    AblationOptions opts;
    opts.seeds = ab_seeds;
    opts.jobs = ab_jobs;
    json runs = json::array();
    opts.on_run = [&](const std::string& name, std::uint64_t seed, const TrainResult& r) {
      std::printf("%-32s seed %llu  val %.2f%%\n", name.c_str(), static_cast<unsigned long long>(seed),
                  100 * r.manifest.best_val_accuracy);
      std::fflush(stdout);
      runs.push_back({{"cell", name}, {"seed", seed}, {"metrics", r.manifest.metrics_json()}});
    };
    const AblationTable table = ablate(to_json(cfg), grid, corpus, opts);
    write_json(dir / "ablation.json", table.to_json());
    write_text(dir / "ablation.txt", table.to_table());
    RunManifest m = base_manifest("ablate", cfg.seed, to_json(cfg));
    m.dataset_hashes["corpus"] = hash_examples(corpus);
    m.extra["runs"] = runs;
    std::cout << table.to_table();
    finish(m, dir, t0);
    return 0;
  }

  if (*attn_cmd) {
    const auto stem = checkpoint_stem(at_ckpt);
    const auto examples = load_data(at.data);
    const auto tags = load_tags(at.tags, examples);
    const auto ck = load_checkpoint(stem);
    const fs::path dir = make_run_dir(at.out, "attn-export", ck.model->seed());
    AttentionReportOptions opts;
    opts.export_dir = dir / "attention";
    opts.max_exports = at_max;
    opts.pgm = !at_no_pgm;
    const AttributionReport rep = attention_report(*ck.model, examples, tags, opts);
    write_json(dir / "attribution.json", rep.to_json());
    RunManifest m = base_manifest("attn-export", ck.model->seed(), to_json(ck.model->config()));
    m.dataset_hashes["data"] = hash_file(at.data);
    m.extra["checkpoint"] = fs::absolute(stem).string();
    m.extra["attribution_fraction"] = rep.fraction();
    std::printf("attribution to the required modality: %zu/%zu (%.2f%%), %zu question(s) exported\n",
                rep.attributed, rep.eligible, 100 * rep.fraction(), rep.exported);
    finish(m, dir, t0);
    return 0;
  }

  if (*shuffle_cmd) {
    const auto stem = checkpoint_stem(sh_ckpt);
    const auto examples = load_data(sh.data);
    const auto ck = load_checkpoint(stem);
    const ShuffleResult r = shuffle_experiment(*ck.model, examples, sh_perm);
    const fs::path dir = make_run_dir(sh.out, "shuffle-test", sh_perm);
    write_json(dir / "shuffle.json", r.to_json());
    RunManifest m = base_manifest("shuffle-test", sh_perm, to_json(ck.model->config()));
    m.dataset_hashes["data"] = hash_file(sh.data);
    m.extra["checkpoint"] = fs::absolute(stem).string();
    m.extra["permutation_seed"] = sh_perm;
    m.extra["result"] = r.to_json();
    std::printf("original %.2f%%  shuffled %.2f%%  gap %+.2f pp  (zeroed positions %.2f%%)\n",
                100 * r.original_accuracy, 100 * r.shuffled_accuracy, 100 * r.gap, 100 * r.zeroed_position_accuracy);
    finish(m, dir, t0);
    return 0;
  }

  if (*ens_cmd) {
    if (en_ckpts.size() < 2) throw UsageError("ensemble needs at least two --checkpoint values");
    const auto examples = load_data(en.data);
    const auto tags = load_tags(en.tags, examples);
    std::vector<LoadedCheckpoint> loaded;
    std::vector<const MmftBert*> members;
    json paths = json::array();
    for (const auto& c : en_ckpts) {
      const auto stem = checkpoint_stem(c);
      loaded.push_back(load_checkpoint(stem));
      members.push_back(loaded.back().model.get());
      paths.push_back(fs::absolute(stem).string());
    }
    const EnsembleReport rep = ensemble_eval(members, examples, tags);
    const fs::path dir = make_run_dir(en.out, "ensemble", members.front()->seed());
    write_json(dir / "ensemble.json", rep.to_json());
    write_text(dir / "report.txt", rep.ensemble.to_table());
    RunManifest m = base_manifest("ensemble", members.front()->seed(), to_json(members.front()->config()));
    m.dataset_hashes["data"] = hash_file(en.data);
    m.extra["checkpoints"] = paths;
    m.extra["combination"] = "mean of member softmax probabilities, then argmax";
    std::printf("ensemble %.2f%%  best member %.2f%%  mean member %.2f%%\n", 100 * rep.ensemble.accuracy(),
                100 * rep.best_member, 100 * rep.mean_member);
    finish(m, dir, t0);
    return 0;
  }

  if (*grad_cmd) {
    gco.fusion = fusion_from_string(gc_fusion);
    const ModelGradcheckResult r = model_gradcheck(gco);
    const fs::path dir = make_run_dir(gc.out, "gradcheck", gco.seed);
    write_json(dir / "gradcheck.json", r.to_json());
    RunManifest m = base_manifest("gradcheck", gco.seed, r.config);
    m.extra["max_rel_error"] = r.report.max_rel_error;
    m.extra["tolerance"] = gc_tol;
    m.status = r.report.passed(gc_tol) ? "ok" : "failed";
    std::printf("checked %zu gradient entries over %zu parameters in %.1fs\n", r.report.elements_checked,
                r.report.per_parameter.size(), r.seconds);
    std::printf("max relative error %.3e (%s), tolerance %.1e\n", r.report.max_rel_error,
                r.report.worst_parameter.c_str(), gc_tol);
    finish(m, dir, t0);
    if (!r.report.passed(gc_tol)) {
      std::cerr << "numeric error: gradient check failed\n";
      return 6;
    }
    std::cout << "PASS\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    if (e.usage().empty()) {
      std::cerr << "(run with --help for usage)\n";
    } else {
      std::cerr << '\n' << e.usage();
    }
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 5;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 6;
  } catch (const LengthError& e) {
    std::cerr << "length error: " << e.what() << '\n';
    return 7;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
