#include "mmft/synthdata.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace mmft {

std::string_view to_string(RequiredModality m) {
  switch (m) {
    case RequiredModality::V: return "V";
    case RequiredModality::S: return "S";
    case RequiredModality::Both: return "BOTH";
  }
  return "?";
}

RequiredModality modality_from_string(std::string_view name) {
  if (name == "V") return RequiredModality::V;
  if (name == "S") return RequiredModality::S;
  if (name == "BOTH") return RequiredModality::Both;
  throw FormatError("unknown required_modality '" + std::string(name) + "'");
}

namespace {

const std::vector<std::string> kAttributes = {"red",    "blue",   "green",   "yellow", "black",   "white",
                                              "brown",  "pink",   "gray",    "purple", "orange",  "silver",
                                              "golden", "wooden", "striped", "plastic"};
const std::vector<std::string> kObjects = {"shirt", "door", "cup",    "chair", "table",  "lamp",   "phone",  "bag",
                                           "hat",   "book", "car",    "dog",   "laptop", "bottle", "couch", "window"};
const std::vector<std::string> kSpeakers = {"sheldon", "leonard", "penny",  "howard", "raj",      "amy",
                                            "stuart",  "marvin",  "rachel", "ross",   "monica",   "chandler",
                                            "joey",    "phoebe",  "house",  "wilson", "cuddy",    "foreman"};
const std::vector<std::string> kFoods = {"pizza",   "pasta",   "sushi", "tacos",    "salad",  "soup",
                                         "burgers", "noodles", "cake",  "cookies",  "pie",    "curry"};
const std::vector<std::string> kPlaces = {"park",   "office", "library", "kitchen", "hospital", "store",
                                          "cafe",   "garage", "theater", "museum",  "beach",    "airport"};
const std::vector<std::string> kReasons = {"exam",  "rent",     "traffic", "weather", "noise",   "deadline",
                                           "party", "meeting",  "accident", "interview", "game", "bill"};

std::vector<std::string> pool(const std::vector<std::string>& base, int n, const std::string& stem) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(i < static_cast<int>(base.size()) ? base[static_cast<std::size_t>(i)] : stem + std::to_string(i));
  }
  return out;
}

enum class FactKind { Food, Place, Reason, Sight };

struct Fact {
  std::string speaker;
  FactKind kind;
  std::string value;
};

std::string render(const Fact& f) {
  switch (f.kind) {
    case FactKind::Food: return "i like " + f.value;
    case FactKind::Place: return "i went to the " + f.value;
    case FactKind::Reason: return "i am upset about the " + f.value;
    case FactKind::Sight: return "i saw a " + f.value;
  }
  return {};
}

struct Template {
  RequiredModality modality;
  std::string family;
  int id;
};

// V: 0 color-what, 1 color-how, 2 which-object
// S: 3 who, 4 what-food, 5 where, 6 why
// BOTH: 7 which-seen-and-mentioned, 8 what-seen-and-mentioned
const std::vector<Template> kTemplates = {
    {RequiredModality::V, "what", 0},    {RequiredModality::V, "how", 1},     {RequiredModality::V, "others", 2},
    {RequiredModality::S, "who", 3},     {RequiredModality::S, "what", 4},    {RequiredModality::S, "where", 5},
    {RequiredModality::S, "why", 6},     {RequiredModality::Both, "others", 7}, {RequiredModality::Both, "what", 8},
};

class WorldBuilder {
 public:
  WorldBuilder(const SynthSpec& spec, std::mt19937_64& rng)
      : spec_(spec),
        rng_(rng),
        attributes_(pool(kAttributes, spec.n_attributes, "attr")),
        objects_(pool(kObjects, spec.n_objects, "obj")),
        speakers_(pool(kSpeakers, spec.n_speakers, "spk")),
        foods_(pool(kFoods, spec.n_facts, "food")),
        places_(pool(kPlaces, spec.n_facts, "place")),
        reasons_(pool(kReasons, spec.n_facts, "reason")) {}

  std::vector<std::string> sample(const std::vector<std::string>& from, std::size_t n,
                                  const std::set<std::string>& exclude = {}) {
    std::vector<std::string> cand;
    for (const auto& w : from) {
      if (!exclude.contains(w)) cand.push_back(w);
    }
    if (cand.size() < n) throw ConfigError("synthetic word pool too small for the requested scene");
    std::shuffle(cand.begin(), cand.end(), rng_);
    cand.resize(n);
    return cand;
  }

  std::string pick(const std::vector<std::string>& from) {
    std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
    return from[d(rng_)];
  }

  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  const std::vector<std::string>& values_of(FactKind k) const {
    return k == FactKind::Food ? foods_ : k == FactKind::Place ? places_ : k == FactKind::Reason ? reasons_ : objects_;
  }

  QAExample build(const Template& t, DiagnosticTag& tag);

 private:
  const SynthSpec& spec_;
  std::mt19937_64& rng_;
  std::vector<std::string> attributes_, objects_, speakers_, foods_, places_, reasons_;
};

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

QAExample WorldBuilder::build(const Template& t, DiagnosticTag& tag) {
  const auto scene_n = static_cast<std::size_t>(spec_.scene_size);
  const auto dialogue_n = static_cast<std::size_t>(spec_.dialogue_size);

  // Scene: distinct attributes and objects.
  std::vector<std::string> scene_attrs = sample(attributes_, scene_n);
  std::vector<std::string> scene_objs;
  // Dialogue speakers, distinct.
  std::vector<std::string> speakers = sample(speakers_, dialogue_n);
  std::vector<Fact> facts;

  std::string question, answer;
  std::vector<std::string> distractors;
  std::string planted;  // a distractor placed in the unneeded modality
  std::size_t evidence_concept = 0;
  std::size_t evidence_fact = 0;

  auto random_kind = [&] {
    const FactKind kinds[3] = {FactKind::Food, FactKind::Place, FactKind::Reason};
    return kinds[std::uniform_int_distribution<int>(0, 2)(rng_)];
  };
  auto fill_dialogue = [&](std::size_t from, std::set<std::string> used) {
    for (std::size_t i = from; i < dialogue_n; ++i) {
      FactKind k = random_kind();
      std::string v = sample(values_of(k), 1, used).front();
      used.insert(v);
      facts.push_back({speakers[i], k, v});
    }
  };

  if (t.modality == RequiredModality::Both) {
    if (scene_n < 3 || dialogue_n < 3) throw ConfigError("both-modality questions need scene and dialogue of size >= 3");
    std::vector<std::string> objs = sample(objects_, scene_n + 2);
    answer = objs[0];
    scene_objs.assign(objs.begin(), objs.begin() + static_cast<long>(scene_n));
    // Scene holds the answer plus two visual-only distractors; the dialogue
    // mentions the answer plus two subtitle-only distractors.
    distractors = {objs[1], objs[2], objs[scene_n], objs[scene_n + 1]};
    std::vector<std::size_t> order(3);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const std::string mentioned[3] = {answer, objs[scene_n], objs[scene_n + 1]};
    for (std::size_t i = 0; i < 3; ++i) facts.push_back({speakers[i], FactKind::Sight, mentioned[order[i]]});
    evidence_fact = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin());
    evidence_concept = 0;
    fill_dialogue(3, as_set(objs));
    question = t.id == 7 ? "which object is both seen and mentioned ?" : "what object is visible and also mentioned ?";
  } else if (t.modality == RequiredModality::V) {
    scene_objs = sample(objects_, scene_n);
    std::uniform_int_distribution<std::size_t> which(0, scene_n - 1);
    evidence_concept = which(rng_);
    if (t.id == 2) {
      answer = scene_objs[evidence_concept];
      distractors = sample(objects_, 4, as_set(scene_objs));
      question = "which " + scene_attrs[evidence_concept] + " thing is in the scene ?";
    } else {
      answer = scene_attrs[evidence_concept];
      distractors = sample(attributes_, 4, as_set(scene_attrs));
      question = t.id == 0 ? "what color is the " + scene_objs[evidence_concept] + " ?"
                           : "how does the " + scene_objs[evidence_concept] + " look ?";
    }
    fill_dialogue(0, {});
    if (coin(spec_.distractor_rate)) planted = distractors[0];
  } else {
    scene_objs = sample(objects_, scene_n);
    FactKind kind = t.id == 4 ? FactKind::Food : t.id == 5 ? FactKind::Place : t.id == 6 ? FactKind::Reason : random_kind();
    std::uniform_int_distribution<std::size_t> which(0, dialogue_n - 1);
    evidence_fact = which(rng_);
    // The target fact is unique in the dialogue.
    std::set<std::string> used;
    for (std::size_t i = 0; i < dialogue_n; ++i) {
      FactKind k = i == evidence_fact ? kind : random_kind();
      std::string v = sample(values_of(k), 1, used).front();
      used.insert(v);
      facts.push_back({speakers[i], k, v});
    }
    const Fact& f = facts[evidence_fact];
    if (t.id == 3) {
      answer = f.speaker;
      distractors = sample(speakers_, 4, as_set(speakers));
      question = f.kind == FactKind::Food    ? "who likes " + f.value + " ?"
                 : f.kind == FactKind::Place ? "who went to the " + f.value + " ?"
                                             : "who is upset about the " + f.value + " ?";
    } else {
      answer = f.value;
      std::set<std::string> in_dialogue;
      for (const auto& g : facts) in_dialogue.insert(g.value);
      distractors = sample(values_of(kind), 4, in_dialogue);
      question = kind == FactKind::Food    ? "what does " + f.speaker + " like ?"
                 : kind == FactKind::Place ? "where did " + f.speaker + " go ?"
                                           : "why is " + f.speaker + " upset ?";
    }
    if (coin(spec_.distractor_rate)) planted = distractors[0];
  }

  // Evidence withholding for the noisy regime.
  bool withheld = !spec_.clean && !coin(spec_.adequate_rate);
  bool drop_concept = false, drop_fact = false;
  if (withheld) {
    if (t.modality == RequiredModality::V) drop_concept = true;
    else if (t.modality == RequiredModality::S) drop_fact = true;
    else (coin(0.5) ? drop_concept : drop_fact) = true;
  }

  QAExample ex;
  for (std::size_t i = 0; i < scene_n; ++i) {
    if (drop_concept && i == evidence_concept) continue;
    ex.vcpt.push_back(scene_attrs[i] + " " + scene_objs[i]);
  }
  if (!planted.empty() && t.modality == RequiredModality::S) {
    ex.vcpt.push_back(sample(attributes_, 1, as_set(scene_attrs)).front() + " " + planted);
  }
  double clock = 0;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (drop_fact && i == evidence_fact) continue;
    ex.sub.push_back({facts[i].speaker, render(facts[i]), clock, clock + 2});
    clock += 2;
  }
  if (!planted.empty() && t.modality == RequiredModality::V) {
    const std::string text = t.id == 2 ? "i saw a " + planted : "i like " + planted + " things";
    ex.sub.push_back({pick(speakers), text, clock, clock + 2});
    clock += 2;
  }
  std::shuffle(ex.vcpt.begin(), ex.vcpt.end(), rng_);
  ex.ts = std::make_pair(0.0, std::max(clock, 1.0));
  ex.question = question;

  std::array<std::string, kNumAnswers> answers{answer, distractors[0], distractors[1], distractors[2], distractors[3]};
  std::array<int, kNumAnswers> perm{0, 1, 2, 3, 4};
  std::shuffle(perm.begin(), perm.end(), rng_);
  for (int j = 0; j < kNumAnswers; ++j) {
    ex.answers[static_cast<std::size_t>(j)] = answers[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    if (perm[static_cast<std::size_t>(j)] == 0) ex.label = j;
  }

  tag.required = t.modality;
  tag.clean = evidence_present(ex, t.modality);
  if (spec_.clean && !tag.clean) throw std::logic_error("synthetic generator lost evidence in a clean corpus");
  return ex;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_examples < 1) throw ConfigError("n_examples must be positive");
  double total = 0;
  for (double f : modality_mix) {
    if (f < 0) throw ConfigError("modality_mix fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("modality_mix fractions must sum to 1");
  if (distractor_rate < 0 || distractor_rate > 1) throw ConfigError("distractor_rate must lie in [0,1]");
  if (adequate_rate < 0 || adequate_rate > 1) throw ConfigError("adequate_rate must lie in [0,1]");
  if (scene_size < 1 || dialogue_size < 1) throw ConfigError("scene and dialogue sizes must be positive");
  if (n_attributes < scene_size + 5) throw ConfigError("n_attributes too small for five distinct answers");
  if (n_objects < scene_size + 5) throw ConfigError("n_objects too small for five distinct answers");
  if (n_speakers < dialogue_size + 4) throw ConfigError("n_speakers too small for five distinct answers");
  if (n_facts < dialogue_size + 4) throw ConfigError("n_facts too small for five distinct answers");
  for (const auto& f : question_families) {
    if (f != "what" && f != "who" && f != "where" && f != "why" && f != "how" && f != "others") {
      throw ConfigError("unknown question family '" + f + "'");
    }
  }
}

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  std::array<std::vector<Template>, 3> by_modality;
  for (const auto& t : kTemplates) {
    if (std::find(spec.question_families.begin(), spec.question_families.end(), t.family) ==
        spec.question_families.end()) {
      continue;
    }
    by_modality[static_cast<std::size_t>(t.modality)].push_back(t);
  }
  for (std::size_t m = 0; m < 3; ++m) {
    if (spec.modality_mix[m] > 0 && by_modality[m].empty()) {
      throw ConfigError("no question template for modality " + std::string(to_string(RequiredModality(m))) +
                        " within the requested families");
    }
  }

  SynthCorpus corpus;
  for (int i = 0; i < spec.n_examples; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::discrete_distribution<std::size_t> pick_modality(spec.modality_mix.begin(), spec.modality_mix.end());
    const auto& templates = by_modality[pick_modality(rng)];
    const Template& t = templates[std::uniform_int_distribution<std::size_t>(0, templates.size() - 1)(rng)];

    WorldBuilder world(spec, rng);
    DiagnosticTag tag;
    QAExample ex = world.build(t, tag);
    char qid[64];
    std::snprintf(qid, sizeof qid, "syn%llu-%06d", static_cast<unsigned long long>(spec.seed), i);
    ex.qid = qid;
    tag.qid = qid;
    corpus.examples.push_back(std::move(ex));
    corpus.tags.push_back(std::move(tag));
  }
  return corpus;
}

std::vector<std::string> visual_tokens(const QAExample& ex) {
  std::vector<std::string> out;
  for (const auto& c : ex.vcpt) {
    for (auto& t : tokenize(c)) out.push_back(std::move(t));
  }
  return out;
}

bool evidence_present(const QAExample& ex, RequiredModality modality) {
  auto contains_all = [](const std::vector<std::string>& stream, const std::vector<std::string>& needle) {
    std::set<std::string> s(stream.begin(), stream.end());
    return !needle.empty() && std::all_of(needle.begin(), needle.end(), [&](const auto& t) { return s.contains(t); });
  };
  const auto answer = tokenize(ex.answers[static_cast<std::size_t>(ex.label)]);
  const bool in_v = contains_all(visual_tokens(ex), answer);
  const bool in_s = contains_all(subtitle_tokens(ex.sub), answer);
  switch (modality) {
    case RequiredModality::V: return in_v;
    case RequiredModality::S: return in_s;
    case RequiredModality::Both: return in_v && in_s;
  }
  return false;
}

void write_tags(const std::filesystem::path& path, const std::vector<DiagnosticTag>& tags) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write tags file: " + path.string());
  for (const auto& t : tags) {
    nlohmann::json j{{"qid", t.qid}, {"required_modality", std::string(to_string(t.required))}, {"clean", t.clean}};
    out << j.dump() << '\n';
  }
}

std::vector<DiagnosticTag> read_tags(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tags file: " + path.string());
  std::vector<DiagnosticTag> tags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      tags.push_back({j.at("qid").get<std::string>(),
                      modality_from_string(j.at("required_modality").get<std::string>()), j.at("clean").get<bool>()});
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tags;
}

std::map<std::string, DiagnosticTag> index_tags(const std::vector<DiagnosticTag>& tags) {
  std::map<std::string, DiagnosticTag> out;
  for (const auto& t : tags) out[t.qid] = t;
  return out;
}

}  // namespace mmft
