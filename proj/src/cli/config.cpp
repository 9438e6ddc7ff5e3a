#include "kanslu/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "kanslu/errors.hpp"

namespace kanslu::cli {

using nlohmann::json;

std::string_view to_string(DataSource source) {
  switch (source) {
    case DataSource::Synth: return "synth";
    case DataSource::Manifest: return "manifest";
    case DataSource::Embeddings: return "embeddings";
  }
  return "unknown";
}

std::string_view to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Config: return "config";
    case AblationAxis::Hidden: return "hidden";
    case AblationAxis::Basis: return "basis";
  }
  return "unknown";
}

AblationAxis ablation_axis_from_string(std::string_view name) {
  if (name == "config") return AblationAxis::Config;
  if (name == "hidden") return AblationAxis::Hidden;
  if (name == "basis") return AblationAxis::Basis;
  throw ConfigError("ablate.axis: unknown axis '" + std::string(name) + "' (expected config, hidden or basis)");
}

std::string_view to_string(HiddenMode mode) {
  switch (mode) {
    case HiddenMode::A: return "a";
    case HiddenMode::B: return "b";
    case HiddenMode::Both: return "both";
  }
  return "unknown";
}

HiddenMode hidden_mode_from_string(std::string_view name) {
  if (name == "a") return HiddenMode::A;
  if (name == "b") return HiddenMode::B;
  if (name == "both") return HiddenMode::Both;
  throw ConfigError("ablate.hidden_mode: unknown mode '" + std::string(name) + "' (expected a, b or both)");
}

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// that leftovers can be reported as unknown fields.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string field(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  bool has(const char* key) {
    known_.insert(key);
    return obj_.contains(key);
  }

  Section child(const char* key) {
    known_.insert(key);
    static const json empty = json::object();
    return Section(obj_.contains(key) ? obj_.at(key) : empty, field(key));
  }

  void read(const char* key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
      throw ConfigError(field(key) + ": expected a non-negative integer, got " + v.dump());
    }
    out = v.get<std::size_t>();
  }

  void read(const char* key, std::uint64_t& out, int) {
    std::size_t tmp = out;
    read(key, tmp);
    out = tmp;
  }

  void read(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(field(key) + ": expected a number, got " + v.dump());
    out = v.get<double>();
  }

  void read(const char* key, std::string& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(field(key) + ": expected a string, got " + v.dump());
    out = v.get<std::string>();
  }

  void read(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(field(key) + ": expected an array, got " + v.dump());
    std::vector<T> items;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& e = v[i];
      const std::string name = field(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_same_v<T, std::string>) {
        if (!e.is_string()) throw ConfigError(name + ": expected a string, got " + e.dump());
        items.push_back(e.get<std::string>());
      } else {
        if (!e.is_number_integer() || e.get<long long>() < 0) {
          throw ConfigError(name + ": expected a non-negative integer, got " + e.dump());
        }
        items.push_back(e.get<T>());
      }
    }
    out = std::move(items);
  }

  // Parses a string field through `convert`, rewrapping its error.
  template <typename T, typename Convert>
  void read_enum(const char* key, T& out, Convert convert) {
    std::string s;
    if (!has(key)) return;
    read(key, s);
    try {
      out = convert(s);
    } catch (const std::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!known_.count(key)) throw ConfigError(field(key) + ": unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string, std::less<>> known_;
};

void read_basis(Section s, basis::BasisSpec& spec) {
  s.read_enum("family", spec.family, basis::family_from_string);
  double lo = spec.grid.range_min(), hi = spec.grid.range_max();
  std::size_t size = spec.grid.num_intervals(), order = spec.grid.spline_order();
  s.read("grid_min", lo);
  s.read("grid_max", hi);
  s.read("grid_size", size);
  s.read("spline_order", order);
  try {
    spec.grid = basis::Grid(lo, hi, size, order);
  } catch (const std::exception& e) {
    throw ConfigError(s.field("grid") + ": " + e.what());
  }
  s.read("degree", spec.degree);
  s.read("numerator_degree", spec.numerator_degree);
  s.read("denominator_degree", spec.denominator_degree);
  s.read("group_size", spec.group_size);
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(s.field("") + " " + e.what());
  }
  s.finish();
}

json basis_to_json(const basis::BasisSpec& b) {
  return {{"family", basis::to_string(b.family)},
          {"grid_min", b.grid.range_min()},
          {"grid_max", b.grid.range_max()},
          {"grid_size", b.grid.num_intervals()},
          {"spline_order", b.grid.spline_order()},
          {"degree", b.degree},
          {"numerator_degree", b.numerator_degree},
          {"denominator_degree", b.denominator_degree},
          {"group_size", b.group_size}};
}

}  // namespace

AppConfig config_from_json(const json& doc) {
  AppConfig c;
  Section root(doc, "");

  Section model = root.child("model");
  model.read_enum("kind", c.model.kind, [](std::string_view n) { return blocks::model_kind_from_string(n); });
  model.read_list("channels", c.model.channels);
  model.read("dropout", c.model.dropout);
  model.read("input_frames", c.input_frames);
  model.finish();
  if (c.model.channels.empty()) throw ConfigError("model.channels: at least one stage is required");
  for (std::size_t ch : c.model.channels) {
    if (ch == 0) throw ConfigError("model.channels: channel counts must be positive");
  }
  if (!(c.model.dropout >= 0.0 && c.model.dropout < 1.0)) throw ConfigError("model.dropout: must be in [0, 1)");

  Section block = root.child("block");
  block.read_enum("kind", c.model.block.kind, [](std::string_view n) { return blocks::block_kind_from_string(n); });
  block.read("hidden", c.model.block.hidden);
  block.read("kan_hidden", c.model.block.kan_hidden);
  block.read("dropout", c.model.block.dropout);
  read_basis(block.child("basis"), c.model.block.basis);
  block.finish();
  if (c.model.block.hidden == 0) throw ConfigError("block.hidden: must be positive");
  if (!(c.model.block.dropout >= 0.0 && c.model.block.dropout < 1.0)) throw ConfigError("block.dropout: must be in [0, 1)");

  Section mel = root.child("mel");
  mel.read("sample_rate", c.mel.sample_rate);
  mel.read("n_fft", c.mel.n_fft);
  mel.read("win_length", c.mel.win_length);
  mel.read("hop_length", c.mel.hop_length);
  mel.read("n_mels", c.mel.n_mels);
  mel.read("f_min", c.mel.f_min);
  mel.read("f_max", c.mel.f_max);
  mel.finish();
  try {
    c.mel.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("mel: ") + e.what());
  }
  c.model.mel_bins = c.mel.n_mels;

  Section data = root.child("data");
  data.read_enum("source", c.data.source, [](std::string_view n) {
    if (n == "synth") return DataSource::Synth;
    if (n == "manifest") return DataSource::Manifest;
    if (n == "embeddings") return DataSource::Embeddings;
    throw ConfigError("unknown source '" + std::string(n) + "' (expected synth, manifest or embeddings)");
  });
  Section synth = data.child("synth");
  synth.read("num_classes", c.data.synth.num_classes);
  synth.read("per_class", c.data.synth.per_class);
  synth.read("seed", c.data.synth.seed, 0);
  synth.read("snr_db", c.data.synth.snr_db);
  synth.read_enum("locus", c.data.synth.locus, [](std::string_view n) { return data::locus_from_string(n); });
  synth.finish();
  data.read("manifest", c.data.manifest);
  Section emb = data.child("embeddings");
  emb.read("train", c.data.embeddings.train);
  emb.read("validation", c.data.embeddings.validation);
  emb.read("test", c.data.embeddings.test);
  emb.finish();
  data.finish();
  if (c.data.source == DataSource::Synth && (c.data.synth.num_classes < 2 || c.data.synth.num_classes > 32)) {
    throw ConfigError("data.synth.num_classes: must be between 2 and 32");
  }
  if (c.data.source == DataSource::Synth && c.data.synth.per_class < 7) {
    throw ConfigError("data.synth.per_class: needs at least 7 examples per class to fill all three splits");
  }
  if (c.data.source == DataSource::Manifest && c.data.manifest.empty()) {
    throw ConfigError("data.manifest: a manifest path is required when data.source is manifest");
  }
  if (c.data.source == DataSource::Embeddings &&
      (c.data.embeddings.train.empty() || c.data.embeddings.validation.empty() || c.data.embeddings.test.empty())) {
    throw ConfigError("data.embeddings: train, validation and test paths are required");
  }
  if (c.data.source == DataSource::Embeddings && c.model.kind != blocks::ModelKind::EmbeddingHead) {
    throw ConfigError("model.kind: embeddings data needs model.kind embedding-head");
  }
  if (c.data.source != DataSource::Embeddings && c.model.kind != blocks::ModelKind::Cnn) {
    throw ConfigError("model.kind: audio data needs model.kind cnn");
  }

  c.train = c.model.kind == blocks::ModelKind::Cnn ? train::RunConfig::cnn_defaults()
                                                   : train::RunConfig::embedding_defaults();
  Section tr = root.child("train");
  tr.read("max_epochs", c.train.max_epochs);
  tr.read("early_stop_patience", c.train.early_stop_patience);
  tr.read("batch_size", c.train.batch_size);
  tr.read("micro_batch", c.train.micro_batch);
  tr.read("lr", c.train.lr);
  tr.read("weight_decay", c.train.weight_decay);
  tr.read("seed", c.train.seed, 0);
  tr.read("seeds", c.seeds);
  Section sched = tr.child("scheduler");
  sched.read("factor", c.train.scheduler.factor);
  sched.read("patience", c.train.scheduler.patience);
  sched.read("threshold", c.train.scheduler.threshold);
  sched.read("min_lr", c.train.scheduler.min_lr);
  sched.finish();
  tr.finish();
  c.train.validate();
  if (c.seeds == 0) throw ConfigError("train.seeds: must be positive");

  Section ab = root.child("ablate");
  ab.read_enum("axis", c.ablate.axis, ablation_axis_from_string);
  if (ab.has("kinds")) {
    std::vector<std::string> names;
    ab.read_list("kinds", names);
    c.ablate.kinds.clear();
    for (const auto& n : names) {
      try {
        c.ablate.kinds.push_back(blocks::block_kind_from_string(n));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("ablate.kinds: ") + e.what());
      }
    }
  }
  if (ab.has("families")) {
    std::vector<std::string> names;
    ab.read_list("families", names);
    c.ablate.families.clear();
    for (const auto& n : names) {
      try {
        c.ablate.families.push_back(basis::family_from_string(n));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("ablate.families: ") + e.what());
      }
    }
  }
  ab.read_list("hidden", c.ablate.hidden);
  ab.read_enum("hidden_mode", c.ablate.hidden_mode, hidden_mode_from_string);
  ab.read("fixed_hidden", c.ablate.fixed_hidden);
  ab.finish();
  for (std::size_t h : c.ablate.hidden) {
    if (h == 0) throw ConfigError("ablate.hidden: widths must be positive");
  }
  if (c.ablate.fixed_hidden == 0) throw ConfigError("ablate.fixed_hidden: must be positive");

  root.read_list("labels", c.labels);
  root.finish();
  return c;
}

json config_to_json(const AppConfig& c) {
  json kinds = json::array(), families = json::array();
  for (auto k : c.ablate.kinds) kinds.push_back(blocks::to_string(k));
  for (auto f : c.ablate.families) families.push_back(basis::to_string(f));
  return {
      {"model",
       {{"kind", blocks::to_string(c.model.kind)},
        {"channels", c.model.channels},
        {"dropout", c.model.dropout},
        {"input_frames", c.input_frames}}},
      {"block",
       {{"kind", blocks::to_string(c.model.block.kind)},
        {"hidden", c.model.block.hidden},
        {"kan_hidden", c.model.block.kan_hidden},
        {"dropout", c.model.block.dropout},
        {"basis", basis_to_json(c.model.block.basis)}}},
      {"mel",
       {{"sample_rate", c.mel.sample_rate},
        {"n_fft", c.mel.n_fft},
        {"win_length", c.mel.win_length},
        {"hop_length", c.mel.hop_length},
        {"n_mels", c.mel.n_mels},
        {"f_min", c.mel.f_min},
        {"f_max", c.mel.f_max}}},
      {"data",
       {{"source", to_string(c.data.source)},
        {"synth",
         {{"num_classes", c.data.synth.num_classes},
          {"per_class", c.data.synth.per_class},
          {"seed", c.data.synth.seed},
          {"snr_db", c.data.synth.snr_db},
          {"locus", data::to_string(c.data.synth.locus)}}},
        {"manifest", c.data.manifest.string()},
        {"embeddings",
         {{"train", c.data.embeddings.train.string()},
          {"validation", c.data.embeddings.validation.string()},
          {"test", c.data.embeddings.test.string()}}}}},
      {"train",
       {{"max_epochs", c.train.max_epochs},
        {"early_stop_patience", c.train.early_stop_patience},
        {"batch_size", c.train.batch_size},
        {"micro_batch", c.train.micro_batch},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"seed", c.train.seed},
        {"seeds", c.seeds},
        {"scheduler",
         {{"factor", c.train.scheduler.factor},
          {"patience", c.train.scheduler.patience},
          {"threshold", c.train.scheduler.threshold},
          {"min_lr", c.train.scheduler.min_lr}}}}},
      {"ablate",
       {{"axis", to_string(c.ablate.axis)},
        {"kinds", kinds},
        {"families", families},
        {"hidden", c.ablate.hidden},
        {"hidden_mode", to_string(c.ablate.hidden_mode)},
        {"fixed_hidden", c.ablate.fixed_hidden}}},
      {"labels", c.labels},
  };
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must have the form key.path=value");
  }
  const std::string_view path = assignment.substr(0, eq);
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!doc.is_object()) doc = json::object();
  json* node = &doc;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key(path.substr(begin, dot == std::string_view::npos ? std::string_view::npos : dot - begin));
    if (key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has an empty path component");
    if (dot == std::string_view::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) {
      throw ConfigError("override '" + std::string(assignment) + "': " + std::string(path.substr(0, dot)) +
                        " is not an object");
    }
    node = &next;
    begin = dot + 1;
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

AppConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  json doc = path ? read_json_file(*path) : json::object();
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

bool operator==(const AppConfig& a, const AppConfig& b) { return config_to_json(a) == config_to_json(b); }

}  // namespace kanslu::cli
