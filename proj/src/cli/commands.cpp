#include "kanslu/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "kanslu/errors.hpp"
#include "kanslu/random.hpp"
#include "kanslu/train/checkpoint.hpp"

namespace kanslu::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json metrics_json(const train::MetricsReport& m) {
  return {{"accuracy", m.accuracy},
          {"f1_macro", m.f1_macro},
          {"per_class_f1", m.per_class_f1},
          {"confusion", m.confusion},
          {"count", m.count}};
}

json epoch_json(const train::EpochRecord& r) {
  return {{"epoch", r.epoch},         {"train_loss", r.train_loss},     {"lr", r.lr},
          {"val_accuracy", r.val_accuracy}, {"val_f1_macro", r.val_f1_macro}, {"improved", r.improved}};
}

json timing_json(const train::TimingRecord& r) {
  return {{"epoch", r.epoch},
          {"seconds", r.seconds},
          {"steps_per_second", r.steps_per_second},
          {"examples_per_second", r.examples_per_second}};
}

const data::LabeledSet& split_of(const data::PreparedData& d, data::Split s) {
  switch (s) {
    case data::Split::Train: return d.train;
    case data::Split::Validation: return d.validation;
    case data::Split::Test: return d.test;
  }
  return d.test;
}

std::size_t embedding_width(const data::PreparedData& d) {
  if (d.train.size() == 0) throw ConfigError("data: the training split is empty");
  const ad::Tensor& f = d.train.features.front();
  if (f.rank() != 1) throw ConfigError("model.kind: embedding-head needs embedding features, got spectrograms");
  return f.dim(0);
}

double mean_throughput(const train::FitResult& fit) {
  if (fit.timing.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : fit.timing) s += t.steps_per_second;
  return s / static_cast<double>(fit.timing.size());
}

// Directory holding the checkpoint plus the checkpoint file itself.
std::pair<fs::path, fs::path> checkpoint_location(const fs::path& p) {
  if (fs::is_directory(p)) return {p, p / kCheckpointFile};
  return {p.has_parent_path() ? p.parent_path() : fs::path("."), p};
}

AppConfig config_for_checkpoint(const fs::path& dir, const std::optional<fs::path>& config_path,
                                const std::vector<std::string>& overrides) {
  if (config_path) return load_config(config_path, overrides);
  const fs::path effective = dir / kEffectiveConfigFile;
  if (!fs::exists(effective)) {
    throw ConfigError("no --config given and " + effective.string() + " does not exist");
  }
  return load_config(effective, overrides);
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

data::PreparedData load_data(const AppConfig& config) {
  switch (config.data.source) {
    case DataSource::Synth: return data::prepare_synth(data::synth_dataset(config.data.synth), config.mel);
    case DataSource::Manifest: return data::prepare_manifest(data::load_manifest(config.data.manifest), config.mel);
    case DataSource::Embeddings: return data::prepare_embeddings(config.data.embeddings, config.labels);
  }
  throw ConfigError("data.source: unsupported");
}

void resolve_config(AppConfig& config, const data::PreparedData& data) {
  if (config.labels.empty()) {
    config.labels = data.labels;
  } else if (config.labels != data.labels) {
    throw ConfigError("labels: configured class names do not match the " + std::to_string(data.labels.size()) +
                      " classes found in the data");
  }
  if (config.labels.size() < 2) throw ConfigError("labels: at least two classes are required");
  if (config.model.kind == blocks::ModelKind::Cnn && config.input_frames == 0) {
    config.input_frames = data.max_frames();
  }
}

blocks::ModelSpec model_spec(const AppConfig& config, std::size_t in_dim) {
  blocks::ModelSpec spec = config.model;
  spec.mel_bins = config.mel.n_mels;
  spec.frames = config.input_frames;
  spec.in_dim = in_dim;
  spec.block.num_classes = config.labels.size();
  if (spec.kind == blocks::ModelKind::Cnn && spec.frames == 0) {
    throw ConfigError("model.input_frames: unresolved; train first or set it explicitly");
  }
  return spec;
}

SeedOutcome train_seed(const AppConfig& config, const data::PreparedData& data, std::uint64_t seed,
                       const std::optional<fs::path>& out_dir, std::ostream* progress) {
  const std::size_t in_dim = config.model.kind == blocks::ModelKind::EmbeddingHead ? embedding_width(data) : 0;
  Rng init(derive_seed(seed, 1));
  blocks::Model model(model_spec(config, in_dim), init);
  train::RunConfig run = config.train;
  run.seed = seed;

  std::ofstream log_file, timing_file;
  if (out_dir) {
    fs::create_directories(*out_dir);
    log_file.open(*out_dir / "train_log.jsonl", std::ios::binary);
    timing_file.open(*out_dir / "timing.jsonl", std::ios::binary);
    if (!log_file || !timing_file) throw IoError("cannot write logs in " + out_dir->string());
  }
  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.params = model.param_count();
  outcome.fit = train::fit(model, data, run, [&](const train::EpochRecord& e, const train::TimingRecord& t) {
    if (out_dir) {
      log_file << epoch_json(e).dump() << "\n" << std::flush;
      timing_file << timing_json(t).dump() << "\n" << std::flush;
    }
    if (progress) {
      *progress << "  seed " << seed << " epoch " << e.epoch << ": loss " << std::setprecision(4) << e.train_loss
                << ", val acc " << e.val_accuracy << ", lr " << e.lr << ", " << std::setprecision(3) << t.seconds
                << " s" << std::endl;
    }
  });
  outcome.test = train::evaluate(model, data.test, data.num_classes(), run.pass_size());
  if (out_dir) {
    train::save_checkpoint(*out_dir / kCheckpointFile, model.parameters());
    json m{{"seed", seed},
           {"params", outcome.params},
           {"best_epoch", outcome.fit.best_epoch},
           {"best_val_accuracy", outcome.fit.best_val_accuracy},
           {"epochs_run", outcome.fit.log.size()},
           {"early_stopped", outcome.fit.early_stopped},
           {"labels", config.labels},
           {"test", metrics_json(outcome.test)}};
    write_text(*out_dir / "metrics.json", m.dump(2) + "\n");
    write_text(*out_dir / kEffectiveConfigFile, config_to_json(config).dump(2) + "\n");
  }
  return outcome;
}

int cmd_train(const AppConfig& input, const fs::path& out_dir, std::ostream& log) {
  AppConfig config = input;
  const data::PreparedData data = load_data(config);
  resolve_config(config, data);
  fs::create_directories(out_dir);
  write_text(out_dir / kEffectiveConfigFile, config_to_json(config).dump(2) + "\n");
  log << "training " << blocks::to_string(config.model.block.kind) << " on " << data.train.size() << " examples, "
      << config.labels.size() << " classes, " << config.seeds << " seed(s)" << std::endl;

  std::vector<SeedOutcome> outcomes;
  for (std::size_t i = 0; i < config.seeds; ++i) {
    const std::uint64_t seed = config.train.seed + i;
    const fs::path dir = config.seeds == 1 ? out_dir : out_dir / ("seed_" + std::to_string(seed));
    outcomes.push_back(train_seed(config, data, seed, dir, &log));
    log << "seed " << seed << ": test accuracy " << outcomes.back().test.accuracy << ", macro F1 "
        << outcomes.back().test.f1_macro << std::endl;
  }
  if (config.seeds > 1) {
    std::vector<double> acc, f1;
    json runs = json::array();
    for (const auto& o : outcomes) {
      acc.push_back(o.test.accuracy);
      f1.push_back(o.test.f1_macro);
      runs.push_back({{"seed", o.seed},
                      {"accuracy", o.test.accuracy},
                      {"f1_macro", o.test.f1_macro},
                      {"best_epoch", o.fit.best_epoch}});
    }
    const auto [am, as] = mean_std(acc);
    const auto [fm, fsd] = mean_std(f1);
    json summary{{"seeds", runs},
                 {"params", outcomes.front().params},
                 {"accuracy_mean", am},
                 {"accuracy_std", as},
                 {"f1_mean", fm},
                 {"f1_std", fsd}};
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    log << "accuracy " << am << " ± " << as << ", macro F1 " << fm << " ± " << fsd << std::endl;
  }
  return kExitOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& log) {
  const auto [dir, file] = checkpoint_location(options.checkpoint);
  AppConfig config = config_for_checkpoint(dir, options.config_path, options.overrides);
  const data::PreparedData data = load_data(config);
  resolve_config(config, data);
  const std::size_t in_dim = config.model.kind == blocks::ModelKind::EmbeddingHead ? embedding_width(data) : 0;
  Rng init(0);
  blocks::Model model(model_spec(config, in_dim), init);
  train::load_checkpoint(file, model.parameters());
  const data::LabeledSet& set = split_of(data, options.split);
  const train::MetricsReport m = train::evaluate(model, set, data.num_classes(), config.train.pass_size());
  json doc{{"split", data::to_string(options.split)}, {"labels", config.labels}, {"metrics", metrics_json(m)}};
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    write_text(*options.out_dir / "eval_metrics.json", doc.dump(2) + "\n");
  }
  log << doc.dump(2) << std::endl;
  return kExitOk;
}

std::vector<AblationVariant> ablation_variants(const AppConfig& config) {
  std::vector<AblationVariant> out;
  const auto with = [&](std::string name, auto edit) {
    AppConfig c = config;
    edit(c);
    out.push_back({std::move(name), std::move(c)});
  };
  switch (config.ablate.axis) {
    case AblationAxis::Config:
      for (auto kind : config.ablate.kinds) {
        with(std::string(blocks::to_string(kind)), [&](AppConfig& c) { c.model.block.kind = kind; });
      }
      break;
    case AblationAxis::Basis:
      with("FFF", [](AppConfig& c) { c.model.block.kind = blocks::BlockKind::FFF; });
      for (auto family : config.ablate.families) {
        with(std::string(basis::to_string(family)), [&](AppConfig& c) { c.model.block.basis.family = family; });
      }
      break;
    case AblationAxis::Hidden: {
      const std::string kind(blocks::to_string(config.model.block.kind));
      if (config.ablate.hidden_mode != HiddenMode::B) {
        for (std::size_t h : config.ablate.hidden) {
          with(kind + "(a)-" + std::to_string(h), [&](AppConfig& c) {
            c.model.block.hidden = config.ablate.fixed_hidden;
            c.model.block.kan_hidden = h;
          });
        }
      }
      if (config.ablate.hidden_mode != HiddenMode::A) {
        for (std::size_t h : config.ablate.hidden) {
          with(kind + "(b)-" + std::to_string(h), [&](AppConfig& c) {
            c.model.block.hidden = h;
            c.model.block.kan_hidden = 0;
          });
        }
      }
      break;
    }
  }
  return out;
}

std::vector<AblationRow> run_ablation(const AppConfig& config, const data::PreparedData& data, std::size_t parallel,
                                      const std::optional<fs::path>& out_dir, std::ostream* progress) {
  const std::vector<AblationVariant> variants = ablation_variants(config);
  std::vector<AblationRow> rows(variants.size());
  std::mutex progress_mutex;
  std::atomic<std::size_t> next{0};

  const auto work = [&] {
    for (std::size_t i = next++; i < variants.size(); i = next++) {
      const AblationVariant& v = variants[i];
      AblationRow& row = rows[i];
      row.variant = v.name;
      std::vector<double> acc, f1, throughput;
      try {
        const std::size_t in_dim =
            v.config.model.kind == blocks::ModelKind::EmbeddingHead ? embedding_width(data) : 0;
        {
          Rng init(0);
          blocks::Model probe(model_spec(v.config, in_dim), init);
          row.params = probe.param_count();
        }
        for (std::size_t s = 0; s < v.config.seeds; ++s) {
          const std::uint64_t seed = v.config.train.seed + s;
          std::optional<fs::path> dir;
          if (out_dir) dir = *out_dir / v.name / ("seed_" + std::to_string(seed));
          const SeedOutcome o = train_seed(v.config, data, seed, dir, nullptr);
          acc.push_back(o.test.accuracy);
          f1.push_back(o.test.f1_macro);
          throughput.push_back(mean_throughput(o.fit));
          if (progress) {
            std::lock_guard lock(progress_mutex);
            *progress << v.name << " seed " << seed << ": test accuracy " << o.test.accuracy << " after "
                      << o.fit.log.size() << " epoch(s)" << std::endl;
          }
        }
        std::tie(row.accuracy_mean, row.accuracy_std) = mean_std(acc);
        std::tie(row.f1_mean, row.f1_std) = mean_std(f1);
        row.throughput_it_s = mean_std(throughput).first;
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
        if (progress) {
          std::lock_guard lock(progress_mutex);
          *progress << v.name << " failed: " << e.what() << std::endl;
        }
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(parallel, variants.size()));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  const auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c == '\n' ? ' ' : c;
    }
    return q + "\"";
  };
  std::ostringstream csv;
  csv << "variant,params,throughput_it_s,accuracy_mean,accuracy_std,f1_mean,f1_std,status\n";
  csv << std::setprecision(6);
  for (const auto& r : rows) {
    csv << quote(r.variant) << "," << r.params << ",";
    if (r.status == "ok") {
      csv << r.throughput_it_s << "," << r.accuracy_mean << "," << r.accuracy_std << "," << r.f1_mean << ","
          << r.f1_std;
    } else {
      csv << ",,,,";
    }
    csv << "," << quote(r.status) << "\n";
  }
  return csv.str();
}

int cmd_ablate(const AppConfig& input, const fs::path& out_dir, std::size_t parallel, std::ostream& log) {
  AppConfig config = input;
  // One dataset instance for the whole sweep keeps rows comparable.
  const data::PreparedData data = load_data(config);
  resolve_config(config, data);
  fs::create_directories(out_dir);
  write_text(out_dir / kEffectiveConfigFile, config_to_json(config).dump(2) + "\n");
  log << "ablation over " << to_string(config.ablate.axis) << ": " << ablation_variants(config).size()
      << " variants, " << config.seeds << " seed(s) each" << std::endl;
  const auto rows = run_ablation(config, data, parallel, out_dir, &log);
  const std::string csv = ablation_csv(rows);
  write_text(out_dir / "ablation.csv", csv);
  log << csv;
  return kExitOk;
}

int cmd_explain(const ExplainOptions& options, std::ostream& log) {
  const auto [dir, file] = checkpoint_location(options.checkpoint);
  const AppConfig config = config_for_checkpoint(dir, options.config_path, options.overrides);
  if (config.model.kind != blocks::ModelKind::Cnn) {
    throw ConfigError("model.kind: explain needs a cnn model that reads audio");
  }
  if (config.labels.empty()) throw ConfigError("labels: the config must list the class names the model was trained on");
  Rng init(0);
  blocks::Model model(model_spec(config, 0), init);
  train::load_checkpoint(file, model.parameters());

  features::Waveform wav = features::load_wav(options.wav, config.mel.sample_rate);
  const relevance::SegmentSet segments = options.alignment ? relevance::load_alignment(*options.alignment)
                                                           : relevance::uniform_segments(wav.duration(), options.segments);
  const relevance::RelevanceReport report =
      relevance::segment_relevance(relevance::model_classifier(model, config.mel), wav, segments, options.occlusion);
  fs::create_directories(options.out_dir);
  const std::string json_text = relevance::report_json(report, config.labels);
  write_text(options.out_dir / "relevance.json", json_text);
  write_text(options.out_dir / "relevance.svg", relevance::report_svg(report, wav, config.labels));
  log << json_text;
  return kExitOk;
}

int cmd_selfcheck(const SelfcheckOptions& options, std::ostream& log) {
  const auto results = run_selfcheck(options);
  bool all = true;
  log << std::left << std::setw(18) << "check" << std::setw(8) << "result" << std::setw(14) << "worst"
      << std::setw(10) << "bound" << std::setw(9) << "seconds"
      << "detail\n";
  for (const auto& r : results) {
    all = all && r.passed;
    std::ostringstream worst, bound, secs;
    worst << std::setprecision(3) << r.worst;
    bound << std::setprecision(3) << r.bound;
    secs << std::fixed << std::setprecision(2) << r.seconds;
    log << std::setw(18) << r.name << std::setw(8) << (r.passed ? "PASS" : "FAIL") << std::setw(14) << worst.str()
        << std::setw(10) << bound.str() << std::setw(9) << secs.str() << r.detail << "\n";
  }
  if (!all) {
    log << "failed:";
    for (const auto& r : results) {
      if (!r.passed) log << " " << r.name;
    }
    log << "\n";
  }
  log << std::flush;
  return all ? kExitOk : kExitSelfcheckFailed;
}

}  // namespace kanslu::cli
