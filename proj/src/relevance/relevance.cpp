#include "kanslu/relevance/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "kanslu/errors.hpp"
#include "kanslu/random.hpp"

namespace kanslu::relevance {

using nlohmann::json;

std::string_view to_string(SegmentSource source) {
  return source == SegmentSource::Uniform ? "uniform" : "provided";
}

std::string_view to_string(Filler filler) { return filler == Filler::Silence ? "silence" : "noise"; }

Filler filler_from_string(std::string_view name) {
  if (name == "silence") return Filler::Silence;
  if (name == "noise") return Filler::Noise;
  throw ValueError("unknown filler '" + std::string(name) + "' (expected silence or noise)");
}

void SegmentSet::validate(double duration) const {
  // Half a sample of slack for boundaries written with limited precision.
  const double slack = 0.5 / features::kTargetSampleRate;
  for (std::size_t j = 0; j < segments.size(); ++j) {
    const Segment& s = segments[j];
    if (!std::isfinite(s.start) || !std::isfinite(s.end)) {
      throw ValueError("segment " + std::to_string(j) + " has a non-finite boundary");
    }
    if (s.start < -slack || s.end > duration + slack) {
      std::ostringstream msg;
      msg << "segment " << j << " [" << s.start << ", " << s.end << "] lies outside the audio [0, " << duration
          << "]";
      throw RangeError(msg.str());
    }
    if (!(s.end > s.start)) {
      throw ValueError("segment " + std::to_string(j) + " must have end > start");
    }
    if (j > 0 && s.start < segments[j - 1].end) {
      throw ValueError("segments " + std::to_string(j - 1) + " and " + std::to_string(j) +
                       " overlap or are out of order");
    }
  }
}

SegmentSet uniform_segments(double duration, std::size_t n) {
  if (n == 0) throw ValueError("uniform_segments needs at least one segment");
  if (!(duration > 0.0)) throw ValueError("uniform_segments needs a positive duration");
  SegmentSet set;
  set.source = SegmentSource::Uniform;
  const double nn = static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    // Boundaries from the same expression on both sides so neighbours meet exactly.
    const double start = duration * static_cast<double>(j) / nn;
    const double end = j + 1 == n ? duration : duration * static_cast<double>(j + 1) / nn;
    set.segments.push_back({start, end, {}});
  }
  return set;
}

SegmentSet parse_alignment(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("alignment is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("segments") || !doc["segments"].is_array()) {
    throw FormatError("alignment must be an object with a \"segments\" array");
  }
  SegmentSet set;
  set.source = SegmentSource::Provided;
  std::size_t j = 0;
  for (const json& s : doc["segments"]) {
    if (!s.is_object() || !s.contains("start") || !s.contains("end") || !s["start"].is_number() ||
        !s["end"].is_number()) {
      throw FormatError("alignment segment " + std::to_string(j) + " needs numeric \"start\" and \"end\"");
    }
    Segment seg{s["start"].get<double>(), s["end"].get<double>(), {}};
    if (s.contains("word")) {
      if (!s["word"].is_string()) throw FormatError("alignment segment " + std::to_string(j) + " has a non-string word");
      seg.label = s["word"].get<std::string>();
    }
    set.segments.push_back(std::move(seg));
    ++j;
  }
  return set;
}

SegmentSet load_alignment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open alignment file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_alignment(text.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::pair<std::size_t, std::size_t> segment_samples(const Segment& s, std::size_t num_samples, double sample_rate) {
  const auto clamp = [&](double t) {
    const double idx = std::round(t * sample_rate);
    if (idx <= 0.0) return std::size_t{0};
    return std::min(num_samples, static_cast<std::size_t>(idx));
  };
  return {clamp(s.start), clamp(s.end)};
}

namespace {

std::size_t argmax(const std::vector<double>& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double waveform_std(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

RelevanceReport segment_relevance(const Classifier& classify, const features::Waveform& wav,
                                  const SegmentSet& segments, const OcclusionOptions& options) {
  segments.validate(wav.duration());
  const std::vector<double> base = classify(wav);
  if (base.empty()) throw ContractError("classifier returned no probabilities");

  RelevanceReport report;
  report.predicted_class = argmax(base);
  report.class_probability = base[report.predicted_class];
  report.segments = segments;
  report.duration = wav.duration();
  const double noise_std = options.filler == Filler::Noise ? waveform_std(wav.samples) : 0.0;

  features::Waveform masked = wav;
  for (std::size_t j = 0; j < segments.size(); ++j) {
    const auto [first, last] = segment_samples(segments.segments[j], wav.samples.size(), wav.sample_rate);
    if (options.filler == Filler::Silence) {
      std::fill(masked.samples.begin() + static_cast<std::ptrdiff_t>(first),
                masked.samples.begin() + static_cast<std::ptrdiff_t>(last), 0.0);
    } else {
      Rng rng(derive_seed(options.seed, j));
      std::normal_distribution<double> gauss(0.0, noise_std);
      for (std::size_t i = first; i < last; ++i) masked.samples[i] = gauss(rng);
    }
    const std::vector<double> p = classify(masked);
    if (p.size() != base.size()) throw ContractError("classifier changed its number of classes");
    report.scores.push_back(report.class_probability - p[report.predicted_class]);
    std::copy(wav.samples.begin() + static_cast<std::ptrdiff_t>(first),
              wav.samples.begin() + static_cast<std::ptrdiff_t>(last),
              masked.samples.begin() + static_cast<std::ptrdiff_t>(first));
  }
  return report;
}

Classifier model_classifier(blocks::Model& model, features::MelConfig mel) {
  if (model.backbone() == nullptr) {
    throw ConfigError("relevance needs a model that reads audio; embedding-head models take precomputed features");
  }
  auto extractor = std::make_shared<features::MelExtractor>(mel);
  return [&model, extractor](const features::Waveform& wav) {
    if (wav.sample_rate != extractor->config().sample_rate) {
      throw ParameterError("waveform rate does not match the mel front end");
    }
    ad::Tensor f = (*extractor)(wav.samples);
    const ad::Shape& s = f.shape();
    const ad::Tensor probs = model.predict_proba(f.reshaped({1, s[0], s[1], s[2]}));
    return std::vector<double>(probs.data().begin(), probs.data().end());
  };
}

std::string report_json(const RelevanceReport& report, const std::vector<std::string>& labels) {
  json doc;
  doc["predicted_class"] = report.predicted_class;
  if (report.predicted_class < labels.size()) doc["predicted_label"] = labels[report.predicted_class];
  doc["class_probability"] = report.class_probability;
  doc["duration"] = report.duration;
  doc["segment_source"] = std::string(to_string(report.segments.source));
  json segs = json::array();
  for (std::size_t j = 0; j < report.segments.size(); ++j) {
    const Segment& s = report.segments.segments[j];
    json e{{"start", s.start}, {"end", s.end}, {"score", report.scores.at(j)}};
    if (!s.label.empty()) e["word"] = s.label;
    segs.push_back(std::move(e));
  }
  doc["segments"] = std::move(segs);
  return doc.dump(2) + "\n";
}

std::string report_svg(const RelevanceReport& report, const features::Waveform& wav,
                       const std::vector<std::string>& labels) {
  constexpr double kWidth = 800.0, kHeight = 300.0, kMargin = 40.0;
  constexpr double kWaveTop = 30.0, kWaveHeight = 80.0, kBarBase = 210.0, kBarHalf = 70.0;
  const double plot_w = kWidth - 2 * kMargin;
  const double duration = report.duration > 0.0 ? report.duration : 1.0;
  const auto x_of = [&](double t) { return kMargin + plot_w * t / duration; };

  double max_abs = 0.0;
  for (double s : report.scores) max_abs = std::max(max_abs, std::abs(s));
  if (max_abs == 0.0) max_abs = 1.0;

  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::string title = "predicted class " + std::to_string(report.predicted_class);
  if (report.predicted_class < labels.size()) title += " (" + labels[report.predicted_class] + ")";
  svg << "<text x=\"" << kMargin << "\" y=\"18\">" << xml_escape(title) << ", p = " << report.class_probability << "</text>\n";

  // Waveform envelope: min/max per pixel column.
  const std::size_t cols = static_cast<std::size_t>(plot_w);
  double peak = 0.0;
  for (double v : wav.samples) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) peak = 1.0;
  const double mid = kWaveTop + kWaveHeight / 2;
  svg << "<path fill=\"none\" stroke=\"#888\" stroke-width=\"1\" d=\"";
  for (std::size_t c = 0; c < cols && !wav.samples.empty(); ++c) {
    const std::size_t a = c * wav.samples.size() / cols;
    const std::size_t b = std::max(a + 1, (c + 1) * wav.samples.size() / cols);
    const auto [lo, hi] = std::minmax_element(wav.samples.begin() + static_cast<std::ptrdiff_t>(a),
                                              wav.samples.begin() + static_cast<std::ptrdiff_t>(b));
    const double x = kMargin + static_cast<double>(c);
    svg << "M" << x << " " << mid - *hi / peak * kWaveHeight / 2 << "V" << mid - *lo / peak * kWaveHeight / 2;
  }
  svg << "\"/>\n";

  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kBarBase << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
      << kBarBase << "\" stroke=\"black\"/>\n";
  for (std::size_t j = 0; j < report.segments.size(); ++j) {
    const Segment& s = report.segments.segments[j];
    const double score = report.scores.at(j);
    const double h = std::abs(score) / max_abs * kBarHalf;
    const double x0 = x_of(s.start), x1 = x_of(s.end);
    svg << "<rect x=\"" << x0 + 1 << "\" y=\"" << (score >= 0 ? kBarBase - h : kBarBase) << "\" width=\""
        << std::max(0.0, x1 - x0 - 2) << "\" height=\"" << h << "\" fill=\"" << (score >= 0 ? "#c0392b" : "#2e86c1")
        << "\"><title>" << score << "</title></rect>\n";
    if (!s.label.empty()) {
      svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << xml_escape(s.label)
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace kanslu::relevance
