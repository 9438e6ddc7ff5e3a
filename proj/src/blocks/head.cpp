#include "kanslu/blocks/head.hpp"

#include "kanslu/errors.hpp"

namespace kanslu::blocks {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::FFF: return "FFF";
    case BlockKind::KAN: return "KAN";
    case BlockKind::FFK: return "FFK";
    case BlockKind::FKK: return "FKK";
    case BlockKind::FKF: return "FKF";
    case BlockKind::FK: return "FK";
  }
  return "?";
}

BlockKind block_kind_from_string(std::string_view name) {
  for (BlockKind k : kAllBlockKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown block kind '" + std::string(name) + "' (expected FFF, KAN, FFK, FKK, FKF or FK)");
}

std::string_view layer_pattern(BlockKind kind) {
  return kind == BlockKind::KAN ? std::string_view("K") : to_string(kind);
}

std::size_t layer_param_count(const HeadLayer& layer) {
  return std::visit(overloaded{[](const nn::FFBlock& b) { return b.param_count(); },
                               [](const kan::KanLayer& k) { return kan::kan_param_count(k); },
                               [](const nn::Linear& l) { return l.param_count(); }},
                    layer);
}

std::size_t layer_in_dim(const HeadLayer& layer) {
  return std::visit([](const auto& l) { return l.in_dim(); }, layer);
}

std::size_t layer_out_dim(const HeadLayer& layer) {
  return std::visit([](const auto& l) { return l.out_dim(); }, layer);
}

Head::Head(std::vector<HeadLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("a head needs at least one layer");
}

std::size_t Head::in_dim() const { return layer_in_dim(layers_.front()); }
std::size_t Head::out_dim() const { return layer_out_dim(layers_.back()); }

std::size_t Head::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += layer_param_count(l);
  return n;
}

ad::Var Head::forward(ad::Tape& tape, ad::Var features, bool training, Rng& rng) {
  if (features.value().rank() != 2 || features.value().dim(1) != in_dim()) {
    throw DimensionError("head expects [B, " + std::to_string(in_dim()) + "] features, got " +
                         ad::shape_str(features.shape()));
  }
  ad::Var h = features;
  for (auto& layer : layers_) {
    h = std::visit(overloaded{[&](nn::FFBlock& b) { return b.forward(tape, h, training, rng); },
                              [&](kan::KanLayer& k) { return kan::kan_forward(tape, k, h); },
                              [&](nn::Linear& l) { return l.forward(tape, h); }},
                   layer);
  }
  return h;
}

void Head::collect_parameters(ad::ParameterList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = prefix + std::to_string(i) + ".";
    std::visit(overloaded{[&](nn::FFBlock& b) { b.collect_parameters(out, p + "ff."); },
                          [&](kan::KanLayer& k) { k.collect_parameters(out, p + "kan."); },
                          [&](nn::Linear& l) { l.collect_parameters(out, p + "linear."); }},
               layers_[i]);
  }
}

namespace {

struct LayerPlan {
  char type;
  bool terminal;
  std::size_t in;
  std::size_t out;
};

std::vector<LayerPlan> plan(const BlockConfig& config, std::size_t in_dim) {
  if (in_dim == 0) throw ConfigError("head input width must be positive");
  if (config.hidden == 0) throw ConfigError("hidden width must be positive");
  if (config.num_classes < 2) throw ConfigError("need at least two classes");
  const std::string_view pattern = layer_pattern(config.kind);
  std::vector<LayerPlan> layers;
  std::size_t width = in_dim;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const bool terminal = i + 1 == pattern.size();
    const char t = pattern[i];
    const std::size_t out = terminal ? config.num_classes : (t == 'F' ? config.hidden : config.effective_kan_hidden());
    layers.push_back({t, terminal, width, out});
    width = out;
  }
  return layers;
}

}  // namespace

Head build_block(const BlockConfig& config, std::size_t in_dim, Rng& rng) {
  std::vector<HeadLayer> layers;
  for (const LayerPlan& p : plan(config, in_dim)) {
    if (p.type == 'K') {
      layers.emplace_back(kan::KanLayer(p.in, p.out, config.basis, rng));
    } else if (p.terminal) {
      layers.emplace_back(nn::Linear(p.in, p.out, rng));
    } else {
      layers.emplace_back(nn::FFBlock(p.in, p.out, config.dropout, rng));
    }
  }
  return Head(std::move(layers));
}

ad::Var block_forward(ad::Tape& tape, Head& head, ad::Var features, bool training, Rng& rng) {
  return head.forward(tape, features, training, rng);
}

std::size_t head_param_count(const BlockConfig& config, std::size_t in_dim) {
  const std::size_t nb = config.basis.num_basis();
  std::size_t n = 0;
  for (const LayerPlan& p : plan(config, in_dim)) {
    const std::size_t io = p.in * p.out;
    if (p.type == 'K') {
      n += io * nb + io + 2;
      if (config.basis.family == basis::Family::GrKan) {
        const std::size_t groups = (p.in + config.basis.group_size - 1) / config.basis.group_size;
        n += groups * (config.basis.numerator_degree + 1 + config.basis.denominator_degree);
      }
    } else {
      n += io + p.out + (p.terminal ? 0 : 2 * p.out);
    }
  }
  return n;
}

}  // namespace kanslu::blocks
