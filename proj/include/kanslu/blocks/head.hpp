#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kanslu/autodiff/parameter.hpp"
#include "kanslu/basis/basis.hpp"
#include "kanslu/kan/kan_layer.hpp"
#include "kanslu/nn/layers.hpp"

namespace kanslu::blocks {

enum class BlockKind { FFF, KAN, FFK, FKK, FKF, FK };

inline constexpr BlockKind kAllBlockKinds[] = {BlockKind::FFF, BlockKind::KAN, BlockKind::FFK,
                                               BlockKind::FKK, BlockKind::FKF, BlockKind::FK};

std::string_view to_string(BlockKind kind);
BlockKind block_kind_from_string(std::string_view name);
// Layer sequence, 'F' for feed-forward and 'K' for KAN: FFF, K, FFK, FKK, FKF, FK.
std::string_view layer_pattern(BlockKind kind);

struct BlockConfig {
  BlockKind kind = BlockKind::FKF;
  std::size_t hidden = 128;
  // Output width of non-terminal KAN layers; 0 means `hidden`.
  std::size_t kan_hidden = 0;
  basis::BasisSpec basis;
  std::size_t num_classes = 2;
  double dropout = nn::kDefaultDropout;

  std::size_t effective_kan_hidden() const { return kan_hidden ? kan_hidden : hidden; }
  friend bool operator==(const BlockConfig&, const BlockConfig&) = default;
};

// Non-terminal F positions are FF blocks, K positions are bare KAN layers and
// a terminal F is a plain linear readout producing logits.
using HeadLayer = std::variant<nn::FFBlock, kan::KanLayer, nn::Linear>;

class Head {
 public:
  explicit Head(std::vector<HeadLayer> layers);

  std::vector<HeadLayer>& layers() noexcept { return layers_; }
  const std::vector<HeadLayer>& layers() const noexcept { return layers_; }
  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t param_count() const;

  ad::Var forward(ad::Tape& tape, ad::Var features, bool training, Rng& rng);
  void collect_parameters(ad::ParameterList& out, const std::string& prefix);

 private:
  std::vector<HeadLayer> layers_;
};

Head build_block(const BlockConfig& config, std::size_t in_dim, Rng& rng);
ad::Var block_forward(ad::Tape& tape, Head& head, ad::Var features, bool training, Rng& rng);

// Closed-form parameter count of the head build_block would produce.
std::size_t head_param_count(const BlockConfig& config, std::size_t in_dim);

std::size_t layer_param_count(const HeadLayer& layer);
std::size_t layer_in_dim(const HeadLayer& layer);
std::size_t layer_out_dim(const HeadLayer& layer);

}  // namespace kanslu::blocks
