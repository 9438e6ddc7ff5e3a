#include "kanslu/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace kanslu::train {

namespace {

constexpr char kMagic[] = "KANCKPT";
constexpr std::size_t kMagicLen = 7;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& b, std::string path) : b_(b), path_(std::move(path)) {}
  bool done() const { return at_ == b_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[at_ + i]) << (8 * i);
    at_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[at_ + i]) << (8 * i);
    at_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(at_), b_.begin() + static_cast<std::ptrdiff_t>(at_ + n));
    at_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - at_ < n) throw FormatError(path_ + ": checkpoint is truncated");
  }
  const std::vector<unsigned char>& b_;
  std::string path_;
  std::size_t at_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ad::ParameterList& params) {
  std::string out(kMagic, kMagicLen);
  put_u32(out, kCheckpointVersion);
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.tensor->rank()));
    for (std::size_t d : p.tensor->shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor->data()) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const ad::ParameterList& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(b, path.string());
  if (r.str(kMagicLen) != std::string(kMagic, kMagicLen)) throw FormatError(path.string() + ": not a KANCKPT file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, ad::Tensor> blobs;
  while (!r.done()) {
    std::string name = r.str(r.u32());
    ad::Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    ad::Tensor t(shape);
    for (double& v : t.data()) v = r.f64();
    blobs.emplace(std::move(name), std::move(t));
  }
  for (const auto& p : params) {
    auto it = blobs.find(p.name);
    if (it == blobs.end()) throw CheckpointMismatch(path.string() + ": missing tensor '" + p.name + "'");
    if (it->second.shape() != p.tensor->shape()) {
      throw CheckpointMismatch(path.string() + ": tensor '" + p.name + "' has shape " +
                               ad::shape_str(it->second.shape()) + ", model expects " +
                               ad::shape_str(p.tensor->shape()));
    }
  }
  if (blobs.size() != params.size()) {
    throw CheckpointMismatch(path.string() + ": checkpoint holds " + std::to_string(blobs.size()) +
                             " tensors, model has " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const auto& src = blobs.at(p.name);
    std::copy(src.data().begin(), src.data().end(), p.tensor->data().begin());
  }
}

Snapshot take_snapshot(const ad::ParameterList& params) {
  Snapshot s;
  s.reserve(params.size());
  for (const auto& p : params) {
    ad::Tensor copy(p.tensor->shape());
    std::copy(p.tensor->data().begin(), p.tensor->data().end(), copy.data().begin());
    s.emplace_back(p.name, std::move(copy));
  }
  return s;
}

void restore_snapshot(const Snapshot& snapshot, const ad::ParameterList& params) {
  if (snapshot.size() != params.size()) throw ContractError("snapshot does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snapshot[i].first != params[i].name) throw ContractError("snapshot does not match the parameter list");
    const auto& src = snapshot[i].second.data();
    std::copy(src.begin(), src.end(), params[i].tensor->data().begin());
  }
}

}  // namespace kanslu::train
