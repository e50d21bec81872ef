#include "rau/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <unordered_map>

namespace rau {

namespace {

constexpr char kMagic[4] = {'R', 'A', 'U', 'C'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<Parameter* const> params) {
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    out += p->name;
    const auto& shape = p->value.shape();
    out.push_back(static_cast<char>(shape.size()));
    for (auto d : shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint: bad magic bytes");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>("entry count");
  std::vector<NamedTensor> out;
  for (std::uint32_t e = 0; e < count; ++e) {
    NamedTensor entry;
    const auto len = in.get<std::uint16_t>("name length");
    entry.name = std::string(in.take(len, "name"));
    const auto rank = in.get<std::uint8_t>("rank");
    if (rank == 0) throw CheckpointError("entry " + entry.name + " has rank 0");
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint32_t>("dimension");
      if (d == 0) throw CheckpointError("entry " + entry.name + " has a zero dimension");
      shape.push_back(d);
    }
    std::vector<double> data(element_count(shape));
    for (auto& v : data) v = std::bit_cast<double>(in.get<std::uint64_t>("tensor data"));
    entry.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(entry));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint entries");
  return out;
}

void save_checkpoint(std::span<Parameter* const> params, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(params));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void assign_checkpoint(std::span<Parameter* const> params, std::span<const NamedTensor> entries) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);
  if (by_name.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing " + p->name);
    if (it->second->value.shape() != p->value.shape()) {
      throw CheckpointError("shape mismatch for " + p->name + ": checkpoint " +
                            shape_string(it->second->value.shape()) + ", model " + shape_string(p->value.shape()));
    }
    p->value = it->second->value;
  }
}

ModelDims dims_from_checkpoint(std::span<const NamedTensor> entries) {
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& e : entries) {
      if (e.name == name) return e.value;
    }
    throw CheckpointError("checkpoint is missing " + name);
  };
  ModelDims d;
  const Tensor& embedding = find("qenc.embedding");
  d.vocab = embedding.rows();
  d.embed = embedding.cols();
  d.q_hidden = find("qenc.lstm1.W_h").cols();
  const Tensor& w_img = find("img.W_I");
  d.subtask = w_img.rows();
  d.channels = w_img.cols();
  d.locations = find("rau.att.W_beta").rows();
  d.attention = find("rau.att.W_alpha2").rows();
  d.answers = find("rau.pred.W_s").rows();
  return d;
}

}  // namespace rau
